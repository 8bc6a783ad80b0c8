use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::image::MIN_SIDE;
use crate::error::{Error, Result};

/// Side ratios of the five fixed crops: top-left, top-right, center-down
/// share 0.75; the two centered crops use 0.9 and 0.85.
pub const FIXED_SCALES: [f64; 5] = [0.75, 0.75, 0.75, 0.9, 0.85];
pub const RANDOM_SCALE_RANGE: (f64, f64) = (0.7, 0.95);
pub const DEFAULT_LANDMARK_RADIUS: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Fixed,
    Random,
    Landmark,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Fixed => "fixed",
            Scheme::Random => "random",
            Scheme::Landmark => "landmark",
        })
    }
}

/// Crop generation strategy used by the training pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CropScheme {
    Fixed,
    /// `n` fresh random crops per image.
    Random(usize),
    /// Landmark squares; falls back to fixed crops when none fit.
    Landmark,
}

impl fmt::Display for CropScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CropScheme::Fixed => f.write_str("fixed"),
            CropScheme::Random(n) => write!(f, "random({n})"),
            CropScheme::Landmark => f.write_str("landmark"),
        }
    }
}

impl FromStr for CropScheme {
    type Err = Error;

    /// Accepts `fixed`, `landmark`, `random` (3 crops), `random(n)` or `random:n`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "fixed" => return Ok(CropScheme::Fixed),
            "landmark" => return Ok(CropScheme::Landmark),
            "random" => return Ok(CropScheme::Random(3)),
            _ => {}
        }
        let n = s
            .strip_prefix("random(")
            .and_then(|r| r.strip_suffix(')'))
            .or_else(|| s.strip_prefix("random:"))
            .and_then(|n| n.parse::<usize>().ok())
            .filter(|&n| n >= 1)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown crop scheme `{s}`")))?;
        Ok(CropScheme::Random(n))
    }
}

/// A crop rectangle in pixel coordinates. `index` counts crops from 1 so it
/// lines up with attention indices, where 0 is the uncropped duplicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub index: usize,
    pub scheme: Scheme,
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl RegionSpec {
    pub fn whole(width: usize, height: usize) -> Self {
        RegionSpec {
            index: 0,
            scheme: Scheme::Fixed,
            x: 0,
            y: 0,
            w: width,
            h: height,
        }
    }

    pub fn fits(&self, width: usize, height: usize) -> bool {
        self.w >= 1 && self.h >= 1 && self.x + self.w <= width && self.y + self.h <= height
    }

    pub fn contains_box(&self, x: usize, y: usize, w: usize, h: usize) -> bool {
        x >= self.x && y >= self.y && x + w <= self.x + self.w && y + h <= self.y + self.h
    }
}

/// `floor(ratio * side)` with a small guard against products such as
/// `0.9 * 60 = 53.999...`.
fn scaled(side: usize, ratio: f64) -> usize {
    (ratio * side as f64 + 1e-9).floor() as usize
}

fn fixed_layout(width: usize, height: usize, ratio: f64) -> Vec<RegionSpec> {
    FIXED_SCALES
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let w = scaled(width, s * ratio).clamp(1, width);
            let h = scaled(height, s * ratio).clamp(1, height);
            let (x, y) = match i {
                0 => (0, 0),
                1 => (width - w, 0),
                2 => ((width - w) / 2, height - h),
                _ => ((width - w) / 2, (height - h) / 2),
            };
            RegionSpec {
                index: i + 1,
                scheme: Scheme::Fixed,
                x,
                y,
                w,
                h,
            }
        })
        .collect()
}

/// The five fixed crops, in order: top-left, top-right, center-down (0.75),
/// center (0.9), center (0.85). Sizes and centered offsets are floored.
pub fn fixed_crops(width: usize, height: usize) -> Vec<RegionSpec> {
    fixed_layout(width, height, 1.0)
}

/// Fixed crops with every extent multiplied by `ratio` before flooring and
/// clamped to the image.
pub fn fixed_crops_scaled(width: usize, height: usize, ratio: f64) -> Result<Vec<RegionSpec>> {
    if !(0.3..=1.1).contains(&ratio) {
        return Err(Error::InvalidArgument(format!(
            "region scale ratio {ratio} outside [0.3, 1.1]"
        )));
    }
    let specs = fixed_layout(width, height, ratio);
    if ratio != 1.0 {
        if let Some(s) = specs.iter().find(|s| s.w < MIN_SIDE || s.h < MIN_SIDE) {
            return Err(Error::InvalidArgument(format!(
                "ratio {ratio} yields a {}x{} crop, below {MIN_SIDE} pixels",
                s.w, s.h
            )));
        }
    }
    Ok(specs)
}

/// `n` crops with independent per-axis scales drawn uniformly from
/// [0.7, 0.95] and offsets uniform over the valid placements. The generator
/// is ChaCha8 seeded with `seed`, so results are platform independent.
pub fn random_crops(width: usize, height: usize, n: usize, seed: u64) -> Vec<RegionSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_crops_with(width, height, n, &mut rng)
}

pub(crate) fn random_crops_with<R: Rng>(
    width: usize,
    height: usize,
    n: usize,
    rng: &mut R,
) -> Vec<RegionSpec> {
    let (lo, hi) = RANDOM_SCALE_RANGE;
    (0..n)
        .map(|i| {
            let sx = rng.gen_range(lo..=hi);
            let sy = rng.gen_range(lo..=hi);
            let w = scaled(width, sx).clamp(1, width);
            let h = scaled(height, sy).clamp(1, height);
            let x = rng.gen_range(0..=width - w);
            let y = rng.gen_range(0..=height - h);
            RegionSpec {
                index: i + 1,
                scheme: Scheme::Random,
                x,
                y,
                w,
                h,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LandmarkName {
    LeftEye,
    RightEye,
    Nose,
    LeftMouth,
    RightMouth,
}

impl LandmarkName {
    pub const ALL: [LandmarkName; 5] = [
        LandmarkName::LeftEye,
        LandmarkName::RightEye,
        LandmarkName::Nose,
        LandmarkName::LeftMouth,
        LandmarkName::RightMouth,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            LandmarkName::LeftEye => "left_eye",
            LandmarkName::RightEye => "right_eye",
            LandmarkName::Nose => "nose",
            LandmarkName::LeftMouth => "left_mouth",
            LandmarkName::RightMouth => "right_mouth",
        }
    }
}

impl FromStr for LandmarkName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        LandmarkName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown landmark `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub name: LandmarkName,
    pub x: f64,
    pub y: f64,
}

/// Squares of side `floor(2 * radius_ratio * min(W, H))` centred on each
/// landmark. Squares that would leave the image are dropped, never clamped.
///
/// Returns [`Error::NoRegions`] when nothing survives so the caller can fall
/// back to [`fixed_crops`].
pub fn landmark_crops(
    width: usize,
    height: usize,
    landmarks: &[Landmark],
    radius_ratio: f64,
) -> Result<Vec<RegionSpec>> {
    if landmarks.is_empty() || landmarks.len() > 5 {
        return Err(Error::InvalidArgument(format!(
            "expected 1 to 5 landmarks, got {}",
            landmarks.len()
        )));
    }
    if !(radius_ratio > 0.0 && radius_ratio <= 0.5) {
        return Err(Error::InvalidArgument(format!(
            "landmark radius ratio {radius_ratio} outside (0, 0.5]"
        )));
    }
    let side = scaled(width.min(height), 2.0 * radius_ratio);
    let half = side / 2;
    let mut out = Vec::new();
    for lm in landmarks {
        if !(lm.x >= 0.0 && lm.y >= 0.0 && lm.x < width as f64 && lm.y < height as f64) {
            return Err(Error::InvalidArgument(format!(
                "landmark {} at ({}, {}) outside {width}x{height}",
                lm.name.as_str(),
                lm.x,
                lm.y
            )));
        }
        let (cx, cy) = (lm.x.floor() as usize, lm.y.floor() as usize);
        if side == 0 || cx < half || cy < half {
            continue;
        }
        let spec = RegionSpec {
            index: out.len() + 1,
            scheme: Scheme::Landmark,
            x: cx - half,
            y: cy - half,
            w: side,
            h: side,
        };
        if spec.fits(width, height) {
            out.push(spec);
        }
    }
    if out.is_empty() {
        Err(Error::NoRegions)
    } else {
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fixed_224_goldens() {
        let specs = fixed_crops(224, 224);
        let sides: Vec<_> = specs.iter().map(|s| (s.w, s.h)).collect();
        assert_eq!(
            sides,
            [(168, 168), (168, 168), (168, 168), (201, 201), (190, 190)]
        );
        assert_eq!((specs[0].x, specs[0].y), (0, 0));
        assert_eq!((specs[1].x, specs[1].y), (56, 0));
        assert_eq!((specs[2].x, specs[2].y), (28, 56));
        assert_eq!((specs[3].x, specs[3].y), (11, 11));
        assert_eq!((specs[4].x, specs[4].y), (17, 17));
    }

    #[test]
    fn fixed_non_square() {
        let s = fixed_crops(100, 60)[3];
        assert_eq!((s.w, s.h, s.x, s.y), (90, 54, 5, 3));
    }

    #[test]
    fn scaled_crops() {
        assert_eq!(
            fixed_crops_scaled(224, 224, 1.0).unwrap(),
            fixed_crops(224, 224)
        );
        assert_eq!(fixed_crops_scaled(224, 224, 0.5).unwrap()[0].w, 84);
        assert!(fixed_crops_scaled(16, 16, 0.4).is_err());
        assert!(fixed_crops_scaled(224, 224, 1.2).is_err());
        let big = fixed_crops_scaled(224, 224, 1.1).unwrap();
        assert!(big.iter().all(|s| s.fits(224, 224)));
        assert_eq!(big[3].w, 221);
    }

    #[test]
    fn scheme_parsing() {
        assert_eq!("fixed".parse::<CropScheme>().unwrap(), CropScheme::Fixed);
        assert_eq!(
            "random(6)".parse::<CropScheme>().unwrap(),
            CropScheme::Random(6)
        );
        assert_eq!(
            "random:30".parse::<CropScheme>().unwrap(),
            CropScheme::Random(30)
        );
        assert_eq!(
            "random".parse::<CropScheme>().unwrap(),
            CropScheme::Random(3)
        );
        assert!("random(0)".parse::<CropScheme>().is_err());
        assert!("grid".parse::<CropScheme>().is_err());
    }

    #[test]
    fn random_is_seeded() {
        assert_eq!(random_crops(224, 224, 20, 3), random_crops(224, 224, 20, 3));
        assert_ne!(random_crops(224, 224, 20, 3), random_crops(224, 224, 20, 4));
    }

    #[test]
    fn random_scale_support_and_mean() {
        let specs = random_crops(224, 224, 10_000, 11);
        let scales: Vec<f64> = specs
            .iter()
            .flat_map(|s| [s.w as f64 / 224.0, s.h as f64 / 224.0])
            .collect();
        // flooring can lower the realised ratio by < 1/224
        assert!(scales
            .iter()
            .all(|&r| (0.7 - 1.0 / 224.0..=0.95).contains(&r)));
        let mean_side = specs.iter().map(|s| s.w as f64).sum::<f64>() / specs.len() as f64;
        assert!(
            (0.81 * 224.0..=0.84 * 224.0).contains(&mean_side),
            "{mean_side}"
        );
    }

    fn lm(x: f64, y: f64) -> Landmark {
        Landmark {
            name: LandmarkName::Nose,
            x,
            y,
        }
    }

    #[test]
    fn landmark_center_kept() {
        let specs = landmark_crops(224, 224, &[lm(112.0, 112.0)], 0.4).unwrap();
        assert_eq!(specs.len(), 1);
        assert_eq!((specs[0].w, specs[0].h), (179, 179));
        assert_eq!((specs[0].x, specs[0].y), (23, 23));
    }

    #[test]
    fn landmark_boundaries() {
        assert!(matches!(
            landmark_crops(224, 224, &[lm(0.0, 0.0)], 0.4),
            Err(Error::NoRegions)
        ));
        // 95 - 89 >= 0 and 95 + 89 <= 223
        assert_eq!(
            landmark_crops(224, 224, &[lm(112.0, 95.0)], 0.4)
                .unwrap()
                .len(),
            1
        );
        // first and last centres that still fit on each axis
        assert!(landmark_crops(224, 224, &[lm(112.0, 89.0)], 0.4).is_ok());
        assert!(landmark_crops(224, 224, &[lm(112.0, 88.0)], 0.4).is_err());
        assert!(landmark_crops(224, 224, &[lm(134.0, 112.0)], 0.4).is_ok());
        assert!(landmark_crops(224, 224, &[lm(135.0, 112.0)], 0.4).is_err());
    }

    #[test]
    fn landmark_partial_drop_renumbers() {
        let specs = landmark_crops(
            224,
            224,
            &[lm(0.0, 0.0), lm(112.0, 112.0), lm(223.0, 5.0)],
            0.4,
        )
        .unwrap();
        assert_eq!(specs.len(), 1);
        assert_eq!(specs[0].index, 1);
    }

    #[test]
    fn landmark_argument_errors() {
        assert!(landmark_crops(224, 224, &[], 0.4).is_err());
        assert!(landmark_crops(224, 224, &[lm(1.0, 1.0)], 0.6).is_err());
        assert!(landmark_crops(224, 224, &[lm(300.0, 1.0)], 0.4).is_err());
    }

    proptest! {
        #[test]
        fn every_scheme_stays_in_bounds(w in 8usize..400, h in 8usize..400, seed in any::<u64>(),
                                        fx in 0.0f64..1.0, fy in 0.0f64..1.0, r in 0.01f64..0.5) {
            for s in fixed_crops(w, h) {
                prop_assert!(s.fits(w, h));
            }
            for s in random_crops(w, h, 8, seed) {
                prop_assert!(s.fits(w, h));
            }
            let mark = lm(fx * (w as f64 - 1e-9), fy * (h as f64 - 1e-9));
            if let Ok(specs) = landmark_crops(w, h, &[mark], r) {
                for s in specs {
                    prop_assert!(s.fits(w, h));
                }
            }
        }

        #[test]
        fn fixed_crops_scale_equivariant(w in 8usize..300, h in 8usize..300) {
            let small = fixed_crops(w, h);
            let big = fixed_crops(2 * w, 2 * h);
            for (a, b) in small.iter().zip(&big) {
                for (p, q) in [(a.x, b.x), (a.y, b.y), (a.w, b.w), (a.h, b.h)] {
                    prop_assert!((2 * p as i64 - q as i64).abs() <= 1, "{:?} vs {:?}", a, b);
                }
            }
        }
    }
}
