//! Synthetic localization task: a class glyph inside one fixed-crop region,
//! distractor rectangles everywhere else.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regions::{fixed_crops, FaceImage, Landmark, LandmarkName, RegionSpec};

const GLYPH_GRID: usize = 4;
const GLYPH_ON: usize = 8;
const GLYPH_SEED: u64 = 0x6c79_7068;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub image_size: usize,
    pub classes: usize,
    /// Fixed-crop index in `1..=5` that carries the glyph.
    pub signal_region: usize,
    pub occluder_prob: f64,
    /// Inclusive range of occluder side lengths in pixels.
    pub occluder_size_range: (usize, usize),
    /// Background pixels are uniform in `[0, noise_level]`.
    pub noise_level: f64,
    /// Side of one glyph cell in pixels; the glyph is a 4x4 grid of cells.
    pub glyph_cell: usize,
    pub train_count: usize,
    pub test_count: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            image_size: 64,
            classes: 3,
            signal_region: 1,
            occluder_prob: 0.7,
            occluder_size_range: (8, 16),
            noise_level: 1.0,
            glyph_cell: 2,
            train_count: 2000,
            test_count: 500,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxRegion {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl BoxRegion {
    pub fn area(&self) -> usize {
        self.w * self.h
    }

    pub fn intersects(&self, o: &BoxRegion) -> bool {
        self.x < o.x + o.w && o.x < self.x + self.w && self.y < o.y + o.h && o.y < self.y + self.h
    }

    fn overlap(&self, o: &BoxRegion) -> usize {
        let w = (self.x + self.w)
            .min(o.x + o.w)
            .saturating_sub(self.x.max(o.x));
        let h = (self.y + self.h)
            .min(o.y + o.h)
            .saturating_sub(self.y.max(o.y));
        w * h
    }

    fn of(s: &RegionSpec) -> Self {
        BoxRegion {
            x: s.x,
            y: s.y,
            w: s.w,
            h: s.h,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Occluder {
    pub region: BoxRegion,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSample {
    pub id: String,
    pub image: FaceImage,
    pub label: usize,
    pub signal_region: usize,
    pub glyph: BoxRegion,
    pub occluder: Option<Occluder>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSet {
    pub spec: SyntheticSpec,
    pub train: Vec<SyntheticSample>,
    pub test: Vec<SyntheticSample>,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.classes));
        }
        if !(1..=5).contains(&self.signal_region) {
            return bad(format!("signal_region {} not in 1..=5", self.signal_region));
        }
        if !(0.0..=1.0).contains(&self.occluder_prob) {
            return bad(format!(
                "occluder_prob {} outside [0, 1]",
                self.occluder_prob
            ));
        }
        if !(0.0..=1.0).contains(&self.noise_level) {
            return bad(format!("noise_level {} outside [0, 1]", self.noise_level));
        }
        let (lo, hi) = self.occluder_size_range;
        if lo == 0 || lo > hi {
            return bad(format!("bad occluder size range {lo}..={hi}"));
        }
        if self.glyph_cell == 0 {
            return bad("glyph_cell must be positive".into());
        }
        let count = glyph_patterns_possible();
        if self.classes > count {
            return bad(format!("at most {count} distinct glyphs"));
        }
        let region = self.signal_box()?;
        let g = self.glyph_side();
        if g > region.w || g > region.h {
            return bad(format!(
                "{g}px glyph does not fit the {}x{} signal region",
                region.w, region.h
            ));
        }
        if self.occluder_prob > 0.0 && !occluder_fits(self.image_size, &region, hi, hi) {
            return bad(format!(
                "no room for a {hi}x{hi} occluder outside the signal region"
            ));
        }
        Ok(())
    }

    pub fn glyph_side(&self) -> usize {
        GLYPH_GRID * self.glyph_cell
    }

    /// The signal region's fixed-crop rectangle.
    pub fn signal_box(&self) -> Result<BoxRegion> {
        if self.image_size < crate::regions::MIN_SIDE {
            return Err(Error::InvalidArgument(format!(
                "image_size {} too small",
                self.image_size
            )));
        }
        let crops = fixed_crops(self.image_size, self.image_size);
        crops
            .get(self.signal_region.wrapping_sub(1))
            .map(BoxRegion::of)
            .ok_or_else(|| Error::InvalidArgument(format!("signal_region {}", self.signal_region)))
    }

    /// Glyph position inside the signal region that overlaps the other fixed
    /// crops the least; ties go to the position closest to the region centre.
    pub fn glyph_box(&self) -> Result<BoxRegion> {
        let region = self.signal_box()?;
        let g = self.glyph_side();
        let others: Vec<BoxRegion> = fixed_crops(self.image_size, self.image_size)
            .iter()
            .filter(|s| s.index != self.signal_region)
            .map(BoxRegion::of)
            .collect();
        let (cx2, cy2) = (2 * region.x + region.w, 2 * region.y + region.h);
        let mut best: Option<((usize, usize), BoxRegion)> = None;
        for y in region.y..=region.y + region.h - g {
            for x in region.x..=region.x + region.w - g {
                let b = BoxRegion { x, y, w: g, h: g };
                let overlap: usize = others.iter().map(|o| o.overlap(&b)).sum();
                let dist = (2 * x + g).abs_diff(cx2).pow(2) + (2 * y + g).abs_diff(cy2).pow(2);
                if best.as_ref().is_none_or(|(k, _)| (overlap, dist) < *k) {
                    best = Some(((overlap, dist), b));
                }
            }
        }
        Ok(best.expect("glyph fits the region").1)
    }
}

fn glyph_patterns_possible() -> usize {
    // C(16, 8)
    12870
}

/// The `classes` distinct glyphs as row-major 4x4 on/off grids, each with
/// exactly half the cells on.
pub fn glyph_pattern(classes: usize) -> Vec<[bool; GLYPH_GRID * GLYPH_GRID]> {
    let mut rng = ChaCha8Rng::seed_from_u64(GLYPH_SEED);
    let mut out: Vec<[bool; GLYPH_GRID * GLYPH_GRID]> = Vec::with_capacity(classes);
    while out.len() < classes {
        let mut cells = [false; GLYPH_GRID * GLYPH_GRID];
        let idx = rand::seq::index::sample(&mut rng, cells.len(), GLYPH_ON);
        for i in idx {
            cells[i] = true;
        }
        if !out.contains(&cells) {
            out.push(cells);
        }
    }
    out
}

fn occluder_fits(size: usize, signal: &BoxRegion, w: usize, h: usize) -> bool {
    occluder_positions(size, signal, w, h).next().is_some()
}

fn occluder_positions(
    size: usize,
    signal: &BoxRegion,
    w: usize,
    h: usize,
) -> impl Iterator<Item = BoxRegion> + '_ {
    let max_x = size.saturating_sub(w);
    let max_y = size.saturating_sub(h);
    let valid = w <= size && h <= size;
    (0..=max_y)
        .flat_map(move |y| (0..=max_x).map(move |x| BoxRegion { x, y, w, h }))
        .filter(move |b| valid && !b.intersects(signal))
}

/// Five canonical landmark positions for a square face of side `size`.
pub fn canonical_landmarks(size: usize) -> Vec<Landmark> {
    let s = size as f64;
    let at = |name, fx: f64, fy: f64| Landmark {
        name,
        x: fx * s,
        y: fy * s,
    };
    vec![
        at(LandmarkName::LeftEye, 0.3, 0.38),
        at(LandmarkName::RightEye, 0.7, 0.38),
        at(LandmarkName::Nose, 0.5, 0.55),
        at(LandmarkName::LeftMouth, 0.35, 0.75),
        at(LandmarkName::RightMouth, 0.65, 0.75),
    ]
}

fn quantized(rng: &mut ChaCha8Rng, max: f64) -> f64 {
    let levels = (max * 255.0).round() as u32;
    if levels == 0 {
        0.0
    } else {
        rng.gen_range(0..=levels) as f64 / 255.0
    }
}

struct Layout {
    signal: BoxRegion,
    glyph: BoxRegion,
    glyphs: Vec<[bool; GLYPH_GRID * GLYPH_GRID]>,
}

fn make_sample(
    spec: &SyntheticSpec,
    layout: &Layout,
    split: u64,
    index: usize,
) -> Result<SyntheticSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream((split << 32) | index as u64);
    let n = spec.image_size;
    let label = index % spec.classes;
    let mut px: Vec<f64> = (0..n * n)
        .map(|_| quantized(&mut rng, spec.noise_level))
        .collect();

    let g = layout.glyph;
    let cells = &layout.glyphs[label];
    for dy in 0..g.h {
        for dx in 0..g.w {
            let cell = (dy / spec.glyph_cell) * GLYPH_GRID + dx / spec.glyph_cell;
            px[(g.y + dy) * n + g.x + dx] = if cells[cell] { 1.0 } else { 0.0 };
        }
    }

    let occluder = if rng.gen_bool(spec.occluder_prob) {
        let (lo, hi) = spec.occluder_size_range;
        let w = rng.gen_range(lo..=hi);
        let h = rng.gen_range(lo..=hi);
        let spots: Vec<BoxRegion> = occluder_positions(n, &layout.signal, w, h).collect();
        if spots.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "no room for a {w}x{h} occluder outside the signal region"
            )));
        }
        let region = spots[rng.gen_range(0..spots.len())];
        let value = quantized(&mut rng, 1.0);
        for y in region.y..region.y + region.h {
            px[y * n + region.x..y * n + region.x + region.w].fill(value);
        }
        Some(Occluder { region, value })
    } else {
        None
    };

    let prefix = if split == 0 { "train" } else { "test" };
    Ok(SyntheticSample {
        id: format!("{prefix}_{index:05}"),
        image: FaceImage::new(n, n, 1, px)?,
        label,
        signal_region: spec.signal_region,
        glyph: layout.glyph,
        occluder,
    })
}

/// Generates train and test splits. Labels cycle through the classes so each
/// split is balanced; every pixel is a multiple of 1/255 so images survive an
/// 8-bit round trip unchanged. Samples draw from independent streams, so the
/// result does not depend on thread count.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticSet> {
    spec.validate()?;
    let layout = Layout {
        signal: spec.signal_box()?,
        glyph: spec.glyph_box()?,
        glyphs: glyph_pattern(spec.classes),
    };
    let split = |id: u64, count: usize| {
        (0..count)
            .into_par_iter()
            .map(|i| make_sample(spec, &layout, id, i))
            .collect::<Result<Vec<_>>>()
    };
    Ok(SyntheticSet {
        spec: spec.clone(),
        train: split(0, spec.train_count)?,
        test: split(1, spec.test_count)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(occ: f64, noise: f64) -> SyntheticSpec {
        SyntheticSpec {
            occluder_prob: occ,
            noise_level: noise,
            train_count: 30,
            test_count: 9,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn clean_samples_carry_exact_glyph() {
        let spec = small(0.0, 0.0);
        let set = generate_synthetic(&spec).unwrap();
        let glyphs = glyph_pattern(3);
        for s in set.train.iter().chain(&set.test) {
            assert!(s.occluder.is_none());
            let g = s.glyph;
            for y in 0..64 {
                for x in 0..64 {
                    let inside = x >= g.x && x < g.x + g.w && y >= g.y && y < g.y + g.h;
                    let expect = if inside {
                        let cell = ((y - g.y) / spec.glyph_cell) * 4 + (x - g.x) / spec.glyph_cell;
                        if glyphs[s.label][cell] {
                            1.0
                        } else {
                            0.0
                        }
                    } else {
                        0.0
                    };
                    assert_eq!(s.image.get(x, y, 0), expect);
                }
            }
        }
    }

    #[test]
    fn glyph_inside_signal_region_for_every_index() {
        for region in 1..=5 {
            let spec = SyntheticSpec {
                signal_region: region,
                occluder_prob: 0.0,
                ..small(0.0, 0.3)
            };
            let crop = fixed_crops(64, 64)[region - 1];
            let g = spec.glyph_box().unwrap();
            assert!(
                crop.contains_box(g.x, g.y, g.w, g.h),
                "region {region}: {g:?}"
            );
        }
        let g = SyntheticSpec::default().glyph_box().unwrap();
        assert_eq!((g.x, g.y), (0, 0));
    }

    #[test]
    fn glyphs_distinct_and_labels_balanced() {
        let p = glyph_pattern(10);
        for i in 0..p.len() {
            assert_eq!(p[i].iter().filter(|c| **c).count(), 8);
            for j in 0..i {
                assert_ne!(p[i], p[j]);
            }
        }
        let set = generate_synthetic(&small(0.5, 0.5)).unwrap();
        let mut counts = [0; 3];
        set.train.iter().for_each(|s| counts[s.label] += 1);
        assert_eq!(counts, [10, 10, 10]);
    }

    #[test]
    fn reproducible_and_quantized() {
        let spec = small(0.7, 0.5);
        let a = generate_synthetic(&spec).unwrap();
        assert_eq!(a, generate_synthetic(&spec).unwrap());
        let other = generate_synthetic(&SyntheticSpec { seed: 1, ..spec }).unwrap();
        assert_ne!(a.train[0].image, other.train[0].image);
        for s in &a.train {
            for &v in s.image.pixels() {
                assert_eq!((v * 255.0).round() / 255.0, v);
            }
        }
    }

    #[test]
    fn occluders_avoid_signal_region() {
        let spec = small(1.0, 0.2);
        let signal = spec.signal_box().unwrap();
        for s in generate_synthetic(&spec).unwrap().train {
            let o = s.occluder.unwrap();
            assert!(!o.region.intersects(&signal));
            assert!(o.region.x + o.region.w <= 64 && o.region.y + o.region.h <= 64);
        }
    }

    #[test]
    fn occluded_area_matches_size_distribution() {
        let spec = SyntheticSpec {
            occluder_prob: 1.0,
            train_count: 10_000,
            test_count: 0,
            ..SyntheticSpec::default()
        };
        let set = generate_synthetic(&spec).unwrap();
        let total = 64.0 * 64.0;
        let fr: Vec<f64> = set
            .train
            .iter()
            .map(|s| s.occluder.as_ref().unwrap().region.area() as f64 / total)
            .collect();
        let n = fr.len() as f64;
        let mean = fr.iter().sum::<f64>() / n;
        let var = fr.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (n - 1.0);
        // Independent uniform sides on 8..=16: E[w h] = E[w]^2 = 144.
        let (lo, hi) = spec.occluder_size_range;
        let ew = (lo + hi) as f64 / 2.0;
        let expected = ew * ew / total;
        assert!(
            (mean - expected).abs() < 3.0 * (var / n).sqrt(),
            "{mean} vs {expected}"
        );
    }

    #[test]
    fn inconsistent_specs_rejected() {
        for spec in [
            SyntheticSpec {
                classes: 1,
                ..Default::default()
            },
            SyntheticSpec {
                signal_region: 6,
                ..Default::default()
            },
            SyntheticSpec {
                occluder_prob: 1.5,
                ..Default::default()
            },
            SyntheticSpec {
                occluder_size_range: (9, 4),
                ..Default::default()
            },
            SyntheticSpec {
                occluder_size_range: (40, 40),
                ..Default::default()
            },
            SyntheticSpec {
                glyph_cell: 20,
                ..Default::default()
            },
        ] {
            assert!(generate_synthetic(&spec).is_err(), "{spec:?}");
        }
    }
}
