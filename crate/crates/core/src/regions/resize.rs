use super::geometry::RegionSpec;
use super::image::FaceImage;
use crate::error::{Error, Result};

/// Bilinear resize of `spec`'s rectangle to `target_w x target_h`.
///
/// Sampling uses pixel-centre alignment: output pixel `o` reads source
/// coordinate `(o + 0.5) * w / target_w - 0.5`, clamped to the crop.
/// A same-size crop therefore reproduces the input exactly.
pub fn extract_and_resize(
    image: &FaceImage,
    spec: &RegionSpec,
    target_w: usize,
    target_h: usize,
) -> Result<FaceImage> {
    if !spec.fits(image.width(), image.height()) {
        return Err(Error::RegionOutOfBounds(format!(
            "{}x{}+{}+{} in {}x{}",
            spec.w,
            spec.h,
            spec.x,
            spec.y,
            image.width(),
            image.height()
        )));
    }
    if target_w == 0 || target_h == 0 {
        return Err(Error::InvalidArgument(
            "resize target must be non-empty".into(),
        ));
    }
    let taps_x = bilinear_taps(spec.w, target_w);
    let taps_y = bilinear_taps(spec.h, target_h);
    let ch = image.channels();
    let mut out = vec![0.0; target_w * target_h * ch];
    for (oy, &(y0, y1, fy)) in taps_y.iter().enumerate() {
        for (ox, &(x0, x1, fx)) in taps_x.iter().enumerate() {
            for c in 0..ch {
                let p = |x: usize, y: usize| image.get(spec.x + x, spec.y + y, c);
                let top = p(x0, y0) * (1.0 - fx) + p(x1, y0) * fx;
                let bottom = p(x0, y1) * (1.0 - fx) + p(x1, y1) * fx;
                let v = top * (1.0 - fy) + bottom * fy;
                out[(oy * target_w + ox) * ch + c] = v.clamp(0.0, 1.0);
            }
        }
    }
    Ok(FaceImage::from_raw(target_w, target_h, ch, out))
}

/// `(left, right, frac)` per output coordinate.
fn bilinear_taps(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            let s = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, s - i0 as f64)
        })
        .collect()
}

/// Box-filter weights: output cell `o` averages the source interval
/// `[o * src/dst, (o + 1) * src/dst)` with fractional coverage at the ends.
fn area_taps(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            let lo = o as f64 * scale;
            let hi = lo + scale;
            let mut taps = Vec::new();
            let mut i = lo.floor() as usize;
            while (i as f64) < hi && i < src {
                let cover = (hi.min(i as f64 + 1.0) - lo.max(i as f64)).max(0.0);
                if cover > 0.0 {
                    taps.push((i, cover / scale));
                }
                i += 1;
            }
            taps
        })
        .collect()
}

/// Area-averages `image` to `out_w x out_h` and returns the flattened,
/// channel-interleaved result. This is a fixed linear map.
pub fn area_downsample(image: &FaceImage, out_w: usize, out_h: usize) -> Vec<f64> {
    let tx = area_taps(image.width(), out_w);
    let ty = area_taps(image.height(), out_h);
    let ch = image.channels();
    let mut out = vec![0.0; out_w * out_h * ch];
    for (oy, wy) in ty.iter().enumerate() {
        for (ox, wx) in tx.iter().enumerate() {
            for c in 0..ch {
                let mut acc = 0.0;
                for &(y, a) in wy {
                    for &(x, b) in wx {
                        acc += a * b * image.get(x, y, c);
                    }
                }
                out[(oy * out_w + ox) * ch + c] = acc;
            }
        }
    }
    out
}

/// The uncropped duplicate plus `k` crops, all at the backbone input size.
#[derive(Debug, Clone, PartialEq)]
pub struct CropSet {
    pub original: FaceImage,
    pub crops: Vec<FaceImage>,
    pub specs: Vec<RegionSpec>,
}

impl CropSet {
    /// Region 0 is the duplicate, regions `1..=k` the crops.
    pub fn regions(&self) -> impl Iterator<Item = &FaceImage> {
        std::iter::once(&self.original).chain(self.crops.iter())
    }

    pub fn len(&self) -> usize {
        self.crops.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

pub fn build_crop_set(
    image: &FaceImage,
    specs: &[RegionSpec],
    input_size: usize,
) -> Result<CropSet> {
    let whole = RegionSpec::whole(image.width(), image.height());
    let original = extract_and_resize(image, &whole, input_size, input_size)?;
    let crops = specs
        .iter()
        .map(|s| extract_and_resize(image, s, input_size, input_size))
        .collect::<Result<Vec<_>>>()?;
    Ok(CropSet {
        original,
        crops,
        specs: specs.to_vec(),
    })
}
