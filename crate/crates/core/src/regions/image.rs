use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Row-major image with pixel values in `[0, 1]`. Multi-channel images are
/// stored interleaved (`RGBRGB...`).
#[derive(Debug, Clone, PartialEq)]
pub struct FaceImage {
    width: usize,
    height: usize,
    channels: usize,
    pixels: Vec<f64>,
}

pub const MIN_SIDE: usize = 8;

impl FaceImage {
    pub fn new(width: usize, height: usize, channels: usize, pixels: Vec<f64>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidArgument(format!(
                "images must have 1 or 3 channels, got {channels}"
            )));
        }
        if width < MIN_SIDE || height < MIN_SIDE {
            return Err(Error::InvalidArgument(format!(
                "image {width}x{height} is smaller than {MIN_SIDE}x{MIN_SIDE}"
            )));
        }
        if pixels.len() != width * height * channels {
            return Err(Error::Dimension {
                expected: width * height * channels,
                actual: pixels.len(),
                context: "image pixels",
            });
        }
        if let Some(v) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!(
                "pixel value {v} outside [0, 1]"
            )));
        }
        Ok(FaceImage {
            width,
            height,
            channels,
            pixels,
        })
    }

    /// Resized crops may be smaller than the 8-pixel minimum of source images.
    pub(crate) fn from_raw(width: usize, height: usize, channels: usize, pixels: Vec<f64>) -> Self {
        debug_assert_eq!(pixels.len(), width * height * channels);
        FaceImage {
            width,
            height,
            channels,
            pixels,
        }
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(
            width,
            height,
            channels,
            vec![value; width * height * channels],
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.pixels[(y * self.width + x) * self.channels + c]
    }
}

fn next_token(bytes: &[u8], pos: &mut usize) -> Result<usize> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
        } else {
            break;
        }
    }
    let start = *pos;
    while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
        *pos += 1;
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::parse(0, "malformed PNM header"))
}

/// Parses binary PGM (`P5`) or PPM (`P6`) with 8-bit samples.
pub fn decode_pnm(bytes: &[u8]) -> Result<FaceImage> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err(Error::parse(0, "expected binary PGM (P5) or PPM (P6)")),
    };
    let mut pos = 2;
    let width = next_token(bytes, &mut pos)?;
    let height = next_token(bytes, &mut pos)?;
    let maxval = next_token(bytes, &mut pos)?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::parse(0, format!("unsupported maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let n = width * height * channels;
    let raster = bytes
        .get(pos..pos + n)
        .ok_or_else(|| Error::parse(0, "truncated PNM raster"))?;
    let scale = maxval as f64;
    let pixels = raster.iter().map(|&b| b as f64 / scale).collect();
    FaceImage::new(width, height, channels, pixels)
}

pub fn load_pnm(path: &Path) -> Result<FaceImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pnm(&bytes)
}

pub fn encode_pnm(image: &FaceImage) -> Vec<u8> {
    let magic = if image.channels == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend(image.pixels.iter().map(|&v| (v * 255.0).round() as u8));
    out
}

pub fn write_pnm(path: &Path, image: &FaceImage) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode_pnm(image))
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip_on_byte_grid() {
        let pixels: Vec<f64> = (0..100).map(|i| ((i * 37) % 256) as f64 / 255.0).collect();
        let img = FaceImage::new(10, 10, 1, pixels).unwrap();
        let back = decode_pnm(&encode_pnm(&img)).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn ppm_with_comment() {
        let mut bytes = b"P6\n# made by hand\n8 8\n255\n".to_vec();
        bytes.extend(std::iter::repeat_n(255u8, 8 * 8 * 3));
        let img = decode_pnm(&bytes).unwrap();
        assert_eq!(img.channels(), 3);
        assert!(img.pixels().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn rejects_ascii_and_tiny_images() {
        assert!(decode_pnm(b"P2\n8 8\n255\n").is_err());
        let mut bytes = b"P5\n4 4\n255\n".to_vec();
        bytes.extend([0u8; 16]);
        assert!(decode_pnm(&bytes).is_err());
    }

    #[test]
    fn rejects_out_of_range_pixels() {
        assert!(FaceImage::new(8, 8, 1, vec![1.5; 64]).is_err());
    }
}
