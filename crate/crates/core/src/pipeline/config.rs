use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::features::{DEFAULT_DOWNSAMPLE, DEFAULT_FEATURE_DIM};
use crate::numerics::LrSchedule;
use crate::ran::HeadKind;
use crate::regions::{CropScheme, DEFAULT_LANDMARK_RADIUS};

/// Everything that determines a training run. Serializes to the `key = value`
/// text format read by [`TrainConfig::parse`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub lr_decay_epochs: Vec<usize>,
    pub epochs: usize,
    pub alpha: f64,
    pub lambda_rb: f64,
    pub batch_size: usize,
    pub momentum: f64,
    pub seed: u64,
    pub crop_scheme: CropScheme,
    pub region_scale_ratio: f64,
    pub landmark_radius: f64,
    /// Random crops per image at evaluation time (random scheme only).
    pub test_crops: usize,
    pub head: HeadKind,
    pub feature_dim: usize,
    pub hidden: usize,
    /// Side every region is resized to before the backbone.
    pub input_size: usize,
    /// Side of the area-downsampled grid the backbone reads.
    pub downsample: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.01,
            lr_decay_epochs: vec![15, 30],
            epochs: 40,
            alpha: 0.02,
            lambda_rb: 1.0,
            batch_size: 32,
            momentum: 0.9,
            seed: 0,
            crop_scheme: CropScheme::Fixed,
            region_scale_ratio: 1.0,
            landmark_radius: DEFAULT_LANDMARK_RADIUS,
            test_crops: 3,
            head: HeadKind::Ran,
            feature_dim: DEFAULT_FEATURE_DIM,
            hidden: 64,
            input_size: 64,
            downsample: DEFAULT_DOWNSAMPLE,
        }
    }
}

pub const KEYS: [&str; 17] = [
    "lr",
    "lr_decay_epochs",
    "epochs",
    "alpha",
    "lambda_rb",
    "batch_size",
    "momentum",
    "seed",
    "crop_scheme",
    "region_scale_ratio",
    "landmark_radius",
    "test_crops",
    "head",
    "feature_dim",
    "hidden",
    "input_size",
    "downsample",
];

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse::<T>()
        .map_err(|_| Error::InvalidArgument(format!("bad value `{value}` for `{key}`")))
}

impl TrainConfig {
    pub const KEYS: [&'static str; 17] = KEYS;

    pub fn schedule(&self) -> LrSchedule {
        LrSchedule::new(self.lr, self.lr_decay_epochs.clone())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return bad(format!("alpha must be in [0, 1), got {}", self.alpha));
        }
        if !(self.lambda_rb >= 0.0 && self.lambda_rb.is_finite()) {
            return bad(format!(
                "lambda_rb must be non-negative, got {}",
                self.lambda_rb
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if self.lr_decay_epochs.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!(
                "decay epochs must increase: {:?}",
                self.lr_decay_epochs
            ));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(0.3..=1.1).contains(&self.region_scale_ratio) {
            return bad(format!(
                "region_scale_ratio {} outside [0.3, 1.1]",
                self.region_scale_ratio
            ));
        }
        if !(self.landmark_radius > 0.0 && self.landmark_radius <= 0.5) {
            return bad(format!(
                "landmark_radius {} outside (0, 0.5]",
                self.landmark_radius
            ));
        }
        if self.feature_dim == 0 || self.hidden == 0 || self.downsample == 0 {
            return bad("feature_dim, hidden and downsample must be positive".into());
        }
        if self.input_size < self.downsample {
            return bad(format!(
                "input_size {} below downsample {}",
                self.input_size, self.downsample
            ));
        }
        if matches!(self.crop_scheme, CropScheme::Random(0)) || self.test_crops == 0 {
            return bad("random schemes need at least one crop".into());
        }
        Ok(())
    }

    /// Sets one key from its text form. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "lr" => self.lr = parse_value(key, v)?,
            "lr_decay_epochs" => {
                self.lr_decay_epochs = if v.is_empty() {
                    Vec::new()
                } else {
                    v.split(',')
                        .map(|e| parse_value(key, e))
                        .collect::<Result<_>>()?
                }
            }
            "epochs" => self.epochs = parse_value(key, v)?,
            "alpha" => self.alpha = parse_value(key, v)?,
            "lambda_rb" => self.lambda_rb = parse_value(key, v)?,
            "batch_size" => self.batch_size = parse_value(key, v)?,
            "momentum" => self.momentum = parse_value(key, v)?,
            "seed" => self.seed = parse_value(key, v)?,
            "crop_scheme" => self.crop_scheme = v.parse()?,
            "region_scale_ratio" => self.region_scale_ratio = parse_value(key, v)?,
            "landmark_radius" => self.landmark_radius = parse_value(key, v)?,
            "test_crops" => self.test_crops = parse_value(key, v)?,
            "head" => self.head = v.parse()?,
            "feature_dim" => self.feature_dim = parse_value(key, v)?,
            "hidden" => self.hidden = parse_value(key, v)?,
            "input_size" => self.input_size = parse_value(key, v)?,
            "downsample" => self.downsample = parse_value(key, v)?,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown config key `{other}`"
                )))
            }
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "lr" => self.lr.to_string(),
            "lr_decay_epochs" => self
                .lr_decay_epochs
                .iter()
                .map(|e| e.to_string())
                .collect::<Vec<_>>()
                .join(","),
            "epochs" => self.epochs.to_string(),
            "alpha" => self.alpha.to_string(),
            "lambda_rb" => self.lambda_rb.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "momentum" => self.momentum.to_string(),
            "seed" => self.seed.to_string(),
            "crop_scheme" => self.crop_scheme.to_string(),
            "region_scale_ratio" => self.region_scale_ratio.to_string(),
            "landmark_radius" => self.landmark_radius.to_string(),
            "test_crops" => self.test_crops.to_string(),
            "head" => self.head.to_string(),
            "feature_dim" => self.feature_dim.to_string(),
            "hidden" => self.hidden.to_string(),
            "input_size" => self.input_size.to_string(),
            "downsample" => self.downsample.to_string(),
            _ => return None,
        })
    }

    /// One `key = value` line per field, in [`TrainConfig::KEYS`] order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let _ = writeln!(out, "{key} = {}", self.get(key).unwrap());
        }
        out
    }

    /// Applies `key = value` lines on top of `self`. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::parse(i + 1, format!("expected `key = value`, got `{line}`"))
            })?;
            self.set(k, v)
                .map_err(|e| Error::parse(i + 1, e.to_string()))?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_schedule() {
        let c = TrainConfig::default();
        let s = c.schedule();
        assert_eq!(s.lr_at(14), 0.01);
        assert!((s.lr_at(15) - 0.001).abs() < 1e-18);
        assert!((s.lr_at(30) - 0.0001).abs() < 1e-18);
        assert_eq!(c.alpha, 0.02);
        assert_eq!(c.epochs, 40);
        c.validate().unwrap();
    }

    #[test]
    fn text_round_trip() {
        let mut c = TrainConfig::default();
        c.set("crop_scheme", "random(4)").unwrap();
        c.set("head", "score_fusion").unwrap();
        c.set("lr_decay_epochs", "3,7").unwrap();
        c.set("alpha", "0.035").unwrap();
        assert_eq!(TrainConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn unknown_and_malformed_rejected() {
        assert!(TrainConfig::parse("learning_rate = 0.1").is_err());
        assert!(TrainConfig::parse("lr 0.1").is_err());
        assert!(TrainConfig::parse("epochs = -3").is_err());
        let c = TrainConfig::parse("# comment\n\n epochs = 3 \n").unwrap();
        assert_eq!(c.epochs, 3);
    }

    #[test]
    fn validation() {
        for (k, v) in [
            ("lr", "0"),
            ("alpha", "1"),
            ("lr_decay_epochs", "30,15"),
            ("batch_size", "0"),
        ] {
            let mut c = TrainConfig::default();
            c.set(k, v).unwrap();
            assert!(c.validate().is_err(), "{k}={v}");
        }
    }
}
