use std::fmt::Write as _;

use super::config::TrainConfig;
use super::data::Dataset;
use super::eval::Metrics;
use super::train::train_and_evaluate;
use crate::error::{Error, Result};
use crate::numerics::ParamSet;
use crate::ran::HeadKind;
use crate::regions::CropScheme;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub metrics: Metrics,
    /// Final trained parameters of this run.
    pub params: ParamSet,
}

/// CSV with one `<column>,test_accuracy` row per sweep value.
pub fn sweep_csv(column: &str, rows: &[SweepRow]) -> String {
    let mut out = format!("{column},test_accuracy\n");
    for r in rows {
        let _ = writeln!(out, "{},{}", r.value, r.metrics.overall_accuracy);
    }
    out
}

/// One full train/evaluate per margin, all from the same seed.
pub fn margin_sweep(
    cfg: &TrainConfig,
    train: &Dataset,
    test: &Dataset,
    alphas: &[f64],
) -> Result<Vec<SweepRow>> {
    if let Some(a) = alphas.iter().find(|a| a.is_nan() || **a < 0.0) {
        return Err(Error::InvalidArgument(format!("margin {a} is negative")));
    }
    alphas
        .iter()
        .map(|&alpha| {
            let c = TrainConfig {
                alpha,
                ..cfg.clone()
            };
            let run = train_and_evaluate(&c, train, test)?;
            Ok(SweepRow {
                value: alpha,
                metrics: run.metrics,
                params: run.model.params,
            })
        })
        .collect()
}

/// One full train/evaluate per fixed-crop scale ratio.
pub fn region_size_sweep(
    cfg: &TrainConfig,
    train: &Dataset,
    test: &Dataset,
    ratios: &[f64],
) -> Result<Vec<SweepRow>> {
    if cfg.crop_scheme != CropScheme::Fixed {
        return Err(Error::InvalidArgument(
            "region size sweeps need the fixed crop scheme".into(),
        ));
    }
    ratios
        .iter()
        .map(|&r| {
            let c = TrainConfig {
                region_scale_ratio: r,
                ..cfg.clone()
            };
            let run = train_and_evaluate(&c, train, test)?;
            Ok(SweepRow {
                value: r,
                metrics: run.metrics,
                params: run.model.params,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadResult {
    pub head: HeadKind,
    pub metrics: Metrics,
    pub params: ParamSet,
}

/// Trains each head under identical seeds and data.
pub fn compare_heads(
    cfg: &TrainConfig,
    train: &Dataset,
    test: &Dataset,
    heads: &[HeadKind],
) -> Result<Vec<HeadResult>> {
    heads
        .iter()
        .map(|&head| {
            let c = TrainConfig {
                head,
                ..cfg.clone()
            };
            let run = train_and_evaluate(&c, train, test)?;
            Ok(HeadResult {
                head,
                metrics: run.metrics,
                params: run.model.params,
            })
        })
        .collect()
}
