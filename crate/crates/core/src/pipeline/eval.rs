use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::data::{Dataset, PreparedSet};
use crate::error::{Error, Result};
use crate::numerics::softmax;
use crate::ran::{Model, Prediction};

/// Accuracy summary. `confusion[t][p]` counts samples of true class `t`
/// predicted as `p`. Classes without test samples have no per-class accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub overall_accuracy: f64,
    pub per_class_accuracy: Vec<Option<f64>>,
    pub confusion: Vec<Vec<usize>>,
}

impl Metrics {
    /// Tallies `(true, predicted)` pairs.
    pub fn from_pairs(classes: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut confusion = vec![vec![0usize; classes]; classes];
        for &(t, p) in pairs {
            if t >= classes || p >= classes {
                return Err(Error::LabelOutOfRange {
                    label: t.max(p),
                    classes,
                });
            }
            confusion[t][p] += 1;
        }
        let correct: usize = (0..classes).map(|c| confusion[c][c]).sum();
        let per_class_accuracy = confusion
            .iter()
            .enumerate()
            .map(|(c, row)| {
                let support: usize = row.iter().sum();
                (support > 0).then(|| row[c] as f64 / support as f64)
            })
            .collect();
        Ok(Metrics {
            overall_accuracy: if pairs.is_empty() {
                0.0
            } else {
                correct as f64 / pairs.len() as f64
            },
            per_class_accuracy,
            confusion,
        })
    }

    pub fn total(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }

    /// Confusion matrix as CSV: one row per true class, one column per prediction.
    pub fn confusion_csv(&self) -> String {
        let c = self.confusion.len();
        let mut out = String::from("true");
        for p in 0..c {
            let _ = write!(out, ",pred_{p}");
        }
        out.push('\n');
        for (t, row) in self.confusion.iter().enumerate() {
            let _ = write!(out, "{t}");
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }
}

pub fn predict_all(model: &Model, set: &PreparedSet) -> Result<Vec<Prediction>> {
    set.inputs.par_iter().map(|x| model.predict(x)).collect()
}

pub(crate) fn evaluate_prepared(
    model: &Model,
    set: &PreparedSet,
    classes: usize,
) -> Result<Metrics> {
    if classes != model.config.classes {
        return Err(Error::InvalidArgument(format!(
            "dataset has {classes} classes, model {}",
            model.config.classes
        )));
    }
    let preds = predict_all(model, set)?;
    let pairs: Vec<(usize, usize)> = set
        .labels
        .iter()
        .copied()
        .zip(preds.iter().map(|p| p.class))
        .collect();
    Metrics::from_pairs(classes, &pairs)
}

pub fn evaluate(cfg: &TrainConfig, model: &Model, data: &Dataset) -> Result<Metrics> {
    evaluate_prepared(model, &PreparedSet::for_eval(cfg, data)?, data.classes)
}

/// Softmax of the combined weights `mu_i * nu_i`. Display only; training never sees it.
pub fn display_weights(mu: &[f64], nu: &[f64]) -> Vec<f64> {
    let combined: Vec<f64> = mu.iter().zip(nu).map(|(m, n)| m * n).collect();
    softmax(&combined)
}

/// `(sample id, mu, nu)` for one sample.
pub type SampleWeights = (String, Vec<f64>, Vec<f64>);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionRow {
    pub sample_id: String,
    pub region_index: usize,
    pub mu: f64,
    pub nu: f64,
    pub display_weight: f64,
    pub highest: bool,
    pub lowest: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AttentionReport {
    pub rows: Vec<AttentionRow>,
}

impl AttentionReport {
    pub fn from_weights(samples: &[SampleWeights]) -> Self {
        let mut rows = Vec::new();
        for (id, mu, nu) in samples {
            let s = display_weights(mu, nu);
            let hi = crate::ran::argmax(&s);
            let lo = (0..s.len()).fold(0, |b, i| if s[i] < s[b] { i } else { b });
            for (i, ((&m, &n), &w)) in mu.iter().zip(nu).zip(&s).enumerate() {
                rows.push(AttentionRow {
                    sample_id: id.clone(),
                    region_index: i,
                    mu: m,
                    nu: n,
                    display_weight: w,
                    highest: i == hi,
                    lowest: i == lo,
                });
            }
        }
        AttentionReport { rows }
    }

    /// Mean display weight per region index over the samples that have it.
    pub fn mean_display_by_region(&self) -> Vec<f64> {
        let k = self
            .rows
            .iter()
            .map(|r| r.region_index + 1)
            .max()
            .unwrap_or(0);
        let mut sum = vec![0.0; k];
        let mut count = vec![0usize; k];
        for r in &self.rows {
            sum[r.region_index] += r.display_weight;
            count[r.region_index] += 1;
        }
        sum.iter()
            .zip(&count)
            .map(|(s, &c)| s / c.max(1) as f64)
            .collect()
    }

    /// Mean `mu_i * nu_i` per region index.
    pub fn mean_combined_by_region(&self) -> Vec<f64> {
        let k = self
            .rows
            .iter()
            .map(|r| r.region_index + 1)
            .max()
            .unwrap_or(0);
        let mut sum = vec![0.0; k];
        let mut count = vec![0usize; k];
        for r in &self.rows {
            sum[r.region_index] += r.mu * r.nu;
            count[r.region_index] += 1;
        }
        sum.iter()
            .zip(&count)
            .map(|(s, &c)| s / c.max(1) as f64)
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("sample_id,region_index,mu,nu,display_weight,flag\n");
        for r in &self.rows {
            let flag = match (r.highest, r.lowest) {
                (true, true) => "highest|lowest",
                (true, false) => "highest",
                (false, true) => "lowest",
                _ => "",
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.sample_id, r.region_index, r.mu, r.nu, r.display_weight, flag
            );
        }
        out
    }
}

fn attention_of(model: &Model, set: &PreparedSet) -> Result<Vec<SampleWeights>> {
    if !model.config.head.has_attention() {
        return Err(Error::InvalidArgument(format!(
            "`{}` head has no attention weights",
            model.config.head
        )));
    }
    let preds = predict_all(model, set)?;
    Ok(set
        .ids
        .iter()
        .zip(preds)
        .map(|(id, p)| {
            let a = p.attention.expect("attention head");
            (id.clone(), a.mu, a.nu)
        })
        .collect())
}

pub fn attention_report(
    cfg: &TrainConfig,
    model: &Model,
    data: &Dataset,
) -> Result<AttentionReport> {
    let set = PreparedSet::for_eval(cfg, data)?;
    Ok(AttentionReport::from_weights(&attention_of(model, &set)?))
}

/// Mean of `max_{i>=1} mu_i - mu_0` over `set`.
pub fn mean_margin(model: &Model, set: &PreparedSet) -> Result<f64> {
    let w = attention_of(model, set)?;
    if w.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = w
        .iter()
        .map(|(_, mu, _)| mu[1..].iter().copied().fold(f64::NEG_INFINITY, f64::max) - mu[0])
        .sum();
    Ok(total / w.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_confusion() {
        // (true, predicted) for six samples.
        let pairs = [(0, 0), (0, 1), (1, 1), (2, 2), (2, 0), (2, 2)];
        let m = Metrics::from_pairs(3, &pairs).unwrap();
        assert_eq!(
            m.confusion,
            vec![vec![1, 1, 0], vec![0, 1, 0], vec![1, 0, 2]]
        );
        assert!((m.overall_accuracy - 4.0 / 6.0).abs() < 1e-15);
        assert_eq!(
            m.per_class_accuracy,
            vec![Some(0.5), Some(1.0), Some(2.0 / 3.0)]
        );
        assert_eq!(m.total(), 6);
        assert_eq!(
            m.confusion_csv(),
            "true,pred_0,pred_1,pred_2\n0,1,1,0\n1,0,1,0\n2,1,0,2\n"
        );
    }

    #[test]
    fn trivial_metrics() {
        let all = Metrics::from_pairs(2, &[(0, 0), (1, 1)]).unwrap();
        assert_eq!(all.confusion, vec![vec![1, 0], vec![0, 1]]);
        assert_eq!(all.overall_accuracy, 1.0);
        let wrong = Metrics::from_pairs(2, &[(0, 1)]).unwrap();
        assert_eq!(wrong.overall_accuracy, 0.0);
        assert_eq!(wrong.per_class_accuracy, vec![Some(0.0), None]);
        let json: Metrics = serde_json::from_str(&wrong.to_json()).unwrap();
        assert_eq!(json, wrong);
    }

    #[test]
    fn uniform_display_weights() {
        let w = display_weights(&[0.5; 6], &[0.3; 6]);
        assert!(w.iter().all(|x| (x - 1.0 / 6.0).abs() < 1e-15));
    }

    #[test]
    fn display_golden() {
        // exp(mu*nu) normalised by hand: mu*nu = [0.02, 0.12, 0.0].
        let w = display_weights(&[0.1, 0.4, 0.0], &[0.2, 0.3, 0.9]);
        let e = [0.02f64.exp(), 0.12f64.exp(), 1.0];
        let z: f64 = e.iter().sum();
        for (a, b) in w.iter().zip(e) {
            assert!((a - b / z).abs() < 1e-15);
        }
    }

    #[test]
    fn report_flags_and_sums() {
        let r = AttentionReport::from_weights(&[
            ("a".into(), vec![0.1, 0.9, 0.5], vec![0.5, 0.5, 0.5]),
            ("b".into(), vec![0.5, 0.5], vec![0.5, 0.5]),
        ]);
        assert_eq!(r.rows.len(), 5);
        let s: f64 = r.rows[..3].iter().map(|x| x.display_weight).sum();
        assert!((s - 1.0).abs() < 1e-9);
        assert!(r.rows[1].highest && r.rows[0].lowest);
        assert!(r.rows[3].highest && r.rows[3].lowest);
        assert!(r
            .to_csv()
            .starts_with("sample_id,region_index,mu,nu,display_weight,flag\n"));
        assert_eq!(r.mean_display_by_region().len(), 3);
    }
}
