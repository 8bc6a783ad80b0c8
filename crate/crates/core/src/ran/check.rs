//! Seeded finite-difference checks of the full model gradient.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::{BackboneKind, HeadKind, Model, ModelConfig};
use crate::error::Result;
use crate::numerics::{compare_gradients, finite_diff_grad, GradCheckReport, DEFAULT_EPSILON};

const DIMS: [usize; 3] = [4, 16, 64];
const CROPS: [usize; 3] = [1, 3, 5];
const CLASSES: usize = 3;
const DOWNSAMPLE: usize = 2;
const HIDDEN: usize = 6;

/// One randomly initialised model, input set and label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GradCheckCase {
    pub seed: u64,
    pub feature_dim: usize,
    pub crops: usize,
    pub head: HeadKind,
    /// Whether the region biased hinge is forced on (otherwise forced off).
    pub hinge_active: bool,
}

impl fmt::Display for GradCheckCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "seed={} d={} k={} head={} hinge={}",
            self.seed,
            self.feature_dim,
            self.crops,
            self.head,
            if self.hinge_active {
                "active"
            } else {
                "inactive"
            }
        )
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckOutcome {
    pub case: GradCheckCase,
    pub alpha: f64,
    /// `mu_max - mu_0` at the checked point.
    pub gap: f64,
    pub report: GradCheckReport,
}

/// `trials` cases cycling through feature dims {4, 16, 64}, crop counts
/// {1, 3, 5} and both hinge states. Eighteen trials cover every combination.
pub fn gradcheck_cases(trials: usize, seed: u64, head: HeadKind) -> Vec<GradCheckCase> {
    (0..trials)
        .map(|i| GradCheckCase {
            seed: seed.wrapping_mul(1000).wrapping_add(i as u64),
            feature_dim: DIMS[i % 3],
            crops: CROPS[(i / 3) % 3],
            head,
            hinge_active: i % 2 == 0,
        })
        .collect()
}

fn attention_mu(model: &Model, inputs: &[Vec<f64>]) -> Result<Vec<f64>> {
    Ok(model
        .predict(inputs)?
        .attention
        .map(|a| a.mu)
        .unwrap_or_default())
}

/// Builds the case's model (trainable backbone included), picks a margin that
/// puts the hinge clearly on or off, and compares analytic gradients of the
/// total loss with central differences.
pub fn run_gradcheck_case(case: &GradCheckCase) -> Result<GradCheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(case.seed);
    let config = ModelConfig {
        head: case.head,
        classes: CLASSES,
        feature_dim: case.feature_dim,
        backbone: BackboneKind::Projection {
            downsample: DOWNSAMPLE,
            channels: 1,
            hidden: HIDDEN,
        },
        regions: case.crops + 1,
    };
    let mut model = Model::new(config, case.seed)?;
    for p in model.params.iter_mut() {
        p.value
            .iter_mut()
            .for_each(|v| *v = rng.gen_range(-0.5..0.5));
    }
    let in_dim = model.input_dim();
    let label = rng.gen_range(0..CLASSES);

    let (inputs, alpha, gap) = loop {
        let mut inputs: Vec<Vec<f64>> = (0..=case.crops)
            .map(|_| (0..in_dim).map(|_| rng.gen_range(0.0..1.0)).collect())
            .collect();
        let mu = attention_mu(&model, &inputs)?;
        if mu.is_empty() {
            break (inputs, 0.0, 0.0);
        }
        let top = |mu: &[f64]| (1..mu.len()).fold(1, |b, i| if mu[i] > mu[b] { i } else { b });
        if case.hinge_active {
            let gap = mu[top(&mu)] - mu[0];
            if gap < 0.9 {
                break (inputs, (gap + 0.1).max(0.0), gap);
            }
        } else {
            // Put the most attended region first so that a crop beats it.
            let t = top(&mu);
            if mu[0] > mu[t] {
                inputs.swap(0, t);
            }
            let mu = attention_mu(&model, &inputs)?;
            let gap = mu[top(&mu)] - mu[0];
            if gap > 1e-3 {
                break (inputs, gap / 2.0, gap);
            }
        }
    };

    let mut analytic = model.params.grad_buffers();
    model.loss_and_grad(&inputs, label, alpha, 1.0, Some(&mut analytic))?;
    let mut probe = model.params.clone();
    let numeric = finite_diff_grad(&mut probe, DEFAULT_EPSILON, |p| {
        model
            .loss_with(p, &inputs, label, alpha, 1.0, None)
            .map_or(f64::NAN, |l| l.total)
    });
    Ok(GradCheckOutcome {
        case: *case,
        alpha,
        gap,
        report: compare_gradients(&model.params, &analytic, &numeric),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cases_cover_grid() {
        let cases = gradcheck_cases(18, 0, HeadKind::Ran);
        for d in DIMS {
            for k in CROPS {
                for active in [true, false] {
                    assert!(cases
                        .iter()
                        .any(|c| c.feature_dim == d && c.crops == k && c.hinge_active == active));
                }
            }
        }
    }

    #[test]
    fn hinge_state_is_forced() {
        for case in gradcheck_cases(6, 3, HeadKind::Ran) {
            let out = run_gradcheck_case(&case).unwrap();
            if case.hinge_active {
                assert!(out.alpha > out.gap, "{case}");
            } else {
                assert!(out.alpha < out.gap, "{case}");
            }
            assert!(out.report.passed(), "{case}: {}", out.report);
        }
    }
}
