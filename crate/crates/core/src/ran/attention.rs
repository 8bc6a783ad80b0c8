use crate::error::{Error, Result};
use crate::numerics::{affine, axpy, dot, sigmoid, RealMatrix, RealVector};

/// Guard on both attention normalisers. With strictly positive sigmoid
/// weights it is only reachable through underflow.
pub const NORMALIZER_EPS: f64 = 1e-12;

/// Everything the two attention stages produce for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionState {
    pub mu: Vec<f64>,
    pub fm: RealVector,
    pub nu: Vec<f64>,
    pub pran: RealVector,
}

impl AttentionState {
    /// `mu_i * nu_i` per region.
    pub fn combined(&self) -> Vec<f64> {
        self.mu.iter().zip(&self.nu).map(|(m, n)| m * n).collect()
    }
}

fn check_features(features: &[RealVector], dim: usize) -> Result<()> {
    if features.is_empty() {
        return Err(Error::InvalidArgument("empty feature set".into()));
    }
    for f in features {
        if f.dim() != dim {
            return Err(Error::Dimension {
                expected: dim,
                actual: f.dim(),
                context: "region feature",
            });
        }
    }
    Ok(())
}

/// `sum(w_i x_i) / sum(w_i)`. Invariant under `w -> c w` for `c > 0`.
pub fn weighted_aggregate(features: &[RealVector], weights: &[f64]) -> Result<RealVector> {
    let dim = features.first().map_or(0, |f| f.dim());
    check_features(features, dim)?;
    if weights.len() != features.len() {
        return Err(Error::Dimension {
            expected: features.len(),
            actual: weights.len(),
            context: "aggregation weights",
        });
    }
    let total: f64 = weights.iter().sum();
    let mut acc = vec![0.0; dim];
    for (f, &w) in features.iter().zip(weights) {
        axpy(w, f.as_slice(), &mut acc);
    }
    let denom = total.max(NORMALIZER_EPS);
    acc.iter_mut().for_each(|v| *v /= denom);
    Ok(RealVector::new(acc))
}

/// Coarse weights `mu` and the aggregate `F_m`.
pub fn self_attention(features: &[RealVector], q0: &[f64]) -> Result<(Vec<f64>, RealVector)> {
    check_features(features, q0.len())?;
    let mu: Vec<f64> = features
        .iter()
        .map(|f| sigmoid(dot(f.as_slice(), q0)))
        .collect();
    let fm = weighted_aggregate(features, &mu)?;
    Ok((mu, fm))
}

/// Refined weights `nu` and `P_RAN`, with concatenation order `[F_i : F_m]`.
pub fn relation_attention(
    features: &[RealVector],
    fm: &RealVector,
    mu: &[f64],
    q1: &[f64],
) -> Result<(Vec<f64>, RealVector)> {
    check_features(features, fm.dim())?;
    if q1.len() != 2 * fm.dim() {
        return Err(Error::Dimension {
            expected: 2 * fm.dim(),
            actual: q1.len(),
            context: "relation attention q1",
        });
    }
    if mu.len() != features.len() {
        return Err(Error::Dimension {
            expected: features.len(),
            actual: mu.len(),
            context: "self-attention weights",
        });
    }
    let d = fm.dim();
    let fm_term = dot(fm.as_slice(), &q1[d..]);
    let nu: Vec<f64> = features
        .iter()
        .map(|f| sigmoid(dot(f.as_slice(), &q1[..d]) + fm_term))
        .collect();
    let weights: Vec<f64> = mu.iter().zip(&nu).map(|(m, n)| m * n).collect();
    let concat: Vec<RealVector> = features.iter().map(|f| f.concat(fm)).collect();
    let pran = weighted_aggregate(&concat, &weights)?;
    Ok((nu, pran))
}

/// Head parameters as plain values, for standalone use of [`forward`].
#[derive(Debug, Clone, PartialEq)]
pub struct RanParams {
    pub q0: RealVector,
    pub q1: RealVector,
    pub classifier_w: RealMatrix,
    pub classifier_b: RealVector,
}

impl RanParams {
    pub fn zeros(dim: usize, classes: usize) -> Self {
        RanParams {
            q0: RealVector::zeros(dim),
            q1: RealVector::zeros(2 * dim),
            classifier_w: RealMatrix::zeros(classes, 2 * dim),
            classifier_b: RealVector::zeros(classes),
        }
    }
}

/// Self-attention, relation-attention, then the classifier on `P_RAN`.
pub fn forward(
    features: &[RealVector],
    params: &RanParams,
) -> Result<(AttentionState, RealVector)> {
    let (mu, fm) = self_attention(features, params.q0.as_slice())?;
    let (nu, pran) = relation_attention(features, &fm, &mu, params.q1.as_slice())?;
    let logits = affine(
        pran.as_slice(),
        &params.classifier_w,
        params.classifier_b.as_slice(),
    )?;
    Ok((AttentionState { mu, fm, nu, pran }, logits))
}

/// Backward through both attention stages.
///
/// Inputs are `dL/dP_RAN`, an extra `dL/dmu` (region biased loss) and,
/// for the self-attention-only head, `dL/dF_m` from the classifier.
/// Outputs are accumulated into `grad_q0`, `grad_q1` and `grad_features`.
pub(crate) struct HeadGrads<'a> {
    pub grad_q0: &'a mut [f64],
    pub grad_q1: Option<&'a mut [f64]>,
    pub grad_features: &'a mut [Vec<f64>],
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn attention_backward(
    features: &[RealVector],
    state: &AttentionState,
    q0: &[f64],
    q1: Option<&[f64]>,
    grad_pran: Option<&[f64]>,
    mut grad_fm: Vec<f64>,
    mut grad_mu: Vec<f64>,
    out: HeadGrads<'_>,
) {
    let d = q0.len();
    let n = features.len();
    let HeadGrads {
        grad_q0,
        grad_q1,
        grad_features,
    } = out;

    if let (Some(gp), Some(q1), Some(gq1)) = (grad_pran, q1, grad_q1) {
        let w: Vec<f64> = state.combined();
        let wsum = w.iter().sum::<f64>().max(NORMALIZER_EPS);
        let p = state.pran.as_slice();
        for i in 0..n {
            let fi = features[i].as_slice();
            let fm = state.fm.as_slice();
            // dL/dw_i = ([F_i : F_m] - P) . gP / W
            let dw = (0..d)
                .map(|j| (fi[j] - p[j]) * gp[j] + (fm[j] - p[d + j]) * gp[d + j])
                .sum::<f64>()
                / wsum;
            grad_mu[i] += dw * state.nu[i];
            let dnu = dw * state.mu[i];
            let dt = dnu * state.nu[i] * (1.0 - state.nu[i]);
            let share = w[i] / wsum;
            for j in 0..d {
                // g_i = [F_i : F_m] receives the direct P term and the nu term
                let g_top = share * gp[j] + dt * q1[j];
                let g_bottom = share * gp[d + j] + dt * q1[d + j];
                grad_features[i][j] += g_top;
                grad_fm[j] += g_bottom;
                gq1[j] += dt * fi[j];
                gq1[d + j] += dt * fm[j];
            }
        }
    }

    let musum = state.mu.iter().sum::<f64>().max(NORMALIZER_EPS);
    let fm = state.fm.as_slice();
    for i in 0..n {
        let fi = features[i].as_slice();
        let dmu_fm = (0..d).map(|j| (fi[j] - fm[j]) * grad_fm[j]).sum::<f64>() / musum;
        let dmu = grad_mu[i] + dmu_fm;
        let ds = dmu * state.mu[i] * (1.0 - state.mu[i]);
        let share = state.mu[i] / musum;
        for j in 0..d {
            grad_features[i][j] += share * grad_fm[j] + ds * q0[j];
            grad_q0[j] += ds * fi[j];
        }
    }
}
