use crate::error::{Error, Result};
use crate::numerics::softmax_cross_entropy;

/// Index of the largest crop weight (indices `1..`), lowest index on ties.
pub(crate) fn argmax_crop(mu: &[f64]) -> usize {
    let mut best = 1;
    for i in 2..mu.len() {
        if mu[i] > mu[best] {
            best = i;
        }
    }
    best
}

fn check(mu: &[f64], alpha: f64) -> Result<()> {
    if mu.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "region biased loss needs the face weight and at least one crop, got {} weights",
            mu.len()
        )));
    }
    if alpha.is_nan() || alpha < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "margin must be >= 0, got {alpha}"
        )));
    }
    Ok(())
}

/// `max(0, alpha - (mu_max - mu_0))` where `mu_max` ranges over crops only.
pub fn rb_loss(mu: &[f64], alpha: f64) -> Result<f64> {
    check(mu, alpha)?;
    let gap = mu[argmax_crop(mu)] - mu[0];
    Ok((alpha - gap).max(0.0))
}

/// Loss and subgradient w.r.t. `mu`. At the kink the subgradient is zero;
/// when active it is `-1` on the arg-max crop and `+1` on `mu_0`.
pub fn rb_loss_grad(mu: &[f64], alpha: f64) -> Result<(f64, Vec<f64>)> {
    check(mu, alpha)?;
    let top = argmax_crop(mu);
    let value = alpha - (mu[top] - mu[0]);
    let mut grad = vec![0.0; mu.len()];
    if value > 0.0 {
        grad[top] = -1.0;
        grad[0] = 1.0;
        Ok((value, grad))
    } else {
        Ok((0.0, grad))
    }
}

/// Cross-entropy plus `lambda_rb` times the region biased loss. The region
/// term is skipped entirely when `lambda_rb == 0`.
pub fn total_loss(
    logits: &[f64],
    label: usize,
    mu: &[f64],
    alpha: f64,
    lambda_rb: f64,
) -> Result<f64> {
    let ce = softmax_cross_entropy(logits, label)?;
    if lambda_rb == 0.0 {
        return Ok(ce);
    }
    Ok(ce + lambda_rb * rb_loss(mu, alpha)?)
}

/// Mean of per-sample [`total_loss`] over `(logits, label, mu)` triples.
pub fn batch_total_loss<'a, I>(samples: I, alpha: f64, lambda_rb: f64) -> Result<f64>
where
    I: IntoIterator<Item = (&'a [f64], usize, &'a [f64])>,
{
    let mut sum = 0.0;
    let mut n = 0usize;
    for (logits, label, mu) in samples {
        sum += total_loss(logits, label, mu, alpha, lambda_rb)?;
        n += 1;
    }
    if n == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    Ok(sum / n as f64)
}
