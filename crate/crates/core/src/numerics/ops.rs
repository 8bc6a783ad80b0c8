use super::tensor::{axpy, dot, RealMatrix, RealVector};
use crate::error::{Error, Result};

/// Largest double strictly below one.
const ONE_MINUS: f64 = 1.0 - f64::EPSILON / 2.0;

/// `W x + b`.
pub fn affine(x: &[f64], w: &RealMatrix, b: &[f64]) -> Result<RealVector> {
    if w.cols() != x.len() {
        return Err(Error::Dimension {
            expected: w.cols(),
            actual: x.len(),
            context: "affine input",
        });
    }
    if w.rows() != b.len() {
        return Err(Error::Dimension {
            expected: w.rows(),
            actual: b.len(),
            context: "affine bias",
        });
    }
    let mut out = vec![0.0; b.len()];
    affine_into(x, w.as_slice(), b, &mut out);
    Ok(RealVector::new(out))
}

/// Unchecked `out = W x + b` on raw row-major storage.
pub(crate) fn affine_into(x: &[f64], w: &[f64], b: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        *o = b[r] + dot(&w[r * cols..(r + 1) * cols], x);
    }
}

/// Accumulates the gradients of `W x + b` given `grad_out = dL/d(Wx+b)`.
///
/// `grad_x` may be empty when the input gradient is not needed.
pub fn affine_backward(
    x: &[f64],
    w: &[f64],
    grad_out: &[f64],
    grad_x: &mut [f64],
    grad_w: &mut [f64],
    grad_b: &mut [f64],
) {
    let cols = x.len();
    for (r, &g) in grad_out.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        grad_b[r] += g;
        axpy(g, x, &mut grad_w[r * cols..(r + 1) * cols]);
        if !grad_x.is_empty() {
            axpy(g, &w[r * cols..(r + 1) * cols], grad_x);
        }
    }
}

/// Logistic function, kept strictly inside (0, 1) for |z| <= 700.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    (1.0 / (1.0 + (-z).exp())).min(ONE_MINUS)
}

/// Derivative expressed through the forward value `s = sigmoid(z)`.
#[inline]
pub fn sigmoid_derivative(s: f64) -> f64 {
    s * (1.0 - s)
}

#[inline]
pub fn relu(z: f64) -> f64 {
    z.max(0.0)
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let (argmax, max) =
        logits
            .iter()
            .copied()
            .enumerate()
            .fold(
                (0, f64::NEG_INFINITY),
                |acc, (i, v)| if v > acc.1 { (i, v) } else { acc },
            );
    // ln(sum exp(l - max)) = ln(1 + rest)
    let rest: f64 = logits
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != argmax)
        .map(|(_, &v)| (v - max).exp())
        .sum();
    let lse = max + rest.ln_1p();
    logits.iter().map(|&v| v - lse).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn check_label(logits: &[f64], label: usize) -> Result<()> {
    if logits.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "cross-entropy needs at least 2 classes, got {}",
            logits.len()
        )));
    }
    if label >= logits.len() {
        return Err(Error::LabelOutOfRange {
            label,
            classes: logits.len(),
        });
    }
    Ok(())
}

/// `-log softmax(logits)[label]`.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> Result<f64> {
    check_label(logits, label)?;
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // Written as (max - l_label) + ln(1 + rest) so the result is never negative.
    let mut rest = 0.0;
    let mut seen_max = false;
    for &v in logits {
        if v == max && !seen_max {
            seen_max = true;
        } else {
            rest += (v - max).exp();
        }
    }
    Ok((max - logits[label]) + rest.ln_1p())
}

/// Loss plus `softmax(logits) - onehot(label)`.
pub fn softmax_cross_entropy_with_grad(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    let loss = softmax_cross_entropy(logits, label)?;
    let mut grad = softmax(logits);
    grad[label] -= 1.0;
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_identity_and_zero_map() {
        let y = affine(&[3.0, -1.0], &RealMatrix::identity(2), &[0.0, 0.0]).unwrap();
        assert_eq!(y.as_slice(), &[3.0, -1.0]);
        let y = affine(&[7.0, 9.0], &RealMatrix::zeros(2, 2), &[1.0, 2.0]).unwrap();
        assert_eq!(y.as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn affine_hand_product() {
        let w = RealMatrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        let y = affine(&[1.0, 1.0], &w, &[0.0, 0.0]).unwrap();
        assert_eq!(y.as_slice(), &[3.0, 7.0]);
    }

    #[test]
    fn affine_shape_mismatch() {
        let w = RealMatrix::zeros(2, 3);
        assert!(matches!(
            affine(&[1.0, 1.0], &w, &[0.0, 0.0]),
            Err(Error::Dimension { .. })
        ));
        assert!(affine(&[1.0, 1.0, 1.0], &w, &[0.0]).is_err());
    }

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(40.0) - 1.0).abs() <= 1e-15);
        assert!((sigmoid(1.0) - 0.7310585786).abs() < 1e-10);
    }

    #[test]
    fn sigmoid_strictly_inside_unit_interval() {
        for z in [
            -700.0, -500.0, -40.0, -1e-9, 0.0, 1e-9, 36.0, 40.0, 500.0, 700.0,
        ] {
            let s = sigmoid(z);
            assert!(s > 0.0 && s < 1.0, "sigmoid({z}) = {s}");
        }
    }

    #[test]
    fn cross_entropy_values() {
        let ce = softmax_cross_entropy(&[0.3; 4], 1).unwrap();
        assert!((ce - 4f64.ln()).abs() < 1e-12);
        assert!(softmax_cross_entropy(&[100.0, 0.0], 0).unwrap().abs() < 1e-12);
        let ce = softmax_cross_entropy(&[1.0, 2.0, 3.0], 2).unwrap();
        assert!((ce - 0.40760596).abs() < 1e-8);
    }

    #[test]
    fn cross_entropy_errors() {
        assert!(matches!(
            softmax_cross_entropy(&[1.0, 2.0], 2),
            Err(Error::LabelOutOfRange { .. })
        ));
        assert!(softmax_cross_entropy(&[1.0], 0).is_err());
    }

    #[test]
    fn cross_entropy_grad_is_softmax_minus_onehot() {
        let (_, g) = softmax_cross_entropy_with_grad(&[1.0, 2.0, 3.0], 0).unwrap();
        let p = softmax(&[1.0, 2.0, 3.0]);
        assert!((g[0] - (p[0] - 1.0)).abs() < 1e-15);
        assert!((g.iter().sum::<f64>()).abs() < 1e-15);
    }

    #[test]
    fn log_softmax_matches_softmax() {
        let l = [0.5, -2.0, 3.0];
        let ls = log_softmax(&l);
        for (a, b) in ls.iter().zip(softmax(&l)) {
            assert!((a.exp() - b).abs() < 1e-14);
        }
    }
}
