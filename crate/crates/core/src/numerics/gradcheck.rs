//! Central-difference gradient oracle.

use super::param::{Grads, ParamSet};

pub const DEFAULT_EPSILON: f64 = 1e-5;

/// Relative error threshold used by [`GradCheckReport::passed`].
pub const REL_TOLERANCE: f64 = 1e-4;
/// Entries whose magnitude stays below this are compared absolutely.
pub const SMALL_GRAD: f64 = 1e-3;
pub const ABS_TOLERANCE: f64 = 1e-7;

/// `(f(p + eps) - f(p - eps)) / 2 eps` for every scalar of every parameter.
///
/// Parameter values are restored exactly after each probe.
pub fn finite_diff_grad<F>(params: &mut ParamSet, epsilon: f64, mut loss_fn: F) -> Grads
where
    F: FnMut(&ParamSet) -> f64,
{
    let mut out = params.grad_buffers();
    for (pi, buf) in out.0.iter_mut().enumerate() {
        for (j, slot) in buf.iter_mut().enumerate() {
            let original = params.get(super::ParamId(pi)).value[j];
            params.get_mut(super::ParamId(pi)).value[j] = original + epsilon;
            let plus = loss_fn(params);
            params.get_mut(super::ParamId(pi)).value[j] = original - epsilon;
            let minus = loss_fn(params);
            params.get_mut(super::ParamId(pi)).value[j] = original;
            *slot = (plus - minus) / (2.0 * epsilon);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Largest `|a - n| / max(|a|, |n|)` over entries with magnitude >= `SMALL_GRAD`.
    pub max_relative_error: f64,
    /// Largest `|a - n|` over entries with magnitude < `SMALL_GRAD`.
    pub max_small_abs_error: f64,
    /// `(parameter name, flat index)` of the worst relative entry.
    pub worst: Option<(String, usize)>,
    pub entries: usize,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_relative_error < REL_TOLERANCE && self.max_small_abs_error < ABS_TOLERANCE
    }

    /// Combines reports, keeping the worst errors.
    pub fn merge(mut self, other: GradCheckReport) -> GradCheckReport {
        if other.max_relative_error > self.max_relative_error {
            self.max_relative_error = other.max_relative_error;
            self.worst = other.worst;
        }
        self.max_small_abs_error = self.max_small_abs_error.max(other.max_small_abs_error);
        self.entries += other.entries;
        self
    }
}

impl std::fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "max_rel_err={:.3e} max_small_abs_err={:.3e} entries={}",
            self.max_relative_error, self.max_small_abs_error, self.entries
        )?;
        if let Some((name, i)) = &self.worst {
            write!(f, " worst={name}[{i}]")?;
        }
        Ok(())
    }
}

pub fn compare_gradients(params: &ParamSet, analytic: &Grads, numeric: &Grads) -> GradCheckReport {
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        max_small_abs_error: 0.0,
        worst: None,
        entries: 0,
    };
    for ((p, a), n) in params.iter().zip(&analytic.0).zip(&numeric.0) {
        for (i, (&ai, &ni)) in a.iter().zip(n).enumerate() {
            report.entries += 1;
            let scale = ai.abs().max(ni.abs());
            let diff = (ai - ni).abs();
            if scale < SMALL_GRAD {
                report.max_small_abs_error = report.max_small_abs_error.max(diff);
            } else {
                let rel = diff / scale;
                if rel > report.max_relative_error {
                    report.max_relative_error = rel;
                    report.worst = Some((p.name.clone(), i));
                }
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{sigmoid, ParamShape, Parameter};

    fn scalar(v: f64) -> ParamSet {
        let mut ps = ParamSet::new();
        ps.push(Parameter::new("p", ParamShape::Vector(1), vec![v]).unwrap())
            .unwrap();
        ps
    }

    #[test]
    fn quadratic() {
        let mut ps = scalar(3.0);
        let g = finite_diff_grad(&mut ps, 1e-5, |p| p.iter().next().unwrap().value[0].powi(2));
        assert!((g.0[0][0] - 6.0).abs() < 1e-8);
        assert_eq!(ps.iter().next().unwrap().value[0], 3.0);
    }

    #[test]
    fn constant() {
        let mut ps = ParamSet::new();
        ps.push(Parameter::new("a", ParamShape::Matrix(2, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap())
            .unwrap();
        let g = finite_diff_grad(&mut ps, DEFAULT_EPSILON, |_| 4.2);
        assert!(g.flatten().iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn sigmoid_slope() {
        let mut ps = scalar(1.0);
        let g = finite_diff_grad(&mut ps, 1e-5, |p| {
            sigmoid(p.iter().next().unwrap().value[0])
        });
        assert!((g.0[0][0] - 0.19661193).abs() < 1e-7);
    }

    #[test]
    fn report_flags_mismatch() {
        let ps = scalar(0.0);
        let a = Grads(vec![vec![1.0]]);
        let n = Grads(vec![vec![1.001]]);
        let r = compare_gradients(&ps, &a, &n);
        assert!(!r.passed());
        let r = compare_gradients(&ps, &a, &a);
        assert!(r.passed());
    }
}
