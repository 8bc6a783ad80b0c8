//! Fusion baselines compared against attention aggregation.

use crate::error::{Error, Result};
use crate::numerics::{softmax, RealVector};

/// Unweighted mean of region features.
pub fn baseline_average_pool(features: &[RealVector]) -> Result<RealVector> {
    let first = features
        .first()
        .ok_or_else(|| Error::InvalidArgument("average pooling of an empty feature set".into()))?;
    let mut acc = vec![0.0; first.dim()];
    for f in features {
        if f.dim() != first.dim() {
            return Err(Error::Dimension {
                expected: first.dim(),
                actual: f.dim(),
                context: "average pooling",
            });
        }
        for (a, x) in acc.iter_mut().zip(f.as_slice()) {
            *a += x;
        }
    }
    let n = features.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(RealVector::new(acc))
}

/// Order-preserving concatenation of exactly `regions` features.
pub fn baseline_concat(features: &[RealVector], regions: usize) -> Result<RealVector> {
    if features.len() != regions {
        return Err(Error::Dimension {
            expected: regions,
            actual: features.len(),
            context: "concatenation needs a fixed region count",
        });
    }
    let dim = features.first().map_or(0, |f| f.dim());
    let mut out = Vec::with_capacity(regions * dim);
    for f in features {
        if f.dim() != dim {
            return Err(Error::Dimension {
                expected: dim,
                actual: f.dim(),
                context: "concatenation",
            });
        }
        out.extend_from_slice(f.as_slice());
    }
    Ok(RealVector::new(out))
}

/// Mean of per-region softmax probabilities.
pub fn baseline_score_fusion(per_region_logits: &[RealVector]) -> Result<RealVector> {
    let first = per_region_logits
        .first()
        .ok_or_else(|| Error::InvalidArgument("score fusion of no regions".into()))?;
    let classes = first.dim();
    let mut acc = vec![0.0; classes];
    for l in per_region_logits {
        if l.dim() != classes {
            return Err(Error::Dimension {
                expected: classes,
                actual: l.dim(),
                context: "score fusion",
            });
        }
        for (a, p) in acc.iter_mut().zip(softmax(l.as_slice())) {
            *a += p;
        }
    }
    let n = per_region_logits.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(RealVector::new(acc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ran::self_attention;

    fn v(x: &[f64]) -> RealVector {
        RealVector::new(x.to_vec())
    }

    #[test]
    fn average_pool() {
        let f = v(&[0.3, -1.0]);
        assert_eq!(
            baseline_average_pool(&[f.clone(), f.clone(), f.clone()]).unwrap(),
            f
        );
        assert_eq!(
            baseline_average_pool(&[v(&[1.0, 0.0]), v(&[0.0, 1.0])])
                .unwrap()
                .as_slice(),
            &[0.5, 0.5]
        );
        assert!(baseline_average_pool(&[]).is_err());
    }

    #[test]
    fn average_pool_matches_zero_self_attention() {
        let feats = vec![
            v(&[0.1, 2.0, -3.0]),
            v(&[4.0, 0.5, 0.25]),
            v(&[-1.0, -1.0, 9.0]),
        ];
        let (_, fm) = self_attention(&feats, &[0.0; 3]).unwrap();
        let avg = baseline_average_pool(&feats).unwrap();
        for (a, b) in fm.as_slice().iter().zip(avg.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn concat() {
        let out = baseline_concat(&[v(&[1.0, 2.0]), v(&[3.0, 4.0])], 2).unwrap();
        assert_eq!(out.as_slice(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(out.dim(), 2 * 2);
        let parts: Vec<&[f64]> = out.as_slice().chunks(2).collect();
        assert_eq!(parts, vec![&[1.0, 2.0][..], &[3.0, 4.0][..]]);
        assert!(baseline_concat(&[v(&[1.0, 2.0])], 2).is_err());
    }

    #[test]
    fn score_fusion() {
        let l = v(&[0.2, 1.0, -0.5]);
        let fused = baseline_score_fusion(&[l.clone(), l.clone()]).unwrap();
        for (a, b) in fused.as_slice().iter().zip(softmax(l.as_slice())) {
            assert!((a - b).abs() < 1e-15);
        }
        // two saturated, opposed one-hot distributions average to uniform
        let fused = baseline_score_fusion(&[v(&[800.0, 0.0]), v(&[0.0, 800.0])]).unwrap();
        assert_eq!(fused.as_slice(), &[0.5, 0.5]);
        assert!(baseline_score_fusion(&[v(&[1.0, 2.0]), v(&[1.0])]).is_err());
    }

    #[test]
    fn score_fusion_hand_vectors() {
        // softmax rows computed independently:
        // (0,0,0) -> 1/3 each; (ln 2, 0, 0) -> (1/2, 1/4, 1/4); (0, ln 3, 0) -> (1/5, 3/5, 1/5)
        let fused = baseline_score_fusion(&[
            v(&[0.0, 0.0, 0.0]),
            v(&[2f64.ln(), 0.0, 0.0]),
            v(&[0.0, 3f64.ln(), 0.0]),
        ])
        .unwrap();
        let expect = [
            (1.0 / 3.0 + 0.5 + 0.2) / 3.0,
            (1.0 / 3.0 + 0.25 + 0.6) / 3.0,
            (1.0 / 3.0 + 0.25 + 0.2) / 3.0,
        ];
        for (a, b) in fused.as_slice().iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
