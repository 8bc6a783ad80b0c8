use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::attention::{
    attention_backward, relation_attention, self_attention, AttentionState, HeadGrads,
};
use super::baselines::{baseline_average_pool, baseline_concat};
use super::loss::rb_loss_grad;
use crate::error::{Error, Result};
use crate::features::{BackboneCache, ProjectionBackbone, ProjectionConfig};
use crate::numerics::{
    affine_backward, affine_into, softmax, softmax_cross_entropy_with_grad, Grads, ParamId,
    ParamSet, ParamShape, Parameter, RealVector,
};

/// How region features are combined before classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HeadKind {
    /// Self-attention, relation-attention, classifier on `P_RAN`.
    Ran,
    /// Self-attention only, classifier on `F_m`.
    SelfAttention,
    AveragePool,
    /// Fixed region count; classifier on the concatenated features.
    Concat,
    /// One shared classifier per region; softmax scores are averaged.
    ScoreFusion,
}

impl HeadKind {
    pub const ALL: [HeadKind; 5] = [
        HeadKind::Ran,
        HeadKind::SelfAttention,
        HeadKind::AveragePool,
        HeadKind::Concat,
        HeadKind::ScoreFusion,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            HeadKind::Ran => "ran",
            HeadKind::SelfAttention => "self_attention",
            HeadKind::AveragePool => "average_pool",
            HeadKind::Concat => "concat",
            HeadKind::ScoreFusion => "score_fusion",
        }
    }

    /// Whether the head has self-attention weights the region biased loss can act on.
    pub fn has_attention(&self) -> bool {
        matches!(self, HeadKind::Ran | HeadKind::SelfAttention)
    }
}

impl fmt::Display for HeadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HeadKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        HeadKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown head `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackboneKind {
    /// Inputs already are feature vectors (e.g. from a feature store).
    Frozen,
    Projection {
        downsample: usize,
        channels: usize,
        hidden: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub head: HeadKind,
    pub classes: usize,
    pub feature_dim: usize,
    pub backbone: BackboneKind,
    /// Regions per sample including the duplicate; only used by [`HeadKind::Concat`].
    pub regions: usize,
}

impl ModelConfig {
    fn classifier_in(&self) -> usize {
        let d = self.feature_dim;
        match self.head {
            HeadKind::Ran => 2 * d,
            HeadKind::Concat => self.regions * d,
            _ => d,
        }
    }
}

/// Backbone plus head, with every trainable tensor in one [`ParamSet`].
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamSet,
    backbone: Option<ProjectionBackbone>,
    q0: Option<ParamId>,
    q1: Option<ParamId>,
    cls_w: ParamId,
    cls_b: ParamId,
}

/// Per-sample result of [`Model::predict`].
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// Logits, or mean probabilities for score fusion. The arg-max is the class.
    pub scores: Vec<f64>,
    pub class: usize,
    pub attention: Option<AttentionState>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleLoss {
    pub ce: f64,
    /// Unweighted region biased loss (0 for heads without attention).
    pub rb: f64,
    pub total: f64,
    pub predicted: usize,
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        if config.classes < 2 {
            return Err(Error::InvalidArgument("need at least 2 classes".into()));
        }
        if config.feature_dim == 0 {
            return Err(Error::InvalidArgument(
                "feature dim must be positive".into(),
            ));
        }
        if config.head == HeadKind::Concat && config.regions == 0 {
            return Err(Error::InvalidArgument(
                "concat head needs a region count".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let d = config.feature_dim;
        let backbone = match config.backbone {
            BackboneKind::Frozen => None,
            BackboneKind::Projection {
                downsample,
                channels,
                hidden,
            } => Some(ProjectionBackbone::register(
                &mut params,
                ProjectionConfig {
                    downsample,
                    channels,
                    hidden,
                    out_dim: d,
                },
                &mut rng,
            )?),
        };
        let (mut q0, mut q1) = (None, None);
        if config.head.has_attention() {
            q0 = Some(params.push(Parameter::zeros("q0", ParamShape::Vector(d)))?);
        }
        if config.head == HeadKind::Ran {
            q1 = Some(params.push(Parameter::zeros("q1", ParamShape::Vector(2 * d)))?);
        }
        let fan_in = config.classifier_in();
        let limit = (6.0 / (fan_in + config.classes) as f64).sqrt();
        let w: Vec<f64> = (0..config.classes * fan_in)
            .map(|_| rng.gen_range(-limit..limit))
            .collect();
        let cls_w = params.push(Parameter::new(
            "classifier.W",
            ParamShape::Matrix(config.classes, fan_in),
            w,
        )?)?;
        let cls_b = params.push(Parameter::zeros(
            "classifier.b",
            ParamShape::Vector(config.classes),
        ))?;
        Ok(Model {
            config,
            params,
            backbone,
            q0,
            q1,
            cls_w,
            cls_b,
        })
    }

    /// Rebuilds a model around loaded parameter values.
    pub fn from_params(config: ModelConfig, loaded: &ParamSet) -> Result<Self> {
        let mut model = Model::new(config, 0)?;
        model.params.load_values(loaded)?;
        Ok(model)
    }

    pub fn backbone(&self) -> Option<&ProjectionBackbone> {
        self.backbone.as_ref()
    }

    pub fn q0(&self) -> Option<ParamId> {
        self.q0
    }

    pub fn q1(&self) -> Option<ParamId> {
        self.q1
    }

    pub fn classifier(&self) -> (ParamId, ParamId) {
        (self.cls_w, self.cls_b)
    }

    /// Length of each per-region input vector.
    pub fn input_dim(&self) -> usize {
        match &self.backbone {
            Some(b) => b.config.in_dim(),
            None => self.config.feature_dim,
        }
    }

    fn features(
        &self,
        params: &ParamSet,
        inputs: &[Vec<f64>],
    ) -> Result<(Vec<RealVector>, Vec<BackboneCache>)> {
        if inputs.is_empty() {
            return Err(Error::InvalidArgument("sample has no regions".into()));
        }
        match &self.backbone {
            Some(bb) => {
                let caches = inputs
                    .iter()
                    .map(|x| bb.forward(params, x))
                    .collect::<Result<Vec<_>>>()?;
                let feats = caches
                    .iter()
                    .map(|c| RealVector::new(c.output.clone()))
                    .collect();
                Ok((feats, caches))
            }
            None => {
                for x in inputs {
                    if x.len() != self.config.feature_dim {
                        return Err(Error::Dimension {
                            expected: self.config.feature_dim,
                            actual: x.len(),
                            context: "frozen feature",
                        });
                    }
                }
                Ok((
                    inputs.iter().map(|x| RealVector::new(x.clone())).collect(),
                    Vec::new(),
                ))
            }
        }
    }

    /// Region features `F_0..F_k` for one sample.
    pub fn extract_features(&self, inputs: &[Vec<f64>]) -> Result<Vec<RealVector>> {
        Ok(self.features(&self.params, inputs)?.0)
    }

    fn classify(&self, params: &ParamSet, x: &[f64]) -> Vec<f64> {
        let mut logits = vec![0.0; self.config.classes];
        affine_into(
            x,
            params.value(self.cls_w),
            params.value(self.cls_b),
            &mut logits,
        );
        logits
    }

    fn check_regions(&self, n: usize) -> Result<()> {
        if self.config.head == HeadKind::Concat && n != self.config.regions {
            return Err(Error::Dimension {
                expected: self.config.regions,
                actual: n,
                context: "concat head region count",
            });
        }
        Ok(())
    }

    pub fn predict(&self, inputs: &[Vec<f64>]) -> Result<Prediction> {
        self.check_regions(inputs.len())?;
        let p = &self.params;
        let (feats, _) = self.features(p, inputs)?;
        let (scores, attention) = match self.config.head {
            HeadKind::Ran => {
                let (mu, fm) = self_attention(&feats, p.value(self.q0.unwrap()))?;
                let (nu, pran) = relation_attention(&feats, &fm, &mu, p.value(self.q1.unwrap()))?;
                let logits = self.classify(p, pran.as_slice());
                (logits, Some(AttentionState { mu, fm, nu, pran }))
            }
            HeadKind::SelfAttention => {
                let (mu, fm) = self_attention(&feats, p.value(self.q0.unwrap()))?;
                let logits = self.classify(p, fm.as_slice());
                let nu = vec![1.0; mu.len()];
                (
                    logits,
                    Some(AttentionState {
                        mu,
                        pran: fm.clone(),
                        fm,
                        nu,
                    }),
                )
            }
            HeadKind::AveragePool => (
                self.classify(p, baseline_average_pool(&feats)?.as_slice()),
                None,
            ),
            HeadKind::Concat => (
                self.classify(p, baseline_concat(&feats, self.config.regions)?.as_slice()),
                None,
            ),
            HeadKind::ScoreFusion => {
                let mut acc = vec![0.0; self.config.classes];
                for f in &feats {
                    for (a, q) in acc.iter_mut().zip(softmax(&self.classify(p, f.as_slice()))) {
                        *a += q;
                    }
                }
                let n = feats.len() as f64;
                acc.iter_mut().for_each(|a| *a /= n);
                (acc, None)
            }
        };
        Ok(Prediction {
            class: argmax(&scores),
            scores,
            attention,
        })
    }

    /// Per-sample loss; accumulates exact gradients into `grads` when given.
    pub fn loss_and_grad(
        &self,
        inputs: &[Vec<f64>],
        label: usize,
        alpha: f64,
        lambda_rb: f64,
        grads: Option<&mut Grads>,
    ) -> Result<SampleLoss> {
        self.loss_with(&self.params, inputs, label, alpha, lambda_rb, grads)
    }

    /// Same as [`Model::loss_and_grad`] but reading values from `params`,
    /// which must share this model's layout (used by gradient checks).
    pub fn loss_with(
        &self,
        params: &ParamSet,
        inputs: &[Vec<f64>],
        label: usize,
        alpha: f64,
        lambda_rb: f64,
        grads: Option<&mut Grads>,
    ) -> Result<SampleLoss> {
        self.check_regions(inputs.len())?;
        let n = inputs.len();
        let d = self.config.feature_dim;
        let (feats, caches) = self.features(params, inputs)?;
        let mut grad_feats = vec![vec![0.0; d]; n];
        let want_grad = grads.is_some();
        let mut local = grads;

        let (ce, rb, predicted) = match self.config.head {
            HeadKind::Ran | HeadKind::SelfAttention => {
                let q0 = params.value(self.q0.unwrap());
                let (mu, fm) = self_attention(&feats, q0)?;
                let (state, cls_in) = if self.config.head == HeadKind::Ran {
                    let (nu, pran) =
                        relation_attention(&feats, &fm, &mu, params.value(self.q1.unwrap()))?;
                    let cls_in = pran.as_slice().to_vec();
                    (AttentionState { mu, fm, nu, pran }, cls_in)
                } else {
                    let nu = vec![1.0; mu.len()];
                    let cls_in = fm.as_slice().to_vec();
                    (
                        AttentionState {
                            mu,
                            pran: fm.clone(),
                            fm,
                            nu,
                        },
                        cls_in,
                    )
                };
                let logits = self.classify(params, &cls_in);
                let (ce, dlogits) = softmax_cross_entropy_with_grad(&logits, label)?;
                let (rb, rb_grad) = if lambda_rb != 0.0 {
                    rb_loss_grad(&state.mu, alpha)?
                } else {
                    (0.0, vec![0.0; n])
                };
                if let Some(g) = local.as_deref_mut() {
                    let mut dcls = vec![0.0; cls_in.len()];
                    {
                        let (gw, gb) = g.pair_mut(self.cls_w, self.cls_b);
                        affine_backward(
                            &cls_in,
                            params.value(self.cls_w),
                            &dlogits,
                            &mut dcls,
                            gw,
                            gb,
                        );
                    }
                    let grad_mu: Vec<f64> = rb_grad.iter().map(|x| lambda_rb * x).collect();
                    let q1 = self.q1.map(|id| params.value(id));
                    if self.config.head == HeadKind::Ran {
                        let (gq0, gq1) = g.pair_mut(self.q0.unwrap(), self.q1.unwrap());
                        attention_backward(
                            &feats,
                            &state,
                            q0,
                            q1,
                            Some(&dcls),
                            vec![0.0; d],
                            grad_mu,
                            HeadGrads {
                                grad_q0: gq0,
                                grad_q1: Some(gq1),
                                grad_features: &mut grad_feats,
                            },
                        );
                    } else {
                        attention_backward(
                            &feats,
                            &state,
                            q0,
                            None,
                            None,
                            dcls,
                            grad_mu,
                            HeadGrads {
                                grad_q0: g.get_mut(self.q0.unwrap()),
                                grad_q1: None,
                                grad_features: &mut grad_feats,
                            },
                        );
                    }
                }
                (ce, rb, argmax(&logits))
            }
            HeadKind::AveragePool | HeadKind::Concat => {
                let pooled = if self.config.head == HeadKind::AveragePool {
                    baseline_average_pool(&feats)?
                } else {
                    baseline_concat(&feats, self.config.regions)?
                };
                let logits = self.classify(params, pooled.as_slice());
                let (ce, dlogits) = softmax_cross_entropy_with_grad(&logits, label)?;
                if let Some(g) = local.as_deref_mut() {
                    let mut dpool = vec![0.0; pooled.dim()];
                    let (gw, gb) = g.pair_mut(self.cls_w, self.cls_b);
                    affine_backward(
                        pooled.as_slice(),
                        params.value(self.cls_w),
                        &dlogits,
                        &mut dpool,
                        gw,
                        gb,
                    );
                    for (i, gf) in grad_feats.iter_mut().enumerate() {
                        if self.config.head == HeadKind::AveragePool {
                            gf.iter_mut()
                                .zip(&dpool)
                                .for_each(|(a, b)| *a = b / n as f64);
                        } else {
                            gf.copy_from_slice(&dpool[i * d..(i + 1) * d]);
                        }
                    }
                }
                (ce, 0.0, argmax(&logits))
            }
            HeadKind::ScoreFusion => {
                let mut ce = 0.0;
                let mut probs = vec![0.0; self.config.classes];
                for (i, f) in feats.iter().enumerate() {
                    let logits = self.classify(params, f.as_slice());
                    let (l, mut dl) = softmax_cross_entropy_with_grad(&logits, label)?;
                    ce += l / n as f64;
                    for (a, q) in probs.iter_mut().zip(softmax(&logits)) {
                        *a += q;
                    }
                    if let Some(g) = local.as_deref_mut() {
                        dl.iter_mut().for_each(|x| *x /= n as f64);
                        let (gw, gb) = g.pair_mut(self.cls_w, self.cls_b);
                        affine_backward(
                            f.as_slice(),
                            params.value(self.cls_w),
                            &dl,
                            &mut grad_feats[i],
                            gw,
                            gb,
                        );
                    }
                }
                (ce, 0.0, argmax(&probs))
            }
        };

        if want_grad {
            if let (Some(bb), Some(g)) = (&self.backbone, local) {
                for ((x, cache), gf) in inputs.iter().zip(&caches).zip(&grad_feats) {
                    bb.backward(params, x, cache, gf, g);
                }
            }
        }
        Ok(SampleLoss {
            ce,
            rb,
            total: ce + lambda_rb * rb,
            predicted,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RealMatrix;
    use crate::numerics::{compare_gradients, finite_diff_grad};
    use crate::ran::{forward, RanParams};

    fn random_inputs(seed: u64, n: usize, dim: usize) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..dim).map(|_| rng.gen_range(0.0..1.0)).collect())
            .collect()
    }

    fn randomize(model: &mut Model, seed: u64, scale: f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in model.params.iter_mut() {
            p.value
                .iter_mut()
                .for_each(|v| *v = rng.gen_range(-scale..scale));
        }
    }

    fn config(head: HeadKind, backbone: BackboneKind) -> ModelConfig {
        ModelConfig {
            head,
            classes: 3,
            feature_dim: 4,
            backbone,
            regions: 4,
        }
    }

    fn check_all_heads(backbone: BackboneKind, in_dim: usize) {
        for head in HeadKind::ALL {
            for seed in 0..4u64 {
                let mut model = Model::new(config(head, backbone), seed).unwrap();
                randomize(&mut model, seed + 10, 0.8);
                let inputs = random_inputs(seed + 20, 4, in_dim);
                // alpha 0.9 keeps the hinge active, alpha 0 with a wide gap keeps it off
                for alpha in [0.9, 0.0] {
                    let mut grads = model.params.grad_buffers();
                    model
                        .loss_and_grad(&inputs, 1, alpha, 1.0, Some(&mut grads))
                        .unwrap();
                    let mut probe = model.params.clone();
                    let numeric = finite_diff_grad(&mut probe, 1e-5, |p| {
                        model
                            .loss_with(p, &inputs, 1, alpha, 1.0, None)
                            .unwrap()
                            .total
                    });
                    let report = compare_gradients(&model.params, &grads, &numeric);
                    assert!(
                        report.passed(),
                        "{head} seed {seed} alpha {alpha}: {report}"
                    );
                }
            }
        }
    }

    #[test]
    fn gradients_frozen_backbone() {
        check_all_heads(BackboneKind::Frozen, 4);
    }

    #[test]
    fn gradients_projection_backbone() {
        check_all_heads(
            BackboneKind::Projection {
                downsample: 2,
                channels: 1,
                hidden: 5,
            },
            4,
        );
    }

    #[test]
    fn matches_standalone_forward() {
        let mut model = Model::new(config(HeadKind::Ran, BackboneKind::Frozen), 1).unwrap();
        randomize(&mut model, 2, 1.0);
        let inputs = random_inputs(3, 4, 4);
        let p = &model.params;
        let params = RanParams {
            q0: p.by_name("q0").unwrap().value.clone().into(),
            q1: p.by_name("q1").unwrap().value.clone().into(),
            classifier_w: RealMatrix::new(3, 8, p.by_name("classifier.W").unwrap().value.clone())
                .unwrap(),
            classifier_b: p.by_name("classifier.b").unwrap().value.clone().into(),
        };
        let feats: Vec<RealVector> = inputs.iter().map(|x| RealVector::new(x.clone())).collect();
        let (state, logits) = forward(&feats, &params).unwrap();
        let pred = model.predict(&inputs).unwrap();
        assert_eq!(pred.scores, logits.into_vec());
        assert_eq!(pred.attention.unwrap(), state);
    }

    #[test]
    fn zero_params_predict_bias() {
        let mut model = Model::new(config(HeadKind::Ran, BackboneKind::Frozen), 0).unwrap();
        for p in model.params.iter_mut() {
            p.value.iter_mut().for_each(|v| *v = 0.0);
        }
        let b = model.classifier().1;
        model
            .params
            .get_mut(b)
            .value
            .copy_from_slice(&[0.5, -0.5, 0.25]);
        let pred = model.predict(&random_inputs(0, 3, 4)).unwrap();
        assert_eq!(pred.scores, vec![0.5, -0.5, 0.25]);
    }

    #[test]
    fn concat_rejects_ragged_regions() {
        let model = Model::new(config(HeadKind::Concat, BackboneKind::Frozen), 0).unwrap();
        assert!(model.predict(&random_inputs(0, 3, 4)).is_err());
        assert!(model.predict(&random_inputs(0, 4, 4)).is_ok());
    }

    #[test]
    fn head_names_round_trip() {
        for h in HeadKind::ALL {
            assert_eq!(h.as_str().parse::<HeadKind>().unwrap(), h);
        }
        assert!("mlp".parse::<HeadKind>().is_err());
    }
}
