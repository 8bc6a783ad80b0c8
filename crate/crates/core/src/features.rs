//! The backbone `r(.; theta)`: maps a resized region to a feature vector.
//!
//! Two realisations share one contract. [`FeatureStore`] looks up frozen,
//! precomputed features. [`ProjectionBackbone`] is a small trainable map
//! (area downsample, affine, ReLU, affine) whose single parameter set is
//! shared by every region of every sample.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{
    affine_backward, affine_into, Grads, ParamId, ParamSet, ParamShape, Parameter, RealVector,
};
use crate::regions::{area_downsample, FaceImage};

pub const DEFAULT_FEATURE_DIM: usize = 64;
pub const DEFAULT_DOWNSAMPLE: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: RealVector,
    pub source_region: usize,
}

/// Frozen features keyed by `(sample id, region index)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStore {
    dim: usize,
    table: BTreeMap<(String, usize), RealVector>,
}

impl FeatureStore {
    pub fn new(dim: usize) -> Self {
        FeatureStore {
            dim,
            table: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn insert(&mut self, sample: &str, region: usize, values: RealVector) -> Result<()> {
        if values.dim() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                actual: values.dim(),
                context: "feature store entry",
            });
        }
        self.table.insert((sample.to_string(), region), values);
        Ok(())
    }

    pub fn extract(&self, sample: &str, region: usize) -> Result<FeatureVector> {
        self.table
            .get(&(sample.to_string(), region))
            .map(|v| FeatureVector {
                values: v.clone(),
                source_region: region,
            })
            .ok_or_else(|| Error::MissingFeature {
                sample: sample.to_string(),
                region,
            })
    }

    /// All regions stored for `sample`, in region order.
    pub fn regions_of(&self, sample: &str) -> Vec<(usize, &RealVector)> {
        self.table
            .range((sample.to_string(), 0)..=(sample.to_string(), usize::MAX))
            .map(|((_, r), v)| (*r, v))
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("dim={}\n", self.dim);
        for ((sample, region), v) in &self.table {
            let _ = write!(out, "{sample},{region}");
            for x in v.as_slice() {
                let _ = write!(out, ",{x}");
            }
            out.push('\n');
        }
        out
    }

    /// Parses `dim=<d>` followed by `sample_id,region_index,v0,...,v{d-1}` rows.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::parse(1, "missing `dim=<d>` header"))?;
        let dim = header
            .trim()
            .strip_prefix("dim=")
            .and_then(|d| d.parse::<usize>().ok())
            .filter(|&d| d > 0)
            .ok_or_else(|| Error::parse(1, format!("bad header `{header}`")))?;
        let mut store = FeatureStore::new(dim);
        for (i, line) in lines {
            let line_no = i + 1;
            let mut fields = line.trim().split(',');
            let sample = fields
                .next()
                .filter(|s| !s.is_empty())
                .ok_or_else(|| Error::parse(line_no, "missing sample id"))?;
            let region = fields
                .next()
                .and_then(|r| r.trim().parse::<usize>().ok())
                .ok_or_else(|| Error::parse(line_no, "bad region index"))?;
            let values = fields
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .ok_or_else(|| Error::parse(line_no, format!("bad value `{v}`")))
                })
                .collect::<Result<Vec<_>>>()?;
            if values.len() != dim {
                return Err(Error::FeatureDimension {
                    line: line_no,
                    expected: dim,
                    actual: values.len(),
                });
            }
            let key = (sample.to_string(), region);
            if store.table.contains_key(&key) {
                return Err(Error::DuplicateFeature {
                    sample: sample.to_string(),
                    region,
                    line: line_no,
                });
            }
            store.table.insert(key, RealVector::new(values));
        }
        Ok(store)
    }
}

pub fn load_feature_store(path: &Path) -> Result<FeatureStore> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    FeatureStore::parse(&text)
}

pub fn write_feature_store(path: &Path, store: &FeatureStore) -> Result<()> {
    std::fs::write(path, store.to_text()).map_err(|e| Error::io(path, e))
}

/// Shape of the trainable projection backbone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProjectionConfig {
    pub downsample: usize,
    pub channels: usize,
    pub hidden: usize,
    pub out_dim: usize,
}

impl ProjectionConfig {
    pub fn in_dim(&self) -> usize {
        self.downsample * self.downsample * self.channels
    }
}

/// Two-layer map shared by all regions. Parameters live in the model's
/// [`ParamSet`] under `backbone.W1`, `backbone.b1`, `backbone.W2`, `backbone.b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionBackbone {
    pub config: ProjectionConfig,
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

/// Forward intermediates kept for the backward pass.
#[derive(Debug, Clone)]
pub struct BackboneCache {
    pub hidden: Vec<f64>,
    pub output: Vec<f64>,
}

fn uniform_init<R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize, n: usize) -> Vec<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..n).map(|_| rng.gen_range(-limit..limit)).collect()
}

impl ProjectionBackbone {
    /// Registers Glorot-uniform weights and zero biases.
    pub fn register<R: Rng>(
        params: &mut ParamSet,
        config: ProjectionConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let (i, h, d) = (config.in_dim(), config.hidden, config.out_dim);
        let w1 = params.push(Parameter::new(
            "backbone.W1",
            ParamShape::Matrix(h, i),
            uniform_init(rng, i, h, h * i),
        )?)?;
        let b1 = params.push(Parameter::zeros("backbone.b1", ParamShape::Vector(h)))?;
        let w2 = params.push(Parameter::new(
            "backbone.W2",
            ParamShape::Matrix(d, h),
            uniform_init(rng, h, d, d * h),
        )?)?;
        let b2 = params.push(Parameter::zeros("backbone.b2", ParamShape::Vector(d)))?;
        Ok(ProjectionBackbone {
            config,
            w1,
            b1,
            w2,
            b2,
        })
    }

    /// Looks up an already registered backbone (e.g. after loading a checkpoint).
    pub fn bind(params: &ParamSet, downsample: usize, channels: usize) -> Result<Self> {
        let id = |n: &str| {
            params
                .find(n)
                .ok_or_else(|| Error::Checkpoint(format!("missing `{n}`")))
        };
        let (w1, b1, w2, b2) = (
            id("backbone.W1")?,
            id("backbone.b1")?,
            id("backbone.W2")?,
            id("backbone.b2")?,
        );
        let (hidden, in_dim) = match params.get(w1).shape {
            ParamShape::Matrix(r, c) => (r, c),
            _ => return Err(Error::Checkpoint("backbone.W1 is not a matrix".into())),
        };
        let out_dim = params.get(b2).shape.len();
        let config = ProjectionConfig {
            downsample,
            channels,
            hidden,
            out_dim,
        };
        if config.in_dim() != in_dim {
            return Err(Error::Dimension {
                expected: config.in_dim(),
                actual: in_dim,
                context: "backbone input",
            });
        }
        Ok(ProjectionBackbone {
            config,
            w1,
            b1,
            w2,
            b2,
        })
    }

    /// The fixed, non-trainable part: area downsampling and flattening.
    pub fn prepare(&self, crop: &FaceImage) -> Result<Vec<f64>> {
        if crop.channels() != self.config.channels {
            return Err(Error::Dimension {
                expected: self.config.channels,
                actual: crop.channels(),
                context: "backbone channels",
            });
        }
        Ok(area_downsample(
            crop,
            self.config.downsample,
            self.config.downsample,
        ))
    }

    pub fn forward(&self, params: &ParamSet, input: &[f64]) -> Result<BackboneCache> {
        if input.len() != self.config.in_dim() {
            return Err(Error::Dimension {
                expected: self.config.in_dim(),
                actual: input.len(),
                context: "backbone input",
            });
        }
        let mut hidden = vec![0.0; self.config.hidden];
        affine_into(
            input,
            params.value(self.w1),
            params.value(self.b1),
            &mut hidden,
        );
        hidden.iter_mut().for_each(|h| *h = h.max(0.0));
        let mut output = vec![0.0; self.config.out_dim];
        affine_into(
            &hidden,
            params.value(self.w2),
            params.value(self.b2),
            &mut output,
        );
        Ok(BackboneCache { hidden, output })
    }

    /// Accumulates parameter gradients given `grad_out = dL/dF`.
    pub fn backward(
        &self,
        params: &ParamSet,
        input: &[f64],
        cache: &BackboneCache,
        grad_out: &[f64],
        grads: &mut Grads,
    ) {
        let mut grad_hidden = vec![0.0; self.config.hidden];
        {
            let (gw2, gb2) = grads.pair_mut(self.w2, self.b2);
            affine_backward(
                &cache.hidden,
                params.value(self.w2),
                grad_out,
                &mut grad_hidden,
                gw2,
                gb2,
            );
        }
        for (g, &h) in grad_hidden.iter_mut().zip(&cache.hidden) {
            if h <= 0.0 {
                *g = 0.0;
            }
        }
        let (gw1, gb1) = grads.pair_mut(self.w1, self.b1);
        affine_backward(
            input,
            params.value(self.w1),
            &grad_hidden,
            &mut [],
            gw1,
            gb1,
        );
    }

    pub fn extract(
        &self,
        params: &ParamSet,
        crop: &FaceImage,
        region: usize,
    ) -> Result<FeatureVector> {
        let input = self.prepare(crop)?;
        let cache = self.forward(params, &input)?;
        Ok(FeatureVector {
            values: RealVector::new(cache.output),
            source_region: region,
        })
    }
}
