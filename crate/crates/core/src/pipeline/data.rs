use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::TrainConfig;
use crate::datasets::{ManifestRecord, SyntheticSample};
use crate::error::{Error, Result};
use crate::features::FeatureStore;
use crate::regions::{
    area_downsample, build_crop_set, fixed_crops_scaled, landmark_crops, load_pnm, random_crops,
    CropScheme, FaceImage, Landmark, RegionSpec,
};

#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Image {
        image: FaceImage,
        landmarks: Option<Vec<Landmark>>,
    },
    /// Precomputed region features `F_0..F_k` (frozen backbone).
    Features(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: String,
    pub label: usize,
    pub source: Source,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub classes: usize,
    pub examples: Vec<Example>,
}

impl Dataset {
    pub fn new(classes: usize, examples: Vec<Example>) -> Result<Self> {
        if classes < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 classes, got {classes}"
            )));
        }
        if let Some(e) = examples.iter().find(|e| e.label >= classes) {
            return Err(Error::LabelOutOfRange {
                label: e.label,
                classes,
            });
        }
        Ok(Dataset { classes, examples })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn from_synthetic(samples: &[SyntheticSample], classes: usize) -> Result<Self> {
        let size = samples.first().map_or(0, |s| s.image.width());
        let landmarks = crate::datasets::canonical_landmarks(size);
        Dataset::new(
            classes,
            samples
                .iter()
                .map(|s| Example {
                    id: s.id.clone(),
                    label: s.label,
                    source: Source::Image {
                        image: s.image.clone(),
                        landmarks: Some(landmarks.clone()),
                    },
                })
                .collect(),
        )
    }

    /// Loads each record's PGM/PPM; relative paths resolve against `base`.
    pub fn from_manifest(records: &[ManifestRecord], base: &Path, classes: usize) -> Result<Self> {
        let examples = records
            .par_iter()
            .map(|r| {
                let path = base.join(&r.image_path);
                Ok(Example {
                    id: r.sample_id.clone(),
                    label: r.label,
                    source: Source::Image {
                        image: load_pnm(&path)?,
                        landmarks: r.landmarks.clone(),
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(classes, examples)
    }

    /// Uses stored region features for each record instead of images.
    pub fn from_features(
        records: &[ManifestRecord],
        store: &FeatureStore,
        classes: usize,
    ) -> Result<Self> {
        let mut examples = Vec::with_capacity(records.len());
        for r in records {
            let regions = store.regions_of(&r.sample_id);
            if regions.is_empty() {
                return Err(Error::MissingFeature {
                    sample: r.sample_id.clone(),
                    region: 0,
                });
            }
            for (expect, (got, _)) in regions.iter().enumerate() {
                if *got != expect {
                    return Err(Error::MissingFeature {
                        sample: r.sample_id.clone(),
                        region: expect,
                    });
                }
            }
            examples.push(Example {
                id: r.sample_id.clone(),
                label: r.label,
                source: Source::Features(
                    regions
                        .into_iter()
                        .map(|(_, v)| v.as_slice().to_vec())
                        .collect(),
                ),
            });
        }
        Dataset::new(classes, examples)
    }

    /// Keeps the examples whose ids appear in `ids`, in dataset order.
    pub fn filter_ids<'a>(&self, ids: impl IntoIterator<Item = &'a str>) -> Dataset {
        let keep: std::collections::HashSet<&str> = ids.into_iter().collect();
        Dataset {
            classes: self.classes,
            examples: self
                .examples
                .iter()
                .filter(|e| keep.contains(e.id.as_str()))
                .cloned()
                .collect(),
        }
    }

    pub fn channels(&self) -> Option<usize> {
        self.examples.iter().find_map(|e| match &e.source {
            Source::Image { image, .. } => Some(image.channels()),
            Source::Features(_) => None,
        })
    }

    pub fn uses_features(&self) -> bool {
        matches!(
            self.examples.first().map(|e| &e.source),
            Some(Source::Features(_))
        )
    }
}

/// Independent 64-bit seed for stream `stream` of generator `base`.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(stream);
    rng.next_u64()
}

/// Stream ids used for random crops. Training epochs use `epoch + 1`, so
/// stream 0 is reserved for evaluation.
pub(crate) const EVAL_STREAM: u64 = 0;

/// Crop rectangles for one image under the configured scheme.
pub(crate) fn region_specs(
    cfg: &TrainConfig,
    image: &FaceImage,
    landmarks: Option<&[Landmark]>,
    crops: usize,
    seed: u64,
) -> Result<Vec<RegionSpec>> {
    let (w, h) = (image.width(), image.height());
    match cfg.crop_scheme {
        CropScheme::Fixed => fixed_crops_scaled(w, h, cfg.region_scale_ratio),
        CropScheme::Random(_) => Ok(random_crops(w, h, crops, seed)),
        CropScheme::Landmark => match landmarks {
            Some(l) if !l.is_empty() => match landmark_crops(w, h, l, cfg.landmark_radius) {
                Err(Error::NoRegions) => fixed_crops_scaled(w, h, cfg.region_scale_ratio),
                other => other,
            },
            _ => fixed_crops_scaled(w, h, cfg.region_scale_ratio),
        },
    }
}

/// Backbone inputs of every region, duplicate first.
pub(crate) fn example_inputs(
    cfg: &TrainConfig,
    example: &Example,
    crops: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    match &example.source {
        Source::Features(f) => Ok(f.clone()),
        Source::Image { image, landmarks } => {
            let specs = region_specs(cfg, image, landmarks.as_deref(), crops, seed)?;
            let set = build_crop_set(image, &specs, cfg.input_size)?;
            Ok(set
                .regions()
                .map(|r| area_downsample(r, cfg.downsample, cfg.downsample))
                .collect())
        }
    }
}

/// Region inputs for every example, ready for the model.
#[derive(Debug, Clone)]
pub struct PreparedSet {
    pub ids: Vec<String>,
    pub labels: Vec<usize>,
    pub inputs: Vec<Vec<Vec<f64>>>,
}

impl PreparedSet {
    /// `stream` selects the random-crop draw; it is ignored by deterministic schemes.
    pub fn new(cfg: &TrainConfig, data: &Dataset, crops: usize, stream: u64) -> Result<Self> {
        let epoch_seed = derive_seed(cfg.seed, stream);
        let inputs = data
            .examples
            .par_iter()
            .enumerate()
            .map(|(i, e)| example_inputs(cfg, e, crops, derive_seed(epoch_seed, i as u64)))
            .collect::<Result<Vec<_>>>()?;
        Ok(PreparedSet {
            ids: data.examples.iter().map(|e| e.id.clone()).collect(),
            labels: data.examples.iter().map(|e| e.label).collect(),
            inputs,
        })
    }

    /// Evaluation-time inputs (`test_crops` crops for the random scheme).
    pub fn for_eval(cfg: &TrainConfig, data: &Dataset) -> Result<Self> {
        PreparedSet::new(cfg, data, cfg.test_crops, EVAL_STREAM)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}
