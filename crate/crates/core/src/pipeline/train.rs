use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::TrainConfig;
use super::data::{derive_seed, Dataset, PreparedSet};
use super::eval::{evaluate_prepared, Metrics};
use crate::error::{Error, Result};
use crate::numerics::{Grads, Sgd};
use crate::ran::{BackboneKind, HeadKind, Model, ModelConfig};
use crate::regions::{CropScheme, FIXED_SCALES};

/// Samples per gradient partial sum. Partial sums are added in batch order,
/// so the result does not depend on how many threads computed them.
const GRAD_CHUNK: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    /// One-based epoch number.
    pub epoch: usize,
    pub lr: f64,
    pub mean_ce: f64,
    pub mean_rb: f64,
    pub train_acc: f64,
}

pub fn epoch_log_csv(log: &[EpochLog]) -> String {
    let mut out = String::from("epoch,lr,mean_ce,mean_rb,train_acc\n");
    for e in log {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            e.epoch, e.lr, e.mean_ce, e.mean_rb, e.train_acc
        );
    }
    out
}

fn crops_per_image(cfg: &TrainConfig) -> usize {
    match cfg.crop_scheme {
        CropScheme::Random(n) => n,
        _ => FIXED_SCALES.len(),
    }
}

/// A freshly initialised model whose shapes fit `cfg` and `data`.
pub fn build_model(cfg: &TrainConfig, data: &Dataset) -> Result<Model> {
    cfg.validate()?;
    let (backbone, feature_dim, regions) = if data.uses_features() {
        let first = match &data.examples[0].source {
            super::Source::Features(f) => f,
            _ => unreachable!(),
        };
        (BackboneKind::Frozen, first[0].len(), first.len())
    } else {
        let backbone = BackboneKind::Projection {
            downsample: cfg.downsample,
            channels: data.channels().unwrap_or(1),
            hidden: cfg.hidden,
        };
        let regions = match cfg.crop_scheme {
            CropScheme::Random(n) if n != cfg.test_crops && cfg.head == HeadKind::Concat => {
                return Err(Error::InvalidArgument(
                    "concat head needs test_crops equal to the training crop count".into(),
                ))
            }
            _ => crops_per_image(cfg) + 1,
        };
        (backbone, cfg.feature_dim, regions)
    };
    Model::new(
        ModelConfig {
            head: cfg.head,
            classes: data.classes,
            feature_dim,
            backbone,
            regions,
        },
        cfg.seed,
    )
}

struct BatchStats {
    ce: f64,
    rb: f64,
    correct: usize,
    grads: Grads,
}

fn batch_gradient(
    cfg: &TrainConfig,
    model: &Model,
    set: &PreparedSet,
    batch: &[usize],
) -> Result<BatchStats> {
    let lambda = if cfg.head.has_attention() {
        cfg.lambda_rb
    } else {
        0.0
    };
    let partials = batch
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut stats = BatchStats {
                ce: 0.0,
                rb: 0.0,
                correct: 0,
                grads: model.params.grad_buffers(),
            };
            for &i in chunk {
                let l = model.loss_and_grad(
                    &set.inputs[i],
                    set.labels[i],
                    cfg.alpha,
                    lambda,
                    Some(&mut stats.grads),
                )?;
                stats.ce += l.ce;
                stats.rb += l.rb;
                stats.correct += usize::from(l.predicted == set.labels[i]);
            }
            Ok(stats)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut it = partials.into_iter();
    let mut total = it.next().expect("non-empty batch");
    for p in it {
        total.ce += p.ce;
        total.rb += p.rb;
        total.correct += p.correct;
        total.grads.add_assign(&p.grads);
    }
    Ok(total)
}

/// Trains `model` in place, calling `on_epoch` after every epoch.
///
/// Each epoch reshuffles with a generator seeded from `cfg.seed` and the
/// epoch number. The loss is averaged over the batch; momentum SGD steps
/// once per batch. If a loss or gradient goes non-finite the model keeps the
/// parameters from before the failing step and an error is returned.
pub fn train_with(
    cfg: &TrainConfig,
    model: &mut Model,
    data: &Dataset,
    mut on_epoch: impl FnMut(&EpochLog, &Model),
) -> Result<Vec<EpochLog>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    if data.classes != model.config.classes {
        return Err(Error::InvalidArgument(format!(
            "dataset has {} classes, model {}",
            data.classes, model.config.classes
        )));
    }
    let schedule = cfg.schedule();
    let mut sgd = Sgd::new(cfg.lr, cfg.momentum);
    let random = matches!(cfg.crop_scheme, CropScheme::Random(_));
    let mut fixed_set = None;
    let mut log = Vec::with_capacity(cfg.epochs);
    let n = data.len();

    for epoch in 0..cfg.epochs {
        let stream = epoch as u64 + 1;
        let fresh;
        let set = if random {
            fresh = PreparedSet::new(cfg, data, crops_per_image(cfg), stream)?;
            &fresh
        } else {
            if fixed_set.is_none() {
                fixed_set = Some(PreparedSet::new(cfg, data, crops_per_image(cfg), stream)?);
            }
            fixed_set.as_ref().expect("prepared above")
        };
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(
            cfg.seed ^ 0x5eed,
            stream,
        )));
        sgd.lr = schedule.lr_at(epoch);

        let (mut ce, mut rb, mut correct) = (0.0, 0.0, 0usize);
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let stats = batch_gradient(cfg, model, set, batch)?;
            if !(stats.ce.is_finite() && stats.rb.is_finite()) {
                return Err(Error::NonFiniteLoss {
                    epoch: epoch + 1,
                    batch: b,
                });
            }
            let snapshot: Vec<Vec<f64>> = model.params.iter().map(|p| p.value.clone()).collect();
            model.params.zero_grad();
            model
                .params
                .accumulate(&stats.grads, 1.0 / batch.len() as f64);
            sgd.step(&mut model.params)?;
            if model
                .params
                .iter()
                .any(|p| p.value.iter().any(|v| !v.is_finite()))
            {
                for (p, v) in model.params.iter_mut().zip(snapshot) {
                    p.value = v;
                }
                return Err(Error::NonFiniteLoss {
                    epoch: epoch + 1,
                    batch: b,
                });
            }
            ce += stats.ce;
            rb += stats.rb;
            correct += stats.correct;
        }
        model.params.zero_grad();
        let entry = EpochLog {
            epoch: epoch + 1,
            lr: sgd.lr,
            mean_ce: ce / n as f64,
            mean_rb: rb / n as f64,
            train_acc: correct as f64 / n as f64,
        };
        on_epoch(&entry, model);
        log.push(entry);
    }
    Ok(log)
}

pub fn train(cfg: &TrainConfig, model: &mut Model, data: &Dataset) -> Result<Vec<EpochLog>> {
    train_with(cfg, model, data, |_, _| {})
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub model: Model,
    pub log: Vec<EpochLog>,
    pub metrics: Metrics,
}

/// Builds, trains and evaluates one model.
pub fn train_and_evaluate(
    cfg: &TrainConfig,
    train_set: &Dataset,
    test_set: &Dataset,
) -> Result<RunResult> {
    let mut model = build_model(cfg, train_set)?;
    let log = train(cfg, &mut model, train_set)?;
    let metrics = evaluate_prepared(
        &model,
        &PreparedSet::for_eval(cfg, test_set)?,
        test_set.classes,
    )?;
    Ok(RunResult {
        model,
        log,
        metrics,
    })
}
