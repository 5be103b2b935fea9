//! Minibatch training with per-sample dropout masks, plus the α sweep.

mod optimizer;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{CalibrationReport, ZGrid};
use crate::data::{Dataset, Targets};
use crate::error::{Error, Result};
use crate::evaluate::evaluate_method;
use crate::inference::MethodSpec;
use crate::losses::{head_loss, loss_gradient_at_head, LossSpec, LossValue, Target};
use crate::network::{backward, forward_infer_scaled, forward_train, Model, NetworkParams, NetworkSpec, Task};
use crate::numerics::RngStream;

pub use optimizer::{Optimizer, OptimizerState};

pub const DEFAULT_CLIP_NORM: f64 = 10.0;

/// The α grid swept by default.
pub const DEFAULT_ALPHAS: [f64; 6] = [0.0, 0.2, 0.4, 0.6, 0.8, 0.9];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: Optimizer,
    pub seed: u64,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub early_stop_patience: usize,
    pub shuffle: bool,
    /// Global gradient-norm clip; `None` disables.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 64,
            optimizer: Optimizer::default(),
            seed: 0,
            early_stop_patience: 0,
            shuffle: true,
            clip_norm: Some(DEFAULT_CLIP_NORM),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be at least 1"));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::invalid("clip_norm", "must be > 0"));
            }
        }
        self.optimizer.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Sample-weighted mean of the per-batch training losses.
    pub train: LossValue,
    /// Validation loss under single-pass scaled inference.
    pub val: LossValue,
    pub clipped_batches: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were returned.
    pub selected_epoch: usize,
    pub final_epoch: usize,
    pub clip_norm: Option<f64>,
    /// Wall-clock time; not part of reproducible payloads.
    #[serde(skip)]
    pub wall_clock_seconds: f64,
}

fn check_data(spec: &NetworkSpec, loss: &LossSpec, data: &Dataset, name: &str) -> Result<()> {
    if data.is_empty() {
        return Err(Error::invalid(name, "dataset is empty"));
    }
    if data.input_dim() != spec.input_dim() {
        return Err(Error::shape(
            "dataset inputs",
            format!("{name} has {} features", data.input_dim()),
            format!("network expects {}", spec.input_dim()),
        ));
    }
    let task_ok = match (&data.targets, loss.task) {
        (Targets::Values(y), Task::Regression) => y.cols() == spec.outputs,
        (Targets::Classes { num_classes, .. }, Task::Classification) => *num_classes == spec.outputs,
        _ => false,
    };
    if !task_ok {
        return Err(Error::invalid(
            name,
            format!("targets do not match a {:?} network with {} outputs", loss.task, spec.outputs),
        ));
    }
    Ok(())
}

fn target(data: &Dataset, i: usize) -> Target<'_> {
    match &data.targets {
        Targets::Values(y) => Target::Values(y.row(i)),
        Targets::Classes { labels, .. } => Target::Class(labels[i]),
    }
}

fn accumulate(acc: &mut LossValue, v: &LossValue, weight: f64) {
    acc.total += weight * v.total;
    acc.nll += weight * v.nll;
    acc.error += weight * v.error;
    acc.reg += weight * v.reg;
    acc.clamped += v.clamped;
}

/// Mean data loss plus penalty under single-pass scaled inference.
pub fn dataset_loss(spec: &NetworkSpec, params: &NetworkParams, loss: &LossSpec, data: &Dataset) -> Result<LossValue> {
    let mut acc = LossValue::default();
    let w = 1.0 / data.len() as f64;
    for i in 0..data.len() {
        let head = forward_infer_scaled(spec, params, data.inputs.row(i))?;
        accumulate(&mut acc, &head_loss(spec, &head, target(data, i), loss)?, w);
    }
    let reg = loss.reg_coefficient() * params.weight_sq_norm();
    acc.reg = reg;
    acc.total += reg;
    Ok(acc)
}

/// Trains from a fresh initialization. Deterministic in `config.seed` and
/// the data order; masks are resampled for every sample in every epoch.
pub fn train(
    spec: &NetworkSpec,
    loss: &LossSpec,
    train_data: &Dataset,
    val_data: &Dataset,
    config: &TrainConfig,
) -> Result<(NetworkParams, TrainReport)> {
    spec.validate()?;
    loss.check_head(spec)?;
    config.validate()?;
    check_data(spec, loss, train_data, "training data")?;
    check_data(spec, loss, val_data, "validation data")?;

    let started = Instant::now();
    let root = RngStream::new(config.seed, 0x7EA1_0000);
    let mut params = NetworkParams::init(spec, &mut root.split(0))?;
    let mut order_rng = root.split(1);
    let mask_root = root.split(2);
    let mut opt = OptimizerState::new(config.optimizer, &params);
    let reg_coef = loss.reg_coefficient();

    let n = train_data.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut records = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, NetworkParams)> = None;
    let mut since_best = 0;

    for epoch in 0..config.epochs {
        if config.shuffle {
            order_rng.shuffle(&mut order);
        }
        let epoch_masks = mask_root.split(epoch as u64);
        let mut epoch_loss = LossValue::default();
        let mut clipped = 0;
        for (batch_idx, batch) in order.chunks(config.batch_size).enumerate() {
            let mut grads = NetworkParams::zeros(spec);
            let mut batch_loss = LossValue::default();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let mut rng = epoch_masks.split(i as u64);
                let trace = forward_train(spec, &params, train_data.inputs.row(i), &mut rng)?;
                if !trace.head().iter().all(|v| v.is_finite()) {
                    return Err(Error::NonFiniteLoss {
                        epoch,
                        batch: batch_idx,
                    });
                }
                let y = target(train_data, i);
                accumulate(&mut batch_loss, &head_loss(spec, trace.head(), y, loss)?, scale);
                let g_head = loss_gradient_at_head(spec, trace.head(), y, loss)?;
                grads.add_scaled(&backward(spec, &params, &trace, &g_head)?, scale);
            }
            let reg = reg_coef * params.weight_sq_norm();
            batch_loss.reg = reg;
            batch_loss.total += reg;
            if !batch_loss.total.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                });
            }
            if reg_coef > 0.0 {
                for (g, w) in grads.weights.iter_mut().zip(&params.weights) {
                    for (gv, wv) in g.as_mut_slice().iter_mut().zip(w.as_slice()) {
                        *gv += 2.0 * reg_coef * wv;
                    }
                }
            }
            if let Some(limit) = config.clip_norm {
                let norm = grads.global_norm();
                if norm > limit {
                    grads.scale(limit / norm);
                    clipped += 1;
                }
            }
            opt.step(&mut params, &grads);
            if !params.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                });
            }
            accumulate(&mut epoch_loss, &batch_loss, batch.len() as f64 / n as f64);
        }
        let val = dataset_loss(spec, &params, loss, val_data)?;
        records.push(EpochRecord {
            epoch,
            train: epoch_loss,
            val,
            clipped_batches: clipped,
        });

        if config.early_stop_patience > 0 {
            let improved = best.as_ref().map_or(true, |(b, _, _)| val.total < *b);
            if improved {
                best = Some((val.total, epoch, params.clone()));
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= config.early_stop_patience {
                    break;
                }
            }
        }
    }

    let final_epoch = records.last().map_or(0, |r| r.epoch);
    let (params, selected_epoch) = match best {
        Some((_, e, p)) => (p, e),
        None => (params, final_epoch),
    };
    Ok((
        params,
        TrainReport {
            epochs: records,
            selected_epoch,
            final_epoch,
            clip_norm: config.clip_norm,
            wall_clock_seconds: started.elapsed().as_secs_f64(),
        },
    ))
}

/// Seed used for the model trained at `alpha` in a sweep.
pub fn alpha_seed(base: u64, alpha: f64) -> u64 {
    RngStream::new(base, alpha.to_bits()).next_u64()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlphaResult {
    pub alpha: f64,
    pub seed: u64,
    /// Validation report, or the training error message.
    pub outcome: std::result::Result<AlphaOutcome, String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlphaOutcome {
    pub report: CalibrationReport,
    pub train: TrainReport,
    #[serde(skip)]
    pub params: Option<NetworkParams>,
}

impl AlphaResult {
    /// Validation score to minimize: deviation area for regression, NLL for
    /// classification.
    pub fn score(&self) -> Option<f64> {
        let out = self.outcome.as_ref().ok()?;
        out.report
            .deviation_area
            .or_else(|| out.report.classification.map(|c| c.nll))
    }
}

/// Trains and evaluates one single-pass model per α on the validation split.
/// A failure at one α is recorded without aborting the others.
pub fn sweep_alpha(
    spec: &NetworkSpec,
    loss: &LossSpec,
    train_data: &Dataset,
    val_data: &Dataset,
    alphas: &[f64],
    config: &TrainConfig,
    grid: &ZGrid,
) -> Result<Vec<AlphaResult>> {
    if alphas.is_empty() {
        return Err(Error::invalid("alphas", "empty"));
    }
    if let Some(a) = alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(Error::invalid("alphas", format!("{a} is not in [0, 1]")));
    }
    Ok(alphas
        .par_iter()
        .map(|&alpha| {
            let seed = alpha_seed(config.seed, alpha);
            let cfg = TrainConfig {
                seed,
                ..config.clone()
            };
            let run = || -> Result<AlphaOutcome> {
                let (params, train) = train(spec, &loss.with_alpha(alpha), train_data, val_data, &cfg)?;
                let model = Model::new(spec.clone(), params)?;
                let report = evaluate_method(
                    MethodSpec::RDeepSense,
                    std::slice::from_ref(&model),
                    val_data,
                    grid,
                    &RngStream::new(seed, 1),
                )?;
                Ok(AlphaOutcome {
                    report,
                    train,
                    params: Some(model.params),
                })
            };
            AlphaResult {
                alpha,
                seed,
                outcome: run().map_err(|e| format!("{}: {e}", e.category())),
            }
        })
        .collect())
}

/// Entry with the lowest validation score; ties keep the earlier α.
pub fn select_alpha(results: &[AlphaResult]) -> Option<&AlphaResult> {
    results
        .iter()
        .filter_map(|r| r.score().map(|s| (s, r)))
        .fold(None, |best: Option<(f64, &AlphaResult)>, (s, r)| match best {
            Some((b, _)) if b <= s => best,
            _ => Some((s, r)),
        })
        .map(|(_, r)| r)
}
