//! Predictive-uncertainty strategies: single-pass weight-scaled inference,
//! Monte-Carlo sampling of the dropout network (with moment matching or as
//! plain sample statistics) and ensembles of independently trained networks.

mod bench;
mod mixture;
mod prediction;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{
    forward_infer_scaled, forward_train, head_to_prediction, HeadKind, Model, NetworkParams,
    NetworkSpec,
};
use crate::numerics::{Matrix, RngStream, Vector};

pub use bench::{bench_inference, LatencyReport};
pub use mixture::{aggregate, average_probs, moment_match};
pub use prediction::Prediction;

/// Inference strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum MethodSpec {
    /// One weight-scaled pass of a distribution-head dropout network.
    RDeepSense,
    /// `k` stochastic passes of the same network, moment matched.
    RDeepSenseMc(usize),
    /// `k` stochastic passes of a point-head network trained on squared error.
    McDrop(usize),
    /// Uniform mixture of `k` dropout-free networks.
    Ssp(usize),
}

impl MethodSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            MethodSpec::RDeepSenseMc(k) | MethodSpec::McDrop(k) if k < 2 => Err(Error::invalid(
                "method",
                format!("{self} needs k >= 2 (one stochastic pass has no sample variance)"),
            )),
            MethodSpec::Ssp(0) => Err(Error::invalid("method", "ssp needs k >= 1")),
            _ => Ok(()),
        }
    }

    /// Forward passes spent per prediction.
    pub fn passes(&self) -> usize {
        match *self {
            MethodSpec::RDeepSense => 1,
            MethodSpec::RDeepSenseMc(k) | MethodSpec::McDrop(k) | MethodSpec::Ssp(k) => k,
        }
    }

    /// Models the method consumes.
    pub fn models_needed(&self) -> usize {
        match *self {
            MethodSpec::Ssp(k) => k,
            _ => 1,
        }
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MethodSpec::RDeepSense => write!(f, "rdeepsense"),
            MethodSpec::RDeepSenseMc(k) => write!(f, "rdeepsense-mc{k}"),
            MethodSpec::McDrop(k) => write!(f, "mcdrop-{k}"),
            MethodSpec::Ssp(k) => write!(f, "ssp-{k}"),
        }
    }
}

impl FromStr for MethodSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let parse_k = |digits: &str| {
            digits
                .parse::<usize>()
                .map_err(|_| Error::invalid("method", format!("bad sample count in {s:?}")))
        };
        let m = if lower == "rdeepsense" {
            MethodSpec::RDeepSense
        } else if let Some(k) = lower.strip_prefix("rdeepsense-mc") {
            MethodSpec::RDeepSenseMc(parse_k(k)?)
        } else if let Some(k) = lower.strip_prefix("mcdrop-") {
            MethodSpec::McDrop(parse_k(k)?)
        } else if let Some(k) = lower.strip_prefix("ssp-") {
            MethodSpec::Ssp(parse_k(k)?)
        } else {
            return Err(Error::invalid(
                "method",
                format!("unknown method {s:?} (rdeepsense, rdeepsense-mcK, mcdrop-K, ssp-K)"),
            ));
        };
        m.validate()?;
        Ok(m)
    }
}

impl TryFrom<String> for MethodSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<MethodSpec> for String {
    fn from(m: MethodSpec) -> String {
        m.to_string()
    }
}

/// Single weight-scaled pass mapped through the head.
pub fn predict_rdeepsense(spec: &NetworkSpec, params: &NetworkParams, x: &[f64]) -> Result<Prediction> {
    let head = forward_infer_scaled(spec, params, x)?;
    head_to_prediction(spec, &head)
}

/// Stochastic head samples; sample `m` draws its masks from `rng.split(m)`.
fn sample_heads(
    spec: &NetworkSpec,
    params: &NetworkParams,
    x: &[f64],
    k: usize,
    rng: &RngStream,
) -> Result<Vec<Vector>> {
    (0..k as u64)
        .map(|m| {
            let mut stream = rng.split(m);
            Ok(forward_train(spec, params, x, &mut stream)?.pre_activations.pop().expect("non-empty"))
        })
        .collect()
}

/// `k` stochastic passes; Gaussian heads are moment matched, softmax heads averaged.
pub fn predict_mc_rdeepsense(
    spec: &NetworkSpec,
    params: &NetworkParams,
    x: &[f64],
    k: usize,
    rng: &RngStream,
) -> Result<Prediction> {
    MethodSpec::RDeepSenseMc(k).validate()?;
    let preds = sample_heads(spec, params, x, k, rng)?
        .iter()
        .map(|h| head_to_prediction(spec, h))
        .collect::<Result<Vec<_>>>()?;
    aggregate(preds)
}

/// `k` stochastic passes summarized by their sample mean and unbiased sample
/// variance (plus the variance floor); classification averages probabilities.
pub fn predict_mcdrop(
    spec: &NetworkSpec,
    params: &NetworkParams,
    x: &[f64],
    k: usize,
    rng: &RngStream,
) -> Result<Prediction> {
    MethodSpec::McDrop(k).validate()?;
    let heads = sample_heads(spec, params, x, k, rng)?;
    let points: Vec<Vector> = match spec.head {
        HeadKind::Point => heads,
        HeadKind::Gaussian => heads
            .iter()
            .map(|h| h.chunks_exact(2).map(|c| c[0]).collect())
            .collect(),
        HeadKind::Softmax => {
            let preds = heads
                .iter()
                .map(|h| head_to_prediction(spec, h))
                .collect::<Result<Vec<_>>>()?;
            return aggregate(preds);
        }
    };
    Ok(sample_moments(&points, spec.variance_floor))
}

fn sample_moments(points: &[Vector], floor: f64) -> Prediction {
    let k = points.len() as f64;
    let dims = points[0].len();
    let mean: Vector = (0..dims)
        .map(|d| points.iter().map(|p| p[d]).sum::<f64>() / k)
        .collect();
    let variance = (0..dims)
        .map(|d| points.iter().map(|p| (p[d] - mean[d]).powi(2)).sum::<f64>() / (k - 1.0) + floor)
        .collect();
    Prediction::Gaussian { mean, variance }
}

/// Uniform mixture of dropout-free member networks.
pub fn predict_ensemble(models: &[Model], x: &[f64]) -> Result<Prediction> {
    check_ensemble(models)?;
    let preds = models
        .iter()
        .map(|m| predict_rdeepsense(&m.spec, &m.params, x))
        .collect::<Result<Vec<_>>>()?;
    aggregate(preds)
}

pub fn check_ensemble(models: &[Model]) -> Result<()> {
    let first = models
        .first()
        .ok_or_else(|| Error::invalid("ensemble", "at least one model is required"))?;
    for (i, m) in models.iter().enumerate() {
        if m.spec != first.spec {
            return Err(Error::invalid("ensemble", format!("member {i} has a different spec")));
        }
        if !m.spec.dropout_free() {
            return Err(Error::invalid(
                "ensemble",
                format!("member {i} has dropout enabled; ensemble members use retain 1"),
            ));
        }
    }
    Ok(())
}

/// Dispatches one prediction. `models` holds the single network for the
/// dropout methods, or the ensemble members (first `k` used) for `ssp-k`.
pub fn predict(method: MethodSpec, models: &[Model], x: &[f64], rng: &RngStream) -> Result<Prediction> {
    method.validate()?;
    if models.len() < method.models_needed() {
        return Err(Error::invalid(
            "models",
            format!("{method} needs {} models, got {}", method.models_needed(), models.len()),
        ));
    }
    let m = &models[0];
    match method {
        MethodSpec::RDeepSense => predict_rdeepsense(&m.spec, &m.params, x),
        MethodSpec::RDeepSenseMc(k) => predict_mc_rdeepsense(&m.spec, &m.params, x, k, rng),
        MethodSpec::McDrop(k) => predict_mcdrop(&m.spec, &m.params, x, k, rng),
        MethodSpec::Ssp(k) => predict_ensemble(&models[..k], x),
    }
}

/// Predictions for every row of `inputs`. Row `i` uses `rng.split(i)`, so the
/// result does not depend on how rows are scheduled across threads.
pub fn predict_rows(
    method: MethodSpec,
    models: &[Model],
    inputs: &Matrix,
    rng: &RngStream,
) -> Result<Vec<Prediction>> {
    (0..inputs.rows())
        .into_par_iter()
        .map(|i| predict(method, models, inputs.row(i), &rng.split(i as u64)))
        .collect()
}
