use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{predict, MethodSpec};
use crate::network::{forward_pass_count, Model};
use crate::numerics::{Matrix, RngStream};

/// Per-sample inference latency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub method: MethodSpec,
    pub median_seconds: f64,
    pub p95_seconds: f64,
    /// Hardware-independent cost: network passes per prediction.
    pub passes_per_prediction: f64,
    pub warmup_runs: usize,
    pub timed_predictions: usize,
}

/// Times single-sample predictions over `repetitions` sweeps of `inputs`
/// after `warmup` untimed sweeps. Only the prediction call is inside the
/// timed region.
pub fn bench_inference(
    method: MethodSpec,
    models: &[Model],
    inputs: &Matrix,
    repetitions: usize,
    warmup: usize,
    rng: &RngStream,
) -> Result<LatencyReport> {
    if repetitions == 0 {
        return Err(Error::invalid("repetitions", "must be at least 1"));
    }
    if inputs.rows() == 0 {
        return Err(Error::invalid("bench dataset", "no rows"));
    }
    for w in 0..warmup {
        for i in 0..inputs.rows() {
            let stream = rng.split((w * inputs.rows() + i) as u64);
            std::hint::black_box(predict(method, models, inputs.row(i), &stream)?);
        }
    }

    let mut times = Vec::with_capacity(repetitions * inputs.rows());
    let passes_before = forward_pass_count();
    for r in 0..repetitions {
        for i in 0..inputs.rows() {
            let stream = rng.split(((warmup + r) * inputs.rows() + i) as u64);
            let row = inputs.row(i);
            let start = Instant::now();
            let pred = predict(method, models, row, &stream)?;
            times.push(start.elapsed().as_secs_f64());
            std::hint::black_box(pred);
        }
    }
    let passes = forward_pass_count() - passes_before;

    times.sort_by(f64::total_cmp);
    Ok(LatencyReport {
        method,
        median_seconds: percentile(&times, 0.5),
        p95_seconds: percentile(&times, 0.95),
        passes_per_prediction: passes as f64 / times.len() as f64,
        warmup_runs: warmup,
        timed_predictions: times.len(),
    })
}

/// Nearest-rank percentile of sorted data.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = (q * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank() {
        let v: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(percentile(&v, 0.5), 10.0);
        assert_eq!(percentile(&v, 0.95), 19.0);
        assert_eq!(percentile(&[3.0], 0.95), 3.0);
    }
}
