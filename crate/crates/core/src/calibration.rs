//! Calibration curves, deviation area and scalar quality metrics.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::Prediction;
use crate::numerics::{standard_normal_quantile, Matrix};

/// Confidence levels at which calibration is measured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ZGrid(Vec<f64>);

/// 10%..80% in steps of 10, then 85, 95, 99, 99.5 and 99.9%.
pub const DEFAULT_Z_LEVELS: [f64; 13] = [
    0.10, 0.20, 0.30, 0.40, 0.50, 0.60, 0.70, 0.80, 0.85, 0.95, 0.99, 0.995, 0.999,
];

impl ZGrid {
    pub fn new(levels: Vec<f64>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::invalid("z grid", "empty"));
        }
        if levels.iter().any(|z| !(*z > 0.0 && *z < 1.0)) {
            return Err(Error::invalid("z grid", "levels must lie in (0, 1)"));
        }
        if levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("z grid", "levels must be strictly increasing"));
        }
        Ok(Self(levels))
    }

    pub fn levels(&self) -> &[f64] {
        &self.0
    }

    /// `n` evenly spaced interior levels `i/(n+1)`.
    pub fn uniform(n: usize) -> Self {
        Self((1..=n).map(|i| i as f64 / (n + 1) as f64).collect())
    }
}

impl Default for ZGrid {
    fn default() -> Self {
        Self(DEFAULT_Z_LEVELS.to_vec())
    }
}

impl TryFrom<Vec<f64>> for ZGrid {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        ZGrid::new(v)
    }
}

impl From<ZGrid> for Vec<f64> {
    fn from(g: ZGrid) -> Vec<f64> {
        g.0
    }
}

/// Half-width multiplier `Φ⁻¹((1+z)/2)` of the central z-interval.
pub fn interval_multiplier(z: f64) -> Result<f64> {
    if !(z > 0.0 && z < 1.0) {
        return Err(Error::invalid("confidence level", format!("{z} is not in (0, 1)")));
    }
    standard_normal_quantile((1.0 + z) / 2.0)
}

/// Central interval `μ ± Φ⁻¹((1+z)/2)·σ` per output dimension.
pub fn gaussian_interval(pred: &Prediction, z: f64) -> Result<Vec<(f64, f64)>> {
    let (mean, var) = pred
        .as_gaussian()
        .ok_or_else(|| Error::invalid("prediction", "intervals need a Gaussian prediction"))?;
    let k = interval_multiplier(z)?;
    mean.iter()
        .zip(var.iter())
        .map(|(&m, &v)| {
            if !(v > 0.0) {
                return Err(Error::Invariant(format!("non-positive variance {v}")));
            }
            let half = k * v.sqrt();
            Ok((m - half, m + half))
        })
        .collect()
}

fn check_aligned(preds: &[Prediction], rows: usize) -> Result<()> {
    if preds.is_empty() {
        return Err(Error::invalid("predictions", "empty"));
    }
    if preds.len() != rows {
        return Err(Error::shape("predictions vs targets", preds.len(), rows));
    }
    Ok(())
}

/// Fraction of (sample, output-dimension) pairs whose target falls inside
/// the central z-interval, for each level of `grid`.
pub fn calibration_curve(preds: &[Prediction], targets: &Matrix, grid: &ZGrid) -> Result<Vec<f64>> {
    check_aligned(preds, targets.rows())?;
    // Standardized absolute residuals; inside the z-interval iff |r| ≤ multiplier.
    let mut scores = Vec::with_capacity(preds.len() * targets.cols());
    for (i, p) in preds.iter().enumerate() {
        let (mean, var) = p
            .as_gaussian()
            .ok_or_else(|| Error::invalid("prediction", "calibration needs Gaussian predictions"))?;
        if mean.len() != targets.cols() {
            return Err(Error::shape("prediction dims", mean.len(), targets.cols()));
        }
        for d in 0..mean.len() {
            if !(var[d] > 0.0) {
                return Err(Error::Invariant(format!("non-positive variance {}", var[d])));
            }
            scores.push((targets[(i, d)] - mean[d]).abs() / var[d].sqrt());
        }
    }
    scores.sort_by(f64::total_cmp);
    let total = scores.len() as f64;
    grid.levels()
        .iter()
        .map(|&z| {
            let k = interval_multiplier(z)?;
            let inside = scores.partition_point(|&s| s <= k);
            Ok(inside as f64 / total)
        })
        .collect()
}

/// Trapezoidal area between the calibration curve and the diagonal, with
/// anchors `(0, 0)` and `(1, 1)` added at the ends.
pub fn deviation_area(curve: &[f64], grid: &ZGrid) -> Result<f64> {
    if curve.len() != grid.levels().len() {
        return Err(Error::shape("calibration curve", curve.len(), grid.levels().len()));
    }
    if curve.iter().any(|c| !(0.0..=1.0).contains(c)) {
        return Err(Error::invalid("calibration curve", "coverage outside [0, 1]"));
    }
    let mut pts = Vec::with_capacity(curve.len() + 2);
    pts.push((0.0, 0.0));
    pts.extend(grid.levels().iter().copied().zip(curve.iter().copied()));
    pts.push((1.0, 1.0));
    Ok(pts
        .windows(2)
        .map(|w| {
            let (z0, c0) = w[0];
            let (z1, c1) = w[1];
            // |c - z| is piecewise linear; integrate exactly across a crossing.
            let (d0, d1) = (c0 - z0, c1 - z1);
            let h = z1 - z0;
            if d0 * d1 >= 0.0 {
                0.5 * h * (d0.abs() + d1.abs())
            } else {
                0.5 * h * (d0 * d0 + d1 * d1) / (d0.abs() + d1.abs())
            }
        })
        .sum())
}

/// Coverage of the central interval at one level.
pub fn coverage_at(preds: &[Prediction], targets: &Matrix, z: f64) -> Result<f64> {
    Ok(calibration_curve(preds, targets, &ZGrid::new(vec![z])?)?[0])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionMetrics {
    pub mae: f64,
    /// Mean negative log density including `½ln 2π`.
    pub nll: f64,
    /// Same without the constant, on the scale of the training loss.
    pub nll_without_constant: f64,
}

/// Means over all (sample, output-dimension) pairs.
pub fn regression_metrics(preds: &[Prediction], targets: &Matrix) -> Result<RegressionMetrics> {
    check_aligned(preds, targets.rows())?;
    let (mut abs, mut nll, mut count) = (0.0, 0.0, 0usize);
    for (i, p) in preds.iter().enumerate() {
        let (mean, var) = p
            .as_gaussian()
            .ok_or_else(|| Error::invalid("prediction", "regression metrics need Gaussians"))?;
        if mean.len() != targets.cols() {
            return Err(Error::shape("prediction dims", mean.len(), targets.cols()));
        }
        for d in 0..mean.len() {
            let r = targets[(i, d)] - mean[d];
            abs += r.abs();
            nll += 0.5 * var[d].ln() + r * r / (2.0 * var[d]);
            count += 1;
        }
    }
    let n = count as f64;
    let half_log_2pi = 0.5 * (2.0 * PI).ln();
    Ok(RegressionMetrics {
        mae: abs / n,
        nll: nll / n + half_log_2pi,
        nll_without_constant: nll / n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub nll: f64,
    /// Mean entropy (nats) of misclassified predictions; `None` when every
    /// prediction is correct.
    pub mefp: Option<f64>,
    pub misclassified: usize,
    /// Samples whose true-class probability was clamped before the log.
    pub clamped: usize,
}

/// Shannon entropy in nats.
pub fn entropy(probs: &[f64]) -> f64 {
    -probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}

pub fn classification_metrics(preds: &[Prediction], labels: &[usize]) -> Result<ClassificationMetrics> {
    check_aligned(preds, labels.len())?;
    let k = preds[0]
        .as_categorical()
        .ok_or_else(|| Error::invalid("prediction", "classification metrics need probabilities"))?
        .len();
    let mut tp = vec![0usize; k];
    let mut predicted = vec![0usize; k];
    let mut actual = vec![0usize; k];
    let (mut correct, mut nll, mut wrong_entropy, mut wrong, mut clamped) = (0, 0.0, 0.0, 0, 0);
    for (p, &y) in preds.iter().zip(labels) {
        let probs = p
            .as_categorical()
            .ok_or_else(|| Error::invalid("prediction", "mixed prediction kinds"))?;
        if probs.len() != k || y >= k {
            return Err(Error::invalid("labels", format!("label {y} with {} classes", probs.len())));
        }
        let guess = p.argmax().expect("categorical");
        predicted[guess] += 1;
        actual[y] += 1;
        if guess == y {
            correct += 1;
            tp[y] += 1;
        } else {
            wrong += 1;
            wrong_entropy += entropy(probs);
        }
        if probs[y] < crate::losses::PROB_CLAMP {
            clamped += 1;
        }
        nll -= probs[y].max(crate::losses::PROB_CLAMP).ln();
    }
    let f1: f64 = (0..k)
        .map(|c| {
            if tp[c] == 0 {
                0.0
            } else {
                2.0 * tp[c] as f64 / (predicted[c] + actual[c]) as f64
            }
        })
        .sum::<f64>()
        / k as f64;
    let n = preds.len() as f64;
    Ok(ClassificationMetrics {
        accuracy: correct as f64 / n,
        macro_f1: f1,
        nll: nll / n,
        mefp: (wrong > 0).then(|| wrong_entropy / wrong as f64),
        misclassified: wrong,
        clamped,
    })
}

/// Evaluation of one method on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub method: String,
    pub samples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z_levels: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coverage: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deviation_area: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regression: Option<RegressionMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classification: Option<ClassificationMetrics>,
    pub model_digest: String,
    pub config_digest: String,
    pub notes: Vec<String>,
}

pub const NOTE_F1: &str = "F1 is macro-averaged over classes; classes never predicted correctly count as 0";
pub const NOTE_NLL: &str = "regression nll includes 0.5*ln(2*pi); nll_without_constant omits it";
pub const NOTE_MEFP: &str = "mefp is the mean natural-log entropy over misclassified samples";

impl CalibrationReport {
    pub fn regression(
        method: impl Into<String>,
        preds: &[Prediction],
        targets: &Matrix,
        grid: &ZGrid,
    ) -> Result<Self> {
        let coverage = calibration_curve(preds, targets, grid)?;
        let area = deviation_area(&coverage, grid)?;
        Ok(Self {
            method: method.into(),
            samples: preds.len(),
            z_levels: Some(grid.levels().to_vec()),
            coverage: Some(coverage),
            deviation_area: Some(area),
            regression: Some(regression_metrics(preds, targets)?),
            classification: None,
            model_digest: String::new(),
            config_digest: String::new(),
            notes: vec![NOTE_NLL.into()],
        })
    }

    pub fn classification(method: impl Into<String>, preds: &[Prediction], labels: &[usize]) -> Result<Self> {
        Ok(Self {
            method: method.into(),
            samples: preds.len(),
            z_levels: None,
            coverage: None,
            deviation_area: None,
            regression: None,
            classification: Some(classification_metrics(preds, labels)?),
            model_digest: String::new(),
            config_digest: String::new(),
            notes: vec![NOTE_F1.into(), NOTE_MEFP.into()],
        })
    }

    pub fn with_digests(mut self, model: impl Into<String>, config: impl Into<String>) -> Self {
        self.model_digest = model.into();
        self.config_digest = config.into();
        self
    }

    /// `(metric, value)` rows; undefined values are rendered as `NA`.
    pub fn metric_rows(&self) -> Vec<(String, String)> {
        let mut rows = Vec::new();
        let mut push = |k: &str, v: Option<f64>| {
            rows.push((k.to_string(), v.map_or_else(|| "NA".to_string(), |v| v.to_string())));
        };
        if let Some(r) = &self.regression {
            push("mae", Some(r.mae));
            push("nll", Some(r.nll));
            push("nll_without_constant", Some(r.nll_without_constant));
        }
        if let Some(a) = self.deviation_area {
            push("deviation_area", Some(a));
        }
        if let Some(c) = &self.classification {
            push("accuracy", Some(c.accuracy));
            push("macro_f1", Some(c.macro_f1));
            push("nll", Some(c.nll));
            push("mefp", c.mefp);
        }
        rows
    }

    /// Two-column `z,coverage` table for plotting.
    pub fn curve_table(&self) -> Option<String> {
        let (z, c) = (self.z_levels.as_ref()?, self.coverage.as_ref()?);
        let mut out = String::from("z,coverage\n");
        for (z, c) in z.iter().zip(c) {
            out.push_str(&format!("{z},{c}\n"));
        }
        Some(out)
    }
}

/// Flat `method,metric,value` table over several reports.
pub fn reports_to_csv(reports: &[CalibrationReport]) -> String {
    let mut out = String::from("method,metric,value\n");
    for r in reports {
        for (k, v) in r.metric_rows() {
            out.push_str(&format!("{},{k},{v}\n", r.method));
        }
    }
    out
}
