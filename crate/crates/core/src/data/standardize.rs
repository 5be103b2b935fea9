use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Targets};
use crate::error::{Error, Result};
use crate::inference::Prediction;
use crate::numerics::Matrix;

/// Per-column affine standardization fitted on a training split.
///
/// Constant columns keep scale 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
    /// Empty for classification.
    pub target_mean: Vec<f64>,
    pub target_std: Vec<f64>,
}

fn column_stats(m: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let n = m.rows() as f64;
    (0..m.cols())
        .map(|j| {
            let mean = (0..m.rows()).map(|i| m[(i, j)]).sum::<f64>() / n;
            let var = (0..m.rows()).map(|i| (m[(i, j)] - mean).powi(2)).sum::<f64>() / n;
            let std = var.sqrt();
            (mean, if std > 0.0 { std } else { 1.0 })
        })
        .unzip()
}

fn apply_columns(m: &Matrix, mean: &[f64], std: &[f64]) -> Matrix {
    Matrix::from_fn(m.rows(), m.cols(), |i, j| (m[(i, j)] - mean[j]) / std[j])
}

impl Standardizer {
    /// Statistics from `train` only (population standard deviation).
    pub fn fit(train: &Dataset) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::invalid("dataset", "cannot standardize an empty training split"));
        }
        let (feature_mean, feature_std) = column_stats(&train.inputs);
        let (target_mean, target_std) = match &train.targets {
            Targets::Values(y) => column_stats(y),
            Targets::Classes { .. } => (Vec::new(), Vec::new()),
        };
        Ok(Self {
            feature_mean,
            feature_std,
            target_mean,
            target_std,
        })
    }

    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        if data.standardization.is_some() {
            return Err(Error::invalid("dataset", "already standardized"));
        }
        if data.input_dim() != self.feature_mean.len() {
            return Err(Error::shape("standardize", self.feature_mean.len(), data.input_dim()));
        }
        let targets = match &data.targets {
            Targets::Values(y) => {
                if y.cols() != self.target_mean.len() {
                    return Err(Error::shape("standardize targets", self.target_mean.len(), y.cols()));
                }
                Targets::Values(apply_columns(y, &self.target_mean, &self.target_std))
            }
            t @ Targets::Classes { .. } => t.clone(),
        };
        Ok(Dataset {
            inputs: apply_columns(&data.inputs, &self.feature_mean, &self.feature_std),
            targets,
            provenance: data.provenance.clone(),
            standardization: Some(self.clone()),
        })
    }

    /// Maps a prediction made in standardized units back to original units
    /// (means shifted and scaled, variances scaled by `std²`).
    pub fn unstandardize(&self, pred: &Prediction) -> Prediction {
        match pred {
            Prediction::Gaussian { mean, variance } => Prediction::Gaussian {
                mean: mean
                    .iter()
                    .zip(self.target_mean.iter().zip(&self.target_std))
                    .map(|(m, (mu, s))| m * s + mu)
                    .collect(),
                variance: variance
                    .iter()
                    .zip(&self.target_std)
                    .map(|(v, s)| v * s * s)
                    .collect(),
            },
            p => p.clone(),
        }
    }

    pub fn unstandardize_targets(&self, y: &Matrix) -> Matrix {
        Matrix::from_fn(y.rows(), y.cols(), |i, j| y[(i, j)] * self.target_std[j] + self.target_mean[j])
    }
}

/// Fits on `train` and applies to all three splits.
pub fn standardize_splits(
    train: &Dataset,
    val: &Dataset,
    test: &Dataset,
) -> Result<(Dataset, Dataset, Dataset, Standardizer)> {
    let s = Standardizer::fit(train)?;
    Ok((s.apply(train)?, s.apply(val)?, s.apply(test)?, s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_heteroscedastic, split};
    use crate::numerics::Vector;

    #[test]
    fn train_columns_are_unit_normalized() {
        let d = gen_heteroscedastic(5_000, 2).unwrap();
        let (tr, va, te) = split(&d, [0.8, 0.1, 0.1], 1).unwrap();
        let (tr, _, _, s) = standardize_splits(&tr, &va, &te).unwrap();
        let (m, sd) = column_stats(&tr.inputs);
        assert!(m[0].abs() < 1e-9 && (sd[0] - 1.0).abs() < 1e-9);
        let Targets::Values(y) = &tr.targets else { unreachable!() };
        let (m, sd) = column_stats(y);
        assert!(m[0].abs() < 1e-9 && (sd[0] - 1.0).abs() < 1e-9);
        assert!(s.apply(&tr).is_err());
    }

    #[test]
    fn statistics_ignore_other_splits() {
        let d = gen_heteroscedastic(1_000, 2).unwrap();
        let (tr, va, te) = split(&d, [0.5, 0.25, 0.25], 1).unwrap();
        let s1 = Standardizer::fit(&tr).unwrap();
        let mut poisoned = va.clone();
        if let Targets::Values(y) = &mut poisoned.targets {
            y.as_mut_slice().iter_mut().for_each(|v| *v = 1e9);
        }
        let (_, _, _, s2) = standardize_splits(&tr, &poisoned, &te).unwrap();
        assert_eq!(s1, s2);
    }

    #[test]
    fn unstandardize_rescales_variance() {
        let s = Standardizer {
            feature_mean: vec![0.0],
            feature_std: vec![1.0],
            target_mean: vec![10.0],
            target_std: vec![3.0],
        };
        let p = Prediction::Gaussian {
            mean: Vector(vec![1.0]),
            variance: Vector(vec![0.5]),
        };
        let back = s.unstandardize(&p);
        let (m, v) = back.as_gaussian().unwrap();
        assert_eq!((m[0], v[0]), (13.0, 4.5));
    }
}
