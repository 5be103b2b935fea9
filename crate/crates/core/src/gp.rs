//! Exact Gaussian-process regression with an RBF kernel.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::Prediction;
use crate::numerics::{Matrix, Vector};

pub const DEFAULT_MAX_POINTS: usize = 5_000;
pub const DEFAULT_JITTER: f64 = 1e-8;

/// `k(a, b) = signal_variance · exp(−‖a − b‖² / (2 l²))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RbfKernel {
    pub signal_variance: f64,
    pub length_scale: f64,
}

impl RbfKernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        self.signal_variance * (-d2 / (2.0 * self.length_scale * self.length_scale)).exp()
    }

    /// Defaults from data scale: target variance and median pairwise input
    /// distance (over at most the first 1,000 rows).
    pub fn from_data(x: &Matrix, y: &[f64]) -> Self {
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let m = x.rows().min(1_000);
        let mut dists = Vec::with_capacity(m * m.saturating_sub(1) / 2);
        for i in 0..m {
            for j in i + 1..m {
                let d2: f64 = x.row(i).iter().zip(x.row(j)).map(|(a, b)| (a - b).powi(2)).sum();
                dists.push(d2.sqrt());
            }
        }
        dists.sort_by(f64::total_cmp);
        let median = dists.get(dists.len() / 2).copied().unwrap_or(1.0);
        Self {
            signal_variance: if var > 0.0 { var } else { 1.0 },
            length_scale: if median > 0.0 { median } else { 1.0 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpConfig {
    pub kernel: RbfKernel,
    pub noise_variance: f64,
    #[serde(default = "default_jitter")]
    pub jitter: f64,
    #[serde(default = "default_max_points")]
    pub max_points: usize,
}

fn default_jitter() -> f64 {
    DEFAULT_JITTER
}

fn default_max_points() -> usize {
    DEFAULT_MAX_POINTS
}

impl GpConfig {
    /// Kernel from data scale and noise at 10% of the target variance.
    pub fn from_data(x: &Matrix, y: &[f64]) -> Self {
        let kernel = RbfKernel::from_data(x, y);
        Self {
            kernel,
            noise_variance: 0.1 * kernel.signal_variance,
            jitter: DEFAULT_JITTER,
            max_points: DEFAULT_MAX_POINTS,
        }
    }
}

/// Fitted GP with the Cholesky factor of `K(X, X) + (noise + jitter)·I`.
#[derive(Debug, Clone)]
pub struct GpModel {
    config: GpConfig,
    inputs: Matrix,
    chol: Matrix,
    /// `(K + σ²I)⁻¹ y`.
    weights: Vector,
}

/// Lower-triangular `L` with `L Lᵀ = a`.
pub fn cholesky(a: &Matrix, jitter: f64) -> Result<Matrix> {
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) {
            return Err(Error::NotPositiveDefinite { pivot: j, jitter });
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

fn forward_sub(l: &Matrix, b: &[f64]) -> Vector {
    let n = b.len();
    let mut x = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[(i, k)] * x[k]).sum();
        x[i] = (b[i] - s) / l[(i, i)];
    }
    Vector(x)
}

fn back_sub_transposed(l: &Matrix, b: &[f64]) -> Vector {
    let n = b.len();
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[(k, i)] * x[k]).sum();
        x[i] = (b[i] - s) / l[(i, i)];
    }
    Vector(x)
}

pub fn gp_fit(x: &Matrix, y: &[f64], config: GpConfig) -> Result<GpModel> {
    let n = x.rows();
    if n == 0 || y.len() != n {
        return Err(Error::shape("gp_fit", n, y.len()));
    }
    if n > config.max_points {
        return Err(Error::invalid(
            "gp training set",
            format!("{n} points exceeds the cap of {}", config.max_points),
        ));
    }
    let k = config.kernel;
    if !(k.signal_variance > 0.0 && k.length_scale > 0.0) {
        return Err(Error::invalid("gp kernel", "signal variance and length scale must be > 0"));
    }
    if !(config.noise_variance > 0.0) {
        return Err(Error::invalid("gp noise", "noise variance must be > 0"));
    }
    if !(config.jitter >= 0.0) {
        return Err(Error::invalid("gp jitter", "must be >= 0"));
    }
    let diag = config.noise_variance + config.jitter;
    let gram = Matrix::from_fn(n, n, |i, j| {
        k.eval(x.row(i), x.row(j)) + if i == j { diag } else { 0.0 }
    });
    let chol = cholesky(&gram, config.jitter)?;
    let weights = back_sub_transposed(&chol, &forward_sub(&chol, y));
    Ok(GpModel {
        config,
        inputs: x.clone(),
        chol,
        weights,
    })
}

impl GpModel {
    pub fn config(&self) -> &GpConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.rows() == 0
    }

    /// Prior predictive variance `k(x, x) + noise`.
    pub fn prior_variance(&self) -> f64 {
        self.config.kernel.signal_variance + self.config.noise_variance
    }

    /// Posterior predictive: mean `k*ᵀ(K + σ²I)⁻¹y`, variance
    /// `k(x*, x*) − k*ᵀ(K + σ²I)⁻¹k* + σ²`.
    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        if x.len() != self.inputs.cols() {
            return Err(Error::shape("gp_predict", x.len(), self.inputs.cols()));
        }
        let kern = self.config.kernel;
        let k_star: Vec<f64> = (0..self.inputs.rows())
            .map(|i| kern.eval(self.inputs.row(i), x))
            .collect();
        let mean = self.weights.dot(&k_star);
        let v = forward_sub(&self.chol, &k_star);
        let explained: f64 = v.iter().map(|a| a * a).sum();
        let latent = (kern.eval(x, x) - explained).max(0.0);
        Ok(Prediction::Gaussian {
            mean: Vector(vec![mean]),
            variance: Vector(vec![latent + self.config.noise_variance]),
        })
    }
}

pub fn gp_predict(model: &GpModel, x: &[f64]) -> Result<Prediction> {
    model.predict(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(noise: f64) -> GpConfig {
        GpConfig {
            kernel: RbfKernel {
                signal_variance: 1.0,
                length_scale: 1.0,
            },
            noise_variance: noise,
            jitter: 0.0,
            max_points: DEFAULT_MAX_POINTS,
        }
    }

    fn mv(p: &Prediction) -> (f64, f64) {
        let (m, v) = p.as_gaussian().unwrap();
        (m[0], v[0])
    }

    #[test]
    fn single_point_factorization_and_posterior() {
        let x = Matrix::new(1, 1, vec![0.0]).unwrap();
        let s2 = 0.25;
        let gp = gp_fit(&x, &[1.0], unit(s2)).unwrap();
        assert!((gp.chol[(0, 0)] - (1.0 + s2).sqrt()).abs() < 1e-15);
        let (m, v) = mv(&gp.predict(&[0.0]).unwrap());
        assert!((m - 1.0 / (1.0 + s2)).abs() < 1e-15);
        assert!((v - (1.0 - 1.0 / (1.0 + s2) + s2)).abs() < 1e-15);
    }

    #[test]
    fn far_queries_revert_to_prior() {
        let x = Matrix::new(3, 1, vec![-1.0, 0.0, 1.0]).unwrap();
        let gp = gp_fit(&x, &[1.0, 2.0, 3.0], unit(0.1)).unwrap();
        let (m, v) = mv(&gp.predict(&[100.0]).unwrap());
        assert!(m.abs() < 1e-12);
        assert!((v - 1.1).abs() < 1e-12);
    }

    #[test]
    fn duplicate_rows_factorize_with_jitter() {
        let x = Matrix::new(3, 1, vec![0.5, 0.5, 0.5]).unwrap();
        let mut cfg = unit(1e-12);
        cfg.jitter = DEFAULT_JITTER;
        assert!(gp_fit(&x, &[1.0, 1.0, 1.0], cfg).is_ok());
    }

    #[test]
    fn non_positive_definite_is_reported() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        let err = cholesky(&a, 0.0).unwrap_err();
        assert_eq!(err.category(), "not-positive-definite");
        assert!(err.to_string().contains("jitter"));
    }

    #[test]
    fn cap_is_enforced() {
        let x = Matrix::zeros(4, 1);
        let mut cfg = unit(0.1);
        cfg.max_points = 3;
        assert_eq!(gp_fit(&x, &[0.0; 4], cfg).unwrap_err().category(), "validation");
    }

    #[test]
    fn interpolates_noise_free_data() {
        let xs: Vec<f64> = (0..30).map(|i| -3.0 + 0.2 * i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x.sin()).collect();
        let x = Matrix::new(30, 1, xs.clone()).unwrap();
        let noise = 1e-4;
        let gp = gp_fit(&x, &ys, unit(noise)).unwrap();
        for (xi, yi) in xs.iter().zip(&ys) {
            let (m, v) = mv(&gp.predict(&[*xi]).unwrap());
            assert!((m - yi).abs() <= 3.0 * noise.sqrt());
            assert!(v <= gp.prior_variance());
        }
    }

    #[test]
    fn default_hyperparameters_follow_data_scale() {
        let x = Matrix::new(3, 1, vec![0.0, 1.0, 3.0]).unwrap();
        let y = [1.0, 2.0, 3.0];
        let cfg = GpConfig::from_data(&x, &y);
        assert!((cfg.kernel.signal_variance - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(cfg.kernel.length_scale, 2.0);
        assert!((cfg.noise_variance - 0.2 / 3.0).abs() < 1e-15);
    }
}
