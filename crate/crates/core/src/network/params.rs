use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::NetworkSpec;
use crate::numerics::{Matrix, RngStream, Vector};

/// Learned weights `W^(l)` (shape `d^(l-1) × d^(l)`) and biases `b^(l)`.
///
/// Gradients use the same container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkParams {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vector>,
}

impl NetworkParams {
    pub fn zeros(spec: &NetworkSpec) -> Self {
        let weights = spec
            .layer_dims
            .windows(2)
            .map(|d| Matrix::zeros(d[0], d[1]))
            .collect();
        let biases = spec.layer_dims[1..].iter().map(|&d| Vector::zeros(d)).collect();
        Self { weights, biases }
    }

    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn init(spec: &NetworkSpec, rng: &mut RngStream) -> Result<Self> {
        spec.validate()?;
        let mut params = Self::zeros(spec);
        for w in &mut params.weights {
            let bound = (6.0 / (w.rows() + w.cols()) as f64).sqrt();
            for v in w.as_mut_slice() {
                *v = rng.uniform_range(-bound, bound);
            }
        }
        Ok(params)
    }

    pub fn check_shapes(&self, spec: &NetworkSpec) -> Result<()> {
        let layers = spec.num_layers();
        if self.weights.len() != layers || self.biases.len() != layers {
            return Err(Error::shape(
                "params",
                format!("{layers} layers in spec"),
                format!("{} weights, {} biases", self.weights.len(), self.biases.len()),
            ));
        }
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let expected = (spec.layer_dims[l], spec.layer_dims[l + 1]);
            if w.shape() != expected || b.len() != expected.1 {
                return Err(Error::shape(
                    "params",
                    format!("layer {} expects {}x{} / {}", l + 1, expected.0, expected.1, expected.1),
                    format!("{}x{} / {}", w.rows(), w.cols(), b.len()),
                ));
            }
        }
        Ok(())
    }

    /// `Σ_l ‖W^(l)‖²` (biases excluded).
    pub fn weight_sq_norm(&self) -> f64 {
        self.weights.iter().map(Matrix::squared_norm).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(Matrix::is_finite) && self.biases.iter().all(|b| b.is_finite())
    }

    pub fn num_values(&self) -> usize {
        self.weights.iter().map(|w| w.as_slice().len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Every parameter slice in a fixed order: `W^(1), b^(1), W^(2), ...`.
    pub fn slices(&self) -> impl Iterator<Item = &[f64]> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w.as_slice(), &b[..]])
    }

    pub fn slices_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w.as_mut_slice(), &mut b[..]])
    }

    /// `self += scale * other`, shapes assumed equal.
    pub fn add_scaled(&mut self, other: &NetworkParams, scale: f64) {
        for (dst, src) in self.slices_mut().zip(other.slices()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for s in self.slices_mut() {
            for v in s {
                *v *= factor;
            }
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.slices()
            .flat_map(|s| s.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Activation, HeadKind};

    fn spec() -> NetworkSpec {
        NetworkSpec::mlp(2, &[], Activation::Relu, HeadKind::Point, 3, 1.0, 1.0).unwrap()
    }

    #[test]
    fn single_layer_shapes() {
        let p = NetworkParams::init(&spec(), &mut RngStream::new(1, 0)).unwrap();
        assert_eq!(p.weights[0].shape(), (2, 3));
        assert_eq!(p.biases[0].len(), 3);
        assert!(p.biases[0].iter().all(|&b| b == 0.0));
        p.check_shapes(&spec()).unwrap();
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let s = NetworkSpec::mlp(5, &[16, 7], Activation::Relu, HeadKind::Gaussian, 1, 1.0, 0.5)
            .unwrap();
        let a = NetworkParams::init(&s, &mut RngStream::new(99, 3)).unwrap();
        let b = NetworkParams::init(&s, &mut RngStream::new(99, 3)).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        for w in &a.weights {
            let bound = (6.0 / (w.rows() + w.cols()) as f64).sqrt();
            assert!(w.max_abs() <= bound);
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut p = NetworkParams::zeros(&spec());
        p.biases[0] = Vector::zeros(4);
        assert_eq!(p.check_shapes(&spec()).unwrap_err().category(), "shape");
    }
}
