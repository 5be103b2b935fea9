use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Softplus,
    Softmax,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Regression,
    Classification,
}

/// How the final layer is read out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    /// Regression, `[mean, raw variance]` interleaved per output dimension.
    Gaussian,
    /// Regression, one point estimate per output dimension.
    Point,
    /// Classification, one logit per class.
    Softmax,
}

impl HeadKind {
    pub fn task(self) -> Task {
        match self {
            HeadKind::Gaussian | HeadKind::Point => Task::Regression,
            HeadKind::Softmax => Task::Classification,
        }
    }

    /// Width of the final layer for `outputs` target dimensions (or classes).
    pub fn width(self, outputs: usize) -> usize {
        match self {
            HeadKind::Gaussian => 2 * outputs,
            HeadKind::Point | HeadKind::Softmax => outputs,
        }
    }
}

pub const DEFAULT_VARIANCE_FLOOR: f64 = 1e-6;
pub const DEFAULT_HIDDEN_RETAIN: f64 = 0.5;

/// Architecture of a fully-connected network.
///
/// Layer `l` (1-based) maps `layer_dims[l-1]` inputs to `layer_dims[l]`
/// outputs. `retain_probs[l-1]` holds the keep probability of each of that
/// layer's input units. The final layer's activation is applied when the head
/// is mapped to a prediction, not inside the forward pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub layer_dims: Vec<usize>,
    pub activations: Vec<Activation>,
    pub retain_probs: Vec<Vec<f64>>,
    pub head: HeadKind,
    /// Target dimensions for regression, classes for classification.
    pub outputs: usize,
    pub variance_floor: f64,
}

impl NetworkSpec {
    /// Multi-layer perceptron with one activation shared by the hidden layers.
    ///
    /// `input_retain` is the keep probability of raw input features and
    /// `hidden_retain` that of every hidden unit.
    pub fn mlp(
        inputs: usize,
        hidden: &[usize],
        hidden_activation: Activation,
        head: HeadKind,
        outputs: usize,
        input_retain: f64,
        hidden_retain: f64,
    ) -> Result<Self> {
        let mut layer_dims = Vec::with_capacity(hidden.len() + 2);
        layer_dims.push(inputs);
        layer_dims.extend_from_slice(hidden);
        layer_dims.push(head.width(outputs));

        let mut activations = vec![hidden_activation; hidden.len()];
        activations.push(match head {
            HeadKind::Softmax => Activation::Softmax,
            _ => Activation::Identity,
        });

        let retain_probs = (0..=hidden.len())
            .map(|l| {
                let p = if l == 0 { input_retain } else { hidden_retain };
                vec![p; layer_dims[l]]
            })
            .collect();

        let spec = Self {
            layer_dims,
            activations,
            retain_probs,
            head,
            outputs,
            variance_floor: DEFAULT_VARIANCE_FLOOR,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn num_layers(&self) -> usize {
        self.activations.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn head_width(&self) -> usize {
        *self.layer_dims.last().expect("validated spec has layers")
    }

    pub fn task(&self) -> Task {
        self.head.task()
    }

    /// Same architecture with every retain probability set to 1.
    pub fn without_dropout(&self) -> Self {
        let mut s = self.clone();
        for p in s.retain_probs.iter_mut().flatten() {
            *p = 1.0;
        }
        s
    }

    pub fn dropout_free(&self) -> bool {
        self.retain_probs.iter().flatten().all(|&p| p == 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Err(Error::invalid("network spec", reason));
        let layers = self.activations.len();
        if layers == 0 {
            return bad("at least one layer is required".into());
        }
        if self.layer_dims.len() != layers + 1 {
            return bad(format!(
                "{} layer dims for {layers} layers (expected {})",
                self.layer_dims.len(),
                layers + 1
            ));
        }
        if self.layer_dims.iter().any(|&d| d == 0) {
            return bad("all layer dims must be at least 1".into());
        }
        if self.outputs == 0 {
            return bad("outputs must be at least 1".into());
        }
        if self.retain_probs.len() != layers {
            return bad(format!(
                "{} retain-probability vectors for {layers} layers",
                self.retain_probs.len()
            ));
        }
        for (l, p) in self.retain_probs.iter().enumerate() {
            if p.len() != self.layer_dims[l] {
                return bad(format!(
                    "layer {} has {} retain probabilities for {} inputs",
                    l + 1,
                    p.len(),
                    self.layer_dims[l]
                ));
            }
            if let Some(v) = p.iter().find(|v| !(**v > 0.0 && **v <= 1.0)) {
                return bad(format!("retain probability {v} in layer {} is not in (0, 1]", l + 1));
            }
        }
        if let Some(l) = self.activations[..layers - 1]
            .iter()
            .position(|a| *a == Activation::Softmax)
        {
            return bad(format!("softmax is only allowed on the output layer (layer {})", l + 1));
        }
        let expected_final = match self.head {
            HeadKind::Softmax => Activation::Softmax,
            _ => Activation::Identity,
        };
        if self.activations[layers - 1] != expected_final {
            return bad(format!(
                "{:?} head requires a {:?} output activation",
                self.head, expected_final
            ));
        }
        if self.head_width() != self.head.width(self.outputs) {
            return bad(format!(
                "{:?} head with {} outputs needs final width {}, got {}",
                self.head,
                self.outputs,
                self.head.width(self.outputs),
                self.head_width()
            ));
        }
        if self.head == HeadKind::Softmax && self.outputs < 2 {
            return bad("classification needs at least 2 classes".into());
        }
        if !(self.variance_floor >= 0.0 && self.variance_floor.is_finite()) {
            return bad(format!("variance floor {} must be finite and >= 0", self.variance_floor));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mlp_builds_expected_shapes() {
        let s = NetworkSpec::mlp(3, &[8, 4], Activation::Relu, HeadKind::Gaussian, 2, 1.0, 0.5)
            .unwrap();
        assert_eq!(s.layer_dims, vec![3, 8, 4, 4]);
        assert_eq!(s.retain_probs[0], vec![1.0; 3]);
        assert_eq!(s.retain_probs[2], vec![0.5; 4]);
        assert_eq!(s.activations.last(), Some(&Activation::Identity));
    }

    #[test]
    fn validation_errors() {
        let good =
            NetworkSpec::mlp(2, &[4], Activation::Relu, HeadKind::Softmax, 3, 1.0, 0.5).unwrap();

        let mut s = good.clone();
        s.retain_probs[1][0] = 0.0;
        assert!(s.validate().is_err());

        let mut s = good.clone();
        s.activations[1] = Activation::Identity;
        assert!(s.validate().is_err());

        let mut s = good.clone();
        s.activations[0] = Activation::Softmax;
        assert!(s.validate().is_err());

        let mut s = good.clone();
        s.layer_dims[2] = 4;
        s.retain_probs.truncate(2);
        assert!(s.validate().is_err());

        assert!(NetworkSpec::mlp(2, &[0], Activation::Relu, HeadKind::Point, 1, 1.0, 0.5).is_err());
        assert!(NetworkSpec::mlp(2, &[], Activation::Relu, HeadKind::Softmax, 1, 1.0, 0.5).is_err());
    }
}
