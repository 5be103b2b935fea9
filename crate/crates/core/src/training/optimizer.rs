use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::NetworkParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Optimizer {
    Sgd {
        learning_rate: f64,
    },
    Adam {
        learning_rate: f64,
        #[serde(default = "beta1")]
        beta1: f64,
        #[serde(default = "beta2")]
        beta2: f64,
        #[serde(default = "epsilon")]
        epsilon: f64,
    },
}

fn beta1() -> f64 {
    0.9
}
fn beta2() -> f64 {
    0.999
}
fn epsilon() -> f64 {
    1e-8
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam {
            learning_rate: 1e-3,
            beta1: beta1(),
            beta2: beta2(),
            epsilon: epsilon(),
        }
    }
}

impl Optimizer {
    pub fn learning_rate(&self) -> f64 {
        match *self {
            Optimizer::Sgd { learning_rate } | Optimizer::Adam { learning_rate, .. } => learning_rate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate() > 0.0 && self.learning_rate().is_finite()) {
            return Err(Error::invalid("learning_rate", "must be finite and > 0"));
        }
        if let Optimizer::Adam {
            beta1,
            beta2,
            epsilon,
            ..
        } = *self
        {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || !(epsilon > 0.0) {
                return Err(Error::invalid("adam", "need 0 <= beta < 1 and epsilon > 0"));
            }
        }
        Ok(())
    }
}

/// Optimizer with its running state.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    kind: Optimizer,
    m: Option<NetworkParams>,
    v: Option<NetworkParams>,
    step: u64,
}

impl OptimizerState {
    pub fn new(kind: Optimizer, like: &NetworkParams) -> Self {
        let zeros = || {
            let mut z = like.clone();
            z.scale(0.0);
            z
        };
        let (m, v) = match kind {
            Optimizer::Sgd { .. } => (None, None),
            Optimizer::Adam { .. } => (Some(zeros()), Some(zeros())),
        };
        Self { kind, m, v, step: 0 }
    }

    /// One descent step on `params` with gradient `grads`.
    pub fn step(&mut self, params: &mut NetworkParams, grads: &NetworkParams) {
        self.step += 1;
        match self.kind {
            Optimizer::Sgd { learning_rate } => params.add_scaled(grads, -learning_rate),
            Optimizer::Adam {
                learning_rate,
                beta1,
                beta2,
                epsilon,
            } => {
                let t = self.step as i32;
                let bc1 = 1.0 - beta1.powi(t);
                let bc2 = 1.0 - beta2.powi(t);
                let m = self.m.as_mut().expect("adam state");
                let v = self.v.as_mut().expect("adam state");
                for (((p, g), m), v) in params
                    .slices_mut()
                    .zip(grads.slices())
                    .zip(m.slices_mut())
                    .zip(v.slices_mut())
                {
                    for i in 0..p.len() {
                        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                        let m_hat = m[i] / bc1;
                        let v_hat = v[i] / bc2;
                        p[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Matrix, Vector};

    fn two_params(a: f64, b: f64) -> NetworkParams {
        NetworkParams {
            weights: vec![Matrix::new(1, 1, vec![a]).unwrap()],
            biases: vec![Vector(vec![b])],
        }
    }

    #[test]
    fn adam_first_two_steps_match_hand_computation() {
        let opt = Optimizer::Adam {
            learning_rate: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        };
        let mut p = two_params(1.0, -2.0);
        let mut state = OptimizerState::new(opt, &p);
        state.step(&mut p, &two_params(0.5, -4.0));
        // Step 1: m̂ = g, v̂ = g², update = lr·g/(|g| + ε).
        let w1 = 1.0 - 0.1 * 0.5 / (0.5 + 1e-8);
        let b1 = -2.0 - 0.1 * -4.0 / (4.0 + 1e-8);
        assert!((p.weights[0][(0, 0)] - w1).abs() <= 1e-12);
        assert!((p.biases[0][0] - b1).abs() <= 1e-12);

        state.step(&mut p, &two_params(0.25, 1.0));
        // Step 2 for the weight: m = 0.9·0.05 + 0.1·0.25, v = 0.999·0.00025 + 0.001·0.0625.
        let m = 0.9 * 0.05 + 0.1 * 0.25;
        let v = 0.999 * 0.000_25 + 0.001 * 0.0625;
        let m_hat = m / (1.0 - 0.81);
        let v_hat: f64 = v / (1.0 - 0.998_001);
        let w2 = w1 - 0.1 * m_hat / (v_hat.sqrt() + 1e-8);
        assert!((p.weights[0][(0, 0)] - w2).abs() <= 1e-12);
    }

    #[test]
    fn sgd_step() {
        let mut p = two_params(1.0, 1.0);
        let mut s = OptimizerState::new(Optimizer::Sgd { learning_rate: 0.5 }, &p);
        s.step(&mut p, &two_params(2.0, -2.0));
        assert_eq!((p.weights[0][(0, 0)], p.biases[0][0]), (0.0, 2.0));
    }

    #[test]
    fn validation() {
        assert!(Optimizer::Sgd { learning_rate: 0.0 }.validate().is_err());
        assert!(Optimizer::Adam {
            learning_rate: 1e-3,
            beta1: 1.0,
            beta2: 0.9,
            epsilon: 1e-8
        }
        .validate()
        .is_err());
        assert!(Optimizer::default().validate().is_ok());
    }
}
