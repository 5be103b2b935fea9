use serde::{Deserialize, Serialize};

use crate::numerics::Vector;

/// Predictive distribution for one input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Prediction {
    /// Independent Gaussian per output dimension.
    Gaussian { mean: Vector, variance: Vector },
    Categorical { probs: Vector },
}

impl Prediction {
    pub fn dims(&self) -> usize {
        match self {
            Prediction::Gaussian { mean, .. } => mean.len(),
            Prediction::Categorical { probs } => probs.len(),
        }
    }

    pub fn as_gaussian(&self) -> Option<(&Vector, &Vector)> {
        match self {
            Prediction::Gaussian { mean, variance } => Some((mean, variance)),
            Prediction::Categorical { .. } => None,
        }
    }

    pub fn as_categorical(&self) -> Option<&Vector> {
        match self {
            Prediction::Categorical { probs } => Some(probs),
            Prediction::Gaussian { .. } => None,
        }
    }

    /// Index of the most probable class; ties resolve to the lowest index.
    pub fn argmax(&self) -> Option<usize> {
        let probs = self.as_categorical()?;
        let mut best = 0;
        for (i, &p) in probs.iter().enumerate() {
            if p > probs[best] {
                best = i;
            }
        }
        Some(best)
    }
}
