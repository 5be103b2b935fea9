//! Fully-connected dropout networks: specs, parameters, stochastic and
//! weight-scaled forward passes, head mapping and backpropagation.

mod checkpoint;
mod forward;
mod params;
mod spec;

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT_VERSION};
pub use forward::{
    backward, forward_infer_scaled, forward_pass_count, forward_train, forward_with_masks,
    head_to_prediction, sigmoid, softmax, softplus, ForwardTrace,
};
pub use params::NetworkParams;
pub use spec::{
    Activation, HeadKind, NetworkSpec, Task, DEFAULT_HIDDEN_RETAIN, DEFAULT_VARIANCE_FLOOR,
};


/// A network together with its learned parameters.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Model {
    pub spec: NetworkSpec,
    pub params: NetworkParams,
}

impl Model {
    pub fn new(spec: NetworkSpec, params: NetworkParams) -> crate::Result<Self> {
        spec.validate()?;
        params.check_shapes(&spec)?;
        Ok(Self { spec, params })
    }
}

impl From<Checkpoint> for Model {
    fn from(ck: Checkpoint) -> Self {
        Model {
            spec: ck.spec,
            params: ck.params,
        }
    }
}
