use std::cell::Cell;

use crate::error::{Error, Result};
use crate::inference::Prediction;
use crate::network::{Activation, HeadKind, NetworkParams, NetworkSpec};
use crate::numerics::{bernoulli_vector, RngStream, Vector};

thread_local! {
    static FORWARD_PASSES: Cell<u64> = const { Cell::new(0) };
}

/// Full network passes executed on the current thread so far.
pub fn forward_pass_count() -> u64 {
    FORWARD_PASSES.with(Cell::get)
}

fn count_pass() {
    FORWARD_PASSES.with(|c| c.set(c.get() + 1));
}

/// Overflow-free `ln(1 + e^x)`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Max-shifted softmax.
pub fn softmax(logits: &[f64]) -> Vector {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Softplus => softplus(v),
            Activation::Identity => v,
            Activation::Softmax => unreachable!("softmax is restricted to the output layer"),
        }
    }

    fn derivative(self, v: f64) -> f64 {
        match self {
            Activation::Relu => {
                if v > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Softplus => sigmoid(v),
            Activation::Identity => 1.0,
            Activation::Softmax => unreachable!("softmax is restricted to the output layer"),
        }
    }
}

/// Everything a training-time pass produced.
///
/// `inputs[l]` is the (unmasked) input of layer `l + 1`, `masks[l]` the
/// Bernoulli mask applied to it and `pre_activations[l]` its affine output
/// `y^(l+1)`. The last pre-activation is the network head.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub inputs: Vec<Vector>,
    pub masks: Vec<Vector>,
    pub pre_activations: Vec<Vector>,
}

impl ForwardTrace {
    pub fn head(&self) -> &Vector {
        self.pre_activations.last().expect("trace has at least one layer")
    }
}

fn check_input(spec: &NetworkSpec, x: &[f64]) -> Result<()> {
    if x.len() != spec.input_dim() {
        return Err(Error::shape(
            "forward",
            format!("input of length {}", x.len()),
            format!("network input dim {}", spec.input_dim()),
        ));
    }
    Ok(())
}

/// Runs all layers, feeding each layer's input through `gate(layer, input)`
/// before the affine map.
fn run_layers(
    spec: &NetworkSpec,
    params: &NetworkParams,
    x: &[f64],
    mut gate: impl FnMut(usize, &[f64]) -> Result<Vector>,
    mut record: impl FnMut(Vector, Vector, Vector),
) -> Result<Vector> {
    check_input(spec, x)?;
    params.check_shapes(spec)?;
    count_pass();
    let layers = spec.num_layers();
    let mut current = Vector::from(x);
    for l in 0..layers {
        let gated = gate(l, &current)?;
        let mut y = params.weights[l].left_mul(&gated)?;
        for (v, b) in y.iter_mut().zip(params.biases[l].iter()) {
            *v += b;
        }
        let next = if l + 1 < layers {
            y.iter().map(|&v| spec.activations[l].apply(v)).collect()
        } else {
            Vector::default()
        };
        let input = std::mem::replace(&mut current, next);
        if l + 1 == layers {
            record(input, gated, y.clone());
            return Ok(y);
        }
        record(input, gated, y);
    }
    unreachable!("validated spec has at least one layer")
}

/// Stochastic pass: samples `z^(l) ~ Bernoulli(p^(l))` for every layer and
/// evaluates `y^(l) = x^(l) diag(z^(l)) W^(l) + b^(l)`.
pub fn forward_train(
    spec: &NetworkSpec,
    params: &NetworkParams,
    x: &[f64],
    rng: &mut RngStream,
) -> Result<ForwardTrace> {
    let mut masks = Vec::with_capacity(spec.num_layers());
    let mut trace = ForwardTrace {
        inputs: Vec::with_capacity(spec.num_layers()),
        masks: Vec::new(),
        pre_activations: Vec::with_capacity(spec.num_layers()),
    };
    run_layers(
        spec,
        params,
        x,
        |l, input| {
            let z = bernoulli_vector(rng, &spec.retain_probs[l])?;
            let gated = input.iter().zip(z.iter()).map(|(a, b)| a * b).collect();
            masks.push(z);
            Ok(gated)
        },
        |input, _, y| {
            trace.inputs.push(input);
            trace.pre_activations.push(y);
        },
    )?;
    trace.masks = masks;
    Ok(trace)
}

/// Pass with explicit masks (used by tests and oracles).
pub fn forward_with_masks(
    spec: &NetworkSpec,
    params: &NetworkParams,
    x: &[f64],
    masks: &[Vector],
) -> Result<ForwardTrace> {
    if masks.len() != spec.num_layers() {
        return Err(Error::shape("forward_with_masks", spec.num_layers(), masks.len()));
    }
    let mut trace = ForwardTrace {
        inputs: Vec::new(),
        masks: masks.to_vec(),
        pre_activations: Vec::new(),
    };
    run_layers(
        spec,
        params,
        x,
        |l, input| {
            if masks[l].len() != input.len() {
                return Err(Error::shape("mask", masks[l].len(), input.len()));
            }
            Ok(input.iter().zip(masks[l].iter()).map(|(a, b)| a * b).collect())
        },
        |input, _, y| {
            trace.inputs.push(input);
            trace.pre_activations.push(y);
        },
    )?;
    Ok(trace)
}

/// Deterministic single pass with rows scaled by their retain probability,
/// `W̃^(l) = diag(p^(l)) W^(l)`. Returns the raw head.
pub fn forward_infer_scaled(
    spec: &NetworkSpec,
    params: &NetworkParams,
    x: &[f64],
) -> Result<Vector> {
    run_layers(
        spec,
        params,
        x,
        |l, input| {
            Ok(input
                .iter()
                .zip(&spec.retain_probs[l])
                .map(|(a, p)| a * p)
                .collect())
        },
        |_, _, _| {},
    )
}

/// Maps a raw head to a predictive distribution.
///
/// Gaussian heads read `[μ, raw]` pairs per output dimension with
/// `σ² = softplus(raw) + floor`; point heads get variance `floor`; softmax
/// heads become class probabilities.
pub fn head_to_prediction(spec: &NetworkSpec, head: &[f64]) -> Result<Prediction> {
    if head.len() != spec.head_width() {
        return Err(Error::shape("head", head.len(), spec.head_width()));
    }
    Ok(match spec.head {
        HeadKind::Gaussian => Prediction::Gaussian {
            mean: head.chunks_exact(2).map(|c| c[0]).collect(),
            variance: head
                .chunks_exact(2)
                .map(|c| softplus(c[1]) + spec.variance_floor)
                .collect(),
        },
        HeadKind::Point => Prediction::Gaussian {
            mean: Vector::from(head),
            variance: Vector::filled(head.len(), spec.variance_floor),
        },
        HeadKind::Softmax => Prediction::Categorical {
            probs: softmax(head),
        },
    })
}

/// Exact reverse-mode gradients of the sampled network given `dL/d head`.
pub fn backward(
    spec: &NetworkSpec,
    params: &NetworkParams,
    trace: &ForwardTrace,
    head_grad: &[f64],
) -> Result<NetworkParams> {
    let layers = spec.num_layers();
    params.check_shapes(spec)?;
    if trace.inputs.len() != layers
        || trace.masks.len() != layers
        || trace.pre_activations.len() != layers
    {
        return Err(Error::shape("backward trace", layers, trace.inputs.len()));
    }
    for l in 0..layers {
        let (din, dout) = (spec.layer_dims[l], spec.layer_dims[l + 1]);
        if trace.inputs[l].len() != din
            || trace.masks[l].len() != din
            || trace.pre_activations[l].len() != dout
        {
            return Err(Error::shape(
                "backward trace",
                format!("layer {} {din}->{dout}", l + 1),
                format!(
                    "input {}, mask {}, output {}",
                    trace.inputs[l].len(),
                    trace.masks[l].len(),
                    trace.pre_activations[l].len()
                ),
            ));
        }
    }
    if head_grad.len() != spec.head_width() {
        return Err(Error::shape("head gradient", head_grad.len(), spec.head_width()));
    }

    let mut grads = NetworkParams::zeros(spec);
    let mut delta = Vector::from(head_grad);
    for l in (0..layers).rev() {
        let input = &trace.inputs[l];
        let mask = &trace.masks[l];
        let w = &params.weights[l];
        let gw = &mut grads.weights[l];
        for i in 0..w.rows() {
            let xi = input[i] * mask[i];
            if xi == 0.0 {
                continue;
            }
            for (g, d) in gw.row_mut(i).iter_mut().zip(delta.iter()) {
                *g = xi * d;
            }
        }
        grads.biases[l].copy_from_slice(&delta);
        if l == 0 {
            break;
        }
        let act = spec.activations[l - 1];
        let pre = &trace.pre_activations[l - 1];
        delta = (0..w.rows())
            .map(|i| {
                if mask[i] == 0.0 {
                    return 0.0;
                }
                let back: f64 = w.row(i).iter().zip(delta.iter()).map(|(a, b)| a * b).sum();
                mask[i] * back * act.derivative(pre[i])
            })
            .collect();
    }
    Ok(grads)
}
