//! Weighted proper-scoring-rule losses.
//!
//! Regression: `(1-α)·NLL + α·SE` where the Gaussian NLL omits the constant
//! `½ln 2π`. Classification: `(1-α)·(−ln p_y) + α·Brier`. Both carry the L2
//! penalty `((1-α)λ_l + αλ_e)·Σ‖W‖²`. Batch losses average the data terms
//! over samples and add the penalty once.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::Prediction;
use crate::network::{sigmoid, softmax, softplus, HeadKind, NetworkParams, NetworkSpec, Task};

/// Probabilities below this are clamped before taking the log.
pub const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSpec {
    pub task: Task,
    pub alpha: f64,
    #[serde(default)]
    pub lambda_e: f64,
    #[serde(default)]
    pub lambda_l: f64,
}

impl LossSpec {
    pub fn new(task: Task, alpha: f64, lambda_e: f64, lambda_l: f64) -> Result<Self> {
        let s = Self {
            task,
            alpha,
            lambda_e,
            lambda_l,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid("alpha", format!("{} is not in [0, 1]", self.alpha)));
        }
        for (name, v) in [("lambda_e", self.lambda_e), ("lambda_l", self.lambda_l)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, format!("{v} must be finite and >= 0")));
            }
        }
        Ok(())
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    /// Coefficient on `Σ‖W‖²`.
    pub fn reg_coefficient(&self) -> f64 {
        (1.0 - self.alpha) * self.lambda_l + self.alpha * self.lambda_e
    }

    /// Point-estimate heads carry no variance, so only the error term applies.
    pub fn check_head(&self, spec: &NetworkSpec) -> Result<()> {
        self.validate()?;
        if self.task != spec.task() {
            return Err(Error::invalid(
                "loss spec",
                format!("{:?} loss on a {:?} network", self.task, spec.task()),
            ));
        }
        if spec.head == HeadKind::Point && self.alpha != 1.0 {
            return Err(Error::invalid(
                "loss spec",
                format!("point heads are trained with alpha = 1, got {}", self.alpha),
            ));
        }
        Ok(())
    }
}

/// Decomposed loss; `total == (1-α)·nll + α·error + reg`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossValue {
    pub total: f64,
    pub nll: f64,
    pub error: f64,
    pub reg: f64,
    /// Samples whose true-class probability was clamped to [`PROB_CLAMP`].
    #[serde(default)]
    pub clamped: usize,
}

impl LossValue {
    fn compose(spec: &LossSpec, nll: f64, error: f64, reg: f64, clamped: usize) -> Self {
        let total = (1.0 - spec.alpha) * nll + spec.alpha * error + reg;
        Self {
            total,
            nll,
            error,
            reg,
            clamped,
        }
    }
}

/// Data terms for one regression sample, summed over output dimensions.
fn regression_terms(mean: &[f64], variance: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if mean.len() != y.len() || variance.len() != y.len() {
        return Err(Error::shape("regression loss", mean.len(), y.len()));
    }
    let (mut nll, mut se) = (0.0, 0.0);
    for ((&m, &v), &t) in mean.iter().zip(variance).zip(y) {
        if !(v > 0.0) {
            return Err(Error::Invariant(format!("non-positive predictive variance {v}")));
        }
        let r2 = (t - m) * (t - m);
        nll += 0.5 * v.ln() + r2 / (2.0 * v);
        se += r2;
    }
    Ok((nll, se))
}

/// Data terms for one classification sample; the flag reports clamping.
fn classification_terms(probs: &[f64], class: usize) -> Result<(f64, f64, bool)> {
    if class >= probs.len() {
        return Err(Error::invalid(
            "class label",
            format!("{class} with {} classes", probs.len()),
        ));
    }
    let p = probs[class];
    let clamped = p < PROB_CLAMP;
    let nll = -p.max(PROB_CLAMP).ln();
    let brier = probs
        .iter()
        .enumerate()
        .map(|(k, &pk)| {
            let t = if k == class { 1.0 } else { 0.0 };
            (t - pk) * (t - pk)
        })
        .sum();
    Ok((nll, brier, clamped))
}

pub fn regression_loss(
    pred: &Prediction,
    y: &[f64],
    params: &NetworkParams,
    spec: &LossSpec,
) -> Result<LossValue> {
    let (mean, variance) = pred
        .as_gaussian()
        .ok_or_else(|| Error::invalid("prediction", "regression loss needs a Gaussian"))?;
    let (nll, se) = regression_terms(mean, variance, y)?;
    let reg = spec.reg_coefficient() * params.weight_sq_norm();
    Ok(LossValue::compose(spec, nll, se, reg, 0))
}

pub fn classification_loss(
    pred: &Prediction,
    y: usize,
    params: &NetworkParams,
    spec: &LossSpec,
) -> Result<LossValue> {
    let probs = pred
        .as_categorical()
        .ok_or_else(|| Error::invalid("prediction", "classification loss needs probabilities"))?;
    let (nll, brier, clamped) = classification_terms(probs, y)?;
    let reg = spec.reg_coefficient() * params.weight_sq_norm();
    Ok(LossValue::compose(spec, nll, brier, reg, usize::from(clamped)))
}

/// Training target for one sample.
#[derive(Debug, Clone, Copy)]
pub enum Target<'a> {
    Values(&'a [f64]),
    Class(usize),
}

/// Data-term loss (no regularizer) for one raw head.
pub fn head_loss(spec: &NetworkSpec, head: &[f64], y: Target<'_>, loss: &LossSpec) -> Result<LossValue> {
    let pred = crate::network::head_to_prediction(spec, head)?;
    let (nll, err, clamped) = match (y, &pred) {
        (Target::Values(t), Prediction::Gaussian { mean, variance }) => {
            let (nll, se) = regression_terms(mean, variance, t)?;
            (nll, se, false)
        }
        (Target::Class(c), Prediction::Categorical { probs }) => classification_terms(probs, c)?,
        _ => return Err(Error::invalid("target", "target kind does not match the head")),
    };
    Ok(LossValue::compose(loss, nll, err, 0.0, usize::from(clamped)))
}

/// Gradient of the per-sample data loss with respect to the raw head,
/// through the softplus and softmax output maps.
pub fn loss_gradient_at_head(
    spec: &NetworkSpec,
    head: &[f64],
    y: Target<'_>,
    loss: &LossSpec,
) -> Result<Vec<f64>> {
    if head.len() != spec.head_width() {
        return Err(Error::shape("head", head.len(), spec.head_width()));
    }
    let a = loss.alpha;
    match (spec.head, y) {
        (HeadKind::Gaussian, Target::Values(t)) => {
            if t.len() != spec.outputs {
                return Err(Error::shape("target", t.len(), spec.outputs));
            }
            let mut g = vec![0.0; head.len()];
            for (d, &target) in t.iter().enumerate() {
                let mu = head[2 * d];
                let raw = head[2 * d + 1];
                let var = softplus(raw) + spec.variance_floor;
                let r = mu - target;
                g[2 * d] = (1.0 - a) * r / var + a * 2.0 * r;
                let d_var = (1.0 - a) * (0.5 / var - r * r / (2.0 * var * var));
                g[2 * d + 1] = d_var * sigmoid(raw);
            }
            Ok(g)
        }
        (HeadKind::Point, Target::Values(t)) => {
            if t.len() != spec.outputs {
                return Err(Error::shape("target", t.len(), spec.outputs));
            }
            Ok(head.iter().zip(t).map(|(m, y)| 2.0 * (m - y)).collect())
        }
        (HeadKind::Softmax, Target::Class(c)) => {
            if c >= head.len() {
                return Err(Error::invalid("class label", format!("{c} with {} classes", head.len())));
            }
            let p = softmax(head);
            // d/dh of -ln p_c is p - e_c.
            // Brier: dB/dp_k = 2(p_k - e_k), through the softmax Jacobian.
            let gp: Vec<f64> = (0..p.len())
                .map(|k| 2.0 * (p[k] - if k == c { 1.0 } else { 0.0 }))
                .collect();
            let inner: f64 = gp.iter().zip(p.iter()).map(|(g, p)| g * p).sum();
            Ok((0..p.len())
                .map(|j| {
                    let nll = p[j] - if j == c { 1.0 } else { 0.0 };
                    let brier = p[j] * (gp[j] - inner);
                    (1.0 - a) * nll + a * brier
                })
                .collect())
        }
        _ => Err(Error::invalid("target", "target kind does not match the head")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Activation;
    use crate::numerics::{RngStream, Vector};

    fn gaussian(mean: f64, var: f64) -> Prediction {
        Prediction::Gaussian {
            mean: Vector(vec![mean]),
            variance: Vector(vec![var]),
        }
    }

    fn no_params() -> NetworkParams {
        NetworkParams {
            weights: vec![],
            biases: vec![],
        }
    }

    fn some_params() -> NetworkParams {
        let spec =
            NetworkSpec::mlp(3, &[4], Activation::Relu, HeadKind::Gaussian, 1, 1.0, 0.5).unwrap();
        NetworkParams::init(&spec, &mut RngStream::new(1, 0)).unwrap()
    }

    #[test]
    fn regression_at_mode_unit_variance() {
        let spec = LossSpec::new(Task::Regression, 0.3, 0.0, 0.0).unwrap();
        let v = regression_loss(&gaussian(0.0, 1.0), &[0.0], &no_params(), &spec).unwrap();
        assert_eq!((v.nll, v.error), (0.0, 0.0));
    }

    #[test]
    fn regression_unit_residual() {
        let spec = LossSpec::new(Task::Regression, 0.3, 0.0, 0.0).unwrap();
        let v = regression_loss(&gaussian(0.0, 1.0), &[1.0], &no_params(), &spec).unwrap();
        assert_eq!(v.error, 1.0);
        assert_eq!(v.nll, 0.5);
        assert!((v.total - (0.7 * 0.5 + 0.3)).abs() < 1e-15);
    }

    #[test]
    fn alpha_endpoints_are_bit_exact() {
        let params = some_params();
        let w2 = params.weight_sq_norm();
        let pred = Prediction::Gaussian {
            mean: Vector(vec![0.3, -1.1]),
            variance: Vector(vec![0.4, 2.5]),
        };
        let y = [1.2, 0.7];
        let s0 = LossSpec::new(Task::Regression, 0.0, 0.013, 0.021).unwrap();
        let v0 = regression_loss(&pred, &y, &params, &s0).unwrap();
        assert_eq!(v0.total, v0.nll + 0.021 * w2);
        let s1 = s0.with_alpha(1.0);
        let v1 = regression_loss(&pred, &y, &params, &s1).unwrap();
        assert_eq!(v1.total, v1.error + 0.013 * w2);

        let probs = Prediction::Categorical {
            probs: Vector(vec![0.2, 0.5, 0.3]),
        };
        let c0 = LossSpec::new(Task::Classification, 0.0, 0.013, 0.021).unwrap();
        let v0 = classification_loss(&probs, 1, &params, &c0).unwrap();
        assert_eq!(v0.total, v0.nll + 0.021 * w2);
        let v1 = classification_loss(&probs, 1, &params, &c0.with_alpha(1.0)).unwrap();
        assert_eq!(v1.total, v1.error + 0.013 * w2);
    }

    #[test]
    fn non_positive_variance_is_an_invariant_error() {
        let spec = LossSpec::new(Task::Regression, 0.5, 0.0, 0.0).unwrap();
        let err = regression_loss(&gaussian(0.0, 0.0), &[0.0], &no_params(), &spec).unwrap_err();
        assert_eq!(err.category(), "invariant");
    }

    #[test]
    fn classification_examples() {
        let spec = LossSpec::new(Task::Classification, 0.5, 0.0, 0.0).unwrap();
        let uniform = Prediction::Categorical {
            probs: Vector(vec![1.0 / 6.0; 6]),
        };
        for y in 0..6 {
            let v = classification_loss(&uniform, y, &no_params(), &spec).unwrap();
            assert!((v.nll - 6f64.ln()).abs() < 1e-12);
        }
        let one_hot = Prediction::Categorical {
            probs: Vector(vec![0.0, 1.0, 0.0]),
        };
        let v = classification_loss(&one_hot, 1, &no_params(), &spec).unwrap();
        assert_eq!((v.nll, v.error), (0.0, 0.0));
        let half = Prediction::Categorical {
            probs: Vector(vec![0.5, 0.5]),
        };
        assert_eq!(classification_loss(&half, 0, &no_params(), &spec).unwrap().error, 0.5);
        let v = classification_loss(&one_hot, 0, &no_params(), &spec).unwrap();
        assert_eq!(v.clamped, 1);
        assert!((v.nll - (-PROB_CLAMP.ln())).abs() < 1e-12);
        assert!(classification_loss(&half, 2, &no_params(), &spec).is_err());
    }

    #[test]
    fn alpha_one_ignores_variance_channel() {
        let spec =
            NetworkSpec::mlp(1, &[], Activation::Relu, HeadKind::Gaussian, 2, 1.0, 1.0).unwrap();
        let loss = LossSpec::new(Task::Regression, 1.0, 0.0, 0.0).unwrap();
        let g = loss_gradient_at_head(&spec, &[0.3, -2.0, 1.0, 4.0], Target::Values(&[1.0, -1.0]), &loss)
            .unwrap();
        assert_eq!(g[1], 0.0);
        assert_eq!(g[3], 0.0);
    }

    #[test]
    fn symmetric_binary_brier_gradient() {
        let spec =
            NetworkSpec::mlp(1, &[], Activation::Relu, HeadKind::Softmax, 2, 1.0, 1.0).unwrap();
        let loss = LossSpec::new(Task::Classification, 1.0, 0.0, 0.0).unwrap();
        let g = loss_gradient_at_head(&spec, &[0.0, 0.0], Target::Class(0), &loss).unwrap();
        assert!(g[0] < 0.0);
        assert_eq!(g[0], -g[1]);
    }

    #[test]
    fn loss_spec_validation() {
        assert!(LossSpec::new(Task::Regression, 1.5, 0.0, 0.0).is_err());
        assert!(LossSpec::new(Task::Regression, 0.5, -1.0, 0.0).is_err());
        let point =
            NetworkSpec::mlp(1, &[], Activation::Relu, HeadKind::Point, 1, 1.0, 1.0).unwrap();
        assert!(LossSpec::new(Task::Regression, 0.5, 0.0, 0.0).unwrap().check_head(&point).is_err());
        assert!(LossSpec::new(Task::Regression, 1.0, 0.0, 0.0).unwrap().check_head(&point).is_ok());
        assert!(LossSpec::new(Task::Classification, 1.0, 0.0, 0.0)
            .unwrap()
            .check_head(&point)
            .is_err());
    }

    /// Central finite differences of `head_loss().total` against the analytic head gradient.
    #[test]
    fn head_gradient_matches_finite_differences() {
        let h = 1e-6;
        let mut rng = RngStream::new(31, 0);
        for alpha in [0.0, 0.5, 1.0] {
            for case in 0..20 {
                let (spec, target_vals, class) = if case % 2 == 0 {
                    let s = NetworkSpec::mlp(1, &[], Activation::Relu, HeadKind::Gaussian, 2, 1.0, 1.0)
                        .unwrap();
                    (s, vec![rng.normal(), rng.normal()], 0)
                } else {
                    let s = NetworkSpec::mlp(1, &[], Activation::Relu, HeadKind::Softmax, 4, 1.0, 1.0)
                        .unwrap();
                    (s, vec![], rng.below(4))
                };
                let target = if spec.head == HeadKind::Softmax {
                    Target::Class(class)
                } else {
                    Target::Values(&target_vals)
                };
                let task = spec.task();
                let loss = LossSpec::new(task, alpha, 0.0, 0.0).unwrap();
                let head: Vec<f64> = (0..spec.head_width()).map(|_| rng.uniform_range(-2.0, 2.0)).collect();
                let g = loss_gradient_at_head(&spec, &head, target, &loss).unwrap();
                for j in 0..head.len() {
                    let mut hp = head.clone();
                    hp[j] += h;
                    let mut hm = head.clone();
                    hm[j] -= h;
                    let fp = head_loss(&spec, &hp, target, &loss).unwrap().total;
                    let fm = head_loss(&spec, &hm, target, &loss).unwrap().total;
                    let numeric = (fp - fm) / (2.0 * h);
                    let denom = g[j].abs().max(numeric.abs()).max(1e-4);
                    assert!(
                        (g[j] - numeric).abs() / denom <= 1e-5,
                        "alpha {alpha} case {case} j {j}: {} vs {numeric}",
                        g[j]
                    );
                }
            }
        }
    }

    #[test]
    fn gaussian_nll_is_minimized_at_truth() {
        // Proper-scoring check: empirical mean NLL over draws from N(1.5, 0.8²).
        let (mu_true, var_true) = (1.5, 0.64);
        let mut rng = RngStream::new(123, 0);
        let ys: Vec<f64> = (0..100_000).map(|_| mu_true + 0.8 * rng.normal()).collect();
        let score = |mu: f64, var: f64| {
            ys.iter()
                .map(|y| regression_terms(&[mu], &[var], &[*y]).unwrap().0)
                .sum::<f64>()
                / ys.len() as f64
        };
        let mus: Vec<f64> = (0..21).map(|i| 1.0 + 0.05 * i as f64).collect();
        let vars: Vec<f64> = (0..21).map(|i| 0.34 + 0.03 * i as f64).collect();
        let mut best = (0, 0, f64::INFINITY);
        for (i, &m) in mus.iter().enumerate() {
            for (j, &v) in vars.iter().enumerate() {
                let s = score(m, v);
                if s < best.2 {
                    best = (i, j, s);
                }
            }
        }
        assert!((mus[best.0] - mu_true).abs() <= 0.05 + 1e-12);
        assert!((vars[best.1] - var_true).abs() <= 0.03 + 1e-12);
    }

    proptest::proptest! {
        #[test]
        fn brier_bounded(raw in proptest::collection::vec(-30f64..30.0, 2..8), class_seed in 0usize..100) {
            let p = softmax(&raw);
            let class = class_seed % p.len();
            let (_, brier, _) = classification_terms(&p, class).unwrap();
            proptest::prop_assert!((0.0..=2.0).contains(&brier));
        }
    }
}
