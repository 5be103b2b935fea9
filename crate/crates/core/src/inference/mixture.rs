use crate::error::{Error, Result};
use crate::inference::Prediction;
use crate::numerics::Vector;

/// Collapses a uniform mixture of per-dimension Gaussians to one Gaussian
/// with the mixture's exact mean and variance:
/// `μ̂ = mean(μ_m)`, `σ̂² = mean(σ_m² + μ_m²) − μ̂²`.
///
/// The variance is evaluated as `mean(σ_m²) + mean((μ_m − μ̂)²)`, which is the
/// same quantity without the cancellation of the raw second-moment form.
pub fn moment_match(components: &[(Vector, Vector)]) -> Result<(Vector, Vector)> {
    let (first_mean, _) = components
        .first()
        .ok_or_else(|| Error::invalid("mixture", "no components"))?;
    let dims = first_mean.len();
    if components
        .iter()
        .any(|(m, v)| m.len() != dims || v.len() != dims)
    {
        return Err(Error::shape("mixture", dims, "ragged components"));
    }
    if components.len() == 1 {
        return Ok(components[0].clone());
    }
    let k = components.len() as f64;
    let mut mean = Vector::zeros(dims);
    let mut aleatoric = Vector::zeros(dims);
    for (m, v) in components {
        for d in 0..dims {
            mean[d] += m[d];
            aleatoric[d] += v[d];
        }
    }
    for d in 0..dims {
        mean[d] /= k;
        aleatoric[d] /= k;
    }
    let mut variance = aleatoric;
    for d in 0..dims {
        let spread = components
            .iter()
            .map(|(m, _)| (m[d] - mean[d]).powi(2))
            .sum::<f64>()
            / k;
        variance[d] += spread;
    }
    Ok((mean, variance))
}

/// Uniform average of class-probability vectors.
pub fn average_probs(members: &[Vector]) -> Result<Vector> {
    let first = members
        .first()
        .ok_or_else(|| Error::invalid("mixture", "no components"))?;
    if members.len() == 1 {
        return Ok(first.clone());
    }
    let mut out = Vector::zeros(first.len());
    for p in members {
        if p.len() != out.len() {
            return Err(Error::shape("probability average", out.len(), p.len()));
        }
        for (o, v) in out.iter_mut().zip(p.iter()) {
            *o += v;
        }
    }
    let k = members.len() as f64;
    for o in out.iter_mut() {
        *o /= k;
    }
    Ok(out)
}

/// Aggregates member predictions of the same kind as a uniform mixture.
pub fn aggregate(preds: Vec<Prediction>) -> Result<Prediction> {
    match preds.first() {
        None => Err(Error::invalid("mixture", "no components")),
        Some(Prediction::Gaussian { .. }) => {
            let comps = preds
                .into_iter()
                .map(|p| match p {
                    Prediction::Gaussian { mean, variance } => Ok((mean, variance)),
                    _ => Err(Error::invalid("mixture", "mixed prediction kinds")),
                })
                .collect::<Result<Vec<_>>>()?;
            let (mean, variance) = moment_match(&comps)?;
            Ok(Prediction::Gaussian { mean, variance })
        }
        Some(Prediction::Categorical { .. }) => {
            let members = preds
                .into_iter()
                .map(|p| match p {
                    Prediction::Categorical { probs } => Ok(probs),
                    _ => Err(Error::invalid("mixture", "mixed prediction kinds")),
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Prediction::Categorical {
                probs: average_probs(&members)?,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn comp(m: f64, v: f64) -> (Vector, Vector) {
        (Vector(vec![m]), Vector(vec![v]))
    }

    #[test]
    fn two_unit_gaussians() {
        let (m, v) = moment_match(&[comp(0.0, 1.0), comp(2.0, 1.0)]).unwrap();
        assert_eq!(m[0], 1.0);
        assert_eq!(v[0], 2.0);
    }

    #[test]
    fn identical_components_keep_their_variance() {
        let c = comp(0.37, 0.81);
        let (m, v) = moment_match(&vec![c; 7]).unwrap();
        assert!((m[0] - 0.37).abs() < 1e-15);
        assert!((v[0] - 0.81).abs() < 1e-15);
    }

    #[test]
    fn singleton_is_identity() {
        let c = (Vector(vec![1.0, -2.0]), Vector(vec![0.5, 3.0]));
        assert_eq!(moment_match(&[c.clone()]).unwrap(), c);
    }

    #[test]
    fn disagreeing_classifiers_average() {
        let p = average_probs(&[Vector(vec![1.0, 0.0]), Vector(vec![0.0, 1.0])]).unwrap();
        assert_eq!(p.0, vec![0.5, 0.5]);
    }

    #[test]
    fn rejects_empty_and_ragged() {
        assert!(moment_match(&[]).is_err());
        assert!(moment_match(&[comp(0.0, 1.0), (Vector(vec![0.0, 1.0]), Vector(vec![1.0, 1.0]))]).is_err());
        assert!(aggregate(vec![]).is_err());
    }

    proptest! {
        #[test]
        fn matches_raw_second_moment_form(
            comps in proptest::collection::vec((-10f64..10.0, 0.01f64..5.0), 1..30)
        ) {
            let k = comps.len() as f64;
            let mu_hat = comps.iter().map(|c| c.0).sum::<f64>() / k;
            let raw = comps.iter().map(|c| c.1 + c.0 * c.0).sum::<f64>() / k - mu_hat * mu_hat;
            let mean_var = comps.iter().map(|c| c.1).sum::<f64>() / k;
            let cs: Vec<_> = comps.iter().map(|&(m, v)| comp(m, v)).collect();
            let (m, v) = moment_match(&cs).unwrap();
            prop_assert!((m[0] - mu_hat).abs() <= 1e-12 * (1.0 + mu_hat.abs()));
            prop_assert!((v[0] - raw).abs() <= 1e-10 * (1.0 + raw.abs()));
            prop_assert!(v[0] >= mean_var - 1e-12);
        }

        #[test]
        fn averaged_probs_stay_normalized(
            raw in proptest::collection::vec(proptest::collection::vec(-5f64..5.0, 4), 1..10)
        ) {
            let members: Vec<Vector> = raw.iter().map(|r| crate::network::softmax(r)).collect();
            let p = average_probs(&members).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            prop_assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
