use std::f64::consts::TAU;

use crate::data::{Dataset, Provenance, Targets};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngStream};

pub const HETERO_X_RANGE: (f64, f64) = (-4.0, 4.0);

pub fn heteroscedastic_mean(x: f64) -> f64 {
    (2.0 * x).sin() + 0.3 * x
}

pub fn heteroscedastic_noise_std(x: f64) -> f64 {
    0.05 + 0.2 * x.abs()
}

/// One-dimensional regression task whose noise grows with `|x|`.
pub fn gen_heteroscedastic(n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::invalid("n", "must be at least 1"));
    }
    let mut rng = RngStream::new(seed, 0x4E7E_0001);
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let x = rng.uniform_range(HETERO_X_RANGE.0, HETERO_X_RANGE.1);
        xs.push(x);
        ys.push(heteroscedastic_mean(x) + heteroscedastic_noise_std(x) * rng.normal());
    }
    Dataset::new(
        Matrix::new(n, 1, xs)?,
        Targets::Values(Matrix::new(n, 1, ys)?),
        Provenance::Heteroscedastic { n, seed },
    )
}

/// `classes` unit-variance 2-D Gaussian clusters; cluster `c` is centred at
/// angle `2πc/K` on a circle of radius `separation`. Labels are drawn
/// uniformly.
pub fn gen_blobs(n: usize, classes: usize, separation: f64, seed: u64) -> Result<Dataset> {
    if n == 0 || classes < 2 {
        return Err(Error::invalid("blobs", "need n >= 1 and at least 2 classes"));
    }
    if !(separation >= 0.0 && separation.is_finite()) {
        return Err(Error::invalid("separation", format!("{separation}")));
    }
    let mut rng = RngStream::new(seed, 0xB10B_0002);
    let mut xs = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let c = rng.below(classes);
        let angle = TAU * c as f64 / classes as f64;
        xs.push(separation * angle.cos() + rng.normal());
        xs.push(separation * angle.sin() + rng.normal());
        labels.push(c);
    }
    Dataset::new(
        Matrix::new(n, 2, xs)?,
        Targets::Classes {
            labels,
            num_classes: classes,
        },
        Provenance::Blobs {
            n,
            classes,
            separation,
            seed,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_at_origin() {
        assert_eq!(heteroscedastic_noise_std(0.0), 0.05);
        assert!((heteroscedastic_noise_std(-4.0) - 0.85).abs() < 1e-15);
    }

    #[test]
    fn seeded_determinism() {
        assert_eq!(gen_heteroscedastic(100, 3).unwrap(), gen_heteroscedastic(100, 3).unwrap());
        assert_ne!(gen_heteroscedastic(100, 3).unwrap(), gen_heteroscedastic(100, 4).unwrap());
        assert_eq!(gen_blobs(100, 4, 2.0, 3).unwrap(), gen_blobs(100, 4, 2.0, 3).unwrap());
    }

    #[test]
    fn residual_std_near_the_edges() {
        let d = gen_heteroscedastic(100_000, 11).unwrap();
        let Targets::Values(y) = &d.targets else { unreachable!() };
        let res: Vec<f64> = (0..d.len())
            .filter(|&i| d.inputs[(i, 0)].abs() >= 3.9)
            .map(|i| y[(i, 0)] - heteroscedastic_mean(d.inputs[(i, 0)]))
            .collect();
        let n = res.len() as f64;
        let mean = res.iter().sum::<f64>() / n;
        let sd = (res.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        // Expected std in the band |x| ∈ [3.9, 4] is about 0.84.
        assert!((sd - 0.85).abs() <= 0.05 * 0.85, "{sd} from {n} points");
    }

    #[test]
    fn generator_moments_match_analytic_values() {
        // E[y] = 0 by symmetry; E[y²] = E[sin²2x] + 0.09 E[x²] + 0.6 E[x sin 2x] + E[s(x)²].
        let d = gen_heteroscedastic(100_000, 5).unwrap();
        let Targets::Values(y) = &d.targets else { unreachable!() };
        let ys = y.as_slice();
        let n = ys.len() as f64;
        let mean = ys.iter().sum::<f64>() / n;
        let second = ys.iter().map(|v| v * v).sum::<f64>() / n;
        // Quadrature over x ∈ [-4, 4] with density 1/8.
        let steps = 200_000;
        let h = 8.0 / steps as f64;
        let mut ey2 = 0.0;
        for i in 0..steps {
            let x = -4.0 + (i as f64 + 0.5) * h;
            ey2 += (heteroscedastic_mean(x).powi(2) + heteroscedastic_noise_std(x).powi(2)) * h / 8.0;
        }
        let var = second - mean * mean;
        assert!(mean.abs() <= 5.0 * (var / n).sqrt());
        let fourth = ys.iter().map(|v| v.powi(4)).sum::<f64>() / n;
        let se2 = ((fourth - second * second) / n).sqrt();
        assert!((second - ey2).abs() <= 5.0 * se2, "{second} vs {ey2}");
    }

    #[test]
    fn blobs_separation_zero_is_chance() {
        // Identical centres: the Bayes rule cannot beat 1/K.
        let d = gen_blobs(50_000, 4, 0.0, 2).unwrap();
        let Targets::Classes { labels, .. } = &d.targets else { unreachable!() };
        let majority = (0..4).map(|c| labels.iter().filter(|&&l| l == c).count()).max().unwrap();
        assert!((majority as f64 / 50_000.0 - 0.25).abs() < 0.01);
    }

    #[test]
    fn well_separated_blobs_are_nearly_perfectly_separable() {
        let d = gen_blobs(100_000, 2, 6.0, 8).unwrap();
        let Targets::Classes { labels, .. } = &d.targets else { unreachable!() };
        // Bayes rule for centres (±6, 0) is the sign of x0.
        let errors = (0..d.len())
            .filter(|&i| usize::from(d.inputs[(i, 0)] < 0.0) != labels[i])
            .count();
        assert!((errors as f64) / 100_000.0 < 0.002);
    }

    #[test]
    fn blob_classes_balanced() {
        let n = 60_000;
        let d = gen_blobs(n, 6, 3.0, 1).unwrap();
        let Targets::Classes { labels, .. } = &d.targets else { unreachable!() };
        let p = 1.0 / 6.0;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        for c in 0..6 {
            let count = labels.iter().filter(|&&l| l == c).count() as f64;
            assert!((count - n as f64 * p).abs() <= 5.0 * sd);
        }
    }
}
