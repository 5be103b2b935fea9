//! Dense linear algebra, counter-free deterministic random streams and the
//! standard normal distribution functions used throughout the crate.

mod matrix;
mod normal;
mod rng;

pub use matrix::{Matrix, Vector};
pub use normal::{normal_cdf, normal_pdf, standard_normal_quantile};
pub use rng::{bernoulli_vector, RngStream};
