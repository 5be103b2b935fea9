//! Fully-connected dropout networks trained with a tunable proper scoring
//! rule, single-pass predictive uncertainty, Monte-Carlo dropout and
//! ensemble baselines, an exact GP baseline, and calibration metrics.

pub mod calibration;
pub mod cli;
pub mod data;
pub mod error;
pub mod evaluate;
pub mod gp;
pub mod inference;
pub mod losses;
pub mod network;
pub mod numerics;
pub mod training;

pub use error::{Error, Result};
