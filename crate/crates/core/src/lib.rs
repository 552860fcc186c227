//! Weak joint stochastic dominance (`st:wj`) for dependent pairs.
//!
//! `X ≤st:wj Y` holds when `P(X − Y > t) ≤ P(Y − X > t)` for every real `t`:
//! the difference `Y − X` is stochastically larger than `X − Y`. The crate
//! provides exact checks on finite laws, an asymptotic test on paired
//! samples, classical paired baselines, the benchmark scenarios with a
//! rejection-rate harness, and a small returns/portfolio pipeline.

pub mod baselines;
pub mod distributions;
pub mod empirical;
pub mod error;
pub mod finance;
pub mod gptest;
pub mod montecarlo;
pub mod oracle;
pub mod rng;

pub use empirical::PairedSample;
pub use error::{Error, Result};
pub use gptest::TestResult;
