//! Simulator and algorithm library for competitive multi-platform crowdsensing
//! task assignment: perception-aware matching (PRISM), the two-sided bandit
//! (PACMAB), the comparison baselines and the metric pipeline.

pub mod assignment;
pub mod baselines;
pub mod cli;
pub mod domain;
pub mod error;
pub mod metrics;
pub mod mu;
pub mod output;
pub mod pacmab;
pub mod prism;
pub mod rng;
pub mod scenario;
pub mod sim;
pub mod stability;
pub mod strategy;

pub use error::{Error, Result};
