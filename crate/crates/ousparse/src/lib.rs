//! Sparse drift estimation for Levy-driven Ornstein-Uhlenbeck processes.
//!
//! The crate simulates multivariate OU processes driven by Brownian motion
//! plus compound-Poisson jumps, and recovers the drift matrix from discrete
//! observations via localized and truncated least-squares contrasts with
//! l1 (Lasso) and sorted-l1 (Slope) penalties, alongside plain least-squares
//! baselines. A scenario runner reproduces full simulation studies from a
//! JSON description.

pub mod contrast;
pub mod error;
pub mod estimators;
pub mod levy;
pub mod linalg;
pub mod metrics;
pub mod ou;
pub mod prox;
pub mod report;
pub mod rng;
pub mod runner;
pub mod scenario;
pub mod tuning;
pub mod util;

pub use error::{Error, Result};
