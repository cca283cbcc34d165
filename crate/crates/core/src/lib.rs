//! Row-sparse recovery from Poisson-corrupted multiple measurement vectors
//! with tuning-free confidence constraints.
//!
//! The unknown nonnegative K×N matrix `X` is observed through N known
//! mixing matrices, `y_i ~ Poisson(A_i x_i)`. Recovery minimizes the ℓ₁,₂
//! norm of `X` over a confidence set `{X : f(X) ≤ ε}` whose radius follows
//! from the counts alone, for a least-squares (`Ls`) or I-divergence (`Ml`)
//! data fit.

pub mod confidence;
pub mod divergence;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod format;
pub mod problem;
pub mod rng;
pub mod solver;

pub use confidence::{ConfidenceSpec, Framework, RecoveryCertificate};
pub use error::{Error, Result};
pub use eval::{RecoveryReport, SupportResult};
pub use problem::{GroundTruth, InstanceParams, MixingSet, MmvSystem, Observations, ProblemInstance};
pub use solver::{SolverConfig, SolverResult};
