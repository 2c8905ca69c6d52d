//! Moment functionals for order-2 chaoses `sum a_ij X_i Y_j` with
//! coefficients in `l_q^m`, generated by symmetric variables with
//! logarithmically concave tails.
//!
//! The crate computes the deterministic terms of two-sided moment bounds
//! (dual-ball norms, bilinear norms, mixed-norm suprema) and estimates the
//! corresponding moments by Monte Carlo so the two can be compared.

pub mod error;
pub mod special;
pub mod tails;
pub mod dual_norms;
pub mod tensor;
pub mod monte_carlo;
pub mod process;
pub mod bounds;
pub mod harness;

pub use error::{ChaosError, Result};
pub use tails::{Family, Sampler, TailDistribution, TailSpec};
pub use tensor::CoefficientTensor;
pub use monte_carlo::{McConfig, McEstimate};
pub use dual_norms::{DualBall, NormResult, SolverConfig};
pub use bounds::{BoundKind, BoundReport, TermName};
