//! Certification toolkit for continuous-variable (CV) graph states.
//!
//! A CV graph state is built by applying weighted CZ gates to momentum
//! eigenstates; its nullifiers `g_i = p_i - sum_j W_ij x_j` annihilate the
//! ideal state, and a certification protocol tests how close a source's
//! registers come to satisfying them under noisy homodyne measurement.
//!
//! The crate splits into:
//!
//! - [`graph`]: weighted graphs, nullifier coefficients, combined measurement
//!   noise widths.
//! - [`gaussian`]: covariance-matrix model of finitely squeezed graph states,
//!   displacement, and seeded sampling of nullifier measurements.
//! - [`bounds`]: closed-form completeness/soundness/concentration bound
//!   evaluators with clamping transparency.
//! - [`protocol`]: Monte Carlo execution of the 4-step certification protocol
//!   against honest and adversarial sources.
//! - [`planner`]: parameter selection from a target joint-failure probability
//!   and acceptance probability.
//! - [`applications`]: teleportation deviation, MBQC noise recurrences, and
//!   the metrology Fisher-information lower bound for certified states.
//! - [`oracles`]: independent brute-force and quadrature verifiers used to
//!   gate the rest of the crate.
//!
//! # Width convention
//!
//! Every "width" parameter `w` in this crate parametrizes a Gaussian density
//! proportional to `exp(-t^2/w^2)`, so the standard deviation is `w/sqrt(2)`
//! and the variance `w^2/2`. This is the unique convention under which the
//! single-measurement pass probability `(1 + (delta^2 + 1/sigma^2)/eps^2)^(-1/2)`
//! and the local-noise additivity `delta^2 = nu^2 + mu^2` hold simultaneously.
//! See [`gaussian::WidthConvention`].

// Validation guards use the `!(x > 0.0)` form deliberately so NaN inputs are
// rejected along with out-of-range ones.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod applications;
pub mod bounds;
pub mod error;
pub mod gaussian;
pub mod graph;
pub mod oracles;
pub mod planner;
pub mod protocol;

pub use error::Error;

/// Crate result alias.
pub type Result<T> = std::result::Result<T, Error>;
