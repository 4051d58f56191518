//! Solver and verifier for a least-action principle governing the mixing of
//! two fluids of different density.
//!
//! The action functional integrates a degenerate kinetic cost of the gradient
//! of an interface-height potential against a gravitational potential.  The
//! solver minimizes a regularized action over a rectangular space-time domain
//! by damped Newton iteration with a continuation loop in the regularization
//! parameter, and the analysis/subsolution modules turn a converged minimizer
//! into checkable certificates (energy balances, first integral, admissible
//! subsolution data, two-phase dictionary).

pub mod analysis;
pub mod cli;
pub mod config;
pub mod error;
pub mod grid;
pub mod integrand;
pub mod potential;
pub mod solver;
pub mod subsolution;

pub use error::CoreError;
