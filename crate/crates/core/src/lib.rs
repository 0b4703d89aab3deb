//! Green's-function machinery for second-order two-point boundary value
//! problems on the unit interval, at desk scale (state space ℝᴺ, N small).
//!
//! The crate builds kernels for general two-point boundary conditions,
//! checks the solvability conditions numerically, runs fixed-point solvers
//! for the associated Hammerstein problems, estimates the spectral radius of
//! the comparison operator, and explores solution funnels of box-valued
//! problems.
//!
//! All operations are pure given their inputs; closures stored in problem
//! descriptions are `Send + Sync`, so independent solves can run
//! concurrently. Randomized routines take explicit seeds.

pub mod error;
pub mod funnel;
pub mod greens;
pub mod hammerstein;
pub mod numerics;
pub mod spectral;

pub use error::{Error, Result};
