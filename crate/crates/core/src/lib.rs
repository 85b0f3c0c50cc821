//! Preconditioned hidden gradient descent for N-player games whose payoffs
//! are defined through latent variables `z = phi(x)`.
//!
//! Players act on control variables `x`; a smooth per-player representation
//! map `phi_i` (a small two-layer MLP) carries them into a latent space where
//! the game is monotone. The core algorithm preconditions each player's
//! control-layer gradient by the pseudoinverse Gram matrix of the map's
//! Jacobian, `P_i = (J_i^T J_i)^+`, so that the latent image of an iterate
//! behaves like a plain gradient step on the latent game.
//!
//! Module map:
//! - [`numkit`]: dense matrices, Jacobi SVD, Moore-Penrose pseudoinverse
//! - [`repmaps`]: representation maps with exact analytic Jacobians
//! - [`games`]: the latent game suite and its vector fields
//! - [`dynamics`]: the discrete recursions and the continuous flow
//! - [`merit`]: convergence metrics (energy, gaps, template residuals)
//! - [`ratefit`]: convergence-rate fits over trajectory data
//! - [`sweep`]: multi-seed execution, parallel by default
//! - [`verify`]: the runtime invariant-check suites behind `verify`

pub mod dynamics;
pub mod error;
pub mod games;
pub mod merit;
pub mod numkit;
pub mod ratefit;
pub mod repmaps;
pub mod sweep;
pub mod verify;

pub use error::{Error, Result};
pub use numkit::{DenseMatrix, SvdFactors};

/// A per-player collection of real vectors (control or latent profiles).
pub type Profile = Vec<Vec<f64>>;

/// Flattens a profile into a single vector, player blocks in order.
pub fn flatten(profile: &Profile) -> Vec<f64> {
    profile.concat()
}

/// Squared Euclidean distance between two profiles.
pub fn profile_dist2(a: &Profile, b: &Profile) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(pa, pb)| pa.iter().zip(pb).map(|(x, y)| (x - y) * (x - y)))
        .sum()
}
