//! Linear-quadratic mean field games with one major player and a continuum
//! of minor players.
//!
//! The crate is `no_std` (it needs `alloc`) and contains only the numerics:
//!
//! * [`model`] holds the game coefficients and reduces them to the block
//!   state `[X̄; X⁰]` seen by the major player.
//! * [`riccati`] integrates matrix ODEs backward and forward on a uniform grid.
//! * [`equilibrium`] computes best responses, the closed-loop Nash fixed point
//!   and the open-loop equilibrium obtained by affine decoupling.
//! * [`evaluator`] evaluates expected costs exactly through moment ODEs and
//!   certifies that a strategy profile admits no profitable deviation.
//! * [`simulator`] runs seeded Euler–Maruyama simulations of the finite game
//!   and of the conditional mean-field limit.
//! * [`flocking`] embeds the leader/follower flocking model.
//!
//! File formats, configuration and the command line live in the `lqmfg` crate.
#![no_std]
// `!(x > 0.0)` is used on purpose so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod equilibrium;
pub mod error;
pub mod evaluator;
pub mod flocking;
pub mod linalg;
pub mod model;
pub mod riccati;
pub mod rng;
pub mod simulator;

pub use error::{Error, Result};
pub use nalgebra::{DMatrix, DVector};
