//! Best responses and Nash equilibria in the class of affine feedback
//! strategies, plus the open-loop equilibrium.
//!
//! All Riccati and adjoint equations use one normalization: the adjoint
//! drivers carry `2𝔽₀`, `2f₀` and `2Q`, the quadratic terms carry a factor
//! `½`, and optimal controls are `−½ R0⁻¹ 𝔹₀ᵀ y` and `−½ R⁻¹ Bᵀ ỹ`. In this
//! normalization each Riccati variable is twice the Hessian of the
//! corresponding value function. Halving every Riccati variable turns the
//! equations into the textbook LQR form `Ṗ + PA + AᵀP − P B R⁻¹ Bᵀ P + Q = 0`
//! with gain `−R⁻¹ Bᵀ P`; the gains are identical either way.

mod best_response;
mod closed_loop;
mod iteration;
mod open_loop;
mod strategy;

pub use best_response::{major_best_response, minor_best_response, minor_riccati, MajorResponse, MinorResponse};
pub use closed_loop::{fixed_point_residual, solve_closed_loop, ClosedLoopSolution};
pub use iteration::{best_response_iteration, IterationOptions, IterationOutcome};
pub use open_loop::{solve_open_loop, OpenLoopSolution};
pub use strategy::{FeedbackStrategy, MajorGains, MinorGains};
