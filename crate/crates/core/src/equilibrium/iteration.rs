use alloc::vec::Vec;

use super::best_response::{best_response_pair, minor_riccati_with};
use super::strategy::FeedbackStrategy;
use crate::error::{Error, Result};
use crate::model::{assemble_blocks, MajorMinorLqModel};
use crate::riccati::Scheme;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationOptions {
    pub max_iter: usize,
    pub tol: f64,
    /// Weight on the new best response; `1.0` is plain replacement.
    pub damping: f64,
}

impl Default for IterationOptions {
    fn default() -> Self {
        Self { max_iter: 50, tol: 1e-8, damping: 1.0 }
    }
}

#[derive(Debug, Clone)]
pub struct IterationOutcome {
    pub strategy: FeedbackStrategy,
    /// Sup-norm change of the strategy at each iteration.
    pub history: Vec<f64>,
    pub converged: bool,
}

impl IterationOutcome {
    pub fn iterations(&self) -> usize {
        self.history.len()
    }
}

/// Picard iteration on the best-response map, starting from `initial`.
///
/// Both best responses are computed against the previous profile. Running
/// out of iterations is reported through `converged`, not as an error.
pub fn best_response_iteration(
    model: &MajorMinorLqModel,
    initial: &FeedbackStrategy,
    options: IterationOptions,
) -> Result<IterationOutcome> {
    if !(options.tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    if !(options.damping > 0.0 && options.damping <= 1.0) {
        return Err(Error::InvalidArgument("damping must lie in (0, 1]".into()));
    }
    model.ensure_valid()?;
    let blocks = assemble_blocks(model)?;
    let grid = *initial.grid();
    initial.check(&model.dims, &grid)?;
    let s =
        minor_riccati_with(model, &blocks, &grid, Scheme::Rk4).map_err(|e| e.with_context("minor best response"))?;

    let mut current = initial.clone();
    let mut history = Vec::new();
    for _ in 0..options.max_iter {
        let (major, minor) = best_response_pair(model, &blocks, &s, &current)?;
        let response = FeedbackStrategy { major: major.gains, minor: minor.gains };
        let next = if options.damping == 1.0 { response } else { response.blend(&current, options.damping) };
        let change = next.sup_distance(&current);
        history.push(change);
        current = next;
        if change <= options.tol {
            return Ok(IterationOutcome { strategy: current, history, converged: true });
        }
    }
    Ok(IterationOutcome { strategy: current, history, converged: false })
}
