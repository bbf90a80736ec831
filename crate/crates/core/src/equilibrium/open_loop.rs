use nalgebra::DMatrix;

use super::best_response::{major_gains, minor_gains, minor_riccati_with, MinorTerms};
use super::strategy::FeedbackStrategy;
use crate::error::{Error, Result};
use crate::linalg::{self, block_diag, hstack, vstack};
use crate::model::{assemble_blocks, MajorMinorLqModel};
use crate::riccati::{integrate_backward_states, solve_linear_matrix_ode, GridPoint, MatrixPath, Scheme, TimeGrid};

const DECOUPLING_FAILED: &str = "open-loop equilibrium FBSDE decoupling failed";

/// Open-loop equilibrium obtained from the affine decoupling
/// `[𝕐; Ȳ] = P 𝕏 + p` of the reduced forward-backward system, and the
/// decoupling `Ỹ = S X̃ + 𝕊 𝕏 + s` of an individual minor player along the
/// equilibrium flow of `𝕏`.
#[derive(Debug, Clone)]
pub struct OpenLoopSolution {
    /// `(n + d) × n`: rows `0..n` decouple `𝕐`, rows `n..n+d` decouple `Ȳ`.
    pub p: MatrixPath,
    pub pvec: MatrixPath,
    pub s: MatrixPath,
    pub ss: MatrixPath,
    pub svec: MatrixPath,
    /// Feedback representation of the equilibrium controls.
    pub strategy: FeedbackStrategy,
    /// Sup-norm of `S[I,0] + 𝕊 − P_Ȳ` and `s − p_Ȳ` over the grid.
    pub consistency_error: f64,
}

impl OpenLoopSolution {
    /// `𝕃₀ − M P_t`, the drift of `𝕏` at equilibrium.
    pub fn equilibrium_drift(&self, model: &MajorMinorLqModel, node: usize) -> Result<DMatrix<f64>> {
        let blocks = assemble_blocks(model)?;
        let coupling = hstack(&(&blocks.bb0_r0_inv_bb0t * 0.5), &(&blocks.bb_r_inv_bt * 0.5));
        Ok(&blocks.ll0 - coupling * self.p.node(node))
    }
}

/// Solves `Ṗ + P𝕃₀ − P M P + A P + C = 0` and `ṗ + (A − P M) p + c = 0`,
/// with `M = [½𝔹₀R0⁻¹𝔹₀ᵀ, ½𝔹R⁻¹Bᵀ]`, `A = blockdiag(𝕃₀ᵀ, Lᵀ)`,
/// `C = [2𝔽₀; 2([Q,0] − Q[H1,H])]` and `c = [2f₀; −2Qη]`, then the individual
/// minor decoupling along `d𝕏 = ((𝕃₀ − MP)𝕏 − Mp) dt + 𝔻₀ dW⁰`.
pub fn solve_open_loop(model: &MajorMinorLqModel, grid: &TimeGrid) -> Result<OpenLoopSolution> {
    model.ensure_valid()?;
    let blocks = assemble_blocks(model)?;
    let scheme = Scheme::Rk4;
    let fail = |e: Error| e.with_context(DECOUPLING_FAILED);
    let (d, d0, n) = (model.dims.d, model.dims.d0, blocks.n);
    let terms = MinorTerms::new(model);

    let coupling = hstack(&(&blocks.bb0_r0_inv_bb0t * 0.5), &(&blocks.bb_r_inv_bt * 0.5));
    let adjoint = block_diag(&blocks.ll0.transpose(), &model.l.transpose());
    let q_select = hstack(&model.q, &DMatrix::zeros(d, d0));
    let source = vstack(&(&blocks.ff0 * 2.0), &((q_select - &terms.qh) * 2.0));

    let p_values = integrate_backward_states(
        |_, p: &DMatrix<f64>| -(p * &blocks.ll0 - p * &coupling * p + &adjoint * p + &source),
        DMatrix::zeros(n + d, n),
        grid,
        scheme,
    )
    .map_err(fail)?;
    let p = MatrixPath::new(*grid, p_values)?;
    let offset_source = |t: f64| vstack(&(blocks.f0(t) * 2.0), &(-&terms.q_eta * 2.0));
    let pvec = solve_linear_matrix_ode(
        |pt| &adjoint - p.eval(pt) * &coupling,
        |_| DMatrix::zeros(1, 1),
        |pt| offset_source(grid.time_at(pt)),
        DMatrix::zeros(n + d, 1),
        grid,
        scheme,
    )
    .map_err(fail)?;

    let s = minor_riccati_with(model, &blocks, grid, scheme).map_err(fail)?;
    let flow_drift = |pt: GridPoint| &blocks.ll0 - &coupling * p.eval(pt);
    let ss = solve_linear_matrix_ode(
        |pt| terms.adjoint_drift(&blocks, &s.eval(pt)),
        flow_drift,
        |pt| terms.coupling_source(&s.eval(pt)),
        DMatrix::zeros(d, n),
        grid,
        scheme,
    )
    .map_err(fail)?;
    let svec = solve_linear_matrix_ode(
        |pt| terms.adjoint_drift(&blocks, &s.eval(pt)),
        |_| DMatrix::zeros(1, 1),
        |pt| -(ss.eval(pt) * &coupling * pvec.eval(pt)) - &terms.q_eta * 2.0,
        DMatrix::zeros(d, 1),
        grid,
        scheme,
    )
    .map_err(fail)?;

    let select_mean = hstack(&DMatrix::identity(d, d), &DMatrix::zeros(d, d0));
    let mut consistency_error = 0.0_f64;
    for i in 0..grid.n_nodes() {
        let mean_field = s.node(i) * &select_mean + ss.node(i);
        let p_mean = p.node(i).rows(n, d).into_owned();
        let pvec_mean = pvec.node(i).rows(n, d).into_owned();
        consistency_error = consistency_error
            .max(linalg::max_abs_diff(&mean_field, &p_mean))
            .max(linalg::max_abs_diff(svec.node(i), &pvec_mean));
    }

    let major_rows = |m: &DMatrix<f64>| m.rows(0, n).into_owned();
    let strategy = FeedbackStrategy {
        major: major_gains(&blocks, &p.map(major_rows), &pvec.map(major_rows))?,
        minor: minor_gains(&blocks, &s, &ss, &svec)?,
    };
    Ok(OpenLoopSolution { p, pvec, s, ss, svec, strategy, consistency_error })
}
