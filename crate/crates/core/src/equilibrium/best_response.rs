use nalgebra::DMatrix;

use super::strategy::{FeedbackStrategy, MajorGains, MinorGains};
use crate::error::Result;
use crate::linalg::hstack;
use crate::model::{assemble_blocks, BlockSystem, MajorMinorLqModel};
use crate::riccati::{solve_linear_matrix_ode, solve_symmetric_riccati, MatrixPath, Scheme, TimeGrid};

/// Decoupling field of the major player's adjoint, `𝕐 = K 𝕏 + k`, and the
/// feedback it induces.
#[derive(Debug, Clone)]
pub struct MajorResponse {
    pub k: MatrixPath,
    pub kvec: MatrixPath,
    pub gains: MajorGains,
}

/// Decoupling field of the minor adjoint, `Ỹ = S X̃ + 𝕊 𝕏 + s`.
#[derive(Debug, Clone)]
pub struct MinorResponse {
    pub s: MatrixPath,
    pub ss: MatrixPath,
    pub svec: MatrixPath,
    pub gains: MinorGains,
}

/// Model products that appear in every minor-player equation.
#[derive(Debug, Clone)]
pub(crate) struct MinorTerms {
    /// `Lᵀ`
    pub lt: DMatrix<f64>,
    /// `[F, G]`, `d × n`
    pub fg: DMatrix<f64>,
    /// `Q [H1, H]`, `d × n`
    pub qh: DMatrix<f64>,
    /// `Q η`
    pub q_eta: DMatrix<f64>,
}

impl MinorTerms {
    pub fn new(model: &MajorMinorLqModel) -> Self {
        Self {
            lt: model.l.transpose(),
            fg: hstack(&model.f, &model.g),
            qh: &model.q * hstack(&model.h1, &model.h),
            q_eta: &model.q * &model.eta,
        }
    }

    /// `Lᵀ − ½ S B R⁻¹ Bᵀ`
    pub fn adjoint_drift(&self, blocks: &BlockSystem, s: &DMatrix<f64>) -> DMatrix<f64> {
        &self.lt - s * &blocks.b_r_inv_bt * 0.5
    }

    /// `S [F, G] − 2 Q [H1, H]`
    pub fn coupling_source(&self, s: &DMatrix<f64>) -> DMatrix<f64> {
        s * &self.fg - &self.qh * 2.0
    }
}

/// `S` solving `Ṡ + SL + LᵀS − ½ S B R⁻¹ Bᵀ S + 2Q = 0`, `S(T) = 0`.
///
/// It does not depend on any strategy, so solvers compute it once.
pub fn minor_riccati(model: &MajorMinorLqModel, grid: &TimeGrid) -> Result<MatrixPath> {
    let blocks = assemble_blocks(model)?;
    minor_riccati_with(model, &blocks, grid, Scheme::Rk4)
}

pub(crate) fn minor_riccati_with(
    model: &MajorMinorLqModel,
    blocks: &BlockSystem,
    grid: &TimeGrid,
    scheme: Scheme,
) -> Result<MatrixPath> {
    let q2 = &model.q * 2.0;
    solve_symmetric_riccati(|_| model.l.clone(), &(&blocks.b_r_inv_bt * 0.5), |_| q2.clone(), grid, scheme)
}

/// Best response of the major player when minor players use `minor`.
///
/// `K̇ + K 𝕃₀^{cl} + 𝕃₀^{cl}ᵀ K − ½ K 𝔹₀R0⁻¹𝔹₀ᵀ K + 2𝔽₀ = 0` and
/// `k̇ + (𝕃₀^{cl}ᵀ − ½ K 𝔹₀R0⁻¹𝔹₀ᵀ) k + K ℂ₀^{cl} + 2f₀ = 0`, both zero at `T`;
/// the feedback is `[φ⁰₂, φ⁰₁] = −½ R0⁻¹𝔹₀ᵀ K`, `φ⁰₀ = −½ R0⁻¹𝔹₀ᵀ k`.
pub fn major_best_response(model: &MajorMinorLqModel, minor: &MinorGains) -> Result<MajorResponse> {
    model.ensure_valid()?;
    let blocks = assemble_blocks(model)?;
    major_best_response_with(&blocks, minor, Scheme::Rk4)
}

pub(crate) fn major_best_response_with(
    blocks: &BlockSystem,
    minor: &MinorGains,
    scheme: Scheme,
) -> Result<MajorResponse> {
    let grid = *minor.own.grid();
    let context = "major best response";
    let ff2 = &blocks.ff0 * 2.0;
    let k = solve_symmetric_riccati(
        |p| blocks.major_environment_at(minor, p).0,
        &(&blocks.bb0_r0_inv_bb0t * 0.5),
        |_| ff2.clone(),
        &grid,
        scheme,
    )
    .map_err(|e| e.with_context(context))?;
    let kvec = solve_linear_matrix_ode(
        |p| {
            let lcl0 = blocks.major_environment_at(minor, p).0;
            lcl0.transpose() - k.eval(p) * &blocks.bb0_r0_inv_bb0t * 0.5
        },
        |_| DMatrix::zeros(1, 1),
        |p| {
            let ccl0 = blocks.major_environment_at(minor, p).1;
            k.eval(p) * ccl0 + blocks.f0(grid.time_at(p)) * 2.0
        },
        DMatrix::zeros(blocks.n, 1),
        &grid,
        scheme,
    )
    .map_err(|e| e.with_context(context))?;
    let gains = major_gains(blocks, &k, &kvec)?;
    Ok(MajorResponse { k, kvec, gains })
}

pub(crate) fn major_gains(blocks: &BlockSystem, k: &MatrixPath, kvec: &MatrixPath) -> Result<MajorGains> {
    let factor = &blocks.r0_inv_bb0t * -0.5;
    MajorGains::from_block(blocks.dims.d, &k.map(|m| &factor * m), kvec.map(|m| &factor * m))
}

/// Best response of a single minor player when the major player uses
/// `major` and the rest of the population uses `minor`.
///
/// `S` is the strategy-independent Riccati solution; `𝕊` and `s` solve
/// `𝕊̇ + 𝕊 𝕃^{cl} + (Lᵀ − ½SBR⁻¹Bᵀ) 𝕊 + S[F,G] − 2Q[H1,H] = 0` and
/// `ṡ + (Lᵀ − ½SBR⁻¹Bᵀ) s + 𝕊 ℂ^{cl} − 2Qη = 0`.
pub fn minor_best_response(model: &MajorMinorLqModel, major: &MajorGains, minor: &MinorGains) -> Result<MinorResponse> {
    model.ensure_valid()?;
    let blocks = assemble_blocks(model)?;
    let grid = *minor.own.grid();
    grid.ensure_same(major.own.grid(), "minor best response")?;
    let s =
        minor_riccati_with(model, &blocks, &grid, Scheme::Rk4).map_err(|e| e.with_context("minor best response"))?;
    minor_best_response_with(model, &blocks, &s, major, minor, Scheme::Rk4)
}

pub(crate) fn minor_best_response_with(
    model: &MajorMinorLqModel,
    blocks: &BlockSystem,
    s: &MatrixPath,
    major: &MajorGains,
    minor: &MinorGains,
    scheme: Scheme,
) -> Result<MinorResponse> {
    let grid = *s.grid();
    let context = "minor best response";
    let terms = MinorTerms::new(model);
    let ss = solve_linear_matrix_ode(
        |p| terms.adjoint_drift(blocks, &s.eval(p)),
        |p| blocks.full_environment_at(major, minor, p).0,
        |p| terms.coupling_source(&s.eval(p)),
        DMatrix::zeros(model.dims.d, blocks.n),
        &grid,
        scheme,
    )
    .map_err(|e| e.with_context(context))?;
    let svec = solve_linear_matrix_ode(
        |p| terms.adjoint_drift(blocks, &s.eval(p)),
        |_| DMatrix::zeros(1, 1),
        |p| {
            let ccl = blocks.full_environment_at(major, minor, p).1;
            ss.eval(p) * ccl - &terms.q_eta * 2.0
        },
        DMatrix::zeros(model.dims.d, 1),
        &grid,
        scheme,
    )
    .map_err(|e| e.with_context(context))?;
    let gains = minor_gains(blocks, s, &ss, &svec)?;
    Ok(MinorResponse { s: s.clone(), ss, svec, gains })
}

pub(crate) fn minor_gains(
    blocks: &BlockSystem,
    s: &MatrixPath,
    ss: &MatrixPath,
    svec: &MatrixPath,
) -> Result<MinorGains> {
    let factor = &blocks.r_inv_bt * -0.5;
    MinorGains::from_blocks(blocks.dims.d, s.map(|m| &factor * m), &ss.map(|m| &factor * m), svec.map(|m| &factor * m))
}

/// Both best responses to one strategy profile, evaluated simultaneously.
pub(crate) fn best_response_pair(
    model: &MajorMinorLqModel,
    blocks: &BlockSystem,
    s: &MatrixPath,
    strategy: &FeedbackStrategy,
) -> Result<(MajorResponse, MinorResponse)> {
    let major = major_best_response_with(blocks, &strategy.minor, Scheme::Rk4)?;
    let minor = minor_best_response_with(model, blocks, s, &strategy.major, &strategy.minor, Scheme::Rk4)?;
    Ok((major, minor))
}
