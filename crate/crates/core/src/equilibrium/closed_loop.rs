use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use super::best_response::{best_response_pair, major_gains, minor_gains, minor_riccati_with, MinorTerms};
use super::strategy::FeedbackStrategy;
use crate::error::{Error, Result};
use crate::linalg::{self, hstack};
use crate::model::{assemble_blocks, BlockSystem, MajorMinorLqModel};
use crate::riccati::{integrate_backward_states, integrate_backward_with, MatrixPath, Scheme, TimeGrid};

const NO_EQUILIBRIUM: &str = "closed-loop equilibrium does not exist on [0,T] at this horizon";

/// Closed-loop Nash equilibrium in affine feedback strategies.
#[derive(Debug, Clone)]
pub struct ClosedLoopSolution {
    pub k: MatrixPath,
    pub kvec: MatrixPath,
    pub s: MatrixPath,
    pub ss: MatrixPath,
    pub svec: MatrixPath,
    pub strategy: FeedbackStrategy,
    /// [`fixed_point_residual`] of `strategy`.
    pub residual: f64,
}

/// Environment drifts once the fixed-point gain identities are substituted.
struct Coupled<'a> {
    blocks: &'a BlockSystem,
    terms: MinorTerms,
    /// `[I, 0]`, `d × n`
    select_mean: DMatrix<f64>,
}

impl Coupled<'_> {
    /// `𝕃₀^{cl} = 𝕃₀ − ½ 𝔹R⁻¹Bᵀ (S[I,0] + 𝕊)`
    fn major_drift(&self, s: &DMatrix<f64>, ss: &DMatrix<f64>) -> DMatrix<f64> {
        &self.blocks.ll0 - &self.blocks.bb_r_inv_bt * (s * &self.select_mean + ss) * 0.5
    }

    /// `𝕃^{cl} = 𝕃₀^{cl} − ½ 𝔹₀R0⁻¹𝔹₀ᵀ K`
    fn full_drift(&self, major_drift: &DMatrix<f64>, k: &DMatrix<f64>) -> DMatrix<f64> {
        major_drift - &self.blocks.bb0_r0_inv_bb0t * k * 0.5
    }
}

/// Solves the coupled equilibrium system.
///
/// `S` is solved first on its own. `(K, 𝕊)` are then integrated jointly with
/// the minor gains `φ₁, φ₂, φ₃` and the major gains `φ⁰₁, φ⁰₂` replaced by
/// their expressions in `S, 𝕊, K`, and finally the linear system for `(k, s)`
/// is integrated along the solved `(K, 𝕊)`.
pub fn solve_closed_loop(model: &MajorMinorLqModel, grid: &TimeGrid) -> Result<ClosedLoopSolution> {
    model.ensure_valid()?;
    let blocks = assemble_blocks(model)?;
    let scheme = Scheme::Rk4;
    let fail = |e: Error| e.with_context(NO_EQUILIBRIUM);
    let (d, n) = (model.dims.d, blocks.n);
    let coupled = Coupled {
        blocks: &blocks,
        terms: MinorTerms::new(model),
        select_mean: hstack(&DMatrix::identity(d, d), &DMatrix::zeros(d, model.dims.d0)),
    };
    let s = minor_riccati_with(model, &blocks, grid, scheme).map_err(fail)?;
    let ff2 = &blocks.ff0 * 2.0;
    let m0_half = &blocks.bb0_r0_inv_bb0t * 0.5;

    let riccati = integrate_backward_with(
        |p, x: &Vec<DMatrix<f64>>| {
            let (k, ss) = (&x[0], &x[1]);
            let s_t = s.eval(p);
            let lcl0 = coupled.major_drift(&s_t, ss);
            let lcl = coupled.full_drift(&lcl0, k);
            let k_lcl0 = k * &lcl0;
            let dk = -(&k_lcl0 + k_lcl0.transpose() - k * &m0_half * k + &ff2);
            let dss =
                -(ss * &lcl + coupled.terms.adjoint_drift(&blocks, &s_t) * ss + coupled.terms.coupling_source(&s_t));
            vec![dk, dss]
        },
        vec![DMatrix::zeros(n, n), DMatrix::zeros(d, n)],
        grid,
        scheme,
        |x| x[0] = linalg::symmetrize(&x[0]),
    )
    .map_err(fail)?;
    let (k_values, ss_values): (Vec<_>, Vec<_>) = riccati
        .into_iter()
        .map(|mut x| {
            let ss = x.pop().expect("two blocks");
            (x.pop().expect("two blocks"), ss)
        })
        .unzip();
    let k = MatrixPath::new(*grid, k_values)?;
    let ss = MatrixPath::new(*grid, ss_values)?;

    let half_bb = &blocks.bb_r_inv_bt * 0.5;
    let linear = integrate_backward_states(
        |p, x: &Vec<DMatrix<f64>>| {
            let (kv, sv) = (&x[0], &x[1]);
            let (k_t, ss_t, s_t) = (k.eval(p), ss.eval(p), s.eval(p));
            let lcl0 = coupled.major_drift(&s_t, &ss_t);
            let ccl0 = -(&half_bb * sv);
            let ccl = &ccl0 - &m0_half * kv;
            let dk = -((lcl0.transpose() - &k_t * &m0_half) * kv + &k_t * &ccl0 + blocks.f0(grid.time_at(p)) * 2.0);
            let ds = -(coupled.terms.adjoint_drift(&blocks, &s_t) * sv + &ss_t * &ccl - &coupled.terms.q_eta * 2.0);
            vec![dk, ds]
        },
        vec![DMatrix::zeros(n, 1), DMatrix::zeros(d, 1)],
        grid,
        scheme,
    )
    .map_err(fail)?;
    let (kvec_values, svec_values): (Vec<_>, Vec<_>) = linear
        .into_iter()
        .map(|mut x| {
            let sv = x.pop().expect("two blocks");
            (x.pop().expect("two blocks"), sv)
        })
        .unzip();
    let kvec = MatrixPath::new(*grid, kvec_values)?;
    let svec = MatrixPath::new(*grid, svec_values)?;

    let strategy =
        FeedbackStrategy { major: major_gains(&blocks, &k, &kvec)?, minor: minor_gains(&blocks, &s, &ss, &svec)? };
    let residual = residual_with(model, &blocks, &s, &strategy)?;
    Ok(ClosedLoopSolution { k, kvec, s, ss, svec, strategy, residual })
}

/// Sup-norm distance between a strategy profile and the pair of best
/// responses to it; zero exactly at a Nash equilibrium.
pub fn fixed_point_residual(model: &MajorMinorLqModel, strategy: &FeedbackStrategy) -> Result<f64> {
    model.ensure_valid()?;
    let blocks = assemble_blocks(model)?;
    let grid = *strategy.grid();
    strategy.check(&model.dims, &grid)?;
    let s = minor_riccati_with(model, &blocks, &grid, Scheme::Rk4)?;
    residual_with(model, &blocks, &s, strategy)
}

pub(crate) fn residual_with(
    model: &MajorMinorLqModel,
    blocks: &BlockSystem,
    s: &MatrixPath,
    strategy: &FeedbackStrategy,
) -> Result<f64> {
    let (major, minor) = best_response_pair(model, blocks, s, strategy)?;
    Ok(strategy.major.sup_distance(&major.gains).max(strategy.minor.sup_distance(&minor.gains)))
}
