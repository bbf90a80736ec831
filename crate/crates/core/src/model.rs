//! The linear-quadratic game and its reduction to block form.
//!
//! Minor players have state `X ∈ ℝ^d`, the major player `X⁰ ∈ ℝ^{d0}`:
//!
//! ```text
//! dX⁰ = (L0 X⁰ + B0 α⁰ + F0 X̄) dt + D0 dW⁰
//! dX  = (L X + B α + F X̄ + G X⁰) dt + D dW
//! ```
//!
//! with running costs `(X⁰ − H0 X̄ − η0(t))ᵀ Q0 (·) + α⁰ᵀ R0 α⁰` and
//! `(X − H X⁰ − H1 X̄ − η)ᵀ Q (·) + αᵀ R α`. The major player optimizes over
//! the pair `𝕏 = [X̄; X⁰]`, whose coefficients are assembled by
//! [`assemble_blocks`]. Column vectors are stored as `n×1` matrices.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use nalgebra::DMatrix;

use crate::equilibrium::{FeedbackStrategy, MajorGains, MinorGains};
use crate::error::{Error, Result};
use crate::linalg::{self, block2, block_diag, hstack, vstack};
use crate::riccati::{GridPoint, MatrixPath};

/// Relative tolerance for symmetry checks.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Q0 and Q may have eigenvalues down to `-PSD_TOL`.
pub const PSD_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub d0: usize,
    pub d: usize,
    pub k0: usize,
    pub k: usize,
    pub m0: usize,
    pub m: usize,
}

impl Dims {
    /// Dimension of the reduced state `[X̄; X⁰]`.
    pub fn n(&self) -> usize {
        self.d + self.d0
    }
}

/// A vector-valued function of time; constants avoid the indirection.
#[derive(Clone)]
pub enum TimeVector {
    Constant(DMatrix<f64>),
    Function { dim: usize, f: Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync> },
}

impl TimeVector {
    pub fn constant(values: &[f64]) -> Self {
        TimeVector::Constant(DMatrix::from_column_slice(values.len(), 1, values))
    }

    pub fn zeros(dim: usize) -> Self {
        TimeVector::Constant(DMatrix::zeros(dim, 1))
    }

    pub fn function(dim: usize, f: impl Fn(f64) -> DMatrix<f64> + Send + Sync + 'static) -> Self {
        TimeVector::Function { dim, f: Arc::new(f) }
    }

    pub fn dim(&self) -> usize {
        match self {
            TimeVector::Constant(v) => v.nrows(),
            TimeVector::Function { dim, .. } => *dim,
        }
    }

    pub fn at(&self, t: f64) -> DMatrix<f64> {
        match self {
            TimeVector::Constant(v) => v.clone(),
            TimeVector::Function { f, .. } => f(t),
        }
    }
}

impl fmt::Debug for TimeVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeVector::Constant(v) => f.debug_tuple("Constant").field(&v.as_slice()).finish(),
            TimeVector::Function { dim, .. } => f.debug_struct("Function").field("dim", dim).finish_non_exhaustive(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MajorMinorLqModel {
    pub dims: Dims,
    pub l0: DMatrix<f64>,
    pub b0: DMatrix<f64>,
    pub f0: DMatrix<f64>,
    pub d0: DMatrix<f64>,
    pub l: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub q0: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r0: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub h0: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub h1: DMatrix<f64>,
    pub eta0: TimeVector,
    pub eta: DMatrix<f64>,
    pub horizon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Dimension { field: &'static str, expected: (usize, usize), found: (usize, usize) },
    ZeroDimension(&'static str),
    NotSymmetric(&'static str),
    NotPositiveDefinite(&'static str),
    NotPositiveSemiDefinite(&'static str),
    Horizon(f64),
    NonFiniteTarget,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Dimension { field, expected, found } => {
                write!(f, "{field} has shape {}x{}, expected {}x{}", found.0, found.1, expected.0, expected.1)
            }
            Violation::ZeroDimension(name) => write!(f, "dimension {name} must be at least 1"),
            Violation::NotSymmetric(name) => write!(f, "{name} not symmetric"),
            Violation::NotPositiveDefinite(name) => write!(f, "{name} not positive definite"),
            Violation::NotPositiveSemiDefinite(name) => {
                write!(f, "{name} not positive semi-definite")
            }
            Violation::Horizon(t) => write!(f, "horizon must be positive, got {t}"),
            Violation::NonFiniteTarget => write!(f, "eta0 is not finite on [0, T]"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn messages(&self) -> Vec<String> {
        self.violations.iter().map(|v| format!("{v}")).collect()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

impl MajorMinorLqModel {
    /// All coefficients zero except `R0 = I`, `R = I`.
    pub fn zeros(dims: Dims, horizon: f64) -> Self {
        let Dims { d0, d, k0, k, m0, m } = dims;
        Self {
            dims,
            l0: DMatrix::zeros(d0, d0),
            b0: DMatrix::zeros(d0, k0),
            f0: DMatrix::zeros(d0, d),
            d0: DMatrix::zeros(d0, m0),
            l: DMatrix::zeros(d, d),
            b: DMatrix::zeros(d, k),
            f: DMatrix::zeros(d, d),
            g: DMatrix::zeros(d, d0),
            d: DMatrix::zeros(d, m),
            q0: DMatrix::zeros(d0, d0),
            q: DMatrix::zeros(d, d),
            r0: DMatrix::identity(k0, k0),
            r: DMatrix::identity(k, k),
            h0: DMatrix::zeros(d0, d),
            h: DMatrix::zeros(d, d0),
            h1: DMatrix::zeros(d, d),
            eta0: TimeVector::zeros(d0),
            eta: DMatrix::zeros(d, 1),
            horizon,
        }
    }

    fn shapes(&self) -> [(&'static str, &DMatrix<f64>, usize, usize); 17] {
        let Dims { d0, d, k0, k, m0, m } = self.dims;
        [
            ("L0", &self.l0, d0, d0),
            ("B0", &self.b0, d0, k0),
            ("F0", &self.f0, d0, d),
            ("D0", &self.d0, d0, m0),
            ("L", &self.l, d, d),
            ("B", &self.b, d, k),
            ("F", &self.f, d, d),
            ("G", &self.g, d, d0),
            ("D", &self.d, d, m),
            ("Q0", &self.q0, d0, d0),
            ("Q", &self.q, d, d),
            ("R0", &self.r0, k0, k0),
            ("R", &self.r, k, k),
            ("H0", &self.h0, d0, d),
            ("H", &self.h, d, d0),
            ("H1", &self.h1, d, d),
            ("eta", &self.eta, d, 1),
        ]
    }

    /// Lists every violated invariant; an empty report means the model is usable.
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        let Dims { d0, d, k0, k, m0, m } = self.dims;
        for (name, value) in [("d0", d0), ("d", d), ("k0", k0), ("k", k), ("m0", m0), ("m", m)] {
            if value == 0 {
                violations.push(Violation::ZeroDimension(name));
            }
        }
        let mut shapes_ok = true;
        for (field, mat, rows, cols) in self.shapes() {
            if mat.shape() != (rows, cols) {
                shapes_ok = false;
                violations.push(Violation::Dimension { field, expected: (rows, cols), found: mat.shape() });
            }
        }
        if self.eta0.dim() != d0 {
            shapes_ok = false;
            violations.push(Violation::Dimension { field: "eta0", expected: (d0, 1), found: (self.eta0.dim(), 1) });
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            violations.push(Violation::Horizon(self.horizon));
        }
        if shapes_ok {
            for (name, mat, strict) in
                [("Q0", &self.q0, false), ("Q", &self.q, false), ("R0", &self.r0, true), ("R", &self.r, true)]
            {
                if linalg::asymmetry(mat).is_none_or(|a| a > SYMMETRY_TOL) {
                    violations.push(Violation::NotSymmetric(name));
                    continue;
                }
                let lambda = linalg::min_eigenvalue(mat);
                if strict && !(lambda > 0.0) {
                    violations.push(Violation::NotPositiveDefinite(name));
                } else if !strict && !(lambda >= -PSD_TOL) {
                    violations.push(Violation::NotPositiveSemiDefinite(name));
                }
            }
            if self.horizon.is_finite() && self.horizon > 0.0 {
                let samples = 64;
                let finite = (0..=samples).all(|i| {
                    let t = self.horizon * i as f64 / samples as f64;
                    let v = self.eta0.at(t);
                    v.shape() == (d0, 1) && v.iter().all(|x| x.is_finite())
                });
                if !finite {
                    violations.push(Violation::NonFiniteTarget);
                }
            }
        }
        ValidationReport { violations }
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let report = self.validate();
        if report.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidModel(format!("{report}")))
        }
    }

    /// Validates, then replaces Q0, Q, R0, R by their symmetric parts.
    pub fn validated(mut self) -> Result<Self> {
        self.ensure_valid()?;
        self.q0 = linalg::symmetrize(&self.q0);
        self.q = linalg::symmetrize(&self.q);
        self.r0 = linalg::symmetrize(&self.r0);
        self.r = linalg::symmetrize(&self.r);
        Ok(self)
    }
}

/// Coefficients of the reduced state `𝕏 = [X̄; X⁰]` (dimension `n = d + d0`),
/// together with a few products reused by every solver.
#[derive(Debug, Clone)]
pub struct BlockSystem {
    pub dims: Dims,
    pub n: usize,
    /// `𝕃₀ = [[L+F, G], [F0, L0]]`
    pub ll0: DMatrix<f64>,
    /// `𝔹₀ = [0; B0]`
    pub bb0: DMatrix<f64>,
    /// `𝔹 = [B; 0]`
    pub bb: DMatrix<f64>,
    /// `𝔻₀ = [0; D0]`
    pub dd0: DMatrix<f64>,
    /// `𝔽₀ = Mᵀ Q0 M` with `M = [−H0, I]`
    pub ff0: DMatrix<f64>,
    /// `R0⁻¹ 𝔹₀ᵀ`, `k0 × n`
    pub r0_inv_bb0t: DMatrix<f64>,
    /// `𝔹₀ R0⁻¹ 𝔹₀ᵀ`, `n × n`
    pub bb0_r0_inv_bb0t: DMatrix<f64>,
    /// `R⁻¹ Bᵀ`, `k × d`
    pub r_inv_bt: DMatrix<f64>,
    /// `B R⁻¹ Bᵀ`, `d × d`
    pub b_r_inv_bt: DMatrix<f64>,
    /// `𝔹 R⁻¹ Bᵀ`, `n × d`
    pub bb_r_inv_bt: DMatrix<f64>,
    h0t_q0: DMatrix<f64>,
    q0: DMatrix<f64>,
    eta0: TimeVector,
}

pub fn assemble_blocks(model: &MajorMinorLqModel) -> Result<BlockSystem> {
    let Dims { d0, d, k0, k, .. } = model.dims;
    for (field, mat, rows, cols) in model.shapes() {
        linalg::check_shape(field, mat, rows, cols)?;
    }
    if model.eta0.dim() != d0 {
        return Err(Error::Dimension {
            field: "eta0",
            expected_rows: d0,
            expected_cols: 1,
            rows: model.eta0.dim(),
            cols: 1,
        });
    }
    let n = d + d0;
    let ll0 = block2(&(&model.l + &model.f), &model.g, &model.f0, &model.l0);
    let bb0 = vstack(&DMatrix::zeros(d, k0), &model.b0);
    let bb = vstack(&model.b, &DMatrix::zeros(d0, k));
    let dd0 = vstack(&DMatrix::zeros(d, model.dims.m0), &model.d0);
    let selector = hstack(&(-&model.h0), &DMatrix::identity(d0, d0));
    let ff0 = selector.transpose() * &model.q0 * &selector;
    let r0_inv = linalg::inverse(&model.r0, "R0")?;
    let r_inv = linalg::inverse(&model.r, "R")?;
    let r0_inv_bb0t = &r0_inv * bb0.transpose();
    let bb0_r0_inv_bb0t = &bb0 * &r0_inv_bb0t;
    let r_inv_bt = &r_inv * model.b.transpose();
    let b_r_inv_bt = &model.b * &r_inv_bt;
    let bb_r_inv_bt = &bb * &r_inv_bt;
    Ok(BlockSystem {
        dims: model.dims,
        n,
        ll0,
        bb0,
        bb,
        dd0,
        ff0,
        r0_inv_bb0t,
        bb0_r0_inv_bb0t,
        r_inv_bt,
        b_r_inv_bt,
        bb_r_inv_bt,
        h0t_q0: model.h0.transpose() * &model.q0,
        q0: model.q0.clone(),
        eta0: model.eta0.clone(),
    })
}

impl BlockSystem {
    /// `f₀(t) = [H0ᵀ Q0 η0(t); −Q0 η0(t)]`
    pub fn f0(&self, t: f64) -> DMatrix<f64> {
        let eta0 = self.eta0.at(t);
        vstack(&(&self.h0t_q0 * &eta0), &(-&self.q0 * &eta0))
    }

    /// `η0(t)ᵀ Q0 η0(t)`, the state-independent part of the major cost.
    pub fn target_cost(&self, t: f64) -> f64 {
        let eta0 = self.eta0.at(t);
        (eta0.transpose() * &self.q0 * &eta0)[(0, 0)]
    }

    /// `(𝕃₀^{cl}, ℂ₀^{cl})` at one point: the major player's environment when
    /// minor players use `minor`.
    ///
    /// `𝕃₀^{cl} = 𝕃₀ + 𝔹 [φ₁+φ₃, φ₂]`, `ℂ₀^{cl} = 𝔹 φ₀`.
    pub fn major_environment_at(&self, minor: &MinorGains, p: GridPoint) -> (DMatrix<f64>, DMatrix<f64>) {
        let feedback = hstack(&(minor.own.eval(p) + minor.mean.eval(p)), &minor.major.eval(p));
        (&self.ll0 + &self.bb * feedback, &self.bb * minor.offset.eval(p))
    }

    /// `(𝕃^{cl}, ℂ^{cl})` at one point: dynamics of `𝕏` when both player
    /// types use the given feedback.
    pub fn full_environment_at(
        &self,
        major: &MajorGains,
        minor: &MinorGains,
        p: GridPoint,
    ) -> (DMatrix<f64>, DMatrix<f64>) {
        let (l, c) = self.major_environment_at(minor, p);
        let feedback = hstack(&major.mean.eval(p), &major.own.eval(p));
        (l + &self.bb0 * feedback, c + &self.bb0 * major.offset.eval(p))
    }

    /// `𝕃₀ − ½ blockdiag(B R⁻¹ Bᵀ S, 0)`.
    ///
    /// The ½ reflects the Riccati normalization used throughout the crate,
    /// where `S` is twice the Hessian of the minor value function.
    pub fn modified_drift(&self, s: &DMatrix<f64>) -> DMatrix<f64> {
        let correction = block_diag(&(&self.b_r_inv_bt * s), &DMatrix::zeros(self.dims.d0, self.dims.d0));
        &self.ll0 - correction * 0.5
    }
}

/// Time paths of the closed-loop environments for a given strategy profile.
#[derive(Debug, Clone)]
pub struct ClosedLoopAggregates {
    pub lcl0: MatrixPath,
    pub ccl0: MatrixPath,
    pub lcl: MatrixPath,
    pub ccl: MatrixPath,
}

/// `(𝕃₀^{cl}, ℂ₀^{cl})` on every node of the strategy's grid.
pub fn major_environment(blocks: &BlockSystem, minor: &MinorGains) -> Result<(MatrixPath, MatrixPath)> {
    let grid = *minor.own.grid();
    let pairs: Vec<_> = (0..grid.n_nodes()).map(|i| blocks.major_environment_at(minor, GridPoint::Node(i))).collect();
    split_pairs(grid, pairs)
}

pub fn full_environment(
    blocks: &BlockSystem,
    major: &MajorGains,
    minor: &MinorGains,
) -> Result<(MatrixPath, MatrixPath)> {
    let grid = *minor.own.grid();
    grid.ensure_same(major.own.grid(), "full_environment")?;
    let pairs: Vec<_> =
        (0..grid.n_nodes()).map(|i| blocks.full_environment_at(major, minor, GridPoint::Node(i))).collect();
    split_pairs(grid, pairs)
}

pub fn closed_loop_aggregates(blocks: &BlockSystem, strategy: &FeedbackStrategy) -> Result<ClosedLoopAggregates> {
    let (lcl0, ccl0) = major_environment(blocks, &strategy.minor)?;
    let (lcl, ccl) = full_environment(blocks, &strategy.major, &strategy.minor)?;
    Ok(ClosedLoopAggregates { lcl0, ccl0, lcl, ccl })
}

fn split_pairs(
    grid: crate::riccati::TimeGrid,
    pairs: Vec<(DMatrix<f64>, DMatrix<f64>)>,
) -> Result<(MatrixPath, MatrixPath)> {
    let (a, b): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    Ok((MatrixPath::new(grid, a)?, MatrixPath::new(grid, b)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::riccati::TimeGrid;

    fn scalar_dims() -> Dims {
        Dims { d0: 1, d: 1, k0: 1, k: 1, m0: 1, m: 1 }
    }

    fn s(x: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, x)
    }

    #[test]
    fn zero_r_is_rejected() {
        let mut model = MajorMinorLqModel::zeros(scalar_dims(), 1.0);
        model.r = s(0.0);
        let report = model.validate();
        assert_eq!(report.violations, alloc::vec![Violation::NotPositiveDefinite("R")]);
        assert_eq!(report.messages()[0], "R not positive definite");
    }

    #[test]
    fn asymmetric_q0_is_rejected() {
        let dims = Dims { d0: 2, ..scalar_dims() };
        let mut model = MajorMinorLqModel::zeros(dims, 1.0);
        model.q0 = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        let report = model.validate();
        assert!(report.violations.contains(&Violation::NotSymmetric("Q0")));
        assert!(report.messages().iter().any(|m| m == "Q0 not symmetric"));
    }

    #[test]
    fn shape_and_horizon_errors_are_listed() {
        let mut model = MajorMinorLqModel::zeros(scalar_dims(), -1.0);
        model.b = DMatrix::zeros(2, 1);
        let report = model.validate();
        assert!(report.violations.contains(&Violation::Horizon(-1.0)));
        assert!(matches!(report.violations[0], Violation::Dimension { field: "B", .. }));
        assert!(matches!(assemble_blocks(&model).unwrap_err(), Error::Dimension { field: "B", .. }));
    }

    #[test]
    fn negative_semidefinite_q_is_rejected() {
        let mut model = MajorMinorLqModel::zeros(scalar_dims(), 1.0);
        model.q = s(-1e-6);
        assert!(model.validate().violations.contains(&Violation::NotPositiveSemiDefinite("Q")));
        model.q = s(0.0);
        assert!(model.validate().is_valid());
    }

    #[test]
    fn scalar_block_substitution() {
        let mut model = MajorMinorLqModel::zeros(scalar_dims(), 1.0);
        model.l = s(0.1);
        model.f = s(0.2);
        model.g = s(0.3);
        model.f0 = s(0.4);
        model.l0 = s(0.5);
        let blocks = assemble_blocks(&model).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[0.3, 0.3, 0.4, 0.5]);
        assert!(linalg::max_abs_diff(&blocks.ll0, &expected) < 1e-15);
        assert_eq!(blocks.bb0[(0, 0)], 0.0);
        assert_eq!(blocks.bb[(1, 0)], 0.0);
        assert_eq!(blocks.dd0[(0, 0)], 0.0);
    }

    #[test]
    fn zero_target_map() {
        let mut model = MajorMinorLqModel::zeros(scalar_dims(), 1.0);
        model.q0 = s(2.0);
        let blocks = assemble_blocks(&model).unwrap();
        assert_eq!(blocks.ff0, DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 2.0]));
        assert_eq!(blocks.f0(0.3), DMatrix::zeros(2, 1));
    }

    #[test]
    fn environments_with_zero_feedback_are_open_dynamics() {
        let mut model = MajorMinorLqModel::zeros(scalar_dims(), 1.0);
        model.l = s(0.1);
        model.l0 = s(-0.7);
        model.b = s(1.0);
        model.b0 = s(1.0);
        let blocks = assemble_blocks(&model).unwrap();
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let strategy = FeedbackStrategy::zeros(&model.dims, grid);
        let agg = closed_loop_aggregates(&blocks, &strategy).unwrap();
        for i in 0..grid.n_nodes() {
            assert_eq!(agg.lcl0.node(i), &blocks.ll0);
            assert_eq!(agg.lcl.node(i), &blocks.ll0);
            assert_eq!(agg.ccl0.node(i), &DMatrix::zeros(2, 1));
            assert_eq!(agg.ccl.node(i), &DMatrix::zeros(2, 1));
        }
    }

    #[test]
    fn environments_substitute_gains() {
        let mut model = MajorMinorLqModel::zeros(scalar_dims(), 1.0);
        model.l = s(0.1);
        model.f = s(0.2);
        model.g = s(0.3);
        model.f0 = s(0.4);
        model.l0 = s(0.5);
        model.b = s(1.0);
        model.b0 = s(1.0);
        let blocks = assemble_blocks(&model).unwrap();
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let mut strategy = FeedbackStrategy::zeros(&model.dims, grid);
        strategy.minor.own = MatrixPath::constant(grid, s(1.0));
        strategy.minor.mean = MatrixPath::constant(grid, s(1.0));
        strategy.minor.major = MatrixPath::constant(grid, s(2.0));
        strategy.major.own = MatrixPath::constant(grid, s(1.0));
        let (lcl0, _) = major_environment(&blocks, &strategy.minor).unwrap();
        assert!((lcl0.node(2)[(0, 0)] - (0.1 + 0.2 + 2.0)).abs() < 1e-15);
        assert!((lcl0.node(2)[(0, 1)] - (0.3 + 2.0)).abs() < 1e-15);
        assert_eq!(lcl0.node(2)[(1, 0)], 0.4);
        assert_eq!(lcl0.node(2)[(1, 1)], 0.5);
        let (lcl, _) = full_environment(&blocks, &strategy.major, &strategy.minor).unwrap();
        assert!((lcl.node(0)[(1, 1)] - 1.5).abs() < 1e-15);
    }
}
