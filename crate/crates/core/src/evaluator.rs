//! Exact expected costs of affine strategies and Nash-gap certification.
//!
//! Under affine feedback the joint state is Gaussian, so every expected cost
//! is a trace/quadratic expression in the first two moments. The moments
//! solve linear ODEs which are integrated with the same RK4 scheme as the
//! Riccati equations, and the running cost is integrated with the trapezoidal
//! rule on the grid nodes.

use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::equilibrium::{FeedbackStrategy, MajorGains, MinorGains};
use crate::error::{Error, Result};
use crate::linalg::{self, block_diag, hstack, trace_product};
use crate::model::{assemble_blocks, BlockSystem, MajorMinorLqModel};
use crate::riccati::{integrate_forward_states, GridPoint, MatrixPath, Scheme, TimeGrid};
use crate::rng::{stream_key, NormalStream};

/// Mean and covariance of a Gaussian vector.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianLaw {
    /// Column vector.
    pub mean: DMatrix<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianLaw {
    pub fn new(mean: DMatrix<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let n = mean.nrows();
        linalg::check_shape("mean", &mean, n, 1)?;
        linalg::check_shape("cov", &cov, n, n)?;
        Ok(Self { mean, cov })
    }

    pub fn deterministic(mean: DMatrix<f64>) -> Self {
        let n = mean.nrows();
        Self { mean, cov: DMatrix::zeros(n, n) }
    }

    pub fn dim(&self) -> usize {
        self.mean.nrows()
    }
}

/// Initial laws of a representative minor player and of the major player.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialConditions {
    pub minor: GaussianLaw,
    pub major: GaussianLaw,
}

impl InitialConditions {
    /// Zero means and zero covariances.
    pub fn zeros(d0: usize, d: usize) -> Self {
        Self {
            minor: GaussianLaw::deterministic(DMatrix::zeros(d, 1)),
            major: GaussianLaw::deterministic(DMatrix::zeros(d0, 1)),
        }
    }

    /// Law of `𝕏₀ = [X̄₀; X⁰₀]`. `X̄₀` is the minor mean, hence deterministic.
    pub fn block_law(&self) -> GaussianLaw {
        let d = self.minor.dim();
        GaussianLaw {
            mean: linalg::vstack(&self.minor.mean, &self.major.mean),
            cov: block_diag(&DMatrix::zeros(d, d), &self.major.cov),
        }
    }

    /// Law of `[X̃₀; X̄₀; X⁰₀]` for a minor player drawn from the population.
    pub fn joint_law(&self) -> GaussianLaw {
        let block = self.block_law();
        GaussianLaw {
            mean: linalg::vstack(&self.minor.mean, &block.mean),
            cov: block_diag(&self.minor.cov, &block.cov),
        }
    }
}

/// First two moments of a linear SDE on a grid.
#[derive(Debug, Clone)]
pub struct MomentPath {
    pub mean: MatrixPath,
    pub cov: MatrixPath,
}

impl MomentPath {
    pub fn grid(&self) -> &TimeGrid {
        self.mean.grid()
    }

    /// `E[zᵀWz + 2zᵀw] + w0` at a node.
    pub fn quadratic_expectation(&self, node: usize, w: &DMatrix<f64>, linear: &DMatrix<f64>, constant: f64) -> f64 {
        let m = self.mean.node(node);
        trace_product(w, self.cov.node(node))
            + (m.transpose() * w * m)[(0, 0)]
            + 2.0 * (m.transpose() * linear)[(0, 0)]
            + constant
    }
}

/// Integrates `ṁ = A m + c` and `Σ̇ = AΣ + ΣAᵀ + noise·noiseᵀ` forward with RK4.
pub fn propagate_moments(
    drift: impl Fn(GridPoint) -> (DMatrix<f64>, DMatrix<f64>),
    noise: &DMatrix<f64>,
    init: &GaussianLaw,
    grid: &TimeGrid,
) -> Result<MomentPath> {
    propagate_moments_with(drift, noise, init, grid, Scheme::Rk4)
}

/// As [`propagate_moments`] with an explicit scheme. With [`Scheme::Euler`]
/// the mean reproduces a noise-free Euler–Maruyama path exactly.
pub fn propagate_moments_with(
    drift: impl Fn(GridPoint) -> (DMatrix<f64>, DMatrix<f64>),
    noise: &DMatrix<f64>,
    init: &GaussianLaw,
    grid: &TimeGrid,
    scheme: Scheme,
) -> Result<MomentPath> {
    let n = init.dim();
    linalg::check_shape("noise", noise, n, noise.ncols())?;
    let probe = drift(GridPoint::Node(0));
    linalg::check_shape("drift matrix", &probe.0, n, n)?;
    linalg::check_shape("drift vector", &probe.1, n, 1)?;
    let diffusion = noise * noise.transpose();
    let states = integrate_forward_states(
        |p, x: &Vec<DMatrix<f64>>| {
            let (a, c) = drift(p);
            let a_cov = &a * &x[1];
            alloc::vec![&a * &x[0] + c, &a_cov + a_cov.transpose() + &diffusion]
        },
        alloc::vec![init.mean.clone(), linalg::symmetrize(&init.cov)],
        grid,
        scheme,
    )
    .map_err(|e| e.with_context("moment propagation"))?;
    let (means, covs): (Vec<_>, Vec<_>) = states
        .into_iter()
        .map(|mut x| {
            let cov = linalg::symmetrize(&x.pop().expect("two blocks"));
            (x.pop().expect("two blocks"), cov)
        })
        .unzip();
    Ok(MomentPath { mean: MatrixPath::new(*grid, means)?, cov: MatrixPath::new(*grid, covs)? })
}

fn trapezoid(grid: &TimeGrid, values: impl Iterator<Item = f64>) -> f64 {
    let last = grid.n_steps();
    let sum: f64 = values.enumerate().map(|(i, v)| if i == 0 || i == last { 0.5 * v } else { v }).sum();
    sum * grid.dt()
}

fn check_grid(model: &MajorMinorLqModel, major: &MajorGains, minor: &MinorGains) -> Result<TimeGrid> {
    let strategy = FeedbackStrategy { major: major.clone(), minor: minor.clone() };
    let grid = *strategy.grid();
    strategy.check(&model.dims, &grid)?;
    Ok(grid)
}

/// Moments of `𝕏 = [X̄; X⁰]` when both player types follow the given gains.
pub fn state_moments(
    model: &MajorMinorLqModel,
    strategy: &FeedbackStrategy,
    init: &InitialConditions,
) -> Result<MomentPath> {
    let grid = check_grid(model, &strategy.major, &strategy.minor)?;
    let blocks = assemble_blocks(model)?;
    block_moments(&blocks, &strategy.major, &strategy.minor, &init.block_law(), &grid)
}

fn block_moments(
    blocks: &BlockSystem,
    major: &MajorGains,
    minor: &MinorGains,
    init: &GaussianLaw,
    grid: &TimeGrid,
) -> Result<MomentPath> {
    linalg::check_shape("initial law of [Xbar; X0]", &init.mean, blocks.n, 1)?;
    propagate_moments(|p| blocks.full_environment_at(major, minor, p), &blocks.dd0, init, grid)
}

/// Expected major cost `∫ E[𝕏ᵀ𝔽₀𝕏 + 2𝕏ᵀf₀ + η0ᵀQ0η0 + α⁰ᵀR0α⁰] dt`.
///
/// `init` is the law of `𝕏₀ = [X̄₀; X⁰₀]`.
pub fn major_cost(
    model: &MajorMinorLqModel,
    major: &MajorGains,
    minor: &MinorGains,
    init: &GaussianLaw,
) -> Result<f64> {
    let grid = check_grid(model, major, minor)?;
    let blocks = assemble_blocks(model)?;
    let moments = block_moments(&blocks, major, minor, init, &grid)?;
    let integrand = (0..grid.n_nodes()).map(|i| {
        let t = grid.time(i);
        let gain = hstack(major.mean.node(i), major.own.node(i));
        let offset = major.offset.node(i);
        let r_gain = &model.r0 * &gain;
        let w = &blocks.ff0 + gain.transpose() * &r_gain;
        let linear = blocks.f0(t) + r_gain.transpose() * offset;
        let constant = blocks.target_cost(t) + (offset.transpose() * &model.r0 * offset)[(0, 0)];
        moments.quadratic_expectation(i, &w, &linear, constant)
    });
    Ok(trapezoid(&grid, integrand))
}

/// Expected cost of one minor player using `deviation` while the major
/// player uses `major` and the rest of the population uses `minor`.
///
/// The state is `Z = [X̃; X̄; X⁰]` and `init` is its law.
pub fn minor_cost(
    model: &MajorMinorLqModel,
    deviation: &MinorGains,
    major: &MajorGains,
    minor: &MinorGains,
    init: &GaussianLaw,
) -> Result<f64> {
    let grid = check_grid(model, major, minor)?;
    grid.ensure_same(deviation.own.grid(), "deviation")?;
    let blocks = assemble_blocks(model)?;
    let (d, n) = (model.dims.d, blocks.n);
    linalg::check_shape("initial law of [X; Xbar; X0]", &init.mean, d + n, 1)?;
    let coupling = hstack(&model.f, &model.g);
    let noise = block_diag(&model.d, &blocks.dd0);
    let moments = propagate_moments(
        |p| {
            let (lcl, ccl) = blocks.full_environment_at(major, minor, p);
            let own = &model.l + &model.b * deviation.own.eval(p);
            let env = &coupling + &model.b * hstack(&deviation.mean.eval(p), &deviation.major.eval(p));
            let top = hstack(&own, &env);
            let bottom = hstack(&DMatrix::zeros(n, d), &lcl);
            (linalg::vstack(&top, &bottom), linalg::vstack(&(&model.b * deviation.offset.eval(p)), &ccl))
        },
        &noise,
        init,
        &grid,
    )?;
    let select = hstack(&hstack(&DMatrix::identity(d, d), &(-&model.h1)), &(-&model.h));
    let q_select = &model.q * &select;
    let state_w = select.transpose() * &q_select;
    let state_linear = -(q_select.transpose() * &model.eta);
    let state_constant = (model.eta.transpose() * &model.q * &model.eta)[(0, 0)];
    let integrand = (0..grid.n_nodes()).map(|i| {
        let gain = deviation.joint_gain(GridPoint::Node(i));
        let offset = deviation.offset.node(i);
        let r_gain = &model.r * &gain;
        let w = &state_w + gain.transpose() * &r_gain;
        let linear = &state_linear + r_gain.transpose() * offset;
        let constant = state_constant + (offset.transpose() * &model.r * offset)[(0, 0)];
        moments.quadratic_expectation(i, &w, &linear, constant)
    });
    Ok(trapezoid(&grid, integrand))
}

/// Expected major and representative-minor costs of a strategy profile.
pub fn equilibrium_costs(
    model: &MajorMinorLqModel,
    strategy: &FeedbackStrategy,
    init: &InitialConditions,
) -> Result<(f64, f64)> {
    let major = major_cost(model, &strategy.major, &strategy.minor, &init.block_law())?;
    let minor = minor_cost(model, &strategy.minor, &strategy.major, &strategy.minor, &init.joint_law())?;
    Ok((major, minor))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Player {
    Major,
    Minor,
}

impl Player {
    pub fn name(self) -> &'static str {
        match self {
            Player::Major => "major",
            Player::Minor => "minor",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NashGapOptions {
    pub n_directions: usize,
    pub epsilon: f64,
    pub seed: u64,
    /// Bound on `|J'(0)| / max(1, |J(0)|)`.
    pub tolerance: f64,
}

impl Default for NashGapOptions {
    fn default() -> Self {
        Self { n_directions: 5, epsilon: 1e-3, seed: 0, tolerance: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NashGapReport {
    pub player: Player,
    pub epsilon: f64,
    pub tolerance: f64,
    /// `J(0)`, the cost of the unperturbed strategy.
    pub baseline: f64,
    /// `(J(ε) − J(−ε)) / 2ε` per direction.
    pub first_derivatives: Vec<f64>,
    /// `J(ε) − 2J(0) + J(−ε)` per direction.
    pub second_differences: Vec<f64>,
}

impl NashGapReport {
    pub fn directions(&self) -> usize {
        self.first_derivatives.len()
    }

    pub fn max_relative_derivative(&self) -> f64 {
        let scale = self.baseline.abs().max(1.0);
        self.first_derivatives.iter().fold(0.0_f64, |m, g| m.max(g.abs() / scale))
    }

    pub fn min_second_difference(&self) -> f64 {
        self.second_differences.iter().fold(f64::INFINITY, |m, &s| m.min(s))
    }

    /// No profitable first-order deviation and nonnegative curvature in
    /// every tested direction.
    pub fn passed(&self) -> bool {
        self.max_relative_derivative() <= self.tolerance && self.second_differences.iter().all(|&s| s >= 0.0)
    }
}

/// Seeded direction `Δ(t) = Δa + (t/T) Δb` for one path shape.
fn direction_path(grid: &TimeGrid, rows: usize, cols: usize, stream: &mut NormalStream) -> MatrixPath {
    let mut draw = || DMatrix::from_fn(rows, cols, |_, _| 2.0 * stream.next_uniform() - 1.0);
    let a = draw();
    let b = draw();
    let horizon = grid.horizon();
    MatrixPath::from_fn(*grid, |i| &a + &b * (grid.time(i) / horizon)).expect("grid-sized path")
}

fn normalize(paths: &mut [MatrixPath]) {
    let sup = paths.iter().fold(0.0_f64, |m, p| m.max(p.sup_norm()));
    if sup > 0.0 {
        for p in paths.iter_mut() {
            *p = p.map(|m| m / sup);
        }
    }
}

fn axpy_path(base: &MatrixPath, eps: f64, dir: &MatrixPath) -> MatrixPath {
    let values = base.values().iter().zip(dir.values()).map(|(b, d)| b + d * eps).collect();
    MatrixPath::new(*base.grid(), values).expect("matching paths")
}

/// Numerically certifies that `player` has no profitable unilateral deviation
/// from `strategy` along `n_directions` seeded gain perturbations.
pub fn nash_gap(
    model: &MajorMinorLqModel,
    strategy: &FeedbackStrategy,
    player: Player,
    init: &InitialConditions,
    options: NashGapOptions,
) -> Result<NashGapReport> {
    if !(options.epsilon > 0.0) {
        return Err(Error::InvalidArgument("epsilon must be positive".into()));
    }
    let grid = check_grid(model, &strategy.major, &strategy.minor)?;
    let block_law = init.block_law();
    let joint_law = init.joint_law();
    let player_id = match player {
        Player::Major => 0,
        Player::Minor => 1,
    };
    let cost = |perturbed: &[MatrixPath], eps: f64| -> Result<f64> {
        match player {
            Player::Major => {
                let base = &strategy.major;
                let dev = MajorGains {
                    offset: axpy_path(&base.offset, eps, &perturbed[0]),
                    own: axpy_path(&base.own, eps, &perturbed[1]),
                    mean: axpy_path(&base.mean, eps, &perturbed[2]),
                };
                major_cost(model, &dev, &strategy.minor, &block_law)
            }
            Player::Minor => {
                let base = &strategy.minor;
                let dev = MinorGains {
                    offset: axpy_path(&base.offset, eps, &perturbed[0]),
                    own: axpy_path(&base.own, eps, &perturbed[1]),
                    major: axpy_path(&base.major, eps, &perturbed[2]),
                    mean: axpy_path(&base.mean, eps, &perturbed[3]),
                };
                minor_cost(model, &dev, &strategy.major, &strategy.minor, &joint_law)
            }
        }
    };
    let shapes: Vec<(usize, usize)> = match player {
        Player::Major => strategy.major.paths().iter().map(|p| p.shape()).collect(),
        Player::Minor => strategy.minor.paths().iter().map(|p| p.shape()).collect(),
    };
    let zero_dir: Vec<MatrixPath> = shapes.iter().map(|&(r, c)| MatrixPath::zeros(grid, r, c)).collect();
    let baseline = cost(&zero_dir, 0.0)?;
    let eps = options.epsilon;
    let mut first_derivatives = Vec::with_capacity(options.n_directions);
    let mut second_differences = Vec::with_capacity(options.n_directions);
    for k in 0..options.n_directions {
        let mut stream = NormalStream::from_key(stream_key(options.seed, player_id, k as u64));
        let mut dir: Vec<MatrixPath> = shapes.iter().map(|&(r, c)| direction_path(&grid, r, c, &mut stream)).collect();
        normalize(&mut dir);
        let plus = cost(&dir, eps)?;
        let minus = cost(&dir, -eps)?;
        first_derivatives.push((plus - minus) / (2.0 * eps));
        second_differences.push(plus - 2.0 * baseline + minus);
    }
    Ok(NashGapReport {
        player,
        epsilon: eps,
        tolerance: options.tolerance,
        baseline,
        first_derivatives,
        second_differences,
    })
}
