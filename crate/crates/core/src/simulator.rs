//! Euler–Maruyama simulation of the finite game and of its mean-field limit.
//!
//! Agent `0` is the major player and minor player `j` (0-based) is agent
//! `j + 1`. Every agent draws its initial state and then its Brownian
//! increments from its own [`NormalStream`], keyed by
//! `(master_seed, agent, replicate)`. The major player always uses replicate
//! `0`, so all replicates of a run share one common noise `W⁰`.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::equilibrium::{FeedbackStrategy, MinorGains};
use crate::error::{Error, Result};
use crate::evaluator::{GaussianLaw, InitialConditions};
use crate::linalg;
use crate::model::{Dims, MajorMinorLqModel};
use crate::riccati::TimeGrid;
use crate::rng::{splitmix64, stream_key, NormalStream};

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Number of minor players `N`.
    pub n_minor: usize,
    pub grid: TimeGrid,
    pub master_seed: u64,
    pub init: InitialConditions,
}

impl SimConfig {
    pub fn check(&self, model: &MajorMinorLqModel) -> Result<()> {
        if self.n_minor == 0 {
            return Err(Error::InvalidArgument("N must be at least 1".into()));
        }
        check_init(model, &self.init)
    }
}

fn check_init(model: &MajorMinorLqModel, init: &InitialConditions) -> Result<()> {
    let (d0, d) = (model.dims.d0, model.dims.d);
    linalg::check_shape("initial major mean", &init.major.mean, d0, 1)?;
    linalg::check_shape("initial major covariance", &init.major.cov, d0, d0)?;
    linalg::check_shape("initial minor mean", &init.minor.mean, d, 1)?;
    linalg::check_shape("initial minor covariance", &init.minor.cov, d, d)?;
    for (name, cov) in [("initial major covariance", &init.major.cov), ("initial minor covariance", &init.minor.cov)] {
        let asym = linalg::asymmetry(cov).unwrap_or(f64::INFINITY);
        if asym > 1e-12 || linalg::min_eigenvalue(cov) < -1e-12 * linalg::max_abs(cov).max(1.0) {
            return Err(Error::InvalidArgument(alloc::format!("{name} must be symmetric PSD")));
        }
    }
    Ok(())
}

/// Which minor players to keep in a [`PathBundle`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Record {
    All,
    /// The first `n` minor players (fewer if `N < n`).
    First(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedRecord {
    pub master_seed: u64,
    pub replicate: u64,
    /// Key of the major player's stream, shared by all replicates.
    pub common_noise_key: u64,
}

/// Simulated trajectories. Node-major flat storage.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    pub times: Vec<f64>,
    pub d0: usize,
    pub d: usize,
    pub k0: usize,
    pub k: usize,
    pub n_minor: usize,
    /// Indices (0-based) of the recorded minor players.
    pub recorded: Vec<usize>,
    /// `X⁰`, `n_nodes × d0`.
    pub major: Vec<f64>,
    /// Recorded `Xʲ`, `n_nodes × recorded × d`.
    pub minors: Vec<f64>,
    /// `X̄ᴺ` over all `N` minor players, `n_nodes × d`.
    pub empirical_mean: Vec<f64>,
    /// `α⁰`, `n_nodes × k0`; the last node holds the control the strategy
    /// would apply there.
    pub major_controls: Vec<f64>,
    /// Recorded `αʲ`, `n_nodes × recorded × k`.
    pub minor_controls: Vec<f64>,
    /// Standard normal increments of `W⁰` scaled by `√dt`, `n_steps × m0`.
    pub common_increments: Vec<f64>,
    /// Order-sensitive hash of every minor noise draw.
    pub minor_noise_checksum: u64,
    pub seed: SeedRecord,
}

impl PathBundle {
    pub fn n_nodes(&self) -> usize {
        self.times.len()
    }

    pub fn major_state(&self, node: usize) -> &[f64] {
        &self.major[node * self.d0..(node + 1) * self.d0]
    }

    /// State of the `slot`-th recorded minor player.
    pub fn minor_state(&self, node: usize, slot: usize) -> &[f64] {
        let base = (node * self.recorded.len() + slot) * self.d;
        &self.minors[base..base + self.d]
    }

    pub fn mean_state(&self, node: usize) -> &[f64] {
        &self.empirical_mean[node * self.d..(node + 1) * self.d]
    }

    pub fn major_control(&self, node: usize) -> &[f64] {
        &self.major_controls[node * self.k0..(node + 1) * self.k0]
    }

    pub fn minor_control(&self, node: usize, slot: usize) -> &[f64] {
        let base = (node * self.recorded.len() + slot) * self.k;
        &self.minor_controls[base..base + self.k]
    }
}

/// Row-major flattening.
fn flat(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

#[inline]
fn matvec_add(out: &mut [f64], a: &[f64], x: &[f64]) {
    let cols = x.len();
    for (i, o) in out.iter_mut().enumerate() {
        let row = &a[i * cols..(i + 1) * cols];
        let mut acc = 0.0;
        for (r, v) in row.iter().zip(x) {
            acc += r * v;
        }
        *o += acc;
    }
}

/// Closed-loop coefficients on every node, flattened for the agent loop.
struct Coefficients {
    d0: usize,
    d: usize,
    k0: usize,
    k: usize,
    m0: usize,
    m: usize,
    /// `L0 + B0 φ⁰₁`, `d0 × d0`
    major_own: Vec<Vec<f64>>,
    /// `F0 + B0 φ⁰₂`, `d0 × d`
    major_mean: Vec<Vec<f64>>,
    /// `B0 φ⁰₀`
    major_offset: Vec<Vec<f64>>,
    /// `L + B φ₁`, `d × d`
    minor_own: Vec<Vec<f64>>,
    /// `F + B φ₃`, `d × d`
    minor_mean: Vec<Vec<f64>>,
    /// `G + B φ₂`, `d × d0`
    minor_major: Vec<Vec<f64>>,
    /// `B φ₀`
    minor_offset: Vec<Vec<f64>>,
    /// `[φ⁰₀ | φ⁰₁ | φ⁰₂]` flattened per node
    major_gain: Vec<[Vec<f64>; 3]>,
    /// `[φ₀ | φ₁ | φ₂ | φ₃]` flattened per node
    minor_gain: Vec<[Vec<f64>; 4]>,
    d0_noise: Vec<f64>,
    d_noise: Vec<f64>,
}

impl Coefficients {
    fn new(model: &MajorMinorLqModel, strategy: &FeedbackStrategy, minor: &MinorGains) -> Self {
        let nodes = strategy.grid().n_nodes();
        let (mj, mn) = (&strategy.major, minor);
        let collect = |f: &dyn Fn(usize) -> DMatrix<f64>| (0..nodes).map(|i| flat(&f(i))).collect::<Vec<_>>();
        Self {
            d0: model.dims.d0,
            d: model.dims.d,
            k0: model.dims.k0,
            k: model.dims.k,
            m0: model.dims.m0,
            m: model.dims.m,
            major_own: collect(&|i| &model.l0 + &model.b0 * mj.own.node(i)),
            major_mean: collect(&|i| &model.f0 + &model.b0 * mj.mean.node(i)),
            major_offset: collect(&|i| &model.b0 * mj.offset.node(i)),
            minor_own: collect(&|i| &model.l + &model.b * mn.own.node(i)),
            minor_mean: collect(&|i| &model.f + &model.b * mn.mean.node(i)),
            minor_major: collect(&|i| &model.g + &model.b * mn.major.node(i)),
            minor_offset: collect(&|i| &model.b * mn.offset.node(i)),
            major_gain: (0..nodes)
                .map(|i| [flat(mj.offset.node(i)), flat(mj.own.node(i)), flat(mj.mean.node(i))])
                .collect(),
            minor_gain: (0..nodes)
                .map(|i| [flat(mn.offset.node(i)), flat(mn.own.node(i)), flat(mn.major.node(i)), flat(mn.mean.node(i))])
                .collect(),
            d0_noise: flat(&model.d0),
            d_noise: flat(&model.d),
        }
    }

    fn major_control(&self, node: usize, x0: &[f64], mean: &[f64], out: &mut [f64]) {
        let g = &self.major_gain[node];
        out.copy_from_slice(&g[0]);
        matvec_add(out, &g[1], x0);
        matvec_add(out, &g[2], mean);
    }

    fn minor_control(&self, node: usize, x: &[f64], x0: &[f64], mean: &[f64], out: &mut [f64]) {
        let g = &self.minor_gain[node];
        out.copy_from_slice(&g[0]);
        matvec_add(out, &g[1], x);
        matvec_add(out, &g[2], x0);
        matvec_add(out, &g[3], mean);
    }

    /// Drift of `X⁰` given `X⁰` and the (empirical or conditional) mean.
    fn major_drift(&self, node: usize, x0: &[f64], mean: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.major_offset[node]);
        matvec_add(out, &self.major_own[node], x0);
        matvec_add(out, &self.major_mean[node], mean);
    }

    /// State-independent part of every minor drift at a node.
    fn minor_common(&self, node: usize, x0: &[f64], mean: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.minor_offset[node]);
        matvec_add(out, &self.minor_mean[node], mean);
        matvec_add(out, &self.minor_major[node], x0);
    }
}

fn sample_initial(law: &GaussianLaw, factor: &DMatrix<f64>, stream: &mut NormalStream) -> Vec<f64> {
    let n = law.dim();
    let mut z = vec![0.0; n];
    stream.fill_normal(&mut z);
    let mut out: Vec<f64> = law.mean.iter().copied().collect();
    matvec_add(&mut out, &flat(factor), &z);
    out
}

fn mix_checksum(acc: u64, x: f64) -> u64 {
    splitmix64(acc ^ x.to_bits()).wrapping_add(acc.rotate_left(17))
}

fn ensure_finite(values: &[f64], node: usize, agent: usize) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteState { node, agent })
    }
}

/// A model and strategy prepared for repeated simulation.
pub struct Simulator<'a> {
    config: &'a SimConfig,
    coeffs: Coefficients,
    major_factor: DMatrix<f64>,
    minor_factor: DMatrix<f64>,
}

impl<'a> Simulator<'a> {
    pub fn new(model: &MajorMinorLqModel, strategy: &FeedbackStrategy, config: &'a SimConfig) -> Result<Self> {
        model.ensure_valid()?;
        config.check(model)?;
        strategy.check(&model.dims, &config.grid)?;
        Ok(Self {
            config,
            coeffs: Coefficients::new(model, strategy, &strategy.minor),
            major_factor: linalg::psd_sqrt(&config.init.major.cov),
            minor_factor: linalg::psd_sqrt(&config.init.minor.cov),
        })
    }

    /// Runs replicate `replicate` of the finite game.
    pub fn run(&self, replicate: u64, record: &Record) -> Result<PathBundle> {
        let cfg = self.config;
        let c = &self.coeffs;
        let (d0, d, k0, k, m0, m) = (c.d0, c.d, c.k0, c.k, c.m0, c.m);
        let n = cfg.n_minor;
        let grid = cfg.grid;
        let nodes = grid.n_nodes();
        let dt = grid.dt();
        let sqrt_dt = libm::sqrt(dt);
        let recorded: Vec<usize> = match record {
            Record::All => (0..n).collect(),
            Record::First(r) => (0..n.min(*r)).collect(),
        };
        let nr = recorded.len();

        let mut major_stream = NormalStream::new(cfg.master_seed, 0, 0);
        let mut streams: Vec<NormalStream> =
            (0..n).map(|j| NormalStream::new(cfg.master_seed, j as u64 + 1, replicate)).collect();
        let mut x0 = sample_initial(&cfg.init.major, &self.major_factor, &mut major_stream);
        let mut xs = Vec::with_capacity(n * d);
        for s in streams.iter_mut() {
            xs.extend(sample_initial(&cfg.init.minor, &self.minor_factor, s));
        }

        let mut bundle = PathBundle {
            times: grid.times(),
            d0,
            d,
            k0,
            k,
            n_minor: n,
            recorded,
            major: Vec::with_capacity(nodes * d0),
            minors: Vec::with_capacity(nodes * nr * d),
            empirical_mean: Vec::with_capacity(nodes * d),
            major_controls: Vec::with_capacity(nodes * k0),
            minor_controls: Vec::with_capacity(nodes * nr * k),
            common_increments: Vec::with_capacity(grid.n_steps() * m0),
            minor_noise_checksum: 0,
            seed: SeedRecord { master_seed: cfg.master_seed, replicate, common_noise_key: major_stream.key() },
        };

        let mut mean = vec![0.0; d];
        let mut common = vec![0.0; d];
        let mut drift0 = vec![0.0; d0];
        let mut drift = vec![0.0; d];
        let mut control0 = vec![0.0; k0];
        let mut control = vec![0.0; k];
        let mut z0 = vec![0.0; m0];
        let mut z = vec![0.0; m];
        let mut checksum = 0u64;
        for node in 0..nodes {
            mean.iter_mut().for_each(|v| *v = 0.0);
            for x in xs.chunks_exact(d) {
                for (a, b) in mean.iter_mut().zip(x) {
                    *a += b;
                }
            }
            mean.iter_mut().for_each(|v| *v /= n as f64);

            bundle.major.extend_from_slice(&x0);
            bundle.empirical_mean.extend_from_slice(&mean);
            c.major_control(node, &x0, &mean, &mut control0);
            bundle.major_controls.extend_from_slice(&control0);
            for &j in &bundle.recorded {
                let x = &xs[j * d..(j + 1) * d];
                bundle.minors.extend_from_slice(x);
                c.minor_control(node, x, &x0, &mean, &mut control);
                bundle.minor_controls.extend_from_slice(&control);
            }
            if node + 1 == nodes {
                break;
            }

            c.minor_common(node, &x0, &mean, &mut common);
            for (j, (x, stream)) in xs.chunks_exact_mut(d).zip(streams.iter_mut()).enumerate() {
                drift.copy_from_slice(&common);
                matvec_add(&mut drift, &c.minor_own[node], x);
                stream.fill_normal(&mut z);
                for v in z.iter_mut() {
                    checksum = mix_checksum(checksum, *v);
                    *v *= sqrt_dt;
                }
                for (i, xi) in x.iter_mut().enumerate() {
                    let mut noise = 0.0;
                    for (dij, zj) in c.d_noise[i * m..(i + 1) * m].iter().zip(&z) {
                        noise += dij * zj;
                    }
                    *xi += drift[i] * dt + noise;
                }
                ensure_finite(x, node + 1, j + 1)?;
            }

            c.major_drift(node, &x0, &mean, &mut drift0);
            major_stream.fill_normal(&mut z0);
            z0.iter_mut().for_each(|v| *v *= sqrt_dt);
            bundle.common_increments.extend_from_slice(&z0);
            for (i, xi) in x0.iter_mut().enumerate() {
                let mut noise = 0.0;
                for (dij, zj) in c.d0_noise[i * m0..(i + 1) * m0].iter().zip(&z0) {
                    noise += dij * zj;
                }
                *xi += drift0[i] * dt + noise;
            }
            ensure_finite(&x0, node + 1, 0)?;
        }
        bundle.minor_noise_checksum = checksum;
        Ok(bundle)
    }
}

/// One run of the `(N + 1)`-player game, replicate `0`.
pub fn simulate_finite_game(
    model: &MajorMinorLqModel,
    strategy: &FeedbackStrategy,
    config: &SimConfig,
) -> Result<PathBundle> {
    Simulator::new(model, strategy, config)?.run(0, &Record::All)
}

/// `replicates` runs sharing the common noise, each passed to `observe`.
pub fn for_each_replicate(
    model: &MajorMinorLqModel,
    strategy: &FeedbackStrategy,
    config: &SimConfig,
    replicates: usize,
    record: &Record,
    mut observe: impl FnMut(usize, PathBundle) -> Result<()>,
) -> Result<()> {
    if replicates < 2 {
        return Err(Error::InvalidArgument("at least 2 replicates are required".into()));
    }
    let sim = Simulator::new(model, strategy, config)?;
    for s in 0..replicates {
        observe(s, sim.run(s as u64, record)?)?;
    }
    Ok(())
}

/// All replicates of a conditional ensemble, kept in memory.
pub fn simulate_conditional_ensemble(
    model: &MajorMinorLqModel,
    strategy: &FeedbackStrategy,
    config: &SimConfig,
    replicates: usize,
) -> Result<Vec<PathBundle>> {
    let mut out = Vec::with_capacity(replicates);
    for_each_replicate(model, strategy, config, replicates, &Record::All, |_, b| {
        out.push(b);
        Ok(())
    })?;
    Ok(out)
}

/// Paths of the limiting system. Node-major flat storage.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanFieldPaths {
    pub times: Vec<f64>,
    pub d0: usize,
    pub d: usize,
    /// `X⁰`
    pub major: Vec<f64>,
    /// `X̄ = E[X | W⁰]`
    pub conditional_mean: Vec<f64>,
    /// One minor player in the limiting environment.
    pub representative: Vec<f64>,
    pub major_controls: Vec<f64>,
    pub representative_controls: Vec<f64>,
}

impl MeanFieldPaths {
    pub fn major_state(&self, node: usize) -> &[f64] {
        &self.major[node * self.d0..(node + 1) * self.d0]
    }

    pub fn mean_state(&self, node: usize) -> &[f64] {
        &self.conditional_mean[node * self.d..(node + 1) * self.d]
    }

    pub fn representative_state(&self, node: usize) -> &[f64] {
        &self.representative[node * self.d..(node + 1) * self.d]
    }
}

/// Simulates `X⁰`, the conditional mean `X̄` and one representative minor.
///
/// `X⁰` uses the stream of agent `0` and the representative that of agent
/// `1`, so with equal seeds the paths are coupled to
/// [`simulate_finite_game`] through the same `W⁰` and initial major state.
pub fn simulate_mean_field(
    model: &MajorMinorLqModel,
    strategy: &FeedbackStrategy,
    seed: u64,
    grid: &TimeGrid,
    init: &InitialConditions,
) -> Result<MeanFieldPaths> {
    simulate_mean_field_deviating(model, strategy, &strategy.minor, seed, grid, init)
}

/// As [`simulate_mean_field`], with the representative minor using `deviation`.
pub fn simulate_mean_field_deviating(
    model: &MajorMinorLqModel,
    strategy: &FeedbackStrategy,
    deviation: &MinorGains,
    seed: u64,
    grid: &TimeGrid,
    init: &InitialConditions,
) -> Result<MeanFieldPaths> {
    model.ensure_valid()?;
    check_init(model, init)?;
    strategy.check(&model.dims, grid)?;
    grid.ensure_same(deviation.own.grid(), "deviation")?;
    let c = Coefficients::new(model, strategy, &strategy.minor);
    let dev = Coefficients::new(model, strategy, deviation);
    let (d0, d, k0, k, m0, m) = (c.d0, c.d, c.k0, c.k, c.m0, c.m);
    let nodes = grid.n_nodes();
    let dt = grid.dt();
    let sqrt_dt = libm::sqrt(dt);

    let mut major_stream = NormalStream::new(seed, 0, 0);
    let mut rep_stream = NormalStream::new(seed, 1, 0);
    let mut x0 = sample_initial(&init.major, &linalg::psd_sqrt(&init.major.cov), &mut major_stream);
    let mut x = sample_initial(&init.minor, &linalg::psd_sqrt(&init.minor.cov), &mut rep_stream);
    let mut xbar: Vec<f64> = init.minor.mean.iter().copied().collect();

    let mut out = MeanFieldPaths {
        times: grid.times(),
        d0,
        d,
        major: Vec::with_capacity(nodes * d0),
        conditional_mean: Vec::with_capacity(nodes * d),
        representative: Vec::with_capacity(nodes * d),
        major_controls: Vec::with_capacity(nodes * k0),
        representative_controls: Vec::with_capacity(nodes * k),
    };
    let mut drift0 = vec![0.0; d0];
    let mut drift_bar = vec![0.0; d];
    let mut drift = vec![0.0; d];
    let mut control0 = vec![0.0; k0];
    let mut control = vec![0.0; k];
    let mut z0 = vec![0.0; m0];
    let mut z = vec![0.0; m];
    for node in 0..nodes {
        out.major.extend_from_slice(&x0);
        out.conditional_mean.extend_from_slice(&xbar);
        out.representative.extend_from_slice(&x);
        c.major_control(node, &x0, &xbar, &mut control0);
        out.major_controls.extend_from_slice(&control0);
        dev.minor_control(node, &x, &x0, &xbar, &mut control);
        out.representative_controls.extend_from_slice(&control);
        if node + 1 == nodes {
            break;
        }
        // dX̄ = [(L + F + B(φ₁ + φ₃)) X̄ + (G + Bφ₂) X⁰ + Bφ₀] dt
        c.minor_common(node, &x0, &xbar, &mut drift_bar);
        matvec_add(&mut drift_bar, &c.minor_own[node], &xbar);
        dev.minor_common(node, &x0, &xbar, &mut drift);
        matvec_add(&mut drift, &dev.minor_own[node], &x);
        c.major_drift(node, &x0, &xbar, &mut drift0);

        rep_stream.fill_normal(&mut z);
        major_stream.fill_normal(&mut z0);
        for (i, xi) in x.iter_mut().enumerate() {
            let noise: f64 = c.d_noise[i * m..(i + 1) * m].iter().zip(&z).map(|(a, b)| a * b).sum();
            *xi += drift[i] * dt + noise * sqrt_dt;
        }
        for (i, xi) in x0.iter_mut().enumerate() {
            let noise: f64 = c.d0_noise[i * m0..(i + 1) * m0].iter().zip(&z0).map(|(a, b)| a * b).sum();
            *xi += drift0[i] * dt + noise * sqrt_dt;
        }
        for (xi, v) in xbar.iter_mut().zip(&drift_bar) {
            *xi += v * dt;
        }
        ensure_finite(&x, node + 1, 1)?;
        ensure_finite(&x0, node + 1, 0)?;
        ensure_finite(&xbar, node + 1, 0)?;
    }
    Ok(out)
}

/// Sample mean and standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

impl Estimate {
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        Self { mean, std_error: libm::sqrt(var / n) }
    }

    /// `|mean − value|` in units of the standard error.
    pub fn z_score(&self, value: f64) -> f64 {
        (self.mean - value).abs() / self.std_error
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostEstimates {
    pub major: Estimate,
    pub minor: Estimate,
}

/// `vᵀ W v`
fn quadratic_form(v: &[f64], w: &DMatrix<f64>) -> f64 {
    let n = v.len();
    (0..n).map(|i| v[i] * (0..n).map(|j| w[(i, j)] * v[j]).sum::<f64>()).sum()
}

/// Monte Carlo estimates of the major cost and of the cost of a representative
/// minor using `deviation`, over `n_paths` mean-field simulations.
///
/// Running costs are integrated along each Euler path with the trapezoidal rule.
pub fn monte_carlo_costs(
    model: &MajorMinorLqModel,
    strategy: &FeedbackStrategy,
    deviation: &MinorGains,
    init: &InitialConditions,
    master_seed: u64,
    n_paths: usize,
) -> Result<CostEstimates> {
    if n_paths < 2 {
        return Err(Error::InvalidArgument("at least 2 paths are required".into()));
    }
    let grid = *strategy.grid();
    let Dims { d0, d, k0, k, .. } = model.dims;
    let eta0: Vec<f64> = (0..grid.n_nodes()).flat_map(|i| model.eta0.at(grid.time(i)).as_slice().to_vec()).collect();
    let mut major_costs = Vec::with_capacity(n_paths);
    let mut minor_costs = Vec::with_capacity(n_paths);
    let mut e0 = vec![0.0; d0];
    let mut e = vec![0.0; d];
    for r in 0..n_paths {
        let seed = stream_key(master_seed, u64::MAX, r as u64);
        let paths = simulate_mean_field_deviating(model, strategy, deviation, seed, &grid, init)?;
        let mut j0 = 0.0;
        let mut j = 0.0;
        for node in 0..grid.n_nodes() {
            let w = if node == 0 || node == grid.n_steps() { 0.5 } else { 1.0 };
            let (x0, xbar, x) = (paths.major_state(node), paths.mean_state(node), paths.representative_state(node));
            // e0 = X⁰ − H0 X̄ − η₀,  e = X − H1 X̄ − H X⁰ − η
            for i in 0..d0 {
                e0[i] = x0[i] - eta0[node * d0 + i] - (0..d).map(|c| model.h0[(i, c)] * xbar[c]).sum::<f64>();
            }
            for i in 0..d {
                e[i] = x[i]
                    - model.eta[(i, 0)]
                    - (0..d).map(|c| model.h1[(i, c)] * xbar[c]).sum::<f64>()
                    - (0..d0).map(|c| model.h[(i, c)] * x0[c]).sum::<f64>();
            }
            let a0 = &paths.major_controls[node * k0..(node + 1) * k0];
            let a = &paths.representative_controls[node * k..(node + 1) * k];
            j0 += w * (quadratic_form(&e0, &model.q0) + quadratic_form(a0, &model.r0));
            j += w * (quadratic_form(&e, &model.q) + quadratic_form(a, &model.r));
        }
        major_costs.push(j0 * grid.dt());
        minor_costs.push(j * grid.dt());
    }
    Ok(CostEstimates { major: Estimate::from_samples(&major_costs), minor: Estimate::from_samples(&minor_costs) })
}
