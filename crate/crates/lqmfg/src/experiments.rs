//! Experiment drivers shared by the command line and the acceptance suite.
//! Nothing here touches the file system.

use anyhow::{Context, Result};
use lqmfg_core::equilibrium::{
    best_response_iteration, fixed_point_residual, major_best_response, minor_best_response, solve_closed_loop,
    solve_open_loop, FeedbackStrategy, IterationOptions,
};
use lqmfg_core::evaluator::{nash_gap, InitialConditions, NashGapOptions, NashGapReport, Player};
use lqmfg_core::model::MajorMinorLqModel;
use lqmfg_core::riccati::{MatrixPath, TimeGrid};
use lqmfg_core::rng::NormalStream;
use lqmfg_core::simulator::{for_each_replicate, PathBundle, Record, SimConfig, Simulator};
use lqmfg_core::DMatrix;

use crate::config::{NashSpec, SolverMethod, SolverSpec};

/// Cross-replicate variance below which a follower's correlation is undefined.
pub const MIN_VARIANCE: f64 = 1e-14;

/// Number of followers whose correlations the chaos experiment tracks.
pub const CHAOS_FOLLOWERS: usize = 5;

/// Replicate index reserved for initial-position draws.
const POSITION_REPLICATE: u64 = u64::MAX - 1;

#[derive(Debug, Clone)]
pub struct OpenLoopDiagnostics {
    pub consistency_error: f64,
    /// Sup-norm distance between open- and closed-loop gains, when the latter exist.
    pub gap_to_closed_loop: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct IterationSummary {
    pub history: Vec<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct Solved {
    pub method: SolverMethod,
    pub strategy: FeedbackStrategy,
    /// Named Riccati paths backing the gains.
    pub riccati: Vec<(&'static str, MatrixPath)>,
    /// Distance of the strategy to its closed-loop best responses.
    pub residual: f64,
    pub iteration: Option<IterationSummary>,
    pub open_loop: Option<OpenLoopDiagnostics>,
}

pub fn solve(model: &MajorMinorLqModel, grid: &TimeGrid, spec: &SolverSpec) -> Result<Solved> {
    let open_loop_diag = |ol: &lqmfg_core::equilibrium::OpenLoopSolution| OpenLoopDiagnostics {
        consistency_error: ol.consistency_error,
        gap_to_closed_loop: solve_closed_loop(model, grid).ok().map(|cl| cl.strategy.sup_distance(&ol.strategy)),
    };
    let mut solved = match spec.method {
        SolverMethod::ClosedLoop => {
            let cl = solve_closed_loop(model, grid)?;
            Solved {
                method: spec.method,
                residual: cl.residual,
                riccati: vec![("K", cl.k), ("k", cl.kvec), ("S", cl.s), ("SS", cl.ss), ("s", cl.svec)],
                strategy: cl.strategy,
                iteration: None,
                open_loop: None,
            }
        }
        SolverMethod::OpenLoop => {
            let ol = solve_open_loop(model, grid)?;
            let diag = open_loop_diag(&ol);
            Solved {
                method: spec.method,
                residual: fixed_point_residual(model, &ol.strategy)?,
                riccati: vec![("P", ol.p), ("p", ol.pvec), ("S", ol.s), ("SS", ol.ss), ("s", ol.svec)],
                strategy: ol.strategy,
                iteration: None,
                open_loop: Some(diag),
            }
        }
        SolverMethod::BestResponseIteration => {
            let options = IterationOptions { max_iter: spec.max_iter, tol: spec.tol, damping: spec.damping };
            let out = best_response_iteration(model, &FeedbackStrategy::zeros(&model.dims, *grid), options)?;
            let major = major_best_response(model, &out.strategy.minor)?;
            let minor = minor_best_response(model, &out.strategy.major, &out.strategy.minor)?;
            Solved {
                method: spec.method,
                residual: fixed_point_residual(model, &out.strategy)?,
                riccati: vec![("K", major.k), ("k", major.kvec), ("S", minor.s), ("SS", minor.ss), ("s", minor.svec)],
                strategy: out.strategy,
                iteration: Some(IterationSummary { history: out.history, converged: out.converged }),
                open_loop: None,
            }
        }
    };
    if spec.open_loop_diagnostics && solved.open_loop.is_none() {
        solved.open_loop = Some(open_loop_diag(&solve_open_loop(model, grid)?));
    }
    Ok(solved)
}

#[derive(Debug, Clone)]
pub struct NashCheck {
    pub gain_scale: f64,
    pub reports: Vec<NashGapReport>,
}

impl NashCheck {
    pub fn passed(&self) -> bool {
        self.reports.iter().all(NashGapReport::passed)
    }
}

/// Nash-gap certification of `strategy` scaled by `spec.gain_scale`, for both players.
pub fn nash_check(
    model: &MajorMinorLqModel,
    strategy: &FeedbackStrategy,
    init: &InitialConditions,
    spec: &NashSpec,
) -> Result<NashCheck> {
    let scaled;
    let strategy = if spec.gain_scale == 1.0 {
        strategy
    } else {
        scaled = strategy.scaled(spec.gain_scale);
        &scaled
    };
    let options = NashGapOptions {
        n_directions: spec.directions,
        epsilon: spec.epsilon,
        seed: spec.seed,
        tolerance: spec.tolerance,
    };
    let reports = [Player::Major, Player::Minor]
        .into_iter()
        .map(|p| nash_gap(model, strategy, p, init, options).with_context(|| format!("{} nash gap", p.name())))
        .collect::<Result<Vec<_>>>()?;
    Ok(NashCheck { gain_scale: spec.gain_scale, reports })
}

#[derive(Debug, Clone)]
pub struct ChaosResult {
    pub n_minor: usize,
    pub replicates: usize,
    /// Node-averaged correlation of the first state component of the first
    /// `min(5, N)` followers; NaN when every node was excluded.
    pub correlation: DMatrix<f64>,
    /// Mean absolute off-diagonal entry of `correlation`.
    pub mean_abs_off_diag: f64,
    pub nodes: usize,
    pub excluded_nodes: usize,
    pub times: Vec<f64>,
    /// Common noise path `W⁰(t)`, `m0` entries per node.
    pub common_noise: Vec<f64>,
    /// Cross-replicate mean and std of the leader's first state component per node.
    pub leader_mean: Vec<f64>,
    pub leader_std: Vec<f64>,
}

/// Conditional propagation-of-chaos statistics for one flock size.
///
/// All replicates share the common noise. At each node the sample
/// correlation across replicates is formed, and the matrices are averaged
/// over nodes where every tracked follower has variance above
/// [`MIN_VARIANCE`].
pub fn chaos(
    model: &MajorMinorLqModel,
    strategy: &FeedbackStrategy,
    base: &SimConfig,
    n_minor: usize,
    replicates: usize,
) -> Result<ChaosResult> {
    anyhow::ensure!(replicates >= 2, "chaos needs at least 2 replicates, got {replicates}");
    let config = SimConfig { n_minor, ..base.clone() };
    let f = n_minor.min(CHAOS_FOLLOWERS);
    let nodes = config.grid.n_nodes();
    // Welford accumulators per node: means, co-moments, and the leader.
    let mut mean = vec![0.0; nodes * f];
    let mut comoment = vec![0.0; nodes * f * f];
    let mut leader = vec![(0.0, 0.0); nodes];
    let mut common_noise = Vec::new();
    let mut x = vec![0.0; f];
    let mut delta = vec![0.0; f];
    for_each_replicate(model, strategy, &config, replicates, &Record::First(f), |r, bundle| {
        let count = (r + 1) as f64;
        if r == 0 {
            common_noise = cumulative(&bundle.common_increments, model.dims.m0);
        }
        for node in 0..nodes {
            for (slot, xi) in x.iter_mut().enumerate() {
                *xi = bundle.minor_state(node, slot)[0];
            }
            let mu = &mut mean[node * f..(node + 1) * f];
            for i in 0..f {
                delta[i] = x[i] - mu[i];
                mu[i] += delta[i] / count;
            }
            let c = &mut comoment[node * f * f..(node + 1) * f * f];
            for i in 0..f {
                for j in 0..f {
                    c[i * f + j] += delta[i] * (x[j] - mu[j]);
                }
            }
            let y = bundle.major_state(node)[0];
            let (m, s) = &mut leader[node];
            let dy = y - *m;
            *m += dy / count;
            *s += dy * (y - *m);
        }
        Ok(())
    })?;
    let denom = (replicates - 1) as f64;
    let mut sum = DMatrix::<f64>::zeros(f, f);
    let mut used = 0usize;
    for node in 0..nodes {
        let c = &comoment[node * f * f..(node + 1) * f * f];
        if (0..f).any(|i| c[i * f + i] / denom < MIN_VARIANCE) {
            continue;
        }
        used += 1;
        for i in 0..f {
            for j in 0..f {
                sum[(i, j)] += if i == j { 1.0 } else { c[i * f + j] / (c[i * f + i] * c[j * f + j]).sqrt() };
            }
        }
    }
    let correlation = if used == 0 { DMatrix::from_element(f, f, f64::NAN) } else { sum / used as f64 };
    Ok(ChaosResult {
        n_minor,
        replicates,
        mean_abs_off_diag: mean_abs_off_diag(&correlation),
        correlation,
        nodes,
        excluded_nodes: nodes - used,
        times: config.grid.times(),
        common_noise,
        leader_mean: leader.iter().map(|l| l.0).collect(),
        leader_std: leader.iter().map(|l| (l.1 / denom).sqrt()).collect(),
    })
}

fn cumulative(increments: &[f64], width: usize) -> Vec<f64> {
    let mut out = vec![0.0; width];
    let mut acc = vec![0.0; width];
    for step in increments.chunks(width) {
        for (a, dw) in acc.iter_mut().zip(step) {
            *a += dw;
        }
        out.extend_from_slice(&acc);
    }
    out
}

/// NaN for matrices smaller than 2×2.
pub fn mean_abs_off_diag(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    if n < 2 {
        return f64::NAN;
    }
    let total: f64 =
        (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter(|(i, j)| i != j).map(|ij| m[ij].abs()).sum();
    total / (n * (n - 1)) as f64
}

/// Spearman rank correlation, ties sharing their average rank.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = xs.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

/// Time-averaged tracking metrics of a flocking run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlockMetrics {
    /// Mean over nodes of `‖V⁰ − ν‖`.
    pub leader_tracking: f64,
    /// Mean over nodes of `‖V̄ᴺ − V⁰‖`.
    pub flock_to_leader: f64,
}

/// Metrics of one simulated flock. The model must be a flocking embedding:
/// velocities are the first half of each state and `ν` the first half of `η₀`.
pub fn flock_metrics(model: &MajorMinorLqModel, bundle: &PathBundle) -> FlockMetrics {
    let dv = model.dims.d0 / 2;
    let nodes = bundle.n_nodes();
    let mut tracking = 0.0;
    let mut gap = 0.0;
    for node in 0..nodes {
        let v0 = &bundle.major_state(node)[..dv];
        let nu = model.eta0.at(bundle.times[node]);
        let vbar = &bundle.mean_state(node)[..dv];
        tracking += (0..dv).map(|i| (v0[i] - nu[(i, 0)]).powi(2)).sum::<f64>().sqrt();
        gap += (0..dv).map(|i| (vbar[i] - v0[i]).powi(2)).sum::<f64>().sqrt();
    }
    FlockMetrics { leader_tracking: tracking / nodes as f64, flock_to_leader: gap / nodes as f64 }
}

#[derive(Debug, Clone)]
pub struct PanelRun {
    /// Metrics for master seeds `base, base + 1, …`.
    pub per_seed: Vec<FlockMetrics>,
    /// Full record of the run with the base seed.
    pub first: PathBundle,
}

impl PanelRun {
    pub fn mean(&self) -> FlockMetrics {
        let n = self.per_seed.len() as f64;
        FlockMetrics {
            leader_tracking: self.per_seed.iter().map(|m| m.leader_tracking).sum::<f64>() / n,
            flock_to_leader: self.per_seed.iter().map(|m| m.flock_to_leader).sum::<f64>() / n,
        }
    }
}

/// Simulates the flock under `strategy` for `seeds` consecutive master seeds.
pub fn run_panel(
    model: &MajorMinorLqModel,
    strategy: &FeedbackStrategy,
    base: &SimConfig,
    seeds: usize,
) -> Result<PanelRun> {
    anyhow::ensure!(seeds >= 1, "at least one seed is required");
    let mut per_seed = Vec::with_capacity(seeds);
    let mut first = None;
    for i in 0..seeds {
        let config = SimConfig { master_seed: base.master_seed.wrapping_add(i as u64), ..base.clone() };
        let bundle = Simulator::new(model, strategy, &config)?.run(0, &Record::All)?;
        per_seed.push(flock_metrics(model, &bundle));
        if i == 0 {
            first = Some(bundle);
        }
    }
    Ok(PanelRun { per_seed, first: first.expect("seeds >= 1") })
}

/// Positions and velocities of every agent; agent 0 is the leader.
#[derive(Debug, Clone)]
pub struct Trajectories {
    pub dv: usize,
    pub times: Vec<f64>,
    /// Per agent, per node.
    pub positions: Vec<Vec<Vec<f64>>>,
    pub velocities: Vec<Vec<Vec<f64>>>,
}

/// Integrates velocities into positions. The leader starts at `leader_start`,
/// followers at i.i.d. `N(0, scatter²)` points drawn from the master seed.
pub fn trajectories(bundle: &PathBundle, leader_start: &[f64], scatter: f64) -> Trajectories {
    let dv = bundle.d0 / 2;
    let nodes = bundle.n_nodes();
    let dt = if nodes > 1 { bundle.times[1] - bundle.times[0] } else { 0.0 };
    let mut positions = Vec::new();
    let mut velocities = Vec::new();
    let agents = 1 + bundle.recorded.len();
    for agent in 0..agents {
        let vel: Vec<Vec<f64>> = (0..nodes)
            .map(|node| {
                let s = if agent == 0 { bundle.major_state(node) } else { bundle.minor_state(node, agent - 1) };
                lqmfg_core::flocking::velocity(s).to_vec()
            })
            .collect();
        let start: Vec<f64> = if agent == 0 {
            leader_start.to_vec()
        } else {
            let id = bundle.recorded[agent - 1] as u64 + 1;
            let mut stream = NormalStream::new(bundle.seed.master_seed, id, POSITION_REPLICATE);
            (0..dv).map(|_| scatter * stream.next_normal()).collect()
        };
        positions.push(lqmfg_core::flocking::integrate_positions(&start, &vel, dt));
        velocities.push(vel);
    }
    Trajectories { dv, times: bundle.times.clone(), positions, velocities }
}
