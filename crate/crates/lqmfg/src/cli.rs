//! Subcommands: each solves or simulates, then writes its files into the output directory.

use std::path::{Path, PathBuf};

use anyhow::Result;
use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use crate::config::{Overrides, RunConfig};
use crate::experiments::{self, Solved};
use crate::io::{self, Csv};
use lqmfg_core::evaluator::NashGapReport;
use lqmfg_core::simulator::{simulate_finite_game, Record, Simulator};

#[derive(Debug, Parser)]
#[command(name = "lqmfg", version, about = "Linear-quadratic major/minor mean field game solver and simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct CommonArgs {
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `simulation.masterSeed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `grid.nSteps`.
    #[arg(long)]
    pub n_steps: Option<usize>,
    /// Output directory (default: `output` from the config, else `out`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve for equilibrium gains: gains.json, riccati.csv, diagnostics.json.
    Solve(CommonArgs),
    /// Conditional propagation of chaos: chaos_N.csv per flock size and summary.csv.
    Chaos(CommonArgs),
    /// Flocking panels: traj_<panel>.csv and metrics.json.
    Trajectories(CommonArgs),
    /// Nash-gap certification: nash_report.json; exit status 2 on failure.
    NashCheck(CommonArgs),
    /// One finite-population run: paths.csv and simulation.json.
    Simulate(CommonArgs),
}

impl Command {
    pub fn args(&self) -> &CommonArgs {
        match self {
            Command::Solve(a)
            | Command::Chaos(a)
            | Command::Trajectories(a)
            | Command::NashCheck(a)
            | Command::Simulate(a) => a,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// The run finished but a certification failed.
    CheckFailed,
}

/// Loads the config, applies overrides and dispatches.
pub fn execute(command: &Command) -> Result<Outcome> {
    let args = command.args();
    let mut cfg = RunConfig::load(&args.config)?;
    cfg.apply(&Overrides { seed: args.seed, n_steps: args.n_steps, out: args.out.clone() });
    let out = cfg.output.clone().unwrap_or_else(|| PathBuf::from("out"));
    match command {
        Command::Solve(_) => cmd_solve(&cfg, &out),
        Command::Chaos(_) => cmd_chaos(&cfg, &out),
        Command::Trajectories(_) => cmd_trajectories(&cfg, &out),
        Command::NashCheck(_) => cmd_nash_check(&cfg, &out),
        Command::Simulate(_) => cmd_simulate(&cfg, &out),
    }
}

fn solve(cfg: &RunConfig) -> Result<(lqmfg_core::model::MajorMinorLqModel, Solved)> {
    let model = cfg.build_model()?;
    let grid = cfg.time_grid()?;
    let solved = experiments::solve(&model, &grid, &cfg.solver)?;
    if let Some(it) = &solved.iteration {
        if !it.converged {
            eprintln!("warning: best-response iteration did not converge in {} iterations", it.history.len());
        }
    }
    Ok((model, solved))
}

pub fn cmd_solve(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let hash = cfg.hash();
    let (_, solved) = solve(cfg)?;
    let grid = *solved.strategy.grid();
    let (major, minor) = (&solved.strategy.major, &solved.strategy.minor);
    io::write_json(
        &out.join("gains.json"),
        &hash,
        json!({
            "method": solved.method.name(),
            "grid": {"horizon": grid.horizon(), "nSteps": grid.n_steps(), "nNodes": grid.n_nodes()},
            "times": grid.times(),
            "major": {
                "offset": io::path_json(&major.offset),
                "own": io::path_json(&major.own),
                "mean": io::path_json(&major.mean),
            },
            "minor": {
                "offset": io::path_json(&minor.offset),
                "own": io::path_json(&minor.own),
                "major": io::path_json(&minor.major),
                "mean": io::path_json(&minor.mean),
            },
        }),
    )?;
    let named: Vec<(&str, &lqmfg_core::riccati::MatrixPath)> = solved.riccati.iter().map(|(n, p)| (*n, p)).collect();
    io::paths_csv(&hash, &named).save(&out.join("riccati.csv"))?;
    let mut diag = json!({
        "method": solved.method.name(),
        "fixedPointResidual": solved.residual,
    });
    if let Some(it) = &solved.iteration {
        diag["iteration"] = json!({"iterations": it.history.len(), "converged": it.converged, "history": it.history});
    }
    if let Some(ol) = &solved.open_loop {
        diag["openLoop"] = json!({"consistencyError": ol.consistency_error, "gapToClosedLoop": ol.gap_to_closed_loop});
    }
    io::write_json(&out.join("diagnostics.json"), &hash, diag)?;
    Ok(Outcome::Success)
}

pub fn cmd_chaos(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let hash = cfg.hash();
    let replicates = cfg.simulation.replicates;
    anyhow::ensure!(replicates >= 2, "chaos needs simulation.replicates >= 2, got {replicates}");
    let (model, solved) = solve(cfg)?;
    let base = cfg.sim_config(1)?;
    let mut summary =
        Csv::new(&hash, &["N", "replicates", "meanAbsOffDiag", "nodes", "excludedNodes"].map(String::from));
    let mut sizes = Vec::new();
    let mut values = Vec::new();
    for &n in &cfg.experiment.flock_sizes {
        let r = experiments::chaos(&model, &solved.strategy, &base, n, replicates)?;
        if r.excluded_nodes > 0 {
            eprintln!(
                "warning: N = {n}: {} of {} nodes excluded (follower variance below {:e}); their correlations are undefined",
                r.excluded_nodes,
                r.nodes,
                experiments::MIN_VARIANCE
            );
        }
        let f = r.correlation.nrows();
        let mut m = Csv::new(&hash, &(1..=f).map(|i| format!("f{i}")).collect::<Vec<_>>());
        for i in 0..f {
            m.row(&r.correlation.row(i).iter().copied().collect::<Vec<_>>());
        }
        m.save(&out.join(format!("chaos_{n}.csv")))?;
        let m0 = model.dims.m0;
        let mut header = vec!["t".to_string(), "leaderMean".into(), "leaderStd".into()];
        header.extend((0..m0).map(|j| format!("W0[{j}]")));
        let mut leader = Csv::new(&hash, &header);
        for node in 0..r.nodes {
            let mut row = vec![r.times[node], r.leader_mean[node], r.leader_std[node]];
            row.extend_from_slice(&r.common_noise[node * m0..(node + 1) * m0]);
            leader.row(&row);
        }
        leader.save(&out.join(format!("chaos_{n}_leader.csv")))?;
        summary.row(&[n as f64, replicates as f64, r.mean_abs_off_diag, r.nodes as f64, r.excluded_nodes as f64]);
        sizes.push(n as f64);
        values.push(r.mean_abs_off_diag);
    }
    summary.save(&out.join("summary.csv"))?;
    let rank = if sizes.len() >= 2 { experiments::spearman(&sizes, &values) } else { f64::NAN };
    io::write_json(
        &out.join("summary.json"),
        &hash,
        json!({"flockSizes": sizes, "meanAbsOffDiag": values, "replicates": replicates, "spearman": rank}),
    )?;
    Ok(Outcome::Success)
}

pub fn cmd_trajectories(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let hash = cfg.hash();
    let panels = cfg.panels()?;
    let grid = cfg.time_grid()?;
    let base = cfg.sim_config(cfg.simulation.n_minor)?;
    let init = &cfg.simulation.init;
    let mut entries = Vec::new();
    for (name, params) in &panels {
        let model = lqmfg_core::flocking::embed(params)?;
        let solved = experiments::solve(&model, &grid, &cfg.solver)?;
        let run = experiments::run_panel(&model, &solved.strategy, &base, cfg.experiment.seeds)?;
        let dv = params.dv;
        let leader_start = init.leader_position.clone().unwrap_or_else(|| vec![0.0; dv]);
        anyhow::ensure!(leader_start.len() == dv, "leaderPosition must have {dv} entries");
        let traj = experiments::trajectories(&run.first, &leader_start, init.follower_scatter);
        let mut header = vec!["t".to_string(), "agent_id".into()];
        header.extend((0..dv).map(|i| format!("pos{i}")));
        header.extend((0..dv).map(|i| format!("vel{i}")));
        let mut csv = Csv::new(&hash, &header);
        let mut row = Vec::with_capacity(header.len());
        for agent in 0..traj.positions.len() {
            for (node, &t) in traj.times.iter().enumerate() {
                row.clear();
                row.extend([t, agent as f64]);
                row.extend_from_slice(&traj.positions[agent][node]);
                row.extend_from_slice(&traj.velocities[agent][node]);
                csv.row(&row);
            }
        }
        csv.save(&out.join(format!("traj_{name}.csv")))?;
        let mean = run.mean();
        entries.push(json!({
            "name": name,
            "lambda0": params.lambda0,
            "lambda1": params.lambda1,
            "l0": params.l0,
            "l1": params.l1,
            "timeAveragedLeaderTracking": mean.leader_tracking,
            "timeAveragedFlockToLeader": mean.flock_to_leader,
            "perSeed": run.per_seed.iter().map(|m| json!({
                "leaderTracking": m.leader_tracking,
                "flockToLeader": m.flock_to_leader,
            })).collect::<Vec<_>>(),
        }));
    }
    io::write_json(
        &out.join("metrics.json"),
        &hash,
        json!({
            "nMinor": cfg.simulation.n_minor,
            "seeds": cfg.experiment.seeds,
            "masterSeed": cfg.simulation.master_seed,
            "panels": entries,
        }),
    )?;
    Ok(Outcome::Success)
}

fn report_json(r: &NashGapReport) -> Value {
    json!({
        "player": r.player.name(),
        "passed": r.passed(),
        "baseline": r.baseline,
        "epsilon": r.epsilon,
        "tolerance": r.tolerance,
        "directions": r.directions(),
        "maxRelativeDerivative": r.max_relative_derivative(),
        "minSecondDifference": r.min_second_difference(),
        "firstDerivatives": r.first_derivatives,
        "secondDifferences": r.second_differences,
    })
}

pub fn cmd_nash_check(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let hash = cfg.hash();
    let (model, solved) = solve(cfg)?;
    let init = cfg.initial_conditions()?;
    let check = experiments::nash_check(&model, &solved.strategy, &init, &cfg.experiment.nash)?;
    let passed = check.passed();
    io::write_json(
        &out.join("nash_report.json"),
        &hash,
        json!({
            "method": solved.method.name(),
            "gainScale": check.gain_scale,
            "passed": passed,
            "players": check.reports.iter().map(report_json).collect::<Vec<_>>(),
        }),
    )?;
    for r in &check.reports {
        eprintln!(
            "{}: {} (max relative derivative {:e}, tolerance {:e})",
            r.player.name(),
            if r.passed() { "pass" } else { "FAIL" },
            r.max_relative_derivative(),
            r.tolerance
        );
    }
    Ok(if passed { Outcome::Success } else { Outcome::CheckFailed })
}

pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let hash = cfg.hash();
    let (model, solved) = solve(cfg)?;
    let config = cfg.sim_config(cfg.simulation.n_minor)?;
    let bundle = match cfg.simulation.record_agents {
        None => simulate_finite_game(&model, &solved.strategy, &config)?,
        Some(n) => Simulator::new(&model, &solved.strategy, &config)?.run(0, &Record::First(n))?,
    };
    let (d0, d) = (bundle.d0, bundle.d);
    let width = d0.max(d);
    let mut header = vec!["t".to_string(), "agent_id".into()];
    header.extend((0..width).map(|i| format!("x{i}")));
    let mut csv = Csv::new(&hash, &header);
    let mut row = Vec::with_capacity(header.len());
    let mut emit = |row: &mut Vec<f64>, t: f64, id: f64, state: &[f64]| {
        row.clear();
        row.extend([t, id]);
        row.extend_from_slice(state);
        row.resize(2 + width, f64::NAN);
        csv.row(row);
    };
    for node in 0..bundle.n_nodes() {
        emit(&mut row, bundle.times[node], 0.0, bundle.major_state(node));
    }
    for (slot, &agent) in bundle.recorded.iter().enumerate() {
        for node in 0..bundle.n_nodes() {
            emit(&mut row, bundle.times[node], (agent + 1) as f64, bundle.minor_state(node, slot));
        }
    }
    csv.save(&out.join("paths.csv"))?;
    let mut mean = Csv::new(
        &hash,
        &std::iter::once("t".to_string()).chain((0..d).map(|i| format!("xbar{i}"))).collect::<Vec<_>>(),
    );
    for node in 0..bundle.n_nodes() {
        let mut r = vec![bundle.times[node]];
        r.extend_from_slice(bundle.mean_state(node));
        mean.row(&r);
    }
    mean.save(&out.join("empirical_mean.csv"))?;
    io::write_json(
        &out.join("simulation.json"),
        &hash,
        json!({
            "method": solved.method.name(),
            "nMinor": bundle.n_minor,
            "recordedAgents": bundle.recorded.len(),
            "masterSeed": bundle.seed.master_seed,
            "commonNoiseKey": format!("{:016x}", bundle.seed.common_noise_key),
            "minorNoiseChecksum": format!("{:016x}", bundle.minor_noise_checksum),
        }),
    )?;
    Ok(Outcome::Success)
}
