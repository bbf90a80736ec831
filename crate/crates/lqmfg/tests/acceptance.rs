//! Acceptance suite: each criterion runs at its stated tolerance and time
//! budget and prints one PASS/FAIL line. The process exits nonzero if any
//! criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use lqmfg::config::RunConfig;
use lqmfg::experiments::{self, spearman};
use lqmfg_core::equilibrium::{
    best_response_iteration, solve_closed_loop, solve_open_loop, FeedbackStrategy, IterationOptions,
};
use lqmfg_core::evaluator::{equilibrium_costs, nash_gap, GaussianLaw, InitialConditions, NashGapOptions, Player};
use lqmfg_core::flocking::{demo_params, embed, planar_preset};
use lqmfg_core::linalg::max_abs_diff;
use lqmfg_core::model::{Dims, MajorMinorLqModel, TimeVector};
use lqmfg_core::riccati::{solve_symmetric_riccati, Scheme, TimeGrid};
use lqmfg_core::rng::NormalStream;
use lqmfg_core::simulator::{monte_carlo_costs, simulate_mean_field, Record, SimConfig, Simulator};
use lqmfg_core::DMatrix;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Verdict {
    Verdict { passed, detail }
}

fn scalar(x: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, x)
}

fn demo_grid() -> TimeGrid {
    TimeGrid::new(5.0, 5000).unwrap()
}

/// Demo initial laws: followers `V ~ N(0, I)`, leader `V⁰ ~ N(0, 0.25 I)`.
fn demo_init() -> InitialConditions {
    let mut cfg = RunConfig::flocking_demo();
    cfg.simulation.init.major_cov = Some(vec![vec![0.25, 0.0], vec![0.0, 0.25]]);
    cfg.initial_conditions().unwrap()
}

// Riccati analytic oracle

fn riccati_tanh() -> Verdict {
    let start = Instant::now();
    let grid = TimeGrid::new(1.0, 1000).unwrap();
    let s = solve_symmetric_riccati(|_| scalar(0.0), &scalar(1.0), |_| scalar(1.0), &grid, Scheme::Rk4).unwrap();
    let err = (0..grid.n_nodes()).map(|i| (s.node(i)[(0, 0)] - (1.0 - grid.time(i)).tanh()).abs()).fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    verdict(err <= 1e-8 && secs < 1.0, format!("max |S - tanh(1-t)| = {err:.2e} (<= 1e-8), {secs:.3} s (< 1 s)"))
}

// LQR decoupling oracle

/// Value Hessian of `min ∫ xᵀQx + uᵀRu` on `[t, T]`, from the Hamiltonian
/// flow `[X; Y]' = [[A, −BR⁻¹Bᵀ], [−Q, −Aᵀ]] [X; Y]`, `[X; Y](T) = [I; 0]`.
fn lqr_gain(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    horizon: f64,
    t: f64,
) -> DMatrix<f64> {
    let n = a.nrows();
    let r_inv = r.clone().try_inverse().unwrap();
    let mut ham = DMatrix::zeros(2 * n, 2 * n);
    ham.view_mut((0, 0), (n, n)).copy_from(a);
    ham.view_mut((0, n), (n, n)).copy_from(&(-(b * &r_inv * b.transpose())));
    ham.view_mut((n, 0), (n, n)).copy_from(&(-q));
    ham.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));
    let flow = (ham * (t - horizon)).exp();
    let x = flow.view((0, 0), (n, n)).into_owned();
    let y = flow.view((n, 0), (n, n)).into_owned();
    -(r_inv * b.transpose() * y * x.try_inverse().unwrap())
}

struct Draws(NormalStream);

impl Draws {
    fn matrix(&mut self, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| scale * self.0.next_normal())
    }

    fn psd(&mut self, n: usize, scale: f64) -> DMatrix<f64> {
        let x = self.matrix(n, n, scale);
        &x * x.transpose()
    }

    fn pd(&mut self, n: usize) -> DMatrix<f64> {
        self.psd(n, 0.5) + DMatrix::identity(n, n) * 0.5
    }
}

fn lqr_decoupling() -> Verdict {
    let start = Instant::now();
    let horizon = 2.0;
    let grid = TimeGrid::new(horizon, 2000).unwrap();
    let mut worst = 0.0f64;
    let mut coupled_gains = 0.0f64;
    for seed in 1..=3 {
        let mut g = Draws(NormalStream::new(seed, 7, 0));
        let mut m = MajorMinorLqModel::zeros(Dims { d0: 2, d: 3, k0: 2, k: 1, m0: 2, m: 1 }, horizon);
        m.l0 = g.matrix(2, 2, 0.5);
        m.b0 = g.matrix(2, 2, 1.0);
        m.d0 = g.matrix(2, 2, 0.3);
        m.l = g.matrix(3, 3, 0.5);
        m.b = g.matrix(3, 1, 1.0);
        m.d = g.matrix(3, 1, 0.3);
        m.q0 = g.psd(2, 0.8);
        m.q = g.psd(3, 0.8);
        m.r0 = g.pd(2);
        m.r = g.pd(1);
        let m = m.validated().unwrap();
        let closed = solve_closed_loop(&m, &grid).unwrap().strategy;
        let open = solve_open_loop(&m, &grid).unwrap().strategy;
        for s in [&closed, &open] {
            for i in 0..grid.n_nodes() {
                let t = grid.time(i);
                worst = worst.max(max_abs_diff(s.major.own.node(i), &lqr_gain(&m.l0, &m.b0, &m.q0, &m.r0, horizon, t)));
                worst = worst.max(max_abs_diff(s.minor.own.node(i), &lqr_gain(&m.l, &m.b, &m.q, &m.r, horizon, t)));
            }
            for p in [&s.major.mean, &s.major.offset, &s.minor.major, &s.minor.mean, &s.minor.offset] {
                coupled_gains = coupled_gains.max(p.sup_norm());
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst <= 1e-8 && coupled_gains <= 1e-8 && secs < 5.0,
        format!(
            "3 models, open and closed loop: own-gain error {worst:.2e}, cross gains {coupled_gains:.2e} (<= 1e-8), {secs:.2} s (< 5 s)"
        ),
    )
}

// Fixed-point agreement

fn fixed_point() -> Verdict {
    let start = Instant::now();
    let model = embed(&demo_params()).unwrap();
    let grid = demo_grid();
    let cl = solve_closed_loop(&model, &grid).unwrap();
    let out = best_response_iteration(&model, &FeedbackStrategy::zeros(&model.dims, grid), IterationOptions::default())
        .unwrap();
    let gap = out.strategy.sup_distance(&cl.strategy);
    let secs = start.elapsed().as_secs_f64();
    verdict(
        cl.residual <= 1e-6 && out.converged && gap <= 1e-5 && out.iterations() <= 50 && secs < 30.0,
        format!(
            "residual {:.2e} (<= 1e-6), iteration converged={} in {} (<= 50) at distance {gap:.2e} (<= 1e-5), {secs:.1} s (< 30 s)",
            cl.residual,
            out.converged,
            out.iterations()
        ),
    )
}

// Nash certification

fn nash_certification() -> Verdict {
    let start = Instant::now();
    let model = embed(&demo_params()).unwrap();
    let cl = solve_closed_loop(&model, &demo_grid()).unwrap();
    let init = demo_init();
    let halved = cl.strategy.scaled(0.5);
    let mut ok = true;
    let mut parts = Vec::new();
    for player in [Player::Major, Player::Minor] {
        let r = nash_gap(&model, &cl.strategy, player, &init, NashGapOptions::default()).unwrap();
        let h = nash_gap(&model, &halved, player, &init, NashGapOptions::default()).unwrap();
        let convex = r.second_differences.iter().all(|&s| s >= 0.0);
        ok &= r.directions() >= 5 && r.max_relative_derivative() <= 1e-4 && convex && !h.passed();
        parts.push(format!(
            "{}: {} dirs, max rel derivative {:.2e} (<= 1e-4), min second diff {:.2e} (>= 0), halved {:.2e} -> {}",
            player.name(),
            r.directions(),
            r.max_relative_derivative(),
            r.min_second_difference(),
            h.max_relative_derivative(),
            if h.passed() { "passes" } else { "fails" }
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    parts.push(format!("{secs:.1} s (< 60 s)"));
    verdict(ok && secs < 60.0, parts.join("; "))
}

// Open-loop consistency

fn open_loop_consistency() -> Verdict {
    let model = embed(&demo_params()).unwrap();
    let ol = solve_open_loop(&model, &demo_grid()).unwrap();
    verdict(ol.consistency_error <= 1e-6, format!("consistency error {:.2e} (<= 1e-6)", ol.consistency_error))
}

// Moment-vs-Monte-Carlo

fn rows(r: usize, c: usize, v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(r, c, v)
}

fn coupled_model() -> MajorMinorLqModel {
    let mut m = MajorMinorLqModel::zeros(Dims { d0: 2, d: 2, k0: 1, k: 2, m0: 1, m: 2 }, 1.0);
    m.l0 = rows(2, 2, &[-0.5, 0.2, 0.1, -0.3]);
    m.b0 = rows(2, 1, &[1.0, 0.5]);
    m.f0 = rows(2, 2, &[0.2, 0.0, 0.0, 0.1]);
    m.d0 = rows(2, 1, &[0.3, 0.2]);
    m.l = rows(2, 2, &[-0.4, 0.1, 0.0, -0.2]);
    m.b = DMatrix::identity(2, 2);
    m.f = rows(2, 2, &[0.1, 0.0, 0.05, 0.1]);
    m.g = rows(2, 2, &[0.1, 0.0, 0.0, 0.2]);
    m.d = rows(2, 2, &[0.3, 0.0, 0.0, 0.4]);
    m.q0 = rows(2, 2, &[1.0, 0.2, 0.2, 0.5]);
    m.q = rows(2, 2, &[0.8, 0.1, 0.1, 0.6]);
    m.r0 = scalar(1.0);
    m.r = rows(2, 2, &[1.0, 0.0, 0.0, 2.0]);
    m.h0 = rows(2, 2, &[0.5, 0.0, 0.0, 0.3]);
    m.h = rows(2, 2, &[0.2, 0.1, 0.0, 0.3]);
    m.h1 = rows(2, 2, &[0.3, 0.0, 0.1, 0.2]);
    m.eta0 = TimeVector::constant(&[1.0, -0.5]);
    m.eta = rows(2, 1, &[0.2, 0.3]);
    m.validated().unwrap()
}

fn mean_seeking_model() -> MajorMinorLqModel {
    let mut m = MajorMinorLqModel::zeros(Dims { d0: 1, d: 1, k0: 1, k: 1, m0: 1, m: 1 }, 1.0);
    m.l0 = scalar(-0.2);
    m.l = scalar(0.1);
    m.b0 = scalar(1.0);
    m.b = scalar(1.0);
    m.d0 = scalar(0.4);
    m.d = scalar(0.6);
    m.q0 = scalar(1.0);
    m.q = scalar(1.0);
    m.r0 = scalar(1.0);
    m.r = scalar(0.5);
    m.h0 = scalar(1.0);
    m.h1 = scalar(1.0);
    m.eta0 = TimeVector::constant(&[0.5]);
    m.validated().unwrap()
}

fn monte_carlo() -> Verdict {
    let start = Instant::now();
    let mut flock = embed(&demo_params()).unwrap();
    flock.horizon = 1.0;
    let mut scalar_init = InitialConditions::zeros(1, 1);
    scalar_init.minor = GaussianLaw::new(scalar(1.0), scalar(0.5)).unwrap();
    scalar_init.major = GaussianLaw::new(scalar(-0.5), scalar(0.2)).unwrap();
    let mut coupled_init = InitialConditions::zeros(2, 2);
    coupled_init.minor = GaussianLaw::new(rows(2, 1, &[0.5, -0.5]), DMatrix::identity(2, 2) * 0.3).unwrap();
    coupled_init.major = GaussianLaw::new(rows(2, 1, &[1.0, 0.0]), DMatrix::identity(2, 2) * 0.2).unwrap();
    let cases = [
        ("flocking", flock, demo_init()),
        ("coupled", coupled_model(), coupled_init),
        ("mean-seeking", mean_seeking_model(), scalar_init),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, (name, model, init)) in cases.iter().enumerate() {
        let grid = TimeGrid::new(1.0, 1000).unwrap();
        let s = solve_closed_loop(model, &grid).unwrap().strategy;
        let (j0, j) = equilibrium_costs(model, &s, init).unwrap();
        let mc = monte_carlo_costs(model, &s, &s.minor, init, 100 + i as u64, 10_000).unwrap();
        let (z0, z) = (mc.major.z_score(j0), mc.minor.z_score(j));
        ok &= z0 < 3.0 && z < 3.0;
        parts.push(format!("{name}: major z={z0:.2}, minor z={z:.2}"));
    }
    let secs = start.elapsed().as_secs_f64();
    parts.push(format!("10^4 paths each (< 3 standard errors), {secs:.1} s"));
    verdict(ok, parts.join("; "))
}

// Mean-field consistency

fn mean_field_consistency() -> Verdict {
    let start = Instant::now();
    let model = embed(&demo_params()).unwrap();
    let grid = demo_grid();
    let s = solve_closed_loop(&model, &grid).unwrap().strategy;
    let init = demo_init();
    let avg_sup = |n: usize| {
        (0..20u64)
            .map(|seed| {
                let cfg = SimConfig { n_minor: n, grid, master_seed: seed, init: init.clone() };
                let b = Simulator::new(&model, &s, &cfg).unwrap().run(0, &Record::First(0)).unwrap();
                let mf = simulate_mean_field(&model, &s, seed, &grid, &init).unwrap();
                (0..grid.n_nodes())
                    .map(|i| {
                        b.mean_state(i).iter().zip(mf.mean_state(i)).map(|(a, c)| (a - c).powi(2)).sum::<f64>().sqrt()
                    })
                    .fold(0.0, f64::max)
            })
            .sum::<f64>()
            / 20.0
    };
    let (a, b, c) = (avg_sup(10), avg_sup(40), avg_sup(160));
    let ratio = c / a;
    let secs = start.elapsed().as_secs_f64();
    verdict(
        a > b && b > c && (0.15..=0.7).contains(&ratio) && secs < 120.0,
        format!(
            "avg sup distance N=10: {a:.4}, N=40: {b:.4}, N=160: {c:.4}; ratio {ratio:.3} (in [0.15, 0.7]), {secs:.1} s (< 120 s)"
        ),
    )
}

// Propagation of chaos

fn propagation_of_chaos() -> Verdict {
    let start = Instant::now();
    let mut cfg = RunConfig::flocking_demo();
    cfg.simulation.master_seed = 2024;
    let model = cfg.build_model().unwrap();
    let grid = cfg.time_grid().unwrap();
    let s = solve_closed_loop(&model, &grid).unwrap().strategy;
    let base = cfg.sim_config(1).unwrap();
    let sizes = [5usize, 10, 20, 50, 100];
    let values: Vec<f64> =
        sizes.iter().map(|&n| experiments::chaos(&model, &s, &base, n, 500).unwrap().mean_abs_off_diag).collect();
    let rank = spearman(&sizes.map(|n| n as f64), &values);
    let secs = start.elapsed().as_secs_f64();
    let listed: Vec<String> = sizes.iter().zip(&values).map(|(n, v)| format!("N={n}: {v:.4}")).collect();
    verdict(
        values[4] < 0.5 * values[0] && rank <= -0.8 && secs < 600.0,
        format!(
            "S=500, seed 2024, {}; N=100 vs 0.5 x N=5: {:.4} < {:.4}; Spearman {rank:.2} (<= -0.8), {secs:.1} s (< 600 s)",
            listed.join(", "),
            values[4],
            0.5 * values[0]
        ),
    )
}

// Trajectory comparatives

fn trajectory_comparatives() -> Verdict {
    let start = Instant::now();
    let mut cfg = RunConfig::flocking_demo();
    cfg.simulation.n_minor = 20;
    cfg.simulation.master_seed = 7;
    let grid = cfg.time_grid().unwrap();
    let base = cfg.sim_config(20).unwrap();
    let run = |lambda0, lambda1, l0, l1| {
        let model = embed(&planar_preset(lambda0, lambda1, l0, l1)).unwrap();
        let s = solve_closed_loop(&model, &grid).unwrap().strategy;
        experiments::run_panel(&model, &s, &base, 10).unwrap().mean()
    };
    let selfish = run(0.8, 0.1, 0.5, 0.3);
    let social = run(0.1, 0.8, 0.5, 0.3);
    let loyal = run(0.6, 0.2, 0.8, 0.1);
    let gregarious = run(0.6, 0.2, 0.1, 0.8);
    let secs = start.elapsed().as_secs_f64();
    verdict(
        selfish.leader_tracking < social.leader_tracking
            && loyal.flock_to_leader < gregarious.flock_to_leader
            && secs < 120.0,
        format!(
            "10 seeds: |V0-nu| {:.4} (lambda0=0.8) < {:.4} (lambda0=0.1); |Vbar-V0| {:.4} (l0=0.8) < {:.4} (l0=0.1), {secs:.1} s (< 120 s)",
            selfish.leader_tracking, social.leader_tracking, loyal.flock_to_leader, gregarious.flock_to_leader
        ),
    )
}

type Criterion = (&'static str, fn() -> Verdict);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("riccati analytic oracle", riccati_tanh),
        ("lqr decoupling oracle", lqr_decoupling),
        ("fixed-point agreement", fixed_point),
        ("nash certification", nash_certification),
        ("open-loop consistency", open_loop_consistency),
        ("moment vs monte carlo", monte_carlo),
        ("mean-field consistency", mean_field_consistency),
        ("propagation of chaos", propagation_of_chaos),
        ("trajectory comparatives", trajectory_comparatives),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let v = check();
        if !v.passed {
            failed += 1;
        }
        println!("{} {name}: {}", if v.passed { "PASS" } else { "FAIL" }, v.detail);
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
