mod common;

use common::*;
use lqmfg_core::equilibrium::*;
use lqmfg_core::evaluator::*;
use lqmfg_core::model::{assemble_blocks, Dims, MajorMinorLqModel};
use lqmfg_core::riccati::{GridPoint, MatrixPath, Scheme, TimeGrid};
use lqmfg_core::simulator::*;
use lqmfg_core::{DMatrix, Error};

fn velocity_cov(var: f64) -> DMatrix<f64> {
    // Law of [V; V] with V ~ N(0, var I₂).
    let mut c = DMatrix::zeros(4, 4);
    for i in 0..2 {
        for (a, b) in [(i, i), (i, i + 2), (i + 2, i), (i + 2, i + 2)] {
            c[(a, b)] = var;
        }
    }
    c
}

fn demo_setup(n_steps: usize) -> (MajorMinorLqModel, FeedbackStrategy, InitialConditions) {
    let model = demo_model();
    let grid = TimeGrid::new(5.0, n_steps).unwrap();
    let sol = solve_closed_loop(&model, &grid).unwrap();
    let mut init = InitialConditions::zeros(4, 4);
    init.minor.cov = velocity_cov(1.0);
    init.major.cov = velocity_cov(0.25);
    (model, sol.strategy, init)
}

fn scalar_dims() -> Dims {
    Dims { d0: 1, d: 1, k0: 1, k: 1, m0: 1, m: 1 }
}

#[test]
fn zero_everything_gives_zero_paths() {
    let model = MajorMinorLqModel::zeros(scalar_dims(), 1.0);
    let grid = TimeGrid::new(1.0, 50).unwrap();
    let s = FeedbackStrategy::zeros(&model.dims, grid);
    let cfg = SimConfig { n_minor: 7, grid, master_seed: 3, init: InitialConditions::zeros(1, 1) };
    let b = simulate_finite_game(&model, &s, &cfg).unwrap();
    assert!(b.major.iter().chain(&b.minors).chain(&b.empirical_mean).all(|&x| x == 0.0));
    assert_eq!(b.n_nodes(), 51);
    assert_eq!(b.recorded.len(), 7);
}

#[test]
fn runs_are_bitwise_reproducible() {
    let (model, s, init) = demo_setup(500);
    let cfg = SimConfig { n_minor: 12, grid: *s.grid(), master_seed: 99, init };
    let a = simulate_finite_game(&model, &s, &cfg).unwrap();
    let b = simulate_finite_game(&model, &s, &cfg).unwrap();
    assert_eq!(a, b);
    let c = simulate_finite_game(&model, &s, &SimConfig { master_seed: 100, ..cfg }).unwrap();
    assert_ne!(a.major, c.major);
}

#[test]
fn empirical_mean_and_doubled_states() {
    let (model, s, init) = demo_setup(500);
    let cfg = SimConfig { n_minor: 9, grid: *s.grid(), master_seed: 5, init };
    let b = simulate_finite_game(&model, &s, &cfg).unwrap();
    for node in 0..b.n_nodes() {
        for c in 0..4 {
            let avg: f64 = (0..9).map(|j| b.minor_state(node, j)[c]).sum::<f64>() / 9.0;
            assert!((avg - b.mean_state(node)[c]).abs() <= 1e-12);
        }
        let x0 = b.major_state(node);
        assert!((x0[0] - x0[2]).abs() <= 1e-12 && (x0[1] - x0[3]).abs() <= 1e-12);
        for j in 0..9 {
            let x = b.minor_state(node, j);
            assert!((x[0] - x[2]).abs() <= 1e-12 && (x[1] - x[3]).abs() <= 1e-12);
        }
    }
}

#[test]
fn recorded_controls_follow_the_strategy() {
    let (model, s, init) = demo_setup(200);
    let cfg = SimConfig { n_minor: 3, grid: *s.grid(), master_seed: 8, init };
    let b = simulate_finite_game(&model, &s, &cfg).unwrap();
    let col = |v: &[f64]| DMatrix::from_column_slice(v.len(), 1, v);
    for node in [0, 57, 200] {
        let x0 = col(b.major_state(node));
        let xbar = col(b.mean_state(node));
        let a0 = s.major.control(node, &x0, &xbar);
        assert!((a0 - col(b.major_control(node))).abs().max() < 1e-12);
        let x = col(b.minor_state(node, 1));
        let a = s.minor.offset.node(node)
            + s.minor.own.node(node) * &x
            + s.minor.major.node(node) * &x0
            + s.minor.mean.node(node) * &xbar;
        assert!((a - col(b.minor_control(node, 1))).abs().max() < 1e-12);
    }
}

#[test]
fn single_noiseless_minor_follows_its_ode() {
    // dX = (l + b φ₁) X dt with constant gain: X(t) = X₀ e^{(l + bφ₁) t}.
    let mut model = MajorMinorLqModel::zeros(scalar_dims(), 1.0);
    model.l = scalar(0.3);
    model.b = scalar(2.0);
    let err = |n: usize| {
        let grid = TimeGrid::new(1.0, n).unwrap();
        let mut s = FeedbackStrategy::zeros(&model.dims, grid);
        s.minor.own = MatrixPath::constant(grid, scalar(-0.9));
        let mut init = InitialConditions::zeros(1, 1);
        init.minor.mean = scalar(1.5);
        let cfg = SimConfig { n_minor: 1, grid, master_seed: 0, init };
        let b = simulate_finite_game(&model, &s, &cfg).unwrap();
        (0..grid.n_nodes())
            .map(|i| (b.minor_state(i, 0)[0] - 1.5 * (-1.5 * grid.time(i)).exp()).abs())
            .fold(0.0, f64::max)
    };
    let (e1, e2) = (err(200), err(400));
    assert!(e1 < 2.0 * 1.5 * 1.5 * 1.5 / 200.0);
    assert!((e1 / e2 - 2.0).abs() < 0.1, "{}", e1 / e2);
}

#[test]
fn non_finite_states_are_reported() {
    let mut model = MajorMinorLqModel::zeros(scalar_dims(), 10.0);
    model.l = scalar(1e3);
    let grid = TimeGrid::new(10.0, 1000).unwrap();
    let s = FeedbackStrategy::zeros(&model.dims, grid);
    let mut init = InitialConditions::zeros(1, 1);
    init.minor.mean = scalar(1.0);
    let cfg = SimConfig { n_minor: 2, grid, master_seed: 0, init };
    match simulate_finite_game(&model, &s, &cfg) {
        Err(Error::NonFiniteState { node, agent }) => {
            assert!(node > 0 && node <= 1000);
            assert_eq!(agent, 1);
        }
        other => panic!("expected non-finite state, got {:?}", other.map(|b| b.n_nodes())),
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let model = MajorMinorLqModel::zeros(scalar_dims(), 1.0);
    let grid = TimeGrid::new(1.0, 10).unwrap();
    let s = FeedbackStrategy::zeros(&model.dims, grid);
    let cfg = SimConfig { n_minor: 0, grid, master_seed: 0, init: InitialConditions::zeros(1, 1) };
    assert!(simulate_finite_game(&model, &s, &cfg).is_err());
    let mut init = InitialConditions::zeros(1, 1);
    init.minor.cov = scalar(-1.0);
    let cfg = SimConfig { n_minor: 2, grid, master_seed: 0, init };
    assert!(simulate_finite_game(&model, &s, &cfg).is_err());
    let other = TimeGrid::new(1.0, 20).unwrap();
    let cfg = SimConfig { n_minor: 2, grid: other, master_seed: 0, init: InitialConditions::zeros(1, 1) };
    assert!(simulate_finite_game(&model, &s, &cfg).is_err());
}

#[test]
fn ensemble_shares_common_noise_only() {
    let (model, s, init) = demo_setup(300);
    let cfg = SimConfig { n_minor: 6, grid: *s.grid(), master_seed: 12, init };
    let reps = simulate_conditional_ensemble(&model, &s, &cfg, 2).unwrap();
    assert_eq!(reps[0].common_increments, reps[1].common_increments);
    assert_eq!(reps[0].seed.common_noise_key, reps[1].seed.common_noise_key);
    assert_ne!(reps[0].minor_noise_checksum, reps[1].minor_noise_checksum);
    assert_ne!(reps[0].minors, reps[1].minors);
    assert_eq!(reps[0].major_state(0), reps[1].major_state(0));
    assert!(simulate_conditional_ensemble(&model, &s, &cfg, 1).is_err());
}

#[test]
fn ensemble_without_idiosyncratic_noise_is_constant() {
    let mut model = random_model(2);
    model.d = DMatrix::zeros(2, 2);
    let grid = TimeGrid::new(1.0, 100).unwrap();
    let sol = solve_closed_loop(&model, &grid).unwrap();
    let mut init = InitialConditions::zeros(2, 2);
    init.minor.mean = DMatrix::from_column_slice(2, 1, &[1.0, 2.0]);
    init.major.cov = DMatrix::identity(2, 2);
    let cfg = SimConfig { n_minor: 4, grid, master_seed: 1, init };
    let reps = simulate_conditional_ensemble(&model, &sol.strategy, &cfg, 3).unwrap();
    assert_eq!(reps[0].minors, reps[1].minors);
    assert_eq!(reps[0].major, reps[2].major);
}

#[test]
fn recording_a_subset_keeps_the_same_paths() {
    let (model, s, init) = demo_setup(200);
    let cfg = SimConfig { n_minor: 8, grid: *s.grid(), master_seed: 4, init };
    let sim = Simulator::new(&model, &s, &cfg).unwrap();
    let all = sim.run(3, &Record::All).unwrap();
    let few = sim.run(3, &Record::First(2)).unwrap();
    assert_eq!(few.recorded, vec![0, 1]);
    assert_eq!(all.empirical_mean, few.empirical_mean);
    for node in [0, 100, 200] {
        assert_eq!(all.minor_state(node, 1), few.minor_state(node, 1));
    }
}

#[test]
fn conditional_mean_is_zero_without_forcing() {
    let mut model = random_model(6);
    model.g = DMatrix::zeros(2, 2);
    let grid = TimeGrid::new(1.0, 100).unwrap();
    let s = FeedbackStrategy::zeros(&model.dims, grid);
    let mut init = InitialConditions::zeros(2, 2);
    init.major.mean = DMatrix::from_column_slice(2, 1, &[1.0, -1.0]);
    init.minor.cov = DMatrix::identity(2, 2);
    let mf = simulate_mean_field(&model, &s, 4, &grid, &init).unwrap();
    assert!(mf.conditional_mean.iter().all(|&x| x == 0.0));
    assert!(mf.major.iter().any(|&x| x != 0.0));
}

#[test]
fn noiseless_conditional_mean_matches_the_moment_mean() {
    let mut model = random_model(7);
    model.d0 = DMatrix::zeros(2, 1);
    let grid = TimeGrid::new(1.0, 1000).unwrap();
    let sol = solve_closed_loop(&model, &grid).unwrap();
    let mut init = InitialConditions::zeros(2, 2);
    init.minor.mean = DMatrix::from_column_slice(2, 1, &[0.7, -0.4]);
    init.major.mean = DMatrix::from_column_slice(2, 1, &[1.0, 0.5]);
    let mf = simulate_mean_field(&model, &sol.strategy, 1, &grid, &init).unwrap();
    let blocks = assemble_blocks(&model).unwrap();
    let drift = |p: GridPoint| blocks.full_environment_at(&sol.strategy.major, &sol.strategy.minor, p);
    let euler = propagate_moments_with(drift, &blocks.dd0, &init.block_law(), &grid, Scheme::Euler).unwrap();
    let rk4 = state_moments(&model, &sol.strategy, &init).unwrap();
    let mut rk4_gap: f64 = 0.0;
    for i in 0..grid.n_nodes() {
        let m = euler.mean.node(i);
        for c in 0..2 {
            assert!((mf.mean_state(i)[c] - m[(c, 0)]).abs() <= 1e-8);
            assert!((mf.major_state(i)[c] - m[(c + 2, 0)]).abs() <= 1e-8);
            rk4_gap = rk4_gap.max((mf.mean_state(i)[c] - rk4.mean.node(i)[(c, 0)]).abs());
        }
    }
    assert!(rk4_gap < 5e-3, "{rk4_gap}");
}

#[test]
fn empirical_mean_approaches_the_conditional_mean() {
    let (model, s, init) = demo_setup(1000);
    let grid = *s.grid();
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
    assert!(a > b && b > c, "{a} {b} {c}");
    let ratio = c / a;
    assert!((0.15..=0.7).contains(&ratio), "{ratio}");
}

#[test]
fn terminal_empirical_mean_is_unbiased() {
    let (model, s, mut init) = demo_setup(500);
    init.minor.mean = DMatrix::from_column_slice(4, 1, &[1.0, -1.0, 1.0, -1.0]);
    let grid = *s.grid();
    let last = grid.n_steps();
    let samples: Vec<Vec<f64>> = (0..100u64)
        .map(|seed| {
            let cfg = SimConfig { n_minor: 20, grid, master_seed: seed, init: init.clone() };
            let b = Simulator::new(&model, &s, &cfg).unwrap().run(0, &Record::First(0)).unwrap();
            b.mean_state(last).to_vec()
        })
        .collect();
    let exact = state_moments(&model, &s, &init).unwrap();
    for c in 0..2 {
        let xs: Vec<f64> = samples.iter().map(|v| v[c]).collect();
        let est = Estimate::from_samples(&xs);
        assert!(est.z_score(exact.mean.terminal()[(c, 0)]) < 3.0, "{est:?}");
    }
}

#[test]
fn monte_carlo_matches_exact_costs_on_a_small_model() {
    let model = random_model(12);
    let grid = TimeGrid::new(1.0, 200).unwrap();
    let sol = solve_closed_loop(&model, &grid).unwrap();
    let mut init = InitialConditions::zeros(2, 2);
    init.minor.mean = DMatrix::from_column_slice(2, 1, &[0.5, 0.5]);
    init.minor.cov = DMatrix::identity(2, 2) * 0.3;
    init.major.cov = DMatrix::identity(2, 2) * 0.2;
    let (j0, j) = equilibrium_costs(&model, &sol.strategy, &init).unwrap();
    let mc = monte_carlo_costs(&model, &sol.strategy, &sol.strategy.minor, &init, 3, 2000).unwrap();
    assert!(mc.major.z_score(j0) < 3.0, "{mc:?} vs {j0}");
    assert!(mc.minor.z_score(j) < 3.0, "{mc:?} vs {j}");
}
