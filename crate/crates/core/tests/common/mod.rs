#![allow(dead_code)]

use lqmfg_core::flocking;
use lqmfg_core::model::{Dims, MajorMinorLqModel};
use lqmfg_core::rng::NormalStream;
use lqmfg_core::DMatrix;

pub fn scalar(x: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, x)
}

pub fn demo_model() -> MajorMinorLqModel {
    flocking::embed(&flocking::demo_params()).unwrap()
}

/// Textbook finite-horizon LQR: `Ṗ + PA + AᵀP − PBR⁻¹BᵀP + Q = 0`, `P(T) = 0`,
/// from the Hamiltonian flow `[X; Y]' = [[A, −M], [−Q, −Aᵀ]] [X; Y]`,
/// `[X; Y](T) = [I; 0]`, `P = Y X⁻¹`.
pub fn lqr_value_hessian(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    horizon: f64,
    t: f64,
) -> DMatrix<f64> {
    let n = a.nrows();
    let m = b * r.clone().try_inverse().unwrap() * b.transpose();
    let mut ham = DMatrix::zeros(2 * n, 2 * n);
    ham.view_mut((0, 0), (n, n)).copy_from(a);
    ham.view_mut((0, n), (n, n)).copy_from(&(-m));
    ham.view_mut((n, 0), (n, n)).copy_from(&(-q));
    ham.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));
    let flow = (ham * (t - horizon)).exp();
    let x = flow.view((0, 0), (n, n)).into_owned();
    let y = flow.view((n, 0), (n, n)).into_owned();
    y * x.try_inverse().unwrap()
}

/// `−R⁻¹BᵀP`
pub fn lqr_gain(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    horizon: f64,
    t: f64,
) -> DMatrix<f64> {
    -(r.clone().try_inverse().unwrap() * b.transpose() * lqr_value_hessian(a, b, q, r, horizon, t))
}

pub struct Draws(NormalStream);

impl Draws {
    pub fn new(seed: u64) -> Self {
        Self(NormalStream::new(seed, 999, 0))
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.0.next_uniform()
    }

    pub fn matrix(&mut self, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| scale * self.0.next_normal())
    }

    pub fn psd(&mut self, n: usize, scale: f64) -> DMatrix<f64> {
        let a = self.matrix(n, n, scale);
        &a * a.transpose()
    }

    pub fn pd(&mut self, n: usize) -> DMatrix<f64> {
        self.psd(n, 0.5) + DMatrix::identity(n, n)
    }
}

/// Random model with PSD costs, PD control weights and moderate couplings.
pub fn random_model(seed: u64) -> MajorMinorLqModel {
    let mut g = Draws::new(seed);
    let dims = Dims { d0: 2, d: 2, k0: 1, k: 2, m0: 1, m: 2 };
    let mut m = MajorMinorLqModel::zeros(dims, 1.0);
    m.l0 = g.matrix(2, 2, 0.3);
    m.b0 = g.matrix(2, 1, 1.0);
    m.f0 = g.matrix(2, 2, 0.3);
    m.d0 = g.matrix(2, 1, 0.5);
    m.l = g.matrix(2, 2, 0.3);
    m.b = g.matrix(2, 2, 1.0);
    m.f = g.matrix(2, 2, 0.2);
    m.g = g.matrix(2, 2, 0.2);
    m.d = g.matrix(2, 2, 0.5);
    m.q0 = g.psd(2, 0.7);
    m.q = g.psd(2, 0.7);
    m.r0 = g.pd(1);
    m.r = g.pd(2);
    m.h0 = g.matrix(2, 2, 0.5);
    m.h = g.matrix(2, 2, 0.5);
    m.h1 = g.matrix(2, 2, 0.5);
    m.eta0 = lqmfg_core::model::TimeVector::Constant(g.matrix(2, 1, 1.0));
    m.eta = g.matrix(2, 1, 1.0);
    m.validated().unwrap()
}
