//! Leader/follower flocking as a major/minor game.
//!
//! Velocities follow `dV⁰ = α⁰ dt + Σ₀ dW⁰` and `dVⁿ = αⁿ dt + Σ dWⁿ`. The
//! leader pays `λ₀‖V⁰ − ν(t)‖² + λ₁‖V⁰ − V̄‖² + (1 − λ₀ − λ₁)‖α⁰‖²`, each
//! follower `l₀‖Vⁿ − V⁰‖² + l₁‖Vⁿ − V̄‖² + (1 − l₀ − l₁)‖αⁿ‖²`. Both costs
//! need two different targets for one velocity, so the state is doubled:
//! `X = [V; V]`, and each copy carries one of the two penalties.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{block_diag, vstack};
use crate::model::{Dims, MajorMinorLqModel, TimeVector};

#[derive(Debug, Clone)]
pub struct FlockingParams {
    /// Velocity dimension.
    pub dv: usize,
    pub lambda0: f64,
    pub lambda1: f64,
    pub l0: f64,
    pub l1: f64,
    pub sigma0: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    /// Leader's target velocity schedule.
    pub nu: TimeVector,
    pub horizon: f64,
}

/// `ν(t) = [−2π sin 2πt, 2π cos 2πt]`: unit-period circular motion at speed 2π.
pub fn circular_free_will(t: f64) -> DMatrix<f64> {
    let w = 2.0 * PI;
    DMatrix::from_column_slice(2, 1, &[-w * libm::sin(w * t), w * libm::cos(w * t)])
}

/// Planar flock with circular free will, `Σ₀ = Σ = 0.5 I₂` and `T = 5`.
///
/// The four penalty weights have no canonical values and must be supplied.
pub fn planar_preset(lambda0: f64, lambda1: f64, l0: f64, l1: f64) -> FlockingParams {
    FlockingParams {
        dv: 2,
        lambda0,
        lambda1,
        l0,
        l1,
        sigma0: DMatrix::identity(2, 2) * 0.5,
        sigma: DMatrix::identity(2, 2) * 0.5,
        nu: TimeVector::function(2, circular_free_will),
        horizon: 5.0,
    }
}

/// Weights used by the demo configuration.
pub fn demo_params() -> FlockingParams {
    planar_preset(0.6, 0.2, 0.5, 0.3)
}

impl FlockingParams {
    pub fn check(&self) -> Result<()> {
        let weights = [("lambda0", self.lambda0), ("lambda1", self.lambda1), ("l0", self.l0), ("l1", self.l1)];
        for (name, w) in weights {
            if !(w > 0.0) {
                return Err(Error::InvalidModel(format!("{name} must be positive, got {w}")));
            }
        }
        if !(self.lambda0 + self.lambda1 < 1.0) {
            return Err(Error::InvalidModel(format!(
                "R0 not positive definite (lambda0 + lambda1 = {} must be < 1)",
                self.lambda0 + self.lambda1
            )));
        }
        if !(self.l0 + self.l1 < 1.0) {
            return Err(Error::InvalidModel(format!(
                "R not positive definite (l0 + l1 = {} must be < 1)",
                self.l0 + self.l1
            )));
        }
        if self.dv == 0 {
            return Err(Error::InvalidModel("dv must be at least 1".into()));
        }
        for (name, m) in [("Sigma0", &self.sigma0), ("Sigma", &self.sigma)] {
            if m.shape() != (self.dv, self.dv) {
                return Err(Error::Dimension {
                    field: name,
                    expected_rows: self.dv,
                    expected_cols: self.dv,
                    rows: m.nrows(),
                    cols: m.ncols(),
                });
            }
        }
        if self.nu.dim() != self.dv {
            return Err(Error::InvalidModel(format!("nu has dimension {}, expected {}", self.nu.dim(), self.dv)));
        }
        Ok(())
    }
}

/// Maps the flocking model onto the major/minor LQ model with doubled states.
pub fn embed(params: &FlockingParams) -> Result<MajorMinorLqModel> {
    params.check()?;
    let dv = params.dv;
    let id = DMatrix::<f64>::identity(dv, dv);
    let zero = DMatrix::<f64>::zeros(dv, dv);
    let dims = Dims { d0: 2 * dv, d: 2 * dv, k0: dv, k: dv, m0: dv, m: dv };
    let n2 = 2 * dv;
    let doubled = vstack(&id, &id);
    let first = block_diag(&id, &zero);
    let second = block_diag(&zero, &id);
    let nu = params.nu.clone();
    let eta0 = TimeVector::function(n2, move |t| vstack(&nu.at(t), &DMatrix::zeros(dv, 1)));
    let model = MajorMinorLqModel {
        dims,
        l0: DMatrix::zeros(n2, n2),
        b0: doubled.clone(),
        f0: DMatrix::zeros(n2, n2),
        d0: vstack(&params.sigma0, &params.sigma0),
        l: DMatrix::zeros(n2, n2),
        b: doubled,
        f: DMatrix::zeros(n2, n2),
        g: DMatrix::zeros(n2, n2),
        d: vstack(&params.sigma, &params.sigma),
        q0: block_diag(&(&id * params.lambda0), &(&id * params.lambda1)),
        q: block_diag(&(&id * params.l0), &(&id * params.l1)),
        r0: &id * (1.0 - params.lambda0 - params.lambda1),
        r: &id * (1.0 - params.l0 - params.l1),
        h0: second.clone(),
        h: first,
        h1: second,
        eta0,
        eta: DMatrix::zeros(n2, 1),
        horizon: params.horizon,
    };
    model.validated()
}

/// First copy of a doubled state, i.e. the velocity.
pub fn velocity(doubled: &[f64]) -> &[f64] {
    &doubled[..doubled.len() / 2]
}

/// Positions by trapezoidal integration of a velocity path sampled every `dt`.
pub fn integrate_positions(start: &[f64], velocities: &[Vec<f64>], dt: f64) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(velocities.len());
    let mut pos = start.to_vec();
    out.push(pos.clone());
    for w in velocities.windows(2) {
        for (j, p) in pos.iter_mut().enumerate() {
            *p += 0.5 * dt * (w[0][j] + w[1][j]);
        }
        out.push(pos.clone());
    }
    out
}
