//! Fixed-step integration of matrix-valued ODEs on a uniform time grid.
//!
//! Backward problems (terminal condition at `T`) are the Riccati and adjoint
//! equations of the equilibrium module; forward problems are the moment
//! equations of the evaluator. Both share one grid type so coefficients that
//! were themselves produced by an integration can be replayed exactly at the
//! nodes. Runge–Kutta stages also need midpoints; [`MatrixPath::eval`]
//! supplies those by four-point cubic interpolation so the stage error stays
//! fourth order.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;

/// Entries larger than this abort an integration.
pub const BLOW_UP_THRESHOLD: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
        }
        if n_steps < 2 {
            return Err(Error::InvalidArgument(format!("grid needs at least 2 steps, got {n_steps}")));
        }
        Ok(Self { horizon, n_steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    pub fn time(&self, node: usize) -> f64 {
        if node == self.n_steps {
            self.horizon
        } else {
            node as f64 * self.dt()
        }
    }

    pub fn time_at(&self, point: GridPoint) -> f64 {
        match point {
            GridPoint::Node(i) => self.time(i),
            GridPoint::Mid(i) => (i as f64 + 0.5) * self.dt(),
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_nodes()).map(|i| self.time(i)).collect()
    }

    pub fn ensure_same(&self, other: &TimeGrid, what: &str) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "{what}: grid (T={}, n={}) differs from (T={}, n={})",
                other.horizon, other.n_steps, self.horizon, self.n_steps
            )))
        }
    }
}

/// A location where ODE right-hand sides are evaluated: a grid node or the
/// midpoint of the interval `[t_i, t_{i+1}]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridPoint {
    Node(usize),
    Mid(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    #[default]
    Rk4,
    /// Explicit Euler, kept to replicate first-order reference runs.
    Euler,
}

/// One matrix per grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixPath {
    grid: TimeGrid,
    values: Vec<DMatrix<f64>>,
}

impl MatrixPath {
    pub fn new(grid: TimeGrid, values: Vec<DMatrix<f64>>) -> Result<Self> {
        if values.len() != grid.n_nodes() {
            return Err(Error::GridMismatch(format!("path has {} values for {} nodes", values.len(), grid.n_nodes())));
        }
        let shape = values[0].shape();
        if let Some(bad) = values.iter().position(|v| v.shape() != shape) {
            return Err(Error::InvalidArgument(format!(
                "path value at node {bad} has shape {:?}, expected {:?}",
                values[bad].shape(),
                shape
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: TimeGrid, value: DMatrix<f64>) -> Self {
        Self { grid, values: alloc::vec![value; grid.n_nodes()] }
    }

    pub fn zeros(grid: TimeGrid, rows: usize, cols: usize) -> Self {
        Self::constant(grid, DMatrix::zeros(rows, cols))
    }

    pub fn from_fn(grid: TimeGrid, mut f: impl FnMut(usize) -> DMatrix<f64>) -> Result<Self> {
        Self::new(grid, (0..grid.n_nodes()).map(&mut f).collect())
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values[0].shape()
    }

    pub fn values(&self) -> &[DMatrix<f64>] {
        &self.values
    }

    pub fn node(&self, i: usize) -> &DMatrix<f64> {
        &self.values[i]
    }

    pub fn initial(&self) -> &DMatrix<f64> {
        &self.values[0]
    }

    pub fn terminal(&self) -> &DMatrix<f64> {
        &self.values[self.values.len() - 1]
    }

    /// Value at a node, or a cubic (four-node) interpolant at a midpoint.
    pub fn eval(&self, point: GridPoint) -> DMatrix<f64> {
        match point {
            GridPoint::Node(i) => self.values[i].clone(),
            GridPoint::Mid(i) => self.midpoint(i),
        }
    }

    fn midpoint(&self, i: usize) -> DMatrix<f64> {
        let n = self.grid.n_steps;
        let v = &self.values;
        let combo = |idx: [usize; 4], w: [f64; 4]| -> DMatrix<f64> {
            let mut out = &v[idx[0]] * w[0];
            for k in 1..4 {
                out += &v[idx[k]] * w[k];
            }
            out / 16.0
        };
        if n == 2 {
            // only three nodes: quadratic interpolation
            let (w0, w1, w2) = if i == 0 { (3.0, 6.0, -1.0) } else { (-1.0, 6.0, 3.0) };
            return (&v[0] * w0 + &v[1] * w1 + &v[2] * w2) / 8.0;
        }
        if i == 0 {
            combo([0, 1, 2, 3], [5.0, 15.0, -5.0, 1.0])
        } else if i + 1 == n {
            combo([n - 3, n - 2, n - 1, n], [1.0, -5.0, 15.0, 5.0])
        } else {
            combo([i - 1, i, i + 1, i + 2], [-1.0, 9.0, 9.0, -1.0])
        }
    }

    /// Linear interpolation at an arbitrary time, clamped to `[0, T]`.
    pub fn at(&self, t: f64) -> DMatrix<f64> {
        let dt = self.grid.dt();
        let s = (t / dt).clamp(0.0, self.grid.n_steps as f64);
        let i = (libm::floor(s) as usize).min(self.grid.n_steps - 1);
        let w = s - i as f64;
        &self.values[i] * (1.0 - w) + &self.values[i + 1] * w
    }

    pub fn map(&self, mut f: impl FnMut(&DMatrix<f64>) -> DMatrix<f64>) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(&mut f).collect() }
    }

    /// `max` over nodes and entries of `|self - other|`.
    pub fn sup_distance(&self, other: &MatrixPath) -> f64 {
        assert_eq!(self.shape(), other.shape(), "sup_distance: shape mismatch");
        self.values.iter().zip(&other.values).fold(0.0_f64, |m, (a, b)| m.max(linalg::max_abs_diff(a, b)))
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, a| m.max(linalg::max_abs(a)))
    }
}

/// State types the integrator can march: a single matrix or a tuple of them
/// stored as a `Vec`.
pub trait OdeState: Clone {
    /// `self + h * rate`
    fn axpy(&self, h: f64, rate: &Self) -> Self;
    /// Largest absolute entry, `NaN`/`inf` if any entry is non-finite.
    fn magnitude(&self) -> f64;
}

fn magnitude_of(m: &DMatrix<f64>) -> f64 {
    let mut out = 0.0_f64;
    for &x in m.iter() {
        if !x.is_finite() {
            return f64::INFINITY;
        }
        out = out.max(x.abs());
    }
    out
}

impl OdeState for DMatrix<f64> {
    fn axpy(&self, h: f64, rate: &Self) -> Self {
        self + rate * h
    }

    fn magnitude(&self) -> f64 {
        magnitude_of(self)
    }
}

impl OdeState for Vec<DMatrix<f64>> {
    fn axpy(&self, h: f64, rate: &Self) -> Self {
        assert_eq!(self.len(), rate.len());
        self.iter().zip(rate).map(|(x, r)| x + r * h).collect()
    }

    fn magnitude(&self) -> f64 {
        self.iter().fold(0.0_f64, |m, x| m.max(magnitude_of(x)))
    }
}

fn combine<S: OdeState>(x: &S, h: f64, k1: &S, k2: &S, k3: &S, k4: &S) -> S {
    x.axpy(h / 6.0, k1).axpy(h / 3.0, k2).axpy(h / 3.0, k3).axpy(h / 6.0, k4)
}

fn check<S: OdeState>(state: &S, grid: &TimeGrid, node: usize) -> Result<()> {
    let m = state.magnitude();
    if m.is_finite() && m <= BLOW_UP_THRESHOLD {
        Ok(())
    } else {
        Err(Error::BlowUp { context: "matrix ODE integration".into(), time: grid.time(node) })
    }
}

/// Integrates `Ẋ = rhs(t, X)` backward from `X(T) = terminal`.
///
/// `project` is applied to every computed node value (e.g. symmetrization).
pub fn integrate_backward_with<S, F, P>(
    mut rhs: F,
    terminal: S,
    grid: &TimeGrid,
    scheme: Scheme,
    mut project: P,
) -> Result<Vec<S>>
where
    S: OdeState,
    F: FnMut(GridPoint, &S) -> S,
    P: FnMut(&mut S),
{
    let n = grid.n_steps();
    let h = -grid.dt();
    check(&terminal, grid, n)?;
    let mut out = Vec::with_capacity(n + 1);
    out.push(terminal);
    for i in (0..n).rev() {
        let x = out.last().expect("nonempty");
        let mut next = match scheme {
            Scheme::Euler => x.axpy(h, &rhs(GridPoint::Node(i + 1), x)),
            Scheme::Rk4 => {
                let k1 = rhs(GridPoint::Node(i + 1), x);
                let k2 = rhs(GridPoint::Mid(i), &x.axpy(0.5 * h, &k1));
                let k3 = rhs(GridPoint::Mid(i), &x.axpy(0.5 * h, &k2));
                let k4 = rhs(GridPoint::Node(i), &x.axpy(h, &k3));
                combine(x, h, &k1, &k2, &k3, &k4)
            }
        };
        project(&mut next);
        check(&next, grid, i)?;
        out.push(next);
    }
    out.reverse();
    Ok(out)
}

pub fn integrate_backward_states<S, F>(rhs: F, terminal: S, grid: &TimeGrid, scheme: Scheme) -> Result<Vec<S>>
where
    S: OdeState,
    F: FnMut(GridPoint, &S) -> S,
{
    integrate_backward_with(rhs, terminal, grid, scheme, |_| {})
}

/// Integrates `Ẋ = rhs(t, X)` forward from `X(0) = initial`.
pub fn integrate_forward_states<S, F>(mut rhs: F, initial: S, grid: &TimeGrid, scheme: Scheme) -> Result<Vec<S>>
where
    S: OdeState,
    F: FnMut(GridPoint, &S) -> S,
{
    let n = grid.n_steps();
    let h = grid.dt();
    check(&initial, grid, 0)?;
    let mut out = Vec::with_capacity(n + 1);
    out.push(initial);
    for i in 0..n {
        let x = out.last().expect("nonempty");
        let next = match scheme {
            Scheme::Euler => x.axpy(h, &rhs(GridPoint::Node(i), x)),
            Scheme::Rk4 => {
                let k1 = rhs(GridPoint::Node(i), x);
                let k2 = rhs(GridPoint::Mid(i), &x.axpy(0.5 * h, &k1));
                let k3 = rhs(GridPoint::Mid(i), &x.axpy(0.5 * h, &k2));
                let k4 = rhs(GridPoint::Node(i + 1), &x.axpy(h, &k3));
                combine(x, h, &k1, &k2, &k3, &k4)
            }
        };
        check(&next, grid, i + 1)?;
        out.push(next);
    }
    Ok(out)
}

/// Single-matrix backward integration with a time-valued right-hand side.
pub fn integrate_backward(
    mut rhs: impl FnMut(f64, &DMatrix<f64>) -> DMatrix<f64>,
    terminal: DMatrix<f64>,
    grid: &TimeGrid,
    scheme: Scheme,
) -> Result<MatrixPath> {
    let g = *grid;
    let values = integrate_backward_states(|p, x| rhs(g.time_at(p), x), terminal, grid, scheme)?;
    MatrixPath::new(*grid, values)
}

pub fn integrate_forward(
    mut rhs: impl FnMut(f64, &DMatrix<f64>) -> DMatrix<f64>,
    initial: DMatrix<f64>,
    grid: &TimeGrid,
    scheme: Scheme,
) -> Result<MatrixPath> {
    let g = *grid;
    let values = integrate_forward_states(|p, x| rhs(g.time_at(p), x), initial, grid, scheme)?;
    MatrixPath::new(*grid, values)
}

/// Solves `Ṡ + S A(t) + A(t)ᵀ S − S M S + C(t) = 0`, `S(T) = 0`.
///
/// The result is symmetrized after every step.
pub fn solve_symmetric_riccati(
    a: impl Fn(GridPoint) -> DMatrix<f64>,
    m_quad: &DMatrix<f64>,
    c: impl Fn(GridPoint) -> DMatrix<f64>,
    grid: &TimeGrid,
    scheme: Scheme,
) -> Result<MatrixPath> {
    let n = m_quad.nrows();
    let values = integrate_backward_with(
        |p, s: &DMatrix<f64>| {
            let a = a(p);
            let sa = s * &a;
            -(&sa + sa.transpose() - s * m_quad * s + c(p))
        },
        DMatrix::zeros(n, n),
        grid,
        scheme,
        |s| *s = linalg::symmetrize(s),
    )
    .map_err(|e| e.with_context("symmetric Riccati"))?;
    MatrixPath::new(*grid, values)
}

/// Solves `Ẋ + A_left(t) X + X A_right(t) + forcing(t) = 0` backward.
pub fn solve_linear_matrix_ode(
    a_left: impl Fn(GridPoint) -> DMatrix<f64>,
    a_right: impl Fn(GridPoint) -> DMatrix<f64>,
    forcing: impl Fn(GridPoint) -> DMatrix<f64>,
    terminal: DMatrix<f64>,
    grid: &TimeGrid,
    scheme: Scheme,
) -> Result<MatrixPath> {
    let (r, c) = terminal.shape();
    let probe = GridPoint::Node(grid.n_steps());
    linalg::check_shape("a_left", &a_left(probe), r, r)?;
    linalg::check_shape("a_right", &a_right(probe), c, c)?;
    linalg::check_shape("forcing", &forcing(probe), r, c)?;
    let values = integrate_backward_states(
        |p, x: &DMatrix<f64>| -(a_left(p) * x + x * a_right(p) + forcing(p)),
        terminal,
        grid,
        scheme,
    )
    .map_err(|e| e.with_context("linear matrix ODE"))?;
    MatrixPath::new(*grid, values)
}
