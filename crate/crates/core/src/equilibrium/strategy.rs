use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::Dims;
use crate::riccati::{GridPoint, MatrixPath, TimeGrid};

/// `α⁰ = φ⁰₀ + φ⁰₁ X⁰ + φ⁰₂ X̄`
#[derive(Debug, Clone, PartialEq)]
pub struct MajorGains {
    /// `φ⁰₀`, `k0 × 1`
    pub offset: MatrixPath,
    /// `φ⁰₁`, `k0 × d0`
    pub own: MatrixPath,
    /// `φ⁰₂`, `k0 × d`
    pub mean: MatrixPath,
}

/// `α = φ₀ + φ₁ X + φ₂ X⁰ + φ₃ X̄`
#[derive(Debug, Clone, PartialEq)]
pub struct MinorGains {
    /// `φ₀`, `k × 1`
    pub offset: MatrixPath,
    /// `φ₁`, `k × d`
    pub own: MatrixPath,
    /// `φ₂`, `k × d0`
    pub major: MatrixPath,
    /// `φ₃`, `k × d`
    pub mean: MatrixPath,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackStrategy {
    pub major: MajorGains,
    pub minor: MinorGains,
}

impl MajorGains {
    pub fn zeros(dims: &Dims, grid: TimeGrid) -> Self {
        Self {
            offset: MatrixPath::zeros(grid, dims.k0, 1),
            own: MatrixPath::zeros(grid, dims.k0, dims.d0),
            mean: MatrixPath::zeros(grid, dims.k0, dims.d),
        }
    }

    /// Splits `[φ⁰₂, φ⁰₁]` paths (gain on `𝕏 = [X̄; X⁰]`) and an offset path.
    pub fn from_block(d: usize, state_gain: &MatrixPath, offset: MatrixPath) -> Result<Self> {
        let n = state_gain.shape().1;
        let grid = *state_gain.grid();
        Ok(Self {
            offset,
            own: MatrixPath::new(grid, state_gain.values().iter().map(|g| g.columns(d, n - d).into_owned()).collect())?,
            mean: MatrixPath::new(grid, state_gain.values().iter().map(|g| g.columns(0, d).into_owned()).collect())?,
        })
    }

    pub fn paths(&self) -> [&MatrixPath; 3] {
        [&self.offset, &self.own, &self.mean]
    }

    fn paths_mut(&mut self) -> [&mut MatrixPath; 3] {
        [&mut self.offset, &mut self.own, &mut self.mean]
    }

    pub fn sup_distance(&self, other: &Self) -> f64 {
        self.paths().iter().zip(other.paths()).fold(0.0, |m, (a, b)| f64::max(m, a.sup_distance(b)))
    }

    /// `α⁰` at a node for the given states.
    pub fn control(&self, node: usize, major_state: &DMatrix<f64>, mean: &DMatrix<f64>) -> DMatrix<f64> {
        self.offset.node(node) + self.own.node(node) * major_state + self.mean.node(node) * mean
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for p in out.paths_mut() {
            *p = p.map(|m| m * factor);
        }
        out
    }
}

impl MinorGains {
    pub fn zeros(dims: &Dims, grid: TimeGrid) -> Self {
        Self {
            offset: MatrixPath::zeros(grid, dims.k, 1),
            own: MatrixPath::zeros(grid, dims.k, dims.d),
            major: MatrixPath::zeros(grid, dims.k, dims.d0),
            mean: MatrixPath::zeros(grid, dims.k, dims.d),
        }
    }

    /// Splits a `[φ₃, φ₂]` path into its mean and major parts.
    pub fn from_blocks(d: usize, own: MatrixPath, environment_gain: &MatrixPath, offset: MatrixPath) -> Result<Self> {
        let n = environment_gain.shape().1;
        let grid = *environment_gain.grid();
        Ok(Self {
            offset,
            own,
            major: MatrixPath::new(
                grid,
                environment_gain.values().iter().map(|g| g.columns(d, n - d).into_owned()).collect(),
            )?,
            mean: MatrixPath::new(
                grid,
                environment_gain.values().iter().map(|g| g.columns(0, d).into_owned()).collect(),
            )?,
        })
    }

    pub fn paths(&self) -> [&MatrixPath; 4] {
        [&self.offset, &self.own, &self.major, &self.mean]
    }

    fn paths_mut(&mut self) -> [&mut MatrixPath; 4] {
        [&mut self.offset, &mut self.own, &mut self.major, &mut self.mean]
    }

    pub fn sup_distance(&self, other: &Self) -> f64 {
        self.paths().iter().zip(other.paths()).fold(0.0, |m, (a, b)| f64::max(m, a.sup_distance(b)))
    }

    /// `[φ₁, φ₃, φ₂]` at a point: the gain on the joint state `[X̃; X̄; X⁰]`.
    pub fn joint_gain(&self, p: GridPoint) -> DMatrix<f64> {
        crate::linalg::hstack(&crate::linalg::hstack(&self.own.eval(p), &self.mean.eval(p)), &self.major.eval(p))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for p in out.paths_mut() {
            *p = p.map(|m| m * factor);
        }
        out
    }
}

impl FeedbackStrategy {
    pub fn zeros(dims: &Dims, grid: TimeGrid) -> Self {
        Self { major: MajorGains::zeros(dims, grid), minor: MinorGains::zeros(dims, grid) }
    }

    pub fn grid(&self) -> &TimeGrid {
        self.major.own.grid()
    }

    /// Sup-norm distance over every gain component and node.
    pub fn sup_distance(&self, other: &Self) -> f64 {
        self.major.sup_distance(&other.major).max(self.minor.sup_distance(&other.minor))
    }

    /// Every gain multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self { major: self.major.scaled(factor), minor: self.minor.scaled(factor) }
    }

    /// `theta · self + (1 − theta) · other`, path by path.
    pub fn blend(&self, other: &Self, theta: f64) -> Self {
        let mix = |a: &MatrixPath, b: &MatrixPath| {
            let values = a.values().iter().zip(b.values()).map(|(x, y)| x * theta + y * (1.0 - theta)).collect();
            MatrixPath::new(*a.grid(), values).expect("same grid")
        };
        Self {
            major: MajorGains {
                offset: mix(&self.major.offset, &other.major.offset),
                own: mix(&self.major.own, &other.major.own),
                mean: mix(&self.major.mean, &other.major.mean),
            },
            minor: MinorGains {
                offset: mix(&self.minor.offset, &other.minor.offset),
                own: mix(&self.minor.own, &other.minor.own),
                major: mix(&self.minor.major, &other.minor.major),
                mean: mix(&self.minor.mean, &other.minor.mean),
            },
        }
    }

    /// Checks that every path lives on `grid` and has the shape `dims` requires.
    pub fn check(&self, dims: &Dims, grid: &TimeGrid) -> Result<()> {
        let expected = [
            ("phi0_0", &self.major.offset, (dims.k0, 1)),
            ("phi0_1", &self.major.own, (dims.k0, dims.d0)),
            ("phi0_2", &self.major.mean, (dims.k0, dims.d)),
            ("phi_0", &self.minor.offset, (dims.k, 1)),
            ("phi_1", &self.minor.own, (dims.k, dims.d)),
            ("phi_2", &self.minor.major, (dims.k, dims.d0)),
            ("phi_3", &self.minor.mean, (dims.k, dims.d)),
        ];
        for (field, path, (rows, cols)) in expected {
            grid.ensure_same(path.grid(), field)?;
            if path.shape() != (rows, cols) {
                return Err(Error::Dimension {
                    field,
                    expected_rows: rows,
                    expected_cols: cols,
                    rows: path.shape().0,
                    cols: path.shape().1,
                });
            }
        }
        Ok(())
    }
}
