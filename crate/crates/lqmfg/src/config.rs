//! JSON run configuration.
//!
//! A config holds exactly one model source (`model` with raw LQ matrices, or
//! `flocking`) plus `grid`, `solver`, `simulation` and `experiment` sections.
//! Every field except the model source has a default. Flocking initial laws
//! are given in velocity coordinates and lifted to the doubled state.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use lqmfg_core::evaluator::{GaussianLaw, InitialConditions};
use lqmfg_core::flocking::{self, FlockingParams};
use lqmfg_core::model::{Dims, MajorMinorLqModel, TimeVector};
use lqmfg_core::riccati::TimeGrid;
use lqmfg_core::simulator::SimConfig;
use lqmfg_core::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Matrix in row-major nested form.
pub type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flocking: Option<FlockingSpec>,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub simulation: SimulationSpec,
    #[serde(default)]
    pub experiment: ExperimentSpec,
    /// Output directory; `--out` takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct DimsSpec {
    pub d0: usize,
    pub d: usize,
    pub k0: usize,
    pub k: usize,
    pub m0: usize,
    pub m: usize,
}

/// Raw LQ model. Omitted matrices are zero; `r0` and `r` are required.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ModelSpec {
    pub dims: DimsSpec,
    pub horizon: f64,
    #[serde(default)]
    pub l0: Option<Rows>,
    #[serde(default)]
    pub b0: Option<Rows>,
    #[serde(default)]
    pub f0: Option<Rows>,
    #[serde(default)]
    pub d0: Option<Rows>,
    #[serde(default)]
    pub l: Option<Rows>,
    #[serde(default)]
    pub b: Option<Rows>,
    #[serde(default)]
    pub f: Option<Rows>,
    #[serde(default)]
    pub g: Option<Rows>,
    #[serde(default)]
    pub d: Option<Rows>,
    #[serde(default)]
    pub q0: Option<Rows>,
    #[serde(default)]
    pub q: Option<Rows>,
    pub r0: Rows,
    pub r: Rows,
    #[serde(default)]
    pub h0: Option<Rows>,
    #[serde(default)]
    pub h: Option<Rows>,
    #[serde(default)]
    pub h1: Option<Rows>,
    /// Constant major target.
    #[serde(default)]
    pub eta0: Option<Vec<f64>>,
    #[serde(default)]
    pub eta: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum FreeWill {
    /// `ν(t) = [−2π sin 2πt, 2π cos 2πt]`, planar only.
    Circular,
    Constant(Vec<f64>),
}

/// Flocking model; the four penalty weights are mandatory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct FlockingSpec {
    #[serde(default = "default_dv")]
    pub dv: usize,
    pub lambda0: f64,
    pub lambda1: f64,
    pub l0: f64,
    pub l1: f64,
    /// Defaults to `0.5 I`.
    #[serde(default)]
    pub sigma0: Option<Rows>,
    #[serde(default)]
    pub sigma: Option<Rows>,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_free_will")]
    pub free_will: FreeWill,
}

fn default_dv() -> usize {
    2
}

fn default_horizon() -> f64 {
    5.0
}

fn default_free_will() -> FreeWill {
    FreeWill::Circular
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct GridSpec {
    /// Defaults to `round(T / 1e-3)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_steps: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverMethod {
    #[default]
    ClosedLoop,
    OpenLoop,
    BestResponseIteration,
}

impl SolverMethod {
    pub fn name(self) -> &'static str {
        match self {
            SolverMethod::ClosedLoop => "closed-loop",
            SolverMethod::OpenLoop => "open-loop",
            SolverMethod::BestResponseIteration => "best-response-iteration",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default)]
    pub method: SolverMethod,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_damping")]
    pub damping: f64,
    /// Also solve the open-loop system and report its consistency error.
    #[serde(default)]
    pub open_loop_diagnostics: bool,
}

fn default_max_iter() -> usize {
    50
}

fn default_tol() -> f64 {
    1e-8
}

fn default_damping() -> f64 {
    1.0
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            method: SolverMethod::default(),
            max_iter: default_max_iter(),
            tol: default_tol(),
            damping: default_damping(),
            open_loop_diagnostics: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SimulationSpec {
    #[serde(default = "default_n_minor")]
    pub n_minor: usize,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub master_seed: u64,
    /// Minor agents written by `simulate`; all when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_agents: Option<usize>,
    #[serde(default)]
    pub init: InitSpec,
}

fn default_n_minor() -> usize {
    10
}

fn default_replicates() -> usize {
    500
}

impl Default for SimulationSpec {
    fn default() -> Self {
        Self {
            n_minor: default_n_minor(),
            replicates: default_replicates(),
            master_seed: 0,
            record_agents: None,
            init: InitSpec::default(),
        }
    }
}

/// Initial laws. Minor states default to `N(0, I)`, the major state to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct InitSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub minor_mean: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub minor_cov: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub major_mean: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub major_cov: Option<Rows>,
    /// Flocking only: leader starting position.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leader_position: Option<Vec<f64>>,
    /// Flocking only: std of the i.i.d. follower starting positions.
    #[serde(default = "default_scatter")]
    pub follower_scatter: f64,
}

fn default_scatter() -> f64 {
    1.0
}

impl Default for InitSpec {
    fn default() -> Self {
        Self {
            minor_mean: None,
            minor_cov: None,
            major_mean: None,
            major_cov: None,
            leader_position: None,
            follower_scatter: default_scatter(),
        }
    }
}

/// Penalty weights of one trajectory panel; missing entries keep the base values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Panel {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct NashSpec {
    #[serde(default = "default_directions")]
    pub directions: usize,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_nash_tolerance")]
    pub tolerance: f64,
    #[serde(default)]
    pub seed: u64,
    /// Multiplies every gain before the check; 0.5 reproduces the halved test.
    #[serde(default = "default_gain_scale")]
    pub gain_scale: f64,
}

fn default_directions() -> usize {
    5
}

fn default_epsilon() -> f64 {
    1e-3
}

fn default_nash_tolerance() -> f64 {
    1e-4
}

fn default_gain_scale() -> f64 {
    1.0
}

impl Default for NashSpec {
    fn default() -> Self {
        Self {
            directions: default_directions(),
            epsilon: default_epsilon(),
            tolerance: default_nash_tolerance(),
            seed: 0,
            gain_scale: default_gain_scale(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default = "default_flock_sizes")]
    pub flock_sizes: Vec<usize>,
    /// Trajectory panels; an empty list means one panel with the base weights.
    #[serde(default)]
    pub panels: Vec<Panel>,
    /// Seeds averaged per trajectory panel.
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default)]
    pub nash: NashSpec,
}

fn default_flock_sizes() -> Vec<usize> {
    vec![5, 10, 20, 50, 100]
}

fn default_seeds() -> usize {
    10
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            flock_sizes: default_flock_sizes(),
            panels: Vec::new(),
            seeds: default_seeds(),
            nash: NashSpec::default(),
        }
    }
}

/// Command-line overrides.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub n_steps: Option<usize>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).context("malformed config")?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("in {}", path.display()))
    }

    /// Flocking demo: weights (0.6, 0.2, 0.5, 0.3), `T = 5`, `dt = 1e-3`.
    pub fn flocking_demo() -> Self {
        Self {
            model: None,
            flocking: Some(FlockingSpec {
                dv: 2,
                lambda0: 0.6,
                lambda1: 0.2,
                l0: 0.5,
                l1: 0.3,
                sigma0: None,
                sigma: None,
                horizon: 5.0,
                free_will: FreeWill::Circular,
            }),
            grid: GridSpec::default(),
            solver: SolverSpec::default(),
            simulation: SimulationSpec::default(),
            experiment: ExperimentSpec::default(),
            output: None,
        }
    }

    pub fn apply(&mut self, overrides: &Overrides) {
        if let Some(seed) = overrides.seed {
            self.simulation.master_seed = seed;
        }
        if let Some(n) = overrides.n_steps {
            self.grid.n_steps = Some(n);
        }
        if let Some(out) = &overrides.out {
            self.output = Some(out.clone());
        }
    }

    pub fn check(&self) -> Result<()> {
        match (&self.model, &self.flocking) {
            (Some(_), Some(_)) => bail!("config must contain exactly one of `model` and `flocking`, found both"),
            (None, None) => bail!("config must contain one of `model` and `flocking`"),
            _ => {}
        }
        ensure!(self.simulation.n_minor >= 1, "simulation.nMinor must be at least 1");
        ensure!(self.grid.n_steps != Some(0), "grid.nSteps must be at least 1");
        ensure!(self.experiment.flock_sizes.iter().all(|&n| n >= 1), "flock sizes must be at least 1");
        Ok(())
    }

    /// Hex sha256 of the canonical JSON of the effective config. The output
    /// directory is left out: where files go does not change what they hold.
    pub fn hash(&self) -> String {
        let inputs = RunConfig { output: None, ..self.clone() };
        let canonical = serde_json::to_vec(&inputs).expect("config serializes");
        let digest = Sha256::digest(&canonical);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn horizon(&self) -> f64 {
        match (&self.model, &self.flocking) {
            (Some(m), _) => m.horizon,
            (_, Some(f)) => f.horizon,
            _ => unreachable!("checked config"),
        }
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        let t = self.horizon();
        let n = self.grid.n_steps.unwrap_or_else(|| ((t / 1e-3).round() as usize).max(1));
        Ok(TimeGrid::new(t, n)?)
    }

    pub fn is_flocking(&self) -> bool {
        self.flocking.is_some()
    }

    pub fn flocking_params(&self) -> Result<FlockingParams> {
        let spec = self.flocking.as_ref().context("this command needs a `flocking` section")?;
        spec.params(None)
    }

    pub fn build_model(&self) -> Result<MajorMinorLqModel> {
        match (&self.model, &self.flocking) {
            (Some(m), _) => m.build(),
            (_, Some(f)) => Ok(flocking::embed(&f.params(None)?)?),
            _ => unreachable!("checked config"),
        }
    }

    pub fn dims(&self) -> Result<Dims> {
        Ok(self.build_model()?.dims)
    }

    /// Initial laws in state coordinates.
    pub fn initial_conditions(&self) -> Result<InitialConditions> {
        let init = &self.simulation.init;
        let (n0, n, lift) = match (&self.model, &self.flocking) {
            (Some(m), _) => (m.dims.d0, m.dims.d, false),
            (_, Some(f)) => (f.dv, f.dv, true),
            _ => unreachable!("checked config"),
        };
        let law = |mean: &Option<Vec<f64>>, cov: &Option<Rows>, dim: usize, default_cov: DMatrix<f64>, what: &str| {
            let mean = match mean {
                Some(v) => column(v, dim, &format!("{what}Mean"))?,
                None => DMatrix::zeros(dim, 1),
            };
            let cov = match cov {
                Some(rows) => matrix(rows, dim, dim, &format!("{what}Cov"))?,
                None => default_cov,
            };
            let (mean, cov) = if lift { (doubled_mean(&mean), doubled_cov(&cov)) } else { (mean, cov) };
            GaussianLaw::new(mean, cov).with_context(|| format!("initial {what} law"))
        };
        Ok(InitialConditions {
            minor: law(&init.minor_mean, &init.minor_cov, n, DMatrix::identity(n, n), "minor")?,
            major: law(&init.major_mean, &init.major_cov, n0, DMatrix::zeros(n0, n0), "major")?,
        })
    }

    pub fn sim_config(&self, n_minor: usize) -> Result<SimConfig> {
        ensure!(n_minor >= 1, "at least one minor agent is required");
        Ok(SimConfig {
            n_minor,
            grid: self.time_grid()?,
            master_seed: self.simulation.master_seed,
            init: self.initial_conditions()?,
        })
    }

    /// Panels with their flocking parameters; the base weights when none are listed.
    pub fn panels(&self) -> Result<Vec<(String, FlockingParams)>> {
        let spec = self.flocking.as_ref().context("trajectory panels need a `flocking` section")?;
        if self.experiment.panels.is_empty() {
            return Ok(vec![("base".to_string(), spec.params(None)?)]);
        }
        let mut seen = std::collections::BTreeSet::new();
        self.experiment
            .panels
            .iter()
            .map(|p| {
                ensure!(
                    !p.name.is_empty() && p.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-'),
                    "panel name `{}` must be nonempty and use only [A-Za-z0-9_-]",
                    p.name
                );
                ensure!(seen.insert(p.name.clone()), "duplicate panel name `{}`", p.name);
                Ok((p.name.clone(), spec.params(Some(p)).with_context(|| format!("panel `{}`", p.name))?))
            })
            .collect()
    }
}

impl FlockingSpec {
    pub fn params(&self, panel: Option<&Panel>) -> Result<FlockingParams> {
        let dv = self.dv;
        let nu = match &self.free_will {
            FreeWill::Circular => {
                ensure!(dv == 2, "circular free will needs dv = 2, found {dv}");
                TimeVector::function(2, flocking::circular_free_will)
            }
            FreeWill::Constant(v) => {
                ensure!(v.len() == dv, "freeWill has {} entries, expected {dv}", v.len());
                TimeVector::constant(v)
            }
        };
        let sigma = |rows: &Option<Rows>, what: &str| match rows {
            Some(r) => matrix(r, dv, dv, what),
            None => Ok(DMatrix::identity(dv, dv) * 0.5),
        };
        let pick = |o: Option<f64>, base: f64| o.unwrap_or(base);
        let params = FlockingParams {
            dv,
            lambda0: pick(panel.and_then(|p| p.lambda0), self.lambda0),
            lambda1: pick(panel.and_then(|p| p.lambda1), self.lambda1),
            l0: pick(panel.and_then(|p| p.l0), self.l0),
            l1: pick(panel.and_then(|p| p.l1), self.l1),
            sigma0: sigma(&self.sigma0, "sigma0")?,
            sigma: sigma(&self.sigma, "sigma")?,
            nu,
            horizon: self.horizon,
        };
        params.check()?;
        Ok(params)
    }
}

impl ModelSpec {
    pub fn build(&self) -> Result<MajorMinorLqModel> {
        let DimsSpec { d0, d, k0, k, m0, m } = self.dims;
        let dims = Dims { d0, d, k0, k, m0, m };
        let mut model = MajorMinorLqModel::zeros(dims, self.horizon);
        let set = |target: &mut DMatrix<f64>, rows: &Option<Rows>, name: &str| -> Result<()> {
            if let Some(r) = rows {
                *target = matrix(r, target.nrows(), target.ncols(), name)?;
            }
            Ok(())
        };
        set(&mut model.l0, &self.l0, "l0")?;
        set(&mut model.b0, &self.b0, "b0")?;
        set(&mut model.f0, &self.f0, "f0")?;
        set(&mut model.d0, &self.d0, "d0")?;
        set(&mut model.l, &self.l, "l")?;
        set(&mut model.b, &self.b, "b")?;
        set(&mut model.f, &self.f, "f")?;
        set(&mut model.g, &self.g, "g")?;
        set(&mut model.d, &self.d, "d")?;
        set(&mut model.q0, &self.q0, "q0")?;
        set(&mut model.q, &self.q, "q")?;
        set(&mut model.h0, &self.h0, "h0")?;
        set(&mut model.h, &self.h, "h")?;
        set(&mut model.h1, &self.h1, "h1")?;
        model.r0 = matrix(&self.r0, k0, k0, "r0")?;
        model.r = matrix(&self.r, k, k, "r")?;
        if let Some(v) = &self.eta0 {
            ensure!(v.len() == d0, "eta0 has {} entries, expected {d0}", v.len());
            model.eta0 = TimeVector::constant(v);
        }
        if let Some(v) = &self.eta {
            model.eta = column(v, d, "eta")?;
        }
        Ok(model.validated()?)
    }
}

fn matrix(rows: &Rows, nrows: usize, ncols: usize, name: &str) -> Result<DMatrix<f64>> {
    ensure!(rows.len() == nrows && rows.iter().all(|r| r.len() == ncols), "`{name}` must be {nrows}x{ncols}");
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn column(v: &[f64], n: usize, name: &str) -> Result<DMatrix<f64>> {
    ensure!(v.len() == n, "`{name}` has {} entries, expected {n}", v.len());
    Ok(DMatrix::from_column_slice(n, 1, v))
}

fn doubled_mean(m: &DMatrix<f64>) -> DMatrix<f64> {
    lqmfg_core::linalg::vstack(m, m)
}

/// Law of `[V; V]` from the law of `V`.
fn doubled_cov(c: &DMatrix<f64>) -> DMatrix<f64> {
    let top = lqmfg_core::linalg::hstack(c, c);
    lqmfg_core::linalg::vstack(&top, &top)
}
