//! Run configuration.
//!
//! Files are line-based `key = value` text with `#` comments and dotted keys
//! (`method.alpha = 0.5`), which is a subset of TOML. Missing keys take the
//! benchmark defaults.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use fpf_core::mesh::{cantilever_bcs, uniaxial_tension_bcs, BENCHMARK_TRACTION};
use fpf_core::{
    BoundaryConditions, Grid, MaterialModel, MethodParameters, OptimizerConfig, PhaseFieldParams, SolverConfig,
    TopologyProblem,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub grid: GridSection,
    pub method: MethodSection,
    pub material: MaterialSection,
    pub optimizer: OptimizerSection,
    pub solver: SolverSection,
    pub load: LoadSection,
    pub output: OutputSection,
    /// Seed for the random fields and element samples of `verify`; at most
    /// `i64::MAX`, the largest integer the file format holds.
    pub seed: u64,
}

/// Design domain `[0, lx] x [0, ly]` in m, split into `nx` by `ny` elements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MethodSection {
    pub alpha: f64,
    /// Defaults to `1 - alpha` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    /// Interface width (m).
    pub gamma: f64,
    /// Perimeter weight (N/m).
    pub eta: f64,
    /// Filter radius (m).
    pub filter_radius: f64,
    pub volume_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaterialSection {
    /// Pa.
    pub youngs_modulus: f64,
    pub poisson_ratio: f64,
    pub penalization: f64,
    pub ersatz_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSection {
    pub tau0: f64,
    pub max_iters: usize,
    pub tol_step: f64,
    pub backtrack_factor: f64,
    pub max_halvings: usize,
    pub volume_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub rel_tol: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadPreset {
    /// Left side clamped, downward traction on the right tenth of the bottom.
    Cantilever,
    /// Rollers on the left side, traction in `+x` on the right side.
    UniaxialTension,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoadSection {
    pub preset: LoadPreset,
    /// Traction magnitude (Pa, i.e. N/m per unit thickness).
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            nx: 100,
            ny: 50,
            lx: 2.0,
            ly: 1.0,
        }
    }
}

impl Default for MethodSection {
    fn default() -> Self {
        let p = MethodParameters::benchmark();
        Self {
            alpha: p.alpha,
            beta: None,
            gamma: p.phase.gamma,
            eta: p.phase.eta,
            filter_radius: p.filter_radius,
            volume_fraction: p.volume_fraction,
        }
    }
}

impl Default for MaterialSection {
    fn default() -> Self {
        let m = MaterialModel::benchmark();
        Self {
            youngs_modulus: m.youngs_modulus,
            poisson_ratio: m.poisson_ratio,
            penalization: m.penalization,
            ersatz_ratio: m.ersatz_ratio,
        }
    }
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let c = OptimizerConfig::default();
        Self {
            tau0: c.tau0,
            max_iters: c.max_iters,
            tol_step: c.tol_step,
            backtrack_factor: c.backtrack_factor,
            max_halvings: c.max_halvings,
            volume_tol: c.volume_tol,
        }
    }
}

impl Default for SolverSection {
    fn default() -> Self {
        let c = SolverConfig::default();
        Self {
            rel_tol: c.rel_tol,
            max_iter: c.max_iter,
        }
    }
}

impl Default for LoadSection {
    fn default() -> Self {
        Self {
            preset: LoadPreset::Cantilever,
            magnitude: BENCHMARK_TRACTION,
        }
    }
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).context("malformed configuration")?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    /// Flat `key = value` rendering, one key per line.
    pub fn to_text(&self) -> String {
        let value = toml::Value::try_from(self).expect("configuration is serializable");
        let mut out = String::new();
        flatten("", &value, &mut out);
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.method.volume_fraction;
        if !(v > 0.0 && v < 1.0) {
            bail!("method.volume_fraction must lie strictly between 0 and 1, got {v}");
        }
        self.grid()?;
        self.method_parameters().validate()?;
        self.material().validate()?;
        self.optimizer_config().validate()?;
        if self.solver.rel_tol.is_nan() || self.solver.rel_tol <= 0.0 || self.solver.max_iter == 0 {
            bail!("solver.rel_tol must be positive and solver.max_iter at least 1");
        }
        if !self.load.magnitude.is_finite() {
            bail!("load.magnitude must be finite");
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        let g = &self.grid;
        Ok(Grid::new(g.nx, g.ny, g.lx, g.ly)?)
    }

    pub fn beta(&self) -> f64 {
        self.method.beta.unwrap_or(1.0 - self.method.alpha)
    }

    pub fn method_parameters(&self) -> MethodParameters {
        let m = &self.method;
        MethodParameters {
            alpha: m.alpha,
            beta: self.beta(),
            phase: PhaseFieldParams {
                gamma: m.gamma,
                eta: m.eta,
            },
            filter_radius: m.filter_radius,
            volume_fraction: m.volume_fraction,
        }
    }

    pub fn material(&self) -> MaterialModel {
        let m = &self.material;
        MaterialModel {
            youngs_modulus: m.youngs_modulus,
            poisson_ratio: m.poisson_ratio,
            penalization: m.penalization,
            ersatz_ratio: m.ersatz_ratio,
        }
    }

    pub fn optimizer_config(&self) -> OptimizerConfig {
        let o = &self.optimizer;
        OptimizerConfig {
            tau0: o.tau0,
            max_iters: o.max_iters,
            tol_step: o.tol_step,
            backtrack_factor: o.backtrack_factor,
            max_halvings: o.max_halvings,
            volume_tol: o.volume_tol,
        }
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            rel_tol: self.solver.rel_tol,
            max_iter: self.solver.max_iter,
        }
    }

    pub fn boundary_conditions(&self, grid: &Grid) -> BoundaryConditions {
        match self.load.preset {
            LoadPreset::Cantilever => cantilever_bcs(grid, self.load.magnitude),
            LoadPreset::UniaxialTension => uniaxial_tension_bcs(grid, self.load.magnitude),
        }
    }

    pub fn problem(&self) -> Result<TopologyProblem> {
        let grid = self.grid()?;
        let bcs = self.boundary_conditions(&grid);
        Ok(TopologyProblem::new(
            grid,
            bcs,
            self.material(),
            self.method_parameters(),
            self.solver_config(),
        )?)
    }
}

fn flatten(prefix: &str, value: &toml::Value, out: &mut String) {
    match value {
        toml::Value::Table(table) => {
            // scalars first so that a reader sees top-level keys up front
            let (scalars, tables): (Vec<_>, Vec<_>) = table.iter().partition(|(_, v)| !v.is_table());
            for (key, v) in scalars.into_iter().chain(tables) {
                let path = if prefix.is_empty() {
                    key.clone()
                } else {
                    format!("{prefix}.{key}")
                };
                flatten(&path, v, out);
            }
        }
        scalar => {
            let _ = writeln!(out, "{prefix} = {scalar}");
        }
    }
}
