//! Numerical self-checks against independent oracles.

use std::fmt;
use std::str::FromStr;

use anyhow::{bail, Result};
use fpf_core::elasticity::assemble_and_solve;
use fpf_core::mesh::uniaxial_tension_bcs;
use fpf_core::phasefield::{eval_p_gamma, profile_field};
use fpf_core::sensitivity::relative_difference;
use fpf_core::{BlendedField, DensityField, FilterOperator, Grid, PhaseFieldParams, SolverConfig};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;

pub const GRADIENT_TOL: f64 = 1e-5;
pub const LAGRANGIAN_TOL: f64 = 1e-8;
pub const FILTER_TOL: f64 = 1e-12;
pub const PATCH_TOL: f64 = 1e-10;
pub const MODICA_TOL: f64 = 0.02;

const GRADIENT_SAMPLES: usize = 20;
const FD_STEP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Check {
    Gradient,
    Filter,
    Patch,
    Lagrangian,
    Modica,
}

impl Check {
    pub const ALL: [Check; 5] = [Check::Gradient, Check::Filter, Check::Patch, Check::Lagrangian, Check::Modica];
}

impl FromStr for Check {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "gradient" => Self::Gradient,
            "filter" => Self::Filter,
            "patch" => Self::Patch,
            "lagrangian" => Self::Lagrangian,
            "modica" => Self::Modica,
            other => bail!("unknown check {other:?}; expected gradient, filter, patch, lagrangian, modica or all"),
        })
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Gradient => "gradient",
            Self::Filter => "filter",
            Self::Patch => "patch",
            Self::Lagrangian => "lagrangian",
            Self::Modica => "modica",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub check: Check,
    pub passed: bool,
    /// Measured error and the tolerance it was held to.
    pub error: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: error {:.3e} (tolerance {:.0e}); {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.check,
            self.error,
            self.tolerance,
            self.detail
        )
    }
}

fn report(check: Check, error: f64, tolerance: f64, detail: String) -> CheckReport {
    CheckReport {
        check,
        passed: error <= tolerance,
        error,
        tolerance,
        detail,
    }
}

pub fn cmd_verify(config: &RunConfig, checks: &[Check]) -> Result<Vec<CheckReport>> {
    config.validate()?;
    checks
        .iter()
        .map(|&c| match c {
            Check::Gradient => verify_gradient(config),
            Check::Filter => verify_filter(config),
            Check::Patch => verify_patch(config),
            Check::Lagrangian => verify_lagrangian(config),
            Check::Modica => verify_modica(config),
        })
        .collect()
}

fn random_field(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Result<DensityField> {
    Ok(DensityField::new((0..n).map(|_| rng.gen_range(lo..hi)).collect())?)
}

/// Analytic gradient against finite differences of J on random elements of
/// a random interior density.
pub fn verify_gradient(config: &RunConfig) -> Result<CheckReport> {
    let problem = config.problem()?;
    let n = problem.grid().num_elements();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let phi = random_field(&mut rng, n, 0.2, 0.8)?;
    let elements = sample(&mut rng, n, GRADIENT_SAMPLES.min(n)).into_vec();
    let checks = problem.verify_gradient(&phi, &elements, FD_STEP)?;
    let worst = checks
        .iter()
        .max_by(|a, b| a.relative_error().total_cmp(&b.relative_error()))
        .expect("at least one element");
    Ok(report(
        Check::Gradient,
        worst.relative_error(),
        GRADIENT_TOL,
        format!(
            "{} elements, worst at element {} (analytic {:.6e}, finite difference {:.6e})",
            checks.len(),
            worst.element,
            worst.analytic,
            worst.finite_difference
        ),
    ))
}

/// Gradient against twice the design variation of the Lagrangian at the
/// computed state, which must satisfy the state equations.
pub fn verify_lagrangian(config: &RunConfig) -> Result<CheckReport> {
    let problem = config.problem()?.with_solver(SolverConfig {
        rel_tol: config.solver.rel_tol.min(1e-12),
        ..config.solver_config()
    });
    let n = problem.grid().num_elements();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let phi = random_field(&mut rng, n, 0.0, 1.0)?;
    let eval = problem.objective(&phi, None)?;
    let grad = problem.gradient(&phi, &eval)?;
    let res = problem.lagrangian_residuals(&phi, &eval.state.u, &eval.state.strain, &eval.state.stress)?;
    let twice: Vec<f64> = res.design.iter().map(|d| 2.0 * d).collect();
    let design = relative_difference(&grad, &twice);
    let state = res.equilibrium.max(res.constitutive).max(res.compatibility);
    Ok(report(
        Check::Lagrangian,
        design.max(state),
        LAGRANGIAN_TOL,
        format!(
            "gradient vs 2 x design variation {design:.3e}; equilibrium {:.3e}, constitutive {:.3e}, compatibility {:.3e}",
            res.equilibrium, res.constitutive, res.compatibility
        ),
    ))
}

/// `<K phi, v> = <phi, K^T v>` on random vectors, plus unit row sums.
pub fn verify_filter(config: &RunConfig) -> Result<CheckReport> {
    let grid = config.grid()?;
    let filter = FilterOperator::build(&grid, config.method.filter_radius)?;
    let n = grid.num_elements();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(2));
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let phi: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
        let lhs: f64 = filter.apply(&phi)?.iter().zip(&v).map(|(a, b)| a * b).sum();
        let rhs: f64 = phi.iter().zip(&filter.apply_adjoint(&v)?).map(|(a, b)| a * b).sum();
        worst = worst.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE));
    }
    let row_sum = (0..n)
        .map(|i| (filter.row(i).map(|(_, w)| w).sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max);
    Ok(report(
        Check::Filter,
        worst.max(row_sum),
        FILTER_TOL,
        format!(
            "adjoint identity {worst:.3e}, row sums {row_sum:.3e}, radius {} m, {} nonzeros",
            filter.radius(),
            filter.nnz()
        ),
    ))
}

/// Solid bar in uniaxial tension: the stress must be the applied traction
/// everywhere.
pub fn verify_patch(config: &RunConfig) -> Result<CheckReport> {
    let grid = config.grid()?;
    let t = 1.0e6;
    let bcs = uniaxial_tension_bcs(&grid, t);
    let n = grid.num_elements();
    let cfg = SolverConfig {
        rel_tol: 1e-13,
        ..config.solver_config()
    };
    let state = assemble_and_solve(
        &grid,
        &bcs,
        &config.material(),
        &DensityField::uniform(&grid, 1.0)?,
        &BlendedField::from_values(vec![1.0; n]),
        &cfg,
    )?;
    let worst = state
        .stress
        .iter()
        .flatten()
        .map(|s| (s[0] - t).abs().max(s[1].abs()).max(s[2].abs()) / t)
        .fold(0.0, f64::max);
    Ok(report(
        Check::Patch,
        worst,
        PATCH_TOL,
        format!("{}x{} mesh, traction {t} Pa, {} CG iterations", grid.nx(), grid.ny(), state.cg_iterations),
    ))
}

/// `∫_0^1 sqrt(2 s^2 (1 - s)^2) ds` by composite Simpson: the energy per unit
/// length of a straight transition layer of the discretized phase-field
/// functional.
pub fn transition_energy_quadrature() -> f64 {
    let f = |s: f64| (2.0f64).sqrt() * s * (1.0 - s);
    let n = 1000;
    let h = 1.0 / n as f64;
    let mut sum = f(0.0) + f(1.0);
    for k in 1..n {
        sum += if k % 2 == 1 { 4.0 } else { 2.0 } * f(k as f64 * h);
    }
    sum * h / 3.0
}

/// Phase-field energy of the one-dimensional optimal profile across a unit
/// interface on a 2 x 1 domain, resolved with 20 cells per `gamma`.
pub fn modica_profile_energy(gamma: f64, eta: f64) -> Result<f64> {
    let nx = (40.0 / gamma).ceil() as usize;
    let grid = Grid::new(nx, 1, 2.0, 1.0)?;
    let phi = profile_field(&grid, 1.0, gamma);
    Ok(eval_p_gamma(&grid, &phi, &PhaseFieldParams::new(gamma, eta)?)?)
}

pub fn verify_modica(config: &RunConfig) -> Result<CheckReport> {
    let (gamma, eta) = (config.method.gamma, config.method.eta);
    let energy = modica_profile_energy(gamma, eta)?;
    let oracle = eta * transition_energy_quadrature();
    Ok(report(
        Check::Modica,
        (energy - oracle).abs() / oracle,
        MODICA_TOL,
        format!("gamma {gamma} m: P = {energy:.6} vs quadrature {oracle:.6}"),
    ))
}
