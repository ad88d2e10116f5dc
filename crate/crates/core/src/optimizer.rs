//! Projected gradient flow with an exact volume constraint.
//!
//! Each step moves the density against the max-norm-normalized gradient,
//! then projects onto `{0 <= phi <= 1, mean(phi) = vbar}` by clamping with a
//! uniform shift found by bisection. Steps that do not decrease the
//! objective are halved.

use crate::elasticity::DensityField;
use crate::error::{check_len, Error, Result};
use crate::mesh::Grid;
use crate::sensitivity::{Evaluation, TopologyProblem};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    /// Largest pseudo-time step, i.e. the largest change of the element
    /// with the steepest gradient before projection.
    pub tau0: f64,
    pub max_iters: usize,
    /// Stop once `max |phi_next - phi| < tol_step`.
    pub tol_step: f64,
    pub backtrack_factor: f64,
    pub max_halvings: usize,
    /// Volume residual tolerance of the projection, relative to |Ω|.
    pub volume_tol: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            tau0: 1.0,
            max_iters: 500,
            tol_step: 2e-3,
            backtrack_factor: 0.5,
            max_halvings: 30,
            volume_tol: 1e-12,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau0 > 0.0 && self.tau0.is_finite()) {
            return Err(Error::InvalidParameter(format!("tau0 must be positive, got {}", self.tau0)));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "backtracking factor must lie in (0, 1), got {}",
                self.backtrack_factor
            )));
        }
        if !(self.tol_step >= 0.0 && self.volume_tol > 0.0) {
            return Err(Error::InvalidParameter("tolerances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub objective: f64,
    pub compliance: f64,
    /// `alpha * P(phi)`.
    pub penalty: f64,
    pub volume_fraction: f64,
    pub tau: f64,
    pub max_change: f64,
    /// CG iterations spent in this step, rejected trials included.
    pub cg_iterations: usize,
    /// `false` when backtracking ran out and a non-descent step was taken.
    pub descent: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub phi: DensityField,
    pub history: Vec<IterationRecord>,
    /// Evaluation at the initial density.
    pub initial: Evaluation,
    /// Evaluation at the returned density.
    pub last: Evaluation,
    pub converged: bool,
}

/// Euclidean projection of `psi` onto the box `[0, 1]` intersected with
/// the volume constraint: `clamp(psi + lambda, 0, 1)`.
///
/// Returns the projected field and the multiplier `lambda`.
pub fn project(psi: &[f64], volume_fraction: f64, grid: &Grid, volume_tol: f64) -> Result<(DensityField, f64)> {
    check_len(grid.num_elements(), psi.len())?;
    if !(volume_fraction > 0.0 && volume_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "volume fraction must lie in (0, 1), got {volume_fraction}"
        )));
    }
    if let Some(bad) = psi.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(format!("non-finite value at element {bad}")));
    }
    let n = psi.len() as f64;
    // Element areas are equal, so the constraint is on the plain sum.
    let target = volume_fraction * n;
    let tol = volume_tol * n;
    let sum_at = |lambda: f64| -> f64 { psi.iter().map(|&p| (p + lambda).clamp(0.0, 1.0)).sum() };

    let max = psi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = psi.iter().copied().fold(f64::INFINITY, f64::min);
    let (mut lo, mut hi) = (-1.0 - max, 1.0 - min);
    assert!(sum_at(lo) <= target && sum_at(hi) >= target, "projection bracket");

    let mut lambda = 0.5 * (lo + hi);
    for _ in 0..200 {
        lambda = 0.5 * (lo + hi);
        let s = sum_at(lambda);
        if (s - target).abs() <= tol || hi - lo <= f64::EPSILON * (1.0 + lambda.abs()) {
            break;
        }
        if s < target {
            lo = lambda;
        } else {
            hi = lambda;
        }
    }
    if let Some(exact) = refine_multiplier(psi, lambda, target) {
        if (sum_at(exact) - target).abs() <= (sum_at(lambda) - target).abs() {
            lambda = exact;
        }
    }

    let values = psi.iter().map(|&p| (p + lambda).clamp(0.0, 1.0)).collect();
    Ok((DensityField::new(values)?, lambda))
}

/// Solves for the multiplier exactly on the active set found by bisection.
fn refine_multiplier(psi: &[f64], lambda: f64, target: f64) -> Option<f64> {
    let mut free_sum = 0.0;
    let mut free_count = 0usize;
    let mut saturated = 0usize;
    for &p in psi {
        let v = p + lambda;
        if v >= 1.0 {
            saturated += 1;
        } else if v > 0.0 {
            free_sum += p;
            free_count += 1;
        }
    }
    if free_count == 0 {
        return None;
    }
    Some((target - saturated as f64 - free_sum) / free_count as f64)
}

/// Result of one accepted step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub phi: DensityField,
    pub eval: Evaluation,
    pub record: IterationRecord,
}

/// One projected gradient step from `(phi, eval)` starting with step `tau`.
pub fn step(
    problem: &TopologyProblem,
    phi: &DensityField,
    eval: &Evaluation,
    tau: f64,
    iter: usize,
    cfg: &OptimizerConfig,
) -> Result<StepOutcome> {
    let grid = problem.grid();
    let vbar = problem.params().volume_fraction;
    let grad = problem.gradient(phi, eval)?;
    let gmax = grad.iter().fold(0.0f64, |a, g| a.max(g.abs()));

    let unchanged = |tau: f64, cg: usize| StepOutcome {
        phi: phi.clone(),
        eval: eval.clone(),
        record: IterationRecord {
            iter,
            objective: eval.objective,
            compliance: eval.compliance,
            penalty: eval.penalty,
            volume_fraction: volume_fraction(phi),
            tau,
            max_change: 0.0,
            cg_iterations: cg,
            descent: false,
        },
    };
    if gmax == 0.0 {
        return Ok(unchanged(0.0, 0));
    }

    let mut tau = tau;
    let mut cg_total = 0;
    let mut fallback: Option<(DensityField, Evaluation, f64)> = None;
    for _ in 0..=cfg.max_halvings {
        let psi: Vec<f64> = phi
            .values()
            .iter()
            .zip(&grad)
            .map(|(p, g)| p - tau * g / gmax)
            .collect();
        let (candidate, _) = project(&psi, vbar, grid, cfg.volume_tol)?;
        if max_abs_diff(candidate.values(), phi.values()) == 0.0 {
            return Ok(unchanged(tau, cg_total));
        }
        let trial = problem.objective(&candidate, Some(&eval.state.u))?;
        cg_total += trial.state.cg_iterations;
        if trial.objective <= eval.objective {
            return Ok(accepted(phi, candidate, trial, tau, iter, cg_total, true));
        }
        fallback = Some((candidate, trial, tau));
        tau *= cfg.backtrack_factor;
    }
    let (candidate, trial, tau) = fallback.expect("at least one trial");
    Ok(accepted(phi, candidate, trial, tau, iter, cg_total, false))
}

fn accepted(
    prev: &DensityField,
    phi: DensityField,
    eval: Evaluation,
    tau: f64,
    iter: usize,
    cg_iterations: usize,
    descent: bool,
) -> StepOutcome {
    let record = IterationRecord {
        iter,
        objective: eval.objective,
        compliance: eval.compliance,
        penalty: eval.penalty,
        volume_fraction: volume_fraction(&phi),
        tau,
        max_change: max_abs_diff(phi.values(), prev.values()),
        cg_iterations,
        descent: descent && eval.objective < f64::INFINITY,
    };
    StepOutcome { phi, eval, record }
}

/// Runs the flow from `initial` (uniform `vbar` when `None`).
pub fn run(problem: &TopologyProblem, initial: Option<DensityField>, cfg: &OptimizerConfig) -> Result<RunOutcome> {
    run_observed(problem, initial, cfg, |_, _| {})
}

/// [`run`] with a callback receiving the record and field of every accepted
/// step.
pub fn run_observed(
    problem: &TopologyProblem,
    initial: Option<DensityField>,
    cfg: &OptimizerConfig,
    mut observe: impl FnMut(&IterationRecord, &DensityField),
) -> Result<RunOutcome> {
    cfg.validate()?;
    let grid = problem.grid();
    let vbar = problem.params().volume_fraction;
    let phi0 = match initial {
        Some(phi) => {
            check_len(grid.num_elements(), phi.len())?;
            phi
        }
        None => project(&vec![vbar; grid.num_elements()], vbar, grid, cfg.volume_tol)?.0,
    };
    let initial_eval = problem.objective(&phi0, None)?;

    let mut phi = phi0;
    let mut eval = initial_eval.clone();
    let mut history = Vec::new();
    let mut converged = false;
    let mut tau = cfg.tau0;
    for iter in 1..=cfg.max_iters {
        let out = step(problem, &phi, &eval, tau, iter, cfg)?;
        observe(&out.record, &out.phi);
        let done = out.record.max_change < cfg.tol_step;
        // Let the step recover after successful iterations.
        tau = if out.record.tau > 0.0 {
            (out.record.tau / cfg.backtrack_factor).min(cfg.tau0)
        } else {
            cfg.tau0
        };
        history.push(out.record);
        phi = out.phi;
        eval = out.eval;
        if done {
            converged = true;
            break;
        }
    }
    Ok(RunOutcome {
        phi,
        history,
        initial: initial_eval,
        last: eval,
        converged,
    })
}

pub fn volume_fraction(phi: &DensityField) -> f64 {
    phi.values().iter().sum::<f64>() / phi.len() as f64
}

/// Fraction of elements whose value lies strictly between `lo` and `hi`.
pub fn gray_fraction(values: &[f64], lo: f64, hi: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().filter(|&&v| v > lo && v < hi).count() as f64 / values.len() as f64
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elasticity::SolverConfig;
    use crate::material::MaterialModel;
    use crate::mesh::cantilever_benchmark_bcs;
    use crate::sensitivity::MethodParameters;
    use proptest::prelude::*;

    fn grid() -> Grid {
        Grid::new(10, 4, 2.0, 1.0).unwrap()
    }

    #[test]
    fn feasible_field_is_a_fixed_point() {
        let g = grid();
        let psi: Vec<f64> = (0..40).map(|e| 0.2 + 0.4 * ((e % 5) as f64 / 4.0)).collect();
        let vbar = psi.iter().sum::<f64>() / 40.0;
        let (phi, lambda) = project(&psi, vbar, &g, 1e-12).unwrap();
        assert!(lambda.abs() < 1e-14);
        for (a, b) in phi.values().iter().zip(&psi) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn constant_field_is_shifted() {
        let g = grid();
        let (phi, lambda) = project(&[0.9; 40], 0.4, &g, 1e-12).unwrap();
        assert!((lambda + 0.5).abs() < 1e-14);
        assert!(phi.values().iter().all(|v| (v - 0.4).abs() < 1e-14));
    }

    #[test]
    fn saturated_field_becomes_binary() {
        let g = grid();
        let psi: Vec<f64> = (0..40).map(|e| if e % 2 == 0 { 10.0 } else { -10.0 }).collect();
        let (phi, _) = project(&psi, 0.5, &g, 1e-12).unwrap();
        for (e, v) in phi.values().iter().enumerate() {
            assert_eq!(*v, if e % 2 == 0 { 1.0 } else { 0.0 });
        }
        assert_eq!(volume_fraction(&phi), 0.5);
    }

    #[test]
    fn infeasible_target_is_rejected() {
        let g = grid();
        assert!(project(&[0.5; 40], 1.0, &g, 1e-12).is_err());
        assert!(project(&[0.5; 40], 0.0, &g, 1e-12).is_err());
        let mut psi = vec![0.5; 40];
        psi[3] = f64::NAN;
        assert!(project(&psi, 0.4, &g, 1e-12).is_err());
    }

    proptest! {
        #[test]
        fn projection_is_exact_and_idempotent(
            psi in prop::collection::vec(-3.0f64..3.0, 40),
            vbar in 0.01f64..0.99,
        ) {
            let g = grid();
            let (phi, _) = project(&psi, vbar, &g, 1e-12).unwrap();
            prop_assert!(phi.values().iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert!((volume_fraction(&phi) - vbar).abs() <= 1e-10);
            let (again, _) = project(phi.values(), vbar, &g, 1e-12).unwrap();
            prop_assert!(max_abs_diff(again.values(), phi.values()) <= 1e-12);
        }
    }

    fn small_problem(params: MethodParameters) -> TopologyProblem {
        let g = Grid::new(20, 10, 2.0, 1.0).unwrap();
        let bcs = cantilever_benchmark_bcs(&g);
        TopologyProblem::new(g, bcs, MaterialModel::benchmark(), params, SolverConfig::default()).unwrap()
    }

    #[test]
    fn zero_iterations_return_initial_field() {
        let p = small_problem(MethodParameters::benchmark());
        let cfg = OptimizerConfig {
            max_iters: 0,
            ..Default::default()
        };
        let out = run(&p, None, &cfg).unwrap();
        assert!(out.history.is_empty());
        assert!(out.phi.values().iter().all(|v| (v - 0.4).abs() < 1e-15));
        assert!(!out.converged);
    }

    #[test]
    fn first_step_from_uniform_field_descends() {
        let p = small_problem(MethodParameters::benchmark());
        let phi = DensityField::uniform(p.grid(), 0.4).unwrap();
        let ev = p.objective(&phi, None).unwrap();
        let out = step(&p, &phi, &ev, 0.1, 1, &OptimizerConfig::default()).unwrap();
        assert!(out.record.descent);
        assert!(out.record.objective < ev.objective);
        assert!((out.record.volume_fraction - 0.4).abs() <= 1e-10);
    }

    #[test]
    fn stationary_field_is_kept() {
        // Pure phase-field energy at a uniform 0.5 density with zero load has
        // a vanishing gradient.
        let g = Grid::new(6, 3, 2.0, 1.0).unwrap();
        let mut bcs = crate::mesh::BoundaryConditions::empty(&g);
        bcs.clamp_node(0);
        let params = MethodParameters {
            volume_fraction: 0.5,
            ..MethodParameters::coupled(1.0, 0.05, 1.0, 0.0, 0.5)
        };
        let p = TopologyProblem::new(g.clone(), bcs, MaterialModel::benchmark(), params, SolverConfig::default())
            .unwrap();
        let phi = DensityField::uniform(&g, 0.5).unwrap();
        let ev = p.objective(&phi, None).unwrap();
        let out = step(&p, &phi, &ev, 0.1, 1, &OptimizerConfig::default()).unwrap();
        assert_eq!(out.phi, phi);
        assert_eq!(out.record.max_change, 0.0);
    }

    #[test]
    fn short_run_keeps_constraints_and_is_deterministic() {
        let p = small_problem(MethodParameters::coupled(0.5, 0.05, 1.0, 0.2, 0.4));
        let cfg = OptimizerConfig {
            max_iters: 15,
            ..Default::default()
        };
        let a = run(&p, None, &cfg).unwrap();
        let b = run(&p, None, &cfg).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.phi, b.phi);
        for r in &a.history {
            assert!((r.volume_fraction - 0.4).abs() <= 1e-10);
        }
        assert!(a.history.iter().all(|r| r.descent));
        assert!(a.last.objective < a.initial.objective);
    }

    #[test]
    fn gray_fraction_counts_open_interval() {
        assert_eq!(gray_fraction(&[0.0, 0.05, 0.5, 0.95, 1.0], 0.05, 0.95), 0.2);
        assert_eq!(gray_fraction(&[], 0.05, 0.95), 0.0);
    }
}
