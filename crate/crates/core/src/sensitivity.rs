//! Objective `J(phi) = C(phi, S(phi)) + alpha * P(phi)` and its gradient.
//!
//! Compliance is self-adjoint: differentiating the equilibrium equation and
//! testing it with the state itself eliminates the state derivative, so
//!
//! ```text
//! dJ/dphi_e = 2 f_e . u_e A - [(alpha I + beta K^T) w]_e + alpha dP/dphi_e
//! w_e       = scale'(m_e) u_e^T K0 u_e
//! ```
//!
//! and no adjoint solve is needed. The same quantity is twice the design
//! variation of the four-field Lagrangian
//!
//! ```text
//! L(phi, u, e, s) = C(phi, u) + alpha/2 P(phi) - 1/2 int C(m) e:e + int s:(e - eps(u))
//! ```
//!
//! evaluated at a consistent state; [`TopologyProblem::lagrangian_residuals`]
//! exposes that route for cross-checking.

use nalgebra::Vector3;

use crate::elasticity::{dot, BlendedField, DensityField, ElasticProblem, ElasticState, SolverConfig};
use crate::error::{check_len, Error, Result};
use crate::filter::FilterOperator;
use crate::material::MaterialModel;
use crate::mesh::{BoundaryConditions, Grid};
use crate::phasefield::{eval_p_gamma, grad_p_gamma, PhaseFieldParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodParameters {
    /// Weight of the raw density in the blend and of the phase-field term.
    pub alpha: f64,
    /// Weight of the filtered density in the blend.
    pub beta: f64,
    pub phase: PhaseFieldParams,
    /// Filter radius (m).
    pub filter_radius: f64,
    /// Target volume fraction.
    pub volume_fraction: f64,
}

impl MethodParameters {
    /// Parameters with the reference coupling `beta = 1 - alpha`.
    pub fn coupled(alpha: f64, gamma: f64, eta: f64, filter_radius: f64, volume_fraction: f64) -> Self {
        Self {
            alpha,
            beta: 1.0 - alpha,
            phase: PhaseFieldParams { gamma, eta },
            filter_radius,
            volume_fraction,
        }
    }

    /// alpha = beta = 0.5, gamma = 0.01 m, eta = 1 N/m, r_f = 0.1 m, 40% volume.
    pub fn benchmark() -> Self {
        Self::coupled(0.5, 0.01, 1.0, 0.1, 0.4)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0 && self.alpha + self.beta > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "need alpha, beta >= 0 with alpha + beta > 0, got alpha = {}, beta = {}",
                self.alpha, self.beta
            )));
        }
        if !(self.volume_fraction > 0.0 && self.volume_fraction < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "volume fraction must lie in (0, 1), got {}",
                self.volume_fraction
            )));
        }
        if !(self.filter_radius >= 0.0 && self.filter_radius.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "filter radius must be non-negative, got {}",
                self.filter_radius
            )));
        }
        self.phase.validate()?;
        if self.alpha > 0.0 && self.phase.gamma <= 0.0 {
            return Err(Error::InvalidParameter(
                "gamma must be positive when the phase-field term is active".into(),
            ));
        }
        Ok(())
    }
}

/// Objective value at one density, with the state that produced it.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub objective: f64,
    pub compliance: f64,
    /// `alpha * P(phi)`.
    pub penalty: f64,
    pub blended: BlendedField,
    pub state: ElasticState,
}

/// Gradient split into its compliance and phase-field contributions.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientParts {
    pub compliance: Vec<f64>,
    /// `alpha * dP/dphi`.
    pub penalty: Vec<f64>,
}

impl GradientParts {
    pub fn total(&self) -> Vec<f64> {
        self.compliance.iter().zip(&self.penalty).map(|(a, b)| a + b).collect()
    }
}

/// Stationarity residuals of the four-field Lagrangian.
///
/// Residual norms are relative to the size of the corresponding reference
/// quantity (loads, stresses, strains) and fall back to absolute norms when
/// that reference vanishes.
#[derive(Debug, Clone, PartialEq)]
pub struct LagrangianResiduals {
    /// Equilibrium: `F - int B^T sigma` on the free dofs.
    pub equilibrium: f64,
    /// Constitutive law: `sigma - C(m) e`.
    pub constitutive: f64,
    /// Compatibility: `e - eps(u)`.
    pub compatibility: f64,
    /// Design variation of the Lagrangian per element.
    pub design: Vec<f64>,
}

/// One finite-difference comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheck {
    pub element: usize,
    pub analytic: f64,
    pub finite_difference: f64,
}

impl GradientCheck {
    pub fn relative_error(&self) -> f64 {
        let scale = self.analytic.abs().max(self.finite_difference.abs());
        if scale == 0.0 {
            0.0
        } else {
            (self.analytic - self.finite_difference).abs() / scale
        }
    }
}

/// Everything needed to evaluate `J` and its gradient.
#[derive(Debug, Clone)]
pub struct TopologyProblem {
    elastic: ElasticProblem,
    filter: FilterOperator,
    params: MethodParameters,
    solver: SolverConfig,
}

impl TopologyProblem {
    pub fn new(
        grid: Grid,
        bcs: BoundaryConditions,
        material: MaterialModel,
        params: MethodParameters,
        solver: SolverConfig,
    ) -> Result<Self> {
        params.validate()?;
        let filter = FilterOperator::build(&grid, params.filter_radius)?;
        let elastic = ElasticProblem::new(grid, bcs, material)?;
        Ok(Self {
            elastic,
            filter,
            params,
            solver,
        })
    }

    pub fn grid(&self) -> &Grid {
        self.elastic.grid()
    }

    pub fn elastic(&self) -> &ElasticProblem {
        &self.elastic
    }

    pub fn filter(&self) -> &FilterOperator {
        &self.filter
    }

    pub fn params(&self) -> &MethodParameters {
        &self.params
    }

    pub fn solver(&self) -> &SolverConfig {
        &self.solver
    }

    pub fn with_solver(&self, solver: SolverConfig) -> Self {
        Self {
            solver,
            ..self.clone()
        }
    }

    pub fn blend(&self, phi: &DensityField) -> Result<BlendedField> {
        BlendedField::new(phi, &self.filter, self.params.alpha, self.params.beta)
    }

    /// `alpha * P(phi)`; zero without evaluating `P` when `alpha = 0`.
    pub fn penalty(&self, phi: &DensityField) -> Result<f64> {
        if self.params.alpha == 0.0 {
            check_len(self.grid().num_elements(), phi.len())?;
            return Ok(0.0);
        }
        Ok(self.params.alpha * eval_p_gamma(self.grid(), phi.values(), &self.params.phase)?)
    }

    pub fn objective(&self, phi: &DensityField, warm: Option<&[f64]>) -> Result<Evaluation> {
        let blended = self.blend(phi)?;
        let state = self.elastic.solve(phi, &blended, &self.solver, warm)?;
        let penalty = self.penalty(phi)?;
        Ok(Evaluation {
            objective: state.compliance + penalty,
            compliance: state.compliance,
            penalty,
            blended,
            state,
        })
    }

    pub fn gradient(&self, phi: &DensityField, eval: &Evaluation) -> Result<Vec<f64>> {
        Ok(self.gradient_parts(phi, eval)?.total())
    }

    pub fn gradient_parts(&self, phi: &DensityField, eval: &Evaluation) -> Result<GradientParts> {
        if eval.state.density_fingerprint != phi.fingerprint() {
            return Err(Error::StaleState);
        }
        let energies = self.elastic.element_energies(&eval.state.u);
        let body = self.body_force_work(&eval.state.u);
        let compliance = self.compliance_sensitivity(&eval.blended, &energies, &body, 1.0)?;
        let penalty = self.penalty_gradient(phi)?;
        Ok(GradientParts { compliance, penalty })
    }

    fn penalty_gradient(&self, phi: &DensityField) -> Result<Vec<f64>> {
        let alpha = self.params.alpha;
        if alpha == 0.0 {
            return Ok(vec![0.0; phi.len()]);
        }
        let mut g = grad_p_gamma(self.grid(), phi.values(), &self.params.phase)?;
        g.iter_mut().for_each(|v| *v *= alpha);
        Ok(g)
    }

    /// `int_e f . u`, the work of a unit density in element `e`.
    fn body_force_work(&self, u: &[f64]) -> Option<Vec<f64>> {
        let bcs = self.elastic.bcs();
        if !bcs.has_body_force() {
            return None;
        }
        let grid = self.grid();
        let quarter = 0.25 * grid.element_area();
        Some(
            (0..grid.num_elements())
                .map(|e| {
                    let f = bcs.body_force[e];
                    grid.element_nodes(e)
                        .iter()
                        .map(|&n| quarter * (f[0] * u[2 * n] + f[1] * u[2 * n + 1]))
                        .sum()
                })
                .collect(),
        )
    }

    /// `weight * (2 body - (alpha I + beta K^T) w)` with
    /// `w_e = scale'(m_e) * energies_e`, zeroed where the blend is clamped.
    fn compliance_sensitivity(
        &self,
        blended: &BlendedField,
        energies: &[f64],
        body: &Option<Vec<f64>>,
        weight: f64,
    ) -> Result<Vec<f64>> {
        let material = self.elastic.material();
        let (alpha, beta) = (self.params.alpha, self.params.beta);
        let w: Vec<f64> = energies
            .iter()
            .enumerate()
            .map(|(e, &en)| {
                if blended.is_saturated(e) {
                    0.0
                } else {
                    material.d_scale(blended.values()[e]) * en
                }
            })
            .collect();
        let filtered = if beta != 0.0 {
            Some(self.filter.apply_adjoint(&w)?)
        } else {
            None
        };
        Ok((0..w.len())
            .map(|e| {
                let mut stiffness = alpha * w[e];
                if let Some(kt) = &filtered {
                    stiffness += beta * kt[e];
                }
                let direct = body.as_ref().map_or(0.0, |b| 2.0 * b[e]);
                weight * (direct - stiffness)
            })
            .collect())
    }

    /// Residuals of the four Lagrangian variations at `(phi, u, e, sigma)`.
    pub fn lagrangian_residuals(
        &self,
        phi: &DensityField,
        u: &[f64],
        strain: &[[Vector3<f64>; 4]],
        stress: &[[Vector3<f64>; 4]],
    ) -> Result<LagrangianResiduals> {
        let grid = self.grid();
        let n_el = grid.num_elements();
        check_len(n_el, phi.len())?;
        check_len(grid.num_dofs(), u.len())?;
        check_len(n_el, strain.len())?;
        check_len(n_el, stress.len())?;

        let blended = self.blend(phi)?;
        let material = self.elastic.material();
        let c1 = material.solid_tensor();
        let gauss_b = self.elastic.gauss_strain_displacement();
        let gw = 0.25 * grid.element_area();

        let mut internal = vec![0.0; grid.num_dofs()];
        let (mut const_res, mut const_ref) = (0.0, 0.0);
        let (mut compat_res, mut compat_ref) = (0.0, 0.0);
        let mut energies = Vec::with_capacity(n_el);
        for e in 0..n_el {
            let c = c1 * material.scale(blended.values()[e]);
            let ue = self.elastic.element_displacement(u, e);
            let dofs = grid.element_dofs(e);
            let mut en = 0.0;
            for g in 0..4 {
                let (eps, sig) = (strain[e][g], stress[e][g]);
                let fint = gauss_b[g].transpose() * sig * gw;
                for (a, &d) in dofs.iter().enumerate() {
                    internal[d] += fint[a];
                }
                const_res += (sig - c * eps).norm_squared() * gw;
                const_ref += sig.norm_squared() * gw;
                let compat = gauss_b[g] * ue;
                compat_res += (eps - compat).norm_squared() * gw;
                compat_ref += compat.norm_squared() * gw;
                en += eps.dot(&(c1 * eps)) * gw;
            }
            energies.push(en);
        }

        let loads = self.elastic.load_vector(phi)?;
        let free = self.elastic.free_mask();
        let (mut eq_res, mut eq_ref) = (0.0, 0.0);
        for k in 0..loads.len() {
            if free[k] {
                eq_res += (loads[k] - internal[k]).powi(2);
                eq_ref += loads[k].powi(2);
            }
        }

        let body = self.body_force_work(u);
        let compliance_part = self.compliance_sensitivity(&blended, &energies, &body, 0.5)?;
        let penalty_part = self.penalty_gradient(phi)?;
        let design = compliance_part
            .iter()
            .zip(&penalty_part)
            .map(|(c, p)| c + 0.5 * p)
            .collect();

        Ok(LagrangianResiduals {
            equilibrium: relative(eq_res, eq_ref),
            constitutive: relative(const_res, const_ref),
            compatibility: relative(compat_res, compat_ref),
            design,
        })
    }

    /// Compares the analytic gradient against central differences of `J`
    /// on the given elements, with the state solver tolerance tightened to
    /// at most `1e-12`.
    pub fn verify_gradient(&self, phi: &DensityField, elements: &[usize], h: f64) -> Result<Vec<GradientCheck>> {
        let tight = self.with_solver(SolverConfig {
            rel_tol: self.solver.rel_tol.min(1e-12),
            ..self.solver
        });
        let base = tight.objective(phi, None)?;
        let grad = tight.gradient(phi, &base)?;
        let warm = Some(base.state.u.as_slice());
        elements
            .iter()
            .map(|&e| {
                if e >= phi.len() {
                    return Err(Error::LengthMismatch {
                        expected: phi.len(),
                        found: e + 1,
                    });
                }
                let shifted = |delta: f64| -> Result<f64> {
                    let mut v = phi.values().to_vec();
                    v[e] += delta;
                    Ok(tight.objective(&DensityField::new(v)?, warm)?.objective)
                };
                let p = phi.values()[e];
                let fd = if p - h >= 0.0 && p + h <= 1.0 {
                    (shifted(h)? - shifted(-h)?) / (2.0 * h)
                } else if p + h <= 1.0 {
                    (shifted(h)? - base.objective) / h
                } else {
                    (base.objective - shifted(-h)?) / h
                };
                Ok(GradientCheck {
                    element: e,
                    analytic: grad[e],
                    finite_difference: fd,
                })
            })
            .collect()
    }
}

fn relative(residual_sq: f64, reference_sq: f64) -> f64 {
    if reference_sq > 0.0 {
        (residual_sq / reference_sq).sqrt()
    } else {
        residual_sq.sqrt()
    }
}

/// `||a - b|| / ||a||` (or the absolute norm when `a = 0`).
pub fn relative_difference(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    relative(diff, dot(a, a))
}
