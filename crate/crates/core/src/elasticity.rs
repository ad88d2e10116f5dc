//! Bilinear quadrilateral discretization of plane-stress equilibrium.
//!
//! Densities are constant per element and displacements are bilinear per
//! element. Because every element is the same rectangle and the stiffness
//! depends on density through one scalar, the global operator is
//! `sum_e scale(m_e) * K0` for a single reference matrix `K0`; it is applied
//! matrix-free. Dirichlet dofs are eliminated (held at zero) rather than
//! penalized.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};
use rayon::prelude::*;

use crate::error::{check_len, Error, Result};
use crate::filter::FilterOperator;
use crate::material::MaterialModel;
use crate::mesh::{BoundaryConditions, Grid};

pub type ElementMatrix = SMatrix<f64, 8, 8>;
pub type StrainDisplacement = SMatrix<f64, 3, 8>;
pub type ElementVector = SVector<f64, 8>;

const GAUSS: f64 = 0.577_350_269_189_625_8; // 1/sqrt(3)

/// Gauss points in natural coordinates, ordered like the element corners.
pub const GAUSS_POINTS: [[f64; 2]; 4] = [[-GAUSS, -GAUSS], [GAUSS, -GAUSS], [GAUSS, GAUSS], [-GAUSS, GAUSS]];

const CORNERS: [[f64; 2]; 4] = [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]];

/// Element-wise design density in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField(Vec<f64>);

/// Strain or stress at the four Gauss points of an element.
type GaussValues = [Vector3<f64>; 4];

impl DensityField {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::OutOfRange { index, value });
        }
        Ok(Self(values))
    }

    pub fn for_grid(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        check_len(grid.num_elements(), values.len())?;
        Self::new(values)
    }

    pub fn uniform(grid: &Grid, value: f64) -> Result<Self> {
        Self::new(vec![value; grid.num_elements()])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Bitwise fingerprint used to detect stale states.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for v in &self.0 {
            v.to_bits().hash(&mut h);
        }
        h.finish()
    }
}

/// `m = alpha * phi + beta * K phi`, clamped to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlendedField {
    values: Vec<f64>,
    /// Elements where the raw blend left `[0, 1]` and was clamped.
    saturated: Vec<bool>,
    pub alpha: f64,
    pub beta: f64,
}

impl BlendedField {
    pub fn new(phi: &DensityField, filter: &FilterOperator, alpha: f64, beta: f64) -> Result<Self> {
        let filtered = if beta != 0.0 {
            Some(filter.apply(phi.values())?)
        } else {
            check_len(filter.len(), phi.len())?;
            None
        };
        let mut values = Vec::with_capacity(phi.len());
        let mut saturated = Vec::with_capacity(phi.len());
        for (e, &p) in phi.values().iter().enumerate() {
            let raw = match &filtered {
                Some(k) => alpha * p + beta * k[e],
                None => alpha * p,
            };
            saturated.push(!(0.0..=1.0).contains(&raw));
            values.push(raw.clamp(0.0, 1.0));
        }
        Ok(Self {
            values,
            saturated,
            alpha,
            beta,
        })
    }

    /// A blend that is exactly the given values (used when no filter is
    /// involved, e.g. `m = 1` verification runs).
    pub fn from_values(values: Vec<f64>) -> Self {
        let saturated = values.iter().map(|v| !(0.0..=1.0).contains(v)).collect();
        Self {
            values: values.into_iter().map(|v| v.clamp(0.0, 1.0)).collect(),
            saturated,
            alpha: 1.0,
            beta: 0.0,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_saturated(&self, element: usize) -> bool {
        self.saturated[element]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Stop when `||b - A x|| <= rel_tol * ||b||` on the free dofs.
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            max_iter: 100_000,
        }
    }
}

/// Displacement, Gauss-point strains and stresses, and compliance for one
/// density field.
#[derive(Debug, Clone, PartialEq)]
pub struct ElasticState {
    pub u: Vec<f64>,
    /// Voigt strain `(exx, eyy, gxy)` per element per Gauss point.
    pub strain: Vec<[Vector3<f64>; 4]>,
    /// Voigt stress per element per Gauss point (Pa).
    pub stress: Vec<[Vector3<f64>; 4]>,
    /// External work of the loads on `u` (J per unit thickness).
    pub compliance: f64,
    pub cg_iterations: usize,
    pub residual: f64,
    pub density_fingerprint: u64,
}

/// Shape-function gradient matrix at natural coordinates `(xi, eta)` of a
/// `hx` by `hy` rectangle.
pub fn strain_displacement(hx: f64, hy: f64, xi: f64, eta: f64) -> StrainDisplacement {
    let mut b = StrainDisplacement::zeros();
    for (a, c) in CORNERS.iter().enumerate() {
        let dndx = 0.25 * c[0] * (1.0 + c[1] * eta) * 2.0 / hx;
        let dndy = 0.25 * c[1] * (1.0 + c[0] * xi) * 2.0 / hy;
        b[(0, 2 * a)] = dndx;
        b[(1, 2 * a + 1)] = dndy;
        b[(2, 2 * a)] = dndy;
        b[(2, 2 * a + 1)] = dndx;
    }
    b
}

/// Element stiffness of a `hx` by `hy` rectangle with constitutive matrix
/// `c`, integrated with 2 x 2 Gauss points (exact for rectangles).
pub fn reference_element_stiffness(hx: f64, hy: f64, c: &Matrix3<f64>) -> ElementMatrix {
    let weight = 0.25 * hx * hy;
    GAUSS_POINTS.iter().fold(ElementMatrix::zeros(), |k, gp| {
        let b = strain_displacement(hx, hy, gp[0], gp[1]);
        k + b.transpose() * c * b * weight
    })
}

/// Grid, loads, and material, with everything that does not depend on the
/// density precomputed.
#[derive(Debug, Clone)]
pub struct ElasticProblem {
    grid: Grid,
    bcs: BoundaryConditions,
    material: MaterialModel,
    ke: ElementMatrix,
    ke_rows: [[f64; 8]; 8],
    gauss_b: [StrainDisplacement; 4],
    traction: Vec<f64>,
    free: Vec<bool>,
}

impl ElasticProblem {
    pub fn new(grid: Grid, bcs: BoundaryConditions, material: MaterialModel) -> Result<Self> {
        material.validate()?;
        bcs.validate(&grid)?;
        let ke = reference_element_stiffness(grid.hx(), grid.hy(), &material.solid_tensor());
        let mut ke_rows = [[0.0; 8]; 8];
        for (r, row) in ke_rows.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = ke[(r, c)];
            }
        }
        let gauss_b = GAUSS_POINTS.map(|gp| strain_displacement(grid.hx(), grid.hy(), gp[0], gp[1]));
        let traction = bcs.traction_loads(&grid);
        let free = bcs.free_mask(&grid);
        Ok(Self {
            grid,
            bcs,
            material,
            ke,
            ke_rows,
            gauss_b,
            traction,
            free,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn bcs(&self) -> &BoundaryConditions {
        &self.bcs
    }

    pub fn material(&self) -> &MaterialModel {
        &self.material
    }

    /// Unit-scale element stiffness `K0` built from the solid tensor.
    pub fn reference_stiffness(&self) -> &ElementMatrix {
        &self.ke
    }

    pub fn gauss_strain_displacement(&self) -> &[StrainDisplacement; 4] {
        &self.gauss_b
    }

    pub fn free_mask(&self) -> &[bool] {
        &self.free
    }

    pub fn element_displacement(&self, u: &[f64], element: usize) -> ElementVector {
        let dofs = self.grid.element_dofs(element);
        ElementVector::from_fn(|r, _| u[dofs[r]])
    }

    /// Load vector: edge tractions plus `phi_e * f_e` distributed evenly to
    /// the element's corners.
    pub fn load_vector(&self, phi: &DensityField) -> Result<Vec<f64>> {
        check_len(self.grid.num_elements(), phi.len())?;
        let mut f = self.traction.clone();
        if self.bcs.has_body_force() {
            let quarter = 0.25 * self.grid.element_area();
            for (e, (&p, force)) in phi.values().iter().zip(&self.bcs.body_force).enumerate() {
                for node in self.grid.element_nodes(e) {
                    f[2 * node] += quarter * p * force[0];
                    f[2 * node + 1] += quarter * p * force[1];
                }
            }
        }
        Ok(f)
    }

    /// Per-element stiffness multipliers for a blended field.
    pub fn element_scales(&self, m: &BlendedField) -> Vec<f64> {
        m.values().iter().map(|&v| self.material.scale(v)).collect()
    }

    /// `y = A x` for the global stiffness with element multipliers `scales`,
    /// without constraint handling.
    pub fn apply_stiffness(&self, scales: &[f64], x: &[f64], y: &mut [f64]) {
        let nx = self.grid.nx();
        let ny = self.grid.ny();
        let row_len = 2 * (nx + 1);
        let ke = &self.ke_rows;
        y.par_chunks_mut(row_len).enumerate().for_each(|(j, yrow)| {
            for i in 0..=nx {
                let mut acc = [0.0; 2];
                // (element i offset, element j offset, local index of this node)
                let adjacent = [(-1isize, -1isize, 2usize), (0, -1, 3), (-1, 0, 1), (0, 0, 0)];
                for (di, dj, local) in adjacent {
                    let ei = i as isize + di;
                    let ej = j as isize + dj;
                    if ei < 0 || ej < 0 || ei >= nx as isize || ej >= ny as isize {
                        continue;
                    }
                    let e = self.grid.element_id(ei as usize, ej as usize);
                    let dofs = self.grid.element_dofs(e);
                    let s = scales[e];
                    for (c, a) in acc.iter_mut().enumerate() {
                        let krow = &ke[2 * local + c];
                        let mut sum = 0.0;
                        for b in 0..8 {
                            sum += krow[b] * x[dofs[b]];
                        }
                        *a += s * sum;
                    }
                }
                yrow[2 * i] = acc[0];
                yrow[2 * i + 1] = acc[1];
            }
        });
    }

    fn diagonal(&self, scales: &[f64]) -> Vec<f64> {
        let mut d = vec![0.0; self.grid.num_dofs()];
        for (e, &s) in scales.iter().enumerate() {
            for (a, &dof) in self.grid.element_dofs(e).iter().enumerate() {
                d[dof] += s * self.ke_rows[a][a];
            }
        }
        d
    }

    /// Solves the equilibrium problem for density `phi` and blend `m`.
    ///
    /// `warm` is an optional initial guess; its constrained entries are
    /// ignored.
    pub fn solve(
        &self,
        phi: &DensityField,
        m: &BlendedField,
        cfg: &SolverConfig,
        warm: Option<&[f64]>,
    ) -> Result<ElasticState> {
        let n_el = self.grid.num_elements();
        check_len(n_el, phi.len())?;
        check_len(n_el, m.values().len())?;
        let ndof = self.grid.num_dofs();
        let scales = self.element_scales(m);
        let rhs = self.load_vector(phi)?;
        let mut u = match warm {
            Some(w) => {
                check_len(ndof, w.len())?;
                w.to_vec()
            }
            None => vec![0.0; ndof],
        };
        let report = self.conjugate_gradients(&scales, &rhs, &mut u, cfg)?;
        let compliance = dot(&rhs, &u);
        let (strain, stress) = self.gauss_fields(&u, &scales);
        Ok(ElasticState {
            u,
            strain,
            stress,
            compliance,
            cg_iterations: report.0,
            residual: report.1,
            density_fingerprint: phi.fingerprint(),
        })
    }

    fn conjugate_gradients(
        &self,
        scales: &[f64],
        rhs: &[f64],
        x: &mut [f64],
        cfg: &SolverConfig,
    ) -> Result<(usize, f64)> {
        let n = rhs.len();
        let free = &self.free;
        let b: Vec<f64> = rhs.iter().zip(free).map(|(&v, &f)| if f { v } else { 0.0 }).collect();
        for (xi, &f) in x.iter_mut().zip(free) {
            if !f {
                *xi = 0.0;
            }
        }
        let b_norm = norm(&b);
        if b_norm == 0.0 {
            x.iter_mut().for_each(|v| *v = 0.0);
            return Ok((0, 0.0));
        }
        let inv_diag: Vec<f64> = self
            .diagonal(scales)
            .iter()
            .zip(free)
            .map(|(&d, &f)| if f && d > 0.0 { 1.0 / d } else { 0.0 })
            .collect();

        let mut r = vec![0.0; n];
        let mut z = vec![0.0; n];
        let mut p = vec![0.0; n];
        let mut q = vec![0.0; n];
        let target = cfg.rel_tol * b_norm;
        let mut iterations = 0;

        // Outer loop restarts from the true residual when the recursively
        // updated one has drifted below the target on its own.
        loop {
            self.apply_stiffness(scales, x, &mut q);
            for k in 0..n {
                r[k] = if free[k] { b[k] - q[k] } else { 0.0 };
            }
            let true_res = norm(&r);
            if true_res <= target {
                return Ok((iterations, true_res / b_norm));
            }
            if iterations >= cfg.max_iter {
                return Err(Error::SolverDiverged {
                    iterations,
                    residual: true_res / b_norm,
                });
            }
            for k in 0..n {
                z[k] = inv_diag[k] * r[k];
                p[k] = z[k];
            }
            let mut rz = dot(&r, &z);
            while iterations < cfg.max_iter {
                self.apply_stiffness(scales, &p, &mut q);
                for (qk, &f) in q.iter_mut().zip(free) {
                    if !f {
                        *qk = 0.0;
                    }
                }
                let pq = dot(&p, &q);
                if pq <= 0.0 {
                    return Err(Error::IllPosed(
                        "stiffness operator is not positive definite on the free dofs".into(),
                    ));
                }
                let step = rz / pq;
                for k in 0..n {
                    x[k] += step * p[k];
                    r[k] -= step * q[k];
                }
                iterations += 1;
                if norm(&r) <= target {
                    break;
                }
                for k in 0..n {
                    z[k] = inv_diag[k] * r[k];
                }
                let rz_next = dot(&r, &z);
                let beta = rz_next / rz;
                rz = rz_next;
                for k in 0..n {
                    p[k] = z[k] + beta * p[k];
                }
            }
        }
    }

    fn gauss_fields(&self, u: &[f64], scales: &[f64]) -> (Vec<GaussValues>, Vec<GaussValues>) {
        let c1 = self.material.solid_tensor();
        (0..self.grid.num_elements())
            .map(|e| {
                let ue = self.element_displacement(u, e);
                let strain = self.gauss_b.map(|b| b * ue);
                let stress = strain.map(|eps| c1 * eps * scales[e]);
                (strain, stress)
            })
            .unzip()
    }

    /// `u_e^T K0 u_e` for each element (twice the unit-scale strain energy).
    pub fn element_energies(&self, u: &[f64]) -> Vec<f64> {
        (0..self.grid.num_elements())
            .map(|e| {
                let ue = self.element_displacement(u, e);
                (ue.transpose() * self.ke * ue)[(0, 0)]
            })
            .collect()
    }

    /// Elastic energy `1/2 sum_e scale(m_e) u_e^T K0 u_e`.
    pub fn energy(&self, m: &BlendedField, u: &[f64]) -> f64 {
        self.element_energies(u)
            .iter()
            .zip(m.values())
            .map(|(w, &mv)| 0.5 * self.material.scale(mv) * w)
            .sum()
    }

    /// External work `<F(phi), u>`, i.e. the body-force work weighted by
    /// `phi` plus the traction work.
    pub fn compliance(&self, phi: &DensityField, u: &[f64]) -> Result<f64> {
        check_len(self.grid.num_dofs(), u.len())?;
        Ok(dot(&self.load_vector(phi)?, u))
    }

    /// Strain-energy density `1/2 sigma : e` per element (J/m³), averaged
    /// over the Gauss points.
    pub fn strain_energy_density(&self, state: &ElasticState) -> Vec<f64> {
        state
            .strain
            .iter()
            .zip(&state.stress)
            .map(|(eps, sig)| (0..4).map(|g| 0.125 * eps[g].dot(&sig[g])).sum())
            .collect()
    }
}

/// One-shot assembly and solve.
pub fn assemble_and_solve(
    grid: &Grid,
    bcs: &BoundaryConditions,
    material: &MaterialModel,
    phi: &DensityField,
    m: &BlendedField,
    cfg: &SolverConfig,
) -> Result<ElasticState> {
    ElasticProblem::new(grid.clone(), bcs.clone(), *material)?.solve(phi, m, cfg, None)
}

/// Compliance of `state` under the loads of `bcs` for density `phi`.
pub fn compliance(
    grid: &Grid,
    bcs: &BoundaryConditions,
    phi: &DensityField,
    state: &ElasticState,
) -> Result<f64> {
    check_len(grid.num_dofs(), state.u.len())?;
    check_len(grid.num_elements(), phi.len())?;
    let mut f = bcs.traction_loads(grid);
    let quarter = 0.25 * grid.element_area();
    for (e, (&p, force)) in phi.values().iter().zip(&bcs.body_force).enumerate() {
        for node in grid.element_nodes(e) {
            f[2 * node] += quarter * p * force[0];
            f[2 * node + 1] += quarter * p * force[1];
        }
    }
    Ok(dot(&f, &state.u))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
