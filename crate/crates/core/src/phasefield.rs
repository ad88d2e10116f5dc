//! Phase-field (Modica–Mortola) energy of an element-wise density and its
//! sharp-interface perimeter.
//!
//! Element densities carry no gradient of their own, so the Dirichlet term
//! uses two-point differences between the centroids of edge-adjacent
//! elements with zero flux across the domain boundary:
//!
//! ```text
//! P(phi) = eta * [ gamma/2 * sum_pairs A ((phi_i - phi_j) / h)^2
//!                + 1/gamma * sum_e A phi_e^2 (1 - phi_e)^2 ]
//! ```
//!
//! where `A` is the element area and `h` the centroid spacing along the
//! pair's axis.

use std::f64::consts::SQRT_2;

use crate::error::{check_len, Error, Result};
use crate::mesh::Grid;

/// Constant multiplying `eta * Per` in the sharp-interface functional.
pub const PERIMETER_CONSTANT: f64 = SQRT_2 / 3.0;

/// Tolerance for treating a density as exactly 0 or 1 in [`eval_p0`].
pub const BINARY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseFieldParams {
    /// Interface width (m). Zero selects the perimeter functional.
    pub gamma: f64,
    /// Weight (N/m).
    pub eta: f64,
}

impl PhaseFieldParams {
    pub fn new(gamma: f64, eta: f64) -> Result<Self> {
        let p = Self { gamma, eta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidParameter(format!("eta must be positive, got {}", self.eta)));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "gamma must be non-negative, got {}",
                self.gamma
            )));
        }
        Ok(())
    }

    fn require_diffuse(&self) -> Result<()> {
        if self.gamma > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "phase-field energy needs gamma > 0, got {}",
                self.gamma
            )))
        }
    }
}

fn double_well(p: f64) -> f64 {
    let s = p * (1.0 - p);
    s * s
}

fn double_well_derivative(p: f64) -> f64 {
    2.0 * p * (1.0 - p) * (1.0 - 2.0 * p)
}

/// Discrete phase-field energy (N·m per unit thickness).
pub fn eval_p_gamma(grid: &Grid, phi: &[f64], params: &PhaseFieldParams) -> Result<f64> {
    params.require_diffuse()?;
    check_len(grid.num_elements(), phi.len())?;
    let area = grid.element_area();
    let wx = area / (grid.hx() * grid.hx());
    let wy = area / (grid.hy() * grid.hy());
    let (nx, ny) = (grid.nx(), grid.ny());

    let mut dirichlet = 0.0;
    let mut well = 0.0;
    for j in 0..ny {
        for i in 0..nx {
            let e = j * nx + i;
            if i + 1 < nx {
                let d = phi[e + 1] - phi[e];
                dirichlet += wx * d * d;
            }
            if j + 1 < ny {
                let d = phi[e + nx] - phi[e];
                dirichlet += wy * d * d;
            }
            well += area * double_well(phi[e]);
        }
    }
    Ok(params.eta * (0.5 * params.gamma * dirichlet + well / params.gamma))
}

/// Gradient of [`eval_p_gamma`] with respect to each element density.
pub fn grad_p_gamma(grid: &Grid, phi: &[f64], params: &PhaseFieldParams) -> Result<Vec<f64>> {
    params.require_diffuse()?;
    check_len(grid.num_elements(), phi.len())?;
    let area = grid.element_area();
    let wx = area / (grid.hx() * grid.hx());
    let wy = area / (grid.hy() * grid.hy());
    let (nx, ny) = (grid.nx(), grid.ny());
    let (gamma, eta) = (params.gamma, params.eta);

    let mut grad = vec![0.0; phi.len()];
    for j in 0..ny {
        for i in 0..nx {
            let e = j * nx + i;
            let p = phi[e];
            // minus the zero-flux discrete Laplacian, scaled by area
            let mut neg_lap = 0.0;
            if i > 0 {
                neg_lap += wx * (p - phi[e - 1]);
            }
            if i + 1 < nx {
                neg_lap += wx * (p - phi[e + 1]);
            }
            if j > 0 {
                neg_lap += wy * (p - phi[e - nx]);
            }
            if j + 1 < ny {
                neg_lap += wy * (p - phi[e + nx]);
            }
            grad[e] = eta * (gamma * neg_lap + area * double_well_derivative(p) / gamma);
        }
    }
    Ok(grad)
}

/// Sharp-interface energy `eta * sqrt(2)/3 * Per({phi = 1})` of a binary
/// field, with the perimeter measured along interior element edges.
pub fn eval_p0(grid: &Grid, phi: &[f64], params: &PhaseFieldParams) -> Result<f64> {
    check_len(grid.num_elements(), phi.len())?;
    let mut bits = Vec::with_capacity(phi.len());
    for (index, &value) in phi.iter().enumerate() {
        if (value - 1.0).abs() <= BINARY_TOL {
            bits.push(true);
        } else if value.abs() <= BINARY_TOL {
            bits.push(false);
        } else {
            return Err(Error::NonBinaryField { index, value });
        }
    }
    Ok(params.eta * PERIMETER_CONSTANT * discrete_perimeter(grid, &bits))
}

/// Total length of interior edges separating set from unset elements.
pub fn discrete_perimeter(grid: &Grid, inside: &[bool]) -> f64 {
    let (nx, ny) = (grid.nx(), grid.ny());
    let mut vertical = 0usize;
    let mut horizontal = 0usize;
    for j in 0..ny {
        for i in 0..nx {
            let e = j * nx + i;
            if i + 1 < nx && inside[e] != inside[e + 1] {
                vertical += 1;
            }
            if j + 1 < ny && inside[e] != inside[e + nx] {
                horizontal += 1;
            }
        }
    }
    vertical as f64 * grid.hy() + horizontal as f64 * grid.hx()
}

/// One-dimensional minimizing profile `1 / (1 + exp(-sqrt(2) (x - x0) / gamma))`
/// of the phase-field energy across a straight interface at `x0`.
pub fn optimal_profile(x: f64, x0: f64, gamma: f64) -> f64 {
    1.0 / (1.0 + (-SQRT_2 * (x - x0) / gamma).exp())
}

/// [`optimal_profile`] sampled at element centroids.
pub fn profile_field(grid: &Grid, x0: f64, gamma: f64) -> Vec<f64> {
    (0..grid.num_elements())
        .map(|e| optimal_profile(grid.centroid(e)[0], x0, gamma))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(gamma: f64) -> PhaseFieldParams {
        PhaseFieldParams::new(gamma, 1.0).unwrap()
    }

    #[test]
    fn pure_phases_have_zero_energy() {
        let g = Grid::new(10, 5, 2.0, 1.0).unwrap();
        for v in [0.0, 1.0] {
            assert_eq!(eval_p_gamma(&g, &vec![v; 50], &params(0.01)).unwrap(), 0.0);
            assert!(grad_p_gamma(&g, &vec![v; 50], &params(0.01)).unwrap().iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn half_density_energy() {
        let g = Grid::new(100, 50, 2.0, 1.0).unwrap();
        let p = eval_p_gamma(&g, &vec![0.5; 5000], &params(0.01)).unwrap();
        assert_relative_eq!(p, 12.5, max_relative = 1e-12);
        assert!(grad_p_gamma(&g, &vec![0.5; 5000], &params(0.01)).unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn gamma_must_be_positive_for_diffuse_energy() {
        let g = Grid::new(2, 2, 1.0, 1.0).unwrap();
        assert!(eval_p_gamma(&g, &[0.5; 4], &PhaseFieldParams { gamma: 0.0, eta: 1.0 }).is_err());
        assert!(grad_p_gamma(&g, &[0.5; 4], &PhaseFieldParams { gamma: -1.0, eta: 1.0 }).is_err());
        assert!(PhaseFieldParams::new(0.1, 0.0).is_err());
    }

    #[test]
    fn gradient_matches_central_differences() {
        let g = Grid::new(9, 7, 1.8, 1.0).unwrap();
        let prm = PhaseFieldParams::new(0.05, 1.7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let phi: Vec<f64> = (0..g.num_elements()).map(|_| rng.gen()).collect();
        let grad = grad_p_gamma(&g, &phi, &prm).unwrap();
        let h = 1e-6;
        for _ in 0..20 {
            let dir: Vec<f64> = (0..phi.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let shifted = |s: f64| -> Vec<f64> { phi.iter().zip(&dir).map(|(p, d)| p + s * d).collect() };
            let fd = (eval_p_gamma(&g, &shifted(h), &prm).unwrap()
                - eval_p_gamma(&g, &shifted(-h), &prm).unwrap())
                / (2.0 * h);
            let an: f64 = grad.iter().zip(&dir).map(|(a, b)| a * b).sum();
            assert!((an - fd).abs() <= 1e-6 * an.abs().max(1e-12), "{an} vs {fd}");
        }
    }

    #[test]
    fn half_split_perimeter() {
        let g = Grid::new(20, 10, 2.0, 1.0).unwrap();
        let phi: Vec<f64> = (0..200).map(|e| if g.element_ij(e).0 < 10 { 1.0 } else { 0.0 }).collect();
        let p0 = eval_p0(&g, &phi, &params(0.0)).unwrap();
        assert_relative_eq!(p0, SQRT_2 / 3.0, max_relative = 1e-14);
        assert_relative_eq!(p0, 0.4714, max_relative = 1e-4);
    }

    #[test]
    fn solid_domain_has_no_perimeter() {
        let g = Grid::new(5, 5, 1.0, 1.0).unwrap();
        assert_eq!(eval_p0(&g, &[1.0; 25], &params(0.0)).unwrap(), 0.0);
        assert_eq!(eval_p0(&g, &[0.0; 25], &params(0.0)).unwrap(), 0.0);
    }

    #[test]
    fn single_element_perimeter() {
        let g = Grid::new(5, 5, 1.0, 1.0).unwrap();
        let mut phi = vec![0.0; 25];
        phi[g.element_id(2, 2)] = 1.0;
        let p0 = eval_p0(&g, &phi, &params(0.0)).unwrap();
        assert_relative_eq!(p0, PERIMETER_CONSTANT * 4.0 * 0.2, max_relative = 1e-14);
    }

    #[test]
    fn non_binary_field_is_rejected() {
        let g = Grid::new(2, 1, 1.0, 1.0).unwrap();
        assert!(matches!(
            eval_p0(&g, &[1.0, 0.3], &params(0.0)),
            Err(Error::NonBinaryField { index: 1, .. })
        ));
        assert!(eval_p0(&g, &[1.0 - 1e-8, 1e-8], &params(0.0)).is_ok());
    }

    #[test]
    fn perimeter_is_translation_invariant() {
        let g = Grid::new(16, 12, 1.6, 1.2).unwrap();
        let pattern = |si: usize, sj: usize| -> Vec<f64> {
            (0..g.num_elements())
                .map(|e| {
                    let (i, j) = g.element_ij(e);
                    let inside = (3 + si..8 + si).contains(&i) && (2 + sj..5 + sj).contains(&j)
                        || (i == 4 + si && j == 6 + sj);
                    f64::from(u8::from(inside))
                })
                .collect()
        };
        let base = eval_p0(&g, &pattern(0, 0), &params(0.0)).unwrap();
        for (si, sj) in [(1, 0), (0, 3), (5, 4)] {
            let shifted = eval_p0(&g, &pattern(si, sj), &params(0.0)).unwrap();
            assert_relative_eq!(shifted, base, max_relative = 1e-14);
        }
    }
}
