//! Solver checks against closed-form elasticity results.

use fpf_core::elasticity::assemble_and_solve;
use fpf_core::mesh::{cantilever_benchmark_bcs, uniaxial_tension_bcs, BENCHMARK_TRACTION, LOADED_FRACTION};
use fpf_core::{BlendedField, DensityField, Grid, MaterialModel, SolverConfig};

fn solid(grid: &Grid) -> (DensityField, BlendedField) {
    let n = grid.num_elements();
    (DensityField::uniform(grid, 1.0).unwrap(), BlendedField::from_values(vec![1.0; n]))
}

#[test]
fn uniaxial_patch_reproduces_constant_stress() {
    let grid = Grid::new(8, 4, 2.0, 1.0).unwrap();
    let t = 3.0e6;
    let bcs = uniaxial_tension_bcs(&grid, t);
    let (phi, m) = solid(&grid);
    // Stress exact to 1e-10 needs a solve well below the default residual.
    let cfg = SolverConfig {
        rel_tol: 1e-13,
        ..SolverConfig::default()
    };
    let state = assemble_and_solve(&grid, &bcs, &MaterialModel::benchmark(), &phi, &m, &cfg).unwrap();
    for stresses in &state.stress {
        for s in stresses {
            assert!((s[0] - t).abs() <= 1e-10 * t, "sxx = {}", s[0]);
            assert!(s[1].abs() <= 1e-10 * t && s[2].abs() <= 1e-10 * t);
        }
    }
}

/// Tip deflection of a clamped Timoshenko beam of length `l`, unit depth and
/// thickness, under a uniform line load `q` on `[a0, l]`, integrated from
/// the point-load influence function with Simpson's rule.
fn timoshenko_tip_deflection(material: &MaterialModel, l: f64, a0: f64, q: f64) -> f64 {
    let e = material.youngs_modulus;
    let g = e / (2.0 * (1.0 + material.poisson_ratio));
    let (inertia, area, kappa) = (1.0 / 12.0, 1.0, 5.0 / 6.0);
    let influence = |a: f64| a * a * (3.0 * l - a) / (6.0 * e * inertia) + a / (kappa * g * area);
    let n = 200;
    let h = (l - a0) / n as f64;
    let mut sum = influence(a0) + influence(l);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * influence(a0 + k as f64 * h);
    }
    q * sum * h / 3.0
}

#[test]
fn cantilever_tip_deflection_matches_beam_theory() {
    let grid = Grid::new(200, 100, 2.0, 1.0).unwrap();
    let material = MaterialModel::benchmark();
    let bcs = cantilever_benchmark_bcs(&grid);
    let (phi, m) = solid(&grid);
    let state = assemble_and_solve(&grid, &bcs, &material, &phi, &m, &SolverConfig::default()).unwrap();
    let tip: f64 = (0..=grid.ny())
        .map(|j| -state.u[2 * grid.node_id(grid.nx(), j) + 1])
        .sum::<f64>()
        / (grid.ny() + 1) as f64;
    let oracle = timoshenko_tip_deflection(&material, 2.0, 2.0 * (1.0 - LOADED_FRACTION), BENCHMARK_TRACTION);
    let rel = (tip - oracle).abs() / oracle;
    eprintln!("tip {tip:.6e} oracle {oracle:.6e} rel {rel:.4}");
    assert!(rel < 0.10);
}

#[test]
fn timoshenko_oracle_reduces_to_point_load_formula() {
    // A load concentrated near the tip recovers PL^3/3EI + PL/kGA.
    let material = MaterialModel::benchmark();
    let (l, width) = (2.0, 1e-6);
    let p = 2.0e5;
    let got = timoshenko_tip_deflection(&material, l, l - width, p / width);
    let g = material.youngs_modulus / 2.5;
    let expected = p * l.powi(3) / (3.0 * material.youngs_modulus / 12.0) + p * l / (5.0 / 6.0 * g);
    assert!((got - expected).abs() <= 1e-5 * expected);
}
