//! Compact density filter over element centroids.
//!
//! Row `i` of the filter holds the weights of all elements whose centroid
//! lies strictly within `radius` of centroid `i`, taken from the linear hat
//! kernel `w(d) = max(0, 1 - d / radius)` and normalized to sum to one. Rows
//! are convex combinations, so constants are reproduced exactly and
//! `[0, 1]`-valued fields stay in `[0, 1]`. Near the boundary the truncated
//! supports make the matrix non-symmetric; the adjoint is applied as an
//! explicit transpose.

use crate::error::{check_len, Error, Result};
use crate::mesh::Grid;

/// Name of the kernel, recorded in run metadata.
pub const KERNEL_NAME: &str = "linear-hat";
/// Normalization convention, recorded in run metadata.
pub const NORMALIZATION: &str = "row";

const SUPPORT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOperator {
    radius: f64,
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl FilterOperator {
    pub fn build(grid: &Grid, radius: f64) -> Result<Self> {
        if !(radius >= 0.0 && radius.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "filter radius must be non-negative, got {radius}"
            )));
        }
        let n = grid.num_elements();
        if radius < grid.hx().min(grid.hy()) {
            return Ok(Self::identity_with_radius(n, radius));
        }

        let reach_x = (radius / grid.hx()).ceil() as isize;
        let reach_y = (radius / grid.hy()).ceil() as isize;
        let (nx, ny) = (grid.nx() as isize, grid.ny() as isize);

        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for e in 0..n {
            let (i, j) = grid.element_ij(e);
            let (i, j) = (i as isize, j as isize);
            let start = vals.len();
            for jj in (j - reach_y).max(0)..=(j + reach_y).min(ny - 1) {
                for ii in (i - reach_x).max(0)..=(i + reach_x).min(nx - 1) {
                    let dx = (ii - i) as f64 * grid.hx();
                    let dy = (jj - j) as f64 * grid.hy();
                    let w = 1.0 - dx.hypot(dy) / radius;
                    // centroids on the support circle get zero weight
                    if w > SUPPORT_EPS {
                        cols.push(grid.element_id(ii as usize, jj as usize));
                        vals.push(w);
                    }
                }
            }
            let total: f64 = vals[start..].iter().sum();
            for v in &mut vals[start..] {
                *v /= total;
            }
            row_ptr.push(vals.len());
        }
        Ok(Self {
            radius,
            n,
            row_ptr,
            cols,
            vals,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self::identity_with_radius(n, 0.0)
    }

    fn identity_with_radius(n: usize, radius: f64) -> Self {
        Self {
            radius,
            n,
            row_ptr: (0..=n).collect(),
            cols: (0..n).collect(),
            vals: vec![1.0; n],
        }
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// `(column, weight)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[range.clone()]
            .iter()
            .copied()
            .zip(self.vals[range].iter().copied())
    }

    pub fn apply(&self, phi: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n, phi.len())?;
        Ok((0..self.n)
            .map(|i| self.row(i).map(|(j, w)| w * phi[j]).sum())
            .collect())
    }

    pub fn apply_adjoint(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n, v.len())?;
        let mut out = vec![0.0; self.n];
        for (i, &vi) in v.iter().enumerate() {
            for (j, w) in self.row(i) {
                out[j] += w * vi;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen::<f64>()).collect()
    }

    #[test]
    fn zero_radius_is_identity() {
        let g = Grid::new(6, 4, 1.5, 1.0).unwrap();
        let k = FilterOperator::build(&g, 0.0).unwrap();
        assert_eq!(k, FilterOperator::identity(24));
        let phi: Vec<f64> = (0..24).map(|i| i as f64 / 24.0).collect();
        assert_eq!(k.apply(&phi).unwrap(), phi);
    }

    #[test]
    fn rejects_negative_radius() {
        let g = Grid::new(2, 2, 1.0, 1.0).unwrap();
        assert!(FilterOperator::build(&g, -0.1).is_err());
    }

    #[test]
    fn hand_computed_three_cell_weights() {
        let g = Grid::new(3, 1, 3.0, 1.0).unwrap();
        let k = FilterOperator::build(&g, 1.5).unwrap();
        let row: Vec<_> = k.row(1).collect();
        assert_eq!(row.len(), 3);
        for ((col, w), (ec, ew)) in row.iter().zip([(0, 0.2), (1, 0.6), (2, 0.2)]) {
            assert_eq!(*col, ec);
            assert_relative_eq!(*w, ew, epsilon = 1e-15);
        }
        // boundary row: weights 1 and 1/3, normalized
        let row0: Vec<_> = k.row(0).collect();
        assert_relative_eq!(row0[0].1, 0.75, epsilon = 1e-15);
        assert_relative_eq!(row0[1].1, 0.25, epsilon = 1e-15);
    }

    #[test]
    fn benchmark_rows_sum_to_one_within_radius() {
        let g = Grid::new(100, 50, 2.0, 1.0).unwrap();
        let k = FilterOperator::build(&g, 0.1).unwrap();
        let interior = g.element_id(50, 25);
        let c = g.centroid(interior);
        let mut count = 0;
        for (j, w) in k.row(interior) {
            let cj = g.centroid(j);
            assert!((c[0] - cj[0]).hypot(c[1] - cj[1]) < 0.1);
            assert!(w > 0.0);
            count += 1;
        }
        // lattice points strictly inside a disc of radius 5 cells
        assert_eq!(count, 69);
        for i in 0..g.num_elements() {
            let s: f64 = k.row(i).map(|(_, w)| w).sum();
            assert!((s - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn constants_are_reproduced() {
        let g = Grid::new(20, 10, 2.0, 1.0).unwrap();
        let k = FilterOperator::build(&g, 0.37).unwrap();
        let out = k.apply(&vec![0.4; 200]).unwrap();
        assert!(out.iter().all(|v| (v - 0.4).abs() < 1e-15));
    }

    #[test]
    fn adjoint_identity() {
        let g = Grid::new(23, 11, 2.0, 1.0).unwrap();
        let k = FilterOperator::build(&g, 0.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let phi = random_field(&mut rng, g.num_elements());
            let v = random_field(&mut rng, g.num_elements());
            let kphi = k.apply(&phi).unwrap();
            let ktv = k.apply_adjoint(&v).unwrap();
            let lhs: f64 = kphi.iter().zip(&v).map(|(a, b)| a * b).sum();
            let rhs: f64 = phi.iter().zip(&ktv).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn range_is_preserved() {
        let g = Grid::new(30, 15, 2.0, 1.0).unwrap();
        let k = FilterOperator::build(&g, 0.2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let phi = random_field(&mut rng, g.num_elements());
            assert!(k.apply(&phi).unwrap().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    fn total_variation(g: &Grid, f: &[f64]) -> f64 {
        let mut tv = 0.0;
        for e in 0..g.num_elements() {
            let (i, j) = g.element_ij(e);
            if i + 1 < g.nx() {
                tv += (f[e] - f[e + 1]).abs();
            }
            if j + 1 < g.ny() {
                tv += (f[e] - f[e + g.nx()]).abs();
            }
        }
        tv
    }

    #[test]
    fn checkerboard_is_smoothed() {
        let g = Grid::new(100, 50, 2.0, 1.0).unwrap();
        let k = FilterOperator::build(&g, 0.1).unwrap();
        let phi: Vec<f64> = (0..g.num_elements())
            .map(|e| {
                let (i, j) = g.element_ij(e);
                ((i + j) % 2) as f64
            })
            .collect();
        let smoothed = k.apply(&phi).unwrap();
        assert!(total_variation(&g, &smoothed) < total_variation(&g, &phi));
    }

    #[test]
    fn length_mismatch_is_reported() {
        let k = FilterOperator::identity(4);
        assert_eq!(
            k.apply(&[0.0; 3]),
            Err(Error::LengthMismatch {
                expected: 4,
                found: 3
            })
        );
        assert!(k.apply_adjoint(&[0.0; 5]).is_err());
    }

    /// Filtered indicator of `[0.5, 1.3] x [0.2, 0.7]` sampled at level `k`
    /// (mesh `10 * 2^k` by `5 * 2^k` on 2 x 1).
    fn filtered_indicator(level: u32) -> (Grid, Vec<f64>) {
        let s = 2usize.pow(level);
        let g = Grid::new(10 * s, 5 * s, 2.0, 1.0).unwrap();
        let phi: Vec<f64> = (0..g.num_elements())
            .map(|e| {
                let c = g.centroid(e);
                f64::from(u8::from((0.5..1.3).contains(&c[0]) && (0.2..0.7).contains(&c[1])))
            })
            .collect();
        let k = FilterOperator::build(&g, 0.3).unwrap();
        let kphi = k.apply(&phi).unwrap();
        (g, kphi)
    }

    /// L1 distance between a level-`k` field and a level-`k+1` field, with
    /// the coarse field prolonged piecewise constantly.
    fn l1_between_levels(level: u32) -> f64 {
        let (gc, fc) = filtered_indicator(level);
        let (gf, ff) = filtered_indicator(level + 1);
        (0..gf.num_elements())
            .map(|e| {
                let (i, j) = gf.element_ij(e);
                let ec = gc.element_id(i / 2, j / 2);
                (ff[e] - fc[ec]).abs() * gf.element_area()
            })
            .sum()
    }

    #[test]
    fn refinement_differences_shrink() {
        let d: Vec<f64> = (0..3).map(l1_between_levels).collect();
        assert!(d[1] < d[0] && d[2] < d[1], "{d:?}");
    }
}
