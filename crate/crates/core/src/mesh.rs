//! Structured quadrilateral grid over a rectangle and its boundary data.
//!
//! Nodes and elements are numbered row-major with `x` varying fastest:
//! node `(i, j)` has id `j * (nx + 1) + i` and element `(i, j)` has id
//! `j * nx + i`. Displacement dofs are interleaved, `2 * node` for `x` and
//! `2 * node + 1` for `y`.

use std::collections::BTreeSet;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
    hx: f64,
    hy: f64,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidGrid(format!(
                "element counts must be positive, got {nx} x {ny}"
            )));
        }
        if !(lx.is_finite() && ly.is_finite() && lx > 0.0 && ly > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "side lengths must be positive, got {lx} x {ly}"
            )));
        }
        Ok(Self {
            nx,
            ny,
            lx,
            ly,
            hx: lx / nx as f64,
            hy: ly / ny as f64,
        })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn lx(&self) -> f64 {
        self.lx
    }

    pub fn ly(&self) -> f64 {
        self.ly
    }

    pub fn hx(&self) -> f64 {
        self.hx
    }

    pub fn hy(&self) -> f64 {
        self.hy
    }

    pub fn num_nodes(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    pub fn num_elements(&self) -> usize {
        self.nx * self.ny
    }

    pub fn num_dofs(&self) -> usize {
        2 * self.num_nodes()
    }

    pub fn element_area(&self) -> f64 {
        self.hx * self.hy
    }

    /// |Ω|, the domain area.
    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }

    pub fn node_id(&self, i: usize, j: usize) -> usize {
        debug_assert!(i <= self.nx && j <= self.ny);
        j * (self.nx + 1) + i
    }

    pub fn node_ij(&self, node: usize) -> (usize, usize) {
        (node % (self.nx + 1), node / (self.nx + 1))
    }

    pub fn node_coords(&self, node: usize) -> [f64; 2] {
        let (i, j) = self.node_ij(node);
        [i as f64 * self.hx, j as f64 * self.hy]
    }

    pub fn element_id(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nx && j < self.ny);
        j * self.nx + i
    }

    pub fn element_ij(&self, element: usize) -> (usize, usize) {
        (element % self.nx, element / self.nx)
    }

    /// Corner nodes in counter-clockwise order starting at the lower left.
    pub fn element_nodes(&self, element: usize) -> [usize; 4] {
        let (i, j) = self.element_ij(element);
        let n0 = self.node_id(i, j);
        let n3 = self.node_id(i, j + 1);
        [n0, n0 + 1, n3 + 1, n3]
    }

    pub fn element_dofs(&self, element: usize) -> [usize; 8] {
        let n = self.element_nodes(element);
        [
            2 * n[0],
            2 * n[0] + 1,
            2 * n[1],
            2 * n[1] + 1,
            2 * n[2],
            2 * n[2] + 1,
            2 * n[3],
            2 * n[3] + 1,
        ]
    }

    pub fn centroid(&self, element: usize) -> [f64; 2] {
        let (i, j) = self.element_ij(element);
        [(i as f64 + 0.5) * self.hx, (j as f64 + 0.5) * self.hy]
    }

    pub fn is_boundary_node(&self, node: usize) -> bool {
        let (i, j) = self.node_ij(node);
        i == 0 || j == 0 || i == self.nx || j == self.ny
    }
}

/// A boundary edge between two adjacent boundary nodes carrying a constant
/// traction vector (Pa).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TractionEdge {
    pub nodes: [usize; 2],
    pub traction: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryConditions {
    fixed_dofs: BTreeSet<usize>,
    pub traction_edges: Vec<TractionEdge>,
    /// Force density per unit density (N/m³), one vector per element.
    pub body_force: Vec<[f64; 2]>,
}

impl BoundaryConditions {
    /// No constraints and no loads.
    pub fn empty(grid: &Grid) -> Self {
        Self {
            fixed_dofs: BTreeSet::new(),
            traction_edges: Vec::new(),
            body_force: vec![[0.0; 2]; grid.num_elements()],
        }
    }

    /// Fixes both displacement components of `node`.
    pub fn clamp_node(&mut self, node: usize) {
        self.fixed_dofs.insert(2 * node);
        self.fixed_dofs.insert(2 * node + 1);
    }

    /// Fixes a single displacement component (`0` = x, `1` = y).
    pub fn fix_dof(&mut self, node: usize, component: usize) {
        debug_assert!(component < 2);
        self.fixed_dofs.insert(2 * node + component);
    }

    pub fn add_traction(&mut self, a: usize, b: usize, traction: [f64; 2]) {
        self.traction_edges.push(TractionEdge {
            nodes: [a, b],
            traction,
        });
    }

    pub fn fixed_dofs(&self) -> &BTreeSet<usize> {
        &self.fixed_dofs
    }

    /// Nodes with both components fixed.
    pub fn dirichlet_nodes(&self) -> Vec<usize> {
        self.fixed_dofs
            .iter()
            .filter(|&&d| d % 2 == 0 && self.fixed_dofs.contains(&(d + 1)))
            .map(|d| d / 2)
            .collect()
    }

    pub fn has_body_force(&self) -> bool {
        self.body_force.iter().any(|f| f[0] != 0.0 || f[1] != 0.0)
    }

    /// `true` for dofs that are not constrained.
    pub fn free_mask(&self, grid: &Grid) -> Vec<bool> {
        let mut mask = vec![true; grid.num_dofs()];
        for &d in &self.fixed_dofs {
            mask[d] = false;
        }
        mask
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        if self.fixed_dofs.is_empty() {
            return Err(Error::IllPosed("no Dirichlet constraints".into()));
        }
        if let Some(&d) = self.fixed_dofs.iter().next_back() {
            if d >= grid.num_dofs() {
                return Err(Error::IllPosed(format!("constrained dof {d} out of range")));
            }
        }
        crate::error::check_len(grid.num_elements(), self.body_force.len())?;
        for edge in &self.traction_edges {
            let [a, b] = edge.nodes;
            if a >= grid.num_nodes() || b >= grid.num_nodes() {
                return Err(Error::IllPosed(format!("traction edge ({a}, {b}) out of range")));
            }
            if !is_boundary_edge(grid, a, b) {
                return Err(Error::IllPosed(format!(
                    "traction edge ({a}, {b}) is not a boundary edge"
                )));
            }
        }
        Ok(())
    }

    /// Consistent nodal forces of the edge tractions (N per unit thickness).
    ///
    /// A constant traction on a linear edge splits evenly between its two
    /// nodes. Forces on constrained dofs are kept here and dropped by the
    /// solver.
    pub fn traction_loads(&self, grid: &Grid) -> Vec<f64> {
        let mut f = vec![0.0; grid.num_dofs()];
        for edge in &self.traction_edges {
            let [a, b] = edge.nodes;
            let pa = grid.node_coords(a);
            let pb = grid.node_coords(b);
            let len = (pb[0] - pa[0]).hypot(pb[1] - pa[1]);
            for node in [a, b] {
                f[2 * node] += 0.5 * len * edge.traction[0];
                f[2 * node + 1] += 0.5 * len * edge.traction[1];
            }
        }
        f
    }

    /// Sum of `traction * edge length` over all loaded edges.
    pub fn traction_resultant(&self, grid: &Grid) -> [f64; 2] {
        self.traction_edges.iter().fold([0.0; 2], |acc, e| {
            let pa = grid.node_coords(e.nodes[0]);
            let pb = grid.node_coords(e.nodes[1]);
            let len = (pb[0] - pa[0]).hypot(pb[1] - pa[1]);
            [acc[0] + e.traction[0] * len, acc[1] + e.traction[1] * len]
        })
    }
}

fn is_boundary_edge(grid: &Grid, a: usize, b: usize) -> bool {
    let (ia, ja) = grid.node_ij(a);
    let (ib, jb) = grid.node_ij(b);
    let horizontal = ja == jb && ia.abs_diff(ib) == 1 && (ja == 0 || ja == grid.ny());
    let vertical = ia == ib && ja.abs_diff(jb) == 1 && (ia == 0 || ia == grid.nx());
    horizontal || vertical
}

/// Traction magnitude of the cantilever benchmark (Pa).
pub const BENCHMARK_TRACTION: f64 = 1.0e6;

/// Fraction of the bottom side, measured from the right end, that carries load.
pub const LOADED_FRACTION: f64 = 0.1;

/// Cantilever clamped on the left side with a downward traction of
/// [`BENCHMARK_TRACTION`] on the rightmost tenth of the bottom side.
pub fn cantilever_benchmark_bcs(grid: &Grid) -> BoundaryConditions {
    cantilever_bcs(grid, BENCHMARK_TRACTION)
}

/// Left side clamped; bottom edges whose midpoint lies at `x >= 0.9 lx`
/// carry the traction `(0, -magnitude)`.
pub fn cantilever_bcs(grid: &Grid, magnitude: f64) -> BoundaryConditions {
    let mut bcs = BoundaryConditions::empty(grid);
    for j in 0..=grid.ny() {
        bcs.clamp_node(grid.node_id(0, j));
    }
    let cut = (1.0 - LOADED_FRACTION) * grid.lx();
    // Midpoints sit on a lattice of spacing hx; a relative slack keeps the
    // rule stable when the cut coincides with a midpoint.
    let slack = 1e-9 * grid.hx();
    for i in 0..grid.nx() {
        let mid = (i as f64 + 0.5) * grid.hx();
        if mid >= cut - slack {
            bcs.add_traction(grid.node_id(i, 0), grid.node_id(i + 1, 0), [0.0, -magnitude]);
        }
    }
    bcs
}

/// Rollers on the left side (`ux = 0` everywhere, `uy = 0` at the lower-left
/// corner) and a uniform traction `t` in `+x` on the right side.
pub fn uniaxial_tension_bcs(grid: &Grid, t: f64) -> BoundaryConditions {
    let mut bcs = BoundaryConditions::empty(grid);
    for j in 0..=grid.ny() {
        bcs.fix_dof(grid.node_id(0, j), 0);
    }
    bcs.fix_dof(grid.node_id(0, 0), 1);
    for j in 0..grid.ny() {
        bcs.add_traction(
            grid.node_id(grid.nx(), j),
            grid.node_id(grid.nx(), j + 1),
            [t, 0.0],
        );
    }
    bcs
}
