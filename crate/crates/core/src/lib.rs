//! Topology optimization of 2D linearly elastic bodies with a blended
//! density filter and a phase-field perimeter penalty.
//!
//! The design variable is an element-wise density `phi` on a structured
//! quadrilateral grid. The stiffness seen by the equilibrium problem is a
//! SIMP interpolation of the blended field `alpha * phi + beta * K phi`,
//! where `K` is a compact averaging filter, and the objective is the
//! compliance plus `alpha` times a Modica–Mortola phase-field energy.
//! Minimization is a projected gradient flow that keeps the volume
//! fraction fixed and the density inside `[0, 1]`.

pub mod elasticity;
pub mod error;
pub mod filter;
pub mod material;
pub mod mesh;
pub mod optimizer;
pub mod phasefield;
pub mod sensitivity;

pub use elasticity::{
    BlendedField, DensityField, ElasticProblem, ElasticState, SolverConfig,
};
pub use error::{Error, Result};
pub use filter::FilterOperator;
pub use material::MaterialModel;
pub use phasefield::PhaseFieldParams;
pub use sensitivity::{Evaluation, MethodParameters, TopologyProblem};
pub use optimizer::{IterationRecord, OptimizerConfig, RunOutcome};
pub use mesh::{BoundaryConditions, Grid, TractionEdge};



