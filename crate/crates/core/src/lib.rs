//! Discontinuous Galerkin spectral element solver for the 2D compressible
//! Euler and Navier-Stokes equations on planar sliding meshes.
//!
//! Subdomains (bands) slide past each other along straight interfaces that
//! are coupled through mortars. The parallel protocol exchanges only
//! solution and flux data across the interfaces; which rank talks to which,
//! and in what order, follows from the current displacement.

// `!(x > 0.0)` rejects NaN on purpose; index loops mirror the tensor formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::manual_is_multiple_of)]

pub mod dgsolver;
pub mod driver;
pub mod error;
pub mod mesh;
pub mod mortar;
pub mod partition;
pub mod physics;
pub mod polybasis;

pub use dgsolver::{RankSolver, SolutionField, SolverSetup};
pub use driver::{run_case, RunConfig, RunOutcome};
pub use error::{Error, Result};
pub use mesh::{build_mesh, Mesh, MeshSpec};
pub use physics::{ConservedState, GasModel, Primitive, StateVec};
pub use polybasis::{build_node_set, NodeKind, NodeSet};
