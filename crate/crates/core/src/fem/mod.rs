//! Taylor-Hood P2/P1 discretization on the reference square.

pub mod assembly;
pub mod mesh;
pub mod solver;
pub mod space;
pub mod sparse;

pub use assembly::{assemble, boundary_load, FormKernel, PointCoefficients, SparseSystem};
pub use mesh::{BoundaryTag, Mesh};
pub use solver::{solve_saddle, MixedField, SaddleSolver, SolveDiagnostics, SparseLu};
pub use space::{BoundaryConditions, TaylorHoodSpace};
pub use sparse::{CsrMatrix, CsrPattern};
