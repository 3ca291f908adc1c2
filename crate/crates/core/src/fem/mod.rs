//! Linear-elastic finite elements on voxelized density fields: the
//! independent oracle for stresses and the source of anchor data.

mod dataset;
mod mesh;
mod solver;

pub use dataset::{export_dataset, import_dataset, FemDataset, Provenance, HEADER};
pub use mesh::{voxelize, ExposedFace, HexMesh};
pub use solver::{
    assemble, element_stiffness, max_von_mises, solve, solve_problem, BlockCsr, FemProblem, FemSolution, TOLERANCE,
};
