//! Geometry-side losses and the alternating co-training of the geometry
//! and displacement networks.

mod losses;
mod train;

pub use losses::{
    combine_term, constraint_term, design_term, eikonal_term, gate_open, loss_combine, loss_design, loss_gc, loss_vr,
    max_drift, volume_term, Partials,
};
pub use train::{
    compare_fem, cotrain, geometry_steps, mesh_max_von_mises, Ablation, CoTrainConfig, CoTrainData, CoTrainRecord,
    CoTrainReport, CoTrainSummary, FemComparison, StepKind,
};
