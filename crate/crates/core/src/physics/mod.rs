//! The displacement network, density-coupled stress prediction, the
//! equilibrium, boundary and anchor losses and pretraining.

mod field;
mod losses;
mod train;

pub use field::{predict, predict_batch, DensityAdjoint, DensityJets, DisplacementField, FieldPrediction};
pub use losses::{dirichlet_term, fem_term, loss_bc, loss_fem, loss_pde, pde_term, traction_term, Sinks};
pub use train::{
    physics_loss, pretrain, relative_l2_error, write_history, BatchSizes, GeometryCache, LossRecord, PhysicsBatches,
    PhysicsWeights, PretrainConfig, PretrainReport,
};
