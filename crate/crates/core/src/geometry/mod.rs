//! Neural SDF geometry: meshes, labelled sampling, fitting, density and
//! zero-level-set extraction.

mod bvh;
mod extract;
mod field;
mod fit;
mod mesh;
mod shapes;

pub use bvh::{closest_point_on_triangle, MeshIndex};
pub use extract::extract_mesh;
pub use field::CHUNK;
pub use field::{density, eikonal_loss, AnalyticField, Bounds, DensityParams, ScalarField, SdfField};
pub use fit::{
    fit_quality, fit_samples, fit_sdf, label_points, sample_mesh_sdf, FitConfig, FitQuality, FitReport, SdfSampleSet,
    Stratum,
};
pub use mesh::{Normalization, TriangleMesh};
pub use shapes::Shape;
