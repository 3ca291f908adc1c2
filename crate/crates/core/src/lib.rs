//! Stress-aware shape refinement.
//!
//! An input shape is fitted as a neural signed distance field (positive
//! inside), converted to a soft material density, and co-optimized with a
//! physics-informed displacement network that is anchored to a voxel
//! finite-element solution of the initial shape. The geometry is pushed
//! toward lower and more uniform von-Mises stress under a prescribed load.

pub mod autodiff;
pub mod cli;
pub mod cotrain;
pub mod elasticity;
pub mod error;
pub mod fem;
pub mod geometry;
pub mod physics;
pub mod sampling;

pub use error::{Error, Result};

static THREADS: std::sync::atomic::AtomicUsize = std::sync::atomic::AtomicUsize::new(1);

/// Worker threads used by the FEM solver (at least 1).
pub fn threads() -> usize {
    THREADS.load(std::sync::atomic::Ordering::Relaxed)
}

pub fn set_threads(n: usize) {
    THREADS.store(n.max(1), std::sync::atomic::Ordering::Relaxed);
}
