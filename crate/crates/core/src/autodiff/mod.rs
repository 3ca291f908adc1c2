//! Small differentiation engine: dense networks with input jets up to second
//! order, reverse accumulation into parameters, Adam, and checkpoints.

mod adam;
pub mod checkpoint;
mod net;

pub use adam::Adam;
pub use net::{hess_index, Activation, DenseNet, InputJet, JetBatch, JetOrder, Tape, HESS_PAIRS};

/// Euclidean norm of a gradient vector.
pub fn grad_norm(grads: &[f64]) -> f64 {
    grads.iter().map(|g| g * g).sum::<f64>().sqrt()
}

/// Bitwise fingerprint of a parameter vector.
pub fn param_checksum(params: &[f64]) -> u64 {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    for p in params {
        h.update(p.to_bits().to_le_bytes());
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().unwrap())
}
