//! Batched evaluation of the combined physics loss and the pretraining
//! loop for the displacement network.

use std::ops::Range;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Adam;
use crate::elasticity::MaterialModel;
use crate::error::{Error, Result};
use crate::fem::FemDataset;
use crate::geometry::{DensityParams, ScalarField};
use crate::sampling::{DirichletSet, TractionSet};

use super::field::{DensityJets, DisplacementField};
use super::losses::{dirichlet_term, fem_term, pde_term, traction_term, Sinks};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsWeights {
    pub pde: f64,
    pub bc: f64,
    pub fem: f64,
}

impl Default for PhysicsWeights {
    fn default() -> Self {
        PhysicsWeights { pde: 1.0, bc: 50.0, fem: 1.0 }
    }
}

impl PhysicsWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [("pde", self.pde), ("bc", self.bc), ("fem", self.fem)] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::config(format!("weights.{name} must be finite and non-negative")));
            }
        }
        Ok(())
    }
}

/// Points per set evaluated in one step; 0 means the whole set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BatchSizes {
    pub domain: usize,
    pub boundary: usize,
    pub fem: usize,
}

impl Default for BatchSizes {
    fn default() -> Self {
        BatchSizes { domain: 1024, boundary: 512, fem: 1024 }
    }
}

impl BatchSizes {
    pub fn full() -> Self {
        BatchSizes { domain: 0, boundary: 0, fem: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainConfig {
    /// Hidden widths of the displacement network.
    pub hidden: Vec<usize>,
    pub output_scale: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub weights: PhysicsWeights,
    pub batch: BatchSizes,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            hidden: vec![125; 5],
            output_scale: 0.1,
            epochs: 10_000,
            learning_rate: 5e-3,
            weights: PhysicsWeights::default(),
            batch: BatchSizes::default(),
            seed: 0,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if self.hidden.is_empty() || self.hidden.iter().any(|&w| w == 0) {
            return Err(Error::config("pretrain.hidden must list positive widths"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::config("pretrain.learning_rate must be positive"));
        }
        if !(self.output_scale > 0.0) {
            return Err(Error::config("pretrain.output_scale must be positive"));
        }
        Ok(())
    }
}

/// One epoch's loss breakdown; `total` is the weighted sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub epoch: usize,
    pub total: f64,
    pub pde: f64,
    pub bc: f64,
    pub fem: f64,
}

pub fn write_history(path: &Path, history: &[LossRecord]) -> Result<()> {
    let mut s = String::from("epoch,total,pde,bc,fem\n");
    for r in history {
        s.push_str(&format!("{},{:e},{:e},{:e},{:e}\n", r.epoch, r.total, r.pde, r.bc, r.fem));
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

fn window(n: usize, batch: usize, epoch: usize) -> Range<usize> {
    if batch == 0 || batch >= n {
        return 0..n;
    }
    let windows = n.div_ceil(batch);
    let k = epoch % windows;
    k * batch..((k + 1) * batch).min(n)
}

fn permutation(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

/// Sample sets in a fixed shuffled order, cut into rotating windows.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicsBatches {
    pub domain: Vec<[f64; 3]>,
    pub dirichlet: DirichletSet,
    pub traction: TractionSet,
    pub fem: Option<FemDataset>,
    pub body_force: [f64; 3],
    pub sizes: BatchSizes,
}

impl PhysicsBatches {
    pub fn new(
        domain: &[[f64; 3]],
        dirichlet: &DirichletSet,
        traction: &TractionSet,
        fem: Option<&FemDataset>,
        body_force: [f64; 3],
        sizes: BatchSizes,
        seed: u64,
    ) -> Result<Self> {
        if domain.is_empty() || dirichlet.points.is_empty() || traction.points.is_empty() {
            return Err(Error::config("physics training needs non-empty domain and boundary sets"));
        }
        if fem.is_some_and(|f| f.is_empty()) {
            return Err(Error::config("anchor dataset is empty"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xba7c);
        let pd = permutation(domain.len(), &mut rng);
        let pu = permutation(dirichlet.points.len(), &mut rng);
        let pt = permutation(traction.points.len(), &mut rng);
        let fem = fem.map(|f| f.subset(&permutation(f.len(), &mut rng)));
        Ok(PhysicsBatches {
            domain: pd.iter().map(|&i| domain[i]).collect(),
            dirichlet: DirichletSet {
                points: pu.iter().map(|&i| dirichlet.points[i]).collect(),
                values: pu.iter().map(|&i| dirichlet.values[i]).collect(),
            },
            traction: TractionSet {
                points: pt.iter().map(|&i| traction.points[i]).collect(),
                normals: pt.iter().map(|&i| traction.normals[i]).collect(),
                traction: pt.iter().map(|&i| traction.traction[i]).collect(),
                loaded: pt.iter().map(|&i| traction.loaded[i]).collect(),
            },
            fem,
            body_force,
            sizes,
        })
    }
}

/// Density jets of a fixed geometry on every set of a [`PhysicsBatches`].
#[derive(Debug, Clone, PartialEq)]
pub struct GeometryCache {
    pub domain: DensityJets,
    pub traction: DensityJets,
    pub fem: Option<DensityJets>,
}

impl GeometryCache {
    pub fn new(geometry: &dyn ScalarField, dp: &DensityParams, b: &PhysicsBatches) -> Self {
        GeometryCache {
            domain: DensityJets::from_field(geometry, dp, &b.domain),
            traction: DensityJets::from_field(geometry, dp, &b.traction.points),
            fem: b.fem.as_ref().map(|f| DensityJets::from_field(geometry, dp, &f.points)),
        }
    }
}

/// Loss of the epoch's window of every set; accumulates the weighted
/// gradient into `grads` when given.
pub fn physics_loss(
    u: &DisplacementField,
    batches: &PhysicsBatches,
    geo: &GeometryCache,
    mat: &MaterialModel,
    weights: &PhysicsWeights,
    epoch: usize,
    mut grads: Option<&mut [f64]>,
) -> Result<LossRecord> {
    let s = batches.sizes;
    let rd = window(batches.domain.len(), s.domain, epoch);
    let pde = pde_term(
        u,
        &batches.domain[rd.clone()],
        &geo.domain.slice(rd),
        mat,
        batches.body_force,
        &mut Sinks { weight: weights.pde, physics: grads.as_deref_mut().filter(|_| weights.pde > 0.0), density: None },
    )?;

    let ru = window(batches.dirichlet.points.len(), s.boundary, epoch);
    let dir = DirichletSet {
        points: batches.dirichlet.points[ru.clone()].to_vec(),
        values: batches.dirichlet.values[ru].to_vec(),
    };
    let mut bc = dirichlet_term(
        u,
        &dir,
        &mut Sinks { weight: weights.bc, physics: grads.as_deref_mut().filter(|_| weights.bc > 0.0), density: None },
    )?;
    let rt = window(batches.traction.points.len(), s.boundary, epoch);
    let t = &batches.traction;
    let tr = TractionSet {
        points: t.points[rt.clone()].to_vec(),
        normals: t.normals[rt.clone()].to_vec(),
        traction: t.traction[rt.clone()].to_vec(),
        loaded: t.loaded[rt.clone()].to_vec(),
    };
    bc += traction_term(
        u,
        &tr,
        &geo.traction.slice(rt),
        mat,
        &mut Sinks { weight: weights.bc, physics: grads.as_deref_mut().filter(|_| weights.bc > 0.0), density: None },
    )?;

    let mut fem = 0.0;
    if let (Some(data), Some(fg)) = (&batches.fem, &geo.fem) {
        let rf = window(data.len(), s.fem, epoch);
        let ids: Vec<usize> = rf.clone().collect();
        fem = fem_term(
            u,
            &data.subset(&ids),
            &fg.slice(rf),
            mat,
            &mut Sinks {
                weight: weights.fem,
                physics: grads.as_deref_mut().filter(|_| weights.fem > 0.0),
                density: None,
            },
        )?;
    }
    Ok(LossRecord { epoch, total: weights.pde * pde + weights.bc * bc + weights.fem * fem, pde, bc, fem })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainReport {
    pub history: Vec<LossRecord>,
}

/// Train the displacement network against a frozen geometry. On divergence
/// the parameters with the lowest loss seen so far are restored.
pub fn pretrain(
    u: &mut DisplacementField,
    geometry: &dyn ScalarField,
    dp: &DensityParams,
    mat: &MaterialModel,
    batches: &PhysicsBatches,
    cfg: &PretrainConfig,
) -> Result<PretrainReport> {
    cfg.validate()?;
    let geo = GeometryCache::new(geometry, dp, batches);
    let mut adam = Adam::new(u.net.n_params(), cfg.learning_rate);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best = (f64::INFINITY, u.net.params().to_vec());
    let mut grads = vec![0.0; u.net.n_params()];
    for epoch in 0..cfg.epochs {
        grads.iter_mut().for_each(|g| *g = 0.0);
        let rec = match physics_loss(u, batches, &geo, mat, &cfg.weights, epoch, Some(&mut grads)) {
            Ok(r) if r.total.is_finite() => r,
            Ok(r) => {
                u.net.set_params(&best.1)?;
                return Err(Error::Divergence { step: epoch, detail: format!("physics loss became {}", r.total) });
            }
            Err(e) => {
                u.net.set_params(&best.1)?;
                return Err(Error::Divergence { step: epoch, detail: e.to_string() });
            }
        };
        if rec.total < best.0 {
            best.0 = rec.total;
            best.1.copy_from_slice(u.net.params());
        }
        if let Err(e) = adam.step(u.net.params_mut(), &grads) {
            u.net.set_params(&best.1)?;
            return Err(e);
        }
        history.push(rec);
        if epoch % 1000 == 0 {
            log::debug!("pretrain epoch {epoch}: total {:.4e}", rec.total);
        }
    }
    Ok(PretrainReport { history })
}

/// `sqrt(sum |u_pred - u|^2 / sum |u|^2)` over the records of `data`.
pub fn relative_l2_error(u: &DisplacementField, data: &FemDataset) -> f64 {
    let pred = u.displacements(&data.points);
    let mut num = 0.0;
    let mut den = 0.0;
    for (p, t) in pred.iter().zip(&data.displacement) {
        for i in 0..3 {
            num += (p[i] - t[i]).powi(2);
            den += t[i] * t[i];
        }
    }
    if den == 0.0 {
        return num.sqrt();
    }
    (num / den).sqrt()
}
