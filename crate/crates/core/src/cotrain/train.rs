use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Adam, JetOrder};
use crate::elasticity::{self, BoundarySpec, MaterialModel};
use crate::error::{Error, Result};
use crate::fem;
use crate::geometry::{extract_mesh, Bounds, DensityParams, MeshIndex, ScalarField, SdfField, TriangleMesh, CHUNK};
use crate::physics::{
    physics_loss, BatchSizes, DensityAdjoint, DensityJets, DisplacementField, GeometryCache, PhysicsBatches,
    PhysicsWeights,
};
use crate::sampling::ConstraintSet;

use super::losses::{combine_term, constraint_term, design_term, eikonal_term, gate_open, volume_term};

/// Switches that remove one ingredient of the pipeline.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Ablation {
    /// Drop the exterior density constraint.
    pub no_gc: bool,
    /// Train the displacement network without FEM anchors.
    pub no_fem_embed: bool,
    /// Drop the stress-driven design (or gated) loss.
    pub no_design: bool,
    /// Keep the displacement network frozen during co-training.
    pub no_physics: bool,
}

impl Ablation {
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.no_gc {
            parts.push("no-gc");
        }
        if self.no_fem_embed {
            parts.push("no-fem-embed");
        }
        if self.no_design {
            parts.push("no-design");
        }
        if self.no_physics {
            parts.push("no-physics");
        }
        if parts.is_empty() {
            "full".into()
        } else {
            parts.join("+")
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoTrainConfig {
    pub w_design: f64,
    pub w_gc: f64,
    pub w_vr: f64,
    pub w_eikonal: f64,
    /// A geometry step every `period` epochs, physics steps otherwise.
    pub period: usize,
    pub epochs: usize,
    pub geometry_lr: f64,
    pub physics_lr: f64,
    /// Target mean density over the domain samples. Unset: the initial
    /// mean plus `volume_margin`.
    pub volume_target: Option<f64>,
    pub volume_margin: f64,
    /// Use the gated limiter in place of the plain design loss.
    pub two_phase: bool,
    pub physics: PhysicsWeights,
    pub batch: BatchSizes,
    pub ablation: Ablation,
}

impl Default for CoTrainConfig {
    fn default() -> Self {
        CoTrainConfig {
            w_design: 25.0,
            w_gc: 1e5,
            w_vr: 1e4,
            w_eikonal: 10.0,
            period: 10,
            epochs: 500,
            geometry_lr: 1e-6,
            physics_lr: 1e-3,
            volume_target: None,
            volume_margin: 0.05,
            two_phase: true,
            physics: PhysicsWeights::default(),
            batch: BatchSizes::default(),
            ablation: Ablation::default(),
        }
    }
}

impl CoTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.period < 2 {
            return Err(Error::config("cotrain.period must be at least 2"));
        }
        for (name, w) in
            [("w_design", self.w_design), ("w_gc", self.w_gc), ("w_vr", self.w_vr), ("w_eikonal", self.w_eikonal)]
        {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::config(format!("cotrain.{name} must be a finite value >= 0")));
            }
        }
        for (name, lr) in [("geometry_lr", self.geometry_lr), ("physics_lr", self.physics_lr)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::config(format!("cotrain.{name} must be positive")));
            }
        }
        if let Some(m) = self.volume_target {
            if !(m > 0.0 && m < 1.0) {
                return Err(Error::config("cotrain.volume_target must lie in (0, 1)"));
            }
        }
        if !(self.volume_margin >= 0.0 && self.volume_margin < 1.0) {
            return Err(Error::config("cotrain.volume_margin must lie in [0, 1)"));
        }
        self.physics.validate()
    }

    /// Loss weights after the ablation switches.
    fn effective(&self) -> (f64, f64, PhysicsWeights) {
        let a = &self.ablation;
        let w_design = if a.no_design { 0.0 } else { self.w_design };
        let w_gc = if a.no_gc { 0.0 } else { self.w_gc };
        let mut pw = self.physics;
        if a.no_fem_embed {
            pw.fem = 0.0;
        }
        (w_design, w_gc, pw)
    }
}

/// Number of geometry steps in `epochs` epochs at alternation `period`.
pub fn geometry_steps(epochs: usize, period: usize) -> usize {
    epochs.div_ceil(period)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Geometry,
    Physics,
    /// A physics epoch with the displacement network frozen.
    Skipped,
}

/// One epoch of co-training. Geometry terms are refreshed on geometry
/// steps and physics terms on physics steps; the others carry over.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoTrainRecord {
    pub epoch: usize,
    pub kind: StepKind,
    pub design: f64,
    pub gc: f64,
    pub vr: f64,
    pub eikonal: f64,
    pub geometry_total: f64,
    pub pde: f64,
    pub bc: f64,
    pub fem: f64,
    pub physics_total: f64,
    pub volume: f64,
    pub gate: bool,
}

/// Max von Mises of FEM solves on the initial and final output meshes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FemComparison {
    pub resolution: usize,
    pub initial_max_von_mises: f64,
    pub final_max_von_mises: f64,
}

impl FemComparison {
    /// Fractional reduction of the max von Mises stress.
    pub fn reduction(&self) -> f64 {
        1.0 - self.final_max_von_mises / self.initial_max_von_mises
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoTrainSummary {
    pub ablation: String,
    pub epochs: usize,
    pub geometry_steps: usize,
    pub physics_steps: usize,
    pub volume_target: f64,
    pub initial_volume: f64,
    pub final_volume: f64,
    pub gate_open_epoch: Option<usize>,
    pub max_constraint_drift: f64,
    pub fem: Option<FemComparison>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoTrainReport {
    pub records: Vec<CoTrainRecord>,
    pub summary: CoTrainSummary,
}

const HEADER: &str = "epoch,kind,design,gc,vr,eikonal,geometry_total,pde,bc,fem,physics_total,volume,gate";

impl CoTrainReport {
    pub fn volume_trajectory(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.volume).collect()
    }

    pub fn gate_trajectory(&self) -> Vec<bool> {
        self.records.iter().map(|r| r.gate).collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_path(path)
            .map_err(|e| crate::sampling::csv_io(path, e))?;
        let err = |e| crate::sampling::csv_io(path, e);
        w.write_record(HEADER.split(',')).map_err(err)?;
        for r in &self.records {
            let kind = match r.kind {
                StepKind::Geometry => "geometry",
                StepKind::Physics => "physics",
                StepKind::Skipped => "skipped",
            };
            let mut row = vec![r.epoch.to_string(), kind.to_string()];
            row.extend(
                [r.design, r.gc, r.vr, r.eikonal, r.geometry_total, r.pde, r.bc, r.fem, r.physics_total, r.volume]
                    .iter()
                    .map(|v| format!("{v:e}")),
            );
            row.push(u8::from(r.gate).to_string());
            w.write_record(&row).map_err(err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_summary(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(&self.summary).map_err(|e| Error::config(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Inputs of a co-training run.
pub struct CoTrainData<'a> {
    pub batches: &'a PhysicsBatches,
    pub constraint: &'a ConstraintSet,
}

struct GeometryStep {
    design: f64,
    gc: f64,
    vr: f64,
    eikonal: f64,
    total: f64,
    volume: f64,
    gate: bool,
}

fn densities(g: &SdfField, dp: &DensityParams, pts: &[[f64; 3]]) -> Vec<f64> {
    g.values(pts).into_iter().map(|f| dp.density_of(f)).collect()
}

/// Undensified von Mises stress of `u` at each point.
fn base_von_mises(u: &DisplacementField, mat: &MaterialModel, pts: &[[f64; 3]]) -> Vec<f64> {
    let mut out = Vec::with_capacity(pts.len());
    for chunk in pts.chunks(CHUNK) {
        let (jets, _) = u.net.eval(chunk, JetOrder::Gradient);
        for p in 0..chunk.len() {
            let s = elasticity::stress(&elasticity::strain(&jets.jacobian3(p)), mat);
            out.push(elasticity::von_mises(&s));
        }
    }
    out
}

/// Run `adj` (density and SDF-gradient adjoints, one entry per point of
/// `pts`) back through the geometry network.
fn geometry_backward(
    g: &SdfField,
    dp: &DensityParams,
    pts: &[[f64; 3]],
    d_rho: &[f64],
    d_grad_f: Option<&[[f64; 3]]>,
    grads: &mut [f64],
) {
    for (c, chunk) in pts.chunks(CHUNK).enumerate() {
        let off = c * CHUNK;
        let (jets, tape) = g.net.eval(chunk, JetOrder::Gradient);
        let dj = DensityJets::from_jets(&jets, dp);
        let mut adj = DensityAdjoint::zeros(chunk.len());
        adj.rho.copy_from_slice(&d_rho[off..off + chunk.len()]);
        let mut a = adj.pullback(&dj, dp);
        if let Some(dg) = d_grad_f {
            for p in 0..chunk.len() {
                for j in 0..3 {
                    *a.grad_mut(p, 0, j) += dg[off + p][j];
                }
            }
        }
        g.net.backward(&tape, &a, grads);
    }
}

#[allow(clippy::too_many_arguments)]
fn geometry_step(
    u: &DisplacementField,
    g: &SdfField,
    dp: &DensityParams,
    mat: &MaterialModel,
    data: &CoTrainData,
    cfg: &CoTrainConfig,
    target: f64,
    grads: &mut [f64],
) -> Result<GeometryStep> {
    let (w_design, w_gc, _) = cfg.effective();
    let pts = &data.batches.domain;
    let vg = g.values_and_gradients(pts);
    let rho: Vec<f64> = vg.iter().map(|(f, _)| dp.density_of(*f)).collect();
    let grad_f: Vec<[f64; 3]> = vg.iter().map(|(_, g)| *g).collect();
    let gate = gate_open(&rho, target);
    let volume = rho.iter().sum::<f64>() / rho.len() as f64;

    let mut d_rho = vec![0.0; pts.len()];
    let mut design = 0.0;
    if w_design > 0.0 {
        let v = base_von_mises(u, mat, pts);
        let svm: Vec<f64> = rho.iter().zip(&v).map(|(r, v)| r * v).collect();
        let p = if cfg.two_phase { combine_term(&rho, &svm, target) } else { design_term(&rho, &svm)? };
        design = p.value;
        for i in 0..pts.len() {
            d_rho[i] += w_design * (p.d_rho[i] + p.d_svm[i] * v[i]);
        }
    }
    let vr = volume_term(&rho, target);
    for (d, p) in d_rho.iter_mut().zip(&vr.d_rho) {
        *d += cfg.w_vr * p;
    }
    let (eikonal, mut d_grad) = eikonal_term(&grad_f);
    d_grad.iter_mut().flatten().for_each(|d| *d *= cfg.w_eikonal);
    geometry_backward(g, dp, pts, &d_rho, Some(&d_grad), grads);

    let rho_c = densities(g, dp, &data.constraint.points);
    let gc = constraint_term(&rho_c, &data.constraint.density);
    if w_gc > 0.0 {
        let d: Vec<f64> = gc.d_rho.iter().map(|v| w_gc * v).collect();
        geometry_backward(g, dp, &data.constraint.points, &d, None, grads);
    }
    let total = w_design * design + w_gc * gc.value + cfg.w_vr * vr.value + cfg.w_eikonal * eikonal;
    Ok(GeometryStep { design, gc: gc.value, vr: vr.value, eikonal, total, volume, gate })
}

/// Alternating optimization: on epochs divisible by `period` the geometry
/// network takes one step on the geometry losses with the displacement
/// network frozen; otherwise the displacement network takes one step on
/// the physics loss against the current geometry. On divergence both
/// networks are restored to their state before the failing step.
pub fn cotrain(
    u: &mut DisplacementField,
    g: &mut SdfField,
    dp: &DensityParams,
    mat: &MaterialModel,
    data: &CoTrainData,
    cfg: &CoTrainConfig,
) -> Result<CoTrainReport> {
    cfg.validate()?;
    if data.batches.domain.is_empty() {
        return Err(Error::config("co-training needs domain samples"));
    }
    let (_, _, pweights) = cfg.effective();
    let initial_volume = {
        let rho = densities(g, dp, &data.batches.domain);
        rho.iter().sum::<f64>() / rho.len() as f64
    };
    let target = cfg.volume_target.unwrap_or(initial_volume + cfg.volume_margin).min(1.0 - 1e-9);
    log::info!(
        "co-training {} epochs ({}): initial volume {initial_volume:.4}, target {target:.4}",
        cfg.epochs,
        cfg.ablation.label()
    );

    let mut g_adam = Adam::new(g.net.n_params(), cfg.geometry_lr);
    let mut u_adam = Adam::new(u.net.n_params(), cfg.physics_lr);
    let mut g_grads = vec![0.0; g.net.n_params()];
    let mut u_grads = vec![0.0; u.net.n_params()];
    let mut cache: Option<GeometryCache> = None;
    let mut records = Vec::with_capacity(cfg.epochs);
    let mut last = CoTrainRecord {
        epoch: 0,
        kind: StepKind::Geometry,
        design: 0.0,
        gc: 0.0,
        vr: 0.0,
        eikonal: 0.0,
        geometry_total: 0.0,
        pde: 0.0,
        bc: 0.0,
        fem: 0.0,
        physics_total: 0.0,
        volume: initial_volume,
        gate: false,
    };
    let mut gate_open_epoch = None;
    let mut n_geo = 0;
    let mut n_phys = 0;

    for epoch in 0..cfg.epochs {
        let mut rec = last;
        rec.epoch = epoch;
        if epoch % cfg.period == 0 {
            let before = g.net.params().to_vec();
            g_grads.iter_mut().for_each(|v| *v = 0.0);
            let step = geometry_step(u, g, dp, mat, data, cfg, target, &mut g_grads)?;
            let diverged = |detail: String| Error::Divergence { step: epoch, detail };
            if !step.total.is_finite() {
                return Err(diverged(format!("geometry loss became {}", step.total)));
            }
            if let Err(e) = g_adam.step(g.net.params_mut(), &g_grads) {
                g.net.set_params(&before)?;
                return Err(diverged(e.to_string()));
            }
            cache = None;
            n_geo += 1;
            rec.kind = StepKind::Geometry;
            rec.design = step.design;
            rec.gc = step.gc;
            rec.vr = step.vr;
            rec.eikonal = step.eikonal;
            rec.geometry_total = step.total;
            rec.volume = step.volume;
            rec.gate = step.gate;
            if step.gate && gate_open_epoch.is_none() {
                gate_open_epoch = Some(epoch);
            }
        } else if cfg.ablation.no_physics {
            rec.kind = StepKind::Skipped;
        } else {
            let geo = cache.get_or_insert_with(|| GeometryCache::new(g, dp, data.batches));
            let before = u.net.params().to_vec();
            u_grads.iter_mut().for_each(|v| *v = 0.0);
            let diverged = |detail: String| Error::Divergence { step: epoch, detail };
            let l = physics_loss(u, data.batches, geo, mat, &pweights, epoch, Some(&mut u_grads))
                .map_err(|e| diverged(e.to_string()))?;
            if !l.total.is_finite() {
                return Err(diverged(format!("physics loss became {}", l.total)));
            }
            if let Err(e) = u_adam.step(u.net.params_mut(), &u_grads) {
                u.net.set_params(&before)?;
                return Err(diverged(e.to_string()));
            }
            n_phys += 1;
            rec.kind = StepKind::Physics;
            rec.pde = l.pde;
            rec.bc = l.bc;
            rec.fem = l.fem;
            rec.physics_total = l.total;
        }
        if epoch % 50 == 0 {
            log::debug!(
                "cotrain epoch {epoch}: volume {:.4}, gate {}, geometry {:.4e}, physics {:.4e}",
                rec.volume,
                rec.gate,
                rec.geometry_total,
                rec.physics_total
            );
        }
        records.push(rec);
        last = rec;
    }

    let final_volume = {
        let rho = densities(g, dp, &data.batches.domain);
        rho.iter().sum::<f64>() / rho.len() as f64
    };
    Ok(CoTrainReport {
        records,
        summary: CoTrainSummary {
            ablation: cfg.ablation.label(),
            epochs: cfg.epochs,
            geometry_steps: n_geo,
            physics_steps: n_phys,
            volume_target: target,
            initial_volume,
            final_volume,
            gate_open_epoch,
            max_constraint_drift: super::losses::max_drift(g, dp, data.constraint),
            fem: None,
        },
    })
}

/// Max von Mises of a FEM solve on the solid bounded by `mesh`.
pub fn mesh_max_von_mises(
    mesh: &TriangleMesh,
    bounds: Bounds,
    mat: &MaterialModel,
    bspec: &BoundarySpec,
    resolution: usize,
) -> Result<f64> {
    let index = MeshIndex::new(mesh);
    // zero-width transition: a voxel is solid iff its centre is inside
    let sharp = DensityParams::new(1e-9)?;
    let hex = fem::voxelize(&index, &sharp, bounds, resolution, 0.5)?;
    let sol = fem::solve(&hex, mat, bspec)?;
    Ok(fem::max_von_mises(&sol))
}

/// Extract the output meshes of both fields at `resolution` and compare
/// their FEM max von Mises stress.
pub fn compare_fem(
    initial: &dyn ScalarField,
    last: &dyn ScalarField,
    bounds: Bounds,
    mat: &MaterialModel,
    bspec: &BoundarySpec,
    resolution: usize,
) -> Result<(FemComparison, TriangleMesh)> {
    let before = extract_mesh(initial, bounds, resolution)?;
    let after = extract_mesh(last, bounds, resolution)?;
    Ok((
        FemComparison {
            resolution,
            initial_max_von_mises: mesh_max_von_mises(&before, bounds, mat, bspec, resolution)?,
            final_max_von_mises: mesh_max_von_mises(&after, bounds, mat, bspec, resolution)?,
        },
        after,
    ))
}
