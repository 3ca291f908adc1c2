//! Labelled SDF samples from a watertight mesh and the fitting loop for the
//! geometry network.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::bvh::MeshIndex;
use super::field::{eikonal_loss, Bounds, ScalarField, SdfField};
use super::mesh::TriangleMesh;
use crate::autodiff::{Adam, JetBatch, JetOrder};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stratum {
    NearSurface,
    Uniform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdfSampleSet {
    pub points: Vec<[f64; 3]>,
    /// Signed distance, positive inside.
    pub labels: Vec<f64>,
    pub strata: Vec<Stratum>,
}

impl SdfSampleSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn near_fraction(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.strata.iter().filter(|s| **s == Stratum::NearSurface).count() as f64 / self.len() as f64
    }
}

/// Label arbitrary points against a watertight mesh.
pub fn label_points(mesh: &TriangleMesh, points: &[[f64; 3]]) -> Result<Vec<f64>> {
    mesh.ensure_watertight()?;
    let index = MeshIndex::new(mesh);
    Ok(points.iter().map(|&p| index.signed_distance(p)).collect())
}

/// Draw `n` labelled samples: `near_fraction` of them are surface points
/// displaced by Gaussian noise (half with `noise_scale`, half with ten times
/// it), the rest uniform over `bounds`.
pub fn sample_mesh_sdf(
    mesh: &TriangleMesh,
    bounds: Bounds,
    n: usize,
    near_fraction: f64,
    noise_scale: f64,
    seed: u64,
) -> Result<SdfSampleSet> {
    if !(0.0..=1.0).contains(&near_fraction) {
        return Err(Error::config("near_fraction must lie in [0, 1]"));
    }
    if !(noise_scale > 0.0) {
        return Err(Error::config("noise_scale must be positive"));
    }
    mesh.validate()?;
    mesh.ensure_watertight()?;
    let index = MeshIndex::new(mesh);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let areas: Vec<f64> = (0..mesh.triangles.len()).map(|t| mesh.triangle_area(t)).collect();
    let mut cumulative = Vec::with_capacity(areas.len());
    let mut acc = 0.0;
    for a in &areas {
        acc += a;
        cumulative.push(acc);
    }

    let n_near = (near_fraction * n as f64).round() as usize;
    let mut points = Vec::with_capacity(n);
    let mut strata = Vec::with_capacity(n);
    let fine = Normal::new(0.0, noise_scale).unwrap();
    let coarse = Normal::new(0.0, 10.0 * noise_scale).unwrap();
    for s in 0..n_near {
        let r = rng.gen::<f64>() * acc;
        let t = cumulative.partition_point(|&c| c < r).min(areas.len() - 1);
        let [a, b, c] = mesh.triangles[t].map(|i| mesh.vertices[i]);
        let (mut u, mut v) = (rng.gen::<f64>(), rng.gen::<f64>());
        if u + v > 1.0 {
            u = 1.0 - u;
            v = 1.0 - v;
        }
        let noise = if s % 2 == 0 { &fine } else { &coarse };
        let mut p = [0.0; 3];
        for k in 0..3 {
            p[k] = a[k] + u * (b[k] - a[k]) + v * (c[k] - a[k]) + noise.sample(&mut rng);
            p[k] = p[k].clamp(bounds.lo, bounds.hi);
        }
        points.push(p);
        strata.push(Stratum::NearSurface);
    }
    for _ in n_near..n {
        let p = [
            rng.gen_range(bounds.lo..=bounds.hi),
            rng.gen_range(bounds.lo..=bounds.hi),
            rng.gen_range(bounds.lo..=bounds.hi),
        ];
        points.push(p);
        strata.push(Stratum::Uniform);
    }
    let labels = points.iter().map(|&p| index.signed_distance(p)).collect();
    Ok(SdfSampleSet { points, labels, strata })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    /// Hidden layer widths of the geometry network.
    pub hidden: Vec<usize>,
    pub softplus_beta: f64,
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Size of the precomputed sample pool.
    pub samples: usize,
    pub near_fraction: f64,
    pub noise_scale: f64,
    /// Truncation distance of the L1 loss.
    pub clamp: f64,
    /// Weight of an eikonal term on the uniform samples (0 disables it).
    pub eikonal_weight: f64,
    pub init_radius: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            hidden: vec![256; 7],
            softplus_beta: 100.0,
            epochs: 50,
            steps_per_epoch: 200,
            batch_size: 16_384,
            learning_rate: 5e-4,
            samples: 500_000,
            near_fraction: 0.9,
            noise_scale: 0.005,
            clamp: 0.1,
            eikonal_weight: 0.0,
            init_radius: 0.5,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::config(format!("fit.{what}")));
        if self.hidden.is_empty() || self.hidden.iter().any(|&w| w == 0) {
            return bad("hidden must list positive widths");
        }
        if !(self.softplus_beta > 0.0) {
            return bad("softplus_beta must be positive");
        }
        if self.batch_size == 0 || self.samples == 0 {
            return bad("batch_size and samples must be positive");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(self.clamp > 0.0) {
            return bad("clamp must be positive");
        }
        if !(0.0..=1.0).contains(&self.near_fraction) {
            return bad("near_fraction must lie in [0, 1]");
        }
        if !(self.eikonal_weight >= 0.0) {
            return bad("eikonal_weight must be non-negative");
        }
        Ok(())
    }
}

/// Per-epoch fitting diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub epoch_loss: Vec<f64>,
}

/// Clamped L1 loss over a batch plus its adjoint with respect to the
/// network value.
fn clamped_l1(pred: &[f64], labels: &[f64], clamp: f64) -> (f64, Vec<f64>) {
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let mut adj = Vec::with_capacity(pred.len());
    for (&p, &s) in pred.iter().zip(labels) {
        let pc = p.clamp(-clamp, clamp);
        let sc = s.clamp(-clamp, clamp);
        let r = pc - sc;
        loss += r.abs();
        let through = p > -clamp && p < clamp;
        adj.push(if through && r != 0.0 { r.signum() / n } else { 0.0 });
    }
    (loss / n, adj)
}

/// Fit `field` to labelled samples in place. On divergence the field is
/// restored to the last finite parameters and an error is returned.
pub fn fit_samples(field: &mut SdfField, samples: &SdfSampleSet, cfg: &FitConfig) -> Result<FitReport> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::config("cannot fit an empty sample set"));
    }
    let mut adam = Adam::new(field.net.n_params(), cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xf17);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut cursor = order.len();
    let batch = cfg.batch_size.min(samples.len());
    let uniform: Vec<usize> = (0..samples.len()).filter(|&i| samples.strata[i] == Stratum::Uniform).collect();
    let mut report = FitReport { epoch_loss: Vec::with_capacity(cfg.epochs) };
    let mut last_stable = field.net.params().to_vec();
    let mut step = 0;
    for _epoch in 0..cfg.epochs {
        let mut epoch_loss = 0.0;
        for _ in 0..cfg.steps_per_epoch {
            if cursor + batch > order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let ids = &order[cursor..cursor + batch];
            cursor += batch;
            let pts: Vec<[f64; 3]> = ids.iter().map(|&i| samples.points[i]).collect();
            let labels: Vec<f64> = ids.iter().map(|&i| samples.labels[i]).collect();

            let mut grads = vec![0.0; field.net.n_params()];
            let (jets, tape) = field.net.eval(&pts, JetOrder::Value);
            let (mut loss, adj) = clamped_l1(&jets.data, &labels, cfg.clamp);
            let adj = JetBatch { order: JetOrder::Value, n_points: pts.len(), n_out: 1, data: adj };
            field.net.backward(&tape, &adj, &mut grads);

            if cfg.eikonal_weight > 0.0 && !uniform.is_empty() {
                let m = (batch / 8).clamp(1, uniform.len());
                let eik_pts: Vec<[f64; 3]> =
                    (0..m).map(|_| samples.points[uniform[rng.gen_range(0..uniform.len())]]).collect();
                let (jets, tape) = field.net.eval(&eik_pts, JetOrder::Gradient);
                let mut adj = JetBatch::zeros(JetOrder::Gradient, m, 1);
                let mut eik = 0.0;
                for p in 0..m {
                    let g = jets.gradient(p, 0);
                    let nrm = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
                    eik += (nrm - 1.0).powi(2);
                    if nrm > 0.0 {
                        let c = cfg.eikonal_weight * 2.0 * (nrm - 1.0) / (nrm * m as f64);
                        for j in 0..3 {
                            *adj.grad_mut(p, 0, j) = c * g[j];
                        }
                    }
                }
                loss += cfg.eikonal_weight * eik / m as f64;
                field.net.backward(&tape, &adj, &mut grads);
            }

            if !loss.is_finite() {
                field.net.set_params(&last_stable)?;
                return Err(Error::Divergence { step, detail: format!("geometry fit loss became {loss}") });
            }
            if let Err(e) = adam.step(field.net.params_mut(), &grads) {
                field.net.set_params(&last_stable)?;
                return Err(e);
            }
            if field.net.params().iter().any(|v| !v.is_finite()) {
                field.net.set_params(&last_stable)?;
                return Err(Error::Divergence { step, detail: "geometry parameters became non-finite".into() });
            }
            last_stable.copy_from_slice(field.net.params());
            epoch_loss += loss;
            step += 1;
        }
        report.epoch_loss.push(epoch_loss / cfg.steps_per_epoch.max(1) as f64);
    }
    Ok(report)
}

/// Sample a mesh and fit a freshly initialized geometry network to it.
pub fn fit_sdf(mesh: &TriangleMesh, cfg: &FitConfig) -> Result<(SdfField, FitReport)> {
    cfg.validate()?;
    let bounds = Bounds::default();
    let (lo, hi) = mesh.bounding_box().ok_or_else(|| Error::Mesh("mesh has no vertices".into()))?;
    if lo.iter().chain(&hi).any(|&v| v.abs() > bounds.hi - 0.05) {
        return Err(Error::config("mesh must lie inside the domain with a margin of 0.05; normalize it first"));
    }
    let samples = sample_mesh_sdf(mesh, bounds, cfg.samples, cfg.near_fraction, cfg.noise_scale, cfg.seed)?;
    let mut field = SdfField::geometric(&cfg.hidden, cfg.softplus_beta, cfg.init_radius, cfg.seed)?;
    let report = fit_samples(&mut field, &samples, cfg)?;
    Ok((field, report))
}

/// Surface and regularity diagnostics of a fitted field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitQuality {
    /// Mean |f| at points sampled on the mesh surface.
    pub surface_error: f64,
    /// Mean eikonal residual at uniform points.
    pub eikonal: f64,
    /// Fraction of mesh-interior probe points where f > 0.
    pub interior_agreement: f64,
}

pub fn fit_quality(field: &SdfField, mesh: &TriangleMesh, n: usize, seed: u64) -> Result<FitQuality> {
    let surf = sample_mesh_sdf(mesh, field.bounds, n, 1.0, 1e-12, seed)?;
    let vals = field.values(&surf.points);
    let surface_error = vals.iter().map(|v| v.abs()).sum::<f64>() / n.max(1) as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xe1c);
    let b = field.bounds;
    let uni: Vec<[f64; 3]> =
        (0..n).map(|_| [rng.gen_range(b.lo..b.hi), rng.gen_range(b.lo..b.hi), rng.gen_range(b.lo..b.hi)]).collect();
    let eikonal = eikonal_loss(field, &uni);
    let index = MeshIndex::new(mesh);
    let inside: Vec<[f64; 3]> = uni.iter().copied().filter(|&p| index.contains(p)).collect();
    let agree = if inside.is_empty() {
        1.0
    } else {
        let v = field.values(&inside);
        v.iter().filter(|&&x| x > 0.0).count() as f64 / inside.len() as f64
    };
    Ok(FitQuality { surface_error, eikonal, interior_agreement: agree })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_labels() {
        let mesh = TriangleMesh::icosphere([0.0; 3], 1.0, 4);
        let labels = label_points(&mesh, &[[0.0; 3], [2.0, 0.0, 0.0], mesh.vertices[17]]).unwrap();
        assert!((labels[0] - 1.0).abs() < 0.02, "{}", labels[0]);
        assert!((labels[1] + 1.0).abs() < 0.02, "{}", labels[1]);
        assert_eq!(labels[2], 0.0);
    }

    #[test]
    fn samples_match_analytic_oracle() {
        let mesh = TriangleMesh::icosphere([0.0; 3], 0.6, 3);
        let s = sample_mesh_sdf(&mesh, Bounds::default(), 2000, 0.9, 0.005, 3).unwrap();
        assert_eq!(s.len(), 2000);
        assert!((s.near_fraction() - 0.9).abs() < 1e-12);
        for (p, l) in s.points.iter().zip(&s.labels) {
            let analytic = 0.6 - (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            assert!((analytic - l).abs() < 0.01, "{p:?}: {l} vs {analytic}");
        }
    }

    #[test]
    fn open_mesh_is_rejected() {
        let mut mesh = TriangleMesh::cuboid([-0.5; 3], [0.5; 3]);
        mesh.triangles.truncate(10);
        let err = sample_mesh_sdf(&mesh, Bounds::default(), 10, 0.5, 0.01, 0).unwrap_err();
        assert!(err.to_string().contains("open edge"), "{err}");
    }

    #[test]
    fn empty_sample_set_is_rejected() {
        let mut field = SdfField::geometric(&[8], 100.0, 0.5, 0).unwrap();
        let empty = SdfSampleSet { points: vec![], labels: vec![], strata: vec![] };
        assert!(matches!(fit_samples(&mut field, &empty, &FitConfig::default()), Err(Error::Config(_))));
    }

    #[test]
    fn clamped_loss_adjoint() {
        let (loss, adj) = clamped_l1(&[0.05, 0.3, -0.02], &[0.0, 0.5, 0.01], 0.1);
        assert!((loss - (0.05 + 0.0 + 0.03) / 3.0).abs() < 1e-15);
        assert_eq!(adj, vec![1.0 / 3.0, 0.0, -1.0 / 3.0]);
    }
}
