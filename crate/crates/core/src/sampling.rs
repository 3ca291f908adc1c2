//! Monte Carlo point sets for the physics losses: domain points with a
//! dense band around the initial surface, Dirichlet and traction boundary
//! points, and the frozen exterior constraint set.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::elasticity::BoundarySpec;
use crate::error::{Error, Result};
use crate::geometry::{Bounds, DensityParams, ScalarField};

/// Candidates drawn per rejection round.
const BATCH: usize = 4096;
/// Rejection rounds before a sampler gives up.
const MAX_ROUNDS: usize = 400;
/// Half-width of the band the loaded surface is sampled from.
const SURFACE_BAND: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DenseSparseConfig {
    /// Share of the budget drawn from outside the dense region.
    pub sparse_fraction: f64,
    /// Half-width of the dense band around the initial surface.
    pub threshold: f64,
}

impl Default for DenseSparseConfig {
    fn default() -> Self {
        DenseSparseConfig { sparse_fraction: 0.3, threshold: 0.1 }
    }
}

impl DenseSparseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sparse_fraction > 0.0 && self.sparse_fraction <= 1.0) {
            return Err(Error::config(format!(
                "sampling.sparse_fraction must lie in (0, 1], got {}",
                self.sparse_fraction
            )));
        }
        if !(self.threshold > 0.0) {
            return Err(Error::config(format!("sampling.threshold must be positive, got {}", self.threshold)));
        }
        Ok(())
    }

    pub fn is_dense(&self, f: f64) -> bool {
        f.abs() < self.threshold || f >= 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainSamples {
    pub points: Vec<[f64; 3]>,
    pub dense: Vec<bool>,
}

impl DomainSamples {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Dirichlet points with their prescribed displacement.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletSet {
    pub points: Vec<[f64; 3]>,
    pub values: Vec<[f64; 3]>,
}

/// Traction points: loaded shape surface followed by the faces of the
/// computation cube, each with an outward unit normal.
#[derive(Debug, Clone, PartialEq)]
pub struct TractionSet {
    pub points: Vec<[f64; 3]>,
    pub normals: Vec<[f64; 3]>,
    pub traction: Vec<[f64; 3]>,
    pub loaded: Vec<bool>,
}

impl TractionSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn n_loaded(&self) -> usize {
        self.loaded.iter().filter(|l| **l).count()
    }
}

/// Exterior points with densities frozen at build time.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    pub points: Vec<[f64; 3]>,
    pub density: Vec<f64>,
}

impl ConstraintSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSets {
    pub domain: DomainSamples,
    pub dirichlet: DirichletSet,
    pub traction: TractionSet,
    pub constraint: ConstraintSet,
    pub seed: u64,
}

/// Point counts for every set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleCounts {
    pub domain: usize,
    pub dirichlet: usize,
    pub traction: usize,
    pub constraint: usize,
    /// Exterior margin of the constraint set.
    pub margin: f64,
}

impl Default for SampleCounts {
    fn default() -> Self {
        SampleCounts { domain: 8192, dirichlet: 512, traction: 1024, constraint: 2048, margin: 0.1 }
    }
}

impl SampleCounts {
    pub fn validate(&self) -> Result<()> {
        for (name, n) in [
            ("domain", self.domain),
            ("dirichlet", self.dirichlet),
            ("traction", self.traction),
            ("constraint", self.constraint),
        ] {
            if n == 0 {
                return Err(Error::config(format!("samples.{name} must be at least 1")));
            }
        }
        if !(self.margin > 0.0) {
            return Err(Error::config("samples.margin must be positive"));
        }
        Ok(())
    }
}

fn uniform_point(rng: &mut ChaCha8Rng, b: &Bounds) -> [f64; 3] {
    [rng.gen_range(b.lo..=b.hi), rng.gen_range(b.lo..=b.hi), rng.gen_range(b.lo..=b.hi)]
}

/// Draw candidates in fixed-size rounds, evaluate the field on each round
/// and keep those accepted by `keep`, in draw order, until `n` are found.
fn rejection(
    field: &dyn ScalarField,
    n: usize,
    rng: &mut ChaCha8Rng,
    mut draw: impl FnMut(&mut ChaCha8Rng) -> [f64; 3],
    keep: impl Fn([f64; 3], f64) -> bool,
    what: &str,
) -> Result<Vec<([f64; 3], f64)>> {
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return Ok(out);
    }
    for _ in 0..MAX_ROUNDS {
        let cand: Vec<[f64; 3]> = (0..BATCH).map(|_| draw(rng)).collect();
        let vals = field.values(&cand);
        for (p, f) in cand.into_iter().zip(vals) {
            if keep(p, f) {
                out.push((p, f));
                if out.len() == n {
                    return Ok(out);
                }
            }
        }
    }
    Err(Error::Sampling(format!(
        "found only {} of {n} {what} points after {} candidates",
        out.len(),
        MAX_ROUNDS * BATCH
    )))
}

/// Domain points: `(1 - sparse_fraction) n` from the dense region around
/// and inside the reference shape, the rest uniform outside it.
pub fn sample_domain(
    field: &dyn ScalarField,
    bounds: Bounds,
    n: usize,
    cfg: &DenseSparseConfig,
    seed: u64,
) -> Result<DomainSamples> {
    if n == 0 {
        return Err(Error::config("domain sample count must be at least 1"));
    }
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_dense = ((1.0 - cfg.sparse_fraction) * n as f64).round() as usize;
    let mut points = Vec::with_capacity(n);
    let mut dense = Vec::with_capacity(n);

    let d = rejection(field, n_dense, &mut rng, |r| uniform_point(r, &bounds), |_, f| cfg.is_dense(f), "dense-region")?;
    points.extend(d.into_iter().map(|(p, _)| p));
    dense.resize(points.len(), true);

    let n_sparse = n - n_dense;
    if n_dense == 0 {
        points.extend((0..n_sparse).map(|_| uniform_point(&mut rng, &bounds)));
    } else {
        let s = rejection(
            field,
            n_sparse,
            &mut rng,
            |r| uniform_point(r, &bounds),
            |_, f| !cfg.is_dense(f),
            "sparse-region",
        )?;
        points.extend(s.into_iter().map(|(p, _)| p));
    }
    dense.resize(points.len(), false);
    Ok(DomainSamples { points, dense })
}

fn normalized(g: [f64; 3]) -> Option<[f64; 3]> {
    let n = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
    (n > 1e-12).then(|| [g[0] / n, g[1] / n, g[2] / n])
}

/// Dirichlet points inside the shape within the support band, loaded
/// surface points facing the applied traction, and traction-free points
/// on the cube faces. `n_f` is split evenly between the last two.
pub fn sample_boundaries(
    bspec: &BoundarySpec,
    field: &dyn ScalarField,
    bounds: Bounds,
    n_u: usize,
    n_f: usize,
    seed: u64,
) -> Result<(DirichletSet, TractionSet)> {
    if n_u == 0 || n_f == 0 {
        return Err(Error::config("boundary sample counts must be at least 1"));
    }
    bspec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let band_draw = |band: crate::elasticity::AxisBand| {
        let lo = band.lo.max(bounds.lo);
        let hi = band.hi.min(bounds.hi);
        move |r: &mut ChaCha8Rng| {
            let mut p = uniform_point(r, &bounds);
            p[band.axis] = r.gen_range(lo..=hi);
            p
        }
    };

    let support = bspec.support;
    if support.hi < bounds.lo || support.lo > bounds.hi {
        return Err(Error::config("support band lies outside the domain"));
    }
    let dir =
        rejection(field, n_u, &mut rng, band_draw(support), |_, f| f >= 0.0, "Dirichlet").map_err(|e| match e {
            Error::Sampling(m) => Error::config(format!(
                "support region does not meet the shape ({m}); the structure would be unconstrained"
            )),
            other => other,
        })?;
    let dirichlet =
        DirichletSet { values: vec![bspec.prescribed; dir.len()], points: dir.into_iter().map(|(p, _)| p).collect() };

    let n_loaded = n_f / 2;
    let n_faces = n_f - n_loaded;
    let mut points = Vec::with_capacity(n_f);
    let mut normals = Vec::with_capacity(n_f);
    let mut traction = Vec::with_capacity(n_f);
    let mut loaded = Vec::with_capacity(n_f);

    let load = bspec.load;
    let facing = normalized(bspec.traction);
    let mut found = 0;
    for _ in 0..MAX_ROUNDS {
        if found == n_loaded {
            break;
        }
        let draw = band_draw(load);
        let cand: Vec<[f64; 3]> = (0..BATCH).map(|_| draw(&mut rng)).collect();
        let vg = field.values_and_gradients(&cand);
        let near: Vec<[f64; 3]> = cand
            .iter()
            .zip(&vg)
            .filter(|(_, (f, _))| f.abs() < SURFACE_BAND)
            .map(|(p, (f, g))| {
                let g2 = g[0] * g[0] + g[1] * g[1] + g[2] * g[2];
                if g2 > 1e-12 {
                    [p[0] - f * g[0] / g2, p[1] - f * g[1] / g2, p[2] - f * g[2] / g2]
                } else {
                    *p
                }
            })
            .collect();
        let projected = field.values_and_gradients(&near);
        for (p, (f, g)) in near.into_iter().zip(projected) {
            // outward normal of a positive-inside field
            let Some(n) = normalized([-g[0], -g[1], -g[2]]) else {
                continue;
            };
            let faces_load = match facing {
                Some(t) => n[0] * t[0] + n[1] * t[1] + n[2] * t[2] <= -0.9,
                None => true,
            };
            if f.abs() < SURFACE_BAND && load.contains(p) && bounds.contains(p) && faces_load {
                points.push(p);
                normals.push(n);
                traction.push(bspec.traction);
                loaded.push(true);
                found += 1;
                if found == n_loaded {
                    break;
                }
            }
        }
    }
    if found < n_loaded {
        return Err(Error::Sampling(format!(
            "found only {found} of {n_loaded} loaded surface points; check that the load band meets the shape"
        )));
    }

    for i in 0..n_faces {
        let face = i % 6;
        let axis = face / 2;
        let mut p = uniform_point(&mut rng, &bounds);
        let mut n = [0.0; 3];
        if face % 2 == 0 {
            p[axis] = bounds.lo;
            n[axis] = -1.0;
        } else {
            p[axis] = bounds.hi;
            n[axis] = 1.0;
        }
        points.push(p);
        normals.push(n);
        traction.push([0.0; 3]);
        loaded.push(false);
    }
    Ok((dirichlet, TractionSet { points, normals, traction, loaded }))
}

/// Exterior points with `f < -margin`, paired with their current density.
pub fn build_constraint_set(
    field: &dyn ScalarField,
    dp: &DensityParams,
    bounds: Bounds,
    margin: f64,
    n: usize,
    seed: u64,
) -> Result<ConstraintSet> {
    if !(margin > 0.0) {
        return Err(Error::config("constraint margin must be positive"));
    }
    if n == 0 {
        return Err(Error::config("constraint sample count must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let found =
        rejection(field, n, &mut rng, |r| uniform_point(r, &bounds), |_, f| f < -margin, "exterior constraint")?;
    Ok(ConstraintSet {
        density: found.iter().map(|&(_, f)| dp.density_of(f)).collect(),
        points: found.into_iter().map(|(p, _)| p).collect(),
    })
}

/// All sets from one seed; each sampler gets its own derived stream.
pub fn build_sample_sets(
    field: &dyn ScalarField,
    dp: &DensityParams,
    bspec: &BoundarySpec,
    bounds: Bounds,
    counts: &SampleCounts,
    ds: &DenseSparseConfig,
    seed: u64,
) -> Result<SampleSets> {
    counts.validate()?;
    let domain = sample_domain(field, bounds, counts.domain, ds, seed)?;
    let (dirichlet, traction) =
        sample_boundaries(bspec, field, bounds, counts.dirichlet, counts.traction, seed.wrapping_add(1))?;
    let constraint = build_constraint_set(field, dp, bounds, counts.margin, counts.constraint, seed.wrapping_add(2))?;
    Ok(SampleSets { domain, dirichlet, traction, constraint, seed })
}

fn write_rows(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    w.write_record(header).map_err(|e| csv_io(path, e))?;
    for row in rows {
        w.write_record(row.iter().map(|v| format!("{v:e}"))).map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn csv_io(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::io(path, std::io::Error::other(format!("{other:?}"))),
    }
}

impl SampleSets {
    /// Write `domain.csv`, `dirichlet.csv`, `traction.csv` and
    /// `constraint.csv` into `dir`.
    pub fn write_csv(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let d = &self.domain;
        write_rows(
            &dir.join("domain.csv"),
            &["x1", "x2", "x3", "dense"],
            d.points.iter().zip(&d.dense).map(|(p, &t)| vec![p[0], p[1], p[2], t as u8 as f64]),
        )?;
        let u = &self.dirichlet;
        write_rows(
            &dir.join("dirichlet.csv"),
            &["x1", "x2", "x3", "u1", "u2", "u3"],
            u.points.iter().zip(&u.values).map(|(p, v)| vec![p[0], p[1], p[2], v[0], v[1], v[2]]),
        )?;
        let t = &self.traction;
        write_rows(
            &dir.join("traction.csv"),
            &["x1", "x2", "x3", "n1", "n2", "n3", "f1", "f2", "f3", "loaded"],
            (0..t.len()).map(|i| {
                let (p, n, f) = (t.points[i], t.normals[i], t.traction[i]);
                vec![p[0], p[1], p[2], n[0], n[1], n[2], f[0], f[1], f[2], t.loaded[i] as u8 as f64]
            }),
        )?;
        let c = &self.constraint;
        write_rows(
            &dir.join("constraint.csv"),
            &["x1", "x2", "x3", "rho"],
            c.points.iter().zip(&c.density).map(|(p, &r)| vec![p[0], p[1], p[2], r]),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{AnalyticField, Shape};

    fn sphere(r: f64) -> Shape {
        Shape::Sphere { center: [0.0; 3], radius: r }
    }

    #[test]
    fn dense_sparse_split() {
        let s = sphere(0.5);
        let d = sample_domain(&s, Bounds::default(), 1000, &DenseSparseConfig::default(), 4).unwrap();
        assert_eq!(d.len(), 1000);
        assert_eq!(d.dense.iter().filter(|t| **t).count(), 700);
        for (p, &t) in d.points.iter().zip(&d.dense) {
            let f = s.sdf(*p);
            assert_eq!(t, f.abs() < 0.1 || f >= 0.0);
        }
    }

    #[test]
    fn uniform_when_all_sparse() {
        let cfg = DenseSparseConfig { sparse_fraction: 1.0, threshold: 0.1 };
        let n = 8000;
        let d = sample_domain(&sphere(0.5), Bounds::default(), n, &cfg, 9).unwrap();
        let mut oct = [0usize; 8];
        for p in &d.points {
            let i = (p[0] > 0.0) as usize | ((p[1] > 0.0) as usize) << 1 | ((p[2] > 0.0) as usize) << 2;
            oct[i] += 1;
        }
        let mean = n as f64 / 8.0;
        let sd = (n as f64 * (1.0 / 8.0) * (7.0 / 8.0)).sqrt();
        for c in oct {
            assert!((c as f64 - mean).abs() < 4.0 * sd, "{oct:?}");
        }
    }

    #[test]
    fn deterministic() {
        let cfg = DenseSparseConfig::default();
        let a = sample_domain(&sphere(0.4), Bounds::default(), 300, &cfg, 1).unwrap();
        let b = sample_domain(&sphere(0.4), Bounds::default(), 300, &cfg, 1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn degenerate_field_has_no_dense_region() {
        let far = AnalyticField(|_: [f64; 3]| -5.0);
        let err = sample_domain(&far, Bounds::default(), 10, &DenseSparseConfig::default(), 0).unwrap_err();
        assert!(matches!(err, Error::Sampling(_)));
    }

    #[test]
    fn boundaries_of_a_box() {
        let shape = Shape::Cuboid { lo: [-0.5, -0.5, -0.9], hi: [0.5, 0.5, 0.6] };
        let bspec = BoundarySpec::default();
        let (dir, tr) = sample_boundaries(&bspec, &shape, Bounds::default(), 200, 300, 2).unwrap();
        assert_eq!(dir.points.len(), 200);
        assert!(dir.points.iter().all(|p| p[2] <= -0.8));
        assert!(dir.values.iter().all(|v| *v == [0.0; 3]));
        assert_eq!(tr.len(), 300);
        assert_eq!(tr.n_loaded(), 150);
        for i in 0..tr.len() {
            let n = tr.normals[i];
            assert!(((n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt() - 1.0).abs() < 1e-12);
            if tr.loaded[i] {
                assert!(shape.sdf(tr.points[i]).abs() < 0.02);
                assert_eq!(tr.traction[i], [0.0, 0.0, -0.01]);
                assert!((tr.points[i][2] - 0.6).abs() < 1e-9);
                assert!(n[2] >= 0.9, "{:?} {n:?}", tr.points[i]);
            } else {
                assert_eq!(tr.traction[i], [0.0; 3]);
                let axis = n.iter().position(|v| v.abs() == 1.0).unwrap();
                assert_eq!(tr.points[i][axis], n[axis]);
            }
        }
    }

    #[test]
    fn unsupported_structure_is_rejected() {
        let floating = sphere(0.3);
        let err = sample_boundaries(&BoundarySpec::default(), &floating, Bounds::default(), 5, 5, 0).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
    }

    #[test]
    fn constraint_set_is_exterior() {
        let s = sphere(0.5);
        let dp = DensityParams::default();
        let c = build_constraint_set(&s, &dp, Bounds::default(), 0.1, 500, 3).unwrap();
        let bound = dp.density_of(-0.1);
        for (p, &r) in c.points.iter().zip(&c.density) {
            assert!(-s.sdf(*p) > 0.1);
            assert!(r < bound && r > 0.0);
        }
        assert!(build_constraint_set(&s, &dp, Bounds::default(), 4.0, 10, 3).is_err());
        let tiny = sphere(0.01);
        assert_eq!(build_constraint_set(&tiny, &dp, Bounds::default(), 0.005, 2000, 1).unwrap().len(), 2000);
    }

    #[test]
    fn csv_output() {
        let dir = tempfile::tempdir().unwrap();
        let s = Shape::Cuboid { lo: [-0.5, -0.5, -0.9], hi: [0.5, 0.5, 0.6] };
        let sets = build_sample_sets(
            &s,
            &DensityParams::default(),
            &BoundarySpec::default(),
            Bounds::default(),
            &SampleCounts { domain: 50, dirichlet: 10, traction: 12, constraint: 20, margin: 0.1 },
            &DenseSparseConfig::default(),
            5,
        )
        .unwrap();
        sets.write_csv(dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("traction.csv")).unwrap();
        assert_eq!(text.lines().count(), 13);
        assert!(text.starts_with("x1,x2,x3,n1,n2,n3,f1,f2,f3,loaded"));
    }
}
