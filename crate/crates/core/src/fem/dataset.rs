//! Point-wise FEM anchor data: export from a solution, CSV persistence and
//! import of externally generated files.

use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::elasticity::StressTensor;
use crate::error::{Error, Result};
use crate::geometry::Bounds;
use crate::sampling::csv_io;

use super::mesh::HexMesh;
use super::solver::FemSolution;

pub const HEADER: [&str; 12] = ["x1", "x2", "x3", "u1", "u2", "u3", "s11", "s22", "s33", "s12", "s13", "s23"];

/// Share of exported points taken from element centroids.
const CENTROID_SHARE: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Internal,
    Imported,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FemDataset {
    pub points: Vec<[f64; 3]>,
    pub displacement: Vec<[f64; 3]>,
    pub stress: Vec<StressTensor>,
    pub provenance: Provenance,
}

impl FemDataset {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Records `ids` as a new dataset.
    pub fn subset(&self, ids: &[usize]) -> FemDataset {
        FemDataset {
            points: ids.iter().map(|&i| self.points[i]).collect(),
            displacement: ids.iter().map(|&i| self.displacement[i]).collect(),
            stress: ids.iter().map(|&i| self.stress[i]).collect(),
            provenance: self.provenance,
        }
    }

    /// Deterministic split into `(train, holdout)` with `holdout_fraction`
    /// of the records held out.
    pub fn split(&self, holdout_fraction: f64, seed: u64) -> (FemDataset, FemDataset) {
        let n = self.len();
        let n_hold = ((holdout_fraction.clamp(0.0, 1.0)) * n as f64).round() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut hold: Vec<usize> = sample(&mut rng, n, n_hold).into_vec();
        hold.sort_unstable();
        let mut is_hold = vec![false; n];
        for &i in &hold {
            is_hold[i] = true;
        }
        let train: Vec<usize> = (0..n).filter(|&i| !is_hold[i]).collect();
        (self.subset(&train), self.subset(&hold))
    }

    pub fn validate(&self, bounds: &Bounds) -> Result<()> {
        for i in 0..self.len() {
            let finite =
                self.points[i].iter().chain(&self.displacement[i]).chain(&self.stress[i].0).all(|v| v.is_finite());
            if !finite {
                return Err(Error::Validation(format!("record {} has a non-finite entry", i + 1)));
            }
            if !bounds.contains(self.points[i]) {
                return Err(Error::Validation(format!(
                    "record {} lies outside the domain: {:?}",
                    i + 1,
                    self.points[i]
                )));
            }
        }
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(path)
            .map_err(|e| csv_io(path, e))?;
        w.write_record(HEADER).map_err(|e| csv_io(path, e))?;
        for i in 0..self.len() {
            let row =
                self.points[i].iter().chain(&self.displacement[i]).chain(&self.stress[i].0).map(|v| format!("{v:e}"));
            w.write_record(row).map_err(|e| csv_io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Sample `n_points` records: 70% at active element centroids (element
/// stress, averaged nodal displacement), 30% at surface nodes (nodal
/// displacement, mean stress of adjacent elements).
pub fn export_dataset(sol: &FemSolution, mesh: &HexMesh, n_points: usize, seed: u64) -> FemDataset {
    let mut n_cent = (CENTROID_SHARE * n_points as f64).round() as usize;
    let mut n_surf = n_points - n_cent;
    let surface = mesh.surface_nodes();
    if n_cent > mesh.n_elements() {
        log::warn!("requested {n_cent} centroid records but the mesh has {} elements; clamping", mesh.n_elements());
        n_cent = mesh.n_elements();
    }
    if n_surf > surface.len() {
        log::warn!("requested {n_surf} surface records but the mesh has {} surface nodes; clamping", surface.len());
        n_surf = surface.len();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cent: Vec<usize> = sample(&mut rng, mesh.n_elements(), n_cent).into_vec();
    cent.sort_unstable();
    let mut surf: Vec<usize> = sample(&mut rng, surface.len(), n_surf).into_vec();
    surf.sort_unstable();

    let mut ds = FemDataset {
        points: Vec::with_capacity(n_cent + n_surf),
        displacement: Vec::with_capacity(n_cent + n_surf),
        stress: Vec::with_capacity(n_cent + n_surf),
        provenance: Provenance::Internal,
    };
    for e in cent {
        let mut u = [0.0; 3];
        for &n in &mesh.conn[e] {
            for i in 0..3 {
                u[i] += 0.125 * sol.displacement[n][i];
            }
        }
        ds.points.push(mesh.element_center(e));
        ds.displacement.push(u);
        ds.stress.push(sol.stress[e]);
    }
    let adj = mesh.node_elements();
    for s in surf {
        let n = surface[s];
        let mut sig = [0.0; 6];
        for &e in &adj[n] {
            for (k, v) in sig.iter_mut().enumerate() {
                *v += sol.stress[e].0[k];
            }
        }
        let w = 1.0 / adj[n].len() as f64;
        ds.points.push(mesh.nodes[n]);
        ds.displacement.push(sol.displacement[n]);
        ds.stress.push(StressTensor(sig.map(|v| v * w)));
    }
    ds
}

/// Read a dataset file, checking the header, every row's arity, finiteness
/// and that points lie in `bounds`.
pub fn import_dataset(path: &Path, bounds: &Bounds) -> Result<FemDataset> {
    let name = path.display().to_string();
    let mut rdr =
        csv::ReaderBuilder::new().has_headers(true).flexible(true).from_path(path).map_err(|e| csv_io(path, e))?;
    let header = rdr.headers().map_err(|e| csv_io(path, e))?.clone();
    if header.iter().map(str::trim).ne(HEADER) {
        return Err(Error::Parse { path: name, line: 1, detail: format!("expected header {}", HEADER.join(",")) });
    }
    let mut ds = FemDataset {
        points: Vec::new(),
        displacement: Vec::new(),
        stress: Vec::new(),
        provenance: Provenance::Imported,
    };
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            Error::Parse { path: name.clone(), line, detail: e.to_string() }
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() != 12 {
            return Err(Error::Parse { path: name, line, detail: format!("expected 12 fields, found {}", rec.len()) });
        }
        let mut v = [0.0f64; 12];
        for (k, field) in rec.iter().enumerate() {
            v[k] = field.trim().parse().map_err(|_| Error::Parse {
                path: name.clone(),
                line,
                detail: format!("column {} is not a number: {field:?}", HEADER[k]),
            })?;
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Validation(format!("{name}: row at line {line} has a non-finite entry")));
        }
        let p = [v[0], v[1], v[2]];
        if !bounds.contains(p) {
            return Err(Error::Validation(format!("{name}: row at line {line} lies outside the domain: {p:?}")));
        }
        ds.points.push(p);
        ds.displacement.push([v[3], v[4], v[5]]);
        ds.stress.push(StressTensor([v[6], v[7], v[8], v[9], v[10], v[11]]));
    }
    if ds.is_empty() {
        return Err(Error::Validation(format!("{name}: dataset has no records")));
    }
    Ok(ds)
}
