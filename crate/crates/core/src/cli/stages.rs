//! Cached pipeline stages. Each stage writes into
//! `<output>/<name>/<stage>-<hash>/` and finishes by writing its summary
//! file; a directory with a summary is reused by downstream stages.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::autodiff::checkpoint;
use crate::cotrain::{compare_fem, cotrain, CoTrainData};
use crate::error::{Error, Result};
use crate::fem::{self, FemDataset, Provenance};
use crate::geometry::{extract_mesh, fit_quality, fit_sdf, Bounds, SdfField, TriangleMesh};
use crate::physics::{pretrain, relative_l2_error, write_history, DisplacementField, PhysicsBatches};
use crate::sampling::{build_sample_sets, SampleSets};

use super::config::{RunConfig, StageHashes};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Fit,
    Fem,
    Pretrain,
    Cotrain,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Fit, Stage::Fem, Stage::Pretrain, Stage::Cotrain];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Fit => "fit",
            Stage::Fem => "fem",
            Stage::Pretrain => "pretrain",
            Stage::Cotrain => "cotrain",
        }
    }

    /// File whose presence marks the stage as complete.
    pub fn summary_file(self) -> &'static str {
        match self {
            Stage::Fit => "fit.toml",
            Stage::Fem => "fem.toml",
            Stage::Pretrain => "pretrain.toml",
            Stage::Cotrain => "summary.toml",
        }
    }

    /// Checkpoints the stage leaves behind.
    pub fn checkpoints(self) -> &'static [&'static str] {
        match self {
            Stage::Fit => &["geometry.ckpt"],
            Stage::Fem => &[],
            Stage::Pretrain => &["physics.ckpt"],
            Stage::Cotrain => &["geometry_final.ckpt", "physics_final.ckpt"],
        }
    }

    fn upstream(self) -> Option<Stage> {
        match self {
            Stage::Fit => None,
            Stage::Fem => Some(Stage::Fit),
            Stage::Pretrain => Some(Stage::Fem),
            Stage::Cotrain => Some(Stage::Pretrain),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub final_loss: f64,
    pub surface_error: f64,
    pub eikonal: f64,
    pub interior_agreement: f64,
    pub mesh_volume: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FemSummary {
    pub imported: bool,
    pub records: usize,
    pub elements: Option<usize>,
    pub max_von_mises: Option<f64>,
    pub iterations: Option<usize>,
    pub residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainSummary {
    pub epochs: usize,
    pub final_total: Option<f64>,
    pub final_pde: Option<f64>,
    pub final_bc: Option<f64>,
    pub final_fem: Option<f64>,
    pub train_error: f64,
    pub holdout_error: Option<f64>,
}

/// Wall-clock time of a stage, kept apart from the reproducible summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_seconds: f64,
}

pub const TIMING_FILE: &str = "timing.toml";

/// Resolved configuration and stage directories of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub stages: StageDirs,
    pub config: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageDirs {
    pub fit: String,
    pub fem: String,
    pub pretrain: String,
    pub cotrain: String,
}

impl StageDirs {
    pub fn get(&self, s: Stage) -> &str {
        match s {
            Stage::Fit => &self.fit,
            Stage::Fem => &self.fem,
            Stage::Pretrain => &self.pretrain,
            Stage::Cotrain => &self.cotrain,
        }
    }
}

fn to_toml<T: Serialize>(v: &T) -> Result<String> {
    toml::to_string(v).map_err(|e| Error::config(format!("cannot serialize summary: {e}")))
}

pub fn write_toml<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    std::fs::write(path, to_toml(v)?).map_err(|e| Error::io(path, e))
}

pub fn read_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Integrity { path: path.to_path_buf(), detail: e.message().to_string() })
}

pub struct Pipeline {
    pub cfg: RunConfig,
    pub dirs: StageDirs,
    root: PathBuf,
}

impl Pipeline {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let h = StageHashes::new(&cfg)?;
        let dirs = StageDirs {
            fit: format!("fit-{}", h.fit),
            fem: format!("fem-{}", h.fem),
            pretrain: format!("pretrain-{}", h.pretrain),
            cotrain: format!("cotrain-{}", h.cotrain),
        };
        Ok(Pipeline { root: cfg.run_dir(), cfg, dirs })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn dir(&self, s: Stage) -> PathBuf {
        self.root.join(self.dirs.get(s))
    }

    fn is_done(&self, s: Stage) -> bool {
        self.dir(s).join(s.summary_file()).is_file()
    }

    /// Run `stage`, reusing finished upstream stages and computing missing
    /// ones. The requested stage is always recomputed.
    pub fn run(&self, stage: Stage) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.root).map_err(|e| Error::io(&self.root, e))?;
        write_toml(&self.root.join("run.toml"), &RunRecord { stages: self.dirs.clone(), config: self.cfg.clone() })?;
        let mut chain = vec![stage];
        while let Some(up) = chain.last().unwrap().upstream() {
            chain.push(up);
        }
        for &s in chain.iter().rev() {
            if s != stage && self.is_done(s) {
                log::info!("{}: reusing {}", s.name(), self.dir(s).display());
                continue;
            }
            self.compute(s)?;
        }
        Ok(self.dir(stage))
    }

    fn compute(&self, s: Stage) -> Result<()> {
        let dir = self.dir(s);
        if dir.exists() {
            std::fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        log::info!("{}: computing into {}", s.name(), dir.display());
        let t0 = Instant::now();
        let summary = match s {
            Stage::Fit => self.fit(&dir)?,
            Stage::Fem => self.fem(&dir)?,
            Stage::Pretrain => self.pretrain(&dir)?,
            Stage::Cotrain => self.cotrain(&dir)?,
        };
        write_toml(&dir.join(TIMING_FILE), &Timing { wall_seconds: t0.elapsed().as_secs_f64() })?;
        // written last: its presence marks the stage complete
        let path = dir.join(s.summary_file());
        std::fs::write(&path, summary).map_err(|e| Error::io(&path, e))
    }

    fn bounds(&self) -> Bounds {
        Bounds::default()
    }

    /// The input surface, normalized when requested.
    pub fn input_mesh(&self) -> Result<TriangleMesh> {
        let inp = &self.cfg.input;
        let mut mesh = match (&inp.mesh, &inp.shape) {
            (Some(p), _) => TriangleMesh::read_obj(p)?,
            (None, Some(shape)) => extract_mesh(shape, self.bounds(), inp.shape_resolution)?,
            (None, None) => return Err(Error::config("[input] one of mesh or shape is required")),
        };
        if let Some(h) = inp.normalize {
            mesh.normalize(h)?;
        }
        mesh.ensure_watertight()?;
        Ok(mesh)
    }

    fn load_geometry(&self, path: &Path) -> Result<SdfField> {
        SdfField::from_tensors(&checkpoint::load(path)?).map_err(|e| integrity(path, e))
    }

    fn load_physics(&self, path: &Path) -> Result<DisplacementField> {
        DisplacementField::from_tensors(&checkpoint::load(path)?).map_err(|e| integrity(path, e))
    }

    fn load_dataset(&self) -> Result<FemDataset> {
        let path = self.dir(Stage::Fem).join("dataset.csv");
        let mut ds = fem::import_dataset(&path, &self.bounds())?;
        let s: FemSummary = read_toml(&self.dir(Stage::Fem).join("fem.toml"))?;
        if !s.imported {
            ds.provenance = Provenance::Internal;
        }
        Ok(ds)
    }

    fn sample_sets(&self, g: &SdfField) -> Result<SampleSets> {
        let c = &self.cfg;
        build_sample_sets(g, &c.density_params(), &c.boundary, self.bounds(), &c.samples, &c.sampling, c.seed)
    }

    fn fit(&self, dir: &Path) -> Result<String> {
        let mesh = self.input_mesh()?;
        mesh.write_obj(&dir.join("input.obj"))?;
        let (field, report) = fit_sdf(&mesh, &self.cfg.fit)?;
        checkpoint::save(&dir.join("geometry.ckpt"), &field.to_tensors())?;
        let q = fit_quality(&field, &mesh, 4096, self.cfg.seed)?;
        log::info!("fit: surface error {:.3e}, interior agreement {:.3}", q.surface_error, q.interior_agreement);
        to_toml(&FitSummary {
            final_loss: report.epoch_loss.last().copied().unwrap_or(f64::NAN),
            surface_error: q.surface_error,
            eikonal: q.eikonal,
            interior_agreement: q.interior_agreement,
            mesh_volume: mesh.volume(),
        })
    }

    fn fem(&self, dir: &Path) -> Result<String> {
        let c = &self.cfg;
        let summary = if let Some(path) = &c.fem.import {
            let ds = fem::import_dataset(path, &self.bounds())?;
            ds.write_csv(&dir.join("dataset.csv"))?;
            FemSummary {
                imported: true,
                records: ds.len(),
                elements: None,
                max_von_mises: None,
                iterations: None,
                residual: None,
            }
        } else {
            let g = self.load_geometry(&self.dir(Stage::Fit).join("geometry.ckpt"))?;
            let hex = fem::voxelize(&g, &c.density_params(), self.bounds(), c.fem.resolution, c.fem.threshold)?;
            let sol = fem::solve(&hex, &c.material, &c.boundary)?;
            let ds = fem::export_dataset(&sol, &hex, c.fem.samples, c.seed);
            ds.write_csv(&dir.join("dataset.csv"))?;
            let vm = fem::max_von_mises(&sol);
            log::info!("fem: {} elements, max von Mises {vm:.4e}, {} iterations", hex.n_elements(), sol.iterations);
            FemSummary {
                imported: false,
                records: ds.len(),
                elements: Some(hex.n_elements()),
                max_von_mises: Some(vm),
                iterations: Some(sol.iterations),
                residual: Some(sol.residual),
            }
        };
        to_toml(&summary)
    }

    fn pretrain(&self, dir: &Path) -> Result<String> {
        let c = &self.cfg;
        let g = self.load_geometry(&self.dir(Stage::Fit).join("geometry.ckpt"))?;
        let data = self.load_dataset()?;
        let (train, holdout) = data.split(c.fem.holdout, c.seed);
        let sets = self.sample_sets(&g)?;
        sets.write_csv(&dir.join("samples"))?;
        let batches = PhysicsBatches::new(
            &sets.domain.points,
            &sets.dirichlet,
            &sets.traction,
            (c.pretrain.weights.fem > 0.0).then_some(&train),
            c.boundary.body_force,
            c.pretrain.batch,
            c.seed,
        )?;
        let mut u = DisplacementField::tanh(&c.pretrain.hidden, c.pretrain.output_scale, c.pretrain.seed)?;
        let result = pretrain(&mut u, &g, &c.density_params(), &c.material, &batches, &c.pretrain);
        // on divergence `u` holds the best parameters seen; keep them
        checkpoint::save(&dir.join("physics.ckpt"), &u.to_tensors())?;
        let report = result?;
        write_history(&dir.join("history.csv"), &report.history)?;
        let last = report.history.last();
        let holdout_error = (!holdout.is_empty()).then(|| relative_l2_error(&u, &holdout));
        let train_error = relative_l2_error(&u, &train);
        log::info!("pretrain: train error {train_error:.4}, holdout error {holdout_error:?}");
        to_toml(&PretrainSummary {
            epochs: report.history.len(),
            final_total: last.map(|r| r.total),
            final_pde: last.map(|r| r.pde),
            final_bc: last.map(|r| r.bc),
            final_fem: last.map(|r| r.fem),
            train_error,
            holdout_error,
        })
    }

    fn cotrain(&self, dir: &Path) -> Result<String> {
        let c = &self.cfg;
        let g0 = self.load_geometry(&self.dir(Stage::Fit).join("geometry.ckpt"))?;
        let mut u = self.load_physics(&self.dir(Stage::Pretrain).join("physics.ckpt"))?;
        let data = self.load_dataset()?;
        let (train, _) = data.split(c.fem.holdout, c.seed);
        let sets = self.sample_sets(&g0)?;
        let batches = PhysicsBatches::new(
            &sets.domain.points,
            &sets.dirichlet,
            &sets.traction,
            (!c.cotrain.ablation.no_fem_embed).then_some(&train),
            c.boundary.body_force,
            c.cotrain.batch,
            c.seed,
        )?;
        let mut g = g0.clone();
        let mut report = cotrain(
            &mut u,
            &mut g,
            &c.density_params(),
            &c.material,
            &CoTrainData { batches: &batches, constraint: &sets.constraint },
            &c.cotrain,
        )?;
        checkpoint::save(&dir.join("geometry_final.ckpt"), &g.to_tensors())?;
        checkpoint::save(&dir.join("physics_final.ckpt"), &u.to_tensors())?;
        report.write_csv(&dir.join("history.csv"))?;
        let (cmp, out) = compare_fem(&g0, &g, self.bounds(), &c.material, &c.boundary, c.output.mesh_resolution)?;
        out.write_obj(&dir.join("output.obj"))?;
        log::info!(
            "cotrain: max von Mises {:.4e} -> {:.4e} ({:+.1}%)",
            cmp.initial_max_von_mises,
            cmp.final_max_von_mises,
            -100.0 * cmp.reduction()
        );
        report.summary.fem = Some(cmp);
        to_toml(&report.summary)
    }
}

fn integrity(path: &Path, e: Error) -> Error {
    match e {
        Error::Validation(detail) | Error::Config(detail) => Error::Integrity { path: path.to_path_buf(), detail },
        other => other,
    }
}
