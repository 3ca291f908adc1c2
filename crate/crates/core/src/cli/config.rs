use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cotrain::{Ablation, CoTrainConfig};
use crate::elasticity::{self, BoundarySpec, MaterialModel};
use crate::error::{Error, Result};
use crate::geometry::{DensityParams, FitConfig, Shape};
use crate::physics::PretrainConfig;
use crate::sampling::{DenseSparseConfig, SampleCounts};

/// Where the initial shape comes from: an OBJ file or an analytic solid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    /// Triangle mesh (OBJ), relative to the config file.
    pub mesh: Option<PathBuf>,
    pub shape: Option<Shape>,
    /// Grid resolution used to mesh `shape`.
    #[serde(default = "default_shape_resolution")]
    pub shape_resolution: usize,
    /// Rescale the mesh so its largest half-extent equals this value.
    pub normalize: Option<f64>,
}

fn default_shape_resolution() -> usize {
    96
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Marching resolution of the output mesh and of the before/after FEM
    /// comparison.
    pub mesh_resolution: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("runs"), mesh_resolution: 64 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DensityConfig {
    /// Sigmoid temperature, in domain units.
    pub tau: f64,
}

impl Default for DensityConfig {
    fn default() -> Self {
        DensityConfig { tau: 0.02 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FemConfig {
    /// Voxels per axis over the domain cube.
    pub resolution: usize,
    /// Density at a voxel centre for the voxel to be solid.
    pub threshold: f64,
    /// Records exported to the anchor dataset.
    pub samples: usize,
    /// Share of the records held out to measure pretraining accuracy.
    pub holdout: f64,
    /// Use this anchor dataset (CSV) instead of solving.
    pub import: Option<PathBuf>,
}

impl Default for FemConfig {
    fn default() -> Self {
        FemConfig { resolution: 48, threshold: 0.5, samples: 7000, holdout: 0.1, import: None }
    }
}

/// Everything one run needs. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Shape name used in reports and as the run directory.
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub input: InputConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub density: DensityConfig,
    #[serde(default)]
    pub samples: SampleCounts,
    #[serde(default)]
    pub sampling: DenseSparseConfig,
    #[serde(default)]
    pub material: MaterialModel,
    #[serde(default)]
    pub boundary: BoundarySpec,
    #[serde(default)]
    pub fem: FemConfig,
    #[serde(default)]
    pub pretrain: PretrainConfig,
    #[serde(default)]
    pub cotrain: CoTrainConfig,
}

fn section(name: &str, r: Result<()>) -> Result<()> {
    r.map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("[{name}] {m}")),
        other => other,
    })
}

impl RunConfig {
    /// Parse and validate; relative input paths are resolved against the
    /// directory of `path`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = RunConfig::parse(&text, &path.display().to_string())?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [cfg.input.mesh.as_mut(), cfg.fem.import.as_mut()].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| text[..s.start.min(text.len())].lines().count().max(1)).unwrap_or(0);
            Error::Parse { path: origin.to_string(), line, detail: e.message().to_string() }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) || self.name.starts_with('.') {
            return Err(Error::config("name must be a plain non-empty file name"));
        }
        match (&self.input.mesh, &self.input.shape) {
            (Some(_), Some(_)) => return Err(Error::config("[input] give either mesh or shape, not both")),
            (None, None) => return Err(Error::config("[input] one of mesh or shape is required")),
            _ => {}
        }
        if self.input.shape_resolution < 8 {
            return Err(Error::config("[input] shape_resolution must be at least 8"));
        }
        if let Some(h) = self.input.normalize {
            if !(h > 0.0 && h < 0.95) {
                return Err(Error::config("[input] normalize must lie in (0, 0.95)"));
            }
        }
        if self.output.mesh_resolution < 16 {
            return Err(Error::config("[output] mesh_resolution must be at least 16"));
        }
        section("fit", self.fit.validate())?;
        section("density", DensityParams::new(self.density.tau).map(|_| ()))?;
        section("samples", self.samples.validate())?;
        section("sampling", self.sampling.validate())?;
        section("material", elasticity::lame(self.material.youngs(), self.material.poisson()).map(|_| ()))?;
        section("boundary", self.boundary.validate())?;
        if self.fem.resolution < 16 {
            return Err(Error::config(format!("[fem] resolution must be at least 16, got {}", self.fem.resolution)));
        }
        if !(self.fem.threshold > 0.0 && self.fem.threshold < 1.0) {
            return Err(Error::config("[fem] threshold must lie in (0, 1)"));
        }
        if self.fem.samples == 0 {
            return Err(Error::config("[fem] samples must be positive"));
        }
        if !(0.0..1.0).contains(&self.fem.holdout) {
            return Err(Error::config("[fem] holdout must lie in [0, 1)"));
        }
        section("pretrain", self.pretrain.validate())?;
        section("cotrain", self.cotrain.validate())
    }

    pub fn density_params(&self) -> DensityParams {
        DensityParams::new(self.density.tau).expect("validated")
    }

    /// One seed for every stage.
    pub fn apply_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.fit.seed = seed;
        self.pretrain.seed = seed;
    }

    /// Ablation switches; dropping the anchors applies to pretraining too.
    pub fn apply_ablation(&mut self, a: Ablation) {
        let cur = &mut self.cotrain.ablation;
        cur.no_gc |= a.no_gc;
        cur.no_fem_embed |= a.no_fem_embed;
        cur.no_design |= a.no_design;
        cur.no_physics |= a.no_physics;
        if cur.no_fem_embed {
            self.pretrain.weights.fem = 0.0;
        }
    }

    pub fn run_dir(&self) -> PathBuf {
        self.output.dir.join(&self.name)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(format!("cannot serialize config: {e}")))
    }
}

/// Content hashes of the stages; each covers its own settings and the
/// hash of the stage it builds on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageHashes {
    pub fit: String,
    pub fem: String,
    pub pretrain: String,
    pub cotrain: String,
}

fn digest(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    h.finalize().iter().take(6).map(|b| format!("{b:02x}")).collect()
}

fn ser<T: Serialize>(v: &T) -> String {
    // toml cannot encode bare scalars or enums at the top level
    #[derive(Serialize)]
    struct Wrap<'a, T> {
        v: &'a T,
    }
    toml::to_string(&Wrap { v }).expect("config sections serialize")
}

impl StageHashes {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        let mesh_bytes = match &cfg.input.mesh {
            Some(p) => {
                let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
                Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
            }
            None => String::new(),
        };
        let import_bytes = match &cfg.fem.import {
            Some(p) => {
                let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
                Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
            }
            None => String::new(),
        };
        let input = InputConfig { mesh: None, ..cfg.input.clone() };
        let fit = digest(&["fit", &ser(&input), &mesh_bytes, &ser(&cfg.fit)]);
        let fem_cfg = FemConfig { import: None, ..cfg.fem.clone() };
        let fem = digest(&[
            "fem",
            &fit,
            &ser(&cfg.density),
            &ser(&cfg.material),
            &ser(&cfg.boundary),
            &ser(&fem_cfg),
            &import_bytes,
            &cfg.seed.to_string(),
        ]);
        let pretrain = digest(&["pretrain", &fem, &ser(&cfg.samples), &ser(&cfg.sampling), &ser(&cfg.pretrain)]);
        let cotrain = digest(&["cotrain", &pretrain, &ser(&cfg.cotrain), &ser(&cfg.output)]);
        Ok(StageHashes { fit, fem, pretrain, cotrain })
    }
}
