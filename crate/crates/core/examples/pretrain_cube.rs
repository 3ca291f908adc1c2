//! Pretrain the displacement network on a compressed cube, with and
//! without FEM anchors, and compare against held-out FEM nodes.
//!
//! `EPOCHS`, `HIDDEN` (e.g. `32,32,32`) and `FEM_RES` override the defaults.

use std::time::Instant;

use stressfield::elasticity::{AxisBand, BoundarySpec, MaterialModel};
use stressfield::fem;
use stressfield::geometry::{Bounds, DensityParams, Shape};
use stressfield::physics::{
    pretrain, relative_l2_error, DisplacementField, PhysicsBatches, PhysicsWeights, PretrainConfig,
};
use stressfield::sampling::{build_sample_sets, DenseSparseConfig, SampleCounts};

fn env_or<T: std::str::FromStr>(key: &str, default: T) -> T {
    std::env::var(key).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}

fn main() -> stressfield::Result<()> {
    env_logger::init();
    let epochs: usize = env_or("EPOCHS", 2000);
    let hidden: Vec<usize> = std::env::var("HIDDEN")
        .unwrap_or_else(|_| "32,32,32".into())
        .split(',')
        .map(|s| s.trim().parse().expect("HIDDEN takes comma-separated widths"))
        .collect();
    let res: usize = env_or("FEM_RES", 32);

    // faces on voxel planes at the default resolution
    let cube = Shape::Cuboid { lo: [-0.625; 3], hi: [0.625; 3] };
    let bounds = Bounds::default();
    let dp = DensityParams::default();
    let mat = MaterialModel::default();
    let bspec = BoundarySpec {
        support: AxisBand { axis: 2, lo: -1.0, hi: -0.55 },
        prescribed: [0.0; 3],
        load: AxisBand { axis: 2, lo: 0.55, hi: 1.0 },
        traction: [0.0, 0.0, -0.01],
        body_force: [0.0; 3],
    };

    let t = Instant::now();
    let mesh = fem::voxelize(&cube, &dp, bounds, res, 0.5)?;
    let sol = fem::solve(&mesh, &mat, &bspec)?;
    let data = fem::export_dataset(&sol, &mesh, 4096, 7);
    let (train, hold) = data.split(0.2, 7);
    println!(
        "fem: {} elements, max von Mises {:.4e}, {} cg iterations, {:.1}s",
        mesh.n_elements(),
        fem::max_von_mises(&sol),
        sol.iterations,
        t.elapsed().as_secs_f64()
    );

    let counts = SampleCounts::default();
    let sets = build_sample_sets(&cube, &dp, &bspec, bounds, &counts, &DenseSparseConfig::default(), 3)?;

    for w_fem in [1.0, 0.0] {
        let cfg = PretrainConfig {
            hidden: hidden.clone(),
            epochs,
            weights: PhysicsWeights { fem: w_fem, ..Default::default() },
            ..Default::default()
        };
        let batches = PhysicsBatches::new(
            &sets.domain.points,
            &sets.dirichlet,
            &sets.traction,
            Some(&train),
            bspec.body_force,
            cfg.batch,
            cfg.seed,
        )?;
        let mut u = DisplacementField::tanh(&cfg.hidden, cfg.output_scale, cfg.seed)?;
        let t = Instant::now();
        let report = pretrain(&mut u, &cube, &dp, &mat, &batches, &cfg)?;
        let last = report.history.last().copied();
        println!(
            "w_fem {w_fem}: holdout error {:.4}, train error {:.4}, final {:?}, {:.1}s",
            relative_l2_error(&u, &hold),
            relative_l2_error(&u, &train),
            last,
            t.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
