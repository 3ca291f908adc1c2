//! Full pipeline on a thin-legged table: fit the geometry network, solve
//! FEM anchors, pretrain the displacement network, co-train both and
//! compare FEM max von Mises before and after.
//!
//! `FIT_EPOCHS`, `PRETRAIN_EPOCHS`, `EPOCHS` and `GEOMETRY_LR` override the
//! defaults; `NO_DESIGN`, `NO_GC` and `ONE_PHASE` switch terms off.

use std::time::Instant;

use stressfield::cotrain::{compare_fem, cotrain, Ablation, CoTrainConfig, CoTrainData};
use stressfield::elasticity::{AxisBand, BoundarySpec, MaterialModel};
use stressfield::fem;
use stressfield::geometry::{extract_mesh, fit_quality, fit_sdf, Bounds, DensityParams, FitConfig, Shape};
use stressfield::physics::{pretrain, relative_l2_error, DisplacementField, PhysicsBatches, PretrainConfig};
use stressfield::sampling::{build_sample_sets, DenseSparseConfig, SampleCounts};

fn env_or<T: std::str::FromStr>(key: &str, default: T) -> T {
    std::env::var(key).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}

fn main() -> stressfield::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let bounds = Bounds::default();
    let dp = DensityParams::default();
    let mat = MaterialModel::default();
    let bspec = BoundarySpec {
        support: AxisBand { axis: 2, lo: -1.0, hi: -0.65 },
        prescribed: [0.0; 3],
        load: AxisBand { axis: 2, lo: 0.4, hi: 1.0 },
        traction: [0.0, 0.0, -0.01],
        body_force: [0.0; 3],
    };
    let table = Shape::table(0.6, [0.3, 0.45], 0.06, 0.12, -0.7);

    let t = Instant::now();
    let mesh = extract_mesh(&table, bounds, 96)?;
    let fit_cfg = FitConfig {
        hidden: vec![64; 3],
        epochs: env_or("FIT_EPOCHS", 30),
        steps_per_epoch: 100,
        batch_size: 2048,
        learning_rate: 2e-3,
        samples: 100_000,
        seed: 1,
        ..Default::default()
    };
    let (g0, _) = fit_sdf(&mesh, &fit_cfg)?;
    let q = fit_quality(&g0, &mesh, 4096, 1)?;
    println!(
        "fit: surface error {:.4}, interior agreement {:.3}, {:.1}s",
        q.surface_error,
        q.interior_agreement,
        t.elapsed().as_secs_f64()
    );

    let t = Instant::now();
    let hex = fem::voxelize(&g0, &dp, bounds, 48, 0.5)?;
    let sol = fem::solve(&hex, &mat, &bspec)?;
    let data = fem::export_dataset(&sol, &hex, 7000, 2);
    let (train, hold) = data.split(0.1, 2);
    println!(
        "fem: {} elements, max von Mises {:.4e}, {:.1}s",
        hex.n_elements(),
        fem::max_von_mises(&sol),
        t.elapsed().as_secs_f64()
    );

    let counts = SampleCounts::default();
    let sets = build_sample_sets(&g0, &dp, &bspec, bounds, &counts, &DenseSparseConfig::default(), 3)?;
    let pcfg = PretrainConfig { hidden: vec![32; 3], epochs: env_or("PRETRAIN_EPOCHS", 2000), ..Default::default() };
    let batches = PhysicsBatches::new(
        &sets.domain.points,
        &sets.dirichlet,
        &sets.traction,
        Some(&train),
        bspec.body_force,
        pcfg.batch,
        0,
    )?;
    let t = Instant::now();
    let mut u = DisplacementField::tanh(&pcfg.hidden, pcfg.output_scale, 0)?;
    pretrain(&mut u, &g0, &dp, &mat, &batches, &pcfg)?;
    println!("pretrain: holdout error {:.4}, {:.1}s", relative_l2_error(&u, &hold), t.elapsed().as_secs_f64());

    let cfg = CoTrainConfig {
        epochs: env_or("EPOCHS", 500),
        geometry_lr: env_or("GEOMETRY_LR", 1e-6),
        two_phase: std::env::var("ONE_PHASE").is_err(),
        ablation: Ablation {
            no_design: std::env::var("NO_DESIGN").is_ok(),
            no_gc: std::env::var("NO_GC").is_ok(),
            ..Default::default()
        },
        ..Default::default()
    };
    let t = Instant::now();
    let mut g = g0.clone();
    let report =
        cotrain(&mut u, &mut g, &dp, &mat, &CoTrainData { batches: &batches, constraint: &sets.constraint }, &cfg)?;
    let s = &report.summary;
    println!(
        "cotrain ({}): volume {:.4} -> {:.4} (target {:.4}), gate opened at {:?}, drift {:.3e}, {:.1}s",
        s.ablation,
        s.initial_volume,
        s.final_volume,
        s.volume_target,
        s.gate_open_epoch,
        s.max_constraint_drift,
        t.elapsed().as_secs_f64()
    );

    let (cmp, out) = compare_fem(&g0, &g, bounds, &mat, &bspec, 64)?;
    println!(
        "fem at 64: max von Mises {:.4e} -> {:.4e} (reduction {:.1}%), output watertight: {}",
        cmp.initial_max_von_mises,
        cmp.final_max_von_mises,
        100.0 * cmp.reduction(),
        out.ensure_watertight().is_ok()
    );
    Ok(())
}
