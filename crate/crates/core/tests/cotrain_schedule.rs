//! Alternation schedule, parameter isolation and loss invariants of
//! co-training.

use proptest::prelude::*;
use stressfield::autodiff::param_checksum;
use stressfield::cotrain::{
    cotrain, eikonal_term, gate_open, geometry_steps, loss_combine, loss_design, loss_gc, loss_vr, Ablation,
    CoTrainConfig, CoTrainData, StepKind,
};
use stressfield::elasticity::{BoundarySpec, MaterialModel};
use stressfield::geometry::{Bounds, DensityParams, ScalarField, SdfField};
use stressfield::physics::{predict_batch, BatchSizes, DisplacementField, PhysicsBatches};
use stressfield::sampling::{build_sample_sets, DenseSparseConfig, SampleCounts, SampleSets};

struct Fixture {
    g: SdfField,
    u: DisplacementField,
    sets: SampleSets,
    batches: PhysicsBatches,
    dp: DensityParams,
}

fn fixture() -> Fixture {
    let g = SdfField::geometric(&[16, 16], 20.0, 0.5, 1).unwrap();
    let dp = DensityParams::default();
    let bspec = BoundarySpec::floor_and_top(-0.3, 0.3, 0.01);
    let counts = SampleCounts { domain: 512, dirichlet: 64, traction: 128, constraint: 256, margin: 0.1 };
    let sets =
        build_sample_sets(&g, &dp, &bspec, Bounds::default(), &counts, &DenseSparseConfig::default(), 5).unwrap();
    let batches = PhysicsBatches::new(
        &sets.domain.points,
        &sets.dirichlet,
        &sets.traction,
        None,
        [0.0; 3],
        BatchSizes::default(),
        0,
    )
    .unwrap();
    Fixture { g, u: DisplacementField::tanh(&[8, 8], 0.1, 2).unwrap(), sets, batches, dp }
}

fn run(f: &Fixture, cfg: &CoTrainConfig) -> (SdfField, DisplacementField, stressfield::cotrain::CoTrainReport) {
    let mut g = f.g.clone();
    let mut u = f.u.clone();
    let data = CoTrainData { batches: &f.batches, constraint: &f.sets.constraint };
    let report = cotrain(&mut u, &mut g, &f.dp, &MaterialModel::default(), &data, cfg).unwrap();
    (g, u, report)
}

#[test]
fn single_epoch_is_one_geometry_step() {
    let f = fixture();
    let cfg = CoTrainConfig { epochs: 1, ..Default::default() };
    let (g, u, report) = run(&f, &cfg);
    assert_eq!(report.summary.geometry_steps, 1);
    assert_eq!(report.summary.physics_steps, 0);
    assert_eq!(param_checksum(u.net.params()), param_checksum(f.u.net.params()));
    assert_ne!(param_checksum(g.net.params()), param_checksum(f.g.net.params()));
}

#[test]
fn twenty_epochs_alternate() {
    let f = fixture();
    let cfg = CoTrainConfig { epochs: 20, ..Default::default() };
    let (_, _, report) = run(&f, &cfg);
    assert_eq!(report.summary.geometry_steps, 2);
    assert_eq!(report.summary.physics_steps, 18);
    let geo: Vec<usize> = report.records.iter().filter(|r| r.kind == StepKind::Geometry).map(|r| r.epoch).collect();
    assert_eq!(geo, vec![0, 10]);
    assert_eq!(report.records.len(), 20);
    assert_eq!(report.volume_trajectory().len(), 20);
    assert_eq!(report.gate_trajectory().len(), 20);
}

#[test]
fn steps_touch_only_their_network() {
    let f = fixture();
    let one = CoTrainConfig { epochs: 1, period: 3, ..Default::default() };
    let three = CoTrainConfig { epochs: 3, ..one.clone() };
    let (g1, u1, _) = run(&f, &one);
    let (g3, u3, _) = run(&f, &three);
    // epochs 1 and 2 are physics steps
    assert_eq!(param_checksum(g1.net.params()), param_checksum(g3.net.params()));
    assert_ne!(param_checksum(u1.net.params()), param_checksum(u3.net.params()));
}

#[test]
fn frozen_physics_ablation_skips_updates() {
    let f = fixture();
    let cfg = CoTrainConfig {
        epochs: 5,
        period: 2,
        ablation: Ablation { no_physics: true, ..Default::default() },
        ..Default::default()
    };
    let (_, u, report) = run(&f, &cfg);
    assert_eq!(param_checksum(u.net.params()), param_checksum(f.u.net.params()));
    assert_eq!(report.summary.geometry_steps, 3);
    assert_eq!(report.summary.physics_steps, 0);
    assert_eq!(report.summary.ablation, "no-physics");
}

#[test]
fn constraint_loss_is_zero_before_training() {
    let f = fixture();
    assert!(loss_gc(&f.g, &f.dp, &f.sets.constraint) <= 1e-15);
}

#[test]
fn runs_are_reproducible() {
    let f = fixture();
    let cfg = CoTrainConfig { epochs: 12, period: 4, ..Default::default() };
    let (g1, u1, r1) = run(&f, &cfg);
    let (g2, u2, r2) = run(&f, &cfg);
    assert_eq!(g1.net.params(), g2.net.params());
    assert_eq!(u1.net.params(), u2.net.params());
    assert_eq!(r1, r2);
}

#[test]
fn invalid_config_is_rejected() {
    let f = fixture();
    let mut g = f.g.clone();
    let mut u = f.u.clone();
    let data = CoTrainData { batches: &f.batches, constraint: &f.sets.constraint };
    for cfg in [
        CoTrainConfig { period: 1, ..Default::default() },
        CoTrainConfig { w_vr: -1.0, ..Default::default() },
        CoTrainConfig { volume_target: Some(1.0), ..Default::default() },
    ] {
        assert!(cotrain(&mut u, &mut g, &f.dp, &MaterialModel::default(), &data, &cfg).is_err());
    }
}

/// Geometry-step objective rebuilt from the public loss functions.
fn geometry_objective(f: &Fixture, g: &SdfField, cfg: &CoTrainConfig, target: f64) -> f64 {
    let pts = &f.batches.domain;
    let pred = predict_batch(&f.u, g, &f.dp, &MaterialModel::default(), pts);
    let rho: Vec<f64> = pred.iter().map(|p| p.density).collect();
    let svm: Vec<f64> = pred.iter().map(|p| p.von_mises).collect();
    let grads: Vec<[f64; 3]> = g.values_and_gradients(pts).into_iter().map(|(_, d)| d).collect();
    cfg.w_design * loss_design(&rho, &svm).unwrap()
        + cfg.w_gc * loss_gc(g, &f.dp, &f.sets.constraint)
        + cfg.w_vr * loss_vr(g, &f.dp, pts, target)
        + cfg.w_eikonal * eikonal_term(&grads).0
}

#[test]
fn geometry_step_descends_the_objective() {
    let f = fixture();
    let mean = {
        let v = f.g.values(&f.batches.domain);
        v.iter().map(|&x| f.dp.density_of(x)).sum::<f64>() / v.len() as f64
    };
    // target below the current volume so the hinge is active too
    let target = mean - 0.05;
    let cfg = CoTrainConfig {
        epochs: 1,
        two_phase: false,
        geometry_lr: 1e-9,
        volume_target: Some(target),
        ..Default::default()
    };
    let (g1, _, _) = run(&f, &cfg);
    let h = 1e-6;
    let n = f.g.net.n_params();
    let mut fd = vec![0.0; n];
    for (i, d) in fd.iter_mut().enumerate() {
        let mut a = f.g.clone();
        a.net.params_mut()[i] += h;
        let mut b = f.g.clone();
        b.net.params_mut()[i] -= h;
        *d = (geometry_objective(&f, &a, &cfg, target) - geometry_objective(&f, &b, &cfg, target)) / (2.0 * h);
    }
    let big = fd.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let mut checked = 0;
    for i in 0..n {
        if fd[i].abs() < 1e-2 * big {
            continue;
        }
        let moved = g1.net.params()[i] - f.g.net.params()[i];
        assert!(moved * fd[i] < 0.0, "param {i}: moved {moved:e}, slope {:e}", fd[i]);
        checked += 1;
    }
    assert!(checked > n / 4, "only {checked} of {n} parameters checked");
}

proptest! {
    #[test]
    fn schedule_counts(epochs in 0usize..2000, period in 2usize..50) {
        let geo = (0..epochs).filter(|e| e % period == 0).count();
        prop_assert_eq!(geometry_steps(epochs, period), geo);
        prop_assert_eq!(geo, (epochs + period - 1) / period);
    }

    #[test]
    fn gate_is_closed_at_or_below_target(
        rho in prop::collection::vec(0.0f64..1.0, 1..64),
        svm in prop::collection::vec(0.0f64..10.0, 64),
        slack in 0.0f64..0.5,
    ) {
        let mean = rho.iter().sum::<f64>() / rho.len() as f64;
        let target = (mean + slack).min(0.999_999);
        let svm = &svm[..rho.len()];
        prop_assert!(!gate_open(&rho, target));
        prop_assert_eq!(loss_combine(&rho, svm, target), 0.0);
    }

    #[test]
    fn design_loss_vanishes_on_uniform_stress(
        n in 1usize..64,
        r in 0.01f64..1.0,
        s in 0.0f64..10.0,
    ) {
        let rho = vec![r; n];
        let svm = vec![s; n];
        prop_assert!(loss_design(&rho, &svm).unwrap().abs() <= 1e-12 * s.max(1.0));
    }

    #[test]
    fn design_loss_is_nonnegative(
        rho in prop::collection::vec(0.0f64..1.0, 1..64),
        svm in prop::collection::vec(0.0f64..10.0, 64),
    ) {
        prop_assume!(rho.iter().sum::<f64>() > 1e-6);
        prop_assert!(loss_design(&rho, &svm[..rho.len()]).unwrap() >= 0.0);
    }
}
