//! Physics-layer predictions and losses against closed forms and finite
//! differences.

use stressfield::autodiff::{Activation, DenseNet, JetOrder};
use stressfield::elasticity::{self, MaterialModel, StressTensor};
use stressfield::fem::{FemDataset, Provenance};
use stressfield::geometry::{AnalyticField, DensityParams, ScalarField, SdfField};
use stressfield::physics::{
    dirichlet_term, fem_term, loss_bc, loss_fem, loss_pde, pde_term, predict, traction_term, DensityAdjoint,
    DensityJets, DisplacementField, Sinks,
};
use stressfield::sampling::{DirichletSet, TractionSet};

fn mat() -> MaterialModel {
    MaterialModel::default()
}

fn zero_field() -> DisplacementField {
    let mut u = DisplacementField::tanh(&[8, 8], 0.1, 1).unwrap();
    let n = u.net.n_params();
    u.net.set_params(&vec![0.0; n]).unwrap();
    u
}

/// `u = G x` through a single linear layer.
fn linear_field(g: [[f64; 3]; 3], c: [f64; 3]) -> DisplacementField {
    let mut net = DenseNet::new(&[3, 3], Activation::Tanh, 1.0).unwrap();
    let mut p = Vec::new();
    for row in g {
        p.extend_from_slice(&row);
    }
    p.extend_from_slice(&c);
    net.set_params(&p).unwrap();
    DisplacementField::new(net).unwrap()
}

fn solid() -> AnalyticField<impl Fn([f64; 3]) -> f64 + Sync> {
    AnalyticField(|_: [f64; 3]| 10.0)
}

fn points(n: usize, seed: u64) -> Vec<[f64; 3]> {
    (0..n)
        .map(|i| {
            let t = (i as f64 + 1.0) * 0.618 + seed as f64;
            [(3.1 * t).sin() * 0.8, (1.7 * t).cos() * 0.8, (2.3 * t).sin() * 0.7]
        })
        .collect()
}

#[test]
fn zero_network_predicts_nothing() {
    let u = zero_field();
    let dp = DensityParams::default();
    let p = predict(&u, &solid(), &dp, &mat(), [0.1, 0.2, 0.3]);
    assert_eq!(p.displacement, [0.0; 3]);
    assert_eq!(p.strain.0, [0.0; 6]);
    assert_eq!(p.stress.0, [0.0; 6]);
    assert_eq!(p.von_mises, 0.0);
}

#[test]
fn linear_field_stress_and_density_scaling() {
    let a = 0.02;
    let u = linear_field([[a, 0.0, 0.0], [0.0; 3], [0.0; 3]], [0.0; 3]);
    let dp = DensityParams::default();
    let (l, m) = mat().lame();
    let full = predict(&u, &solid(), &dp, &mat(), [0.3, -0.1, 0.2]);
    assert!((full.stress.0[0] - (l + 2.0 * m) * a).abs() < 1e-15);
    assert!((full.stress.0[1] - l * a).abs() < 1e-15);
    assert!((full.stress.0[2] - l * a).abs() < 1e-15);

    let half = AnalyticField(|_: [f64; 3]| 0.0);
    let h = predict(&u, &half, &dp, &mat(), [0.3, -0.1, 0.2]);
    assert_eq!(h.density, 0.5);
    for k in 0..6 {
        assert!((h.stress.0[k] - 0.5 * full.stress.0[k]).abs() <= 1e-12 * full.stress.0[k].abs().max(1e-300));
    }
    let expect = elasticity::von_mises(&h.stress);
    assert_eq!(h.von_mises, expect);
    let recomputed = elasticity::stress(&h.strain, &mat()).scaled(h.density);
    for k in 0..6 {
        assert!((recomputed.0[k] - h.stress.0[k]).abs() < 1e-12);
    }
}

#[test]
fn density_scaling_is_linear() {
    let u = DisplacementField::tanh(&[6, 6], 0.1, 3).unwrap();
    let dp = DensityParams::new(0.1).unwrap();
    let x = [0.1, 0.4, -0.3];
    for f in [-0.2, -0.05, 0.0, 0.07, 0.3] {
        let field = AnalyticField(move |_: [f64; 3]| f);
        let p = predict(&u, &field, &dp, &mat(), x);
        let base = elasticity::stress(&p.strain, &mat());
        for k in 0..6 {
            assert!((p.stress.0[k] - p.density * base.0[k]).abs() <= 1e-12 * base.0[k].abs().max(1e-12));
        }
    }
}

#[test]
fn pde_loss_vanishes_for_trivial_fields() {
    let dp = DensityParams::default();
    let pts = points(50, 0);
    assert_eq!(loss_pde(&zero_field(), &solid(), &dp, &mat(), [0.0; 3], &pts).unwrap(), 0.0);
    let u = linear_field([[0.01, 0.002, 0.0], [0.0, -0.003, 0.004], [0.001, 0.0, 0.005]], [0.1, 0.0, 0.0]);
    assert!(loss_pde(&u, &solid(), &dp, &mat(), [0.0; 3], &pts).unwrap() < 1e-16);
}

/// Tanh profile `u1 = A tanh(k x1)`: with unit density the residual is
/// `(lambda + 2 mu) u1''` along x1 only.
#[test]
fn pde_loss_matches_manufactured_solution() {
    let (amp, k) = (0.05, 1.7);
    let mut net = DenseNet::new(&[3, 1, 3], Activation::Tanh, 1.0).unwrap();
    let mut p = vec![0.0; net.n_params()];
    p[0] = k;
    p[4] = amp;
    net.set_params(&p).unwrap();
    let u = DisplacementField::new(net).unwrap();
    let pts = points(64, 2);
    let (l, m) = mat().lame();
    let want = pts
        .iter()
        .map(|x| {
            let t = (k * x[0]).tanh();
            let u2 = -2.0 * amp * k * k * t * (1.0 - t * t);
            ((l + 2.0 * m) * u2).powi(2)
        })
        .sum::<f64>()
        / pts.len() as f64;
    let got = loss_pde(&u, &solid(), &DensityParams::default(), &mat(), [0.0; 3], &pts).unwrap();
    assert!((got - want).abs() <= 1e-6 * want, "{got} vs {want}");
}

/// Residual from central second differences of the forward pass and of
/// the field, independent of the jet machinery.
#[test]
fn pde_loss_matches_finite_difference_residual() {
    let u = DisplacementField::tanh(&[8, 8], 0.1, 11).unwrap();
    let geo = AnalyticField(|x: [f64; 3]| 0.3 - (x[0] * x[0] + 0.5 * x[1] * x[1] + 0.8 * x[2] * x[2]).sqrt());
    let dp = DensityParams::new(0.2).unwrap();
    let body = [0.0, 0.0, -0.01];
    let pts = points(20, 5);
    let h = 1e-3;
    let disp = |x: [f64; 3]| {
        let v = u.net.forward(x).unwrap();
        [v[0], v[1], v[2]]
    };
    let rho = |x: [f64; 3]| dp.density_of(geo.value(x));
    let stress_at = |x: [f64; 3]| {
        let mut jac = [[0.0; 3]; 3];
        for j in 0..3 {
            let (mut a, mut b) = (x, x);
            a[j] += h;
            b[j] -= h;
            let (ua, ub) = (disp(a), disp(b));
            for i in 0..3 {
                jac[i][j] = (ua[i] - ub[i]) / (2.0 * h);
            }
        }
        let s = elasticity::stress(&elasticity::strain(&jac), &mat()).scaled(rho(x));
        s.matrix()
    };
    let mut want = 0.0;
    for &x in &pts {
        let mut r = [0.0; 3];
        for j in 0..3 {
            let (mut a, mut b) = (x, x);
            a[j] += h;
            b[j] -= h;
            let (sa, sb) = (stress_at(a), stress_at(b));
            for i in 0..3 {
                r[i] += (sa[i][j] - sb[i][j]) / (2.0 * h);
            }
        }
        for i in 0..3 {
            r[i] += rho(x) * body[i];
        }
        want += r.iter().map(|v| v * v).sum::<f64>();
    }
    want /= pts.len() as f64;
    let got = loss_pde(&u, &geo, &dp, &mat(), body, &pts).unwrap();
    assert!((got - want).abs() <= 1e-4 * want, "{got} vs {want}");
}

fn traction_point(x: [f64; 3], n: [f64; 3], f: [f64; 3]) -> TractionSet {
    TractionSet { points: vec![x], normals: vec![n], traction: vec![f], loaded: vec![true] }
}

#[test]
fn boundary_loss_examples() {
    let dp = DensityParams::default();
    let p = 0.01;
    let dir = DirichletSet { points: points(5, 1), values: vec![[0.0; 3]; 5] };
    let free = traction_point([0.0, 0.0, 1.0], [0.0, 0.0, 1.0], [0.0; 3]);
    assert_eq!(loss_bc(&zero_field(), &solid(), &dp, &mat(), &dir, &free).unwrap(), 0.0);
    let loaded = traction_point([0.0, 0.0, 0.5], [0.0, 0.0, 1.0], [0.0, 0.0, -p]);
    let l = loss_bc(&zero_field(), &solid(), &dp, &mat(), &dir, &loaded).unwrap();
    assert!((l - p * p).abs() < 1e-18);

    let c = [0.01, -0.02, 0.03];
    let shifted = linear_field([[0.0; 3]; 3], c);
    let d = dirichlet_term(&shifted, &dir, &mut Sinks::none()).unwrap();
    let want = c.iter().map(|v| v * v).sum::<f64>();
    assert!((d - want).abs() < 1e-17);
}

#[test]
fn fem_loss_examples() {
    let dp = DensityParams::default();
    let delta = 0.004;
    let one = FemDataset {
        points: vec![[0.1, 0.2, 0.3]],
        displacement: vec![[0.0, 0.0, delta]],
        stress: vec![StressTensor([0.0; 6])],
        provenance: Provenance::Internal,
    };
    let l = loss_fem(&zero_field(), &solid(), &dp, &mat(), &one).unwrap();
    assert!((l - delta * delta).abs() < 1e-18);

    let u = DisplacementField::tanh(&[6], 0.1, 4).unwrap();
    let pts = points(10, 3);
    let preds: Vec<_> = pts.iter().map(|&x| predict(&u, &solid(), &dp, &mat(), x)).collect();
    let exact = FemDataset {
        points: pts.clone(),
        displacement: preds.iter().map(|p| p.displacement).collect(),
        stress: preds.iter().map(|p| p.stress).collect(),
        provenance: Provenance::Internal,
    };
    assert_eq!(loss_fem(&u, &solid(), &dp, &mat(), &exact).unwrap(), 0.0);
}

/// Every term's parameter gradient, for both networks, against central
/// differences.
#[test]
fn loss_gradients_match_finite_differences() {
    let u = DisplacementField::tanh(&[4], 0.5, 21).unwrap();
    assert!(u.net.n_params() <= 32);
    let mut gnet = DenseNet::new(&[3, 5, 1], Activation::Softplus { beta: 4.0 }, 1.0).unwrap();
    gnet.init_geometric(0.4, 5);
    let g = SdfField::new(gnet, Default::default()).unwrap();
    let dp = DensityParams::new(0.3).unwrap();
    let mat = mat();
    let pts = points(12, 7);
    let body = [0.0, 0.01, -0.02];
    let tr = TractionSet {
        points: pts.clone(),
        normals: pts
            .iter()
            .map(|x| {
                let n = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
                [x[0] / n, x[1] / n, x[2] / n]
            })
            .collect(),
        traction: vec![[0.0, 0.0, -0.01]; pts.len()],
        loaded: vec![true; pts.len()],
    };
    let data = FemDataset {
        points: pts.clone(),
        displacement: pts.iter().map(|x| [0.01 * x[0], -0.02 * x[2], 0.005]).collect(),
        stress: pts.iter().map(|x| StressTensor([0.01 * x[1], 0.0, -0.01, 0.002, 0.0, 0.001 * x[0]])).collect(),
        provenance: Provenance::Internal,
    };

    type Term<'a> = Box<dyn Fn(&DisplacementField, &DensityJets, &mut Sinks) -> f64 + 'a>;
    let terms: Vec<(&str, Term)> = vec![
        ("pde", Box::new(|u, geo, s| pde_term(u, &pts, geo, &mat, body, s).unwrap())),
        ("traction", Box::new(|u, geo, s| traction_term(u, &tr, geo, &mat, s).unwrap())),
        ("fem", Box::new(|u, geo, s| fem_term(u, &data, geo, &mat, s).unwrap())),
    ];
    let eps = 1e-6;
    for (name, term) in &terms {
        // physics parameters
        let geo = DensityJets::from_field(&g, &dp, &pts);
        let mut grads = vec![0.0; u.net.n_params()];
        term(&u, &geo, &mut Sinks { weight: 1.0, physics: Some(&mut grads), density: None });
        for i in 0..u.net.n_params() {
            let mut up = u.clone();
            up.net.params_mut()[i] += eps;
            let mut dn = u.clone();
            dn.net.params_mut()[i] -= eps;
            let fd = (term(&up, &geo, &mut Sinks::none()) - term(&dn, &geo, &mut Sinks::none())) / (2.0 * eps);
            let tol = 1e-4 * fd.abs().max(grads[i].abs()).max(1e-9);
            assert!((fd - grads[i]).abs() <= tol, "{name} phi[{i}]: fd {fd} vs {}", grads[i]);
        }

        // geometry parameters through the density adjoint
        let (jets, tape) = g.net.eval(&pts, JetOrder::Gradient);
        let geo = DensityJets::from_jets(&jets, &dp);
        let mut adj = DensityAdjoint::zeros(pts.len());
        term(&u, &geo, &mut Sinks { weight: 1.0, physics: None, density: Some(&mut adj) });
        let mut ggrads = vec![0.0; g.net.n_params()];
        g.net.backward(&tape, &adj.pullback(&geo, &dp), &mut ggrads);
        for i in 0..g.net.n_params() {
            let eval = |delta: f64| {
                let mut gg = g.clone();
                gg.net.params_mut()[i] += delta;
                term(&u, &DensityJets::from_field(&gg, &dp, &pts), &mut Sinks::none())
            };
            let fd = (eval(eps) - eval(-eps)) / (2.0 * eps);
            let tol = 1e-4 * fd.abs().max(ggrads[i].abs()).max(1e-9);
            assert!((fd - ggrads[i]).abs() <= tol, "{name} theta[{i}]: fd {fd} vs {}", ggrads[i]);
        }
    }
}

#[test]
fn losses_are_nonnegative() {
    let u = DisplacementField::tanh(&[8], 0.1, 2).unwrap();
    let dp = DensityParams::default();
    let pts = points(30, 1);
    assert!(loss_pde(&u, &solid(), &dp, &mat(), [0.0; 3], &pts).unwrap() >= 0.0);
    let field = AnalyticField(|x: [f64; 3]| 0.5 - x[2].abs());
    assert!(loss_pde(&u, &field, &dp, &mat(), [0.0, 0.0, 1.0], &pts).unwrap() > 0.0);
}
