//! Geometry-side losses over per-point density `rho` and density-scaled
//! von Mises stress `svm`, with their partial derivatives.

use crate::error::{Error, Result};
use crate::geometry::{DensityParams, ScalarField};
use crate::sampling::ConstraintSet;

/// Loss value with partials per sample point.
#[derive(Debug, Clone, PartialEq)]
pub struct Partials {
    pub value: f64,
    pub d_rho: Vec<f64>,
    pub d_svm: Vec<f64>,
}

impl Partials {
    fn zero(n: usize) -> Self {
        Partials { value: 0.0, d_rho: vec![0.0; n], d_svm: vec![0.0; n] }
    }
}

fn argmax(v: impl Iterator<Item = f64>) -> (usize, f64) {
    v.enumerate().fold((0, f64::NEG_INFINITY), |best, (i, x)| if x > best.1 { (i, x) } else { best })
}

/// Spread of `q = rho svm` over the samples: `max(q)` minus the
/// density-weighted mean `sum(rho q) / sum(rho)`. Only the maximizing
/// sample receives the gradient of the max.
pub fn design_term(rho: &[f64], svm: &[f64]) -> Result<Partials> {
    assert_eq!(rho.len(), svm.len());
    let total: f64 = rho.iter().sum();
    if !(total > 1e-9) {
        return Err(Error::EmptyShape("design loss needs material: total density over the samples is zero".into()));
    }
    let weighted: f64 = rho.iter().zip(svm).map(|(r, s)| r * r * s).sum();
    let mean = weighted / total;
    let (k, max) = argmax(rho.iter().zip(svm).map(|(r, s)| r * s));
    let mut p = Partials::zero(rho.len());
    p.value = (max - mean).max(0.0);
    for i in 0..rho.len() {
        p.d_rho[i] = -(2.0 * rho[i] * svm[i] - mean) / total;
        p.d_svm[i] = -rho[i] * rho[i] / total;
    }
    p.d_rho[k] += svm[k];
    p.d_svm[k] += rho[k];
    Ok(p)
}

/// Whether the mean density exceeds the volume target.
pub fn gate_open(rho: &[f64], target: f64) -> bool {
    !rho.is_empty() && rho.iter().sum::<f64>() / rho.len() as f64 > target
}

/// Gated stress-guided limiter: while the mean density exceeds `target`,
/// `sum((svm_max - svm) rho) / N` with `svm_max` and the gate held
/// constant; exactly zero otherwise.
pub fn combine_term(rho: &[f64], svm: &[f64], target: f64) -> Partials {
    assert_eq!(rho.len(), svm.len());
    let n = rho.len();
    let mut p = Partials::zero(n);
    if !gate_open(rho, target) {
        return p;
    }
    let smax = svm.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let nf = n as f64;
    for i in 0..n {
        p.value += (smax - svm[i]) * rho[i];
        p.d_rho[i] = (smax - svm[i]) / nf;
        p.d_svm[i] = -rho[i] / nf;
    }
    p.value /= nf;
    p
}

/// Hinge on the mean density above `target`.
pub fn volume_term(rho: &[f64], target: f64) -> Partials {
    let n = rho.len();
    let mut p = Partials::zero(n);
    if n == 0 {
        return p;
    }
    let excess = rho.iter().sum::<f64>() / n as f64 - target;
    if excess > 0.0 {
        p.value = excess;
        p.d_rho.iter_mut().for_each(|d| *d = 1.0 / n as f64);
    }
    p
}

/// Mean squared drift from the frozen reference densities.
pub fn constraint_term(rho: &[f64], reference: &[f64]) -> Partials {
    assert_eq!(rho.len(), reference.len());
    let n = rho.len();
    let mut p = Partials::zero(n);
    if n == 0 {
        return p;
    }
    let nf = n as f64;
    for i in 0..n {
        let d = rho[i] - reference[i];
        p.value += d * d;
        p.d_rho[i] = 2.0 * d / nf;
    }
    p.value /= nf;
    p
}

/// Mean of `(|g| - 1)^2` and its gradient with respect to each `g`.
pub fn eikonal_term(grad_f: &[[f64; 3]]) -> (f64, Vec<[f64; 3]>) {
    let n = grad_f.len();
    if n == 0 {
        return (0.0, Vec::new());
    }
    let nf = n as f64;
    let mut value = 0.0;
    let mut d = vec![[0.0; 3]; n];
    for (i, g) in grad_f.iter().enumerate() {
        let norm = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
        value += (norm - 1.0).powi(2);
        if norm > 0.0 {
            let c = 2.0 * (norm - 1.0) / (norm * nf);
            d[i] = [c * g[0], c * g[1], c * g[2]];
        }
    }
    (value / nf, d)
}

pub fn loss_design(rho: &[f64], svm: &[f64]) -> Result<f64> {
    Ok(design_term(rho, svm)?.value)
}

pub fn loss_combine(rho: &[f64], svm: &[f64], target: f64) -> f64 {
    combine_term(rho, svm, target).value
}

pub fn loss_vr(field: &dyn ScalarField, dp: &DensityParams, points: &[[f64; 3]], target: f64) -> f64 {
    let rho: Vec<f64> = field.values(points).into_iter().map(|f| dp.density_of(f)).collect();
    volume_term(&rho, target).value
}

pub fn loss_gc(field: &dyn ScalarField, dp: &DensityParams, set: &ConstraintSet) -> f64 {
    let rho: Vec<f64> = field.values(&set.points).into_iter().map(|f| dp.density_of(f)).collect();
    constraint_term(&rho, &set.density).value
}

/// Largest `|rho - rho_gc|` over the constraint set.
pub fn max_drift(field: &dyn ScalarField, dp: &DensityParams, set: &ConstraintSet) -> f64 {
    field
        .values(&set.points)
        .into_iter()
        .zip(&set.density)
        .map(|(f, r)| (dp.density_of(f) - r).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn design_examples() {
        assert_eq!(loss_design(&[1.0, 1.0, 1.0], &[2.0, 2.0, 2.0]).unwrap(), 0.0);
        assert_eq!(loss_design(&[1.0, 1.0], &[2.0, 0.0]).unwrap(), 1.0);
        assert_eq!(loss_design(&[1.0, 0.0], &[3.0, 100.0]).unwrap(), 0.0);
        assert!(matches!(loss_design(&[0.0, 0.0], &[1.0, 1.0]), Err(Error::EmptyShape(_))));
    }

    #[test]
    fn combine_examples() {
        assert_eq!(loss_combine(&[0.2, 0.3], &[5.0, 1.0], 0.5), 0.0);
        assert_eq!(loss_combine(&[1.0, 1.0], &[3.0, 3.0], 0.5), 0.0);
        assert_eq!(loss_combine(&[1.0, 1.0], &[4.0, 2.0], 0.5), 1.0);
        // boundary of the gate
        assert_eq!(loss_combine(&[0.5, 0.5], &[4.0, 2.0], 0.5), 0.0);
    }

    #[test]
    fn volume_and_constraint_examples() {
        assert_eq!(volume_term(&[0.2, 0.4], 0.5).value, 0.0);
        assert_eq!(volume_term(&[1.0, 1.0], 0.5).value, 0.5);
        assert_eq!(volume_term(&[0.4, 0.6], 0.5).value, 0.0);
        assert!((constraint_term(&[0.2], &[0.1]).value - 0.01).abs() < 1e-15);
        assert_eq!(constraint_term(&[0.3, 0.1], &[0.3, 0.1]).value, 0.0);
    }

    fn check(f: impl Fn(&[f64], &[f64]) -> f64, p: &Partials, rho: &[f64], svm: &[f64]) {
        let h = 1e-7;
        for i in 0..rho.len() {
            let mut a = rho.to_vec();
            a[i] += h;
            let mut b = rho.to_vec();
            b[i] -= h;
            let fd = (f(&a, svm) - f(&b, svm)) / (2.0 * h);
            assert!((fd - p.d_rho[i]).abs() < 1e-6, "rho[{i}]: {fd} vs {}", p.d_rho[i]);
            let mut a = svm.to_vec();
            a[i] += h;
            let mut b = svm.to_vec();
            b[i] -= h;
            let fd = (f(rho, &a) - f(rho, &b)) / (2.0 * h);
            assert!((fd - p.d_svm[i]).abs() < 1e-6, "svm[{i}]: {fd} vs {}", p.d_svm[i]);
        }
    }

    #[test]
    fn partials_match_differences() {
        let rho = [0.9, 0.3, 0.7, 0.55];
        let svm = [0.5, 2.0, 1.1, 0.2];
        check(|r, s| loss_design(r, s).unwrap(), &design_term(&rho, &svm).unwrap(), &rho, &svm);
        check(|r, _s| volume_term(r, 0.4).value, &volume_term(&rho, 0.4), &rho, &svm);
        let reference = [0.8, 0.2, 0.75, 0.5];
        check(|r, _| constraint_term(r, &reference).value, &constraint_term(&rho, &reference), &rho, &svm);
        // max and gate are held fixed, so differentiate with them frozen
        let p = combine_term(&rho, &svm, 0.4);
        let smax = 2.0;
        check(|r, s| r.iter().zip(s).map(|(r, s)| (smax - s) * r).sum::<f64>() / 4.0, &p, &rho, &svm);
    }

    #[test]
    fn eikonal_gradient() {
        let g = [[0.3, 0.4, 1.2], [0.0, 2.0, 0.0]];
        let (v, d) = eikonal_term(&g);
        let h = 1e-7;
        for i in 0..2 {
            for j in 0..3 {
                let mut a = g;
                a[i][j] += h;
                let mut b = g;
                b[i][j] -= h;
                let fd = (eikonal_term(&a).0 - eikonal_term(&b).0) / (2.0 * h);
                assert!((fd - d[i][j]).abs() < 1e-6);
            }
        }
        assert!((v - ((1.3f64 - 1.0).powi(2) + 1.0) / 2.0).abs() < 1e-12);
    }
}
