//! Isotropic linear elasticity kernels.
//!
//! Tensors are stored in Voigt order `(11, 22, 33, 12, 13, 23)`. Strains use
//! engineering shear (`g12 = du1/dx2 + du2/dx1`), so the shear stress is
//! `mu * g` and the normal stress is `2 mu e + lambda tr(e)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Voigt position of the off-diagonal entry `(i, j)`, `i != j`.
pub const fn shear_slot(i: usize, j: usize) -> usize {
    match (i, j) {
        (0, 1) | (1, 0) => 3,
        (0, 2) | (2, 0) => 4,
        _ => 5,
    }
}

/// Young's modulus and Poisson ratio; the Lamé pair is always derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialModel {
    youngs: f64,
    poisson: f64,
}

impl Default for MaterialModel {
    fn default() -> Self {
        MaterialModel { youngs: 1.0, poisson: 0.3 }
    }
}

impl MaterialModel {
    pub fn new(youngs: f64, poisson: f64) -> Result<Self> {
        lame(youngs, poisson)?;
        Ok(MaterialModel { youngs, poisson })
    }

    pub fn youngs(&self) -> f64 {
        self.youngs
    }

    pub fn poisson(&self) -> f64 {
        self.poisson
    }

    /// `(lambda, mu)`
    pub fn lame(&self) -> (f64, f64) {
        lame_unchecked(self.youngs, self.poisson)
    }
}

fn lame_unchecked(e: f64, nu: f64) -> (f64, f64) {
    let lambda = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
    let mu = e / (2.0 * (1.0 + nu));
    (lambda, mu)
}

/// Lamé parameters from Young's modulus and Poisson ratio.
pub fn lame(youngs: f64, poisson: f64) -> Result<(f64, f64)> {
    if !(youngs > 0.0 && youngs.is_finite()) {
        return Err(Error::config(format!("Young's modulus must be positive, got {youngs}")));
    }
    if poisson >= 0.5 {
        return Err(Error::config(format!("Poisson ratio {poisson} is incompressible (must be < 0.5)")));
    }
    if !(poisson >= 0.0) {
        return Err(Error::config(format!("Poisson ratio must be in [0, 0.5), got {poisson}")));
    }
    Ok(lame_unchecked(youngs, poisson))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StrainTensor(pub [f64; 6]);

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StressTensor(pub [f64; 6]);

impl StressTensor {
    /// Full symmetric 3x3 matrix.
    pub fn matrix(&self) -> [[f64; 3]; 3] {
        let s = &self.0;
        [[s[0], s[3], s[4]], [s[3], s[1], s[5]], [s[4], s[5], s[2]]]
    }

    pub fn from_matrix(m: &[[f64; 3]; 3]) -> Self {
        StressTensor([
            m[0][0],
            m[1][1],
            m[2][2],
            0.5 * (m[0][1] + m[1][0]),
            0.5 * (m[0][2] + m[2][0]),
            0.5 * (m[1][2] + m[2][1]),
        ])
    }

    pub fn scaled(&self, c: f64) -> Self {
        StressTensor(self.0.map(|v| v * c))
    }
}

/// Small strain from the displacement Jacobian `jac[i][j] = du_i/dx_j`.
pub fn strain(jac: &[[f64; 3]; 3]) -> StrainTensor {
    StrainTensor([jac[0][0], jac[1][1], jac[2][2], jac[0][1] + jac[1][0], jac[0][2] + jac[2][0], jac[1][2] + jac[2][1]])
}

/// Hooke's law `C : e`.
pub fn stress(e: &StrainTensor, mat: &MaterialModel) -> StressTensor {
    let (lambda, mu) = mat.lame();
    let e = &e.0;
    let tr = e[0] + e[1] + e[2];
    StressTensor([
        2.0 * mu * e[0] + lambda * tr,
        2.0 * mu * e[1] + lambda * tr,
        2.0 * mu * e[2] + lambda * tr,
        mu * e[3],
        mu * e[4],
        mu * e[5],
    ])
}

/// Inverse Hooke's law.
pub fn compliance(s: &StressTensor, mat: &MaterialModel) -> StrainTensor {
    let (e, nu) = (mat.youngs(), mat.poisson());
    let (_, mu) = mat.lame();
    let s = &s.0;
    StrainTensor([
        (s[0] - nu * (s[1] + s[2])) / e,
        (s[1] - nu * (s[0] + s[2])) / e,
        (s[2] - nu * (s[0] + s[1])) / e,
        s[3] / mu,
        s[4] / mu,
        s[5] / mu,
    ])
}

pub fn von_mises(s: &StressTensor) -> f64 {
    let s = &s.0;
    let d01 = s[0] - s[1];
    let d12 = s[1] - s[2];
    let d20 = s[2] - s[0];
    let shear = s[3] * s[3] + s[4] * s[4] + s[5] * s[5];
    (0.5 * (d01 * d01 + d12 * d12 + d20 * d20) + 3.0 * shear).sqrt()
}

/// Derivative of [`von_mises`] with respect to the six Voigt components.
/// Zero at a hydrostatic state, where the square root is not differentiable.
pub fn von_mises_grad(s: &StressTensor) -> [f64; 6] {
    let vm = von_mises(s);
    if vm == 0.0 {
        return [0.0; 6];
    }
    let s = &s.0;
    let inv = 0.5 / vm;
    [
        inv * (2.0 * s[0] - s[1] - s[2]),
        inv * (2.0 * s[1] - s[0] - s[2]),
        inv * (2.0 * s[2] - s[0] - s[1]),
        inv * 6.0 * s[3],
        inv * 6.0 * s[4],
        inv * 6.0 * s[5],
    ]
}

/// `div(sigma) + rho * F`; zero at pointwise equilibrium.
pub fn equilibrium_residual(stress_divergence: [f64; 3], density: f64, body_force: [f64; 3]) -> [f64; 3] {
    [
        stress_divergence[0] + density * body_force[0],
        stress_divergence[1] + density * body_force[1],
        stress_divergence[2] + density * body_force[2],
    ]
}

/// Traction `sigma . n` on a surface with unit normal `n`.
pub fn traction(s: &StressTensor, n: [f64; 3]) -> Result<[f64; 3]> {
    let norm = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
    if !((norm - 1.0).abs() <= 1e-9) {
        return Err(Error::config(format!("normal must be unit length, |n| = {norm}")));
    }
    Ok(traction_unchecked(s, n))
}

#[inline]
pub(crate) fn traction_unchecked(s: &StressTensor, n: [f64; 3]) -> [f64; 3] {
    let m = s.matrix();
    [
        m[0][0] * n[0] + m[0][1] * n[1] + m[0][2] * n[2],
        m[1][0] * n[0] + m[1][1] * n[1] + m[1][2] * n[2],
        m[2][0] * n[0] + m[2][1] * n[1] + m[2][2] * n[2],
    ]
}

/// Axis-aligned slab `{x : lo <= x[axis] <= hi}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisBand {
    pub axis: usize,
    pub lo: f64,
    pub hi: f64,
}

impl AxisBand {
    pub fn contains(&self, x: [f64; 3]) -> bool {
        let v = x[self.axis];
        v >= self.lo && v <= self.hi
    }

    pub fn overlaps(&self, other: &AxisBand) -> bool {
        if self.axis != other.axis {
            // bands on different axes always intersect inside the cube
            return true;
        }
        self.lo <= other.hi && other.lo <= self.hi
    }
}

/// Supports, loads and the traction-free remainder.
///
/// `support` is the Dirichlet region (displacement `prescribed`); `load` the
/// part of the shape's upward-facing surface that carries `traction`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySpec {
    pub support: AxisBand,
    #[serde(default)]
    pub prescribed: [f64; 3],
    pub load: AxisBand,
    pub traction: [f64; 3],
    /// Body force per unit density, zero by default.
    #[serde(default)]
    pub body_force: [f64; 3],
}

impl BoundarySpec {
    /// Fixed floor at `x3 <= floor`, downward pressure `p` on surfaces above
    /// `top`.
    pub fn floor_and_top(floor: f64, top: f64, p: f64) -> Self {
        BoundarySpec {
            support: AxisBand { axis: 2, lo: -1.0, hi: floor },
            prescribed: [0.0; 3],
            load: AxisBand { axis: 2, lo: top, hi: 1.0 },
            traction: [0.0, 0.0, -p],
            body_force: [0.0; 3],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, band) in [("support", &self.support), ("load", &self.load)] {
            if band.axis > 2 {
                return Err(Error::config(format!("{name}.axis must be 0, 1 or 2")));
            }
            if !(band.lo <= band.hi) {
                return Err(Error::config(format!("{name}.lo must not exceed {name}.hi")));
            }
        }
        if self.support.overlaps(&self.load) && self.support.axis == self.load.axis {
            return Err(Error::config("support and load regions overlap; they must be disjoint"));
        }
        let finite = self.prescribed.iter().chain(&self.traction).chain(&self.body_force).all(|v| v.is_finite());
        if !finite {
            return Err(Error::config("boundary values must be finite"));
        }
        Ok(())
    }
}

impl Default for BoundarySpec {
    fn default() -> Self {
        BoundarySpec::floor_and_top(-0.8, 0.5, 0.01)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mat() -> MaterialModel {
        MaterialModel::default()
    }

    #[test]
    fn lame_values() {
        let (l, m) = lame(1.0, 0.3).unwrap();
        assert!((l - 0.576923076923).abs() < 1e-9);
        assert!((m - 0.384615384615).abs() < 1e-9);
        assert_eq!(lame(3.0, 0.0).unwrap(), (0.0, 1.5));
        let (l2, m2) = lame(2.0, 0.3).unwrap();
        assert!((l2 - 2.0 * l).abs() < 1e-15 && (m2 - 2.0 * m).abs() < 1e-15);
        assert!(lame(1.0, 0.5).is_err());
        assert!(lame(-1.0, 0.3).is_err());
        assert!(MaterialModel::new(1.0, 0.6).is_err());
    }

    #[test]
    fn strain_cases() {
        let stretch = [[1.0, 0.0, 0.0], [0.0; 3], [0.0; 3]];
        assert_eq!(strain(&stretch).0, [1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let rot = [[0.0, -0.3, 0.2], [0.3, 0.0, -0.1], [-0.2, 0.1, 0.0]];
        assert_eq!(strain(&rot).0, [0.0; 6]);
        let shear = [[0.0, 1.0, 0.0], [0.0; 3], [0.0; 3]];
        assert_eq!(strain(&shear).0, [0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn stress_cases() {
        let m = mat();
        let (l, mu) = m.lame();
        assert_eq!(stress(&StrainTensor::default(), &m).0, [0.0; 6]);
        let e = 0.01;
        let s = stress(&StrainTensor([e, e, e, 0.0, 0.0, 0.0]), &m);
        for i in 0..3 {
            assert!((s.0[i] - (3.0 * l + 2.0 * mu) * e).abs() < 1e-15);
        }
        assert_eq!(&s.0[3..], &[0.0; 3]);
        let s = stress(&StrainTensor([0.0, 0.0, 0.0, 0.2, 0.0, 0.0]), &m);
        assert_eq!(s.0, [0.0, 0.0, 0.0, mu * 0.2, 0.0, 0.0]);
    }

    #[test]
    fn von_mises_cases() {
        let s = 2.5;
        assert!((von_mises(&StressTensor([s, 0.0, 0.0, 0.0, 0.0, 0.0])) - s).abs() < 1e-12);
        assert!((von_mises(&StressTensor([-s, 0.0, 0.0, 0.0, 0.0, 0.0])) - s).abs() < 1e-12);
        assert_eq!(von_mises(&StressTensor([0.7, 0.7, 0.7, 0.0, 0.0, 0.0])), 0.0);
        let t = -0.4;
        let vm = von_mises(&StressTensor([0.0, 0.0, 0.0, t, 0.0, 0.0]));
        assert!((vm - 3f64.sqrt() * t.abs()).abs() < 1e-12);
    }

    #[test]
    fn equilibrium_cases() {
        assert_eq!(equilibrium_residual([0.0; 3], 0.7, [0.0; 3]), [0.0; 3]);
        let (rho, g) = (0.8, 9.81);
        assert_eq!(equilibrium_residual([0.0, 0.0, -rho * g], rho, [0.0, 0.0, g]), [0.0; 3]);
        assert_eq!(equilibrium_residual([1.0, 2.0, 3.0], 0.0, [5.0, 5.0, 5.0]), [1.0, 2.0, 3.0]);
    }

    #[test]
    fn traction_cases() {
        let p = 0.01;
        let s = StressTensor([0.0, 0.0, -p, 0.0, 0.0, 0.0]);
        assert_eq!(traction(&s, [0.0, 0.0, 1.0]).unwrap(), [0.0, 0.0, -p]);
        assert_eq!(traction(&StressTensor::default(), [1.0, 0.0, 0.0]).unwrap(), [0.0; 3]);
        let s = StressTensor([0.0, 0.0, 0.0, 0.3, 0.0, 0.0]);
        assert_eq!(traction(&s, [1.0, 0.0, 0.0]).unwrap(), [0.0, 0.3, 0.0]);
        assert!(traction(&s, [1.0, 1.0, 0.0]).is_err());
    }

    #[test]
    fn boundary_spec_disjointness() {
        assert!(BoundarySpec::default().validate().is_ok());
        let mut b = BoundarySpec::default();
        b.load.lo = -0.9;
        assert!(b.validate().is_err());
    }

    fn rotation(a: f64, b: f64, c: f64) -> [[f64; 3]; 3] {
        let (sa, ca) = a.sin_cos();
        let (sb, cb) = b.sin_cos();
        let (sc, cc) = c.sin_cos();
        let rz = [[ca, -sa, 0.0], [sa, ca, 0.0], [0.0, 0.0, 1.0]];
        let ry = [[cb, 0.0, sb], [0.0, 1.0, 0.0], [-sb, 0.0, cb]];
        let rx = [[1.0, 0.0, 0.0], [0.0, cc, -sc], [0.0, sc, cc]];
        matmul(&matmul(&rz, &ry), &rx)
    }

    fn matmul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
        let mut c = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    c[i][j] += a[i][k] * b[k][j];
                }
            }
        }
        c
    }

    fn transpose(a: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
        let mut t = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                t[i][j] = a[j][i];
            }
        }
        t
    }

    proptest! {
        #[test]
        fn von_mises_ignores_hydrostatic(s in proptest::array::uniform6(-10.0f64..10.0), p in -10.0f64..10.0) {
            let base = StressTensor(s);
            let shifted = StressTensor([s[0] + p, s[1] + p, s[2] + p, s[3], s[4], s[5]]);
            prop_assert!((von_mises(&base) - von_mises(&shifted)).abs() < 1e-10);
        }

        #[test]
        fn von_mises_rotation_invariant(
            s in proptest::array::uniform6(-10.0f64..10.0),
            a in 0.0f64..6.3, b in 0.0f64..6.3, c in 0.0f64..6.3,
        ) {
            let r = rotation(a, b, c);
            let m = StressTensor(s).matrix();
            let rotated = StressTensor::from_matrix(&matmul(&matmul(&r, &m), &transpose(&r)));
            prop_assert!((von_mises(&StressTensor(s)) - von_mises(&rotated)).abs() < 1e-9);
        }

        #[test]
        fn hooke_roundtrip(e in proptest::array::uniform6(-1.0f64..1.0), nu in 0.0f64..0.49, ym in 0.1f64..10.0) {
            let m = MaterialModel::new(ym, nu).unwrap();
            let back = compliance(&stress(&StrainTensor(e), &m), &m);
            for i in 0..6 {
                prop_assert!((back.0[i] - e[i]).abs() < 1e-12 * (1.0 + e[i].abs()) * 10.0);
            }
        }

        #[test]
        fn stress_is_linear(e1 in proptest::array::uniform6(-1.0f64..1.0), e2 in proptest::array::uniform6(-1.0f64..1.0), c in -3.0f64..3.0) {
            let m = mat();
            let mut sum = [0.0; 6];
            for i in 0..6 { sum[i] = c * e1[i] + e2[i]; }
            let lhs = stress(&StrainTensor(sum), &m);
            let a = stress(&StrainTensor(e1), &m);
            let b = stress(&StrainTensor(e2), &m);
            for i in 0..6 {
                prop_assert!((lhs.0[i] - (c * a.0[i] + b.0[i])).abs() < 1e-12);
            }
        }

        #[test]
        fn von_mises_grad_matches_differences(s in proptest::array::uniform6(-2.0f64..2.0)) {
            let st = StressTensor(s);
            prop_assume!(von_mises(&st) > 1e-3);
            let g = von_mises_grad(&st);
            for i in 0..6 {
                let h = 1e-6;
                let mut a = s; a[i] += h;
                let mut b = s; b[i] -= h;
                let fd = (von_mises(&StressTensor(a)) - von_mises(&StressTensor(b))) / (2.0 * h);
                prop_assert!((fd - g[i]).abs() < 1e-5);
            }
        }
    }
}
