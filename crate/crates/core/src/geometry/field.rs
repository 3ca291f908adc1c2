//! Scalar fields over the computation cube: the neural SDF and analytic
//! stand-ins used by fixtures and tests. All fields are positive inside.

use crate::autodiff::checkpoint::{find_tensor, Tensor};
use crate::autodiff::{Activation, DenseNet, JetOrder};
use crate::error::{Error, Result};

/// Points per forward chunk when evaluating networks in bulk.
pub const CHUNK: usize = 2048;

/// A scalar field that can be sampled (and differentiated) in bulk.
pub trait ScalarField: Sync {
    fn values(&self, pts: &[[f64; 3]]) -> Vec<f64>;

    fn value(&self, x: [f64; 3]) -> f64 {
        self.values(&[x])[0]
    }

    /// Value and spatial gradient. The default uses central differences.
    fn values_and_gradients(&self, pts: &[[f64; 3]]) -> Vec<(f64, [f64; 3])> {
        let h = 1e-6;
        let mut probe = Vec::with_capacity(pts.len() * 7);
        for &x in pts {
            probe.push(x);
            for k in 0..3 {
                let mut p = x;
                p[k] += h;
                probe.push(p);
                p[k] -= 2.0 * h;
                probe.push(p);
            }
        }
        let v = self.values(&probe);
        v.chunks_exact(7)
            .map(|c| (c[0], [(c[1] - c[2]) / (2.0 * h), (c[3] - c[4]) / (2.0 * h), (c[5] - c[6]) / (2.0 * h)]))
            .collect()
    }
}

/// Closure-backed analytic field.
pub struct AnalyticField<F>(pub F);

impl<F: Fn([f64; 3]) -> f64 + Sync> ScalarField for AnalyticField<F> {
    fn values(&self, pts: &[[f64; 3]]) -> Vec<f64> {
        pts.iter().map(|&x| (self.0)(x)).collect()
    }
}

/// Axis-aligned cube `[lo, hi]^3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub lo: f64,
    pub hi: f64,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds { lo: -1.0, hi: 1.0 }
    }
}

impl Bounds {
    pub fn contains(&self, x: [f64; 3]) -> bool {
        x.iter().all(|&v| v >= self.lo && v <= self.hi)
    }

    pub fn extent(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn volume(&self) -> f64 {
        self.extent().powi(3)
    }
}

/// Neural implicit geometry: a `3 -> 1` network whose output is the signed
/// distance, positive inside, over the cube `bounds`.
#[derive(Debug, Clone, PartialEq)]
pub struct SdfField {
    pub net: DenseNet,
    pub bounds: Bounds,
}

impl SdfField {
    pub fn new(net: DenseNet, bounds: Bounds) -> Result<Self> {
        if net.n_out() != 1 {
            return Err(Error::config(format!("geometry network must have one output, has {}", net.n_out())));
        }
        if !(bounds.lo < bounds.hi) {
            return Err(Error::config("empty domain bounds"));
        }
        Ok(SdfField { net, bounds })
    }

    /// Softplus network with geometric initialization (sphere of `radius`).
    pub fn geometric(hidden: &[usize], beta: f64, radius: f64, seed: u64) -> Result<Self> {
        let mut widths = vec![3];
        widths.extend_from_slice(hidden);
        widths.push(1);
        let mut net = DenseNet::new(&widths, Activation::Softplus { beta }, 1.0)?;
        net.init_geometric(radius, seed);
        SdfField::new(net, Bounds::default())
    }

    pub fn to_tensors(&self) -> Vec<Tensor> {
        let mut t = self.net.to_tensors("geometry");
        t.push(Tensor::vector("geometry.bounds", vec![self.bounds.lo, self.bounds.hi]));
        t
    }

    pub fn from_tensors(tensors: &[Tensor]) -> Result<Self> {
        let net = DenseNet::from_tensors(tensors, "geometry")?;
        let b = &find_tensor(tensors, "geometry.bounds")?.data;
        if b.len() != 2 {
            return Err(Error::Validation("malformed geometry.bounds".into()));
        }
        SdfField::new(net, Bounds { lo: b[0], hi: b[1] })
    }
}

impl ScalarField for SdfField {
    fn values(&self, pts: &[[f64; 3]]) -> Vec<f64> {
        let mut out = Vec::with_capacity(pts.len());
        for chunk in pts.chunks(CHUNK) {
            let (jets, _) = self.net.eval(chunk, JetOrder::Value);
            out.extend_from_slice(&jets.data);
        }
        out
    }

    fn values_and_gradients(&self, pts: &[[f64; 3]]) -> Vec<(f64, [f64; 3])> {
        let mut out = Vec::with_capacity(pts.len());
        for chunk in pts.chunks(CHUNK) {
            let (jets, _) = self.net.eval(chunk, JetOrder::Gradient);
            for p in 0..chunk.len() {
                out.push((jets.value(p, 0), jets.gradient(p, 0)));
            }
        }
        out
    }
}

/// Temperature of the SDF-to-density sigmoid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityParams {
    tau: f64,
}

impl Default for DensityParams {
    fn default() -> Self {
        DensityParams { tau: 0.02 }
    }
}

impl DensityParams {
    pub fn new(tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::config(format!("temperature must be positive, got {tau}")));
        }
        Ok(DensityParams { tau })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// `sigmoid(f / tau)`, kept strictly inside (0, 1).
    #[inline]
    pub fn density_of(&self, sdf: f64) -> f64 {
        let z = sdf / self.tau;
        let s = if z >= 0.0 {
            1.0 / (1.0 + (-z).exp())
        } else {
            let e = z.exp();
            e / (1.0 + e)
        };
        s.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
    }

    /// `d rho / d f`.
    #[inline]
    pub fn density_slope(&self, rho: f64) -> f64 {
        rho * (1.0 - rho) / self.tau
    }
}

/// Material density at `x`.
pub fn density(field: &dyn ScalarField, dp: &DensityParams, x: [f64; 3]) -> f64 {
    dp.density_of(field.value(x))
}

/// Mean of `(|grad f| - 1)^2` over `points`.
pub fn eikonal_loss(field: &dyn ScalarField, points: &[[f64; 3]]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let vg = field.values_and_gradients(points);
    vg.iter()
        .map(|(_, g)| {
            let n = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
            (n - 1.0) * (n - 1.0)
        })
        .sum::<f64>()
        / points.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn density_values() {
        let dp = DensityParams::default();
        assert_eq!(dp.density_of(0.0), 0.5);
        assert!(dp.density_of(10.0 * dp.tau()) > 0.9999);
        let want = 1.0 / (1.0 + std::f64::consts::E);
        assert!((dp.density_of(-dp.tau()) - want).abs() < 1e-15);
        assert!(dp.density_of(1e3) < 1.0);
        assert!(dp.density_of(-1e3) > 0.0);
        assert!(DensityParams::new(0.0).is_err());
    }

    #[test]
    fn density_is_monotone() {
        let dp = DensityParams::new(0.05).unwrap();
        let mut last = 0.0;
        for i in -200..=200 {
            let r = dp.density_of(i as f64 * 0.005);
            assert!(r >= last);
            last = r;
        }
    }

    #[test]
    fn eikonal_cases() {
        let pts: Vec<[f64; 3]> = (0..50).map(|i| [0.01 * i as f64, -0.3, 0.2]).collect();
        let plane = AnalyticField(|x: [f64; 3]| x[2]);
        assert!(eikonal_loss(&plane, &pts) < 1e-16);
        let constant = AnalyticField(|_: [f64; 3]| 0.7);
        assert_eq!(eikonal_loss(&constant, &pts), 1.0);
    }

    #[test]
    fn geometric_init_is_a_sphere() {
        let f = SdfField::geometric(&[64, 64, 64], 100.0, 0.5, 1).unwrap();
        let inside = f.value([0.0, 0.0, 0.0]);
        let outside = f.value([0.9, 0.0, 0.0]);
        assert!(inside > 0.3, "{inside}");
        assert!(outside < -0.2, "{outside}");
    }

    #[test]
    fn checkpoint_roundtrip() {
        let f = SdfField::geometric(&[8, 8], 100.0, 0.5, 3).unwrap();
        let back = SdfField::from_tensors(&f.to_tensors()).unwrap();
        assert_eq!(back, f);
    }
}
