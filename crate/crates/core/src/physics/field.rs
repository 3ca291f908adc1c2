use crate::autodiff::checkpoint::Tensor;
use crate::autodiff::{Activation, DenseNet, JetBatch, JetOrder};
use crate::elasticity::{self, MaterialModel, StrainTensor, StressTensor};
use crate::error::{Error, Result};
use crate::geometry::{DensityParams, ScalarField};

/// Neural displacement field `x -> u(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField {
    pub net: DenseNet,
}

impl DisplacementField {
    pub fn new(net: DenseNet) -> Result<Self> {
        if net.n_out() != 3 {
            return Err(Error::config(format!("displacement network must have three outputs, has {}", net.n_out())));
        }
        Ok(DisplacementField { net })
    }

    /// Tanh network with Glorot initialization and a fixed output scale.
    pub fn tanh(hidden: &[usize], output_scale: f64, seed: u64) -> Result<Self> {
        let mut widths = vec![3];
        widths.extend_from_slice(hidden);
        widths.push(3);
        let mut net = DenseNet::new(&widths, Activation::Tanh, output_scale)?;
        net.init_glorot(seed);
        DisplacementField::new(net)
    }

    pub fn to_tensors(&self) -> Vec<Tensor> {
        self.net.to_tensors("physics")
    }

    pub fn from_tensors(tensors: &[Tensor]) -> Result<Self> {
        DisplacementField::new(DenseNet::from_tensors(tensors, "physics")?)
    }

    pub fn displacements(&self, pts: &[[f64; 3]]) -> Vec<[f64; 3]> {
        let mut out = Vec::with_capacity(pts.len());
        for chunk in pts.chunks(crate::geometry::CHUNK) {
            let (jets, _) = self.net.eval(chunk, JetOrder::Value);
            for p in 0..chunk.len() {
                out.push([jets.value(p, 0), jets.value(p, 1), jets.value(p, 2)]);
            }
        }
        out
    }
}

/// Density and its spatial gradient at a set of points, together with the
/// SDF values and gradients they were derived from.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityJets {
    pub f: Vec<f64>,
    pub grad_f: Vec<[f64; 3]>,
    pub rho: Vec<f64>,
    pub grad_rho: Vec<[f64; 3]>,
}

impl DensityJets {
    fn from_parts(vg: impl Iterator<Item = (f64, [f64; 3])>, dp: &DensityParams) -> Self {
        let mut out = DensityJets { f: Vec::new(), grad_f: Vec::new(), rho: Vec::new(), grad_rho: Vec::new() };
        for (f, g) in vg {
            let r = dp.density_of(f);
            let d = dp.density_slope(r);
            out.f.push(f);
            out.grad_f.push(g);
            out.rho.push(r);
            out.grad_rho.push([d * g[0], d * g[1], d * g[2]]);
        }
        out
    }

    pub fn from_field(field: &dyn ScalarField, dp: &DensityParams, pts: &[[f64; 3]]) -> Self {
        DensityJets::from_parts(field.values_and_gradients(pts).into_iter(), dp)
    }

    /// From a first-order jet batch of a one-output SDF network.
    pub fn from_jets(jets: &JetBatch, dp: &DensityParams) -> Self {
        assert!(jets.order >= JetOrder::Gradient && jets.n_out == 1);
        DensityJets::from_parts((0..jets.n_points).map(|p| (jets.value(p, 0), jets.gradient(p, 0))), dp)
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> DensityJets {
        DensityJets {
            f: self.f[range.clone()].to_vec(),
            grad_f: self.grad_f[range.clone()].to_vec(),
            rho: self.rho[range.clone()].to_vec(),
            grad_rho: self.grad_rho[range].to_vec(),
        }
    }

    pub fn mean_density(&self) -> f64 {
        if self.rho.is_empty() {
            return 0.0;
        }
        self.rho.iter().sum::<f64>() / self.rho.len() as f64
    }
}

/// Adjoints of a scalar loss with respect to density and its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityAdjoint {
    pub rho: Vec<f64>,
    pub grad_rho: Vec<[f64; 3]>,
}

impl DensityAdjoint {
    pub fn zeros(n: usize) -> Self {
        DensityAdjoint { rho: vec![0.0; n], grad_rho: vec![[0.0; 3]; n] }
    }

    /// Chain rule through `rho = sigmoid(f / tau)` and
    /// `grad rho = rho (1 - rho) / tau * grad f`, giving the adjoint jet of
    /// the SDF network (first order, one output).
    pub fn pullback(&self, jets: &DensityJets, dp: &DensityParams) -> JetBatch {
        let n = jets.len();
        let mut adj = JetBatch::zeros(JetOrder::Gradient, n, 1);
        let tau = dp.tau();
        for p in 0..n {
            let r = jets.rho[p];
            let d = dp.density_slope(r);
            let dd = d * (1.0 - 2.0 * r) / tau;
            let ag = self.grad_rho[p];
            let gf = jets.grad_f[p];
            *adj.value_mut(p, 0) = self.rho[p] * d + dd * (ag[0] * gf[0] + ag[1] * gf[1] + ag[2] * gf[2]);
            for j in 0..3 {
                *adj.grad_mut(p, 0, j) = ag[j] * d;
            }
        }
        adj
    }
}

/// Physics quantities predicted at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldPrediction {
    pub x: [f64; 3],
    pub displacement: [f64; 3],
    pub strain: StrainTensor,
    /// Density-scaled stress.
    pub stress: StressTensor,
    pub von_mises: f64,
    pub density: f64,
}

pub fn predict_batch(
    u: &DisplacementField,
    geometry: &dyn ScalarField,
    dp: &DensityParams,
    mat: &MaterialModel,
    pts: &[[f64; 3]],
) -> Vec<FieldPrediction> {
    let rho: Vec<f64> = geometry.values(pts).into_iter().map(|f| dp.density_of(f)).collect();
    let mut out = Vec::with_capacity(pts.len());
    for (c, chunk) in pts.chunks(crate::geometry::CHUNK).enumerate() {
        let (jets, _) = u.net.eval(chunk, JetOrder::Gradient);
        for (p, &x) in chunk.iter().enumerate() {
            let r = rho[c * crate::geometry::CHUNK + p];
            let strain = elasticity::strain(&jets.jacobian3(p));
            let stress = elasticity::stress(&strain, mat).scaled(r);
            out.push(FieldPrediction {
                x,
                displacement: [jets.value(p, 0), jets.value(p, 1), jets.value(p, 2)],
                strain,
                von_mises: elasticity::von_mises(&stress),
                stress,
                density: r,
            });
        }
    }
    out
}

pub fn predict(
    u: &DisplacementField,
    geometry: &dyn ScalarField,
    dp: &DensityParams,
    mat: &MaterialModel,
    x: [f64; 3],
) -> FieldPrediction {
    predict_batch(u, geometry, dp, mat, &[x]).remove(0)
}
