//! Dense feed-forward networks on 3D inputs with forward-mode input jets and
//! reverse accumulation into the parameters.
//!
//! A batch of points is carried through the layer stack as a matrix whose rows
//! are `(point, channel)` pairs. Channel 0 holds the value, channels 1..=3 the
//! first derivatives with respect to the three input coordinates and channels
//! 4..=9 the upper triangle of the input Hessian (see [`HESS_PAIRS`]). Only as
//! many channels as the requested [`JetOrder`] needs are propagated.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{Error, Result};

/// Index pairs of the six stored Hessian entries, in channel order.
pub const HESS_PAIRS: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];

/// Hessian channel (0..6) holding entry `(j, k)`.
pub fn hess_index(j: usize, k: usize) -> usize {
    let (a, b) = if j <= k { (j, k) } else { (k, j) };
    match (a, b) {
        (0, 0) => 0,
        (1, 1) => 1,
        (2, 2) => 2,
        (0, 1) => 3,
        (0, 2) => 4,
        (1, 2) => 5,
        _ => panic!("hessian index out of range: ({j}, {k})"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Tanh,
    /// `ln(1 + exp(beta x)) / beta`
    Softplus {
        beta: f64,
    },
}

impl Activation {
    /// Value and the first three derivatives at `z`.
    #[inline]
    fn eval(self, z: f64) -> [f64; 4] {
        match self {
            Activation::Tanh => {
                let t = z.tanh();
                let s = 1.0 - t * t;
                [t, s, -2.0 * t * s, -2.0 * s * (1.0 - 3.0 * t * t)]
            }
            Activation::Softplus { beta } => {
                let bz = beta * z;
                // ln(1 + e^bz) computed without overflow
                let value = if bz > 0.0 { (bz + (-bz).exp().ln_1p()) / beta } else { bz.exp().ln_1p() / beta };
                let q = if bz >= 0.0 {
                    1.0 / (1.0 + (-bz).exp())
                } else {
                    let e = bz.exp();
                    e / (1.0 + e)
                };
                let d2 = beta * q * (1.0 - q);
                [value, q, d2, beta * d2 * (1.0 - 2.0 * q)]
            }
        }
    }

    fn tag(self) -> (f64, f64) {
        match self {
            Activation::Tanh => (0.0, 0.0),
            Activation::Softplus { beta } => (1.0, beta),
        }
    }

    fn from_tag(kind: f64, beta: f64) -> Result<Self> {
        match kind as i64 {
            0 => Ok(Activation::Tanh),
            1 if beta > 0.0 => Ok(Activation::Softplus { beta }),
            _ => Err(Error::Validation(format!("unknown activation tag ({kind}, {beta})"))),
        }
    }
}

/// Highest input-derivative order carried through a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum JetOrder {
    Value,
    Gradient,
    Hessian,
}

impl JetOrder {
    pub fn channels(self) -> usize {
        match self {
            JetOrder::Value => 1,
            JetOrder::Gradient => 4,
            JetOrder::Hessian => 10,
        }
    }
}

/// Outputs (or output adjoints) of a batched forward pass, laid out as rows
/// `point * channels + channel` and one column per network output.
#[derive(Debug, Clone, PartialEq)]
pub struct JetBatch {
    pub order: JetOrder,
    pub n_points: usize,
    pub n_out: usize,
    pub data: Vec<f64>,
}

impl JetBatch {
    pub fn zeros(order: JetOrder, n_points: usize, n_out: usize) -> Self {
        JetBatch { order, n_points, n_out, data: vec![0.0; n_points * order.channels() * n_out] }
    }

    #[inline]
    fn idx(&self, p: usize, channel: usize, o: usize) -> usize {
        (p * self.order.channels() + channel) * self.n_out + o
    }

    #[inline]
    pub fn value(&self, p: usize, o: usize) -> f64 {
        self.data[self.idx(p, 0, o)]
    }

    #[inline]
    pub fn grad(&self, p: usize, o: usize, j: usize) -> f64 {
        debug_assert!(self.order >= JetOrder::Gradient);
        self.data[self.idx(p, 1 + j, o)]
    }

    #[inline]
    pub fn gradient(&self, p: usize, o: usize) -> [f64; 3] {
        [self.grad(p, o, 0), self.grad(p, o, 1), self.grad(p, o, 2)]
    }

    /// Jacobian row-per-output: `jac[i][j] = d out_i / d x_j`.
    pub fn jacobian3(&self, p: usize) -> [[f64; 3]; 3] {
        let mut jac = [[0.0; 3]; 3];
        for (i, row) in jac.iter_mut().enumerate() {
            *row = self.gradient(p, i);
        }
        jac
    }

    #[inline]
    pub fn hess(&self, p: usize, o: usize, j: usize, k: usize) -> f64 {
        debug_assert!(self.order >= JetOrder::Hessian);
        self.data[self.idx(p, 4 + hess_index(j, k), o)]
    }

    pub fn hessian(&self, p: usize, o: usize) -> [[f64; 3]; 3] {
        let mut h = [[0.0; 3]; 3];
        for (j, row) in h.iter_mut().enumerate() {
            for (k, v) in row.iter_mut().enumerate() {
                *v = self.hess(p, o, j, k);
            }
        }
        h
    }

    #[inline]
    pub fn value_mut(&mut self, p: usize, o: usize) -> &mut f64 {
        let i = self.idx(p, 0, o);
        &mut self.data[i]
    }

    #[inline]
    pub fn grad_mut(&mut self, p: usize, o: usize, j: usize) -> &mut f64 {
        let i = self.idx(p, 1 + j, o);
        &mut self.data[i]
    }

    /// Adjoint slot for the stored Hessian entry `(j, k)`. Since only one of
    /// the symmetric pair is stored, the caller must add the adjoints of both
    /// `(j, k)` and `(k, j)` here.
    #[inline]
    pub fn hess_mut(&mut self, p: usize, o: usize, j: usize, k: usize) -> &mut f64 {
        let i = self.idx(p, 4 + hess_index(j, k), o);
        &mut self.data[i]
    }
}

/// Derivatives of every output at a single point.
#[derive(Debug, Clone, PartialEq)]
pub struct InputJet {
    pub x: [f64; 3],
    pub value: Vec<f64>,
    pub gradient: Vec<[f64; 3]>,
    pub hessian: Vec<[[f64; 3]; 3]>,
}

/// Intermediate state of a batched forward pass, consumed by
/// [`DenseNet::backward`].
#[derive(Debug, Clone)]
pub struct Tape {
    order: JetOrder,
    n_points: usize,
    /// Input matrix of each layer.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation matrix of each hidden layer.
    pre: Vec<Vec<f64>>,
}

impl Tape {
    pub fn n_points(&self) -> usize {
        self.n_points
    }
    pub fn order(&self) -> JetOrder {
        self.order
    }
}

/// Fully connected network `R^3 -> R^n_out` with one smooth activation on all
/// hidden layers, a linear output layer and a fixed output scale.
///
/// Parameters live in one flat vector: for each layer the row-major weight
/// matrix (`out x in`) followed by the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    widths: Vec<usize>,
    activation: Activation,
    output_scale: f64,
    params: Vec<f64>,
    offsets: Vec<usize>,
}

impl DenseNet {
    /// Zero-initialized network. `widths` starts with the input width 3 and
    /// ends with the output width.
    pub fn new(widths: &[usize], activation: Activation, output_scale: f64) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::config("a network needs at least one layer"));
        }
        if widths[0] != 3 {
            return Err(Error::config(format!("input width must be 3, got {}", widths[0])));
        }
        if widths.iter().any(|&w| w == 0) {
            return Err(Error::config("layer widths must be positive"));
        }
        if !output_scale.is_finite() {
            return Err(Error::config("output scale must be finite"));
        }
        if let Activation::Softplus { beta } = activation {
            if !(beta > 0.0 && beta.is_finite()) {
                return Err(Error::config("softplus sharpness must be positive"));
            }
        }
        let mut offsets = Vec::with_capacity(widths.len());
        let mut n = 0;
        for pair in widths.windows(2) {
            offsets.push(n);
            n += pair[1] * pair[0] + pair[1];
        }
        Ok(DenseNet { widths: widths.to_vec(), activation, output_scale, params: vec![0.0; n], offsets })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init_glorot(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in 0..self.n_layers() {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            let a = (6.0 / (n_in + n_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-a, a);
            let (w, b) = self.layer_range(l);
            for v in &mut self.params[w.clone()] {
                *v = dist.sample(&mut rng);
            }
            for v in &mut self.params[b] {
                *v = 0.0;
            }
        }
    }

    /// Geometric initialization for SDF networks: the freshly initialized
    /// network approximates a sphere of `radius`, positive inside.
    pub fn init_geometric(&mut self, radius: f64, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let last = self.n_layers() - 1;
        for l in 0..self.n_layers() {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            let (w, b) = self.layer_range(l);
            if l == last {
                let mean = -(std::f64::consts::PI / n_in as f64).sqrt();
                let dist = Normal::new(mean, 1e-5).unwrap();
                for v in &mut self.params[w] {
                    *v = dist.sample(&mut rng);
                }
                for v in &mut self.params[b] {
                    *v = radius;
                }
            } else {
                let dist = Normal::new(0.0, 2f64.sqrt() / (n_out as f64).sqrt()).unwrap();
                for v in &mut self.params[w] {
                    *v = dist.sample(&mut rng);
                }
                for v in &mut self.params[b] {
                    *v = 0.0;
                }
            }
        }
        // The output scale multiplies everything after the last layer.
        if self.output_scale != 1.0 && self.output_scale != 0.0 {
            let (w, b) = self.layer_range(last);
            let s = self.output_scale;
            for v in &mut self.params[w] {
                *v /= s;
            }
            for v in &mut self.params[b] {
                *v /= s;
            }
        }
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn output_scale(&self) -> f64 {
        self.output_scale
    }

    pub fn n_layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn n_out(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Replace all parameters; rejects a wrong length or non-finite entries.
    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::config(format!(
                "parameter count mismatch: expected {}, got {}",
                self.params.len(),
                params.len()
            )));
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite network parameter".into()));
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    /// Flat index ranges of the weight matrix and bias of layer `l`.
    pub fn layer_range(&self, l: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
        let w0 = self.offsets[l];
        let b0 = w0 + n_in * n_out;
        (w0..b0, b0..b0 + n_out)
    }

    /// Evaluate the outputs at one point.
    pub fn forward(&self, x: [f64; 3]) -> Result<Vec<f64>> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("non-finite input point"));
        }
        let (jets, _) = self.eval(&[x], JetOrder::Value);
        Ok(jets.data)
    }

    /// Value, input gradient and input Hessian of every output at one point.
    pub fn input_jet(&self, x: [f64; 3]) -> Result<InputJet> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("non-finite input point"));
        }
        let (jets, _) = self.eval(&[x], JetOrder::Hessian);
        let n = self.n_out();
        Ok(InputJet {
            x,
            value: (0..n).map(|o| jets.value(0, o)).collect(),
            gradient: (0..n).map(|o| jets.gradient(0, o)).collect(),
            hessian: (0..n).map(|o| jets.hessian(0, o)).collect(),
        })
    }

    /// Batched forward pass carrying input derivatives up to `order`.
    pub fn eval(&self, points: &[[f64; 3]], order: JetOrder) -> (JetBatch, Tape) {
        let c = order.channels();
        let n_points = points.len();
        let rows = n_points * c;

        let mut input = vec![0.0; rows * 3];
        for (p, x) in points.iter().enumerate() {
            input[p * c * 3..p * c * 3 + 3].copy_from_slice(x);
            if c > 1 {
                for j in 0..3 {
                    input[(p * c + 1 + j) * 3 + j] = 1.0;
                }
            }
        }

        let mut inputs = Vec::with_capacity(self.n_layers());
        let mut pre = Vec::with_capacity(self.n_layers() - 1);
        let mut a = input;
        for l in 0..self.n_layers() {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            let (w, b) = self.layer_range(l);
            let mut z = vec![0.0; rows * n_out];
            // z = a * W^T
            gemm(
                rows,
                n_in,
                n_out,
                &a,
                (n_in as isize, 1),
                &self.params[w],
                (1, n_in as isize),
                0.0,
                &mut z,
                (n_out as isize, 1),
            );
            let bias = &self.params[b];
            for p in 0..n_points {
                let row = &mut z[p * c * n_out..p * c * n_out + n_out];
                for (zv, bv) in row.iter_mut().zip(bias) {
                    *zv += bv;
                }
            }
            inputs.push(a);
            if l + 1 < self.n_layers() {
                let h = activate_forward(self.activation, &z, n_points, c, n_out);
                pre.push(z);
                a = h;
            } else {
                if self.output_scale != 1.0 {
                    for v in &mut z {
                        *v *= self.output_scale;
                    }
                }
                let jets = JetBatch { order, n_points, n_out, data: z };
                let tape = Tape { order, n_points, inputs, pre };
                return (jets, tape);
            }
        }
        unreachable!("network has at least one layer")
    }

    /// Accumulate into `grads` the parameter gradient of a scalar loss whose
    /// derivatives with respect to every recorded jet entry are `adjoint`.
    pub fn backward(&self, tape: &Tape, adjoint: &JetBatch, grads: &mut [f64]) {
        assert_eq!(grads.len(), self.params.len(), "gradient buffer length");
        assert_eq!(adjoint.order, tape.order, "adjoint order must match tape");
        assert_eq!(adjoint.n_points, tape.n_points, "adjoint point count");
        assert_eq!(adjoint.n_out, self.n_out(), "adjoint output width");
        let c = tape.order.channels();
        let rows = tape.n_points * c;

        let mut adj_z: Vec<f64> = adjoint.data.iter().map(|v| v * self.output_scale).collect();
        for l in (0..self.n_layers()).rev() {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            let (w, b) = self.layer_range(l);
            let a = &tape.inputs[l];
            // dW += adj_z^T * a
            gemm(
                n_out,
                rows,
                n_in,
                &adj_z,
                (1, n_out as isize),
                a,
                (n_in as isize, 1),
                1.0,
                &mut grads[w.clone()],
                (n_in as isize, 1),
            );
            let gb = &mut grads[b];
            for p in 0..tape.n_points {
                let row = &adj_z[p * c * n_out..p * c * n_out + n_out];
                for (g, v) in gb.iter_mut().zip(row) {
                    *g += v;
                }
            }
            if l == 0 {
                break;
            }
            // adj_a = adj_z * W
            let mut adj_a = vec![0.0; rows * n_in];
            gemm(
                rows,
                n_out,
                n_in,
                &adj_z,
                (n_out as isize, 1),
                &self.params[w],
                (n_in as isize, 1),
                0.0,
                &mut adj_a,
                (n_in as isize, 1),
            );
            adj_z = activate_backward(self.activation, &tape.pre[l - 1], &adj_a, tape.n_points, c, n_in);
        }
    }

    /// Named tensors for checkpointing.
    pub fn to_tensors(&self, prefix: &str) -> Vec<crate::autodiff::checkpoint::Tensor> {
        use crate::autodiff::checkpoint::Tensor;
        let (kind, beta) = self.activation.tag();
        let mut out = vec![
            Tensor::vector(format!("{prefix}.widths"), self.widths.iter().map(|&w| w as f64).collect()),
            Tensor::vector(format!("{prefix}.activation"), vec![kind, beta]),
            Tensor::vector(format!("{prefix}.output_scale"), vec![self.output_scale]),
        ];
        for l in 0..self.n_layers() {
            let (w, b) = self.layer_range(l);
            out.push(Tensor {
                name: format!("{prefix}.layer{l}.weight"),
                dims: vec![self.widths[l + 1], self.widths[l]],
                data: self.params[w].to_vec(),
            });
            out.push(Tensor::vector(format!("{prefix}.layer{l}.bias"), self.params[b].to_vec()));
        }
        out
    }

    pub fn from_tensors(tensors: &[crate::autodiff::checkpoint::Tensor], prefix: &str) -> Result<Self> {
        use crate::autodiff::checkpoint::find_tensor;
        let widths: Vec<usize> =
            find_tensor(tensors, &format!("{prefix}.widths"))?.data.iter().map(|&w| w as usize).collect();
        let act = &find_tensor(tensors, &format!("{prefix}.activation"))?.data;
        if act.len() != 2 {
            return Err(Error::Validation("malformed activation tensor".into()));
        }
        let activation = Activation::from_tag(act[0], act[1])?;
        let scale = find_tensor(tensors, &format!("{prefix}.output_scale"))?.data[0];
        let mut net = DenseNet::new(&widths, activation, scale)?;
        for l in 0..net.n_layers() {
            let (w, b) = net.layer_range(l);
            let wt = find_tensor(tensors, &format!("{prefix}.layer{l}.weight"))?;
            let bt = find_tensor(tensors, &format!("{prefix}.layer{l}.bias"))?;
            if wt.data.len() != w.len() || bt.data.len() != b.len() {
                return Err(Error::Validation(format!("layer {l} tensor shape does not match widths")));
            }
            net.params[w].copy_from_slice(&wt.data);
            net.params[b].copy_from_slice(&bt.data);
        }
        if net.params.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite network parameter".into()));
        }
        Ok(net)
    }
}

/// `c = a * b + beta * c` with explicit (row, column) strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (isize, isize),
    b: &[f64],
    (rsb, csb): (isize, isize),
    beta: f64,
    c: &mut [f64],
    (rsc, csc): (isize, isize),
) {
    if m == 0 || n == 0 {
        return;
    }
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    // SAFETY: slice lengths cover every strided element touched for these
    // dense row/column-major layouts.
    unsafe {
        matrixmultiply::dgemm(m, k, n, 1.0, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta, c.as_mut_ptr(), rsc, csc);
    }
}

fn activate_forward(act: Activation, z: &[f64], n_points: usize, c: usize, width: usize) -> Vec<f64> {
    let mut h = vec![0.0; z.len()];
    for p in 0..n_points {
        let base = p * c * width;
        for u in 0..width {
            let at = |ch: usize| base + ch * width + u;
            let [s0, s1, s2, _] = act.eval(z[at(0)]);
            h[at(0)] = s0;
            if c == 1 {
                continue;
            }
            let zg = [z[at(1)], z[at(2)], z[at(3)]];
            for j in 0..3 {
                h[at(1 + j)] = s1 * zg[j];
            }
            if c == 4 {
                continue;
            }
            for (q, &(j, k)) in HESS_PAIRS.iter().enumerate() {
                h[at(4 + q)] = s2 * zg[j] * zg[k] + s1 * z[at(4 + q)];
            }
        }
    }
    h
}

fn activate_backward(act: Activation, z: &[f64], adj_h: &[f64], n_points: usize, c: usize, width: usize) -> Vec<f64> {
    let mut adj_z = vec![0.0; z.len()];
    for p in 0..n_points {
        let base = p * c * width;
        for u in 0..width {
            let at = |ch: usize| base + ch * width + u;
            let [_, s1, s2, s3] = act.eval(z[at(0)]);
            let mut a0 = adj_h[at(0)] * s1;
            if c > 1 {
                let zg = [z[at(1)], z[at(2)], z[at(3)]];
                let mut ag = [0.0; 3];
                for j in 0..3 {
                    let ah = adj_h[at(1 + j)];
                    a0 += ah * s2 * zg[j];
                    ag[j] += ah * s1;
                }
                if c == 10 {
                    for (q, &(j, k)) in HESS_PAIRS.iter().enumerate() {
                        let ah = adj_h[at(4 + q)];
                        let zh = z[at(4 + q)];
                        a0 += ah * (s3 * zg[j] * zg[k] + s2 * zh);
                        ag[j] += ah * s2 * zg[k];
                        ag[k] += ah * s2 * zg[j];
                        adj_z[at(4 + q)] = ah * s1;
                    }
                }
                for j in 0..3 {
                    adj_z[at(1 + j)] = ag[j];
                }
            }
            adj_z[at(0)] = a0;
        }
    }
    adj_z
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seeded(widths: &[usize], act: Activation, seed: u64) -> DenseNet {
        let mut net = DenseNet::new(widths, act, 1.0).unwrap();
        net.init_glorot(seed);
        // nonzero biases exercise the bias path
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let dist = Uniform::new(-0.3, 0.3);
        for l in 0..net.n_layers() {
            let (_, b) = net.layer_range(l);
            for v in &mut net.params_mut()[b] {
                *v = dist.sample(&mut rng);
            }
        }
        net
    }

    /// Straight-line scalar re-evaluation used as an independent oracle.
    fn scalar_forward(net: &DenseNet, x: [f64; 3]) -> Vec<f64> {
        let mut a = x.to_vec();
        for l in 0..net.n_layers() {
            let (n_in, n_out) = (net.widths()[l], net.widths()[l + 1]);
            let (w, b) = net.layer_range(l);
            let (w, b) = (&net.params()[w], &net.params()[b]);
            let mut z = vec![0.0; n_out];
            for o in 0..n_out {
                let mut s = b[o];
                for i in 0..n_in {
                    s += w[o * n_in + i] * a[i];
                }
                z[o] = s;
            }
            a = if l + 1 < net.n_layers() {
                z.iter()
                    .map(|&v| match net.activation() {
                        Activation::Tanh => v.tanh(),
                        Activation::Softplus { beta } => (beta * v).exp().ln_1p() / beta,
                    })
                    .collect()
            } else {
                z.iter().map(|v| v * net.output_scale()).collect()
            };
        }
        a
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = DenseNet::new(&[3, 8, 8, 2], Activation::Tanh, 1.0).unwrap();
        assert_eq!(net.forward([0.3, -1.0, 2.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_layer() {
        let mut net = DenseNet::new(&[3, 3], Activation::Tanh, 1.0).unwrap();
        let (w, _) = net.layer_range(0);
        let p = &mut net.params_mut()[w];
        p[0] = 1.0;
        p[4] = 1.0;
        p[8] = 1.0;
        assert_eq!(net.forward([0.1, 0.2, 0.3]).unwrap(), vec![0.1, 0.2, 0.3]);
    }

    #[test]
    fn forward_matches_scalar_oracle() {
        for seed in 0..20 {
            let net = seeded(&[3, 8, 1], Activation::Tanh, seed);
            let x = [0.3, -0.7, 0.45];
            let got = net.forward(x).unwrap();
            let want = scalar_forward(&net, x);
            assert!((got[0] - want[0]).abs() < 1e-14, "{got:?} vs {want:?}");
        }
        let net = seeded(&[3, 16, 16, 1], Activation::Softplus { beta: 100.0 }, 3);
        let x = [0.1, 0.2, -0.3];
        assert!((net.forward(x).unwrap()[0] - scalar_forward(&net, x)[0]).abs() < 1e-13);
    }

    #[test]
    fn rejects_bad_dimensions() {
        assert!(DenseNet::new(&[2, 4, 1], Activation::Tanh, 1.0).is_err());
        assert!(DenseNet::new(&[3], Activation::Tanh, 1.0).is_err());
        assert!(DenseNet::new(&[3, 0, 1], Activation::Tanh, 1.0).is_err());
    }

    #[test]
    fn linear_net_jet() {
        let mut net = DenseNet::new(&[3, 2], Activation::Tanh, 1.0).unwrap();
        net.params_mut().copy_from_slice(&[1.0, 2.0, 3.0, -4.0, 5.0, -6.0, 0.5, 0.25]);
        let jet = net.input_jet([0.3, 0.1, 0.2]).unwrap();
        assert_eq!(jet.gradient[0], [1.0, 2.0, 3.0]);
        assert_eq!(jet.gradient[1], [-4.0, 5.0, -6.0]);
        assert_eq!(jet.hessian[0], [[0.0; 3]; 3]);
        assert_eq!(jet.hessian[1], [[0.0; 3]; 3]);
    }

    #[test]
    fn tanh_closed_form_at_origin() {
        // u(x) = 1 * tanh(1 * x1)
        let mut net = DenseNet::new(&[3, 1, 1], Activation::Tanh, 1.0).unwrap();
        net.params_mut().copy_from_slice(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let jet = net.input_jet([0.0, 0.5, -0.5]).unwrap();
        assert_eq!(jet.value[0], 0.0);
        assert_eq!(jet.gradient[0][0], 1.0);
        assert_eq!(jet.hessian[0][0][0], 0.0);
        let x1 = 0.4f64;
        let jet = net.input_jet([x1, 0.0, 0.0]).unwrap();
        let t = x1.tanh();
        assert!((jet.gradient[0][0] - (1.0 - t * t)).abs() < 1e-15);
        assert!((jet.hessian[0][0][0] + 2.0 * t * (1.0 - t * t)).abs() < 1e-15);
    }

    #[test]
    fn jet_value_is_bit_identical_to_forward() {
        let net = seeded(&[3, 24, 24, 3], Activation::Tanh, 11);
        for x in [[0.1, 0.2, 0.3], [-0.9, 0.4, 0.0], [0.55, -0.25, 0.75]] {
            let v = net.forward(x).unwrap();
            let jet = net.input_jet(x).unwrap();
            assert_eq!(v, jet.value);
        }
        // and inside a larger batch
        let pts: Vec<[f64; 3]> = (0..37).map(|i| [i as f64 * 0.02, -0.3, 0.1]).collect();
        let (batch, _) = net.eval(&pts, JetOrder::Hessian);
        for (p, x) in pts.iter().enumerate() {
            let v = net.forward(*x).unwrap();
            for o in 0..3 {
                assert_eq!(batch.value(p, o), v[o]);
            }
        }
    }

    #[test]
    fn softplus_derivatives_match_differences() {
        let act = Activation::Softplus { beta: 100.0 };
        for z in [-0.05, -0.003, 0.0, 0.004, 0.03] {
            let h = 1e-6;
            let [_, d1, d2, d3] = act.eval(z);
            let fd1 = (act.eval(z + h)[0] - act.eval(z - h)[0]) / (2.0 * h);
            let fd2 = (act.eval(z + h)[1] - act.eval(z - h)[1]) / (2.0 * h);
            let fd3 = (act.eval(z + h)[2] - act.eval(z - h)[2]) / (2.0 * h);
            assert!((d1 - fd1).abs() < 1e-6);
            assert!((d2 - fd2).abs() < 1e-4 * d2.abs().max(1.0));
            assert!((d3 - fd3).abs() < 1e-3 * d3.abs().max(1.0));
        }
        // no overflow far out
        assert!(act.eval(50.0)[0].is_finite());
        assert!(act.eval(-50.0)[0] >= 0.0);
    }

    #[test]
    fn concurrent_evaluation_matches_sequential() {
        let net = seeded(&[3, 16, 16, 3], Activation::Tanh, 5);
        let pts: Vec<[f64; 3]> = (0..64)
            .map(|i| {
                let t = i as f64 / 64.0;
                [t - 0.5, (3.0 * t).sin(), (5.0 * t).cos() * 0.5]
            })
            .collect();
        let sequential: Vec<InputJet> = pts.iter().map(|&x| net.input_jet(x).unwrap()).collect();
        let parallel: Vec<Vec<InputJet>> = std::thread::scope(|s| {
            let handles: Vec<_> = pts
                .chunks(16)
                .map(|chunk| {
                    let net = &net;
                    s.spawn(move || chunk.iter().map(|&x| net.input_jet(x).unwrap()).collect())
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        let parallel: Vec<InputJet> = parallel.into_iter().flatten().collect();
        assert_eq!(sequential, parallel);
    }

    /// Linear functional of all jet entries with fixed random weights.
    fn jet_functional(net: &DenseNet, pts: &[[f64; 3]], order: JetOrder, weights: &[f64]) -> f64 {
        let (jets, _) = net.eval(pts, order);
        jets.data.iter().zip(weights).map(|(a, b)| a * b).sum()
    }

    #[test]
    fn backward_matches_finite_differences() {
        for (order, act) in [
            (JetOrder::Value, Activation::Tanh),
            (JetOrder::Gradient, Activation::Softplus { beta: 5.0 }),
            (JetOrder::Hessian, Activation::Tanh),
            (JetOrder::Hessian, Activation::Softplus { beta: 3.0 }),
        ] {
            let net = seeded(&[3, 5, 4, 2], act, 42);
            let pts = [[0.2, -0.1, 0.4], [-0.5, 0.3, 0.1], [0.05, 0.6, -0.35]];
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let n = pts.len() * order.channels() * 2;
            let weights: Vec<f64> = (0..n).map(|_| Uniform::new(-1.0, 1.0).sample(&mut rng)).collect();
            let (_, tape) = net.eval(&pts, order);
            let adj = JetBatch { order, n_points: pts.len(), n_out: 2, data: weights.clone() };
            let mut grads = vec![0.0; net.n_params()];
            net.backward(&tape, &adj, &mut grads);
            for i in 0..net.n_params() {
                let h = 1e-6;
                let mut plus = net.clone();
                plus.params_mut()[i] += h;
                let mut minus = net.clone();
                minus.params_mut()[i] -= h;
                let fd = (jet_functional(&plus, &pts, order, &weights) - jet_functional(&minus, &pts, order, &weights))
                    / (2.0 * h);
                let err = (fd - grads[i]).abs() / fd.abs().max(1e-3);
                assert!(err < 1e-5, "{order:?} {act:?} param {i}: fd {fd} vs {}", grads[i]);
            }
        }
    }

    #[test]
    fn input_jet_matches_finite_differences() {
        let net = seeded(&[3, 8, 8, 3], Activation::Tanh, 77);
        let x = [0.3, -0.2, 0.15];
        let jet = net.input_jet(x).unwrap();
        let h = 1e-4;
        for j in 0..3 {
            let mut xp = x;
            xp[j] += h;
            let mut xm = x;
            xm[j] -= h;
            let jp = net.input_jet(xp).unwrap();
            let jm = net.input_jet(xm).unwrap();
            for o in 0..3 {
                let fd = (jp.value[o] - jm.value[o]) / (2.0 * h);
                assert!((fd - jet.gradient[o][j]).abs() < 1e-5 * jet.gradient[o][j].abs().max(1.0));
                for k in 0..3 {
                    let fd = (jp.gradient[o][k] - jm.gradient[o][k]) / (2.0 * h);
                    assert!((fd - jet.hessian[o][j][k]).abs() < 1e-4 * jet.hessian[o][j][k].abs().max(1.0));
                }
            }
        }
    }
}
