//! Equilibrium, boundary and anchor losses with hand-written adjoints for
//! both the displacement network and the density field.

use crate::autodiff::{JetBatch, JetOrder};
use crate::elasticity::MaterialModel;
use crate::error::{Error, Result};
use crate::fem::FemDataset;
use crate::geometry::{DensityParams, ScalarField, CHUNK};
use crate::sampling::{DirichletSet, TractionSet};

use super::field::{DensityAdjoint, DensityJets, DisplacementField};

/// Where a term accumulates its gradients. `weight` multiplies every
/// gradient contribution; the returned loss value is unweighted.
pub struct Sinks<'a> {
    pub weight: f64,
    pub physics: Option<&'a mut [f64]>,
    pub density: Option<&'a mut DensityAdjoint>,
}

impl Sinks<'_> {
    pub fn none() -> Sinks<'static> {
        Sinks { weight: 1.0, physics: None, density: None }
    }
}

/// Stress (matrix, undensified) from a displacement Jacobian.
#[inline]
pub(crate) fn stress_matrix(j: &[[f64; 3]; 3], lambda: f64, mu: f64) -> [[f64; 3]; 3] {
    let tr = j[0][0] + j[1][1] + j[2][2];
    let mut s = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            s[a][b] = mu * (j[a][b] + j[b][a]);
        }
        s[a][a] += lambda * tr;
    }
    s
}

/// Transpose of [`stress_matrix`]: Jacobian adjoint from a stress adjoint.
#[inline]
pub(crate) fn stress_matrix_adjoint(adj_s: &[[f64; 3]; 3], lambda: f64, mu: f64) -> [[f64; 3]; 3] {
    let tr = adj_s[0][0] + adj_s[1][1] + adj_s[2][2];
    let mut aj = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            aj[a][b] = mu * (adj_s[a][b] + adj_s[b][a]);
        }
        aj[a][a] += lambda * tr;
    }
    aj
}

fn add_jacobian_adjoint(adj: &mut JetBatch, p: usize, aj: &[[f64; 3]; 3]) {
    for (i, row) in aj.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            *adj.grad_mut(p, i, j) += v;
        }
    }
}

/// Equilibrium residual `div(rho S) + rho F` at each point, with `S` the
/// undensified stress, plus the pieces needed for its adjoint.
struct Residual {
    r: [f64; 3],
    s: [[f64; 3]; 3],
    div_s: [f64; 3],
}

fn residual(jets: &JetBatch, p: usize, rho: f64, g: [f64; 3], lm: (f64, f64), body: [f64; 3]) -> Residual {
    let (l, m) = lm;
    let s = stress_matrix(&jets.jacobian3(p), l, m);
    let mut div_s = [0.0; 3];
    for (i, d) in div_s.iter_mut().enumerate() {
        let mut mixed = 0.0;
        let mut lap = 0.0;
        for k in 0..3 {
            mixed += jets.hess(p, k, i, k);
            lap += jets.hess(p, i, k, k);
        }
        *d = (l + m) * mixed + m * lap;
    }
    let mut r = [0.0; 3];
    for i in 0..3 {
        r[i] = g[0] * s[i][0] + g[1] * s[i][1] + g[2] * s[i][2] + rho * div_s[i] + rho * body[i];
    }
    Residual { r, s, div_s }
}

/// Mean squared equilibrium residual over `pts`.
pub fn pde_term(
    u: &DisplacementField,
    pts: &[[f64; 3]],
    geo: &DensityJets,
    mat: &MaterialModel,
    body: [f64; 3],
    sinks: &mut Sinks,
) -> Result<f64> {
    if pts.is_empty() {
        return Err(Error::config("equilibrium loss needs at least one point"));
    }
    let lm = mat.lame();
    let (l, m) = lm;
    let n = pts.len() as f64;
    let mut total = 0.0;
    for (c, chunk) in pts.chunks(CHUNK).enumerate() {
        let off = c * CHUNK;
        let (jets, tape) = u.net.eval(chunk, JetOrder::Hessian);
        let mut adj = JetBatch::zeros(JetOrder::Hessian, chunk.len(), 3);
        for p in 0..chunk.len() {
            let (rho, g) = (geo.rho[off + p], geo.grad_rho[off + p]);
            let res = residual(&jets, p, rho, g, lm, body);
            let sq = res.r.iter().map(|v| v * v).sum::<f64>();
            if !sq.is_finite() {
                return Err(Error::Validation(format!("non-finite equilibrium residual at point {:?}", chunk[p])));
            }
            total += sq;
            let ar = res.r.map(|v| 2.0 * sinks.weight * v / n);
            if sinks.physics.is_some() {
                let mut adj_s = [[0.0; 3]; 3];
                for i in 0..3 {
                    for j in 0..3 {
                        adj_s[i][j] = ar[i] * g[j];
                    }
                }
                add_jacobian_adjoint(&mut adj, p, &stress_matrix_adjoint(&adj_s, l, m));
                for i in 0..3 {
                    let a = ar[i] * rho;
                    for k in 0..3 {
                        *adj.hess_mut(p, k, i, k) += (l + m) * a;
                        *adj.hess_mut(p, i, k, k) += m * a;
                    }
                }
            }
            if let Some(d) = sinks.density.as_deref_mut() {
                let mut ar_rho = 0.0;
                for i in 0..3 {
                    ar_rho += ar[i] * (res.div_s[i] + body[i]);
                    for j in 0..3 {
                        d.grad_rho[off + p][j] += ar[i] * res.s[i][j];
                    }
                }
                d.rho[off + p] += ar_rho;
            }
        }
        if let Some(g) = sinks.physics.as_deref_mut() {
            u.net.backward(&tape, &adj, g);
        }
    }
    Ok(total / n)
}

/// Mean squared Dirichlet mismatch.
pub fn dirichlet_term(u: &DisplacementField, set: &DirichletSet, sinks: &mut Sinks) -> Result<f64> {
    if set.points.is_empty() {
        return Err(Error::config("Dirichlet loss needs at least one point"));
    }
    let n = set.points.len() as f64;
    let mut total = 0.0;
    for (c, chunk) in set.points.chunks(CHUNK).enumerate() {
        let off = c * CHUNK;
        let (jets, tape) = u.net.eval(chunk, JetOrder::Value);
        let mut adj = JetBatch::zeros(JetOrder::Value, chunk.len(), 3);
        for p in 0..chunk.len() {
            for i in 0..3 {
                let d = jets.value(p, i) - set.values[off + p][i];
                total += d * d;
                *adj.value_mut(p, i) = 2.0 * sinks.weight * d / n;
            }
        }
        if let Some(g) = sinks.physics.as_deref_mut() {
            u.net.backward(&tape, &adj, g);
        }
    }
    Ok(total / n)
}

/// Mean squared traction mismatch `|rho S n - F|^2`.
pub fn traction_term(
    u: &DisplacementField,
    set: &TractionSet,
    geo: &DensityJets,
    mat: &MaterialModel,
    sinks: &mut Sinks,
) -> Result<f64> {
    if set.points.is_empty() {
        return Err(Error::config("traction loss needs at least one point"));
    }
    let (l, m) = mat.lame();
    let n = set.points.len() as f64;
    let mut total = 0.0;
    for (c, chunk) in set.points.chunks(CHUNK).enumerate() {
        let off = c * CHUNK;
        let (jets, tape) = u.net.eval(chunk, JetOrder::Gradient);
        let mut adj = JetBatch::zeros(JetOrder::Gradient, chunk.len(), 3);
        for p in 0..chunk.len() {
            let q = off + p;
            let rho = geo.rho[q];
            let nrm = set.normals[q];
            let s = stress_matrix(&jets.jacobian3(p), l, m);
            let mut sn = [0.0; 3];
            let mut res = [0.0; 3];
            for i in 0..3 {
                sn[i] = s[i][0] * nrm[0] + s[i][1] * nrm[1] + s[i][2] * nrm[2];
                res[i] = rho * sn[i] - set.traction[q][i];
                total += res[i] * res[i];
            }
            let ar = res.map(|v| 2.0 * sinks.weight * v / n);
            if sinks.physics.is_some() {
                let mut adj_s = [[0.0; 3]; 3];
                for i in 0..3 {
                    for j in 0..3 {
                        adj_s[i][j] = rho * ar[i] * nrm[j];
                    }
                }
                add_jacobian_adjoint(&mut adj, p, &stress_matrix_adjoint(&adj_s, l, m));
            }
            if let Some(d) = sinks.density.as_deref_mut() {
                d.rho[q] += ar[0] * sn[0] + ar[1] * sn[1] + ar[2] * sn[2];
            }
        }
        if let Some(g) = sinks.physics.as_deref_mut() {
            u.net.backward(&tape, &adj, g);
        }
    }
    Ok(total / n)
}

/// Mean squared displacement mismatch plus mean squared mismatch of the six
/// Voigt stress components against anchor data.
pub fn fem_term(
    u: &DisplacementField,
    data: &FemDataset,
    geo: &DensityJets,
    mat: &MaterialModel,
    sinks: &mut Sinks,
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::config("anchor loss needs at least one record"));
    }
    let (l, m) = mat.lame();
    let n = data.len() as f64;
    let mut total = 0.0;
    const VOIGT: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];
    for (c, chunk) in data.points.chunks(CHUNK).enumerate() {
        let off = c * CHUNK;
        let (jets, tape) = u.net.eval(chunk, JetOrder::Gradient);
        let mut adj = JetBatch::zeros(JetOrder::Gradient, chunk.len(), 3);
        for p in 0..chunk.len() {
            let q = off + p;
            let rho = geo.rho[q];
            for i in 0..3 {
                let d = jets.value(p, i) - data.displacement[q][i];
                total += d * d;
                *adj.value_mut(p, i) = 2.0 * sinks.weight * d / n;
            }
            let s = stress_matrix(&jets.jacobian3(p), l, m);
            let mut adj_s = [[0.0; 3]; 3];
            let mut a_rho = 0.0;
            for (v, &(a, b)) in VOIGT.iter().enumerate() {
                let d = rho * s[a][b] - data.stress[q].0[v];
                total += d * d;
                let ad = 2.0 * sinks.weight * d / n;
                adj_s[a][b] += rho * ad;
                a_rho += ad * s[a][b];
            }
            if sinks.physics.is_some() {
                add_jacobian_adjoint(&mut adj, p, &stress_matrix_adjoint(&adj_s, l, m));
            }
            if let Some(dn) = sinks.density.as_deref_mut() {
                dn.rho[q] += a_rho;
            }
        }
        if let Some(g) = sinks.physics.as_deref_mut() {
            u.net.backward(&tape, &adj, g);
        }
    }
    Ok(total / n)
}

/// Equilibrium loss with the density taken from `geometry`.
pub fn loss_pde(
    u: &DisplacementField,
    geometry: &dyn ScalarField,
    dp: &DensityParams,
    mat: &MaterialModel,
    body: [f64; 3],
    pts: &[[f64; 3]],
) -> Result<f64> {
    let geo = DensityJets::from_field(geometry, dp, pts);
    pde_term(u, pts, &geo, mat, body, &mut Sinks::none())
}

/// Dirichlet plus traction loss.
pub fn loss_bc(
    u: &DisplacementField,
    geometry: &dyn ScalarField,
    dp: &DensityParams,
    mat: &MaterialModel,
    dirichlet: &DirichletSet,
    traction: &TractionSet,
) -> Result<f64> {
    let geo = DensityJets::from_field(geometry, dp, &traction.points);
    Ok(dirichlet_term(u, dirichlet, &mut Sinks::none())? + traction_term(u, traction, &geo, mat, &mut Sinks::none())?)
}

pub fn loss_fem(
    u: &DisplacementField,
    geometry: &dyn ScalarField,
    dp: &DensityParams,
    mat: &MaterialModel,
    data: &FemDataset,
) -> Result<f64> {
    let geo = DensityJets::from_field(geometry, dp, &data.points);
    fem_term(u, data, &geo, mat, &mut Sinks::none())
}
