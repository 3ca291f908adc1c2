//! Trilinear hexahedral stiffness, block-sparse assembly and a
//! Jacobi-preconditioned conjugate-gradient solve.

use crate::elasticity::{stress, von_mises, BoundarySpec, MaterialModel, StrainTensor, StressTensor};
use crate::error::{Error, Result};

use super::mesh::HexMesh;

/// Relative residual at which the iteration stops.
pub const TOLERANCE: f64 = 1e-8;

/// Outward normals closer than this (cosine) to the applied traction
/// direction mark a loaded face.
const FACING: f64 = 0.9;

/// Derivatives of the trilinear shape functions in reference coordinates.
fn shape_grad_ref(xi: [f64; 3]) -> [[f64; 3]; 8] {
    let mut g = [[0.0; 3]; 8];
    for (a, ga) in g.iter_mut().enumerate() {
        let s = [2.0 * (a & 1) as f64 - 1.0, 2.0 * ((a >> 1) & 1) as f64 - 1.0, 2.0 * ((a >> 2) & 1) as f64 - 1.0];
        let f = [0.5 * (1.0 + s[0] * xi[0]), 0.5 * (1.0 + s[1] * xi[1]), 0.5 * (1.0 + s[2] * xi[2])];
        ga[0] = 0.5 * s[0] * f[1] * f[2];
        ga[1] = 0.5 * s[1] * f[0] * f[2];
        ga[2] = 0.5 * s[2] * f[0] * f[1];
    }
    g
}

/// Strain-displacement matrix (6 x 24) of a cube element of edge `h`.
fn b_matrix(xi: [f64; 3], h: f64) -> [[f64; 24]; 6] {
    let gr = shape_grad_ref(xi);
    let mut b = [[0.0; 24]; 6];
    for a in 0..8 {
        let d = [2.0 * gr[a][0] / h, 2.0 * gr[a][1] / h, 2.0 * gr[a][2] / h];
        let c = 3 * a;
        b[0][c] = d[0];
        b[1][c + 1] = d[1];
        b[2][c + 2] = d[2];
        b[3][c] = d[1];
        b[3][c + 1] = d[0];
        b[4][c] = d[2];
        b[4][c + 2] = d[0];
        b[5][c + 1] = d[2];
        b[5][c + 2] = d[1];
    }
    b
}

fn d_matrix(mat: &MaterialModel) -> [[f64; 6]; 6] {
    let (l, m) = mat.lame();
    let mut d = [[0.0; 6]; 6];
    for i in 0..3 {
        for j in 0..3 {
            d[i][j] = if i == j { l + 2.0 * m } else { l };
        }
        d[i + 3][i + 3] = m;
    }
    d
}

/// Element stiffness with 2x2x2 Gauss quadrature.
pub fn element_stiffness(mat: &MaterialModel, h: f64) -> Vec<[f64; 24]> {
    let g = 1.0 / 3f64.sqrt();
    let d = d_matrix(mat);
    let det = (h / 2.0).powi(3);
    let mut k = vec![[0.0; 24]; 24];
    for q in 0..8 {
        let xi = [if q & 1 == 0 { -g } else { g }, if q & 2 == 0 { -g } else { g }, if q & 4 == 0 { -g } else { g }];
        let b = b_matrix(xi, h);
        let mut db = [[0.0; 24]; 6];
        for i in 0..6 {
            for j in 0..24 {
                db[i][j] = (0..6).map(|r| d[i][r] * b[r][j]).sum();
            }
        }
        for i in 0..24 {
            for j in 0..24 {
                k[i][j] += det * (0..6).map(|r| b[r][i] * db[r][j]).sum::<f64>();
            }
        }
    }
    k
}

/// Symmetric matrix stored as 3x3 blocks per node pair.
#[derive(Debug, Clone)]
pub struct BlockCsr {
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<[f64; 9]>,
}

impl BlockCsr {
    pub fn n_dofs(&self) -> usize {
        3 * (self.row_ptr.len() - 1)
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        let rows = self.row_ptr.len() - 1;
        let threads = crate::threads().min(rows / 4096).max(1);
        if threads == 1 {
            self.matvec_rows(0, x, y);
            return;
        }
        let chunk = rows.div_ceil(threads);
        std::thread::scope(|s| {
            for (t, out) in y.chunks_mut(3 * chunk).enumerate() {
                s.spawn(move || self.matvec_rows(t * chunk, x, out));
            }
        });
    }

    /// Rows `first..first + out.len() / 3` of `A x`.
    fn matvec_rows(&self, first: usize, x: &[f64], out: &mut [f64]) {
        for (k, acc_out) in out.chunks_mut(3).enumerate() {
            let r = first + k;
            let mut acc = [0.0; 3];
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = 3 * self.cols[p];
                let b = &self.vals[p];
                let (x0, x1, x2) = (x[c], x[c + 1], x[c + 2]);
                acc[0] += b[0] * x0 + b[1] * x1 + b[2] * x2;
                acc[1] += b[3] * x0 + b[4] * x1 + b[5] * x2;
                acc[2] += b[6] * x0 + b[7] * x1 + b[8] * x2;
            }
            acc_out.copy_from_slice(&acc);
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n_dofs()];
        for r in 0..self.row_ptr.len() - 1 {
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                if self.cols[p] == r {
                    for i in 0..3 {
                        d[3 * r + i] = self.vals[p][4 * i];
                    }
                }
            }
        }
        d
    }
}

pub fn assemble(mesh: &HexMesh, ke: &[[f64; 24]]) -> BlockCsr {
    let nn = mesh.n_nodes();
    let mut neigh: Vec<Vec<usize>> = vec![Vec::new(); nn];
    for c in &mesh.conn {
        for &a in c {
            neigh[a].extend_from_slice(c);
        }
    }
    let mut row_ptr = Vec::with_capacity(nn + 1);
    let mut cols = Vec::new();
    row_ptr.push(0);
    for list in &mut neigh {
        list.sort_unstable();
        list.dedup();
        cols.extend_from_slice(list);
        row_ptr.push(cols.len());
    }
    let mut vals = vec![[0.0; 9]; cols.len()];
    for c in &mesh.conn {
        for (a, &na) in c.iter().enumerate() {
            let row = &cols[row_ptr[na]..row_ptr[na + 1]];
            for (b, &nb) in c.iter().enumerate() {
                let p = row_ptr[na] + row.binary_search(&nb).expect("stencil entry");
                let blk = &mut vals[p];
                for i in 0..3 {
                    for j in 0..3 {
                        blk[3 * i + j] += ke[3 * a + i][3 * b + j];
                    }
                }
            }
        }
    }
    BlockCsr { row_ptr, cols, vals }
}

/// Prescribed degrees of freedom and nodal forces.
#[derive(Debug, Clone, PartialEq)]
pub struct FemProblem {
    /// `(dof, value)` pairs, dof = 3 * node + component.
    pub fixed: Vec<(usize, f64)>,
    pub loads: Vec<f64>,
}

impl FemProblem {
    pub fn new(mesh: &HexMesh) -> Self {
        FemProblem { fixed: Vec::new(), loads: vec![0.0; mesh.n_dofs()] }
    }

    pub fn fix_node(&mut self, node: usize, value: [f64; 3]) {
        for (i, v) in value.into_iter().enumerate() {
            self.fixed.push((3 * node + i, v));
        }
    }

    /// Spread `force` evenly over the four nodes of an exposed face.
    pub fn load_face(&mut self, mesh: &HexMesh, element: usize, axis: usize, positive: bool, force: [f64; 3]) {
        for a in HexMesh::face_nodes(axis, positive) {
            let n = mesh.conn[element][a];
            for i in 0..3 {
                self.loads[3 * n + i] += 0.25 * force[i];
            }
        }
    }

    /// Build supports, surface loads and body forces from a boundary spec.
    pub fn from_boundary(mesh: &HexMesh, bspec: &BoundarySpec) -> Result<Self> {
        bspec.validate()?;
        let mut p = FemProblem::new(mesh);
        let supported: Vec<usize> = (0..mesh.n_nodes()).filter(|&n| bspec.support.contains(mesh.nodes[n])).collect();
        if supported.is_empty() {
            return Err(Error::Constraint(format!(
                "the structure ({} elements) has no node in the support band {:?}; it would float freely. Check the support predicate",
                mesh.n_elements(),
                bspec.support
            )));
        }
        if collinear(supported.iter().map(|&n| mesh.nodes[n])) {
            return Err(Error::Constraint(format!(
                "the {} supported nodes are collinear; rigid-body rotation is unconstrained. Check the support predicate",
                supported.len()
            )));
        }
        for n in supported {
            p.fix_node(n, bspec.prescribed);
        }

        let t = bspec.traction;
        let tn = (t[0] * t[0] + t[1] * t[1] + t[2] * t[2]).sqrt();
        let area = mesh.h * mesh.h;
        let mut n_loaded = 0;
        if tn > 0.0 {
            for f in mesh.exposed_faces() {
                let sign = if f.positive { 1.0 } else { -1.0 };
                let facing = -sign * t[f.axis] / tn;
                if facing >= FACING && bspec.load.contains(mesh.face_center(&f)) {
                    p.load_face(mesh, f.element, f.axis, f.positive, [t[0] * area, t[1] * area, t[2] * area]);
                    n_loaded += 1;
                }
            }
            if n_loaded == 0 {
                log::warn!("no exposed face lies in the load band; stresses will be near zero");
            }
        }
        let bf = bspec.body_force;
        if bf.iter().any(|&v| v != 0.0) {
            let share = mesh.h.powi(3) / 8.0;
            for c in &mesh.conn {
                for &n in c {
                    for i in 0..3 {
                        p.loads[3 * n + i] += bf[i] * share;
                    }
                }
            }
        }
        Ok(p)
    }
}

fn collinear(pts: impl Iterator<Item = [f64; 3]>) -> bool {
    let pts: Vec<[f64; 3]> = pts.collect();
    if pts.len() < 3 {
        return true;
    }
    let a = pts[0];
    let Some(b) = pts.iter().copied().find(|p| *p != a) else {
        return true;
    };
    let ab = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    !pts.iter().any(|p| {
        let ap = [p[0] - a[0], p[1] - a[1], p[2] - a[2]];
        let c = [ab[1] * ap[2] - ab[2] * ap[1], ab[2] * ap[0] - ab[0] * ap[2], ab[0] * ap[1] - ab[1] * ap[0]];
        c.iter().any(|v| v.abs() > 1e-12)
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FemSolution {
    pub displacement: Vec<[f64; 3]>,
    pub strain: Vec<StrainTensor>,
    pub stress: Vec<StressTensor>,
    pub von_mises: Vec<f64>,
    pub iterations: usize,
    /// Final relative residual.
    pub residual: f64,
    pub history: Vec<f64>,
    /// `K u - f`, nonzero only on prescribed dofs.
    pub reactions: Vec<f64>,
    pub loads: Vec<f64>,
    /// `u^T K u / 2`.
    pub strain_energy: f64,
}

impl FemSolution {
    pub fn total_load(&self) -> [f64; 3] {
        sum3(&self.loads)
    }

    pub fn total_reaction(&self) -> [f64; 3] {
        sum3(&self.reactions)
    }

    /// `f^T u / 2`.
    pub fn external_work(&self) -> f64 {
        0.5 * self.loads.iter().zip(self.displacement.iter().flatten()).map(|(f, u)| f * u).sum::<f64>()
    }
}

fn sum3(v: &[f64]) -> [f64; 3] {
    let mut s = [0.0; 3];
    for (i, x) in v.iter().enumerate() {
        s[i % 3] += x;
    }
    s
}

fn dotv(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solve `K u = f` with the prescribed dofs eliminated.
pub fn solve_problem(mesh: &HexMesh, mat: &MaterialModel, problem: &FemProblem) -> Result<FemSolution> {
    let ndof = mesh.n_dofs();
    if problem.loads.len() != ndof {
        return Err(Error::config(format!("load vector has {} entries, mesh has {ndof} dofs", problem.loads.len())));
    }
    if problem.fixed.is_empty() {
        return Err(Error::Constraint("no prescribed displacement; the structure would float freely".into()));
    }
    let ke = element_stiffness(mat, mesh.h);
    let k = assemble(mesh, &ke);

    let mut free = vec![true; ndof];
    let mut u = vec![0.0; ndof];
    for &(d, v) in &problem.fixed {
        if d >= ndof {
            return Err(Error::config(format!("prescribed dof {d} out of range")));
        }
        free[d] = false;
        u[d] = v;
    }
    let mut ku = vec![0.0; ndof];
    k.matvec(&u, &mut ku);
    let mut r: Vec<f64> = (0..ndof).map(|i| if free[i] { problem.loads[i] - ku[i] } else { 0.0 }).collect();
    let bnorm = dotv(&r, &r).sqrt();
    let inv_diag: Vec<f64> =
        k.diagonal().iter().enumerate().map(|(i, &d)| if free[i] && d > 0.0 { 1.0 / d } else { 0.0 }).collect();

    let cap = (100.0 * (ndof as f64).sqrt()).ceil() as usize;
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut rel = 0.0;
    if bnorm > 0.0 {
        let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, b)| a * b).collect();
        let mut p = z.clone();
        let mut rz = dotv(&r, &z);
        let mut q = vec![0.0; ndof];
        rel = 1.0;
        while rel > TOLERANCE {
            if iterations >= cap {
                return Err(Error::Solver { iterations, residual: rel, history });
            }
            k.matvec(&p, &mut q);
            for i in 0..ndof {
                if !free[i] {
                    q[i] = 0.0;
                }
            }
            let pq = dotv(&p, &q);
            if !(pq > 0.0) {
                return Err(Error::Constraint(format!(
                    "stiffness is singular on the free dofs (p.Kp = {pq:e}); some part of the structure is unsupported"
                )));
            }
            let alpha = rz / pq;
            for i in 0..ndof {
                u[i] += alpha * p[i];
                r[i] -= alpha * q[i];
            }
            iterations += 1;
            rel = dotv(&r, &r).sqrt() / bnorm;
            history.push(rel);
            for i in 0..ndof {
                z[i] = r[i] * inv_diag[i];
            }
            let rz_new = dotv(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..ndof {
                p[i] = z[i] + beta * p[i];
            }
        }
    }

    k.matvec(&u, &mut ku);
    let strain_energy = 0.5 * dotv(&u, &ku);
    let reactions: Vec<f64> = (0..ndof).map(|i| if free[i] { 0.0 } else { ku[i] - problem.loads[i] }).collect();

    let bc = b_matrix([0.0; 3], mesh.h);
    let mut strain_out = Vec::with_capacity(mesh.n_elements());
    let mut stress_out = Vec::with_capacity(mesh.n_elements());
    let mut vm = Vec::with_capacity(mesh.n_elements());
    for c in &mesh.conn {
        let mut e = [0.0; 6];
        for (a, &n) in c.iter().enumerate() {
            for i in 0..3 {
                let ud = u[3 * n + i];
                for (row, ev) in e.iter_mut().enumerate() {
                    *ev += bc[row][3 * a + i] * ud;
                }
            }
        }
        let eps = StrainTensor(e);
        let s = stress(&eps, mat);
        vm.push(von_mises(&s));
        strain_out.push(eps);
        stress_out.push(s);
    }
    Ok(FemSolution {
        displacement: u.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
        strain: strain_out,
        stress: stress_out,
        von_mises: vm,
        iterations,
        residual: rel,
        history,
        reactions,
        loads: problem.loads.clone(),
        strain_energy,
    })
}

/// Supports, loads and solve for a boundary spec.
pub fn solve(mesh: &HexMesh, mat: &MaterialModel, bspec: &BoundarySpec) -> Result<FemSolution> {
    let problem = FemProblem::from_boundary(mesh, bspec)?;
    solve_problem(mesh, mat, &problem)
}

/// Largest element von-Mises stress.
pub fn max_von_mises(sol: &FemSolution) -> f64 {
    sol.von_mises.iter().copied().fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stiffness_is_symmetric_with_rigid_modes() {
        let ke = element_stiffness(&MaterialModel::default(), 0.3);
        for i in 0..24 {
            for j in 0..24 {
                assert!((ke[i][j] - ke[j][i]).abs() < 1e-14);
            }
            // translations produce no force
            for d in 0..3 {
                let s: f64 = (0..8).map(|a| ke[i][3 * a + d]).sum();
                assert!(s.abs() < 1e-14);
            }
        }
    }

    #[test]
    fn stiffness_scales_with_edge() {
        let mat = MaterialModel::default();
        let (a, b) = (element_stiffness(&mat, 1.0), element_stiffness(&mat, 0.5));
        for i in 0..24 {
            for j in 0..24 {
                assert!((0.5 * a[i][j] - b[i][j]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn uniform_tension_cube() {
        let mesh = HexMesh::block([2, 2, 2], [0.0; 3], 0.5).unwrap();
        let mut p = FemProblem::new(&mesh);
        for (n, x) in mesh.nodes.iter().enumerate() {
            if x[2] == 0.0 {
                p.fixed.push((3 * n + 2, 0.0));
                if x[0] == 0.0 {
                    p.fixed.push((3 * n, 0.0));
                }
                if x[1] == 0.0 {
                    p.fixed.push((3 * n + 1, 0.0));
                }
            }
        }
        for f in mesh.exposed_faces() {
            if f.axis == 2 && f.positive {
                p.load_face(&mesh, f.element, 2, true, [0.0, 0.0, 0.25 * 0.1]);
            }
        }
        let sol = solve_problem(&mesh, &MaterialModel::default(), &p).unwrap();
        for s in &sol.stress {
            assert!((s.0[2] - 0.1).abs() < 1e-9, "{s:?}");
            assert!(s.0[0].abs() < 1e-9);
        }
        assert!((max_von_mises(&sol) - 0.1).abs() < 1e-9);
    }

    #[test]
    fn unsupported_is_rejected() {
        let mesh = HexMesh::block([2, 2, 2], [0.0; 3], 0.5).unwrap();
        let err = solve(&mesh, &MaterialModel::default(), &BoundarySpec::default()).unwrap_err();
        assert!(matches!(err, Error::Constraint(_)), "{err}");
    }

    #[test]
    fn zero_load_gives_zero_stress() {
        let mesh = HexMesh::block([2, 2, 3], [0.0, 0.0, -1.0], 0.5).unwrap();
        let bspec = BoundarySpec::floor_and_top(-0.8, 0.9, 0.0);
        let sol = solve(&mesh, &MaterialModel::default(), &bspec).unwrap();
        assert_eq!(max_von_mises(&sol), 0.0);
        assert_eq!(sol.iterations, 0);
    }
}
