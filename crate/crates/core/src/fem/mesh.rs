//! Regular voxel meshes of trilinear hexahedra.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::geometry::{Bounds, DensityParams, ScalarField};

const UNUSED: usize = usize::MAX;

/// Active voxels of a regular grid with cubic cells of edge `h`.
///
/// Element-local node `a` sits at offset `(a & 1, (a >> 1) & 1, (a >> 2) & 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HexMesh {
    pub dims: [usize; 3],
    pub origin: [f64; 3],
    pub h: f64,
    pub active: Vec<bool>,
    /// Voxel id of each element, ascending.
    pub elements: Vec<usize>,
    pub conn: Vec<[usize; 8]>,
    pub nodes: Vec<[f64; 3]>,
    /// Grid node id of each mesh node.
    pub node_grid: Vec<usize>,
    grid_to_node: Vec<usize>,
    voxel_to_element: Vec<usize>,
    /// Voxel counts of the components removed during construction.
    pub pruned: Vec<usize>,
}

/// An element face with no active neighbour across it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExposedFace {
    pub element: usize,
    pub axis: usize,
    /// `true` for the face on the positive side of the element.
    pub positive: bool,
}

impl HexMesh {
    /// Build from a voxel occupancy mask, keeping only the largest
    /// face-connected component.
    pub fn from_occupancy(dims: [usize; 3], origin: [f64; 3], h: f64, mut active: Vec<bool>) -> Result<Self> {
        let nvox = dims[0] * dims[1] * dims[2];
        if active.len() != nvox {
            return Err(Error::config(format!("occupancy has {} entries, grid has {nvox}", active.len())));
        }
        if !(h > 0.0) {
            return Err(Error::config("voxel size must be positive"));
        }
        let mut pruned = prune_islands(dims, &mut active);
        if !active.iter().any(|&a| a) {
            return Err(Error::EmptyShape("no active voxels".into()));
        }
        pruned.sort_unstable_by(|a, b| b.cmp(a));

        let [nx, ny, nz] = dims;
        let gn = [nx + 1, ny + 1, nz + 1];
        let mut grid_to_node = vec![UNUSED; gn[0] * gn[1] * gn[2]];
        let mut voxel_to_element = vec![UNUSED; nvox];
        let mut elements = Vec::new();
        let mut conn = Vec::new();
        let mut nodes = Vec::new();
        let mut node_grid = Vec::new();
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let v = (k * ny + j) * nx + i;
                    if !active[v] {
                        continue;
                    }
                    voxel_to_element[v] = elements.len();
                    elements.push(v);
                    let mut c = [0; 8];
                    for (a, slot) in c.iter_mut().enumerate() {
                        let (gi, gj, gk) = (i + (a & 1), j + ((a >> 1) & 1), k + ((a >> 2) & 1));
                        let g = (gk * gn[1] + gj) * gn[0] + gi;
                        if grid_to_node[g] == UNUSED {
                            grid_to_node[g] = nodes.len();
                            nodes.push([
                                origin[0] + gi as f64 * h,
                                origin[1] + gj as f64 * h,
                                origin[2] + gk as f64 * h,
                            ]);
                            node_grid.push(g);
                        }
                        *slot = grid_to_node[g];
                    }
                    conn.push(c);
                }
            }
        }
        Ok(HexMesh {
            dims,
            origin,
            h,
            active,
            elements,
            conn,
            nodes,
            node_grid,
            grid_to_node,
            voxel_to_element,
            pruned,
        })
    }

    /// A fully active box of `dims` elements.
    pub fn block(dims: [usize; 3], origin: [f64; 3], h: f64) -> Result<Self> {
        HexMesh::from_occupancy(dims, origin, h, vec![true; dims[0] * dims[1] * dims[2]])
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_dofs(&self) -> usize {
        3 * self.nodes.len()
    }

    pub fn voxel_ijk(&self, v: usize) -> [usize; 3] {
        let [nx, ny, _] = self.dims;
        [v % nx, (v / nx) % ny, v / (nx * ny)]
    }

    pub fn element_center(&self, e: usize) -> [f64; 3] {
        let [i, j, k] = self.voxel_ijk(self.elements[e]);
        [
            self.origin[0] + (i as f64 + 0.5) * self.h,
            self.origin[1] + (j as f64 + 0.5) * self.h,
            self.origin[2] + (k as f64 + 0.5) * self.h,
        ]
    }

    pub fn active_volume(&self) -> f64 {
        self.n_elements() as f64 * self.h.powi(3)
    }

    /// Mesh node at grid position `(i, j, k)`, if it belongs to an element.
    pub fn node_at(&self, i: usize, j: usize, k: usize) -> Option<usize> {
        let gn = [self.dims[0] + 1, self.dims[1] + 1, self.dims[2] + 1];
        if i >= gn[0] || j >= gn[1] || k >= gn[2] {
            return None;
        }
        let n = self.grid_to_node[(k * gn[1] + j) * gn[0] + i];
        (n != UNUSED).then_some(n)
    }

    /// Element containing `x`, if its voxel is active.
    pub fn locate(&self, x: [f64; 3]) -> Option<usize> {
        let mut ijk = [0usize; 3];
        for d in 0..3 {
            let t = (x[d] - self.origin[d]) / self.h;
            if !(t >= 0.0) || t > self.dims[d] as f64 {
                return None;
            }
            ijk[d] = (t.floor() as usize).min(self.dims[d] - 1);
        }
        let v = (ijk[2] * self.dims[1] + ijk[1]) * self.dims[0] + ijk[0];
        let e = self.voxel_to_element[v];
        (e != UNUSED).then_some(e)
    }

    fn neighbour(&self, v: usize, axis: usize, positive: bool) -> Option<usize> {
        let mut ijk = self.voxel_ijk(v);
        if positive {
            if ijk[axis] + 1 >= self.dims[axis] {
                return None;
            }
            ijk[axis] += 1;
        } else {
            if ijk[axis] == 0 {
                return None;
            }
            ijk[axis] -= 1;
        }
        Some((ijk[2] * self.dims[1] + ijk[1]) * self.dims[0] + ijk[0])
    }

    pub fn exposed_faces(&self) -> Vec<ExposedFace> {
        let mut out = Vec::new();
        for (e, &v) in self.elements.iter().enumerate() {
            for axis in 0..3 {
                for positive in [false, true] {
                    let open = match self.neighbour(v, axis, positive) {
                        Some(w) => !self.active[w],
                        None => true,
                    };
                    if open {
                        out.push(ExposedFace { element: e, axis, positive });
                    }
                }
            }
        }
        out
    }

    /// Local node indices (into `conn[e]`) of a face.
    pub fn face_nodes(axis: usize, positive: bool) -> [usize; 4] {
        let bit = 1 << axis;
        let mut out = [0; 4];
        let mut n = 0;
        for a in 0..8 {
            if ((a & bit) != 0) == positive {
                out[n] = a;
                n += 1;
            }
        }
        out
    }

    pub fn face_center(&self, f: &ExposedFace) -> [f64; 3] {
        let mut c = self.element_center(f.element);
        c[f.axis] += if f.positive { 0.5 } else { -0.5 } * self.h;
        c
    }

    /// Nodes lying on at least one exposed face, ascending.
    pub fn surface_nodes(&self) -> Vec<usize> {
        let mut on = vec![false; self.n_nodes()];
        for f in self.exposed_faces() {
            for a in HexMesh::face_nodes(f.axis, f.positive) {
                on[self.conn[f.element][a]] = true;
            }
        }
        (0..self.n_nodes()).filter(|&n| on[n]).collect()
    }

    /// Elements adjacent to each node.
    pub fn node_elements(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_nodes()];
        for (e, c) in self.conn.iter().enumerate() {
            for &n in c {
                out[n].push(e);
            }
        }
        out
    }
}

/// Zero out every face-connected component except the largest; returns
/// the sizes of the removed ones.
fn prune_islands(dims: [usize; 3], active: &mut [bool]) -> Vec<usize> {
    let [nx, ny, nz] = dims;
    let mut label = vec![usize::MAX; active.len()];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..active.len() {
        if !active[start] || label[start] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        let mut size = 0;
        label[start] = id;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            size += 1;
            let (i, j, k) = (v % nx, (v / nx) % ny, v / (nx * ny));
            let mut visit = |w: usize| {
                if active[w] && label[w] == usize::MAX {
                    label[w] = id;
                    queue.push_back(w);
                }
            };
            if i > 0 {
                visit(v - 1);
            }
            if i + 1 < nx {
                visit(v + 1);
            }
            if j > 0 {
                visit(v - nx);
            }
            if j + 1 < ny {
                visit(v + nx);
            }
            if k > 0 {
                visit(v - nx * ny);
            }
            if k + 1 < nz {
                visit(v + nx * ny);
            }
        }
        sizes.push(size);
    }
    let Some(keep) = (0..sizes.len()).max_by_key(|&c| (sizes[c], std::cmp::Reverse(c))) else {
        return Vec::new();
    };
    for (v, a) in active.iter_mut().enumerate() {
        if *a && label[v] != keep {
            *a = false;
        }
    }
    sizes.iter().enumerate().filter(|&(c, _)| c != keep).map(|(_, &s)| s).collect()
}

/// Voxelize the density of `field` on a `resolution^3` grid over `bounds`:
/// a voxel is active when the density at its centre reaches `threshold`.
pub fn voxelize(
    field: &dyn ScalarField,
    dp: &DensityParams,
    bounds: Bounds,
    resolution: usize,
    threshold: f64,
) -> Result<HexMesh> {
    if resolution < 16 {
        return Err(Error::config(format!("FEM resolution must be at least 16, got {resolution}")));
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::config("voxel density threshold must lie in (0, 1)"));
    }
    let h = bounds.extent() / resolution as f64;
    let mut centers = Vec::with_capacity(resolution.pow(3));
    for k in 0..resolution {
        for j in 0..resolution {
            for i in 0..resolution {
                centers.push([
                    bounds.lo + (i as f64 + 0.5) * h,
                    bounds.lo + (j as f64 + 0.5) * h,
                    bounds.lo + (k as f64 + 0.5) * h,
                ]);
            }
        }
    }
    let active: Vec<bool> = field.values(&centers).into_iter().map(|f| dp.density_of(f) >= threshold).collect();
    if !active.iter().any(|&a| a) {
        return Err(Error::EmptyShape("density field has no voxel above the threshold".into()));
    }
    let mesh = HexMesh::from_occupancy([resolution; 3], [bounds.lo; 3], h, active)?;
    if !mesh.pruned.is_empty() {
        log::warn!("voxelization removed {} disconnected component(s) of sizes {:?}", mesh.pruned.len(), mesh.pruned);
    }
    Ok(mesh)
}
