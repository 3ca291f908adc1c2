//! Zero-level-set extraction by marching tetrahedra.
//!
//! Each grid cell is split into six tetrahedra around its main diagonal. The
//! split is identical in every cell, so faces between neighbouring cells are
//! triangulated consistently and the output is closed wherever the surface
//! stays away from the grid boundary.

use std::collections::HashMap;

use super::field::{Bounds, ScalarField};
use super::mesh::{cross, dot, sub, TriangleMesh};
use crate::error::{Error, Result};

/// Corner bit layout: x = 1, y = 2, z = 4.
const TETS: [[usize; 4]; 6] = [[0, 1, 3, 7], [0, 1, 5, 7], [0, 2, 3, 7], [0, 2, 6, 7], [0, 4, 5, 7], [0, 4, 6, 7]];

/// Interpolation parameters closer than this to a corner snap onto it.
const SNAP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum VertexKey {
    Edge(usize, usize),
    Corner(usize),
}

/// Triangulate `{f = 0}` on a `resolution^3` cell grid spanning `bounds`.
pub fn extract_mesh(field: &dyn ScalarField, bounds: Bounds, resolution: usize) -> Result<TriangleMesh> {
    if resolution < 16 {
        return Err(Error::config(format!("extraction resolution must be at least 16, got {resolution}")));
    }
    let n = resolution + 1;
    let h = bounds.extent() / resolution as f64;
    let coord = |i: usize| bounds.lo + i as f64 * h;
    let gid = |i: usize, j: usize, k: usize| (k * n + j) * n + i;

    let mut pts = Vec::with_capacity(n * n * n);
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                pts.push([coord(i), coord(j), coord(k)]);
            }
        }
    }
    let values = field.values(&pts);
    if !values.iter().any(|&v| v > 0.0) {
        return Err(Error::EmptyShape("field has no interior on the extraction grid".into()));
    }

    let mut index: HashMap<VertexKey, usize> = HashMap::new();
    let mut vertices: Vec<[f64; 3]> = Vec::new();
    let mut triangles: Vec<[usize; 3]> = Vec::new();

    let mut vertex_on = |a: usize, b: usize, vertices: &mut Vec<[f64; 3]>| -> usize {
        // a is inside (f > 0), b outside (f <= 0)
        let (fa, fb) = (values[a], values[b]);
        let t = fa / (fa - fb);
        let key = if t < SNAP {
            VertexKey::Corner(a)
        } else if t > 1.0 - SNAP {
            VertexKey::Corner(b)
        } else {
            VertexKey::Edge(a.min(b), a.max(b))
        };
        *index.entry(key).or_insert_with(|| {
            let (pa, pb) = (pts[a], pts[b]);
            let p = match key {
                VertexKey::Corner(c) => pts[c],
                VertexKey::Edge(..) => {
                    [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1]), pa[2] + t * (pb[2] - pa[2])]
                }
            };
            vertices.push(p);
            vertices.len() - 1
        })
    };

    for k in 0..resolution {
        for j in 0..resolution {
            for i in 0..resolution {
                let corner = |c: usize| gid(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1));
                let ids: [usize; 8] = std::array::from_fn(corner);
                let inside_count = ids.iter().filter(|&&g| values[g] > 0.0).count();
                if inside_count == 0 || inside_count == 8 {
                    continue;
                }
                for tet in TETS {
                    let v = tet.map(|c| ids[c]);
                    let (ins, outs): (Vec<usize>, Vec<usize>) = v.iter().partition(|&&g| values[g] > 0.0);
                    let mut emit = |a: usize, b: usize, c: usize, inside_ref: usize, vertices: &mut Vec<[f64; 3]>| {
                        if a == b || b == c || a == c {
                            return;
                        }
                        let (pa, pb, pc) = (vertices[a], vertices[b], vertices[c]);
                        let nrm = cross(sub(pb, pa), sub(pc, pa));
                        if dot(nrm, nrm) == 0.0 {
                            return;
                        }
                        // orient away from the interior
                        if dot(nrm, sub(pa, pts[inside_ref])) < 0.0 {
                            triangles.push([a, c, b]);
                        } else {
                            triangles.push([a, b, c]);
                        }
                    };
                    match ins.len() {
                        1 => {
                            let a = ins[0];
                            let p: Vec<usize> = outs.iter().map(|&b| vertex_on(a, b, &mut vertices)).collect();
                            emit(p[0], p[1], p[2], a, &mut vertices);
                        }
                        3 => {
                            let b = outs[0];
                            let p: Vec<usize> = ins.iter().map(|&a| vertex_on(a, b, &mut vertices)).collect();
                            emit(p[0], p[1], p[2], ins[0], &mut vertices);
                        }
                        2 => {
                            let (a0, a1) = (ins[0], ins[1]);
                            let (b0, b1) = (outs[0], outs[1]);
                            let p00 = vertex_on(a0, b0, &mut vertices);
                            let p01 = vertex_on(a0, b1, &mut vertices);
                            let p11 = vertex_on(a1, b1, &mut vertices);
                            let p10 = vertex_on(a1, b0, &mut vertices);
                            // quad p00 - p01 - p11 - p10
                            emit(p00, p01, p11, a0, &mut vertices);
                            emit(p00, p11, p10, a0, &mut vertices);
                        }
                        _ => {}
                    }
                }
            }
        }
    }

    if triangles.is_empty() {
        return Err(Error::EmptyShape("zero level set is empty".into()));
    }
    Ok(TriangleMesh::new(vertices, triangles))
}
