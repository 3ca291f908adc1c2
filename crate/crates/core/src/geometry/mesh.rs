use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Indexed triangle mesh with an optional per-vertex scalar.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriangleMesh {
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Vec<[usize; 3]>,
    pub vertex_scalar: Option<Vec<f64>>,
}

/// Uniform scale plus translation taking source coordinates into the
/// normalized cube: `x_norm = (x - center) * scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    pub center: [f64; 3],
    pub scale: f64,
}

impl Normalization {
    pub fn identity() -> Self {
        Normalization { center: [0.0; 3], scale: 1.0 }
    }

    pub fn apply(&self, x: [f64; 3]) -> [f64; 3] {
        [
            (x[0] - self.center[0]) * self.scale,
            (x[1] - self.center[1]) * self.scale,
            (x[2] - self.center[2]) * self.scale,
        ]
    }

    pub fn invert(&self, x: [f64; 3]) -> [f64; 3] {
        [x[0] / self.scale + self.center[0], x[1] / self.scale + self.center[1], x[2] / self.scale + self.center[2]]
    }
}

pub(crate) fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

impl TriangleMesh {
    pub fn new(vertices: Vec<[f64; 3]>, triangles: Vec<[usize; 3]>) -> Self {
        TriangleMesh { vertices, triangles, vertex_scalar: None }
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].map(|i| self.vertices[i]);
        0.5 * norm(cross(sub(b, a), sub(c, a)))
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Indices in range, finite coordinates, no triangle with area <= 1e-12.
    pub fn validate(&self) -> Result<()> {
        if let Some(i) = self.vertices.iter().position(|v| v.iter().any(|c| !c.is_finite())) {
            return Err(Error::Mesh(format!("vertex {i} has non-finite coordinates")));
        }
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= self.vertices.len()) {
                return Err(Error::Mesh(format!(
                    "triangle {t} references a vertex out of range ({tri:?}, {} vertices)",
                    self.vertices.len()
                )));
            }
            if self.triangle_area(t) <= 1e-12 {
                return Err(Error::Mesh(format!("triangle {t} is degenerate")));
            }
        }
        if let Some(s) = &self.vertex_scalar {
            if s.len() != self.vertices.len() {
                return Err(Error::Mesh("per-vertex scalar count mismatch".into()));
            }
        }
        Ok(())
    }

    /// Undirected edges not shared by exactly two triangles.
    pub fn open_edges(&self) -> Vec<(usize, usize)> {
        let mut count: HashMap<(usize, usize), usize> = HashMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                *count.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        let mut open: Vec<_> = count.into_iter().filter(|&(_, c)| c != 2).map(|(e, _)| e).collect();
        open.sort_unstable();
        open
    }

    pub fn ensure_watertight(&self) -> Result<()> {
        if self.triangles.is_empty() {
            return Err(Error::Mesh("mesh has no triangles".into()));
        }
        let open = self.open_edges();
        if open.is_empty() {
            return Ok(());
        }
        let shown: Vec<String> = open.iter().take(8).map(|(a, b)| format!("({a}, {b})")).collect();
        Err(Error::Mesh(format!("mesh is not watertight: {} open edge(s), e.g. {}", open.len(), shown.join(", "))))
    }

    /// `V - E + F`.
    pub fn euler_characteristic(&self) -> i64 {
        let mut edges = std::collections::HashSet::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                edges.insert((a.min(b), a.max(b)));
            }
        }
        let used: std::collections::HashSet<usize> = self.triangles.iter().flatten().copied().collect();
        used.len() as i64 - edges.len() as i64 + self.triangles.len() as i64
    }

    pub fn bounding_box(&self) -> Option<([f64; 3], [f64; 3])> {
        let first = *self.vertices.first()?;
        let mut lo = first;
        let mut hi = first;
        for v in &self.vertices {
            for k in 0..3 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        Some((lo, hi))
    }

    /// Scale and translate so the bounding box is centered and its largest
    /// half-extent equals `half_extent`.
    pub fn normalize(&mut self, half_extent: f64) -> Result<Normalization> {
        let (lo, hi) = self.bounding_box().ok_or_else(|| Error::Mesh("cannot normalize an empty mesh".into()))?;
        let center = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1]), 0.5 * (lo[2] + hi[2])];
        let largest = (0..3).map(|k| 0.5 * (hi[k] - lo[k])).fold(0.0, f64::max);
        if largest <= 0.0 {
            return Err(Error::Mesh("mesh has zero extent".into()));
        }
        let norm = Normalization { center, scale: half_extent / largest };
        for v in &mut self.vertices {
            *v = norm.apply(*v);
        }
        Ok(norm)
    }

    /// Signed volume enclosed by a closed, consistently oriented mesh.
    pub fn volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|i| self.vertices[i]);
                dot(a, cross(b, c)) / 6.0
            })
            .sum()
    }

    /// Axis-aligned box with outward-facing triangles.
    pub fn cuboid(lo: [f64; 3], hi: [f64; 3]) -> Self {
        let v = |i: usize| {
            [
                if i & 1 == 0 { lo[0] } else { hi[0] },
                if i & 2 == 0 { lo[1] } else { hi[1] },
                if i & 4 == 0 { lo[2] } else { hi[2] },
            ]
        };
        let vertices = (0..8).map(v).collect();
        let quads = [
            [0, 2, 3, 1], // z-
            [4, 5, 7, 6], // z+
            [0, 1, 5, 4], // y-
            [2, 6, 7, 3], // y+
            [0, 4, 6, 2], // x-
            [1, 3, 7, 5], // x+
        ];
        let mut triangles = Vec::new();
        for q in quads {
            triangles.push([q[0], q[1], q[2]]);
            triangles.push([q[0], q[2], q[3]]);
        }
        TriangleMesh::new(vertices, triangles)
    }

    /// Subdivided icosahedron projected onto a sphere.
    pub fn icosphere(center: [f64; 3], radius: f64, depth: usize) -> Self {
        let t = (1.0 + 5f64.sqrt()) / 2.0;
        let mut verts: Vec<[f64; 3]> = vec![
            [-1.0, t, 0.0],
            [1.0, t, 0.0],
            [-1.0, -t, 0.0],
            [1.0, -t, 0.0],
            [0.0, -1.0, t],
            [0.0, 1.0, t],
            [0.0, -1.0, -t],
            [0.0, 1.0, -t],
            [t, 0.0, -1.0],
            [t, 0.0, 1.0],
            [-t, 0.0, -1.0],
            [-t, 0.0, 1.0],
        ];
        let mut tris: Vec<[usize; 3]> = vec![
            [0, 11, 5],
            [0, 5, 1],
            [0, 1, 7],
            [0, 7, 10],
            [0, 10, 11],
            [1, 5, 9],
            [5, 11, 4],
            [11, 10, 2],
            [10, 7, 6],
            [7, 1, 8],
            [3, 9, 4],
            [3, 4, 2],
            [3, 2, 6],
            [3, 6, 8],
            [3, 8, 9],
            [4, 9, 5],
            [2, 4, 11],
            [6, 2, 10],
            [8, 6, 7],
            [9, 8, 1],
        ];
        let unit = |v: [f64; 3]| {
            let n = norm(v);
            [v[0] / n, v[1] / n, v[2] / n]
        };
        for v in &mut verts {
            *v = unit(*v);
        }
        for _ in 0..depth {
            let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
            let mut next = Vec::with_capacity(tris.len() * 4);
            let mut midpoint = |a: usize, b: usize, verts: &mut Vec<[f64; 3]>| {
                *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                    let (p, q) = (verts[a], verts[b]);
                    verts.push(unit([p[0] + q[0], p[1] + q[1], p[2] + q[2]]));
                    verts.len() - 1
                })
            };
            for [a, b, c] in tris {
                let ab = midpoint(a, b, &mut verts);
                let bc = midpoint(b, c, &mut verts);
                let ca = midpoint(c, a, &mut verts);
                next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
            }
            tris = next;
        }
        let vertices = verts
            .into_iter()
            .map(|v| [center[0] + radius * v[0], center[1] + radius * v[1], center[2] + radius * v[2]])
            .collect();
        TriangleMesh::new(vertices, tris)
    }

    /// Wavefront OBJ text (`v` and `f` records only, 1-based indices).
    pub fn to_obj(&self) -> String {
        let mut s = String::new();
        for v in &self.vertices {
            let _ = writeln!(s, "v {} {} {}", v[0], v[1], v[2]);
        }
        for t in &self.triangles {
            let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
        }
        s
    }

    /// Parse OBJ text. Polygonal faces are fan-triangulated; texture and
    /// normal indices (`f 1/2/3`) and other record types are ignored.
    pub fn from_obj(text: &str, origin: &str) -> Result<Self> {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        let parse_err = |line: usize, detail: String| Error::Parse { path: origin.to_string(), line, detail };
        for (ln, raw) in text.lines().enumerate() {
            let line = ln + 1;
            let mut it = raw.split_whitespace();
            match it.next() {
                Some("v") => {
                    let coords: Vec<f64> = it
                        .take(3)
                        .map(|t| t.parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| parse_err(line, format!("bad vertex coordinate: {e}")))?;
                    if coords.len() != 3 {
                        return Err(parse_err(line, "vertex needs 3 coordinates".into()));
                    }
                    vertices.push([coords[0], coords[1], coords[2]]);
                }
                Some("f") => {
                    let mut idx = Vec::new();
                    for tok in it {
                        let first = tok.split('/').next().unwrap_or("");
                        let i: i64 =
                            first.parse().map_err(|e| parse_err(line, format!("bad face index {tok:?}: {e}")))?;
                        let i = if i < 0 { vertices.len() as i64 + i } else { i - 1 };
                        if i < 0 {
                            return Err(parse_err(line, format!("face index {tok} out of range")));
                        }
                        idx.push(i as usize);
                    }
                    if idx.len() < 3 {
                        return Err(parse_err(line, "face needs at least 3 vertices".into()));
                    }
                    for k in 1..idx.len() - 1 {
                        triangles.push([idx[0], idx[k], idx[k + 1]]);
                    }
                }
                _ => {}
            }
        }
        let mesh = TriangleMesh::new(vertices, triangles);
        mesh.validate().map_err(|e| match e {
            Error::Mesh(m) => Error::Mesh(format!("{origin}: {m}")),
            other => other,
        })?;
        Ok(mesh)
    }

    pub fn read_obj(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_obj(&text, &path.display().to_string())
    }

    pub fn write_obj(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_obj()).map_err(|e| Error::io(path, e))
    }

    /// Sidecar CSV `vertex,stress` for the per-vertex scalar.
    pub fn write_scalar_csv(&self, path: &Path) -> Result<()> {
        let values = self.vertex_scalar.as_ref().ok_or_else(|| Error::config("mesh carries no per-vertex scalar"))?;
        let mut s = String::from("vertex,stress\n");
        for (i, v) in values.iter().enumerate() {
            let _ = writeln!(s, "{i},{v}");
        }
        std::fs::write(path, s).map_err(|e| Error::io(path, e))
    }
}
