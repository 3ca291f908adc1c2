//! Bounding-volume hierarchy over mesh triangles for nearest-point and ray
//! queries.

use super::field::ScalarField;
use super::mesh::{cross, dot, sub, TriangleMesh};

#[derive(Debug, Clone, Copy)]
struct Aabb {
    lo: [f64; 3],
    hi: [f64; 3],
}

impl Aabb {
    fn empty() -> Self {
        Aabb { lo: [f64::INFINITY; 3], hi: [f64::NEG_INFINITY; 3] }
    }

    fn grow(&mut self, p: [f64; 3]) {
        for k in 0..3 {
            self.lo[k] = self.lo[k].min(p[k]);
            self.hi[k] = self.hi[k].max(p[k]);
        }
    }

    fn union(&mut self, o: &Aabb) {
        self.grow(o.lo);
        self.grow(o.hi);
    }

    fn dist2(&self, p: [f64; 3]) -> f64 {
        let mut d = 0.0;
        for k in 0..3 {
            let v = if p[k] < self.lo[k] {
                self.lo[k] - p[k]
            } else if p[k] > self.hi[k] {
                p[k] - self.hi[k]
            } else {
                0.0
            };
            d += v * v;
        }
        d
    }

    fn hit_by(&self, origin: [f64; 3], inv_dir: [f64; 3]) -> bool {
        let mut tmin: f64 = 0.0;
        let mut tmax = f64::INFINITY;
        for k in 0..3 {
            let t1 = (self.lo[k] - origin[k]) * inv_dir[k];
            let t2 = (self.hi[k] - origin[k]) * inv_dir[k];
            tmin = tmin.max(t1.min(t2));
            tmax = tmax.min(t1.max(t2));
        }
        tmin <= tmax
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { bbox: Aabb, start: usize, end: usize },
    Inner { bbox: Aabb, left: usize, right: usize },
}

impl Node {
    fn bbox(&self) -> &Aabb {
        match self {
            Node::Leaf { bbox, .. } | Node::Inner { bbox, .. } => bbox,
        }
    }
}

/// Triangle BVH borrowing a mesh.
pub struct MeshIndex<'a> {
    mesh: &'a TriangleMesh,
    nodes: Vec<Node>,
    order: Vec<usize>,
}

const LEAF_SIZE: usize = 4;

impl<'a> MeshIndex<'a> {
    pub fn new(mesh: &'a TriangleMesh) -> Self {
        let mut order: Vec<usize> = (0..mesh.triangles.len()).collect();
        let centroids: Vec<[f64; 3]> = mesh
            .triangles
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|i| mesh.vertices[i]);
                [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0, (a[2] + b[2] + c[2]) / 3.0]
            })
            .collect();
        let mut idx = MeshIndex { mesh, nodes: Vec::new(), order: Vec::new() };
        if !order.is_empty() {
            let n = order.len();
            idx.build(&mut order, &centroids, 0, n);
        }
        idx.order = order;
        idx
    }

    fn tri_box(&self, t: usize) -> Aabb {
        let mut b = Aabb::empty();
        for &i in &self.mesh.triangles[t] {
            b.grow(self.mesh.vertices[i]);
        }
        b
    }

    fn build(&mut self, order: &mut [usize], centroids: &[[f64; 3]], start: usize, end: usize) -> usize {
        let mut bbox = Aabb::empty();
        for &t in &order[start..end] {
            bbox.union(&self.tri_box(t));
        }
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { bbox, start, end });
            return id;
        }
        let mut cb = Aabb::empty();
        for &t in &order[start..end] {
            cb.grow(centroids[t]);
        }
        let axis = (0..3).max_by(|&a, &b| (cb.hi[a] - cb.lo[a]).partial_cmp(&(cb.hi[b] - cb.lo[b])).unwrap()).unwrap();
        let mid = (start + end) / 2;
        order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            centroids[a][axis].partial_cmp(&centroids[b][axis]).unwrap().then(a.cmp(&b))
        });
        self.nodes.push(Node::Leaf { bbox, start: 0, end: 0 });
        let left = self.build(order, centroids, start, mid);
        let right = self.build(order, centroids, mid, end);
        self.nodes[id] = Node::Inner { bbox, left, right };
        id
    }

    /// Unsigned distance to the nearest triangle.
    pub fn distance(&self, p: [f64; 3]) -> f64 {
        if self.nodes.is_empty() {
            return f64::INFINITY;
        }
        let mut best = f64::INFINITY;
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            if node.bbox().dist2(p) >= best {
                continue;
            }
            match *node {
                Node::Leaf { start, end, .. } => {
                    for &t in &self.order[start..end] {
                        let [a, b, c] = self.mesh.triangles[t].map(|i| self.mesh.vertices[i]);
                        let q = closest_point_on_triangle(p, a, b, c);
                        let d = sub(p, q);
                        best = best.min(dot(d, d));
                    }
                }
                Node::Inner { left, right, .. } => {
                    let (dl, dr) = (self.nodes[left].bbox().dist2(p), self.nodes[right].bbox().dist2(p));
                    if dl < dr {
                        stack.push(right);
                        stack.push(left);
                    } else {
                        stack.push(left);
                        stack.push(right);
                    }
                }
            }
        }
        best.sqrt()
    }

    /// Number of triangles crossed by the ray `origin + t dir`, `t > 0`.
    pub fn ray_crossings(&self, origin: [f64; 3], dir: [f64; 3]) -> usize {
        if self.nodes.is_empty() {
            return 0;
        }
        let inv = dir.map(|d| 1.0 / d);
        let mut hits = 0;
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            if !node.bbox().hit_by(origin, inv) {
                continue;
            }
            match *node {
                Node::Leaf { start, end, .. } => {
                    for &t in &self.order[start..end] {
                        let [a, b, c] = self.mesh.triangles[t].map(|i| self.mesh.vertices[i]);
                        if ray_hits_triangle(origin, dir, a, b, c) {
                            hits += 1;
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    stack.push(left);
                    stack.push(right);
                }
            }
        }
        hits
    }

    /// Parity inside test with a majority vote over three skewed rays.
    pub fn contains(&self, p: [f64; 3]) -> bool {
        const DIRS: [[f64; 3]; 3] = [
            [0.577_215_664_9, 0.318_309_886_2, 0.751_988_312_4],
            [-0.412_310_562_6, 0.867_128_712_1, 0.279_508_497_2],
            [0.223_606_797_7, -0.538_516_480_7, -0.812_403_840_5],
        ];
        let votes = DIRS.iter().filter(|d| self.ray_crossings(p, **d) % 2 == 1).count();
        votes >= 2
    }

    /// Signed distance, positive inside.
    pub fn signed_distance(&self, p: [f64; 3]) -> f64 {
        let d = self.distance(p);
        if d == 0.0 {
            return 0.0;
        }
        if self.contains(p) {
            d
        } else {
            -d
        }
    }
}

impl ScalarField for MeshIndex<'_> {
    fn values(&self, pts: &[[f64; 3]]) -> Vec<f64> {
        pts.iter().map(|&p| self.signed_distance(p)).collect()
    }
}

/// Möller–Trumbore, counting hits with `t > 1e-12`.
fn ray_hits_triangle(o: [f64; 3], d: [f64; 3], a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> bool {
    let e1 = sub(b, a);
    let e2 = sub(c, a);
    let p = cross(d, e2);
    let det = dot(e1, p);
    if det.abs() < 1e-300 {
        return false;
    }
    let inv = 1.0 / det;
    let s = sub(o, a);
    let u = dot(s, p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return false;
    }
    let q = cross(s, e1);
    let v = dot(d, q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return false;
    }
    dot(e2, q) * inv > 1e-12
}

/// Closest point on triangle `abc` to `p` (Ericson, Real-Time Collision
/// Detection, 5.1.5).
pub fn closest_point_on_triangle(p: [f64; 3], a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> [f64; 3] {
    let ab = sub(b, a);
    let ac = sub(c, a);
    let ap = sub(p, a);
    let d1 = dot(ab, ap);
    let d2 = dot(ac, ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = sub(p, b);
    let d3 = dot(ab, bp);
    let d4 = dot(ac, bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return [a[0] + v * ab[0], a[1] + v * ab[1], a[2] + v * ab[2]];
    }
    let cp = sub(p, c);
    let d5 = dot(ab, cp);
    let d6 = dot(ac, cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return [a[0] + w * ac[0], a[1] + w * ac[1], a[2] + w * ac[2]];
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return [b[0] + w * (c[0] - b[0]), b[1] + w * (c[1] - b[1]), b[2] + w * (c[2] - b[2])];
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    [a[0] + ab[0] * v + ac[0] * w, a[1] + ab[1] * v + ac[1] * w, a[2] + ab[2] * v + ac[2] * w]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::mesh::norm;

    fn brute_distance(mesh: &TriangleMesh, p: [f64; 3]) -> f64 {
        mesh.triangles
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|i| mesh.vertices[i]);
                let q = closest_point_on_triangle(p, a, b, c);
                let d = sub(p, q);
                dot(d, d).sqrt()
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn bvh_distance_matches_brute_force() {
        let mesh = TriangleMesh::icosphere([0.1, 0.0, -0.1], 0.7, 2);
        let idx = MeshIndex::new(&mesh);
        for i in 0..200 {
            let t = i as f64 * 0.731;
            let p = [t.sin(), (1.3 * t).cos(), (0.7 * t).sin() * 0.9];
            assert_eq!(idx.distance(p), brute_distance(&mesh, p));
        }
    }

    #[test]
    fn parity_inside_test() {
        let mesh = TriangleMesh::cuboid([-0.5; 3], [0.5; 3]);
        let idx = MeshIndex::new(&mesh);
        assert!(idx.contains([0.0; 3]));
        assert!(idx.contains([0.49, -0.49, 0.2]));
        assert!(!idx.contains([0.51, 0.0, 0.0]));
        assert!(!idx.contains([2.0, 2.0, 2.0]));
        assert!((idx.signed_distance([0.0, 0.0, 0.1]) - 0.4).abs() < 1e-12);
        assert!((idx.signed_distance([0.0, 0.0, 0.7]) + 0.2).abs() < 1e-12);
    }

    #[test]
    fn closest_point_regions() {
        let (a, b, c) = ([0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]);
        assert_eq!(closest_point_on_triangle([-1.0, -1.0, 0.0], a, b, c), a);
        let q = closest_point_on_triangle([0.2, 0.2, 3.0], a, b, c);
        assert!(norm(sub(q, [0.2, 0.2, 0.0])) < 1e-15, "{q:?}");
        assert_eq!(closest_point_on_triangle([0.5, -2.0, 0.0], a, b, c), [0.5, 0.0, 0.0]);
    }
}
