//! Analytic solids (positive inside) for fixtures and tests.

use serde::{Deserialize, Serialize};

use super::field::ScalarField;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Sphere {
        center: [f64; 3],
        radius: f64,
    },
    Cuboid {
        lo: [f64; 3],
        hi: [f64; 3],
    },
    /// Capped cylinder along the z axis.
    CylinderZ {
        center: [f64; 2],
        radius: f64,
        z0: f64,
        z1: f64,
    },
    Union {
        parts: Vec<Shape>,
    },
}

impl Shape {
    pub fn sdf(&self, x: [f64; 3]) -> f64 {
        match self {
            Shape::Sphere { center, radius } => {
                let d = [x[0] - center[0], x[1] - center[1], x[2] - center[2]];
                radius - (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
            }
            Shape::Cuboid { lo, hi } => {
                let mut q = [0.0; 3];
                for k in 0..3 {
                    let c = 0.5 * (lo[k] + hi[k]);
                    let h = 0.5 * (hi[k] - lo[k]);
                    q[k] = (x[k] - c).abs() - h;
                }
                let outside = q.iter().map(|v| v.max(0.0).powi(2)).sum::<f64>().sqrt();
                let inside = q[0].max(q[1]).max(q[2]).min(0.0);
                -(outside + inside)
            }
            Shape::CylinderZ { center, radius, z0, z1 } => {
                let r = ((x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2)).sqrt();
                let zc = 0.5 * (z0 + z1);
                let hz = 0.5 * (z1 - z0);
                let d = [r - radius, (x[2] - zc).abs() - hz];
                let outside = (d[0].max(0.0).powi(2) + d[1].max(0.0).powi(2)).sqrt();
                let inside = d[0].max(d[1]).min(0.0);
                -(outside + inside)
            }
            Shape::Union { parts } => parts.iter().map(|p| p.sdf(x)).fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// Table: a slab top on four cylindrical legs standing on `z = floor`.
    pub fn table(top_half: f64, top_z: [f64; 2], leg_radius: f64, leg_inset: f64, floor: f64) -> Shape {
        let mut parts =
            vec![Shape::Cuboid { lo: [-top_half, -top_half, top_z[0]], hi: [top_half, top_half, top_z[1]] }];
        let c = top_half - leg_inset;
        for (sx, sy) in [(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)] {
            parts.push(Shape::CylinderZ {
                center: [sx * c, sy * c],
                radius: leg_radius,
                z0: floor,
                z1: top_z[0] + 0.5 * (top_z[1] - top_z[0]),
            });
        }
        Shape::Union { parts }
    }
}

impl ScalarField for Shape {
    fn values(&self, pts: &[[f64; 3]]) -> Vec<f64> {
        pts.iter().map(|&x| self.sdf(x)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primitives_sign() {
        let s = Shape::Sphere { center: [0.0; 3], radius: 0.5 };
        assert_eq!(s.sdf([0.0; 3]), 0.5);
        assert!((s.sdf([1.0, 0.0, 0.0]) + 0.5).abs() < 1e-15);
        let b = Shape::Cuboid { lo: [-0.5; 3], hi: [0.5; 3] };
        assert_eq!(b.sdf([0.0; 3]), 0.5);
        assert!((b.sdf([0.0, 0.0, 0.75]) + 0.25).abs() < 1e-15);
        assert!((b.sdf([0.75, 0.75, 0.0]) + 0.25 * 2f64.sqrt()).abs() < 1e-15);
        let c = Shape::CylinderZ { center: [0.0, 0.0], radius: 0.1, z0: -0.5, z1: 0.5 };
        assert!((c.sdf([0.0, 0.0, 0.0]) - 0.1).abs() < 1e-15);
        assert!((c.sdf([0.3, 0.0, 0.0]) + 0.2).abs() < 1e-15);
    }

    #[test]
    fn table_is_connected_to_floor() {
        let t = Shape::table(0.6, [0.2, 0.3], 0.06, 0.12, -0.6);
        assert!(t.sdf([0.48, 0.48, -0.59]) > 0.0);
        assert!(t.sdf([0.0, 0.0, 0.25]) > 0.0);
        assert!(t.sdf([0.0, 0.0, -0.3]) < 0.0);
    }
}
