//! Square peg / square pocket assembly and its signed clearance.
//!
//! Hole frame: origin at the center of the pocket opening, `+z` pointing into
//! the pocket. The block fills `z >= 0` outside the pocket
//! `|x|, |y| <= hole_width / 2, 0 <= z <= hole_depth`.
//!
//! Peg frame: origin at the center of the peg tip face, `+z` along the
//! insertion direction; the peg body occupies `-peg_length <= z <= 0`.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::gjk;
use crate::error::{Error, Result};
use crate::se3::{pose_to_matrix, HomTransform, Pose6};

type V3 = Vector3<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssemblyGeometry {
    pub peg_width: f64,
    pub peg_length: f64,
    pub hole_width: f64,
    pub hole_depth: f64,
}

impl Default for AssemblyGeometry {
    fn default() -> Self {
        AssemblyGeometry::reference()
    }
}

/// Axis-aligned box in the hole frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: V3,
    pub max: V3,
}

impl Aabb {
    pub fn vertices(&self) -> [V3; 8] {
        let (a, b) = (self.min, self.max);
        [
            V3::new(a.x, a.y, a.z),
            V3::new(b.x, a.y, a.z),
            V3::new(a.x, b.y, a.z),
            V3::new(b.x, b.y, a.z),
            V3::new(a.x, a.y, b.z),
            V3::new(b.x, a.y, b.z),
            V3::new(a.x, b.y, b.z),
            V3::new(b.x, b.y, b.z),
        ]
    }

    /// Lower bound on the distance between this box and a point set's bounding box.
    fn gap_to(&self, lo: &V3, hi: &V3) -> f64 {
        let mut s = 0.0;
        for k in 0..3 {
            let d = (self.min[k] - hi[k]).max(lo[k] - self.max[k]).max(0.0);
            s += d * d;
        }
        s.sqrt()
    }
}

impl AssemblyGeometry {
    /// 20 mm square peg, 60 mm long, in a 21 mm x 30 mm deep pocket.
    pub fn reference() -> Self {
        AssemblyGeometry {
            peg_width: 20.0,
            peg_length: 60.0,
            hole_width: 21.0,
            hole_depth: 30.0,
        }
    }

    pub fn new(peg_width: f64, peg_length: f64, hole_width: f64, hole_depth: f64) -> Result<Self> {
        let g = AssemblyGeometry {
            peg_width,
            peg_length,
            hole_width,
            hole_depth,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.peg_width, self.peg_length, self.hole_width, self.hole_depth];
        if all.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::Validation("geometry dimensions must be positive".into()));
        }
        if self.clearance() <= 0.0 {
            return Err(Error::Validation(format!(
                "clearance must be positive, got {}",
                self.clearance()
            )));
        }
        Ok(())
    }

    pub fn clearance(&self) -> f64 {
        self.hole_width - self.peg_width
    }

    /// Lateral extent of the block beyond the pocket wall.
    pub fn block_margin(&self) -> f64 {
        2.0 * self.hole_width + self.peg_length
    }

    pub fn floor_thickness(&self) -> f64 {
        self.hole_width
    }

    /// Convex decomposition of the block: four walls and the floor.
    pub fn block_pieces(&self) -> [Aabb; 5] {
        let w = 0.5 * self.hole_width;
        let m = self.block_margin();
        let bottom = self.hole_depth + self.floor_thickness();
        let d = self.hole_depth;
        [
            Aabb {
                min: V3::new(w, -w - m, 0.0),
                max: V3::new(w + m, w + m, bottom),
            },
            Aabb {
                min: V3::new(-w - m, -w - m, 0.0),
                max: V3::new(-w, w + m, bottom),
            },
            Aabb {
                min: V3::new(-w, w, 0.0),
                max: V3::new(w, w + m, bottom),
            },
            Aabb {
                min: V3::new(-w, -w - m, 0.0),
                max: V3::new(w, -w, bottom),
            },
            Aabb {
                min: V3::new(-w, -w, d),
                max: V3::new(w, w, bottom),
            },
        ]
    }

    /// Peg box corners in the peg frame.
    pub fn peg_vertices_local(&self) -> [V3; 8] {
        let h = 0.5 * self.peg_width;
        Aabb {
            min: V3::new(-h, -h, -self.peg_length),
            max: V3::new(h, h, 0.0),
        }
        .vertices()
    }

    pub fn peg_vertices(&self, hole_t_peg: &HomTransform) -> [V3; 8] {
        self.peg_vertices_local().map(|v| hole_t_peg.transform_point(&v))
    }
}

/// Per-piece signed distances between the peg at `hole_t_peg` and the block.
pub fn piece_distances(geom: &AssemblyGeometry, hole_t_peg: &Pose6) -> [f64; 5] {
    let t = pose_to_matrix(hole_t_peg);
    let peg = geom.peg_vertices(&t);
    let r = t.rotation();
    let peg_axes = [r.column(0).into_owned(), r.column(1).into_owned(), r.column(2).into_owned()];
    let axes = gjk::box_axes(&peg_axes, &[V3::x(), V3::y(), V3::z()]);
    geom.block_pieces().map(|piece| {
        let verts = piece.vertices();
        let d = gjk::distance(&peg, &verts);
        if d > 0.0 {
            d
        } else {
            -gjk::penetration_depth(&peg, &verts, &axes).max(0.0)
        }
    })
}

/// Signed clearance (mm) between the peg at `hole_t_peg` and the block:
/// the minimum separation, negative by the penetration depth when they
/// overlap.
pub fn clearance_fn(geom: &AssemblyGeometry, hole_t_peg: &Pose6) -> f64 {
    let t = pose_to_matrix(hole_t_peg);
    let peg = geom.peg_vertices(&t);
    let (mut lo, mut hi) = (peg[0], peg[0]);
    for v in &peg[1..] {
        lo = lo.inf(v);
        hi = hi.sup(v);
    }
    let r = t.rotation();
    let peg_axes = [r.column(0).into_owned(), r.column(1).into_owned(), r.column(2).into_owned()];
    let mut axes: Option<Vec<V3>> = None;

    let mut best = f64::INFINITY;
    for piece in geom.block_pieces() {
        // The box gap bounds a piece's value from below only when positive.
        let gap = piece.gap_to(&lo, &hi);
        if gap > 0.0 && gap >= best {
            continue;
        }
        let verts = piece.vertices();
        let d = gjk::distance(&peg, &verts);
        let signed = if d > 0.0 {
            d
        } else {
            let axes = axes.get_or_insert_with(|| gjk::box_axes(&peg_axes, &[V3::x(), V3::y(), V3::z()]));
            -gjk::penetration_depth(&peg, &verts, axes).max(0.0)
        };
        best = best.min(signed);
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centered_peg_has_half_clearance() {
        let g = AssemblyGeometry::reference();
        let c = clearance_fn(&g, &Pose6::new(0.0, 0.0, 10.0, 0.0, 0.0, 0.0));
        assert!((c - 0.5).abs() < 1e-9, "{}", c);
    }

    #[test]
    fn lateral_limit_touches_wall() {
        let g = AssemblyGeometry::reference();
        let c = clearance_fn(&g, &Pose6::new(0.5, 0.0, 10.0, 0.0, 0.0, 0.0));
        assert!(c.abs() < 1e-9, "{}", c);
        let c = clearance_fn(&g, &Pose6::new(0.0, -0.7, 10.0, 0.0, 0.0, 0.0));
        assert!((c + 0.2).abs() < 1e-9, "{}", c);
    }

    #[test]
    fn floor_and_top_face() {
        let g = AssemblyGeometry::reference();
        // Resting on the floor.
        assert!(clearance_fn(&g, &Pose6::new(0.0, 0.0, 30.0, 0.0, 0.0, 0.0)).abs() < 1e-9);
        // Offset 5 mm, hovering 2 mm above the top face.
        let c = clearance_fn(&g, &Pose6::new(5.0, 0.0, -2.0, 0.0, 0.0, 0.0));
        assert!((c - 2.0).abs() < 1e-9, "{}", c);
        // Same offset pushed 1 mm into the top face.
        let c = clearance_fn(&g, &Pose6::new(5.0, 0.0, 1.0, 0.0, 0.0, 0.0));
        assert!((c + 1.0).abs() < 1e-9, "{}", c);
    }

    #[test]
    fn yawed_peg_corner_contact() {
        let g = AssemblyGeometry::reference();
        // Half extent of a yawed square: 10 (cos + sin).
        let yaw = 2.0f64;
        let ext = 10.0 * (yaw.to_radians().cos() + yaw.to_radians().sin());
        let c = clearance_fn(&g, &Pose6::new(0.0, 0.0, 10.0, 0.0, 0.0, yaw));
        assert!((c - (10.5 - ext)).abs() < 1e-9, "{} vs {}", c, 10.5 - ext);
    }

    #[test]
    fn piece_distances_agree_with_min() {
        let g = AssemblyGeometry::reference();
        let poses = [
            Pose6::new(0.2, -0.1, 12.0, 0.5, -0.3, 0.4),
            // Overlaps four walls, the deepest one last.
            Pose6::new(-0.032, 0.119, 17.75, -1.549, -0.514, -3.996),
        ];
        for p in poses {
            let m = piece_distances(&g, &p).iter().cloned().fold(f64::INFINITY, f64::min);
            assert_eq!(m, clearance_fn(&g, &p));
        }
    }

    #[test]
    fn rejects_non_positive_clearance() {
        assert!(AssemblyGeometry::new(20.0, 60.0, 20.0, 30.0).is_err());
        assert!(AssemblyGeometry::new(20.0, 60.0, 21.0, 30.0).is_ok());
    }
}
