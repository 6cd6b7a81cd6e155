//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use manifold_calib::contact::AssemblyGeometry;
use manifold_calib::se3::{pose_to_matrix, Pose6};
use nalgebra::{Matrix4, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type V3 = Vector3<f64>;

/// Central difference of a scalar function along coordinate `j`.
pub fn central_diff(f: impl Fn(&[f64]) -> f64, x: &[f64], j: usize, h: f64) -> f64 {
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    xp[j] += h;
    xm[j] -= h;
    (f(&xp) - f(&xm)) / (2.0 * h)
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

pub fn norm_rel_err(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let s = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if s == 0.0 {
        0.0
    } else {
        d / s
    }
}

/// Tip of a planar two-link arm by hand trigonometry.
pub fn planar_tip(a1: f64, a2: f64, q1_deg: f64, q2_deg: f64) -> (f64, f64) {
    let (q1, q12) = (q1_deg.to_radians(), (q1_deg + q2_deg).to_radians());
    (a1 * q1.cos() + a2 * q12.cos(), a1 * q1.sin() + a2 * q12.sin())
}

/// Entry-by-entry 4x4 product.
pub fn dense_mul(a: &Matrix4<f64>, b: &Matrix4<f64>) -> Matrix4<f64> {
    let mut c = Matrix4::zeros();
    for i in 0..4 {
        for j in 0..4 {
            let mut s = 0.0;
            for k in 0..4 {
                s += a[(i, k)] * b[(k, j)];
            }
            c[(i, j)] = s;
        }
    }
    c
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn dense_inverse(m: &Matrix4<f64>) -> Matrix4<f64> {
    let mut a = [[0.0; 8]; 4];
    for i in 0..4 {
        for j in 0..4 {
            a[i][j] = m[(i, j)];
        }
        a[i][4 + i] = 1.0;
    }
    for c in 0..4 {
        let p = (c..4).max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs())).unwrap();
        a.swap(c, p);
        let piv = a[c][c];
        for v in a[c].iter_mut() {
            *v /= piv;
        }
        for r in 0..4 {
            if r != c {
                let f = a[r][c];
                let row = a[c];
                for (v, w) in a[r].iter_mut().zip(row.iter()) {
                    *v -= f * w;
                }
            }
        }
    }
    Matrix4::from_fn(|i, j| a[i][4 + j])
}

/// Signed distance from a point to an axis-aligned box.
fn sd_box(p: &V3, min: &V3, max: &V3) -> f64 {
    let c = (min + max) * 0.5;
    let h = (max - min) * 0.5;
    let q = (p - c).abs() - h;
    let outside = V3::new(q.x.max(0.0), q.y.max(0.0), q.z.max(0.0)).norm();
    let inside = q.x.max(q.y).max(q.z).min(0.0);
    outside + inside
}

/// Block piece as `(min, max)` corners in the hole frame: four walls around
/// the pocket and the floor under it.
fn block_pieces(geom: &AssemblyGeometry) -> Vec<(V3, V3)> {
    let w = 0.5 * geom.hole_width;
    let d = geom.hole_depth;
    let m = 2.0 * geom.hole_width + geom.peg_length;
    let bottom = d + geom.hole_width;
    vec![
        (V3::new(w, -w - m, 0.0), V3::new(w + m, w + m, bottom)),
        (V3::new(-w - m, -w - m, 0.0), V3::new(-w, w + m, bottom)),
        (V3::new(-w, w, 0.0), V3::new(w, w + m, bottom)),
        (V3::new(-w, -w - m, 0.0), V3::new(w, -w, bottom)),
        (V3::new(-w, -w, d), V3::new(w, w, bottom)),
    ]
}

fn box_edges(min: &V3, max: &V3) -> Vec<(V3, V3)> {
    let c = |i: usize| V3::new(
        if i & 1 == 0 { min.x } else { max.x },
        if i & 2 == 0 { min.y } else { max.y },
        if i & 4 == 0 { min.z } else { max.z },
    );
    let mut out = Vec::new();
    for i in 0..8 {
        for bit in [1, 2, 4] {
            if i & bit == 0 {
                out.push((c(i), c(i | bit)));
            }
        }
    }
    out
}

/// Brute-force signed clearance from dense surface samples.
///
/// For each block piece the distance is the smaller of two sampled minima:
/// peg-surface points against the piece, and piece-edge points against the
/// peg. Both use exact point-to-box signed distances, so separated poses are
/// matched up to sampling error. When the peg overlaps a piece the value is
/// minus the depth of the deepest sample, a lower bound on the depth of the
/// minimum separating translation.
pub struct ClearanceOracle {
    geom: AssemblyGeometry,
    pieces: Vec<(V3, V3)>,
    /// Peg-frame samples on the peg surface.
    peg_points: Vec<V3>,
    /// Hole-frame samples on each piece's edges near the pocket.
    piece_points: Vec<Vec<V3>>,
}

impl ClearanceOracle {
    /// `peg_samples` points on the peg surface, 40 % of them on its edges.
    pub fn new(geom: AssemblyGeometry, peg_samples: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = 0.5 * geom.peg_width;
        let l = geom.peg_length;
        let peg_min = V3::new(-h, -h, -l);
        let peg_max = V3::new(h, h, 0.0);
        let edges = box_edges(&peg_min, &peg_max);
        let edge_len: f64 = edges.iter().map(|(a, b)| (b - a).norm()).sum();
        let n_edge = peg_samples * 2 / 5;
        let mut peg_points = Vec::with_capacity(peg_samples);
        for (a, b) in &edges {
            let k = ((n_edge as f64) * (b - a).norm() / edge_len).round() as usize;
            for i in 0..=k {
                peg_points.push(a + (b - a) * (i as f64 / k as f64));
            }
        }
        // Faces, area-weighted.
        let side = geom.peg_width * l;
        let cap = geom.peg_width * geom.peg_width;
        let total = 4.0 * side + 2.0 * cap;
        while peg_points.len() < peg_samples {
            let u = rng.gen_range(-h..h);
            let v = rng.gen_range(0.0..1.0);
            let pick = rng.gen_range(0.0..total);
            let p = if pick < 4.0 * side {
                let z = -l * v;
                match (pick / side) as usize {
                    0 => V3::new(h, u, z),
                    1 => V3::new(-h, u, z),
                    2 => V3::new(u, h, z),
                    _ => V3::new(u, -h, z),
                }
            } else if pick < 4.0 * side + cap {
                V3::new(u, -h + 2.0 * h * v, 0.0)
            } else {
                V3::new(u, -h + 2.0 * h * v, -l)
            };
            peg_points.push(p);
        }

        // Piece edges at 0.01 mm spacing, kept only where the peg can reach.
        let reach = l + geom.hole_width;
        let step = 0.01;
        let pieces = block_pieces(&geom);
        let piece_points = pieces
            .iter()
            .map(|(min, max)| {
                let mut pts = Vec::new();
                for (a, b) in box_edges(min, max) {
                    let k = ((b - a).norm() / step).ceil() as usize;
                    for i in 0..=k {
                        let p = a + (b - a) * (i as f64 / k as f64);
                        if p.norm() <= reach {
                            pts.push(p);
                        }
                    }
                }
                pts
            })
            .collect();
        ClearanceOracle {
            geom,
            pieces,
            peg_points,
            piece_points,
        }
    }

    pub fn peg_sample_count(&self) -> usize {
        self.peg_points.len()
    }

    fn sd_peg(&self, p_peg: &V3) -> f64 {
        let h = 0.5 * self.geom.peg_width;
        sd_box(p_peg, &V3::new(-h, -h, -self.geom.peg_length), &V3::new(h, h, 0.0))
    }

    pub fn clearance(&self, pose: &Pose6) -> f64 {
        let t = pose_to_matrix(pose);
        let inv = t.inverse();
        let peg_world: Vec<V3> = self.peg_points.iter().map(|p| t.transform_point(p)).collect();
        self.pieces
            .iter()
            .zip(&self.piece_points)
            .map(|((min, max), edge_pts)| {
                let from_peg = peg_world.iter().map(|p| sd_box(p, min, max)).fold(f64::INFINITY, f64::min);
                let from_piece = edge_pts
                    .iter()
                    .map(|p| self.sd_peg(&inv.transform_point(p)))
                    .fold(f64::INFINITY, f64::min);
                from_peg.min(from_piece)
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Uniform pose in an axis-aligned box of half-widths `half` around `center`.
pub fn random_pose(rng: &mut impl Rng, center: [f64; 6], half: [f64; 6]) -> Pose6 {
    Pose6::from_array(std::array::from_fn(|k| center[k] + rng.gen_range(-half[k]..=half[k])))
}
