//! Exact nearest-neighbor search in R^6.
//!
//! Ties are broken by the lowest point index so results coincide bit for bit
//! with [`nearest_linear`].

use crate::se3::Pose6;

const LEAF_SIZE: usize = 8;

#[inline]
fn dist_sq(a: &[f64; 6], b: &[f64; 6]) -> f64 {
    let mut s = 0.0;
    for k in 0..6 {
        let d = a[k] - b[k];
        s += d * d;
    }
    s
}

#[inline]
fn better(d: f64, i: usize, best: (f64, usize)) -> bool {
    d < best.0 || (d == best.0 && i < best.1)
}

/// Brute-force reference: `(index, squared distance)` of the nearest point.
pub fn nearest_linear(points: &[[f64; 6]], query: &[f64; 6]) -> Option<(usize, f64)> {
    let mut best = (f64::INFINITY, usize::MAX);
    for (i, p) in points.iter().enumerate() {
        let d = dist_sq(p, query);
        if better(d, i, best) {
            best = (d, i);
        }
    }
    (best.1 != usize::MAX).then_some((best.1, best.0))
}

enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

pub struct KdTree {
    points: Vec<[f64; 6]>,
    /// Point indices, permuted so every node owns a contiguous range.
    order: Vec<usize>,
    root: Option<Node>,
}

impl KdTree {
    pub fn new(points: Vec<[f64; 6]>) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let root = if points.is_empty() {
            None
        } else {
            let n = points.len();
            Some(build(&points, &mut order, 0, n))
        };
        KdTree { points, order, root }
    }

    pub fn from_poses(poses: &[Pose6]) -> Self {
        KdTree::new(poses.iter().map(|p| p.to_array()).collect())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[[f64; 6]] {
        &self.points
    }

    /// `(index, squared distance)` of the nearest point.
    pub fn nearest(&self, query: &[f64; 6]) -> Option<(usize, f64)> {
        let root = self.root.as_ref()?;
        let mut best = (f64::INFINITY, usize::MAX);
        self.search(root, query, &mut best);
        Some((best.1, best.0))
    }

    fn search(&self, node: &Node, q: &[f64; 6], best: &mut (f64, usize)) {
        match node {
            Node::Leaf { start, end } => {
                for &i in &self.order[*start..*end] {
                    let d = dist_sq(&self.points[i], q);
                    if better(d, i, *best) {
                        *best = (d, i);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[*axis] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, best);
                // Equal distances must still be visited for the index tie-break.
                if diff * diff <= best.0 {
                    self.search(far, q, best);
                }
            }
        }
    }
}

fn build(points: &[[f64; 6]], order: &mut [usize], start: usize, end: usize) -> Node {
    let slice = &mut order[start..end];
    if slice.len() <= LEAF_SIZE {
        return Node::Leaf { start, end };
    }
    let mut lo = [f64::INFINITY; 6];
    let mut hi = [f64::NEG_INFINITY; 6];
    for &i in slice.iter() {
        for k in 0..6 {
            lo[k] = lo[k].min(points[i][k]);
            hi[k] = hi[k].max(points[i][k]);
        }
    }
    let axis = (0..6)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
        .unwrap();
    if hi[axis] == lo[axis] {
        return Node::Leaf { start, end };
    }
    let mid = slice.len() / 2;
    slice.select_nth_unstable_by(mid, |&a, &b| points[a][axis].total_cmp(&points[b][axis]));
    let value = points[slice[mid]][axis];
    // Left holds coordinates <= value, right holds >= value.
    let left = build(points, order, start, start + mid);
    let right = build(points, order, start + mid, end);
    Node::Split {
        axis,
        value,
        left: Box::new(left),
        right: Box::new(right),
    }
}
