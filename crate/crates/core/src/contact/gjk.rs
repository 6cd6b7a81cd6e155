//! Distance and penetration depth between convex polytopes given by vertices.

use nalgebra::Vector3;

type V3 = Vector3<f64>;

const MAX_ITERS: usize = 128;
const REL_TOL: f64 = 1e-12;

fn support(verts: &[V3], dir: &V3) -> V3 {
    let mut best = verts[0];
    let mut best_dot = best.dot(dir);
    for v in &verts[1..] {
        let d = v.dot(dir);
        if d > best_dot {
            best_dot = d;
            best = *v;
        }
    }
    best
}

fn minkowski_support(a: &[V3], b: &[V3], dir: &V3) -> V3 {
    support(a, dir) - support(b, &-dir)
}

/// Closest point to the origin on the convex hull of `simplex` (1..=4 points).
/// Returns the point and the indices of the smallest supporting sub-simplex.
fn closest_on_simplex(simplex: &[V3]) -> (V3, Vec<usize>) {
    let n = simplex.len();
    let mut best: Option<(f64, V3, Vec<usize>)> = None;
    for mask in 1u32..(1 << n) {
        let idx: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        if let Some((p, _)) = affine_closest(simplex, &idx) {
            let d = p.norm_squared();
            let better = match &best {
                None => true,
                Some((bd, _, bidx)) => d < *bd || (d == *bd && idx.len() < bidx.len()),
            };
            if better {
                best = Some((d, p, idx));
            }
        }
    }
    let (_, p, idx) = best.expect("a single vertex is always feasible");
    (p, idx)
}

/// Closest point of the affine hull of the selected points, if it lies in the
/// relative interior of their convex hull.
fn affine_closest(simplex: &[V3], idx: &[usize]) -> Option<(V3, Vec<f64>)> {
    let p0 = simplex[idx[0]];
    let k = idx.len() - 1;
    if k == 0 {
        return Some((p0, vec![1.0]));
    }
    // Solve the normal equations for p0 + sum lambda_j (p_j - p0).
    let edges: Vec<V3> = idx[1..].iter().map(|&i| simplex[i] - p0).collect();
    let mut gram = nalgebra::DMatrix::<f64>::zeros(k, k);
    let mut rhs = nalgebra::DVector::<f64>::zeros(k);
    for i in 0..k {
        for j in 0..k {
            gram[(i, j)] = edges[i].dot(&edges[j]);
        }
        rhs[i] = -edges[i].dot(&p0);
    }
    let scale = gram.diagonal().max();
    if scale <= 0.0 {
        return None;
    }
    let lu = gram.clone().lu();
    let det = lu.determinant();
    // Degenerate (collinear / coplanar) subsets are covered by smaller ones.
    if det.abs() <= 1e-14 * scale.powi(k as i32) {
        return None;
    }
    let lambda = lu.solve(&rhs)?;
    let l0 = 1.0 - lambda.sum();
    if l0 <= 0.0 || lambda.iter().any(|&l| l <= 0.0) {
        return None;
    }
    let mut p = p0;
    for (e, l) in edges.iter().zip(lambda.iter()) {
        p += e * *l;
    }
    let mut bary = vec![l0];
    bary.extend(lambda.iter());
    Some((p, bary))
}

/// Euclidean distance between the convex hulls of `a` and `b`; zero when
/// they intersect (up to round-off).
pub fn distance(a: &[V3], b: &[V3]) -> f64 {
    let mut v = a[0] - b[0];
    let mut simplex: Vec<V3> = Vec::with_capacity(4);
    simplex.push(v);
    for _ in 0..MAX_ITERS {
        let vv = v.norm_squared();
        if vv <= 1e-24 {
            return 0.0;
        }
        let w = minkowski_support(a, b, &-v);
        // v.w is a lower bound on the distance times |v|.
        if vv - v.dot(&w) <= REL_TOL * vv {
            return vv.sqrt();
        }
        if simplex.iter().any(|s| (s - w).norm_squared() <= 1e-24) {
            return vv.sqrt();
        }
        simplex.push(w);
        let (p, keep) = closest_on_simplex(&simplex);
        simplex = keep.iter().map(|&i| simplex[i]).collect();
        if simplex.len() == 4 {
            return 0.0;
        }
        if p.norm_squared() >= vv {
            // No progress; v is already optimal to round-off.
            return vv.sqrt();
        }
        v = p;
    }
    v.norm()
}

/// Candidate separating axes for two boxes: their face normals and all
/// pairwise edge-direction cross products.
pub fn box_axes(a_axes: &[V3; 3], b_axes: &[V3; 3]) -> Vec<V3> {
    let mut out: Vec<V3> = Vec::with_capacity(15);
    out.extend(a_axes.iter().copied());
    out.extend(b_axes.iter().copied());
    for ea in a_axes {
        for eb in b_axes {
            let c = ea.cross(eb);
            let n = c.norm();
            if n > 1e-9 {
                out.push(c / n);
            }
        }
    }
    out
}

/// Penetration depth of two intersecting convex polytopes, evaluated over a
/// set of axes that contains every facet normal of their Minkowski difference.
/// For non-overlapping inputs the result is the negated largest gap, which
/// is only a lower bound on the distance.
pub fn penetration_depth(a: &[V3], b: &[V3], axes: &[V3]) -> f64 {
    let mut depth = f64::INFINITY;
    for axis in axes {
        let (amin, amax) = project(a, axis);
        let (bmin, bmax) = project(b, axis);
        let overlap = (amax - bmin).min(bmax - amin);
        depth = depth.min(overlap);
    }
    depth
}

fn project(verts: &[V3], axis: &V3) -> (f64, f64) {
    verts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        let d = v.dot(axis);
        (lo.min(d), hi.max(d))
    })
}
