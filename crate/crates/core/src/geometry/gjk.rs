//! GJK minimum distance between two convex point hulls.
//!
//! The closest point of the current simplex to the origin is found by
//! enumerating all sub-simplices and solving the small barycentric system of
//! each one. With at most four vertices that is 15 candidates per iteration,
//! which keeps the routine free of the case analysis of Johnson's
//! sub-algorithm and robust to degenerate simplices.

use nalgebra::{Matrix3, Vector3};

const MAX_ITERATIONS: usize = 128;
const REL_TOL: f64 = 1e-12;
const ABS_TOL_SQ: f64 = 1e-26;

#[derive(Debug, Clone, Copy)]
pub struct GjkOutput {
    pub distance: f64,
    pub point_a: Vector3<f64>,
    pub point_b: Vector3<f64>,
    /// True when the origin was found inside the Minkowski difference.
    pub intersecting: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
struct SupportPoint {
    w: Vector3<f64>,
    a: Vector3<f64>,
    b: Vector3<f64>,
}

/// Vertex of `hull` maximising `dir`; the first maximiser wins.
pub fn support(hull: &[Vector3<f64>], dir: &Vector3<f64>) -> Vector3<f64> {
    let mut best = hull[0];
    let mut best_dot = best.dot(dir);
    for v in &hull[1..] {
        let d = v.dot(dir);
        if d > best_dot {
            best_dot = d;
            best = *v;
        }
    }
    best
}

fn minkowski_support(a: &[Vector3<f64>], b: &[Vector3<f64>], dir: &Vector3<f64>) -> SupportPoint {
    let pa = support(a, dir);
    let pb = support(b, &-dir);
    SupportPoint { w: pa - pb, a: pa, b: pb }
}

/// Closest point to the origin of the convex hull of `pts`, with barycentric
/// weights over `pts` (zero for unused vertices).
fn closest_on_simplex(pts: &[SupportPoint]) -> (Vector3<f64>, [f64; 4]) {
    let n = pts.len();
    let mut best: Option<(f64, Vector3<f64>, [f64; 4])> = None;
    for mask in 1u32..(1 << n) {
        let idx: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let Some(lambdas) = affine_projection(pts, &idx) else {
            continue;
        };
        if lambdas.iter().any(|&l| l < -1e-12) {
            continue;
        }
        let mut full = [0.0; 4];
        let mut p = Vector3::zeros();
        for (k, &i) in idx.iter().enumerate() {
            let l = lambdas[k].max(0.0);
            full[i] = l;
            p += pts[i].w * l;
        }
        let norm_sq = p.norm_squared();
        if best.as_ref().map_or(true, |(d, _, _)| norm_sq < *d) {
            best = Some((norm_sq, p, full));
        }
    }
    // The single-vertex subsets are always feasible, so `best` is set.
    let (_, p, l) = best.expect("non-empty simplex");
    (p, l)
}

/// Barycentric coordinates of the origin's projection onto the affine hull of
/// the selected vertices, or `None` when the selection is degenerate.
fn affine_projection(pts: &[SupportPoint], idx: &[usize]) -> Option<Vec<f64>> {
    let p0 = pts[idx[0]].w;
    let m = idx.len() - 1;
    if m == 0 {
        return Some(vec![1.0]);
    }
    let edges: Vec<Vector3<f64>> = idx[1..].iter().map(|&i| pts[i].w - p0).collect();
    let mut g = Matrix3::<f64>::identity();
    let mut rhs = Vector3::<f64>::zeros();
    let mut scale: f64 = 0.0;
    for r in 0..m {
        for c in 0..m {
            g[(r, c)] = edges[r].dot(&edges[c]);
        }
        rhs[r] = -edges[r].dot(&p0);
        scale = scale.max(g[(r, r)]);
    }
    let mu = match m {
        1 => {
            if g[(0, 0)] <= 1e-30 {
                return None;
            }
            vec![rhs[0] / g[(0, 0)]]
        }
        2 => {
            let det = g[(0, 0)] * g[(1, 1)] - g[(0, 1)] * g[(1, 0)];
            if det.abs() <= 1e-14 * scale * scale {
                return None;
            }
            vec![
                (rhs[0] * g[(1, 1)] - g[(0, 1)] * rhs[1]) / det,
                (g[(0, 0)] * rhs[1] - g[(1, 0)] * rhs[0]) / det,
            ]
        }
        3 => {
            let det = g.determinant();
            if det.abs() <= 1e-14 * scale * scale * scale {
                return None;
            }
            let sol = g.lu().solve(&rhs)?;
            vec![sol[0], sol[1], sol[2]]
        }
        _ => unreachable!("simplex has at most four vertices"),
    };
    let mut out = Vec::with_capacity(m + 1);
    out.push(1.0 - mu.iter().sum::<f64>());
    out.extend(mu);
    Some(out)
}

/// Minimum distance between the convex hulls of `a` and `b`.
pub fn gjk_distance(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> GjkOutput {
    assert!(!a.is_empty() && !b.is_empty(), "hulls must be non-empty");
    let mut simplex: Vec<SupportPoint> = Vec::with_capacity(4);
    let first = SupportPoint {
        w: a[0] - b[0],
        a: a[0],
        b: b[0],
    };
    simplex.push(first);
    let mut v = first.w;
    let mut weights = [1.0, 0.0, 0.0, 0.0];
    let mut intersecting = false;
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let v_sq = v.norm_squared();
        if v_sq <= ABS_TOL_SQ {
            intersecting = true;
            break;
        }
        let s = minkowski_support(a, b, &-v);
        // No further progress possible along -v.
        if v_sq - v.dot(&s.w) <= REL_TOL * v_sq {
            break;
        }
        if simplex.iter().any(|p| (p.w - s.w).norm_squared() <= ABS_TOL_SQ) {
            break;
        }
        simplex.push(s);
        let (nv, lambdas) = closest_on_simplex(&simplex);
        if nv.norm_squared() >= v_sq {
            // Numerical stall: keep the previous, better estimate.
            simplex.pop();
            break;
        }
        v = nv;
        let mut kept = Vec::with_capacity(4);
        let mut kept_w = [0.0; 4];
        for (i, p) in simplex.iter().enumerate() {
            if lambdas[i] > 0.0 {
                kept_w[kept.len()] = lambdas[i];
                kept.push(*p);
            }
        }
        simplex = kept;
        weights = kept_w;
        if simplex.len() == 4 {
            intersecting = true;
            break;
        }
    }

    let mut pa = Vector3::zeros();
    let mut pb = Vector3::zeros();
    let total: f64 = weights[..simplex.len()].iter().sum();
    for (p, w) in simplex.iter().zip(weights.iter()) {
        pa += p.a * (w / total);
        pb += p.b * (w / total);
    }
    let distance = if intersecting { 0.0 } else { (pa - pb).norm() };
    GjkOutput {
        distance,
        point_a: pa,
        point_b: pb,
        intersecting,
        iterations,
    }
}
