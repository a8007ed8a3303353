//! Planar convex and concave hulls, and the "nooks" between them.
//!
//! The convex hull is Andrew's monotone chain. The concave hull is the
//! k-nearest-neighbour boundary walk of Moreira and Santos: starting from the
//! lowest point, repeatedly step to the neighbour (among the k nearest
//! unvisited points) that turns furthest right without crossing the boundary
//! built so far. k grows until the walk closes into a simple polygon that
//! contains every point; the convex hull is the fallback.

pub type P2 = [f64; 2];

const EPS: f64 = 1e-12;

fn sub(a: P2, b: P2) -> P2 {
    [a[0] - b[0], a[1] - b[1]]
}

fn cross(o: P2, a: P2, b: P2) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn dist2(a: P2, b: P2) -> f64 {
    let d = sub(a, b);
    d[0] * d[0] + d[1] * d[1]
}

/// Sorted, deduplicated copy of `points` (exact equality).
pub fn dedup_points(points: &[P2]) -> Vec<P2> {
    let mut v: Vec<P2> = points.iter().copied().filter(|p| p[0].is_finite() && p[1].is_finite()).collect();
    v.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    v.dedup();
    v
}

/// Convex hull vertices in counter-clockwise order, collinear points dropped.
pub fn convex_hull(points: &[P2]) -> Vec<P2> {
    let pts = dedup_points(points);
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<P2> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<P2> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

pub fn polygon_area(poly: &[P2]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    0.5 * (0..n).map(|i| {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        a[0] * b[1] - b[0] * a[1]
    })
    .sum::<f64>()
    .abs()
}

pub fn on_segment(p: P2, a: P2, b: P2) -> bool {
    let scale = 1.0 + dist2(a, b).sqrt();
    cross(a, b, p).abs() <= EPS * scale * scale
        && p[0] >= a[0].min(b[0]) - EPS
        && p[0] <= a[0].max(b[0]) + EPS
        && p[1] >= a[1].min(b[1]) - EPS
        && p[1] <= a[1].max(b[1]) + EPS
}

pub fn on_boundary(p: P2, poly: &[P2]) -> bool {
    let n = poly.len();
    (0..n).any(|i| on_segment(p, poly[i], poly[(i + 1) % n]))
}

/// Point-in-polygon by ray casting; boundary points count as inside.
pub fn point_in_polygon(p: P2, poly: &[P2]) -> bool {
    let n = poly.len();
    if n == 0 {
        return false;
    }
    if on_boundary(p, poly) {
        return true;
    }
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Strictly inside: inside and not on the boundary.
pub fn strictly_inside(p: P2, poly: &[P2]) -> bool {
    point_in_polygon(p, poly) && !on_boundary(p, poly)
}

/// Closed-segment intersection, including touching and collinear overlap.
fn segments_intersect(p1: P2, p2: P2, q1: P2, q2: P2) -> bool {
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    on_segment(p1, q1, q2) || on_segment(p2, q1, q2) || on_segment(q1, p1, p2) || on_segment(q2, p1, p2)
}

/// Counter-clockwise angle in `[0, 2pi)` from direction `from` to direction `to`.
fn ccw_angle(from: P2, to: P2) -> f64 {
    let a = (to[1].atan2(to[0]) - from[1].atan2(from[0])).rem_euclid(std::f64::consts::TAU);
    if a >= std::f64::consts::TAU {
        0.0
    } else {
        a
    }
}

/// One k-nearest-neighbour boundary walk. `None` when it fails for this `k`.
fn knn_walk(pts: &[P2], k: usize) -> Option<Vec<usize>> {
    let n = pts.len();
    let first = (0..n).min_by(|&a, &b| pts[a][1].total_cmp(&pts[b][1]).then(pts[a][0].total_cmp(&pts[b][0])))?;
    let mut available = vec![true; n];
    available[first] = false;
    let mut hull = vec![first];
    let mut current = first;
    // The walk runs counter-clockwise, so it "arrives" at the lowest point moving in +x.
    let mut back: P2 = [-1.0, 0.0];
    let mut step = 2;
    while (current != first || step == 2) && available.iter().any(|&a| a) {
        if step == 5 {
            available[first] = true;
        }
        let mut near: Vec<usize> = (0..n).filter(|&i| available[i]).collect();
        near.sort_by(|&a, &b| dist2(pts[a], pts[current]).total_cmp(&dist2(pts[b], pts[current])).then(a.cmp(&b)));
        near.truncate(k);
        // Furthest right turn first: smallest counter-clockwise angle from the back direction.
        let mut cands: Vec<(f64, usize)> = near
            .iter()
            .map(|&c| {
                let a = ccw_angle(back, sub(pts[c], pts[current]));
                (if a <= EPS { std::f64::consts::TAU } else { a }, c)
            })
            .collect();
        cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut chosen = None;
        for &(_, c) in &cands {
            let closing = c == first;
            // Edges (hull[i], hull[i+1]); skip the last one, which shares `current`,
            // and the first one when closing, which shares `first`.
            let m = hull.len();
            let lo = usize::from(closing);
            let crosses = m >= 3
                && (lo..m - 2).any(|i| segments_intersect(pts[current], pts[c], pts[hull[i]], pts[hull[i + 1]]));
            if !crosses {
                chosen = Some(c);
                break;
            }
        }
        let c = chosen?;
        back = sub(pts[current], pts[c]);
        current = c;
        available[c] = false;
        if c != first {
            hull.push(c);
        }
        step += 1;
        if step > 4 * n + 8 {
            return None;
        }
    }
    if current != first {
        return None;
    }
    let poly: Vec<P2> = hull.iter().map(|&i| pts[i]).collect();
    if poly.len() < 3 || !pts.iter().all(|&p| point_in_polygon(p, &poly)) {
        return None;
    }
    Some(hull)
}

/// Concave hull vertices in counter-clockwise order. Falls back to the convex
/// hull when no k yields a valid polygon.
pub fn concave_hull(points: &[P2], k_start: usize) -> Vec<P2> {
    let pts = dedup_points(points);
    if pts.len() < 4 {
        return convex_hull(&pts);
    }
    let convex = convex_hull(&pts);
    if convex.len() < 3 {
        return convex;
    }
    let mut k = k_start.max(3);
    while k < pts.len() {
        if let Some(h) = knn_walk(&pts, k) {
            return h.into_iter().map(|i| pts[i]).collect();
        }
        k += 1;
    }
    convex
}

#[derive(Debug, Clone, PartialEq)]
pub struct Nook {
    pub border_a: P2,
    pub border_b: P2,
    pub members: Vec<P2>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct HullDecomposition {
    pub convex_points: Vec<P2>,
    pub concave_points: Vec<P2>,
    pub nooks: Vec<Nook>,
}

/// Nooks are maximal runs (along the concave boundary) of concave-hull
/// vertices that are not on the convex hull; each is flanked by the two
/// neighbouring boundary vertices that are.
pub fn hull_decompose(points: &[P2]) -> HullDecomposition {
    let convex = convex_hull(points);
    if dedup_points(points).len() < 4 || convex.len() < 3 {
        return HullDecomposition { convex_points: convex.clone(), concave_points: convex, nooks: Vec::new() };
    }
    let concave = concave_hull(points, 3);
    let n = concave.len();
    let on_convex: Vec<bool> = concave.iter().map(|&p| on_boundary(p, &convex)).collect();
    let mut nooks = Vec::new();
    if let Some(start) = (0..n).find(|&i| on_convex[i]) {
        let mut i = 0;
        while i < n {
            let idx = (start + i) % n;
            if on_convex[idx] {
                i += 1;
                continue;
            }
            let a = (start + i + n - 1) % n;
            let mut members = Vec::new();
            while i < n && !on_convex[(start + i) % n] {
                members.push(concave[(start + i) % n]);
                i += 1;
            }
            let b = (start + i) % n;
            nooks.push(Nook { border_a: concave[a], border_b: concave[b], members });
        }
    }
    HullDecomposition { convex_points: convex, concave_points: concave, nooks }
}
