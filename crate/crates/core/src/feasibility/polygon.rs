//! Planar polygon helpers used by support regions.

/// Indices of the convex hull of `pts`, counter-clockwise, collinear points dropped.
/// Returns fewer than three indices for degenerate input (point or segment).
pub fn convex_hull_indices(pts: &[[f64; 2]]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..pts.len()).collect();
    idx.sort_by(|&a, &b| {
        pts[a][0]
            .partial_cmp(&pts[b][0])
            .unwrap()
            .then(pts[a][1].partial_cmp(&pts[b][1]).unwrap())
    });
    idx.dedup_by(|a, b| pts[*a] == pts[*b]);
    if idx.len() < 3 {
        return idx;
    }
    let scale = pts.iter().map(|p| p[0].abs().max(p[1].abs())).fold(0.0, f64::max).max(1e-300);
    let eps = 1e-14 * scale * scale;
    let cross = |o: usize, a: usize, b: usize| {
        (pts[a][0] - pts[o][0]) * (pts[b][1] - pts[o][1]) - (pts[a][1] - pts[o][1]) * (pts[b][0] - pts[o][0])
    };
    let mut lower: Vec<usize> = Vec::new();
    for &i in &idx {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], i) <= eps {
            lower.pop();
        }
        lower.push(i);
    }
    let mut upper: Vec<usize> = Vec::new();
    for &i in idx.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], i) <= eps {
            upper.pop();
        }
        upper.push(i);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

pub fn convex_hull(pts: &[[f64; 2]]) -> Vec<[f64; 2]> {
    convex_hull_indices(pts).into_iter().map(|i| pts[i]).collect()
}

/// Shoelace area (positive for counter-clockwise order).
pub fn signed_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        s += a[0] * b[1] - a[1] * b[0];
    }
    0.5 * s
}

pub fn area(poly: &[[f64; 2]]) -> f64 {
    signed_area(poly).abs()
}

/// Euclidean distance from `p` to segment `ab`.
pub fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (cx, cy) = (a[0] + t * dx - p[0], a[1] + t * dy - p[1]);
    (cx * cx + cy * cy).sqrt()
}

/// Outward unit normal and offset `(n, d)` of each edge of a CCW polygon,
/// so the interior is `n·x ≤ d`.
pub fn edge_halfplanes(poly: &[[f64; 2]]) -> Vec<([f64; 2], f64)> {
    let n = poly.len();
    (0..n)
        .filter_map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
            let len = (dx * dx + dy * dy).sqrt();
            (len > 0.0).then(|| {
                let nrm = [dy / len, -dx / len];
                (nrm, nrm[0] * a[0] + nrm[1] * a[1])
            })
        })
        .collect()
}

/// Whether `p` lies inside (or within `tol` of) a CCW convex polygon.
pub fn contains(poly: &[[f64; 2]], p: [f64; 2], tol: f64) -> bool {
    match poly.len() {
        0 => false,
        1 => ((p[0] - poly[0][0]).powi(2) + (p[1] - poly[0][1]).powi(2)).sqrt() <= tol,
        2 => segment_distance(p, poly[0], poly[1]) <= tol,
        _ => edge_halfplanes(poly)
            .iter()
            .all(|(n, d)| n[0] * p[0] + n[1] * p[1] - d <= tol),
    }
}

/// Distance from `p` to the polygon boundary (zero-area polygons treated as point sets).
pub fn boundary_distance(poly: &[[f64; 2]], p: [f64; 2]) -> f64 {
    match poly.len() {
        0 => f64::INFINITY,
        1 => ((p[0] - poly[0][0]).powi(2) + (p[1] - poly[0][1]).powi(2)).sqrt(),
        n => (0..n)
            .map(|i| segment_distance(p, poly[i], poly[(i + 1) % n]))
            .fold(f64::INFINITY, f64::min),
    }
}

/// Part of a convex polygon with `n·x ≤ d` (Sutherland-Hodgman step).
pub fn clip_halfplane(poly: &[[f64; 2]], n: [f64; 2], d: f64) -> Vec<[f64; 2]> {
    let side = |p: [f64; 2]| n[0] * p[0] + n[1] * p[1] - d;
    let mut out = Vec::with_capacity(poly.len() + 1);
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
        let (sa, sb) = (side(a), side(b));
        if sa <= 0.0 {
            out.push(a);
        }
        if (sa < 0.0 && sb > 0.0) || (sa > 0.0 && sb < 0.0) {
            let t = sa / (sa - sb);
            out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
        }
    }
    out
}
