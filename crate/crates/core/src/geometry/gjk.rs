//! GJK distance and EPA penetration depth on the Minkowski difference `A − B`.

use nalgebra::{DMatrix, DVector, Vector3};

use super::hull::{convex_hull, Hull, IncrementalHull};
use super::{ConvexPolytope, TOUCH_TOLERANCE};

const MAX_ITERATIONS: usize = 128;
/// GJK stops once the duality gap on the distance drops below this (m).
const GJK_TOLERANCE: f64 = 1e-10;
/// EPA stops once a face cannot be pushed out further than this (m).
const EPA_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProximityStatus {
    Separated,
    Touching,
    Penetrating,
    /// The iteration cap was hit on a degenerate simplex; callers treat it as touching.
    NumericFailure,
}

#[derive(Clone, Debug)]
pub struct ProximityResult {
    pub status: ProximityStatus,
    /// Separation distance (separated/touching) or penetration depth (penetrating), ≥ 0.
    pub distance: f64,
    pub witness_a: Vector3<f64>,
    pub witness_b: Vector3<f64>,
    /// Unit normal pointing from A toward B.
    pub normal: Vector3<f64>,
}

impl ProximityResult {
    /// Signed gap: positive when separated, negative when penetrating.
    pub fn signed_distance(&self) -> f64 {
        match self.status {
            ProximityStatus::Penetrating => -self.distance,
            _ => self.distance,
        }
    }

    pub fn is_penetrating(&self) -> bool {
        self.status == ProximityStatus::Penetrating
    }
}

#[derive(Clone, Copy, Debug)]
struct SupportPoint {
    w: Vector3<f64>,
    a: Vector3<f64>,
    b: Vector3<f64>,
}

fn support(a: &ConvexPolytope, b: &ConvexPolytope, dir: &Vector3<f64>) -> SupportPoint {
    let pa = a.vertices[a.support_index(dir)];
    let pb = b.vertices[b.support_index(&-dir)];
    SupportPoint { w: pa - pb, a: pa, b: pb }
}

/// Closest point to the origin on the convex hull of `pts` (at most four),
/// by exhaustive search over sub-simplices. Returns barycentric weights.
fn closest_on_simplex(pts: &[SupportPoint]) -> Option<(Vector3<f64>, Vec<(usize, f64)>)> {
    let n = pts.len();
    let mut best: Option<(f64, Vector3<f64>, Vec<(usize, f64)>)> = None;
    for mask in 1u32..(1 << n) {
        let idx: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let Some(lambda) = affine_min_norm(pts, &idx) else {
            continue;
        };
        if lambda.iter().any(|&l| l < -1e-12) {
            continue;
        }
        let p: Vector3<f64> = idx.iter().zip(&lambda).map(|(&i, &l)| pts[i].w * l).sum();
        let d = p.norm_squared();
        let better = match &best {
            None => true,
            Some((bd, _, bl)) => d < *bd * (1.0 - 1e-12) || (d <= *bd && idx.len() < bl.len()),
        };
        if better {
            best = Some((d, p, idx.into_iter().zip(lambda).collect()));
        }
    }
    best.map(|(_, p, l)| (p, l))
}

/// Affine weights of the minimum-norm point in the affine hull of `pts[idx]`.
fn affine_min_norm(pts: &[SupportPoint], idx: &[usize]) -> Option<Vec<f64>> {
    let k = idx.len();
    if k == 1 {
        return Some(vec![1.0]);
    }
    let p0 = pts[idx[0]].w;
    let edges: Vec<Vector3<f64>> = idx[1..].iter().map(|&i| pts[i].w - p0).collect();
    let m = k - 1;
    let mut g = DMatrix::zeros(m, m);
    let mut rhs = DVector::zeros(m);
    let mut scale: f64 = 0.0;
    for r in 0..m {
        for c in 0..m {
            g[(r, c)] = edges[r].dot(&edges[c]);
        }
        rhs[r] = -edges[r].dot(&p0);
        scale = scale.max(g[(r, r)]);
    }
    let det = g.determinant();
    if !(det.abs() > 1e-20 * scale.powi(m as i32)) {
        return None;
    }
    let mu = g.lu().solve(&rhs)?;
    let mut lambda = vec![1.0 - mu.sum()];
    lambda.extend(mu.iter());
    Some(lambda)
}

/// Distance or penetration between two world-resolved polytopes.
pub fn proximity(a: &ConvexPolytope, b: &ConvexPolytope) -> ProximityResult {
    let mut dir = a.centroid() - b.centroid();
    if dir.norm_squared() == 0.0 {
        dir = Vector3::x();
    }
    let mut simplex = vec![support(a, b, &-dir)];
    let mut v = simplex[0].w;
    let mut weights = vec![(0usize, 1.0)];

    for _ in 0..MAX_ITERATIONS {
        let vn = v.norm();
        if vn <= TOUCH_TOLERANCE {
            return penetration(a, b).unwrap_or_else(|| separated(&simplex, &weights, v));
        }
        let w = support(a, b, &-v);
        // Upper bound ‖v‖ minus lower bound v·w/‖v‖.
        if vn - v.dot(&w.w) / vn < GJK_TOLERANCE || simplex.iter().any(|s| s.w == w.w) {
            return separated(&simplex, &weights, v);
        }
        simplex.push(w);
        let Some((nv, nw)) = closest_on_simplex(&simplex) else {
            break;
        };
        if nv.norm() >= vn {
            // No progress: the previous estimate is optimal within precision.
            simplex.pop();
            return separated(&simplex, &weights, v);
        }
        simplex = nw.iter().map(|&(i, _)| simplex[i]).collect();
        weights = nw.iter().enumerate().map(|(k, &(_, l))| (k, l)).collect();
        v = nv;
    }
    if v.norm() <= TOUCH_TOLERANCE {
        return penetration(a, b).unwrap_or_else(|| separated(&simplex, &weights, v));
    }
    let mut r = separated(&simplex, &weights, v);
    r.status = ProximityStatus::NumericFailure;
    r
}

fn separated(simplex: &[SupportPoint], weights: &[(usize, f64)], v: Vector3<f64>) -> ProximityResult {
    let wa: Vector3<f64> = weights.iter().map(|&(i, l)| simplex[i].a * l).sum();
    let wb: Vector3<f64> = weights.iter().map(|&(i, l)| simplex[i].b * l).sum();
    let d = v.norm();
    ProximityResult {
        status: if d <= TOUCH_TOLERANCE {
            ProximityStatus::Touching
        } else {
            ProximityStatus::Separated
        },
        distance: d,
        witness_a: wa,
        witness_b: wb,
        normal: -v / d,
    }
}

/// Expanding-polytope search for the minimum translation when the origin
/// lies in `A − B`.
fn penetration(a: &ConvexPolytope, b: &ConvexPolytope) -> Option<ProximityResult> {
    let mut pts: Vec<SupportPoint> = Vec::new();
    let dirs = [
        Vector3::x(),
        -Vector3::x(),
        Vector3::y(),
        -Vector3::y(),
        Vector3::z(),
        -Vector3::z(),
        Vector3::new(1.0, 1.0, 1.0),
        Vector3::new(-1.0, -1.0, -1.0),
        Vector3::new(1.0, -1.0, 1.0),
        Vector3::new(-1.0, 1.0, -1.0),
        Vector3::new(1.0, 1.0, -1.0),
        Vector3::new(-1.0, -1.0, 1.0),
        Vector3::new(-1.0, 1.0, 1.0),
        Vector3::new(1.0, -1.0, -1.0),
    ];
    for d in dirs {
        let s = support(a, b, &d);
        if !pts.iter().any(|p| p.w == s.w) {
            pts.push(s);
        }
    }
    expand(a, b, pts).or_else(|| exhaustive_penetration(a, b))
}

fn expand(a: &ConvexPolytope, b: &ConvexPolytope, mut pts: Vec<SupportPoint>) -> Option<ProximityResult> {
    let ws: Vec<Vector3<f64>> = pts.iter().map(|p| p.w).collect();
    let scale = super::hull::scale_of(&ws);
    let eps = 1e-12 * scale;
    // Seed a tetrahedron from the direction samples, then insert the rest.
    let (vertices, _) = match convex_hull(&ws) {
        Hull::Solid { vertices, faces } => (vertices, faces),
        _ => return None,
    };
    let reorder: Vec<SupportPoint> = vertices
        .iter()
        .map(|v| *pts.iter().find(|p| p.w == *v).expect("hull vertex from input"))
        .collect();
    pts = reorder;
    let seed = pick_tetrahedron(&pts)?;
    let mut order: Vec<usize> = seed.to_vec();
    order.extend((0..pts.len()).filter(|i| !seed.contains(i)));
    let mut sp: Vec<SupportPoint> = order.iter().map(|&i| pts[i]).collect();
    let mut hull = IncrementalHull::from_tetrahedron(sp[..4].iter().map(|p| p.w).collect(), eps)?;
    let mut tracked = sp[..4].to_vec();
    for p in sp.drain(4..) {
        if hull.add_point(p.w) {
            tracked.push(p);
        }
    }
    // Origin must be enclosed for the expansion to be meaningful.
    if hull.faces.iter().any(|f| f.offset < -eps) {
        return None;
    }

    for _ in 0..MAX_ITERATIONS {
        let (fi, face) = hull
            .faces
            .iter()
            .enumerate()
            .min_by(|x, y| x.1.offset.partial_cmp(&y.1.offset).unwrap())?;
        let n = face.normal;
        let s = support(a, b, &n);
        let gain = n.dot(&s.w) - face.offset;
        if gain < EPA_TOLERANCE || tracked.iter().any(|t| t.w == s.w) {
            return Some(finish(&hull, fi, &tracked));
        }
        if !hull.add_point(s.w) {
            return Some(finish(&hull, fi, &tracked));
        }
        tracked.push(s);
    }
    let (fi, _) = hull
        .faces
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.offset.partial_cmp(&y.1.offset).unwrap())?;
    let mut r = finish(&hull, fi, &tracked);
    r.status = ProximityStatus::NumericFailure;
    Some(r)
}

fn pick_tetrahedron(pts: &[SupportPoint]) -> Option<[usize; 4]> {
    let n = pts.len();
    if n < 4 {
        return None;
    }
    let mut best = None;
    let mut best_vol = 0.0;
    // Small candidate sets: exhaustive search for the largest tetrahedron.
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                for l in k + 1..n {
                    let vol = (pts[j].w - pts[i].w)
                        .cross(&(pts[k].w - pts[i].w))
                        .dot(&(pts[l].w - pts[i].w))
                        .abs();
                    if vol > best_vol {
                        best_vol = vol;
                        best = Some([i, j, k, l]);
                    }
                }
            }
        }
    }
    best
}

fn finish(hull: &IncrementalHull, face: usize, tracked: &[SupportPoint]) -> ProximityResult {
    let f = &hull.faces[face];
    let depth = f.offset.max(0.0);
    let target = f.normal * f.offset;
    let lookup = |i: usize| tracked.iter().find(|t| t.w == hull.points[i]).copied().expect("tracked support point");
    let [p0, p1, p2] = f.v.map(lookup);
    let (l0, l1, l2) = barycentric(&target, &p0.w, &p1.w, &p2.w);
    let wa = p0.a * l0 + p1.a * l1 + p2.a * l2;
    let wb = p0.b * l0 + p1.b * l1 + p2.b * l2;
    ProximityResult {
        status: if depth <= TOUCH_TOLERANCE {
            ProximityStatus::Touching
        } else {
            ProximityStatus::Penetrating
        },
        distance: depth,
        witness_a: wa,
        witness_b: wb,
        normal: f.normal,
    }
}

fn barycentric(p: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> (f64, f64, f64) {
    let v0 = b - a;
    let v1 = c - a;
    let v2 = p - a;
    let d00 = v0.dot(&v0);
    let d01 = v0.dot(&v1);
    let d11 = v1.dot(&v1);
    let d20 = v2.dot(&v0);
    let d21 = v2.dot(&v1);
    let denom = d00 * d11 - d01 * d01;
    if denom.abs() < 1e-300 {
        return (1.0, 0.0, 0.0);
    }
    let v = (d11 * d20 - d01 * d21) / denom;
    let w = (d00 * d21 - d01 * d20) / denom;
    (1.0 - v - w, v, w)
}

/// Fallback when the sampled seed polytope does not enclose the origin:
/// hull the full vertex-difference set and take its nearest face.
fn exhaustive_penetration(a: &ConvexPolytope, b: &ConvexPolytope) -> Option<ProximityResult> {
    let mut pts = Vec::with_capacity(a.vertices.len() * b.vertices.len());
    for pa in &a.vertices {
        for pb in &b.vertices {
            let w = pa - pb;
            if !pts.iter().any(|p: &SupportPoint| p.w == w) {
                pts.push(SupportPoint { w, a: *pa, b: *pb });
            }
        }
    }
    let ws: Vec<Vector3<f64>> = pts.iter().map(|p| p.w).collect();
    let Hull::Solid { vertices, faces } = convex_hull(&ws) else {
        return None;
    };
    let scale = super::hull::scale_of(&ws);
    if faces.iter().any(|f| f.offset < -1e-12 * scale) {
        return None;
    }
    let f = faces
        .iter()
        .min_by(|x, y| x.offset.partial_cmp(&y.offset).unwrap())
        .expect("solid hull has faces");
    let find = |v: &Vector3<f64>| *pts.iter().find(|p| p.w == *v).unwrap();
    let [p0, p1, p2] = f.v.map(|i| find(&vertices[i]));
    let target = f.normal * f.offset;
    let (l0, l1, l2) = barycentric(&target, &p0.w, &p1.w, &p2.w);
    let depth = f.offset.max(0.0);
    Some(ProximityResult {
        status: if depth <= TOUCH_TOLERANCE {
            ProximityStatus::Touching
        } else {
            ProximityStatus::Penetrating
        },
        distance: depth,
        witness_a: p0.a * l0 + p1.a * l1 + p2.a * l2,
        witness_b: p0.b * l0 + p1.b * l1 + p2.b * l2,
        normal: f.normal,
    })
}
