//! Incremental 3-D convex hull.
//!
//! The same face/horizon bookkeeping backs polytope construction and the
//! expanding-polytope penetration query, which only differs in how it picks
//! the next point to insert.

use std::collections::HashMap;

use nalgebra::Vector3;

#[derive(Clone, Debug)]
pub(crate) struct HullFace {
    pub v: [usize; 3],
    pub normal: Vector3<f64>,
    pub offset: f64,
}

impl HullFace {
    fn new(points: &[Vector3<f64>], v: [usize; 3]) -> Option<Self> {
        let (a, b, c) = (points[v[0]], points[v[1]], points[v[2]]);
        let n = (b - a).cross(&(c - a));
        let len = n.norm();
        if !(len > 0.0) {
            return None;
        }
        let normal = n / len;
        Some(HullFace {
            v,
            normal,
            offset: normal.dot(&a),
        })
    }

    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        self.normal.dot(p) - self.offset
    }
}

pub(crate) struct IncrementalHull {
    pub points: Vec<Vector3<f64>>,
    pub faces: Vec<HullFace>,
    pub eps: f64,
}

impl IncrementalHull {
    /// Seed with a tetrahedron; `None` when the four points are (nearly) coplanar.
    pub fn from_tetrahedron(points: Vec<Vector3<f64>>, eps: f64) -> Option<Self> {
        debug_assert_eq!(points.len(), 4);
        let centroid = points.iter().sum::<Vector3<f64>>() / 4.0;
        let mut faces = Vec::with_capacity(4);
        for tri in [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]] {
            let mut f = HullFace::new(&points, tri)?;
            if f.signed_distance(&centroid) > 0.0 {
                f = HullFace::new(&points, [tri[0], tri[2], tri[1]])?;
            }
            if f.signed_distance(&centroid) > -eps {
                return None;
            }
            faces.push(f);
        }
        Some(IncrementalHull { points, faces, eps })
    }

    /// Insert a point. Returns false when it lies inside (or on) the hull.
    pub fn add_point(&mut self, p: Vector3<f64>) -> bool {
        let visible: Vec<bool> = self.faces.iter().map(|f| f.signed_distance(&p) > self.eps).collect();
        if !visible.iter().any(|&v| v) {
            return false;
        }
        // Directed edges of visible faces; an edge whose reverse is not also
        // visible lies on the horizon.
        let mut edges: HashMap<(usize, usize), ()> = HashMap::new();
        for (f, _) in self.faces.iter().zip(&visible).filter(|(_, &v)| v) {
            for k in 0..3 {
                edges.insert((f.v[k], f.v[(k + 1) % 3]), ());
            }
        }
        let mut horizon: Vec<(usize, usize)> = Vec::new();
        for (f, _) in self.faces.iter().zip(&visible).filter(|(_, &v)| v) {
            for k in 0..3 {
                let e = (f.v[k], f.v[(k + 1) % 3]);
                if !edges.contains_key(&(e.1, e.0)) {
                    horizon.push(e);
                }
            }
        }
        let idx = self.points.len();
        self.points.push(p);
        let mut kept: Vec<HullFace> = self
            .faces
            .drain(..)
            .zip(visible)
            .filter_map(|(f, v)| (!v).then_some(f))
            .collect();
        for (a, b) in horizon {
            if let Some(f) = HullFace::new(&self.points, [a, b, idx]) {
                kept.push(f);
            }
        }
        self.faces = kept;
        true
    }
}

/// Result of [`convex_hull`]: the hull vertices (a subset of the input, in
/// first-seen order) and outward triangles indexing into them.
#[derive(Clone, Debug)]
pub(crate) enum Hull {
    Solid {
        vertices: Vec<Vector3<f64>>,
        faces: Vec<HullFace>,
    },
    /// All points coplanar: a convex polygon (counter-clockwise about `normal`).
    Planar {
        vertices: Vec<Vector3<f64>>,
        normal: Vector3<f64>,
    },
    /// Fewer than three affinely independent points.
    Degenerate,
}

pub(crate) fn scale_of(points: &[Vector3<f64>]) -> f64 {
    points.iter().map(|p| p.amax()).fold(0.0, f64::max).max(f64::MIN_POSITIVE)
}

pub(crate) fn convex_hull(points: &[Vector3<f64>]) -> Hull {
    if points.len() < 3 {
        return Hull::Degenerate;
    }
    let scale = scale_of(points);
    let eps = 1e-12 * scale;

    let i0 = 0;
    let i1 = match farthest(points, |p| (p - points[i0]).norm()) {
        Some((i, d)) if d > eps => i,
        _ => return Hull::Degenerate,
    };
    let dir = (points[i1] - points[i0]).normalize();
    let i2 = match farthest(points, |p| {
        let r = p - points[i0];
        (r - dir * dir.dot(&r)).norm()
    }) {
        Some((i, d)) if d > eps => i,
        _ => return Hull::Degenerate,
    };
    let normal = (points[i1] - points[i0]).cross(&(points[i2] - points[i0])).normalize();
    let i3 = farthest(points, |p| normal.dot(&(p - points[i0])).abs());
    let i3 = match i3 {
        Some((i, d)) if d > 1e-9 * scale => i,
        _ => return planar_hull(points, normal),
    };

    let seed = vec![points[i0], points[i1], points[i2], points[i3]];
    let mut hull = match IncrementalHull::from_tetrahedron(seed, eps) {
        Some(h) => h,
        None => return planar_hull(points, normal),
    };
    let seeded = [i0, i1, i2, i3];
    for (i, p) in points.iter().enumerate() {
        if !seeded.contains(&i) {
            hull.add_point(*p);
        }
    }

    // Re-index to the vertices actually referenced by faces.
    let mut remap: HashMap<usize, usize> = HashMap::new();
    let mut vertices = Vec::new();
    let mut used: Vec<usize> = hull.faces.iter().flat_map(|f| f.v).collect();
    used.sort_unstable();
    used.dedup();
    for old in used {
        remap.insert(old, vertices.len());
        vertices.push(hull.points[old]);
    }
    let faces = hull
        .faces
        .iter()
        .map(|f| HullFace {
            v: [remap[&f.v[0]], remap[&f.v[1]], remap[&f.v[2]]],
            normal: f.normal,
            offset: f.offset,
        })
        .collect();
    Hull::Solid { vertices, faces }
}

fn farthest(points: &[Vector3<f64>], f: impl Fn(&Vector3<f64>) -> f64) -> Option<(usize, f64)> {
    points
        .iter()
        .enumerate()
        .map(|(i, p)| (i, f(p)))
        .fold(None, |best, (i, d)| match best {
            Some((_, bd)) if bd >= d => best,
            _ => Some((i, d)),
        })
}

/// 2-D hull of coplanar points (Andrew's monotone chain in an in-plane basis).
fn planar_hull(points: &[Vector3<f64>], normal: Vector3<f64>) -> Hull {
    let origin = points[0];
    let seed = if normal.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let u = (seed - normal * normal.dot(&seed)).normalize();
    let w = normal.cross(&u);
    let flat: Vec<[f64; 2]> = points
        .iter()
        .map(|p| {
            let r = p - origin;
            [u.dot(&r), w.dot(&r)]
        })
        .collect();
    let idx = crate::feasibility::polygon::convex_hull_indices(&flat);
    if idx.len() < 3 {
        return Hull::Degenerate;
    }
    Hull::Planar {
        vertices: idx.iter().map(|&i| points[i]).collect(),
        normal,
    }
}
