//! Convex polytopes, proximity queries (GJK distance, EPA penetration),
//! surface projection and tangent-contact targets.

pub mod contact;
mod environment;
mod gjk;
pub(crate) mod hull;

pub use contact::{tangent_contact_target, TangentContactTarget};
pub use environment::{Environment, EnvironmentDoc};
pub use gjk::{proximity, ProximityResult, ProximityStatus};

use nalgebra::{Isometry3, Point3, Vector3};
use thiserror::Error;

use hull::{convex_hull, Hull};

/// Separation at or below this magnitude is reported as touching (m).
pub const TOUCH_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("polytope needs at least 3 affinely independent vertices")]
    Degenerate,
    #[error("non-finite vertex coordinate")]
    NonFinite,
    #[error("cannot read `{0}`: {1}")]
    Io(String, std::io::Error),
    #[error("malformed environment JSON: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Attachment {
    World,
    /// Vertices are expressed in this body's frame.
    Body(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Face {
    pub indices: [usize; 3],
    pub normal: Vector3<f64>,
    pub offset: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvexPolytope {
    pub name: String,
    pub vertices: Vec<Vector3<f64>>,
    pub faces: Vec<Face>,
    pub attachment: Attachment,
    /// Flat patch: faces come in back-to-back pairs sharing the patch plane.
    pub degenerate: bool,
}

impl ConvexPolytope {
    pub fn from_points(name: &str, points: &[Vector3<f64>], attachment: Attachment) -> Result<Self, GeometryError> {
        if points.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(GeometryError::NonFinite);
        }
        match convex_hull(points) {
            Hull::Solid { vertices, faces } => Ok(ConvexPolytope {
                name: name.to_string(),
                vertices,
                faces: faces
                    .into_iter()
                    .map(|f| Face {
                        indices: f.v,
                        normal: f.normal,
                        offset: f.offset,
                    })
                    .collect(),
                attachment,
                degenerate: false,
            }),
            Hull::Planar { vertices, normal } => {
                let mut faces = Vec::new();
                let offset = normal.dot(&vertices[0]);
                for i in 1..vertices.len() - 1 {
                    faces.push(Face {
                        indices: [0, i, i + 1],
                        normal,
                        offset,
                    });
                    faces.push(Face {
                        indices: [0, i + 1, i],
                        normal: -normal,
                        offset: -offset,
                    });
                }
                Ok(ConvexPolytope {
                    name: name.to_string(),
                    vertices,
                    faces,
                    attachment,
                    degenerate: true,
                })
            }
            Hull::Degenerate => Err(GeometryError::Degenerate),
        }
    }

    /// Axis-aligned box centered at `center` with full side lengths `size`.
    pub fn cuboid(name: &str, center: Vector3<f64>, size: Vector3<f64>, attachment: Attachment) -> Self {
        let h = size / 2.0;
        let mut pts = Vec::with_capacity(8);
        for sx in [-1.0, 1.0] {
            for sy in [-1.0, 1.0] {
                for sz in [-1.0, 1.0] {
                    pts.push(center + Vector3::new(sx * h.x, sy * h.y, sz * h.z));
                }
            }
        }
        Self::from_points(name, &pts, attachment).expect("box with positive extents")
    }

    /// Same polytope with vertices and face planes mapped through `pose`.
    pub fn transformed(&self, pose: &Isometry3<f64>) -> Self {
        let vertices: Vec<Vector3<f64>> = self
            .vertices
            .iter()
            .map(|v| (pose * Point3::from(*v)).coords)
            .collect();
        let faces = self
            .faces
            .iter()
            .map(|f| {
                let normal = pose.rotation * f.normal;
                Face {
                    indices: f.indices,
                    normal,
                    offset: normal.dot(&vertices[f.indices[0]]),
                }
            })
            .collect();
        ConvexPolytope {
            name: self.name.clone(),
            vertices,
            faces,
            attachment: Attachment::World,
            degenerate: self.degenerate,
        }
    }

    pub fn centroid(&self) -> Vector3<f64> {
        self.vertices.iter().sum::<Vector3<f64>>() / self.vertices.len() as f64
    }

    /// Index of the vertex furthest along `dir` (first one on ties).
    pub fn support_index(&self, dir: &Vector3<f64>) -> usize {
        let mut best = 0;
        let mut best_d = f64::NEG_INFINITY;
        for (i, v) in self.vertices.iter().enumerate() {
            let d = v.dot(dir);
            if d > best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    /// Largest signed face-plane distance of `p` (≤ 0 inside).
    pub fn max_face_distance(&self, p: &Vector3<f64>) -> f64 {
        self.faces
            .iter()
            .map(|f| f.normal.dot(p) - f.offset)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Checks outward normals and convexity (every vertex behind every face).
    pub fn is_valid(&self, tol: f64) -> bool {
        let c = self.centroid();
        self.faces.iter().all(|f| {
            (self.degenerate || f.normal.dot(&c) - f.offset < 0.0)
                && self.vertices.iter().all(|v| f.normal.dot(v) - f.offset <= tol)
        })
    }
}

/// Closest boundary point of `poly` to `x` and the outward normal there.
///
/// Outside points use the closest point over all faces; when it falls on an
/// edge or vertex the normal is the normalized offset direction. Inside
/// points project onto the nearest face plane.
pub fn project_to_surface(poly: &ConvexPolytope, x: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let inside = !poly.degenerate && poly.max_face_distance(x) <= 0.0;
    if inside {
        let mut best: Option<(f64, &Face)> = None;
        for f in &poly.faces {
            let d = f.offset - f.normal.dot(x);
            if best.map_or(true, |(bd, _)| d < bd) {
                best = Some((d, f));
            }
        }
        let (d, f) = best.expect("polytope has faces");
        return (x + f.normal * d, f.normal);
    }
    let mut best: Option<(f64, Vector3<f64>, bool, &Face)> = None;
    for f in &poly.faces {
        let [a, b, c] = f.indices.map(|i| poly.vertices[i]);
        let (p, interior) = closest_point_on_triangle(x, &a, &b, &c);
        let d = (x - p).norm_squared();
        if best.as_ref().map_or(true, |(bd, ..)| d < *bd) {
            best = Some((d, p, interior, f));
        }
    }
    let (d, p, interior, f) = best.expect("polytope has faces");
    if interior || d == 0.0 {
        // A point lying exactly on a face plane projects to itself.
        (p, f.normal)
    } else {
        (p, (x - p) / d.sqrt())
    }
}

/// Closest point of triangle `abc` to `p` and whether it lies strictly inside the face.
pub(crate) fn closest_point_on_triangle(
    p: &Vector3<f64>,
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    c: &Vector3<f64>,
) -> (Vector3<f64>, bool) {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (*a, false);
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (*b, false);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (a + ab * v, false);
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (*c, false);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (a + ac * w, false);
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (b + (c - b) * w, false);
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (a + ab * v + ac * w, true)
}

