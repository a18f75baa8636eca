use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use super::contact::{resolve, ContactPoint};
use super::FeasibilityError;
use crate::geometry::hull::{convex_hull, Hull};
use crate::kinematics::{forward_kinematics, RobotModel};
use crate::optim::{solve_lp, LinearProgram};

/// Singular values below this fraction of the largest are treated as zero.
pub const PINV_CUTOFF: f64 = 1e-8;
/// Limbs longer than this would need more than a million torque corners.
pub const MAX_CHAIN_JOINTS: usize = 20;

/// Actuation-consistent contact forces of one limb.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForcePolytope {
    /// Body of the generating contact.
    pub contact: String,
    /// World position of the contact point.
    pub origin: Vector3<f64>,
    /// `(Jᵀ)†τ` for every torque corner, bit k of the index selecting the
    /// upper bound of the k-th limb coordinate.
    pub vertices: Vec<Vector3<f64>>,
    /// Vertices of the convex hull of `vertices`.
    pub hull: Vec<Vector3<f64>>,
    /// Whether `Jᵀf` reproduces the corner torque for each entry of `vertices`.
    pub consistent: Vec<bool>,
    pub rank: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl ForcePolytope {
    /// Vertices whose torques are reproduced by `Jᵀf` (least-squares consistent).
    pub fn consistent_vertices(&self) -> Vec<Vector3<f64>> {
        self.vertices
            .iter()
            .zip(&self.consistent)
            .filter(|(_, &ok)| ok)
            .map(|(v, _)| *v)
            .collect()
    }

    /// Whether `f` lies in the convex hull within `tol` (1-norm), decided by an LP
    /// over convex combinations of the hull vertices.
    pub fn contains(&self, f: &Vector3<f64>, tol: f64) -> bool {
        let k = self.hull.len();
        if k == 0 {
            return false;
        }
        // Variables: weights w (k), then slacks s⁺, s⁻ (3 each).
        let n = k + 6;
        let mut c = DVector::zeros(n);
        c.rows_mut(k, 6).fill(1.0);
        let mut a = DMatrix::zeros(4, n);
        let mut b = DVector::zeros(4);
        for (j, v) in self.hull.iter().enumerate() {
            for r in 0..3 {
                a[(r, j)] = v[r];
            }
            a[(3, j)] = 1.0;
        }
        for r in 0..3 {
            a[(r, k + r)] = 1.0;
            a[(r, k + 3 + r)] = -1.0;
            b[r] = f[r];
        }
        b[3] = 1.0;
        let lp = LinearProgram::new(c)
            .with_equalities(a, b)
            .with_bounds(DVector::zeros(n), DVector::from_element(n, f64::INFINITY));
        solve_lp(&lp).optimal().is_some_and(|(_, obj)| obj <= tol)
    }

    /// Same polytope with every vertex multiplied by `s`.
    pub fn scaled(&self, s: f64) -> ForcePolytope {
        let mut p = self.clone();
        p.vertices.iter_mut().for_each(|v| *v *= s);
        p.hull.iter_mut().for_each(|v| *v *= s);
        p
    }
}

/// Force polytope of a contact from the 2ⁿ torque corners of its limb.
pub fn force_polytope(model: &RobotModel, q: &DVector<f64>, contact: &ContactPoint) -> Result<ForcePolytope, FeasibilityError> {
    let kin = forward_kinematics(model, q)?;
    let rc = resolve(model, &kin, contact)?;
    let n = rc.coords.len();
    if n == 0 {
        return Err(FeasibilityError::Contact(format!("{}: limb has no actuated joints", contact.body)));
    }
    if n > MAX_CHAIN_JOINTS {
        return Err(FeasibilityError::Contact(format!(
            "{}: limb has {n} coordinates, at most {MAX_CHAIN_JOINTS} supported",
            contact.body
        )));
    }
    let (lo, hi) = model.torque_bounds();
    let jt = DMatrix::from_fn(n, 3, |i, r| rc.jacobian[(r, rc.coords[i])]);
    let svd = jt.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let mut warnings = Vec::new();
    let (pinv, rank) = if smax > 0.0 {
        let cut = PINV_CUTOFF * smax;
        let rank = svd.singular_values.iter().filter(|&&s| s > cut).count();
        (svd.pseudo_inverse(cut).expect("SVD computed with both factors"), rank)
    } else {
        (DMatrix::zeros(3, n), 0)
    };
    if rank == 0 {
        warnings.push(format!("{}: contact Jacobian has rank 0, polytope is the zero force", contact.body));
        return Ok(ForcePolytope {
            contact: contact.body.clone(),
            origin: rc.world_point,
            vertices: vec![Vector3::zeros()],
            hull: vec![Vector3::zeros()],
            consistent: vec![true],
            rank,
            warnings,
        });
    }
    if rank < n.min(3) {
        warnings.push(format!(
            "{}: contact Jacobian is singular (rank {rank} of {}), polytope is flattened",
            contact.body,
            n.min(3)
        ));
    }

    let mut vertices = Vec::with_capacity(1 << n);
    let mut consistent = Vec::with_capacity(1 << n);
    for corner in 0..(1usize << n) {
        let tau = DVector::from_fn(n, |i, _| {
            let c = rc.coords[i];
            if corner >> i & 1 == 1 {
                hi[c]
            } else {
                lo[c]
            }
        });
        let f = &pinv * &tau;
        let f = Vector3::new(f[0], f[1], f[2]);
        let back = &jt * f;
        let scale = 1.0 + tau.amax();
        consistent.push((back - &tau).amax() <= 1e-6 * scale);
        vertices.push(f);
    }
    let hull = reduce(&vertices);
    Ok(ForcePolytope {
        contact: contact.body.clone(),
        origin: rc.world_point,
        vertices,
        hull,
        consistent,
        rank,
        warnings,
    })
}

/// Hull vertices of a point set of any affine dimension.
fn reduce(points: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
    match convex_hull(points) {
        Hull::Solid { vertices, .. } | Hull::Planar { vertices, .. } => vertices,
        Hull::Degenerate => {
            let first = points[0];
            let far = points
                .iter()
                .copied()
                .fold(first, |best, p| if (p - first).norm() > (best - first).norm() { p } else { best });
            if far == first {
                return vec![first];
            }
            let dir = (far - first).normalize();
            let key = |p: &Vector3<f64>| dir.dot(&(p - first));
            let lo = points.iter().copied().fold(first, |b, p| if key(&p) < key(&b) { p } else { b });
            let hi = points.iter().copied().fold(first, |b, p| if key(&p) > key(&b) { p } else { b });
            vec![lo, hi]
        }
    }
}
