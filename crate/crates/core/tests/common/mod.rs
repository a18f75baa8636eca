//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use anchorpose::feasibility::ContactPoint;
use anchorpose::geometry::contact::contact_frame;
use anchorpose::kinematics::{forward_kinematics, RobotModel, GRAVITY};
use anchorpose::optim::{solve_lp, LinearProgram, LpOutcome};
use nalgebra::{DMatrix, DVector, Point3, Vector3};

const FD_STEP: f64 = 1e-6;

/// World position of a body-frame point.
pub fn world_point(model: &RobotModel, q: &DVector<f64>, body: &str, p: &Vector3<f64>) -> Vector3<f64> {
    let kin = forward_kinematics(model, q).unwrap();
    (kin.body_poses[model.body_index(body).unwrap()] * Point3::from(*p)).coords
}

/// Coordinates of revolute and prismatic joints.
pub fn actuated_coords(model: &RobotModel) -> Vec<usize> {
    model
        .joints
        .iter()
        .filter(|j| j.is_actuated())
        .flat_map(|j| j.coords())
        .collect()
}

/// Central-difference derivative of a body point with respect to coordinate `k`.
pub fn fd_point_column(model: &RobotModel, q: &DVector<f64>, body: &str, p: &Vector3<f64>, k: usize) -> Vector3<f64> {
    let mut qp = q.clone();
    let mut qm = q.clone();
    qp[k] += FD_STEP;
    qm[k] -= FD_STEP;
    (world_point(model, &qp, body, p) - world_point(model, &qm, body, p)) / (2.0 * FD_STEP)
}

/// Gravitational potential energy Σ m g z.
pub fn potential(model: &RobotModel, q: &DVector<f64>) -> f64 {
    let kin = forward_kinematics(model, q).unwrap();
    model
        .bodies
        .iter()
        .enumerate()
        .map(|(b, body)| body.mass * GRAVITY * (kin.body_poses[b] * Point3::from(body.com)).z)
        .sum()
}

/// ∂V/∂q_k by central differences.
pub fn fd_gravity(model: &RobotModel, q: &DVector<f64>, k: usize) -> f64 {
    let mut qp = q.clone();
    let mut qm = q.clone();
    qp[k] += FD_STEP;
    qm[k] -= FD_STEP;
    (potential(model, &qp) - potential(model, &qm)) / (2.0 * FD_STEP)
}

/// Inward face normals of the linearized friction pyramid: `f` is in the cone
/// iff every `nₖ·f ≥ 0`.
pub fn cone_faces(c: &ContactPoint) -> Vec<Vector3<f64>> {
    let n = c.normal.normalize();
    let frame = contact_frame(&n);
    let (t1, t2) = (frame * Vector3::x(), frame * Vector3::y());
    let m = c.sides;
    let edge = |k: usize| {
        let th = std::f64::consts::TAU * k as f64 / m as f64;
        n + (t1 * th.cos() + t2 * th.sin()) * c.friction
    };
    (0..m)
        .map(|k| {
            let f = edge(k).cross(&edge((k + 1) % m));
            if f.dot(&n) < 0.0 {
                -f
            } else {
                f
            }
        })
        .collect()
}

/// Static-equilibrium feasibility with the CoM in the box `com ± half`, built
/// from contact forces in face form, Newton-Euler balance in world, and
/// finite-difference limb Jacobians and gravity torques.
pub struct EquilibriumOracle {
    a_eq: DMatrix<f64>,
    b_eq: DVector<f64>,
    a_ub: DMatrix<f64>,
    b_ub: DVector<f64>,
    nf: usize,
}

impl EquilibriumOracle {
    pub fn new(model: &RobotModel, q: &DVector<f64>, contacts: &[ContactPoint], actuation: bool) -> Self {
        let k = contacts.len();
        let nf = 3 * k;
        let n = nf + 2;
        let mg = model.total_mass() * GRAVITY;
        let points: Vec<Vector3<f64>> = contacts.iter().map(|c| world_point(model, q, &c.body, &c.point)).collect();

        let mut a_eq = DMatrix::zeros(6, n);
        let mut b_eq = DVector::zeros(6);
        b_eq[2] = mg;
        for (i, p) in points.iter().enumerate() {
            for r in 0..3 {
                a_eq[(r, 3 * i + r)] = 1.0;
            }
            // Rows of the cross-product matrix [p]×.
            let px = [[0.0, -p.z, p.y], [p.z, 0.0, -p.x], [-p.y, p.x, 0.0]];
            for r in 0..3 {
                for c in 0..3 {
                    a_eq[(3 + r, 3 * i + c)] = px[r][c];
                }
            }
        }
        a_eq[(3, nf + 1)] = -mg;
        a_eq[(4, nf)] = mg;

        let mut rows: Vec<(DVector<f64>, f64)> = Vec::new();
        for (i, c) in contacts.iter().enumerate() {
            for face in cone_faces(c) {
                let mut row = DVector::zeros(n);
                for r in 0..3 {
                    row[3 * i + r] = -face[r];
                }
                rows.push((row, 0.0));
            }
        }
        if actuation {
            let (lo, hi) = model.torque_bounds();
            for kq in actuated_coords(model) {
                let cols: Vec<Vector3<f64>> = contacts
                    .iter()
                    .map(|c| fd_point_column(model, q, &c.body, &c.point, kq))
                    .collect();
                if cols.iter().all(|v| v.norm() < 1e-9) {
                    continue;
                }
                let g = fd_gravity(model, q, kq);
                let mut row = DVector::zeros(n);
                for (i, col) in cols.iter().enumerate() {
                    for r in 0..3 {
                        row[3 * i + r] = col[r];
                    }
                }
                // τ = g − row·f ∈ [lo, hi]
                rows.push((-&row, hi[kq] - g));
                rows.push((row, g - lo[kq]));
            }
        }
        let mut a_ub = DMatrix::zeros(rows.len(), n);
        let mut b_ub = DVector::zeros(rows.len());
        for (i, (r, b)) in rows.into_iter().enumerate() {
            a_ub.set_row(i, &r.transpose());
            b_ub[i] = b;
        }
        EquilibriumOracle { a_eq, b_eq, a_ub, b_ub, nf }
    }

    pub fn feasible(&self, com: [f64; 2], half: f64) -> bool {
        let n = self.nf + 2;
        let mut lo = DVector::from_element(n, f64::NEG_INFINITY);
        let mut hi = DVector::from_element(n, f64::INFINITY);
        for i in 0..2 {
            lo[self.nf + i] = com[i] - half;
            hi[self.nf + i] = com[i] + half;
        }
        let lp = LinearProgram::new(DVector::zeros(n))
            .with_equalities(self.a_eq.clone(), self.b_eq.clone())
            .with_inequalities(self.a_ub.clone(), self.b_ub.clone())
            .with_bounds(lo, hi);
        matches!(solve_lp(&lp), LpOutcome::Optimal { .. })
    }
}

fn seg_dist(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let l2 = d[0] * d[0] + d[1] * d[1];
    let t = if l2 > 0.0 {
        (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / l2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    ((a[0] + t * d[0] - p[0]).powi(2) + (a[1] + t * d[1] - p[1]).powi(2)).sqrt()
}

/// Distance from `p` to a convex CCW polygon as a filled set (zero inside).
pub fn polygon_set_distance(poly: &[[f64; 2]], p: [f64; 2]) -> f64 {
    let n = poly.len();
    if n == 1 {
        return ((p[0] - poly[0][0]).powi(2) + (p[1] - poly[0][1]).powi(2)).sqrt();
    }
    if n >= 3 {
        let inside = (0..n).all(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) >= 0.0
        });
        if inside {
            return 0.0;
        }
    }
    let edges = if n == 2 { 1 } else { n };
    (0..edges)
        .map(|i| seg_dist(p, poly[i], poly[(i + 1) % n]))
        .fold(f64::INFINITY, f64::min)
}

/// Points along the polygon boundary at most `step` apart.
pub fn boundary_samples(poly: &[[f64; 2]], step: f64) -> Vec<[f64; 2]> {
    let n = poly.len();
    let mut out = poly.to_vec();
    let edges = if n == 2 { 1 } else if n < 2 { 0 } else { n };
    for i in 0..edges {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        let k = (len / step).ceil() as usize;
        for j in 1..k {
            let t = j as f64 / k as f64;
            out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
        }
    }
    out
}

/// Grid points (spacing `step`, aligned to multiples of `step`) around the
/// polygon's bounding box grown by `pad`, that the oracle accepts.
pub fn grid_scan(oracle: &EquilibriumOracle, poly: &[[f64; 2]], step: f64, pad: f64) -> Vec<[f64; 2]> {
    let (mut xmin, mut ymin, mut xmax, mut ymax) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in poly {
        xmin = xmin.min(p[0]);
        xmax = xmax.max(p[0]);
        ymin = ymin.min(p[1]);
        ymax = ymax.max(p[1]);
    }
    let (i0, i1) = (((xmin - pad) / step).floor() as i64, ((xmax + pad) / step).ceil() as i64);
    let (j0, j1) = (((ymin - pad) / step).floor() as i64, ((ymax + pad) / step).ceil() as i64);
    let mut out = Vec::new();
    for i in i0..=i1 {
        for j in j0..=j1 {
            let p = [i as f64 * step, j as f64 * step];
            if oracle.feasible(p, 0.0) {
                out.push(p);
            }
        }
    }
    out
}

/// Hausdorff distance between a filled convex polygon and a point set, with
/// the polygon side sampled along its boundary.
pub fn hausdorff(poly: &[[f64; 2]], pts: &[[f64; 2]], step: f64) -> f64 {
    let to_poly = pts.iter().map(|&p| polygon_set_distance(poly, p)).fold(0.0, f64::max);
    let to_pts = boundary_samples(poly, step)
        .into_iter()
        .map(|s| {
            pts.iter()
                .map(|p| ((p[0] - s[0]).powi(2) + (p[1] - s[1]).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max);
    to_poly.max(to_pts)
}
