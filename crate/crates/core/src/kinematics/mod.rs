//! Forward kinematics, Jacobians, center of mass and statics over a [`RobotModel`].
//!
//! Configurations are plain vectors. Base joints keep their orientation as a
//! rotation vector; the matching velocity coordinates are angular velocities
//! expressed in the base joint frame, so every Jacobian column is a tangent
//! direction and [`integrate`] is the only place where that distinction matters.

mod model;

pub use model::{
    BodyDoc, JointDoc, JointSpec, JointType, LimitsDoc, ModelDoc, OriginDoc, PolytopeDoc, PositionLimits,
    RigidBody, RobotModel, GRAVITY,
};

use nalgebra::{DMatrix, DVector, Isometry3, Rotation3, Translation3, Unit, UnitQuaternion, Vector3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("configuration has {got} entries, model expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("non-finite value at configuration index {0}")]
    NonFinite(usize),
    #[error("unknown body `{0}`")]
    UnknownBody(String),
    #[error("unknown joint `{0}`")]
    UnknownJoint(String),
    #[error("model has zero total mass")]
    ZeroMass,
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error("cannot read `{0}`: {1}")]
    Io(String, std::io::Error),
    #[error("malformed model JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// World pose of every body, indexed like [`RobotModel::bodies`].
#[derive(Clone, Debug)]
pub struct Kinematics {
    pub body_poses: Vec<Isometry3<f64>>,
    /// World pose of each joint frame (parent pose composed with the body origin).
    pub joint_frames: Vec<Isometry3<f64>>,
}

/// Local motion produced by a joint's coordinates.
pub(crate) fn joint_motion(kind: JointType, axis: &Vector3<f64>, q: &[f64]) -> Isometry3<f64> {
    match kind {
        JointType::Revolute => Isometry3::from_parts(
            Translation3::identity(),
            UnitQuaternion::from_axis_angle(&Unit::new_unchecked(*axis), q[0]),
        ),
        JointType::Prismatic => Isometry3::from_parts((axis * q[0]).into(), UnitQuaternion::identity()),
        JointType::PlanarBase => {
            let (u, w) = plane_basis(axis);
            Isometry3::from_parts(
                (u * q[0] + w * q[1]).into(),
                UnitQuaternion::from_axis_angle(&Unit::new_unchecked(*axis), q[2]),
            )
        }
        JointType::FreeBase => Isometry3::from_parts(
            Translation3::new(q[0], q[1], q[2]),
            UnitQuaternion::from_scaled_axis(Vector3::new(q[3], q[4], q[5])),
        ),
    }
}

/// Deterministic in-plane basis for a planar base: for a coordinate axis the
/// remaining two axes in cyclic order, otherwise Gram-Schmidt against x or y.
pub(crate) fn plane_basis(axis: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let seed = if axis.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let cyclic = if axis == &Vector3::z() {
        Some((Vector3::x(), Vector3::y()))
    } else if axis == &Vector3::y() {
        Some((Vector3::z(), Vector3::x()))
    } else if axis == &Vector3::x() {
        Some((Vector3::y(), Vector3::z()))
    } else {
        None
    };
    cyclic.unwrap_or_else(|| {
        let u = (seed - axis * axis.dot(&seed)).normalize();
        (u, axis.cross(&u))
    })
}

pub fn forward_kinematics(model: &RobotModel, q: &DVector<f64>) -> Result<Kinematics, ModelError> {
    model.check_configuration(q)?;
    let nb = model.bodies.len();
    let mut body_poses = vec![Isometry3::identity(); nb];
    let mut joint_frames = vec![Isometry3::identity(); model.joints.len()];
    for &b in &model.order {
        let body = &model.bodies[b];
        match body.parent_joint {
            None => body_poses[b] = body.origin,
            Some(ji) => {
                let j = &model.joints[ji];
                let parent = j.parent.map(|p| body_poses[p]).unwrap_or_else(Isometry3::identity);
                let frame = parent * body.origin;
                joint_frames[ji] = frame;
                let qs = &q.as_slice()[j.coords()];
                body_poses[b] = frame * joint_motion(j.kind, &j.axis, qs);
            }
        }
    }
    Ok(Kinematics {
        body_poses,
        joint_frames,
    })
}

/// World-frame twist basis of every configuration coordinate that moves `body`:
/// `(coordinate, angular, linear-at-reference, reference point)`.
fn coordinate_twists(
    model: &RobotModel,
    kin: &Kinematics,
    body: usize,
) -> Vec<(usize, Vector3<f64>, Vector3<f64>, Vector3<f64>)> {
    let mut out = Vec::new();
    for ji in model.chain_to(body) {
        let j = &model.joints[ji];
        let frame = &kin.joint_frames[ji];
        let child_pos = kin.body_poses[j.child].translation.vector;
        let rot = frame.rotation;
        match j.kind {
            JointType::Revolute => {
                out.push((j.q_index, rot * j.axis, Vector3::zeros(), frame.translation.vector));
            }
            JointType::Prismatic => {
                out.push((j.q_index, Vector3::zeros(), rot * j.axis, child_pos));
            }
            JointType::PlanarBase => {
                let (u, w) = plane_basis(&j.axis);
                out.push((j.q_index, Vector3::zeros(), rot * u, child_pos));
                out.push((j.q_index + 1, Vector3::zeros(), rot * w, child_pos));
                out.push((j.q_index + 2, rot * j.axis, Vector3::zeros(), child_pos));
            }
            JointType::FreeBase => {
                for k in 0..3 {
                    let e = rot * Vector3::ith(k, 1.0);
                    out.push((j.q_index + k, Vector3::zeros(), e, child_pos));
                    out.push((j.q_index + 3 + k, e, Vector3::zeros(), child_pos));
                }
            }
        }
    }
    out
}

/// Linear-velocity Jacobian (3×n) of a world point rigidly attached to `body`.
pub fn point_jacobian(model: &RobotModel, kin: &Kinematics, body: usize, point: &Vector3<f64>) -> DMatrix<f64> {
    let mut jac = DMatrix::zeros(3, model.dof());
    for (c, ang, lin, reference) in coordinate_twists(model, kin, body) {
        let v = lin + ang.cross(&(point - reference));
        jac.fixed_view_mut::<3, 1>(0, c).copy_from(&v);
    }
    jac
}

/// Spatial Jacobian (6×n, rows angular then linear) of the control frame
/// `body_pose * offset`, in world coordinates.
pub fn spatial_jacobian(
    model: &RobotModel,
    q: &DVector<f64>,
    body: &str,
    offset: &Isometry3<f64>,
) -> Result<DMatrix<f64>, ModelError> {
    let b = model.body_index(body)?;
    let kin = forward_kinematics(model, q)?;
    Ok(spatial_jacobian_at(model, &kin, b, offset))
}

pub fn spatial_jacobian_at(model: &RobotModel, kin: &Kinematics, body: usize, offset: &Isometry3<f64>) -> DMatrix<f64> {
    let point = (kin.body_poses[body] * offset).translation.vector;
    let mut jac = DMatrix::zeros(6, model.dof());
    for (c, ang, lin, reference) in coordinate_twists(model, kin, body) {
        let v = lin + ang.cross(&(point - reference));
        jac.fixed_view_mut::<3, 1>(0, c).copy_from(&ang);
        jac.fixed_view_mut::<3, 1>(3, c).copy_from(&v);
    }
    jac
}

/// Center of mass and linear centroidal momentum matrix `A` (h = A·v).
pub fn com_and_momentum_matrix(model: &RobotModel, q: &DVector<f64>) -> Result<(Vector3<f64>, DMatrix<f64>), ModelError> {
    let kin = forward_kinematics(model, q)?;
    com_and_momentum_matrix_at(model, &kin)
}

pub fn com_and_momentum_matrix_at(model: &RobotModel, kin: &Kinematics) -> Result<(Vector3<f64>, DMatrix<f64>), ModelError> {
    let mass = model.total_mass();
    if !(mass > 0.0) {
        return Err(ModelError::ZeroMass);
    }
    let mut com = Vector3::zeros();
    let mut a = DMatrix::zeros(3, model.dof());
    for (b, body) in model.bodies.iter().enumerate() {
        if body.mass == 0.0 {
            continue;
        }
        let p = kin.body_poses[b] * nalgebra::Point3::from(body.com);
        com += body.mass * p.coords;
        a += body.mass * point_jacobian(model, kin, b, &p.coords);
    }
    Ok((com / mass, a))
}

pub fn center_of_mass(model: &RobotModel, q: &DVector<f64>) -> Result<Vector3<f64>, ModelError> {
    let kin = forward_kinematics(model, q)?;
    let mass = model.total_mass();
    if !(mass > 0.0) {
        return Err(ModelError::ZeroMass);
    }
    let mut com = Vector3::zeros();
    for (b, body) in model.bodies.iter().enumerate() {
        com += body.mass * (kin.body_poses[b] * nalgebra::Point3::from(body.com)).coords;
    }
    Ok(com / mass)
}

/// Generalized torques holding the robot static under gravity without contacts.
pub fn gravity_torques(model: &RobotModel, q: &DVector<f64>) -> Result<DVector<f64>, ModelError> {
    let kin = forward_kinematics(model, q)?;
    Ok(gravity_torques_at(model, &kin))
}

pub fn gravity_torques_at(model: &RobotModel, kin: &Kinematics) -> DVector<f64> {
    let mut tau = DVector::zeros(model.dof());
    for (b, body) in model.bodies.iter().enumerate() {
        if body.mass == 0.0 {
            continue;
        }
        let p = (kin.body_poses[b] * nalgebra::Point3::from(body.com)).coords;
        let jac = point_jacobian(model, kin, b, &p);
        tau += jac.row(2).transpose() * (body.mass * GRAVITY);
    }
    tau
}

/// Advance a configuration by velocity `v` for `dt` seconds.
///
/// Base orientations compose on the rotation group (left-multiplied
/// exponential map in the joint frame); everything else is added.
pub fn integrate(model: &RobotModel, q: &DVector<f64>, v: &DVector<f64>, dt: f64) -> Result<DVector<f64>, ModelError> {
    model.check_configuration(q)?;
    if v.len() != q.len() {
        return Err(ModelError::Dimension {
            expected: q.len(),
            got: v.len(),
        });
    }
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(ModelError::NonFinite(i));
    }
    if !dt.is_finite() {
        return Err(ModelError::Invalid("time step is not finite".into()));
    }
    let mut out = q + v * dt;
    for j in &model.joints {
        if j.kind == JointType::FreeBase {
            let r = j.q_index + 3;
            let current = Rotation3::new(Vector3::new(q[r], q[r + 1], q[r + 2]));
            let step = Rotation3::new(Vector3::new(v[r], v[r + 1], v[r + 2]) * dt);
            let next = (step * current).scaled_axis();
            out.fixed_rows_mut::<3>(r).copy_from(&next);
        }
    }
    Ok(out)
}

/// Configuration difference `to ⊖ from` in velocity coordinates, such that
/// `integrate(from, diff, 1)` reproduces `to`.
pub fn difference(model: &RobotModel, from: &DVector<f64>, to: &DVector<f64>) -> DVector<f64> {
    let mut d = to - from;
    for j in &model.joints {
        if j.kind == JointType::FreeBase {
            let r = j.q_index + 3;
            let a = Rotation3::new(Vector3::new(from[r], from[r + 1], from[r + 2]));
            let b = Rotation3::new(Vector3::new(to[r], to[r + 1], to[r + 2]));
            d.fixed_rows_mut::<3>(r).copy_from(&(b * a.inverse()).scaled_axis());
        }
    }
    d
}

/// Clamp each coordinate into its position limits.
pub fn clamp_to_limits(model: &RobotModel, q: &mut DVector<f64>) {
    let (lo, hi) = model.position_bounds();
    for i in 0..q.len() {
        q[i] = q[i].clamp(lo[i], hi[i]);
    }
}

