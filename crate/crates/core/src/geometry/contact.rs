//! Tangent contact targets for contact anchors.

use nalgebra::{Rotation3, Unit, UnitQuaternion, Vector3};

/// Pose target that places a robot surface point on an environment surface
/// with the two surface normals anti-parallel.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentContactTarget {
    pub position: Vector3<f64>,
    /// World rotation taking the robot normal onto the reversed environment normal.
    pub rotation: UnitQuaternion<f64>,
    /// Active components, ordered `[rx, ry, rz, x, y, z]`; angular components are
    /// expressed in the contact frame whose z axis is the surface normal, so yaw
    /// about the normal is left free.
    pub axis_mask: [bool; 6],
}

pub const TANGENT_AXIS_MASK: [bool; 6] = [true, true, false, true, true, true];

/// Minimal rotation taking unit vector `from` onto unit vector `to`.
/// Opposite vectors rotate by π about a deterministic perpendicular axis.
pub fn rotation_between(from: &Vector3<f64>, to: &Vector3<f64>) -> UnitQuaternion<f64> {
    let c = from.dot(to).clamp(-1.0, 1.0);
    let axis = from.cross(to);
    let s = axis.norm();
    if s < 1e-12 {
        if c > 0.0 {
            return UnitQuaternion::identity();
        }
        let seed = if from.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
        let perp = Unit::new_normalize(from.cross(&seed));
        return UnitQuaternion::from_axis_angle(&perp, std::f64::consts::PI);
    }
    UnitQuaternion::from_axis_angle(&Unit::new_unchecked(axis / s), s.atan2(c))
}

/// Rotation whose z axis is `normal` (the contact frame of a robot surface point).
pub fn contact_frame(normal: &Vector3<f64>) -> Rotation3<f64> {
    rotation_between(&Vector3::z(), normal).to_rotation_matrix()
}

/// Target for a contact anchor: position at the environment point and an
/// orientation mapping the robot normal `robot_normal` onto `-env_normal`.
pub fn tangent_contact_target(
    robot_normal: &Vector3<f64>,
    env_point: &Vector3<f64>,
    env_normal: &Vector3<f64>,
) -> TangentContactTarget {
    let rotation = if robot_normal.dot(env_normal) <= -1.0 + 1e-15 {
        UnitQuaternion::identity()
    } else {
        rotation_between(robot_normal, &-env_normal)
    };
    TangentContactTarget {
        position: *env_point,
        rotation,
        axis_mask: TANGENT_AXIS_MASK,
    }
}
