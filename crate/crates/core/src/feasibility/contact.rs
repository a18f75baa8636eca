use nalgebra::{DMatrix, Matrix3xX, Vector3};
use serde::{Deserialize, Serialize};

use super::FeasibilityError;
use crate::geometry::contact::contact_frame;
use crate::kinematics::{point_jacobian, Kinematics, RobotModel};

pub const DEFAULT_FRICTION: f64 = 0.7;
pub const DEFAULT_CONE_SIDES: usize = 4;
pub const MAX_CONE_SIDES: usize = 16;

fn default_friction() -> f64 {
    DEFAULT_FRICTION
}

fn default_sides() -> usize {
    DEFAULT_CONE_SIDES
}

/// Point contact between a robot body and the environment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactPoint {
    pub body: String,
    /// Contact point in the body frame (m).
    pub point: Vector3<f64>,
    /// Environment surface normal in world, pointing into the robot.
    pub normal: Vector3<f64>,
    #[serde(default = "default_friction")]
    pub friction: f64,
    #[serde(default = "default_sides")]
    pub sides: usize,
    /// Joints of the contacting limb. Derived from the model when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain: Option<Vec<String>>,
}

impl ContactPoint {
    pub fn new(body: &str, point: Vector3<f64>, normal: Vector3<f64>) -> Self {
        ContactPoint {
            body: body.to_string(),
            point,
            normal,
            friction: DEFAULT_FRICTION,
            sides: DEFAULT_CONE_SIDES,
            chain: None,
        }
    }

    pub fn with_friction(mut self, mu: f64) -> Self {
        self.friction = mu;
        self
    }

    pub fn with_sides(mut self, sides: usize) -> Self {
        self.sides = sides;
        self
    }

    pub fn with_chain(mut self, joints: &[&str]) -> Self {
        self.chain = Some(joints.iter().map(|j| j.to_string()).collect());
        self
    }

    /// Generators of the linearized friction cone, one column per side:
    /// `n + μ(cos θₖ t₁ + sin θₖ t₂)` with θₖ = 2πk/m. The pyramid is inscribed
    /// in the exact cone.
    pub fn cone_generators(&self) -> Matrix3xX<f64> {
        let n = self.normal.normalize();
        let frame = contact_frame(&n);
        let (t1, t2) = (frame * Vector3::x(), frame * Vector3::y());
        let m = self.sides;
        Matrix3xX::from_fn(m, |r, k| {
            let th = std::f64::consts::TAU * k as f64 / m as f64;
            (n + (t1 * th.cos() + t2 * th.sin()) * self.friction)[r]
        })
    }
}

/// A contact evaluated at one configuration.
#[derive(Clone, Debug)]
pub(crate) struct ResolvedContact {
    pub world_point: Vector3<f64>,
    /// Full 3×dof point Jacobian.
    pub jacobian: DMatrix<f64>,
    /// Configuration coordinates of the limb's actuated joints, root first.
    pub coords: Vec<usize>,
    pub generators: Matrix3xX<f64>,
}

pub(crate) fn resolve(model: &RobotModel, kin: &Kinematics, c: &ContactPoint) -> Result<ResolvedContact, FeasibilityError> {
    let bad = |msg: String| FeasibilityError::Contact(format!("{}: {msg}", c.body));
    if !(c.friction > 0.0 && c.friction.is_finite()) {
        return Err(bad(format!("friction coefficient must be positive, got {}", c.friction)));
    }
    if !(3..=MAX_CONE_SIDES).contains(&c.sides) {
        return Err(bad(format!("cone side count must be in 3..={MAX_CONE_SIDES}, got {}", c.sides)));
    }
    let nn = c.normal.norm();
    if !(nn > 1e-12 && nn.is_finite()) || !c.point.iter().all(|v| v.is_finite()) {
        return Err(bad("normal must be a finite non-zero vector".into()));
    }
    let body = model.body_index(&c.body)?;
    let path = model.chain_to(body);
    let joints: Vec<usize> = match &c.chain {
        None => path.iter().copied().filter(|&j| model.joints[j].is_actuated()).collect(),
        Some(names) => {
            let mut idx = Vec::with_capacity(names.len());
            for name in names {
                let j = model.joint_index(name)?;
                if !path.contains(&j) {
                    return Err(bad(format!("joint `{name}` does not move this body")));
                }
                idx.push(j);
            }
            let pos: Vec<usize> = idx.iter().map(|j| path.iter().position(|p| p == j).unwrap()).collect();
            let contiguous = pos.windows(2).all(|w| w[1] == w[0] + 1);
            if !contiguous || pos.last().is_some_and(|&p| p + 1 != path.len()) {
                return Err(bad("chain joints must form a connected path ending at the body".into()));
            }
            idx
        }
    };
    let coords = joints.iter().flat_map(|&j| model.joints[j].coords()).collect();
    let world_point = kin.body_poses[body] * nalgebra::Point3::from(c.point);
    let jacobian = point_jacobian(model, kin, body, &world_point.coords);
    Ok(ResolvedContact {
        world_point: world_point.coords,
        jacobian,
        coords,
        generators: c.cone_generators(),
    })
}
