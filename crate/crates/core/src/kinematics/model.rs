//! Robot model: rigid-body tree, joint specs and the JSON document format.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::{DVector, Isometry3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::geometry::{Attachment, ConvexPolytope};

/// Standard gravity used by every statics computation (m/s²).
pub const GRAVITY: f64 = 9.81;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JointType {
    Revolute,
    Prismatic,
    /// Two translations in the plane orthogonal to `axis` plus a rotation about `axis`.
    PlanarBase,
    /// Three translations followed by a rotation vector.
    FreeBase,
}

impl JointType {
    pub fn dof(self) -> usize {
        match self {
            JointType::Revolute | JointType::Prismatic => 1,
            JointType::PlanarBase => 3,
            JointType::FreeBase => 6,
        }
    }

    pub fn is_base(self) -> bool {
        matches!(self, JointType::PlanarBase | JointType::FreeBase)
    }

    /// Whether coordinate `k` of this joint is rotational.
    pub fn is_angular(self, k: usize) -> bool {
        match self {
            JointType::Revolute => true,
            JointType::Prismatic => false,
            JointType::PlanarBase => k == 2,
            JointType::FreeBase => k >= 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct JointSpec {
    pub name: String,
    pub kind: JointType,
    /// Unit axis in the joint frame.
    pub axis: Vector3<f64>,
    /// Parent body index, `None` when attached to the world.
    pub parent: Option<usize>,
    pub child: usize,
    /// Position limits per coordinate (rad or m). Unlimited coordinates use infinities.
    pub position_limits: Vec<(f64, f64)>,
    pub velocity_limit: f64,
    pub torque_limits: (f64, f64),
    pub mirror: Option<String>,
    /// Offset of this joint's first coordinate in the configuration vector.
    pub q_index: usize,
}

impl JointSpec {
    pub fn dof(&self) -> usize {
        self.kind.dof()
    }

    pub fn coords(&self) -> std::ops::Range<usize> {
        self.q_index..self.q_index + self.dof()
    }

    pub fn is_actuated(&self) -> bool {
        !self.kind.is_base()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RigidBody {
    pub name: String,
    pub parent_joint: Option<usize>,
    pub mass: f64,
    /// Center of mass in the body frame.
    pub com: Vector3<f64>,
    /// Fixed transform from the parent body frame (or world) to the joint frame.
    pub origin: Isometry3<f64>,
    /// Indices into [`RobotModel::polytopes`].
    pub polytopes: Vec<usize>,
}

/// Kinematic tree with limits, masses and attached collision geometry.
#[derive(Clone, Debug)]
pub struct RobotModel {
    pub name: String,
    pub joints: Vec<JointSpec>,
    pub bodies: Vec<RigidBody>,
    pub root: usize,
    pub nominal_q: DVector<f64>,
    pub polytopes: Vec<ConvexPolytope>,
    /// Bodies ordered so that every parent precedes its children.
    pub(crate) order: Vec<usize>,
    body_lookup: HashMap<String, usize>,
    joint_lookup: HashMap<String, usize>,
    dof: usize,
    doc: ModelDoc,
}

impl RobotModel {
    pub fn dof(&self) -> usize {
        self.dof
    }

    /// One name per configuration coordinate: the joint name, or
    /// `joint[k]` for multi-coordinate joints.
    pub fn coordinate_names(&self) -> Vec<String> {
        let mut names = vec![String::new(); self.dof()];
        for j in &self.joints {
            for (k, c) in j.coords().enumerate() {
                names[c] = if j.dof() == 1 { j.name.clone() } else { format!("{}[{k}]", j.name) };
            }
        }
        names
    }

    pub fn total_mass(&self) -> f64 {
        self.bodies.iter().map(|b| b.mass).sum()
    }

    pub fn body_index(&self, name: &str) -> Result<usize, ModelError> {
        self.body_lookup
            .get(name)
            .copied()
            .ok_or_else(|| ModelError::UnknownBody(name.to_string()))
    }

    pub fn joint_index(&self, name: &str) -> Result<usize, ModelError> {
        self.joint_lookup
            .get(name)
            .copied()
            .ok_or_else(|| ModelError::UnknownJoint(name.to_string()))
    }

    pub fn joint(&self, name: &str) -> Result<&JointSpec, ModelError> {
        Ok(&self.joints[self.joint_index(name)?])
    }

    /// Mirror partner of a joint, if one is declared.
    pub fn mirror_of(&self, joint: &str) -> Option<&JointSpec> {
        let j = self.joint(joint).ok()?;
        j.mirror.as_deref().and_then(|m| self.joint(m).ok())
    }

    /// Per-coordinate position limits as two vectors.
    pub fn position_bounds(&self) -> (DVector<f64>, DVector<f64>) {
        let mut lo = DVector::from_element(self.dof, f64::NEG_INFINITY);
        let mut hi = DVector::from_element(self.dof, f64::INFINITY);
        for j in &self.joints {
            for (k, &(l, h)) in j.position_limits.iter().enumerate() {
                lo[j.q_index + k] = l;
                hi[j.q_index + k] = h;
            }
        }
        (lo, hi)
    }

    /// Per-coordinate velocity limits.
    pub fn velocity_limits(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.dof);
        for j in &self.joints {
            for c in j.coords() {
                v[c] = j.velocity_limit;
            }
        }
        v
    }

    /// Per-coordinate torque limits (lower, upper).
    pub fn torque_bounds(&self) -> (DVector<f64>, DVector<f64>) {
        let mut lo = DVector::zeros(self.dof);
        let mut hi = DVector::zeros(self.dof);
        for j in &self.joints {
            for c in j.coords() {
                lo[c] = j.torque_limits.0;
                hi[c] = j.torque_limits.1;
            }
        }
        (lo, hi)
    }

    /// Configuration coordinate owning `joint`, for single-coordinate joints.
    pub fn joint_coordinate(&self, joint: &str) -> Result<usize, ModelError> {
        let j = self.joint(joint)?;
        if j.dof() != 1 {
            return Err(ModelError::Invalid(format!(
                "joint `{}` has {} coordinates",
                j.name,
                j.dof()
            )));
        }
        Ok(j.q_index)
    }

    /// Actuated joints on the path from the root to `body`, root first.
    pub fn chain_to(&self, body: usize) -> Vec<usize> {
        let mut chain = Vec::new();
        let mut cur = Some(body);
        while let Some(b) = cur {
            match self.bodies[b].parent_joint {
                Some(j) => {
                    chain.push(j);
                    cur = self.joints[j].parent;
                }
                None => cur = None,
            }
        }
        chain.reverse();
        chain
    }

    /// Whether coordinate `c` moves `body` (i.e. belongs to a joint on its chain).
    pub fn coordinate_supports(&self, body: usize) -> Vec<bool> {
        let mut mask = vec![false; self.dof];
        for j in self.chain_to(body) {
            for c in self.joints[j].coords() {
                mask[c] = true;
            }
        }
        mask
    }

    pub fn check_configuration(&self, q: &DVector<f64>) -> Result<(), ModelError> {
        if q.len() != self.dof {
            return Err(ModelError::Dimension {
                expected: self.dof,
                got: q.len(),
            });
        }
        if let Some(i) = q.iter().position(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite(i));
        }
        Ok(())
    }

    /// The document this model was built from.
    pub fn document(&self) -> &ModelDoc {
        &self.doc
    }

    pub fn from_json_str(s: &str) -> Result<Self, ModelError> {
        let doc: ModelDoc = serde_json::from_str(s)?;
        Self::from_doc(doc)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| ModelError::Io(path.as_ref().display().to_string(), e))?;
        Self::from_json_str(&text)
    }

    pub fn from_doc(doc: ModelDoc) -> Result<Self, ModelError> {
        let mut body_lookup = HashMap::new();
        let mut bodies = Vec::with_capacity(doc.bodies.len());
        let mut polytopes = Vec::new();
        for (i, b) in doc.bodies.iter().enumerate() {
            if body_lookup.insert(b.name.clone(), i).is_some() {
                return Err(ModelError::Invalid(format!("duplicate body `{}`", b.name)));
            }
            if !(b.mass >= 0.0) || !b.mass.is_finite() {
                return Err(ModelError::Invalid(format!("body `{}` has invalid mass", b.name)));
            }
            let mut ids = Vec::new();
            for p in &b.polytopes {
                let verts: Vec<Vector3<f64>> =
                    p.vertices.iter().map(|v| Vector3::new(v[0], v[1], v[2])).collect();
                let poly = ConvexPolytope::from_points(&p.name, &verts, Attachment::Body(i))
                    .map_err(|e| ModelError::Invalid(format!("polytope `{}`: {e}", p.name)))?;
                ids.push(polytopes.len());
                polytopes.push(poly);
            }
            bodies.push(RigidBody {
                name: b.name.clone(),
                parent_joint: None,
                mass: b.mass,
                com: Vector3::from(b.com),
                origin: b.origin.to_isometry(),
                polytopes: ids,
            });
        }
        if bodies.is_empty() {
            return Err(ModelError::Invalid("model has no bodies".into()));
        }

        let mut joints = Vec::with_capacity(doc.joints.len());
        let mut joint_lookup = HashMap::new();
        let mut q_index = 0;
        for (ji, j) in doc.joints.iter().enumerate() {
            if joint_lookup.insert(j.name.clone(), ji).is_some() {
                return Err(ModelError::Invalid(format!("duplicate joint `{}`", j.name)));
            }
            let parent = match j.parent.as_deref() {
                None | Some("world") => None,
                Some(p) => Some(*body_lookup.get(p).ok_or_else(|| {
                    ModelError::Invalid(format!("joint `{}` parent `{p}` is not a body", j.name))
                })?),
            };
            let child = *body_lookup.get(&j.child).ok_or_else(|| {
                ModelError::Invalid(format!("joint `{}` child `{}` is not a body", j.name, j.child))
            })?;
            if bodies[child].parent_joint.is_some() {
                return Err(ModelError::Invalid(format!(
                    "body `{}` has more than one parent joint",
                    j.child
                )));
            }
            bodies[child].parent_joint = Some(ji);

            let axis = Vector3::from(j.axis);
            let norm = axis.norm();
            if (norm - 1.0).abs() > 1e-9 {
                return Err(ModelError::Invalid(format!("joint `{}` axis is not unit length", j.name)));
            }
            let dof = j.kind.dof();
            let position_limits = j.limits.pos.expand(j.kind)?;
            for &(lo, hi) in &position_limits {
                if !(lo < hi) {
                    return Err(ModelError::Invalid(format!(
                        "joint `{}` position limits must satisfy lower < upper",
                        j.name
                    )));
                }
            }
            if !(j.limits.vel > 0.0) {
                return Err(ModelError::Invalid(format!("joint `{}` velocity limit must be positive", j.name)));
            }
            let (tl, th) = (j.limits.torque[0], j.limits.torque[1]);
            if !(tl <= th) {
                return Err(ModelError::Invalid(format!("joint `{}` torque limits are inverted", j.name)));
            }
            if j.kind.is_base() && parent.is_some() {
                return Err(ModelError::Invalid(format!("base joint `{}` must attach to the world", j.name)));
            }
            joints.push(JointSpec {
                name: j.name.clone(),
                kind: j.kind,
                axis,
                parent,
                child,
                position_limits,
                velocity_limit: j.limits.vel,
                torque_limits: (tl, th),
                mirror: j.mirror.clone(),
                q_index,
            });
            q_index += dof;
        }

        for j in &joints {
            if let Some(m) = &j.mirror {
                let partner = joint_lookup
                    .get(m)
                    .map(|&i| &joints[i])
                    .ok_or_else(|| ModelError::Invalid(format!("joint `{}` mirrors unknown `{m}`", j.name)))?;
                if partner.mirror.as_deref() != Some(j.name.as_str()) {
                    return Err(ModelError::Invalid(format!(
                        "mirror partnership `{}` <-> `{m}` is not symmetric",
                        j.name
                    )));
                }
            }
        }

        // Roots: bodies with no parent joint or whose joint attaches to the world.
        let roots: Vec<usize> = (0..bodies.len())
            .filter(|&b| match bodies[b].parent_joint {
                None => true,
                Some(j) => joints[j].parent.is_none(),
            })
            .collect();
        if roots.len() != 1 {
            return Err(ModelError::Invalid(format!(
                "model must have exactly one root body, found {}",
                roots.len()
            )));
        }
        let root = roots[0];

        let mut children: Vec<Vec<usize>> = vec![Vec::new(); bodies.len()];
        for j in &joints {
            if let Some(p) = j.parent {
                children[p].push(j.child);
            }
        }
        let mut order = Vec::with_capacity(bodies.len());
        let mut stack = vec![root];
        while let Some(b) = stack.pop() {
            order.push(b);
            for &c in children[b].iter().rev() {
                stack.push(c);
            }
        }
        if order.len() != bodies.len() {
            return Err(ModelError::Invalid("kinematic tree is disconnected or cyclic".into()));
        }

        let total: f64 = bodies.iter().map(|b| b.mass).sum();
        if !(total > 0.0) {
            return Err(ModelError::ZeroMass);
        }

        let nominal_q = match &doc.nominal_q {
            Some(v) => DVector::from_vec(v.clone()),
            None => DVector::zeros(q_index),
        };
        if nominal_q.len() != q_index {
            return Err(ModelError::Dimension {
                expected: q_index,
                got: nominal_q.len(),
            });
        }

        Ok(RobotModel {
            name: doc.name.clone(),
            joints,
            bodies,
            root,
            nominal_q,
            polytopes,
            order,
            body_lookup,
            joint_lookup,
            dof: q_index,
            doc,
        })
    }
}

// ---------------------------------------------------------------------------
// JSON document

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelDoc {
    #[serde(default)]
    pub name: String,
    pub bodies: Vec<BodyDoc>,
    pub joints: Vec<JointDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nominal_q: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BodyDoc {
    pub name: String,
    pub mass: f64,
    #[serde(default)]
    pub com: [f64; 3],
    #[serde(default)]
    pub origin: OriginDoc,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub polytopes: Vec<PolytopeDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolytopeDoc {
    pub name: String,
    pub vertices: Vec<[f64; 3]>,
}

/// Translation plus roll-pitch-yaw (rad, applied as Rz·Ry·Rx).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OriginDoc {
    #[serde(default)]
    pub xyz: [f64; 3],
    #[serde(default)]
    pub rpy: [f64; 3],
}

impl OriginDoc {
    pub fn to_isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(
            Translation3::new(self.xyz[0], self.xyz[1], self.xyz[2]),
            UnitQuaternion::from_euler_angles(self.rpy[0], self.rpy[1], self.rpy[2]),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointDoc {
    pub name: String,
    #[serde(rename = "type")]
    pub kind: JointType,
    pub axis: [f64; 3],
    #[serde(default)]
    pub parent: Option<String>,
    pub child: String,
    pub limits: LimitsDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mirror: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitsDoc {
    pub pos: PositionLimits,
    pub vel: f64,
    pub torque: [f64; 2],
}

/// Either one `[lo, hi]` pair or one pair per coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PositionLimits {
    Shared([f64; 2]),
    PerCoordinate(Vec<[f64; 2]>),
}

impl PositionLimits {
    /// A shared pair limits only the translational coordinates of base joints;
    /// their rotational coordinates are unbounded.
    fn expand(&self, kind: JointType) -> Result<Vec<(f64, f64)>, ModelError> {
        let dof = kind.dof();
        match self {
            PositionLimits::Shared([lo, hi]) => Ok((0..dof)
                .map(|k| {
                    if kind.is_base() && kind.is_angular(k) {
                        (f64::NEG_INFINITY, f64::INFINITY)
                    } else {
                        (*lo, *hi)
                    }
                })
                .collect()),
            PositionLimits::PerCoordinate(v) => {
                if v.len() != dof {
                    return Err(ModelError::Invalid(format!(
                        "expected {dof} position limit pairs, got {}",
                        v.len()
                    )));
                }
                Ok(v.iter().map(|p| (p[0], p[1])).collect())
            }
        }
    }
}
