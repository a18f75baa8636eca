use std::collections::BTreeMap;

use nalgebra::{DVector, Isometry3, Point3, Vector3};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::ScriptError;
use crate::feasibility::ContactPoint;
use crate::ik::{KinematicTask, SolverSettings, TaskTarget, WeightTier};
use crate::kinematics::{center_of_mass, forward_kinematics, Kinematics, RobotModel};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FollowMode {
    #[default]
    None,
    /// Re-target from the controller reference on every solve tick.
    TrackController,
    /// Re-target once on the next tick, then revert to `None`.
    SnapOnce,
}

#[derive(Clone, Debug, PartialEq)]
pub enum AnchorKind {
    /// Control frame `body_pose * offset` driven to `target`. Axis order is
    /// `[rx, ry, rz, x, y, z]`.
    Pose {
        body: String,
        offset: Isometry3<f64>,
        target: Isometry3<f64>,
        axes: [bool; 6],
        /// Contact patch corners in the control frame; the control-frame
        /// origin alone when empty.
        patch: Vec<Vector3<f64>>,
    },
    Com {
        target: Vector3<f64>,
        axes: [bool; 3],
    },
    Joint {
        joint: String,
        target: f64,
    },
}

/// New setpoint for an existing anchor, shaped like the anchor's kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AnchorTarget {
    Joint(f64),
    Com(Vector3<f64>),
    Pose(Isometry3<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AnchorDoc", into = "AnchorDoc")]
pub struct Anchor {
    pub id: String,
    pub kind: AnchorKind,
    pub tier: WeightTier,
    pub contact: bool,
    pub persistent: bool,
    pub follow: FollowMode,
    pub mirroring: bool,
    /// Fields this version does not know about, kept for the next save.
    pub extra: BTreeMap<String, Value>,
}

impl Anchor {
    fn with_kind(id: &str, kind: AnchorKind) -> Self {
        Anchor {
            id: id.to_string(),
            kind,
            tier: WeightTier::Medium,
            contact: false,
            persistent: false,
            follow: FollowMode::None,
            mirroring: false,
            extra: BTreeMap::new(),
        }
    }

    pub fn pose(id: &str, body: &str, offset: Isometry3<f64>, target: Isometry3<f64>, axes: [bool; 6]) -> Self {
        Self::with_kind(
            id,
            AnchorKind::Pose {
                body: body.to_string(),
                offset,
                target,
                axes,
                patch: Vec::new(),
            },
        )
    }

    pub fn com(id: &str, target: Vector3<f64>, axes: [bool; 3]) -> Self {
        Self::with_kind(id, AnchorKind::Com { target, axes })
    }

    pub fn joint(id: &str, joint: &str, target: f64) -> Self {
        Self::with_kind(
            id,
            AnchorKind::Joint {
                joint: joint.to_string(),
                target,
            },
        )
    }

    pub fn with_tier(mut self, tier: WeightTier) -> Self {
        self.tier = tier;
        self
    }

    pub fn as_contact(mut self) -> Self {
        self.contact = true;
        self
    }

    pub fn as_persistent(mut self) -> Self {
        self.persistent = true;
        self
    }

    pub fn with_follow(mut self, follow: FollowMode) -> Self {
        self.follow = follow;
        self
    }

    pub fn mirrored(mut self) -> Self {
        self.mirroring = true;
        self
    }

    pub fn with_patch(mut self, corners: Vec<Vector3<f64>>) -> Self {
        if let AnchorKind::Pose { patch, .. } = &mut self.kind {
            *patch = corners;
        }
        self
    }

    pub fn joint_name(&self) -> Option<&str> {
        match &self.kind {
            AnchorKind::Joint { joint, .. } => Some(joint),
            _ => None,
        }
    }

    pub fn body_name(&self) -> Option<&str> {
        match &self.kind {
            AnchorKind::Pose { body, .. } => Some(body),
            _ => None,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            AnchorKind::Pose { .. } => "pose",
            AnchorKind::Com { .. } => "com",
            AnchorKind::Joint { .. } => "joint",
        }
    }

    pub fn validate(&self, model: &RobotModel) -> Result<(), ScriptError> {
        let bad = |msg: String| Err(ScriptError::Anchor(self.id.clone(), msg));
        if self.id.is_empty() {
            return Err(ScriptError::Anchor(String::new(), "anchor id must not be empty".into()));
        }
        match &self.kind {
            AnchorKind::Pose {
                body,
                offset,
                target,
                axes,
                patch,
            } => {
                if model.body_index(body).is_err() {
                    return bad(format!("unknown body `{body}`"));
                }
                if !axes.iter().any(|&a| a) {
                    return bad("axis mask is empty".into());
                }
                let finite = |i: &Isometry3<f64>| {
                    i.translation.vector.iter().chain(i.rotation.coords.iter()).all(|v| v.is_finite())
                };
                if !finite(offset) || !finite(target) || !patch.iter().flatten().all(|v| v.is_finite()) {
                    return bad("non-finite pose".into());
                }
            }
            AnchorKind::Com { target, axes } => {
                if !axes.iter().any(|&a| a) {
                    return bad("axis mask is empty".into());
                }
                if !target.iter().all(|v| v.is_finite()) {
                    return bad("non-finite target".into());
                }
            }
            AnchorKind::Joint { joint, target } => {
                let j = match model.joint(joint) {
                    Ok(j) => j,
                    Err(_) => return bad(format!("unknown joint `{joint}`")),
                };
                if j.dof() != 1 {
                    return bad(format!("joint `{joint}` has {} coordinates", j.dof()));
                }
                if !target.is_finite() {
                    return bad("non-finite target".into());
                }
            }
        }
        if self.contact && !matches!(self.kind, AnchorKind::Pose { .. }) {
            return bad("only pose anchors can be contact anchors".into());
        }
        if self.mirroring {
            match &self.kind {
                AnchorKind::Joint { joint, .. } => {
                    if model.mirror_of(joint).is_none() {
                        return Err(ScriptError::Mirror(format!(
                            "anchor `{}`: joint `{joint}` has no mirror partner",
                            self.id
                        )));
                    }
                }
                _ => {
                    return Err(ScriptError::Mirror(format!(
                        "anchor `{}`: only joint anchors can mirror",
                        self.id
                    )))
                }
            }
        }
        Ok(())
    }

    /// Solver weight: the contact weight for contact anchors, else the tier weight.
    pub fn weight(&self, settings: &SolverSettings) -> f64 {
        if self.contact {
            settings.contact_weight
        } else {
            settings.tier_weight(self.tier)
        }
    }

    pub fn task(&self, settings: &SolverSettings) -> KinematicTask {
        let target = match &self.kind {
            AnchorKind::Pose {
                body,
                offset,
                target,
                axes,
                ..
            } => TaskTarget::SpatialPose {
                body: body.clone(),
                offset: *offset,
                target: *target,
                mask: *axes,
            },
            AnchorKind::Com { target, axes } => TaskTarget::Com {
                position: *target,
                mask: *axes,
            },
            AnchorKind::Joint { joint, target } => TaskTarget::JointPosition {
                joint: joint.clone(),
                position: *target,
            },
        };
        KinematicTask::new(self.id.clone(), target, self.weight(settings))
    }

    pub fn set_target(&mut self, new: &AnchorTarget) -> Result<(), ScriptError> {
        match (&mut self.kind, new) {
            (AnchorKind::Pose { target, .. }, AnchorTarget::Pose(p)) => *target = *p,
            (AnchorKind::Com { target, .. }, AnchorTarget::Com(p)) => *target = *p,
            (AnchorKind::Joint { target, .. }, AnchorTarget::Joint(p)) => *target = *p,
            _ => {
                return Err(ScriptError::Anchor(
                    self.id.clone(),
                    format!("target does not fit a {} anchor", self.kind_name()),
                ))
            }
        }
        Ok(())
    }

    /// Replace the setpoint by the value the robot achieves at `q`. Masked-out
    /// linear components keep their old value; the orientation is replaced
    /// when any angular axis is active.
    pub fn snap(&mut self, model: &RobotModel, kin: &Kinematics, q: &DVector<f64>) -> Result<(), ScriptError> {
        match &mut self.kind {
            AnchorKind::Pose {
                body,
                offset,
                target,
                axes,
                ..
            } => {
                let achieved = kin.body_poses[model.body_index(body)?] * *offset;
                if axes[..3].iter().any(|&a| a) {
                    target.rotation = achieved.rotation;
                }
                for k in 0..3 {
                    if axes[3 + k] {
                        target.translation.vector[k] = achieved.translation.vector[k];
                    }
                }
            }
            AnchorKind::Com { target, axes } => {
                let c = center_of_mass(model, q)?;
                for k in 0..3 {
                    if axes[k] {
                        target[k] = c[k];
                    }
                }
            }
            AnchorKind::Joint { joint, target } => {
                *target = q[model.joint_coordinate(joint)?];
            }
        }
        Ok(())
    }

    /// Point contacts registered by a contact anchor: one per patch corner,
    /// with the environment normal taken as the reversed target z axis.
    pub fn contact_points(&self) -> Vec<ContactPoint> {
        match (&self.kind, self.contact) {
            (
                AnchorKind::Pose {
                    body,
                    offset,
                    target,
                    patch,
                    ..
                },
                true,
            ) => {
                let normal = -(target.rotation * Vector3::z());
                let corners: Vec<Vector3<f64>> = if patch.is_empty() { vec![Vector3::zeros()] } else { patch.clone() };
                corners
                    .iter()
                    .map(|c| ContactPoint::new(body, (offset * Point3::from(*c)).coords, normal))
                    .collect()
            }
            _ => Vec::new(),
        }
    }
}

/// Snap every anchor to the puppet configuration `q`.
pub fn snap_anchors_to_puppet(anchors: &[Anchor], model: &RobotModel, q: &DVector<f64>) -> Result<Vec<Anchor>, ScriptError> {
    let kin = forward_kinematics(model, q)?;
    anchors
        .iter()
        .map(|a| {
            let mut a = a.clone();
            a.snap(model, &kin, q)?;
            Ok(a)
        })
        .collect()
}

/// Only the persistent anchors, in their original order.
pub fn clear_non_persistent(anchors: &[Anchor]) -> Vec<Anchor> {
    anchors.iter().filter(|a| a.persistent).cloned().collect()
}

// ---------------------------------------------------------------------------
// File form

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum KindTag {
    Pose,
    Com,
    Joint,
}

#[derive(Serialize, Deserialize)]
struct AnchorDoc {
    id: String,
    kind: KindTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    body: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    joint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    offset: Option<Isometry3<f64>>,
    target: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    axes: Option<Vec<bool>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    patch: Option<Vec<Vector3<f64>>>,
    #[serde(default = "default_tier")]
    tier: WeightTier,
    #[serde(default)]
    contact: bool,
    #[serde(default)]
    persistent: bool,
    #[serde(default)]
    follow: FollowMode,
    #[serde(default)]
    mirroring: bool,
    #[serde(flatten)]
    extra: BTreeMap<String, Value>,
}

fn default_tier() -> WeightTier {
    WeightTier::Medium
}

fn mask<const N: usize>(id: &str, axes: Option<Vec<bool>>) -> Result<[bool; N], String> {
    match axes {
        None => Ok([true; N]),
        Some(v) => v
            .try_into()
            .map_err(|v: Vec<bool>| format!("anchor `{id}`: expected {N} axis flags, got {}", v.len())),
    }
}

impl TryFrom<AnchorDoc> for Anchor {
    type Error = String;

    fn try_from(d: AnchorDoc) -> Result<Self, String> {
        let id = d.id;
        let target = |v: Value| -> Result<AnchorTarget, String> {
            serde_json::from_value(v).map_err(|e| format!("anchor `{id}`: bad target: {e}"))
        };
        let missing = |f: &str| format!("anchor `{id}`: missing `{f}`");
        let kind = match d.kind {
            KindTag::Pose => {
                let AnchorTarget::Pose(t) = target(d.target)? else {
                    return Err(format!("anchor `{id}`: pose target needs rotation and translation"));
                };
                AnchorKind::Pose {
                    body: d.body.ok_or_else(|| missing("body"))?,
                    offset: d.offset.unwrap_or_else(Isometry3::identity),
                    target: t,
                    axes: mask(&id, d.axes)?,
                    patch: d.patch.unwrap_or_default(),
                }
            }
            KindTag::Com => {
                let AnchorTarget::Com(t) = target(d.target)? else {
                    return Err(format!("anchor `{id}`: CoM target must be a 3-vector"));
                };
                AnchorKind::Com {
                    target: t,
                    axes: mask(&id, d.axes)?,
                }
            }
            KindTag::Joint => {
                let AnchorTarget::Joint(t) = target(d.target)? else {
                    return Err(format!("anchor `{id}`: joint target must be a number"));
                };
                AnchorKind::Joint {
                    joint: d.joint.ok_or_else(|| missing("joint"))?,
                    target: t,
                }
            }
        };
        Ok(Anchor {
            id,
            kind,
            tier: d.tier,
            contact: d.contact,
            persistent: d.persistent,
            follow: d.follow,
            mirroring: d.mirroring,
            extra: d.extra,
        })
    }
}

impl From<Anchor> for AnchorDoc {
    fn from(a: Anchor) -> Self {
        let mut doc = AnchorDoc {
            id: a.id,
            kind: KindTag::Joint,
            body: None,
            joint: None,
            offset: None,
            target: Value::Null,
            axes: None,
            patch: None,
            tier: a.tier,
            contact: a.contact,
            persistent: a.persistent,
            follow: a.follow,
            mirroring: a.mirroring,
            extra: a.extra,
        };
        let to_value = |t: AnchorTarget| serde_json::to_value(t).expect("targets serialize");
        match a.kind {
            AnchorKind::Pose {
                body,
                offset,
                target,
                axes,
                patch,
            } => {
                doc.kind = KindTag::Pose;
                doc.body = Some(body);
                doc.offset = Some(offset);
                doc.target = to_value(AnchorTarget::Pose(target));
                doc.axes = Some(axes.to_vec());
                doc.patch = (!patch.is_empty()).then_some(patch);
            }
            AnchorKind::Com { target, axes } => {
                doc.kind = KindTag::Com;
                doc.target = to_value(AnchorTarget::Com(target));
                doc.axes = Some(axes.to_vec());
            }
            AnchorKind::Joint { joint, target } => {
                doc.joint = Some(joint);
                doc.target = to_value(AnchorTarget::Joint(target));
            }
        }
        doc
    }
}
