use std::collections::VecDeque;
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::anchor::{clear_non_persistent, snap_anchors_to_puppet};
use super::{Anchor, AnchorKind, AnchorTarget, FollowMode, KeyFrame, Profile, Script, ScriptError};
use crate::feasibility::{
    support_region_flat, support_region_multicontact, ContactPoint, RegionMode, RegionOptions, SupportRegion,
};
use crate::geometry::Environment;
use crate::ik::{self, IkProblem, SolveDiagnostics, SolveStatus, SolverSettings, WeightTier};
use crate::kinematics::{forward_kinematics, RobotModel};

pub const DEFAULT_UNDO_DEPTH: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case")]
pub enum AnchorEdit {
    Create {
        anchor: Anchor,
    },
    Move {
        id: String,
        target: AnchorTarget,
    },
    Retier {
        id: String,
        tier: WeightTier,
    },
    Flag {
        id: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        contact: Option<bool>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        persistent: Option<bool>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        follow: Option<FollowMode>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mirroring: Option<bool>,
    },
    Remove {
        id: String,
    },
}

impl AnchorEdit {
    pub fn id(&self) -> &str {
        match self {
            AnchorEdit::Create { anchor } => &anchor.id,
            AnchorEdit::Move { id, .. }
            | AnchorEdit::Retier { id, .. }
            | AnchorEdit::Flag { id, .. }
            | AnchorEdit::Remove { id } => id,
        }
    }
}

fn find(anchors: &[Anchor], id: &str) -> Result<usize, ScriptError> {
    anchors
        .iter()
        .position(|a| a.id == id)
        .ok_or_else(|| ScriptError::UnknownAnchor(id.to_string()))
}

/// The mirroring joint anchor on the partner of `joint`, if any.
fn partner_of(anchors: &[Anchor], model: &RobotModel, joint: &str, exclude: &str) -> Option<usize> {
    let partner = model.mirror_of(joint)?.name.clone();
    anchors
        .iter()
        .position(|a| a.id != exclude && a.mirroring && a.joint_name() == Some(partner.as_str()))
}

fn mirror_id(anchors: &[Anchor], id: &str) -> String {
    let base = id.strip_suffix("-mirror").map(str::to_string).unwrap_or_else(|| format!("{id}-mirror"));
    let mut candidate = base.clone();
    let mut n = 2;
    while anchors.iter().any(|a| a.id == candidate) {
        candidate = format!("{base}{n}");
        n += 1;
    }
    candidate
}

/// Copy of a mirroring joint anchor placed on the partner joint.
fn mirrored_copy(anchors: &[Anchor], model: &RobotModel, a: &Anchor) -> Result<Anchor, ScriptError> {
    let joint = a.joint_name().expect("validated joint anchor");
    let partner = model
        .mirror_of(joint)
        .ok_or_else(|| ScriptError::Mirror(format!("joint `{joint}` has no mirror partner")))?;
    let mut m = a.clone();
    m.id = mirror_id(anchors, &a.id);
    if let AnchorKind::Joint { joint, .. } = &mut m.kind {
        *joint = partner.name.clone();
    }
    Ok(m)
}

/// Apply one edit, mirroring joint edits onto the partner joint. The input is
/// untouched on error.
pub fn apply_anchor_edit(anchors: &[Anchor], model: &RobotModel, edit: &AnchorEdit) -> Result<Vec<Anchor>, ScriptError> {
    let mut out = anchors.to_vec();
    match edit {
        AnchorEdit::Create { anchor } => {
            if out.iter().any(|a| a.id == anchor.id) {
                return Err(ScriptError::DuplicateAnchor(anchor.id.clone()));
            }
            anchor.validate(model)?;
            out.push(anchor.clone());
            let last = out.len() - 1;
            sync_mirror(&mut out, model, last)?;
        }
        AnchorEdit::Remove { id } => {
            let i = find(&out, id)?;
            let removed = out.remove(i);
            if removed.mirroring {
                if let Some(p) = partner_of(&out, model, removed.joint_name().unwrap_or_default(), id) {
                    out.remove(p);
                }
            }
        }
        AnchorEdit::Move { id, target } => {
            let i = find(&out, id)?;
            out[i].set_target(target)?;
            sync_mirror(&mut out, model, i)?;
        }
        AnchorEdit::Retier { id, tier } => {
            let i = find(&out, id)?;
            out[i].tier = *tier;
            sync_mirror(&mut out, model, i)?;
        }
        AnchorEdit::Flag {
            id,
            contact,
            persistent,
            follow,
            mirroring,
        } => {
            let i = find(&out, id)?;
            let was_mirroring = out[i].mirroring;
            let a = &mut out[i];
            if let Some(v) = contact {
                a.contact = *v;
            }
            if let Some(v) = persistent {
                a.persistent = *v;
            }
            if let Some(v) = follow {
                a.follow = *v;
            }
            if let Some(v) = mirroring {
                a.mirroring = *v;
            }
            a.validate(model)?;
            if was_mirroring && !out[i].mirroring {
                // Turning mirroring off also turns it off on the partner.
                if let Some(p) = partner_of(&out, model, out[i].joint_name().unwrap_or_default(), id) {
                    out[p].mirroring = false;
                }
            } else {
                sync_mirror(&mut out, model, i)?;
            }
        }
    }
    Ok(out)
}

/// Make the partner of a mirroring joint anchor match it, creating the
/// partner when missing.
fn sync_mirror(out: &mut Vec<Anchor>, model: &RobotModel, i: usize) -> Result<(), ScriptError> {
    let a = out[i].clone();
    if !a.mirroring {
        return Ok(());
    }
    a.validate(model)?;
    let joint = a.joint_name().expect("validated joint anchor");
    match partner_of(out, model, joint, &a.id) {
        Some(p) => {
            let m = &mut out[p];
            if let (AnchorKind::Joint { target, .. }, AnchorKind::Joint { target: t, .. }) = (&mut m.kind, &a.kind) {
                *target = *t;
            }
            m.tier = a.tier;
            m.persistent = a.persistent;
            m.follow = a.follow;
        }
        None => {
            let m = mirrored_copy(out, model, &a)?;
            out.push(m);
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct UndoEntry {
    pub keyframe: KeyFrame,
    pub controller_q: DVector<f64>,
    pub puppet_q: DVector<f64>,
    pub converged: bool,
}

/// Bounded stack; pushing onto a full stack forgets the oldest entry.
#[derive(Clone, Debug, PartialEq)]
pub struct UndoStack {
    entries: VecDeque<UndoEntry>,
    depth: usize,
}

impl Default for UndoStack {
    fn default() -> Self {
        Self::new(DEFAULT_UNDO_DEPTH)
    }
}

impl UndoStack {
    pub fn new(depth: usize) -> Self {
        UndoStack {
            entries: VecDeque::new(),
            depth: depth.max(1),
        }
    }

    pub fn push(&mut self, entry: UndoEntry) {
        if self.entries.len() == self.depth {
            self.entries.pop_front();
        }
        self.entries.push_back(entry);
    }

    pub fn pop(&mut self) -> Option<UndoEntry> {
        self.entries.pop_back()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn depth(&self) -> usize {
        self.depth
    }
}

/// Everything an authoring session mutates.
#[derive(Clone, Debug, PartialEq)]
pub struct AuthoringState {
    pub anchors: Vec<Anchor>,
    pub controller_q: DVector<f64>,
    pub puppet_q: DVector<f64>,
    /// Posture the null-space drive pulls toward; the model nominal when unset.
    pub nominal_q: Option<DVector<f64>>,
    pub keyframes: Vec<KeyFrame>,
    pub region_mode: RegionMode,
    /// Whether the puppet state is a converged solve (or the untouched start).
    pub converged: bool,
    pub undo: UndoStack,
}

/// Model, environment and settings around an [`AuthoringState`].
#[derive(Clone, Debug)]
pub struct AuthoringSession {
    pub model: Arc<RobotModel>,
    pub environment: Arc<Environment>,
    pub settings: SolverSettings,
    pub region_options: RegionOptions,
    pub profile: Profile,
    pub state: AuthoringState,
}

impl AuthoringSession {
    /// A session at `start`, or the model nominal when `None`.
    pub fn new(model: Arc<RobotModel>, environment: Arc<Environment>, start: Option<DVector<f64>>) -> Result<Self, ScriptError> {
        let q = start.unwrap_or_else(|| model.nominal_q.clone());
        model.check_configuration(&q)?;
        Ok(AuthoringSession {
            state: AuthoringState {
                anchors: Vec::new(),
                controller_q: q.clone(),
                puppet_q: q,
                nominal_q: None,
                keyframes: Vec::new(),
                region_mode: RegionMode::Flat,
                converged: true,
                undo: UndoStack::default(),
            },
            model,
            environment,
            settings: SolverSettings::default(),
            region_options: RegionOptions::default(),
            profile: Profile::Simulation,
        })
    }

    /// Resume from a script: keyframes restored, anchors and both robots at
    /// the last keyframe.
    pub fn from_script(model: Arc<RobotModel>, environment: Arc<Environment>, script: &Script) -> Result<Self, ScriptError> {
        script.validate(&model)?;
        let start = script.keyframes.last().map(|k| k.puppet_q.clone());
        let mut s = Self::new(model, environment, start)?;
        if let Some(last) = script.keyframes.last() {
            s.state.anchors = last.anchors.clone();
            s.state.region_mode = last.region_mode;
        }
        s.state.keyframes = script.keyframes.clone();
        Ok(s)
    }

    pub fn to_script(&self) -> Script {
        let mut s = Script::new(&self.model.name, &self.environment.name);
        s.keyframes = self.state.keyframes.clone();
        s
    }

    pub fn edit(&mut self, edit: &AnchorEdit) -> Result<(), ScriptError> {
        self.state.anchors = apply_anchor_edit(&self.state.anchors, &self.model, edit)?;
        Ok(())
    }

    pub fn clear_non_persistent(&mut self) {
        self.state.anchors = clear_non_persistent(&self.state.anchors);
    }

    pub fn snap_anchors(&mut self) -> Result<(), ScriptError> {
        self.state.anchors = snap_anchors_to_puppet(&self.state.anchors, &self.model, &self.state.puppet_q)?;
        Ok(())
    }

    pub fn snap_nominal(&mut self) {
        self.state.nominal_q = Some(self.state.puppet_q.clone());
    }

    pub fn contacts(&self) -> Vec<ContactPoint> {
        contacts_of(&self.state.anchors)
    }

    /// Support region of the contact anchors at the puppet configuration;
    /// `None` without contact anchors.
    pub fn support_region(&self, mode: RegionMode) -> Result<Option<SupportRegion>, ScriptError> {
        region_at(&self.model, &self.state.puppet_q, &self.contacts(), mode, &self.region_options)
    }

    /// Run the solver from the puppet configuration. A failed solve leaves
    /// the puppet where it was.
    pub fn solve(&mut self) -> Result<SolveDiagnostics, ScriptError> {
        let nominal = self.state.nominal_q.clone();
        let (q, diag, anchors) = solve_anchors(
            &self.model,
            &self.environment,
            &self.state.anchors,
            &self.state.controller_q,
            &self.state.puppet_q,
            nominal.as_ref(),
            &self.settings,
            self.state.region_mode,
            &self.region_options,
        )?;
        self.state.anchors = anchors;
        match diag.status {
            SolveStatus::Converged => {
                self.state.puppet_q = q;
                self.state.converged = true;
            }
            SolveStatus::MaxIterations => {
                self.state.puppet_q = q;
                self.state.converged = false;
            }
            _ => {}
        }
        Ok(diag)
    }

    /// Store the puppet as a keyframe and dispatch it: the controller
    /// reference moves to the puppet pose.
    pub fn record_keyframe(&mut self, duration_s: Option<f64>) -> Result<usize, ScriptError> {
        if !self.state.converged {
            return Err(ScriptError::NotConverged);
        }
        if let Some(d) = duration_s {
            if !(d > 0.0 && d.is_finite()) {
                return Err(ScriptError::Schema(format!("duration_s must be positive, got {d}")));
            }
        }
        let index = self.state.keyframes.len();
        let kf = KeyFrame {
            index,
            controller_q: self.state.controller_q.clone(),
            puppet_q: self.state.puppet_q.clone(),
            anchors: self.state.anchors.clone(),
            nominal_q: self.state.nominal_q.clone(),
            duration_s,
            region_mode: self.state.region_mode,
            notes: String::new(),
            extra: Default::default(),
        };
        self.state.undo.push(UndoEntry {
            keyframe: kf.clone(),
            controller_q: self.state.controller_q.clone(),
            puppet_q: self.state.puppet_q.clone(),
            converged: self.state.converged,
        });
        self.state.keyframes.push(kf);
        self.state.controller_q = self.state.puppet_q.clone();
        Ok(index)
    }

    /// Rewind the last recorded keyframe. `None` when there is nothing to undo.
    pub fn undo(&mut self) -> Option<KeyFrame> {
        let entry = self.state.undo.pop()?;
        if self.state.keyframes.last() == Some(&entry.keyframe) {
            self.state.keyframes.pop();
        } else {
            log::warn!("undo: keyframe {} is no longer the last one; keyframes left as is", entry.keyframe.index);
        }
        self.state.controller_q = entry.controller_q;
        self.state.puppet_q = entry.puppet_q;
        self.state.converged = entry.converged;
        Some(entry.keyframe)
    }
}

pub fn contacts_of(anchors: &[Anchor]) -> Vec<ContactPoint> {
    anchors.iter().flat_map(|a| a.contact_points()).collect()
}

pub fn region_at(
    model: &RobotModel,
    q: &DVector<f64>,
    contacts: &[ContactPoint],
    mode: RegionMode,
    options: &RegionOptions,
) -> Result<Option<SupportRegion>, ScriptError> {
    if contacts.is_empty() {
        return Ok(None);
    }
    let region = match mode {
        RegionMode::Flat => support_region_flat(model, q, contacts)?,
        RegionMode::MultiContact => support_region_multicontact(model, q, contacts, options)?,
    };
    Ok(Some(region))
}

/// Re-target following anchors from `controller_q`; snap-once anchors then
/// stop following.
pub fn apply_follow(anchors: &[Anchor], model: &RobotModel, controller_q: &DVector<f64>) -> Result<Vec<Anchor>, ScriptError> {
    if anchors.iter().all(|a| a.follow == FollowMode::None) {
        return Ok(anchors.to_vec());
    }
    let kin = forward_kinematics(model, controller_q)?;
    let mut out = anchors.to_vec();
    for a in &mut out {
        match a.follow {
            FollowMode::None => {}
            FollowMode::TrackController => a.snap(model, &kin, controller_q)?,
            FollowMode::SnapOnce => {
                a.snap(model, &kin, controller_q)?;
                a.follow = FollowMode::None;
            }
        }
    }
    Ok(out)
}

/// One solve of an anchor set from `start`. Returns the solved configuration,
/// diagnostics, and the anchors after follow re-targeting.
#[allow(clippy::too_many_arguments)]
pub fn solve_anchors(
    model: &RobotModel,
    environment: &Environment,
    anchors: &[Anchor],
    controller_q: &DVector<f64>,
    start: &DVector<f64>,
    nominal: Option<&DVector<f64>>,
    settings: &SolverSettings,
    mode: RegionMode,
    region_options: &RegionOptions,
) -> Result<(DVector<f64>, SolveDiagnostics, Vec<Anchor>), ScriptError> {
    let anchors = apply_follow(anchors, model, controller_q)?;
    let tasks: Vec<_> = anchors.iter().map(|a| a.task(settings)).collect();
    let region = if settings.com_constraint {
        region_at(model, start, &contacts_of(&anchors), mode, region_options)?
    } else {
        None
    };
    let mut problem = IkProblem::new(model, &tasks).with_environment(environment);
    if let Some(r) = region.as_ref() {
        problem = problem.with_region(r);
    }
    if let Some(n) = nominal {
        problem = problem.with_nominal(n);
    }
    let (q, diag) = ik::solve(&problem, start, settings)?;
    Ok((q, diag, anchors))
}

/// Re-solve a stored keyframe from its controller configuration.
pub fn solve_keyframe(
    model: &RobotModel,
    environment: &Environment,
    keyframe: &KeyFrame,
    settings: &SolverSettings,
    region_options: &RegionOptions,
) -> Result<(DVector<f64>, SolveDiagnostics), ScriptError> {
    let (q, diag, _) = solve_anchors(
        model,
        environment,
        &keyframe.anchors,
        &keyframe.controller_q,
        &keyframe.controller_q,
        keyframe.nominal_q.as_ref(),
        settings,
        keyframe.region_mode,
        region_options,
    )?;
    Ok((q, diag))
}
