use std::collections::BTreeMap;

use nalgebra::{Isometry3, Translation3, Vector3};
use serde::Serialize;

use super::protocol::*;
use crate::feasibility::{force_polytope, stability_margin, static_torques, RegionMode};
use crate::geometry::contact::rotation_between;
use crate::geometry::{project_to_surface, ConvexPolytope};
use crate::ik::{SolveDiagnostics, SolveStatus};
use crate::kinematics::{center_of_mass, forward_kinematics};
use crate::script::{apply_anchor_edit, region_at, AnchorEdit, AnchorKind, AnchorTarget, AuthoringSession, AuthoringState, ScriptError};

/// Task residual above which a converged solve is reported as not reaching
/// its targets (m or rad).
pub const REACH_TOLERANCE: f64 = 1e-4;

/// Drop-intermediate drag buffer: only the latest pose per anchor survives
/// until the next solve, and solves are at least one tick apart.
#[derive(Clone, Debug, PartialEq)]
pub struct DragCoalescer {
    pending: BTreeMap<String, AnchorTarget>,
    period: f64,
    next_solve: f64,
}

impl DragCoalescer {
    pub fn new(tick_hz: f64) -> Self {
        DragCoalescer {
            pending: BTreeMap::new(),
            period: 1.0 / tick_hz,
            next_solve: f64::NEG_INFINITY,
        }
    }

    pub fn offer(&mut self, id: &str, target: AnchorTarget) {
        self.pending.insert(id.to_string(), target);
    }

    pub fn has_pending(&self) -> bool {
        !self.pending.is_empty()
    }

    pub fn due(&self, now: f64) -> bool {
        self.has_pending() && now >= self.next_solve
    }

    /// Take the pending poses and schedule the next tick. Ticks stay on a
    /// fixed grid unless the session fell more than a period behind.
    pub fn take(&mut self, now: f64) -> BTreeMap<String, AnchorTarget> {
        self.next_solve = if now - self.next_solve < self.period {
            self.next_solve + self.period
        } else {
            now + self.period
        };
        std::mem::take(&mut self.pending)
    }

    pub fn set_rate(&mut self, tick_hz: f64) {
        self.period = 1.0 / tick_hz;
    }

    pub fn tick_hz(&self) -> f64 {
        1.0 / self.period
    }
}

/// Everything a message may change, for atomicity checks.
#[derive(Clone, Debug, PartialEq)]
pub struct SessionSnapshot {
    pub state: AuthoringState,
    pub revision: u64,
    pub last_seq: u64,
    pub dirty: bool,
    pub contact_mode: bool,
    pub settings: crate::ik::SolverSettings,
    pub drag: DragCoalescer,
}

/// Server-side authoring session. Every change is the result of one
/// processed message; rejected messages leave it untouched.
#[derive(Clone, Debug)]
pub struct Session {
    pub id: String,
    pub authoring: AuthoringSession,
    pub revision: u64,
    pub last_seq: u64,
    /// Keyframes or anchors changed since the last export.
    pub dirty: bool,
    pub contact_mode: bool,
    /// Completed solves, including drag ticks.
    pub solves: u64,
    drag: DragCoalescer,
    last_solve: Option<SolveDiagnostics>,
}

fn outcome_error(code: ErrorCode, message: impl Into<String>) -> (ErrorCode, String) {
    (code, message.into())
}

type Rejection = (ErrorCode, String);

impl Session {
    pub fn new(id: impl Into<String>, authoring: AuthoringSession) -> Self {
        Session {
            id: id.into(),
            authoring,
            revision: 0,
            last_seq: 0,
            dirty: false,
            contact_mode: false,
            solves: 0,
            drag: DragCoalescer::new(DEFAULT_TICK_HZ),
            last_solve: None,
        }
    }

    pub fn snapshot(&self) -> SessionSnapshot {
        SessionSnapshot {
            state: self.authoring.state.clone(),
            revision: self.revision,
            last_seq: self.last_seq,
            dirty: self.dirty,
            contact_mode: self.contact_mode,
            settings: self.authoring.settings.clone(),
            drag: self.drag.clone(),
        }
    }

    pub fn set_tick_hz(&mut self, tick_hz: f64) {
        self.drag.set_rate(tick_hz);
    }

    pub fn tick_hz(&self) -> f64 {
        self.drag.tick_hz()
    }

    pub fn has_pending_drag(&self) -> bool {
        self.drag.has_pending()
    }

    fn error(&self, ack: Option<u64>, code: ErrorCode, message: impl Into<String>) -> Outbound {
        Outbound::new(
            OutKind::Error,
            ack,
            ErrorPayload {
                code,
                message: message.into(),
                expected_seq: self.last_seq + 1,
                revision: self.revision,
            },
        )
    }

    pub fn hello(&self, resumed: bool) -> Outbound {
        Outbound::new(
            OutKind::Hello,
            None,
            Hello {
                session: self.id.clone(),
                resumed,
                last_seq: self.last_seq,
                tick_hz: self.tick_hz(),
                state: self.state_payload(false, None),
            },
        )
    }

    pub fn heartbeat(&self) -> Outbound {
        #[derive(Serialize)]
        struct Beat {
            session: String,
            revision: u64,
            last_seq: u64,
        }
        Outbound::new(
            OutKind::Heartbeat,
            None,
            Beat {
                session: self.id.clone(),
                revision: self.revision,
                last_seq: self.last_seq,
            },
        )
    }

    /// Handle one line at time `now` (seconds on any monotonic clock).
    pub fn handle_line(&mut self, line: &str, now: f64) -> Vec<Outbound> {
        match parse_incoming(line) {
            Ok(Incoming::Command { seq, command }) => self.handle(seq, command, now),
            Ok(Incoming::Heartbeat) => vec![self.heartbeat()],
            Ok(Incoming::Hello { .. }) => vec![self.error(None, ErrorCode::Rejected, "session already attached")],
            Err(ParseFailure::Malformed(m)) => vec![self.error(None, ErrorCode::Malformed, m)],
            Err(ParseFailure::BadProto(p)) => vec![self.error(
                None,
                ErrorCode::BadProto,
                format!("unsupported protocol version {p:?}; expected \"proto\":{PROTO_VERSION}"),
            )],
            Err(ParseFailure::UnknownType(t)) => vec![self.error(None, ErrorCode::UnknownType, format!("unknown message type `{t}`"))],
            Err(ParseFailure::MissingSeq) => vec![self.error(None, ErrorCode::BadSequence, "missing sequence number `seq`")],
            Err(ParseFailure::Payload { seq, message }) => {
                if seq != self.last_seq + 1 {
                    vec![self.bad_seq(seq)]
                } else {
                    vec![self.error(Some(seq), ErrorCode::BadPayload, message)]
                }
            }
        }
    }

    fn bad_seq(&self, seq: u64) -> Outbound {
        self.error(
            Some(seq),
            ErrorCode::BadSequence,
            format!("sequence number {seq} out of order; expected {}", self.last_seq + 1),
        )
    }

    /// Apply one validated command. Rejections leave the session untouched;
    /// accepted commands advance `last_seq`.
    pub fn handle(&mut self, seq: u64, command: Command, now: f64) -> Vec<Outbound> {
        if seq != self.last_seq + 1 {
            return vec![self.bad_seq(seq)];
        }
        let mut work = self.clone();
        match work.apply(seq, command, now) {
            Ok(mut out) => {
                work.last_seq = seq;
                *self = work;
                out.extend(self.tick(now));
                out
            }
            Err((code, message)) => vec![self.error(Some(seq), code, message)],
        }
    }

    /// Run a drag solve when poses are pending and a tick has elapsed.
    pub fn tick(&mut self, now: f64) -> Vec<Outbound> {
        if !self.drag.due(now) {
            return Vec::new();
        }
        self.flush_drag(now, None)
    }

    /// Solve the pending drag poses now, ignoring the tick.
    pub fn flush_drag(&mut self, now: f64, ack: Option<u64>) -> Vec<Outbound> {
        let mut poses = self.drag.take(now);
        // Poses of anchors removed since they were queued are dropped.
        poses.retain(|id, _| self.authoring.state.anchors.iter().any(|a| &a.id == id));
        if poses.is_empty() {
            return Vec::new();
        }
        let mut work = self.clone();
        for (id, target) in &poses {
            let target = work.contact_projection(id, target);
            let edit = AnchorEdit::Move { id: id.clone(), target };
            if let Err(e) = work.authoring.edit(&edit) {
                return vec![self.error(ack, ErrorCode::Rejected, e.to_string())];
            }
        }
        match work.solve_and_update(ack) {
            Ok(out) => {
                *self = work;
                out
            }
            Err((code, message)) => vec![self.error(ack, code, message)],
        }
    }

    fn apply(&mut self, seq: u64, command: Command, now: f64) -> Result<Vec<Outbound>, Rejection> {
        let ack = Some(seq);
        let reject = |e: ScriptError| outcome_error(ErrorCode::Rejected, e.to_string());
        match command {
            Command::AnchorEdit(edit) => {
                self.authoring.edit(&edit).map_err(reject)?;
                self.dirty = true;
                Ok(vec![self.update(ack)])
            }
            Command::SolveTick => {
                let out = if self.drag.has_pending() { self.flush_drag(now, ack) } else { Vec::new() };
                if !out.is_empty() {
                    if out.iter().any(|o| o.kind == OutKind::Error && o.error().is_some_and(|e| !e.code.is_notice())) {
                        return Err(first_error(&out));
                    }
                    return Ok(out);
                }
                self.solve_and_update(ack)
            }
            Command::DragPose(p) => {
                // Validate against a scratch copy so a bad pose is rejected now.
                let edit = AnchorEdit::Move {
                    id: p.id.clone(),
                    target: p.target.clone(),
                };
                apply_anchor_edit(&self.authoring.state.anchors, &self.authoring.model, &edit).map_err(reject)?;
                self.drag.offer(&p.id, p.target);
                Ok(vec![Outbound::new(OutKind::Ack, ack, serde_json::json!({"queued": p.id}))])
            }
            Command::RecordKeyframe(r) => {
                self.authoring.record_keyframe(r.duration_s).map_err(reject)?;
                self.dirty = true;
                Ok(vec![self.update(ack)])
            }
            Command::Undo => {
                if self.authoring.undo().is_none() {
                    return Err(outcome_error(ErrorCode::Rejected, "nothing to undo"));
                }
                self.dirty = true;
                Ok(vec![self.update(ack)])
            }
            Command::SnapAnchors => {
                self.authoring.snap_anchors().map_err(reject)?;
                self.dirty = true;
                Ok(vec![self.update(ack)])
            }
            Command::SnapNominal => {
                self.authoring.snap_nominal();
                Ok(vec![self.update(ack)])
            }
            Command::ClearAnchors => {
                self.authoring.clear_non_persistent();
                self.dirty = true;
                Ok(vec![self.update(ack)])
            }
            Command::SetRegionMode(m) => {
                self.authoring.state.region_mode = m.mode;
                Ok(vec![self.update(ack)])
            }
            Command::Configure(c) => {
                if let Some(s) = c.settings {
                    s.validate().map_err(|e| outcome_error(ErrorCode::BadPayload, e.to_string()))?;
                    self.authoring.settings = s;
                }
                if let Some(on) = c.com_constraint {
                    self.authoring.settings.com_constraint = on;
                }
                if let Some(on) = c.contact_mode {
                    self.contact_mode = on;
                }
                if let Some(hz) = c.tick_hz {
                    if !(hz > 0.0 && hz <= 1000.0) {
                        return Err(outcome_error(ErrorCode::BadPayload, "tick_hz must be in (0, 1000]"));
                    }
                    self.drag.set_rate(hz);
                }
                if let Some(p) = c.profile {
                    self.authoring.profile = p;
                }
                Ok(vec![self.update(ack)])
            }
            Command::QueryFeasibility(q) => {
                let mode = q.mode.unwrap_or(self.authoring.state.region_mode);
                self.revision += 1;
                let payload = self.feasibility_payload(mode, q.force_polytopes);
                Ok(vec![Outbound::new(OutKind::StateUpdate, ack, payload)])
            }
            Command::ExportScript => {
                let script = self.authoring.to_script();
                self.dirty = false;
                let value = serde_json::to_value(&script).map_err(|e| outcome_error(ErrorCode::Rejected, e.to_string()))?;
                Ok(vec![Outbound::new(OutKind::Script, ack, serde_json::json!({ "script": value }))])
            }
            Command::ProjectPoint(p) => {
                let proj = self
                    .project(&Vector3::from(p.point), p.surface)
                    .ok_or_else(|| outcome_error(ErrorCode::Rejected, "no surface to project onto"))?;
                Ok(vec![Outbound::new(OutKind::Projection, ack, proj)])
            }
        }
    }

    fn solve_and_update(&mut self, ack: Option<u64>) -> Result<Vec<Outbound>, Rejection> {
        let before = self.authoring.state.puppet_q.clone();
        let diag = self
            .authoring
            .solve()
            .map_err(|e| outcome_error(ErrorCode::SolverFailed, e.to_string()))?;
        self.solves += 1;
        match diag.status {
            SolveStatus::Converged => {
                let unreached: Vec<String> = diag
                    .task_residuals
                    .iter()
                    .filter(|r| r.norm > REACH_TOLERANCE)
                    .map(|r| format!("{} ({:.3e})", r.label, r.norm))
                    .collect();
                self.last_solve = Some(diag);
                let mut out = vec![self.update(ack)];
                if !unreached.is_empty() {
                    out.push(self.error(
                        ack,
                        ErrorCode::Unreached,
                        format!("targets not reached: {}", unreached.join(", ")),
                    ));
                }
                Ok(out)
            }
            SolveStatus::MaxIterations => {
                let iterations = diag.iterations;
                self.last_solve = Some(diag);
                let update = self.update(ack);
                let notice = self.error(
                    ack,
                    ErrorCode::NotConverged,
                    format!("solve stopped after {iterations} iterations; puppet held at the last feasible configuration"),
                );
                Ok(vec![update, notice])
            }
            status => {
                debug_assert_eq!(before, self.authoring.state.puppet_q);
                Err(outcome_error(
                    ErrorCode::SolverFailed,
                    format!("solver {status:?}; puppet reverted to the last stable configuration"),
                ))
            }
        }
    }

    /// Contact-mode drags place contact anchors on the nearest environment
    /// surface with their z axis against the surface normal.
    fn contact_projection(&self, id: &str, target: &AnchorTarget) -> AnchorTarget {
        let (AnchorTarget::Pose(pose), true) = (target, self.contact_mode) else {
            return target.clone();
        };
        let Some(anchor) = self.authoring.state.anchors.iter().find(|a| a.id == id) else {
            return target.clone();
        };
        if !anchor.contact || !matches!(anchor.kind, AnchorKind::Pose { .. }) {
            return target.clone();
        }
        let Some(proj) = self.project(&pose.translation.vector, Surface::Environment) else {
            return target.clone();
        };
        let normal = Vector3::from(proj.normal);
        let z = pose.rotation * Vector3::z();
        let rotation = rotation_between(&z, &-normal) * pose.rotation;
        AnchorTarget::Pose(Isometry3::from_parts(Translation3::from(Vector3::from(proj.point)), rotation))
    }

    fn project(&self, x: &Vector3<f64>, surface: Surface) -> Option<Projection> {
        let model = &self.authoring.model;
        let robot: Vec<ConvexPolytope>;
        let polys: &[ConvexPolytope] = match surface {
            Surface::Environment => &self.authoring.environment.polytopes,
            Surface::Robot => {
                let kin = forward_kinematics(model, &self.authoring.state.puppet_q).ok()?;
                robot = model
                    .bodies
                    .iter()
                    .enumerate()
                    .flat_map(|(b, body)| body.polytopes.iter().map(move |&pi| (b, pi)))
                    .map(|(b, pi)| model.polytopes[pi].transformed(&kin.body_poses[b]))
                    .collect();
                &robot
            }
        };
        polys
            .iter()
            .map(|p| {
                let (point, normal) = project_to_surface(p, x);
                (p, point, normal, (x - point).norm())
            })
            .min_by(|a, b| a.3.total_cmp(&b.3))
            .map(|(p, point, normal, distance)| Projection {
                point: point.into(),
                normal: normal.into(),
                polytope: p.name.clone(),
                distance,
            })
    }

    /// Bump the revision and describe the state.
    fn update(&mut self, ack: Option<u64>) -> Outbound {
        self.revision += 1;
        Outbound::new(OutKind::StateUpdate, ack, self.state_payload(false, None))
    }

    fn feasibility_payload(&self, mode: RegionMode, polytopes: bool) -> StateUpdate {
        self.state_payload(polytopes, Some(mode))
    }

    pub fn state_payload(&self, polytopes: bool, mode: Option<RegionMode>) -> StateUpdate {
        let a = &self.authoring;
        let q = &a.state.puppet_q;
        let mode = mode.unwrap_or(a.state.region_mode);
        let contacts = a.contacts();
        let region = region_at(&a.model, q, &contacts, mode, &a.region_options).ok().flatten();
        let com = center_of_mass(&a.model, q).unwrap_or_else(|_| Vector3::zeros());
        let margin = region.as_ref().map(|r| stability_margin(r, [com.x, com.y])).filter(|m| m.is_finite());
        let saturation = if contacts.is_empty() {
            Vec::new()
        } else {
            static_torques(&a.model, q, &contacts)
                .map(|r| {
                    r.joints
                        .into_iter()
                        .map(|j| JointSaturation {
                            joint: j.joint,
                            ratio: j.saturation.is_finite().then_some(j.saturation),
                        })
                        .collect()
                })
                .unwrap_or_default()
        };
        let force_polytopes = if polytopes {
            contacts.iter().filter_map(|c| force_polytope(&a.model, q, c).ok()).collect()
        } else {
            Vec::new()
        };
        let (solve, residuals) = match &self.last_solve {
            Some(d) => (
                Some(SolveSummary {
                    status: d.status,
                    iterations: d.iterations,
                    max_penetration: d.max_penetration,
                }),
                d.task_residuals.clone(),
            ),
            None => (None, Vec::new()),
        };
        StateUpdate {
            revision: self.revision,
            puppet_q: q.iter().copied().collect(),
            controller_q: a.state.controller_q.iter().copied().collect(),
            converged: a.state.converged,
            solve,
            residuals,
            anchors: a.state.anchors.clone(),
            region_mode: mode,
            region,
            com: com.into(),
            margin,
            force_polytopes,
            saturation,
            keyframes: a.state.keyframes.len(),
            undo_depth: a.state.undo.len(),
            dirty: self.dirty,
            com_constraint: a.settings.com_constraint,
            contact_mode: self.contact_mode,
        }
    }
}

fn first_error(out: &[Outbound]) -> Rejection {
    out.iter()
        .find_map(Outbound::error)
        .map(|e| (e.code, e.message))
        .unwrap_or((ErrorCode::SolverFailed, "solve failed".into()))
}
