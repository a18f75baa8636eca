//! Wire format: one JSON object per line, `{"proto":1,"type":…,"seq":…,"payload":…}`.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::feasibility::{ForcePolytope, RegionMode, SupportRegion};
use crate::ik::{SolveStatus, SolverSettings, TaskResidual};
use crate::script::{Anchor, AnchorEdit, AnchorTarget, Profile};

pub const PROTO_VERSION: u32 = 1;
pub const DEFAULT_TICK_HZ: f64 = 30.0;
pub const HEARTBEAT_SECONDS: f64 = 5.0;

/// Client commands after envelope and payload validation.
#[derive(Clone, Debug, PartialEq)]
pub enum Command {
    AnchorEdit(AnchorEdit),
    SolveTick,
    DragPose(DragPose),
    RecordKeyframe(RecordKeyframe),
    Undo,
    SnapAnchors,
    SnapNominal,
    ClearAnchors,
    SetRegionMode(SetRegionMode),
    Configure(Configure),
    QueryFeasibility(QueryFeasibility),
    ExportScript,
    ProjectPoint(ProjectPoint),
}

/// Command type names in wire order.
pub const COMMAND_TYPES: [&str; 13] = [
    "anchor_edit",
    "solve_tick",
    "drag_pose",
    "record_keyframe",
    "undo",
    "snap_anchors",
    "snap_nominal",
    "clear_anchors",
    "set_region_mode",
    "configure",
    "query_feasibility",
    "export_script",
    "project_point",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DragPose {
    pub id: String,
    pub target: AnchorTarget,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordKeyframe {
    #[serde(default)]
    pub duration_s: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetRegionMode {
    pub mode: RegionMode,
}

/// Partial update of session options; absent fields keep their value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Configure {
    #[serde(default)]
    pub settings: Option<SolverSettings>,
    #[serde(default)]
    pub com_constraint: Option<bool>,
    /// Project dragged contact anchors onto the nearest environment surface.
    #[serde(default)]
    pub contact_mode: Option<bool>,
    #[serde(default)]
    pub tick_hz: Option<f64>,
    #[serde(default)]
    pub profile: Option<Profile>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryFeasibility {
    /// Include force polytopes of every contact point.
    #[serde(default)]
    pub force_polytopes: bool,
    /// Region mode for this query; the session mode when absent.
    #[serde(default)]
    pub mode: Option<RegionMode>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Surface {
    Robot,
    Environment,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectPoint {
    pub point: [f64; 3],
    pub surface: Surface,
}

/// Envelope errors and payload errors, before any state is touched.
#[derive(Clone, Debug, PartialEq)]
pub enum ParseFailure {
    /// Not JSON or not an object.
    Malformed(String),
    BadProto(Option<u64>),
    UnknownType(String),
    MissingSeq,
    /// Envelope fine, payload not.
    Payload { seq: u64, message: String },
}

#[derive(Clone, Debug, PartialEq)]
pub enum Incoming {
    Hello { session: Option<String> },
    Heartbeat,
    Command { seq: u64, command: Command },
}

fn payload<T: serde::de::DeserializeOwned>(seq: u64, v: Value) -> Result<T, ParseFailure> {
    let v = if v.is_null() { Value::Object(Default::default()) } else { v };
    serde_json::from_value(v).map_err(|e| ParseFailure::Payload { seq, message: e.to_string() })
}

fn empty(seq: u64, v: &Value) -> Result<(), ParseFailure> {
    match v {
        Value::Null => Ok(()),
        Value::Object(m) if m.is_empty() => Ok(()),
        _ => Err(ParseFailure::Payload {
            seq,
            message: "payload must be empty".into(),
        }),
    }
}

pub fn parse_incoming(line: &str) -> Result<Incoming, ParseFailure> {
    let v: Value = serde_json::from_str(line).map_err(|e| ParseFailure::Malformed(e.to_string()))?;
    let Value::Object(mut obj) = v else {
        return Err(ParseFailure::Malformed("message must be a JSON object".into()));
    };
    match obj.get("proto") {
        Some(Value::Number(n)) if n.as_u64() == Some(PROTO_VERSION as u64) => {}
        Some(Value::Number(n)) => return Err(ParseFailure::BadProto(n.as_u64())),
        _ => return Err(ParseFailure::BadProto(None)),
    }
    let kind = match obj.get("type") {
        Some(Value::String(s)) => s.clone(),
        _ => return Err(ParseFailure::Malformed("missing string field `type`".into())),
    };
    let body = obj.remove("payload").unwrap_or(Value::Null);
    match kind.as_str() {
        "hello" => {
            let session = match body.get("session") {
                None | Some(Value::Null) => None,
                Some(Value::String(s)) => Some(s.clone()),
                Some(_) => return Err(ParseFailure::Malformed("hello: `session` must be a string".into())),
            };
            return Ok(Incoming::Hello { session });
        }
        "heartbeat" => return Ok(Incoming::Heartbeat),
        _ => {}
    }
    if !COMMAND_TYPES.contains(&kind.as_str()) {
        return Err(ParseFailure::UnknownType(kind));
    }
    let seq = obj.get("seq").and_then(Value::as_u64).ok_or(ParseFailure::MissingSeq)?;
    let command = match kind.as_str() {
        "anchor_edit" => Command::AnchorEdit(payload(seq, body)?),
        "solve_tick" => empty(seq, &body).map(|_| Command::SolveTick)?,
        "drag_pose" => Command::DragPose(payload(seq, body)?),
        "record_keyframe" => Command::RecordKeyframe(payload(seq, body)?),
        "undo" => empty(seq, &body).map(|_| Command::Undo)?,
        "snap_anchors" => empty(seq, &body).map(|_| Command::SnapAnchors)?,
        "snap_nominal" => empty(seq, &body).map(|_| Command::SnapNominal)?,
        "clear_anchors" => empty(seq, &body).map(|_| Command::ClearAnchors)?,
        "set_region_mode" => Command::SetRegionMode(payload(seq, body)?),
        "configure" => Command::Configure(payload(seq, body)?),
        "query_feasibility" => Command::QueryFeasibility(payload(seq, body)?),
        "export_script" => empty(seq, &body).map(|_| Command::ExportScript)?,
        "project_point" => Command::ProjectPoint(payload(seq, body)?),
        _ => unreachable!("checked against COMMAND_TYPES"),
    };
    Ok(Incoming::Command { seq, command })
}

/// Encode a client command; the inverse of [`parse_incoming`].
pub fn encode_command(seq: u64, command: &Command) -> String {
    let (kind, body) = match command {
        Command::AnchorEdit(e) => ("anchor_edit", serde_json::to_value(e)),
        Command::SolveTick => ("solve_tick", Ok(Value::Null)),
        Command::DragPose(p) => ("drag_pose", serde_json::to_value(p)),
        Command::RecordKeyframe(p) => ("record_keyframe", serde_json::to_value(p)),
        Command::Undo => ("undo", Ok(Value::Null)),
        Command::SnapAnchors => ("snap_anchors", Ok(Value::Null)),
        Command::SnapNominal => ("snap_nominal", Ok(Value::Null)),
        Command::ClearAnchors => ("clear_anchors", Ok(Value::Null)),
        Command::SetRegionMode(p) => ("set_region_mode", serde_json::to_value(p)),
        Command::Configure(p) => ("configure", serde_json::to_value(p)),
        Command::QueryFeasibility(p) => ("query_feasibility", serde_json::to_value(p)),
        Command::ExportScript => ("export_script", Ok(Value::Null)),
        Command::ProjectPoint(p) => ("project_point", serde_json::to_value(p)),
    };
    let mut obj = serde_json::json!({"proto": PROTO_VERSION, "type": kind, "seq": seq});
    let body = body.expect("commands serialize");
    if !body.is_null() {
        obj["payload"] = body;
    }
    obj.to_string()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutKind {
    Hello,
    StateUpdate,
    Error,
    Ack,
    Script,
    Projection,
    Heartbeat,
}

/// Server message. `ack` is the client sequence number being answered;
/// unsolicited messages (drag solves, heartbeats) carry none.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outbound {
    pub proto: u32,
    #[serde(rename = "type")]
    pub kind: OutKind,
    pub ack: Option<u64>,
    pub payload: Value,
}

impl Outbound {
    pub fn new(kind: OutKind, ack: Option<u64>, payload: impl Serialize) -> Self {
        Outbound {
            proto: PROTO_VERSION,
            kind,
            ack,
            payload: serde_json::to_value(payload).expect("payload serializes"),
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("outbound serializes")
    }

    pub fn state(&self) -> Option<StateUpdate> {
        (self.kind == OutKind::StateUpdate).then(|| serde_json::from_value(self.payload.clone()).ok()).flatten()
    }

    pub fn error(&self) -> Option<ErrorPayload> {
        (self.kind == OutKind::Error).then(|| serde_json::from_value(self.payload.clone()).ok()).flatten()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    Malformed,
    BadProto,
    UnknownType,
    BadSequence,
    BadPayload,
    Rejected,
    SolverFailed,
    NotConverged,
    /// Converged, but some targets are out of reach (constraints win).
    Unreached,
    UnknownSession,
    SessionBusy,
    NoSession,
}

impl ErrorCode {
    /// Notices accompany an accepted message; every other code means the
    /// message was rejected and the session is unchanged.
    pub fn is_notice(self) -> bool {
        matches!(self, ErrorCode::NotConverged | ErrorCode::Unreached)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorPayload {
    pub code: ErrorCode,
    pub message: String,
    /// Sequence number the server expects next.
    pub expected_seq: u64,
    pub revision: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub status: SolveStatus,
    pub iterations: usize,
    pub max_penetration: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointSaturation {
    pub joint: String,
    /// `None` when the ratio is unbounded (zero torque bound).
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateUpdate {
    pub revision: u64,
    pub puppet_q: Vec<f64>,
    pub controller_q: Vec<f64>,
    pub converged: bool,
    pub solve: Option<SolveSummary>,
    pub residuals: Vec<TaskResidual>,
    pub anchors: Vec<Anchor>,
    pub region_mode: RegionMode,
    pub region: Option<SupportRegion>,
    pub com: [f64; 3],
    /// Signed distance of the CoM ground projection to the region boundary.
    pub margin: Option<f64>,
    pub force_polytopes: Vec<ForcePolytope>,
    pub saturation: Vec<JointSaturation>,
    pub keyframes: usize,
    pub undo_depth: usize,
    pub dirty: bool,
    pub com_constraint: bool,
    pub contact_mode: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hello {
    pub session: String,
    pub resumed: bool,
    pub last_seq: u64,
    pub tick_hz: f64,
    pub state: StateUpdate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub point: [f64; 3],
    pub normal: [f64; 3],
    /// Body (robot) or obstacle (environment) polytope hit.
    pub polytope: String,
    pub distance: f64,
}
