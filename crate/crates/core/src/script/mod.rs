//! Authoring data model: anchors, keyframes, scripts, undo and the operator
//! convenience operations.

mod anchor;
mod document;
mod session;

pub use anchor::{clear_non_persistent, snap_anchors_to_puppet, Anchor, AnchorKind, AnchorTarget, FollowMode};
pub use document::{canonical_json, load_script, save_script, KeyFrame, Profile, Script, SCRIPT_VERSION};
pub use session::{
    apply_anchor_edit, apply_follow, contacts_of, region_at, solve_anchors, solve_keyframe, AnchorEdit,
    AuthoringSession, AuthoringState, UndoEntry, UndoStack, DEFAULT_UNDO_DEPTH,
};

use thiserror::Error;

use crate::feasibility::FeasibilityError;
use crate::ik::IkError;
use crate::kinematics::ModelError;

#[derive(Debug, Error)]
pub enum ScriptError {
    #[error("malformed JSON at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("script format version {0} is not supported (expected {SCRIPT_VERSION}); migrate the file first")]
    Version(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("anchor `{0}`: {1}")]
    Anchor(String, String),
    #[error("no anchor with id `{0}`")]
    UnknownAnchor(String),
    #[error("anchor id `{0}` already exists")]
    DuplicateAnchor(String),
    #[error("mirroring rejected: {0}")]
    Mirror(String),
    #[error("puppet state is not a converged solve")]
    NotConverged,
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Ik(#[from] IkError),
    #[error(transparent)]
    Feasibility(#[from] FeasibilityError),
}
