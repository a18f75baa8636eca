//! Live authoring service: per-session solver state behind a line-oriented
//! JSON protocol.

mod net;
mod protocol;
mod session;

pub use net::{handle_connection, serve, Registry, ServerConfig};
pub use protocol::*;
pub use session::{DragCoalescer, Session, SessionSnapshot, REACH_TOLERANCE};
