//! Reference models, scenes and scripts shared by tests, examples and the
//! `fixtures` CLI subcommand.

mod models;
mod scripts;

pub use models::*;
pub use scripts::*;
