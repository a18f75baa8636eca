//! Multi-contact whole-body inverse kinematics and keyframe authoring.

pub mod cli;
pub mod feasibility;
pub mod geometry;
pub mod ik;
pub mod kinematics;
pub mod optim;
pub mod script;
pub mod server;
pub mod trajectory;
pub mod fixtures;
