//! Actuation and friction feasibility: force polytopes, CoM support regions,
//! static torques and stability margins.

mod contact;
pub mod polygon;
mod polytope;
mod region;
mod support;
mod torques;

pub use contact::{ContactPoint, DEFAULT_CONE_SIDES, DEFAULT_FRICTION, MAX_CONE_SIDES};
pub use polytope::{force_polytope, ForcePolytope, MAX_CHAIN_JOINTS, PINV_CUTOFF};
pub use region::{stability_margin, RegionMode, SupportRegion};
pub use support::{support_region_flat, support_region_multicontact, EquilibriumLp, RegionOptions};
pub use torques::{saturation_ratio, static_torques, JointTorque, TorqueReport, EQUILIBRIUM_TOLERANCE};

use thiserror::Error;

use crate::kinematics::ModelError;

#[derive(Debug, Error)]
pub enum FeasibilityError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid contact {0}")]
    Contact(String),
    #[error("no contacts given")]
    NoContacts,
    #[error("invalid region options: {0}")]
    Options(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}
