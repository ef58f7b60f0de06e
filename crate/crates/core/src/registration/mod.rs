//! Pairwise registration: resolution estimate, nearest-neighbor matching,
//! overlap counting, closed-form rigid fitting and adaptive-threshold ICP.

mod cloud;
mod fit;
mod icp;

use thiserror::Error;

pub use cloud::{
    count_coincident, estimate_resolution, nearest_neighbors, overlap_rate, Correspondence,
    PointCloud,
};
pub use fit::{fit_rigid, fit_rigid_points, sum_squared_residual};
pub use icp::{
    adaptive_threshold, icp_adaptive, icp_classic, ClassicIcpConfig, IcpConfig, IcpResult,
};

pub(crate) use cloud::match_points;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegistrationError {
    #[error("need at least {needed} points, found {found}")]
    TooFewPoints { needed: usize, found: usize },
    #[error("target cloud is empty")]
    EmptyTarget,
    #[error("points are collinear or coincident; rigid motion is not unique")]
    DegenerateConfiguration,
    #[error("all points coincide; resolution is zero")]
    ZeroResolution,
    #[error("invalid ICP configuration: {0}")]
    InvalidConfig(String),
}
