//! Multi-view point cloud registration: SE(3) geometry, adaptive-threshold
//! ICP, Lie-algebraic motion averaging and saliency-based face retrieval.

pub mod averaging;
pub mod geometry;
pub mod io;
pub mod pipeline;
pub mod registration;
pub mod retrieval;
pub mod spatial;
pub mod synth;

pub use averaging::{motion_average, AveragingError, Edge, ViewGraph};
pub use geometry::{GeometryError, Point3, RigidMotion, Twist};
pub use pipeline::{register_multiview, PipelineConfig, PipelineError, RegistrationReport};
pub use registration::{icp_adaptive, IcpConfig, IcpResult, PointCloud, RegistrationError};
pub use retrieval::{retrieve_faces, RetrievalConfig, RetrievalError, TriangleMesh};
