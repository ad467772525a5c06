//! Zone-based window layout engine for mixed-initiative XR workspaces.
//!
//! The engine is generic over the scalar type (`f32` or `f64`). The aliases
//! below fix it to `f64`, which the workspace, service and CLI use.

pub mod assignment;
pub mod canonical;
pub mod costmodel;
pub mod geometry;
pub mod ids;
pub mod layout;
pub mod pipeline;
pub mod recommender;
pub mod report;
pub mod scalar;
pub mod scenario;
pub mod sizing;
pub mod synth;
pub mod telemetry;
pub mod wire;
pub mod workspace;

pub use ids::{AppId, CellRef, ZoneId};
pub use pipeline::{Engine, PipelineConfig};
pub use scalar::Real;
pub use workspace::{Workspace, WorkspaceState};

pub type Vec3 = geometry::Vec3<f64>;
pub type UserPose = geometry::UserPose<f64>;
pub type PlanarRect = geometry::PlanarRect<f64>;
pub type AngularFootprint = geometry::AngularFootprint<f64>;
pub type ThetaParams = layout::ThetaParams<f64>;
pub type Cell = layout::Cell<f64>;
pub type ZoneSpec = layout::ZoneSpec<f64>;
pub type CostWeights = costmodel::CostWeights<f64>;
pub type SignalBundle = costmodel::SignalBundle<f64>;
pub type CostMatrix = costmodel::CostMatrix<f64>;
pub type RelevanceSet = recommender::RelevanceSet<f64>;
pub type TransitionMatrix = telemetry::TransitionMatrix<f64>;
pub type SizingConfig = sizing::SizingConfig<f64>;
pub type SizingResult = sizing::SizingResult<f64>;
pub type Readability = sizing::Readability<f64>;
