//! Monocular recovery of an articulated instrument's 6-DoF pose and joint
//! angles by render-and-compare optimization over a differentiable Gaussian
//! splatting renderer.
//!
//! The numeric core is generic over [`Real`] (`f32` or `f64`); the `*64`
//! aliases below name the double-precision instantiations used by the CLI.

pub mod error;
pub mod estimator;
pub mod geometry;
pub mod metrics_io;
pub mod gradcheck;
pub mod scalar;
pub mod renderer;
pub mod synthlab;
pub mod tool_model;

pub use error::{Error, ErrorKind, Result};
pub use scalar::Real;

pub type Pose64 = geometry::Pose<f64>;
pub type Pose32 = geometry::Pose<f32>;
pub type Intrinsics64 = geometry::Intrinsics<f64>;
pub type Intrinsics32 = geometry::Intrinsics<f32>;
pub type JointVector64 = tool_model::JointVector<f64>;
pub type ToolModel64 = tool_model::ToolModel<f64>;
pub type ToolModel32 = tool_model::ToolModel<f32>;
