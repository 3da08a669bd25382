//! Pose and joint recovery: coarse hypothesis search, gradient refinement
//! with plateau scheduling and early stopping, and frame-to-frame tracking.

mod coarse;
mod refine;
mod track;

pub use coarse::{coarse_estimate, generate_candidates, mask_centroid, CoarseConfig, CoarseResult};
pub use refine::{
    refine, refine_observed, refine_with_rates, EarlyStopping, IterationRecord, LearningRates, PlateauScheduler,
    RefinerConfig, StepRule,
};
pub use track::{track_from, track_sequence, TrackerState};

use crate::geometry::{Intrinsics, Pose};
use crate::renderer::{LossConfig, RenderSettings};
use crate::scalar::Real;
use crate::tool_model::{JointVector, ToolModel};

/// Result of refining one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameEstimate<T: Real> {
    pub pose: Pose<T>,
    pub q: JointVector<T>,
    /// Combined loss of the returned iterate, or `+inf` when unusable.
    pub final_loss: T,
    pub iters_used: usize,
    pub stopped_early: bool,
    /// Learning rates in effect when the loop ended.
    pub rates: LearningRates,
    /// Loss at every evaluated iterate, in order.
    pub history: Vec<T>,
    /// Set when the frame failed numerically and the previous estimate was
    /// carried forward.
    pub failed: bool,
}

/// Everything a refinement needs besides the target and the start point.
#[derive(Debug, Clone, Copy)]
pub struct Scene<'a, T: Real> {
    pub model: &'a ToolModel<T>,
    pub intrinsics: &'a Intrinsics<T>,
    pub render: &'a RenderSettings<T>,
    pub loss: &'a LossConfig<T>,
}
