//! Trajectories, their CSV form, positional error metrics and reports, and
//! the structured tracking configuration.

mod config;
mod metrics;
mod report;
mod trajectory;

pub use config::{LossSection, RenderSection, TrackConfig};
pub use metrics::{ade, fde, per_axis_error, position_errors, AxisStats};
pub use report::{
    aggregate_reports, format_mean_std, format_vector_mm, save_error_curves, AggregateReport, MeanStd,
    MetricsReport,
};
pub use trajectory::{load_trajectory, save_trajectory, Trajectory, TrajectoryRecord, TRAJECTORY_HEADER};
