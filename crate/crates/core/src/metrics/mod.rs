//! Level sets, tip tracking, the Ivantsov relation and trajectory error reports.

mod contour;
mod ivantsov;
mod report;
mod tip;

pub use contour::{zero_level_set, LevelSetContour, Polyline};
pub use ivantsov::{erfc, ivantsov_lhs, ivantsov_peclet};
pub use report::{
    error_metrics, frame_metrics, write_metrics_csv, Frame, MetricsReport, MetricsRow, Physics, ReportRow,
    TrajectoryRecord,
};
pub use tip::{steady_state, tip_position, tip_radius, tip_track, Direction, SteadyTip, TipRecord};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("trajectories do not match: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
