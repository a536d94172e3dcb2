//! Trajectory analysis. Everything here is a pure function of a
//! [`TrajectoryLog`], so observed data can be fed through the same code as
//! simulated runs.

pub mod flow;
pub mod groups;
pub mod kinematics;
pub mod stats;
pub mod trajectory;

pub use flow::{
    count_flows, density_snapshots, fundamental_diagram, level_of_service, per_minute, Axis, DensitySnapshot,
    FlowCount, FundamentalDiagramPoint, LosGrade, LosTable, Section,
};
pub use groups::{
    arrangement_series, classify_arrangement, cohort_progress, cohort_speeds, dispersion_series, group_members,
    relative_position_map, ArrangementPattern, ArrangementThresholds, CohortKey, DispersionSeries,
};
pub use kinematics::{agent_progress_speed, path_length, walking_speed, PathMode};
pub use stats::{compare_means, TTest};
pub use trajectory::{LogHeader, RecordAction, TrajectoryLog, TrajectoryRecord};

/// Default fundamental-diagram window and density sampling interval (about one minute).
pub const DEFAULT_WINDOW: u64 = 180;

/// Names accepted by the analyzer's metric selection.
pub const METRIC_NAMES: [&str; 8] =
    ["diagram", "los", "speeds", "dispersion", "arrangements", "positions", "compare", "flows"];

pub fn check_metric(name: &str) -> crate::Result<&'static str> {
    METRIC_NAMES.iter().find(|m| **m == name).copied().ok_or_else(|| crate::Error::UnknownMetric(name.to_string()))
}
