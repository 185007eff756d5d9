//! Scenario execution: plant integration, control loop, trace and metrics.

pub mod acceptance;
mod engine;
mod metrics;
mod scenario;
pub mod suite;
mod trace;

pub use engine::{PlantState, RunAbort, RunOutput, Simulator};
pub use metrics::{
    compute_metrics, ErrorStats, LyapunovStats, MetricsContext, RunMetrics, SegmentMetrics, DUTY_REVERSAL_BAND,
    MU_BAND, SETTLE_HOLD_S, SLIP_BAND, TORQUE_FLOOR_NM,
};
pub use scenario::{road_mu, ControllerKind, NoiseConfig, RoadSegment, ScenarioSpec};
pub use trace::{flags, format_sig9, write_csv, TraceRecord, TRACE_COLUMNS};
