//! Halo-exchange schedules, their timeline model and a multi-rank execution
//! of the Schwarz-preconditioned solve.

pub mod ensemble;
pub mod schedule;
pub mod timeline;

pub use ensemble::{run_multirank, HaloMessage, MultiRankConfig, MultiRankResult, RankEnsemble, RankStats};
pub use schedule::{
    build_naive_schedule, build_schedule, build_schedule_lenient, part_of, validate_schedule, CommSchedule, Part,
    ScheduleKind, SendEvent, Violation,
};
pub use timeline::{
    overlap_window, simulate_timeline, threshold_bandwidth, ComputeSpan, MessageSpan, Timeline, TimelineConfig,
    DEFAULT_BANDWIDTH, DEFAULT_LATENCY,
};
