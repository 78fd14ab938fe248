//! Two-tier All-to-All(v) scheduling for GPU clusters.
//!
//! The FAST scheduler balances every cross-server tile across the sending
//! server's GPUs, decomposes the resulting server matrix into permutation
//! stages, and pipelines intra-server redistribution behind scale-out
//! transfers. A shifted-diagonal SpreadOut baseline, closed-form bounds,
//! and seeded workload generators are included for comparison.

#![allow(clippy::needless_range_loop)]

pub mod balance;
pub mod birkhoff;
pub mod bounds;
pub mod error;
pub mod matrix;
pub mod schedule;
pub mod sim;
pub mod spreadout;
pub mod stage;
pub mod topology;
pub mod workload;

pub use balance::{build_balance_plan, BalancePlan, IntraMove};
pub use birkhoff::{decompose_server_matrix, stage_bound, Decomposition};
pub use bounds::{algorithmic_bandwidth, fast_worstcase_time, optimal_time, ratio_bound, BoundsReport};
pub use error::{Error, Result};
pub use matrix::{reduce_to_server_level, DemandMatrix, ServerMatrix, SquareMatrix, Tile};
pub use schedule::{
    synthesize_fast, synthesize_spreadout, CsvRow, FastSchedule, Schedule, ScheduleDoc, Scheduler,
    SimReport, SpreadoutSchedule, CSV_HEADER,
};
pub use sim::{simulate_fast, simulate_spreadout, Span, SpanKind, Timeline};
pub use stage::{PermutationStage, StageEdge};
pub use topology::Topology;
