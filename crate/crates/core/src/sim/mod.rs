//! Cost-model simulation of IVFPQ query execution on DPUs. Distances are
//! really computed, so simulated results can be checked against the CPU
//! search; cycles come from an analytic pipeline and MRAM latency model.

mod batch;
mod cost;
mod curves;
mod kernel;
mod model;
mod wram;

pub use batch::{expected_lookups_per_query, simulate_batch, SimData, SimOutput};
pub use cost::{CostReport, CostSummary, Event, Stage, StageCost, StageSet};
pub use curves::{read_size_curve, thread_scaling_curve, CurvePoint};
pub use kernel::{merge_stage, simulate_cluster, simulate_cluster_into, ClusterCodes, ClusterSim, ClusterView};
pub use model::{mram_read_latency, DpuModel};
pub use wram::{plan_wram, Allocation, Region, WramParams, WramPlan};
