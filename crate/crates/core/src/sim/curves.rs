use serde::{Deserialize, Serialize};

use super::kernel::{simulate_cluster, ClusterView};
use super::model::DpuModel;
use super::wram::{plan_wram, WramParams};
use crate::error::Result;
use crate::index::Lut;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: usize,
    pub qps: f64,
}

fn qps_with(view: ClusterView<'_>, lut: &Lut, model: &DpuModel, params: &WramParams) -> Result<f64> {
    let plan = plan_wram(params, model)?;
    let sim = simulate_cluster(view, lut, model, &plan)?;
    Ok(model.clock_hz / sim.stages.total_cycles())
}

/// Single-query QPS on one DPU for thread counts `1..=max_threads`.
pub fn thread_scaling_curve(
    view: ClusterView<'_>,
    lut: &Lut,
    model: &DpuModel,
    params: &WramParams,
    max_threads: usize,
) -> Result<Vec<CurvePoint>> {
    (1..=max_threads)
        .map(|t| {
            let p = WramParams {
                threads: t,
                ..params.clone()
            };
            Ok(CurvePoint {
                x: t,
                qps: qps_with(view, lut, model, &p)?,
            })
        })
        .collect()
}

/// Single-query QPS for each number of vectors fetched per MRAM read.
pub fn read_size_curve(
    view: ClusterView<'_>,
    lut: &Lut,
    model: &DpuModel,
    params: &WramParams,
    sizes: &[usize],
) -> Result<Vec<CurvePoint>> {
    sizes
        .iter()
        .map(|&b| {
            let p = WramParams {
                buffer_vectors: b,
                ..params.clone()
            };
            Ok(CurvePoint {
                x: b,
                qps: qps_with(view, lut, model, &p)?,
            })
        })
        .collect()
}
