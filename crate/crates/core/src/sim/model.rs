use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Timing and capacity parameters of one DPU and its host link. Instruction
/// costs are in issue slots; one slot is one cycle at full pipeline rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DpuModel {
    pub wram_bytes: usize,
    pub mram_bytes: usize,
    pub max_threads: usize,
    pub pipeline_depth: usize,
    /// Cycles between two instructions of the same thread.
    pub dispatch_interval: usize,
    pub clock_hz: f64,

    pub mram_base_cycles: f64,
    /// Cycles per 8 bytes up to the plateau.
    pub mram_small_slope: f64,
    /// Cycles per 8 bytes beyond the plateau.
    pub mram_per8_cycles: f64,
    pub mram_plateau_bytes: usize,
    pub transfer_min: usize,
    pub transfer_max: usize,
    pub transfer_align: usize,

    pub add_cost: f64,
    pub mul_cost: f64,
    /// One flat-LUT lookup plus accumulate.
    pub lookup_cost: f64,
    /// Per scanned point: length byte, loop control, root comparison.
    pub point_cost: f64,
    /// Per MRAM transfer: DMA setup and buffer bookkeeping.
    pub transfer_cost: f64,
    /// Per heap level touched by an insertion.
    pub heap_level_cost: f64,
    pub compare_cost: f64,
    pub barrier_cycles: f64,
    /// Lookups compute `column·kstar + code` with a multiply when false.
    pub direct_addressing: bool,

    /// Host transfer bandwidth per DIMM, bytes per second.
    pub host_bandwidth: f64,
    pub dpus_per_dimm: usize,
    pub launch_overhead_s: f64,
}

impl Default for DpuModel {
    fn default() -> Self {
        Self {
            wram_bytes: 64 * 1024,
            mram_bytes: 64 << 20,
            max_threads: 24,
            pipeline_depth: 14,
            dispatch_interval: 11,
            clock_hz: 350e6,
            mram_base_cycles: 77.0,
            mram_small_slope: 0.5,
            mram_per8_cycles: 4.0,
            mram_plateau_bytes: 256,
            transfer_min: 8,
            transfer_max: 2048,
            transfer_align: 8,
            add_cost: 1.0,
            mul_cost: 8.0,
            lookup_cost: 4.0,
            point_cost: 14.0,
            transfer_cost: 128.0,
            heap_level_cost: 6.0,
            compare_cost: 4.0,
            barrier_cycles: 200.0,
            direct_addressing: true,
            host_bandwidth: 6e9,
            dpus_per_dimm: 128,
            launch_overhead_s: 20e-6,
        }
    }
}

impl DpuModel {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("wram_bytes", self.wram_bytes),
            ("mram_bytes", self.mram_bytes),
            ("max_threads", self.max_threads),
            ("pipeline_depth", self.pipeline_depth),
            ("dispatch_interval", self.dispatch_interval),
            ("transfer_min", self.transfer_min),
            ("transfer_align", self.transfer_align),
            ("dpus_per_dimm", self.dpus_per_dimm),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.transfer_max < self.transfer_min
            || !self.transfer_min.is_multiple_of(self.transfer_align)
            || !self.transfer_max.is_multiple_of(self.transfer_align)
        {
            return Err(Error::Config("transfer bounds must be aligned and ordered".into()));
        }
        let reals = [
            self.clock_hz,
            self.host_bandwidth,
            self.mram_base_cycles + 1.0,
            self.mram_small_slope + 1.0,
            self.mram_per8_cycles + 1.0,
        ];
        if reals.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config("clock, bandwidth and latency parameters must be positive".into()));
        }
        let costs = [
            self.add_cost,
            self.mul_cost,
            self.lookup_cost,
            self.point_cost,
            self.transfer_cost,
            self.heap_level_cost,
            self.compare_cost,
            self.barrier_cycles,
            self.launch_overhead_s,
        ];
        if costs.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config("instruction costs must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn check_transfer(&self, bytes: usize) -> Result<()> {
        if bytes < self.transfer_min || bytes > self.transfer_max || !bytes.is_multiple_of(self.transfer_align) {
            return Err(Error::InvalidTransfer { bytes });
        }
        Ok(())
    }

    /// Cycles spent moving `bytes` between host and one DPU.
    pub fn host_cycles(&self, bytes: usize) -> f64 {
        let per_dpu = self.host_bandwidth / self.dpus_per_dimm as f64;
        bytes as f64 / per_dpu * self.clock_hz
    }

    pub fn launch_cycles(&self) -> f64 {
        self.launch_overhead_s * self.clock_hz
    }

    /// Splits a read of `bytes` into legal transfers no larger than `limit`.
    pub fn split_read(&self, bytes: usize, limit: usize) -> Vec<usize> {
        let a = self.transfer_align;
        let limit = (limit.min(self.transfer_max) / a * a).max(self.transfer_min);
        let mut left = bytes.div_ceil(a) * a;
        let mut out = Vec::with_capacity(left / limit + 1);
        while left > 0 {
            let n = left.min(limit).max(self.transfer_min);
            out.push(n);
            left = left.saturating_sub(n);
        }
        out
    }

    /// Cycles for a stage given per-thread instruction slots and DMA stall
    /// cycles. Each thread issues once per dispatch interval, so at most
    /// `dispatch_interval` threads keep the pipeline full; the DMA engine
    /// serves one transfer at a time.
    pub fn stage_cycles(&self, instr: &[f64], stall: &[f64]) -> f64 {
        if instr.is_empty() {
            return 0.0;
        }
        let d = self.dispatch_interval as f64;
        let rate = instr.len().min(self.dispatch_interval) as f64 / d;
        let issue = instr.iter().sum::<f64>() / rate;
        let per_thread = instr
            .iter()
            .zip(stall.iter().chain(std::iter::repeat(&0.0)))
            .map(|(i, s)| i * d + s)
            .fold(0.0, f64::max);
        let dma: f64 = stall.iter().sum();
        issue.max(per_thread).max(dma)
    }
}

/// MRAM→WRAM read latency in cycles: a gentle slope up to the plateau size,
/// then a steep per-8-byte cost.
pub fn mram_read_latency(bytes: usize, model: &DpuModel) -> Result<f64> {
    model.check_transfer(bytes)?;
    let small = bytes.min(model.mram_plateau_bytes) as f64 / 8.0;
    let large = bytes.saturating_sub(model.mram_plateau_bytes) as f64 / 8.0;
    Ok(model.mram_base_cycles + model.mram_small_slope * small + model.mram_per8_cycles * large)
}
