use super::cost::{Stage, StageCost, StageSet};
use super::model::{mram_read_latency, DpuModel};
use super::wram::WramPlan;
use crate::cooccur::{adc_distance_reencoded, compute_partial_sums, ReencodedCluster};
use crate::error::{Error, Result};
use crate::index::{adc_distance, Lut};
use crate::topk::{pruned_merge, BoundedHeap, Candidate};

/// Codes of one cluster as stored in MRAM.
#[derive(Clone, Copy, Debug)]
pub enum ClusterCodes<'a> {
    Classic(&'a [u8]),
    Reencoded(&'a ReencodedCluster),
}

#[derive(Clone, Copy, Debug)]
pub struct ClusterView<'a> {
    pub ids: &'a [u32],
    pub codes: ClusterCodes<'a>,
}

impl ClusterView<'_> {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Stage costs and local result of scanning one cluster for one query.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterSim {
    pub stages: StageSet,
    pub topk: Vec<Candidate>,
}

fn levels(k: usize) -> f64 {
    ((k + 1) as f64).log2().ceil()
}

/// Evenly splits `n` units over `t` threads.
fn split_even(n: usize, t: usize) -> impl Iterator<Item = usize> {
    (0..t).map(move |i| n / t + usize::from(i < n % t))
}

/// Accumulates `(instr, stall)` per thread and converts to cycles.
struct Threads {
    instr: Vec<f64>,
    stall: Vec<f64>,
}

impl Threads {
    fn new(t: usize) -> Self {
        Self {
            instr: vec![0.0; t],
            stall: vec![0.0; t],
        }
    }

    fn read(&mut self, thread: usize, bytes: usize, limit: usize, model: &DpuModel, cost: &mut StageCost) -> Result<()> {
        for part in model.split_read(bytes, limit) {
            self.stall[thread] += mram_read_latency(part, model)?;
            self.instr[thread] += model.transfer_cost;
            cost.mram_reads += 1;
            cost.mram_bytes += part as u64;
        }
        Ok(())
    }

    fn cycles(&self, model: &DpuModel) -> f64 {
        model.stage_cycles(&self.instr, &self.stall)
    }
}

fn check_lut(lut: &Lut, plan: &WramPlan) -> Result<()> {
    let p = &plan.params;
    if lut.m() != p.m || lut.kstar() != p.kstar {
        return Err(Error::InvalidArgument(format!(
            "LUT is {}×{} but the WRAM plan is for {}×{}",
            lut.m(),
            lut.kstar(),
            p.m,
            p.kstar
        )));
    }
    Ok(())
}

/// Builds one cluster's LUT: codebook reload, residual, then entries split
/// evenly across threads, bracketed by barriers 0 and 1.
fn lut_stage(plan: &WramPlan, model: &DpuModel) -> Result<StageCost> {
    let p = &plan.params;
    let t = p.threads;
    let mut th = Threads::new(t);
    let mut cost = StageCost::default();
    th.read(0, p.dim * 4, model.transfer_max, model, &mut cost)?;
    th.instr[0] += p.dim as f64 * model.add_cost;
    if p.reuse_codebook {
        let chunks = model.split_read(p.dim * p.kstar, model.transfer_max);
        for (j, part) in chunks.into_iter().enumerate() {
            th.read(j % t, part, part, model, &mut cost)?;
        }
    }
    let dsub = (p.dim / p.m) as f64;
    let per_entry = dsub * (2.0 * model.add_cost + model.mul_cost) + model.mul_cost + 2.0 * model.add_cost;
    for (i, n) in split_even(p.m * p.kstar, t).enumerate() {
        th.instr[i] += n as f64 * per_entry;
    }
    cost.wram_lookups = (p.dim * p.kstar) as u64;
    cost.cycles = th.cycles(model) + 2.0 * model.barrier_cycles;
    Ok(cost)
}

/// Scans a cluster into per-thread heaps, charging every stage except the
/// final merge. `heaps` persist across the clusters of one query.
pub fn simulate_cluster_into(
    view: ClusterView<'_>,
    lut: &Lut,
    heaps: &mut [BoundedHeap],
    model: &DpuModel,
    plan: &WramPlan,
) -> Result<StageSet> {
    check_lut(lut, plan)?;
    let p = &plan.params;
    let t = p.threads;
    if heaps.len() != t {
        return Err(Error::InvalidArgument(format!("{} heaps for {t} threads", heaps.len())));
    }
    let mut out = StageSet::default();
    *out.get_mut(Stage::LutBuild) = lut_stage(plan, model)?;

    let xlut = match view.codes {
        ClusterCodes::Reencoded(rc) => {
            if rc.vectors.len() != view.ids.len() {
                return Err(Error::InvalidData("re-encoded cluster and id list differ in length".into()));
            }
            if rc.layout.nslots() > p.cache_slots {
                return Err(Error::CacheOverflow {
                    needed: rc.layout.nslots(),
                    capacity: p.cache_slots,
                });
            }
            let x = compute_partial_sums(lut, &rc.layout)?;
            let mut th = Threads::new(t);
            let live: Vec<usize> = rc.layout.live_slots().collect();
            let mut cost = StageCost::default();
            let mut start = 0;
            for (i, n) in split_even(live.len(), t).enumerate() {
                for &s in &live[start..start + n] {
                    let members = rc.layout.members(s).len();
                    th.instr[i] += members as f64 * model.lookup_cost + model.add_cost;
                    cost.wram_lookups += members as u64;
                }
                start += n;
            }
            cost.cycles = th.cycles(model) + model.barrier_cycles;
            *out.get_mut(Stage::PartialSums) = cost;
            Some(x)
        }
        ClusterCodes::Classic(codes) => {
            if codes.len() != view.ids.len() * p.m {
                return Err(Error::InvalidData("classic codes and id list differ in length".into()));
            }
            None
        }
    };

    let n = view.len();
    if n == 0 {
        return Ok(out);
    }
    let mut th = Threads::new(t);
    let mut cost = StageCost::default();
    let limit = plan.buffer_bytes_per_thread();
    let insert_cost = model.heap_level_cost * levels(p.k);
    let lookup = match (&view.codes, model.direct_addressing) {
        (ClusterCodes::Classic(_), false) => model.lookup_cost + model.mul_cost,
        _ => model.lookup_cost,
    };
    // Each thread owns a contiguous slice and streams it buffer by buffer.
    let mut first = 0;
    for (thread, count) in split_even(n, t).enumerate() {
        let slice_end = first + count;
        for start in (first..slice_end).step_by(p.buffer_vectors) {
            let end = (start + p.buffer_vectors).min(slice_end);
            let bytes = match &view.codes {
                ClusterCodes::Reencoded(rc) => rc.vectors[start..end].iter().map(|v| v.bytes()).sum(),
                ClusterCodes::Classic(_) => (end - start) * p.m,
            };
            th.read(thread, bytes, limit, model, &mut cost)?;
            for i in start..end {
                let (d, len) = match (&view.codes, &xlut) {
                    (ClusterCodes::Reencoded(rc), Some(x)) => {
                        let v = &rc.vectors[i];
                        (adc_distance_reencoded(v, x)?, v.len())
                    }
                    (ClusterCodes::Classic(codes), _) => (adc_distance(&codes[i * p.m..(i + 1) * p.m], lut), p.m),
                    _ => unreachable!(),
                };
                th.instr[thread] += model.point_cost + len as f64 * lookup;
                cost.wram_lookups += len as u64;
                if heaps[thread].insert(Candidate::new(d, view.ids[i])) {
                    th.instr[thread] += insert_cost;
                }
            }
        }
        first = slice_end;
    }
    cost.cycles = th.cycles(model) + model.barrier_cycles;
    *out.get_mut(Stage::Distance) = cost;
    Ok(out)
}

/// Merges thread heaps on one thread and writes the result back to MRAM.
pub fn merge_stage(heaps: Vec<BoundedHeap>, plan: &WramPlan, model: &DpuModel) -> Result<(Vec<Candidate>, StageCost)> {
    let k = plan.params.k;
    let resident: usize = heaps.iter().map(BoundedHeap::len).sum();
    let out = pruned_merge(heaps, k);
    let instr = resident as f64 * levels(k) * model.compare_cost
        + out.comparisons as f64 * model.compare_cost
        + out.inserted as f64 * levels(k) * model.heap_level_cost;
    let mut th = Threads::new(1);
    th.instr[0] = instr;
    let mut cost = StageCost {
        wram_lookups: out.comparisons as u64,
        ..Default::default()
    };
    let topk = out.heap.into_sorted_vec();
    if !topk.is_empty() {
        let bytes = topk.len() * Candidate::BYTES;
        for part in model.split_read(bytes, model.transfer_max) {
            th.stall[0] += mram_read_latency(part, model)?;
            cost.mram_bytes += part as u64;
        }
    }
    cost.cycles = th.cycles(model);
    Ok((topk, cost))
}

/// Scans one cluster for one query with fresh heaps and merges the result.
pub fn simulate_cluster(view: ClusterView<'_>, lut: &Lut, model: &DpuModel, plan: &WramPlan) -> Result<ClusterSim> {
    let mut heaps: Vec<BoundedHeap> = (0..plan.params.threads).map(|_| BoundedHeap::new(plan.params.k)).collect();
    let mut stages = simulate_cluster_into(view, lut, &mut heaps, model, plan)?;
    let (topk, merge) = merge_stage(heaps, plan, model)?;
    *stages.get_mut(Stage::TopK) = merge;
    Ok(ClusterSim { stages, topk })
}
