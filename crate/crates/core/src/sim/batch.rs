use std::collections::BTreeMap;

use super::cost::{CostReport, Event, Stage, StageCost};
use super::kernel::{merge_stage, simulate_cluster_into, ClusterCodes, ClusterView};
use super::model::DpuModel;
use super::wram::WramPlan;
use crate::cooccur::ReencodedCluster;
use crate::error::{Error, Result};
use crate::index::{Dataset, IvfPqIndex, ProbedCluster};
use crate::scheduler::{Assignment, QueryBatch};
use crate::topk::{host_aggregate, BoundedHeap, Candidate};

/// Index contents as laid out in DPU memory.
#[derive(Clone, Copy, Debug)]
pub struct SimData<'a> {
    pub index: &'a IvfPqIndex,
    /// Per cluster: its re-encoding when adopted, otherwise classic codes.
    pub reencoded: Option<&'a [Option<ReencodedCluster>]>,
    /// Host threads for the simulation; 0 uses every core.
    pub workers: usize,
}

impl<'a> SimData<'a> {
    pub fn classic(index: &'a IvfPqIndex) -> Self {
        Self { index, reencoded: None, workers: 0 }
    }

    fn view(&self, cluster: usize) -> ClusterView<'a> {
        let cl = &self.index.encoded.clusters[cluster];
        let codes = match self.reencoded.and_then(|r| r.get(cluster)).and_then(Option::as_ref) {
            Some(rc) => ClusterCodes::Reencoded(rc),
            None => ClusterCodes::Classic(&cl.codes),
        };
        ClusterView { ids: &cl.ids, codes }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimOutput {
    pub report: CostReport,
    /// Final top-k per query, ascending.
    pub results: Vec<Vec<Candidate>>,
}

/// Expected flat-LUT lookups per query with balanced clusters.
pub fn expected_lookups_per_query(npoints: f64, nclusters: f64, nprobe: f64, m: f64) -> f64 {
    npoints / nclusters * nprobe * m
}

/// Runs a scheduled batch: each DPU handles its pairs query by query, keeping
/// thread heaps across a query's clusters, then merges and returns k results.
pub fn simulate_batch(
    assignment: &Assignment,
    batch: &QueryBatch,
    queries: &Dataset,
    data: &SimData<'_>,
    model: &DpuModel,
    plan: &WramPlan,
) -> Result<SimOutput> {
    model.validate()?;
    let nq = batch.len();
    if queries.len() != nq {
        return Err(Error::InvalidArgument(format!("{} query vectors for a batch of {nq}", queries.len())));
    }
    let nclusters = data.index.encoded.clusters.len();
    // query → dpu → clusters in scheduling order
    let mut work: Vec<BTreeMap<u32, Vec<usize>>> = vec![BTreeMap::new(); nq];
    for (d, pairs) in assignment.per_dpu.iter().enumerate() {
        for p in pairs {
            let (q, c) = (p.query as usize, p.cluster as usize);
            if q >= nq || c >= nclusters {
                return Err(Error::InvalidArgument(format!("pair ({q}, {c}) outside batch or index")));
            }
            work[q].entry(d as u32).or_default().push(c);
        }
    }

    let run = |q: usize| -> Result<(Vec<Event>, Vec<Candidate>)> {
        let qv = queries.row(q);
        let probes: Vec<ProbedCluster> = batch.probes()[q]
            .iter()
            .map(|&c| {
                let cen = data.index.coarse.centroids().row(c);
                ProbedCluster {
                    cluster: c,
                    qc: qv.iter().zip(cen).map(|(a, b)| a - b).collect(),
                }
            })
            .collect();
        let luts = data.index.query_luts(&probes, plan.params.k)?;
        let lut_of: BTreeMap<usize, usize> = probes.iter().enumerate().map(|(i, p)| (p.cluster, i)).collect();
        let mut events = Vec::new();
        let mut local = Vec::new();
        for (&dpu, clusters) in &work[q] {
            events.push(Event {
                dpu,
                query: Some(q as u32),
                cluster: None,
                stage: Stage::LutBuild,
                cost: StageCost {
                    cycles: model.host_cycles(qv.len() * 4 + clusters.len() * 4),
                    ..Default::default()
                },
            });
            let mut heaps: Vec<BoundedHeap> = (0..plan.params.threads).map(|_| BoundedHeap::new(plan.params.k)).collect();
            for &c in clusters {
                let li = *lut_of
                    .get(&c)
                    .ok_or_else(|| Error::InvalidArgument(format!("query {q} assigned unprobed cluster {c}")))?;
                let stages = simulate_cluster_into(data.view(c), &luts[li], &mut heaps, model, plan)?;
                for s in [Stage::LutBuild, Stage::PartialSums, Stage::Distance] {
                    let cost = *stages.get(s);
                    if cost != StageCost::default() {
                        events.push(Event {
                            dpu,
                            query: Some(q as u32),
                            cluster: Some(c as u32),
                            stage: s,
                            cost,
                        });
                    }
                }
            }
            let (topk, mut cost) = merge_stage(heaps, plan, model)?;
            cost.cycles += model.host_cycles(topk.len() * Candidate::BYTES);
            events.push(Event {
                dpu,
                query: Some(q as u32),
                cluster: None,
                stage: Stage::TopK,
                cost,
            });
            local.push(topk);
        }
        Ok((events, host_aggregate(&local, plan.params.k)))
    };

    let avail = std::thread::available_parallelism().map_or(1, |n| n.get());
    let workers = if data.workers == 0 { avail } else { data.workers }.min(nq.max(1));
    let chunk = nq.div_ceil(workers.max(1)).max(1);
    let mut per_query: Vec<Result<(Vec<Event>, Vec<Candidate>)>> = Vec::with_capacity(nq);
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..nq)
            .step_by(chunk)
            .map(|start| {
                let run = &run;
                s.spawn(move || (start..(start + chunk).min(nq)).map(run).collect::<Vec<_>>())
            })
            .collect();
        for h in handles {
            per_query.extend(h.join().expect("simulation worker panicked"));
        }
    });

    let ndpu = assignment.per_dpu.len();
    let mut events: Vec<Event> = (0..ndpu)
        .filter(|&d| !assignment.per_dpu[d].is_empty())
        .map(|d| Event {
            dpu: d as u32,
            query: None,
            cluster: None,
            stage: Stage::LutBuild,
            cost: StageCost {
                cycles: model.launch_cycles(),
                ..Default::default()
            },
        })
        .collect();
    let mut results = Vec::with_capacity(nq);
    for r in per_query {
        let (ev, res) = r?;
        events.extend(ev);
        results.push(res);
    }
    Ok(SimOutput {
        report: CostReport::from_events(ndpu, nq, model.clock_hz, events),
        results,
    })
}
