//! Online mapping of each query's probed clusters onto replica DPUs.
//!
//! Pairs whose cluster has a single replica are forced; the rest are handled
//! cluster by cluster in descending cluster size, each pair going to the
//! currently least-loaded replica.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::index::{CoarseQuantizer, Dataset};
use crate::placement::PlacementMap;

/// Default number of queries processed together.
pub const DEFAULT_BATCH_SIZE: usize = 1000;

/// The probed cluster ids of every query in a batch.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QueryBatch {
    probes: Vec<Vec<usize>>,
}

impl QueryBatch {
    /// Every query must probe the same number of clusters.
    pub fn new(probes: Vec<Vec<usize>>) -> Result<Self> {
        if let Some(first) = probes.first() {
            if let Some((i, p)) = probes.iter().enumerate().find(|(_, p)| p.len() != first.len()) {
                return Err(Error::InvalidArgument(format!(
                    "query {i} probes {} clusters, query 0 probes {}",
                    p.len(),
                    first.len()
                )));
            }
        }
        Ok(Self { probes })
    }

    /// Runs cluster filtering for each query.
    pub fn from_queries(queries: &Dataset, coarse: &CoarseQuantizer, nprobe: usize) -> Result<Self> {
        let probes = queries
            .rows()
            .map(|q| Ok(coarse.filter(q, nprobe)?.into_iter().map(|p| p.cluster).collect()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(probes)
    }

    pub fn len(&self) -> usize {
        self.probes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probes.is_empty()
    }

    pub fn nprobe(&self) -> usize {
        self.probes.first().map_or(0, Vec::len)
    }

    pub fn probes(&self) -> &[Vec<usize>] {
        &self.probes
    }
}

/// A `(query, cluster)` pair bound to a DPU.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pair {
    pub query: u32,
    pub cluster: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Assignment {
    /// DPU id → pairs in scheduling order.
    pub per_dpu: Vec<Vec<Pair>>,
    /// Scheduled workload (vectors to scan) per DPU.
    pub workload: Vec<u64>,
    /// Pair visits made while scheduling.
    pub pair_ops: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScheduleMetrics {
    pub workload_cv: f64,
    pub max_workload: u64,
}

/// Assigns every probed pair of the batch to a DPU holding that cluster.
pub fn schedule_batch(batch: &QueryBatch, plan: &PlacementMap, sizes: &[usize]) -> Result<Assignment> {
    let ndpu = plan.ndpu;
    let mut per_dpu: Vec<Vec<Pair>> = vec![Vec::new(); ndpu];
    let mut workload = vec![0u64; ndpu];
    let mut pair_ops = 0u64;
    let mut pending: BTreeMap<usize, Vec<u32>> = BTreeMap::new();

    for (q, probes) in batch.probes.iter().enumerate() {
        for &c in probes {
            pair_ops += 1;
            let dpus = plan.replicas_of(c).ok_or(Error::MissingReplica { cluster: c })?;
            let s = *sizes.get(c).ok_or(Error::MissingReplica { cluster: c })? as u64;
            if let [only] = dpus {
                per_dpu[*only].push(Pair { query: q as u32, cluster: c as u32 });
                workload[*only] += s;
            } else {
                pending.entry(c).or_default().push(q as u32);
            }
        }
    }

    let mut clusters: Vec<usize> = pending.keys().copied().collect();
    clusters.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]).then(a.cmp(&b)));
    for c in clusters {
        let dpus = plan.replicas_of(c).expect("checked in the first pass");
        let s = sizes[c] as u64;
        for &q in &pending[&c] {
            pair_ops += 1;
            let d = *dpus
                .iter()
                .min_by_key(|&&d| (workload[d] + s, d))
                .expect("non-empty replica list");
            per_dpu[d].push(Pair { query: q, cluster: c as u32 });
            workload[d] += s;
        }
    }

    Ok(Assignment {
        per_dpu,
        workload,
        pair_ops,
    })
}

/// Baseline: every pair goes to the cluster's first replica.
pub fn schedule_first_replica(batch: &QueryBatch, plan: &PlacementMap, sizes: &[usize]) -> Result<Assignment> {
    let mut per_dpu: Vec<Vec<Pair>> = vec![Vec::new(); plan.ndpu];
    let mut workload = vec![0u64; plan.ndpu];
    for (q, probes) in batch.probes.iter().enumerate() {
        for &c in probes {
            let d = plan.replicas_of(c).ok_or(Error::MissingReplica { cluster: c })?[0];
            per_dpu[d].push(Pair { query: q as u32, cluster: c as u32 });
            workload[d] += *sizes.get(c).ok_or(Error::MissingReplica { cluster: c })? as u64;
        }
    }
    let pair_ops = batch.probes.iter().map(Vec::len).sum::<usize>() as u64;
    Ok(Assignment {
        per_dpu,
        workload,
        pair_ops,
    })
}

impl Assignment {
    pub fn ndpu(&self) -> usize {
        self.per_dpu.len()
    }

    pub fn total_pairs(&self) -> usize {
        self.per_dpu.iter().map(Vec::len).sum()
    }

    pub fn metrics(&self) -> ScheduleMetrics {
        schedule_metrics(self)
    }

    /// Workload per DPU recomputed from the pairs alone.
    pub fn recompute_workload(&self, sizes: &[usize]) -> Vec<u64> {
        self.per_dpu
            .iter()
            .map(|pairs| pairs.iter().map(|p| sizes[p.cluster as usize] as u64).sum())
            .collect()
    }

    /// `dpu_id,query_id,cluster_id` rows under a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("dpu_id,query_id,cluster_id\n");
        for (d, pairs) in self.per_dpu.iter().enumerate() {
            for p in pairs {
                writeln!(out, "{d},{},{}", p.query, p.cluster).unwrap();
            }
        }
        out
    }

    /// Parses [`Assignment::to_csv`] output. Row order within a DPU is kept.
    pub fn from_csv(text: &str, ndpu: usize, sizes: &[usize]) -> Result<Self> {
        let mut per_dpu = vec![Vec::new(); ndpu];
        for (i, line) in text.lines().enumerate() {
            if i == 0 && line.starts_with("dpu_id") || line.trim().is_empty() {
                continue;
            }
            let bad = || Error::InvalidData(format!("assignment CSV line {}: {line:?}", i + 1));
            let mut f = line.split(',').map(|v| v.trim().parse::<usize>());
            let (Some(Ok(d)), Some(Ok(q)), Some(Ok(c)), None) = (f.next(), f.next(), f.next(), f.next())
            else {
                return Err(bad());
            };
            if d >= ndpu || c >= sizes.len() {
                return Err(bad());
            }
            per_dpu[d].push(Pair { query: q as u32, cluster: c as u32 });
        }
        let mut a = Self {
            per_dpu,
            workload: Vec::new(),
            pair_ops: 0,
        };
        a.workload = a.recompute_workload(sizes);
        Ok(a)
    }
}

/// Balance of a scheduled batch.
pub fn schedule_metrics(a: &Assignment) -> ScheduleMetrics {
    let w: Vec<f64> = a.workload.iter().map(|&v| v as f64).collect();
    ScheduleMetrics {
        workload_cv: crate::placement::coefficient_of_variation(&w),
        max_workload: a.workload.iter().copied().max().unwrap_or(0),
    }
}
