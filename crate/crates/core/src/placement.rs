//! Offline placement of clusters onto DPUs: hot clusters are replicated so
//! that no single copy carries more than the mean per-DPU workload, replicas
//! are packed greedily under a workload threshold that is relaxed in steps
//! until the whole plan fits, and nearby clusters are co-located on the DPU
//! that received the last replica.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::index::{l2_sq, Dataset};

/// Threshold relaxation step.
pub const THRESHOLD_STEP: f64 = 0.02;

/// Per-cluster size and access frequency.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterStats {
    sizes: Vec<usize>,
    freqs: Vec<f64>,
    centroids: Option<Dataset>,
}

impl ClusterStats {
    pub fn new(sizes: Vec<usize>, freqs: Vec<f64>, centroids: Option<Dataset>) -> Result<Self> {
        if sizes.len() != freqs.len() {
            return Err(Error::InvalidArgument(format!(
                "{} cluster sizes but {} frequencies",
                sizes.len(),
                freqs.len()
            )));
        }
        if let Some(f) = freqs.iter().find(|f| !(f.is_finite() && **f >= 0.0)) {
            return Err(Error::InvalidArgument(format!("invalid frequency {f}")));
        }
        if let Some(c) = &centroids {
            if c.len() != sizes.len() {
                return Err(Error::InvalidArgument(format!(
                    "{} centroids for {} clusters",
                    c.len(),
                    sizes.len()
                )));
            }
        }
        Ok(Self {
            sizes,
            freqs,
            centroids,
        })
    }

    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    pub fn size(&self, i: usize) -> usize {
        self.sizes[i]
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn freq(&self, i: usize) -> f64 {
        self.freqs[i]
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn centroids(&self) -> Option<&Dataset> {
        self.centroids.as_ref()
    }

    /// `w_i = s_i · f_i`.
    pub fn workload(&self, i: usize) -> f64 {
        self.sizes[i] as f64 * self.freqs[i]
    }

    pub fn total_workload(&self) -> f64 {
        (0..self.len()).map(|i| self.workload(i)).sum()
    }

    /// For every cluster, the other clusters by ascending centroid distance
    /// (ties to the lower id), truncated to `limit`.
    fn neighbor_lists(&self, limit: usize) -> Vec<Vec<usize>> {
        let Some(c) = &self.centroids else {
            return vec![Vec::new(); self.len()];
        };
        (0..self.len())
            .map(|i| {
                let mut others: Vec<(f32, usize)> = (0..self.len())
                    .filter(|&j| j != i)
                    .map(|j| (l2_sq(c.row(i), c.row(j)), j))
                    .collect();
                others.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                others.into_iter().take(limit).map(|(_, j)| j).collect()
            })
            .collect()
    }
}

/// Add-one smoothed selection frequencies from historical filtered batches.
/// Each batch is a list of per-query probed cluster ids.
pub fn estimate_frequencies(history: &[Vec<Vec<usize>>], nclusters: usize) -> Result<Vec<f64>> {
    if history.is_empty() {
        return Err(Error::InvalidArgument("frequency history is empty".into()));
    }
    if nclusters == 0 {
        return Err(Error::InvalidArgument("cluster count must be positive".into()));
    }
    let mut counts = vec![0u64; nclusters];
    let mut total = 0u64;
    for &c in history.iter().flatten().flatten() {
        *counts.get_mut(c).ok_or_else(|| {
            Error::InvalidArgument(format!("history references cluster {c} of {nclusters}"))
        })? += 1;
        total += 1;
    }
    let denom = (total + nclusters as u64) as f64;
    Ok(counts.iter().map(|&c| (c + 1) as f64 / denom).collect())
}

/// Cluster-to-DPU replica map with its workload and size ledgers.
#[derive(Clone, Debug, PartialEq)]
pub struct PlacementMap {
    /// Cluster id → DPUs holding a full copy, in placement order.
    pub replicas: Vec<Vec<usize>>,
    /// Expected workload assigned to each DPU.
    pub workload: Vec<f64>,
    /// Vectors stored on each DPU.
    pub stored: Vec<usize>,
    pub ndpu: usize,
    pub max_dpu_size: usize,
    /// Mean workload per DPU.
    pub w_bar: f64,
    /// Threshold at which the greedy scan completed.
    pub thld: f64,
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BalanceMetrics {
    pub workload_cv: f64,
    pub workload_max_over_mean: f64,
    pub size_max_over_mean: f64,
    /// Replica count → number of clusters with that many replicas.
    pub replica_histogram: BTreeMap<usize, usize>,
}

/// Threshold reached after `steps` relaxations.
pub fn threshold_at(steps: u32) -> f64 {
    1.0 + THRESHOLD_STEP * steps as f64
}

/// Plans a placement, relaxing the workload threshold from 1.0 in steps of
/// 0.02 and restarting the greedy scan from scratch after every failure.
pub fn plan_placement(
    stats: &ClusterStats,
    ndpu: usize,
    max_dpu_size: usize,
    nprobe: usize,
) -> Result<PlacementMap> {
    check_capacity(stats, ndpu, max_dpu_size)?;
    let neighbors = stats.neighbor_lists(nprobe);
    // beyond ndpu + 1 the workload constraint can no longer bind
    let limit = ((ndpu as f64 + 1.0) / THRESHOLD_STEP).ceil() as u32 + 1;
    for steps in 0..=limit {
        if let Some(plan) = greedy(stats, ndpu, max_dpu_size, &neighbors, threshold_at(steps))? {
            return Ok(plan);
        }
    }
    Err(Error::InfeasiblePlacement(format!(
        "workload threshold exceeded {} without completing",
        threshold_at(limit)
    )))
}

/// One greedy pass at a fixed threshold. `Ok(None)` means a full scan found
/// no DPU for some replica.
pub fn plan_placement_at(
    stats: &ClusterStats,
    ndpu: usize,
    max_dpu_size: usize,
    nprobe: usize,
    thld: f64,
) -> Result<Option<PlacementMap>> {
    check_capacity(stats, ndpu, max_dpu_size)?;
    greedy(stats, ndpu, max_dpu_size, &stats.neighbor_lists(nprobe), thld)
}

fn check_capacity(stats: &ClusterStats, ndpu: usize, max_dpu_size: usize) -> Result<()> {
    if ndpu == 0 {
        return Err(Error::InvalidArgument("at least one DPU is required".into()));
    }
    let total: usize = stats.sizes.iter().sum();
    if total > ndpu.saturating_mul(max_dpu_size) {
        return Err(Error::InfeasiblePlacement(format!(
            "capacity: {total} vectors exceed {ndpu} DPUs × MAX_DPU_SIZE {max_dpu_size}"
        )));
    }
    if let Some((i, s)) = stats.sizes.iter().enumerate().find(|(_, &s)| s > max_dpu_size) {
        return Err(Error::InfeasiblePlacement(format!(
            "capacity: cluster {i} holds {s} vectors, more than MAX_DPU_SIZE {max_dpu_size}"
        )));
    }
    Ok(())
}

fn greedy(
    stats: &ClusterStats,
    ndpu: usize,
    max_dpu_size: usize,
    neighbors: &[Vec<usize>],
    thld: f64,
) -> Result<Option<PlacementMap>> {
    let n = stats.len();
    let w_bar = stats.total_workload() / ndpu as f64;
    let tol = 1e-9 * w_bar.max(f64::MIN_POSITIVE);
    let limit = w_bar * thld + tol;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| stats.workload(b).total_cmp(&stats.workload(a)).then(a.cmp(&b)));

    let mut workload = vec![0f64; ndpu];
    let mut stored = vec![0usize; ndpu];
    let mut replicas: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut cursor = 0usize;

    for &c in &order {
        if !replicas[c].is_empty() {
            continue;
        }
        let s = stats.size(c);
        let w = stats.workload(c);
        let fits = (0..ndpu).filter(|&d| stored[d] + s <= max_dpu_size).count();
        if fits == 0 {
            return Err(Error::InfeasiblePlacement(format!(
                "capacity: no DPU has room for cluster {c} ({s} vectors, MAX_DPU_SIZE {max_dpu_size})"
            )));
        }
        let wanted = if w_bar > 0.0 { (w / w_bar - 1e-9).ceil() as usize } else { 1 };
        let ncpy = wanted.clamp(1, fits);
        let per_copy = w / ncpy as f64;

        let mut placed = Vec::with_capacity(ncpy);
        let mut misses = 0;
        while placed.len() < ncpy {
            let d = cursor;
            cursor = (cursor + 1) % ndpu;
            if !placed.contains(&d)
                && workload[d] + per_copy <= limit
                && stored[d] + s <= max_dpu_size
            {
                workload[d] += per_copy;
                stored[d] += s;
                placed.push(d);
                misses = 0;
            } else {
                misses += 1;
                if misses >= ndpu {
                    return Ok(None);
                }
            }
        }
        let last = *placed.last().expect("at least one replica");
        replicas[c] = placed;

        if workload[last] < w_bar {
            for &nb in &neighbors[c] {
                if !replicas[nb].is_empty() {
                    continue;
                }
                let wn = stats.workload(nb);
                let sn = stats.size(nb);
                if workload[last] + wn < w_bar && stored[last] + sn <= max_dpu_size {
                    workload[last] += wn;
                    stored[last] += sn;
                    replicas[nb] = vec![last];
                }
            }
        }
    }

    Ok(Some(PlacementMap {
        replicas,
        workload,
        stored,
        ndpu,
        max_dpu_size,
        w_bar,
        thld,
    }))
}

/// Baseline without replication: clusters in descending size each go to the
/// DPU storing the fewest vectors.
pub fn plan_single_copy(stats: &ClusterStats, ndpu: usize, max_dpu_size: usize) -> Result<PlacementMap> {
    check_capacity(stats, ndpu, max_dpu_size)?;
    let mut order: Vec<usize> = (0..stats.len()).collect();
    order.sort_by(|&a, &b| stats.size(b).cmp(&stats.size(a)).then(a.cmp(&b)));
    let mut stored = vec![0usize; ndpu];
    let mut replicas = vec![Vec::new(); stats.len()];
    for c in order {
        let d = (0..ndpu).min_by_key(|&d| (stored[d], d)).expect("ndpu > 0");
        if stored[d] + stats.size(c) > max_dpu_size {
            return Err(Error::InfeasiblePlacement(format!("cluster {c} fits on no DPU")));
        }
        stored[d] += stats.size(c);
        replicas[c].push(d);
    }
    let (workload, stored) = ledgers_from_replicas(&replicas, stats, ndpu);
    let w_bar = stats.total_workload() / ndpu as f64;
    let peak = workload.iter().copied().fold(0.0, f64::max);
    Ok(PlacementMap {
        replicas,
        workload,
        stored,
        ndpu,
        max_dpu_size,
        w_bar,
        thld: if w_bar > 0.0 { peak / w_bar } else { 1.0 },
    })
}

/// Workload and size ledgers implied by a replica map: each replica carries
/// `w_i / ncpy_i` workload and a full copy of the cluster.
pub fn ledgers_from_replicas(
    replicas: &[Vec<usize>],
    stats: &ClusterStats,
    ndpu: usize,
) -> (Vec<f64>, Vec<usize>) {
    let mut w = vec![0f64; ndpu];
    let mut s = vec![0usize; ndpu];
    for (c, dpus) in replicas.iter().enumerate() {
        if dpus.is_empty() {
            continue;
        }
        let per = stats.workload(c) / dpus.len() as f64;
        for &d in dpus {
            w[d] += per;
            s[d] += stats.size(c);
        }
    }
    (w, s)
}

pub(crate) fn coefficient_of_variation(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return 0.0;
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    var.sqrt() / mean
}

pub(crate) fn max_over_mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if mean == 0.0 {
        return 0.0;
    }
    values.iter().copied().fold(f64::MIN, f64::max) / mean
}

impl PlacementMap {
    pub fn nclusters(&self) -> usize {
        self.replicas.len()
    }

    pub fn replicas_of(&self, cluster: usize) -> Option<&[usize]> {
        self.replicas.get(cluster).map(Vec::as_slice).filter(|r| !r.is_empty())
    }

    /// Clusters stored on `dpu`, ascending.
    pub fn clusters_on(&self, dpu: usize) -> Vec<usize> {
        (0..self.replicas.len()).filter(|&c| self.replicas[c].contains(&dpu)).collect()
    }

    pub fn balance_metrics(&self) -> BalanceMetrics {
        let sizes: Vec<f64> = self.stored.iter().map(|&s| s as f64).collect();
        let mut replica_histogram = BTreeMap::new();
        for r in &self.replicas {
            *replica_histogram.entry(r.len()).or_insert(0) += 1;
        }
        BalanceMetrics {
            workload_cv: coefficient_of_variation(&self.workload),
            workload_max_over_mean: max_over_mean(&self.workload),
            size_max_over_mean: max_over_mean(&sizes),
            replica_histogram,
        }
    }

    /// Line-oriented text form: one header line, then `cluster: dpu[,dpu…]`.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "# ndpu={} w_bar={} thld={} max_dpu_size={}\n",
            self.ndpu, self.w_bar, self.thld, self.max_dpu_size
        );
        for (c, dpus) in self.replicas.iter().enumerate() {
            let list: Vec<String> = dpus.iter().map(usize::to_string).collect();
            writeln!(out, "{c}: {}", list.join(",")).unwrap();
        }
        out
    }

    /// Parses [`PlacementMap::to_text`] output; the ledgers are rebuilt from
    /// the replica map and `stats`.
    pub fn from_text(text: &str, stats: &ClusterStats) -> Result<Self> {
        let bad = |msg: String| Error::InvalidData(format!("placement map: {msg}"));
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty input".into()))?;
        let header = header
            .strip_prefix('#')
            .ok_or_else(|| bad("missing header line".into()))?;
        let mut fields = BTreeMap::new();
        for kv in header.split_whitespace() {
            let (k, v) = kv.split_once('=').ok_or_else(|| bad(format!("bad header field {kv}")))?;
            fields.insert(k, v);
        }
        let get = |k: &str| fields.get(k).copied().ok_or_else(|| bad(format!("header lacks {k}")));
        let num_err = |k: &str| bad(format!("header field {k} is not a number"));
        let ndpu: usize = get("ndpu")?.parse().map_err(|_| num_err("ndpu"))?;
        let w_bar: f64 = get("w_bar")?.parse().map_err(|_| num_err("w_bar"))?;
        let thld: f64 = get("thld")?.parse().map_err(|_| num_err("thld"))?;
        let max_dpu_size: usize = get("max_dpu_size")?.parse().map_err(|_| num_err("max_dpu_size"))?;

        let mut replicas = vec![Vec::new(); stats.len()];
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let (c, rest) = line.split_once(':').ok_or_else(|| bad(format!("bad line {line:?}")))?;
            let c: usize = c.trim().parse().map_err(|_| bad(format!("bad cluster id in {line:?}")))?;
            let slot = replicas
                .get_mut(c)
                .ok_or_else(|| bad(format!("cluster {c} out of range")))?;
            for d in rest.split(',').map(str::trim).filter(|d| !d.is_empty()) {
                let d: usize = d.parse().map_err(|_| bad(format!("bad DPU id in {line:?}")))?;
                if d >= ndpu {
                    return Err(bad(format!("DPU {d} out of range for ndpu {ndpu}")));
                }
                slot.push(d);
            }
        }
        let (workload, stored) = ledgers_from_replicas(&replicas, stats, ndpu);
        Ok(Self {
            replicas,
            workload,
            stored,
            ndpu,
            max_dpu_size,
            w_bar,
            thld,
        })
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn stats(sizes: Vec<usize>, freqs: Vec<f64>) -> ClusterStats {
        ClusterStats::new(sizes, freqs, None).unwrap()
    }

    #[test]
    fn uniform_history_gives_equal_frequencies() {
        let batch = vec![vec![0, 1], vec![2, 3], vec![0, 2], vec![1, 3]];
        let f = estimate_frequencies(&[batch], 4).unwrap();
        assert!(f.iter().all(|&v| (v - 0.25).abs() < 1e-12));
    }

    #[test]
    fn unselected_cluster_gets_smoothing_floor() {
        let f = estimate_frequencies(&[vec![vec![0, 1], vec![0]]], 3).unwrap();
        assert_eq!(f[2], 1.0 / 6.0);
        assert!((f.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(estimate_frequencies(&[], 3).is_err());
    }

    #[test]
    fn symmetric_clusters_one_per_dpu() {
        let st = stats(vec![100; 8], vec![0.125; 8]);
        let plan = plan_placement(&st, 8, 1000, 4).unwrap();
        assert_eq!(plan.thld, 1.0);
        let mut dpus: Vec<usize> = plan.replicas.iter().map(|r| {
            assert_eq!(r.len(), 1);
            r[0]
        }).collect();
        dpus.sort();
        assert_eq!(dpus, (0..8).collect::<Vec<_>>());
        assert_eq!(plan.balance_metrics().workload_cv, 0.0);
    }

    #[test]
    fn hot_cluster_gets_ceiling_replicas() {
        // total workload 4·W̄ over 4 DPUs; cluster 0 carries 2.5·W̄
        let st = stats(vec![250, 50, 50, 50], vec![1.0, 1.0, 1.0, 1.0]);
        let plan = plan_placement(&st, 4, 1000, 0).unwrap();
        assert_eq!(plan.w_bar, 100.0);
        let r = &plan.replicas[0];
        assert_eq!(r.len(), 3);
        let mut distinct = r.clone();
        distinct.sort();
        distinct.dedup();
        assert_eq!(distinct.len(), 3);
    }

    #[test]
    fn single_dpu_metrics() {
        let st = stats(vec![3, 5, 7], vec![0.2, 0.3, 0.5]);
        let plan = plan_placement(&st, 1, 100, 2).unwrap();
        assert_eq!(plan.balance_metrics().workload_max_over_mean, 1.0);
    }

    #[test]
    fn capacity_infeasible() {
        let st = stats(vec![60, 60], vec![0.5, 0.5]);
        let err = plan_placement(&st, 1, 100, 1).unwrap_err();
        assert!(matches!(err, Error::InfeasiblePlacement(ref m) if m.contains("capacity")));
    }

    #[test]
    fn neighbors_colocate() {
        let c = Dataset::from_rows(&[vec![0.0], vec![100.0], vec![1.0], vec![101.0]]).unwrap();
        let st = ClusterStats::new(vec![10, 10, 1, 1], vec![0.25; 4], Some(c)).unwrap();
        let plan = plan_placement(&st, 2, 100, 1).unwrap();
        // cluster 2 sits next to cluster 0, 3 next to 1
        assert_eq!(plan.replicas[2], plan.replicas[0]);
        assert_eq!(plan.replicas[3], plan.replicas[1]);
    }

    #[test]
    fn text_round_trip() {
        let st = stats(vec![250, 50, 50, 50], vec![1.0, 1.0, 1.0, 1.0]);
        let plan = plan_placement(&st, 4, 1000, 0).unwrap();
        let back = PlacementMap::from_text(&plan.to_text(), &st).unwrap();
        assert_eq!(back.replicas, plan.replicas);
        assert_eq!(back.thld, plan.thld);
        assert_eq!(back.w_bar, plan.w_bar);
        for (a, b) in back.workload.iter().zip(&plan.workload) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn plan_invariants(
            sizes in prop::collection::vec(0usize..400, 1..40),
            raw in prop::collection::vec(0.0f64..1.0, 40),
            ndpu in 1usize..10,
            nprobe in 0usize..5,
        ) {
            let n = sizes.len();
            let freqs: Vec<f64> = raw[..n].iter().map(|f| f + 0.01).collect();
            let total: usize = sizes.iter().sum();
            let biggest = *sizes.iter().max().unwrap();
            let max_dpu_size = biggest.max(total / ndpu + 1) * 2;
            let st = stats(sizes, freqs);
            let plan = plan_placement(&st, ndpu, max_dpu_size, nprobe).unwrap();

            let (w, s) = ledgers_from_replicas(&plan.replicas, &st, ndpu);
            for d in 0..ndpu {
                prop_assert!(plan.stored[d] <= max_dpu_size);
                prop_assert_eq!(plan.stored[d], s[d]);
                prop_assert!((plan.workload[d] - w[d]).abs() <= 1e-9 * plan.w_bar.max(1.0));
                prop_assert!(plan.workload[d] <= plan.w_bar * plan.thld * (1.0 + 1e-9) + 1e-12);
            }
            for (c, r) in plan.replicas.iter().enumerate() {
                prop_assert!(!r.is_empty());
                let mut u = r.clone();
                u.sort();
                u.dedup();
                prop_assert_eq!(u.len(), r.len());
                if st.workload(c) > plan.w_bar * (1.0 + 1e-9) {
                    prop_assert!(r.len() >= 2);
                }
            }
            // the recorded threshold is the first that completes
            let again = plan_placement_at(&st, ndpu, max_dpu_size, nprobe, plan.thld).unwrap().unwrap();
            prop_assert_eq!(&again.replicas, &plan.replicas);
            if plan.thld > 1.0 {
                let lower = plan.thld - THRESHOLD_STEP;
                prop_assert!(plan_placement_at(&st, ndpu, max_dpu_size, nprobe, lower).unwrap().is_none());
            }
        }
    }
}
