use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::synth::synthetic_dataset;
use super::vecs::{read_vecs, write_vecs, Vecs, VecsKind};
use crate::cooccur::{encode_cluster, read_cluster, write_cluster, CooccurParams, LengthStats, MiningParams, ReencodedCluster, GROUP_SLOTS};
use crate::error::{Error, Result};
use crate::index::{brute_force_topk, Dataset, IvfPqIndex};
use crate::placement::{estimate_frequencies, plan_placement, plan_single_copy, BalanceMetrics, ClusterStats, PlacementMap};
use crate::scheduler::{schedule_batch, schedule_first_replica, Assignment, QueryBatch};
use crate::sim::{plan_wram, simulate_batch, SimData, SimOutput, Stage, WramParams, WramPlan};
use crate::topk::Candidate;

/// Vectors and optional ground truth for one run.
#[derive(Clone, Debug, PartialEq)]
pub struct Inputs {
    pub base: Dataset,
    pub queries: Dataset,
    pub truth: Option<Vec<Vec<u32>>>,
}

fn rows_limit(n: usize) -> Option<usize> {
    (n > 0).then_some(n)
}

fn load_dataset(path: &Path, max_rows: usize) -> Result<Dataset> {
    let kind = VecsKind::from_path(path)?;
    read_vecs(path, kind, rows_limit(max_rows))?.to_dataset()
}

pub fn load_inputs(cfg: &RunConfig) -> Result<Inputs> {
    let (base, queries) = match (&cfg.base, &cfg.query) {
        (Some(b), Some(q)) => (load_dataset(b, cfg.max_base_rows)?, load_dataset(q, cfg.max_query_rows)?),
        (None, _) => synthetic_dataset(&cfg.synthetic)?,
        (Some(_), None) => return Err(Error::Config("query is required when base is given".into())),
    };
    if base.dim() != queries.dim() {
        return Err(Error::InvalidData(format!("base dim {} but query dim {}", base.dim(), queries.dim())));
    }
    let truth = match &cfg.groundtruth {
        Some(p) => {
            let mut ids = read_vecs(p, VecsKind::I32, rows_limit(queries.len()))?.to_ids()?;
            if ids.len() < queries.len() || ids.iter().any(|r| r.len() < cfg.k) {
                return Err(Error::InvalidData(format!("ground truth in {} is too short", p.display())));
            }
            ids.iter_mut().for_each(|r| r.truncate(cfg.k));
            Some(ids)
        }
        None if base.len() <= cfg.gt_cap && base.len() >= cfg.k => Some(exact_truth(&base, &queries, cfg.k)?),
        None => None,
    };
    Ok(Inputs { base, queries, truth })
}

fn exact_truth(base: &Dataset, queries: &Dataset, k: usize) -> Result<Vec<Vec<u32>>> {
    par_map(queries.len(), 0, |q| brute_force_topk(base, queries.row(q), k))
}

/// Maps `0..n` over scoped worker threads, keeping order.
fn par_map<T: Send>(n: usize, workers: usize, f: impl Fn(usize) -> Result<T> + Sync) -> Result<Vec<T>> {
    let avail = std::thread::available_parallelism().map_or(1, |p| p.get());
    let w = if workers == 0 { avail } else { workers }.clamp(1, n.max(1));
    let chunk = n.div_ceil(w).max(1);
    let mut out = Vec::with_capacity(n);
    std::thread::scope(|s| {
        let f = &f;
        let handles: Vec<_> = (0..n)
            .step_by(chunk)
            .map(|start| s.spawn(move || (start..(start + chunk).min(n)).map(f).collect::<Vec<_>>()))
            .collect();
        for h in handles {
            out.extend(h.join().expect("worker panicked"));
        }
    });
    out.into_iter().collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CooccurSummary {
    pub enabled: bool,
    pub clusters: usize,
    pub adopted: usize,
    /// Point-weighted length reduction over adopted clusters.
    pub mean_reduction_adopted: f64,
    /// Stored lookups per scan relative to classic codes, over all clusters.
    pub lookup_ratio: f64,
    pub per_cluster: Vec<LengthStats>,
}

/// Offline products: the index and the encodings chosen per cluster.
#[derive(Clone, Debug, PartialEq)]
pub struct Trained {
    pub index: IvfPqIndex,
    pub reencoded: Vec<Option<ReencodedCluster>>,
    pub cooccur: CooccurSummary,
}

impl Trained {
    pub fn sim_data(&self) -> SimData<'_> {
        SimData {
            index: &self.index,
            reencoded: self.cooccur.enabled.then_some(self.reencoded.as_slice()),
            workers: 0,
        }
    }
}

fn cooccur_params(cfg: &RunConfig) -> CooccurParams {
    CooccurParams {
        mining: MiningParams {
            max_triples: cfg.cooccur_m,
            ..Default::default()
        },
        cache_slots: cfg.cooccur_m * GROUP_SLOTS,
        adoption_threshold: cfg.cooccur_threshold,
    }
}

/// Trains the index and, when enabled, re-encodes clusters that clear the
/// adoption threshold.
pub fn train(cfg: &RunConfig, base: &Dataset) -> Result<Trained> {
    let index = IvfPqIndex::train(base, cfg.nclusters, cfg.m, cfg.kstar, cfg.seed).map_err(|e| e.in_module("index"))?;
    with_encoding(cfg, index)
}

/// Attaches the co-occurrence encoding that `cfg` asks for to a trained index.
pub fn with_encoding(cfg: &RunConfig, index: IvfPqIndex) -> Result<Trained> {
    let n = index.encoded.clusters.len();
    let m = index.encoded.m;
    let mut summary = CooccurSummary {
        enabled: cfg.cooccur,
        clusters: n,
        lookup_ratio: 1.0,
        ..Default::default()
    };
    let mut reencoded = vec![None; n];
    if cfg.cooccur {
        let params = cooccur_params(cfg);
        let kstar = index.codebook.kstar();
        let all = par_map(n, cfg.workers, |c| encode_cluster(&index.encoded.clusters[c], m, kstar, &params))
            .map_err(|e| e.in_module("cooccur"))?;
        let (mut reduced, mut adopted_points, mut used) = (0.0, 0usize, 0usize);
        for (c, rc) in all.into_iter().enumerate() {
            let size = index.encoded.clusters[c].len();
            let stats = rc.stats(params.adoption_threshold);
            summary.per_cluster.push(stats);
            if stats.adopted {
                summary.adopted += 1;
                reduced += stats.reduction * size as f64;
                adopted_points += size;
                used += rc.total_len();
                reencoded[c] = Some(rc);
            } else {
                used += size * m;
            }
        }
        let total = index.encoded.total_points() * m;
        summary.mean_reduction_adopted = if adopted_points > 0 { reduced / adopted_points as f64 } else { 0.0 };
        summary.lookup_ratio = if total > 0 { used as f64 / total as f64 } else { 1.0 };
    }
    Ok(Trained {
        index,
        reencoded,
        cooccur: summary,
    })
}

fn auto_dpu_size(cfg: &RunConfig, sizes: &[usize]) -> usize {
    if cfg.max_dpu_size > 0 {
        return cfg.max_dpu_size;
    }
    let total: usize = sizes.iter().sum();
    let largest = sizes.iter().copied().max().unwrap_or(0);
    largest.max((2 * total).div_ceil(cfg.ndpu)).max(1)
}

/// Estimates cluster frequencies from pseudo-queries sampled from the base
/// set, then places clusters (with or without replication).
pub fn place(cfg: &RunConfig, index: &IvfPqIndex, base: &Dataset) -> Result<(ClusterStats, PlacementMap)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_f00d);
    let nclusters = index.coarse.nclusters();
    let mut history = Vec::with_capacity(cfg.history_batches);
    for _ in 0..cfg.history_batches {
        let rows: Vec<usize> = (0..cfg.batch_size).map(|_| rng.random_range(0..base.len())).collect();
        let batch = par_map(rows.len(), cfg.workers, |i| {
            Ok(index.coarse.filter(base.row(rows[i]), cfg.nprobe)?.into_iter().map(|p| p.cluster).collect())
        })?;
        history.push(batch);
    }
    let freqs = estimate_frequencies(&history, nclusters)?;
    let sizes = index.encoded.sizes();
    let stats = ClusterStats::new(sizes.clone(), freqs, Some(index.coarse.centroids().clone()))?;
    let max_dpu_size = auto_dpu_size(cfg, &sizes);
    let model = cfg.model()?;
    let record = if cfg.cooccur { 1 + 2 * cfg.m } else { cfg.m };
    if max_dpu_size.saturating_mul(record + 4) > model.mram_bytes {
        return Err(Error::Config(format!("max_dpu_size {max_dpu_size} does not fit in MRAM")));
    }
    let plan = if cfg.replication {
        plan_placement(&stats, cfg.ndpu, max_dpu_size, cfg.nprobe)?
    } else {
        plan_single_copy(&stats, cfg.ndpu, max_dpu_size)?
    };
    Ok((stats, plan))
}

pub fn batches(cfg: &RunConfig, index: &IvfPqIndex, queries: &Dataset) -> Result<Vec<(usize, QueryBatch)>> {
    let mut out = Vec::new();
    for start in (0..queries.len()).step_by(cfg.batch_size) {
        let end = (start + cfg.batch_size).min(queries.len());
        let probes = par_map(end - start, cfg.workers, |i| {
            Ok(index.coarse.filter(queries.row(start + i), cfg.nprobe)?.into_iter().map(|p| p.cluster).collect())
        })?;
        out.push((start, QueryBatch::new(probes)?));
    }
    Ok(out)
}

pub fn schedule(cfg: &RunConfig, batch: &QueryBatch, plan: &PlacementMap, sizes: &[usize]) -> Result<Assignment> {
    if cfg.scheduling {
        schedule_batch(batch, plan, sizes)
    } else {
        schedule_first_replica(batch, plan, sizes)
    }
}

pub fn wram_plan(cfg: &RunConfig, dim: usize) -> Result<WramPlan> {
    let params = WramParams {
        cache_slots: if cfg.cooccur { cfg.cooccur_m * GROUP_SLOTS } else { 0 },
        record_bytes: if cfg.cooccur { 1 + 2 * cfg.m } else { cfg.m },
        ..WramParams::classic(dim, cfg.m, cfg.kstar, cfg.k, cfg.threads, cfg.buffer_vectors)
    };
    plan_wram(&params, &cfg.model()?)
}

/// Per-batch simulation in query order.
pub fn simulate(
    cfg: &RunConfig,
    trained: &Trained,
    queries: &Dataset,
    scheduled: &[(usize, QueryBatch, Assignment)],
) -> Result<Vec<SimOutput>> {
    let model = cfg.model()?;
    let plan = wram_plan(cfg, queries.dim())?;
    let data = SimData {
        workers: cfg.workers,
        ..trained.sim_data()
    };
    scheduled
        .iter()
        .map(|(start, batch, a)| {
            let rows: Vec<f32> = (*start..*start + batch.len()).flat_map(|i| queries.row(i).to_vec()).collect();
            let qs = Dataset::new(queries.dim(), rows)?;
            simulate_batch(a, batch, &qs, &data, &model, &plan)
        })
        .collect()
}

/// Run summary. Every field is derived from files in the output directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub nqueries: usize,
    pub nbatches: usize,
    pub recall: Option<f64>,
    pub qps: f64,
    pub total_makespan_cycles: f64,
    pub stage_cycles: BTreeMap<String, f64>,
    pub breakdown: BTreeMap<String, f64>,
    pub placement: BalanceMetrics,
    pub thld: f64,
    pub schedule_cv_mean: f64,
    pub schedule_max_over_mean: f64,
    pub cooccur: CooccurSummary,
    pub lookups_total: u64,
    pub lookups_per_query: f64,
}

impl RunReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "queries            {}", self.nqueries);
        let _ = writeln!(s, "batches            {}", self.nbatches);
        match self.recall {
            Some(r) => {
                let _ = writeln!(s, "recall@k           {r:.4}");
            }
            None => s.push_str("recall@k           n/a\n"),
        }
        let _ = writeln!(s, "simulated QPS      {:.1}", self.qps);
        let _ = writeln!(s, "makespan cycles    {:.0}", self.total_makespan_cycles);
        for (k, v) in &self.breakdown {
            let _ = writeln!(s, "  {k:<16} {:.4}", v);
        }
        let _ = writeln!(s, "placement thld     {:.2}", self.thld);
        let _ = writeln!(s, "placement W cv     {:.4}", self.placement.workload_cv);
        let _ = writeln!(s, "placement W max/mean {:.4}", self.placement.workload_max_over_mean);
        let _ = writeln!(s, "schedule W cv      {:.4}", self.schedule_cv_mean);
        let _ = writeln!(s, "schedule max/mean  {:.4}", self.schedule_max_over_mean);
        let _ = writeln!(s, "cooccur            {}", if self.cooccur.enabled { "on" } else { "off" });
        if self.cooccur.enabled {
            let _ = writeln!(s, "  adopted          {}/{}", self.cooccur.adopted, self.cooccur.clusters);
            let _ = writeln!(s, "  reduction        {:.4}", self.cooccur.mean_reduction_adopted);
            let _ = writeln!(s, "  lookup ratio     {:.4}", self.cooccur.lookup_ratio);
        }
        let _ = writeln!(s, "lookups            {}", self.lookups_total);
        let _ = writeln!(s, "lookups/query      {:.1}", self.lookups_per_query);
        s
    }
}

/// Files of one run directory.
#[derive(Clone, Debug)]
pub struct Artifacts {
    pub dir: PathBuf,
}

impl Artifacts {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let p = self.path(name);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)?;
        }
        let tmp = p.with_extension("tmp");
        fs::write(&tmp, contents)?;
        fs::rename(&tmp, &p)?;
        Ok(())
    }

    fn read(&self, name: &str) -> Result<String> {
        fs::read_to_string(self.path(name)).map_err(|e| Error::Config(format!("{}: {e}", self.path(name).display())))
    }

    pub fn save_config(&self, cfg: &RunConfig) -> Result<()> {
        self.write("config.txt", cfg.to_text())
    }

    pub fn save_truth(&self, truth: &Option<Vec<Vec<u32>>>) -> Result<()> {
        if let Some(t) = truth {
            fs::create_dir_all(&self.dir)?;
            write_vecs(&self.path("groundtruth.ivecs"), &Vecs::from_ids(t)?)?;
        }
        Ok(())
    }

    pub fn load_truth(&self) -> Result<Option<Vec<Vec<u32>>>> {
        let p = self.path("groundtruth.ivecs");
        if !p.exists() {
            return Ok(None);
        }
        Ok(Some(read_vecs(&p, VecsKind::I32, None)?.to_ids()?))
    }

    pub fn save_trained(&self, t: &Trained) -> Result<()> {
        self.write("index.json", serde_json::to_vec(&t.index)?)?;
        self.write("cooccur.json", serde_json::to_vec_pretty(&t.cooccur)?)?;
        for (c, rc) in t.reencoded.iter().enumerate() {
            if let Some(rc) = rc {
                let mut buf = Vec::new();
                write_cluster(rc, &mut buf)?;
                self.write(&format!("cooccur/cluster_{c:05}.bin"), buf)?;
            }
        }
        Ok(())
    }

    pub fn load_trained(&self) -> Result<Trained> {
        let index: IvfPqIndex = serde_json::from_str(&self.read("index.json")?)?;
        let cooccur: CooccurSummary = serde_json::from_str(&self.read("cooccur.json")?)?;
        let n = index.encoded.clusters.len();
        let mut reencoded = vec![None; n];
        for (c, slot) in reencoded.iter_mut().enumerate() {
            let p = self.path(&format!("cooccur/cluster_{c:05}.bin"));
            if p.exists() {
                *slot = Some(read_cluster(fs::File::open(&p).map(std::io::BufReader::new)?)?);
            }
        }
        Ok(Trained {
            index,
            reencoded,
            cooccur,
        })
    }

    pub fn save_placement(&self, stats: &ClusterStats, plan: &PlacementMap) -> Result<()> {
        let mut csv = String::from("cluster_id,size,frequency\n");
        for c in 0..stats.len() {
            let _ = writeln!(csv, "{c},{},{}", stats.size(c), stats.freq(c));
        }
        self.write("cluster_stats.csv", csv)?;
        self.write("placement.txt", plan.to_text())
    }

    pub fn load_placement(&self, index: &IvfPqIndex) -> Result<(ClusterStats, PlacementMap)> {
        let text = self.read("cluster_stats.csv")?;
        let (mut sizes, mut freqs) = (Vec::new(), Vec::new());
        for line in text.lines().skip(1).filter(|l| !l.is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || Error::InvalidData(format!("cluster_stats.csv: bad line {line:?}"));
            if f.len() != 3 {
                return Err(bad());
            }
            sizes.push(f[1].parse().map_err(|_| bad())?);
            freqs.push(f[2].parse().map_err(|_| bad())?);
        }
        let stats = ClusterStats::new(sizes, freqs, Some(index.coarse.centroids().clone()))?;
        let plan = PlacementMap::from_text(&self.read("placement.txt")?, &stats)?;
        Ok((stats, plan))
    }

    pub fn save_assignment(&self, b: usize, a: &Assignment) -> Result<()> {
        self.write(&format!("assignment_{b:04}.csv"), a.to_csv())
    }

    pub fn load_assignment(&self, b: usize, ndpu: usize, sizes: &[usize]) -> Result<Assignment> {
        Assignment::from_csv(&self.read(&format!("assignment_{b:04}.csv"))?, ndpu, sizes)
    }

    pub fn save_simulation(&self, outs: &[SimOutput], starts: &[usize]) -> Result<()> {
        let mut results = String::from("query_id,rank,point_id,distance\n");
        for (b, (o, &start)) in outs.iter().zip(starts).enumerate() {
            self.write(&format!("cost_{b:04}.csv"), o.report.to_csv())?;
            self.write(&format!("cost_{b:04}.json"), o.report.summary_json())?;
            for (i, res) in o.results.iter().enumerate() {
                for (r, c) in res.iter().enumerate() {
                    let _ = writeln!(results, "{},{r},{},{}", start + i, c.id, c.distance);
                }
            }
        }
        self.write("results.csv", results)
    }

    pub fn load_results(&self) -> Result<BTreeMap<usize, Vec<Candidate>>> {
        let mut out: BTreeMap<usize, Vec<Candidate>> = BTreeMap::new();
        for line in self.read("results.csv")?.lines().skip(1).filter(|l| !l.is_empty()) {
            let bad = || Error::InvalidData(format!("results.csv: bad line {line:?}"));
            let f: Vec<u64> = line.split(',').map(|x| x.parse().map_err(|_| bad())).collect::<Result<_>>()?;
            if f.len() != 4 {
                return Err(bad());
            }
            out.entry(f[0] as usize).or_default().push(Candidate::new(f[3] as u32, f[2] as u32));
        }
        Ok(out)
    }

    fn batch_files(&self, prefix: &str, ext: &str) -> Result<Vec<PathBuf>> {
        let mut v: Vec<PathBuf> = fs::read_dir(&self.dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
                name.starts_with(prefix) && name.ends_with(ext)
            })
            .collect();
        v.sort();
        Ok(v)
    }
}

/// Mean fraction of the true top-k found per query.
pub fn mean_recall(results: &BTreeMap<usize, Vec<Candidate>>, truth: &[Vec<u32>], k: usize) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let total: f64 = truth
        .iter()
        .enumerate()
        .map(|(q, t)| {
            let want: HashSet<u32> = t.iter().take(k).copied().collect();
            let got = results.get(&q).map_or(0, |r| r.iter().take(k).filter(|c| want.contains(&c.id)).count());
            got as f64 / want.len().max(1) as f64
        })
        .sum();
    total / truth.len() as f64
}

/// Rebuilds the report from a run directory.
pub fn report_from_artifacts(cfg: &RunConfig, art: &Artifacts) -> Result<RunReport> {
    let clock = cfg.model()?.clock_hz;
    let index: IvfPqIndex = serde_json::from_str(&art.read("index.json")?)?;
    let cooccur: CooccurSummary = serde_json::from_str(&art.read("cooccur.json")?)?;
    let (stats, plan) = art.load_placement(&index)?;
    let sizes = stats.sizes().to_vec();

    let mut cvs = Vec::new();
    let mut max_over_mean = 0f64;
    for p in art.batch_files("assignment_", ".csv")? {
        let a = Assignment::from_csv(&fs::read_to_string(&p)?, plan.ndpu, &sizes)?;
        let m = a.metrics();
        cvs.push(m.workload_cv);
        let mean = a.workload.iter().sum::<u64>() as f64 / a.workload.len().max(1) as f64;
        if mean > 0.0 {
            max_over_mean = max_over_mean.max(m.max_workload as f64 / mean);
        }
    }

    let mut stage_cycles: BTreeMap<String, f64> = Stage::ALL.iter().map(|s| (s.name().to_string(), 0.0)).collect();
    let mut makespan = 0.0;
    let mut lookups = 0u64;
    let cost_files = art.batch_files("cost_", ".csv")?;
    for p in &cost_files {
        let mut per_dpu: BTreeMap<usize, f64> = BTreeMap::new();
        for line in fs::read_to_string(p)?.lines().skip(1).filter(|l| !l.is_empty()) {
            let bad = || Error::InvalidData(format!("{}: bad line {line:?}", p.display()));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(bad());
            }
            let dpu: usize = f[0].parse().map_err(|_| bad())?;
            let cycles: f64 = f[2].parse().map_err(|_| bad())?;
            *per_dpu.entry(dpu).or_default() += cycles;
            *stage_cycles.get_mut(f[1]).ok_or_else(bad)? += cycles;
            if f[1] == Stage::Distance.name() {
                lookups += f[5].parse::<u64>().map_err(|_| bad())?;
            }
        }
        makespan += per_dpu.values().copied().fold(0.0, f64::max);
    }
    let total: f64 = stage_cycles.values().sum();
    let breakdown = stage_cycles
        .iter()
        .map(|(k, v)| (k.clone(), if total > 0.0 { v / total } else { 0.0 }))
        .collect();

    let results = art.load_results()?;
    let truth = art.load_truth()?;
    let nqueries = match &truth {
        Some(t) => t.len(),
        None => results.keys().next_back().map_or(0, |&q| q + 1),
    };
    let recall = truth.as_ref().map(|t| mean_recall(&results, t, cfg.k));
    Ok(RunReport {
        nqueries,
        nbatches: cost_files.len(),
        recall,
        qps: if makespan > 0.0 { nqueries as f64 * clock / makespan } else { 0.0 },
        total_makespan_cycles: makespan,
        stage_cycles,
        breakdown,
        placement: plan.balance_metrics(),
        thld: plan.thld,
        schedule_cv_mean: if cvs.is_empty() { 0.0 } else { cvs.iter().sum::<f64>() / cvs.len() as f64 },
        schedule_max_over_mean: max_over_mean,
        cooccur,
        lookups_total: lookups,
        lookups_per_query: if nqueries > 0 { lookups as f64 / nqueries as f64 } else { 0.0 },
    })
}

pub fn save_report(art: &Artifacts, r: &RunReport) -> Result<()> {
    art.write("report.json", serde_json::to_vec_pretty(r)?)?;
    art.write("report.txt", r.to_text())
}

/// Runs every stage in a staging directory and moves the artifacts into
/// the output directory only when all stages succeed.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunReport> {
    cfg.validate()?;
    let out = &cfg.output;
    let staging = staging_dir(out);
    if staging.exists() {
        fs::remove_dir_all(&staging)?;
    }
    fs::create_dir_all(&staging)?;
    let result = run_into(cfg, &Artifacts::new(&staging));
    match result {
        Ok(report) => {
            fs::create_dir_all(out)?;
            move_tree(&staging, out)?;
            fs::remove_dir_all(&staging)?;
            Ok(report)
        }
        Err(e) => {
            let _ = fs::remove_dir_all(&staging);
            Err(e)
        }
    }
}

fn staging_dir(out: &Path) -> PathBuf {
    let name = out.file_name().map_or_else(|| "out".into(), |n| n.to_string_lossy().into_owned());
    out.with_file_name(format!(".{name}.partial"))
}

fn move_tree(from: &Path, to: &Path) -> Result<()> {
    for e in fs::read_dir(from)? {
        let e = e?;
        let target = to.join(e.file_name());
        if e.file_type()?.is_dir() {
            if target.exists() {
                fs::remove_dir_all(&target)?;
            }
            fs::create_dir_all(&target)?;
            move_tree(&e.path(), &target)?;
        } else {
            fs::rename(e.path(), target)?;
        }
    }
    Ok(())
}

fn run_into(cfg: &RunConfig, art: &Artifacts) -> Result<RunReport> {
    art.save_config(cfg)?;
    let inputs = load_inputs(cfg).map_err(|e| e.in_module("harness"))?;
    art.save_truth(&inputs.truth)?;
    let trained = train(cfg, &inputs.base)?;
    art.save_trained(&trained)?;
    let (stats, plan) = place(cfg, &trained.index, &inputs.base).map_err(|e| e.in_module("placement"))?;
    art.save_placement(&stats, &plan)?;
    let scheduled = schedule_all(cfg, &trained.index, &plan, &inputs.queries)?;
    for (b, (_, _, a)) in scheduled.iter().enumerate() {
        art.save_assignment(b, a)?;
    }
    let outs = simulate(cfg, &trained, &inputs.queries, &scheduled).map_err(|e| e.in_module("sim"))?;
    let starts: Vec<usize> = scheduled.iter().map(|s| s.0).collect();
    art.save_simulation(&outs, &starts)?;
    let report = report_from_artifacts(cfg, art)?;
    save_report(art, &report)?;
    Ok(report)
}

pub fn schedule_all(
    cfg: &RunConfig,
    index: &IvfPqIndex,
    plan: &PlacementMap,
    queries: &Dataset,
) -> Result<Vec<(usize, QueryBatch, Assignment)>> {
    let sizes = index.encoded.sizes();
    batches(cfg, index, queries)
        .and_then(|bs| {
            bs.into_iter()
                .map(|(start, b)| {
                    let a = schedule(cfg, &b, plan, &sizes)?;
                    Ok((start, b, a))
                })
                .collect()
        })
        .map_err(|e: Error| e.in_module("scheduler"))
}
