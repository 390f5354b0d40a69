//! Flat `key = value` run configuration. Blank lines and `#` comments are
//! ignored; `dpu.<field>` keys override [`DpuModel`] defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::synth::SyntheticSpec;
use crate::error::{Error, Result};
use crate::scheduler::DEFAULT_BATCH_SIZE;
use crate::sim::DpuModel;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    /// Base vectors; a synthetic set is generated when absent.
    pub base: Option<PathBuf>,
    pub query: Option<PathBuf>,
    pub groundtruth: Option<PathBuf>,
    /// Row limits for the input files; 0 reads everything.
    pub max_base_rows: usize,
    pub max_query_rows: usize,
    pub synthetic: SyntheticSpec,

    pub nclusters: usize,
    pub m: usize,
    pub kstar: usize,
    pub nprobe: usize,
    pub k: usize,
    pub batch_size: usize,
    pub ndpu: usize,
    /// Vectors per DPU; 0 picks twice the even share.
    pub max_dpu_size: usize,
    pub threads: usize,
    pub buffer_vectors: usize,

    pub replication: bool,
    pub scheduling: bool,
    pub cooccur: bool,
    pub cooccur_m: usize,
    pub cooccur_threshold: f64,

    /// Batches of pseudo-queries used to estimate cluster frequencies.
    pub history_batches: usize,
    /// Largest base set for which missing ground truth is computed.
    pub gt_cap: usize,
    /// Worker threads for simulation; 0 uses all cores.
    pub workers: usize,
    pub dpu: BTreeMap<String, String>,
    pub seed: u64,
    pub output: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            base: None,
            query: None,
            groundtruth: None,
            max_base_rows: 0,
            max_query_rows: 0,
            synthetic: SyntheticSpec::default(),
            nclusters: 64,
            m: 16,
            kstar: 256,
            nprobe: 8,
            k: 10,
            batch_size: DEFAULT_BATCH_SIZE,
            ndpu: 16,
            max_dpu_size: 0,
            threads: 16,
            buffer_vectors: 16,
            replication: true,
            scheduling: true,
            cooccur: false,
            cooccur_m: 256,
            cooccur_threshold: 0.5,
            history_batches: 10,
            gt_cap: 200_000,
            workers: 0,
            dpu: BTreeMap::new(),
            seed: 1,
            output: PathBuf::from("out"),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn path_opt(v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| PathBuf::from(v))
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = RunConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            c.set(k.trim(), v.trim())?;
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let s = &mut self.synthetic;
        match key {
            "base" => self.base = path_opt(v),
            "query" => self.query = path_opt(v),
            "groundtruth" => self.groundtruth = path_opt(v),
            "max_base_rows" => self.max_base_rows = parse(key, v)?,
            "max_query_rows" => self.max_query_rows = parse(key, v)?,
            "synthetic.points" => s.points = parse(key, v)?,
            "synthetic.queries" => s.queries = parse(key, v)?,
            "synthetic.dim" => s.dim = parse(key, v)?,
            "synthetic.groups" => s.groups = parse(key, v)?,
            "synthetic.subspaces" => s.subspaces = parse(key, v)?,
            "synthetic.prototypes" => s.prototypes = parse(key, v)?,
            "synthetic.center_range" => s.center_range = parse(key, v)?,
            "synthetic.proto_range" => s.proto_range = parse(key, v)?,
            "synthetic.noise" => s.noise = parse(key, v)?,
            "synthetic.motif_rate" => s.motif_rate = parse(key, v)?,
            "synthetic.motifs" => s.motifs = parse(key, v)?,
            "synthetic.seed" => s.seed = parse(key, v)?,
            "nclusters" => self.nclusters = parse(key, v)?,
            "m" => self.m = parse(key, v)?,
            "kstar" => self.kstar = parse(key, v)?,
            "nprobe" => self.nprobe = parse(key, v)?,
            "k" => self.k = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "ndpu" => self.ndpu = parse(key, v)?,
            "max_dpu_size" => self.max_dpu_size = parse(key, v)?,
            "threads" => self.threads = parse(key, v)?,
            "buffer_vectors" => self.buffer_vectors = parse(key, v)?,
            "replication" => self.replication = parse(key, v)?,
            "scheduling" => self.scheduling = parse(key, v)?,
            "cooccur" => self.cooccur = parse(key, v)?,
            "cooccur.m" => self.cooccur_m = parse(key, v)?,
            "cooccur.threshold" => self.cooccur_threshold = parse(key, v)?,
            "history_batches" => self.history_batches = parse(key, v)?,
            "gt_cap" => self.gt_cap = parse(key, v)?,
            "workers" => self.workers = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "output" => self.output = PathBuf::from(v),
            _ => match key.strip_prefix("dpu.") {
                Some(field) => {
                    self.dpu.insert(field.to_string(), v.to_string());
                    self.model()?;
                }
                None => return Err(Error::Config(format!("unknown key {key}"))),
            },
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let s = &self.synthetic;
        let mut lines = vec![
            format!("base = {}", show_path(&self.base)),
            format!("query = {}", show_path(&self.query)),
            format!("groundtruth = {}", show_path(&self.groundtruth)),
            format!("max_base_rows = {}", self.max_base_rows),
            format!("max_query_rows = {}", self.max_query_rows),
            format!("synthetic.points = {}", s.points),
            format!("synthetic.queries = {}", s.queries),
            format!("synthetic.dim = {}", s.dim),
            format!("synthetic.groups = {}", s.groups),
            format!("synthetic.subspaces = {}", s.subspaces),
            format!("synthetic.prototypes = {}", s.prototypes),
            format!("synthetic.center_range = {}", s.center_range),
            format!("synthetic.proto_range = {}", s.proto_range),
            format!("synthetic.noise = {}", s.noise),
            format!("synthetic.motif_rate = {}", s.motif_rate),
            format!("synthetic.motifs = {}", s.motifs),
            format!("synthetic.seed = {}", s.seed),
            format!("nclusters = {}", self.nclusters),
            format!("m = {}", self.m),
            format!("kstar = {}", self.kstar),
            format!("nprobe = {}", self.nprobe),
            format!("k = {}", self.k),
            format!("batch_size = {}", self.batch_size),
            format!("ndpu = {}", self.ndpu),
            format!("max_dpu_size = {}", self.max_dpu_size),
            format!("threads = {}", self.threads),
            format!("buffer_vectors = {}", self.buffer_vectors),
            format!("replication = {}", self.replication),
            format!("scheduling = {}", self.scheduling),
            format!("cooccur = {}", self.cooccur),
            format!("cooccur.m = {}", self.cooccur_m),
            format!("cooccur.threshold = {}", self.cooccur_threshold),
            format!("history_batches = {}", self.history_batches),
            format!("gt_cap = {}", self.gt_cap),
            format!("workers = {}", self.workers),
            format!("seed = {}", self.seed),
            format!("output = {}", self.output.display()),
        ];
        lines.extend(self.dpu.iter().map(|(k, v)| format!("dpu.{k} = {v}")));
        lines.join("\n") + "\n"
    }

    /// DPU model with overrides applied.
    pub fn model(&self) -> Result<DpuModel> {
        let mut value = serde_json::to_value(DpuModel::default())?;
        let obj = value.as_object_mut().expect("model serializes to an object");
        for (k, v) in &self.dpu {
            let slot = obj.get_mut(k).ok_or_else(|| Error::Config(format!("unknown DPU parameter {k}")))?;
            *slot = match slot {
                serde_json::Value::Bool(_) => serde_json::Value::Bool(parse(k, v)?),
                serde_json::Value::Number(n) if n.is_u64() => serde_json::Value::from(parse::<u64>(k, v)?),
                _ => serde_json::Value::from(parse::<f64>(k, v)?),
            };
        }
        let model: DpuModel = serde_json::from_value(value)?;
        model.validate()?;
        Ok(model)
    }

    /// Checks counts and referenced files.
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("nclusters", self.nclusters),
            ("m", self.m),
            ("kstar", self.kstar),
            ("nprobe", self.nprobe),
            ("k", self.k),
            ("batch_size", self.batch_size),
            ("ndpu", self.ndpu),
            ("threads", self.threads),
            ("buffer_vectors", self.buffer_vectors),
            ("cooccur.m", self.cooccur_m),
            ("history_batches", self.history_batches),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.kstar > 256 {
            return Err(Error::Config(format!("kstar {} exceeds 256", self.kstar)));
        }
        if self.nprobe > self.nclusters {
            return Err(Error::Config(format!("nprobe {} exceeds nclusters {}", self.nprobe, self.nclusters)));
        }
        if !(self.cooccur_threshold.is_finite() && (0.0..1.0).contains(&self.cooccur_threshold)) {
            return Err(Error::Config("cooccur.threshold must lie in [0, 1)".into()));
        }
        match (&self.base, &self.query) {
            (Some(_), None) => return Err(Error::Config("query is required when base is given".into())),
            (None, _) if self.synthetic.points == 0 || self.synthetic.queries == 0 => {
                return Err(Error::Config("synthetic.points and synthetic.queries must be positive".into()));
            }
            _ => {}
        }
        for p in [&self.base, &self.query, &self.groundtruth].into_iter().flatten() {
            if !p.exists() {
                return Err(Error::Config(format!("{} does not exist", p.display())));
            }
        }
        self.model()?;
        Ok(())
    }
}
