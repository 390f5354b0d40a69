use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pim_ivfpq::harness::{
    batches, load_inputs, mean_recall, place, project_scaling, report_from_artifacts, run_pipeline, save_report, schedule,
    simulate, train, Artifacts, RunConfig,
};
use pim_ivfpq::{Error, Result};

#[derive(Parser)]
#[command(name = "pim-ivfpq", version, about = "IVFPQ search on a simulated processing-in-memory system")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Configuration file (key = value lines).
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set nprobe=16`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (overrides the config).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage and write all artifacts.
    Run(Common),
    /// Train the index and re-encode clusters.
    Train(Common),
    /// Estimate cluster frequencies and place clusters on DPUs.
    Place(Common),
    /// Assign each query batch to DPUs.
    Schedule(Common),
    /// Simulate the scheduled batches and write costs and results.
    Simulate(Common),
    /// Search on the host without the simulator and report recall.
    Search(Common),
    /// Rebuild the report from the artifacts in the output directory.
    Report(Common),
    /// Fit QPS against DPU count and extrapolate.
    Project(ProjectArgs),
}

#[derive(Args)]
struct ProjectArgs {
    #[command(flatten)]
    common: Common,
    /// Measured points as NDPU:QPS. When absent, runs the pipeline once per `--ndpus` entry.
    #[arg(long = "measure", value_name = "NDPU:QPS")]
    measures: Vec<String>,
    /// DPU counts to simulate when no measurements are given.
    #[arg(long, value_delimiter = ',')]
    ndpus: Vec<usize>,
    /// DPU count to extrapolate to.
    #[arg(long)]
    target: f64,
}

fn load_config(c: &Common) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for kv in &c.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {kv:?} is not KEY=VALUE")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(o) = &c.output {
        cfg.output = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn artifacts(cfg: &RunConfig) -> Result<Artifacts> {
    std::fs::create_dir_all(&cfg.output)?;
    Ok(Artifacts::new(&cfg.output))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(c) => {
            let cfg = load_config(&c)?;
            let report = run_pipeline(&cfg)?;
            print!("{}", report.to_text());
        }
        Command::Train(c) => {
            let cfg = load_config(&c)?;
            let art = artifacts(&cfg)?;
            let inputs = load_inputs(&cfg).map_err(|e| e.in_module("harness"))?;
            art.save_config(&cfg)?;
            art.save_truth(&inputs.truth)?;
            let t = train(&cfg, &inputs.base)?;
            art.save_trained(&t)?;
            println!(
                "trained {} clusters over {} points; re-encoded {}",
                t.index.encoded.clusters.len(),
                t.index.encoded.total_points(),
                t.cooccur.adopted
            );
        }
        Command::Place(c) => {
            let cfg = load_config(&c)?;
            let art = artifacts(&cfg)?;
            let inputs = load_inputs(&cfg).map_err(|e| e.in_module("harness"))?;
            let t = art.load_trained()?;
            let (stats, plan) = place(&cfg, &t.index, &inputs.base).map_err(|e| e.in_module("placement"))?;
            art.save_placement(&stats, &plan)?;
            let m = plan.balance_metrics();
            println!("thld {:.2}  workload cv {:.4}  max/mean {:.4}", plan.thld, m.workload_cv, m.workload_max_over_mean);
        }
        Command::Schedule(c) => {
            let cfg = load_config(&c)?;
            let art = artifacts(&cfg)?;
            let inputs = load_inputs(&cfg).map_err(|e| e.in_module("harness"))?;
            let t = art.load_trained()?;
            let (_, plan) = art.load_placement(&t.index)?;
            let sizes = t.index.encoded.sizes();
            let bs = batches(&cfg, &t.index, &inputs.queries).map_err(|e| e.in_module("scheduler"))?;
            for (b, (_, batch)) in bs.iter().enumerate() {
                let a = schedule(&cfg, batch, &plan, &sizes).map_err(|e| e.in_module("scheduler"))?;
                art.save_assignment(b, &a)?;
                println!("batch {b}: workload cv {:.4}", a.metrics().workload_cv);
            }
        }
        Command::Simulate(c) => {
            let cfg = load_config(&c)?;
            let art = artifacts(&cfg)?;
            let inputs = load_inputs(&cfg).map_err(|e| e.in_module("harness"))?;
            let t = art.load_trained()?;
            let (_, plan) = art.load_placement(&t.index)?;
            let sizes = t.index.encoded.sizes();
            let bs = batches(&cfg, &t.index, &inputs.queries).map_err(|e| e.in_module("scheduler"))?;
            let mut scheduled = Vec::with_capacity(bs.len());
            for (b, (start, batch)) in bs.into_iter().enumerate() {
                let a = art.load_assignment(b, plan.ndpu, &sizes)?;
                scheduled.push((start, batch, a));
            }
            let outs = simulate(&cfg, &t, &inputs.queries, &scheduled).map_err(|e| e.in_module("sim"))?;
            let starts: Vec<usize> = scheduled.iter().map(|s| s.0).collect();
            art.save_simulation(&outs, &starts)?;
            for (b, o) in outs.iter().enumerate() {
                println!("batch {b}: makespan {:.0} cycles, {:.1} QPS", o.report.makespan, o.report.qps);
            }
        }
        Command::Search(c) => {
            let cfg = load_config(&c)?;
            let art = artifacts(&cfg)?;
            let inputs = load_inputs(&cfg).map_err(|e| e.in_module("harness"))?;
            let t = art.load_trained()?;
            let mut csv = String::from("query_id,rank,point_id,distance\n");
            let mut results = std::collections::BTreeMap::new();
            for q in 0..inputs.queries.len() {
                let res = t.index.search(inputs.queries.row(q), cfg.nprobe, cfg.k)?;
                for (r, cand) in res.iter().enumerate() {
                    let _ = writeln!(csv, "{q},{r},{},{}", cand.id, cand.distance);
                }
                results.insert(q, res);
            }
            std::fs::write(art.path("results_host.csv"), csv)?;
            match &inputs.truth {
                Some(truth) => println!("recall@{} {:.4}", cfg.k, mean_recall(&results, truth, cfg.k)),
                None => println!("no ground truth; wrote {} queries", inputs.queries.len()),
            }
        }
        Command::Report(c) => {
            let cfg = load_config(&c)?;
            let art = Artifacts::new(&cfg.output);
            let report = report_from_artifacts(&cfg, &art)?;
            save_report(&art, &report)?;
            print!("{}", report.to_text());
        }
        Command::Project(p) => {
            let mut points = Vec::new();
            for m in &p.measures {
                let parsed = m
                    .split_once(':')
                    .and_then(|(a, b)| Some((a.trim().parse::<f64>().ok()?, b.trim().parse::<f64>().ok()?)));
                points.push(parsed.ok_or_else(|| Error::Config(format!("measurement {m:?} is not NDPU:QPS")))?);
            }
            if points.is_empty() {
                let base = load_config(&p.common)?;
                for &n in &p.ndpus {
                    let mut cfg = base.clone();
                    cfg.ndpu = n;
                    cfg.output = base.output.join(format!("ndpu_{n}"));
                    let r = run_pipeline(&cfg)?;
                    println!("ndpu {n}: {:.1} QPS", r.qps);
                    points.push((n as f64, r.qps));
                }
            }
            let fit = project_scaling(&points).map_err(|e| match e {
                Error::InvalidArgument(s) => Error::Config(s),
                other => other,
            })?;
            println!(
                "qps = {:.4} * ndpu + {:.2}  (R^2 {:.4})\nprojected at {}: {:.1} QPS",
                fit.slope,
                fit.intercept,
                fit.r_squared,
                p.target,
                fit.predict(p.target)
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e.root() {
                Error::Config(_) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}
