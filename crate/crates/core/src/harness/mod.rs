//! Dataset IO, run configuration, synthetic data and the end-to-end
//! pipeline behind the command-line tool.

mod config;
mod pipeline;
mod scaling;
mod synth;
mod vecs;

pub use config::RunConfig;
pub use pipeline::{
    batches, load_inputs, mean_recall, place, report_from_artifacts, run_pipeline, save_report, schedule, schedule_all,
    simulate, train, with_encoding, wram_plan, Artifacts, CooccurSummary, Inputs, RunReport, Trained,
};
pub use scaling::{project_scaling, ScalingFit};
pub use synth::{sample_probes, synthetic_dataset, synthetic_sizes, zipf_frequencies, SyntheticSpec};
pub use vecs::{read_vecs, read_vecs_from, write_vecs, write_vecs_to, Vecs, VecsData, VecsKind};
