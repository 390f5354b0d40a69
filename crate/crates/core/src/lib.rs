//! IVFPQ approximate nearest-neighbor search together with the machinery needed
//! to run it on a bank-partitioned processing-in-memory (PIM) device: replicated
//! cluster placement, batch query scheduling, co-occurrence aware re-encoding
//! with cached partial sums, pruned top-k merging, and a deterministic cost-model
//! simulator of the DPUs that execute the scan.
//!
//! The crate is organised bottom-up:
//!
//! * [`index`] trains the coarse quantizer and PQ codebooks, encodes residuals,
//!   and provides the reference ADC search and a brute-force oracle.
//! * [`placement`] distributes clusters (with replicas) across DPUs.
//! * [`scheduler`] maps each query's probed clusters to replica DPUs.
//! * [`cooccur`] mines frequent code triples and re-encodes vectors into
//!   direct addresses over an extended lookup table.
//! * [`topk`] holds the bounded heaps and the pruned merge.
//! * [`sim`] models WRAM/MRAM, the thread pipeline and the barrier flow.
//! * [`harness`] ingests datasets, orchestrates runs and emits reports.

pub mod cooccur;
pub mod error;
pub mod harness;
pub mod index;
pub mod placement;
pub mod scheduler;
pub mod sim;
pub mod topk;

pub use error::{Error, Result};
