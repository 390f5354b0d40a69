//! Classical IVFPQ: coarse quantizer, product quantizer, fixed-point lookup
//! tables, ADC distances and the exact brute-force oracle used for recall.

mod dataset;
mod kmeans;
mod lut;
mod pq;
mod search;

pub use dataset::{l2_sq, Dataset};
pub use kmeans::{KMeansParams, DEFAULT_MAX_ITER, DEFAULT_TOLERANCE};
pub use lut::{adc_distance, Lut, LUT_MAX};
pub use pq::{compression_rate, encode, EncodedCluster, EncodedDataset, PqCodebook};
pub use search::{brute_force_topk, recall_at_k, CoarseQuantizer, IvfPqIndex, ProbedCluster};
