//! Co-occurrence re-encoding: frequent position-anchored code triples are
//! cached as partial sums after the LUT, and codes are rewritten as direct
//! addresses into that extended table.

mod encode;
mod format;
mod mine;

pub use encode::{
    adc_distance_reencoded, compute_partial_sums, decode, layout_cache, length_stats, reencode, CacheLayout,
    ExtendedLut, LengthStats, ReencodedVector, Reencoder, DEFAULT_CACHE_SLOTS,
};
pub use format::{read_cluster, write_cluster};
pub use mine::{
    build_icg_and_mine, recount, CachedCombination, CombinationSet, Item, MiningParams, GROUP_SLOTS, PAIR_MASKS,
    TRIPLE_MASK,
};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::index::EncodedCluster;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CooccurParams {
    pub mining: MiningParams,
    pub cache_slots: usize,
    /// Clusters whose length reduction does not exceed this keep classic codes.
    pub adoption_threshold: f64,
}

impl Default for CooccurParams {
    fn default() -> Self {
        Self {
            mining: MiningParams::default(),
            cache_slots: DEFAULT_CACHE_SLOTS,
            adoption_threshold: 0.5,
        }
    }
}

/// A cluster's codes rewritten against its own cache layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReencodedCluster {
    pub layout: CacheLayout,
    pub vectors: Vec<ReencodedVector>,
}

impl ReencodedCluster {
    pub fn stats(&self, threshold: f64) -> LengthStats {
        length_stats(&self.vectors, self.layout.m_dims(), threshold)
    }

    /// Total lookups for one scan of the cluster.
    pub fn total_len(&self) -> usize {
        self.vectors.iter().map(|v| v.len()).sum()
    }
}

/// Mines, lays out and re-encodes one cluster.
pub fn encode_cluster(cluster: &EncodedCluster, m_dims: usize, kstar: usize, params: &CooccurParams) -> Result<ReencodedCluster> {
    let set = build_icg_and_mine(cluster, m_dims, &params.mining);
    let layout = layout_cache(&set, m_dims, kstar, params.cache_slots)?;
    let enc = Reencoder::new(&layout);
    let vectors = (0..cluster.len()).map(|i| enc.reencode(cluster.code(i, m_dims))).collect();
    Ok(ReencodedCluster { layout, vectors })
}
