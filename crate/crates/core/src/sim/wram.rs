use serde::{Deserialize, Serialize};

use super::cost::Stage;
use super::model::DpuModel;
use crate::error::{Error, Result};
use crate::topk::Candidate;

/// Inputs for sizing the scratchpad.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WramParams {
    pub dim: usize,
    pub m: usize,
    pub kstar: usize,
    pub k: usize,
    pub threads: usize,
    /// Vectors fetched per MRAM read.
    pub buffer_vectors: usize,
    /// Bytes per stored vector record.
    pub record_bytes: usize,
    /// Partial-sum slots; zero when co-occurrence encoding is off.
    pub cache_slots: usize,
    /// Free the codebook once LUTs are built and reload it per cluster.
    pub reuse_codebook: bool,
}

impl WramParams {
    pub fn classic(dim: usize, m: usize, kstar: usize, k: usize, threads: usize, buffer_vectors: usize) -> Self {
        Self {
            dim,
            m,
            kstar,
            k,
            threads,
            buffer_vectors,
            record_bytes: m,
            cache_slots: 0,
            reuse_codebook: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    Codebook,
    Lut,
    PartialSums,
    ReadBuffers,
    ThreadHeaps,
    MergeHeap,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Allocation {
    pub region: Region,
    pub bytes: usize,
}

/// Scratchpad allocations live during each stage of a cluster scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WramPlan {
    pub params: WramParams,
    pub budget: usize,
    pub stages: Vec<(Stage, Vec<Allocation>)>,
}

impl WramPlan {
    pub fn stage_bytes(&self, stage: Stage) -> usize {
        self.stages
            .iter()
            .filter(|(s, _)| *s == stage)
            .flat_map(|(_, a)| a.iter().map(|a| a.bytes))
            .sum()
    }

    fn region(&self, region: Region) -> usize {
        self.stages
            .iter()
            .flat_map(|(_, a)| a.iter())
            .filter(|a| a.region == region)
            .map(|a| a.bytes)
            .max()
            .unwrap_or(0)
    }

    pub fn codebook_bytes(&self) -> usize {
        self.region(Region::Codebook)
    }

    pub fn lut_bytes(&self) -> usize {
        self.region(Region::Lut)
    }

    pub fn partial_sum_bytes(&self) -> usize {
        self.region(Region::PartialSums)
    }

    /// Codebook plus the full LUT (base entries and partial sums).
    pub fn combined_bytes(&self) -> usize {
        self.codebook_bytes() + self.lut_bytes() + self.partial_sum_bytes()
    }

    pub fn buffer_bytes_per_thread(&self) -> usize {
        self.params.buffer_vectors * self.params.record_bytes
    }

    pub fn threads(&self) -> usize {
        self.params.threads
    }

    pub fn k(&self) -> usize {
        self.params.k
    }

    pub fn peak_bytes(&self) -> usize {
        Stage::ALL.iter().map(|&s| self.stage_bytes(s)).max().unwrap_or(0)
    }
}

/// Lays out the scratchpad stage by stage and rejects any stage over budget.
pub fn plan_wram(params: &WramParams, model: &DpuModel) -> Result<WramPlan> {
    let p = params;
    let counts = [
        ("dim", p.dim),
        ("m", p.m),
        ("kstar", p.kstar),
        ("k", p.k),
        ("threads", p.threads),
        ("buffer_vectors", p.buffer_vectors),
        ("record_bytes", p.record_bytes),
    ];
    if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
        return Err(Error::InvalidArgument(format!("{name} must be positive")));
    }
    if p.threads > model.max_threads {
        return Err(Error::InvalidArgument(format!(
            "{} threads requested, the DPU has {}",
            p.threads, model.max_threads
        )));
    }
    if !p.dim.is_multiple_of(p.m) {
        return Err(Error::InvalidArgument(format!("dim {} not divisible by m {}", p.dim, p.m)));
    }
    let codebook = Allocation {
        region: Region::Codebook,
        bytes: p.dim * p.kstar,
    };
    let lut = Allocation {
        region: Region::Lut,
        bytes: p.m * p.kstar * 2,
    };
    let sums = Allocation {
        region: Region::PartialSums,
        bytes: p.cache_slots * 4,
    };
    let heaps = Allocation {
        region: Region::ThreadHeaps,
        bytes: p.threads * p.k * Candidate::BYTES,
    };
    let buffers = Allocation {
        region: Region::ReadBuffers,
        bytes: p.threads * p.buffer_vectors * p.record_bytes,
    };
    let merge = Allocation {
        region: Region::MergeHeap,
        bytes: p.k * Candidate::BYTES,
    };
    let keep = |mut v: Vec<Allocation>| {
        if !p.reuse_codebook {
            v.insert(0, codebook);
        }
        v.retain(|a| a.bytes > 0);
        v
    };
    let stages = vec![
        (Stage::LutBuild, vec![codebook, lut, sums, heaps]),
        (Stage::PartialSums, keep(vec![lut, sums, heaps])),
        (Stage::Distance, keep(vec![lut, sums, buffers, heaps])),
        (Stage::TopK, keep(vec![heaps, merge])),
    ];
    let stages: Vec<_> = stages
        .into_iter()
        .map(|(s, v)| (s, v.into_iter().filter(|a| a.bytes > 0).collect()))
        .collect();
    let plan = WramPlan {
        params: p.clone(),
        budget: model.wram_bytes,
        stages,
    };
    for &s in &Stage::ALL {
        let needed = plan.stage_bytes(s);
        if needed > model.wram_bytes {
            return Err(Error::WramOverflow {
                stage: s.name(),
                needed,
                budget: model.wram_bytes,
            });
        }
    }
    Ok(plan)
}
