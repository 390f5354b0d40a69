use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::kmeans::{kmeans, nearest, KMeansParams};
use crate::error::{Error, Result};

/// `M` sub-codebooks of `kstar` codewords each, every codeword `dsub = D/M`
/// components long.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PqCodebook {
    dim: usize,
    m: usize,
    kstar: usize,
    /// `m × kstar × dsub`, sub-space major.
    tables: Vec<f32>,
}

/// Compression ratio of `f32` vectors to one-byte PQ codes: `4·D/M`.
pub fn compression_rate(dim: usize, m: usize) -> f64 {
    4.0 * dim as f64 / m as f64
}

impl PqCodebook {
    /// Trains one k-means per sub-space of the residuals.
    pub fn train(residuals: &Dataset, m: usize, kstar: usize, seed: u64) -> Result<Self> {
        Self::train_with(residuals, m, kstar, seed, KMeansParams::default())
    }

    pub fn train_with(
        residuals: &Dataset,
        m: usize,
        kstar: usize,
        seed: u64,
        params: KMeansParams,
    ) -> Result<Self> {
        let dim = residuals.dim();
        if m == 0 || !dim.is_multiple_of(m) {
            return Err(Error::InvalidArgument(format!(
                "dimension {dim} is not divisible by {m} sub-quantizers"
            )));
        }
        if kstar == 0 || kstar > 256 {
            return Err(Error::InvalidArgument(format!(
                "kstar must be in 1..=256, got {kstar}"
            )));
        }
        let dsub = dim / m;
        let n = residuals.len();
        let mut tables = Vec::with_capacity(m * kstar * dsub);
        let mut sub = vec![0f32; n * dsub];
        for i in 0..m {
            for (dst, row) in sub.chunks_exact_mut(dsub).zip(residuals.rows()) {
                dst.copy_from_slice(&row[i * dsub..(i + 1) * dsub]);
            }
            let sub_seed = seed.wrapping_add((i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            tables.extend(kmeans(&sub, dsub, kstar, sub_seed, params)?);
        }
        Ok(Self {
            dim,
            m,
            kstar,
            tables,
        })
    }

    /// Builds a codebook from explicit tables (`m × kstar × dsub`).
    pub fn from_tables(dim: usize, m: usize, kstar: usize, tables: Vec<f32>) -> Result<Self> {
        if m == 0 || !dim.is_multiple_of(m) || kstar == 0 || kstar > 256 || tables.len() != dim * kstar {
            return Err(Error::InvalidArgument(format!(
                "codebook shape mismatch: dim={dim} m={m} kstar={kstar} tables={}",
                tables.len()
            )));
        }
        Ok(Self {
            dim,
            m,
            kstar,
            tables,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn dsub(&self) -> usize {
        self.dim / self.m
    }

    pub fn kstar(&self) -> usize {
        self.kstar
    }

    /// All codewords of sub-space `i`, row-major.
    pub fn sub_codebook(&self, i: usize) -> &[f32] {
        let len = self.kstar * self.dsub();
        &self.tables[i * len..(i + 1) * len]
    }

    pub fn codeword(&self, i: usize, j: usize) -> &[f32] {
        let dsub = self.dsub();
        &self.sub_codebook(i)[j * dsub..(j + 1) * dsub]
    }

    /// Nearest codeword per sub-space, ties to the lowest codeword index.
    pub fn encode_one(&self, x: &[f32], out: &mut Vec<u8>) {
        let dsub = self.dsub();
        for i in 0..self.m {
            let (j, _) = nearest(&x[i * dsub..(i + 1) * dsub], self.sub_codebook(i), dsub);
            out.push(j as u8);
        }
    }

    /// Concatenated codewords selected by `code`.
    pub fn decode(&self, code: &[u8]) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.dim);
        for (i, &c) in code.iter().enumerate() {
            out.extend_from_slice(self.codeword(i, c as usize));
        }
        out
    }
}

/// The PQ codes of one inverted list.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EncodedCluster {
    pub ids: Vec<u32>,
    /// `ids.len() × m` code bytes.
    pub codes: Vec<u8>,
}

impl EncodedCluster {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn code(&self, i: usize, m: usize) -> &[u8] {
        &self.codes[i * m..(i + 1) * m]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodedDataset {
    pub m: usize,
    pub kstar: usize,
    /// Codes quantize `x − c` rather than `x`.
    pub residual: bool,
    pub clusters: Vec<EncodedCluster>,
}

impl EncodedDataset {
    pub fn total_points(&self) -> usize {
        self.clusters.iter().map(EncodedCluster::len).sum()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.clusters.iter().map(EncodedCluster::len).collect()
    }

    /// Checks code ranges, code lengths and global id uniqueness.
    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for (c, cl) in self.clusters.iter().enumerate() {
            if cl.codes.len() != cl.ids.len() * self.m {
                return Err(Error::InvalidData(format!(
                    "cluster {c}: {} code bytes for {} points",
                    cl.codes.len(),
                    cl.ids.len()
                )));
            }
            if let Some(b) = cl.codes.iter().find(|&&b| b as usize >= self.kstar) {
                return Err(Error::InvalidData(format!(
                    "cluster {c}: code {b} out of range for kstar {}",
                    self.kstar
                )));
            }
            for &id in &cl.ids {
                if !seen.insert(id) {
                    return Err(Error::InvalidData(format!("point id {id} appears twice")));
                }
            }
        }
        Ok(())
    }
}

/// Encodes residuals and groups them by their assigned cluster. Point ids are
/// row indices.
pub fn encode(
    residuals: &Dataset,
    assignments: &[usize],
    nclusters: usize,
    codebook: &PqCodebook,
) -> Result<EncodedDataset> {
    if residuals.dim() != codebook.dim() {
        return Err(Error::InvalidArgument(format!(
            "residual dimension {} does not match codebook dimension {}",
            residuals.dim(),
            codebook.dim()
        )));
    }
    if assignments.len() != residuals.len() {
        return Err(Error::InvalidArgument(format!(
            "{} assignments for {} residuals",
            assignments.len(),
            residuals.len()
        )));
    }
    if residuals.len() > u32::MAX as usize {
        return Err(Error::InvalidArgument("too many points for 32-bit ids".into()));
    }
    let mut clusters = vec![EncodedCluster::default(); nclusters];
    for (i, (row, &a)) in residuals.rows().zip(assignments).enumerate() {
        let cl = clusters.get_mut(a).ok_or_else(|| {
            Error::InvalidArgument(format!("assignment {a} out of range for {nclusters} clusters"))
        })?;
        cl.ids.push(i as u32);
        codebook.encode_one(row, &mut cl.codes);
    }
    Ok(EncodedDataset {
        m: codebook.m(),
        kstar: codebook.kstar(),
        residual: true,
        clusters,
    })
}
