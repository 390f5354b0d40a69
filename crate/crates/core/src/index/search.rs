use serde::{Deserialize, Serialize};

use super::dataset::{l2_sq, Dataset};
use super::kmeans::{kmeans, nearest, KMeansParams};
use super::lut::{real_entries, scale_for_max, Lut};
use super::pq::{encode, EncodedDataset, PqCodebook};
use super::adc_distance;
use crate::error::{Error, Result};
use crate::topk::{BoundedHeap, Candidate};

/// The IVF centroids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoarseQuantizer {
    centroids: Dataset,
}

/// One cluster selected for a query, with the query's residual against it.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbedCluster {
    pub cluster: usize,
    pub qc: Vec<f32>,
}

impl CoarseQuantizer {
    pub fn train(data: &Dataset, nclusters: usize, seed: u64) -> Result<Self> {
        Self::train_with(data, nclusters, seed, KMeansParams::default())
    }

    pub fn train_with(
        data: &Dataset,
        nclusters: usize,
        seed: u64,
        params: KMeansParams,
    ) -> Result<Self> {
        let c = kmeans(data.as_slice(), data.dim(), nclusters, seed, params)?;
        Ok(Self {
            centroids: Dataset::new(data.dim(), c)?,
        })
    }

    pub fn from_centroids(centroids: Dataset) -> Result<Self> {
        if centroids.is_empty() {
            return Err(Error::InvalidArgument("at least one centroid is required".into()));
        }
        centroids.check_finite()?;
        Ok(Self { centroids })
    }

    pub fn centroids(&self) -> &Dataset {
        &self.centroids
    }

    pub fn nclusters(&self) -> usize {
        self.centroids.len()
    }

    pub fn dim(&self) -> usize {
        self.centroids.dim()
    }

    /// Nearest centroid, ties to the lowest index.
    pub fn assign(&self, x: &[f32]) -> usize {
        nearest(x, self.centroids.as_slice(), self.dim()).0
    }

    /// Cluster id and residual `x − c` for every row.
    pub fn assign_and_residual(&self, data: &Dataset) -> Result<(Vec<usize>, Dataset)> {
        self.check_dim(data.dim())?;
        let mut assignments = Vec::with_capacity(data.len());
        let mut residuals = Vec::with_capacity(data.len() * data.dim());
        for row in data.rows() {
            let a = self.assign(row);
            assignments.push(a);
            residuals.extend(row.iter().zip(self.centroids.row(a)).map(|(x, c)| x - c));
        }
        Ok((assignments, Dataset::new(data.dim(), residuals)?))
    }

    /// The `nprobe` closest clusters in ascending distance (ties to the lower
    /// id), each with `q − c`.
    pub fn filter(&self, q: &[f32], nprobe: usize) -> Result<Vec<ProbedCluster>> {
        self.check_dim(q.len())?;
        if nprobe == 0 || nprobe > self.nclusters() {
            return Err(Error::InvalidArgument(format!(
                "nprobe {nprobe} must be in 1..={}",
                self.nclusters()
            )));
        }
        let mut order: Vec<(f32, usize)> = self
            .centroids
            .rows()
            .enumerate()
            .map(|(i, c)| (l2_sq(q, c), i))
            .collect();
        let cmp = |a: &(f32, usize), b: &(f32, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if nprobe < order.len() {
            order.select_nth_unstable_by(nprobe - 1, cmp);
            order.truncate(nprobe);
        }
        order.sort_unstable_by(cmp);
        Ok(order
            .into_iter()
            .map(|(_, cluster)| ProbedCluster {
                cluster,
                qc: q.iter().zip(self.centroids.row(cluster)).map(|(a, b)| a - b).collect(),
            })
            .collect())
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        if dim != self.dim() {
            return Err(Error::InvalidArgument(format!(
                "vector dimension {dim} does not match centroid dimension {}",
                self.dim()
            )));
        }
        Ok(())
    }
}

/// A trained and populated IVFPQ index, used as the CPU reference search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IvfPqIndex {
    pub coarse: CoarseQuantizer,
    pub codebook: PqCodebook,
    pub encoded: EncodedDataset,
}

impl IvfPqIndex {
    /// Offline phase: coarse k-means, residuals, PQ training, encoding.
    pub fn train(data: &Dataset, nclusters: usize, m: usize, kstar: usize, seed: u64) -> Result<Self> {
        data.check_finite()?;
        let coarse = CoarseQuantizer::train(data, nclusters, seed)?;
        let (assignments, residuals) = coarse.assign_and_residual(data)?;
        let codebook = PqCodebook::train(&residuals, m, kstar, seed.wrapping_add(1))?;
        let encoded = encode(&residuals, &assignments, nclusters, &codebook)?;
        Ok(Self {
            coarse,
            codebook,
            encoded,
        })
    }

    /// One LUT per probed cluster, all sharing one scale so distances from
    /// different clusters compare. The scale maps `bound` to [`LUT_MAX`](super::LUT_MAX), where
    /// `bound` is the k-th smallest real ADC distance among the leading probes
    /// that together hold `k` points. Entries above it saturate; any point with
    /// such an entry is farther than `bound` and so outside the top k.
    pub fn query_luts(&self, probes: &[ProbedCluster], k: usize) -> Result<Vec<Lut>> {
        let (m, kstar) = (self.codebook.m(), self.codebook.kstar());
        let reals = probes
            .iter()
            .map(|p| real_entries(&p.qc, &self.codebook))
            .collect::<Result<Vec<_>>>()?;
        let mut dists: Vec<f64> = Vec::new();
        for (p, r) in probes.iter().zip(&reals) {
            if dists.len() >= k.max(1) {
                break;
            }
            let Some(cl) = self.encoded.clusters.get(p.cluster) else { continue };
            for i in 0..cl.len() {
                let code = cl.code(i, m);
                dists.push(code.iter().enumerate().map(|(s, &c)| r[s * kstar + c as usize] as f64).sum());
            }
        }
        let bound = if k > 0 && dists.len() >= k {
            let (_, kth, _) = dists.select_nth_unstable_by(k - 1, f64::total_cmp);
            *kth
        } else {
            // fewer than k points in total: nothing may saturate
            reals
                .iter()
                .map(|r| r.chunks_exact(kstar).map(|c| c.iter().copied().fold(0f32, f32::max) as f64).sum::<f64>())
                .fold(0f64, f64::max)
        };
        let scale = scale_for_max((bound * (1.0 + 1e-6)) as f32);
        Ok(reals.iter().map(|r| Lut::quantize(r, m, kstar, scale)).collect())
    }

    /// Classic IVFPQ search: filter, build LUTs, scan with ADC, keep top-k.
    pub fn search(&self, q: &[f32], nprobe: usize, k: usize) -> Result<Vec<Candidate>> {
        let probes = self.coarse.filter(q, nprobe)?;
        let luts = self.query_luts(&probes, k)?;
        let m = self.encoded.m;
        let mut heap = BoundedHeap::new(k);
        for (p, lut) in probes.iter().zip(&luts) {
            let cl = &self.encoded.clusters[p.cluster];
            for (i, &id) in cl.ids.iter().enumerate() {
                heap.insert(Candidate::new(adc_distance(cl.code(i, m), lut), id));
            }
        }
        Ok(heap.into_sorted_vec())
    }
}

/// Exact k nearest rows by L2, ascending, ties to the lower id.
pub fn brute_force_topk(data: &Dataset, q: &[f32], k: usize) -> Result<Vec<u32>> {
    if q.len() != data.dim() {
        return Err(Error::InvalidArgument(format!(
            "query dimension {} does not match data dimension {}",
            q.len(),
            data.dim()
        )));
    }
    if k > data.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} exceeds the {} available points",
            data.len()
        )));
    }
    let mut scored: Vec<(f32, u32)> =
        data.rows().enumerate().map(|(i, r)| (l2_sq(q, r), i as u32)).collect();
    let cmp = |a: &(f32, u32), b: &(f32, u32)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k > 0 && k < scored.len() {
        scored.select_nth_unstable_by(k - 1, cmp);
    }
    scored.truncate(k);
    scored.sort_unstable_by(cmp);
    Ok(scored.into_iter().map(|(_, i)| i).collect())
}

/// `|result ∩ truth| / k`.
pub fn recall_at_k(result: &[u32], truth: &[u32]) -> Result<f64> {
    if result.len() != truth.len() {
        return Err(Error::InvalidArgument(format!(
            "result has {} ids but ground truth has {}",
            result.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Ok(1.0);
    }
    let truth: std::collections::HashSet<u32> = truth.iter().copied().collect();
    let hits = result.iter().filter(|id| truth.contains(id)).count();
    Ok(hits as f64 / truth.len() as f64)
}
