//! Synthetic data: grouped vectors whose sub-vectors come from a small set of
//! prototypes, and skewed query workloads.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::Dataset;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub points: usize,
    pub queries: usize,
    pub dim: usize,
    /// Well-separated groups the points are spread over.
    pub groups: usize,
    /// Sub-vector width; prototypes are drawn per sub-space.
    pub subspaces: usize,
    pub prototypes: usize,
    /// Spread of group centres per coordinate.
    pub center_range: f32,
    pub proto_range: f32,
    pub noise: f32,
    /// Probability that a block of four sub-spaces copies a group motif.
    pub motif_rate: f64,
    pub motifs: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            points: 10_000,
            queries: 100,
            dim: 128,
            groups: 64,
            subspaces: 16,
            prototypes: 32,
            center_range: 1000.0,
            proto_range: 5.0,
            noise: 0.05,
            motif_rate: 0.0,
            motifs: 4,
            seed: 1,
        }
    }
}

struct Generator {
    spec: SyntheticSpec,
    centers: Vec<Vec<f32>>,
    /// [subspace][proto] → sub-vector
    protos: Vec<Vec<Vec<f32>>>,
    /// [group][motif] → proto index per subspace
    motifs: Vec<Vec<Vec<usize>>>,
}

impl Generator {
    fn new(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Result<Self> {
        let s = spec;
        if s.dim == 0 || s.subspaces == 0 || !s.dim.is_multiple_of(s.subspaces) {
            return Err(Error::InvalidArgument(format!("dim {} must split into {} subspaces", s.dim, s.subspaces)));
        }
        if s.groups == 0 || s.prototypes == 0 || s.points == 0 {
            return Err(Error::InvalidArgument("points, groups and prototypes must be positive".into()));
        }
        let dsub = s.dim / s.subspaces;
        let centers = (0..s.groups)
            .map(|_| (0..s.dim).map(|_| rng.random_range(0.0..s.center_range)).collect())
            .collect();
        let protos = (0..s.subspaces)
            .map(|_| {
                (0..s.prototypes)
                    .map(|_| (0..dsub).map(|_| rng.random_range(-s.proto_range..s.proto_range)).collect())
                    .collect()
            })
            .collect();
        let motifs = (0..s.groups)
            .map(|_| {
                (0..s.motifs.max(1))
                    .map(|_| (0..s.subspaces).map(|_| rng.random_range(0..s.prototypes)).collect())
                    .collect()
            })
            .collect();
        Ok(Self {
            spec: s.clone(),
            centers,
            protos,
            motifs,
        })
    }

    fn emit(&self, group: usize, choice: &[usize], rng: &mut ChaCha8Rng, out: &mut Vec<f32>) {
        let s = &self.spec;
        let dsub = s.dim / s.subspaces;
        let center = &self.centers[group];
        for (sub, &p) in choice.iter().enumerate() {
            let proto = &self.protos[sub][p];
            for j in 0..dsub {
                let noise = if s.noise > 0.0 { rng.random_range(-s.noise..s.noise) } else { 0.0 };
                out.push(center[sub * dsub + j] + proto[j] + noise);
            }
        }
    }

    fn apply_motif(&self, group: usize, choice: &mut [usize], rng: &mut ChaCha8Rng) {
        if self.spec.motif_rate <= 0.0 {
            return;
        }
        for block in (0..choice.len()).step_by(4) {
            if rng.random_bool(self.spec.motif_rate.min(1.0)) {
                let motif = &self.motifs[group][rng.random_range(0..self.motifs[group].len())];
                let end = (block + 4).min(choice.len());
                choice[block..end].copy_from_slice(&motif[block..end]);
            }
        }
    }
}

/// Base points (spread evenly over groups, prototypes balanced within each
/// group) and queries drawn from the same distribution.
pub fn synthetic_dataset(spec: &SyntheticSpec) -> Result<(Dataset, Dataset)> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let g = Generator::new(spec, &mut rng)?;
    let s = spec;
    let per_group: Vec<usize> = (0..s.groups).map(|i| s.points / s.groups + usize::from(i < s.points % s.groups)).collect();
    // balanced prototype lists per (group, subspace)
    let mut lists: Vec<Vec<Vec<usize>>> = per_group
        .iter()
        .map(|&n| {
            (0..s.subspaces)
                .map(|_| {
                    let mut l: Vec<usize> = (0..n).map(|i| i % s.prototypes).collect();
                    l.shuffle(&mut rng);
                    l
                })
                .collect()
        })
        .collect();
    let mut data = Vec::with_capacity(s.points * s.dim);
    let mut choice = vec![0usize; s.subspaces];
    for i in 0..s.points {
        let group = i % s.groups;
        for (sub, c) in choice.iter_mut().enumerate() {
            *c = lists[group][sub].pop().expect("sized to the group");
        }
        g.apply_motif(group, &mut choice, &mut rng);
        g.emit(group, &choice, &mut rng, &mut data);
    }
    let mut qdata = Vec::with_capacity(s.queries * s.dim);
    for _ in 0..s.queries {
        let group = rng.random_range(0..s.groups);
        for c in choice.iter_mut() {
            *c = rng.random_range(0..s.prototypes);
        }
        g.apply_motif(group, &mut choice, &mut rng);
        g.emit(group, &choice, &mut rng, &mut qdata);
    }
    Ok((Dataset::new(s.dim, data)?, Dataset::new(s.dim, qdata)?))
}

/// Access frequencies `∝ 1/rank^s` over a random ranking of the clusters,
/// normalised to sum to 1.
pub fn zipf_frequencies(nclusters: usize, s: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ranks: Vec<usize> = (1..=nclusters).collect();
    ranks.shuffle(&mut rng);
    let raw: Vec<f64> = ranks.iter().map(|&r| 1.0 / (r as f64).powf(s)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|f| f / total).collect()
}

/// Cluster sizes uniform in `[lo, hi]`.
pub fn synthetic_sizes(nclusters: usize, lo: usize, hi: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..nclusters).map(|_| rng.random_range(lo..=hi)).collect()
}

/// Probe lists of `nq` queries, each `nprobe` distinct clusters drawn with
/// probability proportional to `freqs`.
pub fn sample_probes(freqs: &[f64], nq: usize, nprobe: usize, rng: &mut impl Rng) -> Result<Vec<Vec<usize>>> {
    if nprobe == 0 || nprobe > freqs.len() {
        return Err(Error::InvalidArgument(format!("nprobe {nprobe} outside 1..={}", freqs.len())));
    }
    let mut cdf = Vec::with_capacity(freqs.len());
    let mut acc = 0.0;
    for &f in freqs {
        acc += f.max(0.0);
        cdf.push(acc);
    }
    if acc <= 0.0 {
        return Err(Error::InvalidArgument("frequencies sum to zero".into()));
    }
    let mut out = Vec::with_capacity(nq);
    for _ in 0..nq {
        let mut picked: Vec<usize> = Vec::with_capacity(nprobe);
        let mut tries = 0;
        while picked.len() < nprobe {
            let c = if tries < 64 * nprobe {
                let x = rng.random_range(0.0..acc);
                cdf.partition_point(|&v| v <= x).min(freqs.len() - 1)
            } else {
                // heavy skew: fill with the remaining clusters in order
                (0..freqs.len()).find(|c| !picked.contains(c)).expect("nprobe ≤ clusters")
            };
            tries += 1;
            if !picked.contains(&c) {
                picked.push(c);
            }
        }
        out.push(picked);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_shape_and_determinism() {
        let spec = SyntheticSpec {
            points: 1000,
            queries: 10,
            dim: 32,
            groups: 8,
            subspaces: 8,
            ..Default::default()
        };
        let (a, qa) = synthetic_dataset(&spec).unwrap();
        let (b, qb) = synthetic_dataset(&spec).unwrap();
        assert_eq!((a.len(), a.dim(), qa.len()), (1000, 32, 10));
        assert_eq!(a, b);
        assert_eq!(qa, qb);
        assert!(a.check_finite().is_ok());
    }

    #[test]
    fn zipf_and_probes() {
        let f = zipf_frequencies(100, 1.0, 3);
        assert!((f.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let max = f.iter().copied().fold(0.0, f64::max);
        let min = f.iter().copied().fold(1.0, f64::min);
        assert!((max / min - 100.0).abs() < 1e-6);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = sample_probes(&f, 50, 10, &mut rng).unwrap();
        for q in &p {
            let mut s = q.clone();
            s.sort();
            s.dedup();
            assert_eq!(s.len(), 10);
        }
        assert!(sample_probes(&f, 1, 101, &mut rng).is_err());
        let all = sample_probes(&f, 2, 100, &mut rng).unwrap();
        assert!(all.iter().all(|q| q.len() == 100));
    }
}
