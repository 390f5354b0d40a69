//! Lloyd's k-means with k-means++ seeding, shared by the coarse quantizer and
//! every PQ sub-space.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dataset::l2_sq;
use crate::error::{Error, Result};

pub const DEFAULT_MAX_ITER: usize = 25;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KMeansParams {
    pub max_iter: usize,
    /// Stop once the relative inertia change drops below this value.
    pub tolerance: f64,
}

impl Default for KMeansParams {
    fn default() -> Self {
        Self {
            max_iter: DEFAULT_MAX_ITER,
            tolerance: DEFAULT_TOLERANCE,
        }
    }
}

/// Index of the nearest centroid and its squared distance. Ties go to the
/// lowest index.
#[inline]
pub(crate) fn nearest(x: &[f32], centroids: &[f32], dim: usize) -> (usize, f32) {
    let mut best = (0, f32::INFINITY);
    for (j, c) in centroids.chunks_exact(dim).enumerate() {
        let d = l2_sq(x, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Runs k-means over `data` (row-major, `dim` columns) and returns `k`
/// centroids, row-major.
pub(crate) fn kmeans(
    data: &[f32],
    dim: usize,
    k: usize,
    seed: u64,
    params: KMeansParams,
) -> Result<Vec<f32>> {
    let n = data.len() / dim;
    if k == 0 {
        return Err(Error::InvalidArgument("cluster count must be at least 1".into()));
    }
    if k > n {
        return Err(Error::InvalidArgument(format!(
            "cannot form {k} clusters from {n} points"
        )));
    }
    if let Some(p) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidData(format!(
            "non-finite component at row {} column {}",
            p / dim,
            p % dim
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_init(data, dim, n, k, &mut rng);

    let mut assign = vec![0usize; n];
    let mut dist = vec![0f32; n];
    let mut prev_inertia = f64::INFINITY;
    let mut sums = vec![0f64; k * dim];
    let mut counts = vec![0usize; k];
    let mut columns = vec![0f32; k * dim];
    let mut scratch = vec![0f32; k];

    for _ in 0..params.max_iter {
        let mut inertia = 0f64;
        transpose(&centroids, dim, k, &mut columns);
        for i in 0..n {
            let (j, d) = nearest_transposed(&data[i * dim..(i + 1) * dim], &columns, k, &mut scratch);
            assign[i] = j;
            dist[i] = d;
            inertia += d as f64;
        }

        sums.iter_mut().for_each(|s| *s = 0.0);
        counts.iter_mut().for_each(|c| *c = 0);
        for i in 0..n {
            let j = assign[i];
            counts[j] += 1;
            let row = &data[i * dim..(i + 1) * dim];
            for (s, &v) in sums[j * dim..(j + 1) * dim].iter_mut().zip(row) {
                *s += v as f64;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                let inv = 1.0 / counts[j] as f64;
                for t in 0..dim {
                    centroids[j * dim + t] = (sums[j * dim + t] * inv) as f32;
                }
            }
        }
        reseed_empty(data, dim, &mut centroids, &mut assign, &mut dist, &mut counts);

        let converged = inertia == 0.0
            || (prev_inertia.is_finite()
                && (prev_inertia - inertia).abs() / prev_inertia.max(f64::MIN_POSITIVE)
                    < params.tolerance);
        prev_inertia = inertia;
        if converged {
            break;
        }
    }
    Ok(centroids)
}

/// Writes centroids column-major: `out[t * k + j]` is component `t` of centroid `j`.
fn transpose(centroids: &[f32], dim: usize, k: usize, out: &mut [f32]) {
    for (j, c) in centroids.chunks_exact(dim).enumerate() {
        for (t, &v) in c.iter().enumerate() {
            out[t * k + j] = v;
        }
    }
}

/// Same contract as [`nearest`], scanning all centroids one component at a
/// time so the inner loop runs across centroids.
fn nearest_transposed(x: &[f32], columns: &[f32], k: usize, acc: &mut [f32]) -> (usize, f32) {
    acc.fill(0.0);
    for (&xv, col) in x.iter().zip(columns.chunks_exact(k)) {
        for (a, &c) in acc.iter_mut().zip(col) {
            let d = xv - c;
            *a += d * d;
        }
    }
    let mut best = (0, f32::INFINITY);
    for (j, &d) in acc.iter().enumerate() {
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn plus_plus_init(data: &[f32], dim: usize, n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let mut centroids = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..n);
    centroids.extend_from_slice(&data[first * dim..(first + 1) * dim]);
    let mut d2: Vec<f64> = (0..n)
        .map(|i| l2_sq(&data[i * dim..(i + 1) * dim], &centroids[..dim]) as f64)
        .collect();

    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 && r < w {
                    pick = i;
                    break;
                }
                r -= w;
            }
            // rounding can leave r just past the last positive weight
            if d2[pick] == 0.0 {
                pick = d2.iter().rposition(|&w| w > 0.0).unwrap_or(pick);
            }
            pick
        } else {
            // every point already coincides with a centroid
            rng.random_range(0..n)
        };
        let row = &data[pick * dim..(pick + 1) * dim];
        centroids.extend_from_slice(row);
        for (i, d) in d2.iter_mut().enumerate() {
            let nd = l2_sq(&data[i * dim..(i + 1) * dim], row) as f64;
            if nd < *d {
                *d = nd;
            }
        }
    }
    centroids
}

/// Re-seeds every empty cluster with the farthest point of the currently
/// largest cluster, moving that point over.
fn reseed_empty(
    data: &[f32],
    dim: usize,
    centroids: &mut [f32],
    assign: &mut [usize],
    dist: &mut [f32],
    counts: &mut [usize],
) {
    let k = counts.len();
    for empty in 0..k {
        if counts[empty] != 0 {
            continue;
        }
        let mut largest = 0;
        for j in 1..k {
            if counts[j] > counts[largest] {
                largest = j;
            }
        }
        if counts[largest] <= 1 {
            return;
        }
        let mut far: Option<usize> = None;
        for i in 0..assign.len() {
            if assign[i] == largest && far.is_none_or(|f| dist[i] > dist[f]) {
                far = Some(i);
            }
        }
        let Some(far) = far else { return };
        centroids[empty * dim..(empty + 1) * dim].copy_from_slice(&data[far * dim..(far + 1) * dim]);
        assign[far] = empty;
        dist[far] = 0.0;
        counts[largest] -= 1;
        counts[empty] = 1;
    }
}
