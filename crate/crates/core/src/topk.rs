//! Bounded heaps for thread-local top-k, the pruned merge into a per-DPU
//! result, and host-side aggregation across DPUs.
//!
//! Candidates order by `(distance, id)`, so every selection here is a total
//! order and results are set-deterministic regardless of scan order.

use std::sync::Mutex;

use serde::{Deserialize, Serialize};

/// A scored point: fixed-point distance plus a 32-bit point id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Candidate {
    pub distance: u32,
    pub id: u32,
}

impl Candidate {
    pub const BYTES: usize = 8;

    pub fn new(distance: u32, id: u32) -> Self {
        Self { distance, id }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeapMode {
    /// Root is the largest entry.
    Max,
    /// Root is the smallest entry.
    Min,
}

/// Array-backed binary heap holding at most `k` candidates.
#[derive(Clone, Debug)]
pub struct BoundedHeap {
    k: usize,
    mode: HeapMode,
    data: Vec<Candidate>,
}

impl BoundedHeap {
    /// Empty max-root heap, the shape each scanning thread keeps.
    pub fn new(k: usize) -> Self {
        Self {
            k,
            mode: HeapMode::Max,
            data: Vec::with_capacity(k),
        }
    }

    pub fn capacity(&self) -> usize {
        self.k
    }

    pub fn mode(&self) -> HeapMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.data.len() >= self.k
    }

    pub fn root(&self) -> Option<Candidate> {
        self.data.first().copied()
    }

    pub fn as_slice(&self) -> &[Candidate] {
        &self.data
    }

    #[inline]
    fn above(&self, a: Candidate, b: Candidate) -> bool {
        match self.mode {
            HeapMode::Max => a > b,
            HeapMode::Min => a < b,
        }
    }

    /// Offers a candidate to a max-root heap. Below capacity it is always
    /// kept; at capacity it replaces the root only if strictly smaller, so an
    /// equal candidate leaves the heap unchanged. Returns whether the heap
    /// changed.
    pub fn insert(&mut self, c: Candidate) -> bool {
        debug_assert_eq!(self.mode, HeapMode::Max, "insert requires max mode");
        if self.k == 0 {
            return false;
        }
        if self.data.len() < self.k {
            self.data.push(c);
            self.sift_up(self.data.len() - 1);
            true
        } else if c < self.data[0] {
            self.data[0] = c;
            self.sift_down(0);
            true
        } else {
            false
        }
    }

    /// Removes and returns the root.
    pub fn pop(&mut self) -> Option<Candidate> {
        let last = self.data.pop()?;
        if self.data.is_empty() {
            return Some(last);
        }
        let root = std::mem::replace(&mut self.data[0], last);
        self.sift_down(0);
        Some(root)
    }

    /// Re-heapifies in place with a min root.
    pub fn into_min_heap(mut self) -> Self {
        self.mode = HeapMode::Min;
        for i in (0..self.data.len() / 2).rev() {
            self.sift_down(i);
        }
        self
    }

    /// Contents sorted ascending.
    pub fn into_sorted_vec(self) -> Vec<Candidate> {
        let mut v = self.data;
        v.sort_unstable();
        v
    }

    fn sift_up(&mut self, mut i: usize) {
        while i > 0 {
            let parent = (i - 1) / 2;
            if self.above(self.data[i], self.data[parent]) {
                self.data.swap(i, parent);
                i = parent;
            } else {
                break;
            }
        }
    }

    fn sift_down(&mut self, mut i: usize) {
        let n = self.data.len();
        loop {
            let l = 2 * i + 1;
            let r = l + 1;
            let mut best = i;
            if l < n && self.above(self.data[l], self.data[best]) {
                best = l;
            }
            if r < n && self.above(self.data[r], self.data[best]) {
                best = r;
            }
            if best == i {
                break;
            }
            self.data.swap(i, best);
            i = best;
        }
    }

    #[cfg(test)]
    fn is_heap(&self) -> bool {
        (1..self.data.len()).all(|i| !self.above(self.data[i], self.data[(i - 1) / 2]))
    }
}

/// Per-DPU top-k after merging the thread-local heaps.
#[derive(Clone, Debug)]
pub struct MergeOutcome {
    pub heap: BoundedHeap,
    /// Entries popped from local heaps and offered to the global heap.
    pub inserted: usize,
    /// Entries discarded without being offered.
    pub pruned: usize,
    /// Root comparisons made against the global heap.
    pub comparisons: usize,
}

/// Drains one min-root local heap into `global`, dropping the remainder as
/// soon as its root cannot beat the global maximum. The check runs before
/// every insertion.
fn drain_into(mut local: BoundedHeap, global: &mut BoundedHeap, stats: &mut (usize, usize, usize)) {
    while let Some(root) = local.root() {
        if global.is_full() {
            stats.2 += 1;
            if global.root().is_some_and(|max| root >= max) {
                stats.1 += local.len();
                return;
            }
        }
        local.pop();
        global.insert(root);
        stats.0 += 1;
    }
}

/// Merges complete thread-local max-heaps into one k-bounded max-heap,
/// converting each to a min-heap first so that whole tails can be pruned.
pub fn pruned_merge(heaps: Vec<BoundedHeap>, k: usize) -> MergeOutcome {
    let mut global = BoundedHeap::new(k);
    let mut stats = (0, 0, 0);
    for h in heaps {
        drain_into(h.into_min_heap(), &mut global, &mut stats);
    }
    MergeOutcome {
        heap: global,
        inserted: stats.0,
        pruned: stats.1,
        comparisons: stats.2,
    }
}

/// Same merge with one OS thread per local heap, insertions into the global
/// heap serialized by a mutex held per root (the take/give pattern).
pub fn pruned_merge_concurrent(heaps: Vec<BoundedHeap>, k: usize) -> MergeOutcome {
    let shared = Mutex::new((BoundedHeap::new(k), (0usize, 0usize, 0usize)));
    std::thread::scope(|s| {
        for h in heaps {
            let shared = &shared;
            s.spawn(move || {
                let mut local = h.into_min_heap();
                while let Some(root) = local.root() {
                    let mut guard = shared.lock().unwrap();
                    let (global, stats) = &mut *guard;
                    if global.is_full() {
                        stats.2 += 1;
                        if global.root().is_some_and(|max| root >= max) {
                            stats.1 += local.len();
                            return;
                        }
                    }
                    global.insert(root);
                    stats.0 += 1;
                    drop(guard);
                    local.pop();
                }
            });
        }
    });
    let (heap, stats) = shared.into_inner().unwrap();
    MergeOutcome {
        heap,
        inserted: stats.0,
        pruned: stats.1,
        comparisons: stats.2,
    }
}

/// Final top-k across DPUs, ascending, ties to the lower id.
pub fn host_aggregate<L: AsRef<[Candidate]>>(per_dpu: &[L], k: usize) -> Vec<Candidate> {
    let mut heap = BoundedHeap::new(k);
    for list in per_dpu {
        for &c in list.as_ref() {
            heap.insert(c);
        }
    }
    heap.into_sorted_vec()
}
