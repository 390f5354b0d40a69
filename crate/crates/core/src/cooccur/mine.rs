use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::index::EncodedCluster;

/// A code value pinned to a column.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Item {
    pub column: u16,
    pub code: u8,
}

impl Item {
    pub fn new(column: usize, code: u8) -> Self {
        Self {
            column: column as u16,
            code,
        }
    }
}

/// Number of slot indices each mined triple reserves. Offsets inside a group
/// are subset bitmasks over the triple's items (bit i = item i).
pub const GROUP_SLOTS: usize = 8;
pub const TRIPLE_MASK: usize = 0b111;
pub const PAIR_MASKS: [usize; 3] = [0b011, 0b101, 0b110];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiningParams {
    /// Number of triples to keep.
    pub max_triples: usize,
    /// Largest column span of a triple plus one.
    pub window: usize,
    /// Minimum occurrence count for a pair edge or a triple.
    pub min_support: u32,
}

impl Default for MiningParams {
    fn default() -> Self {
        Self {
            max_triples: 256,
            window: 4,
            min_support: 2,
        }
    }
}

/// One cached combination: a mined triple or one of its pair subsets.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CachedCombination {
    pub slot: usize,
    pub items: Vec<Item>,
    pub frequency: u32,
}

/// Mined triples of a cluster with the slots of their cached subsets.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CombinationSet {
    triples: Vec<[Item; 3]>,
    entries: Vec<CachedCombination>,
}

impl CombinationSet {
    /// Builds a set from triples in group order; `frequency` supplies counts.
    pub fn from_triples(triples: Vec<[Item; 3]>, mut frequency: impl FnMut(&[Item]) -> u32) -> Self {
        let mut entries = Vec::with_capacity(triples.len() * 4);
        for (g, t) in triples.iter().enumerate() {
            debug_assert!(t[0].column < t[1].column && t[1].column < t[2].column);
            let base = g * GROUP_SLOTS;
            for mask in PAIR_MASKS {
                let items = subset(t, mask);
                let f = frequency(&items);
                entries.push(CachedCombination {
                    slot: base + mask,
                    items,
                    frequency: f,
                });
            }
            entries.push(CachedCombination {
                slot: base + TRIPLE_MASK,
                items: t.to_vec(),
                frequency: frequency(t),
            });
        }
        Self { triples, entries }
    }

    pub fn triples(&self) -> &[[Item; 3]] {
        &self.triples
    }

    /// Cached entries in ascending slot order.
    pub fn entries(&self) -> &[CachedCombination] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    /// One past the highest slot in use.
    pub fn slot_span(&self) -> usize {
        self.triples.len() * GROUP_SLOTS
    }
}

fn subset(t: &[Item; 3], mask: usize) -> Vec<Item> {
    (0..3).filter(|i| mask >> i & 1 == 1).map(|i| t[i]).collect()
}

type PairKey = (Item, Item);
type TripleKey = (Item, Item, Item);

/// Counts pair and triple occurrences in a cluster and keeps the most frequent
/// position-anchored triples. Pair counts form the co-occurrence graph; a
/// triple is only counted when all three of its edges reach `min_support`.
pub fn build_icg_and_mine(cluster: &EncodedCluster, m_dims: usize, params: &MiningParams) -> CombinationSet {
    let n = cluster.len();
    let w = params.window.max(3);
    let mut edges: HashMap<PairKey, u32> = HashMap::new();
    for i in 0..n {
        let code = cluster.code(i, m_dims);
        for a in 0..m_dims {
            for b in a + 1..(a + w).min(m_dims) {
                *edges.entry((Item::new(a, code[a]), Item::new(b, code[b]))).or_insert(0) += 1;
            }
        }
    }
    let strong = |x: Item, y: Item| edges.get(&(x, y)).is_some_and(|&c| c >= params.min_support);

    let mut triples: HashMap<TripleKey, u32> = HashMap::new();
    for i in 0..n {
        let code = cluster.code(i, m_dims);
        for a in 0..m_dims {
            let ia = Item::new(a, code[a]);
            let end = (a + w).min(m_dims);
            for b in a + 1..end {
                let ib = Item::new(b, code[b]);
                if !strong(ia, ib) {
                    continue;
                }
                for (c, &cc) in code.iter().enumerate().take(end).skip(b + 1) {
                    let ic = Item::new(c, cc);
                    if strong(ia, ic) && strong(ib, ic) {
                        *triples.entry((ia, ib, ic)).or_insert(0) += 1;
                    }
                }
            }
        }
    }

    let mut ranked: Vec<(TripleKey, u32)> =
        triples.into_iter().filter(|&(_, c)| c >= params.min_support).collect();
    ranked.sort_unstable_by(|x, y| y.1.cmp(&x.1).then(x.0.cmp(&y.0)));
    ranked.truncate(params.max_triples);

    let counts: HashMap<TripleKey, u32> = ranked.iter().copied().collect();
    let chosen = ranked.into_iter().map(|((a, b, c), _)| [a, b, c]).collect();
    CombinationSet::from_triples(chosen, |items| match items {
        [a, b] => edges[&(*a, *b)],
        [a, b, c] => counts[&(*a, *b, *c)],
        _ => 0,
    })
}

/// Number of codes in the cluster containing every item of `items`.
pub fn recount(cluster: &EncodedCluster, m_dims: usize, items: &[Item]) -> u32 {
    (0..cluster.len())
        .filter(|&i| {
            let code = cluster.code(i, m_dims);
            items.iter().all(|it| code[it.column as usize] == it.code)
        })
        .count() as u32
}
