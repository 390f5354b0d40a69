use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::mine::{CombinationSet, Item};
use crate::error::{Error, Result};
use crate::index::Lut;

/// Slot indices the partial-sum region can hold: 256 triples × 8 slots, 8 KB of u32 sums.
pub const DEFAULT_CACHE_SLOTS: usize = 2048;

/// Maps cache slots to direct addresses placed right after the `M·kstar` LUT entries.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheLayout {
    m_dims: usize,
    kstar: usize,
    /// Member direct addresses per slot; empty for unused slots.
    members: Vec<Vec<u16>>,
}

impl CacheLayout {
    pub fn m_dims(&self) -> usize {
        self.m_dims
    }

    pub fn kstar(&self) -> usize {
        self.kstar
    }

    /// First combination address.
    pub fn base(&self) -> usize {
        self.m_dims * self.kstar
    }

    /// Slot indices covered, including unused holes.
    pub fn nslots(&self) -> usize {
        self.members.len()
    }

    pub fn address_of(&self, slot: usize) -> u16 {
        (self.base() + slot) as u16
    }

    pub fn members(&self, slot: usize) -> &[u16] {
        &self.members[slot]
    }

    /// Slots holding a combination, ascending.
    pub fn live_slots(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.members.len()).filter(|&s| !self.members[s].is_empty())
    }

    /// Flat entries addressable by a re-encoded vector.
    pub fn address_space(&self) -> usize {
        self.base() + self.members.len()
    }

    pub fn from_members(m_dims: usize, kstar: usize, members: Vec<Vec<u16>>) -> Result<Self> {
        let base = m_dims * kstar;
        if base + members.len() > u16::MAX as usize + 1 {
            return Err(Error::CacheOverflow {
                needed: members.len(),
                capacity: u16::MAX as usize + 1 - base.min(u16::MAX as usize + 1),
            });
        }
        for (s, mem) in members.iter().enumerate() {
            if mem.len() == 1 || mem.iter().any(|&a| a as usize >= base) {
                return Err(Error::CorruptEncoding(format!("slot {s} has invalid members {mem:?}")));
            }
            if mem.windows(2).any(|w| w[0] as usize / kstar >= w[1] as usize / kstar) {
                return Err(Error::CorruptEncoding(format!("slot {s} members not in column order")));
            }
        }
        Ok(Self {
            m_dims,
            kstar,
            members,
        })
    }
}

/// Assigns every cached combination its direct address.
pub fn layout_cache(set: &CombinationSet, m_dims: usize, kstar: usize, capacity: usize) -> Result<CacheLayout> {
    let span = set.slot_span();
    let room = (u16::MAX as usize + 1).saturating_sub(m_dims * kstar);
    let capacity = capacity.min(room);
    if span > capacity {
        return Err(Error::CacheOverflow {
            needed: span,
            capacity,
        });
    }
    let mut members = vec![Vec::new(); span];
    for e in set.entries() {
        if e.items.iter().any(|it| it.column as usize >= m_dims || it.code as usize >= kstar) {
            return Err(Error::InvalidArgument(format!("slot {} references items outside {m_dims}×{kstar}", e.slot)));
        }
        members[e.slot] = e.items.iter().map(|it| direct(it, kstar)).collect();
    }
    CacheLayout::from_members(m_dims, kstar, members)
}

fn direct(it: &Item, kstar: usize) -> u16 {
    (it.column as usize * kstar + it.code as usize) as u16
}

/// A code rewritten as direct addresses into the extended LUT.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReencodedVector {
    pub addrs: Vec<u16>,
}

impl ReencodedVector {
    /// Number of addresses.
    pub fn len(&self) -> usize {
        self.addrs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.addrs.is_empty()
    }

    /// Length as stored, counting the leading length field.
    pub fn stored_len(&self) -> usize {
        1 + self.addrs.len()
    }

    pub fn bytes(&self) -> usize {
        1 + 2 * self.addrs.len()
    }
}

/// Matcher prepared from a layout; indexes combinations by their first item.
#[derive(Clone, Debug)]
pub struct Reencoder {
    m_dims: usize,
    kstar: usize,
    base: usize,
    triples: HashMap<u16, Vec<(usize, Vec<u16>)>>,
    pairs: HashMap<u16, Vec<(usize, Vec<u16>)>>,
}

impl Reencoder {
    pub fn new(layout: &CacheLayout) -> Self {
        let mut triples: HashMap<u16, Vec<(usize, Vec<u16>)>> = HashMap::new();
        let mut pairs: HashMap<u16, Vec<(usize, Vec<u16>)>> = HashMap::new();
        for s in layout.live_slots() {
            let mem = layout.members(s).to_vec();
            let map = if mem.len() >= 3 { &mut triples } else { &mut pairs };
            map.entry(mem[0]).or_default().push((s, mem));
        }
        Self {
            m_dims: layout.m_dims,
            kstar: layout.kstar,
            base: layout.base(),
            triples,
            pairs,
        }
    }

    pub fn reencode(&self, code: &[u8]) -> ReencodedVector {
        debug_assert_eq!(code.len(), self.m_dims);
        let addr: Vec<u16> = code.iter().enumerate().map(|(c, &v)| (c * self.kstar + v as usize) as u16).collect();
        let mut covered = vec![false; self.m_dims];
        let mut slots = Vec::new();
        for table in [&self.triples, &self.pairs] {
            let mut hits: Vec<(usize, &[u16])> = addr
                .iter()
                .filter_map(|a| table.get(a))
                .flatten()
                .filter(|(_, mem)| mem.iter().all(|&m| addr[m as usize / self.kstar] == m))
                .map(|(s, mem)| (*s, mem.as_slice()))
                .collect();
            hits.sort_unstable_by_key(|h| h.0);
            for (s, mem) in hits {
                let cols = mem.iter().map(|&m| m as usize / self.kstar);
                if cols.clone().any(|c| covered[c]) {
                    continue;
                }
                cols.for_each(|c| covered[c] = true);
                slots.push(s);
            }
        }
        slots.sort_unstable();
        let mut addrs: Vec<u16> = (0..self.m_dims).filter(|&c| !covered[c]).map(|c| addr[c]).collect();
        addrs.extend(slots.into_iter().map(|s| (self.base + s) as u16));
        ReencodedVector { addrs }
    }
}

/// Re-encodes one code. Prefer [`Reencoder`] for whole clusters.
pub fn reencode(code: &[u8], layout: &CacheLayout) -> ReencodedVector {
    Reencoder::new(layout).reencode(code)
}

/// Recovers the original code.
pub fn decode(v: &ReencodedVector, layout: &CacheLayout) -> Result<Vec<u8>> {
    let kstar = layout.kstar;
    let mut out = vec![0u8; layout.m_dims];
    let mut seen = vec![false; layout.m_dims];
    let mut put = |a: u16| -> Result<()> {
        let col = a as usize / kstar;
        if seen[col] {
            return Err(Error::CorruptEncoding(format!("column {col} encoded twice")));
        }
        seen[col] = true;
        out[col] = (a as usize % kstar) as u8;
        Ok(())
    };
    for &a in &v.addrs {
        if (a as usize) < layout.base() {
            put(a)?;
        } else {
            let s = a as usize - layout.base();
            let mem = layout.members.get(s).filter(|m| !m.is_empty());
            let mem = mem.ok_or_else(|| Error::CorruptEncoding(format!("address {a} names no cached combination")))?;
            for &m in mem {
                put(m)?;
            }
        }
    }
    if let Some(col) = seen.iter().position(|s| !s) {
        return Err(Error::CorruptEncoding(format!("column {col} missing")));
    }
    Ok(out)
}

/// Base LUT entries followed by per-slot partial sums, widened to u32.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtendedLut {
    base_len: usize,
    flat: Vec<u32>,
}

impl ExtendedLut {
    pub fn len(&self) -> usize {
        self.flat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flat.is_empty()
    }

    pub fn base_len(&self) -> usize {
        self.base_len
    }

    pub fn get(&self, addr: usize) -> Option<u32> {
        self.flat.get(addr).copied()
    }

    pub fn slot(&self, slot: usize) -> u32 {
        self.flat[self.base_len + slot]
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.flat
    }
}

/// Sums the LUT entries of every cached combination.
pub fn compute_partial_sums(lut: &Lut, layout: &CacheLayout) -> Result<ExtendedLut> {
    if lut.m() != layout.m_dims || lut.kstar() != layout.kstar {
        return Err(Error::InvalidArgument(format!(
            "LUT is {}×{} but cache layout expects {}×{}",
            lut.m(),
            lut.kstar(),
            layout.m_dims,
            layout.kstar
        )));
    }
    let e = lut.entries();
    let mut flat: Vec<u32> = Vec::with_capacity(layout.address_space());
    flat.extend(e.iter().map(|&v| v as u32));
    flat.extend(layout.members.iter().map(|mem| mem.iter().map(|&a| e[a as usize] as u32).sum::<u32>()));
    Ok(ExtendedLut {
        base_len: e.len(),
        flat,
    })
}

/// ADC over a re-encoded vector; equals the classic distance of its original code.
pub fn adc_distance_reencoded(v: &ReencodedVector, xlut: &ExtendedLut) -> Result<u32> {
    let mut acc = 0u32;
    for &a in &v.addrs {
        acc += xlut
            .get(a as usize)
            .ok_or_else(|| Error::CorruptEncoding(format!("address {a} beyond extended LUT of {}", xlut.len())))?;
    }
    Ok(acc)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LengthStats {
    pub mean_len: f64,
    pub reduction: f64,
    pub adopted: bool,
}

/// Mean address count and reduction against `m_dims`; adopted iff reduction > `threshold`.
pub fn length_stats(vectors: &[ReencodedVector], m_dims: usize, threshold: f64) -> LengthStats {
    if vectors.is_empty() || m_dims == 0 {
        return LengthStats {
            mean_len: m_dims as f64,
            reduction: 0.0,
            adopted: false,
        };
    }
    let total: usize = vectors.iter().map(|v| v.len()).sum();
    let mean_len = total as f64 / vectors.len() as f64;
    let reduction = 1.0 - mean_len / m_dims as f64;
    LengthStats {
        mean_len,
        reduction,
        adopted: reduction > threshold,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cooccur::mine::{build_icg_and_mine, MiningParams};
    use crate::index::{adc_distance, EncodedCluster};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn trip(c: [usize; 3], v: [u8; 3]) -> [Item; 3] {
        [Item::new(c[0], v[0]), Item::new(c[1], v[1]), Item::new(c[2], v[2])]
    }

    fn example_layout() -> CacheLayout {
        let set = CombinationSet::from_triples(
            vec![trip([0, 1, 2], [1, 15, 26]), trip([5, 6, 7], [79, 25, 77]), trip([9, 10, 11], [2, 14, 31])],
            |_| 0,
        );
        layout_cache(&set, 16, 256, DEFAULT_CACHE_SLOTS).unwrap()
    }

    fn example_code() -> Vec<u8> {
        vec![1, 15, 26, 200, 201, 79, 25, 77, 202, 3, 14, 31, 203, 204, 205, 206]
    }

    #[test]
    fn example_vector() {
        let layout = example_layout();
        assert_eq!(layout.address_of(0), 4096);
        assert_eq!(layout.address_of(7), 4103);
        let v = reencode(&example_code(), &layout);
        assert_eq!(v.len(), 11);
        assert_eq!(v.stored_len(), 12);
        assert_eq!(&v.addrs[8..], &[4096 + 0b00111, 4096 + 0b01111, 4096 + 0b10110]);
        assert_eq!(decode(&v, &layout).unwrap(), example_code());

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let entries: Vec<u16> = (0..16 * 256).map(|_| rng.random()).collect();
        let lut = Lut::from_entries(16, 256, entries.clone(), 1.0).unwrap();
        let x = compute_partial_sums(&lut, &layout).unwrap();
        assert_eq!(x.slot(7), entries[1] as u32 + entries[271] as u32 + entries[538] as u32);
        assert_eq!(adc_distance_reencoded(&v, &x).unwrap(), adc_distance(&example_code(), &lut));
    }

    #[test]
    fn no_match_keeps_original_addresses() {
        let layout = example_layout();
        let code = vec![9u8; 16];
        let v = reencode(&code, &layout);
        assert_eq!(v.len(), 16);
        for (c, &a) in v.addrs.iter().enumerate() {
            assert_eq!(a as usize, c * 256 + 9);
        }
    }

    #[test]
    fn position_sensitive() {
        let layout = example_layout();
        let mut code = vec![9u8; 16];
        code[1] = 1;
        code[2] = 15;
        code[3] = 26;
        assert_eq!(reencode(&code, &layout).len(), 16);
    }

    #[test]
    fn overflow_and_bad_addresses() {
        let set = CombinationSet::from_triples(vec![trip([0, 1, 2], [1, 2, 3]); 3], |_| 0);
        assert!(matches!(layout_cache(&set, 16, 256, 16), Err(Error::CacheOverflow { .. })));
        let layout = example_layout();
        let lut = Lut::from_entries(16, 256, vec![0; 4096], 1.0).unwrap();
        let x = compute_partial_sums(&lut, &layout).unwrap();
        assert!(x.as_slice().iter().all(|&v| v == 0));
        let bad = ReencodedVector { addrs: vec![60000] };
        assert!(matches!(adc_distance_reencoded(&bad, &x), Err(Error::CorruptEncoding(_))));
        assert!(decode(&ReencodedVector { addrs: vec![4096 + 4] }, &layout).is_err());
    }

    #[test]
    fn random_equivalence() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut instances = 0;
        for round in 0..20 {
            let (m, kstar) = if round % 2 == 0 { (8, 16) } else { (16, 256) };
            let alphabet = if round % 2 == 0 { 3 } else { 4 };
            let codes: Vec<u8> = (0..500 * m).map(|_| rng.random_range(0..alphabet)).collect();
            let cl = EncodedCluster {
                ids: (0..500).collect(),
                codes,
            };
            let set = build_icg_and_mine(&cl, m, &MiningParams::default());
            let layout = layout_cache(&set, m, kstar, DEFAULT_CACHE_SLOTS).unwrap();
            let enc = Reencoder::new(&layout);
            let entries: Vec<u16> = (0..m * kstar).map(|_| rng.random()).collect();
            let lut = Lut::from_entries(m, kstar, entries.clone(), 1.0).unwrap();
            let x = compute_partial_sums(&lut, &layout).unwrap();
            for s in layout.live_slots() {
                let want: u32 = layout.members(s).iter().map(|&a| entries[a as usize] as u32).sum();
                assert_eq!(x.slot(s), want);
            }
            let mut total = 0;
            for i in 0..cl.len() {
                let code = cl.code(i, m);
                let v = enc.reencode(code);
                assert_eq!(decode(&v, &layout).unwrap(), code);
                assert_eq!(adc_distance_reencoded(&v, &x).unwrap(), adc_distance(code, &lut));
                let split = v.addrs.iter().position(|&a| a as usize >= layout.base()).unwrap_or(v.len());
                assert!(v.addrs[..split].windows(2).all(|w| w[0] < w[1]));
                assert!(v.addrs[split..].iter().all(|&a| a as usize >= layout.base()));
                assert!(v.addrs[split..].windows(2).all(|w| w[0] < w[1]));
                total += v.len();
                instances += 1;
            }
            assert!(total < cl.len() * m);
        }
        assert!(instances >= 10_000);
    }

    #[test]
    fn length_stats_recount() {
        assert_eq!(length_stats(&[], 16, 0.5).reduction, 0.0);
        let same = vec![ReencodedVector { addrs: vec![0; 12] }; 10];
        let s = length_stats(&same, 16, 0.5);
        assert!((s.reduction - 0.25).abs() < 1e-12);
        assert!(!s.adopted);
        let mixed = vec![ReencodedVector { addrs: vec![0; 4] }, ReencodedVector { addrs: vec![0; 6] }];
        let s = length_stats(&mixed, 16, 0.5);
        assert_eq!(s.mean_len, 5.0);
        assert!(s.adopted);
        let full = vec![ReencodedVector { addrs: vec![0; 16] }; 3];
        assert_eq!(length_stats(&full, 16, 0.5).reduction, 0.0);
    }
}
