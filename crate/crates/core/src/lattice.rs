//! Sparse points of Z^d, canonical nearest-neighbor edges and hashed edge weights.
//!
//! Edge weights are never stored: the weight of an edge is the law's quantile of a
//! uniform derived from XXH3-64 over the canonical edge bytes, seeded by the master seed.

use serde::Serialize;
use smallvec::SmallVec;
use xxhash_rust::xxh3::xxh3_64_with_seed;

use crate::distributions::DistributionSpec;
use crate::error::{FppError, Result};

/// Version byte leading every serialized vertex and edge.
pub const SERIALIZATION_VERSION: u8 = 1;

type Pairs = SmallVec<[(u32, i32); 6]>;

/// A point of Z^d stored as sorted `(index, coord)` pairs with 1-based indices and no zero coords.
///
/// The derived order (dimension, then the pair sequence) is the tie-break used by the engine.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize)]
pub struct Vertex {
    dim: u32,
    coords: Pairs,
}

impl Vertex {
    pub fn origin(dim: u32) -> Self {
        assert!(dim >= 1, "dimension must be positive");
        Self {
            dim,
            coords: Pairs::new(),
        }
    }

    /// `value * e_index`.
    pub fn axis(dim: u32, index: u32, value: i32) -> Self {
        Self::origin(dim).shifted(index, value)
    }

    pub fn from_pairs(dim: u32, pairs: &[(u32, i32)]) -> Result<Self> {
        if dim == 0 {
            return Err(FppError::InvalidArgument(
                "dimension must be positive".into(),
            ));
        }
        let mut coords: Pairs = pairs.iter().copied().filter(|p| p.1 != 0).collect();
        coords.sort_unstable_by_key(|p| p.0);
        for w in coords.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(FppError::InvalidArgument(format!(
                    "duplicate coordinate index {}",
                    w[0].0
                )));
            }
        }
        if coords.iter().any(|p| p.0 == 0 || p.0 > dim) {
            return Err(FppError::InvalidArgument(format!(
                "coordinate index outside [1, {dim}]"
            )));
        }
        Ok(Self { dim, coords })
    }

    pub fn from_dense(coords: &[i32]) -> Self {
        let pairs: Vec<(u32, i32)> = coords
            .iter()
            .enumerate()
            .map(|(i, &c)| (i as u32 + 1, c))
            .collect();
        Self::from_pairs(coords.len() as u32, &pairs).expect("dense coordinates are valid")
    }

    pub fn dim(&self) -> u32 {
        self.dim
    }

    pub fn pairs(&self) -> &[(u32, i32)] {
        &self.coords
    }

    pub fn get(&self, index: u32) -> i32 {
        match self.coords.binary_search_by_key(&index, |p| p.0) {
            Ok(i) => self.coords[i].1,
            Err(_) => 0,
        }
    }

    /// `self + delta * e_index`.
    pub fn shifted(&self, index: u32, delta: i32) -> Self {
        debug_assert!(index >= 1 && index <= self.dim);
        let mut out = self.clone();
        match out.coords.binary_search_by_key(&index, |p| p.0) {
            Ok(i) => {
                let c = out.coords[i].1 + delta;
                if c == 0 {
                    out.coords.remove(i);
                } else {
                    out.coords[i].1 = c;
                }
            }
            Err(i) => {
                if delta != 0 {
                    out.coords.insert(i, (index, delta));
                }
            }
        }
        out
    }

    pub fn coordinate_sum(&self) -> i64 {
        self.coords.iter().map(|p| p.1 as i64).sum()
    }

    pub fn l1_norm(&self) -> i64 {
        self.coords.iter().map(|p| (p.1 as i64).abs()).sum()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(9 + 8 * self.coords.len());
        write_vertex(
            &mut buf,
            self.dim,
            self.coords.iter().copied(),
            self.coords.len(),
        );
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (v, used) = read_vertex(bytes)?;
        if used != bytes.len() {
            return Err(FppError::InvalidArgument(
                "trailing bytes after vertex".into(),
            ));
        }
        Ok(v)
    }
}

fn write_vertex<B: Extend<u8>>(
    buf: &mut B,
    dim: u32,
    pairs: impl Iterator<Item = (u32, i32)>,
    len: usize,
) {
    buf.extend([SERIALIZATION_VERSION]);
    buf.extend(dim.to_le_bytes());
    buf.extend((len as u32).to_le_bytes());
    for (i, c) in pairs {
        buf.extend(i.to_le_bytes());
        buf.extend(c.to_le_bytes());
    }
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| FppError::InvalidArgument("truncated serialization".into()))
}

fn read_vertex(bytes: &[u8]) -> Result<(Vertex, usize)> {
    if bytes.first() != Some(&SERIALIZATION_VERSION) {
        return Err(FppError::InvalidArgument(
            "unknown serialization version".into(),
        ));
    }
    let dim = read_u32(bytes, 1)?;
    let len = read_u32(bytes, 5)? as usize;
    let mut pairs = Vec::with_capacity(len);
    for k in 0..len {
        let at = 9 + 8 * k;
        pairs.push((read_u32(bytes, at)?, read_u32(bytes, at + 4)? as i32));
    }
    let v = Vertex::from_pairs(dim, &pairs)?;
    if v.coords.len() != len || v.coords.iter().zip(&pairs).any(|(a, b)| a != b) {
        return Err(FppError::InvalidArgument(
            "non-canonical vertex bytes".into(),
        ));
    }
    Ok((v, 9 + 8 * len))
}

/// Undirected edge `<lo, lo + e_direction>`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize)]
pub struct EdgeKey {
    pub lo: Vertex,
    pub direction: u32,
}

impl EdgeKey {
    /// Canonical key of the edge from `v` along `±e_direction`.
    pub fn from_step(v: &Vertex, direction: u32, positive: bool) -> Self {
        let lo = if positive {
            v.clone()
        } else {
            v.shifted(direction, -1)
        };
        Self { lo, direction }
    }

    /// Canonical key of `<u, v>` if the two are nearest neighbors.
    pub fn between(u: &Vertex, v: &Vertex) -> Option<Self> {
        if u.dim != v.dim {
            return None;
        }
        let mut diff: Option<(u32, i32)> = None;
        let (mut i, mut j) = (0, 0);
        let (a, b) = (&u.coords, &v.coords);
        while i < a.len() || j < b.len() {
            let (idx, d) = match (a.get(i), b.get(j)) {
                (Some(&(ia, ca)), Some(&(ib, cb))) if ia == ib => {
                    i += 1;
                    j += 1;
                    (ia, cb - ca)
                }
                (Some(&(ia, ca)), Some(&(ib, _))) if ia < ib => {
                    i += 1;
                    (ia, -ca)
                }
                (Some(&(ia, ca)), None) => {
                    i += 1;
                    (ia, -ca)
                }
                (_, Some(&(ib, cb))) => {
                    j += 1;
                    (ib, cb)
                }
                (None, None) => unreachable!(),
            };
            if d != 0 {
                if diff.is_some() || d.abs() != 1 {
                    return None;
                }
                diff = Some((idx, d));
            }
        }
        let (direction, d) = diff?;
        Some(if d == 1 {
            Self {
                lo: u.clone(),
                direction,
            }
        } else {
            Self {
                lo: v.clone(),
                direction,
            }
        })
    }

    /// Versioned little-endian bytes: vertex bytes of `lo`, then the direction.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = self.lo.to_bytes();
        buf.extend(self.direction.to_le_bytes());
        buf
    }

    pub fn hash(&self, master_seed: u64) -> u64 {
        xxh3_64_with_seed(&self.to_bytes(), master_seed)
    }
}

/// Fixed-capacity byte buffer for canonical edge bytes; spills to the heap past 30 pairs.
struct EdgeBytes {
    inline: [u8; 256],
    len: usize,
    spill: Vec<u8>,
}

impl EdgeBytes {
    #[inline]
    fn new(pairs: usize) -> Self {
        let needed = 13 + 8 * pairs;
        let spill = if needed > 256 {
            Vec::with_capacity(needed)
        } else {
            Vec::new()
        };
        Self {
            inline: [0; 256],
            len: 0,
            spill,
        }
    }

    #[inline]
    fn put(&mut self, bytes: [u8; 4]) {
        if self.spill.capacity() > 0 {
            self.spill.extend_from_slice(&bytes);
        } else {
            self.inline[self.len..self.len + 4].copy_from_slice(&bytes);
            self.len += 4;
        }
    }

    #[inline]
    fn put_header(&mut self, dim: u32, len: usize) {
        if self.spill.capacity() > 0 {
            self.spill.push(SERIALIZATION_VERSION);
        } else {
            self.inline[0] = SERIALIZATION_VERSION;
            self.len = 1;
        }
        self.put(dim.to_le_bytes());
        self.put((len as u32).to_le_bytes());
    }

    #[inline]
    fn hash(&self, seed: u64) -> u64 {
        if self.spill.capacity() > 0 {
            xxh3_64_with_seed(&self.spill, seed)
        } else {
            xxh3_64_with_seed(&self.inline[..self.len], seed)
        }
    }
}

/// Hash of the edge from `v` along `±e_direction` without materializing its key.
pub fn step_hash(v: &Vertex, direction: u32, positive: bool, master_seed: u64) -> u64 {
    let coords = &v.coords;
    if positive {
        let mut buf = EdgeBytes::new(coords.len());
        buf.put_header(v.dim, coords.len());
        for &(i, c) in coords {
            buf.put(i.to_le_bytes());
            buf.put(c.to_le_bytes());
        }
        buf.put(direction.to_le_bytes());
        return buf.hash(master_seed);
    }
    // Lower endpoint v - e_direction, written in sorted order on the fly.
    let pos = coords.partition_point(|p| p.0 < direction);
    let present = coords.get(pos).is_some_and(|p| p.0 == direction);
    let lowered = if present { coords[pos].1 - 1 } else { -1 };
    let len = coords.len() + usize::from(!present) - usize::from(lowered == 0);
    let mut buf = EdgeBytes::new(len);
    buf.put_header(v.dim, len);
    for &(i, c) in &coords[..pos] {
        buf.put(i.to_le_bytes());
        buf.put(c.to_le_bytes());
    }
    if lowered != 0 {
        buf.put(direction.to_le_bytes());
        buf.put(lowered.to_le_bytes());
    }
    let rest = if present { pos + 1 } else { pos };
    for &(i, c) in &coords[rest..] {
        buf.put(i.to_le_bytes());
        buf.put(c.to_le_bytes());
    }
    buf.put(direction.to_le_bytes());
    buf.hash(master_seed)
}

/// Uniform in `[0, 1)` from the top 53 bits of a hash.
#[inline]
pub fn unit_from_hash(h: u64) -> f64 {
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub fn edge_weight(key: &EdgeKey, master_seed: u64, spec: &DistributionSpec) -> f64 {
    spec.quantile(unit_from_hash(key.hash(master_seed)))
}

/// Weight of the edge from `v` along `±e_direction`; equals `edge_weight` of its canonical key.
#[inline]
pub fn step_weight(
    v: &Vertex,
    direction: u32,
    positive: bool,
    master_seed: u64,
    spec: &DistributionSpec,
) -> f64 {
    spec.quantile(unit_from_hash(step_hash(
        v,
        direction,
        positive,
        master_seed,
    )))
}

/// Seed of replica `r` under `master`; replica sets extend without re-running earlier ones.
pub fn derive_seed(master: u64, r: u64) -> u64 {
    xxh3_64_with_seed(&r.to_le_bytes(), master)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Restriction {
    None,
    PositiveDirectionsOnly,
    FixedCoordinate { index: u32, value: i32 },
    CoordinateWindow { index: u32, lo: i32, hi: i32 },
}

impl Restriction {
    /// Whether the step from `v` along `±e_direction` is permitted.
    #[inline]
    pub fn allows(&self, v: &Vertex, direction: u32, positive: bool) -> bool {
        match *self {
            Restriction::None => true,
            Restriction::PositiveDirectionsOnly => positive,
            Restriction::FixedCoordinate { index, .. } => direction != index,
            Restriction::CoordinateWindow { index, lo, hi } => {
                if direction != index {
                    return true;
                }
                let next = v.get(index) + if positive { 1 } else { -1 };
                (lo..=hi).contains(&next)
            }
        }
    }

    pub fn validate(&self, dim: u32) -> Result<()> {
        match *self {
            Restriction::FixedCoordinate { index, .. }
            | Restriction::CoordinateWindow { index, .. }
                if index == 0 || index > dim =>
            {
                Err(FppError::InvalidArgument(format!(
                    "restriction index {index} outside [1, {dim}]"
                )))
            }
            Restriction::CoordinateWindow { lo, hi, .. } if lo > hi => {
                Err(FppError::InvalidArgument("window requires lo <= hi".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Nearest neighbors of `v` permitted by `restriction`, with canonical edge keys.
pub fn neighbors(v: &Vertex, restriction: Restriction) -> Vec<(Vertex, EdgeKey)> {
    let mut out = Vec::with_capacity(2 * v.dim as usize);
    for direction in 1..=v.dim {
        for positive in [true, false] {
            if restriction.allows(v, direction, positive) {
                let w = v.shifted(direction, if positive { 1 } else { -1 });
                out.push((w, EdgeKey::from_step(v, direction, positive)));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn neighbor_counts() {
        let o = Vertex::origin(3);
        assert_eq!(neighbors(&o, Restriction::None).len(), 6);
        let slab = neighbors(&o, Restriction::FixedCoordinate { index: 1, value: 0 });
        assert_eq!(slab.len(), 4);
        assert!(slab.iter().all(|(w, _)| w.get(1) == 0));
        assert_eq!(
            neighbors(&Vertex::origin(2), Restriction::PositiveDirectionsOnly).len(),
            2
        );
        let win = Restriction::CoordinateWindow {
            index: 2,
            lo: 0,
            hi: 0,
        };
        assert_eq!(neighbors(&o, win).len(), 4);
    }

    #[test]
    fn edge_key_is_orientation_free() {
        let u = Vertex::from_dense(&[1, -2, 0]);
        let v = u.shifted(2, 1);
        let a = EdgeKey::between(&u, &v).unwrap();
        let b = EdgeKey::between(&v, &u).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.lo, u);
        assert_eq!(a.direction, 2);
        assert!(EdgeKey::between(&u, &u).is_none());
        assert!(EdgeKey::between(&u, &u.shifted(1, 2)).is_none());
    }

    #[test]
    fn step_hash_matches_key_hash() {
        let v = Vertex::from_dense(&[0, 1, -1, 3]);
        for direction in 1..=4 {
            for positive in [true, false] {
                let key = EdgeKey::from_step(&v, direction, positive);
                assert_eq!(step_hash(&v, direction, positive, 99), key.hash(99));
            }
        }
    }

    #[test]
    fn edge_bytes_layout() {
        let key = EdgeKey {
            lo: Vertex::axis(5, 3, -2),
            direction: 4,
        };
        let bytes = key.to_bytes();
        let expected: Vec<u8> = [
            vec![SERIALIZATION_VERSION],
            5u32.to_le_bytes().to_vec(),
            1u32.to_le_bytes().to_vec(),
            3u32.to_le_bytes().to_vec(),
            (-2i32).to_le_bytes().to_vec(),
            4u32.to_le_bytes().to_vec(),
        ]
        .concat();
        assert_eq!(bytes, expected);
    }

    #[test]
    fn weight_is_deterministic() {
        let spec = DistributionSpec::exponential(1.0).unwrap();
        let key = EdgeKey::from_step(&Vertex::origin(4), 2, true);
        assert_eq!(edge_weight(&key, 7, &spec), edge_weight(&key, 7, &spec));
        assert_ne!(edge_weight(&key, 7, &spec), edge_weight(&key, 8, &spec));
    }

    #[test]
    fn rejects_bad_bytes() {
        assert!(Vertex::from_bytes(&[9, 0, 0]).is_err());
        let mut b = Vertex::axis(3, 1, 1).to_bytes();
        b.push(0);
        assert!(Vertex::from_bytes(&b).is_err());
    }

    fn vertex_strategy() -> impl Strategy<Value = Vertex> {
        (1u32..50).prop_flat_map(|dim| {
            proptest::collection::vec((1..=dim, -1000i32..1000), 0..8).prop_map(move |mut pairs| {
                pairs.sort_by_key(|p| p.0);
                pairs.dedup_by_key(|p| p.0);
                Vertex::from_pairs(dim, &pairs).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn serialization_round_trip(v in vertex_strategy()) {
            prop_assert_eq!(Vertex::from_bytes(&v.to_bytes()).unwrap(), v);
        }

        #[test]
        fn shift_is_invertible(v in vertex_strategy(), k in 0u32..50, delta in -3i32..4) {
            let index = 1 + k % v.dim();
            let w = v.shifted(index, delta);
            prop_assert_eq!(w.get(index), v.get(index) + delta);
            prop_assert_eq!(w.shifted(index, -delta), v);
        }

        #[test]
        fn step_hash_agrees_everywhere(v in vertex_strategy(), k in 0u32..50, positive: bool, seed: u64) {
            let direction = 1 + k % v.dim();
            let key = EdgeKey::from_step(&v, direction, positive);
            prop_assert_eq!(step_hash(&v, direction, positive, seed), key.hash(seed));
            let other = v.shifted(direction, if positive { 1 } else { -1 });
            prop_assert_eq!(EdgeKey::between(&other, &v), Some(key));
        }
    }
}
