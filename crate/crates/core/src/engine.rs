//! First-passage times by Dijkstra over the implicit weighted lattice.
//!
//! Searches are bounded by a settled-vertex cap, an optional passage-time cap and an
//! optional coordinate box. A box-limited search is still exact when every pruned edge
//! leaving the box starts at a cost no smaller than the value found; nonnegative
//! weights then rule out any cheaper path through the pruned region.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rustc_hash::FxHashMap;
use serde::Serialize;

use crate::distributions::DistributionSpec;
use crate::error::{FppError, Result};
use crate::lattice::{step_weight, Restriction, Vertex};

pub const DEFAULT_MAX_SETTLED: u64 = 5_000_000;

/// Smallest integer `s` with `s * s >= d`.
pub fn ceil_sqrt(d: u32) -> u32 {
    let mut s = (d as f64).sqrt() as u32;
    while s * s < d {
        s += 1;
    }
    while s > 0 && (s - 1) * (s - 1) >= d {
        s -= 1;
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", content = "arg", rename_all = "snake_case")]
pub enum TargetKind {
    Point(Vertex),
    /// `{x_1 = n}`.
    HyperplaneX1(u32),
    /// `{x_1 + ... + x_d = n * ceil(sqrt d)}`.
    DiagonalPlane(u32),
    /// `{x_1 = 1}` through paths confined, except for the last vertex, to `{x_1 = 0}`.
    SlabS01,
}

/// Inclusive per-coordinate windows: `default` for every index, `overrides` replacing it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoordinateBox {
    pub default: (i32, i32),
    pub overrides: Vec<(u32, (i32, i32))>,
}

impl CoordinateBox {
    pub fn uniform(radius: i32) -> Self {
        Self {
            default: (-radius, radius),
            overrides: Vec::new(),
        }
    }

    pub fn with_override(mut self, index: u32, lo: i32, hi: i32) -> Self {
        self.overrides.retain(|o| o.0 != index);
        self.overrides.push((index, (lo, hi)));
        self.overrides.sort_by_key(|o| o.0);
        self
    }

    /// Same box with every finite half-width doubled.
    pub fn doubled(&self) -> Self {
        let dbl = |(lo, hi): (i32, i32)| (lo.saturating_mul(2), hi.saturating_mul(2));
        Self {
            default: dbl(self.default),
            overrides: self.overrides.iter().map(|&(i, w)| (i, dbl(w))).collect(),
        }
    }

    #[inline]
    pub fn window(&self, index: u32) -> (i32, i32) {
        match self.overrides.binary_search_by_key(&index, |o| o.0) {
            Ok(i) => self.overrides[i].1,
            Err(_) => self.default,
        }
    }

    pub fn contains(&self, v: &Vertex) -> bool {
        let inside = |(lo, hi): (i32, i32), c: i32| lo <= c && c <= hi;
        if !v.pairs().iter().all(|&(i, c)| inside(self.window(i), c)) {
            return false;
        }
        if !self.overrides.iter().all(|&(i, w)| inside(w, v.get(i))) {
            return false;
        }
        // Indices neither stored nor overridden hold 0 under the default window.
        let overridden_zero = self
            .overrides
            .iter()
            .filter(|o| v.get(o.0) == 0 && o.0 <= v.dim())
            .count();
        let covered = v.pairs().len() + overridden_zero;
        covered as u32 >= v.dim() || inside(self.default, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchCaps {
    pub max_settled: u64,
    pub max_time: Option<f64>,
    pub coordinate_box: Option<CoordinateBox>,
}

impl Default for SearchCaps {
    fn default() -> Self {
        Self {
            max_settled: DEFAULT_MAX_SETTLED,
            max_time: None,
            coordinate_box: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    TargetSettled,
    SettledCap,
    TimeCap,
    Exhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PassageSample {
    /// Exact passage time when `exact`, else the best known upper bound (possibly infinite).
    pub value: f64,
    pub target: TargetKind,
    pub settled_count: u64,
    pub seed: u64,
    pub exact: bool,
    pub stop: StopReason,
    /// Whether the coordinate box removed at least one edge.
    pub box_pruned: bool,
    pub caps: SearchCaps,
}

/// Pending relaxation: the `rank`-th cheapest permitted edge out of settled vertex `from`.
#[derive(Debug, Clone)]
struct Entry {
    dist: f64,
    v: Vertex,
    from: u32,
    rank: u32,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Entry {}
impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then_with(|| self.v.cmp(&other.v))
            .then_with(|| self.from.cmp(&other.from))
    }
}

#[derive(Debug, Clone, Copy)]
struct Step {
    weight: f64,
    direction: u32,
    positive: bool,
}

struct Settled {
    v: Vertex,
    dist: f64,
    start: u32,
    len: u32,
}

enum Goal {
    Point(Vertex),
    X1(i32),
    Sum(i64),
    Slab,
}

impl Goal {
    #[inline]
    fn hit(&self, v: &Vertex) -> bool {
        match self {
            Goal::Point(t) => v == t,
            Goal::X1(n) => v.get(1) == *n,
            Goal::Sum(s) => v.coordinate_sum() == *s,
            Goal::Slab => false,
        }
    }

    /// Whether `v + (±e_direction)` is a target vertex.
    #[inline]
    fn hit_after_step(&self, v: &Vertex, direction: u32, positive: bool) -> bool {
        let step = if positive { 1 } else { -1 };
        match self {
            Goal::Point(t) => {
                (t.get(direction) - v.get(direction) == step) && v.shifted(direction, step) == *t
            }
            Goal::X1(n) => direction == 1 && v.get(1) + step == *n,
            Goal::Sum(s) => v.coordinate_sum() + step as i64 == *s,
            Goal::Slab => false,
        }
    }
}

/// Passage time from the origin of Z^d to `target` under the hashed weight field `master_seed`.
///
/// Dijkstra with lazily expanded sorted adjacency: the heap holds one pending edge per
/// settled vertex, so memory scales with the settled set rather than its frontier.
/// Equal tentative distances are settled in increasing vertex order.
pub fn first_passage(
    d: u32,
    target: &TargetKind,
    master_seed: u64,
    spec: &DistributionSpec,
    caps: &SearchCaps,
) -> Result<PassageSample> {
    if d == 0 {
        return Err(FppError::InvalidArgument("d must be positive".into()));
    }
    if caps.max_settled == 0 {
        return Err(FppError::DegenerateCaps(
            "max_settled = 0 cannot settle the origin".into(),
        ));
    }
    if caps.max_time.is_some_and(|t| !(t >= 0.0)) {
        return Err(FppError::DegenerateCaps(
            "max_time must be nonnegative".into(),
        ));
    }
    let origin = Vertex::origin(d);
    if let Some(b) = &caps.coordinate_box {
        if !b.contains(&origin) {
            return Err(FppError::DegenerateCaps(
                "coordinate box excludes the origin".into(),
            ));
        }
    }
    let (goal, restriction) = match target {
        TargetKind::Point(t) => {
            if t.dim() != d {
                return Err(FppError::InvalidArgument(
                    "target dimension mismatch".into(),
                ));
            }
            if caps.coordinate_box.as_ref().is_some_and(|b| !b.contains(t)) {
                return Err(FppError::DegenerateCaps(
                    "coordinate box excludes the target".into(),
                ));
            }
            (Goal::Point(t.clone()), Restriction::None)
        }
        TargetKind::HyperplaneX1(n) => (Goal::X1(*n as i32), Restriction::None),
        TargetKind::DiagonalPlane(n) => (
            Goal::Sum(*n as i64 * ceil_sqrt(d) as i64),
            Restriction::None,
        ),
        TargetKind::SlabS01 => (
            Goal::Slab,
            Restriction::FixedCoordinate { index: 1, value: 0 },
        ),
    };

    let mut heap: BinaryHeap<Reverse<Entry>> = BinaryHeap::new();
    let mut index: FxHashMap<Vertex, u32> = FxHashMap::default();
    let mut settled: Vec<Settled> = Vec::new();
    let mut steps: Vec<Step> = Vec::new();
    heap.push(Reverse(Entry {
        dist: 0.0,
        v: origin,
        from: u32::MAX,
        rank: 0,
    }));

    let mut pruned_lower = f64::INFINITY;
    let mut box_pruned = false;
    // Best cost of any discovered path to the target (upper bound on the answer).
    let mut target_upper = f64::INFINITY;
    let mut reached: Option<f64> = None;
    let mut stop = StopReason::Exhausted;

    while let Some(Reverse(entry)) = heap.pop() {
        let Entry {
            dist,
            v,
            from,
            rank,
        } = entry;
        if from != u32::MAX {
            // Queue the next cheapest edge of the same parent.
            let parent = &settled[from as usize];
            let next = rank + 1;
            if next < parent.len {
                let s = steps[(parent.start + next) as usize];
                let nv = parent
                    .v
                    .shifted(s.direction, if s.positive { 1 } else { -1 });
                heap.push(Reverse(Entry {
                    dist: parent.dist + s.weight,
                    v: nv,
                    from,
                    rank: next,
                }));
            }
        }
        if index.contains_key(&v) {
            continue;
        }
        if let Goal::Slab = goal {
            if dist >= target_upper {
                reached = Some(target_upper);
                stop = StopReason::TargetSettled;
                break;
            }
        }
        if caps.max_time.is_some_and(|t| dist > t) {
            stop = StopReason::TimeCap;
            break;
        }
        if settled.len() as u64 >= caps.max_settled {
            stop = StopReason::SettledCap;
            break;
        }
        if goal.hit(&v) {
            settled.push(Settled {
                v,
                dist,
                start: steps.len() as u32,
                len: 0,
            });
            reached = Some(dist);
            stop = StopReason::TargetSettled;
            break;
        }
        if let Goal::Slab = goal {
            target_upper = target_upper.min(dist + step_weight(&v, 1, true, master_seed, spec));
        }
        let start = steps.len();
        for direction in 1..=d {
            for positive in [true, false] {
                if !restriction.allows(&v, direction, positive) {
                    continue;
                }
                let weight = step_weight(&v, direction, positive, master_seed, spec);
                if let Some(b) = &caps.coordinate_box {
                    let (lo, hi) = b.window(direction);
                    let next = v.get(direction) + if positive { 1 } else { -1 };
                    if next < lo || next > hi {
                        box_pruned = true;
                        pruned_lower = pruned_lower.min(dist + weight);
                        continue;
                    }
                }
                if goal.hit_after_step(&v, direction, positive) {
                    target_upper = target_upper.min(dist + weight);
                }
                steps.push(Step {
                    weight,
                    direction,
                    positive,
                });
            }
        }
        steps[start..].sort_by(|a, b| {
            a.weight
                .total_cmp(&b.weight)
                .then(a.direction.cmp(&b.direction))
                .then(b.positive.cmp(&a.positive))
        });
        let id = settled.len() as u32;
        let len = (steps.len() - start) as u32;
        if len > 0 {
            let s = steps[start];
            let nv = v.shifted(s.direction, if s.positive { 1 } else { -1 });
            heap.push(Reverse(Entry {
                dist: dist + s.weight,
                v: nv,
                from: id,
                rank: 0,
            }));
        }
        index.insert(v.clone(), id);
        settled.push(Settled {
            v,
            dist,
            start: start as u32,
            len,
        });
    }
    if reached.is_none() && stop == StopReason::Exhausted && matches!(goal, Goal::Slab) {
        // Whole box settled: the slab candidate set is complete.
        reached = Some(target_upper);
    }

    let (value, exact) = match reached {
        Some(value) => (value, value.is_finite() && pruned_lower >= value),
        None => (target_upper, false),
    };
    Ok(PassageSample {
        value,
        target: target.clone(),
        settled_count: settled.len() as u64,
        seed: master_seed,
        exact,
        stop,
        box_pruned,
        caps: caps.clone(),
    })
}

/// `first_passage`, doubling the coordinate box while a box-limited answer is not certified.
pub fn first_passage_verified(
    d: u32,
    target: &TargetKind,
    master_seed: u64,
    spec: &DistributionSpec,
    caps: &SearchCaps,
    max_doublings: u32,
) -> Result<PassageSample> {
    let mut caps = caps.clone();
    let mut sample = first_passage(d, target, master_seed, spec, &caps)?;
    let mut rounds = 0;
    while !sample.exact && sample.box_pruned && rounds < max_doublings {
        let Some(b) = caps.coordinate_box.as_ref() else {
            break;
        };
        if matches!(sample.stop, StopReason::SettledCap | StopReason::TimeCap) {
            break;
        }
        caps.coordinate_box = Some(b.doubled());
        sample = first_passage(d, target, master_seed, spec, &caps)?;
        rounds += 1;
    }
    Ok(sample)
}

/// Default caps for `mu(e_1)` runs: `|x_i| <= n + 20` off the target axis.
pub fn mu_e1_caps(n: u32) -> SearchCaps {
    let r = n as i32 + 20;
    SearchCaps {
        coordinate_box: Some(CoordinateBox::uniform(r).with_override(
            1,
            i32::MIN / 4,
            i32::MAX / 4,
        )),
        ..SearchCaps::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{edge_weight, EdgeKey};

    fn exp1() -> DistributionSpec {
        DistributionSpec::exponential(1.0).unwrap()
    }

    #[test]
    fn ceil_sqrt_values() {
        let got: Vec<u32> = [1, 2, 4, 5, 6, 9, 10, 16, 17]
            .iter()
            .map(|&d| ceil_sqrt(d))
            .collect();
        assert_eq!(got, vec![1, 2, 2, 3, 3, 3, 4, 4, 5]);
    }

    #[test]
    fn deterministic_hyperplane_counts_steps() {
        let spec = DistributionSpec::deterministic(1.0).unwrap();
        for n in 0..6 {
            let s = first_passage(
                3,
                &TargetKind::HyperplaneX1(n),
                1,
                &spec,
                &SearchCaps::default(),
            )
            .unwrap();
            assert_eq!(s.value, n as f64);
            assert!(s.exact);
        }
    }

    #[test]
    fn deterministic_diagonal_plane() {
        let spec = DistributionSpec::deterministic(1.0).unwrap();
        let s = first_passage(
            4,
            &TargetKind::DiagonalPlane(1),
            3,
            &spec,
            &SearchCaps::default(),
        )
        .unwrap();
        assert_eq!(s.value, 2.0);
        let s = first_passage(
            5,
            &TargetKind::DiagonalPlane(2),
            3,
            &spec,
            &SearchCaps::default(),
        )
        .unwrap();
        assert_eq!(s.value, 6.0);
    }

    #[test]
    fn single_edge_in_one_dimension() {
        let spec = exp1();
        let target = TargetKind::Point(Vertex::axis(1, 1, 1));
        let s = first_passage(1, &target, 42, &spec, &SearchCaps::default()).unwrap();
        let w = edge_weight(
            &EdgeKey {
                lo: Vertex::origin(1),
                direction: 1,
            },
            42,
            &spec,
        );
        assert_eq!(s.value, w);
        assert!(s.exact);
    }

    #[test]
    fn slab_value_in_one_dimension_is_the_edge() {
        let spec = exp1();
        let s = first_passage(1, &TargetKind::SlabS01, 5, &spec, &SearchCaps::default()).unwrap();
        let w = edge_weight(
            &EdgeKey {
                lo: Vertex::origin(1),
                direction: 1,
            },
            5,
            &spec,
        );
        assert_eq!(s.value, w);
        assert!(s.exact);
    }

    #[test]
    fn degenerate_caps_rejected() {
        let spec = exp1();
        let caps = SearchCaps {
            max_settled: 0,
            ..SearchCaps::default()
        };
        let r = first_passage(2, &TargetKind::HyperplaneX1(1), 0, &spec, &caps);
        assert!(matches!(r, Err(FppError::DegenerateCaps(_))));
        let caps = SearchCaps {
            coordinate_box: Some(CoordinateBox::uniform(2).with_override(1, 1, 3)),
            ..SearchCaps::default()
        };
        let r = first_passage(2, &TargetKind::HyperplaneX1(1), 0, &spec, &caps);
        assert!(matches!(r, Err(FppError::DegenerateCaps(_))));
    }

    #[test]
    fn settled_cap_marks_inexact() {
        let spec = exp1();
        let caps = SearchCaps {
            max_settled: 3,
            ..SearchCaps::default()
        };
        let s = first_passage(5, &TargetKind::HyperplaneX1(6), 0, &spec, &caps).unwrap();
        assert!(!s.exact);
        assert_eq!(s.stop, StopReason::SettledCap);
        assert_eq!(s.settled_count, 3);
    }

    #[test]
    fn time_cap_marks_inexact() {
        let spec = exp1();
        let caps = SearchCaps {
            max_time: Some(0.0),
            ..SearchCaps::default()
        };
        let s = first_passage(3, &TargetKind::HyperplaneX1(2), 11, &spec, &caps).unwrap();
        assert!(!s.exact);
        assert_eq!(s.stop, StopReason::TimeCap);
    }

    #[test]
    fn tiny_box_is_certified_or_flagged() {
        let spec = exp1();
        let caps = SearchCaps {
            coordinate_box: Some(CoordinateBox::uniform(1)),
            ..SearchCaps::default()
        };
        for seed in 0..50 {
            let boxed = first_passage(2, &TargetKind::HyperplaneX1(1), seed, &spec, &caps).unwrap();
            let free = first_passage(
                2,
                &TargetKind::HyperplaneX1(1),
                seed,
                &spec,
                &SearchCaps::default(),
            )
            .unwrap();
            if boxed.exact {
                assert_eq!(boxed.value, free.value);
            } else {
                assert!(boxed.value >= free.value);
            }
        }
    }

    #[test]
    fn settled_count_is_reproducible_with_ties() {
        let spec = DistributionSpec::deterministic(1.0).unwrap();
        let a = first_passage(
            3,
            &TargetKind::HyperplaneX1(3),
            0,
            &spec,
            &SearchCaps::default(),
        )
        .unwrap();
        let b = first_passage(
            3,
            &TargetKind::HyperplaneX1(3),
            9,
            &spec,
            &SearchCaps::default(),
        )
        .unwrap();
        assert_eq!(a.settled_count, b.settled_count);
    }
}
