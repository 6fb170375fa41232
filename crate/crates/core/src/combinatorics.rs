//! Exact small-scale counting oracles: self-avoiding walks, overlap structure of
//! random-walk pairs, pattern counts and lattice-path counts.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::Serialize;

use crate::error::{FppError, Result};
use crate::lattice::{derive_seed, EdgeKey, Vertex};
use crate::special::ln_binomial;

pub const DEFAULT_SAW_BUDGET: f64 = 1e9;
pub const DEFAULT_PAIR_BUDGET: f64 = 1e9;
pub const DEFAULT_RETURN_BUDGET: f64 = 1e8;

fn check_budget(estimated: f64, budget: f64) -> Result<()> {
    if estimated >= budget {
        return Err(FppError::EnumerationTooLarge { estimated, budget });
    }
    Ok(())
}

#[inline]
fn step(v: &Vertex, s: u32) -> Vertex {
    v.shifted(s / 2 + 1, if s.is_multiple_of(2) { 1 } else { -1 })
}

/// Number of `n`-step self-avoiding walks from the origin of Z^d.
pub fn saw_count(n: u32, d: u32) -> Result<u64> {
    saw_count_with_budget(n, d, DEFAULT_SAW_BUDGET)
}

pub fn saw_count_with_budget(n: u32, d: u32, budget: f64) -> Result<u64> {
    if d == 0 {
        return Err(FppError::InvalidArgument("d must be positive".into()));
    }
    if n == 0 {
        return Ok(1);
    }
    let two_d = 2.0 * d as f64;
    check_budget(two_d * (two_d - 1.0).powi(n as i32 - 1), budget)?;
    // All first steps are equivalent under the hyperoctahedral symmetry.
    let first = step(&Vertex::origin(d), 0);
    let mut path = vec![Vertex::origin(d), first];
    Ok(2 * d as u64 * saw_extend(&mut path, n as usize, d))
}

fn saw_extend(path: &mut Vec<Vertex>, n: usize, d: u32) -> u64 {
    if path.len() == n + 1 {
        return 1;
    }
    let mut total = 0;
    for s in 0..2 * d {
        let next = step(path.last().expect("non-empty path"), s);
        if path.contains(&next) {
            continue;
        }
        path.push(next);
        total += saw_extend(path, n, d);
        path.pop();
    }
    total
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct XiBounds {
    /// `2d - 1 - log(2d - 1)`.
    pub lower_const: f64,
    /// `C_{n,d}^{1/n}`.
    pub root_count: f64,
    /// `2d - 1 - 1/(2d) - 3/(2d)^2`.
    pub expansion: f64,
    pub count: u64,
    /// `root_count >= lower_const`.
    pub holds: bool,
}

pub fn xi_lower_const(d: u32) -> f64 {
    let m = 2.0 * d as f64 - 1.0;
    m - m.ln()
}

pub fn xi_expansion(d: u32) -> f64 {
    let t = 2.0 * d as f64;
    t - 1.0 - 1.0 / t - 3.0 / (t * t)
}

pub fn xi_bounds(d: u32, n: u32) -> Result<XiBounds> {
    if n == 0 {
        return Err(FppError::InvalidArgument("n must be at least 1".into()));
    }
    let count = saw_count(n, d)?;
    let lower_const = xi_lower_const(d);
    let root_count = (count as f64).powf(1.0 / n as f64);
    Ok(XiBounds {
        lower_const,
        root_count,
        expansion: xi_expansion(d),
        count,
        holds: root_count >= lower_const,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum OverlapMode {
    ExactEnumeration,
    MonteCarlo { samples: u64, seed: u64 },
}

/// Probability mass of self-avoiding pairs with `l` shared edges in `k` runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OverlapCell {
    pub l: u32,
    pub k: u32,
    pub prob: f64,
    /// Mass of the same event intersected with equal endpoints.
    pub prob_end_equal: f64,
    pub count: u64,
    pub count_end_equal: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapStats {
    pub p: u32,
    pub n: u32,
    pub mode: OverlapMode,
    pub table: Vec<OverlapCell>,
    pub sa_pair_prob: f64,
    /// Probability that at least one walk of the pair is not self-avoiding.
    pub non_sa_mass: f64,
    /// Pairs enumerated or sampled.
    pub trials: u64,
}

impl OverlapStats {
    /// P(self-avoiding pair, exactly `l` shared edges).
    pub fn prob_overlap(&self, l: u32) -> f64 {
        self.table.iter().filter(|c| c.l == l).map(|c| c.prob).sum()
    }

    /// P(self-avoiding pair, exactly `l` shared edges, equal endpoints).
    pub fn prob_overlap_end_equal(&self, l: u32) -> f64 {
        self.table
            .iter()
            .filter(|c| c.l == l)
            .map(|c| c.prob_end_equal)
            .sum()
    }

    pub fn count_overlap(&self, l: u32) -> u64 {
        self.table
            .iter()
            .filter(|c| c.l == l)
            .map(|c| c.count)
            .sum()
    }
}

struct Walk {
    edges: Vec<EdgeKey>,
    end: Vertex,
}

fn build_walk(p: u32, steps: &[u32]) -> Option<Walk> {
    let mut pos = vec![Vertex::origin(p)];
    let mut edges = Vec::with_capacity(steps.len());
    for &s in steps {
        let cur = pos.last().expect("non-empty");
        let next = step(cur, s);
        if pos.contains(&next) {
            return None;
        }
        edges.push(EdgeKey::from_step(cur, s / 2 + 1, s % 2 == 0));
        pos.push(next);
    }
    Some(Walk {
        edges,
        end: pos.pop().expect("non-empty"),
    })
}

/// Number of shared edges and of maximal runs of shared edges along `a`.
fn overlap_shape(a: &Walk, b: &Walk) -> (u32, u32) {
    let mut l = 0;
    let mut runs = 0;
    let mut in_run = false;
    for e in &a.edges {
        let shared = b.edges.iter().any(|f| f == e);
        if shared {
            l += 1;
            if !in_run {
                runs += 1;
            }
        }
        in_run = shared;
    }
    (l, runs)
}

type Tally = BTreeMap<(u32, u32), (u64, u64)>;

fn merge(mut a: Tally, b: Tally) -> Tally {
    for (k, (c, e)) in b {
        let slot = a.entry(k).or_insert((0, 0));
        slot.0 += c;
        slot.1 += e;
    }
    a
}

/// Overlap structure of two independent `n`-step simple random walks in Z^p.
pub fn rw_overlap_stats(p: u32, n: u32, mode: OverlapMode) -> Result<OverlapStats> {
    rw_overlap_stats_with_budget(p, n, mode, DEFAULT_PAIR_BUDGET)
}

pub fn rw_overlap_stats_with_budget(
    p: u32,
    n: u32,
    mode: OverlapMode,
    budget: f64,
) -> Result<OverlapStats> {
    if p == 0 || n == 0 {
        return Err(FppError::InvalidArgument("p and n must be positive".into()));
    }
    let (tally, trials, sa_pairs) = match mode {
        OverlapMode::ExactEnumeration => {
            let total = (2.0 * p as f64).powi(2 * n as i32);
            check_budget(total, budget)?;
            let walks = all_sa_walks(p, n);
            // First walk split across workers; partial tallies merged by summation.
            let tally = walks
                .par_iter()
                .map(|a| {
                    let mut t = Tally::new();
                    for b in &walks {
                        let key = overlap_shape(a, b);
                        let slot = t.entry(key).or_insert((0, 0));
                        slot.0 += 1;
                        slot.1 += u64::from(a.end == b.end);
                    }
                    t
                })
                .reduce(Tally::new, merge);
            let sa = walks.len() as u64;
            (tally, total as u64, sa * sa)
        }
        OverlapMode::MonteCarlo { samples, seed } => {
            if samples == 0 {
                return Err(FppError::InvalidArgument("samples must be positive".into()));
            }
            let chunk = 1u64 << 16;
            let chunks = samples.div_ceil(chunk);
            let (tally, sa) = (0..chunks)
                .into_par_iter()
                .map(|c| {
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, c));
                    let mut t = Tally::new();
                    let mut sa = 0u64;
                    let count = chunk.min(samples - c * chunk);
                    let mut sa_steps = vec![0u32; n as usize];
                    let mut sb_steps = vec![0u32; n as usize];
                    for _ in 0..count {
                        for s in sa_steps.iter_mut().chain(sb_steps.iter_mut()) {
                            *s = rng.gen_range(0..2 * p);
                        }
                        let (Some(a), Some(b)) =
                            (build_walk(p, &sa_steps), build_walk(p, &sb_steps))
                        else {
                            continue;
                        };
                        sa += 1;
                        let slot = t.entry(overlap_shape(&a, &b)).or_insert((0, 0));
                        slot.0 += 1;
                        slot.1 += u64::from(a.end == b.end);
                    }
                    (t, sa)
                })
                .reduce(|| (Tally::new(), 0), |x, y| (merge(x.0, y.0), x.1 + y.1));
            (tally, samples, sa)
        }
    };
    let denom = trials as f64;
    let table = tally
        .into_iter()
        .map(|((l, k), (count, count_end_equal))| OverlapCell {
            l,
            k,
            prob: count as f64 / denom,
            prob_end_equal: count_end_equal as f64 / denom,
            count,
            count_end_equal,
        })
        .collect();
    Ok(OverlapStats {
        p,
        n,
        mode,
        table,
        sa_pair_prob: sa_pairs as f64 / denom,
        non_sa_mass: (trials - sa_pairs) as f64 / denom,
        trials,
    })
}

fn all_sa_walks(p: u32, n: u32) -> Vec<Walk> {
    let mut out = Vec::new();
    let mut steps = vec![0u32; n as usize];
    loop {
        if let Some(w) = build_walk(p, &steps) {
            out.push(w);
        }
        // Odometer over step sequences.
        let mut i = 0;
        loop {
            if i == steps.len() {
                return out;
            }
            steps[i] += 1;
            if steps[i] < 2 * p {
                break;
            }
            steps[i] = 0;
            i += 1;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PatternCount {
    /// `l^{K-1} [C(n,K) K!]^2 2^K`.
    pub exact_combinatorial: u128,
    /// `(2 l n^2)^K / l`, as a real number.
    pub paper_bound: f64,
    /// `exact_combinatorial * l <= (2 l n^2)^K` checked in integers.
    pub holds: bool,
}

fn binom_u128(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) / (i + 1))
}

/// Both sides of the bubble pattern count inequality for `1 <= K <= l <= n`.
pub fn pattern_count_bound(l: u32, k: u32, n: u32) -> Result<PatternCount> {
    if !(1 <= k && k <= l && l <= n) {
        return Err(FppError::InvalidArgument("need 1 <= K <= l <= n".into()));
    }
    if n > 12 {
        return Err(FppError::InvalidArgument(
            "integer pattern counts supported for n <= 12".into(),
        ));
    }
    let (l, k, n) = (l as u128, k as u128, n as u128);
    let ordered = binom_u128(n, k) * (1..=k).product::<u128>();
    let lhs = l.pow(k as u32 - 1) * ordered * ordered * (1u128 << k);
    let rhs_times_l = (2 * l * n * n).pow(k as u32);
    Ok(PatternCount {
        exact_combinatorial: lhs,
        paper_bound: rhs_times_l as f64 / l as f64,
        holds: lhs * l <= rhs_times_l,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReturnFacts {
    pub p: u32,
    pub m: u32,
    /// `max_t P(S_m = t)`.
    pub max_point_prob: f64,
    /// `1/(2p)`.
    pub max_point_bound: f64,
    /// `P(S_2 != 0, S_m = 0)`; absent for `m < 2`.
    pub two_step_return_prob: Option<f64>,
    /// `(m - 2)^2/(2p)^2`.
    pub two_step_return_bound: Option<f64>,
    pub max_point_count: u64,
    pub two_step_return_count: u64,
    pub total: u64,
    pub holds: bool,
}

/// Exact return statistics of the `m`-step simple random walk in Z^p.
pub fn rw_return_facts(p: u32, m: u32) -> Result<ReturnFacts> {
    if p == 0 || m == 0 {
        return Err(FppError::InvalidArgument("p and m must be positive".into()));
    }
    let total_f = (2.0 * p as f64).powi(m as i32);
    check_budget(total_f, DEFAULT_RETURN_BUDGET)?;
    let mut ends: FxHashMap<Vertex, u64> = FxHashMap::default();
    let mut two_step = 0u64;
    return_walk(&Vertex::origin(p), 0, m, p, false, &mut ends, &mut two_step);
    let total = total_f as u64;
    let max_count = ends.values().copied().max().unwrap_or(0);
    let tp = 2.0 * p as f64;
    let max_point_prob = max_count as f64 / total_f;
    let max_point_bound = 1.0 / tp;
    let (two_prob, two_bound) = if m >= 2 {
        (
            Some(two_step as f64 / total_f),
            Some(((m - 2) as f64).powi(2) / (tp * tp)),
        )
    } else {
        (None, None)
    };
    // Integer comparisons: count * 2p <= total and count * (2p)^2 <= (m-2)^2 total.
    let tpu = 2 * p as u128;
    let mut holds = max_count as u128 * tpu <= total as u128;
    if m >= 2 {
        holds &= two_step as u128 * tpu * tpu <= ((m - 2) as u128).pow(2) * total as u128;
    }
    Ok(ReturnFacts {
        p,
        m,
        max_point_prob,
        max_point_bound,
        two_step_return_prob: two_prob,
        two_step_return_bound: two_bound,
        max_point_count: max_count,
        two_step_return_count: two_step,
        total,
        holds,
    })
}

fn return_walk(
    v: &Vertex,
    depth: u32,
    m: u32,
    p: u32,
    away_at_two: bool,
    ends: &mut FxHashMap<Vertex, u64>,
    two_step: &mut u64,
) {
    if depth == m {
        if away_at_two && v.pairs().is_empty() {
            *two_step += 1;
        }
        *ends.entry(v.clone()).or_insert(0) += 1;
        return;
    }
    for s in 0..2 * p {
        let w = step(v, s);
        let away = if depth + 1 == 2 {
            !w.pairs().is_empty()
        } else {
            away_at_two
        };
        return_walk(&w, depth + 1, m, p, away, ends, two_step);
    }
}

/// ln of `(2d)^k min(1, exp(-n rho + (k/d)(cosh rho - 1)))`.
pub fn ln_path_count_bound(k: u64, n: u64, d: u64, rho: f64) -> f64 {
    let base = k as f64 * (2.0 * d as f64).ln();
    let expo = -(n as f64) * rho + (k as f64 / d as f64) * (rho.cosh() - 1.0);
    base + expo.min(0.0)
}

/// Upper bound on the number of `k`-step paths from the origin to `{x_1 = n}`.
pub fn path_count_bound(k: u64, n: u64, d: u64, rho: f64) -> Result<f64> {
    if !(rho >= 0.0) || k < n || n == 0 || d == 0 {
        return Err(FppError::InvalidArgument(
            "need rho >= 0 and k >= n >= 1".into(),
        ));
    }
    Ok(ln_path_count_bound(k, n, d, rho).exp())
}

/// Minimizer `asinh(n d / k)` of the exponent `-n rho + (k/d)(cosh rho - 1)`.
pub fn optimal_rho(k: u64, n: u64, d: u64) -> f64 {
    (n as f64 * d as f64 / k as f64).asinh()
}

/// Number of `k`-step paths in Z^d whose coordinate sum first reaches `level` at step `k`:
/// `(2d)^k (level/k) C(k, (k + level)/2) 2^{-k}`, zero unless `k >= level` with equal parity.
pub fn ln_diagonal_first_hit_count(k: u64, level: u64, d: u64) -> f64 {
    if level == 0 || k < level || !(k + level).is_multiple_of(2) {
        return f64::NEG_INFINITY;
    }
    k as f64 * (d as f64).ln() + (level as f64 / k as f64).ln() + ln_binomial(k, (k + level) / 2)
}

/// `(y+1)^{(y+1)/(2y)} (y-1)^{(y-1)/(2y)}` for `y >= 1`: the per-step growth of the
/// diagonal count at `k = y * level` steps, divided by `2 d y`.
pub fn diagonal_growth_factor(y: f64) -> f64 {
    let a = (y + 1.0) * (y + 1.0).ln();
    let b = if y > 1.0 {
        (y - 1.0) * (y - 1.0).ln()
    } else {
        0.0
    };
    ((a + b) / (2.0 * y)).exp()
}

/// Stirling-form bound `sqrt(1/level) (2 d y / growth(y))^k` with `y = k/level`.
pub fn ln_diagonal_count_stirling(k: u64, level: u64, d: u64) -> f64 {
    let y = k as f64 / level as f64;
    -0.5 * (level as f64).ln() + k as f64 * (2.0 * d as f64 * y / diagonal_growth_factor(y)).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn saw_small_counts() {
        for d in 1..6 {
            assert_eq!(saw_count(1, d).unwrap(), 2 * d as u64);
            assert_eq!(saw_count(2, d).unwrap(), 2 * d as u64 * (2 * d as u64 - 1));
        }
        assert_eq!(saw_count(5, 2).unwrap(), 284);
        assert_eq!(saw_count(4, 3).unwrap(), 726);
        assert_eq!(saw_count(5, 3).unwrap(), 3534);
    }

    #[test]
    fn saw_budget_enforced() {
        assert!(matches!(
            saw_count(40, 3),
            Err(FppError::EnumerationTooLarge { .. })
        ));
    }

    #[test]
    fn xi_formulas() {
        assert!((xi_lower_const(2) - (3.0 - 3f64.ln())).abs() < 1e-15);
        assert!((xi_expansion(10) - (19.0 - 1.0 / 20.0 - 3.0 / 400.0)).abs() < 1e-13);
        let b = xi_bounds(2, 5).unwrap();
        assert_eq!(b.count, 284);
        assert!(b.holds);
    }

    #[test]
    fn overlap_single_step() {
        let s = rw_overlap_stats(1, 1, OverlapMode::ExactEnumeration).unwrap();
        assert_eq!(s.prob_overlap(1), 0.5);
        assert_eq!(s.sa_pair_prob, 1.0);
    }

    #[test]
    fn overlap_table_partitions_sa_event() {
        let s = rw_overlap_stats(2, 3, OverlapMode::ExactEnumeration).unwrap();
        let mass: f64 = s.table.iter().map(|c| c.prob).sum();
        assert!((mass - s.sa_pair_prob).abs() < 1e-15);
        assert!((mass + s.non_sa_mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn overlap_budget_enforced() {
        let r = rw_overlap_stats(10, 6, OverlapMode::ExactEnumeration);
        assert!(matches!(r, Err(FppError::EnumerationTooLarge { .. })));
    }

    #[test]
    fn pattern_equality_case() {
        let c = pattern_count_bound(1, 1, 2).unwrap();
        assert_eq!(c.exact_combinatorial, 8);
        assert_eq!(c.paper_bound, 8.0);
        assert!(c.holds);
        assert!(pattern_count_bound(2, 3, 5).is_err());
    }

    #[test]
    fn return_fact_examples() {
        let r = rw_return_facts(1, 2).unwrap();
        assert_eq!(r.max_point_prob, 0.5);
        assert!(r.holds);
        let r = rw_return_facts(2, 1).unwrap();
        assert_eq!(r.max_point_prob, 0.25);
        let r = rw_return_facts(2, 4).unwrap();
        assert!(r.two_step_return_prob.unwrap() <= 0.25);
    }

    #[test]
    fn path_bound_examples() {
        assert!((path_count_bound(5, 2, 3, 0.0).unwrap() - 6f64.powi(5)).abs() < 1e-9);
        let d = 4u64;
        let b = path_count_bound(3, 3, d, (2.0 * d as f64).ln()).unwrap();
        assert!(b < (2.0 * d as f64).powi(3));
        assert!(path_count_bound(2, 3, 2, 0.5).is_err());
    }

    #[test]
    fn diagonal_count_parity() {
        assert_eq!(ln_diagonal_first_hit_count(4, 3, 2), f64::NEG_INFINITY);
        // One step straight onto level 1: d choices.
        assert!((ln_diagonal_first_hit_count(1, 1, 7).exp() - 7.0).abs() < 1e-12);
    }
}
