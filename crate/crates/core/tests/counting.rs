use std::collections::{HashMap, HashSet};

use fpp_core::certifier::overlap_correction;
use fpp_core::combinatorics::{
    ln_diagonal_first_hit_count, optimal_rho, path_count_bound, pattern_count_bound,
    rw_overlap_stats, rw_return_facts, saw_count, xi_bounds, xi_lower_const, OverlapMode,
};

fn unit(s: usize) -> (usize, i32) {
    (s / 2, if s.is_multiple_of(2) { 1 } else { -1 })
}

/// Every step sequence of length `n` in Z^d, as vertex lists.
fn all_walks(d: usize, n: usize) -> Vec<Vec<Vec<i32>>> {
    let mut out = vec![vec![vec![0; d]]];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|w| {
                (0..2 * d).map(move |s| {
                    let (i, e) = unit(s);
                    let mut next = w.last().unwrap().clone();
                    next[i] += e;
                    let mut w2 = w.clone();
                    w2.push(next);
                    w2
                })
            })
            .collect();
    }
    out
}

fn self_avoiding(w: &[Vec<i32>]) -> bool {
    w.iter().collect::<HashSet<_>>().len() == w.len()
}

fn edge_set(w: &[Vec<i32>]) -> HashSet<(Vec<i32>, Vec<i32>)> {
    w.windows(2)
        .map(|e| {
            if e[0] < e[1] {
                (e[0].clone(), e[1].clone())
            } else {
                (e[1].clone(), e[0].clone())
            }
        })
        .collect()
}

#[test]
fn saw_count_matches_naive_filter() {
    for (n, d) in [(5usize, 2usize), (4, 3), (6, 2)] {
        let naive = all_walks(d, n).iter().filter(|w| self_avoiding(w)).count() as u64;
        assert_eq!(saw_count(n as u32, d as u32).unwrap(), naive, "n={n} d={d}");
    }
    assert_eq!(saw_count(5, 2).unwrap(), 284);
}

#[test]
fn root_count_dominates_connective_lower_constant() {
    for d in [2u32, 3] {
        for n in 1..=6 {
            let x = xi_bounds(d, n).unwrap();
            assert!(x.holds && x.root_count >= xi_lower_const(d), "d={d} n={n}");
        }
    }
    let x = xi_bounds(2, 5).unwrap();
    assert!((x.root_count - 284f64.powf(0.2)).abs() < 1e-12);
    let x10 = xi_bounds(10, 1).unwrap();
    assert!((x10.expansion - (19.0 - 1.0 / 20.0 - 3.0 / 400.0)).abs() < 1e-12);
}

#[test]
fn pattern_counts_never_exceed_bound() {
    for n in 1..=8u32 {
        for l in 1..=n {
            for k in 1..=l {
                let c = pattern_count_bound(l, k, n).unwrap();
                let choose: f64 = (0..k).map(|i| (n - i) as f64).product();
                let lhs = (l as f64).powi(k as i32 - 1) * choose * choose * 2f64.powi(k as i32);
                assert_eq!(c.exact_combinatorial as f64, lhs);
                assert!(
                    c.holds && lhs <= c.paper_bound * (1.0 + 1e-12),
                    "l={l} K={k} n={n}"
                );
            }
        }
    }
    let eq = pattern_count_bound(1, 1, 2).unwrap();
    assert_eq!(eq.exact_combinatorial, 8);
    assert_eq!(eq.paper_bound, 8.0);
}

/// Endpoint distribution by forward convolution, tracking whether the walk is away from
/// the origin after two steps.
fn return_oracle(p: usize, m: usize) -> (u64, u64) {
    let mut dist: HashMap<(Vec<i32>, bool), u64> = HashMap::from([((vec![0; p], false), 1)]);
    for t in 1..=m {
        let mut next = HashMap::new();
        for ((v, away), c) in dist {
            for s in 0..2 * p {
                let (i, e) = unit(s);
                let mut w = v.clone();
                w[i] += e;
                let away = if t == 2 {
                    w.iter().any(|&x| x != 0)
                } else {
                    away
                };
                *next.entry((w, away)).or_insert(0) += c;
            }
        }
        dist = next;
    }
    let mut ends: HashMap<Vec<i32>, u64> = HashMap::new();
    let mut two = 0;
    for ((v, away), c) in dist {
        if away && v.iter().all(|&x| x == 0) {
            two += c;
        }
        *ends.entry(v).or_insert(0) += c;
    }
    (*ends.values().max().unwrap(), two)
}

#[test]
fn return_facts_match_convolution_and_hold() {
    for p in 1..=2u32 {
        for m in 1..=4u32 {
            let f = rw_return_facts(p, m).unwrap();
            let (max_count, two) = return_oracle(p as usize, m as usize);
            assert_eq!(f.max_point_count, max_count, "p={p} m={m}");
            assert_eq!(f.two_step_return_count, if m >= 2 { two } else { 0 });
            assert!(f.holds, "p={p} m={m}");
        }
    }
    assert_eq!(rw_return_facts(1, 2).unwrap().max_point_prob, 0.5);
    assert_eq!(rw_return_facts(2, 1).unwrap().max_point_prob, 0.25);
    assert!(rw_return_facts(2, 4).unwrap().two_step_return_prob.unwrap() <= 0.25);
}

/// Overlap counts from an independent edge-set representation.
fn overlap_oracle(p: usize, n: usize) -> (HashMap<usize, u64>, u64) {
    let walks: Vec<_> = all_walks(p, n)
        .into_iter()
        .filter(|w| self_avoiding(w))
        .collect();
    let edges: Vec<_> = walks.iter().map(|w| edge_set(w)).collect();
    let mut by_l = HashMap::new();
    for a in &edges {
        for b in &edges {
            *by_l.entry(a.intersection(b).count()).or_insert(0) += 1;
        }
    }
    (by_l, (2 * p as u64).pow(2 * n as u32))
}

#[test]
fn overlap_tables_match_edge_set_oracle() {
    for (p, n) in [(1u32, 1u32), (2, 3), (3, 2), (2, 4)] {
        let stats = rw_overlap_stats(p, n, OverlapMode::ExactEnumeration).unwrap();
        let (oracle, total) = overlap_oracle(p as usize, n as usize);
        assert_eq!(stats.trials, total);
        for l in 0..=n {
            assert_eq!(
                stats.count_overlap(l),
                oracle.get(&(l as usize)).copied().unwrap_or(0),
                "p={p} n={n} l={l}"
            );
        }
        let mass: f64 = stats.table.iter().map(|c| c.prob).sum::<f64>() + stats.non_sa_mass;
        assert!((mass - 1.0).abs() < 1e-12);
        let table: f64 = stats.table.iter().map(|c| c.prob).sum();
        assert!((table - stats.sa_pair_prob).abs() < 1e-12);
    }
    assert_eq!(
        rw_overlap_stats(1, 1, OverlapMode::ExactEnumeration)
            .unwrap()
            .prob_overlap(1),
        0.5
    );
}

#[test]
fn exact_overlap_probabilities_respect_correction() {
    for p in 1..=3u32 {
        for n in 1..=4u32 {
            let stats = rw_overlap_stats(p, n, OverlapMode::ExactEnumeration).unwrap();
            // The correction factor is defined for 1 <= l <= n-1.
            for l in 1..n {
                let bound = (0.5 / p as f64).powi(l as i32) * overlap_correction(n, p as u64, l);
                let got = stats.prob_overlap(l);
                assert!(
                    got <= bound * (1.0 + 1e-12),
                    "p={p} n={n} l={l}: {got} > {bound}"
                );
            }
        }
    }
}

#[test]
fn equal_endpoint_event_is_strictly_smaller() {
    for (p, n) in [(2u32, 3u32), (3, 3), (2, 4)] {
        let stats = rw_overlap_stats(p, n, OverlapMode::ExactEnumeration).unwrap();
        for l in 1..=n {
            let all = stats.prob_overlap(l - 1);
            let eq = stats.prob_overlap_end_equal(l - 1);
            assert!(eq <= all);
            if all > 0.0 {
                assert!(eq < all, "p={p} n={n} l={l}");
            }
        }
    }
}

#[test]
fn monte_carlo_overlap_in_high_dimension() {
    let (p, samples) = (25u32, 10_000_000u64);
    let stats = rw_overlap_stats(
        p,
        5,
        OverlapMode::MonteCarlo {
            samples,
            seed: 2024,
        },
    )
    .unwrap();
    for l in 1..=5u32 {
        let prob = stats.prob_overlap(l);
        let se = (prob * (1.0 - prob) / samples as f64).sqrt();
        let bound = (0.5 / p as f64).powi(l as i32) * (1.0 + 10.0 / (p as f64).sqrt());
        assert!(prob <= bound + 3.0 * se, "l={l}: {prob} > {bound}");
    }
}

/// Number of k-step walks in Z^d whose first coordinate ends at n.
fn plane_endpoint_count(k: u64, n: i64, d: u64) -> u128 {
    let mut dist: HashMap<i64, u128> = HashMap::from([(0, 1)]);
    for _ in 0..k {
        let mut next = HashMap::new();
        for (x, c) in dist {
            *next.entry(x + 1).or_insert(0) += c;
            *next.entry(x - 1).or_insert(0) += c;
            *next.entry(x).or_insert(0) += c * (2 * d as u128 - 2);
        }
        dist = next;
    }
    dist.get(&n).copied().unwrap_or(0)
}

#[test]
fn path_counts_respect_bound_over_rho_grid() {
    for (k, n, d) in [
        (3u64, 1u64, 2u64),
        (5, 1, 2),
        (6, 2, 3),
        (8, 3, 4),
        (10, 4, 5),
    ] {
        let exact = plane_endpoint_count(k, n as i64, d) as f64;
        for i in 0..=200 {
            let rho = i as f64 * 0.025;
            let b = path_count_bound(k, n, d, rho).unwrap();
            assert!(
                exact <= b * (1.0 + 1e-12),
                "k={k} n={n} d={d} rho={rho}: {exact} > {b}"
            );
        }
    }
    assert!((path_count_bound(4, 2, 3, 0.0).unwrap() - 1296.0).abs() < 1e-9);
    assert!(path_count_bound(4, 4, 3, 6f64.ln()).unwrap() < 6f64.powi(4));
}

#[test]
fn optimal_rho_matches_grid_scan() {
    for (k, n, d) in [(50u64, 10u64, 4u64), (200, 30, 10), (30, 30, 2)] {
        let expo = |r: f64| -(n as f64) * r + (k as f64 / d as f64) * (r.cosh() - 1.0);
        let r0 = optimal_rho(k, n, d);
        let scan = (0..=10_000)
            .map(|i| expo(i as f64 * 2.0 * r0 / 10_000.0))
            .fold(f64::INFINITY, f64::min);
        assert!(
            (expo(r0) - scan).abs() <= 1e-9 * scan.abs(),
            "k={k} n={n} d={d}"
        );
        assert!(expo(r0) <= scan);
    }
}

/// Paths whose coordinate sum first reaches `level` at step k, by a barrier DP on the sum.
fn diagonal_first_hit(k: u64, level: i64, d: u64) -> u128 {
    let mut dist: HashMap<i64, u128> = HashMap::from([(0, 1)]);
    let mut hit = 0;
    for t in 1..=k {
        let mut next = HashMap::new();
        for (s, c) in dist {
            for (ns, ways) in [(s + 1, d as u128), (s - 1, d as u128)] {
                if ns == level {
                    if t == k {
                        hit += c * ways;
                    }
                } else {
                    *next.entry(ns).or_insert(0) += c * ways;
                }
            }
        }
        dist = next;
    }
    hit
}

#[test]
fn diagonal_first_hit_count_matches_barrier_dp() {
    for d in [2u64, 3, 5] {
        for level in 1..=4u64 {
            for k in level..=14 {
                let exact = diagonal_first_hit(k, level as i64, d);
                let ln = ln_diagonal_first_hit_count(k, level, d);
                if exact == 0 {
                    assert_eq!(ln, f64::NEG_INFINITY);
                } else {
                    assert!(
                        (ln.exp() - exact as f64).abs() <= 1e-9 * exact as f64,
                        "d={d} level={level} k={k}"
                    );
                }
            }
        }
    }
}
