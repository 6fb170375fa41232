use fpp_core::engine::{first_passage, mu_e1_caps, SearchCaps, TargetKind};
use fpp_core::estimators::{
    estimate_mu_e1, estimate_mu_star, greedy_diagonal_bound, greedy_diagonal_time, EstimatorOptions,
};
use fpp_core::lattice::Vertex;
use fpp_core::{DistributionSpec, Law};
use proptest::prelude::*;

fn exp1() -> DistributionSpec {
    DistributionSpec::exponential(1.0).unwrap()
}

fn passage(d: u32, target: TargetKind, seed: u64, caps: &SearchCaps) -> f64 {
    let s = first_passage(d, &target, seed, &exp1(), caps).unwrap();
    assert!(s.exact);
    s.value
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn hyperplane_times_increase(seed in any::<u64>(), d in 2u32..5, n in 1u32..4) {
        let caps = SearchCaps::default();
        let a = passage(d, TargetKind::HyperplaneX1(n), seed, &caps);
        let b = passage(d, TargetKind::HyperplaneX1(n + 1), seed, &caps);
        prop_assert!(a <= b);
    }

    #[test]
    fn hyperplane_below_point(seed in any::<u64>(), d in 2u32..4, n in 1u32..3) {
        let caps = SearchCaps::default();
        let plane = passage(d, TargetKind::HyperplaneX1(n), seed, &caps);
        let point = passage(d, TargetKind::Point(Vertex::axis(d, 1, n as i32)), seed, &caps);
        prop_assert!(plane <= point);
    }

    #[test]
    fn slab_time_dominates_first_plane(seed in any::<u64>(), d in 2u32..6) {
        let caps = SearchCaps::default();
        let slab = passage(d, TargetKind::SlabS01, seed, &caps);
        let b1 = passage(d, TargetKind::HyperplaneX1(1), seed, &caps);
        prop_assert!(b1 <= slab);
    }

    #[test]
    fn greedy_path_bounds_diagonal_plane(seed in any::<u64>(), d in 2u32..6, n in 1u32..3) {
        let t = passage(d, TargetKind::DiagonalPlane(n), seed, &SearchCaps::default());
        prop_assert!(t <= greedy_diagonal_time(d, &exp1(), n, seed));
    }

    #[test]
    fn box_caps_do_not_change_exact_answers(seed in any::<u64>(), d in 2u32..5, n in 1u32..4) {
        let free = passage(d, TargetKind::HyperplaneX1(n), seed, &SearchCaps::default());
        let s = first_passage(d, &TargetKind::HyperplaneX1(n), seed, &exp1(), &mu_e1_caps(n)).unwrap();
        if s.exact {
            prop_assert_eq!(s.value, free);
        }
    }
}

#[test]
fn disjoint_replica_ranges_agree() {
    let spec = exp1();
    let a = estimate_mu_e1(2, &spec, 20, 200, 1, &EstimatorOptions::default())
        .unwrap()
        .record;
    let opts = EstimatorOptions {
        first_replica: 10_000,
        ..EstimatorOptions::default()
    };
    let b = estimate_mu_e1(2, &spec, 20, 200, 1, &opts).unwrap().record;
    let band = 4.0 * (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
    assert!(
        (a.mean - b.mean).abs() <= band,
        "{} vs {} (band {band})",
        a.mean,
        b.mean
    );
}

#[test]
fn shifted_law_never_beats_its_offset() {
    let spec = DistributionSpec::shifted(0.25, Law::Exponential { rate: 1.0 }).unwrap();
    let e = estimate_mu_e1(3, &spec, 4, 20, 2, &EstimatorOptions::default()).unwrap();
    assert!(e.samples.iter().all(|s| s.value >= 0.25));
}

#[test]
fn diagonal_estimate_inside_known_envelope() {
    let spec = exp1();
    let e = estimate_mu_star(6, &spec, 3, 60, 4, &EstimatorOptions::default())
        .unwrap()
        .record;
    assert_eq!(e.exact_fraction, 1.0);
    // The greedy path gives sqrt(d) E Y = 1/sqrt(d).
    assert!(e.mean <= 1.0 / 6f64.sqrt() + 4.0 * e.stderr, "{}", e.mean);
    assert!(
        e.mean >= 0.3313 / 6f64.sqrt() - 4.0 * e.stderr,
        "{}",
        e.mean
    );
}

#[test]
fn greedy_diagonal_matches_expected_minimum() {
    for (spec, expect) in [
        (exp1(), 1.0 / 3.0),
        (DistributionSpec::uniform(1.0).unwrap(), 0.3),
    ] {
        let e = greedy_diagonal_bound(9, &spec, 4, 4000, 8, &EstimatorOptions::default())
            .unwrap()
            .record;
        assert!(
            (e.mean - expect).abs() <= 4.0 * e.stderr,
            "{} vs {expect}",
            e.mean
        );
    }
}
