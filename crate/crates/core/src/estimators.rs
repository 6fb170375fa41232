//! Replica farming and point estimates for mu(e_1), mu*, the slab mean and the greedy diagonal path.
//!
//! Replica `r` uses the weight field `derive_seed(master, r)`, so a replica set can be
//! extended later without re-running earlier replicas. Only exact samples enter a mean.

use rayon::prelude::*;
use serde::Serialize;

use crate::distributions::DistributionSpec;
use crate::engine::{
    ceil_sqrt, first_passage, first_passage_verified, mu_e1_caps, SearchCaps, TargetKind,
};
use crate::error::{FppError, Result};
use crate::lattice::{derive_seed, step_weight, Vertex};

/// Box doublings attempted before a box-limited sample is left inexact.
pub const MAX_BOX_DOUBLINGS: u32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    /// `b_n / n` with `b_n = T(0, {x_1 = n})`.
    MuE1,
    /// `T(0, n e_1) / n`.
    MuE1Point,
    MuStar,
    SlabMean,
    GreedyDiag,
}

impl Quantity {
    pub fn as_str(self) -> &'static str {
        match self {
            Quantity::MuE1 => "mu_e1",
            Quantity::MuE1Point => "mu_e1_point",
            Quantity::MuStar => "mu_star",
            Quantity::SlabMean => "slab_mean",
            Quantity::GreedyDiag => "greedy_diag",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateRecord {
    pub quantity: Quantity,
    pub d: u32,
    pub n: u32,
    pub replicas: u64,
    pub mean: f64,
    pub stderr: f64,
    pub exact_fraction: f64,
    pub master_seed: u64,
}

impl EstimateRecord {
    /// Every replica exact; required before a record backs any certified statement.
    pub fn certificate_grade(&self) -> bool {
        self.exact_fraction == 1.0
    }
}

/// One replica, sufficient for independent replay together with the caps.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicaSample {
    pub replica: u64,
    pub seed: u64,
    pub value: f64,
    pub exact: bool,
    pub settled_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimate {
    pub record: EstimateRecord,
    pub samples: Vec<ReplicaSample>,
    pub caps: Option<SearchCaps>,
}

#[derive(Debug, Clone, PartialEq)]
#[derive(Default)]
pub struct EstimatorOptions {
    /// Worker threads; 0 uses the global pool.
    pub workers: usize,
    /// First replica index; disjoint ranges give independent replica sets.
    pub first_replica: u64,
    /// Overrides the default search caps.
    pub caps: Option<SearchCaps>,
}


/// Default plane index for mu(e_1): `ceil(2 log d)`, at least 1.
pub fn default_n_mu_e1(d: u32) -> u32 {
    ((2.0 * (d as f64).ln()).ceil() as u32).max(1)
}

/// Default plane index for mu*.
pub const DEFAULT_N_MU_STAR: u32 = 3;

fn check_args(d: u32, n: u32, replicas: u64) -> Result<()> {
    if d == 0 {
        return Err(FppError::InvalidArgument("d must be positive".into()));
    }
    if n == 0 {
        return Err(FppError::InvalidArgument("n must be at least 1".into()));
    }
    if replicas < 2 {
        return Err(FppError::InvalidArgument("need at least 2 replicas".into()));
    }
    Ok(())
}

fn run_replicas<F>(
    opts: &EstimatorOptions,
    replicas: u64,
    master: u64,
    job: F,
) -> Result<Vec<ReplicaSample>>
where
    F: Fn(u64, u64) -> Result<ReplicaSample> + Sync + Send,
{
    let ids: Vec<u64> = (opts.first_replica..opts.first_replica + replicas).collect();
    let work = || {
        ids.par_iter()
            .map(|&r| job(r, derive_seed(master, r)))
            .collect::<Result<Vec<_>>>()
    };
    if opts.workers == 0 {
        work()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(opts.workers)
            .build()
            .map_err(|e| FppError::InvalidArgument(format!("cannot build worker pool: {e}")))?
            .install(work)
    }
}

/// Mean and normal-approximation standard error of `values`.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let k = values.len();
    if k == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / k as f64;
    if k < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k as f64 - 1.0);
    (mean, (var / k as f64).sqrt())
}

fn summarize(
    quantity: Quantity,
    d: u32,
    n: u32,
    master_seed: u64,
    samples: Vec<ReplicaSample>,
    caps: Option<SearchCaps>,
) -> Estimate {
    let exact: Vec<f64> = samples
        .iter()
        .filter(|s| s.exact)
        .map(|s| s.value)
        .collect();
    let (mean, stderr) = mean_stderr(&exact);
    let record = EstimateRecord {
        quantity,
        d,
        n,
        replicas: samples.len() as u64,
        mean,
        stderr,
        exact_fraction: exact.len() as f64 / samples.len() as f64,
        master_seed,
    };
    Estimate {
        record,
        samples,
        caps,
    }
}

/// Plane `Σx = n⌈√d⌉` sits at diagonal distance `n⌈√d⌉/√d` in units of `√d`.
fn diagonal_scale(d: u32, n: u32) -> f64 {
    (n * ceil_sqrt(d)) as f64 / (d as f64).sqrt()
}

/// Replicas of `T(target) / scale`.
fn passage_replicas(
    d: u32,
    scale: f64,
    spec: &DistributionSpec,
    replicas: u64,
    master_seed: u64,
    opts: &EstimatorOptions,
    target: &TargetKind,
    caps: &SearchCaps,
) -> Result<Vec<ReplicaSample>> {
    run_replicas(opts, replicas, master_seed, |r, seed| {
        let s = first_passage_verified(d, target, seed, spec, caps, MAX_BOX_DOUBLINGS)?;
        Ok(ReplicaSample {
            replica: r,
            seed,
            value: s.value / scale,
            exact: s.exact,
            settled_count: s.settled_count,
        })
    })
}

/// `b_n / n` over replicas.
pub fn estimate_mu_e1(
    d: u32,
    spec: &DistributionSpec,
    n: u32,
    replicas: u64,
    master_seed: u64,
    opts: &EstimatorOptions,
) -> Result<Estimate> {
    check_args(d, n, replicas)?;
    let caps = opts.caps.clone().unwrap_or_else(|| mu_e1_caps(n));
    let samples = passage_replicas(
        d,
        n as f64,
        spec,
        replicas,
        master_seed,
        opts,
        &TargetKind::HyperplaneX1(n),
        &caps,
    )?;
    Ok(summarize(
        Quantity::MuE1,
        d,
        n,
        master_seed,
        samples,
        Some(caps),
    ))
}

/// `T(0, n e_1) / n` over replicas; far costlier than `estimate_mu_e1` beyond small d.
pub fn estimate_mu_e1_point(
    d: u32,
    spec: &DistributionSpec,
    n: u32,
    replicas: u64,
    master_seed: u64,
    opts: &EstimatorOptions,
) -> Result<Estimate> {
    check_args(d, n, replicas)?;
    let caps = opts.caps.clone().unwrap_or_else(|| mu_e1_caps(n));
    let target = TargetKind::Point(Vertex::axis(d, 1, n as i32));
    let samples = passage_replicas(
        d,
        n as f64,
        spec,
        replicas,
        master_seed,
        opts,
        &target,
        &caps,
    )?;
    Ok(summarize(
        Quantity::MuE1Point,
        d,
        n,
        master_seed,
        samples,
        Some(caps),
    ))
}

/// `T({sum x_i = n ceil(sqrt d)}) sqrt(d) / (n ceil(sqrt d))` over replicas: the passage time
/// per unit of `n` in the normalization where the plane sits at `n sqrt d`.
pub fn estimate_mu_star(
    d: u32,
    spec: &DistributionSpec,
    n: u32,
    replicas: u64,
    master_seed: u64,
    opts: &EstimatorOptions,
) -> Result<Estimate> {
    check_args(d, n, replicas)?;
    let caps = opts.caps.clone().unwrap_or_default();
    let samples = passage_replicas(
        d,
        diagonal_scale(d, n),
        spec,
        replicas,
        master_seed,
        opts,
        &TargetKind::DiagonalPlane(n),
        &caps,
    )?;
    Ok(summarize(
        Quantity::MuStar,
        d,
        n,
        master_seed,
        samples,
        Some(caps),
    ))
}

/// Mean of the slab passage time to `{x_1 = 1}`.
pub fn estimate_slab_mean(
    d: u32,
    spec: &DistributionSpec,
    replicas: u64,
    master_seed: u64,
    opts: &EstimatorOptions,
) -> Result<Estimate> {
    check_args(d, 1, replicas)?;
    let caps = opts.caps.clone().unwrap_or_default();
    let samples = run_replicas(opts, replicas, master_seed, |r, seed| {
        let s = first_passage(d, &TargetKind::SlabS01, seed, spec, &caps)?;
        Ok(ReplicaSample {
            replica: r,
            seed,
            value: s.value,
            exact: s.exact,
            settled_count: s.settled_count,
        })
    })?;
    Ok(summarize(
        Quantity::SlabMean,
        d,
        1,
        master_seed,
        samples,
        Some(caps),
    ))
}

/// Passage time of the greedy diagonal path: `n ceil(sqrt d)` steps, each along the
/// cheapest positive direction out of the current vertex (lowest index on ties).
pub fn greedy_diagonal_time(d: u32, spec: &DistributionSpec, n: u32, seed: u64) -> f64 {
    let mut v = Vertex::origin(d);
    let mut total = 0.0;
    for _ in 0..n * ceil_sqrt(d) {
        let mut best = (f64::INFINITY, 1);
        for i in 1..=d {
            let w = step_weight(&v, i, true, seed, spec);
            if w < best.0 {
                best = (w, i);
            }
        }
        total += best.0;
        v = v.shifted(best.1, 1);
    }
    total
}

/// Greedy path time over replicas, normalized as in [`estimate_mu_star`].
pub fn greedy_diagonal_bound(
    d: u32,
    spec: &DistributionSpec,
    n: u32,
    replicas: u64,
    master_seed: u64,
    opts: &EstimatorOptions,
) -> Result<Estimate> {
    check_args(d, n, replicas)?;
    let samples = run_replicas(opts, replicas, master_seed, |r, seed| {
        let value = greedy_diagonal_time(d, spec, n, seed) / diagonal_scale(d, n);
        let steps = (n * ceil_sqrt(d)) as u64;
        Ok(ReplicaSample {
            replica: r,
            seed,
            value,
            exact: true,
            settled_count: steps,
        })
    })?;
    Ok(summarize(
        Quantity::GreedyDiag,
        d,
        n,
        master_seed,
        samples,
        None,
    ))
}
