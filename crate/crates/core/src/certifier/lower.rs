//! Lower bounds on `μ(e₁)` and `μ*`, and the diagonal constant `α*`.

use serde::Serialize;

use super::{all_satisfied, Gate, Pipeline};
use crate::combinatorics::diagonal_growth_factor;
use crate::distributions::DistributionSpec;
use crate::error::{FppError, Result};

/// `x = (1-δ) log d / (2ad)` together with the union-bound witnesses.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LowerBoundMu {
    pub d: u64,
    pub delta: f64,
    pub pipeline: Pipeline,
    /// Present only when every binding gate holds.
    pub bound: Option<f64>,
    pub x: f64,
    /// Exponent of `d` in the summability bracket: `δ` (exact gamma) or `δ²`.
    pub kappa: f64,
    /// `e² (1-δ) d^{-κ} log d`; the short-path sum is geometric in `n` with this ratio.
    pub bracket: f64,
    /// `M/n = 2e(1-δ) log d`, where the long-path sum starts.
    pub long_path_start: f64,
    /// Ratio of the long-path geometric series.
    pub tail_ratio: f64,
    pub validity: Vec<Gate>,
}

fn exact_rate(spec: &DistributionSpec, pipeline: Pipeline) -> Result<Option<f64>> {
    match pipeline {
        Pipeline::Generic => Ok(None),
        Pipeline::ExactGamma => spec.exponential_rate().map(Some).ok_or_else(|| {
            FppError::UnsupportedRegime(format!(
                "exact-gamma pipeline needs an exponential law, got {}",
                spec.id
            ))
        }),
    }
}

pub fn lower_bound_mu(
    d: u64,
    spec: &DistributionSpec,
    delta: f64,
    pipeline: Pipeline,
) -> Result<LowerBoundMu> {
    let a = spec.require_positive_slope()?;
    let exact = exact_rate(spec, pipeline)?.is_some();
    let df = d as f64;
    let log_d = df.ln();
    let x = (1.0 - delta) * log_d / (2.0 * a * df);
    let kappa = if exact { delta } else { delta * delta };
    let bracket = std::f64::consts::E.powi(2) * (1.0 - delta) * df.powf(-kappa) * log_d;
    // Chernoff constant of the partial-sum bound: 1 + δ, or exactly 1 for gamma sums.
    let lemma_delta = if exact { 0.0 } else { delta };
    let tail_ratio = (1.0 + lemma_delta) / 2.0;
    let mut gates = vec![
        Gate::int_ge("d>=2", d as i64, 2),
        Gate::gt("delta>0", delta, 0.0),
        Gate::lt("delta<1", delta, 1.0),
        Gate::lt("e^2 (1-delta) d^-kappa log d < 1", bracket, 1.0),
    ];
    if !exact {
        let c = spec.c();
        let s = x.sqrt();
        let window = spec
            .eps0()
            .min((-2.0 * c / (a * delta)).exp())
            .min(1.0 / ((1.0 + delta / 2.0) * a))
            .min(1.0);
        gates.push(Gate::le(
            "sqrt(x)<=min(eps0, e^(-2C/(a delta)), 1/((1+delta/2)a), 1)",
            s,
            window,
        ));
        let t1 = s * (delta * a / 2.0).ln();
        let t2 = 2.0 * s * s.ln();
        gates.push(Gate::ge(
            "sqrt(x) log(delta a/2) + 2 sqrt(x) log sqrt(x) >= -1",
            t1 + t2,
            -1.0,
        ));
        gates.push(Gate::ge("sqrt(x) log(delta a/2) >= -1/3", t1, -1.0 / 3.0).diagnostic());
        gates.push(Gate::ge("2 sqrt(x) log sqrt(x) >= -1/3", t2, -1.0 / 3.0).diagnostic());
    }
    let bound = all_satisfied(&gates).then_some(x);
    Ok(LowerBoundMu {
        d,
        delta,
        pipeline,
        bound,
        x,
        kappa,
        bracket,
        long_path_start: 2.0 * std::f64::consts::E * (1.0 - delta) * log_d,
        tail_ratio,
        validity: gates,
    })
}

/// `δ ∈ {0.001, …, 0.999}`.
pub fn default_delta_grid() -> Vec<f64> {
    (1..=999).map(|k| k as f64 / 1000.0).collect()
}

/// Largest certified bound over `deltas`; ties go to the smaller `δ`. Without any valid
/// `δ`, returns the evaluation at the last grid point so the failing gates are visible.
pub fn best_lower_bound_mu(
    d: u64,
    spec: &DistributionSpec,
    pipeline: Pipeline,
    deltas: &[f64],
) -> Result<LowerBoundMu> {
    best_by(
        deltas,
        |delta| lower_bound_mu(d, spec, delta, pipeline),
        |r| r.bound,
    )
}

fn best_by<T, F, B>(deltas: &[f64], eval: F, bound: B) -> Result<T>
where
    F: Fn(f64) -> Result<T>,
    B: Fn(&T) -> Option<f64>,
{
    let mut best: Option<(f64, T)> = None;
    let mut last = None;
    for &delta in deltas {
        let r = eval(delta)?;
        match bound(&r) {
            Some(v) if best.as_ref().is_none_or(|(bv, _)| v > *bv) => best = Some((v, r)),
            _ => last = Some(r),
        }
    }
    match (best, last) {
        (Some((_, r)), _) => Ok(r),
        (None, Some(r)) => Ok(r),
        (None, None) => Err(FppError::InvalidArgument("empty delta grid".into())),
    }
}

/// The nonzero root of `coth α = α`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlphaStar {
    pub alpha: f64,
    /// `sqrt(α² - 1)/2`.
    pub companion: f64,
    /// `coth α - α` at the returned root.
    pub residual: f64,
    pub iterations: u32,
}

fn coth_gap(alpha: f64) -> f64 {
    1.0 / alpha.tanh() - alpha
}

/// Bisection on `[1.01, 2]` down to an interval of width `1e-14`.
pub fn alpha_star() -> AlphaStar {
    let (mut lo, mut hi) = (1.01f64, 2.0f64);
    debug_assert!(coth_gap(lo) > 0.0 && coth_gap(hi) < 0.0);
    let mut iterations = 0;
    while hi - lo > 1e-14 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if coth_gap(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }
    let alpha = 0.5 * (lo + hi);
    AlphaStar {
        alpha,
        companion: (alpha * alpha - 1.0).sqrt() / 2.0,
        residual: coth_gap(alpha),
        iterations,
    }
}

/// `inf_{y>=1} (y+1)^{(y+1)/(2y)} (y-1)^{(y-1)/(2y)}` by golden-section search; returns `(argmin, min)`.
pub fn diagonal_growth_infimum() -> (f64, f64) {
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let f = |y: f64| diagonal_growth_factor(y).ln();
    let (mut a, mut b) = (1.0f64, 4.0f64);
    let mut c = b - phi * (b - a);
    let mut e = a + phi * (b - a);
    let (mut fc, mut fe) = (f(c), f(e));
    while b - a > 1e-12 {
        if fc < fe {
            b = e;
            e = c;
            fe = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = e;
            fc = fe;
            e = a + phi * (b - a);
            fe = f(e);
        }
    }
    let y = 0.5 * (a + b);
    (y, diagonal_growth_factor(y))
}

/// Certified `μ* >= (1-δ) sqrt(α*² - 1) / (2a sqrt d)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MuStarLower {
    pub d: u64,
    /// Effective `δ`; 0 for the exact-gamma pipeline.
    pub delta: f64,
    pub pipeline: Pipeline,
    pub bound: Option<f64>,
    pub validity: Vec<Gate>,
}

pub fn mu_star_lower(
    d: u64,
    spec: &DistributionSpec,
    delta: f64,
    pipeline: Pipeline,
) -> Result<MuStarLower> {
    let a = spec.require_positive_slope()?;
    let rate = exact_rate(spec, pipeline)?;
    let star = alpha_star();
    let s = star.alpha * star.alpha - 1.0;
    let df = d as f64;
    let mut gates = vec![Gate::int_ge("d>=2", d as i64, 2)];
    if let Some(lambda) = rate {
        // Gamma partial sums satisfy the Chernoff bound with δ = 0 for every d >= 2.
        let bound = all_satisfied(&gates).then(|| star.companion / (lambda * df.sqrt()));
        return Ok(MuStarLower {
            d,
            delta: 0.0,
            pipeline,
            bound,
            validity: gates,
        });
    }
    gates.push(Gate::gt("delta>0", delta, 0.0));
    gates.push(Gate::lt("delta<1", delta, 1.0));
    let eps0 = spec.eps0();
    let c = spec.c();
    let need = s / (4.0 * a * a) * eps0.powi(-4).max((8.0 * c / delta).exp()).max(1.0);
    gates.push(Gate::ge(
        "d >= (a*^2-1)/(4a^2) max(eps0^-4, e^(8C/delta), 1)",
        df,
        need,
    ));
    let lhs = (2.0 * a).sqrt() / s.powf(0.25) * df.powf(0.25) - 0.5 * df.ln();
    let rhs = (4.0 / (delta * (1.0 - delta) * s.sqrt())).ln();
    gates.push(Gate::ge(
        "sqrt(2a)/(a*^2-1)^(1/4) d^(1/4) - log(d)/2 >= log(4/(delta(1-delta)sqrt(a*^2-1)))",
        lhs,
        rhs,
    ));
    let bound = all_satisfied(&gates).then(|| (1.0 - delta) * star.companion / (a * df.sqrt()));
    Ok(MuStarLower {
        d,
        delta,
        pipeline,
        bound,
        validity: gates,
    })
}

/// Largest certified `μ*` lower bound over `deltas`.
pub fn best_mu_star_lower(
    d: u64,
    spec: &DistributionSpec,
    pipeline: Pipeline,
    deltas: &[f64],
) -> Result<MuStarLower> {
    if pipeline == Pipeline::ExactGamma {
        return mu_star_lower(d, spec, 0.0, pipeline);
    }
    best_by(
        deltas,
        |delta| mu_star_lower(d, spec, delta, pipeline),
        |r| r.bound,
    )
}
