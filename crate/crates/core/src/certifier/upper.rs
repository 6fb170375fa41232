//! Upper bound on `μ(e₁)` through the second-moment count of cheap paths.

use rayon::prelude::*;
use serde::Serialize;

use super::{all_satisfied, default_path_length, BoundParams, Gate, Pipeline};
use crate::distributions::DistributionSpec;
use crate::error::{FppError, Result};
use crate::special::{ln_binomial, ln_falling, ln_gamma_cdf, CompensatedSum};

/// Quantities fixed by `(d, δ, η, a)` alone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometry {
    pub log_d: f64,
    pub m: i64,
    pub p: i64,
    pub x: f64,
}

pub fn geometry(d: u64, delta: f64, eta: f64, a: f64) -> Geometry {
    let df = d as f64;
    let log_d = df.ln();
    let m = (df / (delta.powf(1.0 + eta) * log_d)).floor();
    // Saturates for log d = 0, which the p >= 2 gate rejects.
    let m = if m.is_finite() {
        m.min(i64::MAX as f64) as i64
    } else {
        i64::MAX
    };
    let p = (d as i64).saturating_sub(m);
    let x = log_d / (2.0 * (1.0 - delta) * a * df);
    Geometry { log_d, m, p, x }
}

/// `2nC/(|log x| - C)`.
pub fn f_with_n(n: u32, x: f64, c: f64) -> Result<f64> {
    let lx = x.ln().abs();
    if !(lx > c) {
        return Err(FppError::FDenominator { abs_log_x: lx, c });
    }
    if c == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * n as f64 * c / (lx - c))
}

/// `f` with `n = floor(log d)` and `x = log d / (2(1-δ)ad)`.
#[allow(non_snake_case)]
pub fn f_aC(delta: f64, d: u64, a: f64, c: f64) -> Result<f64> {
    let x = (d as f64).ln() / (2.0 * (1.0 - delta) * a * d as f64);
    f_with_n(default_path_length(d), x, c)
}

/// `(n-1)(log(2p-1) + 1)/(2p-1-log(2p-1))`; requires `p >= 2`.
pub fn g_with_n(n: u32, p: i64) -> f64 {
    let q = (2 * p - 1) as f64;
    (n as f64 - 1.0) * (q.ln() + 1.0) / (q - q.ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GValue {
    pub exact: f64,
    /// Closed-form relaxation in `d` and `δ^{1+η}` only; `inf` when its denominator is not positive.
    pub display: f64,
}

pub fn g_eta(delta: f64, eta: f64, d: u64) -> Result<GValue> {
    let geo = geometry(d, delta, eta, 1.0);
    if geo.p < 2 {
        return Err(FppError::SmallP(geo.p));
    }
    let exact = g_with_n(default_path_length(d), geo.p);
    let df = d as f64;
    let ld = geo.log_d;
    let den = 2.0 * df * (1.0 - 1.0 / (delta.powf(1.0 + eta) * ld)) - 1.0 - (2.0 * df).ln();
    let display = if den > 0.0 {
        (ld * ld + std::f64::consts::LN_2 * ld) / den
    } else {
        f64::INFINITY
    };
    Ok(GValue { exact, display })
}

/// The five correction terms of the pair-overlap factor at overlap `l`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OverlapTerms {
    pub i: f64,
    pub ii: f64,
    pub iii: f64,
    pub iv: f64,
    pub v: f64,
}

impl OverlapTerms {
    /// `(1 + I) + II + III + IV + V`.
    pub fn total(&self) -> f64 {
        let mut acc = CompensatedSum::new();
        for t in [1.0, self.i, self.ii, self.iii, self.iv, self.v] {
            acc.add(t);
        }
        acc.value()
    }
}

// C(r, K-1) [C(n-1, K) K!]^2 / p^K summed over K in k_lo..=k_hi.
fn bubble_sum(r: u64, n: u64, p: f64, k_lo: u64, k_hi: u64) -> f64 {
    let lp = p.ln();
    let mut acc = CompensatedSum::new();
    for k in k_lo..=k_hi {
        let ln_term = ln_binomial(r, k - 1) + 2.0 * ln_falling(n - 1, k) - k as f64 * lp;
        acc.add(ln_term.exp());
    }
    acc.value()
}

/// Terms of the overlap factor for `n`-step pairs in `p` transverse directions.
pub fn overlap_terms(n: u32, p: u64, l: u32) -> OverlapTerms {
    assert!(
        n >= 2 && l >= 1 && l < n,
        "overlap terms need 1 <= l <= n-1"
    );
    assert!(p >= 1, "overlap terms need p >= 1");
    let nf = n as f64;
    let lf = l as f64;
    let pf = p as f64;
    let tp = 2.0 * pf;
    let (n64, l64) = (n as u64, l as u64);

    let i = (nf - lf - 1.0).powi(2) / pf + 2.0 * pf * bubble_sum(l64 - 1, n64, pf, 2, l64);

    let mut bubbles = CompensatedSum::new();
    bubbles.add(2.0 * ((2.0 * (nf - lf) - 2.0) / tp).powi(2));
    let top = n - l - 1;
    for m1 in 1..=top {
        for m2 in 1..=top {
            let s = (m1 + m2) as f64;
            bubbles.add(((s - 2.0) / tp).powi(2) * ((2.0 * nf - 2.0 * lf - s - 2.0) / tp).powi(2));
        }
    }
    bubbles.add((nf - lf - 1.0).powi(2) / (tp * tp));
    let ii = tp * bubbles.value();

    let iii = if l >= 3 {
        let w = nf - lf;
        let inner = 6.0 * ((w - 1.0) / tp).powi(2)
            + 2.0 * (w - 1.0).powi(2) * (w - 2.0).powi(4) / tp.powi(4)
            + 4.0 * (nf - 1.0).powi(2) * w.powi(2) / tp.powi(3);
        tp * (lf - 2.0) * inner
    } else {
        0.0
    };

    let iv = if l >= 4 {
        let w = nf - lf;
        let choose = ln_binomial(l64 - 2, 2).exp();
        tp * choose * (2.0 * w * w / (tp * tp) + 8.0 * (nf - 1.0).powi(4) * w * w / tp.powi(3))
    } else {
        0.0
    };

    let v = if l >= 4 {
        tp * tp * bubble_sum(l64 - 2, n64, pf, 4, l64)
    } else {
        0.0
    };

    OverlapTerms { i, ii, iii, iv, v }
}

/// `(1 + I) + II + III + IV + V`; 1 at `l = 0`.
pub fn overlap_correction(n: u32, p: u64, l: u32) -> f64 {
    if l == 0 {
        return 1.0;
    }
    overlap_terms(n, p, l).total()
}

/// [`overlap_correction`] restricted to `l n^2 / p < 1`.
pub fn overlap_correction_checked(n: u32, p: u64, l: u32) -> Result<f64> {
    let ratio = l as f64 * (n as f64).powi(2) / p as f64;
    if !(ratio < 1.0) {
        return Err(FppError::SeriesDivergence(ratio));
    }
    Ok(overlap_correction(n, p, l))
}

/// A constant `A` with `E N^2 <= A (E N)^2`, and the gates it rests on.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdmissibleA {
    /// `inf` when any binding gate fails.
    pub value: f64,
    pub pipeline: Pipeline,
    pub n: u32,
    pub p: i64,
    pub m: i64,
    pub x: f64,
    /// Zero in the exact-gamma pipeline.
    pub f: f64,
    pub g: f64,
    /// Geometric ratio of the generic pipeline.
    pub ratio: f64,
    pub inv_first_moment: f64,
    /// The overlap series multiplying `e^{f+2g}` (generic) or `e^{2g}` (exact gamma).
    pub overlap_sum: f64,
    /// Generic pipeline with the exponent written as `f g^2` instead of `f + 2g`.
    pub a_alt_fg2: Option<f64>,
    pub validity: Vec<Gate>,
}

/// `A` minimized over the path length `n` in `[2, floor(log d)]`.
pub fn admissible_a(
    d: u64,
    delta: f64,
    eta: f64,
    spec: &DistributionSpec,
    pipeline: Pipeline,
) -> Result<AdmissibleA> {
    let n_max = default_path_length(d);
    let mut best: Option<AdmissibleA> = None;
    for n in 2..=n_max.max(2) {
        let cand = admissible_a_at_n(d, delta, eta, spec, pipeline, n)?;
        let better = match &best {
            None => true,
            Some(b) => cand.value < b.value,
        };
        if better {
            best = Some(cand);
        }
    }
    let best = best.expect("at least one path length evaluated");
    if best.value.is_finite() {
        return Ok(best);
    }
    // Report the gates at the default path length when nothing is admissible.
    admissible_a_at_n(d, delta, eta, spec, pipeline, n_max.max(2))
}

/// `A` at a fixed path length `n`.
pub fn admissible_a_at_n(
    d: u64,
    delta: f64,
    eta: f64,
    spec: &DistributionSpec,
    pipeline: Pipeline,
    n: u32,
) -> Result<AdmissibleA> {
    let a = spec.require_positive_slope()?;
    let rate = match pipeline {
        Pipeline::ExactGamma => Some(spec.exponential_rate().ok_or_else(|| {
            FppError::UnsupportedRegime(format!(
                "exact-gamma pipeline needs an exponential law, got {}",
                spec.id
            ))
        })?),
        Pipeline::Generic => None,
    };
    let geo = geometry(d, delta, eta, a);
    let mut gates = vec![
        Gate::gt("delta>0", delta, 0.0),
        Gate::lt("delta<1", delta, 1.0),
        Gate::gt("eta>0", eta, 0.0),
        Gate::int_ge("n>=2", n as i64, 2),
        Gate::int_ge("n<=floor(log d)", default_path_length(d) as i64, n as i64),
        Gate::int_ge("p>=2", geo.p, 2),
    ];
    let mut out = AdmissibleA {
        value: f64::INFINITY,
        pipeline,
        n,
        p: geo.p,
        m: geo.m,
        x: geo.x,
        f: 0.0,
        g: f64::NAN,
        ratio: f64::NAN,
        inv_first_moment: f64::NAN,
        overlap_sum: f64::NAN,
        a_alt_fg2: None,
        validity: Vec::new(),
    };
    if !all_satisfied(&gates) {
        out.validity = gates;
        return Ok(out);
    }
    let p = geo.p as u64;
    let pf = p as f64;
    let x = geo.x;
    let nf = n as f64;
    gates.push(Gate::lt(
        "(n-1) n^2 / p < 1",
        (nf - 1.0) * nf * nf / pf,
        1.0,
    ));

    let g = g_with_n(n, geo.p);
    out.g = g;
    let q = 2.0 * pf - 1.0;
    let ln_paths = (nf - 1.0) * (q - q.ln()).ln();

    let factors: Vec<f64> = (1..n).map(|l| overlap_correction(n, p, l)).collect();

    match rate {
        None => {
            let c = spec.c();
            let eps0 = spec.eps0();
            gates.push(Gate::le("x<=eps0", x, eps0));
            gates.push(Gate::gt("|log x|>C", x.ln().abs(), c));
            gates.push(Gate::lt("x<1", x, 1.0));
            let den = 1.0 - 1.0 / (delta.powf(1.0 + eta) * geo.log_d);
            gates.push(Gate::gt("ratio-denominator>0", den, 0.0));
            let ratio = (1.0 - delta) / den;
            out.ratio = ratio;
            gates.push(Gate::lt("geometric-ratio<1", ratio, 1.0));
            if !all_satisfied(&gates) {
                out.validity = gates;
                return Ok(out);
            }
            let f = f_with_n(n, x, c)?;
            out.f = f;
            let corr = if c == 0.0 { 0.0 } else { c / x.ln().abs() };
            let ln_en = ln_paths + nf * (a * x).ln() - crate::special::ln_factorial(n as u64)
                + nf * (-corr).ln_1p();
            let en = ln_en.exp();
            gates.push(Gate::gt("first-moment-lower-bound>0", en, 0.0));
            let mut series = CompensatedSum::new();
            series.add(1.0);
            for (k, fac) in factors.iter().enumerate() {
                series.add(ratio.powi(k as i32 + 1) * fac);
            }
            let series = series.value();
            out.overlap_sum = series;
            let inv_en = (-ln_en).exp();
            out.inv_first_moment = inv_en;
            let value = 1.0 + (f + 2.0 * g).exp() * series + inv_en;
            out.a_alt_fg2 = Some(1.0 + (f * g * g).exp() * series + inv_en);
            out.value = value;
        }
        Some(lambda) => {
            let t = lambda * x;
            let ln_full = ln_gamma_cdf(n, t);
            let ln_en = ln_paths + ln_full;
            gates.push(Gate::gt("first-moment-lower-bound>0", ln_en.exp(), 0.0));
            let ln_tp = (2.0 * pf).ln();
            let mut series = CompensatedSum::new();
            for (k, fac) in factors.iter().enumerate() {
                let l = k as u32 + 1;
                let ln_ratio = ln_gamma_cdf(n - l, t) - ln_full;
                series.add((ln_ratio - l as f64 * ln_tp).exp() * fac);
            }
            let series = series.value();
            out.overlap_sum = series;
            let inv_en = (-ln_en).exp();
            out.inv_first_moment = inv_en;
            out.value = 1.0 + inv_en + (2.0 * g).exp() * series;
        }
    }
    gates.push(Gate::finite("A<inf", out.value));
    if !all_satisfied(&gates) {
        out.value = f64::INFINITY;
    }
    out.validity = gates;
    Ok(out)
}

/// The bound `Υ(A, B, δ, η)` split into its two terms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UpsilonValue {
    pub value: f64,
    /// `(log d / (2ad)) (Bδ + 1/(1-δ))`.
    pub first_term: f64,
    pub tail_term: f64,
    pub tail_base: f64,
    /// `m - 1` independent first-edge events.
    pub tail_exponent: i64,
    pub y: f64,
    pub warning: Option<String>,
    pub validity: Vec<Gate>,
}

/// `Υ` at `(δ, η, B)` with a given admissible constant `a_const`.
pub fn upsilon(
    d: u64,
    delta: f64,
    eta: f64,
    b: f64,
    a_const: f64,
    spec: &DistributionSpec,
    pipeline: Pipeline,
) -> Result<UpsilonValue> {
    let a = spec.require_positive_slope()?;
    let geo = geometry(d, delta, eta, a);
    let df = d as f64;
    let y = b * delta * geo.log_d / (2.0 * a * df);
    let mut gates = vec![
        Gate::gt("B>0", b, 0.0),
        Gate::gt("y>0", y, 0.0),
        Gate::finite("A<inf", a_const),
        Gate::ge("A>=1", a_const, 1.0),
        Gate::int_ge("p>=1", geo.p, 1),
    ];
    let hit = match pipeline {
        Pipeline::Generic => {
            let c = spec.c();
            let limit = spec.eps0().min((-c).exp());
            if !(y <= limit) {
                return Err(FppError::YOutOfRange { y, limit });
            }
            gates.push(Gate::le("y<=min(eps0,e^-C)", y, limit));
            let corr = if c == 0.0 { 0.0 } else { c / y.ln().abs() };
            a * y * (1.0 - corr)
        }
        Pipeline::ExactGamma => {
            let lambda = spec.exponential_rate().ok_or_else(|| {
                FppError::UnsupportedRegime(format!(
                    "exact-gamma pipeline needs an exponential law, got {}",
                    spec.id
                ))
            })?;
            -(-lambda * y).exp_m1()
        }
    };
    let first_term = geo.log_d / (2.0 * a * df) * (b * delta + 1.0 / (1.0 - delta));
    let q = if a_const.is_finite() {
        (hit / a_const).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let tail_base = 1.0 - q;
    let tail_exponent = geo.m.saturating_sub(1).max(0);
    let factor = if q >= 1.0 {
        0.0
    } else {
        (tail_exponent as f64 * (-q).ln_1p()).exp()
    };
    let tail_term = factor * spec.mean;
    let warning = (tail_base >= 1.0).then(|| "tail base >= 1; bound is at least E tau".to_string());
    Ok(UpsilonValue {
        value: first_term + tail_term,
        first_term,
        tail_term,
        tail_base,
        tail_exponent,
        y,
        warning,
        validity: gates,
    })
}

/// Parameter grid for [`optimize_upper`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UpperGrid {
    pub deltas: Vec<f64>,
    pub bs: Vec<f64>,
    pub etas: Vec<f64>,
    /// One pass of a 10x finer local grid around the incumbent.
    pub refine: bool,
}

impl Default for UpperGrid {
    fn default() -> Self {
        Self {
            deltas: (1..=99).map(|k| k as f64 / 100.0).collect(),
            bs: (0..=60)
                .map(|i| 0.1 * 1000f64.powf(i as f64 / 60.0))
                .collect(),
            etas: vec![1e-3, 1e-2, 1e-1],
            refine: true,
        }
    }
}

impl UpperGrid {
    pub fn with_etas(mut self, etas: Vec<f64>) -> Self {
        self.etas = etas;
        self
    }

    pub fn summary(&self) -> String {
        let span = |v: &[f64]| match (v.first(), v.last()) {
            (Some(a), Some(b)) => format!("[{a}, {b}] x{}", v.len()),
            _ => "[] x0".to_string(),
        };
        format!(
            "delta {}; B {}; eta {:?}; refine {}",
            span(&self.deltas),
            span(&self.bs),
            self.etas,
            self.refine
        )
    }
}

/// A fully evaluated upper-bound candidate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UpperCandidate {
    pub upsilon: UpsilonValue,
    pub admissible: AdmissibleA,
    pub params: BoundParams,
}

impl UpperCandidate {
    pub fn value(&self) -> f64 {
        self.upsilon.value
    }

    pub fn is_valid(&self) -> bool {
        all_satisfied(&self.params.validity)
    }

    fn key(&self) -> (f64, f64, f64, f64) {
        (
            self.upsilon.value,
            self.params.delta,
            self.params.eta,
            self.params.b,
        )
    }
}

fn better(a: &UpperCandidate, b: &UpperCandidate) -> bool {
    let (ka, kb) = (a.key(), b.key());
    ka.0.total_cmp(&kb.0)
        .then(ka.1.total_cmp(&kb.1))
        .then(ka.2.total_cmp(&kb.2))
        .then(ka.3.total_cmp(&kb.3))
        .is_lt()
}

fn assemble(
    d: u64,
    delta: f64,
    eta: f64,
    b: f64,
    adm: &AdmissibleA,
    ups: UpsilonValue,
) -> UpperCandidate {
    let mut validity: Vec<Gate> = adm
        .validity
        .iter()
        .cloned()
        .map(|g| g.prefixed("A"))
        .collect();
    validity.extend(ups.validity.iter().cloned().map(|g| g.prefixed("upsilon")));
    let params = BoundParams {
        d,
        delta,
        eta,
        b,
        n: adm.n,
        x: adm.x,
        p: adm.p,
        m: adm.m,
        y: ups.y,
        a_const: adm.value,
        pipeline: adm.pipeline,
        validity,
    };
    UpperCandidate {
        upsilon: ups,
        admissible: adm.clone(),
        params,
    }
}

/// `Υ` at one explicit `(δ, η, B)` with `A` from [`admissible_a`].
pub fn evaluate_upper(
    d: u64,
    delta: f64,
    eta: f64,
    b: f64,
    spec: &DistributionSpec,
    pipeline: Pipeline,
) -> Result<UpperCandidate> {
    let adm = admissible_a(d, delta, eta, spec, pipeline)?;
    let ups = upsilon(d, delta, eta, b, adm.value, spec, pipeline)?;
    Ok(assemble(d, delta, eta, b, &adm, ups))
}

/// Result of the grid search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UpperOptimum {
    pub best: UpperCandidate,
    pub evaluated: u64,
}

// Best valid candidate over B for one (δ, η) cell.
fn best_in_cell(
    d: u64,
    delta: f64,
    eta: f64,
    bs: &[f64],
    spec: &DistributionSpec,
    pipeline: Pipeline,
) -> Result<(Option<UpperCandidate>, u64)> {
    let adm = admissible_a(d, delta, eta, spec, pipeline)?;
    if !adm.value.is_finite() {
        return Ok((None, 1));
    }
    let mut best: Option<UpperCandidate> = None;
    let mut count = 1;
    for &b in bs {
        count += 1;
        let ups = match upsilon(d, delta, eta, b, adm.value, spec, pipeline) {
            Ok(u) => u,
            Err(FppError::YOutOfRange { .. }) => continue,
            Err(e) => return Err(e),
        };
        let cand = assemble(d, delta, eta, b, &adm, ups);
        if !cand.is_valid() {
            continue;
        }
        if best.as_ref().is_none_or(|b| better(&cand, b)) {
            best = Some(cand);
        }
    }
    Ok((best, count))
}

fn reduce(cells: Vec<(Option<UpperCandidate>, u64)>) -> (Option<UpperCandidate>, u64) {
    let mut best: Option<UpperCandidate> = None;
    let mut count = 0;
    for (cand, c) in cells {
        count += c;
        if let Some(cand) = cand {
            if best.as_ref().is_none_or(|b| better(&cand, b)) {
                best = Some(cand);
            }
        }
    }
    (best, count)
}

/// Minimize `Υ` over the grid; the result does not depend on the thread count.
pub fn optimize_upper(
    d: u64,
    spec: &DistributionSpec,
    grid: &UpperGrid,
    pipeline: Pipeline,
) -> Result<UpperOptimum> {
    spec.require_positive_slope()?;
    let cells: Vec<(f64, f64)> = grid
        .etas
        .iter()
        .flat_map(|&eta| grid.deltas.iter().map(move |&delta| (delta, eta)))
        .collect();
    let results: Result<Vec<_>> = cells
        .par_iter()
        .map(|&(delta, eta)| best_in_cell(d, delta, eta, &grid.bs, spec, pipeline))
        .collect();
    let (mut best, mut evaluated) = reduce(results?);
    let Some(incumbent) = best.clone() else {
        return Err(FppError::NoValidCertificate(d));
    };

    if grid.refine {
        let delta_step = min_gap(&grid.deltas).unwrap_or(0.01) / 10.0;
        let log_b_step = min_log_gap(&grid.bs).unwrap_or(0.05) / 10.0;
        let p0 = &incumbent.params;
        let deltas: Vec<f64> = (-10..=10)
            .map(|k| round12(p0.delta + k as f64 * delta_step))
            .filter(|&v| v > 0.0 && v < 1.0)
            .collect();
        let bs: Vec<f64> = (-10..=10)
            .map(|k| p0.b * (k as f64 * log_b_step).exp())
            .collect();
        let eta = p0.eta;
        let results: Result<Vec<_>> = deltas
            .par_iter()
            .map(|&delta| best_in_cell(d, delta, eta, &bs, spec, pipeline))
            .collect();
        let (local, count) = reduce(results?);
        evaluated += count;
        if let Some(local) = local {
            if better(&local, best.as_ref().expect("incumbent")) {
                best = Some(local);
            }
        }
    }
    Ok(UpperOptimum {
        best: best.expect("incumbent"),
        evaluated,
    })
}

// Keeps refined grid points free of accumulated binary drift.
fn round12(v: f64) -> f64 {
    (v * 1e12).round() / 1e12
}

fn min_gap(v: &[f64]) -> Option<f64> {
    v.windows(2)
        .map(|w| (w[1] - w[0]).abs())
        .filter(|g| *g > 0.0)
        .min_by(f64::total_cmp)
}

fn min_log_gap(v: &[f64]) -> Option<f64> {
    v.windows(2)
        .map(|w| (w[1] / w[0]).ln().abs())
        .filter(|g| *g > 0.0)
        .min_by(f64::total_cmp)
}
