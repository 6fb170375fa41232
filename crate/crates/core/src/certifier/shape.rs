//! Per-dimension shape verdicts and threshold search.

use serde::Serialize;

use super::{
    all_satisfied, best_lower_bound_mu, best_mu_star_lower, default_delta_grid, evaluate_upper,
    lower_bound_mu, mu_star_lower, optimize_upper, Gate, LowerBoundMu, MuStarLower, Pipeline,
    UpperCandidate, UpperGrid,
};
use crate::distributions::{expected_min, DistributionSpec, ExpectedMin};
use crate::error::{FppError, Result};

pub const CERTIFICATE_SCHEMA_VERSION: u32 = 1;

/// Relative inflation applied to a quadrature value of `E Y` before it is used as an upper bound.
pub const QUADRATURE_INFLATION: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    BallExcluded,
    CubeStrict,
    DiamondStrict,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::BallExcluded => "ball_excluded",
            Verdict::CubeStrict => "cube_strict",
            Verdict::DiamondStrict => "diamond_strict",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ball_excluded" | "ball" => Some(Verdict::BallExcluded),
            "cube_strict" | "cube" => Some(Verdict::CubeStrict),
            "diamond_strict" | "diamond" => Some(Verdict::DiamondStrict),
            _ => None,
        }
    }

    fn needs_upper(self) -> bool {
        !matches!(self, Verdict::DiamondStrict)
    }
}

/// An explicit `(δ, η, B)` evaluated alongside the grid search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UpperTuple {
    pub delta: f64,
    pub eta: f64,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShapeOptions {
    pub grid: UpperGrid,
    /// Defaults to [`Pipeline::default_for`].
    pub pipeline: Option<Pipeline>,
    /// Fixed `δ` for the `μ(e₁)` lower bound; otherwise scanned.
    pub lower_delta: Option<f64>,
    /// Fixed `δ` for the `μ*` lower bound; otherwise scanned.
    pub mustar_delta: Option<f64>,
    pub upper_tuple: Option<UpperTuple>,
    pub ball_and_cube: bool,
    pub diamond: bool,
}

impl Default for ShapeOptions {
    fn default() -> Self {
        Self {
            grid: UpperGrid::default(),
            pipeline: None,
            lower_delta: None,
            mustar_delta: None,
            upper_tuple: None,
            ball_and_cube: true,
            diamond: true,
        }
    }
}

impl ShapeOptions {
    fn only(&self, verdict: Verdict) -> Self {
        let mut o = self.clone();
        o.ball_and_cube = verdict.needs_upper();
        o.diamond = !verdict.needs_upper();
        o
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum UpperSource {
    Grid,
    Tuple,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShapeWitnesses {
    pub upper: Option<UpperCandidate>,
    pub upper_source: Option<UpperSource>,
    pub upper_evaluated: u64,
    /// Evaluation at the explicit tuple, when one was given.
    pub tuple: Option<UpperCandidate>,
    pub mu_lower: Option<LowerBoundMu>,
    pub mustar_lower: Option<MuStarLower>,
    pub expected_min: Option<ExpectedMin>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShapeCertificate {
    pub schema_version: u32,
    pub tool_version: String,
    pub d: u64,
    pub spec: String,
    pub pipeline: Pipeline,
    pub mu_upper: Option<f64>,
    pub mu_lower: Option<f64>,
    pub mustar_lower: Option<f64>,
    pub mustar_upper: Option<f64>,
    pub ball_excluded: bool,
    pub cube_strict: bool,
    pub diamond_strict: bool,
    pub witnesses: ShapeWitnesses,
    pub preconditions: Vec<Gate>,
    pub grid_spec: String,
}

impl ShapeCertificate {
    pub fn verdict(&self, v: Verdict) -> bool {
        match v {
            Verdict::BallExcluded => self.ball_excluded,
            Verdict::CubeStrict => self.cube_strict,
            Verdict::DiamondStrict => self.diamond_strict,
        }
    }
}

pub fn shape_certificate(
    d: u64,
    spec: &DistributionSpec,
    opts: &ShapeOptions,
) -> Result<ShapeCertificate> {
    spec.require_positive_slope()?;
    if d < 2 {
        return Err(FppError::InvalidArgument(
            "shape certificates need d >= 2".into(),
        ));
    }
    let pipeline = opts.pipeline.unwrap_or_else(|| Pipeline::default_for(spec));
    let deltas = default_delta_grid();
    let mut pre: Vec<Gate> = Vec::new();
    let mut w = ShapeWitnesses {
        upper: None,
        upper_source: None,
        upper_evaluated: 0,
        tuple: None,
        mu_lower: None,
        mustar_lower: None,
        expected_min: None,
    };
    let mut cert = ShapeCertificate {
        schema_version: CERTIFICATE_SCHEMA_VERSION,
        tool_version: crate::TOOL_VERSION.to_string(),
        d,
        spec: spec.id.clone(),
        pipeline,
        mu_upper: None,
        mu_lower: None,
        mustar_lower: None,
        mustar_upper: None,
        ball_excluded: false,
        cube_strict: false,
        diamond_strict: false,
        witnesses: w.clone(),
        preconditions: Vec::new(),
        grid_spec: opts.grid.summary(),
    };

    if opts.ball_and_cube {
        match optimize_upper(d, spec, &opts.grid, pipeline) {
            Ok(opt) => {
                w.upper_evaluated = opt.evaluated;
                w.upper = Some(opt.best);
                w.upper_source = Some(UpperSource::Grid);
            }
            Err(FppError::NoValidCertificate(_)) => {
                pre.push(Gate::int_ge("upper.grid-has-admissible-cell", 0, 1));
            }
            Err(e) => return Err(e),
        }
        if let Some(t) = opts.upper_tuple {
            match evaluate_upper(d, t.delta, t.eta, t.b, spec, pipeline) {
                Ok(c) => {
                    let use_tuple =
                        c.is_valid() && w.upper.as_ref().is_none_or(|g| c.value() < g.value());
                    if use_tuple {
                        w.upper = Some(c.clone());
                        w.upper_source = Some(UpperSource::Tuple);
                    }
                    w.tuple = Some(c);
                }
                Err(FppError::YOutOfRange { y, limit }) => {
                    pre.push(Gate::le("tuple.y<=min(eps0,e^-C)", y, limit).diagnostic());
                }
                Err(e) => return Err(e),
            }
        }
        if let Some(u) = &w.upper {
            pre.extend(
                u.params
                    .validity
                    .iter()
                    .cloned()
                    .map(|g| g.prefixed("mu_upper")),
            );
            cert.mu_upper = Some(u.value());
        }

        let ms = match opts.mustar_delta {
            Some(delta) => mu_star_lower(d, spec, delta, pipeline)?,
            None => best_mu_star_lower(d, spec, pipeline, &deltas)?,
        };
        pre.extend(
            ms.validity
                .iter()
                .cloned()
                .map(|g| g.prefixed("mustar_lower")),
        );
        cert.mustar_lower = ms.bound;
        w.mustar_lower = Some(ms);

        if let (Some(u), Some(l)) = (cert.mu_upper, cert.mustar_lower) {
            let gate = Gate::lt("mu_upper < mustar_lower", u, l);
            let ok = gate.satisfied && all_satisfied(&pre);
            pre.push(gate);
            cert.ball_excluded = ok;
            cert.cube_strict = ok;
        }
    }

    if opts.diamond {
        let lb = match opts.lower_delta {
            Some(delta) => lower_bound_mu(d, spec, delta, pipeline)?,
            None => best_lower_bound_mu(d, spec, pipeline, &deltas)?,
        };
        let lower_gates: Vec<Gate> = lb
            .validity
            .iter()
            .cloned()
            .map(|g| g.prefixed("mu_lower"))
            .collect();
        cert.mu_lower = lb.bound;
        w.mu_lower = Some(lb);
        let em = expected_min(spec, d)?;
        let ey = if em.closed_form {
            em.value
        } else {
            em.value * (1.0 + QUADRATURE_INFLATION)
        };
        let upper = (d as f64).sqrt() * ey;
        cert.mustar_upper = Some(upper);
        w.expected_min = Some(em);
        if let Some(l) = cert.mu_lower {
            let gate = Gate::lt(
                "mustar_upper < sqrt(d) mu_lower",
                upper,
                (d as f64).sqrt() * l,
            );
            cert.diamond_strict = gate.satisfied && all_satisfied(&lower_gates);
            pre.extend(lower_gates);
            pre.push(gate);
        } else {
            pre.extend(lower_gates);
        }
    }

    cert.witnesses = w;
    cert.preconditions = pre;
    Ok(cert)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpotCheck {
    pub d: u64,
    pub certified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdResult {
    pub verdict: Verdict,
    pub spec: String,
    pub threshold: u64,
    pub spot_checks: Vec<SpotCheck>,
    /// Spot-check rounds that failed and restarted the search above the failure.
    pub restarts: u32,
    pub evaluations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdOptions {
    pub shape: ShapeOptions,
    pub spot_checks: u32,
    pub max_d: u64,
}

impl Default for ThresholdOptions {
    fn default() -> Self {
        Self {
            shape: ShapeOptions::default(),
            spot_checks: 20,
            max_d: 10_000_000,
        }
    }
}

const MAX_RESTARTS: u32 = 8;

/// Smallest `d` certified by doubling then bisection, confirmed at larger spot-check dimensions.
pub fn find_threshold(
    spec: &DistributionSpec,
    verdict: Verdict,
    opts: &ThresholdOptions,
) -> Result<ThresholdResult> {
    let shape = opts.shape.only(verdict);
    let mut evaluations = 0u64;
    let mut certified = |d: u64| -> Result<bool> {
        evaluations += 1;
        Ok(shape_certificate(d, spec, &shape)?.verdict(verdict))
    };
    let max_d = opts.max_d.max(2);
    // Invariant: `lo` is not certified (d = 1 never is).
    let mut lo = 1u64;
    let mut restarts = 0;
    loop {
        let mut hi = (lo * 2).max(2).min(max_d);
        while !certified(hi)? {
            if hi >= max_d {
                return Err(FppError::ThresholdNotFound(max_d));
            }
            lo = hi;
            hi = (hi * 2).min(max_d);
        }
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if certified(mid)? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let mut spots = Vec::new();
        let mut failure = None;
        for d in spot_dimensions(hi, opts.spot_checks, max_d) {
            let ok = certified(d)?;
            spots.push(SpotCheck { d, certified: ok });
            if !ok && failure.is_none() {
                failure = Some(d);
            }
        }
        match failure {
            None => {
                return Ok(ThresholdResult {
                    verdict,
                    spec: spec.id.clone(),
                    threshold: hi,
                    spot_checks: spots,
                    restarts,
                    evaluations,
                })
            }
            Some(d) if restarts < MAX_RESTARTS && d < max_d => {
                restarts += 1;
                lo = d;
            }
            Some(_) => return Err(FppError::ThresholdNotFound(max_d)),
        }
    }
}

/// `count` distinct dimensions above `base`, geometrically spread up to `10 base`.
pub fn spot_dimensions(base: u64, count: u32, max_d: u64) -> Vec<u64> {
    let mut out: Vec<u64> = Vec::with_capacity(count as usize);
    for k in 1..=count as u64 {
        let geo = (base as f64 * (10f64.powf(k as f64 / count as f64) - 1.0)).round() as u64;
        let d = (base + geo.max(k)).min(max_d);
        if d > base && out.last().is_none_or(|&p| d > p) {
            out.push(d);
        }
    }
    out
}
