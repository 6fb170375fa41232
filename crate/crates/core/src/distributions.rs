//! Edge-weight laws, their small-x constants and minimum-of-d statistics.
//!
//! A law is described near zero by `(a, C, eps0)` with
//! `|F(x)/x - a| <= C/|log x|` for all `x` in `(0, eps0]`.

use serde::Serialize;

use crate::error::{FppError, Result};
use crate::special::{adaptive_simpson, compensated_sum, ln_factorial};

/// Points of the grid used to verify the small-x constants.
pub const SMALL_X_GRID_POINTS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Law {
    Exponential {
        rate: f64,
    },
    Uniform {
        upper: f64,
    },
    Shifted {
        offset: f64,
        base: Box<Law>,
    },
    Deterministic {
        value: f64,
    },
    /// Piecewise-linear CDF through `(x, F(x))` breakpoints.
    Custom {
        table: Vec<(f64, f64)>,
    },
}

/// Small-x slope `a`; `Infinite` marks an atom (or faster than linear growth) at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalSlope {
    Finite(f64),
    Infinite,
}

impl LocalSlope {
    pub fn finite_positive(self) -> Option<f64> {
        match self {
            LocalSlope::Finite(a) if a > 0.0 => Some(a),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SmallX {
    pub a: LocalSlope,
    pub c: f64,
    pub eps0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistributionSpec {
    pub id: String,
    pub law: Law,
    pub small_x: SmallX,
    pub mean: f64,
}

impl Law {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(FppError::InvalidDistribution(m.to_string()));
        match self {
            Law::Exponential { rate } if !(rate.is_finite() && *rate > 0.0) => {
                bad("rate must be positive")
            }
            Law::Uniform { upper } if !(upper.is_finite() && *upper > 0.0) => {
                bad("upper must be positive")
            }
            Law::Deterministic { value } if !(value.is_finite() && *value >= 0.0) => {
                bad("value must be nonnegative")
            }
            Law::Shifted { offset, base } => {
                if !(offset.is_finite() && *offset >= 0.0) {
                    return bad("offset must be nonnegative");
                }
                base.validate()
            }
            Law::Custom { table } => validate_table(table),
            _ => Ok(()),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        match self {
            Law::Exponential { rate } => -(-rate * x).exp_m1(),
            Law::Uniform { upper } => (x / upper).min(1.0),
            Law::Shifted { offset, base } => {
                if x < *offset {
                    0.0
                } else {
                    base.cdf(x - offset)
                }
            }
            Law::Deterministic { value } => {
                if x >= *value {
                    1.0
                } else {
                    0.0
                }
            }
            Law::Custom { table } => custom_cdf(table, x),
        }
    }

    /// P(tau > x).
    pub fn survival(&self, x: f64) -> f64 {
        match self {
            Law::Exponential { rate } if x >= 0.0 => (-rate * x).exp(),
            Law::Shifted { offset, base } if x >= *offset => base.survival(x - offset),
            _ => 1.0 - self.cdf(x),
        }
    }

    /// Generalized inverse `inf{x : F(x) >= u}` for `u` in `[0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        match self {
            Law::Exponential { rate } => -(-u).ln_1p() / rate,
            Law::Uniform { upper } => u * upper,
            Law::Shifted { offset, base } => offset + base.quantile(u),
            Law::Deterministic { value } => *value,
            Law::Custom { table } => custom_quantile(table, u),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Law::Exponential { rate } => 1.0 / rate,
            Law::Uniform { upper } => 0.5 * upper,
            Law::Shifted { offset, base } => offset + base.mean(),
            Law::Deterministic { value } => *value,
            Law::Custom { table } => compensated_sum(
                table
                    .windows(2)
                    .map(|w| (w[1].0 - w[0].0) * (1.0 - 0.5 * (w[0].1 + w[1].1))),
            ),
        }
    }

    /// Points where the CDF is not smooth; quadrature splits there.
    fn breakpoints(&self) -> Vec<f64> {
        match self {
            Law::Exponential { .. } => vec![0.0],
            Law::Uniform { upper } => vec![0.0, *upper],
            Law::Shifted { offset, base } => {
                base.breakpoints().into_iter().map(|b| b + offset).collect()
            }
            Law::Deterministic { value } => vec![*value],
            Law::Custom { table } => table.iter().map(|p| p.0).collect(),
        }
    }

    /// Right end of the support, if finite.
    fn support_max(&self) -> Option<f64> {
        match self {
            Law::Exponential { .. } => None,
            Law::Uniform { upper } => Some(*upper),
            Law::Shifted { offset, base } => base.support_max().map(|m| m + offset),
            Law::Deterministic { value } => Some(*value),
            Law::Custom { table } => table.last().map(|p| p.0),
        }
    }

    fn canonical_id(&self) -> String {
        match self {
            Law::Exponential { rate } => format!("exponential:{rate}"),
            Law::Uniform { upper } => format!("uniform:0:{upper}"),
            Law::Shifted { offset, base } => format!("shifted:{offset}:{}", base.canonical_id()),
            Law::Deterministic { value } => format!("deterministic:{value}"),
            Law::Custom { table } => {
                let pts: Vec<String> = table.iter().map(|(x, f)| format!("{x}/{f}")).collect();
                format!("custom:{}", pts.join(","))
            }
        }
    }
}

fn validate_table(table: &[(f64, f64)]) -> Result<()> {
    let bad = |m: &str| Err(FppError::InvalidDistribution(m.to_string()));
    if table.len() < 2 {
        return bad("custom table needs at least two breakpoints");
    }
    for w in table.windows(2) {
        if !(w[1].0 > w[0].0) || w[1].1 < w[0].1 {
            return bad("custom table must have increasing x and non-decreasing F");
        }
    }
    if table
        .iter()
        .any(|p| !p.0.is_finite() || !(0.0..=1.0).contains(&p.1))
    {
        return bad("custom table values must be finite with F in [0, 1]");
    }
    if table[0].0 < 0.0 {
        return bad("custom table must not extend below 0");
    }
    if table.last().map(|p| p.1) != Some(1.0) {
        return bad("custom table must end at F = 1");
    }
    Ok(())
}

fn custom_cdf(table: &[(f64, f64)], x: f64) -> f64 {
    if x < table[0].0 {
        return 0.0;
    }
    let i = table.partition_point(|p| p.0 <= x);
    if i >= table.len() {
        return 1.0;
    }
    let (x0, f0) = table[i - 1];
    let (x1, f1) = table[i];
    f0 + (f1 - f0) * (x - x0) / (x1 - x0)
}

fn custom_quantile(table: &[(f64, f64)], u: f64) -> f64 {
    if u <= table[0].1 {
        return table[0].0;
    }
    // First breakpoint with F >= u; the segment before it is strictly increasing.
    let i = table.partition_point(|p| p.1 < u);
    let i = i.min(table.len() - 1);
    let (x0, f0) = table[i - 1];
    let (x1, f1) = table[i];
    (x0 + (x1 - x0) * (u - f0) / (f1 - f0)).clamp(x0, x1)
}

/// Small-x constants for a law, verified on a dense grid.
pub fn small_x_params(law: &Law) -> Result<SmallX> {
    let declared = match law {
        Law::Exponential { rate } => SmallX {
            a: LocalSlope::Finite(*rate),
            // |F(x)/x - rate| <= rate^2 x/2 and x|log x| <= 0.231 on (0, 0.1].
            c: 0.5 * rate.powi(2).max(1.0),
            eps0: 0.1,
        },
        Law::Uniform { upper } => SmallX {
            a: LocalSlope::Finite(1.0 / upper),
            c: 0.0,
            eps0: *upper,
        },
        Law::Shifted { offset, base } if *offset > 0.0 => {
            if base.cdf(0.0) > 0.0 {
                // Atom of the base at 0 becomes an atom at `offset`; F still vanishes below it.
                SmallX {
                    a: LocalSlope::Finite(0.0),
                    c: 0.0,
                    eps0: 0.5 * offset,
                }
            } else {
                SmallX {
                    a: LocalSlope::Finite(0.0),
                    c: 0.0,
                    eps0: *offset,
                }
            }
        }
        Law::Shifted { base, .. } => return small_x_params(base),
        Law::Deterministic { value } if *value > 0.0 => SmallX {
            a: LocalSlope::Finite(0.0),
            c: 0.0,
            eps0: 0.5 * value,
        },
        Law::Deterministic { .. } => SmallX {
            a: LocalSlope::Infinite,
            c: 0.0,
            eps0: 1.0,
        },
        Law::Custom { table } => {
            if table[0].0 != 0.0 {
                return Err(FppError::UnverifiableLocalBehavior(
                    "custom table must start at x = 0 to determine the behavior near 0".into(),
                ));
            }
            if table[0].1 > 0.0 {
                SmallX {
                    a: LocalSlope::Infinite,
                    c: 0.0,
                    eps0: table[1].0,
                }
            } else {
                let (x1, f1) = table[1];
                SmallX {
                    a: LocalSlope::Finite(f1 / x1),
                    c: 0.0,
                    eps0: x1,
                }
            }
        }
    };
    let LocalSlope::Finite(a) = declared.a else {
        return Ok(declared);
    };
    if a == 0.0 {
        return Ok(declared);
    }
    // Largest dyadic shrink of eps0 on which the declared constants hold.
    let mut eps0 = declared.eps0;
    for _ in 0..60 {
        if small_x_invariant_holds(law, a, declared.c, eps0) {
            return Ok(SmallX { eps0, ..declared });
        }
        eps0 *= 0.5;
    }
    Err(FppError::UnverifiableLocalBehavior(format!(
        "no interval on which |F(x)/x - {a}| <= {}/|log x|",
        declared.c
    )))
}

/// Checks `|F(x)/x - a| <= C/|log x|` on `SMALL_X_GRID_POINTS` points of `(0, eps0]`.
pub fn small_x_invariant_holds(law: &Law, a: f64, c: f64, eps0: f64) -> bool {
    (1..=SMALL_X_GRID_POINTS).all(|i| {
        let x = eps0 * i as f64 / SMALL_X_GRID_POINTS as f64;
        let lhs = (law.cdf(x) / x - a).abs();
        let lx = x.ln().abs();
        let rhs = if c == 0.0 { 0.0 } else { c / lx };
        lhs <= rhs + 1e-12 * a
    })
}

impl DistributionSpec {
    pub fn new(law: Law) -> Result<Self> {
        law.validate()?;
        let small_x = small_x_params(&law)?;
        let mean = law.mean();
        if !mean.is_finite() {
            return Err(FppError::InvalidDistribution("mean must be finite".into()));
        }
        Ok(Self {
            id: law.canonical_id(),
            law,
            small_x,
            mean,
        })
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        Self::new(Law::Exponential { rate })
    }

    pub fn uniform(upper: f64) -> Result<Self> {
        Self::new(Law::Uniform { upper })
    }

    pub fn deterministic(value: f64) -> Result<Self> {
        Self::new(Law::Deterministic { value })
    }

    pub fn shifted(offset: f64, base: Law) -> Result<Self> {
        Self::new(Law::Shifted {
            offset,
            base: Box::new(base),
        })
    }

    /// Parses `exponential:1.0`, `uniform:0:1`, `shifted:0.5:exponential:1.0`,
    /// `deterministic:1.0` or `custom:0/0,1/0.5,3/1`.
    pub fn parse(text: &str) -> Result<Self> {
        Self::new(parse_law(text.trim())?)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.law.cdf(x)
    }

    pub fn survival(&self, x: f64) -> f64 {
        self.law.survival(x)
    }

    pub fn quantile(&self, u: f64) -> f64 {
        self.law.quantile(u)
    }

    pub fn a(&self) -> LocalSlope {
        self.small_x.a
    }

    pub fn c(&self) -> f64 {
        self.small_x.c
    }

    pub fn eps0(&self) -> f64 {
        self.small_x.eps0
    }

    /// `a` when it is finite and positive, the regime every certificate needs.
    pub fn require_positive_slope(&self) -> Result<f64> {
        self.small_x.a.finite_positive().ok_or_else(|| {
            FppError::UnsupportedRegime(format!(
                "{} has a = {:?}; need 0 < a < inf",
                self.id, self.small_x.a
            ))
        })
    }

    /// Rate when the law is exactly exponential.
    pub fn exponential_rate(&self) -> Option<f64> {
        match self.law {
            Law::Exponential { rate } => Some(rate),
            _ => None,
        }
    }
}

fn parse_num(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| FppError::InvalidDistribution(format!("not a number: {s:?}")))
}

fn parse_law(text: &str) -> Result<Law> {
    let (kind, rest) = text.split_once(':').unwrap_or((text, ""));
    match kind {
        "exponential" | "exp" => Ok(Law::Exponential {
            rate: parse_num(rest)?,
        }),
        "uniform" => {
            let parts: Vec<&str> = rest.split(':').collect();
            match parts.as_slice() {
                [lo, hi] => {
                    if parse_num(lo)? != 0.0 {
                        return Err(FppError::InvalidDistribution(
                            "uniform must start at 0".into(),
                        ));
                    }
                    Ok(Law::Uniform {
                        upper: parse_num(hi)?,
                    })
                }
                [hi] => Ok(Law::Uniform {
                    upper: parse_num(hi)?,
                }),
                _ => Err(FppError::InvalidDistribution(format!(
                    "bad uniform spec {text:?}"
                ))),
            }
        }
        "deterministic" => Ok(Law::Deterministic {
            value: parse_num(rest)?,
        }),
        "shifted" => {
            let (off, base) = rest.split_once(':').ok_or_else(|| {
                FppError::InvalidDistribution(format!("bad shifted spec {text:?}"))
            })?;
            Ok(Law::Shifted {
                offset: parse_num(off)?,
                base: Box::new(parse_law(base)?),
            })
        }
        "custom" => {
            let table = rest
                .split(',')
                .map(|pair| {
                    let (x, f) = pair.split_once('/').ok_or_else(|| {
                        FppError::InvalidDistribution(format!("bad breakpoint {pair:?}"))
                    })?;
                    Ok((parse_num(x)?, parse_num(f)?))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Law::Custom { table })
        }
        _ => Err(FppError::InvalidDistribution(format!(
            "unknown law {kind:?}"
        ))),
    }
}

/// Certified `E Y <= c/d` split of `∫ P(τ > t)^d dt` at `delta_split` and `m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MinSplit {
    pub delta_split: f64,
    pub eps: f64,
    pub m: f64,
    pub near_zero: f64,
    pub middle: f64,
    pub tail: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpectedMin {
    pub value: f64,
    pub closed_form: bool,
    pub split: Option<MinSplit>,
}

/// `E min(τ_1, …, τ_d) = ∫ P(τ > t)^d dt`.
pub fn expected_min(spec: &DistributionSpec, d: u64) -> Result<ExpectedMin> {
    if d == 0 {
        return Err(FppError::InvalidArgument("d must be at least 1".into()));
    }
    let (value, closed_form) = match closed_form_min(&spec.law, d) {
        Some(v) => (v, true),
        None => (expected_min_quadrature(&spec.law, d), false),
    };
    let split = match spec.small_x.a.finite_positive() {
        Some(a) if d >= 2 => Some(min_split(spec, a, d)),
        _ => None,
    };
    Ok(ExpectedMin {
        value,
        closed_form,
        split,
    })
}

fn closed_form_min(law: &Law, d: u64) -> Option<f64> {
    let df = d as f64;
    match law {
        Law::Exponential { rate } => Some(1.0 / (rate * df)),
        Law::Uniform { upper } => Some(upper / (df + 1.0)),
        Law::Deterministic { value } => Some(*value),
        Law::Shifted { offset, base } => closed_form_min(base, d).map(|v| v + offset),
        Law::Custom { .. } => None,
    }
}

/// Adaptive Simpson evaluation of `∫ P(τ > t)^d dt`, split at the law's kinks.
pub fn expected_min_quadrature(law: &Law, d: u64) -> f64 {
    let df = d as f64;
    let upper = law.support_max().unwrap_or_else(|| {
        // Beyond this point the integrand is below e^{-60}.
        law.quantile(-(-60.0 / df).exp_m1())
    });
    let mut cuts: Vec<f64> = law
        .breakpoints()
        .into_iter()
        .filter(|&b| b > 0.0 && b < upper)
        .collect();
    cuts.push(0.0);
    cuts.push(upper);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let f = |t: f64| law.survival(t).powf(df);
    compensated_sum(
        cuts.windows(2)
            .map(|w| adaptive_simpson(&f, w[0], w[1], 1e-13)),
    )
}

fn min_split(spec: &DistributionSpec, a: f64, d: u64) -> MinSplit {
    let df = d as f64;
    let c = spec.small_x.c;
    let mut delta_split = spec.small_x.eps0;
    if c > 0.0 {
        // Keeps eps = C/(a|log δ'|) <= 1/2.
        delta_split = delta_split.min((-2.0 * c / a).exp()).min(0.5);
    }
    let eps = if c == 0.0 {
        0.0
    } else {
        c / (a * delta_split.ln().abs())
    };
    let m = (2.0 * spec.mean).max(2.0 * delta_split);
    let near_zero = 1.0 / ((df + 1.0) * a * (1.0 - eps));
    let middle = (m - delta_split) * spec.survival(delta_split).powf(df);
    let tail = (spec.mean / m).powf(df) * m / (df - 1.0);
    MinSplit {
        delta_split,
        eps,
        m,
        near_zero,
        middle,
        tail,
        bound: near_zero + middle + tail,
    }
}

/// Bounds on `P(S_n <= x)` for a sum of `n` i.i.d. copies, valid for `0 <= x <= eps0`.
pub fn sn_cdf_bounds(spec: &DistributionSpec, n: u32, x: f64) -> Result<(f64, f64)> {
    let a = spec.require_positive_slope()?;
    if n == 0 {
        return Err(FppError::InvalidArgument("n must be at least 1".into()));
    }
    if !(x >= 0.0) {
        return Err(FppError::InvalidArgument("x must be nonnegative".into()));
    }
    if x > spec.small_x.eps0 {
        return Err(FppError::OutsideValidityInterval {
            x,
            eps0: spec.small_x.eps0,
        });
    }
    if x == 0.0 {
        return Ok((0.0, 0.0));
    }
    let c = spec.small_x.c;
    let lx = x.ln().abs();
    if lx == 0.0 && c > 0.0 {
        return Err(FppError::LogSingularity);
    }
    let corr = if c == 0.0 { 0.0 } else { c / lx };
    let nf = n as f64;
    let base = nf * (a * x).ln() - ln_factorial(n as u64);
    let lower = if corr >= 1.0 {
        0.0
    } else {
        (base + nf * (-corr).ln_1p()).exp()
    };
    let upper = (base + nf * corr.ln_1p()).exp();
    Ok((lower, upper))
}
