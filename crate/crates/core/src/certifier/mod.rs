//! Certified evaluation of the time-constant bounds and per-dimension shape verdicts.
//!
//! Every inequality that a bound depends on is recorded as a [`Gate`] with both sides
//! and its truth value. A strict inequality only passes with a relative margin of
//! [`GATE_MARGIN`], so no verdict hinges on rounding.

mod lower;
mod shape;
mod upper;

pub use lower::*;
pub use shape::*;
pub use upper::*;

use serde::Serialize;

use crate::distributions::DistributionSpec;

/// Relative slack an inequality must clear to count as satisfied.
pub const GATE_MARGIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Relation {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = ">")]
    Gt,
}

/// One checkable inequality `lhs relation rhs`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Gate {
    pub name: String,
    pub lhs: f64,
    pub relation: Relation,
    pub rhs: f64,
    pub satisfied: bool,
    /// Non-binding gates are reported diagnostics and do not affect validity.
    pub binding: bool,
}

fn margin(a: f64, b: f64) -> f64 {
    GATE_MARGIN * a.abs().max(b.abs())
}

impl Gate {
    pub fn new(name: impl Into<String>, lhs: f64, relation: Relation, rhs: f64) -> Self {
        let tol = margin(lhs, rhs);
        let satisfied = match relation {
            Relation::Lt | Relation::Le => {
                lhs < rhs - tol || (relation == Relation::Le && lhs == rhs && tol == 0.0)
            }
            Relation::Gt | Relation::Ge => {
                lhs > rhs + tol || (relation == Relation::Ge && lhs == rhs && tol == 0.0)
            }
        };
        Self {
            name: name.into(),
            lhs,
            relation,
            rhs,
            satisfied: satisfied && !lhs.is_nan() && !rhs.is_nan(),
            binding: true,
        }
    }

    pub fn lt(name: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        Self::new(name, lhs, Relation::Lt, rhs)
    }

    pub fn le(name: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        Self::new(name, lhs, Relation::Le, rhs)
    }

    pub fn ge(name: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        Self::new(name, lhs, Relation::Ge, rhs)
    }

    pub fn gt(name: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        Self::new(name, lhs, Relation::Gt, rhs)
    }

    /// Exact integer comparison `lhs >= rhs`.
    pub fn int_ge(name: impl Into<String>, lhs: i64, rhs: i64) -> Self {
        Self {
            name: name.into(),
            lhs: lhs as f64,
            relation: Relation::Ge,
            rhs: rhs as f64,
            satisfied: lhs >= rhs,
            binding: true,
        }
    }

    /// `value < inf`.
    pub fn finite(name: impl Into<String>, value: f64) -> Self {
        Self {
            name: name.into(),
            lhs: value,
            relation: Relation::Lt,
            rhs: f64::INFINITY,
            satisfied: value.is_finite(),
            binding: true,
        }
    }

    pub fn diagnostic(mut self) -> Self {
        self.binding = false;
        self
    }

    pub fn prefixed(mut self, prefix: &str) -> Self {
        self.name = format!("{prefix}.{}", self.name);
        self
    }
}

/// All binding gates satisfied.
pub fn all_satisfied(gates: &[Gate]) -> bool {
    gates.iter().filter(|g| g.binding).all(|g| g.satisfied)
}

/// First binding gate that failed.
pub fn first_failure(gates: &[Gate]) -> Option<&Gate> {
    gates.iter().find(|g| g.binding && !g.satisfied)
}

/// Which small-x estimate feeds the bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    /// Partial-sum CDF bounds from the law's `(a, C, eps0)`.
    Generic,
    /// Exact gamma CDFs and Chernoff bounds; exponential laws only.
    ExactGamma,
}

impl Pipeline {
    /// `ExactGamma` for exponential laws, `Generic` otherwise.
    pub fn default_for(spec: &DistributionSpec) -> Self {
        if spec.exponential_rate().is_some() {
            Pipeline::ExactGamma
        } else {
            Pipeline::Generic
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Pipeline::Generic => "generic",
            Pipeline::ExactGamma => "exact_gamma",
        }
    }
}

/// Parameters shared by the upper-bound construction at dimension `d`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundParams {
    pub d: u64,
    pub delta: f64,
    pub eta: f64,
    pub b: f64,
    /// Path length used in the second-moment count.
    pub n: u32,
    pub x: f64,
    pub p: i64,
    /// `floor(d / (delta^{1+eta} log d))`; `d - p` directions carry the first edge.
    pub m: i64,
    pub y: f64,
    pub a_const: f64,
    pub pipeline: Pipeline,
    pub validity: Vec<Gate>,
}

/// `floor(log d)`.
pub fn default_path_length(d: u64) -> u32 {
    (d as f64).ln().floor().max(0.0) as u32
}
