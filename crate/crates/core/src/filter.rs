//! Spatial filters behind a common trait, registered by name so the CLI and
//! the comparison harness can pick one at runtime.

use std::collections::BTreeMap;
use std::fmt;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acfilter::{AcConfig, AcFilter};
use crate::cpf::{CpfConfig, CpfFilter, CpfMode};
use crate::flow::FlowError;
use crate::wafer::{Neighborhood, WaferError, WaferMap};

/// Exact rational used for AC costs.
pub type Rational = Ratio<i64>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FilterError {
    #[error("wafer has no in-mask chips")]
    EmptyWafer,
    #[error("invalid filter configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown filter method {0:?}")]
    UnknownMethod(String),
    #[error(transparent)]
    Wafer(#[from] WaferError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error("internal error: {0}")]
    Internal(String),
}

/// Output of any spatial filter: one binary label per in-mask chip, in the
/// node order of [`crate::wafer::AdjacencyGraph`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilterResult {
    pub labels: Vec<bool>,
    /// AC: the exact objective. CPF: the kept count.
    pub objective_value: Rational,
    pub kept_count: usize,
    /// Set when some component fell back to the component-size rule.
    pub approximate: bool,
}

impl FilterResult {
    pub fn from_labels(labels: Vec<bool>, objective_value: Rational) -> Self {
        let kept_count = labels.iter().filter(|&&x| x).count();
        Self {
            labels,
            objective_value,
            kept_count,
            approximate: false,
        }
    }
}

pub trait SpatialFilter: Send + Sync {
    fn name(&self) -> &'static str;

    /// Parameter summary for manifests and reports.
    fn describe(&self) -> String;

    fn filter(&self, map: &WaferMap) -> Result<FilterResult, FilterError>;
}

/// Union of the knobs every registered filter may read.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterParams {
    #[serde(with = "rational_string")]
    pub u: Rational,
    #[serde(with = "rational_string")]
    pub w_mag: Rational,
    pub m_threshold: usize,
    pub neighborhood: Neighborhood,
    pub cpf_mode: CpfMode,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            u: Rational::new(1, 2),
            w_mag: Rational::from_integer(1),
            m_threshold: 5,
            neighborhood: Neighborhood::King,
            cpf_mode: CpfMode::Path,
        }
    }
}

type Constructor = fn(&FilterParams) -> Result<Box<dyn SpatialFilter>, FilterError>;

struct Entry {
    summary: &'static str,
    build: Constructor,
}

pub struct FilterRegistry {
    entries: BTreeMap<&'static str, Entry>,
}

impl fmt::Debug for FilterRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.entries.keys()).finish()
    }
}

impl Default for FilterRegistry {
    fn default() -> Self {
        Self::with_builtin()
    }
}

impl FilterRegistry {
    pub fn empty() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    pub fn with_builtin() -> Self {
        let mut reg = Self::empty();
        reg.register("ac", "adjacency-clustering min-cut filter", |p| {
            let cfg = AcConfig::new(p.u, p.w_mag, p.neighborhood)?;
            Ok(Box::new(AcFilter::new(cfg)))
        });
        reg.register("cpf", "connected path filtering", |p| {
            let cfg = CpfConfig::new(p.m_threshold, p.neighborhood, p.cpf_mode)?;
            Ok(Box::new(CpfFilter::new(cfg)))
        });
        reg
    }

    pub fn register(&mut self, name: &'static str, summary: &'static str, build: Constructor) {
        self.entries.insert(name, Entry { summary, build });
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }

    pub fn summaries(&self) -> Vec<(&'static str, &'static str)> {
        self.entries.iter().map(|(k, e)| (*k, e.summary)).collect()
    }

    pub fn build(
        &self,
        name: &str,
        params: &FilterParams,
    ) -> Result<Box<dyn SpatialFilter>, FilterError> {
        let entry = self
            .entries
            .get(name)
            .ok_or_else(|| FilterError::UnknownMethod(name.to_string()))?;
        (entry.build)(params)
    }
}

/// Parses `"1/2"`, `"0.40"` or `"2"` into an exact rational.
pub fn parse_rational(text: &str) -> Result<Rational, FilterError> {
    let bad = || FilterError::InvalidConfig(format!("not a rational number: {text:?}"));
    let t = text.trim();
    if let Some((num, den)) = t.split_once('/') {
        let num: i64 = num.trim().parse().map_err(|_| bad())?;
        let den: i64 = den.trim().parse().map_err(|_| bad())?;
        if den == 0 {
            return Err(bad());
        }
        return Ok(Rational::new(num, den));
    }
    let (negative, digits) = match t.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, t.strip_prefix('+').unwrap_or(t)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty()
        || !int_part.chars().all(|c| c.is_ascii_digit())
        || !frac_part.chars().all(|c| c.is_ascii_digit())
        || frac_part.len() > 12
    {
        return Err(bad());
    }
    let den = 10i64.pow(frac_part.len() as u32);
    let int_val: i64 = if int_part.is_empty() {
        0
    } else {
        int_part.parse().map_err(|_| bad())?
    };
    let frac_val: i64 = if frac_part.is_empty() {
        0
    } else {
        frac_part.parse().map_err(|_| bad())?
    };
    let num = int_val
        .checked_mul(den)
        .and_then(|v| v.checked_add(frac_val))
        .ok_or_else(bad)?;
    Ok(Rational::new(if negative { -num } else { num }, den))
}

pub fn rational_to_f64(r: Rational) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

mod rational_string {
    use super::{parse_rational, Rational};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Rational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&r.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        let text = String::deserialize(d)?;
        parse_rational(&text).map_err(serde::de::Error::custom)
    }
}
