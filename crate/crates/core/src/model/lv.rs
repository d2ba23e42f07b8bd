//! Lipschitz-violation measures over the observed reward.
//!
//! A pair `(x, y)` violates the Lipschitz condition when
//! `|C(x) - C(y)| > d(x, y)`. NLV weighs the violating reference states by
//! the measure; TLV weighs the violation magnitudes.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use super::instance::{CrmdpInstance, StateId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LvKind {
    Nlv,
    Tlv,
}

impl LvKind {
    pub const ALL: [LvKind; 2] = [LvKind::Nlv, LvKind::Tlv];
}

impl fmt::Display for LvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LvKind::Nlv => "nlv",
            LvKind::Tlv => "tlv",
        })
    }
}

impl FromStr for LvKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "nlv" => Ok(LvKind::Nlv),
            "tlv" => Ok(LvKind::Tlv),
            other => Err(format!("unknown LV measure `{other}` (expected nlv or tlv)")),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("measure weight of {0} must be positive and finite, got {1}")]
    NonPositiveWeight(StateId, f64),
}

/// An LV selector together with the state measure `mu`.
#[derive(Debug, Clone, PartialEq)]
pub struct LvMeasure {
    kind: LvKind,
    /// `None` is the counting measure.
    weights: Option<Vec<f64>>,
}

impl LvMeasure {
    pub fn counting(kind: LvKind) -> Self {
        LvMeasure { kind, weights: None }
    }

    pub fn nlv() -> Self {
        Self::counting(LvKind::Nlv)
    }

    pub fn tlv() -> Self {
        Self::counting(LvKind::Tlv)
    }

    /// Non-uniform measure. Weights must be strictly positive so that the
    /// measure of a nonempty violating set is never zero.
    pub fn weighted(kind: LvKind, weights: Vec<f64>) -> Result<Self, MeasureError> {
        for (i, &w) in weights.iter().enumerate() {
            if !(w.is_finite() && w > 0.0) {
                return Err(MeasureError::NonPositiveWeight(StateId(i), w));
            }
        }
        Ok(LvMeasure {
            kind,
            weights: Some(weights),
        })
    }

    pub fn kind(&self) -> LvKind {
        self.kind
    }

    pub fn is_counting(&self) -> bool {
        self.weights.is_none()
    }

    #[inline]
    pub fn weight(&self, s: StateId) -> f64 {
        match &self.weights {
            None => 1.0,
            Some(w) => w[s.0],
        }
    }

    /// Contribution of reference state `y` to `LV(x)`; zero when the pair
    /// does not violate.
    #[inline]
    pub fn contribution(&self, inst: &CrmdpInstance, x: StateId, y: StateId) -> f64 {
        let excess = violation_excess(inst, x, y);
        if excess <= 0.0 {
            return 0.0;
        }
        match self.kind {
            LvKind::Nlv => self.weight(y),
            LvKind::Tlv => self.weight(y) * excess,
        }
    }

    /// `LV_A(x)` for the reference set `A`.
    pub fn evaluate<I>(&self, inst: &CrmdpInstance, x: StateId, reference: I) -> f64
    where
        I: IntoIterator<Item = StateId>,
    {
        reference.into_iter().map(|y| self.contribution(inst, x, y)).sum()
    }
}

/// `|C(x) - C(y)| - d(x, y)`; positive exactly when the pair violates.
#[inline]
pub fn violation_excess(inst: &CrmdpInstance, x: StateId, y: StateId) -> f64 {
    (inst.observed_reward(x) - inst.observed_reward(y)).abs() - inst.distance(x, y)
}

#[inline]
pub fn violates(inst: &CrmdpInstance, x: StateId, y: StateId) -> bool {
    violation_excess(inst, x, y) > 0.0
}

/// Number of Lipschitz violations of `x` against `reference`.
pub fn nlv<I>(x: StateId, reference: I, inst: &CrmdpInstance, weights: Option<&[f64]>) -> f64
where
    I: IntoIterator<Item = StateId>,
{
    reference
        .into_iter()
        .filter(|&y| violates(inst, x, y))
        .map(|y| weights.map_or(1.0, |w| w[y.0]))
        .sum()
}

/// Total Lipschitz violation of `x` against `reference` (positive part of
/// each pair's excess).
pub fn tlv<I>(x: StateId, reference: I, inst: &CrmdpInstance, weights: Option<&[f64]>) -> f64
where
    I: IntoIterator<Item = StateId>,
{
    reference
        .into_iter()
        .map(|y| weights.map_or(1.0, |w| w[y.0]) * violation_excess(inst, x, y).max(0.0))
        .sum()
}
