//! The trust-region integer program: problem record, validation, objective
//! evaluation and the JSON instance format.
//!
//! An instance asks for a step `d` minimizing
//!
//! ```text
//! C(d) = sum_i c_i d_i + alpha * sum_{i<n} |x_{i+1} + d_{i+1} - x_i - d_i|
//! ```
//!
//! subject to `x_i + d_i` lying in the value set `xi` and the weighted step
//! length `sum_i gamma_i |d_i|` staying within the radius `delta`.

use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

/// A single violated instance invariant. Indices are 1-based in messages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    EmptyInstance,
    LengthMismatch { field: &'static str, expected: usize, got: usize },
    EmptyValueSet,
    ValueSetNotAscending,
    NotInValueSet { index: usize, value: i64 },
    GammaBelowOne { index: usize },
    GammaNotInteger { index: usize },
    NegativeDelta(i64),
    NegativeAlpha,
    NonFinite { field: &'static str },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyInstance => write!(f, "n must be at least 1"),
            Violation::LengthMismatch { field, expected, got } => {
                write!(f, "{field} has length {got}, expected {expected}")
            }
            Violation::EmptyValueSet => write!(f, "Ξ is empty"),
            Violation::ValueSetNotAscending => write!(f, "Ξ not strictly ascending"),
            Violation::NotInValueSet { index, value } => {
                write!(f, "x_{index} not in Ξ (value {value})")
            }
            Violation::GammaBelowOne { index } => write!(f, "gamma_{index} is below 1"),
            Violation::GammaNotInteger { index } => write!(f, "gamma_{index} is not an integer"),
            Violation::NegativeDelta(d) => write!(f, "delta is negative ({d})"),
            Violation::NegativeAlpha => write!(f, "alpha is negative"),
            Violation::NonFinite { field } => write!(f, "{field} contains a non-finite value"),
        }
    }
}

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("invalid instance: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("malformed instance document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("step vector has length {got}, expected {expected}")]
    StepLength { expected: usize, got: usize },
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// Unchecked instance record, as read from a document.
///
/// Integer fields use wide signed types so that out-of-range input is
/// reported by [`validate`] instead of failing deserialization.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawInstance<S> {
    pub n: i64,
    pub alpha: S,
    pub delta: i64,
    pub xi: Vec<i64>,
    pub x: Vec<i64>,
    pub gamma: Vec<f64>,
    pub c: Vec<S>,
}

/// A validated trust-region integer program. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct TripInstance<S> {
    c: Vec<S>,
    alpha: S,
    delta: u64,
    xi: Vec<i64>,
    x: Vec<i64>,
    gamma: Vec<u64>,
    // position of x_i inside xi
    x_index: Vec<u32>,
}

/// Checks every invariant of `raw` and reports all violations at once.
pub fn validate<S: Scalar>(raw: RawInstance<S>) -> Result<TripInstance<S>, InstanceError> {
    let mut errs = Vec::new();
    let n = if raw.n < 1 {
        errs.push(Violation::EmptyInstance);
        0
    } else {
        raw.n as usize
    };
    for (field, len) in [("c", raw.c.len()), ("x", raw.x.len()), ("gamma", raw.gamma.len())] {
        if len != n {
            errs.push(Violation::LengthMismatch { field, expected: n, got: len });
        }
    }
    if raw.xi.is_empty() {
        errs.push(Violation::EmptyValueSet);
    } else if raw.xi.windows(2).any(|w| w[0] >= w[1]) {
        errs.push(Violation::ValueSetNotAscending);
    }
    let ascending = !raw.xi.is_empty() && raw.xi.windows(2).all(|w| w[0] < w[1]);
    let mut x_index = Vec::with_capacity(raw.x.len());
    for (i, &xv) in raw.x.iter().enumerate() {
        let pos = if ascending {
            raw.xi.binary_search(&xv).ok()
        } else {
            raw.xi.iter().position(|&v| v == xv)
        };
        match pos {
            Some(p) => x_index.push(p as u32),
            None => errs.push(Violation::NotInValueSet { index: i + 1, value: xv }),
        }
    }
    let mut gamma = Vec::with_capacity(raw.gamma.len());
    for (i, &g) in raw.gamma.iter().enumerate() {
        if !g.is_finite() || g.fract() != 0.0 {
            errs.push(Violation::GammaNotInteger { index: i + 1 });
        } else if g < 1.0 {
            errs.push(Violation::GammaBelowOne { index: i + 1 });
        } else {
            gamma.push(g as u64);
        }
    }
    if raw.delta < 0 {
        errs.push(Violation::NegativeDelta(raw.delta));
    }
    if !raw.alpha.is_finite() {
        errs.push(Violation::NonFinite { field: "alpha" });
    } else if raw.alpha < S::zero() {
        errs.push(Violation::NegativeAlpha);
    }
    if raw.c.iter().any(|v| !v.is_finite()) {
        errs.push(Violation::NonFinite { field: "c" });
    }
    if !errs.is_empty() {
        return Err(InstanceError::Invalid(errs));
    }
    Ok(TripInstance {
        c: raw.c,
        alpha: raw.alpha,
        delta: raw.delta as u64,
        xi: raw.xi,
        x: raw.x,
        gamma,
        x_index,
    })
}

impl<S: Scalar> TripInstance<S> {
    pub fn new(
        c: Vec<S>,
        alpha: S,
        delta: u64,
        xi: Vec<i64>,
        x: Vec<i64>,
        gamma: Vec<u64>,
    ) -> Result<Self, InstanceError> {
        validate(RawInstance {
            n: c.len() as i64,
            alpha,
            delta: i64::try_from(delta).unwrap_or(i64::MAX),
            xi,
            x,
            gamma: gamma.into_iter().map(|g| g as f64).collect(),
            c,
        })
    }

    pub fn n(&self) -> usize {
        self.c.len()
    }

    /// Number of admissible control values.
    pub fn m(&self) -> usize {
        self.xi.len()
    }

    pub fn c(&self) -> &[S] {
        &self.c
    }

    pub fn alpha(&self) -> S {
        self.alpha
    }

    pub fn delta(&self) -> u64 {
        self.delta
    }

    pub fn xi(&self) -> &[i64] {
        &self.xi
    }

    pub fn x(&self) -> &[i64] {
        &self.x
    }

    pub fn gamma(&self) -> &[u64] {
        &self.gamma
    }

    /// Index of `x_i` in the value set (0-based `i`).
    pub fn x_index(&self, i: usize) -> usize {
        self.x_index[i] as usize
    }

    /// Step on interval `i` (0-based) that moves `x_i` to value `j`.
    #[inline]
    pub fn step_for(&self, i: usize, j: usize) -> i64 {
        self.xi[j] - self.x[i]
    }

    /// Same instance with a different radius.
    pub fn with_delta(&self, delta: u64) -> Self {
        Self { delta, ..self.clone() }
    }

    /// Same instance with different cost coefficients.
    pub fn with_costs(&self, c: Vec<S>) -> Result<Self, InstanceError> {
        if c.len() != self.n() {
            return Err(InstanceError::StepLength { expected: self.n(), got: c.len() });
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(InstanceError::Invalid(vec![Violation::NonFinite { field: "c" }]));
        }
        Ok(Self { c, ..self.clone() })
    }

    /// Radius beyond which the budget constraint can never bind:
    /// `(max Ξ - min Ξ) * max_i gamma_i * n`.
    pub fn delta_max(&self) -> u64 {
        let spread = (self.xi[self.m() - 1] - self.xi[0]) as u64;
        let gmax = self.gamma.iter().copied().max().unwrap_or(1);
        spread.saturating_mul(gmax).saturating_mul(self.n() as u64)
    }

    /// Replaces `delta` by `min(delta, delta_max)`.
    pub fn clamp_delta(&self) -> Self {
        self.with_delta(self.delta.min(self.delta_max()))
    }

    /// Total variation of the current control.
    pub fn tv(&self) -> i64 {
        total_variation_int(&self.x)
    }

    /// `C(d)`. Feasibility of `d` is not required.
    pub fn objective(&self, d: &[i64]) -> Result<S, InstanceError> {
        self.check_len(d)?;
        let linear: S = self.c.iter().zip(d).map(|(&ci, &di)| ci * S::from_int(di)).sum();
        let jumps: i64 = (1..self.n())
            .map(|i| (self.x[i] + d[i] - self.x[i - 1] - d[i - 1]).abs())
            .sum();
        Ok(linear + self.alpha * S::from_int(jumps))
    }

    /// `sum_i gamma_i |d_i|`.
    pub fn resource(&self, d: &[i64]) -> Result<u64, InstanceError> {
        self.check_len(d)?;
        Ok(self.gamma.iter().zip(d).map(|(&g, &di)| g * di.unsigned_abs()).sum())
    }

    pub fn is_feasible(&self, d: &[i64]) -> bool {
        if d.len() != self.n() {
            return false;
        }
        let in_set = self
            .x
            .iter()
            .zip(d)
            .all(|(&xi, &di)| self.xi.binary_search(&(xi + di)).is_ok());
        in_set && self.resource(d).map(|r| r <= self.delta).unwrap_or(false)
    }

    /// Objective of the zero step, `alpha * TV(x)`.
    pub fn zero_step_objective(&self) -> S {
        self.alpha * S::from_int(self.tv())
    }

    /// Largest absolute cost coefficient.
    pub fn c_max(&self) -> S {
        self.c.iter().fold(S::zero(), |acc, v| acc.max(v.abs()))
    }

    /// Serializes to the JSON instance document.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&InstanceDoc::from(self)).expect("instance serializes")
    }

    /// Builds a solution record for `d`, recomputing objective and resource.
    pub fn solution(&self, d: Vec<i64>, stats: SolveStats) -> Result<Solution<S>, InstanceError> {
        let objective = self.objective(&d)?;
        let resource = self.resource(&d)?;
        Ok(Solution { d: StepVector(d), objective, resource, stats })
    }

    fn check_len(&self, d: &[i64]) -> Result<(), InstanceError> {
        if d.len() != self.n() {
            return Err(InstanceError::StepLength { expected: self.n(), got: d.len() });
        }
        Ok(())
    }
}

pub(crate) fn total_variation_int(x: &[i64]) -> i64 {
    x.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

#[derive(Serialize)]
struct InstanceDoc<'a, S> {
    n: usize,
    alpha: S,
    delta: u64,
    xi: &'a [i64],
    x: &'a [i64],
    gamma: &'a [u64],
    c: &'a [S],
}

impl<'a, S: Scalar> From<&'a TripInstance<S>> for InstanceDoc<'a, S> {
    fn from(inst: &'a TripInstance<S>) -> Self {
        InstanceDoc {
            n: inst.n(),
            alpha: inst.alpha,
            delta: inst.delta,
            xi: &inst.xi,
            x: &inst.x,
            gamma: &inst.gamma,
            c: &inst.c,
        }
    }
}

impl<S: Scalar> Serialize for TripInstance<S> {
    fn serialize<Ser: serde::Serializer>(&self, ser: Ser) -> Result<Ser::Ok, Ser::Error> {
        InstanceDoc::from(self).serialize(ser)
    }
}

impl<'de, S: Scalar> Deserialize<'de> for TripInstance<S> {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let raw = RawInstance::<S>::deserialize(de)?;
        validate(raw).map_err(serde::de::Error::custom)
    }
}

/// Parses and validates a JSON instance document.
pub fn read_instance<S: Scalar>(text: &str) -> Result<TripInstance<S>, InstanceError> {
    let raw: RawInstance<S> = serde_json::from_str(text)?;
    validate(raw)
}

pub fn write_instance<S: Scalar>(inst: &TripInstance<S>) -> String {
    inst.to_json()
}

/// Decision vector of the program.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StepVector(pub Vec<i64>);

impl StepVector {
    pub fn zeros(n: usize) -> Self {
        StepVector(vec![0; n])
    }

    pub fn into_inner(self) -> Vec<i64> {
        self.0
    }
}

impl Deref for StepVector {
    type Target = [i64];

    fn deref(&self) -> &[i64] {
        &self.0
    }
}

impl From<Vec<i64>> for StepVector {
    fn from(v: Vec<i64>) -> Self {
        StepVector(v)
    }
}

/// Counters reported by the solvers.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    /// Nodes expanded by A*, or states processed by the layer sweep.
    pub nodes_expanded: u64,
    /// Nodes pushed to the open list, or edges relaxed by the layer sweep.
    pub nodes_generated: u64,
    /// Multiplier evaluations of the binary search.
    pub preprocessing_iterations: u64,
    pub early_exit: bool,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "S: Scalar"))]
pub struct Solution<S> {
    pub d: StepVector,
    pub objective: S,
    pub resource: u64,
    pub stats: SolveStats,
}

impl<S: Scalar> Solution<S> {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("solution serializes")
    }
}
