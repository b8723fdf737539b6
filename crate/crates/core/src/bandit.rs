//! Shared bandit data model: contexts, rounds, histories, regret traces and
//! the agent interface.

use std::ops::Deref;
use std::sync::Arc;

use crate::error::{check_len, Error, Result};
use crate::net::GradientVector;

/// Context norms may exceed one by this much before construction fails.
const NORM_SLACK: f64 = 1e-9;

/// A context with `‖x‖₂ ≤ 1`. Cheap to clone.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextVector(Arc<[f64]>);

impl ContextVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract("context has non-finite entries".into()));
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1.0 + NORM_SLACK {
            return Err(Error::Contract(format!("context norm {norm} exceeds 1")));
        }
        Ok(Self(values.into()))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl Deref for ContextVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for ContextVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Round {
    contexts: Vec<ContextVector>,
    chosen_arm: usize,
    reward: f64,
    optimal_mean: Option<f64>,
}

impl Round {
    /// `optimal_mean` is known to the environment only; agents pass `None`.
    pub fn new(
        contexts: Vec<ContextVector>,
        chosen_arm: usize,
        reward: f64,
        optimal_mean: Option<f64>,
    ) -> Result<Self> {
        if chosen_arm >= contexts.len() {
            return Err(Error::Contract(format!(
                "chosen arm {chosen_arm} out of range for {} arms",
                contexts.len()
            )));
        }
        if let Some(d) = contexts.first().map(ContextVector::dim) {
            if let Some(bad) = contexts.iter().find(|c| c.dim() != d) {
                return Err(Error::Shape {
                    what: "round context",
                    expected: d,
                    actual: bad.dim(),
                });
            }
        }
        if let Some(opt) = optimal_mean {
            if !(0.0..=1.0).contains(&opt) {
                return Err(Error::Contract(format!(
                    "optimal mean {opt} outside [0, 1]"
                )));
            }
        }
        if !reward.is_finite() {
            return Err(Error::Contract("reward is not finite".into()));
        }
        Ok(Self {
            contexts,
            chosen_arm,
            reward,
            optimal_mean,
        })
    }

    pub fn contexts(&self) -> &[ContextVector] {
        &self.contexts
    }

    pub fn chosen_arm(&self) -> usize {
        self.chosen_arm
    }

    pub fn chosen_context(&self) -> &ContextVector {
        &self.contexts[self.chosen_arm]
    }

    pub fn reward(&self) -> f64 {
        self.reward
    }

    pub fn optimal_mean(&self) -> Option<f64> {
        self.optimal_mean
    }
}

/// Append-only observation log `(x_1, a_1, r_1, …)`.
///
/// [`record_round`](Self::record_round) leaves `self` untouched and returns
/// the extended log; [`recorded`](Self::recorded) consumes `self` and avoids
/// the copy, which is what agents use on their private history.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct History {
    rounds: Vec<Round>,
    cached_grads: Option<Vec<GradientVector>>,
}

impl History {
    pub fn new() -> Self {
        Self::default()
    }

    /// History that stores one gradient per played context.
    pub fn with_gradient_cache() -> Self {
        Self {
            rounds: Vec::new(),
            cached_grads: Some(Vec::new()),
        }
    }

    pub fn record_round(&self, round: Round, grad: Option<GradientVector>) -> Result<History> {
        self.clone().recorded(round, grad)
    }

    pub fn recorded(mut self, round: Round, grad: Option<GradientVector>) -> Result<History> {
        if let Some(first) = self.rounds.first() {
            check_len(
                "history context",
                first.chosen_context().dim(),
                round.chosen_context().dim(),
            )?;
        }
        match (&mut self.cached_grads, grad) {
            (Some(cache), Some(g)) => cache.push(g),
            (Some(_), None) => {
                return Err(Error::Contract(
                    "history caches gradients but none was supplied".into(),
                ))
            }
            (None, Some(_)) => {
                return Err(Error::Contract(
                    "gradient supplied to a history without a gradient cache".into(),
                ))
            }
            (None, None) => {}
        }
        self.rounds.push(round);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    pub fn rounds(&self) -> &[Round] {
        &self.rounds
    }

    pub fn cached_grads(&self) -> Option<&[GradientVector]> {
        self.cached_grads.as_deref()
    }

    /// `(x_s, r_s)` for every played round, oldest first.
    pub fn played(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.rounds
            .iter()
            .map(|r| (&**r.chosen_context(), r.reward()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    /// 1-based round index.
    pub t: usize,
    /// 0-based arm index.
    pub arm: usize,
    pub reward: f64,
    pub optimal_mean: f64,
    pub instant_regret: f64,
    pub cumulative_regret: f64,
}

/// Per-step pseudo-regret record.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RegretTrace {
    records: Vec<TraceRecord>,
}

impl RegretTrace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends step `t`. Instant regret is `optimal_mean − chosen_mean`.
    pub fn push(&mut self, arm: usize, reward: f64, optimal_mean: f64, chosen_mean: f64) {
        let instant = optimal_mean - chosen_mean;
        let cumulative = self.cumulative_regret() + instant;
        self.records.push(TraceRecord {
            t: self.records.len() + 1,
            arm,
            reward,
            optimal_mean,
            instant_regret: instant,
            cumulative_regret: cumulative,
        });
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn cumulative_regret(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.cumulative_regret)
    }

    /// Regret accumulated over rounds `from..to` (0-based, half-open).
    pub fn regret_between(&self, from: usize, to: usize) -> f64 {
        self.records[from..to]
            .iter()
            .map(|r| r.instant_regret)
            .sum()
    }
}

pub fn cumulative_regret(trace: &RegretTrace) -> f64 {
    trace.cumulative_regret()
}

/// A contextual bandit policy. Rounds are numbered from 1.
pub trait Agent: Send {
    fn name(&self) -> &str;

    fn select(&mut self, t: usize, contexts: &[ContextVector]) -> Result<usize>;

    /// Feedback for the arm chosen in the last call to `select`.
    fn observe(
        &mut self,
        t: usize,
        contexts: &[ContextVector],
        arm: usize,
        reward: f64,
    ) -> Result<()>;
}

/// Lowest index attaining the maximum; `NaN` entries never win.
pub fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] || (values[best].is_nan() && !v.is_nan()) {
            best = i;
        }
    }
    best
}
