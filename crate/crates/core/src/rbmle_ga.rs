//! Reward-biased MLE by per-arm gradient ascent.
//!
//! Every round each arm `a` gets its own estimator, obtained by `J` ascent
//! steps on `ℓ†_λ(θ) + α(t)·f(x_{t,a}; θ)`. The arm played is the one with
//! the largest index `ℓ†_λ(θ̃_a) + α(t)·ζ(t)·f(x_{t,a}; θ̃_a)`, ties going to
//! the lowest arm. With `α(t) = ν√t` the bias grows sublinearly, so the
//! likelihood eventually dominates while optimistic parameters keep being
//! explored.

use std::fmt;
use std::str::FromStr;

use crate::bandit::{argmax_lowest, Agent, ContextVector, History, Round};
use crate::error::{check_len, Error, Result};
use crate::fit::{AscentSettings, Bias, PenalisedLikelihood};
use crate::net::NetworkParams;
use crate::par::{map_range, Execution};
use crate::surrogate::SurrogateFamily;

/// Reward-bias schedule `α(t) = ν√t`.
pub fn alpha(nu: f64, t: usize) -> f64 {
    nu * (t as f64).sqrt()
}

/// Growth factor `ζ(t)` applied to the bias term of the selection index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Zeta {
    /// `1 + ln t`
    #[default]
    OnePlusLog,
    /// `√t`
    Sqrt,
    /// `1`
    ConstantOne,
}

impl Zeta {
    pub fn value(self, t: f64) -> f64 {
        match self {
            Zeta::OnePlusLog => 1.0 + t.ln(),
            Zeta::Sqrt => t.sqrt(),
            Zeta::ConstantOne => 1.0,
        }
    }
}

impl fmt::Display for Zeta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Zeta::OnePlusLog => "one_plus_log",
            Zeta::Sqrt => "sqrt",
            Zeta::ConstantOne => "constant_one",
        })
    }
}

impl FromStr for Zeta {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "one_plus_log" => Ok(Zeta::OnePlusLog),
            "sqrt" => Ok(Zeta::Sqrt),
            "constant_one" | "one" => Ok(Zeta::ConstantOne),
            other => Err(Error::Config(format!(
                "unknown zeta '{other}' (expected one_plus_log, sqrt or constant_one)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaConfig {
    /// `ν` in `α(t) = ν√t`.
    pub nu: f64,
    /// Ascent steps `J` per arm and round.
    pub steps: usize,
    /// `η`.
    pub step_size: f64,
    /// Ridge `λ`; the penalty is `(mλ/2)·‖θ − θ₀‖²`.
    pub lambda: f64,
    pub zeta: Zeta,
    /// Start each round's ascent from the arm's previous estimator instead
    /// of `θ₀`.
    pub warm_start: bool,
    /// Divide `η` by the number of played rounds.
    pub normalize_steps: bool,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            nu: 0.1,
            steps: 100,
            step_size: 1e-3,
            lambda: 1e-3,
            zeta: Zeta::OnePlusLog,
            warm_start: true,
            normalize_steps: true,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config("J must be at least 1".into()));
        }
        if !(self.nu >= 0.0 && self.nu.is_finite()) {
            return Err(Error::Config(format!(
                "nu must be non-negative, got {}",
                self.nu
            )));
        }
        if !(self.step_size >= 0.0 && self.step_size.is_finite()) {
            return Err(Error::Config(format!(
                "eta must be non-negative, got {}",
                self.step_size
            )));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        Ok(())
    }

    pub fn ascent(&self) -> AscentSettings {
        AscentSettings {
            steps: self.steps,
            step_size: self.step_size,
            normalize: self.normalize_steps,
        }
    }
}

/// `ℓ†_λ(θ) + α_t·f(x_arm; θ)`.
pub fn ga_objective(
    family: &SurrogateFamily,
    history: &History,
    params: &NetworkParams,
    anchor: &NetworkParams,
    lambda: f64,
    arm_context: &[f64],
    alpha_t: f64,
) -> Result<f64> {
    PenalisedLikelihood::new(family, history, anchor, lambda).objective(
        params,
        Some(Bias {
            context: arm_context,
            alpha: alpha_t,
        }),
    )
}

/// `J` ascent steps on the arm-specific objective for round `t`, from `init`.
pub fn fit_arm_estimator(
    family: &SurrogateFamily,
    history: &History,
    config: &GaConfig,
    anchor: &NetworkParams,
    arm_context: &[f64],
    t: usize,
    init: NetworkParams,
) -> Result<NetworkParams> {
    fit_arm_estimator_traced(family, history, config, anchor, arm_context, t, init, None)
}

/// As [`fit_arm_estimator`], recording the objective at every iterate.
#[allow(clippy::too_many_arguments)]
pub fn fit_arm_estimator_traced(
    family: &SurrogateFamily,
    history: &History,
    config: &GaConfig,
    anchor: &NetworkParams,
    arm_context: &[f64],
    t: usize,
    init: NetworkParams,
    trace: Option<&mut Vec<f64>>,
) -> Result<NetworkParams> {
    config.validate()?;
    if t == 0 {
        return Err(Error::Contract("rounds are numbered from 1".into()));
    }
    let bias = Bias {
        context: arm_context,
        alpha: alpha(config.nu, t),
    };
    PenalisedLikelihood::new(family, history, anchor, config.lambda).ascend(
        init,
        Some(bias),
        &config.ascent(),
        trace,
    )
}

/// `ℓ†_λ(θ̃_a) + α_t·ζ_t·f(x_a; θ̃_a)`.
#[allow(clippy::too_many_arguments)]
pub fn ga_index(
    family: &SurrogateFamily,
    history: &History,
    estimator: &NetworkParams,
    anchor: &NetworkParams,
    lambda: f64,
    arm_context: &[f64],
    alpha_t: f64,
    zeta_t: f64,
) -> Result<f64> {
    if !(zeta_t > 0.0) {
        return Err(Error::Contract(format!(
            "zeta must be positive, got {zeta_t}"
        )));
    }
    let ll = PenalisedLikelihood::new(family, history, anchor, lambda).value(estimator)?;
    Ok(ll + alpha_t * zeta_t * estimator.forward(arm_context)?)
}

/// Per-arm gradient-ascent agent.
#[derive(Debug, Clone)]
pub struct GaAgent {
    family: SurrogateFamily,
    config: GaConfig,
    anchor: NetworkParams,
    history: History,
    estimators: Vec<NetworkParams>,
    indices: Vec<f64>,
    execution: Execution,
}

impl GaAgent {
    pub fn new(family: SurrogateFamily, config: GaConfig, anchor: NetworkParams) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            family,
            config,
            anchor,
            history: History::new(),
            estimators: Vec::new(),
            indices: Vec::new(),
            execution: Execution::default(),
        })
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    pub fn config(&self) -> &GaConfig {
        &self.config
    }

    pub fn anchor(&self) -> &NetworkParams {
        &self.anchor
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    pub fn family(&self) -> &SurrogateFamily {
        &self.family
    }

    /// Estimators fitted in the latest round, one per arm.
    pub fn estimators(&self) -> &[NetworkParams] {
        &self.estimators
    }

    /// Selection indices from the latest round.
    pub fn indices(&self) -> &[f64] {
        &self.indices
    }

    pub fn select_arm(&mut self, t: usize, contexts: &[ContextVector]) -> Result<usize> {
        if contexts.is_empty() {
            return Err(Error::Contract("at least one arm is required".into()));
        }
        if t == 0 {
            return Err(Error::Contract("rounds are numbered from 1".into()));
        }
        let d = self.anchor.config().input_dim();
        for c in contexts {
            check_len("arm context", d, c.dim())?;
        }
        let k = contexts.len();
        if self.estimators.len() != k {
            if !self.estimators.is_empty() {
                return Err(Error::Contract(format!(
                    "arm count changed from {} to {k}",
                    self.estimators.len()
                )));
            }
            self.estimators = vec![self.anchor.clone(); k];
        }
        let alpha_t = alpha(self.config.nu, t);
        let zeta_t = self.config.zeta.value(t as f64);
        let this = &*self;
        let fitted: Vec<Result<(NetworkParams, f64)>> = map_range(this.execution, k, |a| {
            let init = if this.config.warm_start {
                this.estimators[a].clone()
            } else {
                this.anchor.clone()
            };
            let est = fit_arm_estimator(
                &this.family,
                &this.history,
                &this.config,
                &this.anchor,
                &contexts[a],
                t,
                init,
            )?;
            let index = ga_index(
                &this.family,
                &this.history,
                &est,
                &this.anchor,
                this.config.lambda,
                &contexts[a],
                alpha_t,
                zeta_t,
            )?;
            Ok((est, index))
        });
        let (estimators, indices): (Vec<_>, Vec<_>) = fitted
            .into_iter()
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .unzip();
        self.estimators = estimators;
        self.indices = indices;
        Ok(argmax_lowest(&self.indices))
    }
}

impl Agent for GaAgent {
    fn name(&self) -> &str {
        "rbmle-ga"
    }

    fn select(&mut self, t: usize, contexts: &[ContextVector]) -> Result<usize> {
        self.select_arm(t, contexts)
    }

    fn observe(
        &mut self,
        _t: usize,
        contexts: &[ContextVector],
        arm: usize,
        reward: f64,
    ) -> Result<()> {
        let round = Round::new(contexts.to_vec(), arm, reward, None)?;
        self.history = std::mem::take(&mut self.history).recorded(round, None)?;
        Ok(())
    }
}
