//! Comparison agents: a NeuralUCB-style index policy, linear RBMLE on the
//! raw contexts, and uniform random play.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::bandit::{argmax_lowest, Agent, ContextVector, History, Round};
use crate::error::{check_len, Error, Result};
use crate::fit::{AscentSettings, PenalisedLikelihood};
use crate::net::{GradientVector, NetworkParams};
use crate::par::{map_range, Execution};
use crate::rbmle_ga::alpha;
use crate::rbmle_pc::{PrecisionFactor, PrecisionMatrix, PrecisionMode};
use crate::rng::SeededRng;
use crate::surrogate::SurrogateFamily;

/// `f(x; θ̂) + γ·√(gᵀZ⁻¹g / m)` with `g = g(x; θ̂)`.
pub fn neural_ucb_index(
    estimate: &NetworkParams,
    z: &PrecisionMatrix,
    x: &[f64],
    gamma: f64,
    width: usize,
) -> Result<f64> {
    ucb_with_factor(estimate, &z.factor()?, x, gamma, width).map(|(v, _)| v)
}

fn ucb_with_factor(
    estimate: &NetworkParams,
    factor: &PrecisionFactor,
    x: &[f64],
    gamma: f64,
    width: usize,
) -> Result<(f64, GradientVector)> {
    if !(gamma >= 0.0) {
        return Err(Error::Contract(format!(
            "gamma must be non-negative, got {gamma}"
        )));
    }
    let value = estimate.forward(x)?;
    let g = estimate.gradient(x)?;
    let q = factor.quadratic_form(g.as_slice())?.max(0.0);
    Ok((value + gamma * (q / width as f64).sqrt(), g))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeuralUcbConfig {
    pub gamma: f64,
    pub steps: usize,
    pub step_size: f64,
    pub lambda: f64,
    pub precision_mode: PrecisionMode,
    pub normalize_steps: bool,
}

impl Default for NeuralUcbConfig {
    fn default() -> Self {
        Self {
            gamma: 0.1,
            steps: 100,
            step_size: 1e-3,
            lambda: 1e-3,
            precision_mode: PrecisionMode::Diagonal,
            normalize_steps: true,
        }
    }
}

impl NeuralUcbConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config("J must be at least 1".into()));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!(
                "gamma must be non-negative, got {}",
                self.gamma
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
}

/// Greedy network estimate plus a gradient-based confidence bonus.
#[derive(Debug, Clone)]
pub struct NeuralUcbAgent {
    config: NeuralUcbConfig,
    anchor: NetworkParams,
    estimate: NetworkParams,
    precision: PrecisionMatrix,
    history: History,
    pending_grads: Vec<GradientVector>,
    indices: Vec<f64>,
    execution: Execution,
}

impl NeuralUcbAgent {
    pub fn new(config: NeuralUcbConfig, anchor: NetworkParams) -> Result<Self> {
        config.validate()?;
        let precision = PrecisionMatrix::new(config.precision_mode, anchor.len(), config.lambda)?;
        Ok(Self {
            config,
            estimate: anchor.clone(),
            anchor,
            precision,
            history: History::new(),
            pending_grads: Vec::new(),
            indices: Vec::new(),
            execution: Execution::default(),
        })
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    pub fn precision(&self) -> &PrecisionMatrix {
        &self.precision
    }

    pub fn indices(&self) -> &[f64] {
        &self.indices
    }
}

impl Agent for NeuralUcbAgent {
    fn name(&self) -> &str {
        "neural-ucb"
    }

    fn select(&mut self, _t: usize, contexts: &[ContextVector]) -> Result<usize> {
        if contexts.is_empty() {
            return Err(Error::Contract("at least one arm is required".into()));
        }
        let width = self.anchor.config().hidden_width();
        let factor = self.precision.factor()?;
        let (estimate, gamma) = (&self.estimate, self.config.gamma);
        let scored = map_range(self.execution, contexts.len(), |a| {
            ucb_with_factor(estimate, &factor, &contexts[a], gamma, width)
        });
        let (indices, grads): (Vec<_>, Vec<_>) = scored
            .into_iter()
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .unzip();
        self.indices = indices;
        self.pending_grads = grads;
        Ok(argmax_lowest(&self.indices))
    }

    fn observe(
        &mut self,
        _t: usize,
        contexts: &[ContextVector],
        arm: usize,
        reward: f64,
    ) -> Result<()> {
        let grad = match self.pending_grads.get(arm) {
            Some(g) if self.pending_grads.len() == contexts.len() => g.clone(),
            _ => self.estimate.gradient(
                contexts
                    .get(arm)
                    .ok_or_else(|| Error::Contract(format!("arm {arm} out of range")))?,
            )?,
        };
        self.pending_grads.clear();
        let round = Round::new(contexts.to_vec(), arm, reward, None)?;
        self.history = std::mem::take(&mut self.history).recorded(round, None)?;
        let width = self.anchor.config().hidden_width();
        self.precision = self.precision.update(grad.as_slice(), width)?;
        let family = SurrogateFamily::gaussian();
        let settings = AscentSettings {
            steps: self.config.steps,
            step_size: self.config.step_size,
            normalize: self.config.normalize_steps,
        };
        self.estimate =
            PenalisedLikelihood::new(&family, &self.history, &self.anchor, self.config.lambda)
                .ascend(self.estimate.clone(), None, &settings, None)?;
        Ok(())
    }
}

/// Ridge statistics `V = λI + Σ x xᵀ`, `b = Σ r x`, with `V⁻¹` kept current
/// by Sherman–Morrison updates.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModelState {
    v: DMatrix<f64>,
    v_inv: DMatrix<f64>,
    b: DVector<f64>,
    lambda: f64,
}

impl LinearModelState {
    pub fn new(dim: usize, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Config(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        Ok(Self {
            v: DMatrix::from_diagonal_element(dim, dim, lambda),
            v_inv: DMatrix::from_diagonal_element(dim, dim, 1.0 / lambda),
            b: DVector::zeros(dim),
            lambda,
        })
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn v_inv(&self) -> &DMatrix<f64> {
        &self.v_inv
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    /// `θ̂_lin = V⁻¹ b`.
    pub fn theta(&self) -> DVector<f64> {
        &self.v_inv * &self.b
    }

    pub fn update(&mut self, x: &[f64], reward: f64) -> Result<()> {
        check_len("linear context", self.dim(), x.len())?;
        let x = DVector::from_column_slice(x);
        self.v.ger(1.0, &x, &x, 1.0);
        self.b.axpy(reward, &x, 1.0);
        let vx = &self.v_inv * &x;
        let denom = 1.0 + x.dot(&vx);
        self.v_inv.ger(-1.0 / denom, &vx, &vx, 1.0);
        Ok(())
    }
}

/// `xᵀθ̂_lin + (α_t/2)·xᵀV⁻¹x`.
pub fn lin_rbmle_index(state: &LinearModelState, x: &[f64], alpha_t: f64) -> Result<f64> {
    check_len("linear context", state.dim(), x.len())?;
    let x = DVector::from_column_slice(x);
    let vx = state.v_inv() * &x;
    Ok(vx.dot(state.b()) + 0.5 * alpha_t * x.dot(&vx))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinRbmleConfig {
    pub lambda: f64,
    /// Bias scale: `α(t) = ν·√t`.
    pub nu: f64,
}

impl Default for LinRbmleConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            nu: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LinRbmleAgent {
    config: LinRbmleConfig,
    state: LinearModelState,
}

impl LinRbmleAgent {
    pub fn new(config: LinRbmleConfig, dim: usize) -> Result<Self> {
        if !(config.nu >= 0.0 && config.nu.is_finite()) {
            return Err(Error::Config(format!(
                "nu must be non-negative, got {}",
                config.nu
            )));
        }
        Ok(Self {
            state: LinearModelState::new(dim, config.lambda)?,
            config,
        })
    }

    pub fn state(&self) -> &LinearModelState {
        &self.state
    }
}

impl Agent for LinRbmleAgent {
    fn name(&self) -> &str {
        "lin-rbmle"
    }

    fn select(&mut self, t: usize, contexts: &[ContextVector]) -> Result<usize> {
        if contexts.is_empty() {
            return Err(Error::Contract("at least one arm is required".into()));
        }
        let alpha_t = alpha(self.config.nu, t);
        let indices = contexts
            .iter()
            .map(|x| lin_rbmle_index(&self.state, x, alpha_t))
            .collect::<Result<Vec<_>>>()?;
        Ok(argmax_lowest(&indices))
    }

    fn observe(
        &mut self,
        _t: usize,
        contexts: &[ContextVector],
        arm: usize,
        reward: f64,
    ) -> Result<()> {
        let x = contexts
            .get(arm)
            .ok_or_else(|| Error::Contract(format!("arm {arm} out of range")))?;
        self.state.update(x, reward)
    }
}

/// Uniform arm in `0..k`.
pub fn random_policy<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Result<usize> {
    if k == 0 {
        return Err(Error::Contract("at least one arm is required".into()));
    }
    Ok(rng.random_range(0..k))
}

#[derive(Debug, Clone)]
pub struct RandomAgent {
    rng: SeededRng,
}

impl RandomAgent {
    pub fn new(rng: SeededRng) -> Self {
        Self { rng }
    }
}

impl Agent for RandomAgent {
    fn name(&self) -> &str {
        "random"
    }

    fn select(&mut self, _t: usize, contexts: &[ContextVector]) -> Result<usize> {
        random_policy(contexts.len(), &mut self.rng)
    }

    fn observe(&mut self, _: usize, _: &[ContextVector], _: usize, _: f64) -> Result<()> {
        Ok(())
    }
}
