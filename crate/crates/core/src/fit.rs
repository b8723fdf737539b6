//! Gradient ascent on the penalised surrogate log-likelihood, optionally
//! with a reward-bias term. Shared by every neural agent.
//!
//! The maximised objective is
//!
//! ```text
//! ℓ†_λ(θ) + α·f(x_bias; θ)
//!   = Σ_s (w·r_s·z_s − b(z_s)) − (mλ/2)·‖θ − θ₀‖² + α·f(x_bias; θ)
//! ```
//!
//! and each step is `θ ← θ + η_eff · ∇`, where `η_eff = η` for raw steps and
//! `η / max(1, n)` for history-normalised steps (`n` played rounds). Both
//! settings share their fixed points; normalisation only keeps the step
//! stable as the full-batch sum grows with `n`.

use crate::bandit::History;
use crate::error::{check_len, Error, Result};
use crate::kernel::{has_equal_halves, Inputs, Prepared, Workspace};
use crate::net::{axpy, NetworkParams};
use crate::surrogate::SurrogateFamily;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AscentSettings {
    pub steps: usize,
    pub step_size: f64,
    pub normalize: bool,
}

impl AscentSettings {
    pub fn effective_step(&self, history_len: usize) -> f64 {
        if self.normalize {
            self.step_size / history_len.max(1) as f64
        } else {
            self.step_size
        }
    }
}

/// Reward-bias term `α·f(x; θ)`.
#[derive(Debug, Clone, Copy)]
pub struct Bias<'a> {
    pub context: &'a [f64],
    pub alpha: f64,
}

/// `ℓ†_λ` for a fixed family, history, anchor `θ₀` and ridge `λ`.
#[derive(Debug, Clone, Copy)]
pub struct PenalisedLikelihood<'a> {
    pub family: &'a SurrogateFamily,
    pub history: &'a History,
    pub anchor: &'a NetworkParams,
    pub lambda: f64,
}

impl<'a> PenalisedLikelihood<'a> {
    pub fn new(
        family: &'a SurrogateFamily,
        history: &'a History,
        anchor: &'a NetworkParams,
        lambda: f64,
    ) -> Self {
        Self {
            family,
            history,
            anchor,
            lambda,
        }
    }

    /// `m·λ`.
    pub fn reg(&self) -> f64 {
        self.anchor.config().hidden_width() as f64 * self.lambda
    }

    fn check(&self, params: &NetworkParams, bias: Option<Bias<'_>>) -> Result<()> {
        check_len("parameter vector", self.anchor.len(), params.len())?;
        let d = self.anchor.config().input_dim();
        if let Some((x, _)) = self.history.played().next() {
            check_len("history context", d, x.len())?;
        }
        if let Some(b) = bias {
            check_len("arm context", d, b.context.len())?;
        }
        Ok(())
    }

    /// `ℓ†_λ(θ)`.
    pub fn value(&self, params: &NetworkParams) -> Result<f64> {
        self.objective(params, None)
    }

    /// `ℓ†_λ(θ) + α·f(x; θ)`.
    pub fn objective(&self, params: &NetworkParams, bias: Option<Bias<'_>>) -> Result<f64> {
        self.check(params, bias)?;
        let mut batch = self.batch(bias);
        Ok(batch.value(params, self))
    }

    /// Gradient of the objective at `params`.
    pub fn gradient(&self, params: &NetworkParams, bias: Option<Bias<'_>>) -> Result<Vec<f64>> {
        self.check(params, bias)?;
        let mut batch = self.batch(bias);
        let mut grad = vec![0.0; params.len()];
        batch.value_and_grad(params, self, &mut grad);
        Ok(grad)
    }

    fn batch(&self, bias: Option<Bias<'_>>) -> Batch {
        let mut contexts: Vec<&[f64]> = Vec::with_capacity(self.history.len() + 1);
        let mut rewards = Vec::with_capacity(self.history.len());
        for (ctx, r) in self.history.played() {
            contexts.push(ctx);
            rewards.push(r);
        }
        if let Some(b) = bias {
            contexts.push(b.context);
        }
        let folded = contexts.iter().all(|x| has_equal_halves(x));
        let prep = Prepared::new(self.anchor, folded);
        Batch {
            inputs: Inputs::new(contexts, prep.input_len()),
            folded,
            ws: prep.workspace(),
            rewards,
            alpha: bias.map(|b| b.alpha),
        }
    }

    /// Runs exactly `settings.steps` ascent steps from `init`. When `trace` is
    /// given it receives the objective at every iterate, `steps + 1` values.
    pub fn ascend(
        &self,
        init: NetworkParams,
        bias: Option<Bias<'_>>,
        settings: &AscentSettings,
        mut trace: Option<&mut Vec<f64>>,
    ) -> Result<NetworkParams> {
        self.check(&init, bias)?;
        let eta = settings.effective_step(self.history.len());
        let config = *init.config();
        let mut params = init;
        let mut batch = self.batch(bias);
        let mut grad = vec![0.0; params.len()];
        for step in 0..settings.steps {
            let value = batch.value_and_grad(&params, self, &mut grad);
            if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Numeric {
                    step,
                    message: format!("objective {value} or its gradient is not finite"),
                });
            }
            if let Some(tr) = trace.as_deref_mut() {
                tr.push(value);
            }
            if eta != 0.0 {
                let mut theta = params.into_flat();
                axpy(&mut theta, eta, &grad);
                params = NetworkParams::from_flat(config, theta)?;
            }
        }
        if !params.is_finite() {
            return Err(Error::Numeric {
                step: settings.steps,
                message: "parameters are not finite after ascent".into(),
            });
        }
        if let Some(tr) = trace {
            tr.push(batch.value(&params, self));
        }
        Ok(params)
    }
}

/// History (and bias context) as kernel inputs, reused across ascent steps.
/// Folded when every context has equal halves.
struct Batch {
    inputs: Inputs,
    folded: bool,
    ws: Workspace,
    rewards: Vec<f64>,
    alpha: Option<f64>,
}

impl Batch {
    /// Objective value, adding its gradient into `grad` when given. `grad`
    /// must hold the ridge part already.
    fn evaluate(
        &mut self,
        params: &NetworkParams,
        obj: &PenalisedLikelihood<'_>,
        grad: Option<&mut [f64]>,
    ) -> f64 {
        let (rewards, alpha, family) = (&self.rewards, self.alpha.unwrap_or(0.0), obj.family);
        // Log-likelihood terms for the history, then `α·f` for the bias context.
        let term = |i: usize, z: f64| match rewards.get(i) {
            Some(&r) => (family.log_density(r, z), family.score(r, z)),
            None => (alpha * z, alpha),
        };
        let prep = Prepared::new(params, self.folded);
        let total = prep.evaluate(&self.inputs, &mut self.ws, term, grad);
        total - 0.5 * obj.reg() * params.distance_sq(obj.anchor).unwrap_or(f64::NAN)
    }

    fn value(&mut self, params: &NetworkParams, obj: &PenalisedLikelihood<'_>) -> f64 {
        self.evaluate(params, obj, None)
    }

    fn value_and_grad(
        &mut self,
        params: &NetworkParams,
        obj: &PenalisedLikelihood<'_>,
        grad: &mut [f64],
    ) -> f64 {
        let reg = obj.reg();
        for ((g, &t), &t0) in grad
            .iter_mut()
            .zip(params.as_flat())
            .zip(obj.anchor.as_flat())
        {
            *g = -reg * (t - t0);
        }
        self.evaluate(params, obj, Some(grad))
    }
}
