//! Reward-biased MLE by parameter correction.
//!
//! One base estimator `θ̂` is fitted per round on the Gaussian surrogate
//! likelihood. The arm-specific estimators are then approximated by a single
//! correction step `θ̄_a = θ̂ + (α(t)/m)·Z⁻¹·g(x_a; θ̂)` with the running
//! precision `Z = λI + (1/m)·Σ g gᵀ`, and the arm with the largest
//! `f(x_a; θ̄_a)` is played.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::bandit::{argmax_lowest, Agent, ContextVector, History, Round};
use crate::error::{check_len, Error, Result};
use crate::fit::{AscentSettings, PenalisedLikelihood};
use crate::net::{GradientVector, NetworkParams};
use crate::par::{map_range, Execution};
use crate::rbmle_ga::alpha;
use crate::surrogate::SurrogateFamily;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PrecisionMode {
    Full,
    #[default]
    Diagonal,
}

impl fmt::Display for PrecisionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PrecisionMode::Full => "full",
            PrecisionMode::Diagonal => "diagonal",
        })
    }
}

impl FromStr for PrecisionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "full" => Ok(PrecisionMode::Full),
            "diagonal" | "diag" => Ok(PrecisionMode::Diagonal),
            other => Err(Error::Config(format!(
                "unknown precision_mode '{other}' (expected full or diagonal)"
            ))),
        }
    }
}

/// `Z = λI + (1/m)·Σ g gᵀ`, kept either in full or as its diagonal.
#[derive(Debug, Clone, PartialEq)]
pub enum PrecisionMatrix {
    Full { z: DMatrix<f64>, lambda: f64 },
    Diagonal { diag: Vec<f64>, lambda: f64 },
}

impl PrecisionMatrix {
    /// `λI` of size `p`.
    pub fn new(mode: PrecisionMode, p: usize, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::Config(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        Ok(match mode {
            PrecisionMode::Full => PrecisionMatrix::Full {
                z: DMatrix::from_diagonal_element(p, p, lambda),
                lambda,
            },
            PrecisionMode::Diagonal => PrecisionMatrix::Diagonal {
                diag: vec![lambda; p],
                lambda,
            },
        })
    }

    pub fn mode(&self) -> PrecisionMode {
        match self {
            PrecisionMatrix::Full { .. } => PrecisionMode::Full,
            PrecisionMatrix::Diagonal { .. } => PrecisionMode::Diagonal,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            PrecisionMatrix::Full { z, .. } => z.nrows(),
            PrecisionMatrix::Diagonal { diag, .. } => diag.len(),
        }
    }

    pub fn lambda(&self) -> f64 {
        match self {
            PrecisionMatrix::Full { lambda, .. } | PrecisionMatrix::Diagonal { lambda, .. } => {
                *lambda
            }
        }
    }

    /// Dense copy of `Z` (the diagonal mode expands to a diagonal matrix).
    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            PrecisionMatrix::Full { z, .. } => z.clone(),
            PrecisionMatrix::Diagonal { diag, .. } => {
                DMatrix::from_diagonal(&DVector::from_column_slice(diag))
            }
        }
    }

    /// `Z + g gᵀ / m`, or `Z_ii + g_i² / m` entrywise in diagonal mode.
    pub fn update(&self, grad: &[f64], width: usize) -> Result<Self> {
        check_len("gradient", self.dim(), grad.len())?;
        let scale = 1.0 / width as f64;
        let mut out = self.clone();
        match &mut out {
            PrecisionMatrix::Full { z, .. } => {
                let g = DVector::from_column_slice(grad);
                z.ger(scale, &g, &g, 1.0);
            }
            PrecisionMatrix::Diagonal { diag, .. } => {
                for (d, g) in diag.iter_mut().zip(grad) {
                    *d += scale * g * g;
                }
            }
        }
        Ok(out)
    }

    /// Factorisation to reuse across several solves.
    pub fn factor(&self) -> Result<PrecisionFactor> {
        match self {
            PrecisionMatrix::Full { z, .. } => Cholesky::new(z.clone())
                .map(PrecisionFactor::Full)
                .ok_or_else(|| Error::Numeric {
                    step: 0,
                    message: "precision matrix is not positive definite".into(),
                }),
            PrecisionMatrix::Diagonal { diag, .. } => {
                if diag.iter().any(|&d| !(d > 0.0)) {
                    return Err(Error::Numeric {
                        step: 0,
                        message: "diagonal precision has a non-positive entry".into(),
                    });
                }
                Ok(PrecisionFactor::Diagonal(diag.clone()))
            }
        }
    }

    /// `Z⁻¹ v`.
    pub fn solve(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.factor()?.solve(v)
    }
}

#[derive(Debug, Clone)]
pub enum PrecisionFactor {
    Full(Cholesky<f64, Dyn>),
    Diagonal(Vec<f64>),
}

impl PrecisionFactor {
    pub fn dim(&self) -> usize {
        match self {
            PrecisionFactor::Full(c) => c.l_dirty().nrows(),
            PrecisionFactor::Diagonal(d) => d.len(),
        }
    }

    pub fn solve(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len("right-hand side", self.dim(), v.len())?;
        Ok(match self {
            PrecisionFactor::Full(c) => c.solve(&DVector::from_column_slice(v)).data.into(),
            PrecisionFactor::Diagonal(d) => v.iter().zip(d).map(|(a, b)| a / b).collect(),
        })
    }

    /// `vᵀ Z⁻¹ v`.
    pub fn quadratic_form(&self, v: &[f64]) -> Result<f64> {
        let s = self.solve(v)?;
        Ok(s.iter().zip(v).map(|(a, b)| a * b).sum())
    }
}

pub fn update_precision(
    z: &PrecisionMatrix,
    grad: &GradientVector,
    width: usize,
) -> Result<PrecisionMatrix> {
    z.update(grad.as_slice(), width)
}

pub fn solve_precision(z: &PrecisionMatrix, v: &[f64]) -> Result<Vec<f64>> {
    z.solve(v)
}

/// `θ̂ + (α_t/m)·Z⁻¹·g`.
pub fn correct_params(
    base: &NetworkParams,
    z: &PrecisionMatrix,
    grad_arm: &GradientVector,
    alpha_t: f64,
    width: usize,
) -> Result<NetworkParams> {
    correct_with_factor(base, &z.factor()?, grad_arm, alpha_t, width)
}

fn correct_with_factor(
    base: &NetworkParams,
    factor: &PrecisionFactor,
    grad_arm: &GradientVector,
    alpha_t: f64,
    width: usize,
) -> Result<NetworkParams> {
    if !(alpha_t >= 0.0) {
        return Err(Error::Contract(format!(
            "alpha must be non-negative, got {alpha_t}"
        )));
    }
    if alpha_t == 0.0 {
        check_len("gradient", base.len(), grad_arm.len())?;
        return Ok(base.clone());
    }
    let dir = factor.solve(grad_arm.as_slice())?;
    base.axpy(&dir, alpha_t / width as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcConfig {
    pub nu: f64,
    pub steps: usize,
    pub step_size: f64,
    pub lambda: f64,
    pub precision_mode: PrecisionMode,
    pub normalize_steps: bool,
}

impl Default for PcConfig {
    fn default() -> Self {
        Self {
            nu: 0.1,
            steps: 100,
            step_size: 1e-3,
            lambda: 1e-3,
            precision_mode: PrecisionMode::Diagonal,
            normalize_steps: true,
        }
    }
}

impl PcConfig {
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

/// `J` ascent steps on the Gaussian `ℓ†_λ` (no reward bias) from `init`.
pub fn fit_base_estimator(
    history: &History,
    config: &PcConfig,
    anchor: &NetworkParams,
    init: NetworkParams,
) -> Result<NetworkParams> {
    config.validate()?;
    let family = SurrogateFamily::gaussian();
    PenalisedLikelihood::new(&family, history, anchor, config.lambda).ascend(
        init,
        None,
        &config.ascent(),
        None,
    )
}

/// Parameter-correction agent.
#[derive(Debug, Clone)]
pub struct PcAgent {
    config: PcConfig,
    anchor: NetworkParams,
    base: NetworkParams,
    precision: PrecisionMatrix,
    history: History,
    /// `g(x_{t,a}; θ̂_t)` for every arm of the pending round.
    pending_grads: Vec<GradientVector>,
    indices: Vec<f64>,
    execution: Execution,
}

impl PcAgent {
    pub fn new(config: PcConfig, anchor: NetworkParams) -> Result<Self> {
        config.validate()?;
        let precision = PrecisionMatrix::new(config.precision_mode, anchor.len(), config.lambda)?;
        Ok(Self {
            config,
            base: anchor.clone(),
            anchor,
            precision,
            history: History::with_gradient_cache(),
            pending_grads: Vec::new(),
            indices: Vec::new(),
            execution: Execution::default(),
        })
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    pub fn base_estimator(&self) -> &NetworkParams {
        &self.base
    }

    pub fn precision(&self) -> &PrecisionMatrix {
        &self.precision
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    /// Surrogate indices `f(x_a; θ̄_a)` from the latest round.
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
        let width = self.anchor.config().hidden_width();
        let alpha_t = alpha(self.config.nu, t);
        let factor = self.precision.factor()?;
        let base = &self.base;
        let scored: Vec<Result<(GradientVector, f64)>> =
            map_range(self.execution, contexts.len(), |a| {
                let g = base.gradient(&contexts[a])?;
                let corrected = correct_with_factor(base, &factor, &g, alpha_t, width)?;
                let index = corrected.forward(&contexts[a])?;
                Ok((g, index))
            });
        let (grads, indices): (Vec<_>, Vec<_>) = scored
            .into_iter()
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .unzip();
        self.pending_grads = grads;
        self.indices = indices;
        Ok(argmax_lowest(&self.indices))
    }
}

impl Agent for PcAgent {
    fn name(&self) -> &str {
        "rbmle-pc"
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
        let grad = match self.pending_grads.get(arm) {
            Some(g) if self.pending_grads.len() == contexts.len() => g.clone(),
            _ => self.base.gradient(
                contexts
                    .get(arm)
                    .ok_or_else(|| Error::Contract(format!("arm {arm} out of range")))?,
            )?,
        };
        self.pending_grads.clear();
        let round = Round::new(contexts.to_vec(), arm, reward, None)?;
        self.history = std::mem::take(&mut self.history).recorded(round, Some(grad.clone()))?;
        let width = self.anchor.config().hidden_width();
        self.precision = self.precision.update(grad.as_slice(), width)?;
        self.base =
            fit_base_estimator(&self.history, &self.config, &self.anchor, self.base.clone())?;
        Ok(())
    }
}
