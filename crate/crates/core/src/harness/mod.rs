//! Experiment orchestration: builds environments and agents from an
//! [`ExperimentConfig`], runs seeded trials and writes CSV output.
//!
//! Each trial draws from three independent streams of the master seed
//! (environment, network initialisation, policy), so two algorithms run on
//! the same trial index see identical contexts and rewards, and trials can
//! run in any order or in parallel without changing a single output byte.

mod config;
mod output;

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

pub use config::{Algo, EnvSpec, ExperimentConfig, KEYS};
pub use output::{
    format_decimal, mean_std, read_trace_file, write_summary, write_summary_file, write_trace,
    write_trace_file, SummaryRow, SUMMARY_HEADER, TRACE_HEADER,
};

use crate::bandit::{Agent, RegretTrace};
use crate::baselines::{LinRbmleAgent, NeuralUcbAgent, RandomAgent};
use crate::env::{load_dataset, Dataset, DatasetEnv, DatasetFormat, Environment, SyntheticEnv};
use crate::error::{Error, Result};
use crate::net::{NetworkConfig, NetworkParams};
use crate::par::{map_range, with_thread_cap};
use crate::rbmle_ga::GaAgent;
use crate::rbmle_pc::PcAgent;
use crate::rng::{trial_rng, Purpose, SeededRng};
use crate::surrogate::SurrogateFamily;

/// Environment variable capping the number of worker threads.
pub const THREADS_VAR: &str = "RBMLE_THREADS";

/// A trial that stopped early.
#[derive(Debug)]
pub struct TrialFailure {
    /// Round at which the error occurred.
    pub t: usize,
    pub error: Error,
    /// Rounds completed before the failure.
    pub partial: RegretTrace,
}

impl std::fmt::Display for TrialFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "failed at t={}: {}", self.t, self.error)
    }
}

impl std::error::Error for TrialFailure {}

/// Plays `horizon` rounds of `agent` against `env`.
pub fn play(
    env: &mut dyn Environment,
    agent: &mut dyn Agent,
    horizon: usize,
    env_rng: &mut SeededRng,
) -> Result<RegretTrace, TrialFailure> {
    let mut trace = RegretTrace::new();
    for t in 1..=horizon {
        let step = (|| -> Result<()> {
            let round = env.step(t, env_rng)?;
            let arm = agent.select(t, &round.contexts)?;
            if arm >= round.contexts.len() {
                return Err(Error::Contract(format!(
                    "agent chose arm {arm} of {}",
                    round.contexts.len()
                )));
            }
            let reward = round.rewards[arm];
            trace.push(arm, reward, round.optimal_mean(), round.means[arm]);
            agent.observe(t, &round.contexts, arm, reward)
        })();
        if let Err(error) = step {
            return Err(TrialFailure {
                t,
                error,
                partial: trace,
            });
        }
    }
    Ok(trace)
}

/// A validated configuration with its dataset loaded.
#[derive(Debug, Clone)]
pub struct Experiment {
    config: ExperimentConfig,
    dataset: Option<Arc<Dataset>>,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let dataset = match &config.env {
            EnvSpec::Dataset(path) => {
                Some(Arc::new(load_dataset(path, DatasetFormat::CsvLabelFirst)?))
            }
            EnvSpec::Synthetic(_) => None,
        };
        let exp = Self { config, dataset };
        if exp.config.algo.is_neural() {
            NetworkConfig::new(exp.context_dim(), exp.config.width, exp.config.depth)?;
        }
        Ok(exp)
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    /// Length of the contexts the environment emits, which is the network
    /// input dimension.
    pub fn context_dim(&self) -> usize {
        match &self.dataset {
            Some(ds) => 2 * ds.feature_dim() * ds.num_classes(),
            None => 2 * self.config.synthetic_dim,
        }
    }

    pub fn env_label(&self) -> String {
        self.config.env.to_string()
    }

    /// Fresh environment for `trial`, built from the trial's environment
    /// stream, together with that stream.
    pub fn environment(&self, trial: usize) -> Result<(Box<dyn Environment>, SeededRng)> {
        let mut rng = trial_rng(self.config.master_seed, trial as u64, Purpose::Environment);
        let env: Box<dyn Environment> = match (&self.config.env, &self.dataset) {
            (EnvSpec::Synthetic(kind), _) => Box::new(SyntheticEnv::new(
                *kind,
                self.config.synthetic_dim,
                self.config.arms,
                self.config.noise,
                &mut rng,
            )?),
            (EnvSpec::Dataset(_), Some(ds)) => Box::new(
                DatasetEnv::new(ds.clone(), self.config.on_exhaust, &mut rng)?
                    .with_label(self.env_label()),
            ),
            (EnvSpec::Dataset(p), None) => {
                return Err(Error::Config(format!("dataset {} not loaded", p.display())))
            }
        };
        Ok((env, rng))
    }

    /// Fresh agent for `trial`.
    pub fn agent(&self, trial: usize) -> Result<Box<dyn Agent>> {
        let c = &self.config;
        let anchor = || -> Result<NetworkParams> {
            let net = NetworkConfig::new(self.context_dim(), c.width, c.depth)?;
            let mut rng = trial_rng(c.master_seed, trial as u64, Purpose::Init);
            Ok(NetworkParams::init_symmetric(net, &mut rng))
        };
        Ok(match c.algo {
            Algo::RbmleGa => Box::new(
                GaAgent::new(SurrogateFamily::new(c.likelihood), c.ga_config(), anchor()?)?
                    .with_execution(c.execution),
            ),
            Algo::RbmlePc => {
                Box::new(PcAgent::new(c.pc_config(), anchor()?)?.with_execution(c.execution))
            }
            Algo::NeuralUcb => Box::new(
                NeuralUcbAgent::new(c.ucb_config(), anchor()?)?.with_execution(c.execution),
            ),
            Algo::LinRbmle => Box::new(LinRbmleAgent::new(c.lin_config(), self.context_dim())?),
            Algo::Random => Box::new(RandomAgent::new(trial_rng(
                c.master_seed,
                trial as u64,
                Purpose::Policy,
            ))),
        })
    }

    pub fn run_trial(&self, trial: usize) -> Result<RegretTrace, TrialFailure> {
        let fail = |error| TrialFailure {
            t: 0,
            error,
            partial: RegretTrace::new(),
        };
        let (mut env, mut env_rng) = self.environment(trial).map_err(fail)?;
        let mut agent = self.agent(trial).map_err(fail)?;
        play(
            env.as_mut(),
            agent.as_mut(),
            self.config.horizon,
            &mut env_rng,
        )
    }

    /// Runs every trial, in parallel unless configured otherwise, with at
    /// most `RBMLE_THREADS` workers when that variable is set.
    pub fn run(&self) -> Result<ExperimentReport> {
        let threads = threads_from_env()?;
        let outcomes = with_thread_cap(threads, || {
            map_range(self.config.execution, self.config.trials, |trial| {
                let start = Instant::now();
                let out = self.run_trial(trial);
                (out, start.elapsed().as_secs_f64())
            })
        });
        let algo = self.config.algo_label();
        let env = self.env_label();
        let mut rows = Vec::with_capacity(outcomes.len());
        let mut traces = Vec::with_capacity(outcomes.len());
        for (trial, (outcome, secs)) in outcomes.into_iter().enumerate() {
            let (regret, status, trace) = match outcome {
                Ok(trace) => (Some(trace.cumulative_regret()), "ok".to_string(), trace),
                Err(f) => (None, f.to_string(), f.partial),
            };
            rows.push(SummaryRow {
                algo: algo.clone(),
                env: env.clone(),
                trial,
                final_cumulative_regret: regret,
                wall_time_seconds: self.config.timing.then_some(secs),
                status,
            });
            traces.push(trace);
        }
        Ok(ExperimentReport { rows, traces })
    }
}

/// `RBMLE_THREADS`, when set.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_VAR) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(Error::Config(format!(
                "{THREADS_VAR} must be a positive integer, got '{v}'"
            ))),
        },
        Err(_) => Ok(None),
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub rows: Vec<SummaryRow>,
    /// One per trial; partial for failed trials.
    pub traces: Vec<RegretTrace>,
}

impl ExperimentReport {
    pub fn final_regrets(&self) -> Vec<f64> {
        self.rows
            .iter()
            .filter_map(|r| r.final_cumulative_regret)
            .collect()
    }

    /// Mean and sample standard deviation of the final regret.
    pub fn mean_std(&self) -> (f64, f64) {
        mean_std(&self.final_regrets())
    }

    pub fn all_ok(&self) -> bool {
        self.rows
            .iter()
            .all(|r| r.final_cumulative_regret.is_some())
    }

    /// Writes `trace_{algo}_trial{i}.csv` for every trial and `summary.csv`;
    /// returns the paths written.
    pub fn write_to(&self, dir: &std::path::Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for (row, trace) in self.rows.iter().zip(&self.traces) {
            let path = dir.join(trace_file_name(&row.algo, row.trial));
            write_trace_file(trace, &path)?;
            written.push(path);
        }
        let path = dir.join("summary.csv");
        write_summary_file(&self.rows, &path)?;
        written.push(path);
        Ok(written)
    }
}

pub fn trace_file_name(algo: &str, trial: usize) -> String {
    format!("trace_{algo}_trial{trial}.csv")
}

pub fn run_trial(config: &ExperimentConfig, trial: usize) -> Result<RegretTrace, TrialFailure> {
    let exp = Experiment::new(config.clone()).map_err(|error| TrialFailure {
        t: 0,
        error,
        partial: RegretTrace::new(),
    })?;
    exp.run_trial(trial)
}

/// Runs the experiment and, if `output_dir` is set, writes its CSVs.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let exp = Experiment::new(config.clone())?;
    let report = exp.run()?;
    if let Some(dir) = &config.output_dir {
        report.write_to(dir)?;
    }
    Ok(report)
}
