//! Experiment configuration and its flat `key = value` text form.
//!
//! Grammar: one `key = value` pair per line; `#` starts a comment; blank
//! lines are ignored; later assignments win. Command-line flags go through
//! the same [`ExperimentConfig::set`] after the file, so they override it.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::baselines::{LinRbmleConfig, NeuralUcbConfig};
use crate::env::{OnExhaust, SyntheticKind};
use crate::error::{Error, Result};
use crate::par::Execution;
use crate::rbmle_ga::{GaConfig, Zeta};
use crate::rbmle_pc::{PcConfig, PrecisionMode};
use crate::surrogate::FamilyName;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algo {
    RbmleGa,
    RbmlePc,
    NeuralUcb,
    LinRbmle,
    Random,
}

impl Algo {
    pub const ALL: [Algo; 5] = [
        Algo::RbmleGa,
        Algo::RbmlePc,
        Algo::NeuralUcb,
        Algo::LinRbmle,
        Algo::Random,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algo::RbmleGa => "rbmle-ga",
            Algo::RbmlePc => "rbmle-pc",
            Algo::NeuralUcb => "neural-ucb",
            Algo::LinRbmle => "lin-rbmle",
            Algo::Random => "random",
        }
    }

    /// Whether the agent owns a network.
    pub fn is_neural(self) -> bool {
        matches!(self, Algo::RbmleGa | Algo::RbmlePc | Algo::NeuralUcb)
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Algo::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown algo '{s}' (expected one of: {})",
                    Algo::ALL.map(Algo::as_str).join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EnvSpec {
    Synthetic(SyntheticKind),
    Dataset(PathBuf),
}

impl fmt::Display for EnvSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnvSpec::Synthetic(kind) => write!(f, "synthetic:{kind}"),
            EnvSpec::Dataset(path) => write!(f, "dataset:{}", path.display()),
        }
    }
}

impl FromStr for EnvSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().split_once(':') {
            Some(("synthetic", kind)) => Ok(EnvSpec::Synthetic(kind.parse()?)),
            Some(("dataset", path)) if !path.is_empty() => Ok(EnvSpec::Dataset(PathBuf::from(path))),
            _ => Err(Error::Config(format!(
                "unknown env '{s}' (expected synthetic:linear, synthetic:quadratic, synthetic:cosine or dataset:<path>)"
            ))),
        }
    }
}

/// Everything needed to run an experiment. Field defaults follow
/// [`ExperimentConfig::default`]; the text keys are listed in [`KEYS`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub algo: Algo,
    pub env: EnvSpec,
    /// Horizon `T`.
    pub horizon: usize,
    pub trials: usize,
    pub master_seed: u64,
    /// Hidden width `m`.
    pub width: usize,
    /// Depth `L`.
    pub depth: usize,
    pub likelihood: FamilyName,
    pub nu: f64,
    pub steps: usize,
    pub step_size: f64,
    pub lambda: f64,
    pub zeta: Zeta,
    pub warm_start: bool,
    pub normalize_steps: bool,
    pub precision_mode: PrecisionMode,
    pub gamma: f64,
    pub lin_lambda: f64,
    pub lin_nu: f64,
    /// Raw context dimension of synthetic environments.
    pub synthetic_dim: usize,
    pub arms: usize,
    pub noise: f64,
    pub on_exhaust: OnExhaust,
    pub output_dir: Option<PathBuf>,
    /// Record wall-clock time per trial in the summary.
    pub timing: bool,
    pub execution: Execution,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let ga = GaConfig::default();
        Self {
            algo: Algo::RbmleGa,
            env: EnvSpec::Synthetic(SyntheticKind::Cosine),
            horizon: 2000,
            trials: 10,
            master_seed: 0,
            width: 100,
            depth: 2,
            likelihood: FamilyName::Gaussian,
            nu: ga.nu,
            steps: ga.steps,
            step_size: ga.step_size,
            lambda: ga.lambda,
            zeta: ga.zeta,
            warm_start: ga.warm_start,
            normalize_steps: ga.normalize_steps,
            precision_mode: PrecisionMode::Diagonal,
            gamma: NeuralUcbConfig::default().gamma,
            lin_lambda: LinRbmleConfig::default().lambda,
            lin_nu: LinRbmleConfig::default().nu,
            synthetic_dim: 4,
            arms: 4,
            noise: 0.1,
            on_exhaust: OnExhaust::Wrap,
            output_dir: None,
            timing: false,
            execution: Execution::Parallel,
        }
    }
}

/// `(key, description)` for every configuration key.
pub const KEYS: &[(&str, &str)] = &[
    ("algo", "rbmle-ga | rbmle-pc | neural-ucb | lin-rbmle | random (default rbmle-ga)"),
    ("env", "synthetic:linear | synthetic:quadratic | synthetic:cosine | dataset:<csv path> (default synthetic:cosine)"),
    ("T", "horizon, rounds per trial (default 2000)"),
    ("trials", "number of independent trials (default 10)"),
    ("seed", "master seed (default 0)"),
    ("m", "hidden width, even (default 100)"),
    ("L", "network depth, at least 2 (default 2)"),
    ("likelihood", "gaussian | bernoulli | mixture, rbmle-ga only (default gaussian)"),
    ("nu", "bias scale in alpha(t) = nu*sqrt(t) (default 0.1)"),
    ("J", "gradient steps per fit (default 100)"),
    ("eta", "step size (default 0.001)"),
    ("lambda", "ridge for the neural agents (default 0.001)"),
    ("zeta", "one_plus_log | sqrt | constant_one, rbmle-ga index scale (default one_plus_log)"),
    ("warm_start", "true | false, rbmle-ga restarts from the previous estimator (default true)"),
    ("normalize_steps", "true | false, divide eta by the history length (default true)"),
    ("precision_mode", "diagonal | full, rbmle-pc and neural-ucb (default diagonal)"),
    ("gamma", "neural-ucb bonus scale (default 0.1)"),
    ("lin_lambda", "lin-rbmle ridge (default 1)"),
    ("lin_nu", "lin-rbmle bias scale (default 1)"),
    ("dim", "raw context dimension of synthetic envs (default 4)"),
    ("arms", "arms per round of synthetic envs (default 4)"),
    ("noise", "reward noise std of synthetic envs (default 0.1)"),
    ("on_exhaust", "wrap | end, dataset envs after the last row (default wrap)"),
    ("out", "output directory for CSVs (default: none, nothing written)"),
    ("timing", "true | false, fill wall_time_seconds in the summary (default false)"),
    ("execution", "parallel | sequential (default parallel)"),
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value '{}' for {key}", value.trim())))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!(
            "invalid value '{value}' for {key} (expected true or false)"
        ))),
    }
}

impl ExperimentConfig {
    /// Assigns one key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key.trim() {
            "algo" => self.algo = value.parse()?,
            "env" => self.env = value.parse()?,
            "T" => self.horizon = parse(key, value)?,
            "trials" => self.trials = parse(key, value)?,
            "seed" => self.master_seed = parse(key, value)?,
            "m" => self.width = parse(key, value)?,
            "L" => self.depth = parse(key, value)?,
            "likelihood" => self.likelihood = value.parse()?,
            "nu" => self.nu = parse(key, value)?,
            "J" => self.steps = parse(key, value)?,
            "eta" => self.step_size = parse(key, value)?,
            "lambda" => self.lambda = parse(key, value)?,
            "zeta" => self.zeta = value.parse()?,
            "warm_start" => self.warm_start = parse_bool(key, value)?,
            "normalize_steps" => self.normalize_steps = parse_bool(key, value)?,
            "precision_mode" => self.precision_mode = value.parse()?,
            "gamma" => self.gamma = parse(key, value)?,
            "lin_lambda" => self.lin_lambda = parse(key, value)?,
            "lin_nu" => self.lin_nu = parse(key, value)?,
            "dim" => self.synthetic_dim = parse(key, value)?,
            "arms" => self.arms = parse(key, value)?,
            "noise" => self.noise = parse(key, value)?,
            "on_exhaust" => self.on_exhaust = value.parse()?,
            "out" => self.output_dir = Some(PathBuf::from(value.trim())),
            "timing" => self.timing = parse_bool(key, value)?,
            "execution" => {
                self.execution = match value.trim() {
                    "parallel" => Execution::Parallel,
                    "sequential" => Execution::Sequential,
                    _ => {
                        return Err(Error::Config(format!(
                        "invalid value '{value}' for execution (expected parallel or sequential)"
                    )))
                    }
                }
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown key '{other}' (valid keys: {})",
                    KEYS.iter().map(|(k, _)| *k).collect::<Vec<_>>().join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Applies every assignment in `text`, in order.
    pub fn apply_text(&mut self, text: &str, path: &Path) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                row: i + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err(format!("expected 'key = value', found '{line}'")))?;
            self.set(key, value).map_err(|e| parse_err(e.to_string()))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut config = Self::default();
        config.apply_text(&text, path)?;
        Ok(config)
    }

    /// Checks everything that does not need the environment.
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("T must be at least 1".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if let EnvSpec::Synthetic(_) = self.env {
            if self.synthetic_dim == 0 || self.arms == 0 {
                return Err(Error::Config("dim and arms must be at least 1".into()));
            }
            if !(self.noise >= 0.0 && self.noise.is_finite()) {
                return Err(Error::Config(format!(
                    "noise must be non-negative, got {}",
                    self.noise
                )));
            }
        }
        match self.algo {
            Algo::RbmleGa => self.ga_config().validate(),
            Algo::RbmlePc => self.pc_config().validate(),
            Algo::NeuralUcb => self.ucb_config().validate(),
            Algo::LinRbmle => {
                if !(self.lin_lambda > 0.0) || !(self.lin_nu >= 0.0) {
                    return Err(Error::Config(
                        "lin_lambda must be positive and lin_nu non-negative".into(),
                    ));
                }
                Ok(())
            }
            Algo::Random => Ok(()),
        }
    }

    pub fn ga_config(&self) -> GaConfig {
        GaConfig {
            nu: self.nu,
            steps: self.steps,
            step_size: self.step_size,
            lambda: self.lambda,
            zeta: self.zeta,
            warm_start: self.warm_start,
            normalize_steps: self.normalize_steps,
        }
    }

    pub fn pc_config(&self) -> PcConfig {
        PcConfig {
            nu: self.nu,
            steps: self.steps,
            step_size: self.step_size,
            lambda: self.lambda,
            precision_mode: self.precision_mode,
            normalize_steps: self.normalize_steps,
        }
    }

    pub fn ucb_config(&self) -> NeuralUcbConfig {
        NeuralUcbConfig {
            gamma: self.gamma,
            steps: self.steps,
            step_size: self.step_size,
            lambda: self.lambda,
            precision_mode: self.precision_mode,
            normalize_steps: self.normalize_steps,
        }
    }

    pub fn lin_config(&self) -> LinRbmleConfig {
        LinRbmleConfig {
            lambda: self.lin_lambda,
            nu: self.lin_nu,
        }
    }

    /// Display name of the algorithm, including the likelihood for GA.
    pub fn algo_label(&self) -> String {
        match self.algo {
            Algo::RbmleGa if self.likelihood != FamilyName::Gaussian => {
                format!("{}-{}", self.algo, self.likelihood)
            }
            a => a.to_string(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut c = ExperimentConfig::default();
        let text = "# comment\nalgo = rbmle-pc\n\nT=50 # trailing\nenv = dataset:data/x.csv\nprecision_mode = full\nwarm_start = false\n";
        c.apply_text(text, Path::new("cfg")).unwrap();
        assert_eq!(c.algo, Algo::RbmlePc);
        assert_eq!(c.horizon, 50);
        assert_eq!(c.env, EnvSpec::Dataset("data/x.csv".into()));
        assert_eq!(c.pc_config().precision_mode, PrecisionMode::Full);
        assert!(!c.warm_start);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let mut c = ExperimentConfig::default();
        match c.apply_text("T = 5\nbogus = 1\n", Path::new("cfg")) {
            Err(Error::Parse { row, message, .. }) => {
                assert_eq!(row, 2);
                assert!(message.contains("valid keys"));
            }
            other => panic!("{other:?}"),
        }
        assert!(c.apply_text("T 5\n", Path::new("cfg")).is_err());
        let err = c.set("algo", "greedy").unwrap_err().to_string();
        assert!(err.contains("rbmle-ga") && err.contains("random"));
        assert!(c.set("T", "-3").is_err());
    }

    #[test]
    fn every_documented_key_is_settable() {
        let samples = [
            ("algo", "random"),
            ("env", "synthetic:linear"),
            ("T", "3"),
            ("trials", "2"),
            ("seed", "9"),
            ("m", "8"),
            ("L", "3"),
            ("likelihood", "mixture"),
            ("nu", "1"),
            ("J", "5"),
            ("eta", "0.01"),
            ("lambda", "0.1"),
            ("zeta", "sqrt"),
            ("warm_start", "false"),
            ("normalize_steps", "false"),
            ("precision_mode", "full"),
            ("gamma", "0.5"),
            ("lin_lambda", "2"),
            ("lin_nu", "0.5"),
            ("dim", "3"),
            ("arms", "2"),
            ("noise", "0"),
            ("on_exhaust", "end"),
            ("out", "x"),
            ("timing", "true"),
            ("execution", "sequential"),
        ];
        assert_eq!(samples.len(), KEYS.len());
        let mut c = ExperimentConfig::default();
        for (k, v) in samples {
            assert!(KEYS.iter().any(|(key, _)| *key == k));
            c.set(k, v).unwrap();
        }
        assert_eq!(c.algo_label(), "random");
        c.validate().unwrap();
    }

    #[test]
    fn validation() {
        let mut c = ExperimentConfig {
            horizon: 0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        c.horizon = 1;
        c.steps = 0;
        assert!(c.validate().is_err());
        assert!("synthetic:sine".parse::<EnvSpec>().is_err());
        assert!("dataset:".parse::<EnvSpec>().is_err());
    }
}
