//! Bandit environments.
//!
//! Classification datasets become bandits by giving every class its own
//! block of a block-one-hot context; the reward is 1 for the true class and
//! 0 otherwise. Synthetic environments draw raw contexts on the unit sphere
//! and score them with a fixed squashed reward function plus Gaussian noise.
//!
//! Every emitted context goes through [`preprocess_context`], which
//! duplicates and normalises it so that `‖x‖₂ = 1` and both halves are
//! equal. Raw features are not standardised beyond that.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::bandit::ContextVector;
use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Labelled feature rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    rows: Vec<(usize, Vec<f64>)>,
    num_classes: usize,
    feature_dim: usize,
}

impl Dataset {
    pub fn new(rows: Vec<(usize, Vec<f64>)>) -> Result<Self> {
        let feature_dim = match rows.first() {
            Some((_, f)) if !f.is_empty() => f.len(),
            Some(_) => return Err(Error::Contract("dataset rows have no features".into())),
            None => return Err(Error::Contract("dataset is empty".into())),
        };
        for (i, (_, f)) in rows.iter().enumerate() {
            if f.len() != feature_dim {
                return Err(Error::Contract(format!(
                    "row {} has {} features, expected {feature_dim}",
                    i + 1,
                    f.len()
                )));
            }
            if f.iter().any(|v| !v.is_finite()) {
                return Err(Error::Contract(format!(
                    "row {} has non-finite features",
                    i + 1
                )));
            }
        }
        let num_classes = rows.iter().map(|(l, _)| l + 1).max().unwrap_or(0);
        Ok(Self {
            rows,
            num_classes,
            feature_dim,
        })
    }

    pub fn rows(&self) -> &[(usize, Vec<f64>)] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// `K`, one more than the largest label.
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// `d'`.
    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DatasetFormat {
    /// Integer label, then comma-separated features; no header.
    #[default]
    CsvLabelFirst,
}

pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<Dataset> {
    let DatasetFormat::CsvLabelFirst = format;
    let parse_err = |row: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => parse_err(0, format!("{other:?}")),
        })?;
    let mut rows = Vec::new();
    let mut width = None;
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| parse_err(row, e.to_string()))?;
        if *width.get_or_insert(record.len()) != record.len() {
            return Err(parse_err(
                row,
                format!(
                    "expected {} fields, found {}",
                    width.unwrap_or(0),
                    record.len()
                ),
            ));
        }
        if record.len() < 2 {
            return Err(parse_err(
                row,
                "need a label and at least one feature".into(),
            ));
        }
        let label: usize = record[0]
            .trim()
            .parse()
            .map_err(|_| parse_err(row, format!("label '{}' is not a class index", &record[0])))?;
        let features = record
            .iter()
            .skip(1)
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_err(row, format!("feature '{s}' is not a finite number")))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push((label, features));
    }
    if rows.is_empty() {
        return Err(parse_err(0, "file contains no rows".into()));
    }
    Dataset::new(rows)
}

/// `K` block-one-hot vectors of length `d'·K`; block `i` of vector `i`
/// carries the features.
pub fn to_bandit_contexts(features: &[f64], k: usize) -> Vec<Vec<f64>> {
    let d = features.len();
    (0..k)
        .map(|i| {
            let mut v = vec![0.0; d * k];
            v[i * d..(i + 1) * d].copy_from_slice(features);
            v
        })
        .collect()
}

/// `(x, x) / (√2·‖x‖₂)`. The zero vector maps to `(e₁, e₁)/√2`.
pub fn preprocess_context(x: &[f64]) -> ContextVector {
    let n = x.len();
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut out = vec![0.0; 2 * n];
    if norm > 0.0 && norm.is_finite() {
        let scale = 1.0 / (std::f64::consts::SQRT_2 * norm);
        for (j, v) in x.iter().enumerate() {
            out[j] = v * scale;
            out[j + n] = out[j];
        }
    } else if n > 0 {
        out[0] = std::f64::consts::FRAC_1_SQRT_2;
        out[n] = out[0];
    }
    ContextVector::new(out).expect("preprocessed context has unit norm")
}

/// What an environment reveals for one round.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvRound {
    pub contexts: Vec<ContextVector>,
    /// Expected reward of each arm.
    pub means: Vec<f64>,
    /// Realised reward of each arm; only the chosen one reaches the agent.
    pub rewards: Vec<f64>,
}

impl EnvRound {
    pub fn optimal_mean(&self) -> f64 {
        self.means.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

pub trait Environment: Send {
    fn name(&self) -> String;

    fn num_arms(&self) -> usize;

    /// Length of every emitted context.
    fn context_dim(&self) -> usize;

    /// Round `t` (1-based). Environment randomness comes from `rng` only.
    fn step(&mut self, t: usize, rng: &mut SeededRng) -> Result<EnvRound>;
}

/// What a dataset environment does after its last row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OnExhaust {
    /// Restart the same shuffled order.
    #[default]
    Wrap,
    End,
}

impl fmt::Display for OnExhaust {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OnExhaust::Wrap => "wrap",
            OnExhaust::End => "end",
        })
    }
}

impl FromStr for OnExhaust {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "wrap" => Ok(OnExhaust::Wrap),
            "end" => Ok(OnExhaust::End),
            other => Err(Error::Config(format!(
                "unknown on_exhaust '{other}' (expected wrap or end)"
            ))),
        }
    }
}

/// Dataset rows in one shuffled order per trial.
#[derive(Debug, Clone)]
pub struct DatasetEnv {
    dataset: Arc<Dataset>,
    order: Vec<usize>,
    cursor: usize,
    on_exhaust: OnExhaust,
    label: String,
}

impl DatasetEnv {
    /// Shuffles the rows with `rng`.
    pub fn new(dataset: Arc<Dataset>, on_exhaust: OnExhaust, rng: &mut SeededRng) -> Result<Self> {
        if dataset.num_classes() < 2 {
            return Err(Error::Config("dataset needs at least two classes".into()));
        }
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        order.shuffle(rng);
        Ok(Self {
            dataset,
            order,
            cursor: 0,
            on_exhaust,
            label: "dataset".into(),
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Row indices in play order.
    pub fn order(&self) -> &[usize] {
        &self.order
    }
}

impl Environment for DatasetEnv {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn num_arms(&self) -> usize {
        self.dataset.num_classes()
    }

    fn context_dim(&self) -> usize {
        2 * self.dataset.feature_dim() * self.dataset.num_classes()
    }

    fn step(&mut self, _t: usize, _rng: &mut SeededRng) -> Result<EnvRound> {
        if self.cursor == self.order.len() {
            match self.on_exhaust {
                OnExhaust::Wrap => self.cursor = 0,
                OnExhaust::End => return Err(Error::Exhausted(self.cursor)),
            }
        }
        let (label, features) = &self.dataset.rows()[self.order[self.cursor]];
        self.cursor += 1;
        let k = self.num_arms();
        let contexts = to_bandit_contexts(features, k)
            .iter()
            .map(|x| preprocess_context(x))
            .collect();
        let rewards: Vec<f64> = (0..k)
            .map(|a| if a == *label { 1.0 } else { 0.0 })
            .collect();
        Ok(EnvRound {
            contexts,
            means: rewards.clone(),
            rewards,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticKind {
    Linear,
    Quadratic,
    Cosine,
}

impl SyntheticKind {
    /// Mean reward for `s = aᵀx`, in `[0, 1]` whenever `|s| ≤ 1`.
    pub fn mean(self, s: f64) -> f64 {
        match self {
            SyntheticKind::Linear => (s + 1.0) / 2.0,
            SyntheticKind::Quadratic => s * s,
            SyntheticKind::Cosine => ((3.0 * s).cos() + 1.0) / 2.0,
        }
    }
}

impl fmt::Display for SyntheticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SyntheticKind::Linear => "linear",
            SyntheticKind::Quadratic => "quadratic",
            SyntheticKind::Cosine => "cosine",
        })
    }
}

impl FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "linear" => Ok(SyntheticKind::Linear),
            "quadratic" => Ok(SyntheticKind::Quadratic),
            "cosine" => Ok(SyntheticKind::Cosine),
            other => Err(Error::Config(format!(
                "unknown synthetic kind '{other}' (expected linear, quadratic or cosine)"
            ))),
        }
    }
}

/// Synthetic rewards `h(x) + ε`, `ε ~ N(0, σ²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticEnv {
    kind: SyntheticKind,
    a: Vec<f64>,
    noise_sigma: f64,
    num_arms: usize,
}

impl SyntheticEnv {
    /// Draws the hidden unit vector `a ∈ ℝ^{2·raw_dim}` from `rng`.
    pub fn new(
        kind: SyntheticKind,
        raw_dim: usize,
        num_arms: usize,
        noise_sigma: f64,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        if raw_dim == 0 || num_arms == 0 {
            return Err(Error::Config(
                "synthetic env needs dim ≥ 1 and K ≥ 1".into(),
            ));
        }
        let a = unit_sphere(2 * raw_dim, rng);
        Self::with_parameter(kind, a, num_arms, noise_sigma)
    }

    /// Fixed hidden vector `a` of even length (normalised here).
    pub fn with_parameter(
        kind: SyntheticKind,
        a: Vec<f64>,
        num_arms: usize,
        noise_sigma: f64,
    ) -> Result<Self> {
        if a.is_empty() || !a.len().is_multiple_of(2) {
            return Err(Error::Config(
                "hidden parameter must have even, nonzero length".into(),
            ));
        }
        if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
            return Err(Error::Config(format!(
                "noise must be non-negative, got {noise_sigma}"
            )));
        }
        if num_arms == 0 {
            return Err(Error::Config("K must be at least 1".into()));
        }
        let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::Config("hidden parameter must be nonzero".into()));
        }
        Ok(Self {
            kind,
            a: a.iter().map(|v| v / norm).collect(),
            noise_sigma,
            num_arms,
        })
    }

    pub fn kind(&self) -> SyntheticKind {
        self.kind
    }

    pub fn parameter(&self) -> &[f64] {
        &self.a
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn mean_reward(&self, x: &[f64]) -> f64 {
        let s: f64 = self.a.iter().zip(x).map(|(a, b)| a * b).sum();
        self.kind.mean(s)
    }
}

impl Environment for SyntheticEnv {
    fn name(&self) -> String {
        format!("synthetic:{}", self.kind)
    }

    fn num_arms(&self) -> usize {
        self.num_arms
    }

    fn context_dim(&self) -> usize {
        self.a.len()
    }

    fn step(&mut self, _t: usize, rng: &mut SeededRng) -> Result<EnvRound> {
        let raw = self.a.len() / 2;
        let contexts: Vec<ContextVector> = (0..self.num_arms)
            .map(|_| preprocess_context(&unit_sphere(raw, rng)))
            .collect();
        let means: Vec<f64> = contexts.iter().map(|x| self.mean_reward(x)).collect();
        let noise = Normal::new(0.0, self.noise_sigma)
            .map_err(|e| Error::Config(format!("noise distribution: {e}")))?;
        let rewards = means.iter().map(|m| m + noise.sample(rng)).collect();
        Ok(EnvRound {
            contexts,
            means,
            rewards,
        })
    }
}

fn unit_sphere(n: usize, rng: &mut SeededRng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|a| a / norm).collect();
        }
    }
}

/// Uniform point on the unit sphere of `ℝ^raw_dim`, preprocessed.
pub fn random_unit_context(raw_dim: usize, rng: &mut SeededRng) -> ContextVector {
    preprocess_context(&unit_sphere(raw_dim, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::random_policy;
    use crate::rng::seeded;
    use rand::Rng;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_small_file() {
        let f = write_tmp("0,1.0,2.0\n1,0.5,0.5\n0,0,1\n");
        let ds = load_dataset(f.path(), DatasetFormat::CsvLabelFirst).unwrap();
        assert_eq!((ds.num_classes(), ds.feature_dim(), ds.len()), (2, 2, 3));
        assert_eq!(ds.rows()[2], (0, vec![0.0, 1.0]));
    }

    #[test]
    fn load_errors_name_the_row() {
        let f = write_tmp("0,1.0,2.0\n1,0.5\n0,0,1\n");
        match load_dataset(f.path(), DatasetFormat::CsvLabelFirst) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 2),
            other => panic!("{other:?}"),
        }
        let f = write_tmp("0,1.0\n1,abc\n");
        assert!(matches!(
            load_dataset(f.path(), DatasetFormat::CsvLabelFirst),
            Err(Error::Parse { row: 2, .. })
        ));
        let f = write_tmp("-1,1.0\n");
        assert!(matches!(
            load_dataset(f.path(), DatasetFormat::CsvLabelFirst),
            Err(Error::Parse { row: 1, .. })
        ));
        let f = write_tmp("");
        assert!(load_dataset(f.path(), DatasetFormat::CsvLabelFirst).is_err());
    }

    #[test]
    fn block_one_hot_layout() {
        assert_eq!(
            to_bandit_contexts(&[1.0, 2.0], 2),
            vec![vec![1.0, 2.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, 2.0]]
        );
        assert!(to_bandit_contexts(&[0.0, 0.0], 3)
            .iter()
            .all(|v| v.iter().all(|&a| a == 0.0)));
        let blocks = to_bandit_contexts(&[0.5, -1.0, 2.0], 4);
        for i in 0..4 {
            for j in 0..4 {
                let ip: f64 = blocks[i].iter().zip(&blocks[j]).map(|(a, b)| a * b).sum();
                assert_eq!(ip, if i == j { 5.25 } else { 0.0 });
            }
        }
    }

    #[test]
    fn preprocessing() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let p = preprocess_context(&[1.0, 0.0]);
        for (a, b) in p.iter().zip([s, 0.0, s, 0.0]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(&*preprocess_context(&[0.0, 0.0]), &[s, 0.0, s, 0.0]);
        let x = [0.3, -2.0, 5.0];
        let p = preprocess_context(&x);
        assert!((p.norm() - 1.0).abs() < 1e-12);
        assert_eq!(p[..3], p[3..]);
        let scaled: Vec<f64> = x.iter().map(|v| v * 7.5).collect();
        let q = preprocess_context(&scaled);
        for (a, b) in p.iter().zip(q.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    fn class_dataset(k: usize, n: usize, seed: u64) -> Arc<Dataset> {
        let mut rng = seeded(seed);
        let rows = (0..n)
            .map(|i| (i % k, (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()))
            .collect();
        Arc::new(Dataset::new(rows).unwrap())
    }

    #[test]
    fn dataset_rewards_and_contexts() {
        let ds = Arc::new(Dataset::new(vec![(1, vec![1.0, 2.0]), (2, vec![0.0, 1.0])]).unwrap());
        let mut rng = seeded(0);
        let mut env = DatasetEnv::new(ds.clone(), OnExhaust::End, &mut rng).unwrap();
        assert_eq!((env.num_arms(), env.context_dim()), (3, 12));
        let first = env.order()[0];
        let round = env.step(1, &mut rng).unwrap();
        let expected: Vec<f64> = (0..3)
            .map(|a| if a == ds.rows()[first].0 { 1.0 } else { 0.0 })
            .collect();
        assert_eq!(round.rewards, expected);
        assert_eq!(round.optimal_mean(), 1.0);
        for c in &round.contexts {
            assert!((c.norm() - 1.0).abs() < 1e-12);
            assert_eq!(c[..6], c[6..]);
        }
        env.step(2, &mut rng).unwrap();
        assert!(matches!(env.step(3, &mut rng), Err(Error::Exhausted(2))));

        let mut env = DatasetEnv::new(ds, OnExhaust::Wrap, &mut seeded(0)).unwrap();
        let a: Vec<_> = (1..=4)
            .map(|t| env.step(t, &mut rng).unwrap().rewards)
            .collect();
        assert_eq!(a[0], a[2]);
        assert_eq!(a[1], a[3]);
    }

    #[test]
    fn shuffle_is_a_function_of_the_seed() {
        let ds = class_dataset(4, 50, 1);
        let o1 = DatasetEnv::new(ds.clone(), OnExhaust::Wrap, &mut seeded(5)).unwrap();
        let o2 = DatasetEnv::new(ds.clone(), OnExhaust::Wrap, &mut seeded(5)).unwrap();
        let o3 = DatasetEnv::new(ds, OnExhaust::Wrap, &mut seeded(6)).unwrap();
        assert_eq!(o1.order(), o2.order());
        assert_ne!(o1.order(), o3.order());
    }

    #[test]
    fn random_play_on_ten_classes_loses_nine_tenths() {
        let ds = class_dataset(10, 1000, 2);
        let mut rng = seeded(3);
        let mut policy_rng = seeded(4);
        let mut env = DatasetEnv::new(ds, OnExhaust::Wrap, &mut rng).unwrap();
        let n = 10_000;
        let mut regret = 0.0;
        for t in 1..=n {
            let r = env.step(t, &mut rng).unwrap();
            let a = random_policy(r.contexts.len(), &mut policy_rng).unwrap();
            regret += r.optimal_mean() - r.means[a];
        }
        let per_step = regret / n as f64;
        assert!((per_step - 0.9).abs() <= 0.03, "{per_step}");
    }

    #[test]
    fn synthetic_means_and_oracle() {
        let mut rng = seeded(7);
        for kind in [
            SyntheticKind::Linear,
            SyntheticKind::Quadratic,
            SyntheticKind::Cosine,
        ] {
            let mut env = SyntheticEnv::new(kind, 4, 5, 0.0, &mut rng).unwrap();
            assert_eq!(env.context_dim(), 8);
            let mut oracle_regret = 0.0;
            for t in 1..=50 {
                let r = env.step(t, &mut rng).unwrap();
                assert!(r.means.iter().all(|m| (0.0..=1.0).contains(m)));
                assert_eq!(r.means, r.rewards);
                for c in &r.contexts {
                    assert!((c.norm() - 1.0).abs() < 1e-12);
                    assert_eq!(c[..4], c[4..]);
                }
                let best = crate::bandit::argmax_lowest(&r.means);
                oracle_regret += r.optimal_mean() - r.means[best];
            }
            assert_eq!(oracle_regret, 0.0);
        }
    }

    #[test]
    fn quadratic_with_orthogonal_parameter_is_flat() {
        // a = (e₁, −e₁) is orthogonal to every duplicated-halves context
        let env = SyntheticEnv::with_parameter(
            SyntheticKind::Quadratic,
            vec![1.0, 0.0, -1.0, 0.0],
            3,
            0.0,
        )
        .unwrap();
        let mut rng = seeded(8);
        let mut env = env;
        for t in 1..=20 {
            let r = env.step(t, &mut rng).unwrap();
            assert!(r.means.iter().all(|&m| m.abs() < 1e-30));
        }
    }

    #[test]
    fn noise_is_centred() {
        let sigma = 0.5;
        let mut env =
            SyntheticEnv::new(SyntheticKind::Linear, 2, 1, sigma, &mut seeded(9)).unwrap();
        let mut rng = seeded(10);
        let n = 100_000;
        let mut sum = 0.0;
        for t in 1..=n {
            let r = env.step(t, &mut rng).unwrap();
            sum += r.rewards[0] - r.means[0];
        }
        let mean = sum / n as f64;
        assert!(mean.abs() <= 3.0 * sigma / (n as f64).sqrt(), "{mean}");
    }

    #[test]
    fn config_errors() {
        assert!("sine".parse::<SyntheticKind>().is_err());
        assert!("loop".parse::<OnExhaust>().is_err());
        assert!(SyntheticEnv::with_parameter(SyntheticKind::Linear, vec![1.0], 2, 0.0).is_err());
        assert!(
            SyntheticEnv::with_parameter(SyntheticKind::Linear, vec![1.0, 0.0], 2, -1.0).is_err()
        );
        let one_class = Arc::new(Dataset::new(vec![(0, vec![1.0])]).unwrap());
        assert!(DatasetEnv::new(one_class, OnExhaust::Wrap, &mut seeded(0)).is_err());
    }
}
