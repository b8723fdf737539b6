use std::fs;
use std::io::Write as _;
use std::path::Path;

use neural_rbmle::env::{Environment, SyntheticEnv, SyntheticKind};
use neural_rbmle::harness::{
    self, read_trace_file, run_experiment, Algo, EnvSpec, Experiment, ExperimentConfig,
};
use neural_rbmle::rng::seeded;
use neural_rbmle::{Agent, ContextVector, Execution, Result};

fn small(algo: Algo) -> ExperimentConfig {
    ExperimentConfig {
        algo,
        env: EnvSpec::Synthetic(SyntheticKind::Linear),
        horizon: 40,
        trials: 3,
        master_seed: 7,
        width: 8,
        steps: 10,
        ..ExperimentConfig::default()
    }
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn same_seed_gives_identical_files() {
    for algo in Algo::ALL {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        for dir in [&a, &b] {
            let mut c = small(algo);
            c.output_dir = Some(dir.path().to_path_buf());
            run_experiment(&c).unwrap();
        }
        let (fa, fb) = (read_dir_bytes(a.path()), read_dir_bytes(b.path()));
        assert_eq!(fa.len(), 4, "{algo}");
        assert_eq!(fa, fb, "{algo}");
    }
}

#[test]
fn different_seeds_differ() {
    let mut c = small(Algo::Random);
    let r1 = run_experiment(&c).unwrap();
    c.master_seed = 8;
    let r2 = run_experiment(&c).unwrap();
    assert_ne!(r1.final_regrets(), r2.final_regrets());
}

#[test]
fn trials_are_isolated() {
    let mut c = small(Algo::RbmleGa);
    c.execution = Execution::Sequential;
    let exp = Experiment::new(c.clone()).unwrap();
    let reversed: Vec<_> = (0..c.trials)
        .rev()
        .map(|i| exp.run_trial(i).unwrap())
        .collect();
    c.execution = Execution::Parallel;
    let report = run_experiment(&c).unwrap();
    for (i, trace) in reversed.iter().rev().enumerate() {
        assert_eq!(trace, &report.traces[i]);
    }
}

#[test]
fn algorithms_share_the_environment_stream() {
    let ga = Experiment::new(small(Algo::RbmleGa)).unwrap();
    let rnd = Experiment::new(small(Algo::Random)).unwrap();
    let (mut e1, mut r1) = ga.environment(1).unwrap();
    let (mut e2, mut r2) = rnd.environment(1).unwrap();
    for t in 1..=5 {
        assert_eq!(e1.step(t, &mut r1).unwrap(), e2.step(t, &mut r2).unwrap());
    }
}

#[test]
fn summary_is_recomputable_from_traces() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small(Algo::LinRbmle);
    c.trials = 4;
    c.output_dir = Some(dir.path().to_path_buf());
    run_experiment(&c).unwrap();

    let finals: Vec<f64> = (0..c.trials)
        .map(|i| {
            let path = dir.path().join(harness::trace_file_name("lin-rbmle", i));
            let recs = read_trace_file(&path).unwrap();
            assert_eq!(recs.len(), c.horizon);
            let mut sum = 0.0;
            for r in &recs {
                sum += r.instant_regret;
                assert!((r.cumulative_regret - sum).abs() < 1e-7);
            }
            recs.last().unwrap().cumulative_regret
        })
        .collect();
    let n = finals.len() as f64;
    let mean = finals.iter().sum::<f64>() / n;
    let std = (finals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();

    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    let field = |label: &str| -> f64 {
        let line = summary
            .lines()
            .find(|l| l.split(',').nth(2) == Some(label))
            .unwrap();
        line.split(',').nth(3).unwrap().parse().unwrap()
    };
    assert!((field("mean") - mean).abs() <= 1e-6 * mean.abs().max(1.0));
    assert!((field("std") - std).abs() <= 1e-6 * std.max(1.0));
    for (i, v) in finals.iter().enumerate() {
        assert!((field(&i.to_string()) - v).abs() <= 1e-6 * v.abs().max(1.0));
    }
}

#[test]
fn two_trials_write_two_traces_and_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small(Algo::Random);
    c.trials = 2;
    c.output_dir = Some(dir.path().to_path_buf());
    run_experiment(&c).unwrap();
    let names: Vec<String> = read_dir_bytes(dir.path())
        .into_iter()
        .map(|f| f.0)
        .collect();
    assert_eq!(
        names,
        [
            "summary.csv",
            "trace_random_trial0.csv",
            "trace_random_trial1.csv"
        ]
    );
}

#[test]
fn horizon_one() {
    let mut c = small(Algo::RbmlePc);
    c.horizon = 1;
    let report = run_experiment(&c).unwrap();
    assert!(report.traces.iter().all(|t| t.len() == 1));
}

#[test]
fn duplicate_trials_have_zero_spread() {
    // Same seed, one trial each: both runs see the same stream.
    let mut c = small(Algo::NeuralUcb);
    c.trials = 1;
    let a = run_experiment(&c).unwrap().final_regrets()[0];
    let b = run_experiment(&c).unwrap().final_regrets()[0];
    assert_eq!(harness::mean_std(&[a, b]).1, 0.0);
}

struct Oracle(SyntheticEnv);

impl Agent for Oracle {
    fn name(&self) -> &str {
        "oracle"
    }

    fn select(&mut self, _t: usize, contexts: &[ContextVector]) -> Result<usize> {
        let means: Vec<f64> = contexts.iter().map(|x| self.0.mean_reward(x)).collect();
        Ok(neural_rbmle::bandit::argmax_lowest(&means))
    }

    fn observe(&mut self, _: usize, _: &[ContextVector], _: usize, _: f64) -> Result<()> {
        Ok(())
    }
}

#[test]
fn oracle_has_zero_regret() {
    for kind in [
        SyntheticKind::Linear,
        SyntheticKind::Quadratic,
        SyntheticKind::Cosine,
    ] {
        let env = SyntheticEnv::new(kind, 3, 5, 0.1, &mut seeded(1)).unwrap();
        let mut agent = Oracle(env.clone());
        let mut env: Box<dyn Environment> = Box::new(env);
        let trace = harness::play(env.as_mut(), &mut agent, 200, &mut seeded(2)).unwrap();
        assert_eq!(trace.cumulative_regret(), 0.0);
    }
}

#[test]
fn random_on_ten_class_dataset() {
    // Exactly one of ten arms pays 1, so uniform play loses 0.9 per round.
    let mut file = tempfile::NamedTempFile::new().unwrap();
    let mut rng = seeded(5);
    for i in 0..500 {
        use rand::Rng;
        let feats: Vec<String> = (0..6).map(|_| rng.random::<f64>().to_string()).collect();
        writeln!(file, "{},{}", i % 10, feats.join(",")).unwrap();
    }
    let c = ExperimentConfig {
        algo: Algo::Random,
        env: EnvSpec::Dataset(file.path().to_path_buf()),
        horizon: 1000,
        trials: 10,
        ..ExperimentConfig::default()
    };
    let (mean, _) = run_experiment(&c).unwrap().mean_std();
    assert!((mean - 900.0).abs() <= 45.0, "{mean}");
}

#[test]
fn failed_trial_keeps_partial_trace() {
    let mut file = tempfile::NamedTempFile::new().unwrap();
    for i in 0..5 {
        writeln!(file, "{},1,{}", i % 2, i).unwrap();
    }
    let mut c = small(Algo::Random);
    c.env = EnvSpec::Dataset(file.path().to_path_buf());
    c.on_exhaust = neural_rbmle::env::OnExhaust::End;
    c.horizon = 8;
    c.trials = 1;
    let report = run_experiment(&c).unwrap();
    assert!(!report.all_ok());
    assert_eq!(report.traces[0].len(), 5);
    assert!(report.rows[0].status.starts_with("failed at t=6"));
}

#[test]
fn wide_dataset_smoke() {
    let mut file = tempfile::NamedTempFile::new().unwrap();
    let mut rng = seeded(6);
    for i in 0..100 {
        use rand::Rng;
        let feats: Vec<String> = (0..784)
            .map(|_| (rng.random_range(0..256u32)).to_string())
            .collect();
        writeln!(file, "{},{}", i % 10, feats.join(",")).unwrap();
    }
    for algo in [Algo::Random, Algo::RbmlePc] {
        let c = ExperimentConfig {
            algo,
            env: EnvSpec::Dataset(file.path().to_path_buf()),
            horizon: 20,
            trials: 1,
            width: 4,
            steps: 2,
            ..ExperimentConfig::default()
        };
        let exp = Experiment::new(c.clone()).unwrap();
        assert_eq!(exp.context_dim(), 2 * 784 * 10);
        let report = run_experiment(&c).unwrap();
        assert!(report.all_ok());
        assert_eq!(report.traces[0].len(), 20);
    }
}
