use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use neural_rbmle::env::{random_unit_context, SyntheticKind};
use neural_rbmle::harness::{run_experiment, Algo, EnvSpec, ExperimentConfig};
use neural_rbmle::ntk::{empirical_kernel, ntk_matrix_with};
use neural_rbmle::rng::seeded;
use neural_rbmle::{
    Agent, ContextVector, Execution, GaAgent, GaConfig, NetworkConfig, NetworkParams,
    SurrogateFamily,
};

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn contexts(n: usize, raw: usize, seed: u64) -> Vec<ContextVector> {
    let mut rng = seeded(seed);
    (0..n).map(|_| random_unit_context(raw, &mut rng)).collect()
}

fn trials(c: &mut Criterion) {
    let mut group = c.benchmark_group("trials");
    group.sample_size(10);
    for (name, execution) in MODES {
        let config = ExperimentConfig {
            algo: Algo::RbmlePc,
            env: EnvSpec::Synthetic(SyntheticKind::Cosine),
            horizon: 50,
            trials: 4,
            width: 32,
            steps: 20,
            execution,
            ..ExperimentConfig::default()
        };
        group.bench_function(name, |b| b.iter(|| run_experiment(&config).unwrap()));
    }
    group.finish();
}

fn arm_fits(c: &mut Criterion) {
    let mut group = c.benchmark_group("ga_arm_fits");
    group.sample_size(10);
    let cfg = NetworkConfig::new(8, 100, 2).unwrap();
    let anchor = NetworkParams::init_symmetric(cfg, &mut seeded(1));
    let history = contexts(200, 4, 2);
    let arms = contexts(4, 4, 3);
    for (name, execution) in MODES {
        let mut agent = GaAgent::new(
            SurrogateFamily::gaussian(),
            GaConfig {
                steps: 20,
                ..GaConfig::default()
            },
            anchor.clone(),
        )
        .unwrap()
        .with_execution(execution);
        for (t, x) in history.iter().enumerate() {
            agent
                .observe(t + 1, std::slice::from_ref(x), 0, (t % 3) as f64 / 3.0)
                .unwrap();
        }
        group.bench_function(name, |b| {
            b.iter(|| agent.clone().select_arm(201, &arms).unwrap())
        });
    }
    group.finish();
}

fn kernels(c: &mut Criterion) {
    let mut group = c.benchmark_group("ntk");
    let xs = contexts(64, 4, 4);
    let cfg = NetworkConfig::new(8, 512, 2).unwrap();
    let params = NetworkParams::init_gaussian(cfg, &mut seeded(5));
    for (name, execution) in MODES {
        group.bench_with_input(BenchmarkId::new("recursion", name), &execution, |b, &e| {
            b.iter(|| ntk_matrix_with(&xs, 3, e).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("empirical", name), &execution, |b, &e| {
            b.iter(|| empirical_kernel(&params, &xs, e).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, trials, arm_fits, kernels);
criterion_main!(benches);
