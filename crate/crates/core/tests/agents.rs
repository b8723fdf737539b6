use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use neural_rbmle::baselines::{lin_rbmle_index, random_policy, LinearModelState};
use neural_rbmle::env::{random_unit_context, Environment, SyntheticEnv, SyntheticKind};
use neural_rbmle::harness::{run_experiment, Algo, EnvSpec, ExperimentConfig};
use neural_rbmle::rbmle_ga::{alpha, ga_objective};
use neural_rbmle::rbmle_pc::correct_params;
use neural_rbmle::rng::seeded;
use neural_rbmle::{
    Agent, ContextVector, GaAgent, GaConfig, NetworkConfig, NetworkParams, PcAgent, PcConfig,
    PrecisionMatrix, PrecisionMode, SurrogateFamily, Zeta,
};

#[test]
fn random_policy_is_uniform() {
    let (k, n) = (5, 10_000);
    let mut rng = seeded(11);
    let mut counts = vec![0usize; k];
    for _ in 0..n {
        counts[random_policy(k, &mut rng).unwrap()] += 1;
    }
    let expected = n as f64 / k as f64;
    let stat: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    let p = 1.0 - ChiSquared::new((k - 1) as f64).unwrap().cdf(stat);
    assert!(p > 1e-3, "chi2 {stat}, p {p}, counts {counts:?}");
}

#[test]
fn lin_rbmle_beats_random_on_linear_rewards() {
    let config = |algo| ExperimentConfig {
        algo,
        env: EnvSpec::Synthetic(SyntheticKind::Linear),
        synthetic_dim: 4,
        horizon: 2000,
        trials: 3,
        master_seed: 3,
        ..ExperimentConfig::default()
    };
    let (lin, _) = run_experiment(&config(Algo::LinRbmle)).unwrap().mean_std();
    let (rnd, _) = run_experiment(&config(Algo::Random)).unwrap().mean_std();
    assert!(lin <= 0.5 * rnd, "lin-rbmle {lin} vs random {rnd}");
}

#[test]
fn lin_rbmle_index_against_direct_inverse() {
    let mut rng = seeded(2);
    let mut state = LinearModelState::new(4, 1.0).unwrap();
    let mut v = DMatrix::<f64>::identity(4, 4);
    let mut b = DVector::<f64>::zeros(4);
    for i in 0..30 {
        let x = random_unit_context(2, &mut rng);
        let r = (i % 3) as f64 * 0.4;
        state.update(&x, r).unwrap();
        let xv = DVector::from_column_slice(&x);
        v += &xv * xv.transpose();
        b += &xv * r;
    }
    let vi = v.try_inverse().unwrap();
    let x = random_unit_context(2, &mut rng);
    let xv = DVector::from_column_slice(&x);
    let want = (xv.transpose() * &vi * &b)[0] + 0.35 * (xv.transpose() * &vi * &xv)[0];
    let got = lin_rbmle_index(&state, &x, 0.7).unwrap();
    assert!((got - want).abs() < 1e-10, "{got} vs {want}");
}

fn unit_contexts(k: usize, raw: usize, seed: u64) -> Vec<ContextVector> {
    let mut rng = seeded(seed);
    (0..k).map(|_| random_unit_context(raw, &mut rng)).collect()
}

#[test]
fn pc_correction_matches_first_order_bonus() {
    let cfg = NetworkConfig::new(6, 10, 2).unwrap();
    let base = NetworkParams::init_gaussian(cfg, &mut seeded(4));
    let mut z = PrecisionMatrix::new(PrecisionMode::Full, base.len(), 0.5).unwrap();
    for x in unit_contexts(5, 3, 5) {
        z = z.update(base.gradient(&x).unwrap().as_slice(), 10).unwrap();
    }
    let x = &unit_contexts(1, 3, 6)[0];
    let m = 10.0;
    let g = base.gradient(x).unwrap();
    let bonus = g.dot(&z.solve(g.as_slice()).unwrap()) / m;
    let a = 1e-4;
    let moved = correct_params(&base, &z, &g, a, 10).unwrap();
    let ratio = (moved.forward(x).unwrap() - base.forward(x).unwrap()) / a;
    assert!((ratio - bonus).abs() <= 0.01 * bonus, "{ratio} vs {bonus}");
}

/// Plays `rounds` rounds of `agent` on a small cosine environment.
fn drive(
    agent: &mut dyn Agent,
    rounds: usize,
    seed: u64,
    mut check: impl FnMut(&dyn Agent, usize, &[ContextVector], usize),
) {
    let mut env_rng = seeded(seed);
    let mut env = SyntheticEnv::new(SyntheticKind::Cosine, 2, 3, 0.1, &mut env_rng).unwrap();
    for t in 1..=rounds {
        let round = env.step(t, &mut env_rng).unwrap();
        let arm = agent.select(t, &round.contexts).unwrap();
        check(agent, t, &round.contexts, arm);
        agent
            .observe(t, &round.contexts, arm, round.rewards[arm])
            .unwrap();
    }
}

#[test]
fn ga_choice_maximises_joint_objective_with_and_without_warm_start() {
    for warm_start in [true, false] {
        let config = GaConfig {
            steps: 20,
            zeta: Zeta::ConstantOne,
            warm_start,
            ..GaConfig::default()
        };
        let cfg = NetworkConfig::new(4, 8, 2).unwrap();
        let anchor = NetworkParams::init_symmetric(cfg, &mut seeded(1));
        let fam = SurrogateFamily::gaussian();
        let mut agent = GaAgent::new(fam, config, anchor.clone()).unwrap();
        let mut history = neural_rbmle::History::new();
        let mut env_rng = seeded(9);
        let mut env = SyntheticEnv::new(SyntheticKind::Cosine, 2, 3, 0.1, &mut env_rng).unwrap();
        for t in 1..=12 {
            let round = env.step(t, &mut env_rng).unwrap();
            let arm = agent.select_arm(t, &round.contexts).unwrap();
            let joint: Vec<f64> = agent
                .estimators()
                .iter()
                .zip(&round.contexts)
                .map(|(est, x)| {
                    ga_objective(
                        &fam,
                        &history,
                        est,
                        &anchor,
                        config.lambda,
                        x,
                        alpha(config.nu, t),
                    )
                    .unwrap()
                })
                .collect();
            let best = joint.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert!(
                joint[arm] >= best - 1e-9,
                "warm {warm_start} t {t}: {joint:?} chose {arm}"
            );
            agent
                .observe(t, &round.contexts, arm, round.rewards[arm])
                .unwrap();
            history = history
                .record_round(
                    neural_rbmle::Round::new(round.contexts.clone(), arm, round.rewards[arm], None)
                        .unwrap(),
                    None,
                )
                .unwrap();
        }
    }
}

#[test]
fn agents_repeat_their_arm_sequence() {
    let cfg = NetworkConfig::new(4, 8, 2).unwrap();
    let anchor = NetworkParams::init_symmetric(cfg, &mut seeded(3));
    let run = |make: &dyn Fn() -> Box<dyn Agent>| {
        let mut arms = Vec::new();
        drive(make().as_mut(), 15, 21, |_, _, _, a| arms.push(a));
        arms
    };
    let ga = || -> Box<dyn Agent> {
        let c = GaConfig {
            steps: 10,
            ..GaConfig::default()
        };
        Box::new(GaAgent::new(SurrogateFamily::gaussian(), c, anchor.clone()).unwrap())
    };
    let pc = || -> Box<dyn Agent> {
        let c = PcConfig {
            steps: 10,
            ..PcConfig::default()
        };
        Box::new(PcAgent::new(c, anchor.clone()).unwrap())
    };
    assert_eq!(run(&ga), run(&ga));
    assert_eq!(run(&pc), run(&pc));
}

#[test]
fn pc_precision_grows_by_cached_gradients() {
    let cfg = NetworkConfig::new(4, 8, 2).unwrap();
    let anchor = NetworkParams::init_symmetric(cfg, &mut seeded(3));
    let c = PcConfig {
        steps: 5,
        precision_mode: PrecisionMode::Full,
        ..PcConfig::default()
    };
    let mut agent = PcAgent::new(c, anchor.clone()).unwrap();
    let mut env_rng = seeded(4);
    let mut env = SyntheticEnv::new(SyntheticKind::Linear, 2, 3, 0.1, &mut env_rng).unwrap();
    for t in 1..=6 {
        let round = env.step(t, &mut env_rng).unwrap();
        let arm = agent.select_arm(t, &round.contexts).unwrap();
        let g = agent
            .base_estimator()
            .gradient(&round.contexts[arm])
            .unwrap();
        let before = agent.precision().to_dense();
        agent
            .observe(t, &round.contexts, arm, round.rewards[arm])
            .unwrap();
        let gv = DVector::from_column_slice(g.as_slice());
        let want = before + &gv * gv.transpose() / 8.0;
        assert!((agent.precision().to_dense() - want).abs().max() < 1e-12);
        assert_eq!(agent.history().cached_grads().unwrap().last().unwrap(), &g);
    }
}
