use ndp_core::envs::{EnvConfig, EnvKind, PointEnv};
use ndp_core::ppo::{gae, normalize_advantages, Algo, RlConfig, Trainer};
use proptest::prelude::*;

fn small(algo: Algo, env: &str) -> RlConfig {
    let mut c = RlConfig {
        algo,
        env: env.into(),
        hidden: vec![16, 16],
        ..RlConfig::default()
    };
    c.ppo.batch_size = 400;
    c.ppo.epochs = 2;
    c.ppo.minibatches = 4;
    c
}

#[test]
fn every_block_costs_one_actor_evaluation() {
    for env in ["reach", "push", "throw"] {
        for algo in Algo::ALL {
            let config = small(algo, env);
            let mut trainer = Trainer::new(config.clone(), 1).unwrap();
            let buffer = trainer.collect().unwrap();
            let horizon = trainer.env_config.horizon;
            let k = config.effective_k();
            let episodes = buffer.episodes.len();
            assert_eq!(buffer.len(), episodes * horizon, "{env} {algo:?}");
            assert_eq!(buffer.actor_forwards, episodes * horizon / k, "{env} {algo:?}");
            assert_eq!(buffer.blocks.len(), buffer.actor_forwards);
            for b in &buffer.blocks {
                assert_eq!(b.len, k);
                for (j, t) in buffer.transitions[b.first..b.first + b.len].iter().enumerate() {
                    assert_eq!(t.value_head, j);
                }
            }
        }
    }
}

#[test]
fn bootstrap_uses_the_next_head_then_the_next_block() {
    let mut trainer = Trainer::new(small(Algo::Ndp, "reach"), 2).unwrap();
    let buffer = trainer.collect().unwrap();
    let k = 5;
    for (b, block) in buffer.blocks.iter().enumerate() {
        let ts = &buffer.transitions[block.first..block.first + block.len];
        for j in 0..k - 1 {
            assert_eq!(ts[j].next_value, ts[j + 1].value);
        }
        let last = &ts[k - 1];
        if !last.done {
            let next = &buffer.transitions[buffer.blocks[b + 1].first];
            assert_eq!(next.value_head, 0);
            assert_eq!(last.next_value, next.value);
        }
    }
}

#[test]
fn stale_world_refreshes_every_k_steps() {
    let k = 5;
    let mut env = PointEnv::new(EnvConfig::new(EnvKind::Push, k)).unwrap();
    env.reset(7);
    let mut refreshes = Vec::new();
    let mut last = env.stale_view().clone();
    for step in 0..60 {
        let a = if step < 30 { [0.0, 0.4] } else { [0.3, 0.6] };
        env.step(&a).unwrap();
        let now = env.stale_view().clone();
        assert_eq!(now.captured_at % k, 0);
        assert!(now.captured_at <= env.state().step);
        if now != last {
            refreshes.push(env.state().step);
        }
        last = now;
    }
    assert!(!refreshes.is_empty(), "the object never moved");
    assert!(refreshes.iter().all(|s| s % k == 0), "{refreshes:?}");
}

#[test]
fn identical_seeds_collect_identical_batches() {
    let config = small(Algo::Ndp, "push");
    let a = Trainer::new(config.clone(), 11).unwrap().collect().unwrap();
    let b = Trainer::new(config.clone(), 11).unwrap().collect().unwrap();
    let c = Trainer::new(config, 12).unwrap().collect().unwrap();
    assert_eq!(a, b);
    assert_ne!(a.transitions, c.transitions);
}

#[test]
fn training_two_updates_is_reproducible() {
    let config = small(Algo::PpoMulti, "reach");
    let run = |seed| {
        let mut t = Trainer::new(config.clone(), seed).unwrap();
        let p = (t.iterate().unwrap(), t.iterate().unwrap());
        (p, t.policy.mlp.params().to_vec())
    };
    assert_eq!(run(5), run(5));
}

proptest! {
    #[test]
    fn full_lambda_gae_is_the_discounted_return(
        rewards in proptest::collection::vec(-5.0f64..5.0, 1..40),
        gamma in 0.0f64..1.0,
        tail in -3.0f64..3.0,
        seed in any::<u64>(),
    ) {
        let n = rewards.len();
        let values: Vec<f64> = (0..n).map(|i| ((seed as usize + i) as f64).sin()).collect();
        let mut next: Vec<f64> = values[1..].to_vec();
        next.push(tail);
        let dones = vec![false; n];
        let (adv, ret) = gae(&rewards, &values, &next, &dones, gamma, 1.0);
        let mut g = tail;
        for t in (0..n).rev() {
            g = rewards[t] + gamma * g;
            prop_assert!((ret[t] - g).abs() <= 1e-9 * (1.0 + g.abs()), "t {t}: {} vs {g}", ret[t]);
            prop_assert!((adv[t] + values[t] - ret[t]).abs() <= 1e-12 * (1.0 + ret[t].abs()));
        }
    }

    #[test]
    fn terminal_steps_ignore_their_bootstrap(
        rewards in proptest::collection::vec(-5.0f64..5.0, 2..30),
        bogus in -1e6f64..1e6,
    ) {
        let n = rewards.len();
        let values = vec![0.0; n];
        let mut dones = vec![false; n];
        dones[n - 1] = true;
        let mut next = vec![0.0; n];
        let (a, _) = gae(&rewards, &values, &next, &dones, 0.99, 0.95);
        next[n - 1] = bogus;
        let (b, _) = gae(&rewards, &values, &next, &dones, 0.99, 0.95);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn normalised_advantages_are_standardised(adv in proptest::collection::vec(-1e3f64..1e3, 2..200)) {
        let spread = adv.iter().cloned().fold(f64::MIN, f64::max) - adv.iter().cloned().fold(f64::MAX, f64::min);
        prop_assume!(spread > 1e-3);
        let z = normalize_advantages(&adv);
        let n = z.len() as f64;
        let mean = z.iter().sum::<f64>() / n;
        let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        prop_assert!(mean.abs() <= 1e-6);
        prop_assert!((var.sqrt() - 1.0).abs() <= 1e-6);
    }
}
