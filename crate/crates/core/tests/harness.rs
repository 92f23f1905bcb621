use std::fs;

use see_core::approx::Checkpoint;
use see_core::base_algos::Algo;
use see_core::envcore::{EnvId, Environment, Pendulum, RewardVariant};
use see_core::harness::{evaluate, read_metrics, train, TrainConfig, CHECKPOINT_FILE, CONFIG_FILE, METRICS_FILE};
use see_core::see::AblationMode;

fn quick(algo: Algo, see: bool) -> TrainConfig {
    TrainConfig {
        algo,
        see_enabled: see,
        total_steps: 400,
        warm_up_steps: 100,
        eval_every: 100,
        eval_episodes: 2,
        batch_size: 32,
        buffer_size: 1000,
        hidden_dims: vec![16, 16],
        ..TrainConfig::default()
    }
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    for algo in [Algo::Sac, Algo::Td3] {
        let mut outputs = Vec::new();
        for run in ["a", "b"] {
            let out = dir.path().join(format!("{algo}-{run}"));
            let cfg = TrainConfig {
                out: Some(out.clone()),
                seed: 11,
                ..quick(algo, true)
            };
            train(&cfg).unwrap();
            let mut ckpt = Checkpoint::load(&out.join(CHECKPOINT_FILE)).unwrap();
            ckpt.config = serde_json::Value::Null;
            outputs.push((fs::read(out.join(METRICS_FILE)).unwrap(), ckpt));
        }
        assert_eq!(outputs[0].0, outputs[1].0, "{algo} metrics differ");
        assert_eq!(outputs[0].1, outputs[1].1, "{algo} checkpoints differ");
    }
}

#[test]
fn different_seeds_diverge() {
    let a = train(&TrainConfig {
        seed: 1,
        ..quick(Algo::Sac, false)
    })
    .unwrap();
    let b = train(&TrainConfig {
        seed: 2,
        ..quick(Algo::Sac, false)
    })
    .unwrap();
    assert_ne!(a.agent.exploit, b.agent.exploit);
}

#[test]
fn evaluation_does_not_perturb_training() {
    let one = train(&TrainConfig {
        eval_episodes: 1,
        ..quick(Algo::Sac, true)
    })
    .unwrap();
    let five = train(&TrainConfig {
        eval_episodes: 5,
        ..quick(Algo::Sac, true)
    })
    .unwrap();
    assert_eq!(one.agent, five.agent);
    for (a, b) in one.rows.iter().zip(&five.rows) {
        assert_eq!(a.exploit_critic_loss, b.exploit_critic_loss);
        assert_eq!(a.explore_critic_loss, b.explore_critic_loss);
        assert_eq!(a.p_q_mean, b.p_q_mean);
        assert_eq!(a.train_episode_return, b.train_episode_return);
    }
}

#[test]
fn metrics_file_matches_schedule_and_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = TrainConfig {
        total_steps: 350,
        out: Some(dir.path().to_path_buf()),
        ..quick(Algo::Td3, false)
    };
    let outcome = train(&cfg).unwrap();
    let rows = read_metrics(&dir.path().join(METRICS_FILE)).unwrap();
    assert_eq!(rows.len(), 1 + 350 / 100);
    assert_eq!(rows, outcome.rows);
    assert!(rows.windows(2).all(|w| w[0].step < w[1].step));

    let echo = fs::read_to_string(dir.path().join(CONFIG_FILE)).unwrap();
    assert_eq!(TrainConfig::from_toml_str(&echo).unwrap(), cfg);

    let ckpt = Checkpoint::load(&dir.path().join(CHECKPOINT_FILE)).unwrap();
    assert_eq!(ckpt.step, 350);
    assert_eq!(ckpt.get("exploit.actor").unwrap(), outcome.agent.exploit.actor_params);
    assert!(ckpt.get("explore.actor").is_err());
}

#[test]
fn ablated_runs_complete() {
    for ablation in AblationMode::ALL {
        for algo in [Algo::Sac, Algo::Td3] {
            let cfg = TrainConfig {
                total_steps: 200,
                ablations: vec![ablation],
                env: EnvId::LocalOptimumCar,
                reward: RewardVariant::Adverse,
                ..quick(algo, true)
            };
            let out = train(&cfg).unwrap();
            let last = out.final_row();
            assert!(last.explore_critic_loss.is_some(), "{algo} {ablation}");
            assert_eq!(last.p_q_mean.is_none(), ablation == AblationMode::NoMixing);
        }
    }
}

#[test]
fn two_goal_plane_trains() {
    let cfg = TrainConfig {
        env: EnvId::TwoGoalPlane,
        reward: RewardVariant::Sparse,
        ..quick(Algo::Sac, true)
    };
    assert_eq!(train(&cfg).unwrap().rows.len(), 5);
}

/// Pump energy until near upright, then balance with a PD law.
fn swing_up(obs: &[f64]) -> Vec<f64> {
    let (c, s, w) = (obs[0], obs[1], obs[2]);
    let angle = s.atan2(c);
    let u = if c > 0.85 {
        -12.0 * angle - 2.5 * w
    } else {
        let energy = 0.5 * w * w / 3.0 + 5.0 * (c - 1.0) / 3.0;
        if energy < 0.0 {
            2.0 * w.signum()
        } else {
            0.0
        }
    };
    vec![u.clamp(-2.0, 2.0)]
}

#[test]
fn scripted_controller_on_sparse_pendulum() {
    let mut env = Pendulum::new(RewardVariant::Sparse);
    let mut obs = env.reset(0);
    let (mut total, mut in_goal, mut steps) = (0.0, 0, 0);
    loop {
        let a = swing_up(&obs);
        let s = env.step(&a).unwrap();
        total += s.reward;
        in_goal += usize::from(env.goal_reached());
        steps += 1;
        obs = s.next_obs;
        if s.truncated {
            break;
        }
    }
    assert_eq!(steps, 200);
    assert_eq!(total, in_goal as f64);
    assert!(in_goal > 50 && in_goal <= 200, "{in_goal} in-goal steps");

    let mut policy = |o: &[f64]| Ok(swing_up(o));
    let ev = evaluate(&mut policy, &mut env, 3, 9).unwrap();
    assert_eq!(ev.returns, vec![total; 3]);
    assert_eq!(ev.goal_fraction, 1.0);
    assert_eq!(ev.stderr, 0.0);
}
