use std::fs;
use std::time::Instant;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::metrics::{mean_and_stderr, CsvLog, Mean, MetricsRow, TimingRow, METRICS_FILE, TIMING_FILE};
use crate::approx::Checkpoint;
use crate::buffer::ReplayBuffer;
use crate::envcore::{make_env, Environment, Transition};
use crate::error::Result;
use crate::see::Agent;

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const CONFIG_FILE: &str = "config.toml";

/// Independent random streams derived from one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RngStreams {
    pub env: ChaCha8Rng,
    pub policy: ChaCha8Rng,
    pub buffer: ChaCha8Rng,
    pub init: ChaCha8Rng,
    pub eval: ChaCha8Rng,
    pub exploit_update: ChaCha8Rng,
    pub explore_update: ChaCha8Rng,
}

impl RngStreams {
    pub fn new(seed: u64) -> Self {
        let stream = |id: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(id);
            r
        };
        Self {
            env: stream(1),
            policy: stream(2),
            buffer: stream(3),
            init: stream(4),
            eval: stream(5),
            exploit_update: stream(6),
            explore_update: stream(7),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub returns: Vec<f64>,
    pub mean: f64,
    pub stderr: f64,
    /// Fraction of episodes that entered the goal region at least once.
    pub goal_fraction: f64,
}

/// Run `episodes` full episodes with `policy`; episode `k` resets with the
/// `k`-th draw of a generator seeded by `seed`.
pub fn evaluate(
    policy: &mut dyn FnMut(&[f64]) -> Result<Vec<f64>>,
    env: &mut dyn Environment,
    episodes: usize,
    seed: u64,
) -> Result<EvalResult> {
    if episodes == 0 {
        return Err(crate::Error::Precondition(
            "evaluation needs at least one episode".into(),
        ));
    }
    let mut seeds = ChaCha8Rng::seed_from_u64(seed);
    let mut returns = Vec::with_capacity(episodes);
    let mut hits = 0usize;
    for _ in 0..episodes {
        let mut obs = env.reset(seeds.next_u64());
        let mut total = 0.0;
        let mut hit = false;
        loop {
            let action = policy(&obs)?;
            let step = env.step(&action)?;
            total += step.reward;
            hit |= env.goal_reached();
            obs = step.next_obs;
            if step.terminated || step.truncated {
                break;
            }
        }
        returns.push(total);
        hits += usize::from(hit);
    }
    let (mean, stderr) = mean_and_stderr(&returns);
    Ok(EvalResult {
        returns,
        mean,
        stderr,
        goal_fraction: hits as f64 / episodes as f64,
    })
}

pub struct TrainOutcome {
    pub rows: Vec<MetricsRow>,
    pub agent: Agent,
    pub streams: RngStreams,
}

impl TrainOutcome {
    pub fn final_row(&self) -> &MetricsRow {
        self.rows.last().expect("the initial evaluation row always exists")
    }
}

#[derive(Default)]
struct Window {
    train_return: Mean,
    exploration_reward: Mean,
    p_q: Mean,
    exploit_critic: Mean,
    exploit_actor: Mean,
    explore_critic: Mean,
    explore_actor: Mean,
}

struct Logs {
    metrics: CsvLog,
    timing: CsvLog,
}

fn uniform_action(env: &dyn Environment, rng: &mut impl Rng) -> Vec<f64> {
    let spec = env.spec();
    spec.action_low
        .iter()
        .zip(&spec.action_high)
        .map(|(&lo, &hi)| rng.random_range(lo..=hi))
        .collect()
}

fn eval_row(
    cfg: &TrainConfig,
    agent: &Agent,
    eval_env: &mut dyn Environment,
    streams: &mut RngStreams,
    step: u64,
    episode: u64,
    window: &Window,
) -> Result<MetricsRow> {
    let seed = streams.eval.next_u64();
    let mut unused = ChaCha8Rng::seed_from_u64(0);
    let mut policy = |obs: &[f64]| agent.eval_action(obs, &mut unused);
    let ev = evaluate(&mut policy, eval_env, cfg.eval_episodes, seed)?;
    Ok(MetricsRow {
        step,
        episode,
        eval_return_mean: ev.mean,
        eval_return_stderr: ev.stderr,
        eval_goal_fraction: ev.goal_fraction,
        train_episode_return: window.train_return.get(),
        exploration_reward_mean: window.exploration_reward.get(),
        p_q_mean: window.p_q.get(),
        exploit_critic_loss: window.exploit_critic.get(),
        exploit_actor_loss: window.exploit_actor.get(),
        explore_critic_loss: window.explore_critic.get(),
        explore_actor_loss: window.explore_actor.get(),
    })
}

/// Warm-up with uniform actions, then one environment step and
/// `update_freq` gradient passes per iteration, evaluating every
/// `eval_every` steps. Metrics rows are flushed as they are produced, so a
/// failed run leaves its partial log behind.
pub fn train(cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_until(cfg, |_| false)
}

/// [`train`], ending early after the first evaluation row for which `stop`
/// returns true.
pub fn train_until(cfg: &TrainConfig, mut stop: impl FnMut(&MetricsRow) -> bool) -> Result<TrainOutcome> {
    cfg.validate()?;
    let start = Instant::now();
    let mut streams = RngStreams::new(cfg.seed);
    let mut env = make_env(cfg.env, cfg.reward)?;
    let mut eval_env = make_env(cfg.env, cfg.reward)?;
    let spec = env.spec().clone();
    let mut agent = Agent::new(&spec, cfg.learner(), cfg.see(), &mut streams.init)?;
    let mut buffer = ReplayBuffer::new(cfg.buffer_size)?;

    let mut logs = match &cfg.out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join(CONFIG_FILE), cfg.to_toml_string()?)?;
            Some(Logs {
                metrics: CsvLog::create(&dir.join(METRICS_FILE))?,
                timing: CsvLog::create(&dir.join(TIMING_FILE))?,
            })
        }
        None => None,
    };
    let mut rows = Vec::new();
    let mut emit = |row: MetricsRow, logs: &mut Option<Logs>| -> Result<()> {
        if let Some(l) = logs.as_mut() {
            l.metrics.append(&row)?;
            l.timing.append(&TimingRow {
                step: row.step,
                wall_time: start.elapsed().as_secs_f64(),
            })?;
        }
        rows.push(row);
        Ok(())
    };

    let mut window = Window::default();
    let first = eval_row(cfg, &agent, eval_env.as_mut(), &mut streams, 0, 0, &window)?;
    let mut done = stop(&first);
    emit(first, &mut logs)?;
    let mut last_step = 0;

    let mut obs = env.reset(streams.env.next_u64());
    let mut episode_return = 0.0;
    let mut episodes = 0u64;
    for t in 1..=cfg.total_steps {
        if done {
            break;
        }
        last_step = t;
        let action = if t <= cfg.warm_up_steps {
            uniform_action(env.as_ref(), &mut streams.policy)
        } else {
            let choice = agent.behavior(&obs, &mut streams.policy)?;
            window.p_q.push_opt(choice.p_exploit);
            choice.action
        };
        let step = env.step(&action)?;
        episode_return += step.reward;
        buffer.push(Transition {
            obs: std::mem::take(&mut obs),
            action,
            reward: step.reward,
            next_obs: step.next_obs.clone(),
            terminated: step.terminated,
        });
        obs = step.next_obs;
        if step.terminated || step.truncated {
            window.train_return.push(episode_return);
            episodes += 1;
            episode_return = 0.0;
            obs = env.reset(streams.env.next_u64());
        }

        if t >= cfg.warm_up_steps && buffer.len() >= cfg.batch_size {
            for _ in 0..cfg.update_freq {
                let batch = buffer.sample_batch(cfg.batch_size, &mut streams.buffer)?;
                let stats = agent.update(&batch, &mut streams.exploit_update, &mut streams.explore_update)?;
                window.exploit_critic.push(stats.exploit.critic_loss);
                window.exploit_actor.push_opt(stats.exploit.actor_loss);
                window.exploration_reward.push_opt(stats.exploration_reward);
                if let Some(e) = stats.explore {
                    window.explore_critic.push(e.critic_loss);
                    window.explore_actor.push_opt(e.actor_loss);
                }
            }
        }

        if t % cfg.eval_every == 0 {
            let row = eval_row(cfg, &agent, eval_env.as_mut(), &mut streams, t, episodes, &window)?;
            done = stop(&row);
            emit(row, &mut logs)?;
            window = Window::default();
        }
    }

    if let Some(dir) = &cfg.out {
        let mut ckpt = Checkpoint::new(last_step, serde_json::to_value(cfg)?, serde_json::to_value(&streams)?);
        for (name, params) in agent.exploit.named_params() {
            ckpt.insert(format!("exploit.{name}"), params)?;
        }
        if let Some(e) = &agent.explore {
            for (name, params) in e.named_params() {
                ckpt.insert(format!("explore.{name}"), params)?;
            }
        }
        ckpt.save(&dir.join(CHECKPOINT_FILE))?;
    }
    Ok(TrainOutcome { rows, agent, streams })
}
