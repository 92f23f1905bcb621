//! Exploration by seeking large TD errors.
//!
//! A second actor-critic learns to maximize the absolute TD error of the
//! exploitation critic. Its critic bootstraps with a max over the immediate
//! reward and the discounted future, and is conditioned on a fingerprint of
//! the exploitation critic so it can track the moving target. At every step
//! the behavior policy picks the exploitation or the exploration action by a
//! softmax over the relative advantages each critic assigns to its own
//! proposal.

use std::fmt;
use std::str::FromStr;

use ndarray::ArrayView2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::approx::{ActionValue, DEFAULT_PROBES};
use crate::base_algos::{ActorCritic, LearnerConfig, Objective, TargetRule, UpdateStats};
use crate::buffer::Batch;
use crate::envcore::MdpSpec;
use crate::error::{check_dim, check_finite, Error, Result};

/// `|r + gamma * (1 - d) * v_next - v_now|`
pub fn exploration_reward(reward: f64, gamma: f64, terminated: bool, v_next: f64, v_now: f64) -> f64 {
    let bootstrap = if terminated { 0.0 } else { gamma * v_next };
    (reward + bootstrap - v_now).abs()
}

/// `max(r, gamma * next)` for non-terminal transitions, `r` for terminal ones.
pub fn max_bellman_target(reward: f64, next: f64, gamma: f64, terminated: bool) -> f64 {
    if terminated {
        reward
    } else {
        reward.max(gamma * next)
    }
}

/// Absolute TD errors of `exploit` on every row of `batch`, bootstrapping
/// with an action drawn from its online policy.
pub fn exploration_rewards(exploit: &ActorCritic, batch: &Batch, rng: &mut impl Rng) -> Result<Vec<f64>> {
    let a_next = exploit.policy_actions(batch.next_obs.view(), rng)?;
    let v_next = exploit.values(batch.next_obs.view(), a_next.view())?;
    let v_now = exploit.values(batch.obs.view(), batch.actions.view())?;
    let gamma = exploit.cfg.gamma;
    Ok((0..batch.len())
        .map(|i| exploration_reward(batch.rewards[i], gamma, batch.terminated[i], v_next[i], v_now[i]))
        .collect())
}

/// `(A_exploit, A_explore)`: how much each critic prefers its own policy's
/// proposal over the other one.
pub fn relative_advantages(
    q_exploit: impl Fn(&[f64]) -> Result<f64>,
    q_explore: impl Fn(&[f64]) -> Result<f64>,
    a_exploit: &[f64],
    a_explore: &[f64],
) -> Result<(f64, f64)> {
    let adv_q = q_exploit(a_exploit)? - q_exploit(a_explore)?;
    let adv_d = q_explore(a_explore)? - q_explore(a_exploit)?;
    Ok((adv_q, adv_d))
}

/// Probability of choosing the exploitation action:
/// `softmax(lambda * A_q / T, (1 - lambda) * A_d / T)[0]`.
pub fn mixing_probability(adv_exploit: f64, adv_explore: f64, lambda: f64, temperature: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Config(format!("mixing weight {lambda} outside [0, 1]")));
    }
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::Config(format!(
            "mixing temperature {temperature} must be positive"
        )));
    }
    check_finite("relative advantages", &[adv_exploit, adv_explore])?;
    let zq = lambda * adv_exploit / temperature;
    let zd = (1.0 - lambda) * adv_explore / temperature;
    // logistic form of the two-way softmax, stable for large logits
    Ok(1.0 / (1.0 + (zd - zq).exp()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MixDecision {
    Exploit,
    Explore,
}

/// Bernoulli draw with `P(Exploit) = p_exploit`.
pub fn behavior_sample(p_exploit: f64, rng: &mut impl Rng) -> MixDecision {
    if rng.random::<f64>() < p_exploit {
        MixDecision::Exploit
    } else {
        MixDecision::Explore
    }
}

/// Ablations that each remove one component of the method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AblationMode {
    /// Exploration critic sees only `(s, a)`.
    NoConditioning,
    /// Exploration critic uses the additive Bellman target.
    NoMaxUpdate,
    /// Behavior alternates between the two policies step by step.
    NoMixing,
}

impl AblationMode {
    pub const ALL: [AblationMode; 3] = [Self::NoConditioning, Self::NoMaxUpdate, Self::NoMixing];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::NoConditioning => "no-conditioning",
            Self::NoMaxUpdate => "no-max-update",
            Self::NoMixing => "no-mixing",
        }
    }
}

impl fmt::Display for AblationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AblationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('_', "-").as_str() {
            "no-conditioning" => Ok(Self::NoConditioning),
            "no-max-update" => Ok(Self::NoMaxUpdate),
            "no-mixing" => Ok(Self::NoMixing),
            _ => Err(Error::Config(format!(
                "unknown ablation '{s}' (expected no-conditioning|no-max-update|no-mixing)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeeConfig {
    pub probes: usize,
    /// Weight of the exploitation advantage in the mixing softmax.
    pub lambda: f64,
    pub temperature: f64,
    pub ablations: Vec<AblationMode>,
    /// SAC exploration critic: include the entropy bonus in its target.
    pub entropy_in_target: bool,
}

impl Default for SeeConfig {
    fn default() -> Self {
        Self {
            probes: DEFAULT_PROBES,
            lambda: 0.5,
            temperature: 1.0,
            ablations: Vec::new(),
            entropy_in_target: true,
        }
    }
}

impl SeeConfig {
    pub fn has(&self, mode: AblationMode) -> bool {
        self.ablations.contains(&mode)
    }

    pub fn validate(&self) -> Result<()> {
        if self.probes == 0 {
            return Err(Error::Config("probe count must be >= 1".into()));
        }
        mixing_probability(0.0, 0.0, self.lambda, self.temperature)?;
        Ok(())
    }
}

/// The behavior action for one step.
#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorChoice {
    pub action: Vec<f64>,
    /// `None` for a base learner.
    pub decision: Option<MixDecision>,
    pub p_exploit: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AgentStats {
    pub exploit: UpdateStats,
    pub explore: Option<UpdateStats>,
    /// Mean exploration reward over the batch.
    pub exploration_reward: Option<f64>,
}

/// An exploitation learner, plus the exploration learner when enabled.
#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub exploit: ActorCritic,
    pub explore: Option<ActorCritic>,
    pub see: Option<SeeConfig>,
    behavior_steps: u64,
}

impl Agent {
    pub fn new(spec: &MdpSpec, cfg: LearnerConfig, see: Option<SeeConfig>, rng: &mut impl Rng) -> Result<Self> {
        let exploit = ActorCritic::new(spec, cfg.clone(), None, rng)?;
        let explore = match &see {
            Some(sc) => {
                sc.validate()?;
                let ecfg = LearnerConfig {
                    entropy_in_target: cfg.entropy_in_target && sc.entropy_in_target,
                    ..cfg
                };
                let probes = (!sc.has(AblationMode::NoConditioning)).then_some(sc.probes);
                Some(ActorCritic::new(spec, ecfg, probes, rng)?)
            }
            None => None,
        };
        Ok(Self {
            exploit,
            explore,
            see,
            behavior_steps: 0,
        })
    }

    /// Pick the behavior action at `obs`.
    pub fn behavior(&mut self, obs: &[f64], rng: &mut impl Rng) -> Result<BehaviorChoice> {
        let step = self.behavior_steps;
        self.behavior_steps += 1;
        let a_q = self.exploit.act(obs, true, rng)?;
        let (Some(explore), Some(sc)) = (&self.explore, &self.see) else {
            return Ok(BehaviorChoice {
                action: a_q,
                decision: None,
                p_exploit: None,
            });
        };
        let a_d = explore.act(obs, true, rng)?;
        if sc.has(AblationMode::NoMixing) {
            let decision = if step.is_multiple_of(2) {
                MixDecision::Exploit
            } else {
                MixDecision::Explore
            };
            let action = if decision == MixDecision::Exploit { a_q } else { a_d };
            return Ok(BehaviorChoice {
                action,
                decision: Some(decision),
                p_exploit: None,
            });
        }
        let phi = explore.embedding(&self.exploit, false)?;
        let row = |a: &[f64]| -> Result<(ArrayView2<'_, f64>, Vec<f64>)> {
            check_dim("behavior action", explore.action_dim(), a.len())?;
            Ok((ArrayView2::from_shape((1, obs.len()), obs).expect("row"), a.to_vec()))
        };
        let q_exploit = |a: &[f64]| -> Result<f64> {
            let (s, a) = row(a)?;
            let av = ArrayView2::from_shape((1, a.len()), &a).expect("row");
            Ok(self.exploit.actor_value_batch(s, av, None)?[0])
        };
        let q_explore = |a: &[f64]| -> Result<f64> {
            let (s, a) = row(a)?;
            let av = ArrayView2::from_shape((1, a.len()), &a).expect("row");
            Ok(explore.actor_value_batch(s, av, phi.as_deref())?[0])
        };
        let (adv_q, adv_d) = relative_advantages(q_exploit, q_explore, &a_q, &a_d)?;
        let p = mixing_probability(adv_q, adv_d, sc.lambda, sc.temperature)?;
        let decision = behavior_sample(p, rng);
        let action = if decision == MixDecision::Exploit { a_q } else { a_d };
        Ok(BehaviorChoice {
            action,
            decision: Some(decision),
            p_exploit: Some(p),
        })
    }

    /// Target rule of the exploration critic, `None` without exploration.
    pub fn exploration_rule(&self) -> Option<TargetRule> {
        let sc = self.see.as_ref()?;
        self.explore.as_ref()?;
        Some(if sc.has(AblationMode::NoMaxUpdate) {
            TargetRule::Additive
        } else {
            TargetRule::Max
        })
    }

    /// Exploration rewards and critic regression targets the next update
    /// would use for `batch`, given the state of `rng_explore`.
    pub fn exploration_targets(
        &self,
        batch: &Batch,
        rng_explore: &mut impl Rng,
    ) -> Result<Option<(Vec<f64>, Vec<f64>)>> {
        let (Some(rule), Some(explore)) = (self.exploration_rule(), &self.explore) else {
            return Ok(None);
        };
        let r = exploration_rewards(&self.exploit, batch, rng_explore)?;
        let condition_on: Option<&dyn ActionValue> =
            explore.is_conditioned().then_some(&self.exploit as &dyn ActionValue);
        let objective = Objective {
            rewards: &r,
            rule,
            condition_on,
        };
        let y = explore.critic_targets_for(batch, &objective, rng_explore)?;
        Ok(Some((r, y)))
    }

    /// Deterministic exploitation action for evaluation.
    pub fn eval_action(&self, obs: &[f64], rng: &mut impl Rng) -> Result<Vec<f64>> {
        self.exploit.act(obs, false, rng)
    }

    /// Exploitation update on `batch` using `rng_exploit` only, then the
    /// exploration update using `rng_explore` only. The exploitation side
    /// never reads exploration state, so its trajectory is the same with or
    /// without exploration for equal batches.
    pub fn update(
        &mut self,
        batch: &Batch,
        rng_exploit: &mut impl Rng,
        rng_explore: &mut impl Rng,
    ) -> Result<AgentStats> {
        let exploit = self.exploit.update(batch, &Objective::task(batch), rng_exploit)?;
        let mut stats = AgentStats {
            exploit,
            ..AgentStats::default()
        };
        if let Some(rule) = self.exploration_rule() {
            let r = exploration_rewards(&self.exploit, batch, rng_explore)?;
            let explore = self.explore.as_mut().expect("rule implies an exploration learner");
            let condition_on: Option<&dyn ActionValue> = if explore.is_conditioned() {
                Some(&self.exploit)
            } else {
                None
            };
            let objective = Objective {
                rewards: &r,
                rule,
                condition_on,
            };
            stats.explore = Some(explore.update(batch, &objective, rng_explore)?);
            stats.exploration_reward = Some(r.iter().sum::<f64>() / r.len() as f64);
        }
        Ok(stats)
    }
}
