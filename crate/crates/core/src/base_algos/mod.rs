//! SAC and TD3 update machinery.
//!
//! [`ActorCritic`] holds one actor, twin critics, their targets and
//! optimizers. The same learner serves the task objective (environment
//! reward, additive Bellman target) and the exploration objective (supplied
//! reward, max-reward target, critic conditioned on a fingerprint of another
//! value function).

mod learner;
mod optim;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::approx::ParamSet;
use crate::error::{Error, Result};

pub use learner::{Actor, ActorCritic, Objective, UpdateStats};
pub use optim::Adam;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Sac,
    Td3,
}

impl Algo {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Sac => "sac",
            Self::Td3 => "td3",
        }
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
        match s {
            "sac" => Ok(Self::Sac),
            "td3" => Ok(Self::Td3),
            other => Err(Error::Config(format!("unknown algorithm '{other}' (expected sac|td3)"))),
        }
    }
}

/// How a critic target combines the immediate reward with the bootstrapped
/// next value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetRule {
    /// `r + gamma * (1 - d) * next`
    Additive,
    /// `max(r, gamma * next)` for non-terminal rows, `r` for terminal ones.
    Max,
}

impl TargetRule {
    pub fn target(self, reward: f64, next: f64, gamma: f64, terminated: bool) -> f64 {
        match self {
            Self::Additive => additive_bellman_target(reward, next, gamma, terminated),
            Self::Max => crate::see::max_bellman_target(reward, next, gamma, terminated),
        }
    }
}

pub fn additive_bellman_target(reward: f64, next: f64, gamma: f64, terminated: bool) -> f64 {
    if terminated {
        reward
    } else {
        reward + gamma * next
    }
}

/// Hyperparameters of one actor-critic learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerConfig {
    pub algo: Algo,
    pub hidden_dims: Vec<usize>,
    pub learning_rate: f64,
    pub gamma: f64,
    pub tau: f64,
    /// SAC only.
    pub initial_temperature: f64,
    /// SAC only. `None` means `-action_dim`.
    pub target_entropy: Option<f64>,
    /// SAC only. A fixed temperature when false.
    pub learn_temperature: bool,
    /// SAC only. Subtract `alpha * log pi` from the bootstrapped next value.
    pub entropy_in_target: bool,
    /// TD3 only. Actor updates every this many critic updates.
    pub actor_update_freq: u64,
    /// TD3 only. Target updates every this many critic updates.
    pub target_update_freq: u64,
    /// TD3 only. Behavior noise std as a fraction of the action half-range.
    pub action_noise: f64,
    /// TD3 only. Target smoothing noise std, fraction of the half-range.
    pub target_noise: f64,
    /// TD3 only. Clip of the smoothing noise, fraction of the half-range.
    pub target_noise_clip: f64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self::sac()
    }
}

impl LearnerConfig {
    pub fn sac() -> Self {
        Self {
            algo: Algo::Sac,
            hidden_dims: vec![400, 300],
            learning_rate: 1e-3,
            gamma: 0.99,
            tau: 0.005,
            initial_temperature: 1.0,
            target_entropy: None,
            learn_temperature: true,
            entropy_in_target: true,
            actor_update_freq: 1,
            target_update_freq: 1,
            action_noise: 0.0,
            target_noise: 0.0,
            target_noise_clip: 0.0,
        }
    }

    pub fn td3() -> Self {
        Self {
            algo: Algo::Td3,
            entropy_in_target: false,
            learn_temperature: false,
            actor_update_freq: 2,
            target_update_freq: 2,
            action_noise: 0.1,
            target_noise: 0.2,
            target_noise_clip: 0.5,
            ..Self::sac()
        }
    }

    pub fn for_algo(algo: Algo) -> Self {
        match algo {
            Algo::Sac => Self::sac(),
            Algo::Td3 => Self::td3(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.hidden_dims.is_empty() || self.hidden_dims.contains(&0) {
            return bad("hidden_dims must be nonempty and positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        if !(self.initial_temperature > 0.0 && self.initial_temperature.is_finite()) {
            return bad("initial_temperature must be positive");
        }
        if self.actor_update_freq == 0 || self.target_update_freq == 0 {
            return bad("update frequencies must be >= 1");
        }
        for (name, v) in [
            ("action_noise", self.action_noise),
            ("target_noise", self.target_noise),
            ("target_noise_clip", self.target_noise_clip),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be non-negative")));
            }
        }
        Ok(())
    }
}

/// Polyak averaging `target <- tau * online + (1 - tau) * target`.
pub fn soft_target_update(online: &ParamSet, target: &mut ParamSet, tau: f64) -> Result<()> {
    if !online.same_topology(target) {
        return Err(Error::Config("target network topology mismatch".into()));
    }
    for (t, o) in target.values_mut().iter_mut().zip(online.values()) {
        ndarray::Zip::from(t)
            .and(o)
            .for_each(|t, &o| *t = tau * o + (1.0 - tau) * *t);
    }
    Ok(())
}
