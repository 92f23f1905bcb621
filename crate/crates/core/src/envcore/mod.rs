//! Desk-scale episodic environments with dense, sparse and exploration-adverse
//! reward variants.
//!
//! Every environment is a small deterministic state machine: the seed passed to
//! [`Environment::reset`] fixes the initial state and the dynamics contain no
//! further randomness, so a seed plus an action sequence fully determines a
//! trajectory.

mod local_optimum_car;
mod pendulum;
mod two_goal_plane;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use local_optimum_car::{car_transition, CarState, LocalOptimumCar};
pub use pendulum::{pendulum_transition, Pendulum, PendulumState};
pub use two_goal_plane::{plane_transition, TwoGoalPlane, TwoGoalPlaneConfig};

/// Which reward function an environment instance uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardVariant {
    Dense,
    Sparse,
    Adverse,
}

impl RewardVariant {
    pub const ALL: [RewardVariant; 3] = [Self::Dense, Self::Sparse, Self::Adverse];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Dense => "dense",
            Self::Sparse => "sparse",
            Self::Adverse => "adverse",
        }
    }
}

impl fmt::Display for RewardVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RewardVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dense" => Ok(Self::Dense),
            "sparse" => Ok(Self::Sparse),
            "adverse" => Ok(Self::Adverse),
            other => Err(Error::Config(format!(
                "unknown reward variant '{other}' (expected dense|sparse|adverse)"
            ))),
        }
    }
}

/// Registry identifiers of the available environments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvId {
    Pendulum,
    LocalOptimumCar,
    TwoGoalPlane,
}

impl EnvId {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Pendulum => "pendulum",
            Self::LocalOptimumCar => "local-optimum-car",
            Self::TwoGoalPlane => "two-goal-plane",
        }
    }
}

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pendulum" => Ok(Self::Pendulum),
            "local-optimum-car" => Ok(Self::LocalOptimumCar),
            "two-goal-plane" => Ok(Self::TwoGoalPlane),
            other => Err(Error::Config(format!(
                "unknown environment '{other}' (expected pendulum|local-optimum-car|two-goal-plane)"
            ))),
        }
    }
}

/// Static description of an episodic MDP: dimensions, action bounds and episode limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpSpec {
    pub state_dim: usize,
    pub action_dim: usize,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    /// Per-dimension observation bounds; `[-1, 1]` is used where the observation is unbounded.
    pub obs_low: Vec<f64>,
    pub obs_high: Vec<f64>,
    pub max_episode_steps: usize,
    pub discount_hint: f64,
}

impl MdpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.state_dim == 0 || self.action_dim == 0 {
            return Err(Error::Config("state and action dims must be positive".into()));
        }
        if self.action_low.len() != self.action_dim || self.action_high.len() != self.action_dim {
            return Err(Error::Config("action bounds must match action_dim".into()));
        }
        if self.obs_low.len() != self.state_dim || self.obs_high.len() != self.state_dim {
            return Err(Error::Config("observation bounds must match state_dim".into()));
        }
        if self.action_low.iter().zip(&self.action_high).any(|(lo, hi)| !(lo < hi)) {
            return Err(Error::Config("action_low must be < action_high elementwise".into()));
        }
        if self.max_episode_steps == 0 {
            return Err(Error::Config("max_episode_steps must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.discount_hint) {
            return Err(Error::Config("discount_hint must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Clip an action into the box bounds.
    pub fn clip_action(&self, action: &[f64]) -> Vec<f64> {
        action
            .iter()
            .zip(self.action_low.iter().zip(&self.action_high))
            .map(|(a, (lo, hi))| a.clamp(*lo, *hi))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_obs: Vec<f64>,
    pub reward: f64,
    /// The transition entered an absorbing (goal) state.
    pub terminated: bool,
    /// The step limit was hit without termination.
    pub truncated: bool,
}

/// One recorded environment step; the unit stored in the replay buffer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub terminated: bool,
}

/// Uniform episodic interface over all environments.
pub trait Environment: Send {
    fn spec(&self) -> &MdpSpec;

    fn variant(&self) -> RewardVariant;

    /// Start a new episode. Equal seeds give equal initial observations.
    fn reset(&mut self, seed: u64) -> Vec<f64>;

    fn step(&mut self, action: &[f64]) -> Result<StepResult>;

    /// Whether the last transition put the system in the task's primary goal region.
    fn goal_reached(&self) -> bool;
}

/// Build an environment from its registry id and reward variant.
pub fn make_env(id: EnvId, variant: RewardVariant) -> Result<Box<dyn Environment>> {
    Ok(match id {
        EnvId::Pendulum => Box::new(Pendulum::new(variant)),
        EnvId::LocalOptimumCar => Box::new(LocalOptimumCar::new(variant)),
        EnvId::TwoGoalPlane => Box::new(TwoGoalPlane::new(variant, TwoGoalPlaneConfig::default())?),
    })
}

/// String-keyed variant of [`make_env`].
pub fn make_env_by_name(id: &str, variant: &str) -> Result<Box<dyn Environment>> {
    make_env(id.parse()?, variant.parse()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_builds_every_pair() {
        for id in ["pendulum", "local-optimum-car"] {
            for v in RewardVariant::ALL {
                let env = make_env_by_name(id, v.as_str()).unwrap();
                env.spec().validate().unwrap();
                assert_eq!(env.variant(), v);
            }
        }
        let plane = make_env_by_name("two-goal-plane", "sparse").unwrap();
        assert_eq!(plane.spec().action_dim, 2);
    }

    #[test]
    fn registry_rejects_unknown_names() {
        assert!(matches!(make_env_by_name("cartpole", "dense"), Err(Error::Config(_))));
        assert!(matches!(make_env_by_name("pendulum", "bogus"), Err(Error::Config(_))));
    }

    #[test]
    fn spec_validation_catches_inverted_bounds() {
        let mut spec = Pendulum::new(RewardVariant::Dense).spec().clone();
        spec.action_low = vec![2.0];
        spec.action_high = vec![-2.0];
        assert!(spec.validate().is_err());
    }

    #[test]
    fn truncation_exactly_at_step_limit() {
        for id in [EnvId::Pendulum, EnvId::LocalOptimumCar] {
            let mut env = make_env(id, RewardVariant::Sparse).unwrap();
            env.reset(3);
            let limit = env.spec().max_episode_steps;
            let zero = vec![0.0; env.spec().action_dim];
            for t in 1..=limit {
                let r = env.step(&zero).unwrap();
                if r.terminated {
                    break;
                }
                assert_eq!(r.truncated, t == limit, "{id} step {t}");
            }
        }
    }
}
