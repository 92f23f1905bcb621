use super::{Environment, MdpSpec, RewardVariant, StepResult};
use crate::error::{check_dim, check_finite, Error, Result};

/// Layout of the two-goal plane. Coordinates live in `[-1, 1]^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoGoalPlaneConfig {
    pub goals: [[f64; 2]; 2],
    pub start: [f64; 2],
    pub goal_radius: f64,
    pub max_step: f64,
    pub max_episode_steps: usize,
}

impl Default for TwoGoalPlaneConfig {
    fn default() -> Self {
        Self {
            goals: [[-0.5, 0.5], [0.5, 0.5]],
            start: [0.0, -0.5],
            goal_radius: 0.05,
            max_step: 0.05,
            max_episode_steps: 200,
        }
    }
}

/// Move by `displacement` (norm-clipped to `max_step`, position clipped to the plane).
///
/// Returns the new position, the reward, and the index of the goal entered, if any.
pub fn plane_transition(
    position: [f64; 2],
    displacement: &[f64],
    config: &TwoGoalPlaneConfig,
) -> Result<([f64; 2], f64, Option<usize>)> {
    check_dim("two-goal-plane action", 2, displacement.len())?;
    check_finite("two-goal-plane step", &[position[0], position[1]])?;
    check_finite("two-goal-plane step", displacement)?;
    let norm = displacement[0].hypot(displacement[1]);
    let scale = if norm > config.max_step {
        config.max_step / norm
    } else {
        1.0
    };
    let next = [
        (position[0] + displacement[0] * scale).clamp(-1.0, 1.0),
        (position[1] + displacement[1] * scale).clamp(-1.0, 1.0),
    ];
    let hit = config
        .goals
        .iter()
        .position(|g| (next[0] - g[0]).hypot(next[1] - g[1]) <= config.goal_radius);
    let reward = if hit.is_some() { 1.0 } else { 0.0 };
    Ok((next, reward, hit))
}

/// Point mass on a 2x2 plane with two rewarding, terminating goals.
#[derive(Debug, Clone)]
pub struct TwoGoalPlane {
    variant: RewardVariant,
    config: TwoGoalPlaneConfig,
    spec: MdpSpec,
    position: [f64; 2],
    steps: usize,
    last_goal: Option<usize>,
}

impl TwoGoalPlane {
    /// Only the sparse reward is defined for this environment.
    pub fn new(variant: RewardVariant, config: TwoGoalPlaneConfig) -> Result<Self> {
        if variant != RewardVariant::Sparse {
            return Err(Error::Config(format!(
                "two-goal-plane only defines the sparse reward, got '{variant}'"
            )));
        }
        if !(config.goal_radius > 0.0) || !(config.max_step > 0.0) || config.max_episode_steps == 0 {
            return Err(Error::Config(
                "two-goal-plane radius, step and limit must be positive".into(),
            ));
        }
        let m = config.max_step;
        Ok(Self {
            variant,
            spec: MdpSpec {
                state_dim: 2,
                action_dim: 2,
                action_low: vec![-m, -m],
                action_high: vec![m, m],
                obs_low: vec![-1.0, -1.0],
                obs_high: vec![1.0, 1.0],
                max_episode_steps: config.max_episode_steps,
                discount_hint: 0.9,
            },
            position: config.start,
            config,
            steps: 0,
            last_goal: None,
        })
    }

    pub fn config(&self) -> &TwoGoalPlaneConfig {
        &self.config
    }

    pub fn position(&self) -> [f64; 2] {
        self.position
    }

    pub fn set_position(&mut self, position: [f64; 2]) {
        self.position = position;
    }

    /// Index of the goal entered on the last step.
    pub fn last_goal(&self) -> Option<usize> {
        self.last_goal
    }
}

impl Environment for TwoGoalPlane {
    fn spec(&self) -> &MdpSpec {
        &self.spec
    }

    fn variant(&self) -> RewardVariant {
        self.variant
    }

    fn reset(&mut self, _seed: u64) -> Vec<f64> {
        self.position = self.config.start;
        self.steps = 0;
        self.last_goal = None;
        self.position.to_vec()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        let (next, reward, hit) = plane_transition(self.position, action, &self.config)?;
        self.position = next;
        self.steps += 1;
        self.last_goal = hit;
        let terminated = hit.is_some();
        Ok(StepResult {
            next_obs: next.to_vec(),
            reward,
            terminated,
            truncated: !terminated && self.steps >= self.spec.max_episode_steps,
        })
    }

    fn goal_reached(&self) -> bool {
        self.last_goal.is_some()
    }
}
