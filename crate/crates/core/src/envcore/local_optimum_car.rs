use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Environment, MdpSpec, RewardVariant, StepResult};
use crate::error::{check_dim, check_finite, Result};

pub const MIN_POSITION: f64 = -1.2;
pub const MAX_POSITION: f64 = 0.6;
pub const MAX_SPEED: f64 = 0.07;
pub const POWER: f64 = 0.0015;
pub const RIGHT_GOAL: f64 = 0.45;
pub const LEFT_GOAL: f64 = -1.1;
pub const RIGHT_GOAL_REWARD: f64 = 100.0;
pub const LEFT_GOAL_REWARD: f64 = 10.0;
pub const MAX_EPISODE_STEPS: usize = 999;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CarState {
    pub position: f64,
    pub velocity: f64,
}

impl CarState {
    pub fn observation(&self) -> Vec<f64> {
        vec![self.position, self.velocity]
    }
}

/// Continuous mountain car with a second, lesser goal on the left slope.
///
/// Returns the next state, the reward and whether either goal was reached.
pub fn car_transition(state: CarState, force: f64, variant: RewardVariant) -> Result<(CarState, f64, bool)> {
    check_finite("local-optimum-car step", &[state.position, state.velocity, force])?;
    let force = force.clamp(-1.0, 1.0);
    let mut velocity =
        (state.velocity + force * POWER - 0.0025 * (3.0 * state.position).cos()).clamp(-MAX_SPEED, MAX_SPEED);
    let position = (state.position + velocity).clamp(MIN_POSITION, MAX_POSITION);
    if position == MIN_POSITION && velocity < 0.0 {
        velocity = 0.0;
    }

    let goal_reward = if position >= RIGHT_GOAL {
        RIGHT_GOAL_REWARD
    } else if position <= LEFT_GOAL {
        LEFT_GOAL_REWARD
    } else {
        0.0
    };
    let terminated = goal_reward > 0.0;
    let action_cost = 0.1 * force * force;
    let reward = match variant {
        RewardVariant::Dense => goal_reward - action_cost - (position - RIGHT_GOAL).abs(),
        RewardVariant::Sparse => goal_reward,
        RewardVariant::Adverse => goal_reward - action_cost,
    };
    Ok((CarState { position, velocity }, reward, terminated))
}

#[derive(Debug, Clone)]
pub struct LocalOptimumCar {
    variant: RewardVariant,
    spec: MdpSpec,
    state: CarState,
    steps: usize,
    goal_reached: bool,
}

impl LocalOptimumCar {
    pub fn new(variant: RewardVariant) -> Self {
        Self {
            variant,
            spec: MdpSpec {
                state_dim: 2,
                action_dim: 1,
                action_low: vec![-1.0],
                action_high: vec![1.0],
                obs_low: vec![MIN_POSITION, -MAX_SPEED],
                obs_high: vec![MAX_POSITION, MAX_SPEED],
                max_episode_steps: MAX_EPISODE_STEPS,
                discount_hint: 0.99,
            },
            state: CarState {
                position: -0.5,
                velocity: 0.0,
            },
            steps: 0,
            goal_reached: false,
        }
    }

    pub fn state(&self) -> CarState {
        self.state
    }

    pub fn set_state(&mut self, state: CarState) {
        self.state = state;
    }
}

impl Environment for LocalOptimumCar {
    fn spec(&self) -> &MdpSpec {
        &self.spec
    }

    fn variant(&self) -> RewardVariant {
        self.variant
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.state = CarState {
            position: rng.random_range(-0.6..-0.4),
            velocity: 0.0,
        };
        self.steps = 0;
        self.goal_reached = false;
        self.state.observation()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        check_dim("local-optimum-car action", 1, action.len())?;
        let (next, reward, terminated) = car_transition(self.state, action[0], self.variant)?;
        self.state = next;
        self.steps += 1;
        self.goal_reached = next.position >= RIGHT_GOAL;
        Ok(StepResult {
            next_obs: next.observation(),
            reward,
            terminated,
            truncated: !terminated && self.steps >= self.spec.max_episode_steps,
        })
    }

    fn goal_reached(&self) -> bool {
        self.goal_reached
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn car(position: f64, velocity: f64) -> CarState {
        CarState { position, velocity }
    }

    #[test]
    fn left_goal_pays_ten_and_terminates() {
        let (s, r, done) = car_transition(car(-1.09, -0.03), 0.0, RewardVariant::Sparse).unwrap();
        assert!(s.position <= LEFT_GOAL);
        assert_eq!(r, 10.0);
        assert!(done);
    }

    #[test]
    fn right_goal_pays_hundred_and_terminates() {
        let (s, r, done) = car_transition(car(0.44, 0.05), 0.0, RewardVariant::Sparse).unwrap();
        assert!(s.position >= RIGHT_GOAL);
        assert_eq!(r, 100.0);
        assert!(done);
    }

    #[test]
    fn sparse_mid_track_is_zero() {
        for f in [-1.0, 0.0, 0.3, 1.0] {
            let (_, r, done) = car_transition(car(-0.5, 0.0), f, RewardVariant::Sparse).unwrap();
            assert_eq!(r, 0.0);
            assert!(!done);
        }
    }

    #[test]
    fn adverse_and_dense_rewards() {
        let (s, r, _) = car_transition(car(-0.5, 0.0), 0.5, RewardVariant::Adverse).unwrap();
        assert_abs_diff_eq!(r, -0.025, epsilon = 1e-15);
        let (_, rd, _) = car_transition(car(-0.5, 0.0), 0.5, RewardVariant::Dense).unwrap();
        assert_abs_diff_eq!(rd, -0.025 - (s.position - 0.45).abs(), epsilon = 1e-15);
        // force beyond the bound is clipped before costing
        let (_, r2, _) = car_transition(car(-0.5, 0.0), 3.0, RewardVariant::Adverse).unwrap();
        assert_abs_diff_eq!(r2, -0.1, epsilon = 1e-15);
    }

    #[test]
    fn dynamics_hand_step() {
        let (s, _, _) = car_transition(car(-0.5, 0.01), 1.0, RewardVariant::Sparse).unwrap();
        let v = 0.01 + 0.0015 - 0.0025 * (-1.5f64).cos();
        assert_abs_diff_eq!(s.velocity, v, epsilon = 1e-15);
        assert_abs_diff_eq!(s.position, -0.5 + v, epsilon = 1e-15);
    }

    #[test]
    fn left_wall_stops_the_car() {
        // the left goal sits inside the track, so reaching the wall implies termination
        let (s, _, done) = car_transition(car(-1.19, -0.07), -1.0, RewardVariant::Sparse).unwrap();
        assert_eq!(s.position, MIN_POSITION);
        assert_eq!(s.velocity, 0.0);
        assert!(done);
    }

    #[test]
    fn reset_is_seeded_and_in_range() {
        let mut env = LocalOptimumCar::new(RewardVariant::Dense);
        let a = env.reset(5);
        assert_eq!(a, env.reset(5));
        assert!((-0.6..-0.4).contains(&a[0]));
        assert_eq!(a[1], 0.0);
    }
}
