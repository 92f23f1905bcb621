use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Environment, MdpSpec, RewardVariant, StepResult};
use crate::error::{check_finite, Result};

pub const MAX_TORQUE: f64 = 2.0;
pub const MAX_SPEED: f64 = 8.0;
pub const DT: f64 = 0.05;
pub const GRAVITY: f64 = 10.0;
pub const MASS: f64 = 1.0;
pub const LENGTH: f64 = 1.0;
pub const MAX_EPISODE_STEPS: usize = 200;
/// Half-width of the upright goal cone.
pub const GOAL_HALF_ANGLE: f64 = 10.0 * PI / 180.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendulumState {
    pub angle: f64,
    pub angular_velocity: f64,
}

impl PendulumState {
    pub fn observation(&self) -> Vec<f64> {
        vec![self.angle.cos(), self.angle.sin(), self.angular_velocity]
    }
}

/// Wrap an angle into `[-pi, pi)`.
pub fn normalize_angle(angle: f64) -> f64 {
    (angle + PI).rem_euclid(2.0 * PI) - PI
}

fn in_goal(angle: f64) -> bool {
    normalize_angle(angle).abs() <= GOAL_HALF_ANGLE
}

/// One step of the inverted pendulum. The reward is computed on the state
/// before the update, as in the classic environment.
pub fn pendulum_transition(state: PendulumState, torque: f64, variant: RewardVariant) -> Result<(PendulumState, f64)> {
    check_finite("pendulum step", &[state.angle, state.angular_velocity, torque])?;
    let u = torque.clamp(-MAX_TORQUE, MAX_TORQUE);
    let th = state.angle;
    let thdot = state.angular_velocity;

    let action_cost = 0.001 * u * u;
    let sparse = if in_goal(th) { 1.0 } else { 0.0 };
    let reward = match variant {
        RewardVariant::Dense => {
            let th_n = normalize_angle(th);
            -(th_n * th_n + 0.1 * thdot * thdot + action_cost)
        }
        RewardVariant::Sparse => sparse,
        RewardVariant::Adverse => sparse - action_cost,
    };

    let new_thdot = (thdot + (3.0 * GRAVITY / (2.0 * LENGTH) * th.sin() + 3.0 / (MASS * LENGTH * LENGTH) * u) * DT)
        .clamp(-MAX_SPEED, MAX_SPEED);
    let new_th = th + new_thdot * DT;
    Ok((
        PendulumState {
            angle: new_th,
            angular_velocity: new_thdot,
        },
        reward,
    ))
}

/// Torque-limited inverted pendulum. Dense episodes start at a uniformly random
/// angle and velocity; sparse and adverse episodes always start hanging down at rest.
#[derive(Debug, Clone)]
pub struct Pendulum {
    variant: RewardVariant,
    spec: MdpSpec,
    state: PendulumState,
    steps: usize,
    goal_reached: bool,
}

impl Pendulum {
    pub fn new(variant: RewardVariant) -> Self {
        Self {
            variant,
            spec: MdpSpec {
                state_dim: 3,
                action_dim: 1,
                action_low: vec![-MAX_TORQUE],
                action_high: vec![MAX_TORQUE],
                obs_low: vec![-1.0, -1.0, -MAX_SPEED],
                obs_high: vec![1.0, 1.0, MAX_SPEED],
                max_episode_steps: MAX_EPISODE_STEPS,
                discount_hint: 0.99,
            },
            state: PendulumState {
                angle: PI,
                angular_velocity: 0.0,
            },
            steps: 0,
            goal_reached: false,
        }
    }

    pub fn state(&self) -> PendulumState {
        self.state
    }

    pub fn set_state(&mut self, state: PendulumState) {
        self.state = state;
    }
}

impl Environment for Pendulum {
    fn spec(&self) -> &MdpSpec {
        &self.spec
    }

    fn variant(&self) -> RewardVariant {
        self.variant
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.state = match self.variant {
            RewardVariant::Dense => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                PendulumState {
                    angle: rng.random_range(-PI..PI),
                    angular_velocity: rng.random_range(-1.0..1.0),
                }
            }
            RewardVariant::Sparse | RewardVariant::Adverse => PendulumState {
                angle: PI,
                angular_velocity: 0.0,
            },
        };
        self.steps = 0;
        self.goal_reached = false;
        self.state.observation()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        crate::error::check_dim("pendulum action", 1, action.len())?;
        self.goal_reached = in_goal(self.state.angle);
        let (next, reward) = pendulum_transition(self.state, action[0], self.variant)?;
        self.state = next;
        self.steps += 1;
        Ok(StepResult {
            next_obs: next.observation(),
            reward,
            terminated: false,
            truncated: self.steps >= self.spec.max_episode_steps,
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

    fn at(angle: f64) -> PendulumState {
        PendulumState {
            angle,
            angular_velocity: 0.0,
        }
    }

    #[test]
    fn sparse_reward_upright_and_hanging() {
        assert_eq!(pendulum_transition(at(0.0), 0.0, RewardVariant::Sparse).unwrap().1, 1.0);
        assert_eq!(pendulum_transition(at(PI), 0.0, RewardVariant::Sparse).unwrap().1, 0.0);
        // the cone is closed at 10 degrees
        let edge = GOAL_HALF_ANGLE - 1e-12;
        assert_eq!(
            pendulum_transition(at(-edge), 0.0, RewardVariant::Sparse).unwrap().1,
            1.0
        );
        assert_eq!(pendulum_transition(at(0.2), 0.0, RewardVariant::Sparse).unwrap().1, 0.0);
        // wrap-around: a full turn is still upright
        assert_eq!(
            pendulum_transition(at(2.0 * PI), 0.0, RewardVariant::Sparse).unwrap().1,
            1.0
        );
    }

    #[test]
    fn adverse_reward_is_sparse_minus_torque_cost() {
        let (_, r) = pendulum_transition(at(PI), 2.0, RewardVariant::Adverse).unwrap();
        assert_abs_diff_eq!(r, -0.004, epsilon = 1e-15);
        // torque is clipped before the cost is applied
        let (_, r) = pendulum_transition(at(PI), 5.0, RewardVariant::Adverse).unwrap();
        assert_abs_diff_eq!(r, -0.004, epsilon = 1e-15);
        let (_, r) = pendulum_transition(at(0.0), -1.0, RewardVariant::Adverse).unwrap();
        assert_abs_diff_eq!(r, 1.0 - 0.001, epsilon = 1e-15);
    }

    #[test]
    fn dense_reward_matches_classic_cost() {
        let s = PendulumState {
            angle: 1.0,
            angular_velocity: 2.0,
        };
        let (_, r) = pendulum_transition(s, 1.5, RewardVariant::Dense).unwrap();
        assert_abs_diff_eq!(r, -(1.0 + 0.1 * 4.0 + 0.001 * 2.25), epsilon = 1e-15);
    }

    #[test]
    fn dynamics_hand_step() {
        let s = PendulumState {
            angle: 0.5,
            angular_velocity: 0.1,
        };
        let (n, _) = pendulum_transition(s, 1.0, RewardVariant::Dense).unwrap();
        let thdot = 0.1 + (15.0 * 0.5f64.sin() + 3.0) * 0.05;
        assert_abs_diff_eq!(n.angular_velocity, thdot, epsilon = 1e-15);
        assert_abs_diff_eq!(n.angle, 0.5 + thdot * 0.05, epsilon = 1e-15);
    }

    #[test]
    fn velocity_is_clipped() {
        let s = PendulumState {
            angle: 1.5,
            angular_velocity: 7.9,
        };
        let (n, _) = pendulum_transition(s, 2.0, RewardVariant::Dense).unwrap();
        assert_eq!(n.angular_velocity, MAX_SPEED);
    }

    #[test]
    fn non_finite_inputs_rejected() {
        assert!(pendulum_transition(at(f64::NAN), 0.0, RewardVariant::Dense).is_err());
        assert!(pendulum_transition(at(0.0), f64::INFINITY, RewardVariant::Dense).is_err());
    }

    #[test]
    fn sparse_reset_points_down() {
        for v in [RewardVariant::Sparse, RewardVariant::Adverse] {
            let mut env = Pendulum::new(v);
            for seed in [0, 1, 99] {
                let obs = env.reset(seed);
                assert_abs_diff_eq!(obs[0], -1.0, epsilon = 1e-15);
                assert_abs_diff_eq!(obs[1], 0.0, epsilon = 1e-15);
                assert_eq!(obs[2], 0.0);
            }
        }
    }

    #[test]
    fn dense_reset_depends_on_seed() {
        let mut env = Pendulum::new(RewardVariant::Dense);
        let a = env.reset(1);
        let b = env.reset(1);
        let c = env.reset(2);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(c[2].abs() <= 1.0);
    }

    #[test]
    fn never_terminates_and_truncates_at_200() {
        let mut env = Pendulum::new(RewardVariant::Dense);
        env.reset(0);
        for t in 1..=MAX_EPISODE_STEPS {
            let r = env.step(&[1.0]).unwrap();
            assert!(!r.terminated);
            assert_eq!(r.truncated, t == MAX_EPISODE_STEPS);
            assert!(r.next_obs[2].abs() <= MAX_SPEED);
        }
    }
}
