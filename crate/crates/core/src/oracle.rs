//! Brute-force reference computations: tabular max-reward value iteration,
//! the exact two-way mixing distribution, central finite differences, and
//! hand-constructed value functions on the two-goal plane.

use rand::Rng;

use crate::envcore::{Environment, TwoGoalPlane, TwoGoalPlaneConfig};
use crate::error::{Error, Result};
use crate::see::{behavior_sample, mixing_probability, relative_advantages, MixDecision};

pub const DEFAULT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub enum Transitions {
    /// Next state per `(s, a)`, indexed `s * n_actions + a`.
    Deterministic(Vec<usize>),
    /// Next-state distribution per `(s, a)`.
    Stochastic(Vec<Vec<f64>>),
}

/// Finite MDP. Entering a terminal state ends the episode, so its value is
/// never bootstrapped.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    pub n_states: usize,
    pub n_actions: usize,
    pub transitions: Transitions,
    /// Reward per `(s, a)`, indexed `s * n_actions + a`.
    pub rewards: Vec<f64>,
    pub terminal: Vec<bool>,
    pub gamma: f64,
}

/// `Q[s][a]`.
pub type QTable = Vec<Vec<f64>>;

impl TabularMdp {
    pub fn validate(&self) -> Result<()> {
        let (n, m) = (self.n_states, self.n_actions);
        if n == 0 || m == 0 {
            return Err(Error::Config("tabular MDP needs states and actions".into()));
        }
        if self.rewards.len() != n * m || self.terminal.len() != n {
            return Err(Error::Config("tabular MDP table sizes do not match".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config("gamma must lie in [0, 1]".into()));
        }
        match &self.transitions {
            Transitions::Deterministic(next) => {
                if next.len() != n * m || next.iter().any(|&s| s >= n) {
                    return Err(Error::Config("deterministic transitions out of range".into()));
                }
            }
            Transitions::Stochastic(rows) => {
                if rows.len() != n * m {
                    return Err(Error::Config("stochastic transition table size".into()));
                }
                for row in rows {
                    let sum: f64 = row.iter().sum();
                    if row.len() != n || row.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                        return Err(Error::Config("transition rows must be distributions".into()));
                    }
                }
            }
        }
        Ok(())
    }

    /// Uniform rewards in `[-1, 1]`, each state terminal with probability 0.2.
    pub fn random(n_states: usize, n_actions: usize, gamma: f64, stochastic: bool, rng: &mut impl Rng) -> Self {
        let k = n_states * n_actions;
        let transitions = if stochastic {
            Transitions::Stochastic(
                (0..k)
                    .map(|_| {
                        let w: Vec<f64> = (0..n_states).map(|_| rng.random::<f64>()).collect();
                        let z: f64 = w.iter().sum();
                        w.into_iter().map(|x| x / z).collect()
                    })
                    .collect(),
            )
        } else {
            Transitions::Deterministic((0..k).map(|_| rng.random_range(0..n_states)).collect())
        };
        Self {
            n_states,
            n_actions,
            transitions,
            rewards: (0..k).map(|_| rng.random_range(-1.0..=1.0)).collect(),
            terminal: (0..n_states).map(|_| rng.random::<f64>() < 0.2).collect(),
            gamma,
        }
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.rewards[s * self.n_actions + a]
    }

    /// Deterministic successor, if the MDP is deterministic.
    pub fn next_state(&self, s: usize, a: usize) -> Option<usize> {
        match &self.transitions {
            Transitions::Deterministic(next) => Some(next[s * self.n_actions + a]),
            Transitions::Stochastic(_) => None,
        }
    }

    /// One application of the max-reward operator:
    /// `(TQ)(s, a) = max(r, gamma * E[max_a' Q(s', a')])` over non-terminal
    /// successors, and `r` when every successor is terminal.
    #[allow(clippy::needless_range_loop)]
    pub fn max_reward_backup(&self, q: &QTable) -> QTable {
        let best: Vec<f64> = q
            .iter()
            .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let mut out = vec![vec![0.0; self.n_actions]; self.n_states];
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let idx = s * self.n_actions + a;
                let r = self.rewards[idx];
                let (future, p_terminal) = match &self.transitions {
                    Transitions::Deterministic(next) => {
                        let sn = next[idx];
                        if self.terminal[sn] {
                            (0.0, 1.0)
                        } else {
                            (best[sn], 0.0)
                        }
                    }
                    Transitions::Stochastic(rows) => {
                        rows[idx].iter().enumerate().fold((0.0, 0.0), |(f, pt), (sn, &p)| {
                            if self.terminal[sn] {
                                (f, pt + p)
                            } else {
                                (f + p * best[sn], pt)
                            }
                        })
                    }
                };
                out[s][a] = if p_terminal >= 1.0 {
                    r
                } else {
                    r.max(self.gamma * future)
                };
            }
        }
        out
    }
}

pub fn sup_distance(a: &QTable, b: &QTable) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Converged Q table and the number of sweeps.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueIterationResult {
    pub q: QTable,
    pub iterations: usize,
    /// `sup |Q - TQ|` of the returned table.
    pub residual: f64,
}

/// Iterate the max-reward operator from `Q = 0` until the sup-norm change
/// drops below `tol`.
pub fn max_reward_value_iteration(mdp: &TabularMdp, tol: f64) -> Result<ValueIterationResult> {
    if !(tol > 0.0) {
        return Err(Error::Config(format!("tolerance must be positive, got {tol}")));
    }
    mdp.validate()?;
    if mdp.gamma >= 1.0 {
        return Err(Error::Config("value iteration needs gamma < 1".into()));
    }
    let mut q = vec![vec![0.0; mdp.n_actions]; mdp.n_states];
    let mut iterations = 0;
    loop {
        let next = mdp.max_reward_backup(&q);
        iterations += 1;
        let change = sup_distance(&next, &q);
        q = next;
        if change < tol {
            break;
        }
    }
    let residual = sup_distance(&mdp.max_reward_backup(&q), &q);
    Ok(ValueIterationResult {
        q,
        iterations,
        residual,
    })
}

/// Largest `|TQ - TQ'| / |Q - Q'|` over `trials` random pairs with entries
/// in `[-10, 10]`. Identical pairs count as ratio 0.
pub fn contraction_check(mdp: &TabularMdp, trials: usize, rng: &mut impl Rng) -> Result<f64> {
    if trials == 0 {
        return Err(Error::Config("contraction check needs at least one trial".into()));
    }
    mdp.validate()?;
    let random_q = |rng: &mut dyn rand::RngCore| -> QTable {
        (0..mdp.n_states)
            .map(|_| (0..mdp.n_actions).map(|_| rng.random_range(-10.0..=10.0)).collect())
            .collect()
    };
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let q1 = random_q(rng);
        let q2 = random_q(rng);
        worst = worst.max(contraction_ratio(mdp, &q1, &q2));
    }
    Ok(worst)
}

pub fn contraction_ratio(mdp: &TabularMdp, q1: &QTable, q2: &QTable) -> f64 {
    let d = sup_distance(q1, q2);
    if d == 0.0 {
        return 0.0;
    }
    sup_distance(&mdp.max_reward_backup(q1), &mdp.max_reward_backup(q2)) / d
}

/// Best discounted single reward `max_k gamma^k r_k` over every path of at
/// most `depth` transitions that starts with `(s, a)`, stopping at terminal
/// states. Deterministic MDPs only.
pub fn best_discounted_reward_on_paths(mdp: &TabularMdp, s: usize, a: usize, depth: usize) -> Result<f64> {
    if !matches!(mdp.transitions, Transitions::Deterministic(_)) {
        return Err(Error::Config("path enumeration needs deterministic transitions".into()));
    }
    fn walk(mdp: &TabularMdp, s: usize, a: usize, discount: f64, remaining: usize) -> f64 {
        let here = discount * mdp.reward(s, a);
        let sn = mdp.next_state(s, a).expect("deterministic");
        if remaining <= 1 || mdp.terminal[sn] {
            return here;
        }
        (0..mdp.n_actions)
            .map(|an| walk(mdp, sn, an, discount * mdp.gamma, remaining - 1))
            .fold(here, f64::max)
    }
    Ok(walk(mdp, s, a, 1.0, depth.max(1)))
}

/// Closed-form `softmax(lambda * A_q / T, (1 - lambda) * A_d / T)`.
pub fn mixing_distribution_exact(adv_exploit: f64, adv_explore: f64, lambda: f64, temperature: f64) -> (f64, f64) {
    let zq = lambda * adv_exploit / temperature;
    let zd = (1.0 - lambda) * adv_explore / temperature;
    let m = zq.max(zd);
    let (eq, ed) = ((zq - m).exp(), (zd - m).exp());
    (eq / (eq + ed), ed / (eq + ed))
}

/// Central differences `(f(x + h e_i) - f(x - h e_i)) / 2h` per coordinate.
pub fn finite_difference_gradients(loss: impl Fn(&[f64]) -> f64, params: &[f64], h: f64) -> Result<Vec<f64>> {
    if !(h > 0.0) {
        return Err(Error::Config(format!("step size must be positive, got {h}")));
    }
    let mut x = params.to_vec();
    let mut grad = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let orig = x[i];
        x[i] = orig + h;
        let up = loss(&x);
        x[i] = orig - h;
        let down = loss(&x);
        x[i] = orig;
        grad.push((up - down) / (2.0 * h));
    }
    Ok(grad)
}

/// Value of moving straight to one goal on the two-goal plane with reward 1
/// on arrival: `gamma^k`, where `k` is the number of further full steps
/// needed after landing at the displaced position.
#[derive(Debug, Clone, PartialEq)]
pub struct GoalSeeking {
    pub goal: [f64; 2],
    pub gamma: f64,
    pub config: TwoGoalPlaneConfig,
}

impl GoalSeeking {
    pub fn new(goal_index: usize, gamma: f64, config: TwoGoalPlaneConfig) -> Self {
        Self {
            goal: config.goals[goal_index],
            gamma,
            config,
        }
    }

    fn landing(&self, pos: [f64; 2], action: &[f64]) -> [f64; 2] {
        let norm = action[0].hypot(action[1]);
        let scale = if norm > self.config.max_step {
            self.config.max_step / norm
        } else {
            1.0
        };
        [
            (pos[0] + action[0] * scale).clamp(-1.0, 1.0),
            (pos[1] + action[1] * scale).clamp(-1.0, 1.0),
        ]
    }

    pub fn steps_to_goal(&self, pos: [f64; 2]) -> f64 {
        let d = (pos[0] - self.goal[0]).hypot(pos[1] - self.goal[1]);
        ((d - self.config.goal_radius) / self.config.max_step - 1e-9)
            .ceil()
            .max(0.0)
    }

    pub fn q(&self, pos: [f64; 2], action: &[f64]) -> f64 {
        self.gamma.powf(self.steps_to_goal(self.landing(pos, action)))
    }

    /// Full-length step towards the goal.
    pub fn action(&self, pos: [f64; 2]) -> [f64; 2] {
        let (dx, dy) = (self.goal[0] - pos[0], self.goal[1] - pos[1]);
        let d = dx.hypot(dy);
        if d == 0.0 {
            return [0.0, 0.0];
        }
        let step = self.config.max_step.min(d);
        [dx / d * step, dy / d * step]
    }
}

/// Roll out the mixed behavior of two goal-seeking policies (exploitation
/// heads for goal 0, exploration for goal 1). Returns the goal reached, if
/// any, and the number of exploitation choices.
pub fn mixed_goal_rollout(
    gamma: f64,
    lambda: f64,
    temperature: f64,
    rng: &mut impl Rng,
) -> Result<(Option<usize>, usize)> {
    let config = TwoGoalPlaneConfig::default();
    let exploit = GoalSeeking::new(0, gamma, config.clone());
    let explore = GoalSeeking::new(1, gamma, config.clone());
    let mut env = TwoGoalPlane::new(crate::envcore::RewardVariant::Sparse, config)?;
    env.reset(0);
    let mut exploit_choices = 0;
    loop {
        let pos = env.position();
        let a_q = exploit.action(pos);
        let a_d = explore.action(pos);
        let (adv_q, adv_d) = relative_advantages(
            |a: &[f64]| Ok(exploit.q(pos, a)),
            |a: &[f64]| Ok(explore.q(pos, a)),
            &a_q,
            &a_d,
        )?;
        let p = mixing_probability(adv_q, adv_d, lambda, temperature)?;
        let action = match behavior_sample(p, rng) {
            MixDecision::Exploit => {
                exploit_choices += 1;
                a_q
            }
            MixDecision::Explore => a_d,
        };
        let step = env.step(&action)?;
        if step.terminated {
            return Ok((env.last_goal(), exploit_choices));
        }
        if step.truncated {
            return Ok((None, exploit_choices));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn chain() -> TabularMdp {
        // s0 -> s1 -> s2 (terminal)
        TabularMdp {
            n_states: 3,
            n_actions: 1,
            transitions: Transitions::Deterministic(vec![1, 2, 2]),
            rewards: vec![0.0, 5.0, 0.0],
            terminal: vec![false, false, true],
            gamma: 0.9,
        }
    }

    #[test]
    fn self_loop_fixed_point_is_the_reward() {
        let mdp = TabularMdp {
            n_states: 1,
            n_actions: 1,
            transitions: Transitions::Deterministic(vec![0]),
            rewards: vec![1.0],
            terminal: vec![false],
            gamma: 0.9,
        };
        let r = max_reward_value_iteration(&mdp, DEFAULT_TOL).unwrap();
        assert_eq!(r.q, vec![vec![1.0]]);
    }

    #[test]
    fn chain_values_by_hand() {
        let r = max_reward_value_iteration(&chain(), DEFAULT_TOL).unwrap();
        assert_abs_diff_eq!(r.q[1][0], 5.0);
        assert_abs_diff_eq!(r.q[0][0], 4.5, epsilon = 1e-12);
    }

    #[test]
    fn goal_at_distance_d_is_discounted_d_minus_one_times() {
        for d in 1..8 {
            // states 0..d, state d is the terminal goal; reward 1 on entering it
            let n = d + 1;
            let next: Vec<usize> = (0..n).map(|s| (s + 1).min(d)).collect();
            let rewards: Vec<f64> = (0..n).map(|s| if s + 1 == d { 1.0 } else { 0.0 }).collect();
            let mut terminal = vec![false; n];
            terminal[d] = true;
            let mdp = TabularMdp {
                n_states: n,
                n_actions: 1,
                transitions: Transitions::Deterministic(next),
                rewards,
                terminal,
                gamma: 0.9,
            };
            let r = max_reward_value_iteration(&mdp, DEFAULT_TOL).unwrap();
            assert_abs_diff_eq!(r.q[0][0], 0.9f64.powi(d as i32 - 1), epsilon = 1e-12);
        }
    }

    #[test]
    fn terminal_transition_keeps_negative_reward() {
        let mdp = TabularMdp {
            n_states: 2,
            n_actions: 1,
            transitions: Transitions::Deterministic(vec![1, 1]),
            rewards: vec![-2.0, 0.0],
            terminal: vec![false, true],
            gamma: 0.9,
        };
        let r = max_reward_value_iteration(&mdp, DEFAULT_TOL).unwrap();
        assert_eq!(r.q[0][0], -2.0);
    }

    #[test]
    fn invalid_inputs() {
        assert!(max_reward_value_iteration(&chain(), 0.0).is_err());
        assert!(max_reward_value_iteration(&chain(), -1.0).is_err());
        let mut bad = chain();
        bad.transitions = Transitions::Deterministic(vec![1, 3, 2]);
        assert!(bad.validate().is_err());
        let mut stoch = chain();
        stoch.transitions = Transitions::Stochastic(vec![vec![0.5, 0.6, 0.0]; 3]);
        assert!(stoch.validate().is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(contraction_check(&chain(), 0, &mut rng).is_err());
    }

    #[test]
    fn contraction_trivial_cases() {
        let mdp = chain();
        let q = vec![vec![1.0]; 3];
        assert_eq!(contraction_ratio(&mdp, &q, &q), 0.0);
        let mut zero = chain();
        zero.gamma = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(contraction_check(&zero, 50, &mut rng).unwrap(), 0.0);
    }

    #[test]
    fn stochastic_variant_converges() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mdp = TabularMdp::random(6, 3, 0.95, true, &mut rng);
        mdp.validate().unwrap();
        let r = max_reward_value_iteration(&mdp, DEFAULT_TOL).unwrap();
        assert!(r.residual < DEFAULT_TOL);
        assert!(contraction_check(&mdp, 100, &mut rng).unwrap() <= 0.95 + 1e-12);
    }

    #[test]
    fn mixing_examples() {
        assert_eq!(mixing_distribution_exact(0.0, 0.0, 0.5, 1.0), (0.5, 0.5));
        let (p, q) = mixing_distribution_exact(1.0, 0.0, 0.5, 1.0);
        assert_abs_diff_eq!(p, 0.622459, epsilon = 1e-6);
        assert_abs_diff_eq!(q, 0.377541, epsilon = 1e-6);
        for a in [-50.0, -1.0, 3.0, 400.0] {
            assert_eq!(mixing_distribution_exact(a, a, 0.5, 1.0), (0.5, 0.5));
        }
    }

    #[test]
    fn finite_differences_on_quadratic() {
        let f = |x: &[f64]| x[0] * x[0] + 3.0 * x[0] * x[1];
        let g = finite_difference_gradients(f, &[1.0, 2.0], 1e-4).unwrap();
        assert_abs_diff_eq!(g[0], 8.0, epsilon = 1e-8);
        assert_abs_diff_eq!(g[1], 3.0, epsilon = 1e-8);
        assert!(finite_difference_gradients(f, &[], 1e-5).unwrap().is_empty());
        assert!(finite_difference_gradients(f, &[1.0, 2.0], 0.0).is_err());
    }

    #[test]
    fn goal_seeking_values() {
        let cfg = TwoGoalPlaneConfig::default();
        let g = GoalSeeking::new(0, 0.9, cfg);
        // landing inside the goal disc is worth the full reward
        assert_eq!(g.q([-0.5, 0.45], &[0.0, 0.05]), 1.0);
        assert_abs_diff_eq!(g.q([-0.5, 0.35], &[0.0, 0.05]), 0.9, epsilon = 1e-12);
        let a = g.action([0.0, -0.5]);
        assert_abs_diff_eq!(a[0].hypot(a[1]), 0.05, epsilon = 1e-12);
    }
}
