//! Fingerprint embedding of a value function: evaluate it at a set of
//! learnable probe state-action pairs and use the outputs as a vector.

use ndarray::Array2;
use rand::Rng;

use super::critic::{ActionValue, CriticNet};
use super::params::{Bound, ParamSet};
use super::tape::{Tape, Var};
use crate::envcore::MdpSpec;
use crate::error::{Error, Result};

pub const DEFAULT_PROBES: usize = 16;
pub const PROBE_STATES: &str = "probe.states";
pub const PROBE_ACTIONS: &str = "probe.actions";

/// Probe states and actions, stored as a trainable [`ParamSet`]
/// (`probe.states`: `n x state_dim`, `probe.actions`: `n x action_dim`).
#[derive(Debug, Clone, PartialEq)]
pub struct FingerprintProbes {
    pub params: ParamSet,
}

impl FingerprintProbes {
    /// Uniform draws inside the observation and action bounds of `spec`.
    pub fn init(n: usize, spec: &MdpSpec, rng: &mut impl Rng) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("probe count must be >= 1".into()));
        }
        let states = Array2::from_shape_fn((n, spec.state_dim), |(_, j)| {
            rng.random_range(spec.obs_low[j]..=spec.obs_high[j])
        });
        let actions = Array2::from_shape_fn((n, spec.action_dim), |(_, j)| {
            rng.random_range(spec.action_low[j]..=spec.action_high[j])
        });
        Self::from_matrices(states, actions)
    }

    pub fn from_matrices(states: Array2<f64>, actions: Array2<f64>) -> Result<Self> {
        if states.nrows() != actions.nrows() || states.nrows() == 0 {
            return Err(Error::Config("probe states/actions need equal, nonzero counts".into()));
        }
        let mut params = ParamSet::new();
        params.insert(PROBE_STATES, states)?;
        params.insert(PROBE_ACTIONS, actions)?;
        Ok(Self { params })
    }

    pub fn count(&self) -> usize {
        self.params.at(0).nrows()
    }

    pub fn states(&self) -> &Array2<f64> {
        self.params.at(0)
    }

    pub fn actions(&self) -> &Array2<f64> {
        self.params.at(1)
    }
}

/// `phi(theta)_i = Q_theta(probe_state_i, probe_action_i)`.
pub fn fingerprint_embed(q_theta: &(impl ActionValue + ?Sized), probes: &FingerprintProbes) -> Result<Vec<f64>> {
    q_theta.values(probes.states().view(), probes.actions().view())
}

/// The embedding as a `1 x n` tape row. `probes` are typically bound as
/// trainable parameters; `q_theta` contributes only constants.
pub fn fingerprint_embed_on_tape(tape: &mut Tape, q_theta: &(impl ActionValue + ?Sized), probes: &Bound) -> Var {
    let column = q_theta.values_on_tape(tape, probes.var(0), probes.var(1));
    tape.transpose(column)
}

/// Value of a conditioned critic at one state-action pair given a precomputed embedding.
pub fn conditioned_q(critic: &CriticNet, omega: &ParamSet, s: &[f64], a: &[f64], embedding: &[f64]) -> Result<f64> {
    let sv = ndarray::ArrayView2::from_shape((1, s.len()), s).map_err(|e| Error::Domain(e.to_string()))?;
    let av = ndarray::ArrayView2::from_shape((1, a.len()), a).map_err(|e| Error::Domain(e.to_string()))?;
    let cond = if critic.cond_dim == 0 { None } else { Some(embedding) };
    Ok(critic.batch(omega, sv, av, cond)?[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::tape::Matrix;
    use crate::envcore::{make_env, EnvId, RewardVariant};
    use approx::assert_abs_diff_eq;
    use ndarray::{array, ArrayView2};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Q(s, a) = w . concat(s, a)
    struct Linear(Vec<f64>);

    impl ActionValue for Linear {
        fn values(&self, s: ArrayView2<'_, f64>, a: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
            Ok((0..s.nrows())
                .map(|i| {
                    s.row(i)
                        .iter()
                        .chain(a.row(i).iter())
                        .zip(&self.0)
                        .map(|(x, w)| x * w)
                        .sum()
                })
                .collect())
        }

        fn values_on_tape(&self, tape: &mut Tape, s: Var, a: Var) -> Var {
            let x = tape.concat(&[s, a]);
            let w = Matrix::from_shape_vec((self.0.len(), 1), self.0.clone()).unwrap();
            let w = tape.constant(w);
            tape.matmul(x, w)
        }
    }

    #[test]
    fn linear_critic_embedding_is_matrix_vector_product() {
        let probes = FingerprintProbes::from_matrices(
            array![[1.0, 2.0], [0.5, -1.0], [0.0, 0.0]],
            array![[1.0], [2.0], [-3.0]],
        )
        .unwrap();
        let q = Linear(vec![0.5, -1.0, 2.0]);
        let phi = fingerprint_embed(&q, &probes).unwrap();
        assert_eq!(phi, vec![0.5 - 2.0 + 2.0, 0.25 + 1.0 + 4.0, -6.0]);

        let mut tape = Tape::new();
        let b = probes.params.bind(&mut tape);
        let row = fingerprint_embed_on_tape(&mut tape, &q, &b);
        assert_eq!(tape.shape(row), (1, 3));
        assert_eq!(tape.value(row).row(0).to_vec(), phi);
        // d(sum phi)/d probe_state_i = w_s for every probe
        let s = tape.sum_cols(row);
        let loss = tape.mean(s);
        let g = probes.params.gradients(&b, &tape.backward(loss));
        assert_eq!(
            g.get(PROBE_STATES).unwrap(),
            &array![[0.5, -1.0], [0.5, -1.0], [0.5, -1.0]]
        );
        assert_eq!(g.get(PROBE_ACTIONS).unwrap(), &array![[2.0], [2.0], [2.0]]);
    }

    #[test]
    fn zero_critic_gives_zero_embedding_of_probe_length() {
        let env = make_env(EnvId::Pendulum, RewardVariant::Dense).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let probes = FingerprintProbes::init(DEFAULT_PROBES, env.spec(), &mut rng).unwrap();
        let phi = fingerprint_embed(&Linear(vec![0.0; 4]), &probes).unwrap();
        assert_eq!(phi, vec![0.0; 16]);
    }

    #[test]
    fn probes_start_inside_bounds() {
        let env = make_env(EnvId::LocalOptimumCar, RewardVariant::Dense).unwrap();
        let spec = env.spec();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let probes = FingerprintProbes::init(32, spec, &mut rng).unwrap();
        for row in probes.states().rows() {
            for (j, x) in row.iter().enumerate() {
                assert!(*x >= spec.obs_low[j] && *x <= spec.obs_high[j]);
            }
        }
        for a in probes.actions().iter() {
            assert!((-1.0..=1.0).contains(a));
        }
        assert!(FingerprintProbes::init(0, spec, &mut rng).is_err());
    }

    #[test]
    fn conditioned_q_zero_embedding_equals_plain_concat() {
        let critic = CriticNet::new(2, 1, 4, vec![6]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let omega = critic.net.init(&mut rng, 1.0).unwrap();
        let v = conditioned_q(&critic, &omega, &[0.3, 0.1], &[-0.2], &[0.0; 4]).unwrap();
        let direct = crate::approx::mlp_forward(&critic.net, &omega, &[0.3, 0.1, -0.2, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(v, direct[0], epsilon = 0.0);
        let other = conditioned_q(&critic, &omega, &[0.3, 0.1], &[-0.2], &[1.0, 0.0, -2.0, 0.5]).unwrap();
        assert_ne!(v, other);
        assert_eq!(
            v,
            conditioned_q(&critic, &omega, &[0.3, 0.1], &[-0.2], &[0.0; 4]).unwrap()
        );
    }
}
