//! Tanh-squashed Gaussian (SAC) and deterministic tanh (TD3) policies.

use std::f64::consts::{LN_2, PI};

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use super::mlp::MlpSpec;
use super::params::{Bound, ParamSet};
use super::tape::{softplus, Matrix, Tape, Var};
use crate::error::{check_dim, check_finite, Result};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// Affine map from `[-1, 1]^d` onto the action box.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionScale {
    center: Vec<f64>,
    half_range: Vec<f64>,
}

impl ActionScale {
    pub fn new(low: &[f64], high: &[f64]) -> Self {
        Self {
            center: low.iter().zip(high).map(|(l, h)| 0.5 * (l + h)).collect(),
            half_range: low.iter().zip(high).map(|(l, h)| 0.5 * (h - l)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn half_range(&self) -> &[f64] {
        &self.half_range
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    /// `sum(ln half_range)`: the log-Jacobian of the affine map.
    pub fn log_jacobian(&self) -> f64 {
        self.half_range.iter().map(|h| h.ln()).sum()
    }

    fn rows(&self, v: &[f64], n: usize) -> Matrix {
        Array2::from_shape_fn((n, v.len()), |(_, j)| v[j])
    }

    /// Map squashed values in `[-1, 1]` onto the box, on the tape.
    pub fn apply(&self, tape: &mut Tape, squashed: Var) -> Var {
        let n = tape.shape(squashed).0;
        let half = tape.constant(self.rows(&self.half_range, n));
        let center = tape.constant(self.rows(&self.center, n));
        let scaled = tape.mul(squashed, half);
        tape.add(scaled, center)
    }

    pub fn apply_matrix(&self, squashed: &mut Matrix) {
        for mut row in squashed.rows_mut() {
            for (j, x) in row.iter_mut().enumerate() {
                *x = *x * self.half_range[j] + self.center[j];
            }
        }
    }
}

/// One draw from a squashed Gaussian policy.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicyOutput {
    /// Squashed and scaled into the action box.
    pub action: Vec<f64>,
    /// Log-density of `action` (includes the tanh and box-scaling corrections).
    pub log_prob: f64,
    pub pre_squash_mean: Vec<f64>,
    /// Clamped into `[LOG_STD_MIN, LOG_STD_MAX]`.
    pub log_std: Vec<f64>,
}

/// Per-element log-density of `a = tanh(u)` with `u = mean + std * eps`,
/// without the box-scaling term.
fn squashed_log_density(eps: f64, log_std: f64, u: f64) -> f64 {
    -0.5 * eps * eps - log_std - 0.5 * (2.0 * PI).ln() - 2.0 * (LN_2 - u - softplus(-2.0 * u))
}

/// Stochastic policy `s -> tanh(N(mean(s), std(s)))` scaled to the action box.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    pub net: MlpSpec,
    pub scale: ActionScale,
}

impl GaussianPolicy {
    pub fn new(state_dim: usize, scale: ActionScale, hidden_dims: Vec<usize>) -> Self {
        let d = scale.dim();
        Self {
            net: MlpSpec::new(state_dim, 2 * d, hidden_dims),
            scale,
        }
    }

    pub fn action_dim(&self) -> usize {
        self.scale.dim()
    }

    fn heads(&self, tape: &mut Tape, params: &Bound, obs: Var) -> (Var, Var) {
        let d = self.action_dim();
        let out = self.net.forward(tape, params, obs);
        let mean = tape.columns(out, 0, d);
        let raw = tape.columns(out, d, 2 * d);
        let log_std = tape.clamp(raw, LOG_STD_MIN, LOG_STD_MAX);
        (mean, log_std)
    }

    /// Reparameterized draw on the tape with externally supplied standard
    /// normal noise `eps` (`batch x action_dim`). Returns `(action, log_prob)`
    /// with `log_prob` of shape `batch x 1`.
    pub fn sample_on_tape(&self, tape: &mut Tape, params: &Bound, obs: Var, eps: &Matrix) -> (Var, Var) {
        let (mean, log_std) = self.heads(tape, params, obs);
        let n = tape.shape(mean).0;
        assert_eq!(eps.dim(), (n, self.action_dim()), "noise shape");
        let std = tape.exp(log_std);
        let eps_v = tape.constant(eps.clone());
        let spread = tape.mul(std, eps_v);
        let u = tape.add(mean, spread);
        let squashed = tape.tanh(u);
        let action = self.scale.apply(tape, squashed);

        // log N(u; mean, std) - log(1 - tanh(u)^2) - log(half_range), elementwise
        let neg2u = tape.scale(u, -2.0);
        let sp = tape.softplus(neg2u);
        let two_u = tape.scale(u, 2.0);
        let two_sp = tape.scale(sp, 2.0);
        let corr = tape.add(two_u, two_sp);
        let per_elem = tape.sub(corr, log_std);
        let half = self.scale.half_range();
        let consts = Array2::from_shape_fn(eps.dim(), |(i, j)| {
            -0.5 * eps[[i, j]] * eps[[i, j]] - 0.5 * (2.0 * PI).ln() - 2.0 * LN_2 - half[j].ln()
        });
        let consts = tape.constant(consts);
        let per_elem = tape.add(per_elem, consts);
        let log_prob = tape.sum_cols(per_elem);
        (action, log_prob)
    }

    /// `tanh(mean)` scaled to the box, on the tape.
    pub fn deterministic_on_tape(&self, tape: &mut Tape, params: &Bound, obs: Var) -> Var {
        let (mean, _) = self.heads(tape, params, obs);
        let squashed = tape.tanh(mean);
        self.scale.apply(tape, squashed)
    }

    fn raw_heads(&self, params: &ParamSet, obs: ArrayView2<'_, f64>) -> Result<(Matrix, Matrix)> {
        let d = self.action_dim();
        let out = self.net.forward_batch(params, obs)?;
        let mean = out.slice(ndarray::s![.., 0..d]).to_owned();
        let log_std = out
            .slice(ndarray::s![.., d..2 * d])
            .mapv(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX));
        Ok((mean, log_std))
    }

    /// Tape-free batched draw; returns `(actions, log_probs)`.
    pub fn sample_batch(
        &self,
        params: &ParamSet,
        obs: ArrayView2<'_, f64>,
        eps: &Matrix,
    ) -> Result<(Matrix, Vec<f64>)> {
        let (mean, log_std) = self.raw_heads(params, obs)?;
        assert_eq!(eps.dim(), mean.dim(), "noise shape");
        let n = mean.nrows();
        let log_jac = self.scale.log_jacobian();
        let mut actions = Matrix::zeros(mean.dim());
        let mut log_probs = vec![-log_jac; n];
        for i in 0..n {
            for j in 0..self.action_dim() {
                let u = mean[[i, j]] + log_std[[i, j]].exp() * eps[[i, j]];
                actions[[i, j]] = u.tanh();
                log_probs[i] += squashed_log_density(eps[[i, j]], log_std[[i, j]], u);
            }
        }
        self.scale.apply_matrix(&mut actions);
        Ok((actions, log_probs))
    }

    pub fn deterministic_batch(&self, params: &ParamSet, obs: ArrayView2<'_, f64>) -> Result<Matrix> {
        let (mut mean, _) = self.raw_heads(params, obs)?;
        mean.mapv_inplace(f64::tanh);
        self.scale.apply_matrix(&mut mean);
        Ok(mean)
    }

    /// Draw one action for a single observation.
    pub fn sample(&self, params: &ParamSet, obs: &[f64], rng: &mut impl Rng) -> Result<GaussianPolicyOutput> {
        check_finite("policy observation", obs)?;
        check_dim("policy observation", self.net.input_dim, obs.len())?;
        let view = ArrayView2::from_shape((1, obs.len()), obs).expect("row view");
        let (mean, log_std) = self.raw_heads(params, view)?;
        let eps = Array2::from_shape_simple_fn((1, self.action_dim()), || rng.sample(StandardNormal));
        let (actions, log_probs) = self.sample_batch(params, view, &eps)?;
        Ok(GaussianPolicyOutput {
            action: actions.index_axis(Axis(0), 0).to_vec(),
            log_prob: log_probs[0],
            pre_squash_mean: mean.index_axis(Axis(0), 0).to_vec(),
            log_std: log_std.index_axis(Axis(0), 0).to_vec(),
        })
    }

    /// Evaluation-mode action: `tanh(mean)` scaled to the box.
    pub fn mean_action(&self, params: &ParamSet, obs: &[f64]) -> Result<Vec<f64>> {
        check_dim("policy observation", self.net.input_dim, obs.len())?;
        let view = ArrayView2::from_shape((1, obs.len()), obs).expect("row view");
        Ok(self.deterministic_batch(params, view)?.index_axis(Axis(0), 0).to_vec())
    }
}

/// Deterministic policy `s -> tanh(net(s))` scaled to the action box.
#[derive(Debug, Clone, PartialEq)]
pub struct DeterministicPolicy {
    pub net: MlpSpec,
    pub scale: ActionScale,
}

impl DeterministicPolicy {
    pub fn new(state_dim: usize, scale: ActionScale, hidden_dims: Vec<usize>) -> Self {
        let d = scale.dim();
        Self {
            net: MlpSpec::new(state_dim, d, hidden_dims),
            scale,
        }
    }

    pub fn action_dim(&self) -> usize {
        self.scale.dim()
    }

    pub fn forward_on_tape(&self, tape: &mut Tape, params: &Bound, obs: Var) -> Var {
        let out = self.net.forward(tape, params, obs);
        let squashed = tape.tanh(out);
        self.scale.apply(tape, squashed)
    }

    pub fn forward_batch(&self, params: &ParamSet, obs: ArrayView2<'_, f64>) -> Result<Matrix> {
        let mut out = self.net.forward_batch(params, obs)?;
        out.mapv_inplace(f64::tanh);
        self.scale.apply_matrix(&mut out);
        Ok(out)
    }

    pub fn action(&self, params: &ParamSet, obs: &[f64]) -> Result<Vec<f64>> {
        check_finite("policy observation", obs)?;
        check_dim("policy observation", self.net.input_dim, obs.len())?;
        let view = ArrayView2::from_shape((1, obs.len()), obs).expect("row view");
        Ok(self.forward_batch(params, view)?.index_axis(Axis(0), 0).to_vec())
    }
}
