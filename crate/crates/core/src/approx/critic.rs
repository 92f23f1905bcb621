use ndarray::{concatenate, Array2, ArrayView2, Axis};

use super::mlp::MlpSpec;
use super::params::{Bound, ParamSet};
use super::tape::{Tape, Var};
use crate::error::{check_dim, Result};

/// State-action value network over `concat(s, a[, conditioning])`.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticNet {
    pub net: MlpSpec,
    pub state_dim: usize,
    pub action_dim: usize,
    /// Width of the extra conditioning input; 0 for a plain critic.
    pub cond_dim: usize,
}

impl CriticNet {
    pub fn new(state_dim: usize, action_dim: usize, cond_dim: usize, hidden_dims: Vec<usize>) -> Self {
        Self {
            net: MlpSpec::new(state_dim + action_dim + cond_dim, 1, hidden_dims),
            state_dim,
            action_dim,
            cond_dim,
        }
    }

    /// `n x 1` values. `cond` is a single `1 x cond_dim` row shared by the batch.
    pub fn on_tape(&self, tape: &mut Tape, params: &Bound, s: Var, a: Var, cond: Option<Var>) -> Var {
        let n = tape.shape(s).0;
        let input = match cond {
            Some(c) if self.cond_dim > 0 => {
                assert_eq!(tape.shape(c), (1, self.cond_dim), "conditioning row shape");
                let rows = tape.broadcast_rows(c, n);
                tape.concat(&[s, a, rows])
            }
            None if self.cond_dim == 0 => tape.concat(&[s, a]),
            _ => panic!("conditioning presence does not match cond_dim = {}", self.cond_dim),
        };
        self.net.forward(tape, params, input)
    }

    pub fn batch(
        &self,
        params: &ParamSet,
        s: ArrayView2<'_, f64>,
        a: ArrayView2<'_, f64>,
        cond: Option<&[f64]>,
    ) -> Result<Vec<f64>> {
        check_dim("critic state", self.state_dim, s.ncols())?;
        check_dim("critic action", self.action_dim, a.ncols())?;
        check_dim("critic batch", s.nrows(), a.nrows())?;
        let n = s.nrows();
        let input = match cond {
            Some(c) => {
                check_dim("critic conditioning", self.cond_dim, c.len())?;
                let rows = Array2::from_shape_fn((n, c.len()), |(_, j)| c[j]);
                concatenate(Axis(1), &[s, a, rows.view()]).expect("row counts checked")
            }
            None => {
                check_dim("critic conditioning", self.cond_dim, 0)?;
                concatenate(Axis(1), &[s, a]).expect("row counts checked")
            }
        };
        Ok(self.net.forward_batch(params, input.view())?.column(0).to_vec())
    }
}

/// Anything that can score batches of state-action pairs, both directly and
/// as constants on a tape.
pub trait ActionValue {
    fn values(&self, s: ArrayView2<'_, f64>, a: ArrayView2<'_, f64>) -> Result<Vec<f64>>;

    /// Record the evaluation on the tape with the evaluator's own parameters
    /// held constant; gradients still flow into `s` and `a`.
    fn values_on_tape(&self, tape: &mut Tape, s: Var, a: Var) -> Var;
}
