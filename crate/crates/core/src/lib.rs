//! Off-policy actor-critic learning (SAC, TD3) with a TD-error-seeking
//! exploration objective, desk-scale classic-control environments and
//! brute-force tabular oracles.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod approx;
pub mod base_algos;
pub mod buffer;
pub mod envcore;
pub mod error;
pub mod harness;
pub mod oracle;
pub mod see;

pub use error::{Error, Result};
