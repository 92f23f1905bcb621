//! Differentiable function approximation: a reverse-mode tape, MLPs,
//! squashed-Gaussian and deterministic policies, critics, and the
//! fingerprint-conditioned exploration critic.

pub mod checkpoint;
pub mod critic;
pub mod fingerprint;
pub mod mlp;
pub mod params;
pub mod policy;
pub mod tape;

pub use checkpoint::Checkpoint;
pub use critic::{ActionValue, CriticNet};
pub use fingerprint::{conditioned_q, fingerprint_embed, fingerprint_embed_on_tape, FingerprintProbes, DEFAULT_PROBES};
pub use mlp::{mlp_forward, Activation, MlpSpec, OUTPUT_LAYER_SCALE};
pub use params::{Bound, ParamEntry, ParamSet};
pub use policy::{ActionScale, DeterministicPolicy, GaussianPolicy, GaussianPolicyOutput};
pub use tape::{Gradients, Matrix, Tape, Var};
