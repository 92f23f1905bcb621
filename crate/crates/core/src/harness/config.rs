use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::approx::DEFAULT_PROBES;
use crate::base_algos::{Algo, LearnerConfig};
use crate::buffer::DEFAULT_CAPACITY;
use crate::envcore::{EnvId, RewardVariant};
use crate::error::{Error, Result};
use crate::see::{AblationMode, SeeConfig};

/// Everything that determines a training run. Keys in the config file
/// mirror the command-line flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct TrainConfig {
    pub algo: Algo,
    #[serde(rename = "see")]
    pub see_enabled: bool,
    pub env: EnvId,
    pub reward: RewardVariant,
    pub seed: u64,
    #[serde(rename = "steps")]
    pub total_steps: u64,
    #[serde(rename = "warmup")]
    pub warm_up_steps: u64,
    pub eval_every: u64,
    pub eval_episodes: usize,
    #[serde(rename = "ablation")]
    pub ablations: Vec<AblationMode>,
    pub hidden_dims: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub gamma: f64,
    pub buffer_size: usize,
    pub tau: f64,
    /// Gradient passes per environment step.
    pub update_freq: u64,
    pub initial_temperature: f64,
    /// `None` means `-action_dim`.
    pub target_entropy: Option<f64>,
    pub actor_update_freq: u64,
    pub target_update_freq: u64,
    /// `None` means 0.1 for TD3 and 0.0 for TD3 with exploration.
    pub action_noise: Option<f64>,
    pub target_noise: f64,
    pub target_noise_clip: f64,
    pub probes: usize,
    pub mixing_lambda: f64,
    pub mixing_temperature: f64,
    pub explore_entropy_in_target: bool,
    /// Output directory; no files are written when absent.
    pub out: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let see = SeeConfig::default();
        Self {
            algo: Algo::Sac,
            see_enabled: false,
            env: EnvId::Pendulum,
            reward: RewardVariant::Dense,
            seed: 0,
            total_steps: 100_000,
            warm_up_steps: 1000,
            eval_every: 1000,
            eval_episodes: 10,
            ablations: Vec::new(),
            hidden_dims: vec![400, 300],
            learning_rate: 1e-3,
            batch_size: 256,
            gamma: 0.99,
            buffer_size: DEFAULT_CAPACITY,
            tau: 0.005,
            update_freq: 1,
            initial_temperature: 1.0,
            target_entropy: None,
            actor_update_freq: 2,
            target_update_freq: 2,
            action_noise: None,
            target_noise: 0.2,
            target_noise_clip: 0.5,
            probes: DEFAULT_PROBES,
            mixing_lambda: see.lambda,
            mixing_temperature: see.temperature,
            explore_entropy_in_target: see.entropy_in_target,
            out: None,
        }
    }
}

impl TrainConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn effective_action_noise(&self) -> f64 {
        match (self.action_noise, self.algo) {
            (Some(v), _) => v,
            (None, Algo::Td3) if self.see_enabled => 0.0,
            (None, Algo::Td3) => 0.1,
            (None, Algo::Sac) => 0.0,
        }
    }

    pub fn learner(&self) -> LearnerConfig {
        let base = LearnerConfig::for_algo(self.algo);
        let td3 = self.algo == Algo::Td3;
        LearnerConfig {
            hidden_dims: self.hidden_dims.clone(),
            learning_rate: self.learning_rate,
            gamma: self.gamma,
            tau: self.tau,
            initial_temperature: self.initial_temperature,
            target_entropy: self.target_entropy,
            actor_update_freq: if td3 { self.actor_update_freq } else { 1 },
            target_update_freq: if td3 { self.target_update_freq } else { 1 },
            action_noise: self.effective_action_noise(),
            target_noise: if td3 { self.target_noise } else { 0.0 },
            target_noise_clip: if td3 { self.target_noise_clip } else { 0.0 },
            ..base
        }
    }

    pub fn see(&self) -> Option<SeeConfig> {
        self.see_enabled.then(|| SeeConfig {
            probes: self.probes,
            lambda: self.mixing_lambda,
            temperature: self.mixing_temperature,
            ablations: self.ablations.clone(),
            entropy_in_target: self.explore_entropy_in_target,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.eval_every == 0 || self.eval_episodes == 0 {
            return bad("eval-every and eval-episodes must be positive");
        }
        if self.batch_size == 0 || self.buffer_size == 0 || self.update_freq == 0 {
            return bad("batch-size, buffer-size and update-freq must be positive");
        }
        if self.batch_size > self.buffer_size {
            return bad("batch-size cannot exceed buffer-size");
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1)");
        }
        if self.see_enabled {
            self.see().expect("enabled").validate()?;
        } else if !self.ablations.is_empty() {
            return bad("ablations require exploration to be enabled");
        }
        self.learner().validate()
    }
}
