use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{ParamEntry, ParamSet};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "see-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedParams {
    pub name: String,
    pub entries: Vec<ParamEntry>,
}

/// Self-describing JSON container: named parameter sets with shape-annotated
/// flat arrays, the run configuration and the RNG states.
///
/// Floats are written in shortest round-trip form, so a save/load cycle is
/// bitwise exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub step: u64,
    pub config: serde_json::Value,
    pub rng_state: serde_json::Value,
    pub params: Vec<NamedParams>,
}

impl Checkpoint {
    pub fn new(step: u64, config: serde_json::Value, rng_state: serde_json::Value) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            step,
            config,
            rng_state,
            params: Vec::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, params: &ParamSet) -> Result<()> {
        let name = name.into();
        if !params.all_finite() {
            return Err(Error::NonFinite(format!("checkpoint parameters '{name}'")));
        }
        if self.params.iter().any(|p| p.name == name) {
            return Err(Error::Config(format!("duplicate checkpoint entry '{name}'")));
        }
        self.params.push(NamedParams {
            name,
            entries: params.to_entries(),
        });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<ParamSet> {
        let named = self
            .params
            .iter()
            .find(|p| p.name == name)
            .ok_or_else(|| Error::Serialization(format!("checkpoint has no entry '{name}'")))?;
        ParamSet::from_entries(&named.entries)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let ckpt: Checkpoint = serde_json::from_str(&text)?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::Serialization(format!(
                "unsupported checkpoint format '{}'",
                ckpt.format
            )));
        }
        Ok(ckpt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::MlpSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn save_load_is_bitwise() {
        let spec = MlpSpec::new(5, 3, vec![7, 4]);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut p = spec.init(&mut rng, 1e-2).unwrap();
        // awkward values that stress decimal round-tripping
        p.at_mut(0)[[0, 0]] = 0.1 + 0.2;
        p.at_mut(1)[[0, 1]] = f64::MIN_POSITIVE;
        p.at_mut(1)[[0, 2]] = -1.0e300;
        let mut ckpt = Checkpoint::new(
            17,
            serde_json::json!({"algo": "sac"}),
            serde_json::to_value(&rng).unwrap(),
        );
        ckpt.insert("actor", &p).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        ckpt.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ckpt);
        let q = back.get("actor").unwrap();
        let bits = |s: &ParamSet| s.to_flat().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&q), bits(&p));
        let rng_back: ChaCha8Rng = serde_json::from_value(back.rng_state.clone()).unwrap();
        assert_eq!(rng_back, rng);
    }

    #[test]
    fn non_finite_parameters_are_refused() {
        let mut p = ParamSet::new();
        p.insert("w", ndarray::array![[f64::NAN]]).unwrap();
        let mut ckpt = Checkpoint::new(0, serde_json::Value::Null, serde_json::Value::Null);
        assert!(ckpt.insert("bad", &p).is_err());
        assert!(ckpt.get("bad").is_err());
    }
}
