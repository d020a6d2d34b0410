use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::{DistributionSpec, EnvSpec, Environment};
use crate::error::{Error, Result};
use crate::mechanism::{LossSpec, DEFAULT_WEIGHT_FLOOR};
use crate::optim::{Method, OptimizerConfig, SearchBounds};

fn default_eval_profiles() -> usize {
    10_000
}

/// Experiment file contents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub environment: EnvSpec,
    pub distribution: DistributionSpec,
    pub loss: LossSpec,
    pub method: Method,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    /// Defaults to boosts in `±H·v̄` and weights in `[floor, 2]`.
    #[serde(default)]
    pub bounds: Option<SearchBounds>,
    #[serde(default = "default_eval_profiles")]
    pub eval_profiles: usize,
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentConfig {
    /// Parses and validates; errors name the offending field.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(if path == "." { "<root>".to_string() } else { path }, e.into_inner().to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.eval_profiles == 0 {
            return Err(Error::config("eval_profiles", "must be at least 1"));
        }
        self.optimizer.validate()?;
        if let Some(b) = &self.bounds {
            b.validate(DEFAULT_WEIGHT_FLOOR)?;
        }
        let env = self.build_environment()?;
        if !env.supports_loss(self.loss) {
            return Err(Error::config(
                "loss",
                format!("makespan is only defined for task_scheduling, not `{}`", self.environment.name()),
            ));
        }
        Ok(())
    }

    pub fn build_environment(&self) -> Result<Environment> {
        Environment::new(&self.environment, &self.distribution).map_err(|e| match e {
            Error::InvalidMdp(msg) => Error::config("environment", msg),
            other => other,
        })
    }

    pub fn bounds_for(&self, env: &Environment) -> SearchBounds {
        self.bounds.clone().unwrap_or_else(|| SearchBounds::default_for(env))
    }

    /// Hex SHA-256 of the compact JSON serialization.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "environment": {"kind": "sequential_sales", "n": 2, "m": 2},
        "distribution": {"kind": "uniform_symmetric", "lo": 0.0, "hi": 1.0},
        "loss": "revenue",
        "method": "vcg"
    }"#;

    #[test]
    fn defaults_fill_in() {
        let c = ExperimentConfig::from_json_str(MINIMAL).unwrap();
        assert_eq!(c.eval_profiles, 10_000);
        assert_eq!(c.seed, 0);
        assert_eq!(c.optimizer, OptimizerConfig::default());
    }

    #[test]
    fn unknown_key_names_the_field() {
        let text = MINIMAL.replace("\"method\": \"vcg\"", "\"method\": \"vcg\", \"colour\": 1");
        let err = ExperimentConfig::from_json_str(&text).unwrap_err().to_string();
        assert!(err.contains("colour"), "{err}");
        let text = MINIMAL.replace("\"m\": 2}", "\"m\": 2, \"x\": 0}");
        let err = ExperimentConfig::from_json_str(&text).unwrap_err().to_string();
        assert!(err.contains("environment"), "{err}");
    }

    #[test]
    fn makespan_needs_task_scheduling() {
        let text = MINIMAL.replace("\"revenue\"", "\"makespan\"");
        let err = ExperimentConfig::from_json_str(&text).unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "loss"), "{err}");
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::from_json_str(MINIMAL).unwrap();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }
}
