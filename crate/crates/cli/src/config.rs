use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use taskprio::sim::experiments::{PriorityConfig, SpacesSuiteConfig, TransitionSuiteConfig};
use taskprio::sim::{preset, Side, PRESET_NAMES};

/// Which demonstration family `demo`, `train` and `synth` operate on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    /// Bimanual strict-hierarchy demos and priority models.
    #[default]
    Priority,
    /// Planar reach-then-oscillate demos and configuration/object models.
    Spaces,
}

/// Everything a run needs. Every field has a default, so `{}` is a valid
/// config; unknown fields are rejected.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Kind,
    /// Hierarchy demonstrated by priority demos.
    pub side: Option<Side>,
    /// Overrides the seeds of every section.
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub priority: PriorityConfig,
    pub spaces: SpacesSuiteConfig,
    pub transitions: TransitionSuiteConfig,
}

/// A rejected config, with the dotted path of the offending field.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| ConfigError(format!("config {}: {e}", path.display())))
    }

    pub fn apply_seed(&mut self, seed: u64) {
        self.seed = Some(seed);
        self.priority.seed = seed;
        self.spaces.seed = seed;
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let robots = [
            ("priority.robot", &self.priority.robot),
            ("priority.transfer_robot", &self.priority.transfer_robot),
            ("spaces.robot", &self.spaces.robot),
            ("transitions.robot", &self.transitions.robot),
        ];
        for (field, name) in robots {
            if preset(name).is_err() {
                return Err(ConfigError(format!(
                    "{field}: unknown robot preset `{name}` (expected one of {})",
                    PRESET_NAMES.join(", ")
                )));
            }
        }
        let positive = [
            ("priority.dt", self.priority.dt),
            ("priority.horizon", self.priority.horizon),
            ("priority.gain", self.priority.gain),
            ("priority.synth_horizon", self.priority.synth_horizon),
            ("spaces.demos.dt", self.spaces.demos.dt),
            ("spaces.demos.horizon", self.spaces.demos.horizon),
            ("transitions.dt", self.transitions.dt),
            ("transitions.settle", self.transitions.settle),
        ];
        for (field, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ConfigError(format!("{field}: must be positive, got {v}")));
            }
        }
        let counts = [
            ("priority.n_demos", self.priority.n_demos),
            ("priority.k", self.priority.k),
            ("spaces.n_demos", self.spaces.n_demos),
            ("spaces.k", self.spaces.k),
            ("transitions.pairs", self.transitions.pairs),
        ];
        for (field, v) in counts {
            if v == 0 {
                return Err(ConfigError(format!("{field}: must be at least 1")));
            }
        }
        if self.transitions.pairs < 2 {
            return Err(ConfigError("transitions.pairs: a sweep needs at least 2 weight pairs".into()));
        }
        if self.priority.damping < 0.0 || self.spaces.damping < 0.0 || self.transitions.damping < 0.0 {
            return Err(ConfigError("damping: must be non-negative".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_the_default() {
        let c: ExperimentConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert!(c.validate().is_ok());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"priorty": {}}"#).is_err());
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"priority": {"robbot": "x"}}"#).is_err());
    }

    #[test]
    fn bad_preset_names_the_field() {
        let c: ExperimentConfig = serde_json::from_str(r#"{"spaces": {"robot": "r2d2"}}"#).unwrap();
        let e = c.validate().unwrap_err().0;
        assert!(e.starts_with("spaces.robot:"), "{e}");
    }

    #[test]
    fn seed_reaches_every_section() {
        let mut c = ExperimentConfig::default();
        c.apply_seed(42);
        assert_eq!((c.priority.seed, c.spaces.seed), (42, 42));
    }
}
