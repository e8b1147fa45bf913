use std::path::{Path, PathBuf};

use noma_dqn::channel::PropagationConfig;
use noma_dqn::dqn::AgentConfig;
use noma_dqn::env::FactoryConfig;
use noma_dqn::experiment::ExperimentPlan;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// The JSON configuration document. Every section and key is optional and
/// falls back to the simulation defaults; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub factory: FactoryConfig,
    pub propagation: PropagationConfig,
    pub agent: AgentConfig,
    pub experiment: ExperimentPlan,
}

impl ConfigFile {
    /// Parses and validates a document.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: ConfigFile = serde_json::from_str(text).map_err(|e| CliError::config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.propagation.validate()?;
        self.factory().validate()?;
        self.agent.validate()?;
        self.experiment.validate()?;
        Ok(())
    }

    /// Factory configuration with the propagation section attached.
    pub fn factory(&self) -> FactoryConfig {
        FactoryConfig { propagation: self.propagation.clone(), ..self.factory.clone() }
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the compact JSON form, lowercase hex.
    pub fn hash(&self) -> String {
        let compact = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&compact).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Everything a command needs to know before it starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_path: Option<PathBuf>,
    pub config: ConfigFile,
    pub output: PathBuf,
    pub seeds: Vec<u64>,
    pub tool_version: String,
}

impl RunManifest {
    /// Reads the config file (or takes the defaults when `path` is `None`) and
    /// applies a seed override.
    pub fn resolve(path: Option<&Path>, output: &Path, seeds: Option<&[u64]>) -> Result<Self, CliError> {
        let mut config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::config(format!("cannot read config `{}`: {e}", p.display())))?;
                ConfigFile::from_json(&text)?
            }
            None => ConfigFile::default(),
        };
        if let Some(s) = seeds {
            config.experiment.seeds = s.to_vec();
            config.validate()?;
        }
        Ok(Self {
            config_path: path.map(Path::to_path_buf),
            seeds: config.experiment.seeds.clone(),
            config,
            output: output.to_path_buf(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        })
    }

    pub fn config_hash(&self) -> String {
        self.config.hash()
    }
}
