//! Experiment configuration: JSON schema, defaults, and validation.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::attacks::AttackKind;
use crate::error::{Result, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[clap(rename_all = "snake_case")]
pub enum Protocol {
    FdAvg,
    Cache,
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Protocol::FdAvg => "fd_avg",
            Protocol::Cache => "cache",
        })
    }
}

/// Where the train/test data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    Synthetic {
        #[serde(default = "default_n_classes")]
        n_classes: usize,
        #[serde(default = "default_per_class")]
        per_class: usize,
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default = "default_separation")]
        separation: f64,
    },
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
    },
    Csv {
        train: PathBuf,
        test: PathBuf,
    },
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec::Synthetic {
            n_classes: default_n_classes(),
            per_class: default_per_class(),
            dim: default_dim(),
            separation: default_separation(),
        }
    }
}

/// Independent seed streams, so ablations can hold everything else fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    #[serde(default = "default_seed_data")]
    pub data: u64,
    #[serde(default = "default_seed_attack")]
    pub attack: u64,
    #[serde(default = "default_seed_model")]
    pub model: u64,
    #[serde(default = "default_seed_training")]
    pub training: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds {
            data: default_seed_data(),
            attack: default_seed_attack(),
            model: default_seed_model(),
            training: default_seed_training(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub protocol: Protocol,
    /// Number of clients K.
    pub clients: usize,
    /// Dirichlet concentration controlling label skew.
    pub alpha: f64,
    /// Fraction of clients acting maliciously.
    pub poison_ratio: f64,
    pub attack: AttackKind,
    pub rounds: usize,
    /// Distillation weight on the KD term.
    pub beta: f64,
    pub temperature: f64,
    pub lr: f64,
    pub local_epochs: usize,
    pub batch_size: usize,
    /// Assign A1/A2/A3 by client index modulo 3 instead of A1 everywhere.
    pub heterogeneous_models: bool,
    /// Cache protocol: number of nearest cached entries averaged per fetch.
    pub neighbors: usize,
    /// fd_avg: average only the other K-1 clients for each recipient.
    pub exclude_self: bool,
    pub hash_dim: usize,
    pub dataset: DatasetSpec,
    pub seeds: Seeds,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            protocol: Protocol::FdAvg,
            clients: 20,
            alpha: 1.0,
            poison_ratio: 0.0,
            attack: AttackKind::None,
            rounds: 60,
            beta: 1.0,
            temperature: 1.0,
            lr: 0.2,
            local_epochs: 1,
            batch_size: 32,
            heterogeneous_models: false,
            neighbors: 16,
            exclude_self: false,
            hash_dim: 32,
            dataset: DatasetSpec::default(),
            seeds: Seeds::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

fn default_n_classes() -> usize {
    10
}
fn default_per_class() -> usize {
    500
}
fn default_dim() -> usize {
    16
}
fn default_separation() -> f64 {
    5.0
}
fn default_seed_data() -> u64 {
    1
}
fn default_seed_attack() -> u64 {
    2
}
fn default_seed_model() -> u64 {
    3
}
fn default_seed_training() -> u64 {
    4
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::config(format!("{}: {e}", path.display())))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| SimError::config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        fn bail(field: &str, msg: String) -> Result<()> {
            Err(SimError::config(format!("field `{field}`: {msg}")))
        }
        if self.clients == 0 {
            return bail("clients", "must be >= 1".to_string());
        }
        if self.alpha <= 0.0 {
            return bail("alpha", format!("must be > 0, got {}", self.alpha));
        }
        if !(0.0..=1.0).contains(&self.poison_ratio) {
            return bail(
                "poison_ratio",
                format!("must be in [0,1], got {}", self.poison_ratio),
            );
        }
        if self.rounds == 0 {
            return bail("rounds", "must be >= 1".to_string());
        }
        if self.beta < 0.0 {
            return bail("beta", format!("must be >= 0, got {}", self.beta));
        }
        if self.temperature <= 0.0 {
            return bail(
                "temperature",
                format!("must be > 0, got {}", self.temperature),
            );
        }
        if self.lr <= 0.0 {
            return bail("lr", format!("must be > 0, got {}", self.lr));
        }
        if self.local_epochs == 0 {
            return bail("local_epochs", "must be >= 1".to_string());
        }
        if self.batch_size == 0 {
            return bail("batch_size", "must be >= 1".to_string());
        }
        if self.protocol == Protocol::Cache && self.neighbors == 0 {
            return bail("neighbors", "cache protocol requires >= 1".to_string());
        }
        if self.hash_dim < 2 {
            return bail("hash_dim", "must be >= 2".to_string());
        }
        if let DatasetSpec::Synthetic {
            n_classes,
            per_class,
            dim,
            separation,
        } = &self.dataset
        {
            if *n_classes == 0 || *per_class == 0 || *dim == 0 {
                return bail("dataset", "synthetic counts must be positive".to_string());
            }
            if *separation < 0.0 {
                return bail("dataset.separation", "must be >= 0".to_string());
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_json_yields_defaults() {
        let cfg: ExperimentConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        cfg.validate().unwrap();
    }

    #[test]
    fn bad_ratio_names_field() {
        let cfg = ExperimentConfig {
            poison_ratio: 1.5,
            ..Default::default()
        };
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("poison_ratio"), "{err}");
    }

    #[test]
    fn unknown_key_rejected() {
        let res: std::result::Result<ExperimentConfig, _> =
            serde_json::from_str(r#"{"bogus": 1}"#);
        assert!(res.is_err());
    }

    #[test]
    fn attack_kind_spelling() {
        let cfg: ExperimentConfig = serde_json::from_str(r#"{"attack": "fdla"}"#).unwrap();
        assert_eq!(cfg.attack, AttackKind::Fdla);
        let json = serde_json::to_string(&cfg).unwrap();
        assert!(json.contains("\"fdla\""));
    }
}
