//! Dataset ingestion and synthesis, Dirichlet non-IID partitioning, and
//! the random-projection sample hashes used by the cache protocol.

pub mod csv_loader;
pub mod hash;
pub mod idx;
pub mod partition;
pub mod synthetic;

pub use hash::{compute_hash, RandomProjection, SampleHash};
pub use partition::{dirichlet_partition, Partition};
pub use synthetic::generate_synthetic;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// A labeled feature matrix, one sample per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Mat,
    pub labels: Vec<usize>,
    pub n_classes: usize,
    pub split: Split,
}

impl Dataset {
    pub fn new(features: Mat, labels: Vec<usize>, n_classes: usize, split: Split) -> Result<Self> {
        if features.rows() == 0 {
            return Err(SimError::input("dataset must contain at least one sample".to_string()));
        }
        if labels.len() != features.rows() {
            return Err(SimError::input(format!(
                "label count {} != sample count {}",
                labels.len(),
                features.rows()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(SimError::input(format!(
                "label {bad} out of range for {n_classes} classes"
            )));
        }
        if !features.is_finite() {
            return Err(SimError::numeric("non-finite feature values".to_string()));
        }
        Ok(Dataset {
            features,
            labels,
            n_classes,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Sample indices grouped by class label.
    pub fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); self.n_classes];
        for (i, &l) in self.labels.iter().enumerate() {
            by_class[l].push(i);
        }
        by_class
    }
}
