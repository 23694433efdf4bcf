//! The poisoning layer: confidence-permutation attack, the random and
//! zero baselines, malicious-client selection, and the upload hook.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::str::FromStr;

use crate::error::{Result, SimError};

/// Which transformation a malicious client applies to its knowledge
/// before upload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
#[clap(rename_all = "lowercase")]
pub enum AttackKind {
    None,
    Fdla,
    Random,
    Zero,
}

impl AttackKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AttackKind::None => "none",
            AttackKind::Fdla => "fdla",
            AttackKind::Random => "random",
            AttackKind::Zero => "zero",
        }
    }
}

impl FromStr for AttackKind {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(AttackKind::None),
            "fdla" => Ok(AttackKind::Fdla),
            "random" => Ok(AttackKind::Random),
            "zero" => Ok(AttackKind::Zero),
            other => Err(SimError::config(format!(
                "unknown attack kind: {other} (expected none|fdla|random|zero)"
            ))),
        }
    }
}

impl std::fmt::Display for AttackKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The set of clients acting maliciously for an entire run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackAssignment {
    pub malicious_ids: BTreeSet<usize>,
    pub ratio: f64,
    pub seed: u64,
}

impl AttackAssignment {
    pub fn is_malicious(&self, client: usize) -> bool {
        self.malicious_ids.contains(&client)
    }
}

/// Class indices sorted by descending confidence, ties broken by
/// ascending class index, plus the cyclic rank-shift mapping built on it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankPermutation {
    /// `sorted_indices[k]` is the class holding the (k+1)-th highest value.
    pub sorted_indices: Vec<usize>,
    /// `mapping[i]` = class whose value class `i` receives.
    pub mapping: Vec<usize>,
}

impl RankPermutation {
    pub fn new<S: Copy + PartialOrd>(confidences: &[S]) -> RankPermutation {
        let n = confidences.len();
        let mut sorted_indices: Vec<usize> = (0..n).collect();
        // Stable descending sort keeps the ascending-index tie rule.
        sorted_indices.sort_by(|&a, &b| {
            confidences[b]
                .partial_cmp(&confidences[a])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let mut mapping = vec![0usize; n];
        if n > 0 {
            // Top-ranked class takes the bottom value; every other rank k
            // takes the value of rank k-1.
            mapping[sorted_indices[0]] = sorted_indices[n - 1];
            for k in 1..n {
                mapping[sorted_indices[k]] = sorted_indices[k - 1];
            }
        }
        RankPermutation {
            sorted_indices,
            mapping,
        }
    }
}

/// Rank of each class, 1 = highest confidence. Ties go to the lower index.
pub fn rank<S: Copy + PartialOrd>(confidences: &[S]) -> Vec<usize> {
    let perm = RankPermutation::new(confidences);
    let mut ranks = vec![0usize; confidences.len()];
    for (k, &idx) in perm.sorted_indices.iter().enumerate() {
        ranks[idx] = k + 1;
    }
    ranks
}

/// Cyclic confidence shift: the top-ranked class gets the minimum value,
/// every class ranked k >= 2 gets the value of rank k-1. The output is a
/// value-permutation of the input.
pub fn fdla_transform<S: Copy + PartialOrd>(confidences: &[S]) -> Vec<S> {
    let perm = RankPermutation::new(confidences);
    perm.mapping.iter().map(|&j| confidences[j]).collect()
}

/// Replaces every entry with an independent uniform [0,1) draw.
/// Deliberately not normalized.
pub fn random_poison(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(0.0..1.0)).collect()
}

/// All-zero vector of length `n`.
pub fn zero_poison(n: usize) -> Vec<f64> {
    vec![0.0; n]
}

/// Draws `round(ratio * k)` malicious clients uniformly, fixed for the run.
pub fn select_malicious(k: usize, ratio: f64, seed: u64) -> Result<AttackAssignment> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(SimError::config(format!(
            "poison_ratio must be in [0,1], got {ratio}"
        )));
    }
    let count = (ratio * k as f64).round() as usize;
    let mut ids: Vec<usize> = (0..k).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    Ok(AttackAssignment {
        malicious_ids: ids.into_iter().take(count).collect(),
        ratio,
        seed,
    })
}

/// Applies an attack independently to every per-sample confidence vector
/// before upload. `kind = none` is the identity.
pub fn apply_attack(
    knowledge: &mut [(usize, Vec<f64>)],
    kind: AttackKind,
    rng: &mut impl Rng,
) {
    match kind {
        AttackKind::None => {}
        AttackKind::Fdla => {
            for (_, c) in knowledge.iter_mut() {
                *c = fdla_transform(c);
            }
        }
        AttackKind::Random => {
            for (_, c) in knowledge.iter_mut() {
                *c = random_poison(c.len(), rng);
            }
        }
        AttackKind::Zero => {
            for (_, c) in knowledge.iter_mut() {
                *c = zero_poison(c.len());
            }
        }
    }
}
