use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Result, SimError};

/// Assignment of training-sample indices to clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub assignments: Vec<Vec<usize>>,
    pub alpha: f64,
    pub seed: u64,
}

impl Partition {
    pub fn n_clients(&self) -> usize {
        self.assignments.len()
    }
}

/// Label-skewed split: for each class, client shares are drawn from
/// Dirichlet(alpha) over the K clients and that class's shuffled samples
/// are dealt out by cumulative share. Clients left empty are repaired by
/// taking one sample at a time from the currently largest client.
pub fn dirichlet_partition(
    dataset: &Dataset,
    n_clients: usize,
    alpha: f64,
    seed: u64,
) -> Result<Partition> {
    if n_clients == 0 {
        return Err(SimError::config("K must be >= 1".to_string()));
    }
    if alpha <= 0.0 {
        return Err(SimError::config(format!("alpha must be > 0, got {alpha}")));
    }
    if n_clients > dataset.len() {
        return Err(SimError::config(format!(
            "K = {n_clients} exceeds dataset size {}",
            dataset.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignments = vec![Vec::new(); n_clients];

    for mut indices in dataset.indices_by_class() {
        if indices.is_empty() {
            continue;
        }
        indices.shuffle(&mut rng);
        // Dirichlet(alpha) via normalized Gamma(alpha, 1) draws.
        let shares: Vec<f64> = if n_clients == 1 {
            vec![1.0]
        } else {
            let gamma = Gamma::new(alpha, 1.0)
                .map_err(|e| SimError::config(format!("dirichlet: {e}")))?;
            let mut draws: Vec<f64> = (0..n_clients).map(|_| gamma.sample(&mut rng)).collect();
            let total: f64 = draws.iter().sum();
            if total <= 0.0 {
                // all draws underflowed (tiny alpha): fall back to uniform
                draws = vec![1.0 / n_clients as f64; n_clients];
            } else {
                for d in &mut draws {
                    *d /= total;
                }
            }
            draws
        };
        // Cumulative-share cut points guarantee the class is dealt out
        // exhaustively.
        let n = indices.len();
        let mut cum = 0.0;
        let mut start = 0usize;
        for (k, &s) in shares.iter().enumerate() {
            cum += s;
            let end = if k + 1 == n_clients {
                n
            } else {
                ((cum * n as f64).round() as usize).min(n)
            };
            assignments[k].extend_from_slice(&indices[start..end.max(start)]);
            start = end.max(start);
        }
    }

    // Empty-client repair: move one sample from the largest client, repeat.
    loop {
        let empty = match assignments.iter().position(Vec::is_empty) {
            Some(i) => i,
            None => break,
        };
        let largest = (0..n_clients)
            .max_by_key(|&k| assignments[k].len())
            .unwrap();
        if assignments[largest].len() <= 1 {
            return Err(SimError::config(
                "cannot repair empty clients: not enough samples".to_string(),
            ));
        }
        let moved = assignments[largest].pop().unwrap();
        assignments[empty].push(moved);
    }

    for a in &mut assignments {
        a.sort_unstable();
    }
    Ok(Partition {
        assignments,
        alpha,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_synthetic;

    fn toy() -> Dataset {
        generate_synthetic(5, 40, 4, 2.0, 7).unwrap().0
    }

    fn check_disjoint_exhaustive(p: &Partition, n: usize) {
        let mut seen = vec![false; n];
        for a in &p.assignments {
            for &i in a {
                assert!(!seen[i], "index {i} assigned twice");
                seen[i] = true;
            }
        }
        assert!(seen.iter().all(|&s| s), "not exhaustive");
        assert!(p.assignments.iter().all(|a| !a.is_empty()));
    }

    #[test]
    fn single_client_gets_everything() {
        let ds = toy();
        let p = dirichlet_partition(&ds, 1, 0.5, 0).unwrap();
        assert_eq!(p.assignments[0].len(), ds.len());
    }

    #[test]
    fn conservation_across_alphas() {
        let ds = toy();
        for &alpha in &[0.1, 0.5, 1.0, 3.0, 1000.0] {
            for seed in 0..3 {
                let p = dirichlet_partition(&ds, 10, alpha, seed).unwrap();
                let total: usize = p.assignments.iter().map(Vec::len).sum();
                assert_eq!(total, ds.len());
                check_disjoint_exhaustive(&p, ds.len());
            }
        }
    }

    #[test]
    fn k_larger_than_n_is_config_error() {
        let ds = toy();
        assert!(matches!(
            dirichlet_partition(&ds, ds.len() + 1, 1.0, 0),
            Err(SimError::Config(_))
        ));
    }

    /// Large alpha approaches the IID limit: every client's class
    /// histogram stays within +-10% absolute of the global histogram.
    #[test]
    fn huge_alpha_is_near_iid() {
        let ds = generate_synthetic(5, 100, 4, 2.0, 1).unwrap().0;
        let global: Vec<f64> = {
            let mut counts = vec![0usize; ds.n_classes];
            for &l in &ds.labels {
                counts[l] += 1;
            }
            counts
                .iter()
                .map(|&c| c as f64 / ds.len() as f64)
                .collect()
        };
        for seed in 0..5 {
            let p = dirichlet_partition(&ds, 10, 1000.0, seed).unwrap();
            for a in &p.assignments {
                let mut counts = vec![0usize; ds.n_classes];
                for &i in a {
                    counts[ds.labels[i]] += 1;
                }
                for (c, (&cnt, &g)) in counts.iter().zip(&global).enumerate() {
                    let prop = cnt as f64 / a.len() as f64;
                    assert!(
                        (prop - g).abs() <= 0.10,
                        "seed {seed} class {c}: {prop} vs {g}"
                    );
                }
            }
        }
    }

    /// Mean per-client class-distribution entropy is non-decreasing in
    /// alpha, averaged over seeds.
    #[test]
    fn entropy_ordering_over_alpha() {
        let ds = generate_synthetic(10, 100, 4, 2.0, 2).unwrap().0;
        let mean_entropy = |alpha: f64| -> f64 {
            let mut total = 0.0;
            let mut n = 0usize;
            for seed in 0..10 {
                let p = dirichlet_partition(&ds, 20, alpha, seed).unwrap();
                for a in &p.assignments {
                    let mut counts = vec![0usize; ds.n_classes];
                    for &i in a {
                        counts[ds.labels[i]] += 1;
                    }
                    let mut h = 0.0;
                    for &c in &counts {
                        if c > 0 {
                            let q = c as f64 / a.len() as f64;
                            h -= q * q.ln();
                        }
                    }
                    total += h;
                    n += 1;
                }
            }
            total / n as f64
        };
        let h05 = mean_entropy(0.5);
        let h10 = mean_entropy(1.0);
        let h30 = mean_entropy(3.0);
        assert!(h05 <= h10 && h10 <= h30, "{h05} {h10} {h30}");
    }
}
