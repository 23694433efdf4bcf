use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Result, SimError};
use crate::Mat;

/// L2-normalized random projection of a sample's features. Used as the
/// lookup key in the per-sample knowledge cache.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleHash {
    pub vector: Vec<f64>,
}

impl SampleHash {
    pub fn cosine(&self, other: &SampleHash) -> f64 {
        // Both sides are unit norm, so the dot product is the cosine.
        self.vector
            .iter()
            .zip(&other.vector)
            .map(|(a, b)| a * b)
            .sum()
    }
}

/// Fixed Gaussian projection `hash_dim x in_dim`, deterministic in seed.
#[derive(Debug, Clone)]
pub struct RandomProjection {
    projection: Mat,
}

impl RandomProjection {
    pub fn new(projection_seed: u64, in_dim: usize, hash_dim: usize) -> Result<Self> {
        if hash_dim < 2 {
            return Err(SimError::config("hash_dim must be >= 2".to_string()));
        }
        if in_dim == 0 {
            return Err(SimError::config("in_dim must be positive".to_string()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(projection_seed);
        let data: Vec<f64> = (0..hash_dim * in_dim)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        Ok(RandomProjection {
            projection: Mat::from_vec(hash_dim, in_dim, data)?,
        })
    }

    pub fn hash(&self, sample: &[f64]) -> Result<SampleHash> {
        if sample.len() != self.projection.cols() {
            return Err(SimError::input(format!(
                "sample dim {} != projection input dim {}",
                sample.len(),
                self.projection.cols()
            )));
        }
        let hash_dim = self.projection.rows();
        let mut v = vec![0.0; hash_dim];
        for (r, out) in v.iter_mut().enumerate() {
            *out = self
                .projection
                .row(r)
                .iter()
                .zip(sample)
                .map(|(p, x)| p * x)
                .sum();
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm <= 1e-12 {
            // Degenerate rule: the zero vector hashes to e1.
            let mut e1 = vec![0.0; hash_dim];
            e1[0] = 1.0;
            return Ok(SampleHash { vector: e1 });
        }
        for x in &mut v {
            *x /= norm;
        }
        Ok(SampleHash { vector: v })
    }
}

/// Convenience wrapper building the projection on the fly.
pub fn compute_hash(sample: &[f64], projection_seed: u64, hash_dim: usize) -> Result<SampleHash> {
    RandomProjection::new(projection_seed, sample.len(), hash_dim)?.hash(sample)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_unit_norm() {
        let x = vec![1.0, -2.0, 0.5, 3.0];
        let a = compute_hash(&x, 7, 16).unwrap();
        let b = compute_hash(&x, 7, 16).unwrap();
        assert_eq!(a, b);
        let norm: f64 = a.vector.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-9);
    }

    #[test]
    fn zero_vector_hashes_to_e1() {
        let h = compute_hash(&[0.0, 0.0, 0.0], 7, 8).unwrap();
        assert_eq!(h.vector[0], 1.0);
        assert!(h.vector[1..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hash_dim_too_small() {
        assert!(matches!(
            compute_hash(&[1.0], 0, 1),
            Err(SimError::Config(_))
        ));
    }

    /// Cosine similarity of hashes of nearby points approaches 1 as the
    /// perturbation shrinks.
    #[test]
    fn continuity_sweep() {
        let proj = RandomProjection::new(3, 8, 32).unwrap();
        let x: Vec<f64> = (0..8).map(|i| (i as f64 * 0.37).sin() + 1.0).collect();
        let hx = proj.hash(&x).unwrap();
        let mut last = -1.0;
        for &eps in &[1.0, 0.1, 0.01, 0.001] {
            let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| v + eps * (i as f64 + 1.0) / 8.0).collect();
            let sim = hx.cosine(&proj.hash(&y).unwrap());
            assert!(sim >= last - 1e-9, "similarity not improving: {sim} < {last}");
            last = sim;
        }
        assert!(last > 0.999999, "cosine at eps=1e-3 was {last}");
    }
}
