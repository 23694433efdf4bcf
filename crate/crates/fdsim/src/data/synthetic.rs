use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{Dataset, Split};
use crate::error::{Result, SimError};
use crate::Mat;

/// Gaussian blobs: one unit-direction mean per class scaled by
/// `separation`, unit isotropic noise, 80/20 per-class train/test split.
/// Deterministic in `seed`.
pub fn generate_synthetic(
    n_classes: usize,
    per_class: usize,
    dim: usize,
    separation: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    if n_classes == 0 || per_class == 0 || dim == 0 {
        return Err(SimError::config(
            "n_classes, per_class and dim must be positive".to_string(),
        ));
    }
    if separation < 0.0 {
        return Err(SimError::config("separation must be >= 0".to_string()));
    }
    if per_class < 5 {
        return Err(SimError::config(
            "per_class must be >= 5 so every class lands in both splits".to_string(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut means = Vec::with_capacity(n_classes);
    for _ in 0..n_classes {
        let mut m: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = m.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        for v in &mut m {
            *v *= separation / norm;
        }
        means.push(m);
    }

    let test_per_class = per_class / 5;
    let train_per_class = per_class - test_per_class;
    let mut train_rows = Vec::new();
    let mut train_labels = Vec::new();
    let mut test_rows = Vec::new();
    let mut test_labels = Vec::new();
    for (c, mean) in means.iter().enumerate() {
        for i in 0..per_class {
            let sample: Vec<f64> = mean
                .iter()
                .map(|&m| {
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    m + noise
                })
                .collect();
            if i < train_per_class {
                train_rows.push(sample);
                train_labels.push(c);
            } else {
                test_rows.push(sample);
                test_labels.push(c);
            }
        }
    }

    let train = Dataset::new(
        Mat::from_rows(&train_rows)?,
        train_labels,
        n_classes,
        Split::Train,
    )?;
    let test = Dataset::new(
        Mat::from_rows(&test_rows)?,
        test_labels,
        n_classes,
        Split::Test,
    )?;
    Ok((train, test))
}
