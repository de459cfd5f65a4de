use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Dataset;
use crate::error::{Error, Result};

/// Distance between any two cluster centers when `classes <= dim`.
pub const CENTER_DISTANCE: f64 = 4.0;

/// Class centers at the vertices of a randomly rotated regular simplex with
/// edge length [`CENTER_DISTANCE`]. With more classes than dimensions the
/// centers are random points on the sphere of the same circumradius.
fn simplex_centers(classes: usize, dim: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(classes);
    let radius = CENTER_DISTANCE / 2f64.sqrt();
    while basis.len() < classes {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        if classes <= dim {
            for b in &basis {
                let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                for (x, y) in v.iter_mut().zip(b) {
                    *x -= dot * y;
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue;
        }
        basis.push(v.into_iter().map(|x| x / norm).collect());
    }
    let centroid: Vec<f64> = (0..dim)
        .map(|j| basis.iter().map(|b| b[j]).sum::<f64>() / classes as f64)
        .collect();
    if classes <= dim {
        basis
            .into_iter()
            .map(|b| b.iter().zip(&centroid).map(|(x, c)| radius * (x - c)).collect())
            .collect()
    } else {
        basis
            .into_iter()
            .map(|b| b.iter().map(|x| radius * x).collect())
            .collect()
    }
}

/// `classes` isotropic Gaussian clusters of `n_per_class` points each, with
/// per-coordinate standard deviation `spread`. Rows are grouped by class.
pub fn make_blobs(
    n_per_class: usize,
    classes: usize,
    dim: usize,
    spread: f64,
    seed: u64,
) -> Result<Dataset> {
    if n_per_class == 0 || dim == 0 {
        return Err(Error::invalid("blob sizes must be positive"));
    }
    if classes < 2 {
        return Err(Error::invalid("blobs need at least two classes"));
    }
    if !(spread.is_finite() && spread >= 0.0) {
        return Err(Error::invalid(format!("spread must be non-negative, got {spread}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = simplex_centers(classes, dim, &mut rng);
    let mut features = Vec::with_capacity(n_per_class * classes);
    let mut labels = Vec::with_capacity(n_per_class * classes);
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..n_per_class {
            let row = center
                .iter()
                .map(|&m| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    m + spread * z
                })
                .collect();
            features.push(row);
            labels.push(c);
        }
    }
    Dataset::new(
        features,
        labels,
        classes,
        format!("blobs(n_per_class={n_per_class}, classes={classes}, dim={dim}, spread={spread}, seed={seed})"),
    )
}
