//! Eight Gaussian clusters on a circle, the synthetic classification task.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

pub const CLASSES: usize = 8;
pub const RADIUS: f64 = 3.0;
pub const DEFAULT_PER_CLASS: usize = 100;
pub const DEFAULT_SIGMA: f64 = 0.3;

/// Labelled 2D points, stored class by class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDataset {
    pub centers: Vec<[f64; 2]>,
    pub points: Vec<[f64; 2]>,
    pub labels: Vec<usize>,
    pub noise_sigma: f64,
    pub per_class: usize,
    pub seed: u64,
}

/// Dataset generation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub per_class: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            per_class: DEFAULT_PER_CLASS,
            noise_sigma: DEFAULT_SIGMA,
            seed: 0,
        }
    }
}

impl DatasetConfig {
    pub fn generate(&self) -> Result<SyntheticDataset> {
        generate_dataset(self.per_class, self.noise_sigma, self.seed)
    }
}

/// Centers at angles `2πk/8` on a circle of radius 3.
pub fn class_centers() -> Vec<[f64; 2]> {
    (0..CLASSES)
        .map(|k| {
            let theta = std::f64::consts::TAU * k as f64 / CLASSES as f64;
            [RADIUS * theta.cos(), RADIUS * theta.sin()]
        })
        .collect()
}

/// `per_class` points per class, each its center plus `N(0, σ²I)` noise.
pub fn generate_dataset(per_class: usize, noise_sigma: f64, seed: u64) -> Result<SyntheticDataset> {
    if per_class == 0 {
        return Err(Error::InvalidConfig("per_class must be >= 1".into()));
    }
    if !(noise_sigma.is_finite() && noise_sigma > 0.0) {
        return Err(Error::InvalidConfig(format!("noise sigma must be > 0, got {noise_sigma}")));
    }
    let normal = Normal::new(0.0, noise_sigma).expect("sigma checked above");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = class_centers();
    let mut points = Vec::with_capacity(CLASSES * per_class);
    let mut labels = Vec::with_capacity(CLASSES * per_class);
    for (label, c) in centers.iter().enumerate() {
        for _ in 0..per_class {
            points.push([c[0] + normal.sample(&mut rng), c[1] + normal.sample(&mut rng)]);
            labels.push(label);
        }
    }
    Ok(SyntheticDataset {
        centers,
        points,
        labels,
        noise_sigma,
        per_class,
        seed,
    })
}

impl SyntheticDataset {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points as an `len × 2` matrix.
    pub fn inputs<T: Scalar>(&self) -> Matrix<T> {
        Matrix::from_fn(self.len(), 2, |i, j| T::of(self.points[i][j]))
    }
}
