//! Random Fourier features for the Gaussian kernel exp(-‖x-y‖² / (2T)).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_FEATURES: usize = 768;
pub const DEFAULT_TEMPERATURE: f64 = 0.008;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RffError {
    #[error("dimensions must be >= 1 (input {input}, features {features})")]
    InvalidDimension { input: usize, features: usize },
    #[error("kernel temperature must be finite and > 0, got {0}")]
    InvalidTemperature(f64),
    #[error("input has length {found}, projection expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
}

/// Feature count, kernel temperature and seed; together with the input
/// dimension these fully determine a projection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RffSettings {
    pub num_features: usize,
    pub temperature: f64,
    pub seed: u64,
}

impl Default for RffSettings {
    fn default() -> Self {
        RffSettings {
            num_features: DEFAULT_FEATURES,
            temperature: DEFAULT_TEMPERATURE,
            seed: 0,
        }
    }
}

/// z(x) = sqrt(2/D) cos(Wx + b) with W ~ N(0, 1/T) and b ~ U[0, 2π).
#[derive(Debug, Clone, PartialEq)]
pub struct RffProjection {
    input_dim: usize,
    settings: RffSettings,
    /// Row-major `num_features × input_dim`.
    weights: Vec<f64>,
    /// Same matrix, column-major.
    columns: Vec<f64>,
    phases: Vec<f64>,
}

impl RffProjection {
    pub fn new(input_dim: usize, settings: RffSettings) -> Result<Self, RffError> {
        let RffSettings {
            num_features,
            temperature,
            seed,
        } = settings;
        if input_dim == 0 || num_features == 0 {
            return Err(RffError::InvalidDimension {
                input: input_dim,
                features: num_features,
            });
        }
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(RffError::InvalidTemperature(temperature));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, temperature.sqrt().recip()).expect("positive scale");
        let weights: Vec<f64> = (0..num_features * input_dim)
            .map(|_| normal.sample(&mut rng))
            .collect();
        let columns = (0..input_dim)
            .flat_map(|j| weights.iter().skip(j).step_by(input_dim).copied())
            .collect();
        let phases = (0..num_features)
            .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
            .collect();
        Ok(RffProjection {
            input_dim,
            settings,
            weights,
            columns,
            phases,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn num_features(&self) -> usize {
        self.settings.num_features
    }

    pub fn settings(&self) -> RffSettings {
        self.settings
    }

    /// `Wx` without phase or cosine; zero entries of `x` are skipped.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>, RffError> {
        self.check(x)?;
        let mut acc = vec![0.0; self.settings.num_features];
        for (j, &xj) in x.iter().enumerate() {
            if xj != 0.0 {
                self.add_column(&mut acc, j, xj);
            }
        }
        Ok(acc)
    }

    /// `acc += a · W[:, j]`.
    pub fn add_column(&self, acc: &mut [f64], j: usize, a: f64) {
        let column = &self.columns[j * self.settings.num_features..][..self.settings.num_features];
        for (slot, w) in acc.iter_mut().zip(column) {
            *slot += a * w;
        }
    }

    /// Features of `x / norm` from a precomputed projection `Wx`.
    pub fn features_from_projection(&self, wx: &[f64], norm: f64) -> Vec<f64> {
        let scale = (2.0 / self.settings.num_features as f64).sqrt();
        wx.iter()
            .zip(&self.phases)
            .map(|(v, b)| scale * (v / norm + b).cos())
            .collect()
    }

    fn check(&self, x: &[f64]) -> Result<(), RffError> {
        if x.len() != self.input_dim {
            return Err(RffError::DimensionMismatch {
                expected: self.input_dim,
                found: x.len(),
            });
        }
        Ok(())
    }

    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>, RffError> {
        self.check(x)?;
        let scale = (2.0 / self.settings.num_features as f64).sqrt();
        Ok(self
            .weights
            .chunks_exact(self.input_dim)
            .zip(&self.phases)
            .map(|(row, b)| {
                let wx: f64 = row.iter().zip(x).map(|(w, xi)| w * xi).sum();
                scale * (wx + b).cos()
            })
            .collect())
    }
}

/// Exact kernel value the features approximate.
pub fn gaussian_kernel(x: &[f64], y: &[f64], temperature: f64) -> f64 {
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    (-d2 / (2.0 * temperature)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings(d: usize, t: f64, seed: u64) -> RffSettings {
        RffSettings {
            num_features: d,
            temperature: t,
            seed,
        }
    }

    fn unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
        let v: Vec<f64> = (0..d)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / n).collect()
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn reproducible_and_seed_dependent() {
        let a = RffProjection::new(16, settings(64, 0.5, 3)).unwrap();
        assert_eq!(a, RffProjection::new(16, settings(64, 0.5, 3)).unwrap());
        assert_ne!(
            a.weights,
            RffProjection::new(16, settings(64, 0.5, 4)).unwrap().weights
        );
    }

    #[test]
    fn guards() {
        assert!(matches!(
            RffProjection::new(4, settings(0, 1.0, 0)),
            Err(RffError::InvalidDimension { .. })
        ));
        assert!(matches!(
            RffProjection::new(0, settings(4, 1.0, 0)),
            Err(RffError::InvalidDimension { .. })
        ));
        assert!(matches!(
            RffProjection::new(4, settings(4, 0.0, 0)),
            Err(RffError::InvalidTemperature(_))
        ));
        let p = RffProjection::new(4, settings(4, 1.0, 0)).unwrap();
        assert!(matches!(
            p.transform(&[1.0]),
            Err(RffError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn self_inner_product_near_one() {
        let d = 768;
        let p = RffProjection::new(32, settings(d, 0.008, 11)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let bound = 3.0 / (d as f64).sqrt();
        for _ in 0..50 {
            let x = unit(&mut rng, 32);
            let z = p.transform(&x).unwrap();
            assert!((dot(&z, &z) - 1.0).abs() <= bound);
        }
    }

    #[test]
    fn distant_points_are_near_zero() {
        let t = 0.008;
        let p = RffProjection::new(8, settings(768, t, 2)).unwrap();
        let x = vec![0.0; 8];
        let mut y = vec![0.0; 8];
        y[0] = (20.0 * t).sqrt();
        let exact = gaussian_kernel(&x, &y, t);
        assert!((exact - (-10.0f64).exp()).abs() < 1e-15);
        let approx = dot(&p.transform(&x).unwrap(), &p.transform(&y).unwrap());
        assert!((approx - exact).abs() < 0.05);
    }

    #[test]
    fn averaged_over_seeds_is_close_to_kernel() {
        let t = 0.5;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pairs: Vec<_> = (0..20).map(|_| (unit(&mut rng, 6), unit(&mut rng, 6))).collect();
        let projections: Vec<_> = (0..50)
            .map(|s| RffProjection::new(6, settings(768, t, 100 + s)).unwrap())
            .collect();
        for (x, y) in &pairs {
            let mean = projections
                .iter()
                .map(|p| dot(&p.transform(x).unwrap(), &p.transform(y).unwrap()))
                .sum::<f64>()
                / projections.len() as f64;
            assert!((mean - gaussian_kernel(x, y, t)).abs() < 0.01);
        }
    }

    #[test]
    fn translation_changes_little() {
        let t = 0.5;
        let p = RffProjection::new(6, settings(4096, t, 1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let (x, y, s) = (unit(&mut rng, 6), unit(&mut rng, 6), unit(&mut rng, 6));
            let xs: Vec<f64> = x.iter().zip(&s).map(|(a, b)| a + b).collect();
            let ys: Vec<f64> = y.iter().zip(&s).map(|(a, b)| a + b).collect();
            let k1 = dot(&p.transform(&x).unwrap(), &p.transform(&y).unwrap());
            let k2 = dot(&p.transform(&xs).unwrap(), &p.transform(&ys).unwrap());
            assert!((k1 - k2).abs() < 0.1);
        }
    }
}
