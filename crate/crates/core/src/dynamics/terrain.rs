//! 1-D height profiles: flat ground and Gaussian-filtered random roughness.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TerrainProfile {
    /// Elevation samples [m]; the first sample sits at `x_start`.
    pub heights: Vec<f64>,
    pub grid_spacing: f64,
    pub x_start: f64,
    pub friction_scale: f64,
}

impl TerrainProfile {
    pub fn flat() -> Self {
        TerrainProfile {
            heights: vec![0.0, 0.0],
            grid_spacing: 1.0,
            x_start: 0.0,
            friction_scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.grid_spacing > 0.0) || self.heights.is_empty() {
            return Err(Error::Config("terrain needs samples and positive spacing".into()));
        }
        if self.heights.iter().any(|h| !h.is_finite()) || !self.friction_scale.is_finite() {
            return Err(Error::Config("terrain heights must be finite".into()));
        }
        Ok(())
    }

    /// Linear interpolation; the profile is extended flat past either end.
    pub fn height(&self, x: f64) -> f64 {
        let n = self.heights.len();
        let u = (x - self.x_start) / self.grid_spacing;
        if !(u > 0.0) {
            return self.heights[0];
        }
        let i = u.floor() as usize;
        if i + 1 >= n {
            return self.heights[n - 1];
        }
        let f = u - i as f64;
        self.heights[i] * (1.0 - f) + self.heights[i + 1] * f
    }

    /// Heights sampled at `count` points spaced `step` apart starting at `x0`.
    pub fn scan(&self, x0: f64, step: f64, count: usize) -> Vec<f64> {
        (0..count).map(|k| self.height(x0 + step * k as f64)).collect()
    }
}

/// Grid spacing used for generated terrain.
pub const TERRAIN_GRID: f64 = 0.05;
/// Generated profiles start this far behind the origin.
pub const TERRAIN_BACKSTOP: f64 = 5.0;

/// White Gaussian noise smoothed by a Gaussian kernel of width
/// `smoothing_sigma` grid cells, scaled so its stationary standard deviation is
/// `amplitude` and clipped to ±3·amplitude.
pub fn generate_terrain(
    seed: u64,
    amplitude: f64,
    smoothing_sigma: f64,
    extent: f64,
) -> Result<TerrainProfile> {
    if !(extent > 0.0) {
        return Err(Error::Config(format!("terrain extent must be positive, got {extent}")));
    }
    if !(amplitude >= 0.0) || !(smoothing_sigma >= 0.0) {
        return Err(Error::Config("terrain amplitude and smoothing must be non-negative".into()));
    }
    let n = (extent / TERRAIN_GRID).ceil() as usize + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let kernel = gaussian_kernel(smoothing_sigma);
    let norm = kernel.iter().map(|w| w * w).sum::<f64>().sqrt();
    let half = (kernel.len() / 2) as isize;
    let heights = (0..n as isize)
        .map(|i| {
            let s: f64 = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| {
                    let j = (i + k as isize - half).clamp(0, n as isize - 1) as usize;
                    w * noise[j]
                })
                .sum();
            (amplitude * s / norm).clamp(-3.0 * amplitude, 3.0 * amplitude)
        })
        .collect();
    Ok(TerrainProfile {
        heights,
        grid_spacing: TERRAIN_GRID,
        x_start: -TERRAIN_BACKSTOP,
        friction_scale: 1.0,
    })
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let half = (4.0 * sigma).ceil() as isize;
    let w: Vec<f64> = (-half..=half)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn second_difference_energy(h: &[f64]) -> f64 {
        h.windows(3).map(|w| (w[0] - 2.0 * w[1] + w[2]).powi(2)).sum()
    }

    #[test]
    fn zero_amplitude_is_flat() {
        let t = generate_terrain(3, 0.0, 2.0, 10.0).unwrap();
        assert!(t.heights.iter().all(|h| *h == 0.0));
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_terrain(42, 0.03, 2.0, 20.0).unwrap();
        let b = generate_terrain(42, 0.03, 2.0, 20.0).unwrap();
        assert_eq!(a, b);
        let c = generate_terrain(43, 0.03, 2.0, 20.0).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn bounded_by_three_amplitudes() {
        for seed in 0..20 {
            let t = generate_terrain(seed, 0.02, 1.5, 30.0).unwrap();
            assert!(t.heights.iter().all(|h| h.abs() <= 0.06 + 1e-15));
        }
    }

    #[test]
    fn smoothing_reduces_roughness() {
        let mut last = f64::INFINITY;
        for sigma in [0.0, 0.5, 1.0, 2.0, 4.0, 8.0] {
            let t = generate_terrain(7, 0.02, sigma, 40.0).unwrap();
            let e = second_difference_energy(&t.heights);
            assert!(e < last, "sigma {sigma}: {e} !< {last}");
            last = e;
        }
    }

    #[test]
    fn rejects_bad_extent() {
        assert!(generate_terrain(1, 0.1, 1.0, 0.0).is_err());
        assert!(generate_terrain(1, 0.1, 1.0, -2.0).is_err());
    }

    #[test]
    fn interpolates_and_extends() {
        let t = TerrainProfile {
            heights: vec![0.0, 1.0, 3.0],
            grid_spacing: 0.5,
            x_start: 0.0,
            friction_scale: 1.0,
        };
        assert_eq!(t.height(0.25), 0.5);
        assert_eq!(t.height(0.75), 2.0);
        assert_eq!(t.height(-1.0), 0.0);
        assert_eq!(t.height(9.0), 3.0);
    }
}
