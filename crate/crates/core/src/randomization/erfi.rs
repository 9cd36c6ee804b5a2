use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Per-episode joint torque bias plus per-step Gaussian noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErfiSampler {
    pub bias: Vec<f64>,
    pub sigma_noise: f64,
}

impl ErfiSampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        if self.sigma_noise == 0.0 {
            return self.bias.clone();
        }
        let normal = Normal::new(0.0, self.sigma_noise).expect("finite sigma");
        self.bias.iter().map(|b| b + normal.sample(rng)).collect()
    }
}

/// Draw the episode bias `~ N(0, σ_bias²)` per joint.
pub fn erfi_perturbation<R: Rng + ?Sized>(rng: &mut R, sigma_bias: f64, sigma_noise: f64, n_joints: usize) -> ErfiSampler {
    assert!(sigma_bias >= 0.0 && sigma_noise >= 0.0, "ERFI sigmas must be >= 0");
    let bias = if sigma_bias == 0.0 {
        vec![0.0; n_joints]
    } else {
        let normal = Normal::new(0.0, sigma_bias).expect("finite sigma");
        (0..n_joints).map(|_| normal.sample(rng)).collect()
    };
    ErfiSampler { bias, sigma_noise }
}

/// Equal bias and noise sigmas whose combined per-joint RMS is `rms`.
pub fn erfi_sigmas_for_rms(rms: f64) -> (f64, f64) {
    let s = rms / std::f64::consts::SQRT_2;
    (s, s)
}
