use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::scale::RunningScale;
use crate::error::{check_dim, Result};

pub const PERTURB_HIDDEN: [usize; 2] = [32, 32];

/// Sampled torque-space perturbation function: bias-free tanh MLP scaled by σ_lim.
///
/// Outputs are `n_joints` joint torques followed by the base force (fx, fz).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbNet {
    pub layer_dims: Vec<usize>,
    /// Row-major `out × in` per layer.
    pub weights: Vec<Vec<f64>>,
    pub n_joints: usize,
    pub sigma_lim_joint: f64,
    pub sigma_lim_base: f64,
    pub active: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbOutput {
    pub tau_pert: Vec<f64>,
    pub f_base: [f64; 2],
}

impl PerturbOutput {
    pub fn zero(n_joints: usize) -> Self {
        PerturbOutput { tau_pert: vec![0.0; n_joints], f_base: [0.0; 2] }
    }
}

/// Zero-mean Gaussian weights with std `√(1.5 / (n_in + n_out))` per layer.
pub fn sample_perturb_weights<R: Rng + ?Sized>(layer_dims: &[usize], rng: &mut R) -> Vec<Vec<f64>> {
    layer_dims
        .windows(2)
        .map(|w| {
            let std = (1.5 / (w[0] + w[1]) as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("finite std");
            (0..w[0] * w[1]).map(|_| normal.sample(rng)).collect()
        })
        .collect()
}

impl PerturbNet {
    pub fn dims(d_priv: usize, n_joints: usize) -> Vec<usize> {
        vec![d_priv, PERTURB_HIDDEN[0], PERTURB_HIDDEN[1], n_joints + 2]
    }

    pub fn sample<R: Rng + ?Sized>(
        d_priv: usize,
        n_joints: usize,
        sigma_lim_joint: f64,
        sigma_lim_base: f64,
        rng: &mut R,
    ) -> Self {
        let layer_dims = Self::dims(d_priv, n_joints);
        let weights = sample_perturb_weights(&layer_dims, rng);
        PerturbNet { layer_dims, weights, n_joints, sigma_lim_joint, sigma_lim_base, active: true }
    }

    pub fn inactive(d_priv: usize, n_joints: usize) -> Self {
        let layer_dims = Self::dims(d_priv, n_joints);
        let weights = layer_dims.windows(2).map(|w| vec![0.0; w[0] * w[1]]).collect();
        PerturbNet { layer_dims, weights, n_joints, sigma_lim_joint: 0.0, sigma_lim_base: 0.0, active: false }
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    /// `σ_lim ⊙ tanh(MLP(o_priv / scale))` with the normalization kept uncentred.
    pub fn evaluate(&self, o_priv: &[f64], scale: &RunningScale) -> Result<PerturbOutput> {
        check_dim("perturb_torque: o_priv", self.input_dim(), o_priv.len())?;
        check_dim("perturb_torque: scale", self.input_dim(), scale.dim())?;
        if !self.active {
            return Ok(PerturbOutput::zero(self.n_joints));
        }
        let s = scale.scale();
        let mut h: Vec<f64> = o_priv.iter().zip(&s).map(|(o, s)| o / s).collect();
        for (k, w) in self.weights.iter().enumerate() {
            let (n_in, n_out) = (self.layer_dims[k], self.layer_dims[k + 1]);
            h = (0..n_out)
                .map(|r| w[r * n_in..(r + 1) * n_in].iter().zip(&h).map(|(a, b)| a * b).sum::<f64>().tanh())
                .collect();
        }
        let tau_pert = h[..self.n_joints].iter().map(|x| self.sigma_lim_joint * x).collect();
        let f_base = [self.sigma_lim_base * h[self.n_joints], self.sigma_lim_base * h[self.n_joints + 1]];
        Ok(PerturbOutput { tau_pert, f_base })
    }
}

/// Which of `n_envs` environment slots carry an active perturbation: the first
/// `⌈n/2⌉`. The assignment never changes across episodes.
pub fn perturbation_gate(n_envs: usize) -> Vec<bool> {
    let active = n_envs.div_ceil(2);
    (0..n_envs).map(|i| i < active).collect()
}
