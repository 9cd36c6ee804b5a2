use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::backend::Eval;
use super::control::{ControlConfig, DelayBuffer};
use super::nets::Model;
use super::normalizer::Normalizer;
use super::tape::Mat;

pub const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Model plus the input normalizers and the action mapping.
#[derive(Clone, Debug, PartialEq)]
pub struct Policy {
    pub model: Model,
    pub obs_norm: Normalizer,
    pub priv_norm: Normalizer,
    pub control: ControlConfig,
}

/// Batched encoder/actor output for one control tick.
#[derive(Clone, Debug)]
pub struct ActorStep {
    pub mean: Mat,
    pub action: Mat,
    pub log_prob: Vec<f64>,
    pub latent: Mat,
    pub hidden: Mat,
}

pub fn gaussian_log_prob(a: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    a.iter()
        .zip(mean)
        .zip(log_std)
        .map(|((a, m), ls)| {
            let z = (a - m) / ls.exp();
            -0.5 * z * z - ls - 0.5 * LN_2PI
        })
        .sum()
}

impl Policy {
    pub fn new(model: Model, control: ControlConfig) -> Self {
        let obs_norm = Normalizer::new(model.d_obs);
        let priv_norm = Normalizer::new(model.d_priv);
        Policy { model, obs_norm, priv_norm, control }
    }

    pub fn freeze(&mut self) {
        self.obs_norm.frozen = true;
        self.priv_norm.frozen = true;
    }

    pub fn normalize_obs_rows(&self, rows: &[Vec<f64>]) -> Mat {
        Self::stack(rows, |r| self.obs_norm.normalize(r))
    }

    pub fn normalize_priv_rows(&self, rows: &[Vec<f64>]) -> Mat {
        Self::stack(rows, |r| self.priv_norm.normalize(r))
    }

    fn stack(rows: &[Vec<f64>], f: impl Fn(&[f64]) -> Vec<f64>) -> Mat {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut m = Mat::zeros((rows.len(), cols));
        for (i, r) in rows.iter().enumerate() {
            m.row_mut(i).assign(&ndarray::ArrayView1::from(&f(r)));
        }
        m
    }

    pub fn zero_hidden(&self, batch: usize) -> Mat {
        Mat::zeros((batch, self.model.cfg.gru_hidden))
    }

    /// Encoder step and action for a batch of normalized observations.
    /// `rng = None` returns the mean action.
    pub fn actor_step<R: Rng + ?Sized>(&self, obs_n: &Mat, hidden: &Mat, rng: Option<&mut R>) -> ActorStep {
        let mut b = Eval { params: &self.model.params };
        let (latent, h2) = self.model.encode_step(&mut b, obs_n, hidden);
        let mean = self.model.actor_mean(&mut b, obs_n, &latent);
        let log_std = self.model.log_std_values();
        let mut action = mean.clone();
        if let Some(rng) = rng {
            for mut row in action.rows_mut() {
                for (j, a) in row.iter_mut().enumerate() {
                    let n: f64 = StandardNormal.sample(rng);
                    *a += log_std[j].exp() * n;
                }
            }
        }
        let log_prob = action
            .rows()
            .into_iter()
            .zip(mean.rows())
            .map(|(a, m)| gaussian_log_prob(a.as_slice().expect("contiguous"), m.as_slice().expect("contiguous"), &log_std))
            .collect();
        ActorStep { mean, action, log_prob, latent, hidden: h2 }
    }

    /// Critic on normalized `[obs, priv]` rows.
    pub fn value(&self, obs_n: &Mat, priv_n: &Mat) -> Vec<f64> {
        let mut b = Eval { params: &self.model.params };
        self.model.value(&mut b, obs_n, priv_n).column(0).to_vec()
    }

    /// Decoder reconstruction of the normalized privileged vector and the
    /// critic evaluated on it.
    pub fn decode_and_value(&self, latent: &Mat, obs_n: &Mat) -> (Mat, Vec<f64>) {
        let mut b = Eval { params: &self.model.params };
        let recon = self.model.decode(&mut b, latent);
        let v = self.model.value(&mut b, obs_n, &recon).column(0).to_vec();
        (recon, v)
    }
}

/// Push `a_t` into the delay line and map the delayed action to torques.
pub fn act(
    control: &ControlConfig,
    a_t: &[f64],
    delay: &mut DelayBuffer,
    q: &[f64],
    qd: &[f64],
    kp_scale: &[f64],
    kd_scale: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let a_eff = delay.push(a_t);
    let tau = control.torque_for(&a_eff, q, qd, kp_scale, kd_scale);
    (a_eff, tau)
}
