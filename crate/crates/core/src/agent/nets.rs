use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use super::backend::Backend;
use super::tape::Mat;
use crate::error::{Error, Result};

/// Named parameter matrices. Networks refer to entries by index.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    pub names: Vec<String>,
    pub values: Vec<Mat>,
}

impl ParamStore {
    pub fn add(&mut self, name: impl Into<String>, value: Mat) -> usize {
        self.names.push(name.into());
        self.values.push(value);
        self.values.len() - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn n_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    pub fn all_finite(&self) -> Option<&str> {
        self.values
            .iter()
            .zip(&self.names)
            .find(|(v, _)| v.iter().any(|x| !x.is_finite()))
            .map(|(_, n)| n.as_str())
    }
}

fn gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, std: f64, rng: &mut R) -> Mat {
    let n = Normal::new(0.0, std).expect("finite std");
    Mat::from_shape_simple_fn((rows, cols), || n.sample(rng))
}

/// ELU hidden layers and a linear output layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub dims: Vec<usize>,
    /// `(weight [in, out], bias [1, out])` ids per layer.
    pub layers: Vec<(usize, usize)>,
}

impl Mlp {
    /// He-scaled Gaussian weights, zero biases; the output layer is scaled by `out_gain`.
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, dims: &[usize], out_gain: f64, rng: &mut R) -> Self {
        let n = dims.len() - 1;
        let layers = (0..n)
            .map(|k| {
                let gain = if k + 1 == n { out_gain } else { 2f64.sqrt() };
                let std = gain / (dims[k] as f64).sqrt();
                let w = store.add(format!("{name}.{k}.w"), gaussian(dims[k], dims[k + 1], std, rng));
                let b = store.add(format!("{name}.{k}.b"), Mat::zeros((1, dims[k + 1])));
                (w, b)
            })
            .collect();
        Mlp { dims: dims.to_vec(), layers }
    }

    pub fn forward<B: Backend>(&self, b: &mut B, x: &B::T) -> B::T {
        let mut h = x.clone();
        for (k, (w, bias)) in self.layers.iter().enumerate() {
            let w = b.param(*w);
            let bias = b.param(*bias);
            let z = b.matmul(&h, &w);
            h = b.add_row(&z, &bias);
            if k + 1 < self.layers.len() {
                h = b.elu(&h);
            }
        }
        h
    }
}

/// Single-layer GRU with reset, update and candidate gates packed column-wise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gru {
    pub input: usize,
    pub hidden: usize,
    pub w_ih: usize,
    pub w_hh: usize,
    pub b_ih: usize,
    pub b_hh: usize,
}

impl Gru {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut R) -> Self {
        let k = 1.0 / (hidden as f64).sqrt();
        let u = Uniform::new_inclusive(-k, k).expect("valid bounds");
        let mut m = |r, c| Mat::from_shape_simple_fn((r, c), || u.sample(rng));
        let w_ih = m(input, 3 * hidden);
        let w_hh = m(hidden, 3 * hidden);
        let b_ih = m(1, 3 * hidden);
        let b_hh = m(1, 3 * hidden);
        Gru {
            input,
            hidden,
            w_ih: store.add(format!("{name}.w_ih"), w_ih),
            w_hh: store.add(format!("{name}.w_hh"), w_hh),
            b_ih: store.add(format!("{name}.b_ih"), b_ih),
            b_hh: store.add(format!("{name}.b_hh"), b_hh),
        }
    }

    /// ```text
    /// r = σ(x W_ir + b_ir + h W_hr + b_hr)
    /// z = σ(x W_iz + b_iz + h W_hz + b_hz)
    /// n = tanh(x W_in + b_in + r ⊙ (h W_hn + b_hn))
    /// h' = n + z ⊙ (h − n)
    /// ```
    pub fn step<B: Backend>(&self, b: &mut B, x: &B::T, h: &B::T) -> B::T {
        let hs = self.hidden;
        let (wi, wh, bi, bh) = (b.param(self.w_ih), b.param(self.w_hh), b.param(self.b_ih), b.param(self.b_hh));
        let gi = b.matmul(x, &wi);
        let gi = b.add_row(&gi, &bi);
        let gh = b.matmul(h, &wh);
        let gh = b.add_row(&gh, &bh);
        let (ir, iz, inn) = (b.slice_cols(&gi, 0, hs), b.slice_cols(&gi, hs, hs), b.slice_cols(&gi, 2 * hs, hs));
        let (hr, hz, hn) = (b.slice_cols(&gh, 0, hs), b.slice_cols(&gh, hs, hs), b.slice_cols(&gh, 2 * hs, hs));
        let r = b.add(&ir, &hr);
        let r = b.sigmoid(&r);
        let z = b.add(&iz, &hz);
        let z = b.sigmoid(&z);
        let rn = b.mul(&r, &hn);
        let n = b.add(&inn, &rn);
        let n = b.tanh(&n);
        let d = b.sub(h, &n);
        let zd = b.mul(&z, &d);
        b.add(&n, &zd)
    }
}

/// Layer sizes of the actor, critic, encoder and decoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub gru_hidden: usize,
    pub encoder_hidden: Vec<usize>,
    pub latent: usize,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub init_log_std: f64,
}

impl NetConfig {
    /// Full-size networks.
    pub fn full_scale() -> Self {
        NetConfig {
            gru_hidden: 256,
            encoder_hidden: vec![256],
            latent: 24,
            actor_hidden: vec![256, 256],
            critic_hidden: vec![512, 512, 256],
            decoder_hidden: vec![128, 128],
            init_log_std: -1.0,
        }
    }

    /// Reduced sizes that train in minutes on one CPU core.
    pub fn desk() -> Self {
        NetConfig {
            gru_hidden: 32,
            encoder_hidden: vec![32],
            latent: 24,
            actor_hidden: vec![64, 64],
            critic_hidden: vec![64, 64],
            decoder_hidden: vec![32],
            init_log_std: -1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = std::iter::once(self.gru_hidden)
            .chain(std::iter::once(self.latent))
            .chain(self.encoder_hidden.iter().copied())
            .chain(self.actor_hidden.iter().copied())
            .chain(self.critic_hidden.iter().copied())
            .chain(self.decoder_hidden.iter().copied());
        for d in all {
            if d == 0 {
                return Err(Error::Config("network widths must be positive".into()));
            }
        }
        if !self.init_log_std.is_finite() {
            return Err(Error::Config("init_log_std must be finite".into()));
        }
        Ok(())
    }
}

pub const LOG_STD_MIN: f64 = -4.0;
pub const LOG_STD_MAX: f64 = 1.0;

/// Encoder (GRU → MLP → latent), actor, critic and decoder sharing one store.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub cfg: NetConfig,
    pub d_obs: usize,
    pub d_priv: usize,
    pub n_act: usize,
    pub params: ParamStore,
    pub gru: Gru,
    pub encoder: Mlp,
    pub actor: Mlp,
    pub log_std: usize,
    pub critic: Mlp,
    pub decoder: Mlp,
}

fn with_ends(first: usize, hidden: &[usize], last: usize) -> Vec<usize> {
    let mut v = vec![first];
    v.extend_from_slice(hidden);
    v.push(last);
    v
}

impl Model {
    pub fn new<R: Rng + ?Sized>(cfg: NetConfig, d_obs: usize, d_priv: usize, n_act: usize, rng: &mut R) -> Self {
        let mut p = ParamStore::default();
        let gru = Gru::new(&mut p, "encoder.gru", d_obs, cfg.gru_hidden, rng);
        let encoder = Mlp::new(&mut p, "encoder.mlp", &with_ends(cfg.gru_hidden, &cfg.encoder_hidden, cfg.latent), 1.0, rng);
        let actor = Mlp::new(&mut p, "actor", &with_ends(d_obs + cfg.latent, &cfg.actor_hidden, n_act), 0.01, rng);
        let log_std = p.add("actor.log_std", Mat::from_elem((1, n_act), cfg.init_log_std));
        let critic = Mlp::new(&mut p, "critic", &with_ends(d_obs + d_priv, &cfg.critic_hidden, 1), 1.0, rng);
        let decoder = Mlp::new(&mut p, "decoder", &with_ends(cfg.latent, &cfg.decoder_hidden, d_priv), 1.0, rng);
        Model { cfg, d_obs, d_priv, n_act, params: p, gru, encoder, actor, log_std, critic, decoder }
    }

    /// One recurrence: `(latent, h')`.
    pub fn encode_step<B: Backend>(&self, b: &mut B, obs: &B::T, h: &B::T) -> (B::T, B::T) {
        let h2 = self.gru.step(b, obs, h);
        let z = self.encoder.forward(b, &h2);
        (z, h2)
    }

    pub fn actor_mean<B: Backend>(&self, b: &mut B, obs: &B::T, latent: &B::T) -> B::T {
        let x = b.concat_cols(obs, latent);
        self.actor.forward(b, &x)
    }

    /// Critic on `[obs, privileged]`; the second block may be a reconstruction.
    pub fn value<B: Backend>(&self, b: &mut B, obs: &B::T, privileged: &B::T) -> B::T {
        let x = b.concat_cols(obs, privileged);
        self.critic.forward(b, &x)
    }

    pub fn decode<B: Backend>(&self, b: &mut B, latent: &B::T) -> B::T {
        self.decoder.forward(b, latent)
    }

    /// Clamped log standard deviation.
    pub fn log_std_values(&self) -> Vec<f64> {
        self.params.values[self.log_std].iter().map(|x| x.clamp(LOG_STD_MIN, LOG_STD_MAX)).collect()
    }
}
