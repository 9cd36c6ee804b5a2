//! Clipped-surrogate PPO over a recurrent encoder, with reconstruction and
//! input-gradient penalties.

use std::rc::Rc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agent::backend::Record;
use crate::agent::policy::{Policy, LN_2PI};
use crate::agent::tape::{Mat, Tape, Var};
use crate::agent::nets::{LOG_STD_MAX, LOG_STD_MIN};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PPOConfig {
    pub n_envs: usize,
    pub horizon: usize,
    pub epochs: usize,
    /// Environments per minibatch; each minibatch spans the full horizon.
    pub minibatch_envs: usize,
    pub clip_eps: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub learning_rate: f64,
    pub lambda_grad: f64,
    /// Samples per minibatch on which the input-gradient penalty is evaluated.
    pub grad_samples: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub recon_coef: f64,
    pub latent_reg: f64,
    pub max_grad_norm: f64,
    pub total_updates: usize,
    /// Multiplier applied to raw rewards before clipping.
    pub reward_scale: f64,
    /// Scaled per-tick rewards are clipped to `±reward_clip`.
    pub reward_clip: f64,
    pub checkpoint_every: usize,
    pub seed: u64,
}

impl PPOConfig {
    /// Desk-scale defaults.
    pub fn desk() -> Self {
        PPOConfig {
            n_envs: 64,
            horizon: 256,
            epochs: 4,
            minibatch_envs: 16,
            clip_eps: 0.2,
            gamma: 0.99,
            lambda: 0.95,
            learning_rate: 1e-3,
            lambda_grad: 0.002,
            grad_samples: 8,
            entropy_coef: 0.0,
            value_coef: 0.5,
            recon_coef: 1.0,
            latent_reg: 1e-4,
            max_grad_norm: 1.0,
            total_updates: 1000,
            reward_scale: 0.01,
            reward_clip: 10.0,
            checkpoint_every: 100,
            seed: 0,
        }
    }

    /// Full-scale reference values: 4096 environments × 24 steps per update, 10,000 updates.
    pub fn full_scale() -> Self {
        PPOConfig { n_envs: 4096, horizon: 24, minibatch_envs: 1024, total_updates: 10_000, learning_rate: 3e-4, ..Self::desk() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return bad("clip_eps must lie in (0, 1)");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) || !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return bad("gamma and lambda must lie in (0, 1]");
        }
        if self.n_envs == 0 || self.horizon == 0 || self.epochs == 0 {
            return bad("n_envs, horizon and epochs must be positive");
        }
        if self.minibatch_envs == 0 || self.minibatch_envs > self.n_envs {
            return bad("minibatch_envs must lie in [1, n_envs]");
        }
        if !(self.learning_rate > 0.0) || !(self.max_grad_norm > 0.0) || !(self.reward_clip > 0.0) {
            return bad("learning_rate, max_grad_norm and reward_clip must be positive");
        }
        if self.lambda_grad < 0.0 || self.entropy_coef < 0.0 || self.value_coef < 0.0 || self.recon_coef < 0.0 {
            return bad("loss coefficients must be non-negative");
        }
        Ok(())
    }
}

/// Step-major storage: index `[t][env]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RolloutBuffer {
    pub n_envs: usize,
    pub horizon: usize,
    /// Normalized policy observations, one `[n_envs, d_obs]` block per step.
    pub obs: Vec<Mat>,
    /// Normalized privileged vectors.
    pub privileged: Vec<Mat>,
    /// Encoder hidden state fed at each step; zero where an episode starts.
    pub hidden: Vec<Mat>,
    pub latent: Vec<Mat>,
    pub actions: Vec<Mat>,
    pub log_probs: Vec<Vec<f64>>,
    pub values: Vec<Vec<f64>>,
    /// Scaled and clipped rewards.
    pub rewards: Vec<Vec<f64>>,
    /// An episode starts at this step.
    pub starts: Vec<Vec<bool>>,
    pub terminated: Vec<Vec<bool>>,
    pub truncated: Vec<Vec<bool>>,
    /// Value of the post-truncation observation; zero elsewhere.
    pub bootstrap: Vec<Vec<f64>>,
    /// Value of the observation following the last step.
    pub last_values: Vec<f64>,
    /// Slot carries a training injection.
    pub perturbed: Vec<bool>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.n_envs * self.horizon
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// GAE(λ) for one environment's sequence. Terminated steps bootstrap with zero,
/// truncated steps with `bootstrap[t]`; neither carries the trace across.
#[allow(clippy::too_many_arguments)]
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    terminated: &[bool],
    truncated: &[bool],
    bootstrap: &[f64],
    last_value: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let (next_value, carry) = if terminated[t] {
            (0.0, 0.0)
        } else if truncated[t] {
            (bootstrap[t], 0.0)
        } else if t + 1 == n {
            (last_value, 0.0)
        } else {
            (values[t + 1], running)
        };
        let delta = rewards[t] + gamma * next_value - values[t];
        running = delta + gamma * lambda * carry;
        adv[t] = running;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Advantages and returns for the whole buffer, `[t][env]`; advantages are
/// normalized over the batch.
pub fn compute_advantages(buf: &RolloutBuffer, gamma: f64, lambda: f64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let (h, e) = (buf.horizon, buf.n_envs);
    let mut adv = vec![vec![0.0; e]; h];
    let mut ret = vec![vec![0.0; e]; h];
    for env in 0..e {
        let col = |m: &Vec<Vec<f64>>| m.iter().map(|r| r[env]).collect::<Vec<_>>();
        let colb = |m: &Vec<Vec<bool>>| m.iter().map(|r| r[env]).collect::<Vec<_>>();
        let (a, r) = gae(
            &col(&buf.rewards),
            &col(&buf.values),
            &colb(&buf.terminated),
            &colb(&buf.truncated),
            &col(&buf.bootstrap),
            buf.last_values[env],
            gamma,
            lambda,
        );
        for t in 0..h {
            adv[t][env] = a[t];
            ret[t][env] = r[t];
        }
    }
    normalize_advantages(&mut adv);
    (adv, ret)
}

pub fn normalize_advantages(adv: &mut [Vec<f64>]) {
    let n = adv.iter().map(Vec::len).sum::<usize>() as f64;
    if n < 2.0 {
        return;
    }
    let mean = adv.iter().flatten().sum::<f64>() / n;
    let var = adv.iter().flatten().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt() + 1e-8;
    adv.iter_mut().flatten().for_each(|a| *a = (*a - mean) / std);
}

/// Adam with bias correction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64, shapes: impl Iterator<Item = usize>) -> Self {
        let m: Vec<Vec<f64>> = shapes.map(|n| vec![0.0; n]).collect();
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, v: m.clone(), m }
    }

    pub fn step(&mut self, params: &mut [Mat], grads: &[Mat]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for (i, (p, g)) in p.iter_mut().zip(g.iter()).enumerate() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                *p -= self.lr * (m[i] / bc1) / ((v[i] / bc2).sqrt() + self.eps);
            }
        }
    }
}

/// Minibatch-averaged loss components of one update.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub recon: f64,
    pub grad_penalty: f64,
    pub total: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub grad_norm: f64,
    /// Minibatches rejected for a non-finite loss or gradient.
    pub skipped: usize,
}

impl LossBreakdown {
    pub const CSV_HEADER: &'static str =
        "loss_policy,loss_value,entropy,loss_recon,loss_grad,loss_total,approx_kl,clip_fraction,grad_norm,skipped";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.policy,
            self.value,
            self.entropy,
            self.recon,
            self.grad_penalty,
            self.total,
            self.approx_kl,
            self.clip_fraction,
            self.grad_norm,
            self.skipped
        )
    }
}

fn rows_of(m: &Mat, idx: &[usize]) -> Mat {
    m.select(ndarray::Axis(0), idx)
}

fn column(values: &[f64]) -> Mat {
    Mat::from_shape_vec((values.len(), 1), values.to_vec()).expect("length matches")
}

/// `Σ_j log N(a_j; μ_j, σ_j)` per row, as an `[n, 1]` column.
pub fn log_prob_rows(t: &mut Tape, actions: Var, mean: Var, log_std: Var) -> Var {
    let (rows, cols) = t.value(actions).dim();
    let ls = t.broadcast_rows(log_std, rows);
    let neg = t.scale(ls, -1.0);
    let inv = t.exp(neg);
    let d = t.sub(actions, mean);
    let z = t.mul(d, inv);
    let z2 = t.square(z);
    let q = t.scale(z2, -0.5);
    let lp = t.sub(q, ls);
    let s = t.sum_cols(lp);
    t.affine(s, 1.0, -0.5 * LN_2PI * cols as f64)
}

/// Mean squared Frobenius norm of `∂μ/∂obs` over the rows of `obs`, with the
/// previous hidden state held fixed.
fn input_gradient_penalty(t: &mut Tape, policy: &Policy, vars: &[Var], obs: &Mat, hidden: &Mat) -> Var {
    let n = obs.nrows();
    let x = t.leaf(obs.clone());
    let h = t.leaf(hidden.clone());
    let model = &policy.model;
    let mean = {
        let mut rec = Record { tape: t, vars };
        let (z, _) = model.encode_step(&mut rec, &x, &h);
        model.actor_mean(&mut rec, &x, &z)
    };
    let mut acc: Option<Var> = None;
    for j in 0..model.n_act {
        let mut onehot = Mat::zeros((n, model.n_act));
        onehot.column_mut(j).fill(1.0);
        let picked = t.mul_const(mean, Rc::new(onehot));
        let s = t.sum(picked);
        let g = t.grad(s, &[x])[0];
        let g2 = t.square(g);
        let sq = t.sum(g2);
        acc = Some(match acc {
            Some(a) => t.add(a, sq),
            None => sq,
        });
    }
    let total = acc.expect("at least one action");
    t.scale(total, 1.0 / n as f64)
}

/// Run `epochs` passes of minibatch PPO over `buf`. Minibatches whose loss or
/// gradient is non-finite are skipped and counted; parameters stay untouched
/// for them.
pub fn ppo_update<R: Rng + ?Sized>(
    policy: &mut Policy,
    adam: &mut Adam,
    buf: &RolloutBuffer,
    advantages: &[Vec<f64>],
    returns: &[Vec<f64>],
    cfg: &PPOConfig,
    rng: &mut R,
) -> Result<LossBreakdown> {
    let mut acc = LossBreakdown::default();
    let mut n_mb = 0usize;
    let mut envs: Vec<usize> = (0..buf.n_envs).collect();
    for _ in 0..cfg.epochs {
        envs.shuffle(rng);
        for group in envs.chunks(cfg.minibatch_envs) {
            let samples: Vec<(usize, usize)> = (0..cfg.grad_samples.min(buf.len()))
                .map(|_| (rng.random_range(0..buf.horizon), group[rng.random_range(0..group.len())]))
                .collect();
            match minibatch_step(policy, adam, buf, advantages, returns, cfg, group, &samples) {
                Ok(l) => {
                    acc.policy += l.policy;
                    acc.value += l.value;
                    acc.entropy += l.entropy;
                    acc.recon += l.recon;
                    acc.grad_penalty += l.grad_penalty;
                    acc.total += l.total;
                    acc.approx_kl += l.approx_kl;
                    acc.clip_fraction += l.clip_fraction;
                    acc.grad_norm += l.grad_norm;
                    n_mb += 1;
                }
                Err(Error::NonFiniteLoss(_) | Error::NonFiniteGradient(_)) => acc.skipped += 1,
                Err(e) => return Err(e),
            }
        }
    }
    if n_mb > 0 {
        let k = n_mb as f64;
        for f in [
            &mut acc.policy,
            &mut acc.value,
            &mut acc.entropy,
            &mut acc.recon,
            &mut acc.grad_penalty,
            &mut acc.total,
            &mut acc.approx_kl,
            &mut acc.clip_fraction,
            &mut acc.grad_norm,
        ] {
            *f /= k;
        }
    }
    Ok(acc)
}

#[allow(clippy::too_many_arguments)]
fn minibatch_step(
    policy: &mut Policy,
    adam: &mut Adam,
    buf: &RolloutBuffer,
    advantages: &[Vec<f64>],
    returns: &[Vec<f64>],
    cfg: &PPOConfig,
    group: &[usize],
    grad_samples: &[(usize, usize)],
) -> Result<LossBreakdown> {
    let model = &policy.model;
    let mut t = Tape::new();
    let vars: Vec<Var> = model.params.values.iter().map(|m| t.leaf(m.clone())).collect();

    // built first so its inner gradients only walk a short tape
    let grad_pen = if cfg.lambda_grad > 0.0 && !grad_samples.is_empty() {
        let obs = Mat::from_shape_fn((grad_samples.len(), model.d_obs), |(i, c)| {
            let (step, env) = grad_samples[i];
            buf.obs[step][[env, c]]
        });
        let hid = Mat::from_shape_fn((grad_samples.len(), model.cfg.gru_hidden), |(i, c)| {
            let (step, env) = grad_samples[i];
            buf.hidden[step][[env, c]]
        });
        Some(input_gradient_penalty(&mut t, policy, &vars, &obs, &hid))
    } else {
        None
    };

    let b = group.len();
    let mut latents = Vec::with_capacity(buf.horizon);
    let mut h = t.leaf(rows_of(&buf.hidden[0], group));
    for step in 0..buf.horizon {
        if step > 0 {
            let starts: Vec<usize> = group.iter().enumerate().filter(|(_, e)| buf.starts[step][**e]).map(|(i, _)| i).collect();
            if !starts.is_empty() {
                let mut mask = Mat::ones((b, model.cfg.gru_hidden));
                for i in starts {
                    mask.row_mut(i).fill(0.0);
                }
                h = t.mul_const(h, Rc::new(mask));
            }
        }
        let x = t.leaf(rows_of(&buf.obs[step], group));
        let mut rec = Record { tape: &mut t, vars: &vars };
        let (z, h2) = model.encode_step(&mut rec, &x, &h);
        latents.push(z);
        h = h2;
    }
    let stack = |per_step: &[Mat]| {
        let views: Vec<Mat> = per_step.iter().map(|m| rows_of(m, group)).collect();
        let v: Vec<_> = views.iter().map(|m| m.view()).collect();
        ndarray::concatenate(ndarray::Axis(0), &v).expect("consistent widths")
    };
    let pick = |m: &[Vec<f64>]| -> Vec<f64> { m.iter().flat_map(|row| group.iter().map(|e| row[*e])).collect() };

    let obs_all = t.leaf(stack(&buf.obs));
    let priv_all = t.leaf(stack(&buf.privileged));
    let act_all = t.leaf(stack(&buf.actions));
    let z_all = t.stack_rows(&latents);
    let n = (b * buf.horizon) as f64;

    let (mean, value, recon) = {
        let mut rec = Record { tape: &mut t, vars: &vars };
        let mean = model.actor_mean(&mut rec, &obs_all, &z_all);
        let value = model.value(&mut rec, &obs_all, &priv_all);
        let recon = model.decode(&mut rec, &z_all);
        (mean, value, recon)
    };
    let log_std = t.clamp(vars[model.log_std], LOG_STD_MIN, LOG_STD_MAX);
    let logp = log_prob_rows(&mut t, act_all, mean, log_std);
    let old = t.leaf(column(&pick(&buf.log_probs)));
    let diff = t.sub(logp, old);
    let ratio = t.exp(diff);
    let adv = column(&pick(advantages));
    let s1 = t.mul_const(ratio, Rc::new(adv.clone()));
    let clipped = t.clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
    let s2 = t.mul_const(clipped, Rc::new(adv));
    let surr = t.min(s1, s2);
    let surr_mean = t.mean(surr);
    let l_pi = t.scale(surr_mean, -1.0);

    let ret = t.leaf(column(&pick(returns)));
    let verr = t.sub(value, ret);
    let verr2 = t.square(verr);
    let l_v = t.mean(verr2);

    let ent_sum = t.sum(log_std);
    let entropy = t.affine(ent_sum, 1.0, 0.5 * (1.0 + LN_2PI) * model.n_act as f64);

    let rerr = t.sub(recon, priv_all);
    let rerr2 = t.square(rerr);
    let mse = t.mean(rerr2);
    let z2 = t.square(z_all);
    let zsum = t.sum(z2);
    let zreg = t.scale(zsum, cfg.latent_reg / n);
    let l_recon = t.add(mse, zreg);

    let mut total = l_pi;
    let vterm = t.scale(l_v, cfg.value_coef);
    total = t.add(total, vterm);
    let eterm = t.scale(entropy, -cfg.entropy_coef);
    total = t.add(total, eterm);
    let rterm = t.scale(l_recon, cfg.recon_coef);
    total = t.add(total, rterm);
    if let Some(g) = grad_pen {
        let gterm = t.scale(g, cfg.lambda_grad);
        total = t.add(total, gterm);
    }
    let total_value = t.scalar(total);
    if !total_value.is_finite() {
        return Err(Error::NonFiniteLoss(format!("minibatch total {total_value}")));
    }

    let grads_v = t.grad(total, &vars);
    let mut grads: Vec<Mat> = grads_v.iter().map(|g| t.value(*g).clone()).collect();
    for (g, name) in grads.iter().zip(&model.params.names) {
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteGradient(name.clone()));
        }
    }
    let norm = grads.iter().flat_map(|g| g.iter()).map(|x| x * x).sum::<f64>().sqrt();
    if norm > cfg.max_grad_norm {
        let k = cfg.max_grad_norm / norm;
        grads.iter_mut().for_each(|g| g.mapv_inplace(|x| x * k));
    }

    let ratio_v = t.value(ratio);
    let diff_v = t.value(diff);
    let approx_kl = diff_v.iter().zip(ratio_v.iter()).map(|(d, r)| (r - 1.0) - d).sum::<f64>() / n;
    let clip_fraction = ratio_v.iter().filter(|r| (**r - 1.0).abs() > cfg.clip_eps).count() as f64 / n;
    let out = LossBreakdown {
        policy: t.scalar(l_pi),
        value: t.scalar(l_v),
        entropy: t.scalar(entropy),
        recon: t.scalar(l_recon),
        grad_penalty: grad_pen.map_or(0.0, |g| t.scalar(g)),
        total: total_value,
        approx_kl,
        clip_fraction,
        grad_norm: norm,
        skipped: 0,
    };
    adam.step(&mut policy.model.params.values, &grads);
    Ok(out)
}
