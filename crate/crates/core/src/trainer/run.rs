use std::collections::VecDeque;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::env::{Env, TaskConfig, Termination};
use super::ppo::{compute_advantages, ppo_update, Adam, LossBreakdown, PPOConfig, RolloutBuffer};
use crate::agent::checkpoint::Checkpoint;
use crate::agent::nets::{Model, NetConfig};
use crate::agent::obs::priv_pert_offset;
use crate::agent::policy::Policy;
use crate::agent::tape::Mat;
use crate::error::{Error, Result};
use crate::agent::control::ActionMode;
use crate::randomization::{erfi_sigmas_for_rms, perturbation_gate, DRConfig, Method, Preset};

/// Episodes in the rolling return window.
pub const RETURN_WINDOW: usize = 100;

/// Complete training configuration; the `train` subcommand reads it from TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub task: TaskConfig,
    pub ppo: PPOConfig,
    pub net: NetConfig,
}

impl TrainConfig {
    /// Torque mode, reference randomization, desk networks and PPO settings.
    pub fn default_for(method: Method) -> Self {
        let task = TaskConfig::new(method, ActionMode::Torque, DRConfig::preset(Preset::Reference));
        TrainConfig { task, ppo: PPOConfig::desk(), net: NetConfig::desk() }
    }

    pub fn validate(&self) -> Result<()> {
        self.task.validate()?;
        self.ppo.validate()?;
        self.net.validate()
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let c: TrainConfig = toml::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }
}

/// One row of the per-update log.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateLog {
    pub update: usize,
    /// Mean raw return over the last finished episodes (rolling window).
    pub mean_return: f64,
    /// Same window, measured in the scaled and clipped reward the optimizer sees.
    pub mean_train_return: f64,
    /// Mean raw per-tick reward within this rollout.
    pub mean_step_reward: f64,
    pub mean_episode_len: f64,
    pub episodes: usize,
    pub link_contact: usize,
    pub height: usize,
    pub diverged: usize,
    pub truncated: usize,
    pub losses: LossBreakdown,
}

impl UpdateLog {
    pub fn csv_header() -> String {
        format!(
            "update,mean_return,mean_train_return,mean_step_reward,mean_episode_len,episodes,term_link_contact,term_height,term_diverged,truncated,{}",
            LossBreakdown::CSV_HEADER
        )
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.update,
            self.mean_return,
            self.mean_train_return,
            self.mean_step_reward,
            self.mean_episode_len,
            self.episodes,
            self.link_contact,
            self.height,
            self.diverged,
            self.truncated,
            self.losses.csv_row()
        )
    }
}

/// Root-mean-square of the joint injection from freshly sampled perturbation
/// networks, measured over short zero-action rollouts. ERFI training uses it
/// so both regimes inject comparable torque.
pub fn calibrate_erfi(task: &TaskConfig, seed: u64) -> Result<(f64, f64)> {
    let mut task = task.clone();
    task.method = Method::Proposed;
    task.training_perturbations = true;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x00e7_f1ca_11b7);
    let (mut sq, mut n) = (0.0, 0usize);
    for _ in 0..8 {
        let mut env = Env::new(task.clone(), true, rng.random())?;
        let nj = env.n_joints();
        for _ in 0..250 {
            let r = env.step(&vec![0.0; nj], false)?;
            sq += r.injection.tau_pert.iter().map(|x| x * x).sum::<f64>();
            n += nj;
        }
    }
    Ok(erfi_sigmas_for_rms((sq / n as f64).sqrt()))
}

fn push_window(w: &mut VecDeque<f64>, x: f64) {
    if w.len() == RETURN_WINDOW {
        w.pop_front();
    }
    w.push_back(x);
}

/// NaN until the first episode finishes.
fn window_mean(w: &VecDeque<f64>) -> f64 {
    if w.is_empty() {
        f64::NAN
    } else {
        w.iter().sum::<f64>() / w.len() as f64
    }
}

pub struct Trainer {
    pub cfg: TrainConfig,
    pub policy: Policy,
    pub envs: Vec<Env>,
    pub adam: Adam,
    pub update: usize,
    pub log: Vec<UpdateLog>,
    hidden: Mat,
    starts: Vec<bool>,
    rng: ChaCha8Rng,
    recent: VecDeque<f64>,
    recent_train: VecDeque<f64>,
    train_returns: Vec<f64>,
}

impl Trainer {
    pub fn new(mut cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let seed = cfg.ppo.seed;
        if cfg.task.method == Method::Erfi && cfg.task.erfi_sigmas.is_none() {
            cfg.task.erfi_sigmas = Some(calibrate_erfi(&cfg.task, seed)?);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gate = perturbation_gate(cfg.ppo.n_envs);
        let envs = gate
            .iter()
            .map(|g| Env::new(cfg.task.clone(), *g, rng.random()))
            .collect::<Result<Vec<_>>>()?;
        let (d_obs, d_priv, nj) = (envs[0].obs_dim(), envs[0].priv_dim(), envs[0].n_joints());
        let model = Model::new(cfg.net.clone(), d_obs, d_priv, nj, &mut rng);
        let control = envs[0].control.clone();
        let policy = Policy::new(model, control);
        let adam = Adam::new(cfg.ppo.learning_rate, policy.model.params.values.iter().map(|m| m.len()));
        let hidden = policy.zero_hidden(cfg.ppo.n_envs);
        let e = cfg.ppo.n_envs;
        Ok(Trainer {
            starts: vec![true; cfg.ppo.n_envs],
            cfg,
            policy,
            envs,
            adam,
            update: 0,
            log: Vec::new(),
            hidden,
            rng,
            recent: VecDeque::with_capacity(RETURN_WINDOW),
            recent_train: VecDeque::with_capacity(RETURN_WINDOW),
            train_returns: vec![0.0; e],
        })
    }

    pub fn method(&self) -> Method {
        self.cfg.task.method
    }

    fn gather(&self, f: impl Fn(&Env) -> &[f64]) -> Vec<Vec<f64>> {
        self.envs.iter().map(|e| f(e).to_vec()).collect()
    }

    /// Step every environment for one horizon with the current policy.
    pub fn collect(&mut self) -> Result<(RolloutBuffer, UpdateLog)> {
        let (e, h) = (self.cfg.ppo.n_envs, self.cfg.ppo.horizon);
        let scale = self.cfg.ppo.reward_scale;
        let clip = self.cfg.ppo.reward_clip;
        let mut buf = RolloutBuffer {
            n_envs: e,
            horizon: h,
            obs: Vec::with_capacity(h),
            privileged: Vec::with_capacity(h),
            hidden: Vec::with_capacity(h),
            latent: Vec::with_capacity(h),
            actions: Vec::with_capacity(h),
            log_probs: Vec::with_capacity(h),
            values: Vec::with_capacity(h),
            rewards: Vec::with_capacity(h),
            starts: Vec::with_capacity(h),
            terminated: Vec::with_capacity(h),
            truncated: Vec::with_capacity(h),
            bootstrap: Vec::with_capacity(h),
            last_values: vec![0.0; e],
            perturbed: self.envs.iter().map(|env| env.gated).collect(),
        };
        let mut log = UpdateLog { update: self.update, ..Default::default() };
        let (mut raw_obs, mut raw_priv) = (Vec::with_capacity(h * e), Vec::with_capacity(h * e));
        let (mut reward_sum, mut len_sum) = (0.0, 0usize);
        for _ in 0..h {
            let obs_raw = self.gather(Env::observation);
            let priv_raw = self.gather(Env::privileged);
            let obs_n = self.policy.normalize_obs_rows(&obs_raw);
            let priv_n = self.policy.normalize_priv_rows(&priv_raw);
            for (i, s) in self.starts.iter().enumerate() {
                if *s {
                    self.hidden.row_mut(i).fill(0.0);
                }
            }
            let step = self.policy.actor_step(&obs_n, &self.hidden, Some(&mut self.rng));
            let values = self.policy.value(&obs_n, &priv_n);
            let mut rewards = vec![0.0; e];
            let mut term = vec![false; e];
            let mut trunc = vec![false; e];
            let mut boot = vec![0.0; e];
            let mut next_starts = vec![false; e];
            let mut finals = Vec::new();
            for (i, env) in self.envs.iter_mut().enumerate() {
                let a = step.action.row(i).to_vec();
                let r = env.step(&a, false)?;
                rewards[i] = (r.reward * scale).clamp(-clip, clip);
                reward_sum += r.reward;
                self.train_returns[i] += rewards[i];
                if r.termination.ends_episode() {
                    next_starts[i] = true;
                    push_window(&mut self.recent, env.last_return);
                    push_window(&mut self.recent_train, std::mem::take(&mut self.train_returns[i]));
                    log.episodes += 1;
                    len_sum += env.last_len;
                    match r.termination {
                        Termination::LinkContact => log.link_contact += 1,
                        Termination::Height => log.height += 1,
                        Termination::Diverged => log.diverged += 1,
                        Termination::Truncated => log.truncated += 1,
                        Termination::Continue => {}
                    }
                }
                term[i] = r.termination.is_terminal();
                if r.termination == Termination::Truncated {
                    trunc[i] = true;
                    if let Some(fo) = r.final_obs {
                        finals.push((i, fo));
                    }
                }
            }
            if !finals.is_empty() {
                let o: Vec<Vec<f64>> = finals.iter().map(|(_, (o, _))| o.clone()).collect();
                let p: Vec<Vec<f64>> = finals.iter().map(|(_, (_, p))| p.clone()).collect();
                let v = self.policy.value(&self.policy.normalize_obs_rows(&o), &self.policy.normalize_priv_rows(&p));
                for ((i, _), v) in finals.iter().zip(v) {
                    boot[*i] = v;
                }
            }
            buf.obs.push(obs_n);
            buf.privileged.push(priv_n);
            buf.hidden.push(self.hidden.clone());
            buf.latent.push(step.latent);
            buf.actions.push(step.action);
            buf.log_probs.push(step.log_prob);
            buf.values.push(values);
            buf.rewards.push(rewards);
            buf.starts.push(self.starts.clone());
            buf.terminated.push(term);
            buf.truncated.push(trunc);
            buf.bootstrap.push(boot);
            raw_obs.extend(obs_raw);
            raw_priv.extend(priv_raw);
            self.hidden = step.hidden;
            self.starts = next_starts;
        }
        let obs_raw = self.gather(Env::observation);
        let priv_raw = self.gather(Env::privileged);
        buf.last_values = self
            .policy
            .value(&self.policy.normalize_obs_rows(&obs_raw), &self.policy.normalize_priv_rows(&priv_raw));
        self.policy.obs_norm.update(&raw_obs);
        self.policy.priv_norm.update(&raw_priv);
        log.mean_step_reward = reward_sum / (h * e) as f64;
        log.mean_episode_len = if log.episodes > 0 { len_sum as f64 / log.episodes as f64 } else { 0.0 };
        log.mean_return = window_mean(&self.recent);
        log.mean_train_return = window_mean(&self.recent_train);
        Ok((buf, log))
    }

    /// Collect, then optimize. Returns the logged row.
    pub fn train_update(&mut self) -> Result<UpdateLog> {
        let (buf, mut log) = self.collect()?;
        let (adv, ret) = compute_advantages(&buf, self.cfg.ppo.gamma, self.cfg.ppo.lambda);
        log.losses = ppo_update(&mut self.policy, &mut self.adam, &buf, &adv, &ret, &self.cfg.ppo, &mut self.rng)?;
        if let Some(name) = self.policy.model.params.all_finite() {
            return Err(Error::NonFiniteGradient(name.to_string()));
        }
        self.update += 1;
        self.log.push(log.clone());
        Ok(log)
    }

    /// Run the configured number of updates, calling `on_update` after each.
    pub fn run(&mut self, mut on_update: impl FnMut(&Trainer, &UpdateLog) -> Result<()>) -> Result<()> {
        while self.update < self.cfg.ppo.total_updates {
            let log = self.train_update()?;
            on_update(self, &log)?;
        }
        Ok(())
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut policy = self.policy.clone();
        policy.freeze();
        Checkpoint::from_policy(&policy, self.method(), self.update, self.cfg.ppo.seed)
    }

    /// Privileged-vector slice that echoes the injection, for inspection.
    pub fn injection_block(&self, env: usize) -> &[f64] {
        let off = priv_pert_offset(self.envs[env].n_joints());
        &self.envs[env].privileged()[off..off + self.envs[env].n_joints() + 2]
    }
}

/// Train with `cfg`, writing `updates.csv`, periodic `checkpoint_<update>.json`
/// files and `final.json` into `out`.
pub fn train_to_dir(cfg: TrainConfig, out: &Path, mut on_update: impl FnMut(&UpdateLog)) -> Result<Trainer> {
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("config.toml"), cfg.to_toml_string()?)?;
    let mut csv = std::io::BufWriter::new(std::fs::File::create(out.join("updates.csv"))?);
    writeln!(csv, "{}", UpdateLog::csv_header())?;
    let every = cfg.ppo.checkpoint_every;
    let mut trainer = Trainer::new(cfg)?;
    trainer.run(|t, log| {
        writeln!(csv, "{}", log.csv_row())?;
        csv.flush()?;
        if every > 0 && t.update % every == 0 {
            t.checkpoint().save(&out.join(format!("checkpoint_{}.json", t.update)))?;
        }
        on_update(log);
        Ok(())
    })?;
    trainer.checkpoint().save(&out.join("final.json"))?;
    Ok(trainer)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(method: Method, seed: u64) -> TrainConfig {
        let mut cfg = TrainConfig::default_for(method);
        cfg.ppo.n_envs = 4;
        cfg.ppo.minibatch_envs = 2;
        cfg.ppo.horizon = 8;
        cfg.ppo.total_updates = 2;
        cfg.ppo.seed = seed;
        cfg
    }

    #[test]
    fn half_the_slots_are_perturbed() {
        for (n, want) in [(2, 1), (5, 3)] {
            let mut cfg = small(Method::Proposed, 0);
            cfg.ppo.n_envs = n;
            cfg.ppo.minibatch_envs = 1;
            let mut tr = Trainer::new(cfg).unwrap();
            let (buf, _) = tr.collect().unwrap();
            assert_eq!(buf.perturbed.iter().filter(|p| **p).count(), want);
        }
    }

    #[test]
    fn fixed_seed_reproduces_buffers_and_losses() {
        let run = || {
            let mut tr = Trainer::new(small(Method::Proposed, 9)).unwrap();
            let (buf, _) = tr.collect().unwrap();
            tr.run(|_, _| Ok(())).unwrap();
            (buf, tr.log.iter().map(UpdateLog::csv_row).collect::<Vec<_>>())
        };
        let (a, la) = run();
        let (b, lb) = run();
        assert_eq!(a, b);
        assert_eq!(la, lb);
        let (c, _) = {
            let mut tr = Trainer::new(small(Method::Proposed, 10)).unwrap();
            (tr.collect().unwrap().0, ())
        };
        assert_ne!(a.actions, c.actions);
    }

    #[test]
    fn erfi_training_calibrates_sigmas() {
        let tr = Trainer::new(small(Method::Erfi, 1)).unwrap();
        let (b, n) = tr.cfg.task.erfi_sigmas.unwrap();
        assert!(b > 0.0 && n > 0.0);
    }

    #[test]
    fn config_toml_round_trip() {
        let cfg = TrainConfig::default_for(Method::Dr);
        assert_eq!(TrainConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap(), cfg);
        assert!(TrainConfig::from_toml_str("nonsense = 1").is_err());
    }

    #[test]
    fn train_to_dir_writes_log_and_checkpoints() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(Method::Dr, 2);
        cfg.ppo.checkpoint_every = 1;
        let mut rows = 0;
        let tr = train_to_dir(cfg, dir.path(), |_| rows += 1).unwrap();
        assert_eq!(rows, 2);
        let csv = std::fs::read_to_string(dir.path().join("updates.csv")).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0].split(',').count(), lines[1].split(',').count());
        for f in ["checkpoint_1.json", "checkpoint_2.json", "final.json", "config.toml"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let ck = Checkpoint::load(&dir.path().join("final.json")).unwrap();
        assert_eq!(ck.update, tr.update);
        ck.to_policy().unwrap();
    }
}
