//! Method × scenario × seed matrices: train (or reload) one policy per method
//! and seed, then evaluate it on every scenario.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::checkpoint::Checkpoint;
use crate::agent::policy::Policy;
use crate::error::{Error, Result};
use crate::eval::{run_scenario, EvalScenario, ScenarioKind};
use crate::randomization::Method;
use crate::trainer::{train_to_dir, TrainConfig, Trainer};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub train: TrainConfig,
    pub methods: Vec<Method>,
    pub scenarios: Vec<ScenarioKind>,
    /// Training seeds; each yields one row per method and scenario.
    pub seeds: Vec<u64>,
    pub episodes: usize,
    pub duration_s: f64,
    /// Evaluation worlds are drawn from this seed for every method, so all
    /// policies face the same terrain, pushes and parameters.
    pub eval_seed: u64,
    /// Forward command per scenario; scenarios not listed use [`default_command`].
    #[serde(default)]
    pub commands: Vec<(ScenarioKind, f64)>,
}

impl SweepConfig {
    pub fn new(train: TrainConfig) -> Self {
        SweepConfig {
            train,
            methods: Method::ALL.to_vec(),
            scenarios: ScenarioKind::ALL.to_vec(),
            seeds: vec![0, 1, 2],
            episodes: 8,
            duration_s: 20.0,
            eval_seed: 1000,
            commands: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.methods.is_empty() || self.scenarios.is_empty() || self.seeds.is_empty() || self.episodes == 0 {
            return Err(Error::Config("sweep needs methods, scenarios, seeds and episodes".into()));
        }
        if !(self.duration_s > 0.0) {
            return Err(Error::Config("sweep duration must be positive".into()));
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let c: SweepConfig = toml::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn command(&self, kind: ScenarioKind) -> f64 {
        self.commands
            .iter()
            .find(|(k, _)| *k == kind)
            .map_or_else(|| default_command(kind, &self.train), |(_, v)| *v)
    }

    pub fn scenario(&self, kind: ScenarioKind) -> EvalScenario {
        let mut s = EvalScenario::new(kind, self.command(kind));
        s.duration_s = self.duration_s;
        s.n_episodes = self.episodes;
        s.seeds = vec![self.eval_seed];
        s
    }
}

/// Widened-gap scenarios use a fixed 0.4 m/s; the others run at the largest
/// trained forward command.
pub fn default_command(kind: ScenarioKind, train: &TrainConfig) -> f64 {
    match kind {
        ScenarioKind::WidenedS1 | ScenarioKind::WidenedS2 => 0.4f64.min(train.task.command_vx.high),
        _ => train.task.command_vx.high,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: Method,
    pub scenario: ScenarioKind,
    pub seed: u64,
    pub success: f64,
    pub rmse_vx: f64,
    pub mean_vx: f64,
    pub drift: f64,
    /// Mean survival time, s.
    pub episode_len: f64,
}

impl SweepRow {
    pub const CSV_HEADER: &'static str = "method,scenario,seed,success,rmse_vx,mean_vx,drift,episode_len";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.method.name(),
            self.scenario.name(),
            self.seed,
            self.success,
            self.rmse_vx,
            self.mean_vx,
            self.drift,
            self.episode_len
        )
    }
}

pub fn to_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from(SweepRow::CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

/// Train under `method` and `seed`, or reload `<out>/<method>_seed<seed>/final.json`
/// when it exists.
pub fn policy_for(cfg: &SweepConfig, method: Method, seed: u64, out: Option<&Path>) -> Result<Policy> {
    let mut train = cfg.train.clone();
    train.task.method = method;
    train.ppo.seed = seed;
    match out {
        Some(dir) => {
            let run = dir.join(format!("{}_seed{seed}", method.name()));
            let ck = run.join("final.json");
            let stored = std::fs::read_to_string(run.join("config.toml")).ok();
            if ck.exists() && stored.as_deref() == Some(train.to_toml_string()?.as_str()) {
                return Checkpoint::load(&ck)?.to_policy();
            }
            train_to_dir(train, &run, |_| {})?.checkpoint().to_policy()
        }
        None => {
            let mut t = Trainer::new(train)?;
            t.run(|_, _| Ok(()))?;
            t.checkpoint().to_policy()
        }
    }
}

/// Rows are ordered method, seed, scenario. `progress` receives each finished row.
pub fn run_sweep(cfg: &SweepConfig, out: Option<&Path>, mut progress: impl FnMut(&SweepRow)) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let mut rows = Vec::with_capacity(cfg.methods.len() * cfg.seeds.len() * cfg.scenarios.len());
    for &method in &cfg.methods {
        for &seed in &cfg.seeds {
            let policy = policy_for(cfg, method, seed, out)?;
            for &kind in &cfg.scenarios {
                let run = run_scenario(&policy, &cfg.scenario(kind))?;
                if run.injection_draws != 0 {
                    return Err(Error::Config(format!("evaluation drew {} training injections", run.injection_draws)));
                }
                let m = run.metrics;
                let row = SweepRow {
                    method,
                    scenario: kind,
                    seed,
                    success: m.success_rate,
                    rmse_vx: m.rmse_vx,
                    mean_vx: m.mean_vx,
                    drift: m.drift_mean,
                    episode_len: m.mean_episode_s,
                };
                progress(&row);
                rows.push(row);
            }
        }
    }
    Ok(rows)
}
