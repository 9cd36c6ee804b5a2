//! Test-time scenarios, trajectory logs and metrics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::policy::Policy;
use crate::dynamics::CONTROL_DT;
use crate::error::{Error, Result};
use crate::randomization::{DRConfig, Method, Preset, Range};
use crate::trainer::env::{Env, TaskConfig, Termination, TerrainSpec, WorldOverrides};

/// Joint stiffness of the full-size test, N·m/rad.
pub const REFERENCE_JOINT_STIFFNESS: f64 = 250.0;
/// Torque-limit ratio between the desk biped (100 N·m) and the full-size robot (300 N·m).
pub const DESK_TORQUE_RATIO: f64 = 100.0 / 300.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Nominal,
    MaxDr,
    JointStiffness,
    SoftContact,
    RoughTerrain,
    FootMod,
    WidenedS1,
    WidenedS2,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 8] = [
        ScenarioKind::Nominal,
        ScenarioKind::MaxDr,
        ScenarioKind::JointStiffness,
        ScenarioKind::SoftContact,
        ScenarioKind::RoughTerrain,
        ScenarioKind::FootMod,
        ScenarioKind::WidenedS1,
        ScenarioKind::WidenedS2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Nominal => "nominal",
            ScenarioKind::MaxDr => "max_dr",
            ScenarioKind::JointStiffness => "joint_stiffness",
            ScenarioKind::SoftContact => "soft_contact",
            ScenarioKind::RoughTerrain => "rough_terrain",
            ScenarioKind::FootMod => "foot_mod",
            ScenarioKind::WidenedS1 => "widened_s1",
            ScenarioKind::WidenedS2 => "widened_s2",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == name)
            .ok_or_else(|| Error::Config(format!("unknown scenario '{name}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CommandProfile {
    Constant { vx: f64 },
    /// Linear from `from` to `to` over `ramp_s`, then held.
    Ramp { from: f64, to: f64, ramp_s: f64 },
}

impl CommandProfile {
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            CommandProfile::Constant { vx } => vx,
            CommandProfile::Ramp { from, to, ramp_s } => {
                let a = if ramp_s > 0.0 { (t / ramp_s).clamp(0.0, 1.0) } else { 1.0 };
                from + a * (to - from)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalScenario {
    pub kind: ScenarioKind,
    /// World distribution the episodes are drawn from.
    pub dr: DRConfig,
    pub overrides: WorldOverrides,
    pub command: CommandProfile,
    pub duration_s: f64,
    pub n_episodes: usize,
    pub seeds: Vec<u64>,
    /// Full-size stiffness and the desk value actually applied, when relevant.
    pub stiffness_reference: Option<(f64, f64)>,
}

/// Reference-preset noise, delay and pushes with every physical range pinned to nominal.
pub fn nominal_world() -> DRConfig {
    let mut dr = DRConfig::preset(Preset::Reference);
    dr.preset = Preset::Custom;
    dr.friction_scale = Range::fixed(1.0);
    dr.mass_scale = Range::fixed(1.0);
    dr.com_offset = Range::fixed(0.0);
    dr.armature_scale = Range::fixed(1.0);
    dr.damping_add = Range::fixed(0.0);
    dr.kp_scale = Range::fixed(1.0);
    dr.kd_scale = Range::fixed(1.0);
    dr.motor_scale = Range::fixed(1.0);
    dr.delay_ms = Range::fixed(0.0);
    dr
}

/// Training ranges widened by 10 % with friction set to `[0.7, 1.3]`.
pub fn widened_world() -> DRConfig {
    let mut dr = DRConfig::preset(Preset::Reference).widened(1.1);
    dr.friction_scale = Range::new(0.7, 1.3);
    dr
}

pub fn rough_terrain() -> TerrainSpec {
    TerrainSpec { amplitude: 0.015, smoothing_sigma: 3.0, extent: 60.0 }
}

impl EvalScenario {
    pub fn new(kind: ScenarioKind, vx: f64) -> Self {
        let mut s = EvalScenario {
            kind,
            dr: nominal_world(),
            overrides: WorldOverrides::default(),
            command: CommandProfile::Constant { vx },
            duration_s: 20.0,
            n_episodes: 16,
            seeds: vec![0],
            stiffness_reference: None,
        };
        match kind {
            ScenarioKind::Nominal => {}
            ScenarioKind::MaxDr => s.dr = DRConfig::preset(Preset::Wide),
            ScenarioKind::JointStiffness => {
                let desk = REFERENCE_JOINT_STIFFNESS * DESK_TORQUE_RATIO;
                s.overrides.joint_stiffness = Some(desk);
                s.stiffness_reference = Some((REFERENCE_JOINT_STIFFNESS, desk));
            }
            ScenarioKind::SoftContact => s.overrides.contact_time_const = Some(0.1),
            ScenarioKind::RoughTerrain => s.overrides.terrain = Some(rough_terrain()),
            ScenarioKind::FootMod => {
                s.overrides.foot_mass_scale = Some(1.5);
                s.overrides.foot_length_scale = Some(0.8);
            }
            ScenarioKind::WidenedS1 => s.dr = DRConfig::preset(Preset::Reference),
            ScenarioKind::WidenedS2 => s.dr = widened_world(),
        }
        s
    }

    /// Soft ground, rough terrain and modified feet together.
    pub fn contact_combined(vx: f64) -> Self {
        let mut s = Self::new(ScenarioKind::SoftContact, vx);
        s.overrides.terrain = Some(rough_terrain());
        s.overrides.foot_mass_scale = Some(1.5);
        s.overrides.foot_length_scale = Some(0.8);
        s
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn validate(&self) -> Result<()> {
        self.dr.validate()?;
        if !(self.duration_s > 0.0) || self.n_episodes == 0 || self.seeds.is_empty() {
            return Err(Error::Config("scenario needs a positive duration, episodes and seeds".into()));
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let sc: EvalScenario = toml::from_str(s)?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let sc: EvalScenario = serde_json::from_str(s)?;
        sc.validate()?;
        Ok(sc)
    }

    /// Evaluation task: training injections off, scenario world on.
    pub fn task(&self, policy: &Policy) -> TaskConfig {
        let mut task = TaskConfig::new(Method::Dr, policy.control.mode, self.dr.clone());
        task.kp = policy.control.kp;
        task.kd = policy.control.kd;
        task.episode_s = self.duration_s;
        task.training_perturbations = false;
        task.overrides = self.overrides.clone();
        task.command_vx = Range::fixed(self.command.at(0.0));
        task
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TickLog {
    pub t: f64,
    pub cmd_vx: f64,
    pub base_vx: f64,
    pub base_x: f64,
    pub pitch: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub seed: u64,
    pub ticks: Vec<TickLog>,
    pub termination: Termination,
}

impl EpisodeLog {
    pub const CSV_HEADER: &'static str = "t,cmd_vx,base_vx,base_x,pitch";

    /// Parse the output of [`EpisodeLog::to_csv`]; seed and outcome are not part
    /// of the table.
    pub fn from_csv(text: &str, seed: u64, termination: Termination) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(Self::CSV_HEADER) {
            return Err(Error::Config("trajectory CSV header mismatch".into()));
        }
        let ticks = lines
            .filter(|l| !l.is_empty())
            .map(|l| {
                let v: Vec<f64> = l
                    .split(',')
                    .map(|x| x.parse::<f64>().map_err(|e| Error::Config(format!("trajectory CSV: {e}"))))
                    .collect::<Result<_>>()?;
                match v[..] {
                    [t, cmd_vx, base_vx, base_x, pitch] => Ok(TickLog { t, cmd_vx, base_vx, base_x, pitch }),
                    _ => Err(Error::Config("trajectory CSV rows need 5 fields".into())),
                }
            })
            .collect::<Result<_>>()?;
        Ok(EpisodeLog { seed, ticks, termination })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for k in &self.ticks {
            s.push_str(&format!("{},{},{},{},{}\n", k.t, k.cmd_vx, k.base_vx, k.base_x, k.pitch));
        }
        s
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub seed: u64,
    pub episodes: usize,
    pub success_rate: f64,
    pub rmse_vx: f64,
    pub mean_vx: f64,
    pub drift_mean: f64,
    pub drift_std: f64,
    pub mean_episode_s: f64,
    pub pitch_excursion: f64,
}

/// Planar drift is the forward position minus the integral of the command;
/// there is no lateral axis in the sagittal model.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub episodes: usize,
    pub success_rate: f64,
    /// Root-mean-square of `v_cmd − v_base` over all logged ticks.
    pub rmse_vx: f64,
    /// Time-averaged forward velocity; ticks after a fall count as zero.
    pub mean_vx: f64,
    pub drift_mean: f64,
    pub drift_std: f64,
    /// Mean survival time, s.
    pub mean_episode_s: f64,
    /// Mean absolute base pitch at the end of each episode, rad.
    pub pitch_excursion: f64,
    pub per_seed: Vec<SeedMetrics>,
}

fn episode_drift(ep: &EpisodeLog) -> f64 {
    let commanded: f64 = ep.ticks.iter().map(|k| k.cmd_vx * CONTROL_DT).sum();
    let travelled = ep.ticks.last().map_or(0.0, |k| k.base_x) - ep.ticks.first().map_or(0.0, |k| k.base_x - k.base_vx * CONTROL_DT);
    travelled - commanded
}

fn summarize(episodes: &[&EpisodeLog], duration_s: f64) -> Result<SeedMetrics> {
    if episodes.is_empty() {
        return Err(Error::Empty("episode logs"));
    }
    let n = episodes.len() as f64;
    let horizon_ticks = (duration_s / CONTROL_DT).round().max(1.0);
    let (mut sq, mut count, mut vel) = (0.0, 0usize, 0.0);
    for ep in episodes {
        for k in &ep.ticks {
            sq += (k.cmd_vx - k.base_vx).powi(2);
            count += 1;
        }
        vel += ep.ticks.iter().map(|k| k.base_vx).sum::<f64>() / horizon_ticks;
    }
    if count == 0 {
        return Err(Error::Empty("episode ticks"));
    }
    let drifts: Vec<f64> = episodes.iter().map(|e| episode_drift(e)).collect();
    let drift_mean = drifts.iter().sum::<f64>() / n;
    let drift_std = (drifts.iter().map(|d| (d - drift_mean).powi(2)).sum::<f64>() / n).sqrt();
    Ok(SeedMetrics {
        seed: episodes[0].seed,
        episodes: episodes.len(),
        success_rate: episodes.iter().filter(|e| e.termination == Termination::Truncated).count() as f64 / n,
        rmse_vx: (sq / count as f64).sqrt(),
        mean_vx: vel / n,
        drift_mean,
        drift_std,
        mean_episode_s: episodes.iter().map(|e| e.ticks.len() as f64 * CONTROL_DT).sum::<f64>() / n,
        pitch_excursion: episodes.iter().map(|e| e.ticks.last().map_or(0.0, |k| k.pitch.abs())).sum::<f64>() / n,
    })
}

/// Metrics as a pure function of the logs.
pub fn compute_metrics(logs: &[EpisodeLog], duration_s: f64) -> Result<Metrics> {
    let all: Vec<&EpisodeLog> = logs.iter().collect();
    let total = summarize(&all, duration_s)?;
    let mut seeds: Vec<u64> = logs.iter().map(|l| l.seed).collect();
    seeds.dedup();
    seeds.sort_unstable();
    seeds.dedup();
    let per_seed = seeds
        .iter()
        .map(|s| {
            let eps: Vec<&EpisodeLog> = logs.iter().filter(|l| l.seed == *s).collect();
            summarize(&eps, duration_s)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Metrics {
        episodes: total.episodes,
        success_rate: total.success_rate,
        rmse_vx: total.rmse_vx,
        mean_vx: total.mean_vx,
        drift_mean: total.drift_mean,
        drift_std: total.drift_std,
        mean_episode_s: total.mean_episode_s,
        pitch_excursion: total.pitch_excursion,
        per_seed,
    })
}

#[derive(Clone, Debug)]
pub struct ScenarioRun {
    pub metrics: Metrics,
    pub logs: Vec<EpisodeLog>,
    /// Training-injection draws observed in the evaluation environments.
    pub injection_draws: usize,
}

/// Roll out the deterministic policy for every episode of every seed.
pub fn run_scenario(policy: &Policy, scenario: &EvalScenario) -> Result<ScenarioRun> {
    scenario.validate()?;
    let task = scenario.task(policy);
    let mut logs = Vec::with_capacity(scenario.n_episodes * scenario.seeds.len());
    let mut draws = 0;
    for &seed in &scenario.seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut envs = (0..scenario.n_episodes)
            .map(|_| Env::new(task.clone(), false, rng.random()))
            .collect::<Result<Vec<_>>>()?;
        if envs[0].obs_dim() != policy.model.d_obs || envs[0].priv_dim() != policy.model.d_priv {
            return Err(Error::Config("checkpoint does not match the evaluation robot".into()));
        }
        let n = envs.len();
        let mut hidden = policy.zero_hidden(n);
        let mut active = vec![true; n];
        let mut eps: Vec<EpisodeLog> =
            (0..n).map(|_| EpisodeLog { seed, ticks: Vec::new(), termination: Termination::Continue }).collect();
        let mut tick = 0usize;
        while active.iter().any(|a| *a) {
            let t = tick as f64 * CONTROL_DT;
            let vx = scenario.command.at(t);
            for (env, a) in envs.iter_mut().zip(&active) {
                if *a {
                    env.set_command(vx);
                }
            }
            let obs: Vec<Vec<f64>> = envs.iter().map(|e| e.observation().to_vec()).collect();
            let obs_n = policy.normalize_obs_rows(&obs);
            let step = policy.actor_step::<ChaCha8Rng>(&obs_n, &hidden, None);
            hidden = step.hidden;
            for i in 0..n {
                if !active[i] {
                    continue;
                }
                let r = envs[i].step(&step.action.row(i).to_vec(), false)?;
                eps[i].ticks.push(TickLog { t: t + CONTROL_DT, cmd_vx: r.cmd_vx, base_vx: r.base_vx, base_x: r.base_x, pitch: r.pitch });
                if r.termination.ends_episode() {
                    eps[i].termination = r.termination;
                    active[i] = false;
                }
            }
            tick += 1;
        }
        draws += envs.iter().map(|e| e.injection_draws).sum::<usize>();
        logs.extend(eps);
    }
    let metrics = compute_metrics(&logs, scenario.duration_s)?;
    Ok(ScenarioRun { metrics, logs, injection_draws: draws })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{ActionMode, Model, NetConfig};

    fn log(seed: u64, vx: impl Fn(f64) -> f64, cmd: f64, n: usize, term: Termination) -> EpisodeLog {
        let mut x = 0.0;
        let ticks = (1..=n)
            .map(|i| {
                let t = i as f64 * CONTROL_DT;
                let v = vx(t);
                x += v * CONTROL_DT;
                TickLog { t, cmd_vx: cmd, base_vx: v, base_x: x, pitch: 0.0 }
            })
            .collect();
        EpisodeLog { seed, ticks, termination: term }
    }

    fn untrained_policy() -> Policy {
        let task = TaskConfig::new(Method::Dr, ActionMode::Torque, nominal_world());
        let env = Env::new(task, false, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = Model::new(NetConfig::desk(), env.obs_dim(), env.priv_dim(), env.n_joints(), &mut rng);
        Policy::new(model, env.control.clone())
    }

    #[test]
    fn perfect_tracking_has_zero_error() {
        let logs: Vec<_> = (0..3).map(|s| log(s, |_| 0.3, 0.3, 2500, Termination::Truncated)).collect();
        let m = compute_metrics(&logs, 20.0).unwrap();
        assert!(m.rmse_vx.abs() < 1e-12);
        assert!(m.drift_mean.abs() < 1e-9 && m.drift_std.abs() < 1e-9);
        assert!((m.mean_vx - 0.3).abs() < 1e-12);
        assert_eq!(m.success_rate, 1.0);
        assert_eq!(m.per_seed.len(), 3);
        assert!((m.mean_episode_s - 20.0).abs() < 1e-9);
    }

    #[test]
    fn constant_offset_metrics() {
        let logs = vec![log(0, |_| 0.4, 0.3, 1000, Termination::Truncated)];
        let m = compute_metrics(&logs, 8.0).unwrap();
        assert!((m.rmse_vx - 0.1).abs() < 1e-12);
        assert!((m.drift_mean - 0.1 * 8.0).abs() < 1e-9);
    }

    #[test]
    fn falls_lower_success_and_mean_velocity() {
        let logs = vec![
            log(0, |_| 0.3, 0.3, 1000, Termination::Truncated),
            log(0, |_| 0.3, 0.3, 500, Termination::Height),
        ];
        let m = compute_metrics(&logs, 8.0).unwrap();
        assert_eq!(m.success_rate, 0.5);
        assert!((m.mean_vx - 0.3 * 0.75).abs() < 1e-12);
        assert!((m.mean_episode_s - 6.0).abs() < 1e-9);
    }

    #[test]
    fn empty_logs_rejected() {
        assert!(matches!(compute_metrics(&[], 1.0), Err(Error::Empty(_))));
    }

    #[test]
    fn scenario_definitions() {
        for k in ScenarioKind::ALL {
            assert_eq!(ScenarioKind::parse(k.name()).unwrap(), k);
            let s = EvalScenario::new(k, 0.3);
            s.validate().unwrap();
            assert_eq!(EvalScenario::from_json(&s.to_json().unwrap()).unwrap(), s);
            assert_eq!(EvalScenario::from_toml_str(&s.to_toml_string().unwrap()).unwrap(), s);
        }
        assert!(ScenarioKind::parse("moon").is_err());
        let st = EvalScenario::new(ScenarioKind::JointStiffness, 0.8);
        let (full, desk) = st.stiffness_reference.unwrap();
        assert_eq!(full, 250.0);
        assert!((desk - 250.0 / 3.0).abs() < 1e-12);
        let s2 = EvalScenario::new(ScenarioKind::WidenedS2, 0.4);
        assert_eq!(s2.dr.friction_scale, Range::new(0.7, 1.3));
        let s1 = EvalScenario::new(ScenarioKind::WidenedS1, 0.4);
        assert!(s2.dr.mass_scale.high - 1.0 > 1.09 * (s1.dr.mass_scale.high - 1.0));
        let nom = EvalScenario::new(ScenarioKind::Nominal, 0.3);
        assert_eq!(nom.dr.friction_scale, Range::fixed(1.0));
    }

    #[test]
    fn ramp_profile() {
        let p = CommandProfile::Ramp { from: 0.0, to: 0.4, ramp_s: 2.0 };
        assert_eq!(p.at(0.0), 0.0);
        assert!((p.at(1.0) - 0.2).abs() < 1e-12);
        assert_eq!(p.at(5.0), 0.4);
    }

    #[test]
    fn rollout_draws_no_training_injections_and_is_deterministic() {
        let policy = untrained_policy();
        let mut sc = EvalScenario::contact_combined(0.3);
        sc.duration_s = 0.4;
        sc.n_episodes = 2;
        sc.seeds = vec![1, 2];
        let a = run_scenario(&policy, &sc).unwrap();
        assert_eq!(a.injection_draws, 0);
        assert_eq!(a.logs.len(), 4);
        assert_eq!(a.metrics.per_seed.len(), 2);
        for l in &a.logs {
            assert!(l.termination.ends_episode());
            assert!(l.ticks.len() <= 50);
            assert!(l.ticks.iter().all(|k| k.cmd_vx == 0.3));
        }
        let b = run_scenario(&policy, &EvalScenario::from_json(&sc.to_json().unwrap()).unwrap()).unwrap();
        assert_eq!(a.logs, b.logs);
        assert_eq!(a.metrics, b.metrics);

        let reparsed: Vec<EpisodeLog> =
            a.logs.iter().map(|l| EpisodeLog::from_csv(&l.to_csv(), l.seed, l.termination).unwrap()).collect();
        assert_eq!(compute_metrics(&reparsed, sc.duration_s).unwrap(), a.metrics);
    }

    #[test]
    fn rmse_matches_two_pass_recomputation() {
        let logs: Vec<_> = (0..4).map(|s| log(s, move |t| 0.2 + 0.1 * (t * (s + 1) as f64).sin(), 0.3, 300 + 50 * s as usize, Termination::Height)).collect();
        let m = compute_metrics(&logs, 20.0).unwrap();
        let errs: Vec<f64> = logs.iter().flat_map(|l| l.ticks.iter().map(|k| k.cmd_vx - k.base_vx)).collect();
        let mean_sq = errs.iter().map(|e| e * e).sum::<f64>() / errs.len() as f64;
        assert!((m.rmse_vx - mean_sq.sqrt()).abs() < 1e-12);
        assert!(m.rmse_vx >= 0.0 && (0.0..=1.0).contains(&m.success_rate));
    }

    #[test]
    fn overrides_leave_base_parameters_untouched() {
        let policy = untrained_policy();
        let sc = EvalScenario::contact_combined(0.3);
        let mut task = sc.task(&policy);
        task.overrides.joint_stiffness = Some(80.0);
        let mut env = Env::new(task, false, 4).unwrap();
        for _ in 0..20 {
            env.step(&[0.0; 6], false).unwrap();
        }
        let (m, p) = crate::dynamics::biped();
        assert_eq!(env.base_params, p);
        assert_eq!(env.base_mech, m);
        assert_ne!(env.params, p);
    }

    #[test]
    fn bad_csv_rejected() {
        assert!(EpisodeLog::from_csv("a,b\n", 0, Termination::Truncated).is_err());
        let txt = format!("{}\n1,2,3\n", EpisodeLog::CSV_HEADER);
        assert!(EpisodeLog::from_csv(&txt, 0, Termination::Truncated).is_err());
    }
}
