use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dynamics::{ModelParams, CONTROL_DT};
use crate::error::{Error, Result};

/// Closed interval `[low, high]`, serialized as a two-element array.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Range {
    pub low: f64,
    pub high: f64,
}

impl From<[f64; 2]> for Range {
    fn from(v: [f64; 2]) -> Self {
        Range { low: v[0], high: v[1] }
    }
}

impl From<Range> for [f64; 2] {
    fn from(r: Range) -> Self {
        [r.low, r.high]
    }
}

impl Range {
    pub const fn new(low: f64, high: f64) -> Self {
        Range { low, high }
    }

    pub const fn fixed(v: f64) -> Self {
        Range { low: v, high: v }
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.low && x <= self.high
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.low + (self.high - self.low) * rng.random::<f64>()
    }

    /// Stretch the interval about `center` by `factor`.
    pub fn widened(&self, center: f64, factor: f64) -> Range {
        Range::new(center + factor * (self.low - center), center + factor * (self.high - center))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Narrow,
    Reference,
    Wide,
    OodTest,
    Custom,
}

impl Preset {
    pub fn parse(name: &str) -> Result<Preset> {
        match name {
            "narrow" => Ok(Preset::Narrow),
            "reference" => Ok(Preset::Reference),
            "wide" => Ok(Preset::Wide),
            "ood_test" => Ok(Preset::OodTest),
            other => Err(Error::Config(format!("unknown DR preset '{other}'"))),
        }
    }
}

/// Training regime. Decides which DR entries are live.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Dr,
    Erfi,
    Proposed,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Dr, Method::Erfi, Method::Proposed];

    pub fn name(self) -> &'static str {
        match self {
            Method::Dr => "dr",
            Method::Erfi => "erfi",
            Method::Proposed => "proposed",
        }
    }

    pub fn parse(name: &str) -> Result<Method> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == name)
            .ok_or_else(|| Error::Config(format!("unknown method '{name}'")))
    }

    fn randomizes_physics(self) -> bool {
        self == Method::Dr
    }

    fn randomizes_motor(self) -> bool {
        matches!(self, Method::Dr | Method::Erfi)
    }
}

/// Per-episode bias half-width and per-step noise std for each observation block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObsNoiseConfig {
    pub ang_vel_bias: f64,
    pub ang_vel_noise: f64,
    pub gravity_bias: f64,
    pub gravity_noise: f64,
    pub q_bias: f64,
    pub q_noise: f64,
    pub qd_bias: f64,
    pub qd_noise: f64,
}

impl Default for ObsNoiseConfig {
    fn default() -> Self {
        ObsNoiseConfig {
            ang_vel_bias: 0.05,
            ang_vel_noise: 0.1,
            gravity_bias: 0.02,
            gravity_noise: 0.03,
            q_bias: 0.01,
            q_noise: 0.01,
            qd_bias: 0.05,
            qd_noise: 0.2,
        }
    }
}

impl ObsNoiseConfig {
    /// Per-entry (bias half-width, noise std) over `[ω, g_proj(2), q(n), q̇(n)]`.
    pub fn per_entry(&self, n_joints: usize) -> Vec<(f64, f64)> {
        let mut v = vec![(self.ang_vel_bias, self.ang_vel_noise)];
        v.extend([(self.gravity_bias, self.gravity_noise); 2]);
        v.extend(std::iter::repeat_n((self.q_bias, self.q_noise), n_joints));
        v.extend(std::iter::repeat_n((self.qd_bias, self.qd_noise), n_joints));
        v
    }

    fn validate(&self) -> Result<()> {
        let all = [
            self.ang_vel_bias,
            self.ang_vel_noise,
            self.gravity_bias,
            self.gravity_noise,
            self.q_bias,
            self.q_noise,
            self.qd_bias,
            self.qd_noise,
        ];
        if all.iter().all(|x| x.is_finite() && *x >= 0.0) {
            Ok(())
        } else {
            Err(Error::Config("observation noise scales must be finite and >= 0".into()))
        }
    }
}

/// Randomization ranges. Multiplicative entries are centred on 1, additive on 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DRConfig {
    pub preset: Preset,
    pub friction_scale: Range,
    pub mass_scale: Range,
    /// Added to each component of every link CoM, m.
    pub com_offset: Range,
    pub armature_scale: Range,
    /// Added to joint damping, N·m·s/rad.
    pub damping_add: Range,
    /// Position-mode gain multipliers.
    pub kp_scale: Range,
    pub kd_scale: Range,
    pub motor_scale: Range,
    pub delay_ms: Range,
    /// Magnitude of the velocity kick added to the base, m/s.
    pub push_velocity: Range,
    pub push_interval_s: f64,
    pub obs_noise: ObsNoiseConfig,
}

impl DRConfig {
    pub fn preset(preset: Preset) -> DRConfig {
        let reference = DRConfig {
            preset: Preset::Reference,
            friction_scale: Range::new(0.6, 1.4),
            mass_scale: Range::new(0.6, 1.4),
            com_offset: Range::new(-0.03, 0.03),
            armature_scale: Range::new(0.6, 1.4),
            damping_add: Range::new(0.0, 2.9),
            kp_scale: Range::new(0.5, 1.5),
            kd_scale: Range::new(0.5, 1.5),
            motor_scale: Range::new(0.8, 1.2),
            delay_ms: Range::new(0.0, 10.0),
            push_velocity: Range::new(0.0, 0.5),
            push_interval_s: 4.0,
            obs_noise: ObsNoiseConfig::default(),
        };
        match preset {
            Preset::Reference | Preset::Custom => DRConfig { preset, ..reference },
            Preset::Narrow => DRConfig {
                preset,
                friction_scale: Range::new(0.8, 1.2),
                mass_scale: Range::new(0.8, 1.2),
                armature_scale: Range::new(0.8, 1.2),
                damping_add: Range::new(0.0, 1.5),
                kp_scale: Range::new(0.95, 1.05),
                kd_scale: Range::new(0.95, 1.05),
                motor_scale: Range::new(0.9, 1.1),
                delay_ms: Range::new(0.0, 5.0),
                ..reference
            },
            Preset::Wide => DRConfig {
                preset,
                friction_scale: Range::new(0.4, 1.6),
                mass_scale: Range::new(0.4, 1.6),
                armature_scale: Range::new(0.4, 1.6),
                damping_add: Range::new(0.0, 4.0),
                kp_scale: Range::new(0.85, 1.15),
                kd_scale: Range::new(0.85, 1.15),
                motor_scale: Range::new(0.7, 1.3),
                delay_ms: Range::new(0.0, 15.0),
                ..reference
            },
            Preset::OodTest => DRConfig {
                preset,
                friction_scale: Range::new(0.4, 1.85),
                mass_scale: Range::new(0.56, 1.44),
                com_offset: Range::new(-0.033, 0.033),
                armature_scale: Range::new(0.56, 1.44),
                damping_add: Range::new(0.0, 3.19),
                kp_scale: Range::new(0.45, 1.55),
                kd_scale: Range::new(0.45, 1.55),
                motor_scale: Range::new(0.78, 1.22),
                delay_ms: Range::new(0.0, 11.0),
                push_velocity: Range::new(0.0, 0.55),
                ..reference
            },
        }
    }

    /// Every range stretched by `factor` about its nominal value.
    pub fn widened(&self, factor: f64) -> DRConfig {
        DRConfig {
            preset: Preset::Custom,
            friction_scale: self.friction_scale.widened(1.0, factor),
            mass_scale: self.mass_scale.widened(1.0, factor),
            com_offset: self.com_offset.widened(0.0, factor),
            armature_scale: self.armature_scale.widened(1.0, factor),
            damping_add: self.damping_add.widened(0.0, factor),
            kp_scale: self.kp_scale.widened(1.0, factor),
            kd_scale: self.kd_scale.widened(1.0, factor),
            motor_scale: self.motor_scale.widened(1.0, factor),
            delay_ms: self.delay_ms.widened(0.0, factor),
            push_velocity: self.push_velocity.widened(0.0, factor),
            push_interval_s: self.push_interval_s,
            obs_noise: self.obs_noise.clone(),
        }
    }

    fn ranges(&self) -> [(&'static str, Range); 10] {
        [
            ("friction_scale", self.friction_scale),
            ("mass_scale", self.mass_scale),
            ("com_offset", self.com_offset),
            ("armature_scale", self.armature_scale),
            ("damping_add", self.damping_add),
            ("kp_scale", self.kp_scale),
            ("kd_scale", self.kd_scale),
            ("motor_scale", self.motor_scale),
            ("delay_ms", self.delay_ms),
            ("push_velocity", self.push_velocity),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, r) in self.ranges() {
            if !(r.low.is_finite() && r.high.is_finite() && r.low <= r.high) {
                return Err(Error::Config(format!("{name}: need low <= high, got [{}, {}]", r.low, r.high)));
            }
        }
        for (name, r) in [
            ("friction_scale", self.friction_scale),
            ("mass_scale", self.mass_scale),
            ("armature_scale", self.armature_scale),
            ("motor_scale", self.motor_scale),
        ] {
            if r.low <= 0.0 {
                return Err(Error::Config(format!("{name} must stay positive")));
            }
        }
        for (name, r) in [
            ("damping_add", self.damping_add),
            ("kp_scale", self.kp_scale),
            ("kd_scale", self.kd_scale),
            ("delay_ms", self.delay_ms),
            ("push_velocity", self.push_velocity),
        ] {
            if r.low < 0.0 {
                return Err(Error::Config(format!("{name} must be >= 0")));
            }
        }
        if !(self.push_interval_s > 0.0) {
            return Err(Error::Config("push_interval_s must be > 0".into()));
        }
        self.obs_noise.validate()
    }

    pub fn from_toml_str(s: &str) -> Result<DRConfig> {
        let cfg: DRConfig = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }
}

/// A velocity kick applied to the base at `t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Push {
    pub t: f64,
    pub dvx: f64,
}

/// One drawn randomization instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DRSample {
    pub method: Method,
    pub friction_scale: f64,
    pub mass_scale: Vec<f64>,
    pub com_offset: Vec<[f64; 2]>,
    pub armature_scale: Vec<f64>,
    pub damping_add: Vec<f64>,
    pub kp_scale: Vec<f64>,
    pub kd_scale: Vec<f64>,
    pub motor_scale: Vec<f64>,
    pub delay_ms: f64,
    pub delay_ticks: usize,
    pub pushes: Vec<Push>,
    /// Per-episode observation bias over `[ω, g_proj, q, q̇]`; empty when inactive.
    pub obs_bias: Vec<f64>,
    /// Per-step observation noise std, same layout; empty when inactive.
    pub obs_noise_std: Vec<f64>,
}

impl DRSample {
    /// The identity sample: every parameter at nominal.
    pub fn nominal(method: Method, n_links: usize, n_joints: usize) -> DRSample {
        DRSample {
            method,
            friction_scale: 1.0,
            mass_scale: vec![1.0; n_links],
            com_offset: vec![[0.0; 2]; n_links],
            armature_scale: vec![1.0; n_joints],
            damping_add: vec![0.0; n_joints],
            kp_scale: vec![1.0; n_joints],
            kd_scale: vec![1.0; n_joints],
            motor_scale: vec![1.0; n_joints],
            delay_ms: 0.0,
            delay_ticks: 0,
            pushes: Vec::new(),
            obs_bias: Vec::new(),
            obs_noise_std: Vec::new(),
        }
    }

    /// Parameters seen by the simulator for this episode. `base` is untouched.
    pub fn apply(&self, base: &ModelParams) -> ModelParams {
        let mut p = base.clone();
        p.contact_friction_coeff *= self.friction_scale;
        for (i, m) in p.link_mass.iter_mut().enumerate() {
            *m *= self.mass_scale[i];
        }
        for (i, c) in p.link_com.iter_mut().enumerate() {
            c[0] += self.com_offset[i][0];
            c[1] += self.com_offset[i][1];
        }
        for j in 0..p.n_joints {
            p.joint_armature[j] *= self.armature_scale[j];
            p.joint_damping[j] += self.damping_add[j];
            p.motor_constant_scale[j] *= self.motor_scale[j];
        }
        p
    }

    pub fn noise_active(&self) -> bool {
        !self.obs_noise_std.is_empty()
    }
}

/// Control ticks of delay for a latency in ms, rounded down.
pub fn delay_ticks(delay_ms: f64) -> usize {
    ((delay_ms * 1e-3) / CONTROL_DT + 1e-9).floor() as usize
}

/// Draw one episode's randomization. Entries the method does not use stay nominal.
pub fn sample_dr<R: Rng + ?Sized>(
    config: &DRConfig,
    method: Method,
    n_links: usize,
    n_joints: usize,
    episode_s: f64,
    rng: &mut R,
) -> DRSample {
    let mut s = DRSample::nominal(method, n_links, n_joints);
    if method.randomizes_physics() {
        s.friction_scale = config.friction_scale.sample(rng);
        s.mass_scale = (0..n_links).map(|_| config.mass_scale.sample(rng)).collect();
        s.com_offset = (0..n_links)
            .map(|_| [config.com_offset.sample(rng), config.com_offset.sample(rng)])
            .collect();
        s.armature_scale = (0..n_joints).map(|_| config.armature_scale.sample(rng)).collect();
        s.damping_add = (0..n_joints).map(|_| config.damping_add.sample(rng)).collect();
        s.kp_scale = (0..n_joints).map(|_| config.kp_scale.sample(rng)).collect();
        s.kd_scale = (0..n_joints).map(|_| config.kd_scale.sample(rng)).collect();
        let mut t = config.push_interval_s;
        while t < episode_s {
            let mag = config.push_velocity.sample(rng);
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            s.pushes.push(Push { t, dvx: sign * mag });
            t += config.push_interval_s;
        }
        let entries = config.obs_noise.per_entry(n_joints);
        s.obs_bias = entries.iter().map(|(b, _)| Range::new(-b, *b).sample(rng)).collect();
        s.obs_noise_std = entries.iter().map(|(_, n)| *n).collect();
    }
    if method.randomizes_motor() {
        s.motor_scale = (0..n_joints).map(|_| config.motor_scale.sample(rng)).collect();
    }
    s.delay_ms = config.delay_ms.sample(rng);
    s.delay_ticks = delay_ticks(s.delay_ms);
    s
}

/// Add the sample's observation bias and fresh noise to the leading
/// `[ω, g_proj, q, q̇]` block of `obs`. No-op when noise is inactive.
pub fn corrupt_observation<R: Rng + ?Sized>(sample: &DRSample, obs: &mut [f64], rng: &mut R) {
    for (i, (b, std)) in sample.obs_bias.iter().zip(&sample.obs_noise_std).enumerate() {
        let noise = if *std > 0.0 { Normal::new(0.0, *std).expect("finite std").sample(rng) } else { 0.0 };
        obs[i] += b + noise;
    }
}
