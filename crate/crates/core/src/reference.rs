//! Raibert-style foothold planning, swing-foot splines and the gait phase signal.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    pub c_x: f64,
    pub c_y: f64,
    pub c_psi: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub eps: f64,
    /// Minimum lateral foot separation, m.
    pub w: f64,
    pub dx_max: f64,
    pub h_apex: f64,
    pub v_lift: f64,
}

impl PlannerConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let c: PlannerConfig = toml::from_str(s)?;
        if !(c.t_min > 0.0 && c.t_min <= c.t_max) || c.eps <= 0.0 {
            return Err(Error::Config("planner needs 0 < t_min <= t_max and eps > 0".into()));
        }
        Ok(c)
    }
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            c_x: 0.4,
            c_y: 0.4,
            c_psi: 0.4,
            t_min: 0.4,
            t_max: 0.8,
            eps: 1e-6,
            w: 0.21,
            dx_max: 0.5,
            h_apex: 0.08,
            v_lift: 0.1,
        }
    }
}

/// Body velocity command `(v_x, v_y, ω_z)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Command {
    pub vx: f64,
    pub vy: f64,
    pub wz: f64,
}

impl Command {
    pub fn forward(vx: f64) -> Self {
        Command { vx, vy: 0.0, wz: 0.0 }
    }

    pub fn norm(&self) -> f64 {
        (self.vx * self.vx + self.vy * self.vy + self.wz * self.wz).sqrt()
    }
}

pub fn step_period(cmd: Command, cfg: &PlannerConfig) -> f64 {
    let tx = cfg.c_x / (cmd.vx.abs() + cfg.eps);
    let ty = cfg.c_y / (cmd.vy.abs() + cfg.eps);
    let tp = cfg.c_psi / (cmd.wz.abs() + cfg.eps);
    tx.min(ty).min(tp).clamp(cfg.t_min, cfg.t_max)
}

/// Swing target in the stance-foot frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FootholdTarget {
    pub dx: f64,
    pub dy: f64,
    pub dpsi: f64,
}

/// `phi` is the stance indicator: 0 = left stance, 1 = right stance.
pub fn foothold(cmd: Command, t_step: f64, phi: u8, cfg: &PlannerConfig) -> FootholdTarget {
    let p = f64::from(phi.min(1));
    let dx = (t_step * cmd.vx).clamp(-cfg.dx_max, cfg.dx_max);
    let dy = if cmd.vy >= 0.0 {
        p * (0.5 * t_step * cmd.vy + cfg.w) - (1.0 - p) * cfg.w
    } else {
        (1.0 - p) * (0.5 * t_step * cmd.vy - cfg.w) + p * cfg.w
    };
    FootholdTarget { dx, dy, dpsi: t_step * cmd.wz }
}

/// Planar pose `(x, y, ψ)` of a foot.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FootPose {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
}

/// Cubic `a0 + a1 s + a2 s² + a3 s³` on `s ∈ [0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cubic(pub [f64; 4]);

impl Cubic {
    /// Hermite cubic with end slopes `d0`, `d1` in units per unit phase.
    pub fn hermite(p0: f64, p1: f64, d0: f64, d1: f64) -> Self {
        let a2 = 3.0 * (p1 - p0) - 2.0 * d0 - d1;
        let a3 = 2.0 * (p0 - p1) + d0 + d1;
        Cubic([p0, d0, a2, a3])
    }

    pub fn eval(&self, s: f64) -> f64 {
        let a = &self.0;
        a[0] + s * (a[1] + s * (a[2] + s * a[3]))
    }

    pub fn deriv(&self, s: f64) -> f64 {
        let a = &self.0;
        a[1] + s * (2.0 * a[2] + s * 3.0 * a[3])
    }
}

/// Quartic swing height with `z(0)=z(1)=0`, `z(½)=h`, `z'(0)=v_lift`, `z'(1)=0`.
pub fn quartic_coefficients(h_apex: f64, v_lift: f64) -> [f64; 5] {
    // c0 = 0, c1 = v; the remaining three follow from z(1), z'(1), z(½):
    //   c2 + c3 + c4 = −v
    //   2c2 + 3c3 + 4c4 = −v
    //   c2/4 + c3/8 + c4/16 = h − v/2
    // which factors as z(s) = s(1 − s)²·(16h·s + v(1 − 2s)).
    let v = v_lift;
    let c2 = 16.0 * h_apex - 4.0 * v;
    let c3 = -32.0 * h_apex + 5.0 * v;
    let c4 = 16.0 * h_apex - 2.0 * v;
    [0.0, v, c2, c3, c4]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwingSpline {
    pub x: Cubic,
    pub y: Cubic,
    pub psi: Cubic,
    pub z: [f64; 5],
    pub h_apex: f64,
    pub v_lift: f64,
    pub t_step: f64,
}

/// Reference sample at one phase value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwingPoint {
    pub s: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub psi: f64,
}

impl SwingSpline {
    pub fn z_at(&self, s: f64) -> f64 {
        let c = &self.z;
        c[0] + s * (c[1] + s * (c[2] + s * (c[3] + s * c[4])))
    }

    pub fn z_deriv(&self, s: f64) -> f64 {
        let c = &self.z;
        c[1] + s * (2.0 * c[2] + s * (3.0 * c[3] + s * 4.0 * c[4]))
    }

    pub fn eval(&self, s: f64) -> SwingPoint {
        let s = s.clamp(0.0, 1.0);
        SwingPoint { s, x: self.x.eval(s), y: self.y.eval(s), z: self.z_at(s), psi: self.psi.eval(s) }
    }

    /// `n + 1` evenly spaced samples over the phase.
    pub fn sample(&self, n: usize) -> Vec<SwingPoint> {
        (0..=n).map(|i| self.eval(i as f64 / n.max(1) as f64)).collect()
    }
}

/// Horizontal channels run from `start` to `start + target` with zero end velocities.
pub fn build_swing_spline(
    start: FootPose,
    target: FootholdTarget,
    h_apex: f64,
    v_lift: f64,
    t_step: f64,
) -> Result<SwingSpline> {
    if !(t_step > 0.0) {
        return Err(Error::Config(format!("step period must be > 0, got {t_step}")));
    }
    Ok(SwingSpline {
        x: Cubic::hermite(start.x, start.x + target.dx, 0.0, 0.0),
        y: Cubic::hermite(start.y, start.y + target.dy, 0.0, 0.0),
        psi: Cubic::hermite(start.psi, start.psi + target.dpsi, 0.0, 0.0),
        z: quartic_coefficients(h_apex, v_lift),
        h_apex,
        v_lift,
        t_step,
    })
}

/// `[cos(2π(t+φ)/(2T)), sin(2π(t+φ)/(2T))]`; one step is half a gait cycle.
pub fn gait_phase_signal(t: f64, period_ticks: f64, phi: f64) -> [f64; 2] {
    let a = std::f64::consts::PI * (t + phi) / period_ticks;
    [a.cos(), a.sin()]
}

/// Stepping state of the alternating single-support gait.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaitState {
    /// 0 = left stance, 1 = right stance.
    pub phi: u8,
    /// Ticks since the current step began.
    pub tick: usize,
    /// Ticks since the episode began; drives the phase signal.
    pub total_ticks: usize,
    pub t_step: f64,
    pub step_ticks: usize,
    pub swing_start: FootPose,
    /// Stance-foot pose the foothold is expressed in.
    pub stance: FootPose,
    /// Foothold offset in the stance-foot frame.
    pub target: FootholdTarget,
    pub spline: SwingSpline,
}

impl GaitState {
    pub fn new(cmd: Command, swing_start: FootPose, stance: FootPose, control_dt: f64, cfg: &PlannerConfig) -> Self {
        let mut g = GaitState {
            phi: 0,
            tick: 0,
            total_ticks: 0,
            t_step: 0.0,
            step_ticks: 1,
            swing_start,
            stance,
            target: FootholdTarget { dx: 0.0, dy: 0.0, dpsi: 0.0 },
            spline: build_swing_spline(swing_start, FootholdTarget { dx: 0.0, dy: 0.0, dpsi: 0.0 }, 0.0, 0.0, 1.0)
                .expect("positive period"),
        };
        g.plan(cmd, swing_start, stance, control_dt, cfg);
        g
    }

    fn plan(&mut self, cmd: Command, swing_start: FootPose, stance: FootPose, control_dt: f64, cfg: &PlannerConfig) {
        self.t_step = step_period(cmd, cfg);
        self.step_ticks = ((self.t_step / control_dt).round() as usize).max(1);
        self.swing_start = swing_start;
        self.stance = stance;
        self.target = foothold(cmd, self.t_step, self.phi, cfg);
        let travel = FootholdTarget {
            dx: stance.x + self.target.dx - swing_start.x,
            dy: stance.y + self.target.dy - swing_start.y,
            dpsi: stance.psi + self.target.dpsi - swing_start.psi,
        };
        self.spline = build_swing_spline(swing_start, travel, cfg.h_apex, cfg.v_lift, self.t_step)
            .expect("positive period");
    }

    /// Normalized swing phase in `[0, 1]`.
    pub fn s(&self) -> f64 {
        self.tick as f64 / self.step_ticks as f64
    }

    pub fn phase_signal(&self) -> [f64; 2] {
        gait_phase_signal(self.tick as f64 + self.phi as f64 * self.step_ticks as f64, self.step_ticks as f64, 0.0)
    }

    /// Advance one control tick. At a step boundary the stance leg flips and
    /// the next swing is planned from `next_swing_start` towards a foothold
    /// relative to `next_stance`. Returns true then.
    pub fn advance(
        &mut self,
        cmd: Command,
        next_swing_start: FootPose,
        next_stance: FootPose,
        control_dt: f64,
        cfg: &PlannerConfig,
    ) -> bool {
        self.tick += 1;
        self.total_ticks += 1;
        if self.tick < self.step_ticks {
            return false;
        }
        self.tick = 0;
        self.phi ^= 1;
        self.plan(cmd, next_swing_start, next_stance, control_dt, cfg);
        true
    }
}

/// Swing references of `n_steps` consecutive steps, assuming every swing foot
/// lands exactly on its spline end. Feet start side by side at `y = ±w/2`.
/// The phase column runs `k + s` for step `k`.
pub fn plan_rollout(cmd: Command, n_steps: usize, samples: usize, control_dt: f64, cfg: &PlannerConfig) -> Vec<SwingPoint> {
    let half = 0.5 * cfg.w;
    let mut gait = GaitState::new(
        cmd,
        FootPose { x: 0.0, y: -half, psi: 0.0 },
        FootPose { x: 0.0, y: half, psi: 0.0 },
        control_dt,
        cfg,
    );
    let mut out = Vec::with_capacity(n_steps * (samples + 1));
    for k in 0..n_steps {
        let pts = gait.spline.sample(samples);
        let end = pts.last().copied().expect("at least one sample");
        out.extend(pts.into_iter().map(|p| SwingPoint { s: k as f64 + p.s, ..p }));
        let landing = FootPose { x: end.x, y: end.y, psi: end.psi };
        let stance = gait.stance;
        while !gait.advance(cmd, stance, landing, control_dt, cfg) {}
    }
    out
}
