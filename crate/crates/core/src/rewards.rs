//! Locomotion reward suite: command tracking, motion quality and regularization.
//!
//! Exp kernels use `exp(−err²/σ)` unless the term squares σ explicitly (yaw
//! drift, orientation, roll stability, smooth motion). Penalty rows return
//! values `≤ 0` and contribute `|ω|·r`, so a negative table weight does not
//! flip a penalty into a bonus.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::reference::Command;

/// Weight and tolerance of one row.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub weight: f64,
    pub sigma: f64,
}

const fn term(weight: f64, sigma: f64) -> Term {
    Term { weight, sigma }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub lin_vel_x: Term,
    pub lin_vel_y: Term,
    pub ang_vel_z: Term,
    pub yaw_drift: Term,
    pub base_height: Term,
    pub base_height_target: f64,
    pub orientation: Term,
    pub orientation_sigmas: [f64; 3],
    pub roll_stability: Term,
    pub roll_rate_sigma: f64,
    pub smooth_motion: Term,
    pub swing_pos: Term,
    pub swing_pos_sigma_z: f64,
    pub swing_ori: Term,
    pub stance_pos: Term,
    pub stance_pos_sigma_z: f64,
    pub stance_ori: Term,
    pub contact_schedule: Term,
    pub force_symmetry: Term,
    pub joint_deviation: Term,
    pub action_rate: Term,
    /// Per-joint action-rate tolerance for hip, knee, ankle.
    pub action_rate_sigmas: [f64; 3],
    pub energy: Term,
    pub joint_limits: Term,
    pub contact_power: Term,
    pub impact_force: Term,
    pub impact_threshold: f64,
    pub landing_velocity: Term,
    pub landing_threshold: f64,
    pub landing_height: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            lin_vel_x: term(1.2, 0.15),
            lin_vel_y: term(1.2, 0.15),
            ang_vel_z: term(2.2, 0.10),
            yaw_drift: term(0.4, 0.09),
            base_height: term(2.0, 0.15),
            base_height_target: 0.92,
            orientation: term(1.6, 0.15),
            orientation_sigmas: [0.15, 0.2, 0.25],
            roll_stability: term(1.4, 0.10),
            roll_rate_sigma: 0.2,
            smooth_motion: term(0.6, 5.0),
            swing_pos: term(0.45, 0.2),
            swing_pos_sigma_z: 0.05,
            swing_ori: term(0.45, 0.10),
            stance_pos: term(0.25, 0.2),
            stance_pos_sigma_z: 0.1,
            stance_ori: term(0.25, 0.15),
            contact_schedule: term(0.9, 1.0),
            force_symmetry: term(0.7, 0.25),
            joint_deviation: term(0.18, 2.0),
            action_rate: term(-0.001, 1.0),
            action_rate_sigmas: [0.9, 0.55, 0.45],
            energy: term(4e-4, 1.0),
            joint_limits: term(-0.4, 1.0),
            contact_power: term(-0.015, 1.0),
            impact_force: term(-0.5, 1.0),
            impact_threshold: 1100.0,
            landing_velocity: term(-2.0, 1.0),
            landing_threshold: 1.5,
            landing_height: 0.1,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> crate::Result<()> {
        let sigmas = [
            self.lin_vel_x.sigma,
            self.lin_vel_y.sigma,
            self.ang_vel_z.sigma,
            self.yaw_drift.sigma,
            self.base_height.sigma,
            self.roll_stability.sigma,
            self.roll_rate_sigma,
            self.smooth_motion.sigma,
            self.swing_pos.sigma,
            self.swing_pos_sigma_z,
            self.swing_ori.sigma,
            self.stance_pos.sigma,
            self.stance_pos_sigma_z,
            self.stance_ori.sigma,
            self.force_symmetry.sigma,
            self.joint_deviation.sigma,
        ];
        let ok = sigmas
            .iter()
            .chain(&self.orientation_sigmas)
            .chain(&self.action_rate_sigmas)
            .all(|s| s.is_finite() && *s > 0.0);
        if ok {
            Ok(())
        } else {
            Err(crate::Error::Config("every reward sigma must be > 0".into()))
        }
    }
}

pub fn yaw_drift_reward(base_wz: f64, cmd_wz: f64, sigma_yaw: f64) -> f64 {
    if cmd_wz.abs() < 0.1 {
        -(1.0 - (-(base_wz * base_wz) / (sigma_yaw * sigma_yaw)).exp())
    } else {
        0.0
    }
}

pub fn orientation_reward(roll: f64, pitch: f64, dpsi: f64, sigmas: [f64; 3]) -> f64 {
    (-(roll * roll) / (sigmas[0] * sigmas[0]) - (pitch * pitch) / (sigmas[1] * sigmas[1])
        - (dpsi * dpsi) / (sigmas[2] * sigmas[2]))
        .exp()
}

pub fn impact_penalty(foot_force: f64, landing: bool, threshold: f64) -> f64 {
    if landing {
        -(foot_force - threshold).max(0.0).powi(2)
    } else {
        0.0
    }
}

pub fn landing_penalty(foot_z: f64, foot_zd: f64, threshold: f64, height: f64) -> f64 {
    if foot_z < height {
        -(foot_zd.abs() - threshold).max(0.0)
    } else {
        0.0
    }
}

/// Impact and landing penalties for one foot.
pub fn impact_landing_penalties(
    foot_force: f64,
    foot_z: f64,
    foot_zd: f64,
    landing_detected: bool,
    cfg: &RewardConfig,
) -> (f64, f64) {
    (
        impact_penalty(foot_force, landing_detected, cfg.impact_threshold),
        landing_penalty(foot_z, foot_zd, cfg.landing_threshold, cfg.landing_height),
    )
}

/// Per-foot quantities. Index 0 is left, 1 right.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FootSignals {
    /// Position of the foot reference point `[x, z]` in the world.
    pub pos: [f64; 2],
    pub vel: [f64; 2],
    /// Height above the terrain.
    pub clearance: f64,
    pub in_contact: bool,
    /// Contact force `[normal, tangential]`.
    pub force: [f64; 2],
    /// First contact tick after being airborne.
    pub landing: bool,
}

/// Everything the reward needs about one control tick of the planar biped.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardInputs {
    pub cmd: Command,
    pub base_vx: f64,
    pub base_height: f64,
    pub pitch: f64,
    pub pitch_rate: f64,
    pub pitch_acc: f64,
    pub feet: [FootSignals; 2],
    /// 0 = left stance, 1 = right stance.
    pub stance: u8,
    /// Swing phase in `[0, 1]`.
    pub phase: f64,
    /// Swing-foot reference `[x, z]` and stance-foot anchor `[x, z]`.
    pub swing_ref: [f64; 2],
    pub stance_ref: [f64; 2],
    pub q: Vec<f64>,
    pub q_default: Vec<f64>,
    pub q_limits: Vec<f64>,
    pub qd: Vec<f64>,
    pub tau: Vec<f64>,
    pub action: Vec<f64>,
    pub prev_action: Vec<f64>,
    /// `Σ |F · v|` over active contact points.
    pub contact_power: f64,
    /// Total weight `m·g`, used to make force symmetry dimensionless.
    pub body_weight: f64,
}

/// One evaluated row.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RewardTerm {
    pub name: &'static str,
    pub value: f64,
    pub weight: f64,
    pub weighted: f64,
    pub penalty: bool,
    /// The row's symbols do not exist in the sagittal model and are evaluated
    /// against zero.
    pub planar_degenerate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RewardBreakdown {
    pub terms: Vec<RewardTerm>,
    pub total: f64,
}

impl RewardBreakdown {
    pub fn get(&self, name: &str) -> Option<&RewardTerm> {
        self.terms.iter().find(|t| t.name == name)
    }

    pub fn csv_header(&self) -> String {
        let mut s = String::new();
        for t in &self.terms {
            s.push_str(t.name);
            s.push(',');
        }
        s.push_str("total");
        s
    }

    pub fn csv_row(&self) -> String {
        let mut s = String::new();
        for t in &self.terms {
            let _ = write!(s, "{},", t.value);
        }
        let _ = write!(s, "{}", self.total);
        s
    }
}

fn kernel(err_sq: f64, sigma: f64) -> f64 {
    (-err_sq / sigma).exp()
}

/// `min(1, ‖c‖ / 0.1)`.
pub fn command_scaling(cmd: Command) -> f64 {
    (cmd.norm() / 0.1).min(1.0)
}

/// Fraction of feet whose contact state agrees with the gait phase.
pub fn contact_schedule(inp: &RewardInputs) -> f64 {
    let stance = inp.stance.min(1) as usize;
    let swing = 1 - stance;
    let stance_ok = inp.feet[stance].in_contact;
    let mid_swing = (0.1..=0.9).contains(&inp.phase);
    let swing_ok = !mid_swing || !inp.feet[swing].in_contact;
    (f64::from(u8::from(stance_ok)) + f64::from(u8::from(swing_ok))) / 2.0
}

pub fn compute_total(inp: &RewardInputs, cfg: &RewardConfig) -> RewardBreakdown {
    let mut terms = Vec::with_capacity(24);
    let mut push = |name, value: f64, t: Term, penalty, degenerate| {
        let weight = if penalty { t.weight.abs() } else { t.weight };
        terms.push(RewardTerm { name, value, weight: t.weight, weighted: weight * value, penalty, planar_degenerate: degenerate });
    };
    let stance = inp.stance.min(1) as usize;
    let swing = 1 - stance;

    push("lin_vel_x", kernel((inp.cmd.vx - inp.base_vx).powi(2), cfg.lin_vel_x.sigma), cfg.lin_vel_x, false, false);
    push("lin_vel_y", kernel(inp.cmd.vy.powi(2), cfg.lin_vel_y.sigma), cfg.lin_vel_y, false, true);
    push("ang_vel_z", kernel(inp.cmd.wz.powi(2), cfg.ang_vel_z.sigma), cfg.ang_vel_z, false, true);
    push("yaw_drift", yaw_drift_reward(0.0, inp.cmd.wz, cfg.yaw_drift.sigma), cfg.yaw_drift, true, true);

    push(
        "base_height",
        kernel((inp.base_height - cfg.base_height_target).powi(2), cfg.base_height.sigma),
        cfg.base_height,
        false,
        false,
    );
    push("orientation", orientation_reward(0.0, inp.pitch, 0.0, cfg.orientation_sigmas), cfg.orientation, false, false);
    push("roll_stability", 1.0, cfg.roll_stability, false, true);
    let s = cfg.smooth_motion.sigma;
    push("smooth_motion", (-(inp.pitch_acc * inp.pitch_acc) / (s * s)).exp(), cfg.smooth_motion, false, false);

    let sw = &inp.feet[swing];
    let sw_err = (sw.pos[0] - inp.swing_ref[0]).powi(2) / cfg.swing_pos.sigma
        + (sw.pos[1] - inp.swing_ref[1]).powi(2) / cfg.swing_pos_sigma_z;
    push("swing_pos", (-sw_err).exp(), cfg.swing_pos, false, false);
    push("swing_ori", 1.0, cfg.swing_ori, false, true);
    let st = &inp.feet[stance];
    let st_err = (st.pos[0] - inp.stance_ref[0]).powi(2) / cfg.stance_pos.sigma
        + (st.pos[1] - inp.stance_ref[1]).powi(2) / cfg.stance_pos_sigma_z;
    push("stance_pos", (-st_err).exp(), cfg.stance_pos, false, false);
    push("stance_ori", 1.0, cfg.stance_ori, false, true);
    push("contact_schedule", contact_schedule(inp), cfg.contact_schedule, false, false);

    let norm = |f: [f64; 2]| f[0].hypot(f[1]);
    let asym = (norm(inp.feet[0].force) - norm(inp.feet[1].force)).abs() / inp.body_weight.max(1e-9);
    push("force_symmetry", (-asym / cfg.force_symmetry.sigma).exp(), cfg.force_symmetry, false, false);
    let dev: f64 = inp.q.iter().zip(&inp.q_default).map(|(q, d)| (q - d).powi(2)).sum();
    push("joint_deviation", kernel(dev, cfg.joint_deviation.sigma), cfg.joint_deviation, false, false);

    let n_per_leg = cfg.action_rate_sigmas.len();
    let rate: f64 = inp
        .action
        .iter()
        .zip(&inp.prev_action)
        .enumerate()
        .map(|(i, (a, b))| (a - b).powi(2) / cfg.action_rate_sigmas[i % n_per_leg].powi(2))
        .sum();
    push("action_rate", -rate * command_scaling(inp.cmd), cfg.action_rate, true, false);
    let energy: f64 = inp.tau.iter().zip(&inp.qd).map(|(t, v)| (t * v).abs()).sum();
    push("energy", -energy, cfg.energy, true, false);
    let over: f64 = inp.q.iter().zip(&inp.q_limits).map(|(q, l)| (q.abs() - l).max(0.0)).sum();
    push("joint_limits", -over, cfg.joint_limits, true, false);
    push("contact_power", -inp.contact_power, cfg.contact_power, true, false);

    let (mut impact, mut landing) = (0.0, 0.0);
    for f in &inp.feet {
        let (i, l) = impact_landing_penalties(norm(f.force), f.clearance, f.vel[1], f.landing, cfg);
        impact += i;
        landing += l;
    }
    push("impact_force", impact, cfg.impact_force, true, false);
    push("landing_velocity", landing, cfg.landing_velocity, true, false);

    let total = terms.iter().map(|t| t.weighted).sum();
    RewardBreakdown { terms, total }
}

/// Swap left and right in `inp`. Joint vectors are laid out `[left…, right…]`.
pub fn mirror_inputs(inp: &RewardInputs) -> RewardInputs {
    let swap = |v: &Vec<f64>| {
        let h = v.len() / 2;
        [&v[h..], &v[..h]].concat()
    };
    RewardInputs {
        feet: [inp.feet[1].clone(), inp.feet[0].clone()],
        stance: 1 - inp.stance.min(1),
        q: swap(&inp.q),
        q_default: swap(&inp.q_default),
        q_limits: swap(&inp.q_limits),
        qd: swap(&inp.qd),
        tau: swap(&inp.tau),
        action: swap(&inp.action),
        prev_action: swap(&inp.prev_action),
        ..inp.clone()
    }
}
