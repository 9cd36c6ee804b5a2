//! Observation and privileged-observation layouts.
//!
//! Observation (26 entries for the 6-joint biped):
//! `[ω_pitch, g_proj(2), cmd(3), q − q_default(6), q̇(6), phase(2), a_prev(6)]`.
//!
//! Privileged (54 entries): the clean observation followed by
//! `[v_base(2), swing foot rel. base(2), swing target rel. base(2), r_prev,
//! contact(2), τ_pert(6), f_base(2), terrain clearance scan(11)]`.

use crate::dynamics::kinematics::rotate;
use crate::dynamics::{Frames, Mechanism, ModelParams, SimState, TerrainProfile};
use crate::reference::Command;

/// Index of the first command entry in both observation layouts.
pub const CMD_OFFSET: usize = 3;
pub const SCAN_POINTS: usize = 11;
pub const SCAN_SPACING: f64 = 0.1;
pub const SCAN_START: f64 = -0.3;

pub fn obs_dim(n_joints: usize) -> usize {
    1 + 2 + 3 + 3 * n_joints + 2
}

pub fn priv_dim(n_joints: usize) -> usize {
    obs_dim(n_joints) + 2 + 2 + 2 + 1 + 2 + n_joints + 2 + SCAN_POINTS
}

/// Offset of the `τ_pert` block inside the privileged vector.
pub fn priv_pert_offset(n_joints: usize) -> usize {
    obs_dim(n_joints) + 2 + 2 + 2 + 1 + 2
}

/// Unit gravity direction in the base frame.
pub fn projected_gravity(pitch: f64) -> [f64; 2] {
    rotate(-pitch, [0.0, -1.0])
}

/// Noise-free proprioceptive observation of a floating-base state.
pub fn assemble_observation(
    mech: &Mechanism,
    state: &SimState,
    cmd: Command,
    phase: [f64; 2],
    a_prev: &[f64],
) -> Vec<f64> {
    let nj = mech.n_joints();
    let mut o = Vec::with_capacity(obs_dim(nj));
    o.push(state.qd[2]);
    o.extend(projected_gravity(state.q[2]));
    o.extend([cmd.vx, cmd.vy, cmd.wz]);
    o.extend((0..nj).map(|j| state.q[3 + j] - mech.q_default[j]));
    o.extend_from_slice(&state.qd[3..3 + nj]);
    o.extend(phase);
    o.extend_from_slice(a_prev);
    o
}

/// Sole midpoint of a foot: world position and velocity.
pub fn foot_point(mech: &Mechanism, frames: &Frames, side: crate::dynamics::Side, qd: &[f64]) -> ([f64; 2], [f64; 2]) {
    let pts: Vec<_> = mech.foot_contacts(side).map(|(_, c)| (c.body, c.local)).collect();
    let n = pts.len() as f64;
    let mut pos = [0.0; 2];
    let mut vel = [0.0; 2];
    for (body, local) in pts {
        let p = frames.point(body, local);
        let v = frames.point_velocity(body, p, qd);
        for k in 0..2 {
            pos[k] += p[k] / n;
            vel[k] += v[k] / n;
        }
    }
    (pos, vel)
}

pub struct PrivilegedExtras<'a> {
    pub swing_foot: [f64; 2],
    pub swing_target: [f64; 2],
    pub prev_reward: f64,
    pub contact: [bool; 2],
    pub tau_pert: &'a [f64],
    pub f_base: [f64; 2],
}

/// Clearance of the base above the terrain at fixed offsets ahead and behind.
pub fn terrain_scan(terrain: &TerrainProfile, base_x: f64, base_z: f64) -> Vec<f64> {
    terrain
        .scan(base_x + SCAN_START, SCAN_SPACING, SCAN_POINTS)
        .into_iter()
        .map(|h| base_z - h)
        .collect()
}

pub fn assemble_privileged(
    clean_obs: &[f64],
    state: &SimState,
    extras: &PrivilegedExtras<'_>,
    terrain: &TerrainProfile,
) -> Vec<f64> {
    let (bx, bz) = (state.q[0], state.q[1]);
    let mut p = Vec::with_capacity(clean_obs.len() + 30);
    p.extend_from_slice(clean_obs);
    p.extend([state.qd[0], state.qd[1]]);
    p.extend([extras.swing_foot[0] - bx, extras.swing_foot[1] - bz]);
    p.extend([extras.swing_target[0] - bx, extras.swing_target[1] - bz]);
    p.push(extras.prev_reward);
    p.extend(extras.contact.map(|c| f64::from(u8::from(c))));
    p.extend_from_slice(extras.tau_pert);
    p.extend(extras.f_base);
    p.extend(terrain_scan(terrain, bx, bz));
    p
}

/// Frames for a state, for callers that need several kinematic queries.
pub fn frames(mech: &Mechanism, params: &ModelParams, state: &SimState) -> Frames {
    Frames::compute(mech, params, &state.q, &state.qd)
}
