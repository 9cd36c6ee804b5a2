//! Equations of motion, penalty contact and the semi-implicit Euler step.
//!
//! The integrator solves `M q̈ = τ_total − b − τ_contact` with exactly the
//! terms returned by [`dynamics_terms`] and [`contact_forces`], so callers can
//! audit the decomposition step by step.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::kinematics::{body_coms, dot, Frames};
use super::model::{BaseKind, ContactKind, Mechanism, ModelParams, JOINT_FRICTION_EPS};
use super::terrain::TerrainProfile;
use crate::error::{check_dim, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub q: Vec<f64>,
    pub qd: Vec<f64>,
    pub t: f64,
    pub contact_flags: [bool; 2],
    /// Per foot `[normal, tangential]` force [N].
    pub foot_forces: [[f64; 2]; 2],
    pub last_qdd: Vec<f64>,
}

impl SimState {
    pub fn new(q: Vec<f64>, qd: Vec<f64>) -> Self {
        let n = q.len();
        SimState {
            q,
            qd,
            t: 0.0,
            contact_flags: [false; 2],
            foot_forces: [[0.0; 2]; 2],
            last_qdd: vec![0.0; n],
        }
    }

    pub fn at_rest(q: Vec<f64>) -> Self {
        let n = q.len();
        Self::new(q, vec![0.0; n])
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(&self.qd).all(|x| x.is_finite())
    }
}

/// `M(q)` and `b(q, q̇)`; `b` collects Coriolis/centrifugal, gravity and the
/// passive joint torques (stiffness, damping, smooth dry friction).
#[derive(Clone, Debug)]
pub struct DynamicsTerms {
    pub mass: DMatrix<f64>,
    pub bias: DVector<f64>,
}

pub fn dynamics_terms(mech: &Mechanism, params: &ModelParams, state: &SimState) -> Result<DynamicsTerms> {
    let n = mech.n_dofs();
    check_dim("dynamics_terms: q", n, state.q.len())?;
    check_dim("dynamics_terms: qd", n, state.qd.len())?;
    check_dim("dynamics_terms: params", mech.n_joints(), params.n_joints)?;
    let frames = Frames::compute(mech, params, &state.q, &state.qd);
    Ok(terms_from_frames(mech, params, state, &frames))
}

fn terms_from_frames(mech: &Mechanism, params: &ModelParams, state: &SimState, frames: &Frames) -> DynamicsTerms {
    let n = mech.n_dofs();
    let mut mass = DMatrix::<f64>::zeros(n, n);
    let mut bias = DVector::<f64>::zeros(n);
    let coms = body_coms(frames, params);
    for (i, com) in coms.iter().enumerate() {
        let m = params.link_mass[i];
        let (jx, jz) = frames.point_jacobian(i, *com, n);
        let a = frames.point_bias_acc(i, *com);
        let deps = &frames.deps[i];
        for r in 0..n {
            if jx[r] == 0.0 && jz[r] == 0.0 {
                continue;
            }
            for c in 0..n {
                mass[(r, c)] += m * (jx[r] * jx[c] + jz[r] * jz[c]);
            }
            bias[r] += m * (jx[r] * a[0] + jz[r] * (a[1] + params.gravity));
        }
        // rotational inertia: angular velocity is the sum of the dependent rates
        let inertia = params.link_inertia[i];
        for &r in deps {
            for &c in deps {
                mass[(r, c)] += inertia;
            }
        }
    }
    let off = mech.base_dofs();
    for j in 0..mech.n_joints() {
        let k = off + j;
        mass[(k, k)] += params.joint_armature[j];
        let qd = state.qd[k];
        bias[k] += params.joint_stiffness[j] * (state.q[k] - mech.q_default[j])
            + params.joint_damping[j] * qd
            + params.joint_friction_loss[j] * (qd / JOINT_FRICTION_EPS).tanh();
    }
    DynamicsTerms { mass, bias }
}

/// Force at one contact point.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PointContact {
    pub position: [f64; 2],
    pub velocity: [f64; 2],
    pub penetration: f64,
    pub normal: f64,
    pub tangential: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactReport {
    pub points: Vec<PointContact>,
    pub foot_in_contact: [bool; 2],
    /// Per foot `[normal, tangential]` totals.
    pub foot_forces: [[f64; 2]; 2],
    /// A non-foot collision point is touching the ground.
    pub link_contact: bool,
    /// Generalized contact term; enters as `M q̈ + b + τ_contact = τ`.
    pub generalized: Vec<f64>,
}

/// Penalty spring-damper normal force with a smoothly saturated Coulomb
/// tangential force, evaluated at every contact point.
pub fn contact_forces(
    mech: &Mechanism,
    params: &ModelParams,
    terrain: &TerrainProfile,
    state: &SimState,
) -> Result<ContactReport> {
    let frames = Frames::compute(mech, params, &state.q, &state.qd);
    Ok(contacts_from_frames(mech, params, terrain, state, &frames))
}

fn contacts_from_frames(
    mech: &Mechanism,
    params: &ModelParams,
    terrain: &TerrainProfile,
    state: &SimState,
    frames: &Frames,
) -> ContactReport {
    let n = mech.n_dofs();
    let k = params.contact_stiffness();
    let c = params.contact_damping();
    let mu = params.contact_friction_coeff * terrain.friction_scale;
    let mut generalized = vec![0.0; n];
    let mut points = Vec::with_capacity(mech.contacts.len());
    let mut foot_in_contact = [false; 2];
    let mut foot_forces = [[0.0; 2]; 2];
    let mut link_contact = false;
    for cp in &mech.contacts {
        let p = frames.point(cp.body, cp.local);
        let (jx, jz) = frames.point_jacobian(cp.body, p, n);
        let v = [dot(&jx, &state.qd), dot(&jz, &state.qd)];
        let pen = terrain.height(p[0]) - p[1];
        let mut pc = PointContact {
            position: p,
            velocity: v,
            penetration: pen,
            ..Default::default()
        };
        if pen > 0.0 {
            let normal = (k * pen - c * v[1]).max(0.0);
            let tangential = -mu * normal * (v[0] / params.contact_slip_velocity).tanh();
            pc.normal = normal;
            pc.tangential = tangential;
            for r in 0..n {
                generalized[r] -= jx[r] * tangential + jz[r] * normal;
            }
            match cp.kind {
                ContactKind::Foot(side) => {
                    let s = side.index();
                    foot_in_contact[s] = true;
                    foot_forces[s][0] += normal;
                    foot_forces[s][1] += tangential;
                }
                ContactKind::Link => link_contact = true,
            }
        }
        points.push(pc);
    }
    ContactReport {
        points,
        foot_in_contact,
        foot_forces,
        link_contact,
        generalized,
    }
}

/// Torques applied during one step.
#[derive(Clone, Debug, PartialEq)]
pub struct Actuation {
    /// Policy torques; clamped to the limit, then scaled by the motor constant.
    pub tau_input: Vec<f64>,
    /// Injected joint torques, applied unscaled.
    pub tau_pert: Vec<f64>,
    /// Generalized force on the base coordinates `(x, z, pitch)`.
    pub base_wrench: [f64; 3],
}

impl Actuation {
    pub fn input_only(tau_input: Vec<f64>) -> Self {
        let n = tau_input.len();
        Actuation {
            tau_input,
            tau_pert: vec![0.0; n],
            base_wrench: [0.0; 3],
        }
    }

    pub fn zero(n_joints: usize) -> Self {
        Self::input_only(vec![0.0; n_joints])
    }
}

/// Generalized applied force `τ_total` for an actuation under `params`.
pub fn total_torque(mech: &Mechanism, params: &ModelParams, act: &Actuation) -> Result<Vec<f64>> {
    let nj = mech.n_joints();
    check_dim("actuation: tau_input", nj, act.tau_input.len())?;
    check_dim("actuation: tau_pert", nj, act.tau_pert.len())?;
    let off = mech.base_dofs();
    let mut tau = vec![0.0; mech.n_dofs()];
    if mech.base == BaseKind::Floating {
        tau[..3].copy_from_slice(&act.base_wrench);
    }
    for j in 0..nj {
        let lim = params.torque_limit[j];
        let t_in = act.tau_input[j].clamp(-lim, lim);
        tau[off + j] = params.motor_constant_scale[j] * t_in + act.tau_pert[j];
    }
    if tau.iter().any(|x| !x.is_finite()) {
        return Err(Error::Config("non-finite torque".into()));
    }
    Ok(tau)
}

/// Everything computed during one step, for auditing.
#[derive(Clone, Debug)]
pub struct StepOutput {
    pub state: SimState,
    pub contacts: ContactReport,
    pub terms: DynamicsTerms,
    pub tau_total: Vec<f64>,
    pub qdd: Vec<f64>,
}

/// Semi-implicit Euler step: `q̈ = M⁻¹(τ_total − b − τ_contact)`,
/// `q̇ += q̈ dt`, `q += q̇ dt`.
pub fn step(
    mech: &Mechanism,
    params: &ModelParams,
    terrain: &TerrainProfile,
    state: &SimState,
    act: &Actuation,
    dt: f64,
) -> Result<StepOutput> {
    if !(dt > 0.0) {
        return Err(Error::Config(format!("dt must be positive, got {dt}")));
    }
    let n = mech.n_dofs();
    check_dim("step: q", n, state.q.len())?;
    check_dim("step: qd", n, state.qd.len())?;
    let tau_total = total_torque(mech, params, act)?;
    let frames = Frames::compute(mech, params, &state.q, &state.qd);
    let terms = terms_from_frames(mech, params, state, &frames);
    let contacts = contacts_from_frames(mech, params, terrain, state, &frames);
    let rhs = DVector::from_iterator(
        n,
        (0..n).map(|i| tau_total[i] - terms.bias[i] - contacts.generalized[i]),
    );
    let qdd = solve_spd(&terms.mass, rhs).ok_or_else(|| diverged(state))?;
    if qdd.iter().any(|x| !x.is_finite()) {
        return Err(diverged(state));
    }
    let mut next = state.clone();
    for i in 0..n {
        next.qd[i] += qdd[i] * dt;
        next.q[i] += next.qd[i] * dt;
    }
    next.t += dt;
    next.contact_flags = contacts.foot_in_contact;
    next.foot_forces = contacts.foot_forces;
    next.last_qdd = qdd.iter().copied().collect();
    if !next.is_finite() {
        return Err(diverged(state));
    }
    Ok(StepOutput {
        qdd: next.last_qdd.clone(),
        state: next,
        contacts,
        terms,
        tau_total,
    })
}

fn diverged(state: &SimState) -> Error {
    Error::Diverged {
        t: state.t,
        q: state.q.clone(),
        qd: state.qd.clone(),
    }
}

pub(crate) fn solve_spd(m: &DMatrix<f64>, rhs: DVector<f64>) -> Option<DVector<f64>> {
    m.clone().cholesky().map(|c| c.solve(&rhs))
}

/// Kinetic energy `½ q̇ᵀ M q̇` (armature included).
pub fn kinetic_energy(mech: &Mechanism, params: &ModelParams, state: &SimState) -> Result<f64> {
    let terms = dynamics_terms(mech, params, state)?;
    let qd = DVector::from_column_slice(&state.qd);
    Ok(0.5 * qd.dot(&(&terms.mass * &qd)))
}

/// Gravitational potential energy `Σ m g z_com`.
pub fn potential_energy(mech: &Mechanism, params: &ModelParams, state: &SimState) -> f64 {
    let frames = Frames::compute(mech, params, &state.q, &state.qd);
    body_coms(&frames, params)
        .iter()
        .zip(&params.link_mass)
        .map(|(c, m)| m * params.gravity * c[1])
        .sum()
}
