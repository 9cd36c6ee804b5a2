//! One simulated biped episode stream, stepped at the control rate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::control::{ActionMode, ControlConfig, DelayBuffer};
use crate::agent::obs::{assemble_observation, assemble_privileged, foot_point, CMD_OFFSET, frames, obs_dim, priv_dim, PrivilegedExtras};
use crate::dynamics::model::ContactKind;
use crate::dynamics::{
    biped, generate_terrain, step, Actuation, Mechanism, ModelParams, Side, SimState, TerrainProfile, CONTROL_DT,
    PHYSICS_DT, SUBSTEPS,
};
use crate::error::{check_dim, Error, Result};
use crate::randomization::{
    corrupt_observation, erfi_perturbation, sample_dr, DRConfig, DRSample, ErfiSampler, Method, PerturbNet,
    PerturbOutput, Range, RunningScale,
};
use crate::reference::{Command, FootPose, GaitState, PlannerConfig};
use crate::rewards::{compute_total, FootSignals, RewardBreakdown, RewardConfig, RewardInputs};

/// Fraction of the nominal base height outside which an episode terminates.
pub const HEIGHT_BAND: (f64, f64) = (0.5, 1.3);
/// Initial sink of the feet into the ground, so contact carries the robot from tick one.
pub const INITIAL_SINK: f64 = 0.004;
pub const SCALE_WARMUP: u64 = 200;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TerrainSpec {
    pub amplitude: f64,
    pub smoothing_sigma: f64,
    pub extent: f64,
}

/// Test-time changes to the world that training never sees.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WorldOverrides {
    /// Added passive stiffness on every joint, N·m/rad.
    pub joint_stiffness: Option<f64>,
    pub contact_time_const: Option<f64>,
    pub terrain: Option<TerrainSpec>,
    pub foot_mass_scale: Option<f64>,
    /// Scales the foot contact points' horizontal offsets.
    pub foot_length_scale: Option<f64>,
}

impl WorldOverrides {
    pub fn apply(&self, mech: &mut Mechanism, params: &mut ModelParams) {
        if let Some(k) = self.joint_stiffness {
            params.joint_stiffness.iter_mut().for_each(|s| *s += k);
        }
        if let Some(tc) = self.contact_time_const {
            params.contact_stiffness_time_const = tc;
        }
        for side in [Side::Left, Side::Right] {
            let Some(foot) = mech.foot_body(side) else { continue };
            if let Some(m) = self.foot_mass_scale {
                params.link_mass[foot] *= m;
                params.link_inertia[foot] *= m;
            }
            if let Some(l) = self.foot_length_scale {
                for c in mech.contacts.iter_mut().filter(|c| matches!(c.kind, ContactKind::Foot(_)) && c.body == foot) {
                    c.local[0] *= l;
                }
            }
        }
    }
}

/// Everything that defines the task an environment poses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskConfig {
    pub method: Method,
    pub mode: ActionMode,
    pub kp: f64,
    pub kd: f64,
    pub dr: DRConfig,
    /// Per-episode forward command.
    pub command_vx: Range,
    pub episode_s: f64,
    pub rewards: RewardConfig,
    pub planner: PlannerConfig,
    pub perturb_joint_limit: f64,
    pub perturb_base_limit: f64,
    /// ERFI bias and noise standard deviations, N·m; calibrated by the
    /// trainer when unset.
    pub erfi_sigmas: Option<(f64, f64)>,
    /// Training-only injections: perturbation networks and ERFI.
    pub training_perturbations: bool,
    pub overrides: WorldOverrides,
}

impl TaskConfig {
    pub fn new(method: Method, mode: ActionMode, dr: DRConfig) -> Self {
        TaskConfig {
            method,
            mode,
            kp: 400.0,
            kd: 40.0,
            dr,
            command_vx: Range::new(0.0, 0.6),
            episode_s: 20.0,
            rewards: RewardConfig::default(),
            planner: PlannerConfig::default(),
            perturb_joint_limit: 50.0,
            perturb_base_limit: 25.0,
            erfi_sigmas: None,
            training_perturbations: true,
            overrides: WorldOverrides::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dr.validate()?;
        self.rewards.validate()?;
        if !(self.episode_s > 0.0) {
            return Err(Error::Config("episode length must be positive".into()));
        }
        if !(self.kp >= 0.0 && self.kd >= 0.0) {
            return Err(Error::Config("PD gains must be non-negative".into()));
        }
        Ok(())
    }

    pub fn control(&self, mech: &Mechanism, params: &ModelParams) -> ControlConfig {
        let mut c = match self.mode {
            ActionMode::Torque => ControlConfig::torque(params.torque_limit.clone(), mech.q_default.clone()),
            ActionMode::Position => ControlConfig::position(params.torque_limit.clone(), mech.q_default.clone()),
        };
        c.kp = self.kp;
        c.kd = self.kd;
        c
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Continue,
    /// Non-foot contact.
    LinkContact,
    /// Base height left the allowed band.
    Height,
    /// The integrator produced a non-finite state.
    Diverged,
    /// Reached the episode horizon.
    Truncated,
}

impl Termination {
    pub fn is_terminal(self) -> bool {
        matches!(self, Termination::LinkContact | Termination::Height | Termination::Diverged)
    }

    pub fn ends_episode(self) -> bool {
        self != Termination::Continue
    }
}

/// Terminal checks on a post-step state.
pub fn check_termination(
    base_height: f64,
    nominal_height: f64,
    link_contact: bool,
    t: f64,
    episode_s: f64,
) -> Termination {
    if link_contact {
        Termination::LinkContact
    } else if !(base_height >= HEIGHT_BAND.0 * nominal_height && base_height <= HEIGHT_BAND.1 * nominal_height) {
        Termination::Height
    } else if t >= episode_s - 1e-9 {
        Termination::Truncated
    } else {
        Termination::Continue
    }
}

#[derive(Clone, Debug)]
pub struct StepResult {
    pub reward: f64,
    pub termination: Termination,
    pub breakdown: Option<RewardBreakdown>,
    pub base_vx: f64,
    pub cmd_vx: f64,
    pub base_x: f64,
    pub pitch: f64,
    pub tau_input: Vec<f64>,
    /// Injection applied this tick.
    pub injection: PerturbOutput,
    /// Observation and privileged vector after a truncated final tick, for
    /// bootstrapping.
    pub final_obs: Option<(Vec<f64>, Vec<f64>)>,
}

#[derive(Clone, Debug)]
pub struct Env {
    pub task: TaskConfig,
    pub base_mech: Mechanism,
    pub base_params: ModelParams,
    pub mech: Mechanism,
    pub params: ModelParams,
    pub control: ControlConfig,
    pub terrain: TerrainProfile,
    pub state: SimState,
    pub cmd: Command,
    pub gait: GaitState,
    pub dr: DRSample,
    pub perturb: PerturbNet,
    pub erfi: Option<ErfiSampler>,
    /// This slot carries the training injection.
    pub gated: bool,
    pub scale: RunningScale,
    /// Calls to weight sampling or ERFI sampling since construction.
    pub injection_draws: usize,
    pub ticks: usize,
    pub episode_return: f64,
    pub episodes: usize,
    /// Return and length of the most recently finished episode.
    pub last_return: f64,
    pub last_len: usize,
    rng: ChaCha8Rng,
    delay: DelayBuffer,
    a_prev: Vec<f64>,
    prev_reward: f64,
    injection: PerturbOutput,
    next_push: usize,
    in_contact: [bool; 2],
    prev_pitch_rate: f64,
    stance_anchor: [f64; 2],
    obs: Vec<f64>,
    privileged: Vec<f64>,
}

fn pose(p: [f64; 2]) -> FootPose {
    FootPose { x: p[0], y: 0.0, psi: 0.0 }
}

impl Env {
    pub fn new(task: TaskConfig, gated: bool, seed: u64) -> Result<Self> {
        task.validate()?;
        let (mech, params) = biped();
        let nj = mech.n_joints();
        let control = task.control(&mech, &params);
        let cmd = Command::forward(0.0);
        let state = SimState::at_rest(mech.default_q(mech.nominal_base_height));
        let gait = GaitState::new(cmd, FootPose::default(), FootPose::default(), CONTROL_DT, &task.planner);
        let mut env = Env {
            dr: DRSample::nominal(task.method, params.link_mass.len(), nj),
            perturb: PerturbNet::inactive(priv_dim(nj), nj),
            erfi: None,
            gated,
            scale: RunningScale::new(priv_dim(nj), SCALE_WARMUP),
            injection_draws: 0,
            ticks: 0,
            episode_return: 0.0,
            episodes: 0,
            last_return: 0.0,
            last_len: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            delay: DelayBuffer::new(nj, 0),
            a_prev: vec![0.0; nj],
            prev_reward: 0.0,
            injection: PerturbOutput::zero(nj),
            next_push: 0,
            in_contact: [true; 2],
            prev_pitch_rate: 0.0,
            stance_anchor: [0.0; 2],
            obs: Vec::new(),
            privileged: Vec::new(),
            base_mech: mech.clone(),
            base_params: params.clone(),
            mech,
            params,
            control,
            terrain: TerrainProfile::flat(),
            state,
            cmd,
            gait,
            task,
        };
        env.reset()?;
        Ok(env)
    }

    pub fn n_joints(&self) -> usize {
        self.base_mech.n_joints()
    }

    pub fn obs_dim(&self) -> usize {
        obs_dim(self.n_joints())
    }

    pub fn priv_dim(&self) -> usize {
        priv_dim(self.n_joints())
    }

    /// Policy observation for the coming tick (noise applied if active).
    pub fn observation(&self) -> &[f64] {
        &self.obs
    }

    /// Noise-free privileged vector for the coming tick.
    pub fn privileged(&self) -> &[f64] {
        &self.privileged
    }

    /// Change the command. The pending observations are patched in place so
    /// the next action already sees it; their noise draw is kept.
    pub fn set_command(&mut self, vx: f64) {
        let new = Command::forward(vx);
        let delta = [new.vx - self.cmd.vx, new.vy - self.cmd.vy, new.wz - self.cmd.wz];
        for (k, d) in delta.iter().enumerate() {
            self.obs[CMD_OFFSET + k] += d;
            self.privileged[CMD_OFFSET + k] += d;
        }
        self.cmd = new;
    }

    /// Start a new episode with fresh randomization.
    pub fn reset(&mut self) -> Result<()> {
        let nj = self.n_joints();
        let task = &self.task;
        self.dr = sample_dr(&task.dr, task.method, self.base_params.link_mass.len(), nj, task.episode_s, &mut self.rng);
        let mut mech = self.base_mech.clone();
        let mut params = self.dr.apply(&self.base_params);
        task.overrides.apply(&mut mech, &mut params);
        params.validate(&mech)?;
        self.terrain = match &task.overrides.terrain {
            Some(t) => generate_terrain(self.rng.random(), t.amplitude, t.smoothing_sigma, t.extent)?,
            None => TerrainProfile::flat(),
        };
        self.control = task.control(&mech, &params);
        self.perturb = PerturbNet::inactive(priv_dim(nj), nj);
        self.erfi = None;
        if task.training_perturbations && self.gated {
            match task.method {
                Method::Proposed => {
                    self.perturb =
                        PerturbNet::sample(priv_dim(nj), nj, task.perturb_joint_limit, task.perturb_base_limit, &mut self.rng);
                    self.injection_draws += 1;
                }
                Method::Erfi => {
                    let (b, n) = task
                        .erfi_sigmas
                        .ok_or_else(|| Error::Config("ERFI training needs calibrated sigmas".into()))?;
                    self.erfi = Some(erfi_perturbation(&mut self.rng, b, n, nj));
                    self.injection_draws += 1;
                }
                Method::Dr => {}
            }
        }
        let vx = task.command_vx.sample(&mut self.rng);
        self.cmd = Command::forward(vx);
        let ground = self.terrain.height(0.0);
        let mut q = mech.default_q(mech.nominal_base_height + ground - INITIAL_SINK);
        q[0] = 0.0;
        self.state = SimState::at_rest(q);
        self.mech = mech;
        self.params = params;
        self.delay = DelayBuffer::new(nj, self.dr.delay_ticks);
        self.a_prev = vec![0.0; nj];
        self.prev_reward = 0.0;
        self.injection = PerturbOutput::zero(nj);
        self.next_push = 0;
        self.in_contact = [true; 2];
        self.prev_pitch_rate = 0.0;
        self.ticks = 0;
        self.episode_return = 0.0;
        let feet = self.feet_positions();
        self.gait = GaitState::new(self.cmd, pose(feet[1]), pose(feet[0]), CONTROL_DT, &self.task.planner);
        self.stance_anchor = [feet[0][0], self.terrain.height(feet[0][0])];
        self.refresh_observation();
        Ok(())
    }

    fn feet_positions(&self) -> [[f64; 2]; 2] {
        let fr = frames(&self.mech, &self.params, &self.state);
        [Side::Left, Side::Right].map(|s| foot_point(&self.mech, &fr, s, &self.state.qd).0)
    }

    fn refresh_observation(&mut self) {
        let phase = self.gait.phase_signal();
        let clean = assemble_observation(&self.mech, &self.state, self.cmd, phase, &self.a_prev);
        let swing = 1 - self.gait.phi as usize;
        let feet = self.feet_positions();
        let sp = self.gait.spline.eval(self.gait.s());
        let extras = PrivilegedExtras {
            swing_foot: feet[swing],
            swing_target: [sp.x, self.terrain.height(sp.x) + sp.z],
            prev_reward: self.prev_reward,
            contact: self.state.contact_flags,
            tau_pert: &self.injection.tau_pert,
            f_base: self.injection.f_base,
        };
        self.privileged = assemble_privileged(&clean, &self.state, &extras, &self.terrain);
        let mut obs = clean;
        if self.dr.noise_active() {
            corrupt_observation(&self.dr, &mut obs, &mut self.rng);
        }
        self.obs = obs;
    }

    /// Apply `action` for one control tick. When the episode ends, the result
    /// describes the final tick and the environment is reset.
    pub fn step(&mut self, action: &[f64], with_breakdown: bool) -> Result<StepResult> {
        let nj = self.n_joints();
        check_dim("env action", nj, action.len())?;
        let a_eff = self.delay.push(action);
        let injection = if self.perturb.active {
            self.perturb.evaluate(&self.privileged, &self.scale)?
        } else if let Some(erfi) = &self.erfi {
            PerturbOutput { tau_pert: erfi.sample(&mut self.rng), f_base: [0.0; 2] }
        } else {
            PerturbOutput::zero(nj)
        };
        if self.task.training_perturbations {
            self.scale.update(&self.privileged);
        }

        let joint = |s: &SimState| (s.q[3..].to_vec(), s.qd[3..].to_vec());
        let mut tau_input = Vec::new();
        let mut link_contact = false;
        let mut contact_power = 0.0;
        let mut foot_force = [[0.0; 2]; 2];
        let mut diverged = false;
        for sub in 0..SUBSTEPS {
            if sub == 0 || self.control.mode == ActionMode::Position {
                let (q, qd) = joint(&self.state);
                tau_input = self.control.torque_for(&a_eff, &q, &qd, &self.dr.kp_scale, &self.dr.kd_scale);
            }
            let act = Actuation {
                tau_input: tau_input.clone(),
                tau_pert: injection.tau_pert.clone(),
                base_wrench: [injection.f_base[0], injection.f_base[1], 0.0],
            };
            match step(&self.mech, &self.params, &self.terrain, &self.state, &act, PHYSICS_DT) {
                Ok(out) => {
                    link_contact |= out.contacts.link_contact;
                    contact_power += out
                        .contacts
                        .points
                        .iter()
                        .map(|p| (p.tangential * p.velocity[0] + p.normal * p.velocity[1]).abs())
                        .sum::<f64>()
                        / SUBSTEPS as f64;
                    for (acc, f) in foot_force.iter_mut().zip(out.contacts.foot_forces) {
                        acc[0] += f[0] / SUBSTEPS as f64;
                        acc[1] += f[1] / SUBSTEPS as f64;
                    }
                    self.state = out.state;
                }
                Err(Error::Diverged { .. }) => {
                    diverged = true;
                    break;
                }
                Err(e) => return Err(e),
            }
            while let Some(p) = self.dr.pushes.get(self.next_push) {
                if p.t > self.state.t + 1e-12 {
                    break;
                }
                self.state.qd[0] += p.dvx;
                self.next_push += 1;
            }
        }
        self.ticks += 1;
        self.injection = injection.clone();

        if diverged {
            return self.finish(Termination::Diverged, 0.0, None, tau_input, injection);
        }

        let fr = frames(&self.mech, &self.params, &self.state);
        let mut feet = [FootSignals::default(), FootSignals::default()];
        for (i, side) in [Side::Left, Side::Right].into_iter().enumerate() {
            let (pos, vel) = foot_point(&self.mech, &fr, side, &self.state.qd);
            let contact = self.state.contact_flags[i];
            feet[i] = FootSignals {
                pos,
                vel,
                clearance: pos[1] - self.terrain.height(pos[0]),
                in_contact: contact,
                force: foot_force[i],
                landing: contact && !self.in_contact[i],
            };
        }
        self.in_contact = self.state.contact_flags;

        let stance = self.gait.phi;
        let s = self.gait.s();
        let sp = self.gait.spline.eval(s);
        let pitch_rate = self.state.qd[2];
        let inputs = RewardInputs {
            cmd: self.cmd,
            base_vx: self.state.qd[0],
            base_height: self.state.q[1] - self.terrain.height(self.state.q[0]),
            pitch: self.state.q[2],
            pitch_rate,
            pitch_acc: (pitch_rate - self.prev_pitch_rate) / CONTROL_DT,
            feet: feet.clone(),
            stance,
            phase: s,
            swing_ref: [sp.x, self.terrain.height(sp.x) + sp.z],
            stance_ref: self.stance_anchor,
            q: self.state.q[3..].to_vec(),
            q_default: self.mech.q_default.clone(),
            q_limits: self.mech.joint_limits.clone(),
            qd: self.state.qd[3..].to_vec(),
            tau: tau_input.clone(),
            action: a_eff.clone(),
            prev_action: self.a_prev.clone(),
            contact_power,
            body_weight: self.params.total_mass() * self.params.gravity,
        };
        let breakdown = compute_total(&inputs, &self.task.rewards);
        let reward = breakdown.total;
        self.prev_pitch_rate = pitch_rate;
        self.prev_reward = reward;
        self.a_prev = action.to_vec();

        let new_swing = stance as usize;
        if self.gait.advance(self.cmd, pose(feet[new_swing].pos), pose(feet[1 - new_swing].pos), CONTROL_DT, &self.task.planner) {
            let anchor = feet[1 - new_swing].pos[0];
            self.stance_anchor = [anchor, self.terrain.height(anchor)];
        }

        let termination = check_termination(
            inputs.base_height,
            self.mech.nominal_base_height,
            link_contact,
            self.ticks as f64 * CONTROL_DT,
            self.task.episode_s,
        );
        self.finish(termination, reward, with_breakdown.then_some(breakdown), tau_input, injection)
    }

    fn finish(
        &mut self,
        termination: Termination,
        reward: f64,
        breakdown: Option<RewardBreakdown>,
        tau_input: Vec<f64>,
        injection: PerturbOutput,
    ) -> Result<StepResult> {
        self.episode_return += reward;
        let mut result = StepResult {
            reward,
            termination,
            breakdown,
            base_vx: self.state.qd[0],
            cmd_vx: self.cmd.vx,
            base_x: self.state.q[0],
            pitch: self.state.q[2],
            tau_input,
            injection,
            final_obs: None,
        };
        if termination.ends_episode() {
            self.last_return = self.episode_return;
            self.last_len = self.ticks;
        }
        if termination == Termination::Diverged {
            self.episodes += 1;
            self.reset()?;
            return Ok(result);
        }
        self.refresh_observation();
        if termination.ends_episode() {
            if termination == Termination::Truncated {
                result.final_obs = Some((self.obs.clone(), self.privileged.clone()));
            }
            self.episodes += 1;
            self.reset()?;
        }
        Ok(result)
    }
}
