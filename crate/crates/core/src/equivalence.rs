//! Parameter randomization expressed as an injected generalized torque.
//!
//! For a perturbed parameter set `p` and the nominal set `n`, the torque
//!
//! ```text
//! τ_DR = −[(M_p − M_n) q̈ + (b_p − b_n) + (τc_p − τc_n) + (τout_p − τout_n)]
//! ```
//!
//! evaluated at the acceleration the perturbed model actually realizes makes
//! the nominal model reproduce that acceleration exactly. The actuator delta is
//! written with the sign that moves it to the applied side, so the nominal
//! model sees `τ_input + τ_DR`. Actuation delay is not an instantaneous torque
//! and is outside this check.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::dynamics::sim::total_torque;
use crate::dynamics::{
    biped, chain, contact_forces, dynamics_terms, pendulum, step, Actuation, BaseKind, Mechanism, ModelParams,
    SimState, TerrainProfile, PHYSICS_DT,
};
use crate::error::{check_dim, Error, Result};

/// Torque-space equivalent of swapping `nominal` for `perturbed` at `state`.
///
/// `qdd_perturbed` must be the acceleration the perturbed model produces at
/// this state under `tau_input`.
pub fn compute_tau_dr(
    mech: &Mechanism,
    state: &SimState,
    qdd_perturbed: &[f64],
    tau_input: &[f64],
    nominal: &ModelParams,
    perturbed: &ModelParams,
    terrain: &TerrainProfile,
) -> Result<Vec<f64>> {
    let n = mech.n_dofs();
    check_dim("compute_tau_dr: qdd", n, qdd_perturbed.len())?;
    check_dim("compute_tau_dr: tau_input", mech.n_joints(), tau_input.len())?;
    let tn = dynamics_terms(mech, nominal, state)?;
    let tp = dynamics_terms(mech, perturbed, state)?;
    let cn = contact_forces(mech, nominal, terrain, state)?;
    let cp = contact_forces(mech, perturbed, terrain, state)?;
    let act = Actuation::input_only(tau_input.to_vec());
    let out_n = total_torque(mech, nominal, &act)?;
    let out_p = total_torque(mech, perturbed, &act)?;
    let qdd = DVector::from_column_slice(qdd_perturbed);
    let dm_qdd = (&tp.mass - &tn.mass) * qdd;
    Ok((0..n)
        .map(|i| {
            -(dm_qdd[i] + (tp.bias[i] - tn.bias[i]) + (cp.generalized[i] - cn.generalized[i])
                - (out_p[i] - out_n[i]))
        })
        .collect())
}

/// Split a generalized torque into the actuation channels of [`step`].
pub fn as_injection(mech: &Mechanism, tau_input: &[f64], tau_generalized: &[f64]) -> Actuation {
    let off = mech.base_dofs();
    let mut base_wrench = [0.0; 3];
    if mech.base == BaseKind::Floating {
        base_wrench.copy_from_slice(&tau_generalized[..3]);
    }
    Actuation {
        tau_input: tau_input.to_vec(),
        tau_pert: tau_generalized[off..].to_vec(),
        base_wrench,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub horizon: usize,
    pub tolerance: f64,
    /// Max |Δ| over (q, q̇) between the perturbed step and the nominal step with
    /// `τ_DR` injected, per step.
    pub max_deviation: Vec<f64>,
    pub tau_dr: Vec<Vec<f64>>,
    pub worst: f64,
    pub passed: bool,
}

/// Step both models from the same state every step and compare next states.
///
/// After each comparison the check continues from the perturbed trajectory, so
/// the identity is tested instantaneously rather than through chaotic drift.
#[allow(clippy::too_many_arguments)]
pub fn verify_equivalence<F>(
    mech: &Mechanism,
    x0: &SimState,
    mut torques: F,
    nominal: &ModelParams,
    perturbed: &ModelParams,
    terrain: &TerrainProfile,
    dt: f64,
    horizon: usize,
    tol: f64,
) -> Result<EquivalenceReport>
where
    F: FnMut(usize, &SimState) -> Vec<f64>,
{
    let mut state = x0.clone();
    let mut max_deviation = Vec::with_capacity(horizon);
    let mut trace = Vec::with_capacity(horizon);
    for k in 0..horizon {
        let tau_input = torques(k, &state);
        let real = step(mech, perturbed, terrain, &state, &Actuation::input_only(tau_input.clone()), dt)?;
        let tau_dr = compute_tau_dr(mech, &state, &real.qdd, &tau_input, nominal, perturbed, terrain)?;
        let injected = step(mech, nominal, terrain, &state, &as_injection(mech, &tau_input, &tau_dr), dt)?;
        let dev = real
            .state
            .q
            .iter()
            .zip(&injected.state.q)
            .chain(real.state.qd.iter().zip(&injected.state.qd))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        max_deviation.push(dev);
        trace.push(tau_dr);
        state = real.state;
    }
    let worst = max_deviation.iter().copied().fold(0.0, f64::max);
    Ok(EquivalenceReport {
        horizon,
        tolerance: tol,
        max_deviation,
        tau_dr: trace,
        worst,
        passed: worst <= tol,
    })
}

/// A single-parameter change used by the equivalence fixtures.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum ParameterDelta {
    MassScale(f64),
    ArmatureScale(f64),
    DampingAdd(f64),
    ComShift(f64),
    MotorScale(f64),
    ContactTimeConstScale(f64),
    FrictionScale(f64),
    JointStiffness(f64),
}

impl ParameterDelta {
    pub fn apply(&self, params: &ModelParams) -> ModelParams {
        let mut p = params.clone();
        match *self {
            ParameterDelta::MassScale(s) => p.link_mass.iter_mut().for_each(|m| *m *= s),
            ParameterDelta::ArmatureScale(s) => p.joint_armature.iter_mut().for_each(|a| *a *= s),
            ParameterDelta::DampingAdd(d) => p.joint_damping.iter_mut().for_each(|c| *c += d),
            ParameterDelta::ComShift(d) => p.link_com.iter_mut().for_each(|c| c[0] += d),
            ParameterDelta::MotorScale(s) => p.motor_constant_scale.iter_mut().for_each(|k| *k *= s),
            ParameterDelta::ContactTimeConstScale(s) => p.contact_stiffness_time_const *= s,
            ParameterDelta::FrictionScale(s) => p.contact_friction_coeff *= s,
            ParameterDelta::JointStiffness(k) => p.joint_stiffness.iter_mut().for_each(|x| *x += k),
        }
        p
    }

    pub fn name(&self) -> &'static str {
        match self {
            ParameterDelta::MassScale(_) => "mass_scale",
            ParameterDelta::ArmatureScale(_) => "armature_scale",
            ParameterDelta::DampingAdd(_) => "damping_add",
            ParameterDelta::ComShift(_) => "com_shift",
            ParameterDelta::MotorScale(_) => "motor_scale",
            ParameterDelta::ContactTimeConstScale(_) => "contact_time_const_scale",
            ParameterDelta::FrictionScale(_) => "friction_scale",
            ParameterDelta::JointStiffness(_) => "joint_stiffness",
        }
    }

    /// One delta per randomizable quantity, at the edge of the reference ranges.
    pub fn standard_set() -> Vec<ParameterDelta> {
        vec![
            ParameterDelta::MassScale(1.4),
            ParameterDelta::ArmatureScale(1.4),
            ParameterDelta::DampingAdd(2.9),
            ParameterDelta::ComShift(0.03),
            ParameterDelta::MotorScale(0.8),
            ParameterDelta::ContactTimeConstScale(2.0),
            ParameterDelta::FrictionScale(0.6),
            ParameterDelta::JointStiffness(80.0),
        ]
    }
}

/// Systems on which the identity is checked.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fixture {
    OneLink,
    TwoLink,
    StandingBiped,
}

impl Fixture {
    pub const ALL: [Fixture; 3] = [Fixture::OneLink, Fixture::TwoLink, Fixture::StandingBiped];

    pub fn name(self) -> &'static str {
        match self {
            Fixture::OneLink => "one_link",
            Fixture::TwoLink => "two_link",
            Fixture::StandingBiped => "standing_biped",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == name)
            .ok_or_else(|| Error::Config(format!("unknown fixture '{name}'")))
    }

    /// Mechanism, nominal parameters, initial state and step size.
    pub fn build(self) -> (Mechanism, ModelParams, SimState, f64) {
        match self {
            Fixture::OneLink => {
                let (m, p) = pendulum(1.2, 0.5);
                (m, p, SimState::new(vec![0.8], vec![-0.5]), 1e-3)
            }
            Fixture::TwoLink => {
                let (m, p) = chain(&[1.0, 0.8], &[0.5, 0.4]);
                (m, p, SimState::new(vec![0.9, -0.5], vec![0.5, -1.0]), 1e-3)
            }
            Fixture::StandingBiped => {
                let (m, p) = biped();
                let st = SimState::at_rest(m.default_q(m.nominal_base_height - 0.004));
                (m, p, st, PHYSICS_DT)
            }
        }
    }

    /// Input torque at step `k`: a sinusoid for the chains, a joint PD hold for the biped.
    pub fn torque(self, mech: &Mechanism, k: usize, s: &SimState) -> Vec<f64> {
        match self {
            Fixture::OneLink => vec![2.0 * (0.01 * k as f64).sin()],
            Fixture::TwoLink => vec![3.0 * (0.01 * k as f64).sin(), -1.0],
            Fixture::StandingBiped => {
                let off = mech.base_dofs();
                (0..mech.n_joints())
                    .map(|j| 400.0 * (mech.q_default[j] - s.q[off + j]) - 40.0 * s.qd[off + j])
                    .collect()
            }
        }
    }
}

/// One fixture × delta outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixtureReport {
    pub fixture: Fixture,
    pub delta: ParameterDelta,
    pub report: EquivalenceReport,
}

pub fn check_fixture(fixture: Fixture, delta: ParameterDelta, horizon: usize, tol: f64) -> Result<FixtureReport> {
    let (m, nominal, x0, dt) = fixture.build();
    let perturbed = delta.apply(&nominal);
    let report = verify_equivalence(
        &m,
        &x0,
        |k, s| fixture.torque(&m, k, s),
        &nominal,
        &perturbed,
        &TerrainProfile::flat(),
        dt,
        horizon,
        tol,
    )?;
    Ok(FixtureReport { fixture, delta, report })
}

/// Every standard delta on every fixture.
pub fn check_all(horizon: usize, tol: f64) -> Result<Vec<FixtureReport>> {
    EquivConfig { horizon, tolerance: tol, ..EquivConfig::default() }.run()
}

/// Selection of fixtures and deltas to check, as read by `equiv-check`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EquivConfig {
    pub fixtures: Vec<Fixture>,
    pub deltas: Vec<ParameterDelta>,
    pub horizon: usize,
    pub tolerance: f64,
}

impl Default for EquivConfig {
    fn default() -> Self {
        EquivConfig { fixtures: Fixture::ALL.to_vec(), deltas: ParameterDelta::standard_set(), horizon: 1000, tolerance: 1e-8 }
    }
}

impl EquivConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let c: EquivConfig = toml::from_str(s)?;
        if c.fixtures.is_empty() || c.deltas.is_empty() || c.horizon == 0 || !(c.tolerance > 0.0) {
            return Err(Error::Config("equivalence check needs fixtures, deltas, a horizon and a positive tolerance".into()));
        }
        Ok(c)
    }

    pub fn run(&self) -> Result<Vec<FixtureReport>> {
        let mut out = Vec::with_capacity(self.fixtures.len() * self.deltas.len());
        for &f in &self.fixtures {
            for &d in &self.deltas {
                out.push(check_fixture(f, d, self.horizon, self.tolerance)?);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_models_give_zero_torque() {
        let (m, p) = chain(&[1.0, 1.5], &[0.6, 0.4]);
        let st = SimState::new(vec![0.4, -0.3], vec![1.0, 2.0]);
        let out = step(&m, &p, &TerrainProfile::flat(), &st, &Actuation::input_only(vec![1.0, -2.0]), 1e-3).unwrap();
        let tau = compute_tau_dr(&m, &st, &out.qdd, &[1.0, -2.0], &p, &p, &TerrainProfile::flat()).unwrap();
        assert!(tau.iter().all(|t| *t == 0.0));
    }

    #[test]
    fn pendulum_mass_scale_closed_form() {
        // point mass m at length l; only m l² and m g l sin θ depend on mass.
        let (m, nominal) = pendulum(1.0, 1.0);
        let perturbed = ParameterDelta::MassScale(1.2).apply(&nominal);
        let theta = std::f64::consts::FRAC_PI_2;
        let st = SimState::at_rest(vec![theta]);
        let out = step(&m, &perturbed, &TerrainProfile::flat(), &st, &Actuation::zero(1), 1e-3).unwrap();
        let qdd = out.qdd[0];
        let tau = compute_tau_dr(&m, &st, &[qdd], &[0.0], &nominal, &perturbed, &TerrainProfile::flat()).unwrap();
        let (mass, l, g) = (1.0, 1.0, 9.81);
        let expected = -0.2 * mass * g * l * theta.sin() - 0.2 * mass * l * l * qdd;
        assert!((tau[0] - expected).abs() < 1e-12, "{} vs {expected}", tau[0]);
    }

    #[test]
    fn motor_scale_delta_arithmetic() {
        let (m, nominal) = pendulum(1.0, 1.0);
        let perturbed = ParameterDelta::MotorScale(0.8).apply(&nominal);
        let st = SimState::at_rest(vec![0.0]);
        let out = step(&m, &perturbed, &TerrainProfile::flat(), &st, &Actuation::input_only(vec![10.0]), 1e-3).unwrap();
        let tau = compute_tau_dr(&m, &st, &out.qdd, &[10.0], &nominal, &perturbed, &TerrainProfile::flat()).unwrap();
        // nominal must see 10 − 2 = 8 N·m
        assert!((tau[0] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn gravity_component_linear_in_single_link_mass_delta() {
        let (m, nominal) = chain(&[1.0, 2.0], &[0.5, 0.5]);
        let st = SimState::at_rest(vec![0.7, -0.2]);
        let qdd = [0.0, 0.0];
        let with = |d: f64| {
            let mut p = nominal.clone();
            p.link_mass[1] += d;
            compute_tau_dr(&m, &st, &qdd, &[0.0, 0.0], &nominal, &p, &TerrainProfile::flat()).unwrap()
        };
        let (a, b) = (with(0.3), with(0.6));
        for i in 0..2 {
            assert!((b[i] - 2.0 * a[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_delta_report_is_exact() {
        let (m, p) = chain(&[1.0, 1.0], &[0.5, 0.5]);
        let st = SimState::at_rest(vec![0.5, 0.1]);
        let r = verify_equivalence(&m, &st, |_, _| vec![0.0, 0.0], &p, &p, &TerrainProfile::flat(), 1e-3, 200, 1e-8).unwrap();
        assert_eq!(r.worst, 0.0);
        assert!(r.passed);
    }

    #[test]
    fn every_delta_on_every_fixture() {
        for r in check_all(1000, 1e-8).unwrap() {
            assert!(r.report.passed, "{} {}: worst {}", r.fixture.name(), r.delta.name(), r.report.worst);
            assert_eq!(r.report.max_deviation.len(), 1000);
        }
    }

    #[test]
    fn fixture_names_parse() {
        for f in Fixture::ALL {
            assert_eq!(Fixture::parse(f.name()).unwrap(), f);
        }
        assert!(Fixture::parse("tripod").is_err());
    }

    #[test]
    fn config_from_toml() {
        let c = EquivConfig::from_toml_str(
            "fixtures = [\"one_link\"]\nhorizon = 50\ndeltas = [{ kind = \"mass_scale\", value = 1.4 }]\n",
        )
        .unwrap();
        assert_eq!(c.deltas, vec![ParameterDelta::MassScale(1.4)]);
        assert_eq!(c.tolerance, 1e-8);
        let r = c.run().unwrap();
        assert_eq!(r.len(), 1);
        assert!(r[0].report.passed);
        assert!(EquivConfig::from_toml_str("horizon = 0").is_err());
        assert!(EquivConfig::from_toml_str("fixtures = [\"tripod\"]").is_err());
    }
}
