use nalgebra::{DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::kinematics::{body_coms, Frames};
use super::*;

fn random_state(rng: &mut ChaCha8Rng, mech: &Mechanism) -> SimState {
    let n = mech.n_dofs();
    let mut q: Vec<f64> = (0..n).map(|_| rng.random_range(-1.5..1.5)).collect();
    if mech.base == BaseKind::Floating {
        q[1] += 1.0;
    }
    let qd = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
    SimState::new(q, qd)
}

#[test]
fn pendulum_hanging_has_no_gravity_torque() {
    let (m, p) = pendulum(1.0, 1.0);
    let t = dynamics_terms(&m, &p, &SimState::at_rest(vec![0.0])).unwrap();
    assert!(t.bias[0].abs() < 1e-15);
}

#[test]
fn pendulum_horizontal_gravity_torque() {
    let (m, p) = pendulum(1.0, 1.0);
    let t = dynamics_terms(&m, &p, &SimState::at_rest(vec![std::f64::consts::FRAC_PI_2])).unwrap();
    assert!((t.bias[0].abs() - 9.81).abs() < 1e-12);
}

#[test]
fn dimension_mismatch_is_reported() {
    let (m, p) = pendulum(1.0, 1.0);
    assert!(dynamics_terms(&m, &p, &SimState::at_rest(vec![0.0, 1.0])).is_err());
}

/// Kinetic energy from finite-differenced body motion, independent of `M`.
fn kinetic_energy_oracle(mech: &Mechanism, params: &ModelParams, q: &[f64], qd: &[f64]) -> f64 {
    let h = 1e-6;
    let shifted = |s: f64| -> Frames {
        let qs: Vec<f64> = q.iter().zip(qd).map(|(a, b)| a + s * b).collect();
        Frames::compute(mech, params, &qs, qd)
    };
    let (fp, fm) = (shifted(h), shifted(-h));
    let (cp, cm) = (body_coms(&fp, params), body_coms(&fm, params));
    let mut ke = 0.0;
    for i in 0..mech.bodies.len() {
        let v = [(cp[i][0] - cm[i][0]) / (2.0 * h), (cp[i][1] - cm[i][1]) / (2.0 * h)];
        let w = (fp.angle[i] - fm.angle[i]) / (2.0 * h);
        ke += 0.5 * params.link_mass[i] * (v[0] * v[0] + v[1] * v[1]);
        ke += 0.5 * params.link_inertia[i] * w * w;
    }
    let off = mech.base_dofs();
    for j in 0..mech.n_joints() {
        ke += 0.5 * params.joint_armature[j] * qd[off + j] * qd[off + j];
    }
    ke
}

#[test]
fn mass_matrix_matches_kinetic_energy_hessian() {
    // KE is quadratic in q̇, so the Hessian from polarization is exact up to FD noise.
    for (mech, params) in [chain(&[1.0, 2.0], &[0.8, 0.6]), biped()] {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let st = random_state(&mut rng, &mech);
        let n = mech.n_dofs();
        let m = dynamics_terms(&mech, &params, &st).unwrap().mass;
        let ke = |v: &[f64]| kinetic_energy_oracle(&mech, &params, &st.q, v);
        for a in 0..n {
            for b in 0..n {
                let mut ea = vec![0.0; n];
                let mut eb = vec![0.0; n];
                ea[a] = 1.0;
                eb[b] += 1.0;
                let sum: Vec<f64> = ea.iter().zip(&eb).map(|(x, y)| x + y).collect();
                let hess = ke(&sum) - ke(&ea) - ke(&eb);
                let scale = m[(a, a)].abs().max(m[(b, b)].abs()).max(1e-3);
                assert!(
                    (hess - m[(a, b)]).abs() <= 1e-6 * scale,
                    "M[{a},{b}] = {} vs {hess}",
                    m[(a, b)]
                );
            }
        }
    }
}

#[test]
fn mass_matrix_symmetric_positive_definite() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut fixtures = vec![biped()];
    for n in 2..=9 {
        let masses: Vec<f64> = (0..n).map(|k| 0.5 + 0.3 * k as f64).collect();
        let lengths: Vec<f64> = (0..n).map(|k| 0.3 + 0.05 * k as f64).collect();
        fixtures.push(chain(&masses, &lengths));
    }
    for trial in 0..10_000 {
        let (mech, params) = &fixtures[trial % fixtures.len()];
        let st = random_state(&mut rng, mech);
        let m = dynamics_terms(mech, params, &st).unwrap().mass;
        assert!((&m - m.transpose()).amax() < 1e-12);
        let eig = SymmetricEigen::new(m).eigenvalues.min();
        assert!(eig > 0.0, "trial {trial}: min eigenvalue {eig}");
    }
}

#[test]
fn passive_pendulum_conserves_energy() {
    let (mech, params) = chain(&[1.0, 1.0], &[0.7, 0.5]);
    let terrain = TerrainProfile::flat();
    let mut st = SimState::at_rest(vec![1.2, -0.4]);
    let energy = |s: &SimState| {
        kinetic_energy(&mech, &params, s).unwrap() + potential_energy(&mech, &params, s)
    };
    let floor = potential_energy(&mech, &params, &SimState::at_rest(vec![0.0, 0.0]));
    let e0 = energy(&st);
    let act = Actuation::zero(2);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        st = step(&mech, &params, &terrain, &st, &act, 1e-3).unwrap().state;
        worst = worst.max((energy(&st) - e0).abs());
    }
    let drift = worst / (e0 - floor);
    assert!(drift <= 0.02, "energy drift {drift}");
}

#[test]
fn free_fall_base() {
    let (mech, params) = biped();
    let terrain = TerrainProfile::flat();
    let q = mech.default_q(3.0);
    let st = SimState::at_rest(q.clone());
    let dt = 1e-3;
    let out = step(&mech, &params, &terrain, &st, &Actuation::zero(6), dt).unwrap();
    // whole-body free fall: every coordinate but z stays put at rest
    assert!((out.qdd[1] + params.gravity).abs() < 1e-9);
    let dz = out.state.q[1] - q[1];
    assert!((dz + params.gravity * dt * dt).abs() < 1e-12);
    let mut s = out.state;
    for _ in 0..99 {
        s = step(&mech, &params, &terrain, &s, &Actuation::zero(6), dt).unwrap().state;
    }
    let t: f64 = 0.1;
    // semi-implicit Euler: z drop = g dt² n(n+1)/2 vs ½ g t²
    let exact = 0.5 * params.gravity * t * t;
    assert!(((q[1] - s.q[1]) - exact).abs() < params.gravity * t * dt);
}

#[test]
fn integrator_uses_exposed_decomposition() {
    let (mech, params) = biped();
    let terrain = generate_terrain(2, 0.02, 2.0, 20.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..200 {
        let mut st = random_state(&mut rng, &mech);
        st.q[1] = rng.random_range(0.85..0.95);
        let act = Actuation {
            tau_input: (0..6).map(|_| rng.random_range(-120.0..120.0)).collect(),
            tau_pert: (0..6).map(|_| rng.random_range(-50.0..50.0)).collect(),
            base_wrench: [rng.random_range(-25.0..25.0), rng.random_range(-25.0..25.0), 0.0],
        };
        let out = step(&mech, &params, &terrain, &st, &act, 2e-3).unwrap();
        let qdd = DVector::from_column_slice(&out.qdd);
        let lhs = &out.terms.mass * &qdd + &out.terms.bias;
        for i in 0..9 {
            let r = lhs[i] + out.contacts.generalized[i] - out.tau_total[i];
            assert!(r.abs() <= 1e-9 * (1.0 + out.tau_total[i].abs()), "residual {r}");
        }
    }
}

#[test]
fn zero_injection_matches_plain_step_and_is_deterministic() {
    let (mech, params) = biped();
    let terrain = TerrainProfile::flat();
    let st = SimState::at_rest(mech.default_q(0.93));
    let tau = vec![10.0, -20.0, 5.0, 10.0, -20.0, 5.0];
    let a = step(&mech, &params, &terrain, &st, &Actuation::input_only(tau.clone()), 2e-3).unwrap();
    let explicit = Actuation {
        tau_input: tau,
        tau_pert: vec![0.0; 6],
        base_wrench: [0.0; 3],
    };
    let b = step(&mech, &params, &terrain, &st, &explicit, 2e-3).unwrap();
    assert_eq!(a.state, b.state);
}

#[test]
fn motor_scale_only_scales_policy_torque() {
    let (mech, mut params) = pendulum(1.0, 1.0);
    params.motor_constant_scale[0] = 0.8;
    let act = Actuation {
        tau_input: vec![10.0],
        tau_pert: vec![3.0],
        base_wrench: [0.0; 3],
    };
    let tau = sim::total_torque(&mech, &params, &act).unwrap();
    assert!((tau[0] - 11.0).abs() < 1e-12);
    params.torque_limit[0] = 5.0;
    let tau = sim::total_torque(&mech, &params, &act).unwrap();
    assert!((tau[0] - 7.0).abs() < 1e-12);
}

#[test]
fn non_positive_dt_rejected() {
    let (mech, params) = pendulum(1.0, 1.0);
    let st = SimState::at_rest(vec![0.0]);
    let r = step(&mech, &params, &TerrainProfile::flat(), &st, &Actuation::zero(1), 0.0);
    assert!(r.is_err());
}

#[test]
fn divergence_is_an_error() {
    let (mech, params) = pendulum(1.0, 1.0);
    let st = SimState::new(vec![0.0], vec![f64::NAN]);
    let r = step(&mech, &params, &TerrainProfile::flat(), &st, &Actuation::zero(1), 1e-3);
    assert!(matches!(r, Err(crate::error::Error::Diverged { .. })));
}

fn biped_at_height(h: f64) -> (Mechanism, ModelParams, SimState) {
    let (mech, params) = biped();
    // put the soles at height `h`
    let st = SimState::at_rest(mech.default_q(mech.nominal_base_height + h));
    (mech, params, st)
}

#[test]
fn separated_feet_feel_nothing() {
    let (mech, params, st) = biped_at_height(0.01);
    let c = contact_forces(&mech, &params, &TerrainProfile::flat(), &st).unwrap();
    assert!(c.points.iter().all(|p| p.normal == 0.0 && p.tangential == 0.0));
    assert_eq!(c.foot_in_contact, [false, false]);
    assert!(c.generalized.iter().all(|x| *x == 0.0));
}

#[test]
fn static_penetration_is_hookean() {
    let (mech, mut params, st) = biped_at_height(-0.004);
    let flat = TerrainProfile::flat();
    let c = contact_forces(&mech, &params, &flat, &st).unwrap();
    let k = params.contact_stiffness();
    for p in c.points.iter().filter(|p| p.penetration > 0.0) {
        assert!((p.normal - k * p.penetration).abs() < 1e-9 * k);
    }
    let n1 = c.foot_forces[0][0];
    params.contact_stiffness_time_const *= 2.0;
    let c2 = contact_forces(&mech, &params, &flat, &st).unwrap();
    assert!((c2.foot_forces[0][0] - n1 / 4.0).abs() < 1e-9 * n1);
}

#[test]
fn tangential_force_respects_coulomb_cap() {
    let (mech, params, mut st) = biped_at_height(-0.005);
    for v in [-5.0, -0.05, 0.0, 0.02, 3.0] {
        st.qd[0] = v;
        let c = contact_forces(&mech, &params, &TerrainProfile::flat(), &st).unwrap();
        for p in &c.points {
            assert!(p.normal >= 0.0);
            assert!(p.tangential.abs() <= params.contact_friction_coeff * p.normal + 1e-12);
        }
    }
}

#[test]
fn normal_force_continuous_in_penetration() {
    let (mech, params, _) = biped_at_height(0.0);
    let flat = TerrainProfile::flat();
    let force_at = |h: f64| {
        let st = SimState::at_rest(mech.default_q(mech.nominal_base_height + h));
        contact_forces(&mech, &params, &flat, &st).unwrap().foot_forces[0][0]
    };
    let mut prev = force_at(1e-3);
    let mut h = 1e-3;
    while h > -2e-3 {
        h -= 1e-6;
        let f = force_at(h);
        assert!((f - prev).abs() <= 2.0 * params.contact_stiffness() * 1e-6 + 1e-9);
        prev = f;
    }
}

#[test]
fn biped_settles_under_pd_hold() {
    // Stability of the stiff contact / friction terms at the control step size.
    let (mech, params) = biped();
    let flat = TerrainProfile::flat();
    let mut st = SimState::at_rest(mech.default_q(mech.nominal_base_height + 0.01));
    for _ in 0..2000 {
        let tau: Vec<f64> = (0..6)
            .map(|j| 400.0 * (mech.q_default[j] - st.q[3 + j]) - 40.0 * st.qd[3 + j])
            .collect();
        st = step(&mech, &params, &flat, &st, &Actuation::input_only(tau), PHYSICS_DT)
            .unwrap()
            .state;
    }
    assert!(st.qd.iter().all(|v| v.abs() < 0.05), "{:?}", st.qd);
    assert!((st.q[1] - mech.nominal_base_height).abs() < 0.03, "{}", st.q[1]);
}
