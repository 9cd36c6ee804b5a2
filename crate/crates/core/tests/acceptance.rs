//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Trained policies for criteria 6 and 7 are cached under the cargo target
//! tmpdir, keyed by their full training config, so repeated runs only pay for
//! evaluation. Delete `target/tmp/acceptance-runs` to force retraining.

use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use torquegap::agent::gradcheck::{layer_gradient_error, Layer, TOL};
use torquegap::agent::{priv_dim, Policy};
use torquegap::equivalence::{check_all, Fixture, ParameterDelta};
use torquegap::eval::{run_scenario, EvalScenario, Metrics, ScenarioKind};
use torquegap::randomization::{perturbation_gate, sample_perturb_weights, Method, PerturbNet, RunningScale};
use torquegap::reference::{quartic_coefficients, step_period, Command, PlannerConfig};
use torquegap::rewards::{
    compute_total, impact_penalty, landing_penalty, mirror_inputs, orientation_reward, yaw_drift_reward, FootSignals,
    RewardConfig, RewardInputs,
};
use torquegap::sweep::{policy_for, SweepConfig};
use torquegap::trainer::{TrainConfig, Trainer, UpdateLog};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn run_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance-runs")
}

// ---------------------------------------------------------------- criterion 1

fn equivalence_oracle() -> Outcome {
    let t0 = Instant::now();
    let reports = match check_all(1000, 1e-8) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("error: {e}")),
    };
    let secs = t0.elapsed().as_secs_f64();
    let worst = reports.iter().map(|r| r.report.worst).fold(0.0, f64::max);
    let failed: Vec<String> = reports
        .iter()
        .filter(|r| !r.report.passed)
        .map(|r| format!("{}/{}", r.fixture.name(), r.delta.name()))
        .collect();
    let required = [
        ParameterDelta::MassScale(1.4),
        ParameterDelta::ArmatureScale(1.4),
        ParameterDelta::DampingAdd(2.9),
        ParameterDelta::ComShift(0.03),
        ParameterDelta::MotorScale(0.8),
        ParameterDelta::ContactTimeConstScale(2.0),
        ParameterDelta::JointStiffness(80.0),
    ];
    let covered = Fixture::ALL
        .iter()
        .all(|f| required.iter().all(|d| reports.iter().any(|r| r.fixture == *f && r.delta == *d)));
    let passed = failed.is_empty() && covered && secs < 5.0;
    outcome(
        passed,
        format!("{} checks over {} fixtures, all required deltas covered {covered}, worst deviation {worst:.2e} (tol 1e-8), {secs:.2} s (limit 5 s), failed {failed:?}", reports.len(), Fixture::ALL.len()),
    )
}

// ---------------------------------------------------------------- criterion 2

fn perturbation_network() -> Outcome {
    let (d_priv, nj) = (priv_dim(6), 6);
    let limits = [50.0, 25.0];
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let scale = RunningScale::new(d_priv, 0);

    let mut zero_ok = true;
    let mut bound = 0.0f64;
    for _ in 0..200 {
        let net = PerturbNet::sample(d_priv, nj, limits[0], limits[1], &mut rng);
        let z = net.evaluate(&vec![0.0; d_priv], &scale).expect("dims");
        zero_ok &= z.tau_pert.iter().chain(&z.f_base).all(|x| *x == 0.0);
        for _ in 0..20 {
            let o: Vec<f64> = (0..d_priv).map(|_| rng.random_range(-1e4..1e4)).collect();
            let out = net.evaluate(&o, &scale).expect("dims");
            bound = bound.max(out.tau_pert.iter().map(|t| t.abs() / limits[0]).fold(0.0, f64::max));
            bound = bound.max(out.f_base.iter().map(|f| f.abs() / limits[1]).fold(0.0, f64::max));
        }
    }

    let dims = PerturbNet::dims(d_priv, nj);
    let mut sums = vec![(0.0f64, 0.0f64, 0usize); dims.len() - 1];
    while sums.iter().any(|s| s.2 < 1_000_000) {
        for (k, w) in sample_perturb_weights(&dims, &mut rng).iter().enumerate() {
            if sums[k].2 >= 1_000_000 {
                continue;
            }
            for x in w.iter().take(1_000_000 - sums[k].2) {
                sums[k].0 += x;
                sums[k].1 += x * x;
                sums[k].2 += 1;
            }
        }
    }
    let std_err: Vec<f64> = sums
        .iter()
        .zip(dims.windows(2))
        .map(|((s, sq, n), w)| {
            let n = *n as f64;
            let std = (sq / n - (s / n).powi(2)).sqrt();
            std / (1.5 / (w[0] + w[1]) as f64).sqrt() - 1.0
        })
        .collect();
    let std_ok = std_err.iter().all(|e| e.abs() <= 0.01);

    let mut gate_ok = true;
    for n in [1usize, 4, 7, 64] {
        let mut cfg = TrainConfig::default_for(Method::Proposed);
        cfg.ppo.n_envs = n;
        cfg.ppo.minibatch_envs = 1;
        let mut tr = Trainer::new(cfg).expect("trainer");
        gate_ok &= tr.envs.iter().map(|e| e.gated).collect::<Vec<_>>() == perturbation_gate(n);
        for _ in 0..100 {
            let mut active = 0;
            for env in &mut tr.envs {
                env.reset().expect("reset");
                active += usize::from(env.perturb.active);
            }
            gate_ok &= active == n.div_ceil(2);
        }
    }

    outcome(
        zero_ok && bound <= 1.0 && std_ok && gate_ok,
        format!(
            "zero->zero {zero_ok}, max |out|/limit {bound:.4}, layer std rel. error {:?} (tol 1%), gate ceil(n/2) over 100 episodes {gate_ok}",
            std_err.iter().map(|e| format!("{:+.4}", e)).collect::<Vec<_>>()
        ),
    )
}

// ---------------------------------------------------------------- criterion 3

fn planner() -> Outcome {
    let cfg = PlannerConfig::default();
    let t08 = step_period(Command::forward(0.8), &cfg);
    let t06 = step_period(Command::forward(0.6), &cfg);
    let period_ok = (t08 - 0.5).abs() <= 1e-3 && (t06 - 2.0 / 3.0).abs() <= 1e-3;

    let z = |c: &[f64; 5], s: f64| c.iter().rev().fold(0.0, |acc, k| acc * s + k);
    let dz = |c: &[f64; 5], s: f64| c[1] + 2.0 * c[2] * s + 3.0 * c[3] * s * s + 4.0 * c[4] * s.powi(3);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut residual = 0.0f64;
    for _ in 0..1000 {
        let h = rng.random_range(0.01..0.3);
        let v = rng.random_range(-1.0..1.0);
        let c = quartic_coefficients(h, v);
        for r in [z(&c, 0.0), z(&c, 1.0), z(&c, 0.5) - h, dz(&c, 0.0) - v, dz(&c, 1.0)] {
            residual = residual.max(r.abs());
        }
    }
    let mut zero_lift = 0.0f64;
    for h in [0.02, 0.05, 0.08, 0.13] {
        let c = quartic_coefficients(h, 0.0);
        let want = [0.0, 0.0, 16.0 * h, -32.0 * h, 16.0 * h];
        zero_lift = zero_lift.max(c.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    outcome(
        period_ok && residual <= 1e-10 && zero_lift <= 1e-12,
        format!("T(0.8)={t08:.6}, T(0.6)={t06:.6}, quartic residual {residual:.2e}, v_lift=0 coeff error {zero_lift:.2e}"),
    )
}

// ---------------------------------------------------------------- criterion 4

// (ω_base, ω_cmd, expected) with σ_yaw = 0.09.
const YAW: [(f64, f64, f64); 20] = [
    (-0.048, 0.3, 0.0),
    (0.114, 0.05, -0.7989988087742681),
    (0.465, -0.5, 0.0),
    (0.1, 0.099, -0.7090395411356899),
    (-0.043, -0.08, -0.20409194208291193),
    (-0.47, 0.3, 0.0),
    (-0.29, 0.0, -0.9999690369515326),
    (-0.413, -0.08, -0.9999999992844011),
    (-0.013, -0.5, 0.0),
    (-0.079, 0.05, -0.5372155236704576),
    (0.496, 0.3, 0.0),
    (-0.204, 0.0, -0.9941292787242615),
    (0.087, 0.099, -0.6071959706143937),
    (-0.31, -0.5, 0.0),
    (-0.391, 0.3, 0.0),
    (-0.325, -0.5, 0.0),
    (0.415, -0.5, 0.0),
    (-0.368, -0.08, -0.9999999451691226),
    (0.424, 0.1, 0.0),
    (-0.181, 0.0, -0.9824827277875927),
];

// (roll, pitch, Δψ, expected) with σ = (0.15, 0.2, 0.25).
const ORI: [(f64, f64, f64, f64); 20] = [
    (0.285, 0.225, -0.039, 0.007446873493327312),
    (-0.325, -0.157, -0.327, 0.0008924559114694344),
    (0.191, 0.12, 0.099, 0.11786754585025745),
    (-0.029, -0.048, 0.274, 0.2735710862366475),
    (-0.075, 0.041, 0.345, 0.11119998856482147),
    (0.213, -0.08, 0.277, 0.03323791621630805),
    (-0.024, 0.384, -0.082, 0.021936924757065518),
    (-0.388, -0.072, 0.338, 0.0001754163188493272),
    (0.047, -0.042, -0.247, 0.3267951432058999),
    (-0.4, 0.291, 0.38, 9.747145245984063e-06),
    (0.113, -0.32, 0.391, 0.0037967603660634384),
    (-0.341, -0.233, 0.109, 0.0012121429600620516),
    (0.06, 0.293, -0.254, 0.03549082736401311),
    (0.103, 0.043, 0.15, 0.4157229978304216),
    (0.37, -0.209, 0.164, 0.0004970572017408678),
    (0.382, -0.299, -0.017, 0.00016244678104258928),
    (-0.387, -0.185, -0.043, 0.0005305432905186074),
    (-0.289, -0.04, -0.135, 0.017533456127799482),
    (0.328, 0.161, 0.37, 0.000490573172286659),
    (-0.34, 0.037, 0.19, 0.0031840453189020683),
];

// (foot force, landing detected, expected) with threshold 1100 N.
const IMPACT: [(f64, bool, f64); 20] = [
    (1109.92, true, -98.40640000000144),
    (1114.6, false, 0.0),
    (1122.73, true, -516.6529000000008),
    (1103.76, true, -14.137599999999932),
    (1085.52, true, 0.0),
    (1115.63, true, -244.2969000000034),
    (1109.7, true, -94.09000000000088),
    (1093.38, true, 0.0),
    (1096.57, false, 0.0),
    (1093.19, false, 0.0),
    (1120.75, true, -430.5625),
    (1090.83, true, 0.0),
    (1085.14, true, 0.0),
    (1117.74, true, -314.7076000000003),
    (1113.19, true, -173.97610000000145),
    (1114.99, false, 0.0),
    (1099.65, true, 0.0),
    (1092.24, false, 0.0),
    (1122.19, false, 0.0),
    (1105.99, false, 0.0),
];

// (foot height, foot vertical velocity, expected) with threshold 1.5 m/s below 0.1 m.
const LANDING: [(f64, f64, f64); 20] = [
    (0.119, 2.655, 0.0),
    (0.004, -0.206, 0.0),
    (0.135, -2.321, 0.0),
    (0.082, 0.444, 0.0),
    (0.042, 2.498, -0.9980000000000002),
    (0.12, -2.167, 0.0),
    (0.0, 2.228, -0.7280000000000002),
    (0.147, 2.234, 0.0),
    (0.081, 1.067, 0.0),
    (0.104, 2.799, 0.0),
    (0.054, -2.004, -0.504),
    (0.045, 0.619, 0.0),
    (0.051, -1.14, 0.0),
    (0.047, -0.113, 0.0),
    (0.146, -2.863, 0.0),
    (0.003, 1.726, -0.22599999999999998),
    (0.001, -2.72, -1.2200000000000002),
    (0.029, 1.534, -0.03400000000000003),
    (0.052, -0.871, 0.0),
    (0.016, 1.49, 0.0),
];

fn random_inputs(rng: &mut ChaCha8Rng) -> RewardInputs {
    let mut v = |n: usize, lo: f64, hi: f64| (0..n).map(|_| rng.random_range(lo..hi)).collect::<Vec<f64>>();
    let q_default = vec![0.3, -0.6, 0.3, 0.3, -0.6, 0.3];
    let (q, qd, tau, action, prev_action) = (v(6, -1.5, 1.5), v(6, -4.0, 4.0), v(6, -100.0, 100.0), v(6, -1.0, 1.0), v(6, -1.0, 1.0));
    let s = v(24, -1.0, 1.0);
    let foot = |k: usize, contact: bool, landing: bool| FootSignals {
        pos: [s[k], 0.1 * s[k + 1].abs()],
        vel: [s[k + 2], 3.0 * s[k + 3]],
        clearance: 0.15 * s[k + 4].abs(),
        in_contact: contact,
        force: [1200.0 * s[k + 5].abs(), 50.0 * s[k + 6]],
        landing,
    };
    let flags: [bool; 4] = std::array::from_fn(|i| s[16 + i] > 0.0);
    RewardInputs {
        cmd: Command { vx: 0.8 * s[14], vy: 0.0, wz: 0.0 },
        base_vx: s[15],
        base_height: 0.92 + 0.1 * s[20],
        pitch: 0.4 * s[21],
        pitch_rate: s[22],
        pitch_acc: 5.0 * s[23],
        feet: [foot(0, flags[0], flags[1]), foot(7, flags[2], flags[3])],
        stance: u8::from(s[13] > 0.0),
        phase: s[12].abs(),
        swing_ref: [s[1] + 0.05, 0.05],
        stance_ref: [s[8] - 0.02, 0.0],
        q,
        q_default,
        q_limits: vec![1.2, 2.2, 0.9, 1.2, 2.2, 0.9],
        qd,
        tau,
        action,
        prev_action,
        contact_power: 30.0 * s[19].abs(),
        body_weight: 300.0,
    }
}

fn reward_equations() -> Outcome {
    let cfg = RewardConfig::default();
    let mut worst = [0.0f64; 4];
    for (wz, cw, want) in YAW {
        worst[0] = worst[0].max((yaw_drift_reward(wz, cw, cfg.yaw_drift.sigma) - want).abs());
    }
    for (r, p, d, want) in ORI {
        worst[1] = worst[1].max((orientation_reward(r, p, d, cfg.orientation_sigmas) - want).abs());
    }
    for (f, landing, want) in IMPACT {
        worst[2] = worst[2].max((impact_penalty(f, landing, cfg.impact_threshold) - want).abs());
    }
    for (z, zd, want) in LANDING {
        worst[3] = worst[3].max((landing_penalty(z, zd, cfg.landing_threshold, cfg.landing_height) - want).abs());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut mirror = 0.0f64;
    for _ in 0..500 {
        let inp = random_inputs(&mut rng);
        let a = compute_total(&inp, &cfg).total;
        let b = compute_total(&mirror_inputs(&inp), &cfg).total;
        mirror = mirror.max((a - b).abs() / a.abs().max(1.0));
    }
    outcome(
        worst.iter().all(|w| *w <= 1e-12) && mirror <= 1e-12,
        format!(
            "max error yaw {:.1e}, orientation {:.1e}, impact {:.1e}, landing {:.1e} (tol 1e-12); mirror asymmetry {mirror:.1e}",
            worst[0], worst[1], worst[2], worst[3]
        ),
    )
}

// ---------------------------------------------------------------- criterion 5

fn gradients() -> Outcome {
    let errs: Vec<(Layer, f64)> =
        Layer::ALL.iter().enumerate().map(|(k, l)| (*l, layer_gradient_error(*l, 100, 50 + k as u64))).collect();
    outcome(
        errs.iter().all(|(_, e)| *e <= TOL),
        errs.iter().map(|(l, e)| format!("{l:?} {e:.1e}")).collect::<Vec<_>>().join(", ") + " (tol 1e-4, 100 instances each)",
    )
}

// ---------------------------------------------------------------- criteria 6, 7

const UPDATES: usize = 300;
const SEEDS: [u64; 3] = [0, 1, 2];

fn sweep_config() -> SweepConfig {
    let mut train = TrainConfig::default_for(Method::Dr);
    train.ppo.total_updates = UPDATES;
    SweepConfig::new(train)
}

/// Per-update `(mean_return, mean_train_return)` read back from `updates.csv`.
fn returns_from_csv(csv: &str) -> Vec<(f64, f64)> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().expect("header").split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).expect("column");
    let (raw, train) = (col("mean_return"), col("mean_train_return"));
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[raw].parse().expect("float"), f[train].parse().expect("float"))
        })
        .collect()
}

fn train_cached(cfg: &SweepConfig, method: Method, seed: u64) -> (Policy, Vec<(f64, f64)>) {
    let dir = run_dir();
    let policy = policy_for(cfg, method, seed, Some(&dir)).expect("training");
    let csv = std::fs::read_to_string(dir.join(format!("{}_seed{seed}/updates.csv", method.name()))).expect("updates.csv");
    (policy, returns_from_csv(&csv))
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn training_smoke() -> Outcome {
    let cfg = sweep_config();
    let t0 = Instant::now();
    let (policy, logs) = train_cached(&cfg, Method::Dr, 0);
    let secs = t0.elapsed().as_secs_f64();
    let first = mean(logs[..10].iter().map(|l| l.1));
    let last = mean(logs[logs.len() - 10..].iter().map(|l| l.1));
    let raw_first = mean(logs[..10].iter().map(|l| l.0));
    let raw_last = mean(logs[logs.len() - 10..].iter().map(|l| l.0));
    let mut sc = EvalScenario::new(ScenarioKind::Nominal, 0.3);
    sc.duration_s = 20.0;
    let m = run_scenario(&policy, &sc).expect("eval").metrics;
    let ratio = last / first;
    outcome(
        logs.len() == UPDATES && first > 0.0 && ratio >= 3.0 && m.success_rate >= 0.6,
        format!(
            "{} updates (train/load {secs:.0} s); training return first10 {first:.2} last10 {last:.2} ratio {ratio:.2} (need 3); \
             raw return {raw_first:.0} -> {raw_last:.0}; 20 s success at 0.3 m/s {:.1}% of {} (need 60%)",
            logs.len(),
            100.0 * m.success_rate,
            m.episodes
        ),
    )
}

fn robustness_ordering() -> Outcome {
    let cfg = sweep_config();
    let stiff = cfg.scenario(ScenarioKind::JointStiffness);
    let contact = EvalScenario::contact_combined(cfg.command(ScenarioKind::SoftContact));
    let mut vx = [0.0; 3];
    let mut survival = [0.0; 3];
    let mut per_seed = Vec::new();
    for (i, method) in Method::ALL.into_iter().enumerate() {
        let (mut v, mut s) = (Vec::new(), Vec::new());
        for seed in SEEDS {
            let (policy, _) = train_cached(&cfg, method, seed);
            let a: Metrics = run_scenario(&policy, &stiff).expect("eval").metrics;
            let b: Metrics = run_scenario(&policy, &contact).expect("eval").metrics;
            v.push(a.mean_vx);
            s.push(b.mean_episode_s);
        }
        per_seed.push(format!(
            "{} v_x [{}] survival [{}]",
            method.name(),
            v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" "),
            s.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join(" ")
        ));
        vx[i] = mean(v.into_iter());
        survival[i] = mean(s.into_iter());
    }
    let idx = |m: Method| Method::ALL.iter().position(|x| *x == m).expect("method");
    let (p, d, e) = (idx(Method::Proposed), idx(Method::Dr), idx(Method::Erfi));
    let passed = vx[p] > vx[d] && vx[p] > vx[e] && survival[p] >= survival[d] && survival[p] >= survival[e];
    outcome(
        passed,
        format!(
            "stiffness mean v_x dr {:.3} erfi {:.3} proposed {:.3} m/s; soft+rough+foot survival dr {:.2} erfi {:.2} proposed {:.2} s; per seed: {}",
            vx[d],
            vx[e],
            vx[p],
            survival[d],
            survival[e],
            survival[p],
            per_seed.join("; ")
        ),
    )
}

// ---------------------------------------------------------------- criterion 8

fn determinism() -> Outcome {
    let run = |method: Method| {
        let mut cfg = TrainConfig::default_for(method);
        cfg.ppo.n_envs = 8;
        cfg.ppo.minibatch_envs = 4;
        cfg.ppo.horizon = 32;
        cfg.ppo.total_updates = 3;
        cfg.ppo.seed = 17;
        let mut tr = Trainer::new(cfg).expect("trainer");
        tr.run(|_, _| Ok(())).expect("train");
        let curve: Vec<String> = tr.log.iter().map(UpdateLog::csv_row).collect();
        let mut sc = EvalScenario::contact_combined(0.3);
        sc.n_episodes = 4;
        sc.duration_s = 2.0;
        let run = run_scenario(&tr.checkpoint().to_policy().expect("policy"), &sc).expect("eval");
        (curve, format!("{:?}", run.metrics), run.logs.iter().map(|l| l.to_csv()).collect::<Vec<_>>())
    };
    let mut same = true;
    for method in Method::ALL {
        same &= run(method) == run(method);
    }
    outcome(same, format!("loss curves, metrics and episode logs identical across two runs for {:?}", Method::ALL))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("equivalence oracle", equivalence_oracle),
        ("perturbation network", perturbation_network),
        ("planner", planner),
        ("reward equations", reward_equations),
        ("gradient correctness", gradients),
        ("training smoke test", training_smoke),
        ("robustness ordering", robustness_ordering),
        ("determinism", determinism),
    ];
    let mut failures = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let o = f();
        failures += usize::from(!o.passed);
        println!(
            "criterion {} {} {name}: {} [{:.1} s]",
            i + 1,
            if o.passed { "PASS" } else { "FAIL" },
            o.detail,
            t0.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
