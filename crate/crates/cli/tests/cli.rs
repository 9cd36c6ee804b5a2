use std::fs;
use std::process::{Command, Output};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_torquegap")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const TINY_TRAIN: &str = r#"
[task]
method = "dr"
mode = "torque"
kp = 400.0
kd = 40.0
command_vx = { low = 0.0, high = 0.6 }
episode_s = 20.0
perturb_joint_limit = 50.0
perturb_base_limit = 25.0
training_perturbations = true
"#;

fn tiny_train_toml() -> String {
    let mut cfg = torquegap::trainer::TrainConfig::default_for(torquegap::randomization::Method::Dr);
    cfg.ppo.n_envs = 2;
    cfg.ppo.minibatch_envs = 1;
    cfg.ppo.horizon = 4;
    cfg.ppo.total_updates = 2;
    cfg.ppo.checkpoint_every = 1;
    cfg.to_toml_string().unwrap()
}

#[test]
fn unknown_flag_prints_usage_and_exits_2() {
    let o = bin(&["plan-dump", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_eq!(bin(&["teleport"]).status.code(), Some(2));
}

#[test]
fn missing_config_exits_2() {
    let o = bin(&["equiv-check", "--config", "/definitely/not/here.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn malformed_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.toml");
    fs::write(&p, TINY_TRAIN).unwrap();
    let o = bin(&["train", "--config", p.to_str().unwrap(), "--out", dir.path().join("run").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn equiv_check_emits_json_and_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("pendulum.toml");
    fs::write(&cfg, "fixtures = [\"one_link\"]\nhorizon = 200\n").unwrap();
    let o = bin(&["equiv-check", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let arr = v.as_array().unwrap();
    assert_eq!(arr.len(), 8);
    for r in arr {
        assert_eq!(r["report"]["passed"], true);
        assert_eq!(r["report"]["horizon"], 200);
    }
}

#[test]
fn equiv_check_failure_is_nonzero() {
    // a tolerance no floating-point step can meet on the biped
    let o = bin(&["equiv-check", "--fixture", "standing_biped", "--horizon", "20", "--tol", "1e-300"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn plan_dump_csv_columns() {
    let o = bin(&["plan-dump", "--vx", "0.8", "--steps", "2", "--samples", "10"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("s,x,y,z,ψ"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 22);
    assert!(rows.iter().all(|r| r.len() == 5));
    // step period 0.5 s at 0.8 m/s: the second swing ends 0.4 m ahead of the first landing
    assert!((rows[21][1] - rows[10][1] - 0.4).abs() < 1e-5);
}

#[test]
fn train_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("train.toml");
    fs::write(&cfg, tiny_train_toml()).unwrap();
    let run = dir.path().join("run");
    let o = bin(&["train", "--config", cfg.to_str().unwrap(), "--seed", "4", "--out", run.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).lines().count(), 3);
    for f in ["updates.csv", "checkpoint_1.json", "checkpoint_2.json", "final.json"] {
        assert!(run.join(f).exists(), "{f}");
    }

    let ev = dir.path().join("eval");
    let ck = run.join("final.json");
    let ck = ck.to_str().unwrap();
    let o = bin(&[
        "eval", "--checkpoint", ck, "--scenario", "rough_terrain", "--episodes", "2", "--duration", "0.2", "--out",
        ev.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let m: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(m["episodes"], 2);
    assert!(ev.join("metrics.json").exists() && ev.join("scenario.toml").exists());
    let csvs = fs::read_dir(&ev).unwrap().filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "csv")).count();
    assert_eq!(csvs, 2);

    let o = bin(&["eval", "--checkpoint", ck, "--scenario", "moon"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_row_count() {
    let dir = tempfile::tempdir().unwrap();
    let train: torquegap::trainer::TrainConfig = torquegap::trainer::TrainConfig::from_toml_str(&tiny_train_toml()).unwrap();
    let mut sweep = torquegap::sweep::SweepConfig::new(train);
    sweep.train.ppo.total_updates = 1;
    sweep.episodes = 1;
    sweep.duration_s = 0.05;
    let cfg = dir.path().join("sweep.toml");
    fs::write(&cfg, sweep.to_toml_string().unwrap()).unwrap();
    let out = dir.path().join("sweep");
    let o = bin(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--scenarios",
        "all",
        "--seeds",
        "3",
        "--methods",
        "dr",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("method,scenario,seed,success,rmse_vx,mean_vx,drift,episode_len"));
    assert_eq!(lines.count(), 8 * 3);
    assert_eq!(fs::read_to_string(out.join("results.csv")).unwrap(), text);
}
