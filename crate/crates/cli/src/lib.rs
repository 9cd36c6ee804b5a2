//! `torquegap` subcommands: `train`, `eval`, `equiv-check`, `plan-dump`, `sweep`.
//!
//! Exit codes: 0 success, 1 runtime failure (including a failed equivalence
//! check), 2 usage error or unreadable config.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand};
use torquegap::agent::Checkpoint;
use torquegap::dynamics::CONTROL_DT;
use torquegap::equivalence::{EquivConfig, Fixture};
use torquegap::eval::{run_scenario, EvalScenario, ScenarioKind};
use torquegap::randomization::Method;
use torquegap::reference::{plan_rollout, Command, PlannerConfig};
use torquegap::sweep::{run_sweep, to_csv, SweepConfig, SweepRow};
use torquegap::trainer::{train_to_dir, TrainConfig, UpdateLog};
use torquegap::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "torquegap", version, about = "Planar biped sim-to-real laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// RNG seed; overrides the config value where one exists.
    #[arg(long)]
    seed: Option<u64>,
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file or directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Train a policy; writes updates.csv and checkpoints into --out.
    Train {
        #[command(flatten)]
        common: Common,
        /// dr, erfi or proposed (overrides the config).
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        updates: Option<usize>,
    },
    /// Evaluate a checkpoint on one scenario; prints metrics JSON.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Scenario name, ignored when --config gives a full scenario.
        #[arg(long, default_value = "nominal")]
        scenario: String,
        #[arg(long, default_value_t = 0.3)]
        vx: f64,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Check the parameter-to-torque equivalence; prints the reports as JSON.
    EquivCheck {
        #[command(flatten)]
        common: Common,
        /// Fixture name (default: all).
        #[arg(long)]
        fixture: Option<String>,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Dump swing-foot references as CSV `s,x,y,z,ψ`.
    PlanDump {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.6)]
        vx: f64,
        #[arg(long, default_value_t = 0.0)]
        vy: f64,
        #[arg(long, default_value_t = 0.0)]
        wz: f64,
        #[arg(long, default_value_t = 4)]
        steps: usize,
        #[arg(long, default_value_t = 20)]
        samples: usize,
    },
    /// Train and evaluate a method × scenario × seed matrix; prints the results CSV.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// `all` or a comma-separated list of scenario names.
        #[arg(long)]
        scenarios: Option<String>,
        /// Number of training seeds, counted from --seed (default 0).
        #[arg(long)]
        seeds: Option<usize>,
        /// Comma-separated method names.
        #[arg(long)]
        methods: Option<String>,
        #[arg(long)]
        episodes: Option<usize>,
    },
}

impl Cmd {
    fn common(&self) -> &Common {
        match self {
            Cmd::Train { common, .. }
            | Cmd::Eval { common, .. }
            | Cmd::EquivCheck { common, .. }
            | Cmd::PlanDump { common, .. }
            | Cmd::Sweep { common, .. } => common,
        }
    }
}

/// Parse `argv` (program name first) and run; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let config = match read_config(cli.command.common()) {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("error: {msg}\n\n{}", Cli::command().render_usage());
            return 2;
        }
    };
    match execute(cli.command, config) {
        Ok(code) => code,
        Err(e @ (Error::Config(_) | Error::Toml(_))) => {
            eprintln!("error: {e}\n\n{}", Cli::command().render_usage());
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn read_config(common: &Common) -> std::result::Result<Option<String>, String> {
    match &common.config {
        None => Ok(None),
        Some(p) => fs::read_to_string(p).map(Some).map_err(|e| format!("cannot read config {}: {e}", p.display())),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(p, text)?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn list<T>(s: &str, parse: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    s.split(',').map(str::trim).filter(|x| !x.is_empty()).map(parse).collect()
}

fn execute(cmd: Cmd, config: Option<String>) -> Result<i32> {
    match cmd {
        Cmd::Train { common, method, updates } => {
            let mut cfg = match &config {
                Some(s) => TrainConfig::from_toml_str(s)?,
                None => TrainConfig::default_for(Method::Dr),
            };
            if let Some(m) = method {
                cfg.task.method = Method::parse(&m)?;
            }
            if let Some(u) = updates {
                cfg.ppo.total_updates = u;
            }
            if let Some(s) = common.seed {
                cfg.ppo.seed = s;
            }
            let out = common.out.unwrap_or_else(|| PathBuf::from("runs/train"));
            println!("{}", UpdateLog::csv_header());
            train_to_dir(cfg, &out, |log| println!("{}", log.csv_row()))?;
            eprintln!("wrote {}", out.display());
            Ok(0)
        }
        Cmd::Eval { common, checkpoint, scenario, vx, episodes, duration } => {
            let policy = Checkpoint::load(&checkpoint)?.to_policy()?;
            let mut sc = match &config {
                Some(s) => EvalScenario::from_toml_str(s)?,
                None => EvalScenario::new(ScenarioKind::parse(&scenario)?, vx),
            };
            if let Some(n) = episodes {
                sc.n_episodes = n;
            }
            if let Some(d) = duration {
                sc.duration_s = d;
            }
            if let Some(s) = common.seed {
                sc.seeds = vec![s];
            }
            let run = run_scenario(&policy, &sc)?;
            let json = serde_json::to_string_pretty(&run.metrics).map_err(Error::from)? + "\n";
            match &common.out {
                Some(dir) => {
                    fs::create_dir_all(dir)?;
                    fs::write(dir.join("metrics.json"), &json)?;
                    fs::write(dir.join("scenario.toml"), sc.to_toml_string()?)?;
                    for (i, log) in run.logs.iter().enumerate() {
                        fs::write(dir.join(format!("episode_{:03}_seed{}.csv", i, log.seed)), log.to_csv())?;
                    }
                    print!("{json}");
                }
                None => print!("{json}"),
            }
            Ok(0)
        }
        Cmd::EquivCheck { common, fixture, horizon, tol } => {
            let mut cfg = match &config {
                Some(s) => EquivConfig::from_toml_str(s)?,
                None => EquivConfig::default(),
            };
            if let Some(f) = fixture {
                cfg.fixtures = list(&f, Fixture::parse)?;
            }
            if let Some(h) = horizon {
                cfg.horizon = h;
            }
            if let Some(t) = tol {
                cfg.tolerance = t;
            }
            let reports = cfg.run()?;
            for r in &reports {
                eprintln!(
                    "{:<15} {:<25} worst {:.3e} {}",
                    r.fixture.name(),
                    r.delta.name(),
                    r.report.worst,
                    if r.report.passed { "pass" } else { "FAIL" }
                );
            }
            let json = serde_json::to_string_pretty(&reports).map_err(Error::from)? + "\n";
            emit(common.out.as_deref(), &json)?;
            Ok(if reports.iter().all(|r| r.report.passed) { 0 } else { 1 })
        }
        Cmd::PlanDump { common, vx, vy, wz, steps, samples } => {
            let cfg = match &config {
                Some(s) => PlannerConfig::from_toml_str(s)?,
                None => PlannerConfig::default(),
            };
            let pts = plan_rollout(Command { vx, vy, wz }, steps, samples, CONTROL_DT, &cfg);
            let mut csv = String::from("s,x,y,z,ψ\n");
            for p in pts {
                csv.push_str(&format!("{},{},{},{},{}\n", p.s, p.x, p.y, p.z, p.psi));
            }
            emit(common.out.as_deref(), &csv)?;
            Ok(0)
        }
        Cmd::Sweep { common, scenarios, seeds, methods, episodes } => {
            let mut cfg = match &config {
                Some(s) => SweepConfig::from_toml_str(s)?,
                None => SweepConfig::new(TrainConfig::default_for(Method::Dr)),
            };
            if let Some(s) = scenarios {
                cfg.scenarios =
                    if s == "all" { ScenarioKind::ALL.to_vec() } else { list(&s, ScenarioKind::parse)? };
            }
            let first = common.seed.unwrap_or(0);
            if let Some(n) = seeds {
                cfg.seeds = (first..first + n as u64).collect();
            } else if let Some(s) = common.seed {
                cfg.seeds = vec![s];
            }
            if let Some(m) = methods {
                cfg.methods = list(&m, Method::parse)?;
            }
            if let Some(e) = episodes {
                cfg.episodes = e;
            }
            println!("{}", SweepRow::CSV_HEADER);
            let rows = run_sweep(&cfg, common.out.as_deref(), |r| println!("{}", r.csv_row()))?;
            if let Some(dir) = &common.out {
                fs::create_dir_all(dir)?;
                fs::write(dir.join("results.csv"), to_csv(&rows))?;
            }
            Ok(0)
        }
    }
}
