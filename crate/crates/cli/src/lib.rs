//! `slungmpc run|ablate|validate <scenario>`.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use slungmpc_core::bench::{
    ablation_json, ablation_table, compute_metrics, metrics_json, perturbed, run_ablation, run_arm,
    write_trajectory_csv, Arm, RunMetrics, ScenarioConfig,
};
use slungmpc_core::sim::{Fallback, TrajectoryLog};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_SAFETY: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
/// Run finished without violations or solver failures but missed the goal.
pub const EXIT_INCOMPLETE: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "slungmpc",
    version,
    about = "Passivity-constrained NMPC for a quadrotor with a slung payload"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Common {
    /// Scenario file.
    pub scenario: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Master seed; for `run` it also perturbs the initial state.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Trials per arm (ablate only).
    #[arg(long)]
    pub trials: Option<usize>,
    /// Controller arm; repeat for several.
    #[arg(long = "arm")]
    pub arms: Vec<String>,
    /// Override a scenario key, e.g. `energy.rho=0.25`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Only write files; print nothing on success.
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// One closed-loop run; writes trajectory.csv and metrics.json.
    Run(Common),
    /// Seeded trials across arms; writes ablation.json and ablation.txt.
    Ablate(Common),
    /// Checks a scenario without running it.
    Validate(Common),
}

fn load(c: &Common) -> Result<ScenarioConfig, i32> {
    ScenarioConfig::load(&c.scenario, &c.overrides).map_err(|e| {
        eprintln!("error: {}: invalid scenario", c.scenario.display());
        for m in e.messages() {
            eprintln!("  - {m}");
        }
        EXIT_CONFIG
    })
}

fn arms(c: &Common) -> Result<Vec<Arm>, i32> {
    c.arms
        .iter()
        .map(|a| a.parse::<Arm>())
        .collect::<Result<_, _>>()
        .map_err(|e| {
            eprintln!("error: {e}");
            EXIT_CONFIG
        })
}

fn write(path: &Path, contents: &[u8]) -> Result<(), i32> {
    fs::write(path, contents).map_err(|e| {
        eprintln!("error: cannot write {}: {e}", path.display());
        EXIT_CONFIG
    })
}

fn create_dir(dir: &Path) -> Result<(), i32> {
    fs::create_dir_all(dir).map_err(|e| {
        eprintln!("error: cannot create {}: {e}", dir.display());
        EXIT_CONFIG
    })
}

/// Exit code for a finished run.
pub fn run_exit_code(log: &TrajectoryLog, m: &RunMetrics) -> i32 {
    if m.violations > 0 {
        EXIT_SAFETY
    } else if log.longest_failure_streak() > Fallback::HOLD_TICKS {
        EXIT_SOLVER
    } else if m.success {
        EXIT_OK
    } else {
        EXIT_INCOMPLETE
    }
}

pub fn cmd_run(c: &Common) -> i32 {
    let inner = || -> Result<i32, i32> {
        let cfg = load(c)?;
        let arm = arms(c)?.first().copied().unwrap_or(cfg.arm);
        let scenario = match c.seed {
            Some(s) => perturbed(&cfg.scenario, s),
            None => cfg.scenario.clone(),
        };
        let log = run_arm(&cfg, arm, &scenario);
        let m = compute_metrics(&log, &scenario);
        create_dir(&c.out)?;
        let mut csv = Vec::new();
        write_trajectory_csv(&log, &mut csv).map_err(|e| {
            eprintln!("error: {e}");
            EXIT_CONFIG
        })?;
        write(&c.out.join("trajectory.csv"), &csv)?;
        write(
            &c.out.join("metrics.json"),
            metrics_json(&cfg.name, arm.name(), &m).as_bytes(),
        )?;
        if !c.quiet {
            println!(
                "{} [{}]: success={} violations={} infeasibility_episodes={} overshoots={} \
                 final_error={:.4} m solve_median={:.2} ms",
                cfg.name,
                arm,
                m.success,
                m.violations,
                m.infeasibility_episodes,
                m.overshoots,
                m.final_error,
                m.solve_ms_median
            );
        }
        Ok(run_exit_code(&log, &m))
    };
    inner().unwrap_or_else(|code| code)
}

pub fn cmd_ablate(c: &Common) -> i32 {
    let inner = || -> Result<i32, i32> {
        let cfg = load(c)?;
        let mut selected = arms(c)?;
        if selected.is_empty() {
            selected = Arm::ALL.to_vec();
        }
        let trials = c.trials.unwrap_or(cfg.trials);
        if trials == 0 {
            eprintln!("error: --trials must be at least 1");
            return Err(EXIT_CONFIG);
        }
        let seed = c.seed.unwrap_or(cfg.scenario.sim.seed);
        let ablation = run_ablation(&cfg, &selected, trials, seed);
        create_dir(&c.out)?;
        let table = ablation_table(&ablation);
        write(
            &c.out.join("ablation.json"),
            ablation_json(&ablation).as_bytes(),
        )?;
        write(&c.out.join("ablation.txt"), table.as_bytes())?;
        if !c.quiet {
            print!("{table}");
        }
        for r in &ablation.runs {
            if let Err(e) = &r.metrics {
                eprintln!("warning: {} trial {}: {e}", r.arm, r.trial);
            }
        }
        Ok(EXIT_OK)
    };
    inner().unwrap_or_else(|code| code)
}

pub fn cmd_validate(c: &Common) -> i32 {
    match load(c).and_then(|cfg| arms(c).map(|_| cfg)) {
        Ok(cfg) => {
            println!(
                "{}: ok ({} waypoints, {} obstacles, arm {})",
                cfg.name,
                cfg.scenario.waypoints.len(),
                cfg.scenario.obstacles.len(),
                cfg.arm
            );
            EXIT_OK
        }
        Err(code) => code,
    }
}

pub fn run_cli(cli: &Cli) -> i32 {
    match &cli.command {
        Command::Run(c) => cmd_run(c),
        Command::Ablate(c) => cmd_ablate(c),
        Command::Validate(c) => cmd_validate(c),
    }
}
