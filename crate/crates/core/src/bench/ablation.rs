//! Seeded trials across controller arms.

use nalgebra::{Vector2, Vector3};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::arms::Arm;
use super::config::{safe_set_violations, ScenarioConfig};
use super::metrics::{compute_metrics, median, RunMetrics};
use crate::ocp::Nmpc;
use crate::sim::{run_closed_loop, Scenario, TrajectoryLog};

/// Half-width of the initial-position perturbation cube [m].
pub const POSITION_PERTURBATION: f64 = 0.05;
/// Bound on the initial swing perturbation [deg].
pub const SWING_PERTURBATION_DEG: f64 = 3.0;
/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "SLUNGMPC_THREADS";

/// Per-trial seeds drawn from the master seed; shared by every arm.
pub fn trial_seeds(master: u64, trials: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    (0..trials).map(|_| rng.next_u64()).collect()
}

/// The scenario with its initial state perturbed by `seed`.
pub fn perturbed(scenario: &Scenario, seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sc = scenario.clone();
    let a = POSITION_PERTURBATION;
    let g = SWING_PERTURBATION_DEG.to_radians();
    sc.initial.xi += Vector3::new(
        rng.random_range(-a..=a),
        rng.random_range(-a..=a),
        rng.random_range(-a..=a),
    );
    sc.initial.gamma += Vector2::new(rng.random_range(-g..=g), rng.random_range(-g..=g));
    sc.sim.seed = seed;
    sc
}

/// One closed-loop run of `arm` on `scenario`.
pub fn run_arm(config: &ScenarioConfig, arm: Arm, scenario: &Scenario) -> TrajectoryLog {
    let mut nmpc = Nmpc::new(
        config.controller_for(arm),
        scenario.model,
        scenario.safety,
        scenario.energy,
        scenario.sim.dt_ctrl,
    );
    run_closed_loop(scenario, &mut nmpc)
}

#[derive(Debug, Clone)]
pub struct TrialResult {
    pub arm: Arm,
    pub trial: usize,
    pub seed: u64,
    /// `Err` when the perturbed start left the safe set or the run panicked.
    pub metrics: Result<RunMetrics, String>,
}

#[derive(Debug, Clone)]
pub struct ArmSummary {
    pub arm: Arm,
    pub trials: usize,
    pub failed_runs: usize,
    pub successes: usize,
    pub violations: usize,
    pub infeasibility: usize,
    pub overshoots: usize,
    pub min_clearance: f64,
    pub max_swing_deg: f64,
    pub mean_rmse: f64,
    pub solve_ms_median: f64,
    pub solve_ms_max: f64,
}

#[derive(Debug, Clone)]
pub struct Ablation {
    pub scenario: String,
    pub seed: u64,
    pub trials: usize,
    pub runs: Vec<TrialResult>,
    pub summaries: Vec<ArmSummary>,
}

/// Worker count from the environment, if set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()?
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
}

fn run_trial(config: &ScenarioConfig, arm: Arm, trial: usize, seed: u64) -> TrialResult {
    let sc = perturbed(&config.scenario, seed);
    let violations = safe_set_violations(&sc, &sc.initial);
    let metrics = if violations.is_empty() {
        std::panic::catch_unwind(|| {
            let log = run_arm(config, arm, &sc);
            compute_metrics(&log, &sc)
        })
        .map_err(|e| {
            e.downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| (*s).to_owned()))
                .unwrap_or_else(|| "run panicked".to_owned())
        })
    } else {
        Err(violations.join("; "))
    };
    TrialResult {
        arm,
        trial,
        seed,
        metrics,
    }
}

/// Runs every `(arm, trial)` pair in parallel and folds the results in
/// `(arm, trial)` order.
pub fn run_ablation(config: &ScenarioConfig, arms: &[Arm], trials: usize, seed: u64) -> Ablation {
    let seeds = trial_seeds(seed, trials);
    let jobs: Vec<(Arm, usize, u64)> = arms
        .iter()
        .flat_map(|&a| seeds.iter().enumerate().map(move |(k, &s)| (a, k, s)))
        .collect();
    let work = || -> Vec<TrialResult> {
        jobs.par_iter()
            .map(|&(arm, trial, s)| run_trial(config, arm, trial, s))
            .collect()
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap() {
        builder = builder.num_threads(n);
    }
    let runs = match builder.build() {
        Ok(pool) => pool.install(work),
        Err(_) => jobs
            .iter()
            .map(|&(arm, trial, s)| run_trial(config, arm, trial, s))
            .collect(),
    };
    let summaries = arms.iter().map(|&a| summarize(a, &runs)).collect();
    Ablation {
        scenario: config.name.clone(),
        seed,
        trials,
        runs,
        summaries,
    }
}

fn summarize(arm: Arm, runs: &[TrialResult]) -> ArmSummary {
    let mine: Vec<&TrialResult> = runs.iter().filter(|r| r.arm == arm).collect();
    let ok: Vec<&RunMetrics> = mine
        .iter()
        .filter_map(|r| r.metrics.as_ref().ok())
        .collect();
    let mut medians: Vec<f64> = ok.iter().map(|m| m.solve_ms_median).collect();
    ArmSummary {
        arm,
        trials: mine.len(),
        failed_runs: mine.len() - ok.len(),
        successes: ok.iter().filter(|m| m.success).count(),
        violations: ok.iter().map(|m| m.violations).sum(),
        infeasibility: ok.iter().map(|m| m.infeasibility_episodes).sum(),
        overshoots: ok.iter().map(|m| m.overshoots).sum(),
        min_clearance: ok
            .iter()
            .flat_map(|m| m.min_clearance.iter().map(|c| c.min_clearance))
            .fold(f64::INFINITY, f64::min),
        max_swing_deg: ok.iter().map(|m| m.max_swing_deg).fold(0.0, f64::max),
        mean_rmse: if ok.is_empty() {
            f64::NAN
        } else {
            ok.iter()
                .map(|m| m.rmse_xyz.iter().map(|v| v * v).sum::<f64>().sqrt())
                .sum::<f64>()
                / ok.len() as f64
        },
        solve_ms_median: median(&mut medians),
        solve_ms_max: ok.iter().map(|m| m.solve_ms_max).fold(0.0, f64::max),
    }
}
