//! Scenario files, controller arms, run metrics and the seeded ablation.

mod ablation;
mod arms;
mod config;
mod metrics;
mod report;

pub use ablation::{
    perturbed, run_ablation, run_arm, thread_cap, trial_seeds, Ablation, ArmSummary, TrialResult,
    POSITION_PERTURBATION, SWING_PERTURBATION_DEG, THREADS_ENV,
};
pub use arms::Arm;
pub use config::{safe_set_violations, ConfigError, ScenarioConfig};
pub use metrics::{
    compute_metrics, median, PairClearance, RunMetrics, OVERSHOOT_DISTANCE, SUCCESS_RADIUS,
    SUCCESS_SWING_DEG, VIOLATION_TOLERANCE,
};
pub use report::{
    ablation_json, ablation_table, metrics_json, round_json, round_sig, trajectory_header,
    write_trajectory_csv,
};
