//! Per-run metrics computed from a trajectory log.

use nalgebra::Vector3;
use serde::Serialize;

use crate::model::{body_position, Body};
use crate::sim::{RunOutcome, Scenario, SolverStatus, TrajectoryLog};

/// Distance below `d_min` that counts as entering the obstacle region [m].
pub const VIOLATION_TOLERANCE: f64 = 1e-4;
/// Excursion past the goal that counts as an overshoot [m].
pub const OVERSHOOT_DISTANCE: f64 = 0.10;
/// Final-position tolerance of the success flag [m].
pub const SUCCESS_RADIUS: f64 = 0.10;
/// Final swing bound of the success flag [deg].
pub const SUCCESS_SWING_DEG: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairClearance {
    pub obstacle: String,
    pub body: &'static str,
    /// Smallest Euclidean distance minus `d_min` over the logged ticks [m].
    pub min_clearance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetrics {
    pub success: bool,
    pub outcome: RunOutcome,
    pub min_clearance: Vec<PairClearance>,
    pub max_swing_deg: f64,
    /// Root-mean-square error against the active waypoint per axis [m].
    pub rmse_xyz: [f64; 3],
    pub final_error: f64,
    pub final_swing_deg: f64,
    /// Entries into the obstacle regions, summed over pairs.
    pub violations: usize,
    /// Maximal runs of consecutive non-optimal ticks.
    pub infeasibility_episodes: usize,
    pub infeasible_ticks: usize,
    pub overshoots: usize,
    /// Largest tick-to-tick storage increase while the reference is fixed [J].
    pub max_storage_increase: f64,
    pub solve_ms_median: f64,
    pub solve_ms_max: f64,
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn swing_deg(g: &nalgebra::Vector2<f64>) -> f64 {
    g.x.abs().max(g.y.abs()).to_degrees()
}

/// Counts rising edges of `flags`, treating the state before the first
/// sample as `false`.
fn entries(flags: impl Iterator<Item = bool>) -> usize {
    let mut prev = false;
    let mut count = 0;
    for f in flags {
        if f && !prev {
            count += 1;
        }
        prev = f;
    }
    count
}

pub fn compute_metrics(log: &TrajectoryLog, scenario: &Scenario) -> RunMetrics {
    let records = &log.records;
    let model = &scenario.model;
    let goal = scenario
        .waypoints
        .last()
        .map_or_else(Vector3::zeros, |w| w.position);
    let last = records.last().expect("trajectory log is empty");

    let min_clearance = log
        .pairs
        .iter()
        .map(|&(i, body)| {
            let o = &scenario.obstacles[i];
            let d = scenario.safety.min_distance(o, body);
            let min = records
                .iter()
                .map(|r| {
                    (body_position(&r.state, body, model) - o.state_at(r.t).position).norm() - d
                })
                .fold(f64::INFINITY, f64::min);
            PairClearance {
                obstacle: o.name.clone(),
                body: match body {
                    Body::Quadrotor => "quadrotor",
                    Body::Payload => "payload",
                },
                min_clearance: min,
            }
        })
        .collect();

    let violations = log
        .pairs
        .iter()
        .enumerate()
        .map(|(p, &(i, body))| {
            let d = scenario.safety.min_distance(&scenario.obstacles[i], body);
            let inner = (d - VIOLATION_TOLERANCE).max(0.0);
            let threshold = inner * inner - d * d;
            entries(records.iter().map(|r| r.h_min_interval[p] < threshold))
        })
        .sum();

    let infeasible = records.iter().map(|r| r.status != SolverStatus::Optimal);
    let infeasibility_episodes = entries(infeasible.clone());
    let infeasible_ticks = infeasible.filter(|&b| b).count();

    let mut sq = [0.0; 3];
    for r in records {
        let e = r.state.xi - r.reference;
        for k in 0..3 {
            sq[k] += e[k] * e[k];
        }
    }
    let n = records.len() as f64;
    let rmse_xyz = sq.map(|s| (s / n).sqrt());

    let final_index = scenario.waypoints.len().saturating_sub(1);
    let overshoots = records
        .iter()
        .position(|r| r.waypoint == final_index)
        .and_then(|k| {
            let dir = goal - records[k].state.xi;
            let len = dir.norm();
            (len > OVERSHOOT_DISTANCE).then(|| (k, dir / len))
        })
        .map_or(0, |(k, dir)| {
            let s: Vec<f64> = records[k..]
                .iter()
                .map(|r| (r.state.xi - goal).dot(&dir))
                .collect();
            match s.iter().position(|&v| v >= 0.0) {
                Some(c) => entries(s[c..].iter().map(|&v| v > OVERSHOOT_DISTANCE)),
                None => 0,
            }
        });

    let max_storage_increase = records
        .windows(2)
        .filter(|w| w[0].waypoint == w[1].waypoint)
        .map(|w| w[1].storage - w[0].storage)
        .fold(f64::NEG_INFINITY, f64::max);

    let mut solve: Vec<f64> = records[..records.len() - 1]
        .iter()
        .map(|r| r.solve_time_ms)
        .collect();
    let solve_ms_max = solve.iter().copied().fold(0.0, f64::max);
    let solve_ms_median = if solve.is_empty() {
        0.0
    } else {
        median(&mut solve)
    };

    let final_error = (last.state.xi - goal).norm();
    let final_swing_deg = swing_deg(&last.state.gamma);
    let success = log.outcome == RunOutcome::Completed
        && final_error <= SUCCESS_RADIUS
        && final_swing_deg < SUCCESS_SWING_DEG
        && violations == 0;

    RunMetrics {
        success,
        outcome: log.outcome,
        min_clearance,
        max_swing_deg: records
            .iter()
            .map(|r| swing_deg(&r.state.gamma))
            .fold(0.0, f64::max),
        rmse_xyz,
        final_error,
        final_swing_deg,
        violations,
        infeasibility_episodes,
        infeasible_ticks,
        overshoots,
        max_storage_increase: if max_storage_increase.is_finite() {
            max_storage_increase
        } else {
            0.0
        },
        solve_ms_median,
        solve_ms_max,
    }
}
