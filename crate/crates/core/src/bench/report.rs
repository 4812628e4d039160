//! Trajectory CSV, metrics JSON and the ablation table.

use std::io::Write;

use serde_json::{json, Map, Value};

use super::ablation::Ablation;
use super::metrics::RunMetrics;
use crate::model::Body;
use crate::sim::TrajectoryLog;

/// Rounds to `digits` significant decimal digits.
pub fn round_sig(x: f64, digits: usize) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", digits.saturating_sub(1), x)
        .parse()
        .unwrap_or(x)
}

/// Rounds every floating-point number in `v` to 6 significant digits.
pub fn round_json(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(r) = n
                .as_f64()
                .and_then(|x| serde_json::Number::from_f64(round_sig(x, 6)))
            {
                *n = r;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_json),
        Value::Object(map) => map.values_mut().for_each(round_json),
        _ => {}
    }
}

fn metrics_value(m: &RunMetrics, timing: bool) -> Value {
    let mut v = serde_json::to_value(m).unwrap_or(Value::Null);
    if !timing {
        if let Value::Object(map) = &mut v {
            map.remove("solve_ms_median");
            map.remove("solve_ms_max");
        }
    }
    v
}

/// Metrics of a single run, including solver timing.
pub fn metrics_json(scenario: &str, arm: &str, m: &RunMetrics) -> String {
    let mut v = json!({ "scenario": scenario, "arm": arm, "metrics": metrics_value(m, true) });
    round_json(&mut v);
    serde_json::to_string_pretty(&v).unwrap_or_default() + "\n"
}

/// Ablation results without wall-clock quantities, so equal seeds give
/// byte-identical output.
pub fn ablation_json(a: &Ablation) -> String {
    let arms: Vec<Value> = a
        .summaries
        .iter()
        .map(|s| {
            let runs: Vec<Value> = a
                .runs
                .iter()
                .filter(|r| r.arm == s.arm)
                .map(|r| {
                    let mut o = Map::new();
                    o.insert("trial".into(), json!(r.trial));
                    o.insert("seed".into(), json!(r.seed));
                    match &r.metrics {
                        Ok(m) => o.insert("metrics".into(), metrics_value(m, false)),
                        Err(e) => o.insert("error".into(), json!(e)),
                    };
                    Value::Object(o)
                })
                .collect();
            json!({
                "arm": s.arm.name(),
                "trials": s.trials,
                "failed_runs": s.failed_runs,
                "successes": s.successes,
                "violations": s.violations,
                "infeasibility": s.infeasibility,
                "overshoots": s.overshoots,
                "min_clearance": s.min_clearance,
                "max_swing_deg": s.max_swing_deg,
                "mean_rmse": s.mean_rmse,
                "runs": runs,
            })
        })
        .collect();
    let mut v = json!({ "scenario": a.scenario, "seed": a.seed, "trials": a.trials, "arms": arms });
    round_json(&mut v);
    serde_json::to_string_pretty(&v).unwrap_or_default() + "\n"
}

/// Aligned plain-text table, one row per arm.
pub fn ablation_table(a: &Ablation) -> String {
    let header = [
        "Arm",
        "Viol./Infeas.",
        "Overshoot",
        "Solve [ms] med/max",
        "Success",
        "Min clr [m]",
    ];
    let rows: Vec<[String; 6]> = a
        .summaries
        .iter()
        .map(|s| {
            [
                s.arm.name().to_owned(),
                format!("{} / {}", s.violations, s.infeasibility),
                s.overshoots.to_string(),
                format!("{:.2} / {:.2}", s.solve_ms_median, s.solve_ms_max),
                format!("{}/{}", s.successes, s.trials),
                format!("{:.4}", s.min_clearance),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for r in &rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let parts: Vec<String> = cells
            .iter()
            .zip(widths)
            .enumerate()
            .map(|(i, (c, w))| {
                if i == 0 {
                    format!("{c:<w$}")
                } else {
                    format!("{c:>w$}")
                }
            })
            .collect();
        parts.join("  ").trim_end().to_owned() + "\n"
    };
    let mut out = format!("{} ({} trials, seed {})\n", a.scenario, a.trials, a.seed);
    out += &line(header.to_vec());
    out += &line(
        widths
            .iter()
            .map(|&w| "-".repeat(w))
            .collect::<Vec<_>>()
            .iter()
            .map(String::as_str)
            .collect(),
    );
    for r in &rows {
        out += &line(r.iter().map(String::as_str).collect());
    }
    out
}

/// Column names of the trajectory CSV.
pub fn trajectory_header(log: &TrajectoryLog) -> Vec<String> {
    let mut h: Vec<String> = [
        "t",
        "x",
        "y",
        "z",
        "alpha",
        "beta",
        "vx",
        "vy",
        "vz",
        "alpha_dot",
        "beta_dot",
        "fx",
        "fy",
        "fz",
        "ua_x",
        "ua_y",
        "ua_z",
        "storage",
    ]
    .iter()
    .map(|s| (*s).to_owned())
    .collect();
    let pair = |&(i, body): &(usize, Body)| format!("{}_{}", log.obstacle_names[i], body.tag());
    h.extend(log.pairs.iter().map(|p| format!("h_{}", pair(p))));
    h.extend(log.pairs.iter().map(|p| format!("hmin_{}", pair(p))));
    h.extend(
        [
            "status",
            "fallback",
            "solve_ms",
            "qp_iterations",
            "kkt_residual",
            "waypoint",
            "ref_x",
            "ref_y",
            "ref_z",
        ]
        .iter()
        .map(|s| (*s).to_owned()),
    );
    h
}

/// Writes one row per control tick with round-trip precision.
pub fn write_trajectory_csv<W: Write>(log: &TrajectoryLog, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(trajectory_header(log))?;
    for r in &log.records {
        let s = &r.state;
        let mut row: Vec<String> = [r.t]
            .iter()
            .chain(s.xi.iter())
            .chain(s.gamma.iter())
            .chain(s.xi_dot.iter())
            .chain(s.gamma_dot.iter())
            .chain(r.force.iter())
            .chain(r.u_a.iter())
            .chain(std::iter::once(&r.storage))
            .chain(r.h.iter())
            .chain(r.h_min_interval.iter())
            .map(|v| v.to_string())
            .collect();
        row.push(r.status.as_str().to_owned());
        row.push(u8::from(r.fallback).to_string());
        row.push(r.solve_time_ms.to_string());
        row.push(r.iterations.to_string());
        row.push(r.kkt_residual.to_string());
        row.push(r.waypoint.to_string());
        row.extend(r.reference.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
