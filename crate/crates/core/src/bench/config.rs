//! Scenario files: a TOML document with sections `[model]`, `[sim]`,
//! `[controller]`, `[safety]`, `[energy]`, `[[waypoints]]` and
//! `[[obstacles]]`. Angles are in degrees, everything else in SI units.

use std::path::Path;

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::Deserialize;

use super::arms::Arm;
use crate::energy::PassivityParams;
use crate::model::{ModelParams, StateVector, SystemState};
use crate::ocp::{Mat10, OcpConfig, PassivityMode};
use crate::safety::SafetyParams;
use crate::sim::{Obstacle, Scenario, SimConfig, Waypoint, WaypointTracker};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("invalid --set override '{0}': expected key=value")]
    Override(String),
    #[error("{}", .0.join("\n"))]
    Invalid(Vec<String>),
}

impl ConfigError {
    /// Every message, one per line item.
    pub fn messages(&self) -> Vec<String> {
        match self {
            ConfigError::Invalid(v) => v.clone(),
            other => vec![other.to_string()],
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    name: Option<String>,
    description: Option<String>,
    #[serde(default)]
    model: ModelSection,
    #[serde(default)]
    sim: SimSection,
    #[serde(default)]
    controller: ControllerSection,
    #[serde(default)]
    safety: SafetySection,
    #[serde(default)]
    energy: EnergySection,
    #[serde(default)]
    waypoints: Vec<WaypointSection>,
    #[serde(default)]
    obstacles: Vec<ObstacleSection>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelSection {
    quad_mass: Option<f64>,
    payload_mass: Option<f64>,
    cable_length: Option<f64>,
    gravity: Option<f64>,
    inertia: Option<[f64; 3]>,
    force_max: Option<f64>,
    swing_max_deg: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimSection {
    dt_sim: Option<f64>,
    dt_ctrl: Option<f64>,
    duration: Option<f64>,
    seed: Option<u64>,
    trials: Option<usize>,
    attitude_lag: Option<f64>,
    switch_radius: Option<f64>,
    initial_position: Option<[f64; 3]>,
    initial_velocity: Option<[f64; 3]>,
    initial_swing_deg: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ControllerSection {
    arm: Option<String>,
    horizon: Option<f64>,
    nodes: Option<usize>,
    q_diag: Option<Vec<f64>>,
    r_diag: Option<[f64; 3]>,
    terminal_diag: Option<Vec<f64>>,
    passivity_form: Option<String>,
    swing_penalty: Option<f64>,
    swing_screen: Option<f64>,
    global_slack: Option<f64>,
    sqp_iterations: Option<usize>,
    qp_max_iterations: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SafetySection {
    kappa1: Option<f64>,
    kappa2: Option<f64>,
    r_quad: Option<f64>,
    r_payload: Option<f64>,
    delta: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnergySection {
    rho: Option<f64>,
    epsilon: Option<f64>,
    stiffness: Option<[f64; 3]>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct WaypointSection {
    position: [f64; 3],
    #[serde(default)]
    hold: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObstacleSection {
    name: Option<String>,
    center: [f64; 3],
    #[serde(default)]
    velocity: [f64; 3],
    #[serde(default)]
    acceleration: [f64; 3],
    radius: f64,
}

/// A validated scenario file.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub name: String,
    pub description: String,
    pub scenario: Scenario,
    pub controller: OcpConfig,
    /// Arm used by single runs.
    pub arm: Arm,
    pub trials: usize,
}

impl ScenarioConfig {
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let fallback = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::parse(&text, overrides, &fallback)
    }

    /// Parses `text`, applies `key=value` overrides (dotted paths, array
    /// indices as numbers) and validates the result.
    pub fn parse(
        text: &str,
        overrides: &[String],
        default_name: &str,
    ) -> Result<Self, ConfigError> {
        let mut doc: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let file: FileConfig = toml::Value::Table(doc)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        build(file, default_name)
    }

    /// Controller configuration with the barrier and passivity settings of `arm`.
    pub fn controller_for(&self, arm: Arm) -> OcpConfig {
        let mut cfg = self.controller.clone();
        cfg.barrier = arm.barrier();
        if !arm.passivity() {
            cfg.passivity = PassivityMode::Off;
        }
        cfg
    }
}

fn apply_override(doc: &mut toml::Table, text: &str) -> Result<(), ConfigError> {
    let (key, raw) = text
        .split_once('=')
        .ok_or_else(|| ConfigError::Override(text.to_owned()))?;
    let key = key.trim();
    let raw = raw.trim();
    if key.is_empty() {
        return Err(ConfigError::Override(text.to_owned()));
    }
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_owned()));
    let parts: Vec<&str> = key.split('.').collect();
    let mut cur = doc;
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        if last {
            cur.insert((*part).to_owned(), value);
            return Ok(());
        }
        let next = cur
            .entry((*part).to_owned())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = match next {
            toml::Value::Table(t) => t,
            toml::Value::Array(items) => {
                let idx: usize = parts[i + 1].parse().map_err(|_| {
                    ConfigError::Parse(format!(
                        "override '{key}': '{part}' is an array; expected an index"
                    ))
                })?;
                let rest = parts[i + 2..].join(".");
                let item = items.get_mut(idx).ok_or_else(|| {
                    ConfigError::Parse(format!("override '{key}': index {idx} out of range"))
                })?;
                if rest.is_empty() {
                    *item = value;
                    return Ok(());
                }
                return match item {
                    toml::Value::Table(t) => apply_override(t, &format!("{rest}={raw}")),
                    _ => Err(ConfigError::Parse(format!(
                        "override '{key}': element {idx} is not a table"
                    ))),
                };
            }
            _ => {
                return Err(ConfigError::Parse(format!(
                    "override '{key}': '{part}' is not a table"
                )))
            }
        };
    }
    Ok(())
}

fn v3(a: [f64; 3]) -> Vector3<f64> {
    Vector3::new(a[0], a[1], a[2])
}

fn build(file: FileConfig, default_name: &str) -> Result<ScenarioConfig, ConfigError> {
    let mut errors = Vec::new();

    let mut model = ModelParams::default();
    let m = &file.model;
    model.quad_mass = m.quad_mass.unwrap_or(model.quad_mass);
    model.payload_mass = m.payload_mass.unwrap_or(model.payload_mass);
    model.cable_length = m.cable_length.unwrap_or(model.cable_length);
    model.gravity = m.gravity.unwrap_or(model.gravity);
    if let Some(j) = m.inertia {
        model.inertia = Matrix3::from_diagonal(&v3(j));
    }
    model.force_max = m
        .force_max
        .unwrap_or(2.0 * model.total_mass() * model.gravity);
    if let Some(deg) = m.swing_max_deg {
        model.swing_max = deg.to_radians();
    }
    errors.extend(model.validate());

    let s = &file.sim;
    let sim = SimConfig {
        dt_sim: s.dt_sim.unwrap_or(1e-3),
        dt_ctrl: s.dt_ctrl.unwrap_or(1e-2),
        duration: s.duration.unwrap_or(10.0),
        seed: s.seed.unwrap_or(0),
        attitude_lag: s.attitude_lag,
    };
    errors.extend(sim.validate());
    let trials = s.trials.unwrap_or(1);
    if trials == 0 {
        errors.push("sim.trials must be at least 1".to_owned());
    }
    let switch_radius = s
        .switch_radius
        .unwrap_or(WaypointTracker::DEFAULT_SWITCH_RADIUS);
    if !(switch_radius > 0.0) {
        errors.push(format!(
            "sim.switch_radius must be strictly positive (got {switch_radius})"
        ));
    }

    let safety = SafetyParams {
        kappa1: file.safety.kappa1.unwrap_or(2.0),
        kappa2: file.safety.kappa2.unwrap_or(2.0),
        r_quad: file.safety.r_quad.unwrap_or(0.0),
        r_payload: file.safety.r_payload.unwrap_or(0.0),
        delta: file.safety.delta.unwrap_or(0.05),
    };
    errors.extend(safety.validate());

    let mut energy = PassivityParams::default();
    energy.rho = file.energy.rho.unwrap_or(energy.rho);
    energy.epsilon = file.energy.epsilon.unwrap_or(energy.epsilon);
    if let Some(k) = file.energy.stiffness {
        energy.stiffness = Matrix3::from_diagonal(&v3(k));
    }
    errors.extend(energy.validate());

    let c = &file.controller;
    let mut controller = OcpConfig::default();
    controller.horizon = c.horizon.unwrap_or(controller.horizon);
    controller.nodes = c.nodes.unwrap_or(controller.nodes);
    let diag10 = |name: &str, v: &Vec<f64>, errors: &mut Vec<String>| {
        if v.len() == 10 {
            Some(Mat10::from_diagonal(&StateVector::from_column_slice(v)))
        } else {
            errors.push(format!(
                "controller.{name} must have 10 entries (got {})",
                v.len()
            ));
            None
        }
    };
    if let Some(q) = c
        .q_diag
        .as_ref()
        .and_then(|v| diag10("q_diag", v, &mut errors))
    {
        controller.q_weight = q;
    }
    if let Some(t) = &c.terminal_diag {
        controller.terminal_weight = diag10("terminal_diag", t, &mut errors);
    }
    if let Some(r) = c.r_diag {
        controller.r_weight = Matrix3::from_diagonal(&v3(r));
    }
    controller.swing_penalty = c.swing_penalty.unwrap_or(controller.swing_penalty);
    controller.swing_screen = c.swing_screen.unwrap_or(controller.swing_screen);
    controller.global_slack = c.global_slack.or(controller.global_slack);
    controller.sqp_iterations = c.sqp_iterations.unwrap_or(controller.sqp_iterations);
    controller.qp.max_iterations = c.qp_max_iterations.unwrap_or(controller.qp.max_iterations);
    match c.passivity_form.as_deref() {
        None | Some("exact") => controller.passivity = PassivityMode::Exact,
        Some("linearized") => controller.passivity = PassivityMode::Linearized,
        Some(other) => errors.push(format!(
            "controller.passivity_form must be \"exact\" or \"linearized\" (got \"{other}\")"
        )),
    }
    if !(controller.swing_penalty > 0.0) {
        errors.push(format!(
            "controller.swing_penalty must be strictly positive (got {})",
            controller.swing_penalty
        ));
    }
    if let Some(w) = controller.global_slack {
        if !(w > 0.0) {
            errors.push(format!(
                "controller.global_slack must be strictly positive (got {w})"
            ));
        }
    }
    errors.extend(controller.validate());
    let arm = match c.arm.as_deref() {
        None => Arm::SepNmpc,
        Some(name) => match name.parse() {
            Ok(a) => a,
            Err(e) => {
                errors.push(format!("controller.arm: {e}"));
                Arm::SepNmpc
            }
        },
    };
    controller.barrier = arm.barrier();
    if !arm.passivity() {
        controller.passivity = PassivityMode::Off;
    }

    if file.waypoints.is_empty() {
        errors.push("waypoints: at least one waypoint is required".to_owned());
    }
    let waypoints: Vec<Waypoint> = file
        .waypoints
        .iter()
        .enumerate()
        .map(|(i, w)| {
            if !w.position.iter().all(|v| v.is_finite()) {
                errors.push(format!("waypoints[{i}].position must be finite"));
            }
            if !(w.hold >= 0.0) {
                errors.push(format!(
                    "waypoints[{i}].hold must be non-negative (got {})",
                    w.hold
                ));
            }
            Waypoint {
                position: v3(w.position),
                hold: w.hold,
            }
        })
        .collect();

    let obstacles: Vec<Obstacle> = file
        .obstacles
        .iter()
        .enumerate()
        .map(|(i, o)| Obstacle {
            name: o.name.clone().unwrap_or_else(|| format!("obstacle{i}")),
            center0: v3(o.center),
            velocity: v3(o.velocity),
            acceleration: v3(o.acceleration),
            radius: o.radius,
        })
        .collect();
    for (i, o) in obstacles.iter().enumerate() {
        errors.extend(o.validate());
        if obstacles[..i].iter().any(|p| p.name == o.name) {
            errors.push(format!("obstacle '{}': duplicate name", o.name));
        }
    }

    let start = s
        .initial_position
        .map(v3)
        .or_else(|| waypoints.first().map(|w| w.position))
        .unwrap_or_else(Vector3::zeros);
    let mut initial = SystemState::at_rest(start);
    if let Some(v) = s.initial_velocity {
        initial.xi_dot = v3(v);
    }
    if let Some(g) = s.initial_swing_deg {
        initial.gamma = Vector2::new(g[0].to_radians(), g[1].to_radians());
        if !(g[0].abs().max(g[1].abs()) < model.swing_max.to_degrees()) {
            errors.push(format!(
                "sim.initial_swing_deg must lie within model.swing_max_deg (got [{}, {}])",
                g[0], g[1]
            ));
        }
    }
    if !initial.is_finite() {
        errors.push(
            "sim.initial_position, sim.initial_velocity and sim.initial_swing_deg must be finite"
                .to_owned(),
        );
    }

    let scenario = Scenario {
        model,
        sim,
        safety,
        energy,
        initial,
        waypoints,
        obstacles,
        switch_radius,
    };
    if errors.is_empty() {
        errors.extend(safe_set_violations(&scenario, &scenario.initial));
    }
    if !errors.is_empty() {
        return Err(ConfigError::Invalid(errors));
    }
    Ok(ScenarioConfig {
        name: file.name.unwrap_or_else(|| default_name.to_owned()),
        description: file.description.unwrap_or_default(),
        scenario,
        controller,
        arm,
        trials,
    })
}

/// One message per pair with `h_{i,j}(x) ≤ 0` at `t = 0`.
pub fn safe_set_violations(scenario: &Scenario, state: &SystemState) -> Vec<String> {
    scenario
        .pairs()
        .into_iter()
        .zip(scenario.barrier_values(state, 0.0))
        .filter(|(_, h)| !(*h > 0.0))
        .map(|((i, body), h)| {
            format!(
                "initial state is not inside the safe set: h_{{{},{}}}(x0) = {h:.6} < 0 (obstacle '{}')",
                scenario.obstacles[i].name,
                body.tag(),
                scenario.obstacles[i].name
            )
        })
        .collect()
}
