//! Fixed-step closed-loop simulation: RK4 plant, polynomial obstacle
//! motion, waypoint sequencing and the zero-order-held control loop.

use std::time::Instant;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::energy::{force_offset, storage, PassivityParams};
use crate::model::{
    attitude_command, body_position, rotation_from_euler, state_derivative, Body, ModelError,
    ModelParams, StateVector, SystemState,
};
use crate::safety::SafetyParams;

/// Spherical obstacle following `p(t) = c₀ + v t + ½ a t²`.
#[derive(Debug, Clone, PartialEq)]
pub struct Obstacle {
    pub name: String,
    pub center0: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObstacleState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
}

impl Obstacle {
    pub fn fixed(name: impl Into<String>, center: Vector3<f64>, radius: f64) -> Self {
        Self {
            name: name.into(),
            center0: center,
            velocity: Vector3::zeros(),
            acceleration: Vector3::zeros(),
            radius,
        }
    }

    pub fn moving(
        name: impl Into<String>,
        center0: Vector3<f64>,
        velocity: Vector3<f64>,
        radius: f64,
    ) -> Self {
        Self {
            velocity,
            ..Self::fixed(name, center0, radius)
        }
    }

    pub fn state_at(&self, t: f64) -> ObstacleState {
        ObstacleState {
            position: self.center0 + self.velocity * t + self.acceleration * (0.5 * t * t),
            velocity: self.velocity + self.acceleration * t,
            acceleration: self.acceleration,
        }
    }

    /// The same motion re-expressed with time origin `t`.
    pub fn rebased(&self, t: f64) -> Self {
        let s = self.state_at(t);
        Self {
            name: self.name.clone(),
            center0: s.position,
            velocity: s.velocity,
            acceleration: s.acceleration,
            radius: self.radius,
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errors = Vec::new();
        if !(self.radius > 0.0) {
            errors.push(format!(
                "obstacle '{}': radius must be strictly positive (got {})",
                self.name, self.radius
            ));
        }
        let finite = self
            .center0
            .iter()
            .chain(self.velocity.iter())
            .chain(self.acceleration.iter())
            .all(|v| v.is_finite());
        if !finite {
            errors.push(format!(
                "obstacle '{}': motion parameters must be finite",
                self.name
            ));
        }
        errors
    }
}

pub fn obstacle_position(obstacle: &Obstacle, t: f64) -> ObstacleState {
    obstacle.state_at(t)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    /// Plant integration step [s].
    pub dt_sim: f64,
    /// Control period [s]; an integer multiple of `dt_sim`.
    pub dt_ctrl: f64,
    pub duration: f64,
    pub seed: u64,
    /// First-order lag [s] on roll, pitch and thrust; `None` applies the
    /// commanded force directly.
    pub attitude_lag: Option<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt_sim: 1e-3,
            dt_ctrl: 1e-2,
            duration: 10.0,
            seed: 0,
            attitude_lag: None,
        }
    }
}

impl SimConfig {
    /// Plant steps per control period.
    pub fn substeps(&self) -> usize {
        (self.dt_ctrl / self.dt_sim).round() as usize
    }

    pub fn ticks(&self) -> usize {
        (self.duration / self.dt_ctrl + 1e-9).floor() as usize
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errors = Vec::new();
        if !(self.dt_sim > 0.0) {
            errors.push(format!(
                "sim.dt_sim must be strictly positive (got {})",
                self.dt_sim
            ));
        }
        if !(self.dt_ctrl > 0.0) {
            errors.push(format!(
                "sim.dt_ctrl must be strictly positive (got {})",
                self.dt_ctrl
            ));
        } else if self.dt_sim > 0.0 {
            let ratio = self.dt_ctrl / self.dt_sim;
            if ratio < 0.5 || (ratio - ratio.round()).abs() > 1e-9 * ratio {
                errors.push(format!(
                    "sim.dt_ctrl must be an integer multiple of sim.dt_sim (got {} / {})",
                    self.dt_ctrl, self.dt_sim
                ));
            }
        }
        if !(self.duration >= 0.0) {
            errors.push(format!(
                "sim.duration must be non-negative (got {})",
                self.duration
            ));
        }
        if let Some(tau) = self.attitude_lag {
            if !(tau > 0.0) {
                errors.push(format!(
                    "sim.attitude_lag must be strictly positive (got {tau})"
                ));
            }
        }
        errors
    }
}

/// One classical RK4 step under a zero-order-held force.
pub fn rk4_step(
    state: &SystemState,
    force: &Vector3<f64>,
    dt: f64,
    p: &ModelParams,
) -> Result<SystemState, ModelError> {
    let x = state.to_vector();
    let f = |x: &StateVector| state_derivative(x, force, p);
    let k1 = f(&x)?;
    let k2 = f(&(x + k1 * (0.5 * dt)))?;
    let k3 = f(&(x + k2 * (0.5 * dt)))?;
    let k4 = f(&(x + k3 * dt))?;
    Ok(SystemState::from_vector(
        &(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    pub position: Vector3<f64>,
    /// Time to stay within the switching radius before advancing [s].
    pub hold: f64,
}

/// Sequences waypoints: the next one becomes active once the vehicle has
/// stayed within `switch_radius` of the current one for its hold time.
#[derive(Debug, Clone)]
pub struct WaypointTracker {
    waypoints: Vec<Waypoint>,
    switch_radius: f64,
    index: usize,
    dwell: f64,
}

impl WaypointTracker {
    pub const DEFAULT_SWITCH_RADIUS: f64 = 0.15;

    pub fn new(waypoints: Vec<Waypoint>, switch_radius: f64) -> Self {
        assert!(!waypoints.is_empty(), "at least one waypoint is required");
        Self {
            waypoints,
            switch_radius,
            index: 0,
            dwell: 0.0,
        }
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn active(&self) -> Vector3<f64> {
        self.waypoints[self.index].position
    }

    pub fn is_final(&self) -> bool {
        self.index + 1 == self.waypoints.len()
    }

    /// Advances the dwell timer by `dt` at vehicle position `xi`.
    pub fn update(&mut self, xi: &Vector3<f64>, dt: f64) {
        if self.is_final() {
            return;
        }
        if (xi - self.active()).norm() <= self.switch_radius {
            self.dwell += dt;
            if self.dwell + 1e-12 >= self.waypoints[self.index].hold {
                self.index += 1;
                self.dwell = 0.0;
            }
        } else {
            self.dwell = 0.0;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    Optimal,
    Infeasible,
    MaxIterations,
    IllConditioned,
    /// Model evaluation failed while building the subproblem.
    ModelError,
}

impl SolverStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolverStatus::Optimal => "optimal",
            SolverStatus::Infeasible => "infeasible",
            SolverStatus::MaxIterations => "max_iterations",
            SolverStatus::IllConditioned => "ill_conditioned",
            SolverStatus::ModelError => "model_error",
        }
    }
}

/// What a controller sees at a control tick.
#[derive(Debug, Clone, Copy)]
pub struct ControlInput<'a> {
    pub t: f64,
    pub state: &'a SystemState,
    /// Active waypoint.
    pub reference: Vector3<f64>,
    /// Obstacles re-expressed with time origin `t`.
    pub obstacles: &'a [Obstacle],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput {
    /// Physical force on the vehicle [N].
    pub force: Vector3<f64>,
    pub status: SolverStatus,
    pub iterations: usize,
    pub kkt_residual: f64,
}

impl ControlOutput {
    pub fn optimal(force: Vector3<f64>) -> Self {
        Self {
            force,
            status: SolverStatus::Optimal,
            iterations: 0,
            kkt_residual: 0.0,
        }
    }
}

pub trait Controller {
    fn compute(&mut self, input: &ControlInput<'_>) -> ControlOutput;
}

/// Gravity compensation only.
#[derive(Debug, Clone, Copy)]
pub struct HoverController {
    pub force: Vector3<f64>,
}

impl HoverController {
    pub fn new(model: &ModelParams) -> Self {
        Self {
            force: model.hover_force(),
        }
    }
}

impl Controller for HoverController {
    fn compute(&mut self, _input: &ControlInput<'_>) -> ControlOutput {
        ControlOutput::optimal(self.force)
    }
}

/// Everything needed to run one closed loop.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub model: ModelParams,
    pub sim: SimConfig,
    pub safety: SafetyParams,
    pub energy: PassivityParams,
    pub initial: SystemState,
    pub waypoints: Vec<Waypoint>,
    pub obstacles: Vec<Obstacle>,
    pub switch_radius: f64,
}

impl Scenario {
    /// `(obstacle, body)` pairs in log column order.
    pub fn pairs(&self) -> Vec<(usize, Body)> {
        (0..self.obstacles.len())
            .flat_map(|i| Body::ALL.into_iter().map(move |b| (i, b)))
            .collect()
    }

    /// Euclidean distance minus `d_min` for every pair.
    pub fn clearances(&self, state: &SystemState, t: f64) -> Vec<f64> {
        self.pairs()
            .into_iter()
            .map(|(i, body)| {
                let o = &self.obstacles[i];
                let p = body_position(state, body, &self.model);
                (p - o.state_at(t).position).norm() - self.safety.min_distance(o, body)
            })
            .collect()
    }

    /// Squared clearances `h` for every pair.
    pub fn barrier_values(&self, state: &SystemState, t: f64) -> Vec<f64> {
        self.pairs()
            .into_iter()
            .map(|(i, body)| {
                let o = &self.obstacles[i];
                let p = body_position(state, body, &self.model);
                let d = self.safety.min_distance(o, body);
                (p - o.state_at(t).position).norm_squared() - d * d
            })
            .collect()
    }
}

/// Applied-input limiter after infeasible ticks.
#[derive(Debug, Clone, Copy)]
pub struct Fallback {
    last_feasible: Option<Vector3<f64>>,
    streak: usize,
}

impl Fallback {
    /// Ticks the last feasible input is held before reverting to hover.
    pub const HOLD_TICKS: usize = 3;

    pub fn new() -> Self {
        Self {
            last_feasible: None,
            streak: 0,
        }
    }

    /// Returns the force to apply and whether the fallback engaged.
    pub fn apply(&mut self, out: &ControlOutput, hover: Vector3<f64>) -> (Vector3<f64>, bool) {
        let usable = out.status == SolverStatus::Optimal && out.force.iter().all(|v| v.is_finite());
        if usable {
            self.last_feasible = Some(out.force);
            self.streak = 0;
            return (out.force, false);
        }
        self.streak += 1;
        match self.last_feasible {
            Some(f) if self.streak <= Self::HOLD_TICKS => (f, true),
            _ => (hover, true),
        }
    }

    pub fn streak(&self) -> usize {
        self.streak
    }
}

impl Default for Fallback {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TickRecord {
    pub t: f64,
    pub state: SystemState,
    /// Force applied over the following control period.
    pub force: Vector3<f64>,
    /// Shaped input at `t` for the applied force.
    pub u_a: Vector3<f64>,
    pub storage: f64,
    /// Storage at each plant step of the following period, starting at `t`,
    /// relative to this tick's reference.
    pub storage_fine: Vec<f64>,
    pub h: Vec<f64>,
    /// Smallest `h` per pair over the plant steps of the following period.
    pub h_min_interval: Vec<f64>,
    pub status: SolverStatus,
    pub fallback: bool,
    pub solve_time_ms: f64,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub waypoint: usize,
    pub reference: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RunOutcome {
    Completed,
    /// Swing angle reached the validity guard.
    SwingLimit {
        t: f64,
    },
    /// Non-finite state or model failure in the plant.
    Diverged {
        t: f64,
    },
}

#[derive(Debug, Clone)]
pub struct TrajectoryLog {
    pub pairs: Vec<(usize, Body)>,
    pub obstacle_names: Vec<String>,
    pub records: Vec<TickRecord>,
    pub dt_sim: f64,
    pub outcome: RunOutcome,
}

impl TrajectoryLog {
    pub fn final_state(&self) -> Option<&SystemState> {
        self.records.last().map(|r| &r.state)
    }

    /// Longest run of consecutive non-optimal ticks.
    pub fn longest_failure_streak(&self) -> usize {
        let mut best = 0;
        let mut cur = 0;
        for r in &self.records {
            if r.status == SolverStatus::Optimal {
                cur = 0;
            } else {
                cur += 1;
                best = best.max(cur);
            }
        }
        best
    }
}

/// Swing angle at which a run is flagged invalid [rad].
pub const SWING_VALIDITY_LIMIT: f64 = 85.0 * std::f64::consts::PI / 180.0;

#[derive(Debug, Clone, Copy)]
struct AttitudeLag {
    roll: f64,
    pitch: f64,
    thrust: f64,
}

impl AttitudeLag {
    fn force(&self) -> Vector3<f64> {
        rotation_from_euler(self.roll, self.pitch, 0.0) * Vector3::z() * self.thrust
    }
}

/// Simulates `scenario.sim.duration` seconds. Never fails on controller
/// infeasibility; stops early only on an invalid plant state.
pub fn run_closed_loop(scenario: &Scenario, controller: &mut dyn Controller) -> TrajectoryLog {
    let cfg = &scenario.sim;
    let model = &scenario.model;
    let substeps = cfg.substeps();
    let ticks = cfg.ticks();
    let hover = model.hover_force();
    let mut tracker = WaypointTracker::new(scenario.waypoints.clone(), scenario.switch_radius);
    let mut fallback = Fallback::new();
    let mut state = scenario.initial;
    let mut lag: Option<AttitudeLag> = cfg.attitude_lag.map(|_| AttitudeLag {
        roll: 0.0,
        pitch: 0.0,
        thrust: hover.norm(),
    });
    let mut records = Vec::with_capacity(ticks + 1);
    let mut outcome = RunOutcome::Completed;
    let storage_at = |s: &SystemState, r: &Vector3<f64>| {
        storage(s, r, &scenario.energy, model).unwrap_or(f64::NAN)
    };

    for k in 0..=ticks {
        let t = k as f64 * cfg.dt_ctrl;
        let reference = tracker.active();
        let h = scenario.barrier_values(&state, t);
        let mut record = TickRecord {
            t,
            state,
            force: Vector3::zeros(),
            u_a: Vector3::zeros(),
            storage: storage_at(&state, &reference),
            storage_fine: Vec::new(),
            h_min_interval: h.clone(),
            h,
            status: SolverStatus::Optimal,
            fallback: false,
            solve_time_ms: 0.0,
            iterations: 0,
            kkt_residual: 0.0,
            waypoint: tracker.index(),
            reference,
        };
        if k == ticks {
            record.force = records.last().map_or(hover, |r: &TickRecord| r.force);
            record.u_a = record.force - force_offset(&state, &reference, &scenario.energy, model);
            records.push(record);
            break;
        }

        let snapshots: Vec<Obstacle> = scenario.obstacles.iter().map(|o| o.rebased(t)).collect();
        let input = ControlInput {
            t,
            state: &state,
            reference,
            obstacles: &snapshots,
        };
        let started = Instant::now();
        let out = controller.compute(&input);
        record.solve_time_ms = started.elapsed().as_secs_f64() * 1e3;
        let (force, engaged) = fallback.apply(&out, hover);
        record.force = force;
        record.u_a = force - force_offset(&state, &reference, &scenario.energy, model);
        record.status = out.status;
        record.fallback = engaged;
        record.iterations = out.iterations;
        record.kkt_residual = out.kkt_residual;

        let mut fine = Vec::with_capacity(substeps + 1);
        fine.push(record.storage);
        let mut failure = None;
        for i in 0..substeps {
            let applied = match (&mut lag, cfg.attitude_lag) {
                (Some(l), Some(tau)) => {
                    if let Ok(cmd) = attitude_command(&force, 0.0) {
                        let a = 1.0 - (-cfg.dt_sim / tau).exp();
                        l.roll += a * (cmd.roll - l.roll);
                        l.pitch += a * (cmd.pitch - l.pitch);
                        l.thrust += a * (cmd.thrust - l.thrust);
                    }
                    l.force()
                }
                _ => force,
            };
            let ts = t + (i + 1) as f64 * cfg.dt_sim;
            match rk4_step(&state, &applied, cfg.dt_sim, model) {
                Ok(next) if next.is_finite() => state = next,
                _ => {
                    failure = Some(RunOutcome::Diverged { t: ts });
                    break;
                }
            }
            fine.push(storage_at(&state, &reference));
            for (m, h) in record
                .h_min_interval
                .iter_mut()
                .zip(scenario.barrier_values(&state, ts))
            {
                *m = m.min(h);
            }
            if state.gamma.x.abs() >= SWING_VALIDITY_LIMIT
                || state.gamma.y.abs() >= SWING_VALIDITY_LIMIT
            {
                failure = Some(RunOutcome::SwingLimit { t: ts });
                break;
            }
        }
        record.storage_fine = fine;
        records.push(record);
        if let Some(f) = failure {
            outcome = f;
            break;
        }
        tracker.update(&state.xi, cfg.dt_ctrl);
    }

    TrajectoryLog {
        pairs: scenario.pairs(),
        obstacle_names: scenario.obstacles.iter().map(|o| o.name.clone()).collect(),
        records,
        dt_sim: cfg.dt_sim,
        outcome,
    }
}
