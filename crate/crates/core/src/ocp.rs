//! Multiple-shooting transcription of the passivity- and barrier-
//! constrained optimal control problem, and the real-time iteration.
//!
//! Inputs are gravity-compensated forces `u = F − (m_Q + m_L) g e₃`. Each
//! node carries one RK4 step of length `T / N`. The subproblem is built in
//! deviation coordinates around a warm-start trajectory `(x̄, ū)`.

use std::time::Instant;

use nalgebra::{DMatrix, DVector, SMatrix, Vector3};

use crate::energy::{passivity_ball, PassivityParams};
use crate::model::{
    acceleration_split, body_acceleration_affine, Body, ModelError, ModelParams, StateVector,
    SystemState,
};
use crate::qp::{
    BallConstraint, QpSettings, QpStatus, ShootingQp, ShootingStage, SlackWeight, StageRow,
    TerminalStage,
};
use crate::safety::{clearance_derivatives_with, BarrierOrder, SafetyParams};
use crate::sim::{rk4_step, ControlInput, ControlOutput, Controller, Obstacle, SolverStatus};

pub type Mat10 = SMatrix<f64, 10, 10>;
pub type Mat10x3 = SMatrix<f64, 10, 3>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BarrierMode {
    None,
    /// `h ≥ 0` at every node.
    StateConstraint,
    /// `ḣ + κ₁h ≥ 0` at every node.
    FirstOrder,
    /// `ψ₂ ≥ 0` at every node.
    HighOrder,
}

impl BarrierMode {
    fn order(self) -> Option<BarrierOrder> {
        match self {
            BarrierMode::None => None,
            BarrierMode::StateConstraint => Some(BarrierOrder::Zero),
            BarrierMode::FirstOrder => Some(BarrierOrder::First),
            BarrierMode::HighOrder => Some(BarrierOrder::Second),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PassivityMode {
    Off,
    /// Tangent rows at every node, including the applied input.
    Linearized,
    /// Exact ball on the applied input, tangent rows on later nodes.
    Exact,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcpConfig {
    /// Horizon length T [s].
    pub horizon: f64,
    /// Shooting intervals N.
    pub nodes: usize,
    /// Weight on `[ξ, γ, ξ̇, γ̇]` errors.
    pub q_weight: Mat10,
    /// Weight on the gravity-compensated force.
    pub r_weight: nalgebra::Matrix3<f64>,
    /// Terminal weight; `None` means `10·Q`.
    pub terminal_weight: Option<Mat10>,
    pub barrier: BarrierMode,
    pub passivity: PassivityMode,
    /// L1 weight on swing-bound violations.
    pub swing_penalty: f64,
    /// Swing bounds are only imposed at nodes where the warm start exceeds
    /// this fraction of the bound.
    pub swing_screen: f64,
    /// L1 weight of a single slack shared by all barrier and passivity
    /// rows; `None` keeps them hard.
    pub global_slack: Option<f64>,
    pub qp: QpSettings,
    /// SQP iterations per call; 1 is the real-time iteration.
    pub sqp_iterations: usize,
    /// Input-step threshold that ends the SQP loop early [N].
    pub sqp_tolerance: f64,
}

impl Default for OcpConfig {
    fn default() -> Self {
        let q = Mat10::from_diagonal(&StateVector::from_column_slice(&[
            10.0, 10.0, 10.0, 5.0, 5.0, 1.0, 1.0, 1.0, 1.0, 1.0,
        ]));
        Self {
            horizon: 2.0,
            nodes: 40,
            q_weight: q,
            r_weight: nalgebra::Matrix3::identity() * 0.1,
            terminal_weight: None,
            barrier: BarrierMode::HighOrder,
            passivity: PassivityMode::Exact,
            swing_penalty: 1e4,
            swing_screen: 0.5,
            global_slack: None,
            qp: QpSettings::default(),
            sqp_iterations: 1,
            sqp_tolerance: 1e-6,
        }
    }
}

impl OcpConfig {
    pub fn dt(&self) -> f64 {
        self.horizon / self.nodes as f64
    }

    pub fn terminal(&self) -> Mat10 {
        self.terminal_weight.unwrap_or(self.q_weight * 10.0)
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errors = Vec::new();
        if !(self.horizon > 0.0) {
            errors.push(format!(
                "controller.horizon must be strictly positive (got {})",
                self.horizon
            ));
        }
        if self.nodes == 0 {
            errors.push("controller.nodes must be at least 1".to_owned());
        }
        let psd = |m: &DMatrix<f64>, strict: bool| {
            let sym = (m - m.transpose()).amax() <= 1e-12 * m.amax().max(1.0);
            let ev = m.clone().symmetric_eigenvalues().min();
            sym && if strict { ev > 0.0 } else { ev >= 0.0 }
        };
        let q = DMatrix::from_column_slice(10, 10, self.q_weight.as_slice());
        if !psd(&q, false) {
            errors.push("controller.q_weight must be symmetric positive semidefinite".to_owned());
        }
        let t = DMatrix::from_column_slice(10, 10, self.terminal().as_slice());
        if !psd(&t, false) {
            errors.push(
                "controller.terminal_weight must be symmetric positive semidefinite".to_owned(),
            );
        }
        let r = DMatrix::from_column_slice(3, 3, self.r_weight.as_slice());
        if !psd(&r, true) {
            errors.push("controller.r_weight must be symmetric positive definite".to_owned());
        }
        if self.sqp_iterations == 0 {
            errors.push("controller.sqp_iterations must be at least 1".to_owned());
        }
        errors
    }
}

/// Linearization point for the next subproblem.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    /// States at nodes `0..=N`.
    pub x: Vec<StateVector>,
    /// Gravity-compensated inputs at nodes `0..N`.
    pub u: Vec<Vector3<f64>>,
    /// Time of node 0 [s].
    pub t0: f64,
    /// QP rows active in the previous solve, as `(stage, row)`.
    pub active_rows: Vec<(usize, usize)>,
}

impl WarmStart {
    /// Zero-input rollout from `state`, which holds hover thrust.
    pub fn hover_hold(
        state: &SystemState,
        cfg: &OcpConfig,
        model: &ModelParams,
    ) -> Result<Self, ModelError> {
        let dt = cfg.dt();
        let mut x = Vec::with_capacity(cfg.nodes + 1);
        let mut s = *state;
        x.push(s.to_vector());
        for _ in 0..cfg.nodes {
            s = rk4_step(&s, &model.hover_force(), dt, model)?;
            x.push(s.to_vector());
        }
        Ok(Self {
            x,
            u: vec![Vector3::zeros(); cfg.nodes],
            t0: 0.0,
            active_rows: Vec::new(),
        })
    }
}

/// Shifts trajectories one node forward, repeating the last node, and
/// advances the time stamp by one control period.
pub fn shift_warm_start(previous: &WarmStart, dt_ctrl: f64) -> WarmStart {
    let shift = |v: &[StateVector]| {
        let mut out: Vec<_> = v.iter().skip(1).copied().collect();
        out.push(*v.last().expect("non-empty trajectory"));
        out
    };
    let mut u: Vec<_> = previous.u.iter().skip(1).copied().collect();
    u.push(*previous.u.last().expect("non-empty input trajectory"));
    WarmStart {
        x: shift(&previous.x),
        u,
        t0: previous.t0 + dt_ctrl,
        active_rows: previous
            .active_rows
            .iter()
            .filter(|(k, _)| *k > 0)
            .map(|&(k, r)| (k - 1, r))
            .collect(),
    }
}

/// Kind of each stage row, for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RowKind {
    Passivity,
    Barrier { obstacle: usize, body: Body },
    Swing,
}

/// Number of constraints present and active in one subproblem.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConstraintCounts {
    pub barrier_rows: usize,
    pub passivity_rows: usize,
    pub passivity_balls: usize,
    pub swing_rows: usize,
    pub active_barrier: usize,
    pub active_passivity: usize,
    pub active_swing: usize,
    pub active_bounds: usize,
}

/// The subproblem of one SQP iteration.
#[derive(Debug, Clone)]
pub struct Transcription {
    pub qp: ShootingQp,
    /// Row kinds, indexed like `qp.stages[k].rows` (last entry: terminal).
    pub kinds: Vec<Vec<RowKind>>,
    pub counts: ConstraintCounts,
    /// Linearization point.
    pub x_bar: Vec<StateVector>,
    pub u_bar: Vec<Vector3<f64>>,
    /// A node-0 barrier row has a vanishing input coefficient because the
    /// body sits at the obstacle centre.
    pub degenerate: bool,
}

/// Everything the transcription needs besides the linearization point.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub state: &'a SystemState,
    pub reference: Vector3<f64>,
    /// Obstacles with time origin at node 0.
    pub obstacles: &'a [Obstacle],
    pub config: &'a OcpConfig,
    pub model: &'a ModelParams,
    pub safety: &'a SafetyParams,
    pub energy: &'a PassivityParams,
}

impl Problem<'_> {
    fn reference_state(&self) -> StateVector {
        let mut r = StateVector::zeros();
        r.fixed_rows_mut::<3>(0).copy_from(&self.reference);
        r
    }
}

/// RK4 node map `x⁺ = Φ(x, u)` and its forward-difference Jacobians.
pub fn linearize_node(
    x: &StateVector,
    u: &Vector3<f64>,
    dt: f64,
    model: &ModelParams,
) -> Result<(StateVector, Mat10, Mat10x3), ModelError> {
    let hover = model.hover_force();
    let step = |x: &StateVector, u: &Vector3<f64>| -> Result<StateVector, ModelError> {
        Ok(rk4_step(&SystemState::from_vector(x), &(u + hover), dt, model)?.to_vector())
    };
    let phi = step(x, u)?;
    let mut a = Mat10::zeros();
    for i in 0..10 {
        let h = 1e-7 * x[i].abs().max(1.0);
        let mut xp = *x;
        xp[i] += h;
        a.set_column(i, &((step(&xp, u)? - phi) / h));
    }
    let mut b = Mat10x3::zeros();
    for i in 0..3 {
        let h = 1e-6 * u[i].abs().max(1.0);
        let mut up = *u;
        up[i] += h;
        b.set_column(i, &((step(x, &up)? - phi) / h));
    }
    Ok((phi, a, b))
}

/// Barrier values `value(x, u)` and input rows for every pair at one node.
fn barrier_rows(
    x: &StateVector,
    u: &Vector3<f64>,
    tau: f64,
    order: BarrierOrder,
    p: &Problem<'_>,
) -> Result<Vec<(f64, Vector3<f64>, bool)>, ModelError> {
    let state = SystemState::from_vector(x);
    let split = acceleration_split(&state, p.model)?;
    let hover = p.model.hover_force();
    let mut out = Vec::with_capacity(2 * p.obstacles.len());
    for obstacle in p.obstacles {
        for body in Body::ALL {
            let accel =
                body_acceleration_affine(&state, body, &split, p.model).with_force_offset(&hover);
            let d =
                clearance_derivatives_with(&state, body, &accel, obstacle, tau, p.safety, p.model);
            let degenerate = d.offset == Vector3::zeros();
            out.push((
                order.value(&d, u, p.safety),
                order.input_row(&d),
                degenerate,
            ));
        }
    }
    Ok(out)
}

fn dvec<const R: usize>(v: &SMatrix<f64, R, 1>) -> DVector<f64> {
    DVector::from_column_slice(v.as_slice())
}

fn dmat<const R: usize, const C: usize>(m: &SMatrix<f64, R, C>) -> DMatrix<f64> {
    DMatrix::from_column_slice(R, C, m.as_slice())
}

/// Builds the QP in deviation coordinates around `(x_bar, u_bar)`; node 0
/// of `x_bar` must equal the measured state.
pub fn transcribe(
    p: &Problem<'_>,
    x_bar: &[StateVector],
    u_bar: &[Vector3<f64>],
) -> Result<Transcription, ModelError> {
    let cfg = p.config;
    let n = cfg.nodes;
    let dt = cfg.dt();
    let x_ref = p.reference_state();
    let hover = p.model.hover_force();
    let f_lb = Vector3::new(-p.model.force_max, -p.model.force_max, 0.0);
    let f_ub = Vector3::from_element(p.model.force_max);
    let k_mat = p.energy.stiffness;
    let (rho, eps) = (p.energy.rho, p.energy.epsilon);

    let mut slacks = Vec::new();
    let global = cfg.global_slack.map(|w| {
        slacks.push(SlackWeight {
            linear: w,
            quadratic: 1e-2,
        });
        0usize
    });
    let mut counts = ConstraintCounts::default();
    let mut kinds = Vec::with_capacity(n + 1);
    let mut stages = Vec::with_capacity(n);
    let mut degenerate = false;

    for k in 0..n {
        let (phi, a, b) = linearize_node(&x_bar[k], &u_bar[k], dt, p.model)?;
        let q = if k == 0 { Mat10::zeros() } else { cfg.q_weight };
        let mut stage = ShootingStage::new(dmat(&a), dmat(&b), dmat(&q), dmat(&cfg.r_weight));
        stage.c = dvec(&(phi - x_bar[k + 1]));
        stage.q_lin = dvec(&(q * (x_bar[k] - x_ref)));
        stage.r_lin = dvec(&(cfg.r_weight * u_bar[k]));
        stage.u_lb = dvec(&(f_lb - hover - u_bar[k]));
        stage.u_ub = dvec(&(f_ub - hover - u_bar[k]));
        let mut stage_kinds = Vec::new();
        let xs = SystemState::from_vector(&x_bar[k]);

        if cfg.passivity != PassivityMode::Off {
            let ua = u_bar[k] + k_mat * (xs.xi - p.reference);
            let v = xs.xi_dot;
            if k == 0 && cfg.passivity == PassivityMode::Exact {
                let (center, radius) =
                    passivity_ball(&v, p.energy).ok_or(ModelError::NonFinite("passivity ball"))?;
                let c = center - ua;
                stage.ball = Some(BallConstraint {
                    indices: vec![0, 1, 2],
                    center: dvec(&c),
                    radius,
                });
                counts.passivity_balls += 1;
            } else {
                // r(u_a, v) ≤ 0 linearized in (u, ξ, ξ̇), written as −∇r·δ ≥ r̄.
                let residual = ua.dot(&v) + rho * v.norm_squared() + eps * ua.norm_squared();
                let gu = v + ua * (2.0 * eps);
                let gv = ua + v * (2.0 * rho);
                let g_xi = k_mat.transpose() * gu;
                let mut d = DVector::zeros(10);
                for i in 0..3 {
                    d[i] = -g_xi[i];
                    d[5 + i] = -gv[i];
                }
                stage.rows.push(StageRow {
                    d,
                    e: dvec(&(-gu)),
                    rhs: residual,
                    soft: global,
                });
                stage_kinds.push(RowKind::Passivity);
                counts.passivity_rows += 1;
            }
        }

        if let Some(order) = cfg.barrier.order() {
            let tau = k as f64 * dt;
            let base = barrier_rows(&x_bar[k], &u_bar[k], tau, order, p)?;
            let mut grads = vec![DVector::zeros(10); base.len()];
            if k > 0 && !base.is_empty() {
                for i in 0..10 {
                    let h = 1e-7 * x_bar[k][i].abs().max(1.0);
                    let mut xp = x_bar[k];
                    xp[i] += h;
                    let pert = barrier_rows(&xp, &u_bar[k], tau, order, p)?;
                    for ((g, (vp, _, _)), (v0, _, _)) in grads.iter_mut().zip(&pert).zip(&base) {
                        g[i] = (vp - v0) / h;
                    }
                }
            }
            for (j, ((value, row, degen), d)) in base.iter().zip(grads).enumerate() {
                if k == 0 && *degen {
                    degenerate = true;
                }
                stage.rows.push(StageRow {
                    d,
                    e: dvec(row),
                    rhs: -value,
                    soft: global,
                });
                stage_kinds.push(RowKind::Barrier {
                    obstacle: j / 2,
                    body: Body::ALL[j % 2],
                });
                counts.barrier_rows += 1;
            }
        }

        if k > 0 {
            push_swing_rows(
                &mut stage.rows,
                &mut stage_kinds,
                &mut slacks,
                &x_bar[k],
                p,
                &mut counts,
            );
        }
        stages.push(stage);
        kinds.push(stage_kinds);
    }

    let q_n = cfg.terminal();
    let mut terminal = TerminalStage {
        q: dmat(&q_n),
        q_lin: dvec(&(q_n * (x_bar[n] - x_ref))),
        rows: Vec::new(),
    };
    let mut terminal_kinds = Vec::new();
    push_swing_rows(
        &mut terminal.rows,
        &mut terminal_kinds,
        &mut slacks,
        &x_bar[n],
        p,
        &mut counts,
    );
    kinds.push(terminal_kinds);

    Ok(Transcription {
        qp: ShootingQp {
            x0: DVector::zeros(10),
            stages,
            terminal,
            slacks,
        },
        kinds,
        counts,
        x_bar: x_bar.to_vec(),
        u_bar: u_bar.to_vec(),
        degenerate,
    })
}

/// Soft `|α|, |β| ≤ swing_max` at one node, when the warm start is close.
fn push_swing_rows(
    rows: &mut Vec<StageRow>,
    kinds: &mut Vec<RowKind>,
    slacks: &mut Vec<SlackWeight>,
    x: &StateVector,
    p: &Problem<'_>,
    counts: &mut ConstraintCounts,
) {
    let limit = p.model.swing_max;
    if x[3].abs().max(x[4].abs()) <= p.config.swing_screen * limit {
        return;
    }
    let j = slacks.len();
    slacks.push(SlackWeight {
        linear: p.config.swing_penalty,
        quadratic: 1e-2,
    });
    for idx in [3, 4] {
        for sign in [1.0, -1.0] {
            let mut d = DVector::zeros(10);
            d[idx] = sign;
            rows.push(StageRow {
                d,
                e: DVector::zeros(3),
                rhs: -limit - sign * x[idx],
                soft: Some(j),
            });
            kinds.push(RowKind::Swing);
            counts.swing_rows += 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcpSolution {
    /// Shaped inputs along the horizon.
    pub u_a: Vec<Vector3<f64>>,
    /// Gravity-compensated inputs along the horizon.
    pub u: Vec<Vector3<f64>>,
    pub x: Vec<StateVector>,
    /// Physical force to apply now [N].
    pub force: Vector3<f64>,
    pub status: SolverStatus,
    pub kkt_residual: f64,
    pub solve_time: f64,
    pub qp_iterations: usize,
    pub sqp_iterations: usize,
    pub counts: ConstraintCounts,
}

fn status_of(s: QpStatus) -> SolverStatus {
    match s {
        QpStatus::Optimal => SolverStatus::Optimal,
        QpStatus::Infeasible => SolverStatus::Infeasible,
        QpStatus::MaxIterations => SolverStatus::MaxIterations,
        QpStatus::IllConditioned => SolverStatus::IllConditioned,
    }
}

/// Stateful SQP-RTI controller.
#[derive(Debug, Clone)]
pub struct Nmpc {
    pub config: OcpConfig,
    pub model: ModelParams,
    pub safety: SafetyParams,
    pub energy: PassivityParams,
    /// Control period used to advance the warm-start time stamp [s].
    pub dt_ctrl: f64,
    warm: Option<WarmStart>,
}

impl Nmpc {
    pub fn new(
        config: OcpConfig,
        model: ModelParams,
        safety: SafetyParams,
        energy: PassivityParams,
        dt_ctrl: f64,
    ) -> Self {
        Self {
            config,
            model,
            safety,
            energy,
            dt_ctrl,
            warm: None,
        }
    }

    pub fn warm_start(&self) -> Option<&WarmStart> {
        self.warm.as_ref()
    }

    pub fn reset(&mut self) {
        self.warm = None;
    }

    /// One call of the controller: `config.sqp_iterations` linearize-then-
    /// solve rounds (one for RTI), then the shift for the next call.
    pub fn rti_step(
        &mut self,
        state: &SystemState,
        reference: Vector3<f64>,
        obstacles: &[Obstacle],
        t: f64,
    ) -> OcpSolution {
        let started = Instant::now();
        let cfg = self.config.clone();
        let problem = Problem {
            state,
            reference,
            obstacles,
            config: &cfg,
            model: &self.model,
            safety: &self.safety,
            energy: &self.energy,
        };
        let seed = match self.warm.take() {
            Some(w) if w.x.len() == cfg.nodes + 1 => Ok(w),
            _ => WarmStart::hover_hold(state, &cfg, &self.model),
        };
        let mut warm = match seed {
            Ok(w) => w,
            Err(_) => return self.failure(state, reference, SolverStatus::ModelError, started),
        };
        warm.x[0] = state.to_vector();
        warm.t0 = t;

        let mut total_qp_iterations = 0;
        let mut last = None;
        let mut rounds = 0;
        for _ in 0..cfg.sqp_iterations {
            rounds += 1;
            let tr = match transcribe(&problem, &warm.x, &warm.u) {
                Ok(tr) => tr,
                Err(_) => {
                    self.warm = None;
                    return self.failure(state, reference, SolverStatus::ModelError, started);
                }
            };
            if tr.degenerate {
                self.warm = Some(shift_warm_start(&warm, self.dt_ctrl));
                let mut out = self.failure(state, reference, SolverStatus::Infeasible, started);
                out.counts = tr.counts;
                return out;
            }
            let sol = tr.qp.solve(&cfg.qp, &warm.active_rows);
            total_qp_iterations += sol.qp.iterations;
            let status = status_of(sol.status);
            if status != SolverStatus::Optimal {
                self.warm = Some(shift_warm_start(&warm, self.dt_ctrl));
                let mut out = self.failure(state, reference, status, started);
                out.qp_iterations = total_qp_iterations;
                out.kkt_residual = sol.qp.kkt.max_residual();
                out.counts = tr.counts;
                return out;
            }
            let mut step = 0.0f64;
            for k in 0..cfg.nodes {
                let du = Vector3::new(sol.u[k][0], sol.u[k][1], sol.u[k][2]);
                step = step.max(du.amax());
                warm.u[k] += du;
            }
            for k in 0..=cfg.nodes {
                warm.x[k] += StateVector::from_column_slice(sol.x[k].as_slice());
            }
            warm.active_rows = sol.active_rows.clone();
            let mut counts = tr.counts;
            for c in &sol.qp.active_set {
                if let crate::qp::ConstraintRef::Lower(_) | crate::qp::ConstraintRef::Upper(_) = c {
                    counts.active_bounds += 1;
                }
            }
            for &(k, r) in &sol.active_rows {
                match tr.kinds[k][r] {
                    RowKind::Passivity => counts.active_passivity += 1,
                    RowKind::Barrier { .. } => counts.active_barrier += 1,
                    RowKind::Swing => counts.active_swing += 1,
                }
            }
            if sol.qp.cuts.iter().any(|c| c.multiplier != 0.0) {
                counts.active_passivity += 1;
            }
            last = Some((sol.qp.kkt.max_residual(), counts));
            if step < cfg.sqp_tolerance {
                break;
            }
        }
        let (kkt_residual, counts) = last.expect("at least one SQP round");
        let u_a = (0..cfg.nodes)
            .map(|k| {
                let xi = warm.x[k].fixed_rows::<3>(0).into_owned();
                warm.u[k] + self.energy.stiffness * (xi - reference)
            })
            .collect();
        let out = OcpSolution {
            u_a,
            u: warm.u.clone(),
            x: warm.x.clone(),
            force: warm.u[0] + self.model.hover_force(),
            status: SolverStatus::Optimal,
            kkt_residual,
            solve_time: started.elapsed().as_secs_f64(),
            qp_iterations: total_qp_iterations,
            sqp_iterations: rounds,
            counts,
        };
        self.warm = Some(shift_warm_start(&warm, self.dt_ctrl));
        out
    }

    fn failure(
        &self,
        state: &SystemState,
        reference: Vector3<f64>,
        status: SolverStatus,
        started: Instant,
    ) -> OcpSolution {
        let hover = self.model.hover_force();
        let ua = self.energy.stiffness * (state.xi - reference);
        OcpSolution {
            u_a: vec![ua; self.config.nodes],
            u: vec![Vector3::zeros(); self.config.nodes],
            x: vec![state.to_vector(); self.config.nodes + 1],
            force: hover,
            status,
            kkt_residual: f64::INFINITY,
            solve_time: started.elapsed().as_secs_f64(),
            qp_iterations: 0,
            sqp_iterations: 0,
            counts: ConstraintCounts::default(),
        }
    }
}

impl Controller for Nmpc {
    fn compute(&mut self, input: &ControlInput<'_>) -> ControlOutput {
        let sol = self.rti_step(input.state, input.reference, input.obstacles, input.t);
        ControlOutput {
            force: sol.force,
            status: sol.status,
            iterations: sol.qp_iterations,
            kkt_residual: sol.kkt_residual,
        }
    }
}
