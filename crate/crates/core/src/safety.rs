//! Squared-clearance barrier functions for the vehicle and the payload,
//! and the relative-degree-two (high-order) barrier rows built from them.
//!
//! For body `j` and obstacle `i`, with `r = p_j − p_o,i(t)`:
//!
//! ```text
//! h  = ‖r‖² − d_min²,             d_min = R_i + r_j + Δ
//! ḣ  = 2 rᵀ(ṗ_j − v_o)
//! ḧ  = 2‖ṗ_j − v_o‖² + 2 rᵀ(p̈_j − a_o)
//! ψ₁ = ḣ + κ₁ h
//! ψ₂ = ḧ + κ₁ ḣ + κ₂ ψ₁ ≥ 0
//! ```
//!
//! `p̈_j` is affine in the control input, so `ψ₂ ≥ 0` is one affine row
//! `aᵀu ≥ b` per (obstacle, body) pair.

use nalgebra::{DMatrix, DVector, Vector3};

use crate::model::{
    acceleration_split, body_acceleration_affine, body_position, body_velocity, Body,
    BodyAcceleration, ModelError, ModelParams, SystemState,
};
use crate::sim::Obstacle;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafetyParams {
    /// First class-K gain κ₁ [1/s].
    pub kappa1: f64,
    /// Second class-K gain κ₂ [1/s].
    pub kappa2: f64,
    /// Inflated vehicle radius [m].
    pub r_quad: f64,
    /// Inflated payload radius [m].
    pub r_payload: f64,
    /// Safety margin Δ [m].
    pub delta: f64,
}

impl Default for SafetyParams {
    fn default() -> Self {
        Self {
            kappa1: 2.0,
            kappa2: 2.0,
            r_quad: 0.0,
            r_payload: 0.0,
            delta: 0.05,
        }
    }
}

impl SafetyParams {
    pub fn body_radius(&self, body: Body) -> f64 {
        match body {
            Body::Quadrotor => self.r_quad,
            Body::Payload => self.r_payload,
        }
    }

    /// `R_i + r_j + Δ`.
    pub fn min_distance(&self, obstacle: &Obstacle, body: Body) -> f64 {
        obstacle.radius + self.body_radius(body) + self.delta
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errors = Vec::new();
        if !(self.kappa1 > 0.0 && self.kappa2 > 0.0) {
            errors.push(format!(
                "barrier gains must be strictly positive (safety.kappa1 = {}, safety.kappa2 = {})",
                self.kappa1, self.kappa2
            ));
        }
        if !(self.r_quad >= 0.0 && self.r_payload >= 0.0) {
            errors.push("safety.r_quad and safety.r_payload must be non-negative".to_owned());
        }
        if !(self.delta > 0.0) {
            errors.push(format!(
                "safety.delta must be strictly positive (got {})",
                self.delta
            ));
        }
        errors
    }
}

pub fn clearance(
    body_pos: &Vector3<f64>,
    body: Body,
    obstacle: &Obstacle,
    t: f64,
    params: &SafetyParams,
) -> f64 {
    let d = params.min_distance(obstacle, body);
    (body_pos - obstacle.state_at(t).position).norm_squared() - d * d
}

/// `h`, `ḣ` and `ḧ = drift + input_rowᵀ u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClearanceDerivatives {
    pub h: f64,
    pub h_dot: f64,
    pub h_ddot_drift: f64,
    pub input_row: Vector3<f64>,
    /// Relative position `p_j − p_o`.
    pub offset: Vector3<f64>,
}

impl ClearanceDerivatives {
    pub fn h_ddot(&self, u: &Vector3<f64>) -> f64 {
        self.h_ddot_drift + self.input_row.dot(u)
    }
}

/// Derivatives of the clearance given the body's acceleration split in the
/// caller's input coordinates.
pub fn clearance_derivatives_with(
    state: &SystemState,
    body: Body,
    accel: &BodyAcceleration,
    obstacle: &Obstacle,
    t: f64,
    params: &SafetyParams,
    model: &ModelParams,
) -> ClearanceDerivatives {
    let obs = obstacle.state_at(t);
    let r = body_position(state, body, model) - obs.position;
    let rel_v = body_velocity(state, body, model) - obs.velocity;
    let d = params.min_distance(obstacle, body);
    ClearanceDerivatives {
        h: r.norm_squared() - d * d,
        h_dot: 2.0 * r.dot(&rel_v),
        h_ddot_drift: 2.0 * rel_v.norm_squared() + 2.0 * r.dot(&(accel.drift - obs.acceleration)),
        input_row: accel.input_map.transpose() * r * 2.0,
        offset: r,
    }
}

/// Derivatives of the clearance with the input measured relative to
/// `force_offset`, i.e. the physical force is `F = u + force_offset`.
pub fn clearance_derivatives(
    state: &SystemState,
    body: Body,
    obstacle: &Obstacle,
    t: f64,
    params: &SafetyParams,
    model: &ModelParams,
    force_offset: &Vector3<f64>,
) -> Result<ClearanceDerivatives, ModelError> {
    let split = acceleration_split(state, model)?;
    let accel =
        body_acceleration_affine(state, body, &split, model).with_force_offset(force_offset);
    Ok(clearance_derivatives_with(
        state, body, &accel, obstacle, t, params, model,
    ))
}

/// Which derivative level of the clearance a constraint acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BarrierOrder {
    /// `h ≥ 0` as a plain state constraint.
    Zero,
    /// `ḣ + κ₁h ≥ 0`, independent of the input.
    First,
    /// `ψ₂ ≥ 0`, affine in the input.
    Second,
}

impl BarrierOrder {
    /// Constraint value at input `u`; the constraint is `value ≥ 0`.
    pub fn value(self, d: &ClearanceDerivatives, u: &Vector3<f64>, params: &SafetyParams) -> f64 {
        match self {
            BarrierOrder::Zero => d.h,
            BarrierOrder::First => d.h_dot + params.kappa1 * d.h,
            BarrierOrder::Second => {
                let psi1 = d.h_dot + params.kappa1 * d.h;
                d.h_ddot(u) + params.kappa1 * d.h_dot + params.kappa2 * psi1
            }
        }
    }

    pub fn input_row(self, d: &ClearanceDerivatives) -> Vector3<f64> {
        match self {
            BarrierOrder::Second => d.input_row,
            BarrierOrder::Zero | BarrierOrder::First => Vector3::zeros(),
        }
    }
}

/// One affine safety inequality `aᵀu ≥ b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HocbfRow {
    pub a: Vector3<f64>,
    pub b: f64,
    pub obstacle: usize,
    pub body: Body,
    pub h: f64,
    pub psi1: f64,
    /// Body centre coincides with the obstacle centre; the row carries no
    /// information and the tick is treated as infeasible.
    pub degenerate: bool,
}

impl HocbfRow {
    pub fn slack(&self, u: &Vector3<f64>) -> f64 {
        self.a.dot(u) - self.b
    }
}

pub fn hocbf_row_from(
    d: &ClearanceDerivatives,
    obstacle: usize,
    body: Body,
    params: &SafetyParams,
) -> HocbfRow {
    let psi1 = d.h_dot + params.kappa1 * d.h;
    HocbfRow {
        a: d.input_row,
        b: -(d.h_ddot_drift + params.kappa1 * d.h_dot + params.kappa2 * psi1),
        obstacle,
        body,
        h: d.h,
        psi1,
        degenerate: d.offset == Vector3::zeros(),
    }
}

#[allow(clippy::too_many_arguments)]
pub fn hocbf_row(
    state: &SystemState,
    body: Body,
    obstacle: &Obstacle,
    obstacle_index: usize,
    t: f64,
    params: &SafetyParams,
    model: &ModelParams,
    force_offset: &Vector3<f64>,
) -> Result<HocbfRow, ModelError> {
    let d = clearance_derivatives(state, body, obstacle, t, params, model, force_offset)?;
    Ok(hocbf_row_from(&d, obstacle_index, body, params))
}

/// All barrier rows for one state, ordered obstacle-major with the vehicle
/// before the payload.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CbfStack {
    pub rows: Vec<HocbfRow>,
}

impl CbfStack {
    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows.len(), 3, |i, j| self.rows[i].a[j])
    }

    pub fn rhs(&self) -> DVector<f64> {
        DVector::from_iterator(self.rows.len(), self.rows.iter().map(|r| r.b))
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Stacks the barrier rows for every (obstacle, body) pair at time `t`.
pub fn stack_rows(
    state: &SystemState,
    obstacles: &[Obstacle],
    t: f64,
    params: &SafetyParams,
    model: &ModelParams,
    force_offset: &Vector3<f64>,
) -> Result<CbfStack, ModelError> {
    if obstacles.is_empty() {
        return Ok(CbfStack::default());
    }
    let split = acceleration_split(state, model)?;
    let mut rows = Vec::with_capacity(2 * obstacles.len());
    for (i, obstacle) in obstacles.iter().enumerate() {
        for body in Body::ALL {
            let accel = body_acceleration_affine(state, body, &split, model)
                .with_force_offset(force_offset);
            let d = clearance_derivatives_with(state, body, &accel, obstacle, t, params, model);
            rows.push(hocbf_row_from(&d, i, body, params));
        }
    }
    Ok(CbfStack { rows })
}
