//! Quadrotor with a cable-suspended payload.
//!
//! Generalized coordinates are `q = [ξ, α, β]` where `ξ` is the vehicle
//! position and `(α, β)` are the cable swing angles in the `xz` and `yz`
//! planes. The translational dynamics are
//!
//! ```text
//! M(q) q̈ + C(q, q̇) q̇ + G(q) = col(F, 0, 0)
//! ```
//!
//! with the force `F` acting on the vehicle only. The payload hangs at
//! `p_L = ξ + l·[sin α cos β, sin β, −cos α cos β]`.

mod attitude;

pub use attitude::{
    attitude_command, attitude_rates, attitude_rk4_step, rotation_from_euler, skew,
    AttitudeCommand, AttitudeState,
};

use nalgebra::{
    Matrix2x3, Matrix3, Matrix3x2, Matrix5, SMatrix, SVector, Vector2, Vector3, Vector5,
};
use thiserror::Error;

/// Stacked state `[ξ, γ, ξ̇, γ̇]`.
pub type StateVector = SVector<f64, 10>;

/// Smallest Cholesky pivot accepted when factoring `M(q)`.
pub const MIN_PIVOT: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum ModelError {
    #[error("swing angles outside the admissible domain (alpha = {alpha}, beta = {beta})")]
    SwingDomain { alpha: f64, beta: f64 },
    #[error("inertia matrix is numerically singular (smallest pivot {pivot:e})")]
    SingularInertia { pivot: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("attitude command undefined: {0}")]
    AttitudeCommand(&'static str),
}

/// Physical parameters of the vehicle and payload.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Vehicle mass [kg].
    pub quad_mass: f64,
    /// Payload mass [kg].
    pub payload_mass: f64,
    /// Cable length [m].
    pub cable_length: f64,
    /// Gravitational acceleration [m/s²].
    pub gravity: f64,
    /// Body inertia [kg·m²].
    pub inertia: Matrix3<f64>,
    /// Per-axis force bound [N].
    pub force_max: f64,
    /// Controller swing-angle bound [rad].
    pub swing_max: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        let (quad_mass, payload_mass, gravity) = (1.5, 0.2, 9.81);
        Self {
            quad_mass,
            payload_mass,
            cable_length: 0.5,
            gravity,
            inertia: Matrix3::from_diagonal(&Vector3::new(0.03, 0.03, 0.05)),
            force_max: 2.0 * (quad_mass + payload_mass) * gravity,
            swing_max: 60f64.to_radians(),
        }
    }
}

impl ModelParams {
    pub fn total_mass(&self) -> f64 {
        self.quad_mass + self.payload_mass
    }

    /// Force that holds the system at rest with the cable vertical.
    pub fn hover_force(&self) -> Vector3<f64> {
        Vector3::new(0.0, 0.0, self.total_mass() * self.gravity)
    }

    /// Returns a description of every violated parameter invariant.
    pub fn validate(&self) -> Vec<String> {
        let mut errors = Vec::new();
        for (name, value) in [
            ("quad_mass", self.quad_mass),
            ("payload_mass", self.payload_mass),
            ("cable_length", self.cable_length),
            ("gravity", self.gravity),
            ("force_max", self.force_max),
        ] {
            if !(value.is_finite() && value > 0.0) {
                errors.push(format!(
                    "model.{name} must be strictly positive (got {value})"
                ));
            }
        }
        if !(self.swing_max > 0.0 && self.swing_max < std::f64::consts::FRAC_PI_2) {
            errors.push(format!(
                "model.swing_max must lie in (0, pi/2) rad (got {})",
                self.swing_max
            ));
        }
        let j = self.inertia;
        if (j - j.transpose()).abs().max() > 1e-12 {
            errors.push("model.inertia must be symmetric".to_owned());
        } else if j.symmetric_eigenvalues().min() <= 0.0 {
            errors.push("model.inertia must be positive definite".to_owned());
        }
        errors
    }
}

/// Full state of the vehicle–payload system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemState {
    /// Vehicle position [m].
    pub xi: Vector3<f64>,
    /// Swing angles `(α, β)` [rad].
    pub gamma: Vector2<f64>,
    /// Vehicle velocity [m/s].
    pub xi_dot: Vector3<f64>,
    /// Swing rates [rad/s].
    pub gamma_dot: Vector2<f64>,
}

impl SystemState {
    /// Resting state at `position` with the cable hanging straight down.
    pub fn at_rest(position: Vector3<f64>) -> Self {
        Self {
            xi: position,
            gamma: Vector2::zeros(),
            xi_dot: Vector3::zeros(),
            gamma_dot: Vector2::zeros(),
        }
    }

    pub fn q(&self) -> Vector5<f64> {
        Vector5::new(self.xi.x, self.xi.y, self.xi.z, self.gamma.x, self.gamma.y)
    }

    pub fn q_dot(&self) -> Vector5<f64> {
        Vector5::new(
            self.xi_dot.x,
            self.xi_dot.y,
            self.xi_dot.z,
            self.gamma_dot.x,
            self.gamma_dot.y,
        )
    }

    pub fn from_q(q: &Vector5<f64>, q_dot: &Vector5<f64>) -> Self {
        Self {
            xi: Vector3::new(q[0], q[1], q[2]),
            gamma: Vector2::new(q[3], q[4]),
            xi_dot: Vector3::new(q_dot[0], q_dot[1], q_dot[2]),
            gamma_dot: Vector2::new(q_dot[3], q_dot[4]),
        }
    }

    pub fn to_vector(&self) -> StateVector {
        let mut x = StateVector::zeros();
        x.fixed_rows_mut::<5>(0).copy_from(&self.q());
        x.fixed_rows_mut::<5>(5).copy_from(&self.q_dot());
        x
    }

    pub fn from_vector(x: &StateVector) -> Self {
        Self::from_q(
            &x.fixed_rows::<5>(0).into_owned(),
            &x.fixed_rows::<5>(5).into_owned(),
        )
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|v| v.is_finite())
    }
}

/// Rigid body selector for the two bodies of the system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Body {
    Quadrotor,
    Payload,
}

impl Body {
    pub const ALL: [Body; 2] = [Body::Quadrotor, Body::Payload];

    pub fn tag(self) -> &'static str {
        match self {
            Body::Quadrotor => "Q",
            Body::Payload => "L",
        }
    }
}

fn check_domain(alpha: f64, beta: f64) -> Result<(), ModelError> {
    if !(alpha.is_finite() && beta.is_finite()) {
        return Err(ModelError::NonFinite("swing angles"));
    }
    let limit = std::f64::consts::FRAC_PI_2;
    if alpha.abs() >= limit || beta.abs() >= limit {
        return Err(ModelError::SwingDomain { alpha, beta });
    }
    Ok(())
}

/// `∂p_L/∂γ / l`, the tangent map of the cable direction.
fn cable_jacobian(alpha: f64, beta: f64) -> Matrix3x2<f64> {
    let (sa, ca) = alpha.sin_cos();
    let (sb, cb) = beta.sin_cos();
    Matrix3x2::new(ca * cb, -sa * sb, 0.0, cb, sa * cb, ca * sb)
}

/// Unit vector from the vehicle to the payload.
pub fn cable_direction(gamma: &Vector2<f64>) -> Vector3<f64> {
    let (sa, ca) = gamma.x.sin_cos();
    let (sb, cb) = gamma.y.sin_cos();
    Vector3::new(sa * cb, sb, -ca * cb)
}

pub fn inertia_matrix(q: &Vector5<f64>, p: &ModelParams) -> Result<Matrix5<f64>, ModelError> {
    let (alpha, beta) = (q[3], q[4]);
    check_domain(alpha, beta)?;
    let ml = p.payload_mass * p.cable_length;
    let mc = cable_jacobian(alpha, beta) * ml;
    let cb = beta.cos();
    let mut m = Matrix5::zeros();
    m.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&(Matrix3::identity() * p.total_mass()));
    m.fixed_view_mut::<3, 2>(0, 3).copy_from(&mc);
    m.fixed_view_mut::<2, 3>(3, 0).copy_from(&mc.transpose());
    m[(3, 3)] = ml * p.cable_length * cb * cb;
    m[(4, 4)] = ml * p.cable_length;
    Ok(m)
}

/// Coriolis and centrifugal matrix.
///
/// Only the vehicle rows couple to the swing rates; the swing block carries
/// `c₄₄`, `c₄₅` and `c₅₄ = −c₄₅`. This is the Christoffel form, so
/// `½Ṁ − C` is skew-symmetric.
pub fn coriolis_matrix(q: &Vector5<f64>, q_dot: &Vector5<f64>, p: &ModelParams) -> Matrix5<f64> {
    let (sa, ca) = q[3].sin_cos();
    let (sb, cb) = q[4].sin_cos();
    let (ad, bd) = (q_dot[3], q_dot[4]);
    let ml = p.payload_mass * p.cable_length;
    let ml2 = ml * p.cable_length;
    let mut c = Matrix5::zeros();
    c[(0, 3)] = -ml * ad * sa * cb - ml * bd * ca * sb;
    c[(0, 4)] = -ml * ad * ca * sb - ml * bd * sa * cb;
    c[(1, 4)] = -ml * bd * sb;
    c[(2, 3)] = ml * ad * ca * cb - ml * bd * sa * sb;
    c[(2, 4)] = -ml * ad * sa * sb + ml * bd * ca * cb;
    c[(3, 3)] = -ml2 * bd * cb * sb;
    c[(3, 4)] = -ml2 * ad * cb * sb;
    c[(4, 3)] = -c[(3, 4)];
    c
}

pub fn gravity_vector(q: &Vector5<f64>, p: &ModelParams) -> Vector5<f64> {
    let (sa, ca) = q[3].sin_cos();
    let (sb, cb) = q[4].sin_cos();
    let mgl = p.payload_mass * p.gravity * p.cable_length;
    Vector5::new(
        0.0,
        0.0,
        p.total_mass() * p.gravity,
        mgl * sa * cb,
        mgl * ca * sb,
    )
}

/// Potential energy relative to the hanging configuration at `z = 0`.
pub fn potential_energy(q: &Vector5<f64>, p: &ModelParams) -> f64 {
    let mgl = p.payload_mass * p.gravity * p.cable_length;
    p.total_mass() * p.gravity * q[2] + mgl * (1.0 - q[3].cos() * q[4].cos())
}

/// Kinetic plus potential energy.
pub fn mechanical_energy(state: &SystemState, p: &ModelParams) -> Result<f64, ModelError> {
    let q = state.q();
    let qd = state.q_dot();
    let m = inertia_matrix(&q, p)?;
    Ok(0.5 * qd.dot(&(m * qd)) + potential_energy(&q, p))
}

pub fn payload_position(state: &SystemState, p: &ModelParams) -> Vector3<f64> {
    state.xi + cable_direction(&state.gamma) * p.cable_length
}

pub fn payload_velocity(state: &SystemState, p: &ModelParams) -> Vector3<f64> {
    state.xi_dot + cable_jacobian(state.gamma.x, state.gamma.y) * state.gamma_dot * p.cable_length
}

pub fn body_position(state: &SystemState, body: Body, p: &ModelParams) -> Vector3<f64> {
    match body {
        Body::Quadrotor => state.xi,
        Body::Payload => payload_position(state, p),
    }
}

pub fn body_velocity(state: &SystemState, body: Body, p: &ModelParams) -> Vector3<f64> {
    match body {
        Body::Quadrotor => state.xi_dot,
        Body::Payload => payload_velocity(state, p),
    }
}

/// `q̈ = drift + input·F`, the generalized acceleration affine in the vehicle force.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccelerationSplit {
    pub drift: Vector5<f64>,
    pub input: SMatrix<f64, 5, 3>,
}

impl AccelerationSplit {
    pub fn evaluate(&self, force: &Vector3<f64>) -> Vector5<f64> {
        self.drift + self.input * force
    }
}

/// Cartesian acceleration of one body, affine in the vehicle force:
/// `p̈ = drift + input_map·F`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyAcceleration {
    pub drift: Vector3<f64>,
    pub input_map: Matrix3<f64>,
}

impl BodyAcceleration {
    pub fn evaluate(&self, force: &Vector3<f64>) -> Vector3<f64> {
        self.drift + self.input_map * force
    }

    /// Re-expresses the split for a shifted input `u = F − offset`.
    pub fn with_force_offset(&self, offset: &Vector3<f64>) -> Self {
        Self {
            drift: self.drift + self.input_map * offset,
            input_map: self.input_map,
        }
    }
}

fn factor_inertia(m: Matrix5<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::U5>, ModelError> {
    let chol = nalgebra::Cholesky::new(m).ok_or(ModelError::SingularInertia { pivot: 0.0 })?;
    let pivot = chol
        .l_dirty()
        .diagonal()
        .iter()
        .fold(f64::INFINITY, |acc, d| acc.min(d * d));
    if pivot < MIN_PIVOT {
        return Err(ModelError::SingularInertia { pivot });
    }
    Ok(chol)
}

/// Generalized acceleration split into its force-free part and the force input map.
pub fn acceleration_split(
    state: &SystemState,
    p: &ModelParams,
) -> Result<AccelerationSplit, ModelError> {
    let q = state.q();
    let qd = state.q_dot();
    let m = inertia_matrix(&q, p)?;
    let chol = factor_inertia(m)?;
    let rhs = -(coriolis_matrix(&q, &qd, p) * qd) - gravity_vector(&q, p);
    let mut stacked = SMatrix::<f64, 5, 4>::zeros();
    stacked.set_column(0, &rhs);
    for axis in 0..3 {
        stacked[(axis, axis + 1)] = 1.0;
    }
    let solved = chol.solve(&stacked);
    let split = AccelerationSplit {
        drift: solved.column(0).into_owned(),
        input: solved.fixed_columns::<3>(1).into_owned(),
    };
    if split
        .drift
        .iter()
        .chain(split.input.iter())
        .any(|v| !v.is_finite())
    {
        return Err(ModelError::NonFinite("generalized acceleration"));
    }
    Ok(split)
}

/// `q̈ = M⁻¹(col(F, 0, 0) − C q̇ − G)`.
pub fn forward_dynamics(
    state: &SystemState,
    force: &Vector3<f64>,
    p: &ModelParams,
) -> Result<Vector5<f64>, ModelError> {
    if force.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite("force"));
    }
    Ok(acceleration_split(state, p)?.evaluate(force))
}

/// Vehicle acceleration `ξ̈ = f_v + G_v F`.
pub fn quad_acceleration_affine(split: &AccelerationSplit) -> BodyAcceleration {
    BodyAcceleration {
        drift: split.drift.fixed_rows::<3>(0).into_owned(),
        input_map: split.input.fixed_rows::<3>(0).into_owned(),
    }
}

/// Payload acceleration `p̈_L = ξ̈ + l(J_d γ̈ + J̇_d γ̇)`, affine in the vehicle force.
///
/// The payload is driven only through cable tension, so its input map is
/// the vehicle map `G_v` plus the swing contribution `l J_d ∂γ̈/∂F`.
pub fn payload_acceleration_affine(
    state: &SystemState,
    split: &AccelerationSplit,
    p: &ModelParams,
) -> BodyAcceleration {
    let l = p.cable_length;
    let (sa, ca) = state.gamma.x.sin_cos();
    let (sb, cb) = state.gamma.y.sin_cos();
    let (ad, bd) = (state.gamma_dot.x, state.gamma_dot.y);
    let jd = cable_jacobian(state.gamma.x, state.gamma.y);
    let centripetal = Vector3::new(
        -(sa * cb * (ad * ad + bd * bd) + 2.0 * ca * sb * ad * bd),
        -sb * bd * bd,
        ca * cb * (ad * ad + bd * bd) - 2.0 * sa * sb * ad * bd,
    ) * l;
    let gamma_drift = split.drift.fixed_rows::<2>(3).into_owned();
    let gamma_input: Matrix2x3<f64> = split.input.fixed_rows::<2>(3).into_owned();
    let quad = quad_acceleration_affine(split);
    BodyAcceleration {
        drift: quad.drift + jd * gamma_drift * l + centripetal,
        input_map: quad.input_map + jd * gamma_input * l,
    }
}

pub fn body_acceleration_affine(
    state: &SystemState,
    body: Body,
    split: &AccelerationSplit,
    p: &ModelParams,
) -> BodyAcceleration {
    match body {
        Body::Quadrotor => quad_acceleration_affine(split),
        Body::Payload => payload_acceleration_affine(state, split, p),
    }
}

/// Time derivative of the stacked state under a constant force.
pub fn state_derivative(
    x: &StateVector,
    force: &Vector3<f64>,
    p: &ModelParams,
) -> Result<StateVector, ModelError> {
    let state = SystemState::from_vector(x);
    let qdd = forward_dynamics(&state, force, p)?;
    let mut dx = StateVector::zeros();
    dx.fixed_rows_mut::<5>(0).copy_from(&state.q_dot());
    dx.fixed_rows_mut::<5>(5).copy_from(&qdd);
    Ok(dx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn inertia_at_zero_swing() {
        let p = ModelParams::default();
        let m = inertia_matrix(&Vector5::new(0.0, 0.0, 1.0, 0.0, 0.0), &p).unwrap();
        for i in 0..3 {
            assert_relative_eq!(m[(i, i)], 1.7, epsilon = 1e-15);
        }
        let mc = m.fixed_view::<3, 2>(0, 3);
        let expected = Matrix3x2::new(0.1, 0.0, 0.0, 0.1, 0.0, 0.0);
        assert_relative_eq!(mc.into_owned(), expected, epsilon = 1e-15);
        assert_relative_eq!(m[(3, 3)], 0.05, epsilon = 1e-15);
        assert_relative_eq!(m[(4, 4)], 0.05, epsilon = 1e-15);
        assert_eq!(m[(3, 4)], 0.0);
    }

    #[test]
    fn inertia_rejects_singular_swing() {
        let p = ModelParams::default();
        let q = Vector5::new(0.0, 0.0, 0.0, 0.1, std::f64::consts::FRAC_PI_2);
        assert!(matches!(
            inertia_matrix(&q, &p),
            Err(ModelError::SwingDomain { .. })
        ));
    }

    #[test]
    fn near_singular_swing_refuses_factorization() {
        let p = ModelParams::default();
        let mut s = SystemState::at_rest(Vector3::zeros());
        s.gamma.y = std::f64::consts::FRAC_PI_2 - 1e-7;
        assert!(matches!(
            acceleration_split(&s, &p),
            Err(ModelError::SingularInertia { .. })
        ));
    }

    #[test]
    fn coriolis_vanishes_at_rest() {
        let p = ModelParams::default();
        let q = Vector5::new(0.3, -0.2, 1.0, 0.4, -0.7);
        assert_eq!(coriolis_matrix(&q, &Vector5::zeros(), &p), Matrix5::zeros());
    }

    #[test]
    fn gravity_at_zero_swing() {
        let p = ModelParams::default();
        let g = gravity_vector(&Vector5::zeros(), &p);
        assert_relative_eq!(g, Vector5::new(0.0, 0.0, 16.677, 0.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn payload_hangs_below() {
        let p = ModelParams::default();
        let s = SystemState::at_rest(Vector3::new(0.0, 0.0, 1.0));
        assert_relative_eq!(
            payload_position(&s, &p),
            Vector3::new(0.0, 0.0, 0.5),
            epsilon = 1e-15
        );
        assert_eq!(payload_velocity(&s, &p), Vector3::zeros());
    }

    #[test]
    fn payload_near_horizontal_limit() {
        let p = ModelParams::default();
        let mut s = SystemState::at_rest(Vector3::zeros());
        s.gamma.x = std::f64::consts::FRAC_PI_2 - 1e-9;
        assert_relative_eq!(
            payload_position(&s, &p),
            Vector3::new(0.5, 0.0, 0.0),
            epsilon = 1e-8
        );
    }

    #[test]
    fn hover_is_a_fixed_point() {
        let p = ModelParams::default();
        let s = SystemState::at_rest(Vector3::new(1.0, -2.0, 1.5));
        let qdd = forward_dynamics(&s, &p.hover_force(), &p).unwrap();
        assert!(qdd.norm() < 1e-12);
    }

    #[test]
    fn rejects_non_finite_force() {
        let p = ModelParams::default();
        let s = SystemState::at_rest(Vector3::zeros());
        let f = Vector3::new(f64::NAN, 0.0, 0.0);
        assert!(forward_dynamics(&s, &f, &p).is_err());
    }

    #[test]
    fn default_params_validate() {
        assert!(ModelParams::default().validate().is_empty());
        let bad = ModelParams {
            payload_mass: -0.2,
            ..ModelParams::default()
        };
        let errors = bad.validate();
        assert_eq!(errors.len(), 1);
        assert!(errors[0].contains("payload_mass"));
    }

    #[test]
    fn state_vector_round_trip() {
        let s = SystemState {
            xi: Vector3::new(1.0, 2.0, 3.0),
            gamma: Vector2::new(0.1, -0.2),
            xi_dot: Vector3::new(-1.0, 0.5, 0.25),
            gamma_dot: Vector2::new(0.3, 0.7),
        };
        assert_eq!(SystemState::from_vector(&s.to_vector()), s);
    }
}
