//! Shaped storage function and the strict passivity constraint.
//!
//! With the gravity-compensated force `u = F − (m_Q + m_L) g e₃` and the
//! shaped input `u_a = u + K e_ζ`, the storage
//!
//! ```text
//! V = ½ q̇ᵀ M(q) q̇ + m_L g l (1 − cos α cos β) + ½ e_ζᵀ K e_ζ
//! ```
//!
//! satisfies `V̇ = vᵀ u_a` with the collocated output `v = ξ̇`. The
//! controller enforces `u_aᵀ v + ρ‖v‖² + ε‖u_a‖² ≤ 0`.

use nalgebra::{Matrix3, Vector3};

use crate::model::{inertia_matrix, ModelError, ModelParams, SystemState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PassivityParams {
    /// Output damping ρ [N·s/m].
    pub rho: f64,
    /// Input damping ε [m/(N·s)].
    pub epsilon: f64,
    /// Position shaping stiffness K [N/m].
    pub stiffness: Matrix3<f64>,
}

impl Default for PassivityParams {
    fn default() -> Self {
        Self {
            rho: 0.5,
            epsilon: 0.01,
            stiffness: Matrix3::from_diagonal_element(2.0),
        }
    }
}

impl PassivityParams {
    pub fn validate(&self) -> Vec<String> {
        let mut errors = Vec::new();
        if !(self.rho > 0.0 && self.epsilon > 0.0) {
            errors.push(format!(
                "passivity gains must be strictly positive (energy.rho = {}, energy.epsilon = {})",
                self.rho, self.epsilon
            ));
        } else if 4.0 * self.rho * self.epsilon >= 1.0 {
            // ‖u_a + v/2ε‖² ≤ ‖v‖²(1 − 4ρε)/4ε² is empty for every v ≠ 0.
            errors.push(format!(
                "energy.rho * energy.epsilon must be below 0.25 for the passivity set to be non-empty (got {})",
                self.rho * self.epsilon
            ));
        }
        let k = self.stiffness;
        if (k - k.transpose()).abs().max() > 1e-12 {
            errors.push("energy.stiffness must be symmetric".to_owned());
        } else if k.symmetric_eigenvalues().min() <= 0.0 {
            errors.push("energy.stiffness must be positive definite".to_owned());
        }
        errors
    }
}

pub fn storage(
    state: &SystemState,
    xi_d: &Vector3<f64>,
    params: &PassivityParams,
    model: &ModelParams,
) -> Result<f64, ModelError> {
    let qd = state.q_dot();
    let m = inertia_matrix(&state.q(), model)?;
    let swing = model.payload_mass
        * model.gravity
        * model.cable_length
        * (1.0 - state.gamma.x.cos() * state.gamma.y.cos());
    let e = state.xi - xi_d;
    Ok(0.5 * qd.dot(&(m * qd)) + swing + 0.5 * e.dot(&(params.stiffness * e)))
}

/// Physical force corresponding to `u_a = 0`: `F₀ = (m_Q + m_L) g e₃ − K e_ζ`.
pub fn force_offset(
    state: &SystemState,
    xi_d: &Vector3<f64>,
    params: &PassivityParams,
    model: &ModelParams,
) -> Vector3<f64> {
    model.hover_force() - params.stiffness * (state.xi - xi_d)
}

/// `u_a = F − (m_Q + m_L) g e₃ + K e_ζ`.
pub fn shaped_input(
    force: &Vector3<f64>,
    state: &SystemState,
    xi_d: &Vector3<f64>,
    params: &PassivityParams,
    model: &ModelParams,
) -> Vector3<f64> {
    force - force_offset(state, xi_d, params, model)
}

/// Inverse of [`shaped_input`].
pub fn physical_force(
    u_a: &Vector3<f64>,
    state: &SystemState,
    xi_d: &Vector3<f64>,
    params: &PassivityParams,
    model: &ModelParams,
) -> Vector3<f64> {
    u_a + force_offset(state, xi_d, params, model)
}

/// `u_aᵀv + ρ‖v‖² + ε‖u_a‖²`; the constraint holds iff this is `≤ 0`.
pub fn passivity_residual(u_a: &Vector3<f64>, v: &Vector3<f64>, params: &PassivityParams) -> f64 {
    u_a.dot(v) + params.rho * v.norm_squared() + params.epsilon * u_a.norm_squared()
}

/// Half-space `coeffs·u_a ≤ rhs`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpperRow {
    pub coeffs: Vector3<f64>,
    pub rhs: f64,
}

impl UpperRow {
    pub fn slack(&self, u_a: &Vector3<f64>) -> f64 {
        self.rhs - self.coeffs.dot(u_a)
    }
}

/// Tangent of the passivity residual in `u_a` at `u_ref`, with `v` frozen:
/// `(v + 2ε u_ref)ᵀ u_a ≤ −ρ‖v‖² + ε‖u_ref‖²`.
pub fn passivity_row(
    u_ref: &Vector3<f64>,
    v_pred: &Vector3<f64>,
    params: &PassivityParams,
) -> UpperRow {
    UpperRow {
        coeffs: v_pred + u_ref * (2.0 * params.epsilon),
        rhs: -params.rho * v_pred.norm_squared() + params.epsilon * u_ref.norm_squared(),
    }
}

/// The exact constraint set for fixed `v` is the ball `‖u_a − c‖ ≤ r` with
/// `c = −v/2ε` and `r² = ‖v‖²/4ε² − ρ‖v‖²/ε`. Returns `None` when empty.
pub fn passivity_ball(v: &Vector3<f64>, params: &PassivityParams) -> Option<(Vector3<f64>, f64)> {
    let eps = params.epsilon;
    let v2 = v.norm_squared();
    let r2 = v2 / (4.0 * eps * eps) - params.rho * v2 / eps;
    (r2 >= 0.0).then(|| (-v / (2.0 * eps), r2.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn model() -> ModelParams {
        ModelParams::default()
    }

    #[test]
    fn storage_vanishes_at_equilibrium() {
        let goal = Vector3::new(1.0, 2.0, 1.5);
        let s = SystemState::at_rest(goal);
        assert_eq!(
            storage(&s, &goal, &PassivityParams::default(), &model()).unwrap(),
            0.0
        );
    }

    #[test]
    fn storage_of_raised_payload() {
        let goal = Vector3::new(0.0, 0.0, 1.0);
        let mut s = SystemState::at_rest(goal);
        s.gamma.x = std::f64::consts::FRAC_PI_3;
        let v = storage(&s, &goal, &PassivityParams::default(), &model()).unwrap();
        assert_relative_eq!(v, 0.2 * 9.81 * 0.5 * 0.5, epsilon = 1e-12);
    }

    #[test]
    fn shaped_input_identity_at_goal() {
        let m = model();
        let goal = Vector3::new(0.5, 0.5, 1.0);
        let s = SystemState::at_rest(goal);
        let f = Vector3::new(1.0, -2.0, 20.0);
        let ua = shaped_input(&f, &s, &goal, &PassivityParams::default(), &m);
        assert_relative_eq!(ua, f - m.hover_force(), epsilon = 1e-15);
    }

    #[test]
    fn shaped_input_adds_stiffness_term() {
        let m = model();
        let params = PassivityParams {
            stiffness: Matrix3::identity(),
            ..Default::default()
        };
        let s = SystemState::at_rest(Vector3::new(1.0, 2.0, 3.0));
        let ua = shaped_input(&m.hover_force(), &s, &Vector3::zeros(), &params, &m);
        assert_relative_eq!(ua, Vector3::new(1.0, 2.0, 3.0), epsilon = 1e-15);
    }

    #[test]
    fn residual_examples() {
        let p = PassivityParams {
            rho: 0.1,
            epsilon: 0.1,
            ..Default::default()
        };
        assert_eq!(
            passivity_residual(&Vector3::zeros(), &Vector3::zeros(), &p),
            0.0
        );
        let e = Vector3::x();
        assert_relative_eq!(passivity_residual(&e, &e, &p), 1.2, epsilon = 1e-15);
    }

    #[test]
    fn pure_damping_is_feasible() {
        let p = PassivityParams {
            rho: 0.5,
            epsilon: 0.01,
            ..Default::default()
        };
        for &c in &[0.6, 1.0, 5.0, 40.0] {
            assert!(c > p.rho / (1.0 - p.epsilon * c));
            for v in [
                Vector3::x(),
                Vector3::new(0.3, -2.0, 0.1),
                Vector3::new(-4.0, 1.0, 3.0),
            ] {
                assert!(passivity_residual(&(-v * c), &v, &p) < 0.0);
            }
        }
    }

    #[test]
    fn trivial_row_at_origin() {
        let row = passivity_row(
            &Vector3::zeros(),
            &Vector3::zeros(),
            &PassivityParams::default(),
        );
        assert_eq!(row.coeffs, Vector3::zeros());
        assert_eq!(row.rhs, 0.0);
    }

    #[test]
    fn gain_validation() {
        let bad = PassivityParams {
            rho: 0.0,
            ..Default::default()
        };
        assert!(bad.validate()[0].contains("passivity gains must be strictly positive"));
        assert!(PassivityParams::default().validate().is_empty());
        let empty_set = PassivityParams {
            rho: 10.0,
            epsilon: 0.1,
            ..Default::default()
        };
        assert_eq!(empty_set.validate().len(), 1);
    }

    proptest! {
        #[test]
        fn shaped_round_trip(
            f in proptest::array::uniform3(-30.0..30.0f64),
            x in proptest::array::uniform3(-5.0..5.0f64),
        ) {
            let m = model();
            let p = PassivityParams::default();
            let s = SystemState::at_rest(Vector3::from(x));
            let goal = Vector3::new(0.3, -0.1, 1.2);
            let f = Vector3::from(f);
            let back = physical_force(&shaped_input(&f, &s, &goal, &p, &m), &s, &goal, &p, &m);
            prop_assert!((back - f).abs().max() < 1e-13);
        }

        #[test]
        fn exact_row_when_epsilon_vanishes(
            u in proptest::array::uniform3(-10.0..10.0f64),
            ur in proptest::array::uniform3(-10.0..10.0f64),
            v in proptest::array::uniform3(-3.0..3.0f64),
        ) {
            let p = PassivityParams { epsilon: 0.0, ..Default::default() };
            let (u, ur, v) = (Vector3::from(u), Vector3::from(ur), Vector3::from(v));
            let row = passivity_row(&ur, &v, &p);
            let lhs_minus_rhs = row.coeffs.dot(&u) - row.rhs;
            prop_assert!((lhs_minus_rhs - passivity_residual(&u, &v, &p)).abs() < 1e-10);
        }

        #[test]
        fn row_gap_is_the_quadratic_term(
            u in proptest::array::uniform3(-10.0..10.0f64),
            ur in proptest::array::uniform3(-10.0..10.0f64),
            v in proptest::array::uniform3(-3.0..3.0f64),
        ) {
            let p = PassivityParams::default();
            let (u, ur, v) = (Vector3::from(u), Vector3::from(ur), Vector3::from(v));
            let row = passivity_row(&ur, &v, &p);
            let linear = row.coeffs.dot(&u) - row.rhs;
            let exact = passivity_residual(&u, &v, &p);
            // Convexity: the tangent never over-estimates the residual.
            prop_assert!(linear <= exact + 1e-9);
            prop_assert!((exact - linear - p.epsilon * (u - ur).norm_squared()).abs() < 1e-9);
        }

        #[test]
        fn ball_matches_residual(
            u in proptest::array::uniform3(-80.0..80.0f64),
            v in proptest::array::uniform3(-2.0..2.0f64),
        ) {
            let p = PassivityParams::default();
            let (u, v) = (Vector3::from(u), Vector3::from(v));
            let (c, r) = passivity_ball(&v, &p).unwrap();
            let inside = (u - c).norm_squared() - r * r;
            prop_assert!((inside * p.epsilon - passivity_residual(&u, &v, &p)).abs() < 1e-8);
        }
    }
}
