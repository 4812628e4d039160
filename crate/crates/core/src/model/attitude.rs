//! Rotational dynamics on SO(3) and the force-to-attitude map used by an
//! inner attitude loop.

use nalgebra::{Matrix3, Rotation3, Vector3};

use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttitudeState {
    /// Body-to-world rotation.
    pub rotation: Matrix3<f64>,
    /// Body angular velocity [rad/s].
    pub omega: Vector3<f64>,
}

impl Default for AttitudeState {
    fn default() -> Self {
        Self {
            rotation: Matrix3::identity(),
            omega: Vector3::zeros(),
        }
    }
}

/// Commanded roll, pitch and thrust magnitude for a desired force.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttitudeCommand {
    pub roll: f64,
    pub pitch: f64,
    pub thrust: f64,
}

/// `ω^×` such that `ω^× b = ω × b`.
pub fn skew(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// `Ṙ = R ω^×`, `ω̇ = J⁻¹(τ − ω × Jω)`.
pub fn attitude_rates(
    att: &AttitudeState,
    torque: &Vector3<f64>,
    inertia: &Matrix3<f64>,
) -> (Matrix3<f64>, Vector3<f64>) {
    let r_dot = att.rotation * skew(&att.omega);
    let gyro = att.omega.cross(&(inertia * att.omega));
    let omega_dot = inertia
        .cholesky()
        .expect("inertia must be positive definite")
        .solve(&(torque - gyro));
    (r_dot, omega_dot)
}

/// Projects a near-rotation back onto SO(3) (closest rotation in Frobenius norm).
fn orthonormalize(r: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = r.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut d = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    u * d * v_t
}

/// One classical RK4 step of the attitude dynamics under a held torque.
pub fn attitude_rk4_step(
    att: &AttitudeState,
    torque: &Vector3<f64>,
    inertia: &Matrix3<f64>,
    dt: f64,
) -> AttitudeState {
    let offset = |base: &AttitudeState, k: &(Matrix3<f64>, Vector3<f64>), h: f64| AttitudeState {
        rotation: base.rotation + k.0 * h,
        omega: base.omega + k.1 * h,
    };
    let k1 = attitude_rates(att, torque, inertia);
    let k2 = attitude_rates(&offset(att, &k1, 0.5 * dt), torque, inertia);
    let k3 = attitude_rates(&offset(att, &k2, 0.5 * dt), torque, inertia);
    let k4 = attitude_rates(&offset(att, &k3, dt), torque, inertia);
    let rotation = att.rotation + (k1.0 + k2.0 * 2.0 + k3.0 * 2.0 + k4.0) * (dt / 6.0);
    let omega = att.omega + (k1.1 + k2.1 * 2.0 + k3.1 * 2.0 + k4.1) * (dt / 6.0);
    AttitudeState {
        rotation: orthonormalize(&rotation),
        omega,
    }
}

/// Z-Y-X (yaw, pitch, roll) rotation matrix.
pub fn rotation_from_euler(roll: f64, pitch: f64, yaw: f64) -> Matrix3<f64> {
    Rotation3::from_euler_angles(roll, pitch, yaw).into_inner()
}

/// Attitude and thrust that realize the force `u = F·R e₃` for a given yaw.
pub fn attitude_command(u: &Vector3<f64>, yaw: f64) -> Result<AttitudeCommand, ModelError> {
    const GUARD: f64 = 1e-9;
    let thrust = u.norm();
    if !thrust.is_finite() {
        return Err(ModelError::NonFinite("force"));
    }
    if thrust == 0.0 {
        return Err(ModelError::AttitudeCommand("zero thrust"));
    }
    if u.z <= 0.0 {
        return Err(ModelError::AttitudeCommand("thrust must point upward"));
    }
    let (sy, cy) = yaw.sin_cos();
    let arg = (u.x * sy - u.y * cy) / thrust;
    if arg.abs() > 1.0 + GUARD {
        return Err(ModelError::AttitudeCommand("roll argument outside [-1, 1]"));
    }
    Ok(AttitudeCommand {
        roll: arg.clamp(-1.0, 1.0).asin(),
        pitch: ((u.x * cy + u.y * sy) / u.z).atan(),
        thrust,
    })
}
