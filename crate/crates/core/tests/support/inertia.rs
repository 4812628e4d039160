//! Closed-form rate of the generalized inertia matrix.

use nalgebra::{Matrix5, Vector3, Vector5};
use slungmpc_core::model::ModelParams;

/// `Ṁ(q, q̇)` in closed form.
pub fn inertia_rate(q: &Vector5<f64>, qd: &Vector5<f64>, p: &ModelParams) -> Matrix5<f64> {
    let (sa, ca) = q[3].sin_cos();
    let (sb, cb) = q[4].sin_cos();
    let (ad, bd) = (qd[3], qd[4]);
    let ml = p.payload_mass * p.cable_length;
    let ml2 = ml * p.cable_length;
    let col_a = Vector3::new(
        -sa * cb * ad - ca * sb * bd,
        0.0,
        ca * cb * ad - sa * sb * bd,
    ) * ml;
    let col_b = Vector3::new(
        -ca * sb * ad - sa * cb * bd,
        -sb * bd,
        -sa * sb * ad + ca * cb * bd,
    ) * ml;
    let mut m = Matrix5::zeros();
    for i in 0..3 {
        m[(i, 3)] = col_a[i];
        m[(3, i)] = col_a[i];
        m[(i, 4)] = col_b[i];
        m[(4, i)] = col_b[i];
    }
    m[(3, 3)] = -2.0 * ml2 * cb * sb * bd;
    m
}
