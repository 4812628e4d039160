//! Passivity-constrained nonlinear MPC with high-order control barrier
//! functions for a quadrotor carrying a cable-suspended payload.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::explicit_counter_loop)]

pub mod bench;
pub mod energy;
pub mod model;
pub mod ocp;
pub mod qp;
pub mod safety;
pub mod sim;
