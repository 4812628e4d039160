//! Transcription structure, the unconstrained LQR limit and the SQP loop.

use nalgebra::{DMatrix, Vector2, Vector3};
use slungmpc_core::energy::{passivity_residual, PassivityParams};
use slungmpc_core::model::{ModelParams, SystemState};
use slungmpc_core::ocp::{
    linearize_node, shift_warm_start, transcribe, BarrierMode, Nmpc, OcpConfig, PassivityMode,
    Problem, WarmStart,
};
use slungmpc_core::safety::SafetyParams;
use slungmpc_core::sim::{Obstacle, SolverStatus};

fn nmpc(cfg: OcpConfig) -> Nmpc {
    Nmpc::new(
        cfg,
        ModelParams::default(),
        SafetyParams::default(),
        PassivityParams::default(),
        0.05,
    )
}

fn far_obstacles() -> Vec<Obstacle> {
    vec![
        Obstacle::fixed("a", Vector3::new(3.0, 0.5, 2.0), 0.5),
        Obstacle::moving(
            "b",
            Vector3::new(2.0, -3.0, 2.0),
            Vector3::new(0.0, 0.3, 0.0),
            0.4,
        ),
    ]
}

#[test]
fn hover_at_the_goal_is_a_fixed_point() {
    let goal = Vector3::new(0.0, 0.0, 2.0);
    let mut c = nmpc(OcpConfig::default());
    let s = SystemState::at_rest(goal);
    let mut last_kkt = f64::INFINITY;
    for k in 0..5 {
        let sol = c.rti_step(&s, goal, &far_obstacles(), k as f64 * 0.05);
        assert_eq!(sol.status, SolverStatus::Optimal);
        assert!(
            (sol.force - c.model.hover_force()).amax() < 1e-8,
            "{}",
            sol.force
        );
        assert!(sol.u.iter().all(|u| u.amax() < 1e-8));
        assert!(sol.u_a.iter().all(|u| u.amax() < 1e-8));
        assert!(sol.kkt_residual < 1e-8 && sol.kkt_residual <= last_kkt.max(1e-12));
        last_kkt = sol.kkt_residual;
    }
}

fn transcription_for(
    barrier: BarrierMode,
    passivity: PassivityMode,
) -> slungmpc_core::ocp::Transcription {
    let cfg = OcpConfig {
        barrier,
        passivity,
        ..OcpConfig::default()
    };
    let model = ModelParams::default();
    let s = SystemState {
        xi_dot: Vector3::new(0.5, 0.1, 0.0),
        ..SystemState::at_rest(Vector3::new(0.0, 0.0, 2.0))
    };
    let obstacles = far_obstacles();
    let p = Problem {
        state: &s,
        reference: Vector3::new(4.0, 0.0, 2.0),
        obstacles: &obstacles,
        config: &cfg,
        model: &model,
        safety: &SafetyParams::default(),
        energy: &PassivityParams::default(),
    };
    let w = WarmStart::hover_hold(&s, &cfg, &model).unwrap();
    transcribe(&p, &w.x, &w.u).unwrap()
}

#[test]
fn constraint_counts_follow_the_arm() {
    let n = OcpConfig::default().nodes;
    let tr = transcription_for(BarrierMode::HighOrder, PassivityMode::Exact);
    assert_eq!(tr.counts.barrier_rows, 2 * 2 * n);
    assert_eq!(tr.counts.passivity_balls, 1);
    assert_eq!(tr.counts.passivity_rows, n - 1);
    assert!(tr.qp.stages[0].ball.is_some());
    assert!(tr.qp.stages[1..].iter().all(|s| s.ball.is_none()));

    let tr = transcription_for(BarrierMode::HighOrder, PassivityMode::Linearized);
    assert_eq!(
        (tr.counts.passivity_balls, tr.counts.passivity_rows),
        (0, n)
    );

    let tr = transcription_for(BarrierMode::None, PassivityMode::Off);
    assert_eq!(
        tr.counts.barrier_rows + tr.counts.passivity_rows + tr.counts.passivity_balls,
        0
    );
}

#[test]
fn lower_order_barriers_do_not_involve_the_input() {
    for mode in [BarrierMode::StateConstraint, BarrierMode::FirstOrder] {
        let tr = transcription_for(mode, PassivityMode::Off);
        for stage in &tr.qp.stages {
            assert_eq!(stage.rows.len(), 4);
            assert!(stage.rows.iter().all(|r| r.e.amax() == 0.0));
        }
    }
    let tr = transcription_for(BarrierMode::HighOrder, PassivityMode::Off);
    assert!(tr
        .qp
        .stages
        .iter()
        .all(|s| s.rows.iter().all(|r| r.e.amax() > 0.0)));
}

#[test]
fn shift_moves_every_node_forward() {
    let cfg = OcpConfig {
        nodes: 4,
        ..OcpConfig::default()
    };
    let model = ModelParams::default();
    let s = SystemState {
        gamma: Vector2::new(0.2, 0.0),
        ..SystemState::at_rest(Vector3::zeros())
    };
    let mut w = WarmStart::hover_hold(&s, &cfg, &model).unwrap();
    w.u = (0..4).map(|k| Vector3::from_element(k as f64)).collect();
    w.active_rows = vec![(0, 1), (2, 3)];
    let shifted = shift_warm_start(&w, 0.05);
    assert_eq!(shifted.x[..4], w.x[1..]);
    assert_eq!(shifted.x[4], w.x[4]);
    assert_eq!(shifted.u, vec![w.u[1], w.u[2], w.u[3], w.u[3]]);
    assert_eq!(shifted.active_rows, vec![(1, 3)]);
    assert!((shifted.t0 - 0.05).abs() < 1e-15);
}

#[test]
fn shifting_a_constant_trajectory_is_the_identity() {
    let cfg = OcpConfig {
        nodes: 5,
        ..OcpConfig::default()
    };
    let model = ModelParams::default();
    let w = WarmStart::hover_hold(
        &SystemState::at_rest(Vector3::new(1.0, 2.0, 3.0)),
        &cfg,
        &model,
    )
    .unwrap();
    let shifted = shift_warm_start(&w, 0.0);
    assert_eq!(
        (shifted.x.clone(), shifted.u.clone()),
        (w.x.clone(), w.u.clone())
    );

    let mut w = w;
    w.u = (0..5).map(|k| Vector3::from_element(k as f64)).collect();
    let twice = shift_warm_start(&shift_warm_start(&w, 0.05), 0.05);
    assert_eq!(twice.u, vec![w.u[2], w.u[3], w.u[4], w.u[4], w.u[4]]);
    assert_eq!(twice.x[..4], w.x[2..]);
    assert_eq!((twice.x[4], twice.x[5]), (w.x[5], w.x[5]));
}

/// Without constraints the subproblem around a fixed point is finite-horizon
/// LQR on the node Jacobians.
#[test]
fn unconstrained_step_matches_riccati_recursion() {
    let cfg = OcpConfig {
        barrier: BarrierMode::None,
        passivity: PassivityMode::Off,
        ..OcpConfig::default()
    };
    let goal = Vector3::new(0.0, 0.0, 2.0);
    let start = goal + Vector3::new(0.05, -0.03, 0.02);
    let s = SystemState::at_rest(start);
    let mut c = nmpc(cfg.clone());
    let sol = c.rti_step(&s, goal, &[], 0.0);
    assert_eq!(sol.status, SolverStatus::Optimal);

    let (_, a, b) = linearize_node(&s.to_vector(), &Vector3::zeros(), cfg.dt(), &c.model).unwrap();
    let a = DMatrix::from_column_slice(10, 10, a.as_slice());
    let b = DMatrix::from_column_slice(10, 3, b.as_slice());
    let q = DMatrix::from_column_slice(10, 10, cfg.q_weight.as_slice());
    let r = DMatrix::from_column_slice(3, 3, cfg.r_weight.as_slice());
    let mut p = DMatrix::from_column_slice(10, 10, cfg.terminal().as_slice());
    for _ in 1..cfg.nodes {
        let gain = (&r + b.transpose() * &p * &b)
            .lu()
            .solve(&(b.transpose() * &p * &a))
            .unwrap();
        p = &q + a.transpose() * &p * (&a - &b * gain);
        p = (&p + p.transpose()) * 0.5;
    }
    let mut y0 = nalgebra::DVector::zeros(10);
    for i in 0..3 {
        y0[i] = start[i] - goal[i];
    }
    let u0 = -(&r + b.transpose() * &p * &b)
        .lu()
        .solve(&(b.transpose() * &p * &a * y0))
        .unwrap();
    let err = (Vector3::new(u0[0], u0[1], u0[2]) - sol.u[0]).amax();
    assert!(err < 1e-6 * u0.amax().max(1.0), "{u0} vs {}", sol.u[0]);
}

#[test]
fn applied_input_satisfies_the_exact_passivity_ball() {
    let mut c = nmpc(OcpConfig::default());
    let goal = Vector3::new(4.0, 0.0, 2.0);
    let s = SystemState {
        xi_dot: Vector3::new(0.6, -0.2, 0.1),
        gamma: Vector2::new(0.1, 0.05),
        ..SystemState::at_rest(Vector3::new(0.5, 0.0, 2.0))
    };
    let sol = c.rti_step(&s, goal, &far_obstacles(), 0.0);
    assert_eq!(sol.status, SolverStatus::Optimal);
    assert!(passivity_residual(&sol.u_a[0], &s.xi_dot, &c.energy) <= 1e-6);
}

#[test]
fn sqp_iterations_converge() {
    let cfg = OcpConfig {
        sqp_iterations: 30,
        sqp_tolerance: 1e-7,
        ..OcpConfig::default()
    };
    let mut c = nmpc(cfg);
    let s = SystemState {
        xi_dot: Vector3::new(0.4, 0.0, 0.0),
        gamma: Vector2::new(0.2, -0.1),
        ..SystemState::at_rest(Vector3::new(0.0, 0.0, 2.0))
    };
    let sol = c.rti_step(&s, Vector3::new(1.0, 0.0, 2.0), &far_obstacles(), 0.0);
    assert_eq!(sol.status, SolverStatus::Optimal);
    assert!(sol.sqp_iterations < 30, "{}", sol.sqp_iterations);
    let model = ModelParams::default();
    let dt = OcpConfig::default().dt();
    for k in 0..sol.u.len() {
        let (next, _, _) = linearize_node(&sol.x[k], &sol.u[k], dt, &model).unwrap();
        assert!((next - sol.x[k + 1]).amax() < 1e-6, "defect at node {k}");
    }
}
