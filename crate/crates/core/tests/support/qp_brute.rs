//! Exhaustive active-set enumeration for small QPs and a random problem
//! generator, shared by the QP oracle tests.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use slungmpc_core::qp::{QpProblem, QpSolution};

/// A constraint row `aᵀz ≥ b` (or `= b`) in the oracle's flat form.
struct Row {
    a: DVector<f64>,
    b: f64,
    equality: bool,
}

fn rows_of(p: &QpProblem) -> Vec<Row> {
    let n = p.dim();
    let mut rows = Vec::new();
    for i in 0..p.a_eq.nrows() {
        rows.push(Row {
            a: p.a_eq.row(i).transpose(),
            b: p.b_eq[i],
            equality: true,
        });
    }
    for i in 0..p.a_in.nrows() {
        rows.push(Row {
            a: p.a_in.row(i).transpose(),
            b: p.b_in[i],
            equality: false,
        });
    }
    for i in 0..n {
        let mut e = DVector::zeros(n);
        e[i] = 1.0;
        if p.lb[i].is_finite() {
            rows.push(Row {
                a: e.clone(),
                b: p.lb[i],
                equality: false,
            });
        }
        if p.ub[i].is_finite() {
            rows.push(Row {
                a: -e,
                b: -p.ub[i],
                equality: false,
            });
        }
    }
    rows
}

/// Returns the optimal `(z, multipliers)` over all rows, or `None` when
/// no subset yields a primal and dual feasible KKT point.
pub fn enumerate(p: &QpProblem) -> Option<(DVector<f64>, DVector<f64>)> {
    let n = p.dim();
    let rows = rows_of(p);
    let m = rows.len();
    let eq: Vec<usize> = (0..m).filter(|&i| rows[i].equality).collect();
    let ineq: Vec<usize> = (0..m).filter(|&i| !rows[i].equality).collect();
    let mut best: Option<(f64, DVector<f64>, DVector<f64>)> = None;
    for mask in 0u32..(1 << ineq.len()) {
        let active: Vec<usize> = eq
            .iter()
            .copied()
            .chain(
                ineq.iter()
                    .enumerate()
                    .filter(|(j, _)| mask & (1 << j) != 0)
                    .map(|(_, &i)| i),
            )
            .collect();
        let k = active.len();
        if k > n {
            continue;
        }
        let mut kkt = DMatrix::zeros(n + k, n + k);
        let mut rhs = DVector::zeros(n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&p.h);
        rhs.rows_mut(0, n).copy_from(&(-&p.g));
        for (c, &i) in active.iter().enumerate() {
            for r in 0..n {
                kkt[(r, n + c)] = -rows[i].a[r];
                kkt[(n + c, r)] = rows[i].a[r];
            }
            rhs[n + c] = rows[i].b;
        }
        let lu = kkt.lu();
        if lu.determinant().abs() < 1e-12 {
            continue;
        }
        let Some(sol) = lu.solve(&rhs) else { continue };
        let z = sol.rows(0, n).into_owned();
        let primal_ok = rows.iter().all(|r| {
            let s = r.a.dot(&z) - r.b;
            if r.equality {
                s.abs() < 1e-9
            } else {
                s > -1e-9
            }
        });
        let dual_ok = active
            .iter()
            .enumerate()
            .all(|(c, &i)| rows[i].equality || sol[n + c] > -1e-10);
        if primal_ok && dual_ok {
            let mut mult = DVector::zeros(m);
            for (c, &i) in active.iter().enumerate() {
                mult[i] = sol[n + c];
            }
            let obj = p.objective(&z);
            if best.as_ref().is_none_or(|(o, _, _)| obj < *o) {
                best = Some((obj, z, mult));
            }
        }
    }
    best.map(|(_, z, mult)| (z, mult))
}

pub fn solver_multipliers(p: &QpProblem, sol: &QpSolution) -> DVector<f64> {
    let n = p.dim();
    let mut out: Vec<f64> = sol
        .lambda_eq
        .iter()
        .chain(sol.mu_in.iter())
        .copied()
        .collect();
    for i in 0..n {
        if p.lb[i].is_finite() {
            out.push(sol.mu_lb[i]);
        }
        if p.ub[i].is_finite() {
            out.push(sol.mu_ub[i]);
        }
    }
    DVector::from_vec(out)
}

pub fn random_problem(rng: &mut ChaCha8Rng) -> QpProblem {
    let n = rng.random_range(1..=6);
    let m_total = rng.random_range(0..=8);
    let n_eq = if m_total > 0 && rng.random_bool(0.25) {
        rng.random_range(1..=(n - 1).clamp(1, 2))
    } else {
        0
    };
    let n_eq = n_eq.min(m_total).min(n);
    let n_bounds = rng.random_range(0..=(m_total - n_eq).min(n));
    let n_in = m_total - n_eq - n_bounds;

    let l = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let h = &l * l.transpose() + DMatrix::identity(n, n) * 0.1;
    let g = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
    let anchor = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let feasible = rng.random_bool(0.9);

    let a_eq = DMatrix::from_fn(n_eq, n, |_, _| rng.random_range(-1.0..1.0));
    let b_eq = &a_eq * &anchor;
    let a_in = DMatrix::from_fn(n_in, n, |_, _| rng.random_range(-1.0..1.0));
    let b_in = if feasible {
        &a_in * &anchor - DVector::from_fn(n_in, |_, _| rng.random_range(0.0..0.5))
    } else {
        DVector::from_fn(n_in, |_, _| rng.random_range(-0.5..1.5))
    };
    let mut lb = DVector::from_element(n, f64::NEG_INFINITY);
    let mut ub = DVector::from_element(n, f64::INFINITY);
    for _ in 0..n_bounds {
        let i = rng.random_range(0..n);
        if rng.random_bool(0.5) {
            lb[i] = anchor[i] - rng.random_range(0.0..0.5);
        } else {
            ub[i] = anchor[i] + rng.random_range(0.0..0.5);
        }
    }
    QpProblem::new(h, g)
        .with_equalities(a_eq, b_eq)
        .with_inequalities(a_in, b_in)
        .with_bounds(lb, ub)
}
