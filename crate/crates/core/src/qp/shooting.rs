//! Stage-structured QPs from multiple-shooting transcriptions.
//!
//! ```text
//! minimize    Σ_k ½x_kᵀQ_k x_k + q_kᵀx_k + ½u_kᵀR_k u_k + r_kᵀu_k
//!             + ½x_NᵀQ_N x_N + q_Nᵀx_N + Σ_j w_j s_j + ½ω_j s_j²
//! subject to  x_{k+1} = A_k x_k + B_k u_k + c_k,   x_0 fixed
//!             d_iᵀx_k + e_iᵀu_k (+ s_j) ≥ rhs_i
//!             u_lb ≤ u_k ≤ u_ub,  s ≥ 0,  optional ball on u_k
//! ```
//!
//! [`ShootingQp::condense`] eliminates the states and yields a dense
//! problem in the inputs and slacks only.

use nalgebra::{DMatrix, DVector};

use super::{
    solve, BallConstraint, ConstraintRef, QpProblem, QpSettings, QpSolution, QpStatus, WarmStart,
};

/// `dᵀx_k + eᵀu_k + s_soft ≥ rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct StageRow {
    pub d: DVector<f64>,
    pub e: DVector<f64>,
    pub rhs: f64,
    /// Index of the slack variable relaxing this row, if any.
    pub soft: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShootingStage {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DVector<f64>,
    pub q: DMatrix<f64>,
    pub q_lin: DVector<f64>,
    pub r: DMatrix<f64>,
    pub r_lin: DVector<f64>,
    pub rows: Vec<StageRow>,
    pub u_lb: DVector<f64>,
    pub u_ub: DVector<f64>,
    /// Ball on this stage's input; indices refer to `u_k`.
    pub ball: Option<BallConstraint>,
}

impl ShootingStage {
    /// Unconstrained stage with the given dynamics and weights.
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, q: DMatrix<f64>, r: DMatrix<f64>) -> Self {
        let (nx, nu) = (a.nrows(), b.ncols());
        Self {
            a,
            b,
            c: DVector::zeros(nx),
            q,
            q_lin: DVector::zeros(nx),
            r,
            r_lin: DVector::zeros(nu),
            rows: Vec::new(),
            u_lb: DVector::from_element(nu, f64::NEG_INFINITY),
            u_ub: DVector::from_element(nu, f64::INFINITY),
            ball: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TerminalStage {
    pub q: DMatrix<f64>,
    pub q_lin: DVector<f64>,
    /// Rows on `x_N`; their `e` vectors are ignored.
    pub rows: Vec<StageRow>,
}

/// Linear and quadratic penalty of one slack variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlackWeight {
    pub linear: f64,
    pub quadratic: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShootingQp {
    pub x0: DVector<f64>,
    pub stages: Vec<ShootingStage>,
    pub terminal: TerminalStage,
    pub slacks: Vec<SlackWeight>,
}

/// Dense problem produced by condensing, with the data needed to recover states.
#[derive(Debug, Clone)]
pub struct Condensed {
    pub problem: QpProblem,
    /// Row `i` of the dense inequalities is row `rows[i].1` of stage `rows[i].0`;
    /// stage `N` is the terminal stage.
    pub rows: Vec<(usize, usize)>,
    free: Vec<DVector<f64>>,
    /// `∂x_{k+1}/∂u`, one `nx × nu·N` block per node `k + 1`.
    sensitivity: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct ShootingSolution {
    /// States `x_0..x_N`.
    pub x: Vec<DVector<f64>>,
    /// Inputs `u_0..u_{N−1}`.
    pub u: Vec<DVector<f64>>,
    pub slacks: DVector<f64>,
    pub status: QpStatus,
    pub qp: QpSolution,
    /// Active rows as `(stage, row)`.
    pub active_rows: Vec<(usize, usize)>,
}

impl ShootingQp {
    pub fn horizon(&self) -> usize {
        self.stages.len()
    }

    fn dims(&self) -> (usize, usize) {
        let nx = self.x0.len();
        let nu = self.stages.first().map_or(0, |s| s.b.ncols());
        (nx, nu)
    }

    fn row_count(&self) -> usize {
        self.stages.iter().map(|s| s.rows.len()).sum::<usize>() + self.terminal.rows.len()
    }

    pub fn condense(&self) -> Condensed {
        let (nx, nu) = self.dims();
        let n_stage = self.horizon();
        let nu_all = nu * n_stage;
        let ns = self.slacks.len();
        let n = nu_all + ns;

        let mut free = Vec::with_capacity(n_stage + 1);
        free.push(self.x0.clone());
        for (k, stage) in self.stages.iter().enumerate() {
            free.push(&stage.a * &free[k] + &stage.c);
        }

        // Rows nx·k .. nx·(k+1) hold ∂x_{k+1}/∂u.
        let mut sens = DMatrix::<f64>::zeros(nx * n_stage, nu_all);
        for (k, stage) in self.stages.iter().enumerate() {
            if k > 0 {
                let prev = sens.view((nx * (k - 1), 0), (nx, nu * k)).into_owned();
                sens.view_mut((nx * k, 0), (nx, nu * k))
                    .copy_from(&(&stage.a * prev));
            }
            sens.view_mut((nx * k, nu * k), (nx, nu))
                .copy_from(&stage.b);
        }

        // Backward recursions over the state weights W_m of nodes 1..N:
        //   M_m = W_m + A_mᵀ M_{m+1} A_m,   λ_m = W_m x̂_m + w_m + A_mᵀ λ_{m+1},
        // give H_ij = S_{j+1,i}ᵀ M_{j+1} B_j (i ≤ j) and g_i = B_iᵀ λ_{i+1},
        // where x̂ is the free response and S_{k,i} = ∂x_k/∂u_i.
        let weight = |m: usize| {
            if m == n_stage {
                (&self.terminal.q, &self.terminal.q_lin)
            } else {
                (&self.stages[m].q, &self.stages[m].q_lin)
            }
        };
        let mut h = DMatrix::<f64>::zeros(n, n);
        let mut g = DVector::<f64>::zeros(n);
        if n_stage > 0 {
            let (w_n, w_lin) = weight(n_stage);
            let mut big_m = w_n.clone();
            let mut lambda = w_n * &free[n_stage] + w_lin;
            for j in (0..n_stage).rev() {
                let b = &self.stages[j].b;
                let mb = &big_m * b;
                g.rows_mut(nu * j, nu).copy_from(&b.tr_mul(&lambda));
                let diag = b.tr_mul(&mb);
                h.view_mut((nu * j, nu * j), (nu, nu))
                    .copy_from(&((&diag + diag.transpose()) * 0.5));
                if j > 0 {
                    let blk = sens.view((nx * j, 0), (nx, nu * j)).tr_mul(&mb);
                    h.view_mut((0, nu * j), (nu * j, nu)).copy_from(&blk);
                    h.view_mut((nu * j, 0), (nu, nu * j))
                        .copy_from(&blk.transpose());
                }
                if j > 0 {
                    let a = &self.stages[j].a;
                    let (w, w_lin) = weight(j);
                    big_m = w + a.tr_mul(&(&big_m * a));
                    lambda = w * &free[j] + w_lin + a.tr_mul(&lambda);
                }
            }
        }
        for (k, stage) in self.stages.iter().enumerate() {
            let mut blk = h.view_mut((nu * k, nu * k), (nu, nu));
            blk += &stage.r;
            let mut gk = g.rows_mut(nu * k, nu);
            gk += &stage.r_lin;
        }
        for (j, w) in self.slacks.iter().enumerate() {
            h[(nu_all + j, nu_all + j)] = w.quadratic;
            g[nu_all + j] = w.linear;
        }

        let m = self.row_count();
        let mut a_in = DMatrix::<f64>::zeros(m, n);
        let mut b_in = DVector::<f64>::zeros(m);
        let mut rows = Vec::with_capacity(m);
        let mut i = 0;
        let stage_rows = self
            .stages
            .iter()
            .enumerate()
            .flat_map(|(k, s)| {
                s.rows
                    .iter()
                    .enumerate()
                    .map(move |(r, row)| (k, r, row, true))
            })
            .chain(
                self.terminal
                    .rows
                    .iter()
                    .enumerate()
                    .map(|(r, row)| (n_stage, r, row, false)),
            );
        for (k, r, row, has_input) in stage_rows {
            let mut rhs = row.rhs - row.d.dot(&free[k]);
            if k > 0 {
                let block = sens.view((nx * (k - 1), 0), (nx, nu * k));
                let coeffs = block.tr_mul(&row.d);
                a_in.view_mut((i, 0), (1, nu * k))
                    .copy_from(&coeffs.transpose());
            }
            if has_input {
                a_in.view_mut((i, nu * k), (1, nu))
                    .copy_from(&row.e.transpose());
            }
            if let Some(j) = row.soft {
                a_in[(i, nu_all + j)] = 1.0;
            }
            if rhs == 0.0 {
                rhs = 0.0;
            }
            b_in[i] = rhs;
            rows.push((k, r));
            i += 1;
        }

        let mut lb = DVector::from_element(n, f64::NEG_INFINITY);
        let mut ub = DVector::from_element(n, f64::INFINITY);
        let mut balls = Vec::new();
        for (k, stage) in self.stages.iter().enumerate() {
            lb.rows_mut(nu * k, nu).copy_from(&stage.u_lb);
            ub.rows_mut(nu * k, nu).copy_from(&stage.u_ub);
            if let Some(ball) = &stage.ball {
                balls.push(BallConstraint {
                    indices: ball.indices.iter().map(|i| nu * k + i).collect(),
                    center: ball.center.clone(),
                    radius: ball.radius,
                });
            }
        }
        for j in 0..ns {
            lb[nu_all + j] = 0.0;
        }

        let problem = QpProblem {
            balls,
            ..QpProblem::new(h, g)
                .with_inequalities(a_in, b_in)
                .with_bounds(lb, ub)
        };
        Condensed {
            problem,
            rows,
            free,
            sensitivity: sens,
        }
    }

    /// Sparse form in `[u_0, x_1, u_1, x_2, …, u_{N−1}, x_N, s]` with the
    /// dynamics as equalities.
    pub fn to_dense(&self) -> QpProblem {
        let (nx, nu) = self.dims();
        let n_stage = self.horizon();
        let ns = self.slacks.len();
        let n = (nx + nu) * n_stage + ns;
        let u_at = |k: usize| (nx + nu) * k;
        let x_at = |k: usize| (nx + nu) * (k - 1) + nu;
        let s_at = (nx + nu) * n_stage;

        let mut h = DMatrix::<f64>::zeros(n, n);
        let mut g = DVector::<f64>::zeros(n);
        for (k, stage) in self.stages.iter().enumerate() {
            h.view_mut((u_at(k), u_at(k)), (nu, nu)).copy_from(&stage.r);
            g.rows_mut(u_at(k), nu).copy_from(&stage.r_lin);
            if k > 0 {
                h.view_mut((x_at(k), x_at(k)), (nx, nx)).copy_from(&stage.q);
                g.rows_mut(x_at(k), nx).copy_from(&stage.q_lin);
            }
        }
        h.view_mut((x_at(n_stage), x_at(n_stage)), (nx, nx))
            .copy_from(&self.terminal.q);
        g.rows_mut(x_at(n_stage), nx)
            .copy_from(&self.terminal.q_lin);
        for (j, w) in self.slacks.iter().enumerate() {
            h[(s_at + j, s_at + j)] = w.quadratic;
            g[s_at + j] = w.linear;
        }

        let mut a_eq = DMatrix::<f64>::zeros(nx * n_stage, n);
        let mut b_eq = DVector::<f64>::zeros(nx * n_stage);
        for (k, stage) in self.stages.iter().enumerate() {
            let r0 = nx * k;
            a_eq.view_mut((r0, x_at(k + 1)), (nx, nx))
                .fill_with_identity();
            a_eq.view_mut((r0, u_at(k)), (nx, nu))
                .copy_from(&(-&stage.b));
            let mut rhs = stage.c.clone();
            if k == 0 {
                rhs += &stage.a * &self.x0;
            } else {
                a_eq.view_mut((r0, x_at(k)), (nx, nx))
                    .copy_from(&(-&stage.a));
            }
            b_eq.rows_mut(r0, nx).copy_from(&rhs);
        }

        let m = self.row_count();
        let mut a_in = DMatrix::<f64>::zeros(m, n);
        let mut b_in = DVector::<f64>::zeros(m);
        let mut i = 0;
        for (k, stage) in self.stages.iter().enumerate() {
            for row in &stage.rows {
                let mut rhs = row.rhs;
                if k == 0 {
                    rhs -= row.d.dot(&self.x0);
                } else {
                    a_in.view_mut((i, x_at(k)), (1, nx))
                        .copy_from(&row.d.transpose());
                }
                a_in.view_mut((i, u_at(k)), (1, nu))
                    .copy_from(&row.e.transpose());
                if let Some(j) = row.soft {
                    a_in[(i, s_at + j)] = 1.0;
                }
                b_in[i] = rhs;
                i += 1;
            }
        }
        for row in &self.terminal.rows {
            a_in.view_mut((i, x_at(n_stage)), (1, nx))
                .copy_from(&row.d.transpose());
            if let Some(j) = row.soft {
                a_in[(i, s_at + j)] = 1.0;
            }
            b_in[i] = row.rhs;
            i += 1;
        }

        let mut lb = DVector::from_element(n, f64::NEG_INFINITY);
        let mut ub = DVector::from_element(n, f64::INFINITY);
        let mut balls = Vec::new();
        for (k, stage) in self.stages.iter().enumerate() {
            lb.rows_mut(u_at(k), nu).copy_from(&stage.u_lb);
            ub.rows_mut(u_at(k), nu).copy_from(&stage.u_ub);
            if let Some(ball) = &stage.ball {
                balls.push(BallConstraint {
                    indices: ball.indices.iter().map(|i| u_at(k) + i).collect(),
                    center: ball.center.clone(),
                    radius: ball.radius,
                });
            }
        }
        for j in 0..ns {
            lb[s_at + j] = 0.0;
        }
        QpProblem {
            balls,
            ..QpProblem::new(h, g)
                .with_equalities(a_eq, b_eq)
                .with_inequalities(a_in, b_in)
                .with_bounds(lb, ub)
        }
    }

    /// Condenses, solves and expands the solution back to stage form.
    /// `warm` lists `(stage, row)` pairs expected to be active.
    pub fn solve(&self, settings: &QpSettings, warm: &[(usize, usize)]) -> ShootingSolution {
        let condensed = self.condense();
        let warm_start = (!warm.is_empty()).then(|| {
            let index: std::collections::HashMap<(usize, usize), usize> = condensed
                .rows
                .iter()
                .enumerate()
                .map(|(i, r)| (*r, i))
                .collect();
            WarmStart {
                active: warm
                    .iter()
                    .filter_map(|r| index.get(r).map(|&i| ConstraintRef::In(i)))
                    .collect(),
            }
        });
        let qp = solve(&condensed.problem, settings, warm_start.as_ref());
        condensed.expand(self, qp)
    }
}

impl Condensed {
    pub fn expand(&self, shooting: &ShootingQp, qp: QpSolution) -> ShootingSolution {
        let (nx, nu) = shooting.dims();
        let n_stage = shooting.horizon();
        let nu_all = nu * n_stage;
        let u_all = qp.z.rows(0, nu_all);
        let mut x = Vec::with_capacity(n_stage + 1);
        x.push(self.free[0].clone());
        for k in 0..n_stage {
            let block = self.sensitivity.view((nx * k, 0), (nx, nu * (k + 1)));
            x.push(&self.free[k + 1] + block * u_all.rows(0, nu * (k + 1)));
        }
        let u = (0..n_stage)
            .map(|k| qp.z.rows(nu * k, nu).into_owned())
            .collect();
        let slacks = qp.z.rows(nu_all, qp.z.len() - nu_all).into_owned();
        let active_rows = qp
            .active_set
            .iter()
            .filter_map(|c| match c {
                ConstraintRef::In(i) => Some(self.rows[*i]),
                _ => None,
            })
            .collect();
        ShootingSolution {
            x,
            u,
            slacks,
            status: qp.status,
            qp,
            active_rows,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn double_integrator(n_stage: usize) -> ShootingQp {
        let dt = 0.1;
        let a = DMatrix::from_row_slice(2, 2, &[1.0, dt, 0.0, 1.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.5 * dt * dt, dt]);
        let q = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.1]));
        let r = DMatrix::from_element(1, 1, 0.01);
        let mut stages: Vec<_> = (0..n_stage)
            .map(|_| ShootingStage::new(a.clone(), b.clone(), q.clone(), r.clone()))
            .collect();
        for s in &mut stages {
            s.u_lb = DVector::from_element(1, -2.0);
            s.u_ub = DVector::from_element(1, 2.0);
            // Velocity never below -0.8.
            s.rows.push(StageRow {
                d: DVector::from_vec(vec![0.0, 1.0]),
                e: DVector::zeros(1),
                rhs: -0.8,
                soft: None,
            });
        }
        ShootingQp {
            x0: DVector::from_vec(vec![1.0, 0.0]),
            stages,
            terminal: TerminalStage {
                q: q * 10.0,
                q_lin: DVector::zeros(2),
                rows: Vec::new(),
            },
            slacks: Vec::new(),
        }
    }

    #[test]
    fn condensed_and_sparse_forms_agree() {
        let sqp = double_integrator(12);
        let settings = QpSettings::default();
        let cond = sqp.solve(&settings, &[]);
        assert_eq!(cond.status, QpStatus::Optimal);
        let sparse = solve(&sqp.to_dense(), &settings, None);
        assert_eq!(sparse.status, QpStatus::Optimal);
        for k in 0..12 {
            assert_relative_eq!(cond.u[k][0], sparse.z[3 * k], epsilon = 1e-7);
            assert_relative_eq!(
                cond.x[k + 1],
                sparse.z.rows(3 * k + 1, 2).into_owned(),
                epsilon = 1e-7
            );
        }
        assert!(cond.x.iter().all(|x| x[1] >= -0.8 - 1e-9));
        assert!(!cond.active_rows.is_empty());
    }

    #[test]
    fn expanded_states_follow_the_dynamics() {
        let sqp = double_integrator(8);
        let sol = sqp.solve(&QpSettings::default(), &[]);
        for (k, stage) in sqp.stages.iter().enumerate() {
            let next = &stage.a * &sol.x[k] + &stage.b * &sol.u[k] + &stage.c;
            assert_relative_eq!(next, sol.x[k + 1], epsilon = 1e-12);
        }
    }

    #[test]
    fn soft_rows_use_slacks() {
        let mut sqp = double_integrator(5);
        // Impossible without relaxation: position ≥ 5 at node 1.
        sqp.stages[1].rows.push(StageRow {
            d: DVector::from_vec(vec![1.0, 0.0]),
            e: DVector::zeros(1),
            rhs: 5.0,
            soft: Some(0),
        });
        sqp.slacks.push(SlackWeight {
            linear: 10.0,
            quadratic: 1e-3,
        });
        let sol = sqp.solve(&QpSettings::default(), &[]);
        assert_eq!(sol.status, QpStatus::Optimal);
        assert!(sol.slacks[0] > 3.0);
        assert_relative_eq!(sol.x[1][0] + sol.slacks[0], 5.0, epsilon = 1e-8);
    }

    #[test]
    fn warm_start_reuses_active_rows() {
        let sqp = double_integrator(12);
        let settings = QpSettings::default();
        let cold = sqp.solve(&settings, &[]);
        let warm = sqp.solve(&settings, &cold.active_rows);
        assert!(warm.qp.iterations <= cold.qp.iterations);
        assert_relative_eq!(warm.qp.z, cold.qp.z, epsilon = 1e-9);
    }
}
