//! Goldfarb–Idnani dual active-set iteration.
//!
//! Invariants between steps: `J Jᵀ = H⁻¹` and `Jᵀ N_A = [R; 0]` where
//! `N_A` holds the normals of the active constraints and `R` is upper
//! triangular. Every constraint is stored in the sense `nᵀz ≥ b`.

use nalgebra::{DMatrix, DVector};

use super::{
    check_kkt, ConstraintRef, Cut, FarkasCertificate, QpProblem, QpSettings, QpSolution, QpStatus,
    WarmStart,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Equality,
    Inequality,
}

#[derive(Debug, Clone, Copy)]
enum Normal {
    Dense(usize),
    Bound { var: usize, sign: f64 },
}

#[derive(Debug, Clone, Copy)]
struct Row {
    normal: Normal,
    rhs: f64,
    norm: f64,
    kind: Kind,
    origin: ConstraintRef,
    /// Equality stored with its sign flipped so that it starts violated.
    flipped: bool,
}

struct Workspace {
    n: usize,
    rows: Vec<Row>,
    /// Row-major storage of dense normals.
    dense: Vec<f64>,
    j: DMatrix<f64>,
    r: DMatrix<f64>,
    active: Vec<usize>,
    multipliers: Vec<f64>,
    is_active: Vec<bool>,
    z: DVector<f64>,
    iterations: usize,
}

enum AddOutcome {
    Added,
    Infeasible(FarkasCertificate),
    /// Equality already satisfied and linearly dependent on the active set.
    Redundant,
}

impl Workspace {
    fn push_dense(
        &mut self,
        values: impl Iterator<Item = f64>,
        rhs: f64,
        kind: Kind,
        origin: ConstraintRef,
    ) {
        let idx = self.dense.len() / self.n;
        self.dense.extend(values);
        let norm = self.dense[idx * self.n..]
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        self.rows.push(Row {
            normal: Normal::Dense(idx),
            rhs,
            norm,
            kind,
            origin,
            flipped: false,
        });
        self.is_active.push(false);
    }

    fn push_bound(&mut self, var: usize, sign: f64, rhs: f64, origin: ConstraintRef) {
        self.rows.push(Row {
            normal: Normal::Bound { var, sign },
            rhs,
            norm: 1.0,
            kind: Kind::Inequality,
            origin,
            flipped: false,
        });
        self.is_active.push(false);
    }

    fn dense_row(&self, idx: usize) -> &[f64] {
        &self.dense[idx * self.n..(idx + 1) * self.n]
    }

    fn sign(&self, row: usize) -> f64 {
        if self.rows[row].flipped {
            -1.0
        } else {
            1.0
        }
    }

    /// `nᵀz − b` in the stored orientation.
    fn slack(&self, row: usize, z: &DVector<f64>) -> f64 {
        let r = &self.rows[row];
        let dot = match r.normal {
            Normal::Dense(idx) => dot(self.dense_row(idx), z.as_slice()),
            Normal::Bound { var, sign } => sign * z[var],
        };
        self.sign(row) * (dot - r.rhs)
    }

    fn rhs(&self, row: usize) -> f64 {
        self.sign(row) * self.rows[row].rhs
    }

    /// `Jᵀ n` for a stored row.
    fn project(&self, row: usize) -> DVector<f64> {
        let s = self.sign(row);
        match self.rows[row].normal {
            Normal::Dense(idx) => {
                let a = self.dense_row(idx);
                let j = self.j.as_slice();
                DVector::from_iterator(self.n, j.chunks_exact(self.n).map(|col| s * dot(col, a)))
            }
            Normal::Bound { var, sign } => {
                DVector::from_fn(self.n, |col, _| s * sign * self.j[(var, col)])
            }
        }
    }

    /// Rotates columns `a < b` of `J`.
    fn rotate_j(&mut self, a: usize, b: usize, c: f64, s: f64) {
        let n = self.n;
        let (left, right) = self.j.as_mut_slice().split_at_mut(b * n);
        let col_a = &mut left[a * n..(a + 1) * n];
        let col_b = &mut right[..n];
        for (x, y) in col_a.iter_mut().zip(col_b.iter_mut()) {
            let (xa, yb) = (*x, *y);
            *x = c * xa + s * yb;
            *y = -s * xa + c * yb;
        }
    }

    /// Appends `row` to the active set given `d = Jᵀn`.
    fn append_active(&mut self, row: usize, mut d: DVector<f64>, multiplier: f64) {
        let q = self.active.len();
        for j in (q + 1..self.n).rev() {
            let (a, b) = (d[j - 1], d[j]);
            if b == 0.0 {
                continue;
            }
            let h = a.hypot(b);
            let (c, s) = (a / h, b / h);
            d[j - 1] = h;
            d[j] = 0.0;
            self.rotate_j(j - 1, j, c, s);
        }
        for i in 0..=q {
            self.r[(i, q)] = d[i];
        }
        self.active.push(row);
        self.multipliers.push(multiplier);
        self.is_active[row] = true;
    }

    /// Removes the active constraint at position `pos` and restores the
    /// triangular factor.
    fn drop_active(&mut self, pos: usize) {
        let q = self.active.len();
        let row = self.active.remove(pos);
        self.multipliers.remove(pos);
        self.is_active[row] = false;
        for col in pos..q - 1 {
            for i in 0..q {
                self.r[(i, col)] = self.r[(i, col + 1)];
            }
        }
        for i in 0..q {
            self.r[(i, q - 1)] = 0.0;
        }
        for j in pos..q - 1 {
            let (a, b) = (self.r[(j, j)], self.r[(j + 1, j)]);
            if b == 0.0 {
                continue;
            }
            let h = a.hypot(b);
            let (c, s) = (a / h, b / h);
            for col in j..q - 1 {
                let (x, y) = (self.r[(j, col)], self.r[(j + 1, col)]);
                self.r[(j, col)] = c * x + s * y;
                self.r[(j + 1, col)] = -s * x + c * y;
            }
            self.r[(j + 1, j)] = 0.0;
            self.rotate_j(j, j + 1, c, s);
        }
    }

    /// Solves `R r = d[..q]`.
    fn dual_direction(&self, d: &DVector<f64>) -> Vec<f64> {
        let q = self.active.len();
        let mut r = vec![0.0; q];
        for i in (0..q).rev() {
            let mut acc = d[i];
            for k in i + 1..q {
                acc -= self.r[(i, k)] * r[k];
            }
            r[i] = acc / self.r[(i, i)];
        }
        r
    }

    /// Brings the violated row `p` into the active set, dropping blocking
    /// constraints along the way.
    fn add_constraint(&mut self, p: usize, tol: f64) -> AddOutcome {
        if self.rows[p].kind == Kind::Equality {
            self.rows[p].flipped = false;
            if self.slack(p, &self.z) > 0.0 {
                self.rows[p].flipped = true;
            }
        }
        let mut u_p = 0.0;
        loop {
            let d = self.project(p);
            let q = self.active.len();
            let mut step = DVector::zeros(self.n);
            let mut primal_norm2 = 0.0;
            for (col, jc) in self.j.as_slice().chunks_exact(self.n).enumerate().skip(q) {
                let w = d[col];
                if w != 0.0 {
                    for (st, x) in step.as_mut_slice().iter_mut().zip(jc) {
                        *st += w * x;
                    }
                    primal_norm2 += w * w;
                }
            }
            let r = self.dual_direction(&d);

            let r_scale = r.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            let mut partial = f64::INFINITY;
            let mut blocking = None;
            for (pos, (&row, &rv)) in self.active.iter().zip(&r).enumerate() {
                if self.rows[row].kind == Kind::Inequality && rv > 1e-14 * r_scale {
                    let ratio = self.multipliers[pos] / rv;
                    let better = match blocking {
                        None => true,
                        Some(bpos) => {
                            ratio < partial || (ratio == partial && row < self.active[bpos])
                        }
                    };
                    if better {
                        partial = ratio;
                        blocking = Some(pos);
                    }
                }
            }

            let s_p = self.slack(p, &self.z);
            let n_norm2 = self.rows[p].norm * self.rows[p].norm;
            if primal_norm2 <= 1e-20 * n_norm2.max(1.0) {
                let Some(pos) = blocking else {
                    if self.rows[p].kind == Kind::Equality
                        && s_p.abs() <= tol * self.rows[p].norm.max(1.0)
                    {
                        return AddOutcome::Redundant;
                    }
                    let mut weights = vec![(self.rows[p].origin, self.sign(p))];
                    let mut gap = self.rhs(p);
                    for (&row, &rv) in self.active.iter().zip(&r) {
                        weights.push((self.rows[row].origin, -rv * self.sign(row)));
                        gap -= rv * self.rhs(row);
                    }
                    return AddOutcome::Infeasible(FarkasCertificate { weights, gap });
                };
                for (u, rv) in self.multipliers.iter_mut().zip(&r) {
                    *u -= partial * rv;
                }
                u_p += partial;
                self.drop_active(pos);
                self.iterations += 1;
                continue;
            }

            let full = -s_p / primal_norm2;
            let t = full.min(partial);
            self.z.axpy(t, &step, 1.0);
            for (u, rv) in self.multipliers.iter_mut().zip(&r) {
                *u -= t * rv;
            }
            u_p += t;
            self.iterations += 1;
            if full <= partial {
                self.append_active(p, d, u_p);
                return AddOutcome::Added;
            }
            self.drop_active(blocking.expect("partial step needs a blocking constraint"));
        }
    }

    fn most_violated(&self, candidates: impl Iterator<Item = usize>, tol: f64) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for row in candidates {
            if self.is_active[row] {
                continue;
            }
            let r = &self.rows[row];
            let s = self.slack(row, &self.z);
            let violation = match r.kind {
                Kind::Inequality => -s,
                Kind::Equality => s.abs(),
            };
            let scaled = if r.norm > 0.0 {
                violation / r.norm
            } else {
                violation
            };
            if scaled > tol && best.is_none_or(|(_, v)| scaled > v) {
                best = Some((row, scaled));
            }
        }
        best.map(|(row, _)| row)
    }
}

fn factorize(h: &DMatrix<f64>) -> Option<(DMatrix<f64>, f64)> {
    let n = h.nrows();
    let attempt = |m: DMatrix<f64>| {
        m.cholesky()
            .map(|c| c.unpack())
            .filter(|l| l.diagonal().iter().all(|d| d * d >= 1e-12))
    };
    let (l, sigma) = match attempt(h.clone()) {
        Some(l) => (l, 0.0),
        None => {
            let lambda_min = h.clone().symmetric_eigenvalues().min();
            let sigma = (1e-9 - lambda_min).max(0.0);
            (attempt(h + DMatrix::identity(n, n) * sigma)?, sigma)
        }
    };
    Some((inverse_transpose(&l), sigma))
}

/// Dot product with four independent accumulators so the loop vectorizes.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `L⁻ᵀ` for lower-triangular `L`, computed as the inverse of `U = Lᵀ`
/// column by column; column `i` of `L` is row `i` of `U`.
fn inverse_transpose(l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let ls = l.as_slice();
    let mut j = DMatrix::<f64>::zeros(n, n);
    let js = j.as_mut_slice();
    for col in 0..n {
        let jc = col * n;
        js[jc + col] = 1.0 / ls[col * n + col];
        for i in (0..col).rev() {
            let u_row = &ls[i * n + i + 1..i * n + col + 1];
            let acc = dot(u_row, &js[jc + i + 1..jc + col + 1]);
            js[jc + i] = -acc / ls[i * n + i];
        }
    }
    j
}

fn failed(problem: &QpProblem, status: QpStatus, sigma: f64) -> QpSolution {
    let n = problem.dim();
    QpSolution {
        z: DVector::zeros(n),
        lambda_eq: DVector::zeros(problem.a_eq.nrows()),
        mu_in: DVector::zeros(problem.a_in.nrows()),
        mu_lb: DVector::zeros(n),
        mu_ub: DVector::zeros(n),
        cuts: Vec::new(),
        status,
        iterations: 0,
        regularization: sigma,
        active_set: Vec::new(),
        kkt: Default::default(),
        certificate: None,
    }
}

/// Solves a convex QP. Identical inputs (including the warm start) give
/// bit-identical results; ties are broken towards the lowest row index.
pub fn solve(problem: &QpProblem, settings: &QpSettings, warm: Option<&WarmStart>) -> QpSolution {
    if let Err(msg) = problem.validate() {
        assert!(msg.contains("non-finite"), "malformed QP: {msg}");
        return failed(problem, QpStatus::IllConditioned, 0.0);
    }
    let n = problem.dim();
    let Some((j, sigma)) = factorize(&problem.h) else {
        return failed(problem, QpStatus::IllConditioned, 0.0);
    };
    let z = -(&j * j.tr_mul(&problem.g));
    let mut ws = Workspace {
        n,
        rows: Vec::new(),
        dense: Vec::new(),
        j,
        r: DMatrix::zeros(n, n),
        active: Vec::new(),
        multipliers: Vec::new(),
        is_active: Vec::new(),
        z,
        iterations: 0,
    };
    for i in 0..problem.a_eq.nrows() {
        ws.push_dense(
            problem.a_eq.row(i).iter().copied(),
            problem.b_eq[i],
            Kind::Equality,
            ConstraintRef::Eq(i),
        );
    }
    for i in 0..problem.a_in.nrows() {
        ws.push_dense(
            problem.a_in.row(i).iter().copied(),
            problem.b_in[i],
            Kind::Inequality,
            ConstraintRef::In(i),
        );
    }
    let mut bound_rows = std::collections::HashMap::new();
    for i in 0..n {
        if problem.lb[i].is_finite() {
            bound_rows.insert(ConstraintRef::Lower(i), ws.rows.len());
            ws.push_bound(i, 1.0, problem.lb[i], ConstraintRef::Lower(i));
        }
        if problem.ub[i].is_finite() {
            bound_rows.insert(ConstraintRef::Upper(i), ws.rows.len());
            ws.push_bound(i, -1.0, -problem.ub[i], ConstraintRef::Upper(i));
        }
    }
    let n_eq = problem.a_eq.nrows();
    let n_in = problem.a_in.nrows();
    let warm_rows: Vec<usize> = warm
        .map(|w| {
            w.active
                .iter()
                .filter_map(|c| match *c {
                    ConstraintRef::In(i) if i < n_in => Some(n_eq + i),
                    ConstraintRef::Lower(_) | ConstraintRef::Upper(_) => bound_rows.get(c).copied(),
                    _ => None,
                })
                .collect()
        })
        .unwrap_or_default();

    let tol = settings.feasibility_tol;
    let mut status = QpStatus::Optimal;
    let mut certificate = None;
    let mut cut_balls: Vec<usize> = Vec::new();
    let mut pinned = vec![false; problem.balls.len()];

    let mut pending: Vec<usize> = (0..n_eq).collect();
    'outer: loop {
        while let Some(p) = pending.first().copied() {
            pending.remove(0);
            if ws.is_active[p] {
                continue;
            }
            match ws.add_constraint(p, tol) {
                AddOutcome::Added | AddOutcome::Redundant => {}
                AddOutcome::Infeasible(cert) => {
                    status = QpStatus::Infeasible;
                    certificate = Some(cert);
                    break 'outer;
                }
            }
        }
        if ws.iterations >= settings.max_iterations {
            status = QpStatus::MaxIterations;
            break;
        }
        let inequality_rows = n_eq..ws.rows.len();
        let candidate = ws
            .most_violated(warm_rows.iter().copied(), tol)
            .or_else(|| {
                ws.most_violated(
                    inequality_rows.filter(|&r| ws.rows[r].kind == Kind::Inequality),
                    tol,
                )
            });
        if let Some(p) = candidate {
            match ws.add_constraint(p, tol) {
                AddOutcome::Added | AddOutcome::Redundant => continue,
                AddOutcome::Infeasible(cert) => {
                    status = QpStatus::Infeasible;
                    certificate = Some(cert);
                    break;
                }
            }
        }

        // All linear rows hold; refine the outer approximation of each ball.
        let mut cut_added = false;
        for (b, ball) in problem.balls.iter().enumerate() {
            let slack = (settings.ball_tol * ball.radius).max(10.0 * tol);
            if pinned[b] || ball.violation(&ws.z) <= slack {
                continue;
            }
            if cut_balls.len() >= settings.max_cuts {
                status = QpStatus::MaxIterations;
                break 'outer;
            }
            let tightened = ball.radius - slack;
            let w: Vec<f64> = ball
                .indices
                .iter()
                .zip(ball.center.iter())
                .map(|(&i, c)| ws.z[i] - c)
                .collect();
            let dist = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            if tightened <= 0.0 || dist == 0.0 {
                pinned[b] = true;
                for (&i, &c) in ball.indices.iter().zip(ball.center.iter()) {
                    let k = cut_balls.len();
                    cut_balls.push(b);
                    let row = ws.rows.len();
                    ws.push_dense(
                        (0..n).map(|col| if col == i { 1.0 } else { 0.0 }),
                        c,
                        Kind::Equality,
                        ConstraintRef::Cut(k),
                    );
                    pending.push(row);
                }
            } else {
                let k = cut_balls.len();
                cut_balls.push(b);
                let mut normal = vec![0.0; n];
                let mut rhs = -tightened;
                for ((&i, c), wi) in ball.indices.iter().zip(ball.center.iter()).zip(&w) {
                    normal[i] = -wi / dist;
                    rhs -= wi / dist * c;
                }
                ws.push_dense(
                    normal.into_iter(),
                    rhs,
                    Kind::Inequality,
                    ConstraintRef::Cut(k),
                );
            }
            cut_added = true;
        }
        if !cut_added {
            break;
        }
    }

    let mut lambda_eq = DVector::zeros(n_eq);
    let mut mu_in = DVector::zeros(n_in);
    let mut mu_lb = DVector::zeros(n);
    let mut mu_ub = DVector::zeros(n);
    let mut cut_mult = vec![0.0; cut_balls.len()];
    let mut active_set = Vec::with_capacity(ws.active.len());
    for (&row, &u) in ws.active.iter().zip(&ws.multipliers) {
        let r = &ws.rows[row];
        let u = if r.flipped { -u } else { u };
        active_set.push(r.origin);
        match r.origin {
            ConstraintRef::Eq(i) => lambda_eq[i] = u,
            ConstraintRef::In(i) => mu_in[i] = u,
            ConstraintRef::Lower(i) => mu_lb[i] = u,
            ConstraintRef::Upper(i) => mu_ub[i] = u,
            ConstraintRef::Cut(k) => cut_mult[k] = u,
        }
    }
    active_set.sort();
    let cuts = ws
        .rows
        .iter()
        .filter_map(|r| match (r.origin, r.normal) {
            (ConstraintRef::Cut(k), Normal::Dense(idx)) => Some(Cut {
                ball: cut_balls[k],
                normal: DVector::from_row_slice(ws.dense_row(idx)),
                rhs: r.rhs,
                multiplier: cut_mult[k],
                equality: r.kind == Kind::Equality,
            }),
            _ => None,
        })
        .collect();

    let mut solution = QpSolution {
        z: ws.z,
        lambda_eq,
        mu_in,
        mu_lb,
        mu_ub,
        cuts,
        status,
        iterations: ws.iterations,
        regularization: sigma,
        active_set,
        kkt: Default::default(),
        certificate,
    };
    solution.kkt = check_kkt(problem, &solution);
    if solution.status == QpStatus::Optimal {
        let scale = 1f64
            .max(problem.g.amax())
            .max(problem.b_in.amax())
            .max(problem.b_eq.amax());
        if solution.kkt.max_residual() > settings.kkt_tol * scale
            || solution.kkt.ball_violation > 2.0 * settings.ball_tol
        {
            solution.status = QpStatus::IllConditioned;
        }
    }
    solution
}
