//! Dense convex quadratic programming.
//!
//! ```text
//! minimize    ½ zᵀ H z + gᵀ z
//! subject to  A_eq z  = b_eq
//!             A_in z ≥ b_in
//!             lb ≤ z ≤ ub
//!             ‖z[idx] − c‖ ≤ r        (ball rows)
//! ```
//!
//! [`solve`] runs a dual active-set method (Goldfarb–Idnani) on the
//! Cholesky factor of `H`, adding and dropping one constraint at a time
//! with Givens updates. Ball rows are enforced by supporting-hyperplane
//! cuts appended during the same dual iteration. [`ShootingQp`] holds the
//! stage-structured form produced by multiple-shooting transcriptions and
//! condenses it before solving.

mod active_set;
mod shooting;

pub use active_set::solve;
pub use shooting::{
    Condensed, ShootingQp, ShootingSolution, ShootingStage, SlackWeight, StageRow, TerminalStage,
};

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub struct BallConstraint {
    pub indices: Vec<usize>,
    pub center: DVector<f64>,
    pub radius: f64,
}

impl BallConstraint {
    /// `‖z[idx] − c‖ − r`; positive when violated.
    pub fn violation(&self, z: &DVector<f64>) -> f64 {
        let dist2: f64 = self
            .indices
            .iter()
            .zip(self.center.iter())
            .map(|(&i, c)| (z[i] - c).powi(2))
            .sum();
        dist2.sqrt() - self.radius
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    /// Inequalities in the sense `A_in z ≥ b_in`.
    pub a_in: DMatrix<f64>,
    pub b_in: DVector<f64>,
    pub lb: DVector<f64>,
    pub ub: DVector<f64>,
    pub balls: Vec<BallConstraint>,
}

impl QpProblem {
    /// Unconstrained problem of dimension `n`.
    pub fn new(h: DMatrix<f64>, g: DVector<f64>) -> Self {
        let n = g.len();
        Self {
            h,
            g,
            a_eq: DMatrix::zeros(0, n),
            b_eq: DVector::zeros(0),
            a_in: DMatrix::zeros(0, n),
            b_in: DVector::zeros(0),
            lb: DVector::from_element(n, f64::NEG_INFINITY),
            ub: DVector::from_element(n, f64::INFINITY),
            balls: Vec::new(),
        }
    }

    pub fn with_equalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.a_eq = a;
        self.b_eq = b;
        self
    }

    pub fn with_inequalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.a_in = a;
        self.b_in = b;
        self
    }

    pub fn with_bounds(mut self, lb: DVector<f64>, ub: DVector<f64>) -> Self {
        self.lb = lb;
        self.ub = ub;
        self
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * z.dot(&(&self.h * z)) + self.g.dot(z)
    }

    /// Checks dimensions, symmetry and finiteness.
    pub fn validate(&self) -> Result<(), String> {
        let n = self.dim();
        if self.h.shape() != (n, n) {
            return Err(format!(
                "H has shape {:?}, expected ({n}, {n})",
                self.h.shape()
            ));
        }
        if self.a_eq.ncols() != n || self.a_eq.nrows() != self.b_eq.len() {
            return Err("equality block dimensions disagree".to_owned());
        }
        if self.a_in.ncols() != n || self.a_in.nrows() != self.b_in.len() {
            return Err("inequality block dimensions disagree".to_owned());
        }
        if self.lb.len() != n || self.ub.len() != n {
            return Err("bound vectors have the wrong length".to_owned());
        }
        let scale = self.h.amax().max(1.0);
        let hs = self.h.as_slice();
        let asymmetric =
            (0..n).any(|c| (0..c).any(|r| (hs[c * n + r] - hs[r * n + c]).abs() > 1e-12 * scale));
        if asymmetric {
            return Err("H is not symmetric".to_owned());
        }
        let finite = [
            self.h.as_slice(),
            self.g.as_slice(),
            self.a_eq.as_slice(),
            self.b_eq.as_slice(),
            self.a_in.as_slice(),
            self.b_in.as_slice(),
        ]
        .iter()
        .all(|block| block.iter().all(|v| v.is_finite()));
        if !finite {
            return Err("problem data contains non-finite entries".to_owned());
        }
        for ball in &self.balls {
            if ball.indices.len() != ball.center.len() || ball.indices.iter().any(|&i| i >= n) {
                return Err("ball constraint indices are inconsistent".to_owned());
            }
            if !(ball.radius >= 0.0) {
                return Err("ball radius must be non-negative".to_owned());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIterations,
    IllConditioned,
}

/// Identifies one constraint of a [`QpProblem`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConstraintRef {
    Eq(usize),
    In(usize),
    Lower(usize),
    Upper(usize),
    /// Supporting hyperplane generated for a ball row.
    Cut(usize),
}

/// Linear cut `normalᵀ z ≥ rhs` added for ball row `ball`. Balls too
/// small to approximate are pinned at their centre with equality cuts.
#[derive(Debug, Clone, PartialEq)]
pub struct Cut {
    pub ball: usize,
    pub normal: DVector<f64>,
    pub rhs: f64,
    pub multiplier: f64,
    pub equality: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KktReport {
    /// `‖Hz + g − A_eqᵀλ − A_inᵀμ − (bounds, cuts)‖∞`.
    pub stationarity: f64,
    /// Largest constraint violation.
    pub primal_feasibility: f64,
    /// `max(0, −min μ)` over inequality multipliers.
    pub dual_feasibility: f64,
    /// `max |μᵢ (aᵢᵀz − bᵢ)|`.
    pub complementarity: f64,
    /// Largest ball violation relative to `max(r, 1)`; ball rows are met
    /// to [`QpSettings::ball_tol`] and kept out of `primal_feasibility`.
    pub ball_violation: f64,
    /// Primal minus dual objective.
    pub duality_gap: f64,
}

impl KktReport {
    pub fn max_residual(&self) -> f64 {
        self.stationarity
            .max(self.primal_feasibility)
            .max(self.dual_feasibility)
            .max(self.complementarity)
    }
}

/// Dual ray proving infeasibility: non-negative weights `y` (free for
/// equalities) with `Σ yᵢ aᵢ = 0` and `Σ yᵢ bᵢ = gap > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct FarkasCertificate {
    pub weights: Vec<(ConstraintRef, f64)>,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub z: DVector<f64>,
    pub lambda_eq: DVector<f64>,
    pub mu_in: DVector<f64>,
    pub mu_lb: DVector<f64>,
    pub mu_ub: DVector<f64>,
    pub cuts: Vec<Cut>,
    pub status: QpStatus,
    pub iterations: usize,
    /// Diagonal shift added to `H` before factorization.
    pub regularization: f64,
    pub active_set: Vec<ConstraintRef>,
    pub kkt: KktReport,
    pub certificate: Option<FarkasCertificate>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSettings {
    pub kkt_tol: f64,
    pub feasibility_tol: f64,
    /// Relative accuracy to which ball rows are enforced.
    pub ball_tol: f64,
    pub max_iterations: usize,
    pub max_cuts: usize,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            kkt_tol: 1e-8,
            feasibility_tol: 1e-9,
            ball_tol: 1e-6,
            max_iterations: 200,
            max_cuts: 60,
        }
    }
}

/// Active constraints of a previous solve, tried first on the next one.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WarmStart {
    pub active: Vec<ConstraintRef>,
}

impl From<&QpSolution> for WarmStart {
    fn from(sol: &QpSolution) -> Self {
        Self {
            active: sol
                .active_set
                .iter()
                .copied()
                .filter(|c| !matches!(c, ConstraintRef::Cut(_) | ConstraintRef::Eq(_)))
                .collect(),
        }
    }
}

/// Residuals of the first-order optimality conditions.
pub fn check_kkt(problem: &QpProblem, solution: &QpSolution) -> KktReport {
    let z = &solution.z;
    let n = problem.dim();
    let mut grad = &problem.h * z + &problem.g;
    if problem.a_eq.nrows() > 0 {
        grad -= problem.a_eq.tr_mul(&solution.lambda_eq);
    }
    if problem.a_in.nrows() > 0 {
        grad -= problem.a_in.tr_mul(&solution.mu_in);
    }
    for i in 0..n {
        grad[i] -= solution.mu_lb[i] - solution.mu_ub[i];
    }
    for cut in &solution.cuts {
        grad -= &cut.normal * cut.multiplier;
    }

    let mut primal: f64 = 0.0;
    let mut comp: f64 = 0.0;
    let mut min_mu: f64 = 0.0;
    let mut dual_value = 0.0;
    if problem.a_eq.nrows() > 0 {
        let r = &problem.a_eq * z - &problem.b_eq;
        primal = primal.max(r.amax());
        dual_value += problem.b_eq.dot(&solution.lambda_eq);
    }
    if problem.a_in.nrows() > 0 {
        let s = &problem.a_in * z - &problem.b_in;
        for (si, mi) in s.iter().zip(solution.mu_in.iter()) {
            primal = primal.max(-si);
            comp = comp.max((mi * si).abs());
            min_mu = min_mu.min(*mi);
        }
        dual_value += problem.b_in.dot(&solution.mu_in);
    }
    for i in 0..n {
        if problem.lb[i].is_finite() {
            let s = z[i] - problem.lb[i];
            primal = primal.max(-s);
            comp = comp.max((solution.mu_lb[i] * s).abs());
            dual_value += solution.mu_lb[i] * problem.lb[i];
        }
        if problem.ub[i].is_finite() {
            let s = problem.ub[i] - z[i];
            primal = primal.max(-s);
            comp = comp.max((solution.mu_ub[i] * s).abs());
            dual_value -= solution.mu_ub[i] * problem.ub[i];
        }
        min_mu = min_mu.min(solution.mu_lb[i]).min(solution.mu_ub[i]);
    }
    for cut in &solution.cuts {
        let s = cut.normal.dot(z) - cut.rhs;
        if cut.equality {
            primal = primal.max(s.abs());
        } else {
            primal = primal.max(-s);
            comp = comp.max((cut.multiplier * s).abs());
            min_mu = min_mu.min(cut.multiplier);
        }
        dual_value += cut.multiplier * cut.rhs;
    }
    let ball_violation = problem
        .balls
        .iter()
        .map(|b| b.violation(z).max(0.0) / b.radius.max(1.0))
        .fold(0.0, f64::max);
    let quad = z.dot(&(&problem.h * z));
    let primal_obj = 0.5 * quad + problem.g.dot(z);
    let dual_obj = -0.5 * quad + dual_value;
    KktReport {
        stationarity: grad.amax(),
        primal_feasibility: primal.max(0.0),
        dual_feasibility: (-min_mu).max(0.0),
        complementarity: comp,
        ball_violation,
        duality_gap: primal_obj - dual_obj,
    }
}
