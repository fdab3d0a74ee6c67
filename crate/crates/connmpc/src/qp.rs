//! Dense convex QP solver based on operator splitting (ADMM).
//!
//! Solves `min 0.5 z' P z + q' z` subject to `l <= A z <= u`, the exact
//! shape the planner assembles: a positive-semidefinite cost over spline
//! control points and slacks, with two-sided affine rows (equalities are
//! rows with `l = u`). The scheme follows the well-known OSQP splitting:
//!
//! ```text
//! x~  = (P + sigma I + A' diag(rho) A)^-1 (sigma x - q + A'(rho z - y))
//! x+  = alpha x~ + (1 - alpha) x
//! z+  = clamp(alpha A x~ + (1 - alpha) z + y / rho, l, u)
//! y+  = y + rho (alpha A x~ + (1 - alpha) z - z+)
//! ```
//!
//! with over-relaxation `alpha`, per-row penalties (`rho` boosted on
//! equality rows), periodic residual checks, penalty adaptation with
//! refactorization, warm starting, and a primal-infeasibility certificate
//! built from the dual increment. Problems here are small (tens of
//! variables, a few hundred rows), so a dense Cholesky of the condensed
//! system is the fastest and simplest route.
//!
//! Problems are Ruiz-equilibrated before the splitting runs: diagonal
//! scalings `D`, `E` and a cost scalar `c` bring the columns of `[P; A]`
//! and the rows of `A` to unit infinity-norm. The planner mixes slack
//! penalties around 1e4, effort weights around 1e-3, and constraint rows
//! whose coefficients span three orders of magnitude; unscaled ADMM
//! crawls on that mix. All termination tests below are evaluated on
//! unscaled residuals, so the contract (absolute feasibility to
//! `eps_abs`) is unchanged by the scaling.

use crate::linalg::{Cholesky, Lu, Mat};
use crate::{Error, Result};

/// Outcome of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    /// Residuals met tolerance; `z` and `y` satisfy the KKT system.
    Solved,
    /// Iteration budget exhausted; best iterate returned.
    MaxIterations,
    /// A certificate of primal infeasibility was found; no feasible point
    /// exists (up to the certificate tolerance).
    PrimalInfeasible,
}

/// Problem data: `min 0.5 z' P z + q' z` s.t. `l <= A z <= u`.
///
/// `P` must be symmetric positive semidefinite. Infinite bounds are
/// allowed; an equality row is `l[i] == u[i]`.
#[derive(Debug, Clone)]
pub struct QpProblem {
    pub p: Mat,
    pub q: Vec<f64>,
    pub a: Mat,
    pub l: Vec<f64>,
    pub u: Vec<f64>,
}

impl QpProblem {
    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn m(&self) -> usize {
        self.l.len()
    }

    /// Cheap structural checks: dimensions, symmetry, ordered finite-or-
    /// infinite bounds, no NaNs. (Positive semidefiniteness is a contract
    /// the caller upholds; the test suite verifies it spectrally for every
    /// problem the planner emits.)
    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        let m = self.m();
        if self.p.rows != n || self.p.cols != n {
            return Err(Error::Domain(format!(
                "P is {}x{} but q has length {n}",
                self.p.rows, self.p.cols
            )));
        }
        if self.a.rows != m || self.a.cols != n {
            return Err(Error::Domain(format!(
                "A is {}x{} but expected {m}x{n}",
                self.a.rows, self.a.cols
            )));
        }
        if self.u.len() != m {
            return Err(Error::Domain("l and u must have equal length".into()));
        }
        if n == 0 {
            return Err(Error::Domain("QP needs at least one variable".into()));
        }
        let scale = self.p.max_abs().max(1.0);
        if self.p.max_asymmetry() > 1e-9 * scale {
            return Err(Error::Domain(format!(
                "P is not symmetric (max |p_ij - p_ji| = {})",
                self.p.max_asymmetry()
            )));
        }
        for v in self.p.data.iter().chain(self.a.data.iter()).chain(self.q.iter()) {
            if v.is_nan() {
                return Err(Error::Domain("QP data contains NaN".into()));
            }
        }
        for i in 0..m {
            if self.l[i].is_nan() || self.u[i].is_nan() {
                return Err(Error::Domain(format!("bounds on row {i} contain NaN")));
            }
            if self.l[i] > self.u[i] {
                return Err(Error::Domain(format!(
                    "row {i} has l = {} > u = {}",
                    self.l[i], self.u[i]
                )));
            }
        }
        Ok(())
    }

    /// Objective value at a point.
    pub fn objective(&self, z: &[f64]) -> f64 {
        let mut pz = vec![0.0; self.n()];
        self.p.mul_vec(z, &mut pz);
        let quad: f64 = z.iter().zip(pz.iter()).map(|(a, b)| a * b).sum();
        let lin: f64 = z.iter().zip(self.q.iter()).map(|(a, b)| a * b).sum();
        0.5 * quad + lin
    }
}

/// Solver tuning knobs; the defaults suit every problem this crate builds.
#[derive(Debug, Clone)]
pub struct QpSettings {
    /// Initial penalty on inequality rows.
    pub rho: f64,
    /// Penalty multiplier for equality rows (`l == u`).
    pub rho_eq_scale: f64,
    /// Tikhonov term keeping the condensed system positive definite.
    pub sigma: f64,
    /// Over-relaxation in (0, 2).
    pub alpha: f64,
    /// Absolute residual tolerance.
    pub eps_abs: f64,
    /// Infeasibility certificate tolerance.
    pub eps_pinf: f64,
    pub max_iter: usize,
    /// Residual / adaptation cadence in iterations.
    pub check_every: usize,
    /// Ruiz equilibration sweeps (0 disables scaling).
    pub scaling_iters: usize,
}

impl Default for QpSettings {
    fn default() -> Self {
        QpSettings {
            rho: 0.1,
            rho_eq_scale: 1e3,
            sigma: 1e-6,
            alpha: 1.6,
            eps_abs: 1e-6,
            eps_pinf: 1e-6,
            max_iter: 4000,
            check_every: 10,
            scaling_iters: 10,
        }
    }
}

/// Result of a solve: primal/dual iterates plus convergence diagnostics.
#[derive(Debug, Clone)]
pub struct QpSolution {
    pub z: Vec<f64>,
    pub y: Vec<f64>,
    pub status: SolveStatus,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub objective: f64,
}

/// Worst-case KKT violations of a candidate primal/dual pair.
#[derive(Debug, Clone, Copy)]
pub struct KktReport {
    /// `|| P z + q + A' y ||_inf`.
    pub stationarity: f64,
    /// Worst bound violation of `A z`.
    pub primal_feasibility: f64,
    /// Worst complementary-slackness product: positive duals pair with the
    /// upper bound, negative with the lower.
    pub complementarity: f64,
}

impl KktReport {
    pub fn max_residual(&self) -> f64 {
        self.stationarity.max(self.primal_feasibility).max(self.complementarity)
    }
}

/// Evaluate KKT residuals for any primal/dual pair against a problem.
/// Used by tests and the self-check suite; independent of the solve loop.
pub fn validate_kkt(prob: &QpProblem, z: &[f64], y: &[f64]) -> KktReport {
    let n = prob.n();
    let m = prob.m();
    let mut pz = vec![0.0; n];
    prob.p.mul_vec(z, &mut pz);
    let mut aty = vec![0.0; n];
    prob.a.mul_transpose_vec(y, &mut aty);
    let mut stationarity: f64 = 0.0;
    for i in 0..n {
        stationarity = stationarity.max((pz[i] + prob.q[i] + aty[i]).abs());
    }
    let mut az = vec![0.0; m];
    prob.a.mul_vec(z, &mut az);
    let mut primal: f64 = 0.0;
    let mut comp: f64 = 0.0;
    for i in 0..m {
        primal = primal.max(az[i] - prob.u[i]).max(prob.l[i] - az[i]);
        if y[i] > 0.0 && prob.u[i].is_finite() {
            comp = comp.max(y[i] * (prob.u[i] - az[i]).abs());
        } else if y[i] < 0.0 && prob.l[i].is_finite() {
            comp = comp.max(-y[i] * (az[i] - prob.l[i]).abs());
        }
    }
    KktReport { stationarity, primal_feasibility: primal, complementarity: comp }
}

/// Active-set polish: take the rows a roughly converged iterate deems
/// active, solve the corresponding equality-constrained KKT saddle system
/// directly, and accept the result only if it verifies the full KKT
/// conditions on the original data. Turns an `O(1e-3)`-accurate ADMM pair
/// into a machine-precision one in a single linear solve, which lets the
/// outer loop stop long before the splitting itself would reach the
/// absolute feasibility contract.
fn try_polish(prob: &QpProblem, z: &[f64], y: &[f64], eps: f64) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = prob.n();
    let m = prob.m();
    let mut az = vec![0.0; m];
    prob.a.mul_vec(z, &mut az);
    let y_inf = y.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    // A row is considered active when the iterate sits near its bound or
    // carries meaningful dual mass. `lower[i]` records which bound binds.
    let act_tol = |b: f64| 1e-3 * (1.0 + b.abs());
    let dual_tol = 1e-4 * (1.0 + y_inf);
    let mut active: Vec<usize> = Vec::new();
    let mut lower: Vec<bool> = Vec::new();
    let mut is_eq_row: Vec<bool> = Vec::new();
    for i in 0..m {
        if prob.l[i] == prob.u[i] {
            active.push(i);
            lower.push(true);
            is_eq_row.push(true);
        } else if prob.l[i].is_finite()
            && (az[i] - prob.l[i] < act_tol(prob.l[i]) || y[i] < -dual_tol)
        {
            active.push(i);
            lower.push(true);
            is_eq_row.push(false);
        } else if prob.u[i].is_finite()
            && (prob.u[i] - az[i] < act_tol(prob.u[i]) || y[i] > dual_tol)
        {
            active.push(i);
            lower.push(false);
            is_eq_row.push(false);
        }
    }
    let k = active.len();
    // Regularized saddle system; delta keeps it invertible even when the
    // active rows are linearly dependent (as in OSQP's polish step).
    let delta = 1e-7;
    let dim = n + k;
    let mut kkt = Mat::zeros(dim, dim);
    for i in 0..n {
        for j in 0..n {
            kkt.set(i, j, prob.p.get(i, j));
        }
        kkt.add_to(i, i, delta);
    }
    for (r, &row) in active.iter().enumerate() {
        for j in 0..n {
            let v = prob.a.get(row, j);
            kkt.set(n + r, j, v);
            kkt.set(j, n + r, v);
        }
        kkt.set(n + r, n + r, -delta);
    }
    let lu = Lu::factor(&kkt)?;
    let mut sol = vec![0.0; dim];
    for i in 0..n {
        sol[i] = -prob.q[i];
    }
    for (r, &row) in active.iter().enumerate() {
        sol[n + r] = if lower[r] { prob.l[row] } else { prob.u[row] };
    }
    lu.solve_in_place(&mut sol);
    // One round of iterative refinement against the unregularized system.
    let mut resid = vec![0.0; dim];
    for i in 0..n {
        let mut v = prob.q[i];
        for j in 0..n {
            v += prob.p.get(i, j) * sol[j];
        }
        for (r, &row) in active.iter().enumerate() {
            v += prob.a.get(row, i) * sol[n + r];
        }
        resid[i] = -v;
    }
    for (r, &row) in active.iter().enumerate() {
        let mut v = -(if lower[r] { prob.l[row] } else { prob.u[row] });
        for j in 0..n {
            v += prob.a.get(row, j) * sol[j];
        }
        resid[n + r] = -v;
    }
    lu.solve_in_place(&mut resid);
    for i in 0..dim {
        sol[i] += resid[i];
    }
    let z_pol = sol[..n].to_vec();
    let mut y_pol = vec![0.0; m];
    for (r, &row) in active.iter().enumerate() {
        y_pol[row] = sol[n + r];
    }
    // Dual sign conditions on inequality rows (equalities are free).
    let y_pol_inf = y_pol.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let sign_tol = eps * (1.0 + y_pol_inf);
    for (r, &row) in active.iter().enumerate() {
        if is_eq_row[r] {
            continue;
        }
        let bad = if lower[r] { y_pol[row] > sign_tol } else { y_pol[row] < -sign_tol };
        if bad {
            return None;
        }
    }
    let report = validate_kkt(prob, &z_pol, &y_pol);
    let mut pz = vec![0.0; n];
    prob.p.mul_vec(&z_pol, &mut pz);
    let mut aty = vec![0.0; n];
    prob.a.mul_transpose_vec(&y_pol, &mut aty);
    let stat_scale = pz
        .iter()
        .chain(prob.q.iter())
        .chain(aty.iter())
        .fold(1.0f64, |acc, v| acc.max(v.abs()));
    if report.primal_feasibility <= eps
        && report.stationarity <= eps * stat_scale
        && report.complementarity <= eps * (1.0 + y_pol_inf)
    {
        Some((z_pol, y_pol))
    } else {
        None
    }
}

/// Reusable ADMM solver. Keeping one instance alive across solves reuses
/// the workspace allocations, which matters when the planner calls it
/// hundreds of thousands of times per run.
#[derive(Debug, Default)]
pub struct QpSolver {
    pub settings: QpSettings,
    work: Workspace,
}

#[derive(Debug, Default)]
struct Workspace {
    x: Vec<f64>,
    zc: Vec<f64>,
    y: Vec<f64>,
    y_prev: Vec<f64>,
    rhs: Vec<f64>,
    ztilde: Vec<f64>,
    ax: Vec<f64>,
    px: Vec<f64>,
    aty: Vec<f64>,
    rho: Vec<f64>,
    scaled: Vec<f64>,
    kkt: Mat,
    // Ruiz equilibration state: scaled copies of the problem plus the
    // diagonal scalings (x = d .* x_hat, y = e .* y_hat / cost_scale).
    p_s: Mat,
    a_s: Mat,
    q_s: Vec<f64>,
    l_s: Vec<f64>,
    u_s: Vec<f64>,
    d: Vec<f64>,
    e: Vec<f64>,
}

/// One modified-Ruiz sweep over the scaled copies; returns the cost
/// scaling applied this sweep. All deltas are computed from the matrices
/// as they stood at sweep entry, then applied together. All-zero columns
/// or rows (e.g. the planner's deliberate "infeasible marker" rows) keep
/// delta 1 so repeated sweeps cannot blow their scaling up.
fn ruiz_equilibrate(w: &mut Workspace, n: usize, m: usize) -> f64 {
    let mut dd = vec![1.0; n];
    for (j, slot) in dd.iter_mut().enumerate() {
        let mut norm: f64 = 0.0;
        for i in 0..n {
            norm = norm.max(w.p_s.get(i, j).abs());
        }
        for i in 0..m {
            norm = norm.max(w.a_s.get(i, j).abs());
        }
        if norm > 1e-12 {
            *slot = 1.0 / norm.clamp(1e-8, 1e8).sqrt();
        }
    }
    let mut de = vec![1.0; m];
    for (i, slot) in de.iter_mut().enumerate() {
        let mut norm: f64 = 0.0;
        for j in 0..n {
            norm = norm.max(w.a_s.get(i, j).abs());
        }
        if norm > 1e-12 {
            *slot = 1.0 / norm.clamp(1e-8, 1e8).sqrt();
        }
    }
    for i in 0..n {
        for j in 0..n {
            let v = w.p_s.get(i, j) * dd[i] * dd[j];
            w.p_s.set(i, j, v);
        }
    }
    for i in 0..m {
        for j in 0..n {
            let v = w.a_s.get(i, j) * de[i] * dd[j];
            w.a_s.set(i, j, v);
        }
    }
    for j in 0..n {
        w.q_s[j] *= dd[j];
        w.d[j] *= dd[j];
    }
    for i in 0..m {
        w.e[i] *= de[i];
    }
    // Cost normalization toward unit-scale curvature.
    let mut mean_col: f64 = 0.0;
    for j in 0..n {
        let mut norm: f64 = 0.0;
        for i in 0..n {
            norm = norm.max(w.p_s.get(i, j).abs());
        }
        mean_col += norm;
    }
    mean_col /= n as f64;
    let norm_q = w.q_s.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let denom = mean_col.max(norm_q);
    if denom <= 1e-12 {
        return 1.0;
    }
    let gamma = 1.0 / denom.clamp(1e-8, 1e8);
    for v in w.p_s.data.iter_mut() {
        *v *= gamma;
    }
    for v in w.q_s.iter_mut() {
        *v *= gamma;
    }
    gamma
}

impl QpSolver {
    pub fn new(settings: QpSettings) -> Self {
        QpSolver { settings, work: Workspace::default() }
    }

    /// Solve a QP, optionally warm-starting from a previous primal/dual
    /// pair of matching dimensions (mismatched lengths are ignored).
    pub fn solve(&mut self, prob: &QpProblem, warm: Option<(&[f64], &[f64])>) -> Result<QpSolution> {
        prob.validate()?;
        let n = prob.n();
        let m = prob.m();
        let set = self.settings.clone();
        let w = &mut self.work;

        // Equilibrate into the workspace copies.
        w.p_s = prob.p.clone();
        w.a_s = prob.a.clone();
        w.q_s.clear();
        w.q_s.extend_from_slice(&prob.q);
        w.d.clear();
        w.d.resize(n, 1.0);
        w.e.clear();
        w.e.resize(m, 1.0);
        let mut cost_scale = 1.0;
        for _ in 0..set.scaling_iters {
            cost_scale *= ruiz_equilibrate(w, n, m);
        }
        w.l_s.clear();
        w.u_s.clear();
        for i in 0..m {
            w.l_s.push(prob.l[i] * w.e[i]);
            w.u_s.push(prob.u[i] * w.e[i]);
        }

        w.x.clear();
        w.y.clear();
        w.zc.resize(m, 0.0);
        match warm {
            Some((wz, wy)) if wz.len() == n && wy.len() == m => {
                for j in 0..n {
                    w.x.push(wz[j] / w.d[j]);
                }
                for i in 0..m {
                    w.y.push(cost_scale * wy[i] / w.e[i]);
                }
            }
            _ => {
                w.x.resize(n, 0.0);
                w.y.resize(m, 0.0);
            }
        }
        w.a_s.mul_vec(&w.x, &mut w.zc);
        for i in 0..m {
            w.zc[i] = w.zc[i].clamp(w.l_s[i], w.u_s[i]);
        }
        w.y_prev.clear();
        w.y_prev.extend_from_slice(&w.y);
        w.rhs.resize(n, 0.0);
        w.ztilde.resize(m, 0.0);
        w.ax.resize(m, 0.0);
        w.px.resize(n, 0.0);
        w.aty.resize(n, 0.0);
        w.scaled.resize(m, 0.0);

        let mut rho_base = set.rho;
        let rho_eq_scale = set.rho_eq_scale.max(1.0);
        let is_eq: Vec<bool> = (0..m).map(|i| prob.l[i] == prob.u[i]).collect();
        let set_rho = |rho_vec: &mut Vec<f64>, base: f64| {
            rho_vec.resize(m, 0.0);
            for i in 0..m {
                rho_vec[i] = if is_eq[i] { base * rho_eq_scale } else { base };
            }
        };
        set_rho(&mut w.rho, rho_base);

        fn factorize(p_s: &Mat, a_s: &Mat, sigma: f64, rho_vec: &[f64], kkt: &mut Mat) -> Cholesky {
            *kkt = p_s.clone();
            for i in 0..kkt.rows {
                kkt.add_to(i, i, sigma);
            }
            a_s.accumulate_weighted_gram(rho_vec, kkt);
            Cholesky::factor(kkt).expect("P + sigma I + A' rho A is positive definite")
        }
        let mut chol = factorize(&w.p_s, &w.a_s, set.sigma, &w.rho, &mut w.kkt);

        let mut status = SolveStatus::MaxIterations;
        let mut iterations = set.max_iter;
        let mut primal_residual = f64::INFINITY;
        let mut dual_residual = f64::INFINITY;
        let mut polished: Option<(Vec<f64>, Vec<f64>)> = None;
        let mut last_polish: usize = 0;

        for iter in 1..=set.max_iter {
            // x-update: solve the condensed system.
            for i in 0..m {
                w.scaled[i] = w.rho[i] * w.zc[i] - w.y[i];
            }
            w.a_s.mul_transpose_vec(&w.scaled, &mut w.rhs);
            for i in 0..n {
                w.rhs[i] += set.sigma * w.x[i] - w.q_s[i];
            }
            chol.solve_in_place(&mut w.rhs); // rhs now holds x~
            w.a_s.mul_vec(&w.rhs, &mut w.ztilde);
            // Relaxed updates.
            for i in 0..n {
                w.x[i] = set.alpha * w.rhs[i] + (1.0 - set.alpha) * w.x[i];
            }
            for i in 0..m {
                let z_relaxed = set.alpha * w.ztilde[i] + (1.0 - set.alpha) * w.zc[i];
                let z_new = (z_relaxed + w.y[i] / w.rho[i]).clamp(w.l_s[i], w.u_s[i]);
                w.y[i] += w.rho[i] * (z_relaxed - z_new);
                w.zc[i] = z_new;
            }

            if iter % set.check_every != 0 && iter != set.max_iter {
                continue;
            }

            // All residuals and norms below are unscaled, so the
            // termination contract is independent of the equilibration.
            w.a_s.mul_vec(&w.x, &mut w.ax);
            w.p_s.mul_vec(&w.x, &mut w.px);
            w.a_s.mul_transpose_vec(&w.y, &mut w.aty);
            let mut r_prim: f64 = 0.0;
            let mut r_eq: f64 = 0.0;
            let mut violation: f64 = 0.0;
            let mut norm_ax: f64 = 0.0;
            let mut norm_z: f64 = 0.0;
            for i in 0..m {
                let r = (w.ax[i] - w.zc[i]).abs() / w.e[i];
                r_prim = r_prim.max(r);
                if is_eq[i] {
                    r_eq = r_eq.max(r);
                }
                violation = violation
                    .max((w.l_s[i] - w.ax[i]) / w.e[i])
                    .max((w.ax[i] - w.u_s[i]) / w.e[i]);
                norm_ax = norm_ax.max((w.ax[i] / w.e[i]).abs());
                norm_z = norm_z.max((w.zc[i] / w.e[i]).abs());
            }
            let mut r_dual: f64 = 0.0;
            let mut norm_px: f64 = 0.0;
            let mut norm_aty: f64 = 0.0;
            let mut norm_q: f64 = 0.0;
            for i in 0..n {
                let unscale = 1.0 / (cost_scale * w.d[i]);
                r_dual = r_dual.max(((w.px[i] + w.q_s[i] + w.aty[i]) * unscale).abs());
                norm_px = norm_px.max((w.px[i] * unscale).abs());
                norm_aty = norm_aty.max((w.aty[i] * unscale).abs());
                norm_q = norm_q.max(prob.q[i].abs());
            }
            primal_residual = r_prim;
            dual_residual = r_dual;
            let eps_prim = set.eps_abs * (1.0 + norm_ax.max(norm_z));
            let eps_dual = set.eps_abs * (1.0 + norm_px.max(norm_aty).max(norm_q));
            // Scaled residuals drive the splitting, but downstream contracts
            // (boundary conditions, hard safety rows, actuation bounds) need
            // absolute feasibility: equality rows must match to eps_abs and
            // no finite bound may be violated by more than eps_abs.
            if r_prim <= eps_prim
                && r_eq <= set.eps_abs
                && violation <= set.eps_abs
                && r_dual <= eps_dual
            {
                status = SolveStatus::Solved;
                iterations = iter;
                break;
            }

            // Polish: once the splitting is roughly converged the active set
            // is usually already correct, even though reaching the absolute
            // feasibility contract by iteration alone can take thousands more
            // sweeps. Solve that active set directly and accept only if the
            // result verifies against the original data. Throttled so a
            // rejected attempt is not retried on the very next check.
            let loose = r_prim <= 1e-3 * (1.0 + norm_ax.max(norm_z))
                && r_dual <= 1e-3 * (1.0 + norm_px.max(norm_aty).max(norm_q));
            if (loose && iter >= last_polish + 50) || iter == set.max_iter {
                last_polish = iter;
                let z_un: Vec<f64> = (0..n).map(|j| w.x[j] * w.d[j]).collect();
                let y_un: Vec<f64> = (0..m).map(|i| w.y[i] * w.e[i] / cost_scale).collect();
                if let Some((zp, yp)) = try_polish(prob, &z_un, &y_un, set.eps_abs) {
                    let report = validate_kkt(prob, &zp, &yp);
                    primal_residual = report.primal_feasibility;
                    dual_residual = report.stationarity;
                    polished = Some((zp, yp));
                    status = SolveStatus::Solved;
                    iterations = iter;
                    break;
                }
            }

            // Primal infeasibility: the unscaled dual increment since the
            // previous check acts as the certificate candidate.
            let mut dy_norm: f64 = 0.0;
            for i in 0..m {
                dy_norm = dy_norm.max(((w.y[i] - w.y_prev[i]) * w.e[i]).abs());
            }
            if dy_norm > set.eps_pinf {
                let mut support = 0.0;
                let mut cert_ok = true;
                for i in 0..m {
                    let dy = (w.y[i] - w.y_prev[i]) * w.e[i] / dy_norm;
                    if dy > set.eps_pinf {
                        if prob.u[i].is_finite() {
                            support += prob.u[i] * dy;
                        } else {
                            cert_ok = false;
                            break;
                        }
                    } else if dy < -set.eps_pinf {
                        if prob.l[i].is_finite() {
                            support += prob.l[i] * dy;
                        } else {
                            cert_ok = false;
                            break;
                        }
                    }
                }
                if cert_ok {
                    for i in 0..m {
                        w.scaled[i] = (w.y[i] - w.y_prev[i]) * w.e[i] / dy_norm;
                    }
                    prob.a.mul_transpose_vec(&w.scaled, &mut w.aty);
                    let at_dy = w.aty.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
                    if at_dy <= set.eps_pinf && support <= -set.eps_pinf {
                        status = SolveStatus::PrimalInfeasible;
                        iterations = iter;
                        break;
                    }
                }
            }
            w.y_prev.copy_from_slice(&w.y);

            // Penalty adaptation: rebalance when residuals diverge by more
            // than an order of magnitude, then refactor.
            if iter < set.max_iter {
                let prim_rel = r_prim / norm_ax.max(norm_z).max(1e-10);
                let dual_rel = r_dual / norm_px.max(norm_aty).max(norm_q).max(1e-10);
                let ratio = (prim_rel / dual_rel.max(1e-16)).sqrt();
                if ratio > 5.0 || ratio < 0.2 {
                    rho_base = (rho_base * ratio).clamp(1e-6, 1e6);
                    set_rho(&mut w.rho, rho_base);
                    chol = factorize(&w.p_s, &w.a_s, set.sigma, &w.rho, &mut w.kkt);
                }
            }
        }

        // Unscale the returned iterates (the polished pair is already in
        // original coordinates).
        let (z, y) = match polished {
            Some(pair) => pair,
            None => (
                (0..n).map(|j| w.x[j] * w.d[j]).collect(),
                (0..m).map(|i| w.y[i] * w.e[i] / cost_scale).collect(),
            ),
        };
        let objective = prob.objective(&z);
        Ok(QpSolution {
            z,
            y,
            status,
            iterations,
            primal_residual,
            dual_residual,
            objective,
        })
    }
}
