//! Affine constraint rows over the planner's decision vector.
//!
//! Every row here encodes a second-order condition on some scalar state
//! function along double-integrator dynamics. For a barrier `h` that must
//! stay nonnegative, the high-order CBF recursion with linear class-K
//! functions reduces to
//!
//! ```text
//! psi_2 = hddot + (k1 + k2) hdot + k1 k2 h >= 0
//! ```
//!
//! and for a Lyapunov function `V` that must decay, the mirrored condition
//! `Vddot + (k1 + k2) Vdot + k1 k2 V <= slack`. Accelerations are affine
//! in the spline control points (through the sample map), positions and
//! velocities are frozen at the current SQP iterate, so each condition is
//! one affine row per sample time.
//!
//! Builders are pure functions over immutable snapshots; per-robot
//! concurrent use is safe.

use crate::connectivity::ConnectivityGraph;
use crate::linalg::{SparseRow, Vec2};
use crate::{Error, Result};

/// Barrier / Lyapunov gains per constraint family. With linear class-K
/// functions the pair (k1, k2) sets the second-order response of each
/// constraint; 2.0 across the board gives a critically-damped-like reaction
/// at the timescales of the bundled scenarios.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainSet {
    pub k1_safe: f64,
    pub k2_safe: f64,
    pub k1_conn: f64,
    pub k2_conn: f64,
    pub k1_clf: f64,
    pub k2_clf: f64,
}

impl Default for GainSet {
    fn default() -> Self {
        GainSet {
            k1_safe: 2.0,
            k2_safe: 2.0,
            k1_conn: 2.0,
            k2_conn: 2.0,
            k1_clf: 2.0,
            k2_clf: 2.0,
        }
    }
}

impl GainSet {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("k1_safe", self.k1_safe),
            ("k2_safe", self.k2_safe),
            ("k1_conn", self.k1_conn),
            ("k2_conn", self.k2_conn),
            ("k1_clf", self.k1_clf),
            ("k2_clf", self.k2_clf),
        ];
        for (name, v) in all {
            if !(v > 0.0) {
                return Err(Error::Domain(format!("gain {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Constraint direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Ge,
    Le,
    Eq,
}

/// What a row encodes; used for diagnostics and selective checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Safety,
    Connectivity,
    Recovery,
    VelocityBound,
    AccelBound,
    Boundary,
    Continuity,
    SlackNonneg,
}

/// One affine constraint over the decision vector. The optional slack
/// column participates with coefficient +1 on `>=` rows (relaxing the
/// requirement downward) and -1 on `<=` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineConstraint {
    pub coeffs: SparseRow,
    pub slack_col: Option<usize>,
    pub rhs: f64,
    pub sense: Sense,
    pub kind: RowKind,
}

impl AffineConstraint {
    /// Slack coefficient implied by the sense; zero when unslacked.
    pub fn slack_coeff(&self) -> f64 {
        match (self.slack_col, self.sense) {
            (None, _) => 0.0,
            (Some(_), Sense::Ge) => 1.0,
            (Some(_), Sense::Le) => -1.0,
            (Some(_), Sense::Eq) => 0.0,
        }
    }

    /// Lower/upper bounds for the QP row form `l <= a z <= u`.
    pub fn qp_bounds(&self) -> (f64, f64) {
        match self.sense {
            Sense::Ge => (self.rhs, f64::INFINITY),
            Sense::Le => (f64::NEG_INFINITY, self.rhs),
            Sense::Eq => (self.rhs, self.rhs),
        }
    }

    /// Left-hand side at a full decision vector (slack included).
    pub fn eval_lhs(&self, z: &[f64]) -> f64 {
        let mut v = self.coeffs.dot(z);
        if let Some(col) = self.slack_col {
            v += self.slack_coeff() * z[col];
        }
        v
    }

    /// Signed satisfaction margin at `z` (nonnegative = satisfied).
    pub fn margin(&self, z: &[f64]) -> f64 {
        let lhs = self.eval_lhs(z);
        match self.sense {
            Sense::Ge => lhs - self.rhs,
            Sense::Le => self.rhs - lhs,
            Sense::Eq => -(lhs - self.rhs).abs(),
        }
    }
}

/// Predicted motion of the planning robot at the K shared sample times:
/// positions and velocities are constants from the current SQP iterate,
/// accelerations are affine rows over the decision vector (one per axis).
#[derive(Debug, Clone, Copy)]
pub struct SelfSamples<'a> {
    pub pos: &'a [Vec2],
    pub vel: &'a [Vec2],
    pub acc_x: &'a [SparseRow],
    pub acc_y: &'a [SparseRow],
    /// Affine position rows per axis; empty slices disable the keep-out
    /// half-spaces (only the barrier rows are emitted then).
    pub pos_x: &'a [SparseRow],
    pub pos_y: &'a [SparseRow],
}

impl SelfSamples<'_> {
    fn check_lengths(&self) -> Result<usize> {
        let k = self.pos.len();
        if self.vel.len() != k || self.acc_x.len() != k || self.acc_y.len() != k {
            return Err(Error::Domain(format!(
                "self samples disagree on count: pos {}, vel {}, acc {}x{}",
                k,
                self.vel.len(),
                self.acc_x.len(),
                self.acc_y.len()
            )));
        }
        if self.pos_x.len() != self.pos_y.len()
            || (!self.pos_x.is_empty() && self.pos_x.len() != k)
        {
            return Err(Error::Domain(format!(
                "position rows disagree on count: {}x{}, expected {k} or none",
                self.pos_x.len(),
                self.pos_y.len()
            )));
        }
        Ok(k)
    }

    /// Affine row for the acceleration component `pi_rel . u_k`.
    fn acc_projection(&self, k: usize, direction: Vec2) -> SparseRow {
        self.acc_x[k].scaled(direction.x).axpy(direction.y, &self.acc_y[k])
    }

    /// Affine row for the position component `pi_rel . p_k`.
    fn pos_projection(&self, k: usize, direction: Vec2) -> SparseRow {
        self.pos_x[k].scaled(direction.x).axpy(direction.y, &self.pos_y[k])
    }
}

/// A neighbor's broadcast prediction, resampled to the shared grid.
#[derive(Debug, Clone)]
pub struct NeighborPlan {
    pub id: usize,
    pub pos: Vec<Vec2>,
    pub vel: Vec<Vec2>,
    pub acc: Vec<Vec2>,
}

/// A static point hazard with its own clearance requirement.
#[derive(Debug, Clone, Copy)]
pub struct PointHazard {
    pub center: Vec2,
    pub d_min: f64,
}

/// Expand the second-order barrier recursion into a single affine row:
/// `ctrl . u + [drift + (k1 + k2) hdot + k1 k2 h] >= 0`.
pub fn hocbf_row_secondorder(
    h: f64,
    hdot: f64,
    hddot_drift: f64,
    hddot_ctrl: SparseRow,
    k1: f64,
    k2: f64,
    kind: RowKind,
    slack_col: Option<usize>,
) -> AffineConstraint {
    let b = hddot_drift + (k1 + k2) * hdot + k1 * k2 * h;
    AffineConstraint {
        coeffs: hddot_ctrl,
        slack_col,
        rhs: -b,
        sense: Sense::Ge,
        kind,
    }
}

/// Hard separation rows for every (sample, hazard) pair, with
/// `h = ||p - o||^2 - d_min^2`. Neighbors contribute their planned motion;
/// obstacles are static. Each pair yields a barrier row on the acceleration
/// and, when position rows are supplied, a keep-out half-space on the
/// position: `h` is convex in `p`, so its linearization at the iterate is a
/// global under-estimate and `2(p_hat - o) . p >= 2(p_hat - o) . p_hat -
/// h_pad(p_hat)` is a conservative hard bound. The keep-out clearance is
/// padded by `keepout_pad` to cover excursions between samples; sample 0 is
/// skipped (its position is pinned by the initial conditions, and a row
/// there would wedge the program whenever the measured state grazes the
/// pad). Returns the rows plus human-readable issues for degenerate
/// geometry (a hazard coincident with the predicted position yields a
/// structurally infeasible row so the planner falls back safely).
pub fn safety_rows(
    self_s: &SelfSamples,
    neighbors: &[NeighborPlan],
    obstacles: &[PointHazard],
    d_min: f64,
    gains: &GainSet,
    keepout_pad: f64,
) -> Result<(Vec<AffineConstraint>, Vec<String>)> {
    if !(d_min > 0.0) {
        return Err(Error::Domain(format!("d_min must be positive, got {d_min}")));
    }
    if !(keepout_pad >= 0.0) {
        return Err(Error::Domain(format!("keepout_pad must be nonnegative, got {keepout_pad}")));
    }
    let k_count = self_s.check_lengths()?;
    for nb in neighbors {
        if nb.pos.len() != k_count || nb.vel.len() != k_count || nb.acc.len() != k_count {
            return Err(Error::Domain(format!(
                "neighbor {} has {} samples, expected {k_count}",
                nb.id,
                nb.pos.len()
            )));
        }
    }
    let mut rows = Vec::with_capacity(k_count * (neighbors.len() + obstacles.len()));
    let mut issues = Vec::new();
    for k in 0..k_count {
        let p = self_s.pos[k];
        let v = self_s.vel[k];
        let mut emit = |o: Vec2, o_vel: Vec2, o_acc: Vec2, clearance: f64, label: &str| {
            let rel = p - o;
            let dist_sq = rel.norm_sq();
            if dist_sq < 1e-18 {
                issues.push(format!(
                    "sample {k}: hazard {label} coincides with predicted position; emitting infeasible row"
                ));
                rows.push(AffineConstraint {
                    coeffs: SparseRow::new(),
                    slack_col: None,
                    rhs: 1.0,
                    sense: Sense::Ge,
                    kind: RowKind::Safety,
                });
                return;
            }
            let v_rel = v - o_vel;
            let h = dist_sq - clearance * clearance;
            let hdot = 2.0 * rel.dot(v_rel);
            let drift = 2.0 * v_rel.norm_sq() - 2.0 * rel.dot(o_acc);
            let ctrl = self_s.acc_projection(k, rel.scale(2.0));
            rows.push(hocbf_row_secondorder(
                h,
                hdot,
                drift,
                ctrl,
                gains.k1_safe,
                gains.k2_safe,
                RowKind::Safety,
                None,
            ));
            if k > 0 && !self_s.pos_x.is_empty() {
                let padded = clearance + keepout_pad;
                // Clamping at zero keeps the program feasible when the
                // iterate is already inside the pad: the row then only
                // forbids going deeper, and the barrier rows drive the
                // escape.
                let h_pad = (dist_sq - padded * padded).max(0.0);
                rows.push(AffineConstraint {
                    coeffs: self_s.pos_projection(k, rel.scale(2.0)),
                    slack_col: None,
                    rhs: 2.0 * rel.dot(p) - h_pad,
                    sense: Sense::Ge,
                    kind: RowKind::Safety,
                });
            }
        };
        for nb in neighbors {
            emit(nb.pos[k], nb.vel[k], nb.acc[k], d_min, &format!("robot {}", nb.id));
        }
        for (oi, ob) in obstacles.iter().enumerate() {
            emit(ob.center, Vec2::ZERO, Vec2::ZERO, ob.d_min, &format!("obstacle {oi}"));
        }
    }
    Ok((rows, issues))
}

/// Inputs for the connectivity-maintenance rows: one graph per sample time
/// built from the whole team's iterate positions, plus the team's iterate
/// velocities and planned accelerations at each sample.
#[derive(Debug, Clone, Copy)]
pub struct ConnInputs<'a> {
    pub graphs: &'a [ConnectivityGraph],
    pub self_index: usize,
    /// `[sample][robot]` velocities, own entry included.
    pub team_vel: &'a [Vec<Vec2>],
    /// `[sample][robot]` planned accelerations; the own entry is ignored
    /// (it is the affine unknown).
    pub team_acc: &'a [Vec<Vec2>],
    pub epsilon: f64,
    pub slack_col: usize,
}

/// Connectivity-maintenance HOCBF rows, `h = lambda_2 - epsilon`, one per
/// sample, all sharing one slack. The eigenvalue Hessian is omitted
/// (frozen-gradient approximation, absorbed by the slack), so
/// `hddot ~ sum_j grad_j lambda2 . u_j` with only the own block affine.
/// Samples whose `lambda_2` is not simple (eigen gap below 1e-9) are
/// skipped; the count of skipped samples is returned.
pub fn connectivity_hocbf_rows(
    inputs: &ConnInputs,
    self_s: &SelfSamples,
    gains: &GainSet,
) -> Result<(Vec<AffineConstraint>, usize)> {
    let k_count = self_s.check_lengths()?;
    if inputs.graphs.len() != k_count
        || inputs.team_vel.len() != k_count
        || inputs.team_acc.len() != k_count
    {
        return Err(Error::Domain(format!(
            "connectivity inputs disagree on sample count: {} graphs, {} vel, {} acc, expected {k_count}",
            inputs.graphs.len(),
            inputs.team_vel.len(),
            inputs.team_acc.len()
        )));
    }
    let mut rows = Vec::with_capacity(k_count);
    let mut skipped = 0;
    for k in 0..k_count {
        let graph = &inputs.graphs[k];
        if graph.n <= 1 {
            skipped += 1;
            continue;
        }
        if inputs.self_index >= graph.n
            || inputs.team_vel[k].len() != graph.n
            || inputs.team_acc[k].len() != graph.n
        {
            return Err(Error::Domain(format!(
                "sample {k}: team size mismatch against graph of {} robots",
                graph.n
            )));
        }
        if !(graph.eigen_gap >= 1e-9) {
            skipped += 1;
            continue;
        }
        let h = graph.lambda2 - inputs.epsilon;
        let mut hdot = 0.0;
        let mut drift = 0.0;
        for j in 0..graph.n {
            hdot += graph.lambda2_gradient[j].dot(inputs.team_vel[k][j]);
            if j != inputs.self_index {
                drift += graph.lambda2_gradient[j].dot(inputs.team_acc[k][j]);
            }
        }
        let ctrl = self_s.acc_projection(k, graph.lambda2_gradient[inputs.self_index]);
        rows.push(hocbf_row_secondorder(
            h,
            hdot,
            drift,
            ctrl,
            gains.k1_conn,
            gains.k2_conn,
            RowKind::Connectivity,
            Some(inputs.slack_col),
        ));
    }
    Ok((rows, skipped))
}

/// Recovery targets: nearest robot in a foreign component, unit weight.
/// Empty when the graph is already connected.
pub fn select_recovery_pairs(positions: &[Vec2], r: f64, self_index: usize) -> Vec<(usize, f64)> {
    let n = positions.len();
    if n <= 1 || self_index >= n {
        return Vec::new();
    }
    // Label BFS components over the unweighted proximity graph.
    let r_sq = r * r;
    let mut component = vec![usize::MAX; n];
    let mut next = 0;
    for start in 0..n {
        if component[start] != usize::MAX {
            continue;
        }
        let mut queue = std::collections::VecDeque::new();
        component[start] = next;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            for j in 0..n {
                if component[j] == usize::MAX
                    && (positions[i] - positions[j]).norm_sq() <= r_sq
                {
                    component[j] = next;
                    queue.push_back(j);
                }
            }
        }
        next += 1;
    }
    if next == 1 {
        return Vec::new();
    }
    let own = component[self_index];
    let mut best: Option<(usize, f64)> = None;
    for j in 0..n {
        if component[j] == own {
            continue;
        }
        let d_sq = (positions[self_index] - positions[j]).norm_sq();
        if best.map_or(true, |(_, b)| d_sq < b) {
            best = Some((j, d_sq));
        }
    }
    best.map(|(j, _)| vec![(j, 1.0)]).unwrap_or_default()
}

/// Connectivity-recovery HOCLF rows for the selected pairs,
/// `V = w (d - R)^2`, one row per (pair, sample), each pair sharing one
/// slack column from `slack_cols` (aligned with `targets`).
pub fn clf_recovery_rows(
    self_s: &SelfSamples,
    targets: &[(usize, f64)],
    neighbor_plans: &[NeighborPlan],
    r: f64,
    gains: &GainSet,
    slack_cols: &[usize],
) -> Result<(Vec<AffineConstraint>, Vec<String>)> {
    if targets.len() != slack_cols.len() {
        return Err(Error::Domain(format!(
            "{} recovery targets but {} slack columns",
            targets.len(),
            slack_cols.len()
        )));
    }
    let k_count = self_s.check_lengths()?;
    let mut rows = Vec::with_capacity(targets.len() * k_count);
    let mut issues = Vec::new();
    for (t_idx, &(j, w)) in targets.iter().enumerate() {
        let Some(nb) = neighbor_plans.iter().find(|nb| nb.id == j) else {
            return Err(Error::Domain(format!("recovery target {j} has no neighbor plan")));
        };
        if nb.pos.len() != k_count {
            return Err(Error::Domain(format!(
                "recovery target {j} has {} samples, expected {k_count}",
                nb.pos.len()
            )));
        }
        let slack_col = slack_cols[t_idx];
        for k in 0..k_count {
            let p_rel = self_s.pos[k] - nb.pos[k];
            let d = p_rel.norm();
            if d < 1e-9 {
                issues.push(format!(
                    "sample {k}: recovery pair ({}, {j}) coincident; skipping (separation rows dominate)",
                    inputs_label(self_s, k)
                ));
                continue;
            }
            let v_rel = self_s.vel[k] - nb.vel[k];
            let s = d - r;
            let v_val = w * s * s;
            let ddot = p_rel.dot(v_rel) / d;
            let vdot = 2.0 * w * s * ddot;
            // ddddrift: the control-free part of d-ddot.
            let dd_drift = (v_rel.norm_sq() - p_rel.dot(nb.acc[k]) - ddot * ddot) / d;
            let drift = 2.0 * w * (ddot * ddot + s * dd_drift);
            let b = drift + (gains.k1_clf + gains.k2_clf) * vdot + gains.k1_clf * gains.k2_clf * v_val;
            let ctrl = self_s.acc_projection(k, p_rel.scale(2.0 * w * s / d));
            rows.push(AffineConstraint {
                coeffs: ctrl,
                slack_col: Some(slack_col),
                rhs: -b,
                sense: Sense::Le,
                kind: RowKind::Recovery,
            });
        }
    }
    Ok((rows, issues))
}

fn inputs_label(self_s: &SelfSamples, k: usize) -> String {
    format!("p=({:.3},{:.3})", self_s.pos[k].x, self_s.pos[k].y)
}

/// Velocity and acceleration sample rows for box-bound enforcement:
/// two rows (>= min, <= max) per axis per sample per quantity.
pub fn state_bound_rows(
    self_vel_x: &[SparseRow],
    self_vel_y: &[SparseRow],
    self_acc_x: &[SparseRow],
    self_acc_y: &[SparseRow],
    v_min: Vec2,
    v_max: Vec2,
    a_min: Vec2,
    a_max: Vec2,
) -> Result<Vec<AffineConstraint>> {
    for (name, lo, hi) in [("velocity", v_min, v_max), ("acceleration", a_min, a_max)] {
        for k in 0..2 {
            if !lo.coord(k).is_finite() || !hi.coord(k).is_finite() {
                return Err(Error::Domain(format!("{name} bounds must be finite")));
            }
            if lo.coord(k) >= hi.coord(k) {
                return Err(Error::Domain(format!(
                    "{name} bounds must satisfy min < max per axis, got [{}, {}]",
                    lo.coord(k),
                    hi.coord(k)
                )));
            }
        }
    }
    let k_count = self_vel_x.len();
    if self_vel_y.len() != k_count || self_acc_x.len() != k_count || self_acc_y.len() != k_count {
        return Err(Error::Domain("bound rows need equal sample counts per axis".into()));
    }
    let mut rows = Vec::with_capacity(8 * k_count);
    let mut emit = |row: &SparseRow, lo: f64, hi: f64, kind: RowKind| {
        rows.push(AffineConstraint {
            coeffs: row.clone(),
            slack_col: None,
            rhs: lo,
            sense: Sense::Ge,
            kind,
        });
        rows.push(AffineConstraint {
            coeffs: row.clone(),
            slack_col: None,
            rhs: hi,
            sense: Sense::Le,
            kind,
        });
    };
    for k in 0..k_count {
        emit(&self_vel_x[k], v_min.x, v_max.x, RowKind::VelocityBound);
        emit(&self_vel_y[k], v_min.y, v_max.y, RowKind::VelocityBound);
        emit(&self_acc_x[k], a_min.x, a_max.x, RowKind::AccelBound);
        emit(&self_acc_y[k], a_min.y, a_max.y, RowKind::AccelBound);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::connectivity::{build_graph, default_varsigma, edge_weight_gradient};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Acceleration rows for a decision vector that *is* (u_x, u_y) at
    /// every sample: the identity embedding used throughout these tests.
    fn direct_u_samples(pos: Vec<Vec2>, vel: Vec<Vec2>) -> (Vec<Vec2>, Vec<Vec2>, Vec<SparseRow>, Vec<SparseRow>) {
        let k = pos.len();
        let acc_x = vec![SparseRow::from_entries(vec![(0, 1.0)]); k];
        let acc_y = vec![SparseRow::from_entries(vec![(1, 1.0)]); k];
        (pos, vel, acc_x, acc_y)
    }

    #[test]
    fn hocbf_row_expands_recursion() {
        let row = |h, hdot, drift, k1, k2| {
            hocbf_row_secondorder(h, hdot, drift, SparseRow::new(), k1, k2, RowKind::Safety, None)
        };
        // b = k1 k2 h.
        assert_eq!(row(1.0, 0.0, 0.0, 1.0, 1.0).rhs, -1.0);
        // Active boundary.
        assert_eq!(row(0.0, 0.0, 0.0, 1.0, 1.0).rhs, 0.0);
        // b = 2 + 2(-6) + 5 = -5.
        assert_eq!(row(5.0, -6.0, 2.0, 1.0, 1.0).rhs, 5.0);
        assert_eq!(row(5.0, -6.0, 2.0, 1.0, 1.0).sense, Sense::Ge);
    }

    #[test]
    fn safety_row_matches_worked_example() {
        // Robot at origin moving +x at an obstacle 3 m ahead, d_min = 2,
        // k1 = k2 = 1: the row is -6 u_x - 5 >= 0, i.e. u_x <= -5/6.
        let (pos, vel, acc_x, acc_y) =
            direct_u_samples(vec![Vec2::ZERO], vec![Vec2::new(1.0, 0.0)]);
        let s = SelfSamples { pos: &pos, vel: &vel, acc_x: &acc_x, acc_y: &acc_y, pos_x: &[], pos_y: &[] };
        let gains = GainSet { k1_safe: 1.0, k2_safe: 1.0, ..GainSet::default() };
        let obstacle = PointHazard { center: Vec2::new(3.0, 0.0), d_min: 2.0 };
        let (rows, issues) = safety_rows(&s, &[], &[obstacle], 2.0, &gains, 0.0).unwrap();
        assert!(issues.is_empty());
        assert_eq!(rows.len(), 1);
        let row = &rows[0];
        // coeffs . u >= rhs with coeffs = 2(p - o) = (-6, 0), rhs = -b = 5.
        assert_eq!(row.coeffs.entries, vec![(0, -6.0)]);
        assert_eq!(row.rhs, 5.0);
        // u_x at the boundary: -6 u_x = 5 -> u_x = -5/6.
        let u_boundary = [-5.0 / 6.0, 0.0];
        assert!(row.margin(&u_boundary).abs() < 1e-12);
        assert!(row.margin(&[-1.0, 0.0]) > 0.0);
        assert!(row.margin(&[0.0, 0.0]) < 0.0);
    }

    #[test]
    fn safety_row_boundary_case_pushes_outward() {
        // Exactly at d_min with zero velocity: b = 0 and A = 2(p - o).
        let (pos, vel, acc_x, acc_y) =
            direct_u_samples(vec![Vec2::new(2.0, 0.0)], vec![Vec2::ZERO]);
        let s = SelfSamples { pos: &pos, vel: &vel, acc_x: &acc_x, acc_y: &acc_y, pos_x: &[], pos_y: &[] };
        let gains = GainSet { k1_safe: 1.0, k2_safe: 1.0, ..GainSet::default() };
        let (rows, _) = safety_rows(&s, &[], &[PointHazard { center: Vec2::ZERO, d_min: 2.0 }], 2.0, &gains, 0.0).unwrap();
        assert_eq!(rows[0].rhs, 0.0);
        assert_eq!(rows[0].coeffs.entries, vec![(0, 4.0)]);
    }

    #[test]
    fn equal_velocities_zero_relative_drift() {
        // Two robots with equal velocities: v_rel = 0, so the drift term
        // 2||v_rel||^2 vanishes (neighbor unaccelerated).
        let (pos, vel, acc_x, acc_y) =
            direct_u_samples(vec![Vec2::ZERO], vec![Vec2::new(3.0, -1.0)]);
        let s = SelfSamples { pos: &pos, vel: &vel, acc_x: &acc_x, acc_y: &acc_y, pos_x: &[], pos_y: &[] };
        let nb = NeighborPlan {
            id: 1,
            pos: vec![Vec2::new(5.0, 0.0)],
            vel: vec![Vec2::new(3.0, -1.0)],
            acc: vec![Vec2::ZERO],
        };
        let gains = GainSet { k1_safe: 1.0, k2_safe: 1.0, ..GainSet::default() };
        let (rows, _) = safety_rows(&s, &[nb], &[], 2.0, &gains, 0.0).unwrap();
        // h = 25 - 4 = 21, hdot = 0, drift = 0 -> b = k1 k2 h = 21.
        assert_eq!(rows[0].rhs, -21.0);
    }

    #[test]
    fn keepout_rows_are_conservative_halfspaces() {
        // Two samples with explicit position rows (cols 4..8). Sample 0 is
        // pinned elsewhere, so only sample 1 gets a keep-out row.
        let pos = [Vec2::new(9.0, 9.0), Vec2::new(3.0, 0.0)];
        let vel = [Vec2::ZERO, Vec2::ZERO];
        let acc_x = [SparseRow::from_entries(vec![(0, 1.0)]), SparseRow::from_entries(vec![(2, 1.0)])];
        let acc_y = [SparseRow::from_entries(vec![(1, 1.0)]), SparseRow::from_entries(vec![(3, 1.0)])];
        let pos_x = [SparseRow::from_entries(vec![(4, 1.0)]), SparseRow::from_entries(vec![(6, 1.0)])];
        let pos_y = [SparseRow::from_entries(vec![(5, 1.0)]), SparseRow::from_entries(vec![(7, 1.0)])];
        let s = SelfSamples { pos: &pos, vel: &vel, acc_x: &acc_x, acc_y: &acc_y, pos_x: &pos_x, pos_y: &pos_y };
        let hazard = PointHazard { center: Vec2::ZERO, d_min: 2.0 };
        let (rows, issues) = safety_rows(&s, &[], &[hazard], 2.0, &GainSet::default(), 0.5).unwrap();
        assert!(issues.is_empty());
        // Barrier rows for both samples, keep-out only for sample 1.
        assert_eq!(rows.len(), 3);
        let keepout = &rows[2];
        // 2(p_hat - o) = (6, 0) on the sample-1 position row; rhs =
        // 2(p_hat . p_hat) - (|p_hat|^2 - 2.5^2) = 18 - 2.75 = 15.25.
        assert_eq!(keepout.coeffs.entries, vec![(6, 6.0)]);
        assert_eq!(keepout.rhs, 15.25);
        assert_eq!(keepout.sense, Sense::Ge);
        assert!(keepout.slack_col.is_none());
        // Feasible at the iterate with margin equal to the padded h.
        let mut z = vec![0.0; 8];
        z[6] = 3.0;
        assert!((keepout.margin(&z) - 2.75).abs() < 1e-12);
        // The half-space boundary lies outside the padded circle: any
        // position satisfying the row keeps the true clearance.
        z[6] = keepout.rhs / 6.0;
        for y in [-3.0, 0.0, 4.0] {
            z[7] = y;
            assert!(keepout.margin(&z).abs() < 1e-12 || keepout.margin(&z) >= 0.0);
            let dist = (z[6] * z[6] + y * y).sqrt();
            assert!(dist >= 2.5 - 1e-12);
        }
    }

    #[test]
    fn keepout_inside_pad_only_forbids_going_deeper() {
        // Iterate 1.5 m from the hazard center, inside the padded radius
        // 2.5: the row must hold at the iterate itself (rhs = 2 rel . p_hat)
        // so the program stays feasible while the barrier pushes out.
        let pos = [Vec2::new(9.0, 9.0), Vec2::new(1.5, 0.0)];
        let vel = [Vec2::ZERO, Vec2::ZERO];
        let acc_x = [SparseRow::from_entries(vec![(0, 1.0)]), SparseRow::from_entries(vec![(2, 1.0)])];
        let acc_y = [SparseRow::from_entries(vec![(1, 1.0)]), SparseRow::from_entries(vec![(3, 1.0)])];
        let pos_x = [SparseRow::from_entries(vec![(4, 1.0)]), SparseRow::from_entries(vec![(6, 1.0)])];
        let pos_y = [SparseRow::from_entries(vec![(5, 1.0)]), SparseRow::from_entries(vec![(7, 1.0)])];
        let s = SelfSamples { pos: &pos, vel: &vel, acc_x: &acc_x, acc_y: &acc_y, pos_x: &pos_x, pos_y: &pos_y };
        let hazard = PointHazard { center: Vec2::ZERO, d_min: 2.0 };
        let (rows, _) = safety_rows(&s, &[], &[hazard], 2.0, &GainSet::default(), 0.5).unwrap();
        let keepout = &rows[2];
        assert_eq!(keepout.rhs, 2.0 * 1.5 * 1.5);
        let mut z = vec![0.0; 8];
        z[6] = 1.5;
        assert!(keepout.margin(&z).abs() < 1e-12);
        // Deeper is rejected, outward is accepted.
        z[6] = 1.4;
        assert!(keepout.margin(&z) < 0.0);
        z[6] = 1.6;
        assert!(keepout.margin(&z) > 0.0);
    }

    #[test]
    fn keepout_pad_must_be_nonnegative() {
        let (pos, vel, acc_x, acc_y) = direct_u_samples(vec![Vec2::new(3.0, 0.0)], vec![Vec2::ZERO]);
        let s = SelfSamples { pos: &pos, vel: &vel, acc_x: &acc_x, acc_y: &acc_y, pos_x: &[], pos_y: &[] };
        assert!(safety_rows(&s, &[], &[], 2.0, &GainSet::default(), -0.1).is_err());
    }

    #[test]
    fn coincident_hazard_emits_infeasible_row_and_issue() {
        let (pos, vel, acc_x, acc_y) = direct_u_samples(vec![Vec2::ZERO], vec![Vec2::ZERO]);
        let s = SelfSamples { pos: &pos, vel: &vel, acc_x: &acc_x, acc_y: &acc_y, pos_x: &[], pos_y: &[] };
        let (rows, issues) =
            safety_rows(&s, &[], &[PointHazard { center: Vec2::ZERO, d_min: 2.0 }], 2.0, &GainSet::default(), 0.0)
                .unwrap();
        assert_eq!(issues.len(), 1);
        assert_eq!(rows.len(), 1);
        // Empty coefficients with rhs 1 and sense >= : structurally infeasible.
        assert!(rows[0].coeffs.is_empty());
        assert_eq!(rows[0].rhs, 1.0);
        assert!(rows[0].margin(&[0.0, 0.0]) < 0.0);
    }

    /// Fourth-order central first and second derivatives; exact for
    /// quartics (like h along constant-acceleration motion) up to rounding.
    fn fd_derivs(f: impl Fn(f64) -> f64, dt: f64) -> (f64, f64) {
        let (m2, m1, p0, p1, p2) = (f(-2.0 * dt), f(-dt), f(0.0), f(dt), f(2.0 * dt));
        let d1 = (m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * dt);
        let d2 = (-m2 + 16.0 * m1 - 30.0 * p0 + 16.0 * p1 - p2) / (12.0 * dt * dt);
        (d1, d2)
    }

    /// Independent oracle: integrate the state under constant accelerations
    /// for a small dt and differentiate h(t) numerically. The emitted row
    /// must equal psi_2 = hddot_fd + (k1 + k2) hdot_fd + k1 k2 h.
    #[test]
    fn safety_rows_match_time_differentiation_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let gains = GainSet::default();
        let dt = 1e-3;
        for _ in 0..200 {
            let p = Vec2::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
            let v = Vec2::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            let o = p + Vec2::new(rng.gen_range(2.0..6.0), rng.gen_range(2.0..6.0));
            let ov = Vec2::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let oa = Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let u = Vec2::new(rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0));
            let d_min = 1.0;

            let (pos, vel, acc_x, acc_y) = direct_u_samples(vec![p], vec![v]);
            let s = SelfSamples { pos: &pos, vel: &vel, acc_x: &acc_x, acc_y: &acc_y, pos_x: &[], pos_y: &[] };
            let nb = NeighborPlan { id: 9, pos: vec![o], vel: vec![ov], acc: vec![oa] };
            let (rows, _) = safety_rows(&s, &[nb], &[], d_min, &gains, 0.0).unwrap();
            let row_value = rows[0].eval_lhs(&[u.x, u.y]) - rows[0].rhs;

            // h(t) under constant accelerations u (self) and oa (hazard).
            let h_at = |t: f64| {
                let pt = p + v.scale(t) + u.scale(0.5 * t * t);
                let ot = o + ov.scale(t) + oa.scale(0.5 * t * t);
                (pt - ot).norm_sq() - d_min * d_min
            };
            let h0 = h_at(0.0);
            let (hdot_fd, hddot_fd) = fd_derivs(h_at, dt);
            let psi2 = hddot_fd + (gains.k1_safe + gains.k2_safe) * hdot_fd
                + gains.k1_safe * gains.k2_safe * h0;
            assert!(
                (row_value - psi2).abs() <= 1e-6 * (1.0 + psi2.abs()),
                "row {row_value} vs oracle {psi2}"
            );
        }
    }

    #[test]
    fn connectivity_rows_use_two_robot_closed_form() {
        // Two robots: lambda2 = 2 a(d), so the control row must equal
        // 2 grad a . u on the own acceleration block.
        let r = 8.0;
        let vs = default_varsigma(r);
        let positions = vec![Vec2::new(0.0, 0.0), Vec2::new(5.0, 2.0)];
        let graph = build_graph(&positions, r, vs).unwrap();
        let (pos, vel, acc_x, acc_y) = direct_u_samples(vec![positions[0]], vec![Vec2::ZERO]);
        let s = SelfSamples { pos: &pos, vel: &vel, acc_x: &acc_x, acc_y: &acc_y, pos_x: &[], pos_y: &[] };
        let inputs = ConnInputs {
            graphs: std::slice::from_ref(&graph),
            self_index: 0,
            team_vel: &[vec![Vec2::ZERO, Vec2::ZERO]],
            team_acc: &[vec![Vec2::ZERO, Vec2::ZERO]],
            epsilon: 0.1,
            slack_col: 2,
        };
        let (rows, skipped) = connectivity_hocbf_rows(&inputs, &s, &GainSet::default()).unwrap();
        assert_eq!(skipped, 0);
        assert_eq!(rows.len(), 1);
        let grad = edge_weight_gradient(positions[0], positions[1], r, vs).scale(2.0);
        let coeffs: std::collections::BTreeMap<usize, f64> =
            rows[0].coeffs.entries.iter().copied().collect();
        assert!((coeffs.get(&0).copied().unwrap_or(0.0) - grad.x).abs() < 1e-9);
        assert!((coeffs.get(&1).copied().unwrap_or(0.0) - grad.y).abs() < 1e-9);
        assert_eq!(rows[0].slack_col, Some(2));
        assert_eq!(rows[0].slack_coeff(), 1.0);
    }

    #[test]
    fn connectivity_row_value_term_only_when_static() {
        // Static team with lambda2 = eps + delta and zero plans:
        // b reduces to k1 k2 (lambda2 - eps).
        let r = 8.0;
        let vs = default_varsigma(r);
        let positions = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(4.0, 0.0),
            Vec2::new(2.0, 3.0),
        ];
        let graph = build_graph(&positions, r, vs).unwrap();
        let graphs = vec![graph.clone()];
        let (pos, vel, acc_x, acc_y) = direct_u_samples(vec![positions[0]], vec![Vec2::ZERO]);
        let s = SelfSamples { pos: &pos, vel: &vel, acc_x: &acc_x, acc_y: &acc_y, pos_x: &[], pos_y: &[] };
        let zeros = vec![vec![Vec2::ZERO; 3]];
        let gains = GainSet { k1_conn: 1.0, k2_conn: 1.0, ..GainSet::default() };
        let inputs = ConnInputs {
            graphs: &graphs,
            self_index: 0,
            team_vel: &zeros,
            team_acc: &zeros,
            epsilon: 0.1,
            slack_col: 2,
        };
        let (rows, _) = connectivity_hocbf_rows(&inputs, &s, &gains).unwrap();
        let expected_b = graph.lambda2 - 0.1;
        assert!((rows[0].rhs + expected_b).abs() < 1e-12);
    }

    #[test]
    fn connectivity_drift_is_translation_invariant() {
        // grad lambda2 sums to zero over robots, so adding one common
        // acceleration to everyone leaves the neighbor drift + own control
        // contribution unchanged.
        let r = 8.0;
        let vs = default_varsigma(r);
        let positions = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(5.0, 1.0),
            Vec2::new(2.0, 4.0),
            Vec2::new(6.5, 4.5),
        ];
        let graph = build_graph(&positions, r, vs).unwrap();
        let grad_sum = graph
            .lambda2_gradient
            .iter()
            .fold(Vec2::ZERO, |acc, g| acc + *g);
        assert!(grad_sum.norm() < 1e-9, "gradient components must sum to zero");

        let (pos, vel, acc_x, acc_y) = direct_u_samples(vec![positions[0]], vec![Vec2::ZERO]);
        let s = SelfSamples { pos: &pos, vel: &vel, acc_x: &acc_x, acc_y: &acc_y, pos_x: &[], pos_y: &[] };
        let common = Vec2::new(1.3, -0.7);
        let accs_zero = vec![vec![Vec2::ZERO; 4]];
        let accs_common = vec![vec![common; 4]];
        let mk = |team_acc: &[Vec<Vec2>]| {
            let inputs = ConnInputs {
                graphs: std::slice::from_ref(&graph),
                self_index: 0,
                team_vel: &accs_zero, // zero velocities
                team_acc,
                epsilon: 0.1,
                slack_col: 2,
            };
            connectivity_hocbf_rows(&inputs, &s, &GainSet::default()).unwrap().0
        };
        let base = mk(&accs_zero);
        let shifted = mk(&accs_common);
        // Evaluate both rows at u = common for the shifted case and u = 0
        // for the base: total psi_2 must agree.
        let z_base = [0.0, 0.0, 0.0];
        let z_shift = [common.x, common.y, 0.0];
        let v_base = base[0].eval_lhs(&z_base) - base[0].rhs;
        let v_shift = shifted[0].eval_lhs(&z_shift) - shifted[0].rhs;
        assert!((v_base - v_shift).abs() < 1e-9, "{v_base} vs {v_shift}");
    }

    #[test]
    fn degenerate_eigen_gap_skips_sample() {
        // A complete graph with identical weights has a repeated lambda2;
        // the builder must skip it and report the skip.
        let r = 8.0;
        let vs = default_varsigma(r);
        // Equilateral triangle: all pairwise distances equal -> lambda2
        // multiplicity 2.
        let d = 4.0;
        let positions = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(d, 0.0),
            Vec2::new(d / 2.0, d * 3f64.sqrt() / 2.0),
        ];
        let graph = build_graph(&positions, r, vs).unwrap();
        assert!(graph.eigen_gap < 1e-9);
        let (pos, vel, acc_x, acc_y) = direct_u_samples(vec![positions[0]], vec![Vec2::ZERO]);
        let s = SelfSamples { pos: &pos, vel: &vel, acc_x: &acc_x, acc_y: &acc_y, pos_x: &[], pos_y: &[] };
        let zeros = vec![vec![Vec2::ZERO; 3]];
        let inputs = ConnInputs {
            graphs: std::slice::from_ref(&graph),
            self_index: 0,
            team_vel: &zeros,
            team_acc: &zeros,
            epsilon: 0.1,
            slack_col: 2,
        };
        let (rows, skipped) = connectivity_hocbf_rows(&inputs, &s, &GainSet::default()).unwrap();
        assert!(rows.is_empty());
        assert_eq!(skipped, 1);
    }

    #[test]
    fn clf_example_values_check_out() {
        // p_i = (0,0), p_j = (10,0), R = 8, w = 1, v_i = (1,0), v_j = 0:
        // V = 4, ddot = -1, Vdot = -4.
        let (pos, vel, acc_x, acc_y) =
            direct_u_samples(vec![Vec2::ZERO], vec![Vec2::new(1.0, 0.0)]);
        let s = SelfSamples { pos: &pos, vel: &vel, acc_x: &acc_x, acc_y: &acc_y, pos_x: &[], pos_y: &[] };
        let nb = NeighborPlan {
            id: 1,
            pos: vec![Vec2::new(10.0, 0.0)],
            vel: vec![Vec2::ZERO],
            acc: vec![Vec2::ZERO],
        };
        let gains = GainSet { k1_clf: 1.0, k2_clf: 1.0, ..GainSet::default() };
        let (rows, issues) =
            clf_recovery_rows(&s, &[(1, 1.0)], &[nb], 8.0, &gains, &[2]).unwrap();
        assert!(issues.is_empty());
        assert_eq!(rows.len(), 1);
        // V = 4, Vdot = -4, ddot = -1:
        // dd_drift = (||v_rel||^2 - 0 - ddot^2)/d = (1 - 1)/10 = 0,
        // drift = 2(ddot^2 + s * dd_drift) = 2,
        // b = 2 + 2(-4) + 4 = -2, rhs = 2.
        assert!((rows[0].rhs - 2.0).abs() < 1e-12, "rhs = {}", rows[0].rhs);
        // ctrl = (2 w s / d) p_rel = (2*2/10)(-10, 0) = (-4, 0).
        let coeffs: std::collections::BTreeMap<usize, f64> =
            rows[0].coeffs.entries.iter().copied().collect();
        assert!((coeffs.get(&0).copied().unwrap_or(0.0) + 4.0).abs() < 1e-12);
        assert_eq!(rows[0].sense, Sense::Le);
        assert_eq!(rows[0].slack_coeff(), -1.0);
    }

    #[test]
    fn clf_boundary_and_matched_velocity_cases() {
        // d = R exactly: V = 0 and Vdot = 0.
        let (pos, vel, acc_x, acc_y) = direct_u_samples(vec![Vec2::ZERO], vec![Vec2::new(1.0, 0.0)]);
        let s = SelfSamples { pos: &pos, vel: &vel, acc_x: &acc_x, acc_y: &acc_y, pos_x: &[], pos_y: &[] };
        let nb = NeighborPlan {
            id: 1,
            pos: vec![Vec2::new(8.0, 0.0)],
            vel: vec![Vec2::new(1.0, 0.0)],
            acc: vec![Vec2::ZERO],
        };
        let gains = GainSet { k1_clf: 1.0, k2_clf: 1.0, ..GainSet::default() };
        let (rows, _) = clf_recovery_rows(&s, &[(1, 1.0)], &[nb], 8.0, &gains, &[2]).unwrap();
        // s = 0 and v_rel = 0: V, Vdot, and all drift terms vanish; the
        // control coefficient (2 w s / d) also vanishes.
        assert_eq!(rows[0].rhs, 0.0);
        assert!(rows[0].coeffs.is_empty());
    }

    /// Same finite-difference-in-time oracle as the safety rows, applied
    /// to V(t) under constant accelerations.
    #[test]
    fn clf_rows_match_time_differentiation_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(202);
        let gains = GainSet::default();
        let r = 8.0;
        let dt = 1e-3;
        for _ in 0..200 {
            let p = Vec2::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
            let v = Vec2::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            let off = Vec2::new(rng.gen_range(6.0..20.0), rng.gen_range(-8.0..8.0));
            let o = p + off;
            let ov = Vec2::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let oa = Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let u = Vec2::new(rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0));

            let (pos, vel, acc_x, acc_y) = direct_u_samples(vec![p], vec![v]);
            let s = SelfSamples { pos: &pos, vel: &vel, acc_x: &acc_x, acc_y: &acc_y, pos_x: &[], pos_y: &[] };
            let nb = NeighborPlan { id: 3, pos: vec![o], vel: vec![ov], acc: vec![oa] };
            let (rows, _) = clf_recovery_rows(&s, &[(3, 1.0)], &[nb], r, &gains, &[2]).unwrap();
            let row_value = rows[0].eval_lhs(&[u.x, u.y, 0.0]) - rows[0].rhs;

            let v_at = |t: f64| {
                let pt = p + v.scale(t) + u.scale(0.5 * t * t);
                let ot = o + ov.scale(t) + oa.scale(0.5 * t * t);
                let s_t = (pt - ot).norm() - r;
                s_t * s_t
            };
            let v0 = v_at(0.0);
            let (vdot_fd, vddot_fd) = fd_derivs(v_at, dt);
            let lhs = vddot_fd + (gains.k1_clf + gains.k2_clf) * vdot_fd
                + gains.k1_clf * gains.k2_clf * v0;
            // The row encodes lhs <= slack; row_value is lhs - 0.
            assert!(
                (row_value - lhs).abs() <= 1e-5 * (1.0 + lhs.abs()),
                "row {row_value} vs oracle {lhs}"
            );
        }
    }

    #[test]
    fn recovery_pair_selection() {
        let r = 8.0;
        // Connected team: no pairs.
        let tight = vec![Vec2::ZERO, Vec2::new(5.0, 0.0), Vec2::new(10.0, 0.0)];
        assert!(select_recovery_pairs(&tight, r, 0).is_empty());
        // Three singletons on a line at 0, 10, 25: robot 0 targets 1.
        let line = vec![Vec2::ZERO, Vec2::new(10.0, 0.0), Vec2::new(25.0, 0.0)];
        assert_eq!(select_recovery_pairs(&line, r, 0), vec![(1, 1.0)]);
        // Robot 2 also targets 1 (nearest foreign component).
        assert_eq!(select_recovery_pairs(&line, r, 2), vec![(1, 1.0)]);
        // Two clusters: nearest member of the other cluster wins.
        let clusters = vec![
            Vec2::ZERO,
            Vec2::new(4.0, 0.0),
            Vec2::new(30.0, 0.0),
            Vec2::new(26.0, 1.0),
        ];
        assert_eq!(select_recovery_pairs(&clusters, r, 1), vec![(3, 1.0)]);
    }

    #[test]
    fn bound_rows_cover_all_samples_and_senses() {
        let k = 3;
        let rows_of = |col: usize| vec![SparseRow::from_entries(vec![(col, 1.0)]); k];
        let rows = state_bound_rows(
            &rows_of(0),
            &rows_of(1),
            &rows_of(2),
            &rows_of(3),
            Vec2::new(-15.0, -15.0),
            Vec2::new(15.0, 15.0),
            Vec2::new(-20.0, -20.0),
            Vec2::new(20.0, 20.0),
        )
        .unwrap();
        assert_eq!(rows.len(), 8 * k);
        let vel_rows = rows.iter().filter(|r| r.kind == RowKind::VelocityBound).count();
        let acc_rows = rows.iter().filter(|r| r.kind == RowKind::AccelBound).count();
        assert_eq!(vel_rows, 4 * k);
        assert_eq!(acc_rows, 4 * k);
        // Zero trajectory satisfies every row strictly.
        let z = [0.0; 4];
        assert!(rows.iter().all(|r| r.margin(&z) > 0.0));
        // A 15 m/s x-velocity sits exactly on its upper bound.
        let z = [15.0, 0.0, 0.0, 0.0];
        assert!(rows.iter().any(|r| r.margin(&z) == 0.0));
        // Degenerate bounds are rejected.
        assert!(state_bound_rows(
            &rows_of(0),
            &rows_of(1),
            &rows_of(2),
            &rows_of(3),
            Vec2::new(15.0, -15.0),
            Vec2::new(15.0, 15.0),
            Vec2::new(-20.0, -20.0),
            Vec2::new(20.0, 20.0),
        )
        .is_err());
    }

    #[test]
    fn gains_must_be_positive() {
        assert!(GainSet::default().validate().is_ok());
        let bad = GainSet { k1_conn: 0.0, ..GainSet::default() };
        assert!(bad.validate().is_err());
    }
}
