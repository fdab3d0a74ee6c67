//! Per-robot receding-horizon trajectory generation.
//!
//! Each replan solves a convex QP over the stacked Bézier control points
//! of an M-piece spline plus connectivity slack variables:
//!
//! * cost: goal tracking at the K sample times (ramped weights), effort
//!   Grams on derivatives, linear slack penalty;
//! * constraints: initial position and velocity (acceleration is the
//!   control input and may be revised between replans), cross-piece
//!   continuity, hard safety HOCBF rows, the connectivity case split
//!   (maintenance HOCBF when `lambda2 > epsilon`, recovery HOCLF pairs
//!   otherwise), velocity/acceleration boxes at samples, slack
//!   nonnegativity.
//!
//! Nonlinear terms are handled by a fixed-count SQP loop: rows are
//! linearized around the previous iterate's predicted samples, the QP is
//! solved, and the iterate is refreshed from the solution. Infeasible
//! problems fall back to a maximal-braking spline so the robot always has
//! a dynamically consistent plan to follow.

use crate::bezier::{
    build_sample_map, effort_gram, endpoint_derivative_row, BezierPiece, BezierSpline, SampleMap,
};
use crate::connectivity::{build_graph, default_varsigma, ConnectivityGraph};
use crate::constraints::{
    clf_recovery_rows, connectivity_hocbf_rows, safety_rows, select_recovery_pairs,
    state_bound_rows, AffineConstraint, ConnInputs, GainSet, NeighborPlan, PointHazard, RowKind,
    SelfSamples, Sense,
};
use crate::linalg::{Mat, SparseRow, Vec2};
use crate::qp::{QpProblem, QpSettings, QpSolver, SolveStatus};
use crate::{Error, Result};

/// Acceptable residual on hard rows before a solution is rejected in favor
/// of the braking fallback. Solutions at this tolerance sit well inside the
/// keep-out pad, so the gate tracks solver accuracy, not physical margins.
const HARD_ROW_TOL: f64 = 1e-4;

/// Distance from point `c` to the segment `ab`.
fn segment_point_dist(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    let ab = b - a;
    let len_sq = ab.dot(ab);
    if len_sq < 1e-24 {
        return (c - a).norm();
    }
    let t = ((c - a).dot(ab) / len_sq).clamp(0.0, 1.0);
    (c - (a + ab.scale(t))).norm()
}

/// Controller selection, matching the CLI `--controller` names.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerVariant {
    /// Full stack: maintenance HOCBF above threshold, recovery HOCLF below.
    MpcClfCbf,
    /// Same trajectory optimization but no recovery branch.
    MpcCbf,
    /// Pointwise QP filter over a PD nominal, no prediction.
    ClfCbfReactive,
}

impl ControllerVariant {
    pub fn name(&self) -> &'static str {
        match self {
            ControllerVariant::MpcClfCbf => "mpc-clf-cbf",
            ControllerVariant::MpcCbf => "mpc-cbf",
            ControllerVariant::ClfCbfReactive => "clf-cbf",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "mpc-clf-cbf" => Ok(ControllerVariant::MpcClfCbf),
            "mpc-cbf" => Ok(ControllerVariant::MpcCbf),
            "clf-cbf" | "clf-cbf-reactive" => Ok(ControllerVariant::ClfCbfReactive),
            other => Err(Error::Parse(format!(
                "unknown controller '{other}' (expected mpc-clf-cbf, mpc-cbf, or clf-cbf)"
            ))),
        }
    }

    pub fn all() -> [ControllerVariant; 3] {
        [
            ControllerVariant::MpcClfCbf,
            ControllerVariant::MpcCbf,
            ControllerVariant::ClfCbfReactive,
        ]
    }
}

/// Planner parameters. Defaults reproduce the bundled experiments:
/// 3 cubic pieces of 0.5 s, 15 samples at 0.1 s, continuity through
/// acceleration, 3 SQP iterations, 10 Hz replanning.
#[derive(Debug, Clone)]
pub struct PlannerConfig {
    pub pieces: usize,
    pub degree: usize,
    pub piece_duration: f64,
    pub sample_step: f64,
    pub samples: usize,
    pub continuity: usize,
    pub sqp_iterations: usize,
    /// Goal weights per sample, length `samples`.
    pub goal_weights: Vec<f64>,
    /// Effort weights per derivative order `c = 1..=degree`.
    pub effort_weights: Vec<f64>,
    /// Linear penalty per connectivity slack.
    pub slack_weight: f64,
    pub gains: GainSet,
    pub v_min: Vec2,
    pub v_max: Vec2,
    pub a_min: Vec2,
    pub a_max: Vec2,
    pub d_min: f64,
    /// Extra clearance on the hard position keep-out rows, covering the
    /// excursion a trajectory can make between consecutive samples.
    pub keepout_pad: f64,
    pub r_conn: f64,
    /// Edge-weight sharpness; `None` uses the canonical value for `r_conn`.
    pub varsigma: Option<f64>,
    /// Algebraic-connectivity threshold for the case split.
    pub epsilon: f64,
    pub replan_period: f64,
    pub variant: ControllerVariant,
    /// PD gains for the reactive baseline's nominal control.
    pub reactive_kp: f64,
    pub reactive_kd: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        let samples = 15;
        PlannerConfig {
            pieces: 3,
            degree: 3,
            piece_duration: 0.5,
            sample_step: 0.1,
            samples,
            continuity: 2,
            sqp_iterations: 3,
            goal_weights: (0..samples).map(|k| (k + 1) as f64 / samples as f64).collect(),
            effort_weights: vec![0.0, 1e-2, 1e-3],
            slack_weight: 1e4,
            gains: GainSet::default(),
            v_min: Vec2::new(-15.0, -15.0),
            v_max: Vec2::new(15.0, 15.0),
            a_min: Vec2::new(-20.0, -20.0),
            a_max: Vec2::new(20.0, 20.0),
            d_min: 2.0,
            keepout_pad: 0.1,
            r_conn: 40.0,
            varsigma: None,
            epsilon: 0.1,
            replan_period: 0.1,
            variant: ControllerVariant::MpcClfCbf,
            reactive_kp: 1.0,
            reactive_kd: 2.0,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pieces == 0 {
            return Err(Error::Domain("pieces must be >= 1".into()));
        }
        if self.degree < 2 {
            return Err(Error::Domain("degree must be >= 2 (acceleration rows needed)".into()));
        }
        if !(self.piece_duration > 0.0) || !(self.sample_step > 0.0) {
            return Err(Error::Domain("piece_duration and sample_step must be positive".into()));
        }
        if self.samples == 0 {
            return Err(Error::Domain("samples must be >= 1".into()));
        }
        let horizon = self.pieces as f64 * self.piece_duration;
        if self.samples as f64 * self.sample_step > horizon + 1e-9 {
            return Err(Error::Domain(format!(
                "samples * sample_step = {} exceeds horizon {horizon}",
                self.samples as f64 * self.sample_step
            )));
        }
        if self.continuity > self.degree {
            return Err(Error::Domain(format!(
                "continuity order {} exceeds degree {}",
                self.continuity, self.degree
            )));
        }
        if self.sqp_iterations == 0 {
            return Err(Error::Domain("sqp_iterations must be >= 1".into()));
        }
        if self.goal_weights.len() != self.samples {
            return Err(Error::Domain(format!(
                "goal_weights has {} entries, expected {}",
                self.goal_weights.len(),
                self.samples
            )));
        }
        if self.effort_weights.len() != self.degree {
            return Err(Error::Domain(format!(
                "effort_weights has {} entries, expected {} (orders 1..=degree)",
                self.effort_weights.len(),
                self.degree
            )));
        }
        if self.goal_weights.iter().chain(self.effort_weights.iter()).any(|w| !(*w >= 0.0)) {
            return Err(Error::Domain("weights must be nonnegative".into()));
        }
        if !(self.slack_weight > 0.0) {
            return Err(Error::Domain("slack_weight must be positive".into()));
        }
        self.gains.validate()?;
        for (name, lo, hi) in [("velocity", self.v_min, self.v_max), ("acceleration", self.a_min, self.a_max)] {
            for k in 0..2 {
                if !(lo.coord(k) < hi.coord(k)) {
                    return Err(Error::Domain(format!("{name} bounds must satisfy min < max per axis")));
                }
            }
        }
        if !(self.keepout_pad >= 0.0) {
            return Err(Error::Domain(format!(
                "keepout_pad must be nonnegative, got {}",
                self.keepout_pad
            )));
        }
        for (name, v) in [
            ("d_min", self.d_min),
            ("r_conn", self.r_conn),
            ("epsilon", self.epsilon),
            ("replan_period", self.replan_period),
            ("reactive_kp", self.reactive_kp),
            ("reactive_kd", self.reactive_kd),
        ] {
            if !(v > 0.0) {
                return Err(Error::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        if let Some(vs) = self.varsigma {
            if !(vs > 0.0) {
                return Err(Error::Domain(format!("varsigma must be positive, got {vs}")));
            }
        }
        Ok(())
    }

    pub fn horizon(&self) -> f64 {
        self.pieces as f64 * self.piece_duration
    }

    pub fn trajectory_vars(&self) -> usize {
        2 * self.pieces * (self.degree + 1)
    }

    pub fn effective_varsigma(&self) -> f64 {
        self.varsigma.unwrap_or_else(|| default_varsigma(self.r_conn))
    }
}

/// Measured state of the planning robot at replan time.
#[derive(Debug, Clone, Copy)]
pub struct RobotSnapshot {
    pub p: Vec2,
    pub v: Vec2,
    /// Acceleration currently being applied (from the previously issued
    /// plan; zero before the first plan).
    pub u: Vec2,
}

impl RobotSnapshot {
    fn validate(&self) -> Result<()> {
        for v in [self.p.x, self.p.y, self.v.x, self.v.y, self.u.x, self.u.y] {
            if !v.is_finite() {
                return Err(Error::Domain("robot snapshot contains non-finite values".into()));
            }
        }
        Ok(())
    }
}

/// Immutable view of everything outside the planning robot at one replan:
/// neighbor predictions resampled onto the shared grid, static hazards,
/// and the measured team layout driving the connectivity case split.
/// `neighbors` must be sorted by id and contain every team index except
/// `self_index`; each must carry exactly `samples` entries (a single entry
/// for the reactive baseline).
#[derive(Debug, Clone)]
pub struct WorldView<'a> {
    pub goal: Vec2,
    pub neighbors: &'a [NeighborPlan],
    pub obstacles: &'a [PointHazard],
    /// Measured positions of the whole team (self included) at replan time.
    pub team_positions: &'a [Vec2],
    pub self_index: usize,
}

impl WorldView<'_> {
    fn validate(&self) -> Result<()> {
        let n = self.team_positions.len();
        if self.self_index >= n {
            return Err(Error::Domain(format!(
                "self_index {} out of range for team of {n}",
                self.self_index
            )));
        }
        if self.neighbors.len() + 1 != n {
            return Err(Error::Domain(format!(
                "{} neighbor plans for a team of {n}",
                self.neighbors.len()
            )));
        }
        let mut expect = (0..n).filter(|&i| i != self.self_index);
        for nb in self.neighbors {
            if expect.next() != Some(nb.id) {
                return Err(Error::Domain(
                    "neighbor plans must be sorted by id and cover the whole team".into(),
                ));
            }
        }
        Ok(())
    }

    fn neighbor(&self, team_index: usize) -> &NeighborPlan {
        let slot = if team_index < self.self_index { team_index } else { team_index - 1 };
        &self.neighbors[slot]
    }
}

/// Which connectivity branch a replan is in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConnMode {
    /// `lambda2 > epsilon`: maintenance HOCBF rows.
    Maintain,
    /// `lambda2 <= epsilon`: recovery HOCLF rows toward selected pairs.
    Recover,
    /// No connectivity rows (single robot, or the mpc-cbf variant below
    /// threshold, or a recovery branch with no eligible pair).
    Inactive,
}

/// Case-split decision for one replan, taken from measured state.
#[derive(Debug, Clone)]
pub struct ModeSelection {
    pub mode: ConnMode,
    /// `(team index, weight)` recovery targets; empty unless `Recover`.
    pub targets: Vec<(usize, f64)>,
    /// Measured algebraic connectivity (infinite for a single robot).
    pub lambda2: f64,
}

/// Predicted own samples the constraint rows are linearized around.
#[derive(Debug, Clone)]
pub struct IterateSamples {
    pub pos: Vec<Vec2>,
    pub vel: Vec<Vec2>,
}

/// A fully assembled per-replan QP, kept alongside its structured rows so
/// tests and diagnostics can interrogate individual constraints.
#[derive(Debug, Clone)]
pub struct AssembledQp {
    pub problem: QpProblem,
    pub rows: Vec<AffineConstraint>,
    pub n_traj: usize,
    pub n_slack: usize,
    pub skipped_conn_samples: usize,
    pub issues: Vec<String>,
}

impl AssembledQp {
    /// Worst violation over all rows at a full decision vector.
    pub fn max_violation(&self, z: &[f64]) -> f64 {
        self.rows.iter().map(|r| (-r.margin(z)).max(0.0)).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanStatus {
    /// QP solved; all hard rows hold within tolerance.
    Optimal,
    /// Braking fallback issued (infeasible QP or failed verification).
    Fallback,
}

/// Per-plan diagnostics for logging and tests.
#[derive(Debug, Clone, Default)]
pub struct PlanDiagnostics {
    pub lambda2: f64,
    pub recovery_targets: Vec<usize>,
    pub skipped_conn_samples: usize,
    pub qp_iterations: Vec<usize>,
    pub objective: f64,
    pub issues: Vec<String>,
}

/// An issued trajectory: spline over `[0, horizon]` in plan-local time.
#[derive(Debug, Clone)]
pub struct Plan {
    pub spline: BezierSpline,
    /// Connectivity slack values at the solution (empty for fallbacks).
    pub slack: Vec<f64>,
    pub status: PlanStatus,
    pub mode: ConnMode,
    /// Absolute time the plan starts at.
    pub issued_at: f64,
    pub diagnostics: PlanDiagnostics,
}

impl Plan {
    /// Evaluate position/velocity/acceleration at absolute time `t`
    /// (clamped to the plan's horizon).
    pub fn sample(&self, t: f64, order: usize) -> Vec2 {
        self.spline.eval(t - self.issued_at, order)
    }
}

/// Output of one reactive-baseline control step.
#[derive(Debug, Clone, Copy)]
pub struct ReactiveCommand {
    pub u: Vec2,
    pub fallback: bool,
    pub mode: ConnMode,
}

/// One planner instance per robot; holds the solver workspace, cached
/// sampling rows, and warm-start state. Instances are independent.
pub struct Planner {
    config: PlannerConfig,
    map: SampleMap,
    /// `coord_rows[c]` holds per-axis decision-vector rows at each sample.
    coord_rows: Vec<AxisRows>,
    /// Constant quadratic cost block over trajectory variables.
    p_traj: Mat,
    /// Constant velocity/acceleration box rows.
    bound_rows: Vec<AffineConstraint>,
    /// Constant initial-condition coefficient rows per order and axis.
    init_coeffs: Vec<[SparseRow; 2]>,
    /// Constant continuity rows.
    continuity_rows: Vec<AffineConstraint>,
    solver: QpSolver,
    warm: Option<(Vec<f64>, Vec<f64>)>,
    reactive_warm: Option<(Vec<f64>, Vec<f64>)>,
}

struct AxisRows {
    x: Vec<SparseRow>,
    y: Vec<SparseRow>,
}

impl Planner {
    pub fn new(config: PlannerConfig) -> Result<Self> {
        config.validate()?;
        let (m, n, tau) = (config.pieces, config.degree, config.piece_duration);
        let map = build_sample_map(m, n, tau, config.sample_step, config.samples, 2)?;
        // Per-axis decision rows: trajectory variable for control point
        // flat index f and axis a lives at column 2 f + a.
        let mut coord_rows = Vec::with_capacity(3);
        for c in 0..=2 {
            let mut x = Vec::with_capacity(config.samples);
            let mut y = Vec::with_capacity(config.samples);
            for row in &map.rows[c] {
                x.push(SparseRow::from_entries(
                    row.entries.iter().map(|&(f, w)| (2 * f, w)).collect(),
                ));
                y.push(SparseRow::from_entries(
                    row.entries.iter().map(|&(f, w)| (2 * f + 1, w)).collect(),
                ));
            }
            coord_rows.push(AxisRows { x, y });
        }
        let n_traj = config.trajectory_vars();
        // Constant quadratic cost: goal tracking plus effort Grams
        // (objective convention is 0.5 z'Pz + q'z, hence the factor 2).
        let mut p_traj = Mat::zeros(n_traj, n_traj);
        for k in 0..config.samples {
            let w_k = config.goal_weights[k];
            if w_k == 0.0 {
                continue;
            }
            for &(fi, wi) in &map.rows[0][k].entries {
                for &(fj, wj) in &map.rows[0][k].entries {
                    for a in 0..2 {
                        p_traj.add_to(2 * fi + a, 2 * fj + a, 2.0 * w_k * wi * wj);
                    }
                }
            }
        }
        for c in 1..=n {
            let theta = config.effort_weights[c - 1];
            if theta == 0.0 {
                continue;
            }
            let gram = effort_gram(n, c, tau);
            for piece in 0..m {
                let base = piece * (n + 1);
                for i in 0..=n {
                    for j in 0..=n {
                        for a in 0..2 {
                            p_traj.add_to(
                                2 * (base + i) + a,
                                2 * (base + j) + a,
                                2.0 * theta * gram.get(i, j),
                            );
                        }
                    }
                }
            }
        }
        let bound_rows = state_bound_rows(
            &coord_rows[1].x,
            &coord_rows[1].y,
            &coord_rows[2].x,
            &coord_rows[2].y,
            config.v_min,
            config.v_max,
            config.a_min,
            config.a_max,
        )?;
        // Pin position and velocity only. Acceleration is the control
        // input: pinning it to the measured value welds every replan to
        // the tail of the previous command, and after a braking tick that
        // weld conflicts with the barrier rows and wedges the program.
        let init_orders = config.continuity.min(1);
        let mut init_coeffs = Vec::with_capacity(init_orders + 1);
        for c in 0..=init_orders {
            let coeffs = endpoint_derivative_row(n, tau, c, false);
            let per_axis = |a: usize| {
                SparseRow::from_entries(
                    coeffs
                        .iter()
                        .enumerate()
                        .filter(|(_, w)| **w != 0.0)
                        .map(|(j, w)| (2 * j + a, *w))
                        .collect(),
                )
            };
            init_coeffs.push([per_axis(0), per_axis(1)]);
        }
        let mut continuity_rows = Vec::new();
        for b in 1..m {
            for c in 0..=config.continuity {
                let end = endpoint_derivative_row(n, tau, c, true);
                let start = endpoint_derivative_row(n, tau, c, false);
                for a in 0..2 {
                    let mut entries = Vec::new();
                    for (j, w) in end.iter().enumerate() {
                        if *w != 0.0 {
                            entries.push((2 * ((b - 1) * (n + 1) + j) + a, *w));
                        }
                    }
                    for (j, w) in start.iter().enumerate() {
                        if *w != 0.0 {
                            entries.push((2 * (b * (n + 1) + j) + a, -*w));
                        }
                    }
                    continuity_rows.push(AffineConstraint {
                        coeffs: SparseRow::from_entries(entries),
                        slack_col: None,
                        rhs: 0.0,
                        sense: Sense::Eq,
                        kind: RowKind::Continuity,
                    });
                }
            }
        }
        Ok(Planner {
            config,
            map,
            coord_rows,
            p_traj,
            bound_rows,
            init_coeffs,
            continuity_rows,
            solver: QpSolver::new(Self::solver_settings()),
            warm: None,
            reactive_warm: None,
        })
    }

    /// Solver tolerances for the planning QPs. The keep-out pad leaves
    /// orders of magnitude more clearance headroom than the residual, so
    /// 1e-5 buys back iterations without touching safety margins.
    fn solver_settings() -> QpSettings {
        QpSettings { eps_abs: 1e-5, ..QpSettings::default() }
    }

    pub fn config(&self) -> &PlannerConfig {
        &self.config
    }

    pub fn sample_times(&self) -> &[f64] {
        &self.map.times
    }

    /// Decide the connectivity branch from measured positions.
    pub fn select_mode(&self, world: &WorldView) -> Result<ModeSelection> {
        world.validate()?;
        let n = world.team_positions.len();
        if n <= 1 {
            return Ok(ModeSelection { mode: ConnMode::Inactive, targets: Vec::new(), lambda2: f64::INFINITY });
        }
        let graph = build_graph(world.team_positions, self.config.r_conn, self.config.effective_varsigma())?;
        if graph.lambda2 > self.config.epsilon {
            return Ok(ModeSelection { mode: ConnMode::Maintain, targets: Vec::new(), lambda2: graph.lambda2 });
        }
        match self.config.variant {
            ControllerVariant::MpcCbf => {
                Ok(ModeSelection { mode: ConnMode::Inactive, targets: Vec::new(), lambda2: graph.lambda2 })
            }
            _ => {
                let targets =
                    select_recovery_pairs(world.team_positions, self.config.r_conn, world.self_index);
                let mode = if targets.is_empty() { ConnMode::Inactive } else { ConnMode::Recover };
                Ok(ModeSelection { mode, targets, lambda2: graph.lambda2 })
            }
        }
    }

    /// Build the QP for one SQP iteration around `iterate`.
    pub fn assemble_qp(
        &self,
        state: &RobotSnapshot,
        world: &WorldView,
        iterate: &IterateSamples,
        selection: &ModeSelection,
    ) -> Result<AssembledQp> {
        state.validate()?;
        world.validate()?;
        let cfg = &self.config;
        let k_count = cfg.samples;
        if iterate.pos.len() != k_count || iterate.vel.len() != k_count {
            return Err(Error::Domain(format!(
                "iterate has {} samples, expected {k_count}",
                iterate.pos.len()
            )));
        }
        for nb in world.neighbors {
            if nb.pos.len() != k_count {
                return Err(Error::Domain(format!(
                    "neighbor {} carries {} samples, expected {k_count}",
                    nb.id,
                    nb.pos.len()
                )));
            }
        }
        let n_traj = cfg.trajectory_vars();
        let n_slack = match selection.mode {
            ConnMode::Maintain => 1,
            ConnMode::Recover => selection.targets.len(),
            ConnMode::Inactive => 0,
        };
        let n_z = n_traj + n_slack;
        let self_s = SelfSamples {
            pos: &iterate.pos,
            vel: &iterate.vel,
            acc_x: &self.coord_rows[2].x,
            acc_y: &self.coord_rows[2].y,
            pos_x: &self.coord_rows[0].x,
            pos_y: &self.coord_rows[0].y,
        };

        let mut rows = Vec::new();
        let mut issues = Vec::new();
        // Initial state, orders 0..=min(C,2).
        let init_vals = [state.p, state.v, state.u];
        for (c, axes) in self.init_coeffs.iter().enumerate() {
            for a in 0..2 {
                rows.push(AffineConstraint {
                    coeffs: axes[a].clone(),
                    slack_col: None,
                    rhs: init_vals[c].coord(a),
                    sense: Sense::Eq,
                    kind: RowKind::Boundary,
                });
            }
        }
        rows.extend(self.continuity_rows.iter().cloned());

        let (safety, safety_issues) =
            safety_rows(&self_s, world.neighbors, world.obstacles, cfg.d_min, &cfg.gains, cfg.keepout_pad)?;
        rows.extend(safety);
        issues.extend(safety_issues);

        let mut skipped = 0;
        match selection.mode {
            ConnMode::Maintain => {
                let n_team = world.team_positions.len();
                let mut graphs: Vec<ConnectivityGraph> = Vec::with_capacity(k_count);
                let mut team_vel = Vec::with_capacity(k_count);
                let mut team_acc = Vec::with_capacity(k_count);
                for k in 0..k_count {
                    let mut pos = Vec::with_capacity(n_team);
                    let mut vel = Vec::with_capacity(n_team);
                    let mut acc = Vec::with_capacity(n_team);
                    for i in 0..n_team {
                        if i == world.self_index {
                            pos.push(iterate.pos[k]);
                            vel.push(iterate.vel[k]);
                            acc.push(Vec2::ZERO);
                        } else {
                            let nb = world.neighbor(i);
                            pos.push(nb.pos[k]);
                            vel.push(nb.vel[k]);
                            acc.push(nb.acc[k]);
                        }
                    }
                    graphs.push(build_graph(&pos, cfg.r_conn, cfg.effective_varsigma())?);
                    team_vel.push(vel);
                    team_acc.push(acc);
                }
                let inputs = ConnInputs {
                    graphs: &graphs,
                    self_index: world.self_index,
                    team_vel: &team_vel,
                    team_acc: &team_acc,
                    epsilon: cfg.epsilon,
                    slack_col: n_traj,
                };
                let (conn, conn_skipped) = connectivity_hocbf_rows(&inputs, &self_s, &cfg.gains)?;
                rows.extend(conn);
                skipped = conn_skipped;
            }
            ConnMode::Recover => {
                let slack_cols: Vec<usize> = (0..n_slack).map(|s| n_traj + s).collect();
                let targets: Vec<(usize, f64)> = selection.targets.clone();
                let (clf, clf_issues) = clf_recovery_rows(
                    &self_s,
                    &targets,
                    world.neighbors,
                    cfg.r_conn,
                    &cfg.gains,
                    &slack_cols,
                )?;
                rows.extend(clf);
                issues.extend(clf_issues);
            }
            ConnMode::Inactive => {}
        }

        rows.extend(self.bound_rows.iter().cloned());
        for s in 0..n_slack {
            rows.push(AffineConstraint {
                coeffs: SparseRow::from_entries(vec![(n_traj + s, 1.0)]),
                slack_col: None,
                rhs: 0.0,
                sense: Sense::Ge,
                kind: RowKind::SlackNonneg,
            });
        }

        let problem = self.rows_to_problem(&rows, n_z, n_traj, n_slack, world.goal);
        Ok(AssembledQp { problem, rows, n_traj, n_slack, skipped_conn_samples: skipped, issues })
    }

    fn rows_to_problem(
        &self,
        rows: &[AffineConstraint],
        n_z: usize,
        n_traj: usize,
        n_slack: usize,
        goal: Vec2,
    ) -> QpProblem {
        let m = rows.len();
        let mut a = Mat::zeros(m, n_z);
        let mut l = vec![0.0; m];
        let mut u = vec![0.0; m];
        for (i, row) in rows.iter().enumerate() {
            for &(c, w) in &row.coeffs.entries {
                a.add_to(i, c, w);
            }
            if let Some(col) = row.slack_col {
                a.add_to(i, col, row.slack_coeff());
            }
            let (lo, hi) = row.qp_bounds();
            l[i] = lo;
            u[i] = hi;
        }
        let mut p = Mat::zeros(n_z, n_z);
        for i in 0..n_traj {
            for j in 0..n_traj {
                let v = self.p_traj.get(i, j);
                if v != 0.0 {
                    p.set(i, j, v);
                }
            }
        }
        let mut q = vec![0.0; n_z];
        for k in 0..self.config.samples {
            let w_k = self.config.goal_weights[k];
            if w_k == 0.0 {
                continue;
            }
            for &(f, w) in &self.map.rows[0][k].entries {
                q[2 * f] -= 2.0 * w_k * goal.x * w;
                q[2 * f + 1] -= 2.0 * w_k * goal.y * w;
            }
        }
        for s in 0..n_slack {
            q[n_traj + s] = self.config.slack_weight;
        }
        QpProblem { p, q, a, l, u }
    }

    /// Predicted samples implied by a decision vector.
    fn samples_from_z(&self, z: &[f64]) -> IterateSamples {
        let n_traj = self.config.trajectory_vars();
        let points: Vec<Vec2> =
            (0..n_traj / 2).map(|f| Vec2::new(z[2 * f], z[2 * f + 1])).collect();
        let pos = self.map.rows[0].iter().map(|r| r.apply(&points)).collect();
        let vel = self.map.rows[1].iter().map(|r| r.apply(&points)).collect();
        IterateSamples { pos, vel }
    }

    /// Initial SQP iterate: the previous plan shifted to the new start
    /// time, or constant-velocity extrapolation when none exists. Returns
    /// `true` when the stall re-seed replaced the shifted plan.
    pub fn initial_iterate(
        &self,
        state: &RobotSnapshot,
        goal: Vec2,
        t0: f64,
        prev: Option<&Plan>,
        mode: ConnMode,
        obstacles: &[PointHazard],
    ) -> (IterateSamples, bool) {
        if let Some(plan) = prev {
            let offset = t0 - plan.issued_at;
            let pos: Vec<Vec2> =
                self.map.times.iter().map(|&t| plan.spline.eval(offset + t, 0)).collect();
            let vel = self.map.times.iter().map(|&t| plan.spline.eval(offset + t, 1)).collect();
            // A shifted plan that barely travels while the goal is far away
            // means the last solve settled into a blocked pocket. Seeding
            // the relinearization there keeps every subsequent solve in the
            // same pocket, so fall through to the goal-directed guess
            // instead (the linearized keep-outs then carve a corridor along
            // it). Recovery mode is exempt: it moves toward peers, not the
            // goal.
            let goal_dist = (goal - state.p).norm();
            let travelled = (pos[pos.len() - 1] - state.p).norm();
            let reach = self.line_speed(goal - state.p) * self.config.horizon();
            let stalled = travelled < 0.05 * reach.min(goal_dist);
            if mode == ConnMode::Recover || goal_dist <= 1.0 || !stalled {
                return (IterateSamples { pos, vel }, false);
            }
        }
        let goal_dist = (goal - state.p).norm();
        if prev.is_none() || goal_dist <= 1.0 {
            let samples = IterateSamples {
                pos: self.map.times.iter().map(|&t| state.p + state.v.scale(t)).collect(),
                vel: vec![state.v; self.config.samples],
            };
            return (samples, false);
        }
        // Reachable ramp toward the goal along a hazard-avoiding polyline.
        // Every sample must sit outside the padded hazards: a seed that
        // cuts through one generates keep-out half-spaces on the far side
        // that no dynamically feasible trajectory can also satisfy, and the
        // whole program turns infeasible. The same goes for speed: the seed
        // must slow to a crawl through polyline corners (a spline cannot
        // turn one at speed) and come to rest at the goal.
        let path = self.detour_path(state.p, goal, obstacles);
        let mut cum = vec![0.0];
        for w in path.windows(2) {
            cum.push(cum[cum.len() - 1] + (w[1] - w[0]).norm());
        }
        let total = cum[cum.len() - 1];
        let mut target = total / self.config.horizon();
        let mut accel = f64::INFINITY;
        for w in path.windows(2) {
            target = target.min(self.line_speed(w[1] - w[0]));
            accel = accel.min(0.7 * self.line_accel(w[1] - w[0]));
        }
        let accel = accel.clamp(0.1, 1e6);
        let envelope = |s: f64| -> f64 {
            let mut v = target.min((2.0 * accel * (total - s).max(0.0)).sqrt());
            for j in 1..path.len() - 1 {
                v = v.min((1.0 + 2.0 * accel * (s - cum[j]).abs()).sqrt());
            }
            v
        };
        let walk = |s: f64| -> (Vec2, Vec2) {
            let mut seg = 0;
            while seg + 2 < path.len() && s > cum[seg + 1] {
                seg += 1;
            }
            let len = (cum[seg + 1] - cum[seg]).max(1e-12);
            let dir = (path[seg + 1] - path[seg]).scale(1.0 / len);
            (path[seg] + dir.scale(s - cum[seg]), dir)
        };
        let first_dir = walk(0.0).1;
        let mut s = 0.0;
        let mut v = state.v.dot(first_dir).max(0.0);
        let mut t = 0.0;
        let dt = self.config.horizon() / 256.0;
        let mut pos = Vec::with_capacity(self.config.samples);
        let mut vel = Vec::with_capacity(self.config.samples);
        for &t_k in &self.map.times {
            while t < t_k - 0.5 * dt {
                v = (v + accel * dt).min(envelope(s));
                s = (s + v * dt).min(total);
                t += dt;
            }
            let (p, dir) = walk(s);
            pos.push(p);
            vel.push(dir.scale(v));
        }
        (IterateSamples { pos, vel }, true)
    }

    /// Polyline from `start` to `goal` that keeps a margin outside every
    /// padded hazard. The straight segment is used when clear; otherwise a
    /// single waypoint is swung sideways past the first blocking hazard
    /// until both legs clear. Hazards already closer than the margin (the
    /// robot can legitimately sit at the pad boundary) only require that
    /// the path not move in deeper.
    fn detour_path(&self, start: Vec2, goal: Vec2, obstacles: &[PointHazard]) -> Vec<Vec2> {
        let margin = self.config.keepout_pad + 0.2;
        // Clearance demanded per hazard; the robot may already sit at the
        // pad boundary, so never demand more room than it currently has.
        let allow: Vec<f64> = obstacles
            .iter()
            .map(|h| (h.d_min + margin).min((start - h.center).norm() - 1e-9).max(0.0))
            .collect();
        let clear = |a: Vec2, b: Vec2| {
            obstacles.iter().zip(&allow).all(|(h, &w)| segment_point_dist(a, b, h.center) >= w)
        };
        if clear(start, goal) {
            return vec![start, goal];
        }
        let dir = (goal - start).scale(1.0 / (goal - start).norm().max(1e-12));
        // First hazard the ray runs into, by closest-approach parameter.
        let mut block: Option<(&PointHazard, f64)> = None;
        for (h, &w) in obstacles.iter().zip(&allow) {
            if segment_point_dist(start, goal, h.center) >= w {
                continue;
            }
            let t = (h.center - start).dot(dir);
            if block.is_none_or(|(_, bt)| t < bt) {
                block = Some((h, t));
            }
        }
        let Some((hazard, _)) = block else {
            return vec![start, goal];
        };
        // Swing the waypoint out on whichever side of the ray the hazard
        // center is not.
        let cross = dir.x * (hazard.center - start).y - dir.y * (hazard.center - start).x;
        let n = if cross >= 0.0 { Vec2::new(dir.y, -dir.x) } else { Vec2::new(-dir.y, dir.x) };
        for step in 0..40 {
            let r = hazard.d_min + margin + 0.5 * step as f64;
            let w = hazard.center + n.scale(r);
            if clear(start, w) && clear(w, goal) {
                return vec![start, w, goal];
            }
        }
        vec![start, goal]
    }

    /// Fastest acceleration the box admits along `dir` (unit-normalized).
    fn line_accel(&self, dir: Vec2) -> f64 {
        let norm = dir.norm();
        if norm < 1e-12 {
            return 0.0;
        }
        let mut s = f64::INFINITY;
        for a in 0..2 {
            let d = dir.coord(a) / norm;
            if d.abs() > 1e-12 {
                let cap = if d > 0.0 { self.config.a_max.coord(a) } else { -self.config.a_min.coord(a) };
                s = s.min(cap / d.abs());
            }
        }
        s
    }

    /// Fastest speed the velocity box admits along `dir`.
    fn line_speed(&self, dir: Vec2) -> f64 {
        let norm = dir.norm();
        if norm < 1e-12 {
            return 0.0;
        }
        let mut s = f64::INFINITY;
        for a in 0..2 {
            let d = dir.coord(a) / norm;
            if d.abs() > 1e-12 {
                let cap = if d > 0.0 { self.config.v_max.coord(a) } else { -self.config.v_min.coord(a) };
                s = s.min(cap / d.abs());
            }
        }
        s
    }

    /// Run the full SQP replan. Returns a braking fallback (never an
    /// error) when the QP is infeasible or the solution fails hard-row
    /// verification.
    pub fn plan(
        &mut self,
        state: &RobotSnapshot,
        world: &WorldView,
        t0: f64,
        prev: Option<&Plan>,
    ) -> Result<Plan> {
        if self.config.variant == ControllerVariant::ClfCbfReactive {
            return Err(Error::Domain(
                "reactive variant issues pointwise controls; use reactive_step".into(),
            ));
        }
        state.validate()?;
        let selection = self.select_mode(world)?;
        let (mut iterate, reseeded) =
            self.initial_iterate(state, world.goal, t0, prev, selection.mode, world.obstacles);
        if reseeded {
            // The cached solution belongs to the abandoned pocket; warm
            // starting from it drags the solver back toward it.
            self.warm = None;
        }
        let mut diagnostics = PlanDiagnostics {
            lambda2: selection.lambda2,
            recovery_targets: selection.targets.iter().map(|&(j, _)| j).collect(),
            ..PlanDiagnostics::default()
        };
        // Keep the iterate whose own rows are satisfied best: a later
        // relinearization can overshoot while an earlier one already
        // verified, and braking over a usable plan wastes the step.
        let mut best: Option<(AssembledQp, Vec<f64>, f64, f64)> = None;
        for _ in 0..self.config.sqp_iterations {
            let asm = self.assemble_qp(state, world, &iterate, &selection)?;
            let warm = self
                .warm
                .as_ref()
                .filter(|(z, y)| z.len() == asm.problem.n() && y.len() == asm.problem.m())
                .map(|(z, y)| (z.as_slice(), y.as_slice()));
            let sol = self.solver.solve(&asm.problem, warm)?;
            diagnostics.qp_iterations.push(sol.iterations);
            if sol.status == SolveStatus::PrimalInfeasible {
                diagnostics.issues.push("qp primal infeasible; braking".into());
                diagnostics.issues.extend(asm.issues);
                return Ok(self.braking_plan_with(state, t0, selection.mode, diagnostics));
            }
            iterate = self.samples_from_z(&sol.z);
            self.warm = Some((sol.z.clone(), sol.y));
            let viol = asm.max_violation(&sol.z);
            if best.as_ref().is_none_or(|b| viol < b.2) {
                best = Some((asm, sol.z, viol, sol.objective));
            }
        }
        let (asm, z, violation, objective) = best.expect("sqp_iterations >= 1");
        diagnostics.objective = objective;
        if violation > HARD_ROW_TOL {
            diagnostics
                .issues
                .push(format!("solution violates hard rows by {violation:.2e}; braking"));
            diagnostics.issues.extend(asm.issues);
            return Ok(self.braking_plan_with(state, t0, selection.mode, diagnostics));
        }
        diagnostics.skipped_conn_samples = asm.skipped_conn_samples;
        diagnostics.issues.extend(asm.issues);
        let n_traj = asm.n_traj;
        let points: Vec<Vec2> =
            (0..n_traj / 2).map(|f| Vec2::new(z[2 * f], z[2 * f + 1])).collect();
        let spline = BezierSpline::from_flat_points(
            &points,
            self.config.pieces,
            self.config.degree,
            self.config.piece_duration,
        )?;
        Ok(Plan {
            spline,
            slack: z[n_traj..].to_vec(),
            status: PlanStatus::Optimal,
            mode: selection.mode,
            issued_at: t0,
            diagnostics,
        })
    }

    /// Maximal-braking fallback: constant deceleration bringing the robot
    /// to rest as fast as the acceleration bounds allow, then holding. The
    /// profile is quadratic in time, so its exact Bézier representation
    /// keeps all continuity orders.
    pub fn braking_plan(&self, state: &RobotSnapshot, t0: f64) -> Plan {
        self.braking_plan_with(state, t0, ConnMode::Inactive, PlanDiagnostics::default())
    }

    fn braking_plan_with(
        &self,
        state: &RobotSnapshot,
        t0: f64,
        mode: ConnMode,
        diagnostics: PlanDiagnostics,
    ) -> Plan {
        let cfg = &self.config;
        // Shortest stop the box bounds allow; both axes share one t_stop so
        // the deceleration stays constant (and within bounds) on each.
        let mut t_stop: f64 = 1e-9;
        for a in 0..2 {
            let v = state.v.coord(a);
            let limit = if v > 0.0 { -cfg.a_min.coord(a) } else { cfg.a_max.coord(a) };
            if v != 0.0 && limit > 0.0 {
                t_stop = t_stop.max(v.abs() / limit);
            }
        }
        let accel = state.v.scale(-1.0 / t_stop);
        let pos_at = |t: f64| {
            let t = t.min(t_stop);
            state.p + state.v.scale(t) + accel.scale(0.5 * t * t)
        };
        let vel_at = |t: f64| {
            let t = t.min(t_stop);
            state.v + accel.scale(t)
        };
        let (n, tau) = (cfg.degree as f64, cfg.piece_duration);
        let mut pieces = Vec::with_capacity(cfg.pieces);
        for m in 0..cfg.pieces {
            let (t0m, t1m) = (m as f64 * tau, (m + 1) as f64 * tau);
            let (p0, v0) = (pos_at(t0m), vel_at(t0m));
            let (p1, v1) = (pos_at(t1m), vel_at(t1m));
            // Cubic Hermite-to-Bézier endpoints; exact for the quadratic
            // braking profile. Inner points are spread for degree > 3 by
            // sampling the profile directly.
            let points: Vec<Vec2> = if cfg.degree == 3 {
                vec![p0, p0 + v0.scale(tau / 3.0), p1 - v1.scale(tau / 3.0), p1]
            } else {
                (0..=cfg.degree)
                    .map(|j| pos_at(t0m + tau * j as f64 / n))
                    .collect()
            };
            pieces.push(BezierPiece::new(points, tau).expect("braking piece is well-formed"));
        }
        Plan {
            spline: BezierSpline::new(pieces).expect("braking spline is well-formed"),
            slack: Vec::new(),
            status: PlanStatus::Fallback,
            mode,
            issued_at: t0,
            diagnostics,
        }
    }

    /// One step of the reactive baseline: project a PD nominal onto the
    /// pointwise HOCBF/HOCLF rows at the current state. Neighbors carry a
    /// single sample (their current state).
    pub fn reactive_step(&mut self, state: &RobotSnapshot, world: &WorldView) -> Result<ReactiveCommand> {
        state.validate()?;
        let cfg = &self.config;
        let selection = self.select_mode(world)?;
        let clamp = |v: Vec2| {
            Vec2::new(
                v.x.clamp(cfg.a_min.x, cfg.a_max.x),
                v.y.clamp(cfg.a_min.y, cfg.a_max.y),
            )
        };
        let u_nom = clamp((world.goal - state.p).scale(cfg.reactive_kp) - state.v.scale(cfg.reactive_kd));
        let n_slack = match selection.mode {
            ConnMode::Maintain => 1,
            ConnMode::Recover => selection.targets.len(),
            ConnMode::Inactive => 0,
        };
        let n_z = 2 + n_slack;
        let pos = [state.p];
        let vel = [state.v];
        let acc_x = [SparseRow::from_entries(vec![(0, 1.0)])];
        let acc_y = [SparseRow::from_entries(vec![(1, 1.0)])];
        let self_s =
            SelfSamples { pos: &pos, vel: &vel, acc_x: &acc_x, acc_y: &acc_y, pos_x: &[], pos_y: &[] };

        let mut rows = Vec::new();
        let (safety, _) = safety_rows(&self_s, world.neighbors, world.obstacles, cfg.d_min, &cfg.gains, 0.0)?;
        rows.extend(safety);
        match selection.mode {
            ConnMode::Maintain => {
                let graph = build_graph(world.team_positions, cfg.r_conn, cfg.effective_varsigma())?;
                let n_team = world.team_positions.len();
                let mut team_vel = vec![Vec2::ZERO; n_team];
                let mut team_acc = vec![Vec2::ZERO; n_team];
                for i in 0..n_team {
                    if i != world.self_index {
                        let nb = world.neighbor(i);
                        team_vel[i] = nb.vel[0];
                        team_acc[i] = nb.acc[0];
                    } else {
                        team_vel[i] = state.v;
                    }
                }
                let graphs = [graph];
                let inputs = ConnInputs {
                    graphs: &graphs,
                    self_index: world.self_index,
                    team_vel: &[team_vel],
                    team_acc: &[team_acc],
                    epsilon: cfg.epsilon,
                    slack_col: 2,
                };
                let (conn, _) = connectivity_hocbf_rows(&inputs, &self_s, &cfg.gains)?;
                rows.extend(conn);
            }
            ConnMode::Recover => {
                let slack_cols: Vec<usize> = (0..n_slack).map(|s| 2 + s).collect();
                let (clf, _) = clf_recovery_rows(
                    &self_s,
                    &selection.targets,
                    world.neighbors,
                    cfg.r_conn,
                    &cfg.gains,
                    &slack_cols,
                )?;
                rows.extend(clf);
            }
            ConnMode::Inactive => {}
        }
        for a in 0..2 {
            rows.push(AffineConstraint {
                coeffs: SparseRow::from_entries(vec![(a, 1.0)]),
                slack_col: None,
                rhs: cfg.a_min.coord(a),
                sense: Sense::Ge,
                kind: RowKind::AccelBound,
            });
            rows.push(AffineConstraint {
                coeffs: SparseRow::from_entries(vec![(a, 1.0)]),
                slack_col: None,
                rhs: cfg.a_max.coord(a),
                sense: Sense::Le,
                kind: RowKind::AccelBound,
            });
        }
        for s in 0..n_slack {
            rows.push(AffineConstraint {
                coeffs: SparseRow::from_entries(vec![(2 + s, 1.0)]),
                slack_col: None,
                rhs: 0.0,
                sense: Sense::Ge,
                kind: RowKind::SlackNonneg,
            });
        }
        let m = rows.len();
        let mut a_mat = Mat::zeros(m, n_z);
        let mut l = vec![0.0; m];
        let mut u = vec![0.0; m];
        for (i, row) in rows.iter().enumerate() {
            for &(c, w) in &row.coeffs.entries {
                a_mat.add_to(i, c, w);
            }
            if let Some(col) = row.slack_col {
                a_mat.add_to(i, col, row.slack_coeff());
            }
            let (lo, hi) = row.qp_bounds();
            l[i] = lo;
            u[i] = hi;
        }
        let mut p = Mat::zeros(n_z, n_z);
        p.set(0, 0, 2.0);
        p.set(1, 1, 2.0);
        let mut q = vec![0.0; n_z];
        q[0] = -2.0 * u_nom.x;
        q[1] = -2.0 * u_nom.y;
        for s in 0..n_slack {
            q[2 + s] = cfg.slack_weight;
        }
        let problem = QpProblem { p, q, a: a_mat, l, u };
        let warm = self
            .reactive_warm
            .as_ref()
            .filter(|(z, y)| z.len() == n_z && y.len() == m)
            .map(|(z, y)| (z.as_slice(), y.as_slice()));
        let sol = self.solver.solve(&problem, warm)?;
        let hard_violation = rows
            .iter()
            .filter(|r| r.slack_col.is_none() && r.kind != RowKind::SlackNonneg)
            .map(|r| (-r.margin(&sol.z)).max(0.0))
            .fold(0.0, f64::max);
        if sol.status == SolveStatus::PrimalInfeasible || hard_violation > HARD_ROW_TOL {
            self.reactive_warm = None;
            return Ok(ReactiveCommand { u: Vec2::ZERO, fallback: true, mode: selection.mode });
        }
        let u_out = clamp(Vec2::new(sol.z[0], sol.z[1]));
        self.reactive_warm = Some((sol.z, sol.y));
        Ok(ReactiveCommand { u: u_out, fallback: false, mode: selection.mode })
    }
}
