//! Deterministic fixed-timestep simulation of a robot team.
//!
//! The loop is bulk-synchronous: every replan period all planners read the
//! same immutable snapshot (states plus previously published plans), then
//! the new plans are published together at a barrier. Between replans each
//! robot tracks its current spline at the control rate with an exact
//! double-integrator update, so runs are bit-reproducible.
//!
//! Metrics are computed from the log alone; `run_scenario` simply replays
//! its own log through [`compute_metrics`], which is also what the CLI's
//! `metrics` subcommand does to a CSV file.

use crate::connectivity::{build_graph, is_bfs_connected};
use crate::constraints::{NeighborPlan, PointHazard};
use crate::linalg::Vec2;
use crate::planner::{
    ControllerVariant, Plan, PlanStatus, Planner, PlannerConfig, RobotSnapshot, WorldView,
};
use crate::scenario::Scenario;
use crate::Result;
use serde::{Deserialize, Serialize};

/// Control tick length in seconds (100 Hz).
pub const CONTROL_DT: f64 = 0.01;

/// Arrival thresholds: within half a meter, slower than half a meter per
/// second, latched once both hold.
pub const ARRIVAL_DIST: f64 = 0.5;
pub const ARRIVAL_SPEED: f64 = 0.5;

/// Jitter amplitude (m) applied to starts/goals for trials > 0.
pub const TRIAL_JITTER: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct RobotState {
    pub id: usize,
    pub p: Vec2,
    pub v: Vec2,
    /// Acceleration applied over the last tick.
    pub u: Vec2,
    pub goal: Vec2,
    pub at_goal: bool,
    pub collided: bool,
}

/// Clamp a commanded acceleration to the box bounds, then shrink it so
/// the velocity stays inside its own box after one tick.
pub fn clamp_control(v: Vec2, u_cmd: Vec2, dt: f64, cfg: &PlannerConfig) -> Vec2 {
    let mut u = Vec2::new(
        u_cmd.x.clamp(cfg.a_min.x, cfg.a_max.x),
        u_cmd.y.clamp(cfg.a_min.y, cfg.a_max.y),
    );
    for a in 0..2 {
        let next = v.coord(a) + u.coord(a) * dt;
        let clamped = next.clamp(cfg.v_min.coord(a), cfg.v_max.coord(a));
        if clamped != next {
            let fixed = (clamped - v.coord(a)) / dt;
            if a == 0 {
                u.x = fixed;
            } else {
                u.y = fixed;
            }
        }
    }
    u
}

/// Exact double-integrator tick under piecewise-constant acceleration:
/// `p' = p + v dt + u dt^2 / 2`, `v' = v + u dt`.
pub fn step(state: &mut RobotState, u: Vec2, dt: f64) {
    state.p += state.v.scale(dt) + u.scale(0.5 * dt * dt);
    state.v += u.scale(dt);
    state.u = u;
}

/// Static header of a log; everything needed to recompute metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogMeta {
    pub scenario: String,
    pub variant: String,
    pub trial: usize,
    pub robots: usize,
    pub control_dt: f64,
    pub duration: f64,
    pub d_min: f64,
    pub r_conn: f64,
    pub epsilon: f64,
    pub goals: Vec<[f64; 2]>,
    /// `(center_x, center_y, d_min)` per obstacle.
    pub obstacles: Vec<[f64; 3]>,
}

/// One robot-tick record.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub robot_id: usize,
    pub px: f64,
    pub py: f64,
    pub vx: f64,
    pub vy: f64,
    pub ux: f64,
    pub uy: f64,
    /// Team algebraic connectivity at this tick (same for all robots).
    pub lambda2: f64,
    /// BFS-connected flag at this tick.
    pub connected: bool,
    /// Min safety barrier value over all hazards for this robot.
    pub min_h_safe: f64,
    /// Largest connectivity slack in the robot's current plan.
    pub slack_conn: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimLog {
    pub meta: LogMeta,
    pub rows: Vec<LogRow>,
    pub events: Vec<String>,
}

/// Makespan: seconds, or a marker when some robot never arrived.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Makespan {
    At(f64),
    DidNotFinish,
}

impl Makespan {
    pub fn seconds(&self) -> Option<f64> {
        match self {
            Makespan::At(t) => Some(*t),
            Makespan::DidNotFinish => None,
        }
    }
}

impl Serialize for Makespan {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Makespan::At(t) => s.serialize_f64(*t),
            Makespan::DidNotFinish => s.serialize_str("did-not-finish"),
        }
    }
}

impl<'de> Deserialize<'de> for Makespan {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(t) => Ok(Makespan::At(t)),
            Raw::Text(s) if s == "did-not-finish" => Ok(Makespan::DidNotFinish),
            Raw::Text(s) => Err(serde::de::Error::custom(format!("bad makespan '{s}'"))),
        }
    }
}

/// The run's summary metrics. Null-able minima stay `None` when undefined
/// (single robot, no obstacles).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Fraction of robots that reached their goal without a collision.
    pub success_rate: f64,
    pub makespan: Makespan,
    /// Fraction of ticks with a BFS-connected proximity graph.
    pub percentage_connected: f64,
    pub min_inter_robot_distance: Option<f64>,
    /// Min over ticks of (hazard center distance - hazard clearance).
    pub min_obstacle_clearance: Option<f64>,
    #[serde(skip)]
    pub lambda2_series: Vec<f64>,
}

/// Recompute all metrics from a log. This is the only metrics path; the
/// simulator itself calls it on the log it just produced.
pub fn compute_metrics(log: &SimLog) -> MetricsReport {
    let n = log.meta.robots;
    let d_min = log.meta.d_min;
    let ticks = if n == 0 { 0 } else { log.rows.len() / n };
    let goals: Vec<Vec2> = log.meta.goals.iter().map(|g| Vec2::new(g[0], g[1])).collect();
    let mut at_goal = vec![false; n];
    let mut collided = vec![false; n];
    let mut makespan = Makespan::DidNotFinish;
    let mut connected_ticks = 0usize;
    let mut min_pair: Option<f64> = None;
    let mut min_clear: Option<f64> = None;
    let mut lambda2_series = Vec::with_capacity(ticks);
    for tick in 0..ticks {
        let rows = &log.rows[tick * n..(tick + 1) * n];
        let t = rows[0].t;
        lambda2_series.push(rows[0].lambda2);
        if rows[0].connected {
            connected_ticks += 1;
        }
        for i in 0..n {
            let pi = Vec2::new(rows[i].px, rows[i].py);
            for j in (i + 1)..n {
                let pj = Vec2::new(rows[j].px, rows[j].py);
                let d = (pi - pj).norm();
                if min_pair.map_or(true, |m| d < m) {
                    min_pair = Some(d);
                }
                if d < d_min {
                    collided[i] = true;
                    collided[j] = true;
                }
            }
            for o in &log.meta.obstacles {
                let d = (pi - Vec2::new(o[0], o[1])).norm();
                let clear = d - o[2];
                if min_clear.map_or(true, |m| clear < m) {
                    min_clear = Some(clear);
                }
                if d < o[2] {
                    collided[i] = true;
                }
            }
            if !at_goal[i] {
                let v = Vec2::new(rows[i].vx, rows[i].vy);
                if (pi - goals[i]).norm() <= ARRIVAL_DIST && v.norm() <= ARRIVAL_SPEED {
                    at_goal[i] = true;
                }
            }
        }
        if makespan == Makespan::DidNotFinish && at_goal.iter().all(|&g| g) {
            makespan = Makespan::At(t);
        }
    }
    let successes = (0..n).filter(|&i| at_goal[i] && !collided[i]).count();
    MetricsReport {
        success_rate: if n == 0 { 0.0 } else { successes as f64 / n as f64 },
        makespan,
        percentage_connected: if ticks == 0 { 0.0 } else { connected_ticks as f64 / ticks as f64 },
        min_inter_robot_distance: min_pair,
        min_obstacle_clearance: min_clear,
        lambda2_series,
    }
}

fn min_h_safe(i: usize, positions: &[Vec2], obstacles: &[PointHazard], d_min: f64) -> f64 {
    let mut h = f64::INFINITY;
    for (j, pj) in positions.iter().enumerate() {
        if j != i {
            h = h.min((positions[i] - *pj).norm_sq() - d_min * d_min);
        }
    }
    for o in obstacles {
        h = h.min((positions[i] - o.center).norm_sq() - o.d_min * o.d_min);
    }
    h
}

/// Run a scenario under the planner configuration it implies.
pub fn run_scenario(
    scn: &Scenario,
    variant: ControllerVariant,
    trial: usize,
    seed: u64,
) -> Result<(SimLog, MetricsReport)> {
    let jittered = scn.jittered(seed, trial, TRIAL_JITTER);
    run_with_config(&jittered, variant, jittered.planner_config(variant), trial)
}

/// Run with an explicit planner configuration (tests override weights or
/// horizons through this entry point).
pub fn run_with_config(
    scn: &Scenario,
    variant: ControllerVariant,
    config: PlannerConfig,
    trial: usize,
) -> Result<(SimLog, MetricsReport)> {
    scn.validate()?;
    config.validate()?;
    let n = scn.robots.len();
    let dt = CONTROL_DT;
    let obstacles = scn.hazards();
    let goals = scn.goals();
    let mut planners: Vec<Planner> = (0..n)
        .map(|_| Planner::new(config.clone()))
        .collect::<Result<_>>()?;
    let mut plans: Vec<Option<Plan>> = (0..n).map(|_| None).collect();
    let mut states: Vec<RobotState> = (0..n)
        .map(|i| RobotState {
            id: i,
            p: scn.starts()[i],
            v: scn.velocities()[i],
            u: Vec2::ZERO,
            goal: goals[i],
            at_goal: false,
            collided: false,
        })
        .collect();
    let n_ticks = (scn.duration / dt).round().max(1.0) as u64;
    let ticks_per_replan = (config.replan_period / dt).round().max(1.0) as u64;
    let mut rows = Vec::with_capacity((n_ticks as usize) * n);
    let mut events = Vec::new();
    let varsigma = config.effective_varsigma();

    for tick in 0..n_ticks {
        let t = tick as f64 * dt;
        let positions: Vec<Vec2> = states.iter().map(|s| s.p).collect();
        let is_mpc = variant != ControllerVariant::ClfCbfReactive;

        if is_mpc && tick % ticks_per_replan == 0 {
            // Snapshot phase: states plus the currently published plans.
            let snapshots: Vec<RobotSnapshot> = states
                .iter()
                .enumerate()
                .map(|(i, s)| RobotSnapshot {
                    p: s.p,
                    v: s.v,
                    u: plans[i].as_ref().map_or(Vec2::ZERO, |pl| pl.sample(t, 2)),
                })
                .collect();
            // Shared prediction grids from published plans (constant
            // velocity before the first round).
            let times: Vec<f64> = planners[0].sample_times().to_vec();
            let grids: Vec<(Vec<Vec2>, Vec<Vec2>, Vec<Vec2>)> = (0..n)
                .map(|j| match &plans[j] {
                    Some(pl) => (
                        times.iter().map(|&s| pl.sample(t + s, 0)).collect(),
                        times.iter().map(|&s| pl.sample(t + s, 1)).collect(),
                        times.iter().map(|&s| pl.sample(t + s, 2)).collect(),
                    ),
                    None => (
                        times.iter().map(|&s| states[j].p + states[j].v.scale(s)).collect(),
                        vec![states[j].v; times.len()],
                        vec![Vec2::ZERO; times.len()],
                    ),
                })
                .collect();
            let mut staged: Vec<Option<Plan>> = (0..n).map(|_| None).collect();
            for i in 0..n {
                let neighbors: Vec<NeighborPlan> = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| NeighborPlan {
                        id: j,
                        pos: grids[j].0.clone(),
                        vel: grids[j].1.clone(),
                        acc: grids[j].2.clone(),
                    })
                    .collect();
                let world = WorldView {
                    goal: goals[i],
                    neighbors: &neighbors,
                    obstacles: &obstacles,
                    team_positions: &positions,
                    self_index: i,
                };
                let planner = &mut planners[i];
                let prev = plans[i].as_ref();
                let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
                    planner.plan(&snapshots[i], &world, t, prev)
                }));
                let plan = match outcome {
                    Ok(Ok(plan)) => plan,
                    Ok(Err(e)) => return Err(e),
                    Err(payload) => {
                        let msg = payload
                            .downcast_ref::<&str>()
                            .map(|s| s.to_string())
                            .or_else(|| payload.downcast_ref::<String>().cloned())
                            .unwrap_or_else(|| "unknown panic".into());
                        events.push(format!("t={t:.2}: robot {i} planner panic ({msg}); braking"));
                        planners[i].braking_plan(&snapshots[i], t)
                    }
                };
                if plan.status == PlanStatus::Fallback {
                    events.push(format!("t={t:.2}: robot {i} infeasible_fallback"));
                }
                staged[i] = Some(plan);
            }
            // Publish barrier.
            plans = staged;
        }

        // Control phase.
        let commands: Vec<Vec2> = if is_mpc {
            (0..n)
                .map(|i| plans[i].as_ref().map_or(Vec2::ZERO, |pl| pl.sample(t, 2)))
                .collect()
        } else {
            let snapshot: Vec<(Vec2, Vec2, Vec2)> =
                states.iter().map(|s| (s.p, s.v, s.u)).collect();
            let mut us = Vec::with_capacity(n);
            for i in 0..n {
                let neighbors: Vec<NeighborPlan> = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| NeighborPlan {
                        id: j,
                        pos: vec![snapshot[j].0],
                        vel: vec![snapshot[j].1],
                        acc: vec![snapshot[j].2],
                    })
                    .collect();
                let world = WorldView {
                    goal: goals[i],
                    neighbors: &neighbors,
                    obstacles: &obstacles,
                    team_positions: &positions,
                    self_index: i,
                };
                let snap = RobotSnapshot { p: snapshot[i].0, v: snapshot[i].1, u: snapshot[i].2 };
                let planner = &mut planners[i];
                let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
                    planner.reactive_step(&snap, &world)
                }));
                let u = match outcome {
                    Ok(Ok(cmd)) => cmd.u,
                    Ok(Err(e)) => return Err(e),
                    Err(_) => {
                        events.push(format!("t={t:.2}: robot {i} reactive panic; zero control"));
                        Vec2::ZERO
                    }
                };
                us.push(u);
            }
            us
        };

        // Record phase: state at t, the control applied over [t, t+dt).
        let graph = if n > 1 {
            Some(build_graph(&positions, scn.params.r_conn, varsigma)?)
        } else {
            None
        };
        let lambda2 = graph.as_ref().map_or(f64::INFINITY, |g| g.lambda2);
        let connected = is_bfs_connected(&positions, scn.params.r_conn);
        for i in 0..n {
            let applied = clamp_control(states[i].v, commands[i], dt, &config);
            let slack = plans[i]
                .as_ref()
                .map_or(0.0, |pl| pl.slack.iter().fold(0.0f64, |m, &s| m.max(s)));
            rows.push(LogRow {
                t,
                robot_id: i,
                px: states[i].p.x,
                py: states[i].p.y,
                vx: states[i].v.x,
                vy: states[i].v.y,
                ux: applied.x,
                uy: applied.y,
                lambda2,
                connected,
                min_h_safe: min_h_safe(i, &positions, &obstacles, scn.params.d_min),
                slack_conn: slack,
            });
            step(&mut states[i], applied, dt);
        }
    }

    let meta = LogMeta {
        scenario: scn.name.clone(),
        variant: variant.name().to_string(),
        trial,
        robots: n,
        control_dt: dt,
        duration: scn.duration,
        d_min: scn.params.d_min,
        r_conn: scn.params.r_conn,
        epsilon: scn.params.epsilon,
        goals: scn.robots.iter().map(|r| r.goal).collect(),
        obstacles: obstacles.iter().map(|o| [o.center.x, o.center.y, o.d_min]).collect(),
    };
    let log = SimLog { meta, rows, events };
    let metrics = compute_metrics(&log);
    Ok((log, metrics))
}

/// Mean plus symmetric 95% confidence half-width (normal approximation;
/// zero width for a single sample).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanCi {
    pub mean: f64,
    pub ci95: f64,
    pub n: usize,
}

pub fn mean_ci(values: &[f64]) -> Option<MeanCi> {
    if values.is_empty() {
        return None;
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let ci95 = if n < 2 {
        0.0
    } else {
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
        1.96 * (var / n as f64).sqrt()
    };
    Some(MeanCi { mean, ci95, n })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub success_rate: MeanCi,
    pub percentage_connected: MeanCi,
    /// Over trials whose makespan is defined; absent if none finished.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub makespan: Option<MeanCi>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchEntry {
    pub scenario: String,
    pub variant: String,
    pub trials: Vec<MetricsReport>,
    pub aggregate: Aggregate,
}

/// Run every (scenario, variant) cell for `trials` seeded trials each and
/// aggregate. Trial 0 uses the exact scenario; later trials jitter starts
/// and goals deterministically from the seed.
pub fn batch_run(
    scenarios: &[Scenario],
    variants: &[ControllerVariant],
    trials: usize,
    seed: u64,
) -> Result<Vec<BatchEntry>> {
    let mut out = Vec::with_capacity(scenarios.len() * variants.len());
    for scn in scenarios {
        for &variant in variants {
            let mut reports = Vec::with_capacity(trials);
            for trial in 0..trials.max(1) {
                let (_, metrics) = run_scenario(scn, variant, trial, seed)?;
                reports.push(metrics);
            }
            let success: Vec<f64> = reports.iter().map(|r| r.success_rate).collect();
            let conn: Vec<f64> = reports.iter().map(|r| r.percentage_connected).collect();
            let spans: Vec<f64> =
                reports.iter().filter_map(|r| r.makespan.seconds()).collect();
            out.push(BatchEntry {
                scenario: scn.name.clone(),
                variant: variant.name().to_string(),
                aggregate: Aggregate {
                    success_rate: mean_ci(&success).expect("at least one trial"),
                    percentage_connected: mean_ci(&conn).expect("at least one trial"),
                    makespan: mean_ci(&spans),
                },
                trials: reports,
            });
        }
    }
    Ok(out)
}
