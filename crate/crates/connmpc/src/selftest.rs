//! Built-in invariant suites behind `connmpc selftest`.
//!
//! Each suite re-checks a core mathematical property at runtime with a
//! seeded RNG, independent of the test harness, so a packaged binary can
//! vouch for itself on the machine it runs on.

use crate::bezier::{bernstein, effort_gram, BezierPiece};
use crate::connectivity::{build_graph, default_varsigma, is_bfs_connected};
use crate::linalg::{Mat, Vec2};
use crate::planner::{ControllerVariant, Planner, PlannerConfig, RobotSnapshot, WorldView};
use crate::qp::{validate_kkt, QpProblem, QpSettings, QpSolver};
use crate::scenario::Scenario;
use crate::sim;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::Write;

type SuiteResult = std::result::Result<String, String>;

/// Run every suite, print one line each, and return the process exit code
/// (0 when all pass, 2 otherwise).
pub fn run_all(w: &mut impl Write) -> i32 {
    let suites: [(&str, fn() -> SuiteResult); 6] = [
        ("bezier", suite_bezier),
        ("connectivity", suite_connectivity),
        ("qp", suite_qp),
        ("constraints", suite_constraints),
        ("planner", suite_planner),
        ("simulator", suite_simulator),
    ];
    let mut failures = 0;
    for (name, suite) in suites {
        match suite() {
            Ok(detail) => {
                let _ = writeln!(w, "selftest {name}: pass ({detail})");
            }
            Err(msg) => {
                failures += 1;
                let _ = writeln!(w, "selftest {name}: FAIL ({msg})");
            }
        }
    }
    if failures == 0 {
        let _ = writeln!(w, "selftest: all suites passed");
        0
    } else {
        let _ = writeln!(w, "selftest: {failures} suite(s) failed");
        2
    }
}

fn suite_bezier() -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    // Partition of unity across degrees and parameters.
    for n in 1..=5 {
        for _ in 0..20 {
            let s: f64 = rng.gen();
            let sum: f64 = (0..=n)
                .map(|j| bernstein(j, n, s).expect("valid args"))
                .sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(format!("partition of unity off by {}", (sum - 1.0).abs()));
            }
        }
    }
    // Convex hull + finite-difference derivative on random cubics.
    for _ in 0..20 {
        let pts: Vec<Vec2> = (0..4)
            .map(|_| Vec2::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)))
            .collect();
        let (lo_x, hi_x) = pts.iter().fold((f64::MAX, f64::MIN), |(lo, hi), p| {
            (lo.min(p.x), hi.max(p.x))
        });
        let piece = BezierPiece::new(pts, 0.7).expect("cubic piece");
        for k in 0..=20 {
            let t = 0.7 * k as f64 / 20.0;
            let p = piece.eval_derivative(t, 0);
            if p.x < lo_x - 1e-9 || p.x > hi_x + 1e-9 {
                return Err(format!("hull violation at t={t}"));
            }
            let dt = 1e-6;
            if t > 2.0 * dt && t < 0.7 - 2.0 * dt {
                let v = piece.eval_derivative(t, 1);
                let fd = (piece.eval_derivative(t + dt, 0) - piece.eval_derivative(t - dt, 0))
                    .scale(0.5 / dt);
                if (v - fd).norm() > 1e-5 {
                    return Err(format!("derivative mismatch {}", (v - fd).norm()));
                }
            }
        }
    }
    // Gram energy vs dense quadrature on one random piece.
    let pts: Vec<Vec2> = (0..4)
        .map(|_| Vec2::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)))
        .collect();
    let tau = 0.5;
    let piece = BezierPiece::new(pts.clone(), tau).expect("cubic piece");
    let gram = effort_gram(3, 2, tau);
    let quad: f64 = (0..20_000)
        .map(|k| {
            let t = tau * (k as f64 + 0.5) / 20_000.0;
            piece.eval_derivative(t, 2).norm_sq() * tau / 20_000.0
        })
        .sum();
    let mut analytic = 0.0;
    for a in 0..4 {
        for b in 0..4 {
            analytic += gram.get(a, b) * (pts[a].x * pts[b].x + pts[a].y * pts[b].y);
        }
    }
    if (quad - analytic).abs() > 1e-4 * (1.0 + analytic.abs()) {
        return Err(format!("gram {analytic} vs quadrature {quad}"));
    }
    Ok("unity, hull, derivative, gram".into())
}

fn suite_connectivity() -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let r = 10.0;
    let varsigma = default_varsigma(r);
    let mut grad_checked = 0;
    let mut agree_checked = 0;
    for trial in 0..200 {
        let n = 3 + (trial % 6);
        let positions: Vec<Vec2> = (0..n)
            .map(|_| Vec2::new(rng.gen_range(-8.0..8.0), rng.gen_range(-8.0..8.0)))
            .collect();
        // Skip near-threshold pairs so BFS and the spectral test cannot
        // disagree from roundoff at |d - r| ~ 0.
        if positions.iter().enumerate().any(|(i, a)| {
            positions[..i]
                .iter()
                .any(|b| ((*a - *b).norm() - r).abs() < 0.01 * r)
        }) {
            continue;
        }
        let graph = build_graph(&positions, r, varsigma).map_err(|e| e.to_string())?;
        let bfs = is_bfs_connected(&positions, r);
        if (graph.lambda2 > 1e-9) != bfs {
            return Err(format!("spectral/BFS disagreement on trial {trial}"));
        }
        agree_checked += 1;
        if !bfs || graph.eigen_gap < 1e-6 || grad_checked >= 40 {
            continue;
        }
        grad_checked += 1;
        let i = trial % n;
        let eps = 1e-6;
        for axis in 0..2 {
            let mut plus = positions.clone();
            let mut minus = positions.clone();
            if axis == 0 {
                plus[i].x += eps;
                minus[i].x -= eps;
            } else {
                plus[i].y += eps;
                minus[i].y -= eps;
            }
            let lp = build_graph(&plus, r, varsigma).map_err(|e| e.to_string())?.lambda2;
            let lm = build_graph(&minus, r, varsigma).map_err(|e| e.to_string())?.lambda2;
            let fd = (lp - lm) / (2.0 * eps);
            let an = graph.lambda2_gradient[i].coord(axis);
            if (fd - an).abs() > 1e-4 * (1.0 + an.abs()) {
                return Err(format!("gradient off: fd {fd} vs {an}"));
            }
        }
    }
    Ok(format!("{agree_checked} configs, {grad_checked} gradients"))
}

fn suite_qp() -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(37);
    let mut solver = QpSolver::new(QpSettings::default());
    for trial in 0..25 {
        let n = 2 + (trial % 4);
        let m = n + 2;
        // P = B^T B + I keeps the Hessian strictly convex.
        let b: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut p = Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let mut acc = if i == j { 1.0 } else { 0.0 };
                for k in 0..n {
                    acc += b[k * n + i] * b[k * n + j];
                }
                p.set(i, j, acc);
            }
        }
        let q: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mut a = Mat::zeros(m, n);
        let mut l = vec![0.0; m];
        let mut u = vec![0.0; m];
        for row in 0..m {
            for col in 0..n {
                a.set(row, col, rng.gen_range(-1.0..1.0));
            }
            let c = rng.gen_range(-1.0..1.0);
            l[row] = c - rng.gen_range(0.5..2.0);
            u[row] = c + rng.gen_range(0.5..2.0);
        }
        let prob = QpProblem { p, q, a, l, u };
        let sol = solver.solve(&prob, None).map_err(|e| e.to_string())?;
        let kkt = validate_kkt(&prob, &sol.z, &sol.y);
        if kkt.max_residual() > 1e-5 {
            return Err(format!("KKT residual {} on trial {trial}", kkt.max_residual()));
        }
    }
    Ok("25 random QPs satisfy KKT".into())
}

fn suite_constraints() -> SuiteResult {
    use crate::constraints::{safety_rows, GainSet, PointHazard, SelfSamples};
    use crate::linalg::SparseRow;
    // Worked single-sample check: p=(1,0), v=(1,0), hazard at the origin
    // with clearance 1, gains (1,2): h=0, hdot=2, drift=2|v|^2=2, control
    // coefficient 2(p-o)=(2,0), rhs = -(drift + 3*hdot + 2*h) = -8.
    let acc_x = [SparseRow::from_entries(vec![(0, 1.0)])];
    let acc_y = [SparseRow::from_entries(vec![(1, 1.0)])];
    let frozen_vel = [Vec2::new(1.0, 0.0)];
    let gains = GainSet { k1_safe: 1.0, k2_safe: 2.0, ..GainSet::default() };
    let hazards = [PointHazard { center: Vec2::new(0.0, 0.0), d_min: 1.0 }];
    let self_s = SelfSamples {
        pos: &[Vec2::new(1.0, 0.0)],
        vel: &frozen_vel,
        acc_x: &acc_x,
        acc_y: &acc_y,
        pos_x: &[],
        pos_y: &[],
    };
    let (rows, issues) =
        safety_rows(&self_s, &[], &hazards, 2.0, &gains, 0.0).map_err(|e| e.to_string())?;
    if !issues.is_empty() {
        return Err(format!("unexpected issue: {}", issues[0]));
    }
    if rows.len() != 1 {
        return Err(format!("expected 1 row, got {}", rows.len()));
    }
    let row = &rows[0];
    let cx = row.coeffs.dot(&[1.0, 0.0]);
    if (cx - 2.0).abs() > 1e-12 || (row.rhs - (-8.0)).abs() > 1e-12 {
        return Err(format!("row coeff {cx}, rhs {}", row.rhs));
    }
    // Translation invariance: shifting scene and hazard together leaves
    // the row untouched.
    let shifted_pos = [Vec2::new(101.0, -50.0)];
    let shifted_hazards = [PointHazard { center: Vec2::new(100.0, -50.0), d_min: 1.0 }];
    let shifted = SelfSamples {
        pos: &shifted_pos,
        vel: &frozen_vel,
        acc_x: &acc_x,
        acc_y: &acc_y,
        pos_x: &[],
        pos_y: &[],
    };
    let (rows2, _) = safety_rows(&shifted, &[], &shifted_hazards, 2.0, &gains, 0.0)
        .map_err(|e| e.to_string())?;
    if (rows2[0].rhs - row.rhs).abs() > 1e-9 {
        return Err("translation changed the row".into());
    }
    Ok("worked example + translation invariance".into())
}

fn suite_planner() -> SuiteResult {
    let config = PlannerConfig::default();
    let mut planner = Planner::new(config).map_err(|e| e.to_string())?;
    let goal = Vec2::new(2.0, -1.0);
    let snap = RobotSnapshot { p: goal, v: Vec2::ZERO, u: Vec2::ZERO };
    let world = WorldView {
        goal,
        neighbors: &[],
        obstacles: &[],
        team_positions: std::slice::from_ref(&goal),
        self_index: 0,
    };
    let plan = planner.plan(&snap, &world, 0.0, None).map_err(|e| e.to_string())?;
    for k in 0..=10 {
        let t = 1.5 * k as f64 / 10.0;
        if (plan.sample(t, 0) - goal).norm() > 1e-5 {
            return Err(format!("goal is not a fixed point at t={t}"));
        }
    }
    // Initial-state rows: position and velocity at t0 match (acceleration
    // is the control input and is chosen fresh each replan).
    let snap2 = RobotSnapshot {
        p: Vec2::new(0.0, 0.0),
        v: Vec2::new(1.0, -0.5),
        u: Vec2::new(0.5, 0.25),
    };
    let world2 = WorldView {
        goal: Vec2::new(5.0, 5.0),
        neighbors: &[],
        obstacles: &[],
        team_positions: &[Vec2::new(0.0, 0.0)],
        self_index: 0,
    };
    let plan2 = planner.plan(&snap2, &world2, 0.0, None).map_err(|e| e.to_string())?;
    if (plan2.sample(0.0, 0) - snap2.p).norm() > 1e-5
        || (plan2.sample(0.0, 1) - snap2.v).norm() > 1e-5
    {
        return Err("initial-state rows violated".into());
    }
    Ok("fixed point + initial rows".into())
}

fn suite_simulator() -> SuiteResult {
    // Exact integrator closed form.
    let mut s = sim::RobotState {
        id: 0,
        p: Vec2::ZERO,
        v: Vec2::ZERO,
        u: Vec2::ZERO,
        goal: Vec2::ZERO,
        at_goal: false,
        collided: false,
    };
    sim::step(&mut s, Vec2::new(1.0, 0.0), 0.01);
    if (s.p.x - 5e-5).abs() > 0.0 || s.p.y != 0.0 {
        return Err(format!("integrator drift: {:?}", s.p));
    }
    // Short deterministic run.
    let scn = Scenario::from_toml_str(
        r#"
name = "selftest"
duration = 1.0

[workspace]
min = [-200.0, -200.0]
max = [200.0, 200.0]

[params]
r_conn = 40.0
epsilon = 0.1
d_min = 2.0
v_min = [-15.0, -15.0]
v_max = [15.0, 15.0]
a_min = [-20.0, -20.0]
a_max = [20.0, 20.0]

[[robots]]
start = [0.0, 0.0]
goal = [2.0, 0.0]

[[robots]]
start = [5.0, 0.0]
goal = [3.0, 1.0]
"#,
    )
    .map_err(|e| e.to_string())?;
    let (log_a, _) = sim::run_scenario(&scn, ControllerVariant::MpcClfCbf, 0, 0)
        .map_err(|e| e.to_string())?;
    let (log_b, _) = sim::run_scenario(&scn, ControllerVariant::MpcClfCbf, 0, 0)
        .map_err(|e| e.to_string())?;
    for (a, b) in log_a.rows.iter().zip(log_b.rows.iter()) {
        if a.px.to_bits() != b.px.to_bits() || a.uy.to_bits() != b.uy.to_bits() {
            return Err("repeated run diverged".into());
        }
    }
    Ok("exact step + deterministic rerun".into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_suites_pass() {
        let mut out = Vec::new();
        let code = run_all(&mut out);
        let text = String::from_utf8(out).unwrap();
        assert_eq!(code, 0, "selftest output:\n{text}");
        assert_eq!(text.lines().filter(|l| l.contains(": pass")).count(), 6);
    }
}
