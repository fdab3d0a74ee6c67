// temp probe: first recovery replan, robot 0
use connmpc::constraints::NeighborPlan;
use connmpc::linalg::Vec2;
use connmpc::planner::*;
use connmpc::scenario::Scenario;
use std::time::Instant;

fn main() {
    let scn = Scenario::load("crates/connmpc/scenarios/recovery_10.scn").unwrap();
    let config = scn.planner_config(ControllerVariant::MpcClfCbf);
    let n = scn.robots.len();
    let starts = scn.starts();
    let goals = scn.goals();
    let obstacles = scn.hazards();
    let mut planner = Planner::new(config.clone()).unwrap();
    let times: Vec<f64> = planner.sample_times().to_vec();
    for i in [0usize, 2] {
        let neighbors: Vec<NeighborPlan> = (0..n)
            .filter(|&j| j != i)
            .map(|j| NeighborPlan {
                id: j,
                pos: vec![starts[j]; times.len()],
                vel: vec![Vec2::ZERO; times.len()],
                acc: vec![Vec2::ZERO; times.len()],
            })
            .collect();
        let world = WorldView {
            goal: goals[i],
            neighbors: &neighbors,
            obstacles: &obstacles,
            team_positions: &starts,
            self_index: i,
        };
        let state = RobotSnapshot { p: starts[i], v: Vec2::ZERO, u: Vec2::ZERO };
        let selection = planner.select_mode(&world).unwrap();
        let (iterate, _) = planner.initial_iterate(&state, world.goal, 0.0, None, selection.mode, world.obstacles);
        let asm = planner.assemble_qp(&state, &world, &iterate, &selection).unwrap();
        println!(
            "robot {i}: mode {:?} lambda2 {:.3} targets {:?} rows {} n {}",
            selection.mode,
            selection.lambda2,
            selection.targets,
            asm.rows.len(),
            asm.problem.n()
        );
        let t0 = Instant::now();
        let plan = planner.plan(&state, &world, 0.0, None).unwrap();
        println!(
            "  plan: {:?} qp_iters {:?} issues {:?} elapsed {:?}",
            plan.status,
            plan.diagnostics.qp_iterations,
            plan.diagnostics.issues,
            t0.elapsed()
        );
        let end = plan.spline.eval(1.5, 0);
        println!("  end of horizon ({:.2},{:.2}) from ({:.2},{:.2})", end.x, end.y, starts[i].x, starts[i].y);
    }
}
