//! Scenario files (`.scn`): a small TOML schema describing a workspace,
//! a robot team with starts and goals, point obstacles, and the shared
//! physical parameters. Unknown keys are rejected so typos fail loudly.

use crate::constraints::PointHazard;
use crate::linalg::Vec2;
use crate::planner::{ControllerVariant, PlannerConfig};
use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Workspace {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Workspace {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        (0..2).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioParams {
    /// Connectivity range R in meters.
    pub r_conn: f64,
    /// Algebraic-connectivity threshold.
    pub epsilon: f64,
    /// Optional edge-weight sharpness; defaults to the canonical value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub varsigma: Option<f64>,
    /// Minimum safety distance (robot-robot, and robot-obstacle default).
    pub d_min: f64,
    pub v_min: [f64; 2],
    pub v_max: [f64; 2],
    pub a_min: [f64; 2],
    pub a_max: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotSpec {
    pub start: [f64; 2],
    #[serde(default)]
    pub velocity: [f64; 2],
    pub goal: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleSpec {
    pub center: [f64; 2],
    /// Per-obstacle clearance override (e.g. folding in a radius);
    /// defaults to `params.d_min`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_min: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    /// Simulated duration in seconds.
    pub duration: f64,
    pub workspace: Workspace,
    pub params: ScenarioParams,
    pub robots: Vec<RobotSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub obstacles: Vec<ObstacleSpec>,
}

fn vec2(a: [f64; 2]) -> Vec2 {
    Vec2::new(a[0], a[1])
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let scn: Scenario =
            toml::from_str(text).map_err(|e| Error::Parse(format!("scenario: {e}")))?;
        scn.validate()?;
        Ok(scn)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Scenario(format!("cannot read {}: {e}", path.display()))
        })?;
        Self::from_toml_str(&text)
    }

    /// Serialize back to TOML; `from_toml_str(emit(s)) == s`.
    pub fn emit(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, rule: &str| {
            Err(Error::Scenario(format!("{field}: {rule}")))
        };
        if self.name.is_empty() {
            return fail("name", "must be nonempty");
        }
        if !(self.duration > 0.0) {
            return fail("duration", "must be positive");
        }
        for a in 0..2 {
            if !(self.workspace.min[a] < self.workspace.max[a]) {
                return fail("workspace", "min must be below max on each axis");
            }
        }
        let p = &self.params;
        for (name, v) in [("params.r_conn", p.r_conn), ("params.epsilon", p.epsilon), ("params.d_min", p.d_min)] {
            if !(v > 0.0) {
                return Err(Error::Scenario(format!("{name}: must be positive, got {v}")));
            }
        }
        if let Some(vs) = p.varsigma {
            if !(vs > 0.0) {
                return fail("params.varsigma", "must be positive when given");
            }
        }
        for a in 0..2 {
            if !(p.v_min[a] < p.v_max[a]) {
                return fail("params.v_min/v_max", "must satisfy min < max per axis");
            }
            if !(p.a_min[a] < p.a_max[a]) {
                return fail("params.a_min/a_max", "must satisfy min < max per axis");
            }
        }
        if self.robots.is_empty() {
            return fail("robots", "at least one robot required");
        }
        for (i, r) in self.robots.iter().enumerate() {
            if !self.workspace.contains(r.start) {
                return Err(Error::Scenario(format!(
                    "robots[{i}].start: outside workspace bounds"
                )));
            }
            if !self.workspace.contains(r.goal) {
                return Err(Error::Scenario(format!(
                    "robots[{i}].goal: outside workspace bounds"
                )));
            }
            for v in r.start.iter().chain(r.velocity.iter()).chain(r.goal.iter()) {
                if !v.is_finite() {
                    return Err(Error::Scenario(format!("robots[{i}]: non-finite value")));
                }
            }
        }
        for i in 0..self.robots.len() {
            for j in (i + 1)..self.robots.len() {
                let d = (vec2(self.robots[i].start) - vec2(self.robots[j].start)).norm();
                if d < p.d_min {
                    return Err(Error::Scenario(format!(
                        "robots[{j}].start: closer than d_min = {} to robots[{i}].start (distance {d:.3})",
                        p.d_min
                    )));
                }
            }
        }
        for (i, o) in self.obstacles.iter().enumerate() {
            if let Some(d) = o.d_min {
                if !(d > 0.0) {
                    return Err(Error::Scenario(format!(
                        "obstacles[{i}].d_min: must be positive, got {d}"
                    )));
                }
            }
            if !o.center.iter().all(|v| v.is_finite()) {
                return Err(Error::Scenario(format!("obstacles[{i}].center: non-finite value")));
            }
        }
        Ok(())
    }

    pub fn starts(&self) -> Vec<Vec2> {
        self.robots.iter().map(|r| vec2(r.start)).collect()
    }

    pub fn velocities(&self) -> Vec<Vec2> {
        self.robots.iter().map(|r| vec2(r.velocity)).collect()
    }

    pub fn goals(&self) -> Vec<Vec2> {
        self.robots.iter().map(|r| vec2(r.goal)).collect()
    }

    /// Obstacles as point hazards with overrides folded in.
    pub fn hazards(&self) -> Vec<PointHazard> {
        self.obstacles
            .iter()
            .map(|o| PointHazard {
                center: vec2(o.center),
                d_min: o.d_min.unwrap_or(self.params.d_min),
            })
            .collect()
    }

    /// Planner configuration implied by this scenario's parameters.
    pub fn planner_config(&self, variant: ControllerVariant) -> PlannerConfig {
        let p = &self.params;
        PlannerConfig {
            v_min: vec2(p.v_min),
            v_max: vec2(p.v_max),
            a_min: vec2(p.a_min),
            a_max: vec2(p.a_max),
            d_min: p.d_min,
            r_conn: p.r_conn,
            varsigma: p.varsigma,
            epsilon: p.epsilon,
            variant,
            ..PlannerConfig::default()
        }
    }

    /// Deterministic per-trial variation: starts and goals jittered by up
    /// to `magnitude` meters per axis. Trial 0 is always the exact
    /// scenario. Draws are retried until the jittered scenario still
    /// validates (spacing and workspace rules), falling back to the exact
    /// scenario if no valid draw is found.
    pub fn jittered(&self, seed: u64, trial: usize, magnitude: f64) -> Scenario {
        if trial == 0 {
            return self.clone();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(
            seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(trial as u64),
        );
        for _ in 0..100 {
            let mut scn = self.clone();
            for r in &mut scn.robots {
                for a in 0..2 {
                    r.start[a] += rng.gen_range(-magnitude..=magnitude);
                    r.goal[a] += rng.gen_range(-magnitude..=magnitude);
                }
            }
            if scn.validate().is_ok() {
                return scn;
            }
        }
        self.clone()
    }
}
