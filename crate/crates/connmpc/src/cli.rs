//! Command-line entry points: `simulate`, `metrics`, `selftest`.
//!
//! Logs are CSV with `#`-prefixed metadata lines so a log file alone is
//! enough to recompute every metric; metric reports are JSON. Exit codes:
//! 0 success, 1 validation/usage error, 2 internal failure.

use crate::planner::ControllerVariant;
use crate::scenario::Scenario;
use crate::selftest;
use crate::sim::{
    self, mean_ci, Aggregate, LogMeta, LogRow, MetricsReport, SimLog,
};
use crate::{Error, Result};
use clap::{Args, Parser, Subcommand};
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(
    name = "connmpc",
    about = "Connectivity-maintaining multi-robot MPC simulator",
    disable_help_subcommand = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario and write per-trial CSV logs + JSON metrics.
    Simulate(SimulateArgs),
    /// Recompute metrics from a CSV log and print the JSON report.
    Metrics(MetricsArgs),
    /// Run the built-in invariant suites.
    Selftest,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Path to a .scn scenario file.
    #[arg(long)]
    pub scenario: PathBuf,
    /// Controller: mpc-clf-cbf | mpc-cbf | clf-cbf.
    #[arg(long)]
    pub controller: String,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    /// Seed for trial jitter.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of trials (trial 0 is the unjittered scenario).
    #[arg(long, default_value_t = 1)]
    pub trials: usize,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Path to a CSV log produced by `simulate`.
    #[arg(long)]
    pub log: PathBuf,
}

/// Entry point used by the binary; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let outcome = match cli.command {
        Command::Simulate(args) => simulate(&args),
        Command::Metrics(args) => metrics(&args),
        Command::Selftest => return selftest::run_all(&mut std::io::stdout()),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Scenario(_) | Error::Parse(_) | Error::Io(_) => 1,
                Error::Domain(_) => 2,
            }
        }
    }
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let variant = ControllerVariant::parse(&args.controller)?;
    if args.trials == 0 {
        return Err(Error::Scenario("trials: must be at least 1".into()));
    }
    let scn = Scenario::load(&args.scenario)?;
    std::fs::create_dir_all(&args.out)?;
    let mut reports = Vec::with_capacity(args.trials);
    for trial in 0..args.trials {
        let (log, metrics) = sim::run_scenario(&scn, variant, trial, args.seed)?;
        let stem = format!("{}_{}_{trial}", scn.name, variant.name());
        write_log_csv(&args.out.join(format!("{stem}.csv")), &log)?;
        write_json(&args.out.join(format!("{stem}.json")), &metrics)?;
        println!(
            "{stem}: success {:.2}, makespan {}, connected {:.3}",
            metrics.success_rate,
            metrics
                .makespan
                .seconds()
                .map_or("did-not-finish".into(), |t| format!("{t:.2} s")),
            metrics.percentage_connected
        );
        reports.push(metrics);
    }
    if args.trials > 1 {
        let success: Vec<f64> = reports.iter().map(|r| r.success_rate).collect();
        let conn: Vec<f64> = reports.iter().map(|r| r.percentage_connected).collect();
        let spans: Vec<f64> = reports.iter().filter_map(|r| r.makespan.seconds()).collect();
        let aggregate = Aggregate {
            success_rate: mean_ci(&success).expect("trials >= 1"),
            percentage_connected: mean_ci(&conn).expect("trials >= 1"),
            makespan: mean_ci(&spans),
        };
        let stem = format!("{}_{}_aggregate", scn.name, variant.name());
        write_json(&args.out.join(format!("{stem}.json")), &aggregate)?;
    }
    Ok(())
}

fn metrics(args: &MetricsArgs) -> Result<()> {
    let log = read_log_csv(&args.log)?;
    let report = sim::compute_metrics(&log);
    println!("{}", metrics_json(&report));
    Ok(())
}

/// Canonical JSON rendering shared by files and stdout so replays can be
/// compared byte-for-byte.
pub fn metrics_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable")
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, format!("{}\n", metrics_json(value)))?;
    Ok(())
}

/// CSV log layout: `# key: value` metadata lines, then a header row, then
/// one row per robot per tick. Floats use shortest round-trip formatting,
/// so parsing them back reproduces the exact bits.
pub fn write_log_csv(path: &Path, log: &SimLog) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    let m = &log.meta;
    writeln!(w, "# scenario: {}", m.scenario)?;
    writeln!(w, "# variant: {}", m.variant)?;
    writeln!(w, "# trial: {}", m.trial)?;
    writeln!(w, "# robots: {}", m.robots)?;
    writeln!(w, "# control_dt: {}", m.control_dt)?;
    writeln!(w, "# duration: {}", m.duration)?;
    writeln!(w, "# d_min: {}", m.d_min)?;
    writeln!(w, "# r_conn: {}", m.r_conn)?;
    writeln!(w, "# epsilon: {}", m.epsilon)?;
    for (i, g) in m.goals.iter().enumerate() {
        writeln!(w, "# goal: {i} {} {}", g[0], g[1])?;
    }
    for o in &m.obstacles {
        writeln!(w, "# obstacle: {} {} {}", o[0], o[1], o[2])?;
    }
    for event in &log.events {
        writeln!(w, "# event: {event}")?;
    }
    writeln!(w, "t,robot_id,px,py,vx,vy,ux,uy,lambda2,connected,min_h_safe,slack_conn")?;
    for r in &log.rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.t,
            r.robot_id,
            r.px,
            r.py,
            r.vx,
            r.vy,
            r.ux,
            r.uy,
            r.lambda2,
            r.connected,
            r.min_h_safe,
            r.slack_conn
        )?;
    }
    w.flush()?;
    Ok(())
}

fn meta_err(msg: impl Into<String>) -> Error {
    Error::Parse(format!("log metadata: {}", msg.into()))
}

/// Parse a CSV log back into a [`SimLog`]; inverse of [`write_log_csv`].
pub fn read_log_csv(path: &Path) -> Result<SimLog> {
    let text = std::fs::read_to_string(path)?;
    let mut meta = LogMeta {
        scenario: String::new(),
        variant: String::new(),
        trial: 0,
        robots: 0,
        control_dt: 0.0,
        duration: 0.0,
        d_min: 0.0,
        r_conn: 0.0,
        epsilon: 0.0,
        goals: Vec::new(),
        obstacles: Vec::new(),
    };
    let mut events = Vec::new();
    let mut body = String::new();
    let mut seen = [false; 9];
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("# ") {
            let (key, value) = rest
                .split_once(':')
                .ok_or_else(|| meta_err(format!("malformed line '{line}'")))?;
            let value = value.trim();
            let mut num = |idx: usize| -> Result<f64> {
                seen[idx] = true;
                value
                    .parse::<f64>()
                    .map_err(|_| meta_err(format!("{key}: bad number '{value}'")))
            };
            match key {
                "scenario" => {
                    seen[0] = true;
                    meta.scenario = value.to_string();
                }
                "variant" => {
                    seen[1] = true;
                    meta.variant = value.to_string();
                }
                "trial" => meta.trial = num(2)? as usize,
                "robots" => meta.robots = num(3)? as usize,
                "control_dt" => meta.control_dt = num(4)?,
                "duration" => meta.duration = num(5)?,
                "d_min" => meta.d_min = num(6)?,
                "r_conn" => meta.r_conn = num(7)?,
                "epsilon" => meta.epsilon = num(8)?,
                "goal" => {
                    let parts: Vec<&str> = value.split_whitespace().collect();
                    if parts.len() != 3 {
                        return Err(meta_err(format!("goal: expected 'id x y', got '{value}'")));
                    }
                    let gx = parts[1].parse().map_err(|_| meta_err("goal: bad x"))?;
                    let gy = parts[2].parse().map_err(|_| meta_err("goal: bad y"))?;
                    meta.goals.push([gx, gy]);
                }
                "obstacle" => {
                    let parts: Vec<&str> = value.split_whitespace().collect();
                    if parts.len() != 3 {
                        return Err(meta_err(format!(
                            "obstacle: expected 'x y d_min', got '{value}'"
                        )));
                    }
                    let mut o = [0.0; 3];
                    for (slot, p) in o.iter_mut().zip(&parts) {
                        *slot = p.parse().map_err(|_| meta_err("obstacle: bad number"))?;
                    }
                    meta.obstacles.push(o);
                }
                "event" => events.push(value.to_string()),
                other => return Err(meta_err(format!("unknown key '{other}'"))),
            }
        } else {
            body.push_str(line);
            body.push('\n');
        }
    }
    if !seen.iter().all(|&s| s) {
        return Err(meta_err("missing required header keys"));
    }
    if meta.goals.len() != meta.robots {
        return Err(meta_err(format!(
            "goal count {} does not match robots {}",
            meta.goals.len(),
            meta.robots
        )));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(body.as_bytes());
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse(format!("log row: {e}")))?;
        if record.len() != 12 {
            return Err(Error::Parse(format!(
                "log row: expected 12 columns, got {}",
                record.len()
            )));
        }
        let fnum = |i: usize| -> Result<f64> {
            record[i]
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("log row: bad float '{}'", &record[i])))
        };
        rows.push(LogRow {
            t: fnum(0)?,
            robot_id: record[1]
                .parse()
                .map_err(|_| Error::Parse(format!("log row: bad id '{}'", &record[1])))?,
            px: fnum(2)?,
            py: fnum(3)?,
            vx: fnum(4)?,
            vy: fnum(5)?,
            ux: fnum(6)?,
            uy: fnum(7)?,
            lambda2: fnum(8)?,
            connected: match &record[9] {
                "true" => true,
                "false" => false,
                other => {
                    return Err(Error::Parse(format!("log row: bad connected flag '{other}'")))
                }
            },
            min_h_safe: fnum(10)?,
            slack_conn: fnum(11)?,
        });
    }
    if meta.robots > 0 && rows.len() % meta.robots != 0 {
        return Err(Error::Parse(format!(
            "log body: {} rows is not a multiple of {} robots",
            rows.len(),
            meta.robots
        )));
    }
    Ok(SimLog { meta, rows, events })
}

/// Re-export used by integration tests to compare replays.
pub fn replayed_metrics(path: &Path) -> Result<MetricsReport> {
    Ok(sim::compute_metrics(&read_log_csv(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::ControllerVariant;

    fn tiny_scenario() -> Scenario {
        Scenario::from_toml_str(
            r#"
name = "tiny"
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
start = [6.0, 1.0]
goal = [4.0, 1.0]

[[obstacles]]
center = [3.0, -4.0]
d_min = 1.5
"#,
        )
        .unwrap()
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let scn = tiny_scenario();
        let (log, metrics) =
            sim::run_scenario(&scn, ControllerVariant::MpcClfCbf, 0, 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tiny.csv");
        write_log_csv(&path, &log).unwrap();
        let back = read_log_csv(&path).unwrap();
        assert_eq!(back.meta, log.meta);
        assert_eq!(back.rows.len(), log.rows.len());
        for (a, b) in log.rows.iter().zip(back.rows.iter()) {
            assert_eq!(a, b, "row mismatch after round trip");
        }
        let replayed = sim::compute_metrics(&back);
        assert_eq!(metrics_json(&replayed), metrics_json(&metrics));
    }

    #[test]
    fn special_floats_survive_round_trip() {
        // Single-robot logs carry lambda2 = inf and min_h_safe = inf.
        let scn = Scenario::from_toml_str(
            r#"
name = "solo"
duration = 0.1

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
goal = [1.0, 0.0]
"#,
        )
        .unwrap();
        let (log, _) = sim::run_scenario(&scn, ControllerVariant::MpcCbf, 0, 0).unwrap();
        assert!(log.rows[0].lambda2.is_infinite());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("solo.csv");
        write_log_csv(&path, &log).unwrap();
        let back = read_log_csv(&path).unwrap();
        assert!(back.rows[0].lambda2.is_infinite());
        assert!(back.rows[0].min_h_safe.is_infinite());
    }

    #[test]
    fn rejects_malformed_logs() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "# scenario: x\nt,robot_id\n").unwrap();
        assert!(read_log_csv(&path).is_err());
        std::fs::write(&path, "# unknown_key: 3\n").unwrap();
        assert!(read_log_csv(&path).is_err());
    }

    #[test]
    fn unknown_controller_is_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let scn_path = dir.path().join("tiny.scn");
        std::fs::write(&scn_path, tiny_scenario().emit()).unwrap();
        let code = run(Cli {
            command: Command::Simulate(SimulateArgs {
                scenario: scn_path,
                controller: "pid".into(),
                out: dir.path().join("out"),
                seed: 0,
                trials: 1,
            }),
        });
        assert_eq!(code, 1);
    }

    #[test]
    fn simulate_writes_expected_files() {
        let dir = tempfile::tempdir().unwrap();
        let scn_path = dir.path().join("tiny.scn");
        std::fs::write(&scn_path, tiny_scenario().emit()).unwrap();
        let out = dir.path().join("out");
        let code = run(Cli {
            command: Command::Simulate(SimulateArgs {
                scenario: scn_path,
                controller: "mpc-cbf".into(),
                out: out.clone(),
                seed: 3,
                trials: 2,
            }),
        });
        assert_eq!(code, 0);
        for name in [
            "tiny_mpc-cbf_0.csv",
            "tiny_mpc-cbf_0.json",
            "tiny_mpc-cbf_1.csv",
            "tiny_mpc-cbf_1.json",
            "tiny_mpc-cbf_aggregate.json",
        ] {
            assert!(out.join(name).exists(), "missing {name}");
        }
        // Replayed metrics equal the emitted JSON byte-for-byte.
        let report = replayed_metrics(&out.join("tiny_mpc-cbf_0.csv")).unwrap();
        let json = std::fs::read_to_string(out.join("tiny_mpc-cbf_0.json")).unwrap();
        assert_eq!(json, format!("{}\n", metrics_json(&report)));
    }
}
