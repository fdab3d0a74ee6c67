//! Continuous-time trajectory generation for multi-robot teams that must
//! stay connected, avoid each other and static obstacles, and reach goals
//! under double-integrator dynamics.
//!
//! Each robot repeatedly solves a small convex QP over the control points
//! of a clamped Bézier spline. High-order control barrier rows keep the
//! team's algebraic connectivity above a floor and keep pairwise distances
//! safe; when connectivity has already been lost, control Lyapunov rows
//! steer the nearest disconnected robots back into communication range.
//!
//! The crate is organized bottom-up:
//!
//! - [`bezier`]: Bernstein bases, spline evaluation, derivative rows,
//!   effort Gram matrices, and the sample map used to discretize a horizon.
//! - [`connectivity`]: weighted proximity graphs, Laplacian spectra
//!   (algebraic connectivity and Fiedler vector), and analytic gradients.
//! - [`qp`]: a dense ADMM solver for box-constrained convex QPs with
//!   infeasibility certificates and warm starting.
//! - [`constraints`]: barrier (HOCBF), Lyapunov (HOCLF), actuation-bound,
//!   and boundary-condition rows, all affine in spline control points.
//! - [`planner`]: per-robot receding-horizon planner (SQP over QPs) plus a
//!   pointwise reactive baseline.
//! - [`sim`]: bulk-synchronous multi-robot simulator, logs, and metrics.
//! - [`scenario`]: scenario file schema, validation, and the bundled corpus.
//! - [`cli`]: the `simulate` / `metrics` / `selftest` command-line entry.
//!
//! # Examples
//!
//! Runnable walkthroughs live in `examples/`; each one exercises a single
//! capability end to end:
//!
//! ```text
//! cargo run --example bezier_spline   # spline algebra and sample maps
//! cargo run --example connectivity    # lambda_2, Fiedler vectors, gradients
//! cargo run --example qp_solve        # the ADMM solver on a tiny QP
//! cargo run --example safety_filter   # reactive CBF filtering of a nominal input
//! cargo run --example deadlock        # cluttered passage vs. reactive deadlock
//! cargo run --example recovery        # connectivity loss and recovery
//! cargo run --example scalability     # team-size sweep with metrics
//! ```
//!
//! Library users typically start from [`scenario::Scenario`] and
//! [`sim::run_scenario`]:
//!
//! ```no_run
//! use connmpc::planner::ControllerVariant;
//! use connmpc::scenario::Scenario;
//! use connmpc::sim::run_scenario;
//!
//! let scn = Scenario::load("scenarios/recovery_10.scn").unwrap();
//! let run = run_scenario(&scn, ControllerVariant::MpcClfCbf, 0, 42).unwrap();
//! println!("makespan: {:?}", run.metrics.makespan);
//! ```

pub mod bezier;
pub mod cli;
pub mod connectivity;
pub mod constraints;
pub mod linalg;
pub mod planner;
pub mod qp;
pub mod scenario;
pub mod selftest;
pub mod sim;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A mathematical precondition was violated (bad dimension, index out
    /// of range, non-symmetric input, and so on).
    #[error("domain error: {0}")]
    Domain(String),
    /// A scenario or configuration failed validation. The message names
    /// the offending field and the rule it broke.
    #[error("invalid scenario: {0}")]
    Scenario(String),
    /// File-system trouble while reading or writing artifacts.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    /// A scenario or log file could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
