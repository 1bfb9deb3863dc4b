//! Semi-Lagrangian schemes for degenerate Hamilton-Jacobi-Bellman-Isaacs equations
//! `u_t - inf_a sup_b { L u + c u + f } = 0` on boxes, with multilinear or
//! monotone cubic interpolation.

pub mod bench;
pub mod boundary;
pub mod error;
pub mod grid;
pub mod interp;
pub mod operators;
pub mod problem;
pub mod problems;
pub mod solver;

pub use boundary::{BoundarySpec, FaceCondition, OverstepPolicy};
pub use error::{Error, Result};
pub use grid::{check_monotone_direction, Direction, Grid, GridFunction};
pub use interp::{interpolate, multilinear_weights, InterpKind, Interpolant};
pub use operators::{displacement_set, verify_y1, DisplacementSet, Variant};
pub use problem::{ControlSet, Problem};
pub use solver::{cfl_check, run, theta_step, RunOutput, SchemeConfig, SolverKind, StepReport};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "SLHJB_THREADS";

/// Configures the global worker pool from `SLHJB_THREADS` (if set and not yet configured).
/// Results do not depend on the number of workers.
pub fn configure_threads() -> usize {
    if let Some(n) = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
    {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    rayon::current_num_threads()
}
