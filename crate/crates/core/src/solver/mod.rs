//! Time stepping of the theta-scheme with explicit, fixed-point and policy-iteration solvers.

mod anderson;
mod eval;
pub mod linear;
mod steps;

use std::time::Instant;

use rayon::prelude::*;

use crate::boundary::NodeLayout;
use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::interp::InterpKind;
use crate::operators::Variant;
use crate::problem::{NodeContext, Problem};

pub use eval::StepStats;
use eval::StepContext;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    /// `theta = 0` only: one evaluation per node.
    Explicit,
    /// Relaxed fixed-point iteration `U <- U - eps * R(U)`.
    FixedPoint,
    /// Policy iteration with an iterative linear solve per policy.
    Howard,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Explicit => "explicit",
            SolverKind::FixedPoint => "fixedpoint",
            SolverKind::Howard => "howard",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeConfig {
    pub theta: f64,
    /// Upper bound for the time step; the run uses `t_end / ceil(t_end / dt)`.
    pub dt: f64,
    pub k: f64,
    pub interp: InterpKind,
    pub variant: Variant,
    pub solver: SolverKind,
    pub tol: f64,
    pub max_iter: usize,
    /// Fixed-point relaxation; chosen automatically when `None`.
    pub relaxation: Option<f64>,
}

impl SchemeConfig {
    pub fn new(dt: f64, k: f64, interp: InterpKind) -> Self {
        Self {
            theta: 0.0,
            dt,
            k,
            interp,
            variant: Variant::Efficient,
            solver: SolverKind::Explicit,
            tol: 1e-10,
            max_iter: 200,
            relaxation: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::Config(format!("theta must be in [0, 1], got {}", self.theta)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(Error::Config(format!("k must be positive, got {}", self.k)));
        }
        if self.solver == SolverKind::Explicit && self.theta > 0.0 {
            return Err(Error::Config("the explicit solver requires theta = 0".into()));
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::Config("tolerance and iteration cap must be positive".into()));
        }
        if let Some(eps) = self.relaxation {
            if !(eps > 0.0 && eps <= 1.0) {
                return Err(Error::Config(format!("relaxation must be in (0, 1], got {eps}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub t: f64,
    pub iterations: usize,
    /// Final max-norm of the scaled residual (or of the last update for the explicit solver).
    pub residual: f64,
    pub policy_changes: usize,
    /// Policy iteration only: whether successive iterates moved monotonically.
    pub monotone_iterates: Option<bool>,
    pub stats: StepStats,
    pub wall_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CflReport {
    pub admissible: bool,
    /// Largest step satisfying `(1 - theta) dt (M / k^2 - c) <= tau` and `theta dt c <= tau`.
    pub max_dt: f64,
}

/// Checks the time-step restriction at time `t` over all free nodes and controls.
///
/// `M` counts the pairs with a nonzero displacement at each node.
pub fn cfl_check(config: &SchemeConfig, problem: &Problem, grid: &Grid, t: f64) -> Result<CflReport> {
    config.validate()?;
    problem.validate()?;
    let layout = NodeLayout::new(grid, &problem.boundary)?;
    let coeffs = &*problem.coefficients;
    let dep = coeffs.dependence();
    let p = coeffs.noise_dim();
    let n = grid.dim();
    let k2 = config.k * config.k;
    let theta = config.theta;
    let controls = &problem.controls;
    let max_dt = (0..grid.len())
        .into_par_iter()
        .filter(|&j| layout.is_free(j))
        .map_init(
            || (vec![0.0; n * p], vec![0.0; n], crate::operators::DisplacementSet::new()),
            |(sigma, drift, ds), j| -> Result<f64> {
                let mut x = [0.0; crate::grid::MAX_DIM];
                grid.node_coords(j, &mut x);
                let mut ctx = NodeContext::new(t, &x[..n]);
                coeffs.prepare(&mut ctx);
                let mut best = f64::INFINITY;
                let mut m_fixed = None;
                for ia in 0..controls.alpha.len() {
                    for ib in 0..controls.beta.len() {
                        let ctrl = controls.get(ia, ib);
                        let m = match m_fixed {
                            Some(m) => m,
                            None => {
                                coeffs.sigma(&ctx, ctrl, sigma);
                                coeffs.drift(&ctx, ctrl, drift);
                                ds.build(sigma, p, drift, config.k, config.variant)?;
                                let m = ds.effective_len();
                                if !dep.sigma && !dep.drift {
                                    m_fixed = Some(m);
                                }
                                m
                            }
                        };
                        let c = coeffs.discount(&ctx, ctrl);
                        let tau = if dep.time_weight {
                            coeffs.time_weight(&ctx, ctrl)
                        } else {
                            1.0
                        };
                        let load = m as f64 / k2 - c;
                        if theta < 1.0 && load > 0.0 {
                            best = best.min(tau / ((1.0 - theta) * load));
                        }
                        if theta > 0.0 && c > 0.0 {
                            best = best.min(tau / (theta * c));
                        }
                    }
                }
                Ok(best)
            },
        )
        .try_reduce(|| f64::INFINITY, |a, b| Ok(a.min(b)))?;
    Ok(CflReport {
        admissible: config.dt <= max_dt * (1.0 + 1e-12),
        max_dt,
    })
}

/// Supremum bound on `|U^n|` after time `t`:
/// `exp(2 sup c+ t) (max(|g|, boundary data) + t sup |f|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityRecord {
    pub step: usize,
    pub t: f64,
    pub norm: f64,
    pub bound: f64,
}

impl StabilityRecord {
    pub fn holds(&self) -> bool {
        self.norm <= self.bound * (1.0 + 1e-9) + 1e-12
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub solution: GridFunction,
    pub t_end: f64,
    pub dt: f64,
    pub steps: usize,
    pub reports: Vec<StepReport>,
    pub stability: Vec<StabilityRecord>,
}

impl RunOutput {
    pub fn stable(&self) -> bool {
        self.stability.iter().all(|r| r.holds())
    }

    pub fn wall_s(&self) -> f64 {
        self.reports.iter().map(|r| r.wall_s).sum()
    }
}

/// Number of steps and step size used to reach `t_end` with steps of at most `dt`.
pub fn time_steps(t_end: f64, dt: f64) -> (usize, f64) {
    let n = ((t_end / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    (n, t_end / n as f64)
}

/// One step of the theta-scheme from `prev` at `t_old`.
pub fn theta_step(
    problem: &Problem,
    grid: &Grid,
    config: &SchemeConfig,
    prev: &GridFunction,
    t_old: f64,
) -> Result<(GridFunction, StepReport)> {
    config.validate()?;
    problem.validate()?;
    if prev.len() != grid.len() {
        return Err(Error::Shape("previous level does not match grid".into()));
    }
    let layout = NodeLayout::new(grid, &problem.boundary)?;
    step_with_layout(problem, grid, config, &layout, &prev.values, t_old, config.dt)
}

fn step_with_layout(
    problem: &Problem,
    grid: &Grid,
    config: &SchemeConfig,
    layout: &NodeLayout,
    prev: &[f64],
    t_old: f64,
    dt: f64,
) -> Result<(GridFunction, StepReport)> {
    let start = Instant::now();
    let sc = StepContext::new(grid, problem, layout, config, t_old, dt);
    let out = match config.solver {
        SolverKind::Explicit => steps::explicit(&sc, prev)?,
        SolverKind::FixedPoint => steps::fixed_point(&sc, prev)?,
        SolverKind::Howard => steps::howard(&sc, prev)?,
    };
    let load = out.stats.load;
    if (1.0 - config.theta) * dt * load > 1.0 + 1e-9 {
        return Err(Error::Cfl {
            dt,
            max_dt: 1.0 / ((1.0 - config.theta) * load),
        });
    }
    let report = StepReport {
        t: t_old + dt,
        iterations: out.iterations,
        residual: out.residual,
        policy_changes: out.policy_changes,
        monotone_iterates: out.monotone,
        stats: out.stats,
        wall_s: start.elapsed().as_secs_f64(),
    };
    Ok((GridFunction { values: out.values }, report))
}

/// Runs the scheme from `t = 0` to `t_end`, returning the final level.
pub fn run(problem: &Problem, grid: &Grid, config: &SchemeConfig, t_end: f64) -> Result<RunOutput> {
    run_with_observer(problem, grid, config, t_end, |_, _, _| Ok(()))
}

/// As [`run`], calling `observer(step, t, level)` after every step (and for the initial level).
pub fn run_with_observer(
    problem: &Problem,
    grid: &Grid,
    config: &SchemeConfig,
    t_end: f64,
    mut observer: impl FnMut(usize, f64, &GridFunction) -> Result<()>,
) -> Result<RunOutput> {
    config.validate()?;
    problem.validate()?;
    if !(t_end > 0.0) {
        return Err(Error::Config(format!("final time must be positive, got {t_end}")));
    }
    let layout = NodeLayout::new(grid, &problem.boundary)?;
    let (steps, dt) = time_steps(t_end, config.dt);
    let mut u = GridFunction::from_fn(grid, |p| (problem.initial)(p));
    observer(0, 0.0, &u)?;
    let g0 = u.max_abs();
    let mut reports = Vec::with_capacity(steps);
    let mut stability = Vec::with_capacity(steps);
    let (mut sup_f, mut sup_c, mut bmax) = (0.0f64, 0.0f64, 0.0f64);
    for n in 1..=steps {
        let t_old = (n - 1) as f64 * dt;
        let (next, report) = step_with_layout(problem, grid, config, &layout, &u.values, t_old, dt)?;
        let t = if n == steps { t_end } else { n as f64 * dt };
        sup_f = sup_f.max(report.stats.sup_f);
        sup_c = sup_c.max(report.stats.sup_c_plus);
        bmax = bmax.max(report.stats.boundary_max);
        u = next;
        stability.push(StabilityRecord {
            step: n,
            t,
            norm: u.max_abs(),
            bound: (2.0 * sup_c * t).exp() * (g0.max(bmax) + t * sup_f),
        });
        reports.push(report);
        observer(n, t, &u)?;
    }
    Ok(RunOutput {
        solution: u,
        t_end,
        dt,
        steps,
        reports,
        stability,
    })
}
