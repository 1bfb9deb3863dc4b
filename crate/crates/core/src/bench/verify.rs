//! Randomized property suites run by the `verify` command.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bench::{run_level, Scheme, StudyConfig};
use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::interp::{cubic, multilinear_weights, InterpKind, Interpolant};
use crate::operators::{displacement_set, verify_y1, Variant};
use crate::problems;
use crate::solver::{self, cfl_check, theta_step, SchemeConfig, SolverKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Y1,
    Interp,
    Monotone,
    Stability,
    Solvers,
    Temporal,
}

impl Suite {
    pub const ALL: [Suite; 6] = [
        Suite::Y1,
        Suite::Interp,
        Suite::Monotone,
        Suite::Stability,
        Suite::Solvers,
        Suite::Temporal,
    ];

    pub fn parse(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Parse(format!("unknown suite '{s}'")))
    }

    pub fn name(self) -> &'static str {
        match self {
            Suite::Y1 => "y1",
            Suite::Interp => "interp",
            Suite::Monotone => "monotone",
            Suite::Stability => "stability",
            Suite::Solvers => "solvers",
            Suite::Temporal => "temporal",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub suite: Suite,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }
}

pub const DEFAULT_SEED: u64 = 0x5eed_2024;

pub fn run_suite(suite: Suite, seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SuiteReport {
        suite,
        checks: Vec::new(),
    };
    match suite {
        Suite::Y1 => y1_suite(&mut rng, &mut report)?,
        Suite::Interp => interp_suite(&mut rng, &mut report)?,
        Suite::Monotone => monotone_suite(&mut rng, &mut report)?,
        Suite::Stability => stability_suite(&mut report)?,
        Suite::Solvers => solvers_suite(&mut report)?,
        Suite::Temporal => temporal_suite(&mut report)?,
    }
    Ok(report)
}

fn y1_suite(rng: &mut ChaCha8Rng, report: &mut SuiteReport) -> Result<()> {
    const DRAWS: usize = 100;
    for variant in Variant::all() {
        let mut failures = 0;
        let mut worst: f64 = 0.0;
        for _ in 0..DRAWS {
            let n = rng.gen_range(1..=3);
            let p = rng.gen_range(1..=3);
            // drift-only sets carry no diffusion and the pure diffusion set no drift
            let sigma: Vec<f64> = (0..n * p)
                .map(|_| {
                    if variant == Variant::DriftOnly {
                        0.0
                    } else {
                        rng.gen_range(-1.0..1.0)
                    }
                })
                .collect();
            let b: Vec<f64> = (0..n)
                .map(|_| {
                    if variant == Variant::Diffusion {
                        0.0
                    } else {
                        rng.gen_range(-1.0..1.0)
                    }
                })
                .collect();
            let k = 10f64.powf(rng.gen_range(-3.0..0.0));
            let ds = displacement_set(&sigma, p, &b, k, variant)?;
            let r = verify_y1(&ds, &sigma, p, &b)?;
            let bound = r.constant * k.powi(4);
            worst = r.residuals.iter().fold(worst, |m, &v| m.max(v / bound));
            if !r.passes() {
                failures += 1;
            }
        }
        report.check(
            format!("y1 variant {}", variant.number()),
            failures == 0,
            format!("{failures}/{DRAWS} draws failed, worst residual/bound {worst:.3e}"),
        );
    }
    Ok(())
}

fn random_grid(rng: &mut ChaCha8Rng, dim: usize) -> Result<Grid> {
    let lower: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..0.0)).collect();
    let upper: Vec<f64> = lower.iter().map(|l| l + rng.gen_range(0.5..3.0)).collect();
    let counts: Vec<usize> = (0..dim).map(|_| rng.gen_range(5..12)).collect();
    Grid::new(&lower, &upper, &counts)
}

fn interp_suite(rng: &mut ChaCha8Rng, report: &mut SuiteReport) -> Result<()> {
    // weight positivity, partition of unity and linear reproduction
    let mut worst_neg: f64 = 0.0;
    let mut worst_sum: f64 = 0.0;
    let mut worst_lin: f64 = 0.0;
    for dim in 1..=3 {
        let grid = random_grid(rng, dim)?;
        let coef: Vec<f64> = (0..=dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let lin = |p: &[f64]| coef[0] + p.iter().zip(&coef[1..]).map(|(x, c)| x * c).sum::<f64>();
        let u = GridFunction::from_fn(&grid, lin);
        for _ in 0..10_000 {
            let p: Vec<f64> = (0..dim)
                .map(|a| rng.gen_range(grid.lower()[a]..=grid.upper()[a]))
                .collect();
            let w = multilinear_weights(&grid, &p)?;
            let sum: f64 = w.iter().map(|(_, v)| v).sum();
            let val: f64 = w.iter().map(|&(j, v)| v * u.values[j]).sum();
            worst_neg = w.iter().fold(worst_neg, |m, &(_, v)| m.max(-v));
            worst_sum = worst_sum.max((sum - 1.0).abs());
            worst_lin = worst_lin.max((val - lin(&p)).abs());
        }
    }
    report.check(
        "weights nonnegative",
        worst_neg <= 0.0,
        format!("most negative weight {:.3e}", -worst_neg),
    );
    report.check(
        "partition of unity",
        worst_sum <= 1e-12,
        format!("max |sum - 1| {worst_sum:.3e}"),
    );
    report.check(
        "linear reproduction",
        worst_lin <= 1e-12,
        format!("max error {worst_lin:.3e}"),
    );

    // limiter output lies in the monotonicity region
    const TRIPLES: usize = 100_000;
    let mut outside = 0;
    for _ in 0..TRIPLES {
        let scale = 10f64.powf(rng.gen_range(-3.0..3.0));
        let delta = rng.gen_range(-1.0..1.0) * scale;
        let d0 = rng.gen_range(-5.0..5.0) * scale;
        let d1 = rng.gen_range(-5.0..5.0) * scale;
        if delta == 0.0 {
            continue;
        }
        let (l0, l1) = cubic::limit_slopes(d0, d1, delta);
        if !cubic::in_monotone_region(l0 / delta, l1 / delta, 1e-12) {
            outside += 1;
        }
    }
    report.check(
        "limited slopes in monotone region",
        outside == 0,
        format!("{outside}/{TRIPLES} outside"),
    );

    // monotone data give monotone interpolants
    const DATASETS: usize = 1000;
    const SAMPLES: usize = 1000;
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..DATASETS {
        let n = rng.gen_range(5..=12);
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let mut v = rng.gen_range(-1.0..1.0);
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(v);
            // flat steps and jumps of very different sizes
            let step = match rng.gen_range(0..4) {
                0 => 0.0,
                1 => rng.gen_range(0.0..1e-3),
                _ => rng.gen_range(0.0..1.0),
            };
            v += sign * step;
        }
        let grid = Grid::new(&[0.0], &[1.0], &[n])?;
        let interp = Interpolant::new(&grid, &data, InterpKind::MonotoneCubic)?;
        let h = 1.0 / (n - 1) as f64;
        let mut last = data[0];
        let mut bad = false;
        for i in 0..n - 1 {
            for s in 1..=SAMPLES {
                let x = (i as f64 + s as f64 / SAMPLES as f64) * h;
                let val = interp.value(&[x.min(1.0)])?;
                let drop = sign * (last - val);
                worst = worst.max(drop);
                if drop > 1e-12 {
                    bad = true;
                }
                last = val;
            }
        }
        if bad {
            violations += 1;
        }
    }
    report.check(
        "monotone cubic preserves monotonicity",
        violations == 0,
        format!("{violations}/{DATASETS} datasets violated, worst reversal {worst:.3e}"),
    );
    Ok(())
}

/// Coarse configurations on which random ordered pairs are stepped.
fn monotone_cases() -> Result<Vec<(String, crate::problem::Problem, Grid, SchemeConfig)>> {
    let mut cases = Vec::new();
    for (name, theta, solver) in [
        ("smooth_linear_b01", 0.0, SolverKind::Explicit),
        ("smooth_linear_b0", 0.5, SolverKind::Howard),
        ("nonsmooth_linear", 1.0, SolverKind::FixedPoint),
        ("control_a", 0.0, SolverKind::Explicit),
        ("control_b", 0.0, SolverKind::Explicit),
        ("superrep_test", 1.0, SolverKind::Howard),
    ] {
        let dx = problems::level_dx(name, 0, false)? * if name.starts_with("superrep") { 2.0 } else { 4.0 };
        let problem = problems::benchmark(name, dx)?;
        let grid = problem.grid(dx)?;
        let k = dx.sqrt();
        let mut cfg = SchemeConfig::new(k * k, k, InterpKind::Multilinear);
        cfg.theta = theta;
        cfg.solver = solver;
        cfg.variant = crate::operators::recommend_variant(&problem);
        cfg.tol = 1e-12;
        cfg.max_iter = 100_000;
        let cfl = cfl_check(&cfg, &problem, &grid, 0.0)?;
        cfg.dt = cfg.dt.min(cfl.max_dt);
        cases.push((format!("{name} theta={theta} {}", solver.name()), problem, grid, cfg));
    }
    Ok(cases)
}

fn monotone_suite(rng: &mut ChaCha8Rng, report: &mut SuiteReport) -> Result<()> {
    const PAIRS: usize = 100;
    let cases = monotone_cases()?;
    let mut worst: f64 = f64::NEG_INFINITY;
    let mut failures = Vec::new();
    for trial in 0..PAIRS {
        let (label, problem, grid, cfg) = &cases[trial % cases.len()];
        let t = rng.gen_range(0.0..0.5 * problem.horizon);
        let base = GridFunction::from_fn(grid, |p| (problem.initial)(p));
        let amp = base.max_abs().max(1.0);
        let u = GridFunction {
            values: base.values.iter().map(|v| v + amp * rng.gen_range(-0.5..0.5)).collect(),
        };
        let v = GridFunction {
            values: u.values.iter().map(|x| x + amp * rng.gen_range(0.0..0.5)).collect(),
        };
        let (su, _) = theta_step(problem, grid, cfg, &u, t)?;
        let (sv, _) = theta_step(problem, grid, cfg, &v, t)?;
        let excess = su
            .values
            .iter()
            .zip(&sv.values)
            .fold(f64::NEG_INFINITY, |m, (a, b)| m.max(a - b));
        worst = worst.max(excess);
        if excess > 1e-10 {
            failures.push(format!("{label} (excess {excess:.3e})"));
        }
    }
    report.check(
        "step is order preserving",
        failures.is_empty(),
        if failures.is_empty() {
            format!("{PAIRS} ordered pairs, max (S u - S v) {worst:.3e}")
        } else {
            format!("violations: {}", failures.join(", "))
        },
    );

    // constants are preserved without discount and source
    let grid = Grid::new(&[-1.0, -1.0], &[1.0, 1.0], &[21, 21])?;
    let mut problem = problems::smooth_linear(0.3);
    problem.lower = vec![-1.0, -1.0];
    problem.upper = vec![1.0, 1.0];
    problem.coefficients = std::sync::Arc::new(crate::problem::ClosureCoefficients::diffusion(
        2,
        2,
        std::sync::Arc::new(|_, x: &[f64], _, out: &mut [f64]| {
            out.copy_from_slice(&[0.5 + 0.3 * x[1], 0.2, -0.1, 0.4 + 0.2 * x[0]])
        }),
        std::sync::Arc::new(|_, _, _| 0.0),
    ));
    let kappa = 1.7;
    problem.boundary = crate::boundary::BoundarySpec::dirichlet(
        2,
        std::sync::Arc::new(move |_, _| kappa),
        crate::boundary::OverstepPolicy::ClampToBoundary,
    );
    let k = grid.dx().sqrt();
    let mut cfg = SchemeConfig::new(k * k, k, InterpKind::MonotoneCubic);
    cfg.variant = Variant::Efficient;
    cfg.dt = cfl_check(&cfg, &problem, &grid, 0.0)?.max_dt;
    let u = GridFunction::from_fn(&grid, |_| kappa);
    let (s, _) = theta_step(&problem, &grid, &cfg, &u, 0.0)?;
    let dev = s.values.iter().fold(0.0f64, |m, v| m.max((v - kappa).abs()));
    report.check(
        "constants preserved",
        dev <= 1e-13,
        format!("max deviation {dev:.3e}"),
    );
    Ok(())
}

fn stability_suite(report: &mut SuiteReport) -> Result<()> {
    for name in problems::NAMES {
        for scheme in [Scheme::Lisl, Scheme::Mcsl] {
            let cubic = scheme == Scheme::Mcsl;
            let factor = if name.starts_with("superrep") { 1.0 } else { 4.0 };
            let dx = problems::level_dx(name, 0, cubic)? * factor;
            let study = StudyConfig::for_problem(name, scheme);
            let label = format!("stability {name} {}", scheme.name());
            match run_level(name, dx, &study) {
                Ok(level) => {
                    let out = &level.output;
                    let worst = out
                        .stability
                        .iter()
                        .fold(0.0f64, |m, r| m.max(r.norm / r.bound.max(f64::MIN_POSITIVE)));
                    report.check(
                        label,
                        out.stable(),
                        format!("{} steps, max |U|/bound {worst:.4}", out.steps),
                    );
                }
                Err(e) => report.check(label, false, format!("run failed: {e}")),
            }
        }
    }
    Ok(())
}

fn solvers_suite(report: &mut SuiteReport) -> Result<()> {
    let name = "superrep_test";
    let dx = 0.15;
    let tol = 1e-10;
    let problem = problems::benchmark(name, dx)?;
    let grid = problem.grid(dx)?;
    let k = dx.sqrt();
    let mut cfg = SchemeConfig::new(k * k, k, InterpKind::Multilinear);
    cfg.theta = 1.0;
    cfg.variant = crate::operators::recommend_variant(&problem);
    cfg.tol = tol;
    cfg.solver = SolverKind::Howard;
    cfg.max_iter = 200;
    let howard = solver::run(&problem, &grid, &cfg, problem.horizon)?;
    cfg.solver = SolverKind::FixedPoint;
    cfg.max_iter = 1_000_000;
    let fixed = solver::run(&problem, &grid, &cfg, problem.horizon)?;
    let diff = howard
        .solution
        .values
        .iter()
        .zip(&fixed.solution.values)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    report.check(
        "fixed point matches policy iteration",
        diff <= 10.0 * tol,
        format!("max difference {diff:.3e} (limit {:.1e})", 10.0 * tol),
    );
    let monotone = howard
        .reports
        .iter()
        .all(|r| r.monotone_iterates != Some(false));
    let iters: usize = howard.reports.iter().map(|r| r.iterations).max().unwrap_or(0);
    report.check(
        "policy iterates monotone",
        monotone,
        format!("{} steps, at most {iters} policy iterations per step", howard.steps),
    );

    let single = problems::smooth_linear(0.1f64.sqrt());
    let sgrid = single.grid(std::f64::consts::PI / 10.0)?;
    let mut scfg = SchemeConfig::new(0.05, sgrid.dx().sqrt(), InterpKind::Multilinear);
    scfg.theta = 1.0;
    scfg.solver = SolverKind::Howard;
    let u0 = GridFunction::from_fn(&sgrid, |p| (single.initial)(p));
    let (_, rep) = theta_step(&single, &sgrid, &scfg, &u0, 0.0)?;
    report.check(
        "single policy needs one solve",
        rep.iterations == 1 && rep.policy_changes == 0,
        format!("{} iterations, {} policy changes", rep.iterations, rep.policy_changes),
    );
    Ok(())
}

/// Observed orders in time on a fixed spatial grid, measured against a fine-step reference.
pub fn temporal_rates(theta: f64) -> Result<Vec<f64>> {
    let problem = problems::smooth_linear(0.1f64.sqrt());
    let dx = std::f64::consts::PI / 20.0;
    let grid = problem.grid(dx)?;
    let k = dx.sqrt();
    let mut base = SchemeConfig::new(k * k, k, InterpKind::Multilinear);
    base.variant = Variant::Efficient;
    let dt0 = cfl_check(&base, &problem, &grid, 0.0)?.max_dt;
    let (steps0, dt0) = solver::time_steps(1.0, dt0);
    debug_assert!(steps0 > 0);
    let mut cfg = base.clone();
    cfg.theta = theta;
    cfg.solver = if theta == 0.0 {
        SolverKind::Explicit
    } else {
        SolverKind::Howard
    };
    cfg.tol = 1e-13;
    let solve = |dt: f64| -> Result<Vec<f64>> {
        let mut c = cfg.clone();
        c.dt = dt;
        Ok(solver::run(&problem, &grid, &c, 1.0)?.solution.values)
    };
    let reference = solve(dt0 / 64.0)?;
    let mut errors = Vec::new();
    for level in 0..3 {
        let u = solve(dt0 / (1 << level) as f64)?;
        errors.push(
            u.iter()
                .zip(&reference)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs())),
        );
    }
    Ok(errors
        .windows(2)
        .map(|e| (e[0] / e[1]).ln() / 2f64.ln())
        .collect())
}

fn temporal_suite(report: &mut SuiteReport) -> Result<()> {
    for (theta, target, tol) in [(0.0, 1.0, 0.2), (0.5, 2.0, 0.3), (1.0, 1.0, 0.2)] {
        let rates = temporal_rates(theta)?;
        let last = *rates.last().unwrap_or(&f64::NAN);
        report.check(
            format!("time order theta={theta}"),
            (last - target).abs() <= tol,
            format!(
                "rates {} (expected {target} +- {tol})",
                rates.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>().join(", ")
            ),
        );
    }
    Ok(())
}
