//! Acceptance run over the benchmark problems: one PASS/FAIL line per criterion.
//!
//! Every level is timed. A level whose predicted wall time exceeds the budget
//! (`SLHJB_ACCEPT_BUDGET_S`, seconds, default 900) is not run; criteria that
//! need it report FAIL with the prediction.

use std::fmt::Write as _;
use std::time::Instant;

use slhjb::bench::verify::{run_suite, temporal_rates, Suite, DEFAULT_SEED};
use slhjb::bench::{level_config, observed_rate, run_level, Scheme, StudyConfig};
use slhjb::{problems, solver};

const BUDGET_ENV: &str = "SLHJB_ACCEPT_BUDGET_S";
const DEFAULT_BUDGET_S: f64 = 900.0;

/// Reference errors and times the runs are compared against.
mod reference {
    // smooth linear problem at dx = 1.96e-2
    pub const SMOOTH_B01_LISL: f64 = 1.93e-2;
    pub const SMOOTH_B01_MCSL: f64 = 2.57e-4;
    pub const SMOOTH_B0_LISL: f64 = 1.98e-2;
    pub const SMOOTH_B0_MCSL: f64 = 2.57e-4;
    // control problems at dx = 1.96e-2
    pub const CONTROL_A_LISL: f64 = 1.61e-2;
    pub const CONTROL_A_MCSL: f64 = 2.12e-4;
    pub const CONTROL_B_LISL: f64 = 1.07e-2;
    pub const CONTROL_B_MCSL: f64 = 1.29e-4;
    // superreplication test, first three levels
    pub const SUPERREP_LISL: [f64; 3] = [2.01e-1, 9.49e-2, 4.29e-2];
    pub const SUPERREP_MCSL: [f64; 3] = [8.21e-2, 1.83e-2, 5.03e-3];
    pub const SUPERREP_LISL_FINE_SECONDS: f64 = 75.73;
}

/// Factor allowed between an error and its reference.
const ERROR_FACTOR: f64 = 2.0;
/// Relative deviation allowed on the superreplication errors.
const SUPERREP_REL: f64 = 0.3;
/// Runtime agreement: within one order of magnitude.
const RUNTIME_FACTOR: f64 = 10.0;
/// Multiple of the theoretical error scaling that no observed error may exceed.
const BOUND_FACTOR: f64 = 10.0;

struct Level {
    dx: f64,
    dt: f64,
    k: f64,
    linf: Option<f64>,
    wall_s: f64,
    stable: bool,
    /// Why the level has no error: over budget or a failed run.
    missing: Option<String>,
}

struct Study {
    name: &'static str,
    scheme: Scheme,
    levels: Vec<Level>,
}

impl Study {
    fn error_at(&self, dx: f64) -> Result<f64, String> {
        let level = self
            .levels
            .iter()
            .find(|l| (l.dx / dx - 1.0).abs() < 0.01)
            .ok_or_else(|| format!("no level at dx {dx:.2e}"))?;
        match (level.linf, &level.missing) {
            (Some(e), _) => Ok(e),
            (None, Some(why)) => Err(format!("dx {dx:.2e} {why}")),
            (None, None) => Err(format!("dx {dx:.2e} has no error")),
        }
    }

    /// Rates between consecutive levels; an error names the first missing level.
    fn rates(&self) -> Result<Vec<f64>, String> {
        for l in &self.levels {
            if l.linf.is_none() {
                return Err(format!(
                    "dx {:.2e} {}",
                    l.dx,
                    l.missing.as_deref().unwrap_or("has no error")
                ));
            }
        }
        Ok(self
            .levels
            .windows(2)
            .map(|w| observed_rate(w[0].linf.unwrap(), w[1].linf.unwrap(), w[0].dx, w[1].dx).unwrap())
            .collect())
    }

    fn stable(&self) -> bool {
        self.levels.iter().filter(|l| l.linf.is_some()).all(|l| l.stable)
    }

    fn label(&self) -> String {
        format!("{} {}", self.name, self.scheme.name())
    }
}

/// Work of one level in node-step-control units.
fn work_units(name: &str, dx: f64, study: &StudyConfig) -> f64 {
    let problem = problems::benchmark(name, dx).expect("known problem");
    let grid = problem.grid(dx).expect("grid");
    let cfg = level_config(&problem, &grid, study).expect("config");
    let (steps, _) = solver::time_steps(study.t_end.unwrap_or(problem.horizon), cfg.dt);
    grid.len() as f64 * steps as f64 * problem.controls.len() as f64
}

struct Runner {
    budget_s: f64,
    /// Seconds per work unit measured so far, per scheme.
    cost: Vec<(Scheme, f64)>,
    started: Instant,
}

impl Runner {
    fn new() -> Self {
        let budget_s = std::env::var(BUDGET_ENV)
            .ok()
            .and_then(|v| v.trim().parse().ok())
            .unwrap_or(DEFAULT_BUDGET_S);
        println!("per-level budget {budget_s} s ({BUDGET_ENV})");
        Self {
            budget_s,
            cost: Vec::new(),
            started: Instant::now(),
        }
    }

    fn study(&mut self, name: &'static str, scheme: Scheme, levels: usize) -> Study {
        let study = StudyConfig::for_problem(name, scheme);
        let cubic = scheme == Scheme::Mcsl;
        let mut out = Study {
            name,
            scheme,
            levels: Vec::new(),
        };
        // seconds per unit of the previous level of this study
        let mut last_rate: Option<f64> = None;
        for level in 0..levels {
            let dx = problems::level_dx(name, level, cubic).expect("known problem");
            let units = work_units(name, dx, &study);
            let rate = last_rate.or_else(|| {
                self.cost
                    .iter()
                    .filter(|(s, _)| *s == scheme)
                    .map(|(_, r)| *r)
                    .reduce(f64::max)
            });
            let k = scheme.k(dx);
            if let Some(rate) = rate {
                let predicted = rate * units;
                if predicted > self.budget_s {
                    out.levels.push(Level {
                        dx,
                        dt: f64::NAN,
                        k,
                        linf: None,
                        wall_s: 0.0,
                        stable: true,
                        missing: Some(format!(
                            "not run: predicted {predicted:.0} s over the {:.0} s budget",
                            self.budget_s
                        )),
                    });
                    println!("  {:<26} dx {dx:.3e}  skipped, predicted {predicted:.0} s", out.label());
                    continue;
                }
            }
            let level = match run_level(name, dx, &study) {
                Ok(r) => {
                    let rate = r.wall_s / units;
                    last_rate = Some(rate);
                    self.cost.push((scheme, rate));
                    Level {
                        dx,
                        dt: r.output.dt,
                        k,
                        linf: r.norms.map(|n| n.linf),
                        wall_s: r.wall_s,
                        stable: r.output.stable(),
                        missing: None,
                    }
                }
                Err(e) => Level {
                    dx,
                    dt: f64::NAN,
                    k,
                    linf: None,
                    wall_s: 0.0,
                    stable: true,
                    missing: Some(format!("failed: {e}")),
                },
            };
            let rate = match (out.levels.last().and_then(|l| l.linf), level.linf) {
                (Some(e0), Some(e1)) => format!("{:.2}", observed_rate(e0, e1, out.levels.last().unwrap().dx, dx).unwrap()),
                _ => "-".into(),
            };
            println!(
                "  {:<26} dx {dx:.3e}  dt {:.3e}  linf {}  rate {rate:>5}  wall {:.1} s{}",
                out.label(),
                level.dt,
                level.linf.map_or("-".into(), |e| format!("{e:.3e}")),
                level.wall_s,
                level.missing.as_deref().map_or(String::new(), |m| format!("  ({m})")),
            );
            out.levels.push(level);
        }
        out
    }
}

struct Verdict {
    passed: bool,
    detail: String,
}

impl Verdict {
    fn new() -> Self {
        Self {
            passed: true,
            detail: String::new(),
        }
    }

    fn part(&mut self, ok: bool, text: impl AsRef<str>) {
        self.passed &= ok;
        if !self.detail.is_empty() {
            self.detail.push_str("; ");
        }
        let _ = write!(self.detail, "{}{}", if ok { "" } else { "NOT " }, text.as_ref());
    }

    fn missing(&mut self, text: impl AsRef<str>) {
        self.part(false, text);
    }

    fn rates_in(&mut self, study: &Study, skip: usize, lo: f64, hi: f64) {
        match study.rates() {
            Ok(r) => {
                let r = &r[skip.min(r.len())..];
                let ok = !r.is_empty() && r.iter().all(|x| (lo..=hi).contains(x));
                self.part(ok, format!("{} rates {} in [{lo}, {hi}]", study.label(), fmt_list(r)));
            }
            Err(why) => self.missing(format!("{} rates: {why}", study.label())),
        }
    }

    fn error_within_factor(&mut self, study: &Study, dx: f64, reference: f64) {
        match study.error_at(dx) {
            Ok(e) => {
                let ratio = e / reference;
                self.part(
                    ratio <= ERROR_FACTOR && ratio >= 1.0 / ERROR_FACTOR,
                    format!(
                        "{} error {e:.3e} vs {reference:.2e} (ratio {ratio:.2}) within factor {ERROR_FACTOR}",
                        study.label()
                    ),
                );
            }
            Err(why) => self.missing(format!("{} error: {why}", study.label())),
        }
    }
}

fn fmt_list(v: &[f64]) -> String {
    format!("[{}]", v.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join(", "))
}

fn report(name: &str, v: &Verdict) -> bool {
    println!("{} {name}: {}", if v.passed { "PASS" } else { "FAIL" }, v.detail);
    v.passed
}

/// Scaling of the worst-case error estimate for the given discretization.
fn bound_scaling(dt: f64, k: f64, dx: f64) -> f64 {
    dt.powf(0.25) + k.sqrt() + dx / (k * k)
}

#[test]
fn acceptance() {
    slhjb::configure_threads();
    let mut runner = Runner::new();
    let mut results = Vec::new();
    let mut all_runs: Vec<&Study> = Vec::new();
    let dx1 = problems::level_dx("smooth_linear_b01", 1, false).unwrap();

    // smooth linear problem, both noise levels
    let b01_lisl = runner.study("smooth_linear_b01", Scheme::Lisl, 4);
    let b01_mcsl = runner.study("smooth_linear_b01", Scheme::Mcsl, 4);
    let mut v = Verdict::new();
    v.rates_in(&b01_lisl, 1, 0.85, 1.15);
    v.error_within_factor(&b01_lisl, dx1, reference::SMOOTH_B01_LISL);
    v.rates_in(&b01_mcsl, 0, 1.9, 2.1);
    v.error_within_factor(&b01_mcsl, dx1, reference::SMOOTH_B01_MCSL);
    results.push(report("smooth problem with beta^2 = 0.1", &v));

    let b0_lisl = runner.study("smooth_linear_b0", Scheme::Lisl, 4);
    let b0_mcsl = runner.study("smooth_linear_b0", Scheme::Mcsl, 4);
    let mut v = Verdict::new();
    v.rates_in(&b0_lisl, 1, 0.85, 1.15);
    v.error_within_factor(&b0_lisl, dx1, reference::SMOOTH_B0_LISL);
    v.rates_in(&b0_mcsl, 0, 1.9, 2.1);
    v.error_within_factor(&b0_mcsl, dx1, reference::SMOOTH_B0_MCSL);
    results.push(report("smooth problem with beta = 0", &v));

    // non-smooth solution: reduced orders
    let ns_lisl = runner.study("nonsmooth_linear", Scheme::Lisl, 3);
    let ns_mcsl = runner.study("nonsmooth_linear", Scheme::Mcsl, 3);
    let mut v = Verdict::new();
    v.rates_in(&ns_lisl, 0, 0.4, 0.6);
    v.rates_in(&ns_mcsl, 0, 0.9, 1.1);
    results.push(report("non-smooth problem", &v));

    // control problems
    let mut v = Verdict::new();
    let mut control = Vec::new();
    for (name, lisl_ref, mcsl_ref) in [
        ("control_a", reference::CONTROL_A_LISL, reference::CONTROL_A_MCSL),
        ("control_b", reference::CONTROL_B_LISL, reference::CONTROL_B_MCSL),
    ] {
        let lisl = runner.study(name, Scheme::Lisl, 3);
        let mcsl = runner.study(name, Scheme::Mcsl, 3);
        v.rates_in(&lisl, 0, 0.85, 1.15);
        v.error_within_factor(&lisl, dx1, lisl_ref);
        v.rates_in(&mcsl, 0, 1.9, 2.1);
        v.error_within_factor(&mcsl, dx1, mcsl_ref);
        control.push(lisl);
        control.push(mcsl);
    }
    results.push(report("control problems", &v));

    // superreplication test with policy iteration
    let sr_lisl = runner.study("superrep_test", Scheme::Lisl, 3);
    let sr_mcsl = runner.study("superrep_test", Scheme::Mcsl, 3);
    let mut v = Verdict::new();
    v.rates_in(&sr_lisl, 0, 0.95, 1.25);
    v.rates_in(&sr_mcsl, 0, 1.7, 2.3);
    for (study, refs) in [
        (&sr_lisl, reference::SUPERREP_LISL),
        (&sr_mcsl, reference::SUPERREP_MCSL),
    ] {
        for (level, r) in study.levels.iter().zip(refs) {
            match level.linf {
                Some(e) => {
                    let rel = (e - r).abs() / r;
                    v.part(
                        rel <= SUPERREP_REL,
                        format!("{} dx {:.2e} error {e:.3e} vs {r:.2e} within {SUPERREP_REL}", study.label(), level.dx),
                    );
                }
                None => v.missing(format!(
                    "{} dx {:.2e} {}",
                    study.label(),
                    level.dx,
                    level.missing.as_deref().unwrap_or("has no error")
                )),
            }
        }
    }
    match sr_lisl.levels.get(2) {
        Some(l) if l.linf.is_some() => {
            let ratio = l.wall_s / reference::SUPERREP_LISL_FINE_SECONDS;
            v.part(
                ratio <= RUNTIME_FACTOR && ratio >= 1.0 / RUNTIME_FACTOR,
                format!(
                    "lisl dx {:.2e} wall {:.1} s vs {} s within factor {RUNTIME_FACTOR}",
                    l.dx,
                    l.wall_s,
                    reference::SUPERREP_LISL_FINE_SECONDS
                ),
            );
        }
        _ => v.missing("lisl runtime: finest level has no result"),
    }
    results.push(report("superreplication test", &v));

    // property suites and the stability bound on every run above
    all_runs.extend([
        &b01_lisl, &b01_mcsl, &b0_lisl, &b0_mcsl, &ns_lisl, &ns_mcsl, &sr_lisl, &sr_mcsl,
    ]);
    all_runs.extend(control.iter());
    let mut v = Verdict::new();
    for suite in Suite::ALL {
        let rep = run_suite(suite, DEFAULT_SEED).expect("suite runs");
        for c in rep.checks.iter().filter(|c| !c.passed) {
            println!("  {c}");
        }
        v.part(rep.passed(), format!("{} suite ({} checks)", suite.name(), rep.checks.len()));
    }
    let unstable: Vec<String> = all_runs.iter().filter(|s| !s.stable()).map(|s| s.label()).collect();
    v.part(
        unstable.is_empty(),
        format!(
            "max-norm bound on every run{}",
            if unstable.is_empty() {
                String::new()
            } else {
                format!(" (violated by {})", unstable.join(", "))
            }
        ),
    );
    // time orders on the smooth problem
    for (theta, target, tol) in [(0.0, 1.0, 0.2), (0.5, 2.0, 0.3), (1.0, 1.0, 0.2)] {
        let rates = temporal_rates(theta).expect("temporal study runs");
        let last = *rates.last().unwrap();
        v.part(
            (last - target).abs() <= tol,
            format!("time order for theta {theta}: {last:.2} within {target} +- {tol}"),
        );
    }
    results.push(report("property suites", &v));

    // worst-case estimate as an upper envelope on the smooth study
    let mut v = Verdict::new();
    let mut worst = 0.0f64;
    let mut checked = 0;
    for study in [&b01_lisl, &b01_mcsl] {
        for l in study.levels.iter().filter(|l| l.linf.is_some()) {
            let ratio = l.linf.unwrap() / bound_scaling(l.dt, l.k, l.dx);
            worst = worst.max(ratio);
            checked += 1;
        }
    }
    v.part(
        checked > 0 && worst <= BOUND_FACTOR,
        format!("largest error / estimate scaling {worst:.2e} over {checked} levels, at most {BOUND_FACTOR}"),
    );
    results.push(report("error estimate envelope", &v));

    println!("total wall {:.0} s", runner.started.elapsed().as_secs_f64());
    let failed = results.iter().filter(|p| !**p).count();
    assert_eq!(failed, 0, "{failed} of {} acceptance criteria failed", results.len());
}
