//! Error norms, convergence studies and their CSV output.

pub mod config;
pub mod verify;

use std::fmt::Write as _;
use std::io::Write;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::interp::InterpKind;
use crate::operators::{recommend_variant, Variant};
use crate::problem::Problem;
use crate::problems;
use crate::solver::{self, RunOutput, SchemeConfig, SolverKind};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms {
    pub linf: f64,
    pub l2: f64,
    pub l1: f64,
}

/// Max, L2 and L1 norms of `u - exact`; the integral norms use trapezoidal cell weights.
pub fn error_norms(grid: &Grid, u: &GridFunction, exact: &[f64]) -> Result<Norms> {
    if u.len() != grid.len() || exact.len() != grid.len() {
        return Err(Error::Shape("error norms need values on every node".into()));
    }
    let mut n = Norms {
        linf: 0.0,
        l2: 0.0,
        l1: 0.0,
    };
    for j in 0..grid.len() {
        let e = (u.values[j] - exact[j]).abs();
        let w = grid.quadrature_weight(j);
        n.linf = n.linf.max(e);
        n.l2 += w * e * e;
        n.l1 += w * e;
    }
    n.l2 = n.l2.sqrt();
    Ok(n)
}

/// `(ln e1 - ln e0) / (ln dx1 - ln dx0)`, undefined for nonpositive or nonfinite input.
pub fn observed_rate(e0: f64, e1: f64, dx0: f64, dx1: f64) -> Option<f64> {
    let ok = |v: f64| v > 0.0 && v.is_finite();
    if !(ok(e0) && ok(e1) && ok(dx0) && ok(dx1)) || dx0 == dx1 {
        return None;
    }
    Some((e1.ln() - e0.ln()) / (dx1.ln() - dx0.ln()))
}

/// Interpolation and step-size rules of a scheme family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Multilinear interpolation with `k = sqrt(dx)`.
    Lisl,
    /// Monotone cubic interpolation with `k = dx`.
    Mcsl,
}

impl Scheme {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lisl" => Ok(Scheme::Lisl),
            "mcsl" => Ok(Scheme::Mcsl),
            _ => Err(Error::Parse(format!("unknown scheme '{s}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Lisl => "lisl",
            Scheme::Mcsl => "mcsl",
        }
    }

    pub fn interp(self) -> InterpKind {
        match self {
            Scheme::Lisl => InterpKind::Multilinear,
            Scheme::Mcsl => InterpKind::MonotoneCubic,
        }
    }

    pub fn k(self, dx: f64) -> f64 {
        match self {
            Scheme::Lisl => dx.sqrt(),
            Scheme::Mcsl => dx,
        }
    }
}

/// Template applied to every level of a study.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub scheme: Scheme,
    pub theta: f64,
    pub solver: SolverKind,
    /// Displacement variant; the problem's recommendation when `None`.
    pub variant: Option<Variant>,
    /// Final time; the problem horizon when `None`.
    pub t_end: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
}

impl StudyConfig {
    /// Defaults per problem: explicit steps for the parabolic problems,
    /// implicit policy iteration for the superreplication problems.
    pub fn for_problem(name: &str, scheme: Scheme) -> Self {
        let implicit = name.starts_with("superrep");
        Self {
            scheme,
            theta: if implicit { 1.0 } else { 0.0 },
            solver: if implicit {
                SolverKind::Howard
            } else {
                SolverKind::Explicit
            },
            variant: None,
            t_end: None,
            tol: 1e-10,
            max_iter: 200,
        }
    }
}

/// Scheme parameters for one level: `k` from the scheme, `dt = k^2`, reduced to
/// the admissible step when `theta < 1`.
pub fn level_config(problem: &Problem, grid: &Grid, study: &StudyConfig) -> Result<SchemeConfig> {
    let dx = grid.dx();
    let k = study.scheme.k(dx);
    let mut cfg = SchemeConfig::new(k * k, k, study.scheme.interp());
    cfg.theta = study.theta;
    cfg.solver = study.solver;
    cfg.variant = study.variant.unwrap_or_else(|| recommend_variant(problem));
    cfg.tol = study.tol;
    cfg.max_iter = study.max_iter;
    if study.theta < 1.0 {
        let cfl = solver::cfl_check(&cfg, problem, grid, 0.0)?;
        if !cfl.admissible {
            cfg.dt = cfl.max_dt;
        }
    }
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub dx: f64,
    pub dt: f64,
    pub k: f64,
    pub linf: f64,
    pub l2: f64,
    pub l1: f64,
    pub rate_linf: Option<f64>,
    pub rate_l2: Option<f64>,
    pub rate_l1: Option<f64>,
    pub wall_s: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
}

pub const CSV_HEADER: &str = "dx,dt,k,linf,l2,l1,rate_linf,rate_l2,rate_l1,wall_s";

fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        String::new()
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_default()
}

impl ConvergenceTable {
    /// Appends a row, computing its rates against the previous row.
    pub fn push(&mut self, mut row: ConvergenceRow) {
        if let Some(prev) = self.rows.last() {
            row.rate_linf = observed_rate(prev.linf, row.linf, prev.dx, row.dx);
            row.rate_l2 = observed_rate(prev.l2, row.l2, prev.dx, row.dx);
            row.rate_l1 = observed_rate(prev.l1, row.l1, prev.dx, row.dx);
        } else {
            row.rate_linf = None;
            row.rate_l2 = None;
            row.rate_l1 = None;
        }
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                fmt_num(r.dx),
                fmt_num(r.dt),
                fmt_num(r.k),
                fmt_num(r.linf),
                fmt_num(r.l2),
                fmt_num(r.l1),
                fmt_opt(r.rate_linf),
                fmt_opt(r.rate_l2),
                fmt_opt(r.rate_l1),
                fmt_num(r.wall_s)
            );
        }
        s
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        w.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == CSV_HEADER => {}
            other => {
                return Err(Error::Parse(format!("unexpected header {other:?}")));
            }
        }
        let num = |s: &str| -> Result<f64> {
            if s.is_empty() {
                Ok(f64::NAN)
            } else {
                s.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("bad number '{s}': {e}")))
            }
        };
        let opt = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                num(s).map(Some)
            }
        };
        let mut rows = Vec::new();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 10 {
                return Err(Error::Parse(format!("expected 10 fields, got {}", f.len())));
            }
            rows.push(ConvergenceRow {
                dx: num(f[0])?,
                dt: num(f[1])?,
                k: num(f[2])?,
                linf: num(f[3])?,
                l2: num(f[4])?,
                l1: num(f[5])?,
                rate_linf: opt(f[6])?,
                rate_l2: opt(f[7])?,
                rate_l1: opt(f[8])?,
                wall_s: num(f[9])?,
            });
        }
        Ok(Self { rows })
    }
}

/// Result of running one level of a study.
#[derive(Debug, Clone)]
pub struct LevelResult {
    pub grid: Grid,
    pub config: SchemeConfig,
    pub output: RunOutput,
    pub norms: Option<Norms>,
    pub wall_s: f64,
}

/// Runs the named problem at spacing `dx` with the study template.
pub fn run_level(name: &str, dx: f64, study: &StudyConfig) -> Result<LevelResult> {
    let problem = problems::benchmark(name, dx)?;
    let grid = problem.grid(dx)?;
    let config = level_config(&problem, &grid, study)?;
    let t_end = study.t_end.unwrap_or(problem.horizon);
    let start = Instant::now();
    let output = solver::run(&problem, &grid, &config, t_end)?;
    let wall_s = start.elapsed().as_secs_f64();
    let norms = match problem.exact_on(&grid, t_end) {
        Some(exact) => Some(error_norms(&grid, &output.solution, &exact)?),
        None => None,
    };
    Ok(LevelResult {
        grid,
        config,
        output,
        norms,
        wall_s,
    })
}

impl LevelResult {
    pub fn row(&self) -> ConvergenceRow {
        let n = self.norms.unwrap_or(Norms {
            linf: f64::NAN,
            l2: f64::NAN,
            l1: f64::NAN,
        });
        ConvergenceRow {
            dx: self.grid.dx(),
            dt: self.output.dt,
            k: self.config.k,
            linf: n.linf,
            l2: n.l2,
            l1: n.l1,
            rate_linf: None,
            rate_l2: None,
            rate_l1: None,
            wall_s: self.wall_s,
        }
    }
}

/// Runs `levels` successive refinements of the named problem.
///
/// A level whose run fails is recorded with empty error fields and the study continues.
pub fn run_study(name: &str, levels: usize, study: &StudyConfig) -> Result<ConvergenceTable> {
    let cubic = study.scheme == Scheme::Mcsl;
    let mut table = ConvergenceTable::default();
    for level in 0..levels {
        let dx = problems::level_dx(name, level, cubic)?;
        let start = Instant::now();
        let row = match run_level(name, dx, study) {
            Ok(r) => r.row(),
            Err(Error::UnknownProblem(p)) => return Err(Error::UnknownProblem(p)),
            Err(e) => {
                eprintln!("level {level} (dx = {dx}) failed: {e}");
                ConvergenceRow {
                    dx,
                    dt: f64::NAN,
                    k: study.scheme.k(dx),
                    linf: f64::NAN,
                    l2: f64::NAN,
                    l1: f64::NAN,
                    rate_linf: None,
                    rate_l2: None,
                    rate_l1: None,
                    wall_s: start.elapsed().as_secs_f64(),
                }
            }
        };
        table.push(row);
    }
    Ok(table)
}

/// Writes `x1,...,xN,u` rows for every node.
pub fn write_surface(grid: &Grid, u: &GridFunction, mut w: impl Write) -> Result<()> {
    let mut header: Vec<String> = (1..=grid.dim()).map(|a| format!("x{a}")).collect();
    header.push("u".into());
    writeln!(w, "{}", header.join(","))?;
    let mut p = vec![0.0; grid.dim()];
    for j in 0..grid.len() {
        grid.node_coords(j, &mut p);
        let mut line = String::new();
        for v in &p {
            let _ = write!(line, "{v},");
        }
        let _ = write!(line, "{}", u.values[j]);
        writeln!(w, "{line}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_error_norms() {
        let g = Grid::new(&[0.0, 0.0], &[1.0, 1.0], &[11, 7]).unwrap();
        let u = GridFunction::from_fn(&g, |p| p[0] + 0.25);
        let exact: Vec<f64> = (0..g.len()).map(|j| g.point(j)[0]).collect();
        let n = error_norms(&g, &u, &exact).unwrap();
        assert!((n.linf - 0.25).abs() < 1e-15);
        assert!((n.l2 - 0.25).abs() < 1e-14);
        assert!((n.l1 - 0.25).abs() < 1e-14);
    }

    #[test]
    fn rates() {
        assert!((observed_rate(1e-2, 2.5e-3, 0.1, 0.05).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(observed_rate(0.0, 1.0, 0.1, 0.05), None);
        assert_eq!(observed_rate(1.0, 1.0, 0.1, 0.1), None);
    }

    #[test]
    fn csv_round_trip() {
        let mut t = ConvergenceTable::default();
        for (i, dx) in [0.1, 0.05, 0.025].iter().enumerate() {
            t.push(ConvergenceRow {
                dx: *dx,
                dt: dx * dx / 3.0,
                k: dx.sqrt(),
                linf: 0.3 / 4f64.powi(i as i32),
                l2: 1e-7 * (i as f64 + 1.0),
                l1: std::f64::consts::PI * 1e-3,
                rate_linf: None,
                rate_l2: None,
                rate_l1: None,
                wall_s: 0.125,
            });
        }
        let csv = t.to_csv();
        assert!(csv.starts_with(CSV_HEADER));
        assert!(csv.lines().nth(1).unwrap().contains(",,,"));
        let back = ConvergenceTable::parse_csv(&csv).unwrap();
        assert_eq!(back, t);
    }
}
