use std::fs::File;
use std::io::{self, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use slhjb::bench::config::Settings;
use slhjb::bench::verify::{run_suite, Suite, DEFAULT_SEED};
use slhjb::bench::{self, error_norms, level_config, Scheme, StudyConfig};
use slhjb::operators::Variant;
use slhjb::{problems, solver, Error, InterpKind, Result, SolverKind};

#[derive(Parser)]
#[command(name = "slhjb", version, about = "Semi-Lagrangian HJB solver and benchmark harness")]
struct Cli {
    /// File of `key = value` lines supplying defaults for the subcommand's flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one benchmark problem and report errors against the exact solution.
    Solve(SolveArgs),
    /// Run a refinement study and write the convergence table as CSV.
    Study(StudyArgs),
    /// Run property suites; exits nonzero if any check fails.
    Verify(VerifyArgs),
}

#[derive(Args, Default)]
struct SolveArgs {
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    dx: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    /// `linear` or `cubic`.
    #[arg(long)]
    interp: Option<String>,
    /// Displacement set 1-5.
    #[arg(long)]
    variant: Option<u8>,
    /// `explicit`, `fixedpoint` or `howard`.
    #[arg(long)]
    solver: Option<String>,
    #[arg(long)]
    tend: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Surface CSV `x1,...,u` of the final level.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Default)]
struct StudyArgs {
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    levels: Option<usize>,
    /// `lisl` or `mcsl`.
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    tend: Option<f64>,
    /// CSV destination; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Default)]
struct VerifyArgs {
    /// One of y1, interp, monotone, stability, solvers, temporal; all when omitted.
    #[arg(long)]
    suite: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

fn fill<T: Clone>(flag: &mut Option<T>, file: Result<Option<T>>) -> Result<()> {
    if flag.is_none() {
        *flag = file?;
    }
    Ok(())
}

fn text(s: &Settings, key: &str) -> Result<Option<String>> {
    Ok(s.get(key).map(str::to_string))
}

fn parse_interp(s: &str) -> Result<InterpKind> {
    match s {
        "linear" => Ok(InterpKind::Multilinear),
        "cubic" => Ok(InterpKind::MonotoneCubic),
        _ => Err(Error::Parse(format!("unknown interpolation '{s}'"))),
    }
}

fn parse_solver(s: &str) -> Result<SolverKind> {
    match s {
        "explicit" => Ok(SolverKind::Explicit),
        "fixedpoint" => Ok(SolverKind::FixedPoint),
        "howard" => Ok(SolverKind::Howard),
        _ => Err(Error::Parse(format!("unknown solver '{s}'"))),
    }
}

fn solve(mut a: SolveArgs, s: &Settings) -> Result<()> {
    s.check_keys(&[
        "problem", "dx", "theta", "interp", "variant", "solver", "tend", "tol", "max_iter", "out",
    ])?;
    fill(&mut a.problem, text(s, "problem"))?;
    fill(&mut a.dx, s.get_f64("dx"))?;
    fill(&mut a.theta, s.get_f64("theta"))?;
    fill(&mut a.interp, text(s, "interp"))?;
    fill(&mut a.variant, s.get_usize("variant").map(|v| v.map(|v| v as u8)))?;
    fill(&mut a.solver, text(s, "solver"))?;
    fill(&mut a.tend, s.get_f64("tend"))?;
    fill(&mut a.tol, s.get_f64("tol"))?;
    fill(&mut a.max_iter, s.get_usize("max_iter"))?;
    fill(&mut a.out, text(s, "out").map(|o| o.map(PathBuf::from)))?;

    let name = a.problem.ok_or_else(|| Error::Config("--problem is required".into()))?;
    let interp = parse_interp(a.interp.as_deref().unwrap_or("linear"))?;
    let scheme = match interp {
        InterpKind::Multilinear => Scheme::Lisl,
        InterpKind::MonotoneCubic => Scheme::Mcsl,
    };
    let mut study = StudyConfig::for_problem(&name, scheme);
    if let Some(theta) = a.theta {
        study.theta = theta;
        if a.solver.is_none() {
            study.solver = if theta == 0.0 {
                SolverKind::Explicit
            } else {
                SolverKind::Howard
            };
        }
    }
    if let Some(sv) = &a.solver {
        study.solver = parse_solver(sv)?;
    }
    study.variant = a.variant.map(Variant::from_number).transpose()?;
    if let Some(tol) = a.tol {
        study.tol = tol;
    }
    if let Some(m) = a.max_iter {
        study.max_iter = m;
    }
    let dx = match a.dx {
        Some(dx) => dx,
        None => problems::level_dx(&name, 0, scheme == Scheme::Mcsl)?,
    };
    let problem = problems::benchmark(&name, dx)?;
    let grid = problem.grid(dx)?;
    let cfg = level_config(&problem, &grid, &study)?;
    let t_end = a.tend.unwrap_or(problem.horizon);
    let out = solver::run(&problem, &grid, &cfg, t_end)?;
    println!(
        "problem {name}: {} nodes, dx {}, k {}, dt {}, {} steps, theta {}, {} / {} / variant {}",
        grid.len(),
        grid.dx(),
        cfg.k,
        out.dt,
        out.steps,
        cfg.theta,
        cfg.interp.name(),
        cfg.solver.name(),
        cfg.variant.number()
    );
    let iters: usize = out.reports.iter().map(|r| r.iterations).sum();
    println!("solver iterations {iters}, wall {:.3} s", out.wall_s());
    if let Some(exact) = problem.exact_on(&grid, t_end) {
        let n = error_norms(&grid, &out.solution, &exact)?;
        println!("error linf {:e} l2 {:e} l1 {:e}", n.linf, n.l2, n.l1);
    }
    if !out.stable() {
        eprintln!("warning: the max-norm stability bound was exceeded");
    }
    if let Some(path) = a.out {
        bench::write_surface(&grid, &out.solution, BufWriter::new(File::create(path)?))?;
    }
    Ok(())
}

fn study(mut a: StudyArgs, s: &Settings) -> Result<()> {
    s.check_keys(&["problem", "levels", "scheme", "tend", "out"])?;
    fill(&mut a.problem, text(s, "problem"))?;
    fill(&mut a.levels, s.get_usize("levels"))?;
    fill(&mut a.scheme, text(s, "scheme"))?;
    fill(&mut a.tend, s.get_f64("tend"))?;
    fill(&mut a.out, text(s, "out").map(|o| o.map(PathBuf::from)))?;

    let name = a.problem.ok_or_else(|| Error::Config("--problem is required".into()))?;
    let levels = a.levels.unwrap_or(3);
    if levels < 2 {
        return Err(Error::Config("a study needs at least 2 levels".into()));
    }
    let scheme = Scheme::parse(a.scheme.as_deref().unwrap_or("lisl"))?;
    let mut cfg = StudyConfig::for_problem(&name, scheme);
    cfg.t_end = a.tend;
    let table = bench::run_study(&name, levels, &cfg)?;
    match a.out {
        Some(path) => table.write_csv(BufWriter::new(File::create(path)?)),
        None => table.write_csv(io::stdout().lock()),
    }
}

fn verify(mut a: VerifyArgs, s: &Settings) -> Result<bool> {
    s.check_keys(&["suite", "seed"])?;
    fill(&mut a.suite, text(s, "suite"))?;
    fill(&mut a.seed, s.get_usize("seed").map(|v| v.map(|v| v as u64)))?;
    let suites = match &a.suite {
        Some(name) => vec![Suite::parse(name)?],
        None => Suite::ALL.to_vec(),
    };
    let seed = a.seed.unwrap_or(DEFAULT_SEED);
    let mut ok = true;
    for suite in suites {
        let report = run_suite(suite, seed)?;
        println!("[{}]", suite.name());
        for c in &report.checks {
            println!("{c}");
        }
        ok &= report.passed();
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    slhjb::configure_threads();
    let settings = match &cli.config {
        Some(path) => match Settings::load(path) {
            Ok(s) => s,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        },
        None => Settings::default(),
    };
    let result = match cli.command {
        Command::Solve(a) => solve(a, &settings).map(|_| true),
        Command::Study(a) => study(a, &settings).map(|_| true),
        Command::Verify(a) => verify(a, &settings),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
