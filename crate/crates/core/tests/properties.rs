use std::sync::Arc;

use proptest::prelude::*;
use slhjb::bench::{ConvergenceRow, ConvergenceTable};
use slhjb::boundary::{BoundarySpec, OverstepPolicy};
use slhjb::interp::cubic::{in_monotone_region, limit_slopes};
use slhjb::problem::{ClosureCoefficients, ControlSet, Problem};
use slhjb::{
    displacement_set, multilinear_weights, problems, run, theta_step, verify_y1, Grid, GridFunction,
    InterpKind, Interpolant, SchemeConfig, SolverKind, Variant,
};

fn small_grid() -> impl Strategy<Value = Grid> {
    (1usize..=3)
        .prop_flat_map(|d| {
            (
                prop::collection::vec(-3.0f64..0.0, d),
                prop::collection::vec(0.2f64..4.0, d),
                prop::collection::vec(5usize..10, d),
            )
        })
        .prop_map(|(lo, len, n)| {
            let hi: Vec<f64> = lo.iter().zip(&len).map(|(l, w)| l + w).collect();
            Grid::new(&lo, &hi, &n).unwrap()
        })
}

/// Diffusion with a full 2x2 sigma on [-1, 1]^2, constant Dirichlet data `g`.
fn diffusion_problem(g: f64, source: f64) -> Problem {
    let coefficients = ClosureCoefficients::diffusion(
        2,
        2,
        Arc::new(|_, x: &[f64], _, out: &mut [f64]| {
            out.copy_from_slice(&[0.6 + 0.2 * x[1], 0.3, -0.2 * x[0], 0.5])
        }),
        Arc::new(move |_, _, _| source),
    );
    Problem {
        name: "diffusion".into(),
        lower: vec![-1.0, -1.0],
        upper: vec![1.0, 1.0],
        coefficients: Arc::new(coefficients),
        initial: Arc::new(move |_| g),
        exact: None,
        controls: ControlSet::none(),
        boundary: BoundarySpec::dirichlet(2, Arc::new(move |_, _| g), OverstepPolicy::ClampToBoundary),
        horizon: 1.0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn limited_slopes_lie_in_monotone_region(
        d0 in -50.0f64..50.0,
        d1 in -50.0f64..50.0,
        delta in prop_oneof![-10.0f64..-1e-6, 1e-6f64..10.0],
    ) {
        let (a, b) = limit_slopes(d0, d1, delta);
        prop_assert!(in_monotone_region(a / delta, b / delta, 1e-12), "{a} {b} {delta}");
    }

    #[test]
    fn limiter_keeps_admissible_slopes(a in 0.0f64..3.0, b in 0.0f64..3.0, delta in 0.1f64..5.0) {
        let (la, lb) = limit_slopes(a * delta, b * delta, delta);
        prop_assert!((la - a * delta).abs() <= 1e-12 * delta);
        prop_assert!((lb - b * delta).abs() <= 1e-12 * delta);
    }

    #[test]
    fn multilinear_weights_are_a_positive_partition(
        grid in small_grid(),
        frac in prop::collection::vec(0.0f64..=1.0, 3),
        coef in prop::collection::vec(-2.0f64..2.0, 4),
    ) {
        let p: Vec<f64> = (0..grid.dim())
            .map(|a| grid.lower()[a] + frac[a] * (grid.upper()[a] - grid.lower()[a]))
            .collect();
        let w = multilinear_weights(&grid, &p).unwrap();
        let lin = |x: &[f64]| coef[0] + x.iter().zip(&coef[1..]).map(|(x, c)| x * c).sum::<f64>();
        let u = GridFunction::from_fn(&grid, lin);
        prop_assert!(w.iter().all(|&(_, v)| v >= 0.0));
        let sum: f64 = w.iter().map(|(_, v)| v).sum();
        prop_assert!((sum - 1.0).abs() <= 1e-12);
        let val: f64 = w.iter().map(|&(j, v)| v * u.values[j]).sum();
        prop_assert!((val - lin(&p)).abs() <= 1e-12);
    }

    #[test]
    fn monotone_cubic_preserves_monotone_data(
        steps in prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..1e-3, 0.0f64..2.0], 4..14),
        decreasing in any::<bool>(),
    ) {
        let sign = if decreasing { -1.0 } else { 1.0 };
        let mut v = 0.0;
        let mut data = vec![v];
        for s in &steps {
            v += sign * s;
            data.push(v);
        }
        let n = data.len();
        let grid = Grid::new(&[0.0], &[1.0], &[n]).unwrap();
        let interp = Interpolant::new(&grid, &data, InterpKind::MonotoneCubic).unwrap();
        let mut last = data[0];
        for i in 1..=400 {
            let val = interp.value(&[i as f64 / 400.0]).unwrap();
            prop_assert!(sign * (val - last) >= -1e-12, "reversal at sample {i}");
            last = val;
        }
    }

    #[test]
    fn cubic_weights_are_a_positive_partition(
        vals in prop::collection::vec(-1.0f64..1.0, 49),
        x in -1.0f64..=1.0,
        y in -1.0f64..=1.0,
    ) {
        let grid = Grid::new(&[-1.0, -1.0], &[1.0, 1.0], &[7, 7]).unwrap();
        let interp = Interpolant::new(&grid, &vals, InterpKind::MonotoneCubic).unwrap();
        let mut w = slhjb::interp::Weights::default();
        interp.weights(&[x, y], &mut w).unwrap();
        let sum: f64 = w.iter().map(|(_, v)| v).sum();
        prop_assert!(w.iter().all(|(_, v)| v >= 0.0));
        prop_assert!((sum - 1.0).abs() <= 1e-12);
        prop_assert!((w.apply(&vals) - interp.value(&[x, y]).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn moment_conditions_hold(
        variant in 1u8..=5,
        n in 1usize..=3,
        p in 1usize..=3,
        raw_sigma in prop::collection::vec(-1.0f64..1.0, 9),
        raw_b in prop::collection::vec(-1.0f64..1.0, 3),
        log_k in -3.0f64..0.0,
    ) {
        let variant = Variant::from_number(variant).unwrap();
        let sigma: Vec<f64> = if variant == Variant::DriftOnly {
            vec![0.0; n * p]
        } else {
            raw_sigma[..n * p].to_vec()
        };
        let b: Vec<f64> = if variant == Variant::Diffusion { vec![0.0; n] } else { raw_b[..n].to_vec() };
        let k = 10f64.powf(log_k);
        let ds = displacement_set(&sigma, p, &b, k, variant).unwrap();
        let report = verify_y1(&ds, &sigma, p, &b).unwrap();
        prop_assert!(report.passes(), "{report:?}");
    }

    #[test]
    fn csv_round_trips_bit_exactly(
        rows in prop::collection::vec(
            (1e-4f64..1.0, 1e-8f64..1.0, 1e-4f64..1.0, 0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0, 0.0f64..1e3),
            1..6,
        ),
    ) {
        let mut table = ConvergenceTable::default();
        for (dx, dt, k, linf, l2, l1, wall_s) in rows {
            table.push(ConvergenceRow {
                dx, dt, k, linf, l2, l1,
                rate_linf: None, rate_l2: None, rate_l1: None,
                wall_s,
            });
        }
        let back = ConvergenceTable::parse_csv(&table.to_csv()).unwrap();
        prop_assert_eq!(back, table);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn explicit_step_preserves_order(
        seed_u in prop::collection::vec(-1.0f64..1.0, 21 * 21),
        gap in prop::collection::vec(0.0f64..1.0, 21 * 21),
        t in 0.0f64..0.5,
    ) {
        let problem = problems::smooth_linear(0.3);
        let grid = Grid::new(&problem.lower, &problem.upper, &[21, 21]).unwrap();
        let mut cfg = SchemeConfig::new(1.0, grid.dx().sqrt(), InterpKind::Multilinear);
        cfg.dt = slhjb::cfl_check(&cfg, &problem, &grid, 0.0).unwrap().max_dt;
        let u = GridFunction::new(&grid, seed_u).unwrap();
        let v = GridFunction::new(&grid, u.values.iter().zip(&gap).map(|(a, g)| a + g).collect()).unwrap();
        let (su, _) = theta_step(&problem, &grid, &cfg, &u, t).unwrap();
        let (sv, _) = theta_step(&problem, &grid, &cfg, &v, t).unwrap();
        for (a, b) in su.values.iter().zip(&sv.values) {
            prop_assert!(*a <= b + 1e-10);
        }
    }

    #[test]
    fn implicit_steps_preserve_order(
        seed_u in prop::collection::vec(-1.0f64..1.0, 21 * 21),
        gap in prop::collection::vec(0.0f64..1.0, 21 * 21),
        howard in any::<bool>(),
        theta in prop_oneof![Just(0.5), Just(1.0)],
    ) {
        let problem = problems::smooth_linear(0.3);
        let grid = Grid::new(&problem.lower, &problem.upper, &[21, 21]).unwrap();
        let k = grid.dx().sqrt();
        let mut cfg = SchemeConfig::new(1.0, k, InterpKind::Multilinear);
        cfg.theta = theta;
        cfg.solver = if howard { SolverKind::Howard } else { SolverKind::FixedPoint };
        cfg.tol = 1e-13;
        cfg.max_iter = 10_000;
        cfg.dt = slhjb::cfl_check(&cfg, &problem, &grid, 0.0).unwrap().max_dt.min(0.5);
        let u = GridFunction::new(&grid, seed_u).unwrap();
        let v = GridFunction::new(&grid, u.values.iter().zip(&gap).map(|(a, g)| a + g).collect()).unwrap();
        let (su, _) = theta_step(&problem, &grid, &cfg, &u, 0.0).unwrap();
        let (sv, _) = theta_step(&problem, &grid, &cfg, &v, 0.0).unwrap();
        for (a, b) in su.values.iter().zip(&sv.values) {
            prop_assert!(*a <= b + 1e-10);
        }
    }

    #[test]
    fn constants_are_preserved(g in -5.0f64..5.0, cubic in any::<bool>(), theta in prop_oneof![Just(0.0), Just(1.0)]) {
        let problem = diffusion_problem(g, 0.0);
        let grid = problem.grid(0.1).unwrap();
        let kind = if cubic { InterpKind::MonotoneCubic } else { InterpKind::Multilinear };
        let k = if cubic { 0.1 } else { 0.1f64.sqrt() };
        let mut cfg = SchemeConfig::new(1.0, k, kind);
        cfg.theta = theta;
        if theta > 0.0 {
            cfg.solver = SolverKind::FixedPoint;
        }
        cfg.dt = slhjb::cfl_check(&cfg, &problem, &grid, 0.0).unwrap().max_dt.min(0.1);
        let u = GridFunction::from_fn(&grid, |_| g);
        let (s, _) = theta_step(&problem, &grid, &cfg, &u, 0.0).unwrap();
        for v in &s.values {
            prop_assert!((v - g).abs() <= 1e-12 * (1.0 + g.abs()));
        }
    }
}

#[test]
fn max_norm_does_not_grow_without_source() {
    let mut problem = diffusion_problem(0.0, 0.0);
    problem.initial = Arc::new(|x: &[f64]| (3.0 * x[0]).sin() * (2.0 * x[1]).cos());
    let grid = problem.grid(0.05).unwrap();
    let k = 0.05f64.sqrt();
    let mut cfg = SchemeConfig::new(1.0, k, InterpKind::Multilinear);
    cfg.dt = slhjb::cfl_check(&cfg, &problem, &grid, 0.0).unwrap().max_dt;
    let mut last = f64::INFINITY;
    let out = slhjb::solver::run_with_observer(&problem, &grid, &cfg, 0.5, |_, _, u| {
        let m = u.max_abs();
        assert!(m <= last + 1e-15, "max norm grew from {last} to {m}");
        last = m;
        Ok(())
    })
    .unwrap();
    assert!(out.stable());
}

#[test]
fn runs_are_bit_identical_across_thread_counts() {
    let problem = problems::control_a(std::f64::consts::PI / 10.0);
    let dx = std::f64::consts::PI / 20.0;
    let grid = problem.grid(dx).unwrap();
    let mut cfg = SchemeConfig::new(1.0, dx, InterpKind::MonotoneCubic);
    cfg.variant = Variant::Combined;
    cfg.dt = slhjb::cfl_check(&cfg, &problem, &grid, 0.0).unwrap().max_dt;
    let solve = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run(&problem, &grid, &cfg, 0.1).unwrap().solution.values)
    };
    let one = solve(1);
    let again = solve(1);
    let four = solve(4);
    assert!(one.iter().zip(&again).all(|(a, b)| a.to_bits() == b.to_bits()));
    assert!(one.iter().zip(&four).all(|(a, b)| a.to_bits() == b.to_bits()));
}
