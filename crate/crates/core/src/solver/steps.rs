//! The three ways of advancing one time level.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::interp::{InterpKind, Interpolant};

use super::eval::{Nested, RowForm, StepContext, StepStats};
use super::anderson::Anderson;
use super::linear::{self, CsrMatrix};

pub(crate) struct StepOutcome {
    pub values: Vec<f64>,
    pub stats: StepStats,
    pub iterations: usize,
    pub residual: f64,
    pub policy_changes: usize,
    pub monotone: Option<bool>,
}

fn merge(a: StepStats, b: StepStats) -> Result<StepStats> {
    Ok(a.merge(b))
}

/// `U_j = U^{n-1}_j + dt inf_a sup_b { L_k[I U^{n-1}]_j + c U^{n-1}_j + f }`.
pub(crate) fn explicit(sc: &StepContext, prev: &[f64]) -> Result<StepOutcome> {
    if sc.dep.time_weight {
        return Err(Error::Unsupported(
            "time-weighted equations need an implicit solver".into(),
        ));
    }
    let interp = Interpolant::new(sc.grid, prev, sc.cfg.interp)?;
    let nb = sc.problem.controls.beta.len();
    let k = sc.cfg.k;
    let mut next = vec![0.0; prev.len()];
    let stats = next
        .par_iter_mut()
        .enumerate()
        .map_init(
            || sc.scratch(),
            |s, (j, out)| -> Result<StepStats> {
                let mut st = StepStats::default();
                if let Some(v) = sc.fixed_value(j) {
                    *out = v;
                    st.boundary_max = v.abs();
                    return Ok(st);
                }
                s.ext_max = 0.0;
                let uj = prev[j];
                let mut opt = Nested::hamiltonian(nb);
                sc.for_each_control(&interp, j, s, |ia, ib, t| {
                    st.record(t, k);
                    opt.push(ia, ib, t.lk + t.c * uj + t.f);
                })?;
                st.boundary_max = s.ext_max;
                *out = uj + sc.dt * opt.best;
                Ok(st)
            },
        )
        .try_reduce(StepStats::default, merge)?;
    Ok(StepOutcome {
        values: next,
        stats,
        iterations: 1,
        residual: 0.0,
        policy_changes: 0,
        monotone: None,
    })
}

/// Previous level with the fixed nodes set to their new boundary values.
fn starting_iterate(sc: &StepContext, prev: &[f64]) -> Vec<f64> {
    (0..prev.len())
        .into_par_iter()
        .map(|j| sc.fixed_value(j).unwrap_or(prev[j]))
        .collect()
}

fn blend(theta: f64, prev: &[f64], u: &[f64], out: &mut [f64]) {
    out.par_iter_mut()
        .enumerate()
        .for_each(|(j, o)| *o = (1.0 - theta) * prev[j] + theta * u[j]);
}

/// Scaled residual at node `j` for one control; a completely degenerate
/// equation on a Neumann face is replaced by equality with the inward neighbor.
#[inline]
fn control_residual(
    sc: &StepContext,
    j: usize,
    u: &[f64],
    prev: &[f64],
    ubar_j: f64,
    t: &super::eval::Terms,
) -> f64 {
    if t.degenerate() {
        if let Some(nb) = sc.layout.inward[j] {
            return u[j] - u[nb];
        }
    }
    t.tau * (u[j] - prev[j]) - sc.dt * (t.lk + t.c * ubar_j + t.f)
}

/// Suprema of the time weight and of `|c|` over nodes and controls, without interpolation.
fn weight_bounds(sc: &StepContext) -> Result<(f64, f64)> {
    let coeffs = &*sc.problem.coefficients;
    let controls = &sc.problem.controls;
    let n = sc.grid.dim();
    (0..sc.grid.len())
        .into_par_iter()
        .map(|j| {
            let mut x = [0.0; crate::grid::MAX_DIM];
            sc.grid.node_coords(j, &mut x);
            let mut ctx = crate::problem::NodeContext::new(sc.t_coeff, &x[..n]);
            coeffs.prepare(&mut ctx);
            let (mut tau, mut c) = (0.0f64, 0.0f64);
            for ia in 0..controls.alpha.len() {
                for ib in 0..controls.beta.len() {
                    let ctrl = controls.get(ia, ib);
                    if sc.dep.time_weight {
                        tau = tau.max(coeffs.time_weight(&ctx, ctrl));
                    } else {
                        tau = 1.0;
                    }
                    c = c.max(coeffs.discount(&ctx, ctrl).abs());
                }
            }
            Ok((tau, c))
        })
        .try_reduce(|| (0.0, 0.0), |a, b| Ok((a.0.max(b.0), a.1.max(b.1))))
}

/// Relaxed fixed-point iteration `U <- U - eps R(U)` (Jacobi ordering).
///
/// Stops when the update is below `tol` and the a-posteriori estimate
/// `|dU| q / (1 - q)` of the remaining error is below `tol` as well.
pub(crate) fn fixed_point(sc: &StepContext, prev: &[f64]) -> Result<StepOutcome> {
    fixed_point_from(sc, prev, starting_iterate(sc, prev))
}

fn fixed_point_from(sc: &StepContext, prev: &[f64], mut u: Vec<f64>) -> Result<StepOutcome> {
    let cfg = sc.cfg;
    let theta = cfg.theta;
    let eps = match cfg.relaxation {
        Some(e) => e,
        None => {
            let (sup_tau, sup_c) = weight_bounds(sc)?;
            let m = cfg.variant.pairs(sc.noise) as f64;
            1.0 / (sup_tau.max(1.0) + sc.dt * theta * (m / (cfg.k * cfg.k) + sup_c))
        }
    };
    let nb = sc.problem.controls.beta.len();
    let k = cfg.k;
    let mut ubar = vec![0.0; u.len()];
    let mut next = vec![0.0; u.len()];
    let mut last_diff = f64::INFINITY;
    let mut stats = StepStats::default();
    for it in 1..=cfg.max_iter {
        blend(theta, prev, &u, &mut ubar);
        let interp = Interpolant::new(sc.grid, &ubar, cfg.interp)?;
        let uref = &u;
        let ubar_ref = &ubar;
        let (st, diff) = next
            .par_iter_mut()
            .enumerate()
            .map_init(
                || sc.scratch(),
                |s, (j, out)| -> Result<(StepStats, f64)> {
                    let mut st = StepStats::default();
                    if sc.fixed_value(j).is_some() {
                        *out = uref[j];
                        st.boundary_max = uref[j].abs();
                        return Ok((st, 0.0));
                    }
                    s.ext_max = 0.0;
                    let mut opt = Nested::residual(nb);
                    sc.for_each_control(&interp, j, s, |ia, ib, t| {
                        st.record(t, k);
                        opt.push(ia, ib, control_residual(sc, j, uref, prev, ubar_ref[j], t));
                    })?;
                    st.boundary_max = s.ext_max;
                    *out = uref[j] - eps * opt.best;
                    Ok((st, (*out - uref[j]).abs()))
                },
            )
            .try_reduce(
                || (StepStats::default(), 0.0),
                |a, b| Ok((a.0.merge(b.0), a.1.max(b.1))),
            )?;
        stats = stats.merge(st);
        std::mem::swap(&mut u, &mut next);
        let q = diff / last_diff;
        let settled = diff == 0.0 || (q < 1.0 && diff * q / (1.0 - q) <= cfg.tol);
        if diff <= cfg.tol && settled {
            return Ok(StepOutcome {
                values: u,
                stats,
                iterations: it,
                residual: diff / eps,
                policy_changes: 0,
                monotone: None,
            });
        }
        last_diff = diff;
    }
    Err(Error::NoConvergence {
        solver: "fixed-point iteration",
        iterations: cfg.max_iter,
        residual: last_diff / eps,
    })
}

/// Policy iteration: improve the policy node by node, then solve the linear
/// system of the frozen policy (with interpolation weights frozen at the current iterate).
pub(crate) fn howard(sc: &StepContext, prev: &[f64]) -> Result<StepOutcome> {
    let cfg = sc.cfg;
    let controls = &sc.problem.controls;
    let (na, nb) = (controls.alpha.len(), controls.beta.len());
    if na > 1 && nb > 1 {
        return Err(Error::Unsupported(
            "policy iteration needs one of the control sets to be a singleton".into(),
        ));
    }
    // sup over alpha in the residual: iterates decrease; inf over beta: they increase
    let decreasing = nb == 1;
    let theta = cfg.theta;
    let k = cfg.k;
    let n = prev.len();
    let mut u = starting_iterate(sc, prev);
    let mut ubar = vec![0.0; n];
    let mut policy = vec![(usize::MAX, usize::MAX); n];
    let mut stats = StepStats::default();
    let mut changes_total = 0;
    let mut monotone = true;
    let mut solves = 0;
    let mut last_residual = f64::INFINITY;
    let nonlinear = cfg.interp == InterpKind::MonotoneCubic;
    // set when the last policy evaluation stagnated above the tolerance
    let mut floor: Option<f64> = None;
    // mixing depths tried in turn when a settled policy stalls above the acceptance level
    const DEPTHS: [usize; 4] = [5, 2, 0, 8];
    let mut attempt = 0;
    let mut iterations = cfg.max_iter;
    for it in 0..=cfg.max_iter {
        // gains below the evaluation accuracy are noise
        let hysteresis = (0.5 * cfg.tol).max(2.0 * floor.unwrap_or(0.0));
        blend(theta, prev, &u, &mut ubar);
        let interp = Interpolant::new(sc.grid, &ubar, cfg.interp)?;
        let uref = &u;
        let ubar_ref = &ubar;
        let policy_ref = &policy;
        let improved: Vec<Result<(f64, (usize, usize), StepStats)>> = (0..n)
            .into_par_iter()
            .map_init(
                || sc.scratch(),
                |s, j| {
                    let mut st = StepStats::default();
                    if sc.fixed_value(j).is_some() {
                        st.boundary_max = uref[j].abs();
                        return Ok((0.0, (0, 0), st));
                    }
                    s.ext_max = 0.0;
                    let mut opt = Nested::residual(nb);
                    let mut current = f64::NAN;
                    sc.for_each_control(&interp, j, s, |ia, ib, t| {
                        st.record(t, k);
                        let r = control_residual(sc, j, uref, prev, ubar_ref[j], t);
                        if (ia, ib) == policy_ref[j] {
                            current = r;
                        }
                        opt.push(ia, ib, r);
                    })?;
                    st.boundary_max = s.ext_max;
                    // near-ties keep the current control so the iteration cannot cycle
                    let arg = if (opt.best - current).abs() <= hysteresis {
                        policy_ref[j]
                    } else {
                        opt.arg
                    };
                    Ok((opt.best, arg, st))
                },
            )
            .collect();
        let mut residual = 0.0f64;
        let mut changes = 0;
        for (j, r) in improved.into_iter().enumerate() {
            let (res, arg, st) = r?;
            stats = stats.merge(st);
            residual = residual.max(res.abs());
            if arg != policy[j] {
                changes += 1;
                policy[j] = arg;
            }
        }
        last_residual = residual;
        // a settled policy whose evaluation cannot get closer: accepted when the
        // floor is small, since further passes would repeat the same evaluation
        let settled = floor.is_some() && changes == 0;
        if settled && residual > cfg.tol.sqrt() {
            // a different mixing depth follows a different path through the weight jumps
            attempt += 1;
            if attempt == DEPTHS.len() {
                iterations = it;
                break;
            }
        } else if residual <= cfg.tol || settled {
            return Ok(StepOutcome {
                values: u,
                stats,
                iterations: it,
                residual,
                policy_changes: changes_total,
                monotone: Some(monotone),
            });
        }
        if it == cfg.max_iter {
            break;
        }
        if it > 0 {
            changes_total += changes;
        }
        let x = if nonlinear {
            let (x, stalled) = evaluate_policy(sc, prev, &ubar, u.clone(), &policy, DEPTHS[attempt])?;
            floor = stalled;
            x
        } else {
            let (a, b) = assemble(sc, &interp, prev, &u, &policy)?;
            let mut x = u.clone();
            linear::solve(&a, &b, &mut x, cfg.tol / 10.0, 20 * n.max(100))?;
            x
        };
        if solves > 0 {
            let slack = 10.0 * cfg.tol.max(floor.unwrap_or(0.0));
            let ok = x.iter().zip(&u).all(|(new, old)| {
                if decreasing {
                    *new <= old + slack
                } else {
                    *new >= old - slack
                }
            });
            monotone &= ok;
        }
        solves += 1;
        u = x;
    }
    Err(Error::NoConvergence {
        solver: "policy iteration",
        iterations,
        residual: last_residual,
    })
}

/// Solves the equations of a fixed policy when the interpolation weights depend
/// on the unknown: repeated linear solves with weights frozen at the current
/// iterate, accelerated by Anderson mixing.
///
/// The frozen weights jump where an interval is nearly flat, which puts a floor
/// under the attainable residual. When progress stops, the best iterate is
/// returned together with its residual.
fn evaluate_policy(
    sc: &StepContext,
    prev: &[f64],
    ubar: &[f64],
    mut u: Vec<f64>,
    policy: &[(usize, usize)],
    depth: usize,
) -> Result<(Vec<f64>, Option<f64>)> {
    const PATIENCE: usize = 10;
    let cfg = sc.cfg;
    let n = u.len();
    let mut ubar = ubar.to_vec();
    let mut mixer = Anderson::new(depth);
    let mut residual = f64::INFINITY;
    let mut best = (f64::INFINITY, u.clone());
    let mut progress = f64::INFINITY;
    let mut since_progress = 0;
    let mut omega = 1.0f64;
    for _ in 0..cfg.max_iter {
        let interp = Interpolant::new(sc.grid, &ubar, cfg.interp)?;
        let (a, b) = assemble(sc, &interp, prev, &u, policy)?;
        let last = residual;
        residual = a.residual_max(&u, &b);
        if residual <= 0.1 * cfg.tol {
            return Ok((u, None));
        }
        if residual < best.0 {
            best = (residual, u.clone());
        }
        if residual < 0.9 * progress {
            progress = residual;
            since_progress = 0;
        } else {
            since_progress += 1;
            if since_progress == PATIENCE {
                return Ok((best.1, Some(best.0)));
            }
        }
        // oscillation between weight sets: restart the mixing and damp
        if residual > last {
            mixer.reset();
            omega = (0.5 * omega).max(1.0 / 16.0);
        } else {
            omega = (1.5 * omega).min(1.0);
        }
        let mut x = u.clone();
        linear::solve(&a, &b, &mut x, cfg.tol / 100.0, 20 * n.max(100))?;
        let mixed = mixer.mix(&u, x);
        for (v, m) in u.iter_mut().zip(&mixed) {
            *v += omega * (m - *v);
        }
        blend(cfg.theta, prev, &u, &mut ubar);
    }
    Ok((best.1, Some(best.0)))
}

/// Linear system `A U = b` whose rows are the scaled residuals of the frozen policy.
fn assemble(
    sc: &StepContext,
    interp: &Interpolant,
    prev: &[f64],
    u: &[f64],
    policy: &[(usize, usize)],
) -> Result<(CsrMatrix, Vec<f64>)> {
    let theta = sc.cfg.theta;
    let dt = sc.dt;
    let n = prev.len();
    let rows: Vec<Result<(Vec<(usize, f64)>, f64)>> = (0..n)
        .into_par_iter()
        .map_init(
            || (sc.scratch(), RowForm::default()),
            |(s, rf), j| {
                if sc.fixed_value(j).is_some() {
                    return Ok((vec![(j, 1.0)], u[j]));
                }
                let (ia, ib) = policy[j];
                sc.row_form(interp, j, ia, ib, s, rf)?;
                let t = rf.terms;
                if t.degenerate() {
                    if let Some(nb) = sc.layout.inward[j] {
                        return Ok(if sc.layout.is_free(nb) {
                            (vec![(j, 1.0), (nb, -1.0)], 0.0)
                        } else {
                            (vec![(j, 1.0)], u[nb])
                        });
                    }
                }
                let mut entries = Vec::with_capacity(rf.entries.len() + 1);
                entries.push((j, t.tau + dt * theta * (rf.scale - t.c)));
                let mut rhs = t.tau * prev[j];
                let mut lp = 0.0;
                for &(i, l) in &rf.entries {
                    lp += l * prev[i];
                    if sc.layout.is_free(i) {
                        entries.push((i, -dt * theta * l));
                    } else {
                        rhs += dt * theta * l * u[i];
                    }
                }
                rhs += dt * (1.0 - theta) * (lp - rf.scale * prev[j] + t.c * prev[j]);
                rhs += dt * (rf.exterior + t.f);
                Ok((entries, rhs))
            },
        )
        .collect();
    let mut a = CsrMatrix::with_capacity(n, 16 * n);
    let mut b = Vec::with_capacity(n);
    for r in rows {
        let (mut entries, rhs) = r?;
        a.push_row(&mut entries);
        b.push(rhs);
    }
    Ok((a, b))
}
