//! Per-node evaluation of the controlled operator, shared by all solvers.

use crate::boundary::{Landing, NodeLayout, NodeRole};
use crate::error::Result;
use crate::grid::{Grid, MAX_DIM};
use crate::interp::{Interpolant, Weights};
use crate::operators::{BoundaryTime, DisplacementSet};
use crate::problem::{Control, Dependence, NodeContext, Problem};

use super::SchemeConfig;

/// Coefficient values and `L_k` for one node and one control.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Terms {
    pub lk: f64,
    pub c: f64,
    pub f: f64,
    pub tau: f64,
    /// Pairs with a nonzero displacement.
    pub m_eff: usize,
}

impl Terms {
    /// A row with no time weight, no stencil and no discount carries no information.
    pub fn degenerate(&self) -> bool {
        self.tau == 0.0 && self.m_eff == 0 && self.c == 0.0
    }
}

/// Maxima gathered while evaluating a time step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepStats {
    /// `sup |f|` over evaluated nodes and controls.
    pub sup_f: f64,
    /// `sup max(c, 0)`.
    pub sup_c_plus: f64,
    /// `sup |c|`.
    pub sup_c: f64,
    /// Largest magnitude of boundary data used (fixed nodes and exterior points).
    pub boundary_max: f64,
    /// `sup (M_eff / k^2 - c) / tau` over controls with `tau > 0`.
    pub load: f64,
    pub sup_tau: f64,
}

impl StepStats {
    pub fn merge(self, o: Self) -> Self {
        Self {
            sup_f: self.sup_f.max(o.sup_f),
            sup_c_plus: self.sup_c_plus.max(o.sup_c_plus),
            sup_c: self.sup_c.max(o.sup_c),
            boundary_max: self.boundary_max.max(o.boundary_max),
            load: self.load.max(o.load),
            sup_tau: self.sup_tau.max(o.sup_tau),
        }
    }

    pub(crate) fn record(&mut self, t: &Terms, k: f64) {
        self.sup_f = self.sup_f.max(t.f.abs());
        self.sup_c_plus = self.sup_c_plus.max(t.c.max(0.0));
        self.sup_c = self.sup_c.max(t.c.abs());
        self.sup_tau = self.sup_tau.max(t.tau);
        if t.tau > 0.0 {
            self.load = self.load.max((t.m_eff as f64 / (k * k) - t.c) / t.tau);
        }
    }
}

/// Nested optimization over the product control set with first-index tie breaking.
///
/// `hamiltonian` computes `min_a max_b`, `residual` computes `max_a min_b`.
pub(crate) struct Nested {
    outer_min: bool,
    nb: usize,
    inner: f64,
    inner_arg: usize,
    pub best: f64,
    pub arg: (usize, usize),
}

impl Nested {
    pub fn hamiltonian(nb: usize) -> Self {
        Self::new(true, nb)
    }

    pub fn residual(nb: usize) -> Self {
        Self::new(false, nb)
    }

    fn new(outer_min: bool, nb: usize) -> Self {
        Self {
            outer_min,
            nb,
            inner: 0.0,
            inner_arg: 0,
            best: 0.0,
            arg: (0, 0),
        }
    }

    #[inline]
    pub fn push(&mut self, ia: usize, ib: usize, v: f64) {
        // inner optimum is the opposite of the outer one
        let inner_better = if self.outer_min { v > self.inner } else { v < self.inner };
        if ib == 0 || inner_better {
            self.inner = v;
            self.inner_arg = ib;
        }
        if ib + 1 == self.nb {
            let outer_better = if self.outer_min {
                self.inner < self.best
            } else {
                self.inner > self.best
            };
            if ia == 0 || outer_better {
                self.best = self.inner;
                self.arg = (ia, self.inner_arg);
            }
        }
    }
}

/// Linear form of the scheme at one node for a fixed control, with frozen weights:
/// `L_k[I v]_j = sum entries * v + exterior - scale * v_j`.
#[derive(Debug, Clone, Default)]
pub(crate) struct RowForm {
    pub entries: Vec<(usize, f64)>,
    pub exterior: f64,
    pub scale: f64,
    pub terms: Terms,
}

pub(crate) struct Scratch {
    ctx: NodeContext,
    sigma: Vec<f64>,
    drift: Vec<f64>,
    ds: DisplacementSet,
    x: [f64; MAX_DIM],
    weights: Weights,
    pub ext_max: f64,
}

impl Scratch {
    pub fn new(dim: usize, noise: usize) -> Self {
        Self {
            ctx: NodeContext::new(0.0, &[]),
            sigma: vec![0.0; dim * noise],
            drift: vec![0.0; dim],
            ds: DisplacementSet::new(),
            x: [0.0; MAX_DIM],
            weights: Weights::default(),
            ext_max: 0.0,
        }
    }
}

/// Everything needed to evaluate the scheme at the nodes during one step.
pub(crate) struct StepContext<'a> {
    pub grid: &'a Grid,
    pub problem: &'a Problem,
    pub layout: &'a NodeLayout,
    pub cfg: &'a SchemeConfig,
    pub t_new: f64,
    pub dt: f64,
    /// Time at which the coefficients are evaluated.
    pub t_coeff: f64,
    pub bt: BoundaryTime,
    pub noise: usize,
    pub dep: Dependence,
}

impl<'a> StepContext<'a> {
    pub fn new(
        grid: &'a Grid,
        problem: &'a Problem,
        layout: &'a NodeLayout,
        cfg: &'a SchemeConfig,
        t_old: f64,
        dt: f64,
    ) -> Self {
        let theta = cfg.theta;
        Self {
            grid,
            problem,
            layout,
            cfg,
            t_new: t_old + dt,
            dt,
            t_coeff: t_old + theta * dt,
            bt: BoundaryTime {
                t_old,
                t_new: t_old + dt,
                theta,
            },
            noise: problem.coefficients.noise_dim(),
            dep: problem.coefficients.dependence(),
        }
    }

    pub fn scratch(&self) -> Scratch {
        Scratch::new(self.grid.dim(), self.noise)
    }

    /// Dirichlet value of a fixed node at the new time level.
    pub fn fixed_value(&self, j: usize) -> Option<f64> {
        match self.layout.roles[j] {
            NodeRole::Free => None,
            NodeRole::Dirichlet(face) => {
                let mut x = [0.0; MAX_DIM];
                self.grid.node_coords(j, &mut x);
                Some(
                    self.problem
                        .boundary
                        .dirichlet_value(face, self.t_new, &x[..self.grid.dim()]),
                )
            }
        }
    }

    #[inline]
    fn point_value(&self, interp: &Interpolant, p: &mut [f64; MAX_DIM], ext_max: &mut f64) -> Result<f64> {
        let n = self.grid.dim();
        match self.problem.boundary.resolve(self.grid, p)? {
            Landing::Interior => interp.value(&p[..n]),
            Landing::Dirichlet(face) => {
                let v = self.bt.value(&self.problem.boundary, face, &p[..n]);
                *ext_max = ext_max.max(v.abs());
                Ok(v)
            }
        }
    }

    /// `sum (I v(x + y+) + I v(x + y-) - 2 v_j)` over the selected pairs, and
    /// how many of them are nonzero.
    fn pair_sum(
        &self,
        interp: &Interpolant,
        s: &mut Scratch,
        vj: f64,
        select: Option<bool>,
    ) -> Result<(f64, usize)> {
        let n = self.grid.dim();
        let mut sum = 0.0;
        let mut m = 0;
        let mut p = [0.0; MAX_DIM];
        for i in 0..s.ds.len() {
            if let Some(flag) = select {
                if s.ds.uses_drift(i) != flag {
                    continue;
                }
            }
            if s.ds.is_zero(i) {
                continue;
            }
            m += 1;
            let yp = s.ds.plus(i);
            for a in 0..n {
                p[a] = s.x[a] + yp[a];
            }
            let vp = self.point_value(interp, &mut p, &mut s.ext_max)?;
            let vm = if s.ds.is_symmetric_shift(i) {
                vp
            } else {
                let ym = s.ds.minus(i);
                for a in 0..n {
                    p[a] = s.x[a] + ym[a];
                }
                self.point_value(interp, &mut p, &mut s.ext_max)?
            };
            sum += vp + vm - 2.0 * vj;
        }
        Ok((sum, m))
    }

    fn prepare(&self, j: usize, s: &mut Scratch) {
        let n = self.grid.dim();
        self.grid.node_coords(j, &mut s.x);
        s.ctx = NodeContext::new(self.t_coeff, &s.x[..n]);
        self.problem.coefficients.prepare(&mut s.ctx);
    }

    fn build_pairs(&self, s: &mut Scratch, ctrl: Control, sigma: bool, drift: bool) -> Result<()> {
        let coeffs = &*self.problem.coefficients;
        if sigma {
            coeffs.sigma(&s.ctx, ctrl, &mut s.sigma);
        }
        if drift {
            coeffs.drift(&s.ctx, ctrl, &mut s.drift);
        }
        s.ds.build(&s.sigma, self.noise, &s.drift, self.cfg.k, self.cfg.variant)
    }

    /// Calls `visit(ia, ib, terms)` for every control in order (alpha-major),
    /// with `L_k` applied to `interp` at node `j`.
    pub fn for_each_control(
        &self,
        interp: &Interpolant,
        j: usize,
        s: &mut Scratch,
        mut visit: impl FnMut(usize, usize, &Terms),
    ) -> Result<()> {
        self.prepare(j, s);
        let coeffs = &*self.problem.coefficients;
        let controls = &self.problem.controls;
        let vj = interp.values()[j];
        let k2 = self.cfg.k * self.cfg.k;
        let dep = self.dep;
        let mut base: Option<(f64, usize)> = None;
        let mut drift_part: Option<(f64, usize)> = None;
        let mut source: Option<f64> = None;
        let mut first = true;
        for ia in 0..controls.alpha.len() {
            for ib in 0..controls.beta.len() {
                let ctrl = controls.get(ia, ib);
                let eval_sigma = first || dep.sigma;
                let eval_drift = first || dep.drift;
                let (sum, m) = if !dep.sigma {
                    match (base, drift_part) {
                        (Some(b), Some(d)) if !dep.drift => (b.0 + d.0, b.1 + d.1),
                        _ => {
                            self.build_pairs(s, ctrl, eval_sigma, eval_drift)?;
                            let b = match base {
                                Some(b) => b,
                                None => {
                                    let b = self.pair_sum(interp, s, vj, Some(false))?;
                                    base = Some(b);
                                    b
                                }
                            };
                            let d = self.pair_sum(interp, s, vj, Some(true))?;
                            drift_part = Some(d);
                            (b.0 + d.0, b.1 + d.1)
                        }
                    }
                } else {
                    self.build_pairs(s, ctrl, eval_sigma, eval_drift)?;
                    self.pair_sum(interp, s, vj, None)?
                };
                first = false;
                let f = match source {
                    Some(f) => f,
                    None => {
                        let f = coeffs.source(&s.ctx, ctrl);
                        if !dep.source {
                            source = Some(f);
                        }
                        f
                    }
                };
                let terms = Terms {
                    lk: sum / (2.0 * k2),
                    c: coeffs.discount(&s.ctx, ctrl),
                    f,
                    tau: if dep.time_weight {
                        coeffs.time_weight(&s.ctx, ctrl)
                    } else {
                        1.0
                    },
                    m_eff: m,
                };
                visit(ia, ib, &terms);
            }
        }
        Ok(())
    }

    /// Frozen-weight linear form of `L_k` at node `j` for control `(ia, ib)`.
    pub fn row_form(
        &self,
        interp: &Interpolant,
        j: usize,
        ia: usize,
        ib: usize,
        s: &mut Scratch,
        row: &mut RowForm,
    ) -> Result<()> {
        self.prepare(j, s);
        let coeffs = &*self.problem.coefficients;
        let ctrl = self.problem.controls.get(ia, ib);
        self.build_pairs(s, ctrl, true, true)?;
        let n = self.grid.dim();
        let k2 = self.cfg.k * self.cfg.k;
        let coeff = 1.0 / (2.0 * k2);
        row.entries.clear();
        row.exterior = 0.0;
        let mut p = [0.0; MAX_DIM];
        let mut m_eff = 0;
        for i in 0..s.ds.len() {
            if s.ds.is_zero(i) {
                continue;
            }
            m_eff += 1;
            for side in 0..2 {
                let y = if side == 0 { s.ds.plus(i) } else { s.ds.minus(i) };
                for a in 0..n {
                    p[a] = s.x[a] + y[a];
                }
                match self.problem.boundary.resolve(self.grid, &mut p)? {
                    Landing::Interior => {
                        interp.weights(&p[..n], &mut s.weights)?;
                        row.entries
                            .extend(s.weights.iter().map(|(node, w)| (node, coeff * w)));
                    }
                    Landing::Dirichlet(face) => {
                        let v = self.bt.value(&self.problem.boundary, face, &p[..n]);
                        s.ext_max = s.ext_max.max(v.abs());
                        row.exterior += coeff * v;
                    }
                }
            }
        }
        row.scale = m_eff as f64 / k2;
        row.terms = Terms {
            lk: 0.0,
            c: coeffs.discount(&s.ctx, ctrl),
            f: coeffs.source(&s.ctx, ctrl),
            tau: if self.dep.time_weight {
                coeffs.time_weight(&s.ctx, ctrl)
            } else {
                1.0
            },
            m_eff,
        };
        Ok(())
    }
}
