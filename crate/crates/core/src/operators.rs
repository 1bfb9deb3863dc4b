//! Displacement sets and the semi-Lagrangian second-order operator
//!
//! `L_k[I u](x_j) = sum_i [I u(x_j + y_i+) - 2 u_j + I u(x_j + y_i-)] / (2 k^2)`.

use crate::boundary::{BoundarySpec, Landing};
use crate::error::{Error, Result};
use crate::grid::MAX_DIM;
use crate::interp::{InterpKind, Interpolant, Weights};
use crate::problem::Problem;

/// How the pairs `y_i+-` are built from the columns `sigma_j` of sigma and the drift `b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// One pair `y+- = k^2 b`; requires `sigma = 0`.
    DriftOnly = 1,
    /// `y_j+- = +-k sigma_j`; ignores the drift.
    Diffusion = 2,
    /// `y_j+- = +-k sigma_j + (k^2 / P) b`.
    SplitDrift = 3,
    /// `y_j+- = +-k sigma_j` plus the pair `y+- = k^2 b`.
    Combined = 4,
    /// `y_j+- = +-k sigma_j` with `k^2 b` added to the last pair.
    Efficient = 5,
}

impl Variant {
    pub fn from_number(n: u8) -> Result<Self> {
        Ok(match n {
            1 => Variant::DriftOnly,
            2 => Variant::Diffusion,
            3 => Variant::SplitDrift,
            4 => Variant::Combined,
            5 => Variant::Efficient,
            _ => return Err(Error::Config(format!("variant must be 1..5, got {n}"))),
        })
    }

    pub fn number(self) -> u8 {
        self as u8
    }

    pub fn all() -> [Variant; 5] {
        [
            Variant::DriftOnly,
            Variant::Diffusion,
            Variant::SplitDrift,
            Variant::Combined,
            Variant::Efficient,
        ]
    }

    /// Number of pairs for `p` sigma columns.
    pub fn pairs(self, p: usize) -> usize {
        match self {
            Variant::DriftOnly => 1,
            Variant::Diffusion | Variant::SplitDrift | Variant::Efficient => p,
            Variant::Combined => p + 1,
        }
    }
}

/// Variant with the fewest pairs for the problem's control dependence: the
/// combined set when only the drift depends on the control, otherwise the
/// efficient set.
pub fn recommend_variant(problem: &Problem) -> Variant {
    let dep = problem.coefficients.dependence();
    if !dep.sigma && dep.drift {
        Variant::Combined
    } else {
        Variant::Efficient
    }
}

/// Flat storage of the pairs `(y_i+, y_i-)`, reusable across nodes.
#[derive(Debug, Clone, Default)]
pub struct DisplacementSet {
    dim: usize,
    k: f64,
    plus: Vec<f64>,
    minus: Vec<f64>,
    drift: Vec<bool>,
}

impl DisplacementSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds the pairs for `sigma` (`N x P` row-major), drift `b` and step `k`.
    pub fn build(&mut self, sigma: &[f64], p: usize, b: &[f64], k: f64, variant: Variant) -> Result<()> {
        let n = b.len();
        if sigma.len() != n * p {
            return Err(Error::Shape(format!(
                "sigma has {} entries, expected {n} x {p}",
                sigma.len()
            )));
        }
        if !(k > 0.0) {
            return Err(Error::Config(format!("k must be positive, got {k}")));
        }
        self.dim = n;
        self.k = k;
        self.plus.clear();
        self.minus.clear();
        self.drift.clear();
        let k2 = k * k;
        let col = |j: usize, i: usize| sigma[i * p + j];
        match variant {
            Variant::DriftOnly => {
                if sigma.iter().any(|&s| s != 0.0) {
                    return Err(Error::Config(
                        "variant 1 requires a vanishing diffusion matrix".into(),
                    ));
                }
                for i in 0..n {
                    self.plus.push(k2 * b[i]);
                    self.minus.push(k2 * b[i]);
                }
                self.drift.push(true);
            }
            Variant::Diffusion => {
                for j in 0..p {
                    self.push_pair(|i| k * col(j, i), |_| 0.0, false);
                }
            }
            Variant::SplitDrift => {
                if p == 0 {
                    return Err(Error::Config("variant 3 needs P >= 1".into()));
                }
                let share = k2 / p as f64;
                for j in 0..p {
                    self.push_pair(|i| k * col(j, i), |i| share * b[i], true);
                }
            }
            Variant::Combined => {
                for j in 0..p {
                    self.push_pair(|i| k * col(j, i), |_| 0.0, false);
                }
                for i in 0..n {
                    self.plus.push(k2 * b[i]);
                    self.minus.push(k2 * b[i]);
                }
                self.drift.push(true);
            }
            Variant::Efficient => {
                if p == 0 {
                    return Err(Error::Config("variant 5 needs P >= 1".into()));
                }
                for j in 0..p - 1 {
                    self.push_pair(|i| k * col(j, i), |_| 0.0, false);
                }
                self.push_pair(|i| k * col(p - 1, i), |i| k2 * b[i], true);
            }
        }
        Ok(())
    }

    #[inline]
    fn push_pair(&mut self, spread: impl Fn(usize) -> f64, shift: impl Fn(usize) -> f64, drift: bool) {
        for i in 0..self.dim {
            let (s, c) = (spread(i), shift(i));
            self.plus.push(c + s);
            self.minus.push(c - s);
        }
        self.drift.push(drift);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    /// Number of pairs `M`.
    pub fn len(&self) -> usize {
        self.drift.len()
    }

    pub fn is_empty(&self) -> bool {
        self.drift.is_empty()
    }

    pub fn plus(&self, i: usize) -> &[f64] {
        &self.plus[i * self.dim..(i + 1) * self.dim]
    }

    pub fn minus(&self, i: usize) -> &[f64] {
        &self.minus[i * self.dim..(i + 1) * self.dim]
    }

    /// Whether pair `i` carries part of the drift.
    pub fn uses_drift(&self, i: usize) -> bool {
        self.drift[i]
    }

    /// Whether both displacements of pair `i` vanish.
    pub fn is_zero(&self, i: usize) -> bool {
        self.plus(i).iter().chain(self.minus(i)).all(|&v| v == 0.0)
    }

    /// Whether `y_i+ == y_i-`.
    pub fn is_symmetric_shift(&self, i: usize) -> bool {
        self.plus(i) == self.minus(i)
    }

    /// Number of pairs with a nonzero displacement.
    pub fn effective_len(&self) -> usize {
        (0..self.len()).filter(|&i| !self.is_zero(i)).count()
    }
}

/// Builds the displacement set for `sigma` (`N x P` row-major), `b` and `k`.
pub fn displacement_set(sigma: &[f64], p: usize, b: &[f64], k: f64, variant: Variant) -> Result<DisplacementSet> {
    let mut ds = DisplacementSet::new();
    ds.build(sigma, p, b, k, variant)?;
    Ok(ds)
}

/// Moment residuals of a displacement set (max-abs over tensor entries).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Y1Report {
    /// `sum(y+ + y-) - 2k^2 b`, `sum(y+ y+^T + y- y-^T) - 2k^2 sigma sigma^T`,
    /// the third and the fourth tensor-power sums.
    pub residuals: [f64; 4],
    /// Admissible constant: every residual must be at most `constant * k^4`.
    pub constant: f64,
    pub k: f64,
}

impl Y1Report {
    pub fn passes(&self) -> bool {
        let bound = self.constant * self.k.powi(4) * (1.0 + 1e-12) + 1e-300;
        self.residuals.iter().all(|&r| r <= bound)
    }
}

/// Checks the moment conditions of `ds` against `sigma` and `b`.
///
/// The constant `2 M (1 + |sigma|_max + |b|_max)^4` bounds every residual for `k <= 1`.
pub fn verify_y1(ds: &DisplacementSet, sigma: &[f64], p: usize, b: &[f64]) -> Result<Y1Report> {
    let n = b.len();
    if ds.dim() != n || sigma.len() != n * p {
        return Err(Error::Shape("displacement set does not match sigma/b".into()));
    }
    let k = ds.k();
    let k2 = k * k;
    let m = ds.len();
    let ys: Vec<&[f64]> = (0..m).flat_map(|i| [ds.plus(i), ds.minus(i)]).collect();

    let mut r1: f64 = 0.0;
    for a in 0..n {
        let s: f64 = ys.iter().map(|y| y[a]).sum();
        r1 = r1.max((s - 2.0 * k2 * b[a]).abs());
    }
    let mut r2: f64 = 0.0;
    for a in 0..n {
        for c in 0..n {
            let s: f64 = ys.iter().map(|y| y[a] * y[c]).sum();
            let ss: f64 = (0..p).map(|j| sigma[a * p + j] * sigma[c * p + j]).sum();
            r2 = r2.max((s - 2.0 * k2 * ss).abs());
        }
    }
    let mut r3: f64 = 0.0;
    let mut r4: f64 = 0.0;
    for a in 0..n {
        for c in 0..n {
            for d in 0..n {
                let s3: f64 = ys.iter().map(|y| y[a] * y[c] * y[d]).sum();
                r3 = r3.max(s3.abs());
                for e in 0..n {
                    let s4: f64 = ys.iter().map(|y| y[a] * y[c] * y[d] * y[e]).sum();
                    r4 = r4.max(s4.abs());
                }
            }
        }
    }
    let smax = sigma.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let bmax = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let constant = 2.0 * m.max(1) as f64 * (1.0 + smax + bmax).powi(4);
    Ok(Y1Report {
        residuals: [r1, r2, r3, r4],
        constant,
        k,
    })
}

/// Time at which boundary data are evaluated: `(1 - theta) g(t_old) + theta g(t_new)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryTime {
    pub t_old: f64,
    pub t_new: f64,
    pub theta: f64,
}

impl BoundaryTime {
    pub fn at(t: f64) -> Self {
        Self {
            t_old: t,
            t_new: t,
            theta: 1.0,
        }
    }

    #[inline]
    pub fn value(&self, spec: &BoundarySpec, face: usize, p: &[f64]) -> f64 {
        if self.theta == 0.0 || self.t_old == self.t_new {
            spec.dirichlet_value(face, self.t_old, p)
        } else if self.theta == 1.0 {
            spec.dirichlet_value(face, self.t_new, p)
        } else {
            (1.0 - self.theta) * spec.dirichlet_value(face, self.t_old, p)
                + self.theta * spec.dirichlet_value(face, self.t_new, p)
        }
    }
}

/// Value of the interpolant at a stencil point after boundary treatment.
#[inline]
pub fn stencil_value(
    interp: &Interpolant,
    boundary: &BoundarySpec,
    bt: BoundaryTime,
    p: &mut [f64; MAX_DIM],
) -> Result<f64> {
    let n = interp.grid().dim();
    match boundary.resolve(interp.grid(), p)? {
        Landing::Interior => interp.value(&p[..n]),
        Landing::Dirichlet(face) => Ok(bt.value(boundary, face, &p[..n])),
    }
}

/// `L_k` applied to the interpolant at `node`.
pub fn apply_lk(
    interp: &Interpolant,
    boundary: &BoundarySpec,
    bt: BoundaryTime,
    node: usize,
    ds: &DisplacementSet,
) -> Result<f64> {
    let grid = interp.grid();
    let n = grid.dim();
    if ds.dim() != n {
        return Err(Error::Shape("displacement set dimension differs from grid".into()));
    }
    let mut x = [0.0; MAX_DIM];
    grid.node_coords(node, &mut x);
    let uj = interp.values()[node];
    let mut sum = 0.0;
    let mut p = [0.0; MAX_DIM];
    for i in 0..ds.len() {
        if ds.is_zero(i) {
            continue;
        }
        let yp = ds.plus(i);
        for a in 0..n {
            p[a] = x[a] + yp[a];
        }
        let vp = stencil_value(interp, boundary, bt, &mut p)?;
        let vm = if ds.is_symmetric_shift(i) {
            vp
        } else {
            let ym = ds.minus(i);
            for a in 0..n {
                p[a] = x[a] + ym[a];
            }
            stencil_value(interp, boundary, bt, &mut p)?
        };
        sum += vp + vm - 2.0 * uj;
    }
    let k = ds.k();
    Ok(sum / (2.0 * k * k))
}

/// A stencil point outside the domain whose value comes from Dirichlet data.
#[derive(Debug, Clone, PartialEq)]
pub struct ExteriorTerm {
    pub face: usize,
    pub point: Vec<f64>,
    pub coeff: f64,
}

/// `L_k` at one node as a linear form:
/// `L_k[u]_j = sum_i l_ji u_i + sum_e coeff_e g_e - (M / k^2) u_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct LkRow {
    /// Nonnegative `l_ji`, sorted by node, merged.
    pub entries: Vec<(usize, f64)>,
    pub exterior: Vec<ExteriorTerm>,
    /// `M / k^2`.
    pub diagonal_scale: f64,
}

/// Coefficient form of `L_k` at `node` for the multilinear interpolant.
pub fn lk_coefficient_form(
    interp: &Interpolant,
    boundary: &BoundarySpec,
    node: usize,
    ds: &DisplacementSet,
) -> Result<LkRow> {
    if interp.kind() != InterpKind::Multilinear {
        return Err(Error::Unsupported(
            "coefficient form needs data-independent weights; use lk_frozen_form for the cubic".into(),
        ));
    }
    lk_frozen_form(interp, boundary, node, ds)
}

/// Coefficient form of `L_k` at `node` with interpolation weights frozen at the
/// interpolant's current data. Exact for the multilinear kind.
pub fn lk_frozen_form(
    interp: &Interpolant,
    boundary: &BoundarySpec,
    node: usize,
    ds: &DisplacementSet,
) -> Result<LkRow> {
    let grid = interp.grid();
    let n = grid.dim();
    let k = ds.k();
    let coeff = 1.0 / (2.0 * k * k);
    let mut x = [0.0; MAX_DIM];
    grid.node_coords(node, &mut x);
    let mut entries: Vec<(usize, f64)> = Vec::new();
    let mut exterior = Vec::new();
    let mut w = Weights::default();
    let mut p = [0.0; MAX_DIM];
    for i in 0..ds.len() {
        for y in [ds.plus(i), ds.minus(i)] {
            for a in 0..n {
                p[a] = x[a] + y[a];
            }
            match boundary.resolve(grid, &mut p)? {
                Landing::Interior => {
                    interp.weights(&p[..n], &mut w)?;
                    entries.extend(w.iter().map(|(j, wj)| (j, coeff * wj)));
                }
                Landing::Dirichlet(face) => exterior.push(ExteriorTerm {
                    face,
                    point: p[..n].to_vec(),
                    coeff,
                }),
            }
        }
    }
    entries.sort_by_key(|e| e.0);
    let mut merged: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
    for (j, v) in entries {
        match merged.last_mut() {
            Some(last) if last.0 == j => last.1 += v,
            _ => merged.push((j, v)),
        }
    }
    Ok(LkRow {
        entries: merged,
        exterior,
        diagonal_scale: ds.len() as f64 / (k * k),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::{FaceCondition, OverstepPolicy};
    use crate::grid::{Grid, GridFunction};
    use std::sync::Arc;

    #[test]
    fn variant_pair_counts() {
        let sigma = [1.0, 0.0, 0.0, 1.0];
        let b = [0.5, -0.5];
        assert_eq!(displacement_set(&sigma, 2, &b, 0.1, Variant::Combined).unwrap().len(), 3);
        assert_eq!(displacement_set(&sigma, 2, &b, 0.1, Variant::Efficient).unwrap().len(), 2);
        assert_eq!(displacement_set(&sigma, 2, &b, 0.1, Variant::SplitDrift).unwrap().len(), 2);
        assert_eq!(displacement_set(&[0.0; 4], 2, &b, 0.1, Variant::DriftOnly).unwrap().len(), 1);
    }

    #[test]
    fn variant_errors() {
        let b = [1.0];
        assert!(matches!(
            displacement_set(&[0.3], 1, &b, 0.1, Variant::DriftOnly),
            Err(Error::Config(_))
        ));
        assert!(displacement_set(&[], 0, &b, 0.1, Variant::SplitDrift).is_err());
        assert!(displacement_set(&[], 0, &b, 0.1, Variant::Efficient).is_err());
        assert!(displacement_set(&[1.0], 1, &b, 0.0, Variant::Diffusion).is_err());
    }

    #[test]
    fn efficient_variant_layout() {
        let sigma = [1.0, 2.0, 3.0, 4.0]; // columns (1,3) and (2,4)
        let b = [10.0, 20.0];
        let ds = displacement_set(&sigma, 2, &b, 0.5, Variant::Efficient).unwrap();
        assert_eq!(ds.plus(0), &[0.5, 1.5]);
        assert_eq!(ds.minus(0), &[-0.5, -1.5]);
        assert_eq!(ds.plus(1), &[1.0 + 2.5, 2.0 + 5.0]);
        assert_eq!(ds.minus(1), &[-1.0 + 2.5, -2.0 + 5.0]);
        assert!(!ds.uses_drift(0) && ds.uses_drift(1));
    }

    #[test]
    fn diffusion_variant_moments() {
        let sigma = [0.5, -1.0, 0.25, 2.0];
        let b = [0.0, 0.0];
        let k = 0.125;
        let ds = displacement_set(&sigma, 2, &b, k, Variant::Diffusion).unwrap();
        let r = verify_y1(&ds, &sigma, 2, &b).unwrap();
        assert!(r.residuals[0] < 1e-15 && r.residuals[1] < 1e-15 && r.residuals[2] < 1e-15);
        // largest entry of 2 k^4 sum_j sigma_j^{(x)4}: component (1,1,1,1)
        let expect = 2.0 * k.powi(4) * (0.25f64.powi(4) + 2.0f64.powi(4));
        assert!((r.residuals[3] - expect).abs() < 1e-15);
        assert!(r.passes());
    }

    #[test]
    fn drift_ignored_by_diffusion_variant_fails_moments() {
        let sigma = [1.0];
        let b = [1.0];
        let ds = displacement_set(&sigma, 1, &b, 0.01, Variant::Diffusion).unwrap();
        assert!(!verify_y1(&ds, &sigma, 1, &b).unwrap().passes());
    }

    fn free_boundary(dim: usize) -> BoundarySpec {
        BoundarySpec::uniform(dim, FaceCondition::Neumann, OverstepPolicy::UseExtension)
    }

    #[test]
    fn lk_of_half_square_is_one_half() {
        let g = Grid::new(&[-1.0], &[1.0], &[21]).unwrap();
        let u = GridFunction::from_fn(&g, |p| 0.5 * p[0] * p[0]);
        let it = Interpolant::new(&g, &u.values, InterpKind::Multilinear).unwrap();
        let ds = displacement_set(&[1.0], 1, &[0.0], 0.2, Variant::Diffusion).unwrap();
        let v = apply_lk(&it, &free_boundary(1), BoundaryTime::at(0.0), 10, &ds).unwrap();
        assert!((v - 0.5).abs() < 1e-12);
    }

    #[test]
    fn lk_of_affine_with_drift_only() {
        let g = Grid::new(&[0.0, 0.0], &[1.0, 1.0], &[11, 11]).unwrap();
        let v = [0.7, -1.3];
        let u = GridFunction::from_fn(&g, |p| 2.0 + v[0] * p[0] + v[1] * p[1]);
        let b = [0.9, 0.4];
        let it = Interpolant::new(&g, &u.values, InterpKind::Multilinear).unwrap();
        let ds = displacement_set(&[0.0; 4], 2, &b, 0.3, Variant::DriftOnly).unwrap();
        let node = g.linear_index(&[5, 5]);
        let got = apply_lk(&it, &free_boundary(2), BoundaryTime::at(0.0), node, &ds).unwrap();
        assert!((got - (v[0] * b[0] + v[1] * b[1])).abs() < 1e-12);
    }

    #[test]
    fn coefficient_form_sums_and_matches() {
        let g = Grid::new(&[0.0, 0.0], &[1.0, 1.0], &[11, 11]).unwrap();
        let u = GridFunction::from_fn(&g, |p| (p[0] * 3.0).sin() + p[1] * p[1]);
        let it = Interpolant::new(&g, &u.values, InterpKind::Multilinear).unwrap();
        let sigma = [0.3, 0.1, -0.2, 0.4];
        let ds = displacement_set(&sigma, 2, &[0.2, 0.1], 0.35, Variant::Combined).unwrap();
        let node = g.linear_index(&[5, 4]);
        let bspec = free_boundary(2);
        let row = lk_coefficient_form(&it, &bspec, node, &ds).unwrap();
        let total: f64 = row.entries.iter().map(|e| e.1).sum();
        assert!((total - row.diagonal_scale).abs() < 1e-12);
        assert!(row.entries.iter().all(|e| e.1 >= 0.0));
        let via_row: f64 = row.entries.iter().map(|&(j, l)| l * u.values[j]).sum::<f64>()
            - row.diagonal_scale * u.values[node];
        let direct = apply_lk(&it, &bspec, BoundaryTime::at(0.0), node, &ds).unwrap();
        assert!((via_row - direct).abs() < 1e-12);
        let cubic = Interpolant::new(&g, &u.values, InterpKind::MonotoneCubic).unwrap();
        assert!(matches!(
            lk_coefficient_form(&cubic, &bspec, node, &ds),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn exterior_points_use_dirichlet_data() {
        let g = Grid::new(&[0.0], &[1.0], &[11]).unwrap();
        let f = |x: f64| x * x;
        let u = GridFunction::from_fn(&g, |p| f(p[0]));
        let it = Interpolant::new(&g, &u.values, InterpKind::Multilinear).unwrap();
        let bspec = BoundarySpec::dirichlet(1, Arc::new(move |_, p| f(p[0])), OverstepPolicy::UseExtension);
        let ds = displacement_set(&[1.0], 1, &[0.0], 0.2, Variant::Diffusion).unwrap();
        let v = apply_lk(&it, &bspec, BoundaryTime::at(0.0), 0, &ds).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }
}
