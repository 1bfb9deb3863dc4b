//! Interpolation of grid functions: multilinear and tensor-product monotone cubic.
//!
//! Both interpolants can be written as a nonnegative combination of at most
//! `2^N` nodal values. For the cubic the weights depend on the data; they are
//! exposed as "frozen" weights computed from the current values.

pub mod cubic;

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction, MAX_DIM};
use cubic::{
    hermite_coefficients, hermite_fraction, interval_ratios, stencil_derivative, window_start,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterpKind {
    Multilinear,
    MonotoneCubic,
}

impl InterpKind {
    pub fn name(self) -> &'static str {
        match self {
            InterpKind::Multilinear => "linear",
            InterpKind::MonotoneCubic => "cubic",
        }
    }
}

/// Maximum number of nonzero weights of a single interpolation.
pub const MAX_WEIGHTS: usize = 1 << MAX_DIM;

/// Sparse list of `(node, weight)` pairs.
#[derive(Debug, Clone, Copy)]
pub struct Weights {
    nodes: [usize; MAX_WEIGHTS],
    weights: [f64; MAX_WEIGHTS],
    len: usize,
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            nodes: [0; MAX_WEIGHTS],
            weights: [0.0; MAX_WEIGHTS],
            len: 0,
        }
    }
}

impl Weights {
    pub fn clear(&mut self) {
        self.len = 0;
    }

    #[inline]
    fn push(&mut self, node: usize, w: f64) {
        self.nodes[self.len] = node;
        self.weights[self.len] = w;
        self.len += 1;
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.nodes[..self.len]
            .iter()
            .cloned()
            .zip(self.weights[..self.len].iter().cloned())
    }

    pub fn to_vec(&self) -> Vec<(usize, f64)> {
        self.iter().collect()
    }

    pub fn apply(&self, values: &[f64]) -> f64 {
        self.iter().map(|(j, w)| w * values[j]).sum()
    }
}

/// Position of a coordinate relative to the grid along one axis.
///
/// `s == 0` means the coordinate sits on node `cell`; otherwise it lies in
/// `(x_cell, x_cell+1)` at fraction `s`.
#[derive(Debug, Clone, Copy, Default)]
struct AxisLoc {
    cell: usize,
    s: f64,
}

const SNAP: f64 = 1e-12;

fn locate(grid: &Grid, p: &[f64], locs: &mut [AxisLoc; MAX_DIM]) -> Result<()> {
    let n = grid.dim();
    if p.len() != n {
        return Err(Error::Shape(format!(
            "point has {} coordinates, grid has dimension {n}",
            p.len()
        )));
    }
    let lower = &grid.lower()[..n];
    let inv = &grid.inv_spacing()[..n];
    let counts = &grid.counts()[..n];
    for a in 0..n {
        let cells = counts[a] - 1;
        let last = cells as f64;
        let t = (p[a] - lower[a]) * inv[a];
        if !(t >= -SNAP * last && t <= last * (1.0 + SNAP)) {
            return Err(Error::Domain {
                point: p.to_vec(),
                detail: format!("axis {a} outside [{}, {}]", grid.lower()[a], grid.upper()[a]),
            });
        }
        let t = t.clamp(0.0, last);
        // t >= 0, so truncation is floor
        let mut cell = t as usize;
        let mut s = t - cell as f64;
        if s < SNAP {
            s = 0.0;
        } else if s > 1.0 - SNAP {
            cell += 1;
            s = 0.0;
        }
        if cell >= cells {
            cell = cells;
            s = 0.0;
        }
        locs[a] = AxisLoc { cell, s };
    }
    Ok(())
}

/// Multilinear weights of the point `p`: a single entry at a node, otherwise
/// the products of the 1D hat weights over the enclosing cell.
pub fn multilinear_weights(grid: &Grid, p: &[f64]) -> Result<Vec<(usize, f64)>> {
    let mut locs = [AxisLoc::default(); MAX_DIM];
    locate(grid, p, &mut locs)?;
    let mut w = Weights::default();
    linear_weights(grid, &locs, &mut w);
    Ok(w.to_vec())
}

fn linear_weights(grid: &Grid, locs: &[AxisLoc; MAX_DIM], out: &mut Weights) {
    out.clear();
    let n = grid.dim();
    let strides = grid.strides();
    let mut base = 0;
    let mut active = [0usize; MAX_DIM];
    let mut n_active = 0;
    for a in 0..n {
        base += locs[a].cell * strides[a];
        if locs[a].s > 0.0 {
            active[n_active] = a;
            n_active += 1;
        }
    }
    for mask in 0..(1usize << n_active) {
        let mut node = base;
        let mut w = 1.0;
        for (bit, &a) in active[..n_active].iter().enumerate() {
            if mask & (1 << bit) != 0 {
                node += strides[a];
                w *= locs[a].s;
            } else {
                w *= 1.0 - locs[a].s;
            }
        }
        out.push(node, w);
    }
}

/// An interpolant of fixed nodal data.
///
/// For the cubic kind the limited Hermite coefficients along axis 0 are
/// computed once at construction; the remaining axes are handled on the fly.
pub struct Interpolant<'a> {
    grid: &'a Grid,
    values: &'a [f64],
    kind: InterpKind,
    coef: Vec<[f64; 3]>,
}

impl<'a> Interpolant<'a> {
    pub fn new(grid: &'a Grid, values: &'a [f64], kind: InterpKind) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape(format!(
                "grid has {} nodes but {} values were given",
                grid.len(),
                values.len()
            )));
        }
        let coef = match kind {
            InterpKind::Multilinear => Vec::new(),
            InterpKind::MonotoneCubic => axis0_coefficients(grid, values),
        };
        Ok(Self {
            grid,
            values,
            kind,
            coef,
        })
    }

    pub fn grid(&self) -> &Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        self.values
    }

    pub fn kind(&self) -> InterpKind {
        self.kind
    }

    /// Value of the interpolant at `p`, which must lie in the closed domain.
    pub fn value(&self, p: &[f64]) -> Result<f64> {
        let mut locs = [AxisLoc::default(); MAX_DIM];
        locate(self.grid, p, &mut locs)?;
        Ok(match self.kind {
            InterpKind::Multilinear => self.linear_value(&locs),
            InterpKind::MonotoneCubic => self.cubic_value(&locs, self.grid.dim() - 1, 0),
        })
    }

    /// Nonnegative weights reproducing `value(p)` for the current data.
    pub fn weights(&self, p: &[f64], out: &mut Weights) -> Result<()> {
        let mut locs = [AxisLoc::default(); MAX_DIM];
        locate(self.grid, p, &mut locs)?;
        match self.kind {
            InterpKind::Multilinear => linear_weights(self.grid, &locs, out),
            InterpKind::MonotoneCubic => {
                out.clear();
                self.cubic_weights(&locs, self.grid.dim() - 1, 0, 1.0, out);
            }
        }
        Ok(())
    }

    fn linear_value(&self, locs: &[AxisLoc; MAX_DIM]) -> f64 {
        let strides = self.grid.strides();
        if self.grid.dim() == 2 {
            let j = locs[0].cell + locs[1].cell * strides[1];
            let (s0, s1) = (locs[0].s, locs[1].s);
            let v = &self.values;
            let lo = if s0 > 0.0 {
                v[j] + s0 * (v[j + 1] - v[j])
            } else {
                v[j]
            };
            if s1 == 0.0 {
                return lo;
            }
            let k = j + strides[1];
            let hi = if s0 > 0.0 {
                v[k] + s0 * (v[k + 1] - v[k])
            } else {
                v[k]
            };
            return lo + s1 * (hi - lo);
        }
        let mut w = Weights::default();
        linear_weights(self.grid, locs, &mut w);
        w.apply(self.values)
    }

    #[inline]
    fn coef_index(&self, node: usize) -> usize {
        node - node / self.grid.counts()[0]
    }

    fn cubic_value(&self, locs: &[AxisLoc; MAX_DIM], axis: usize, base: usize) -> f64 {
        let loc = locs[axis];
        let stride = self.grid.strides()[axis];
        if loc.s == 0.0 {
            let base = base + loc.cell * stride;
            return if axis == 0 {
                self.values[base]
            } else {
                self.cubic_value(locs, axis - 1, base)
            };
        }
        if axis == 0 {
            let j = base + loc.cell;
            let h = hermite_fraction(&self.coef[self.coef_index(j)], loc.s);
            return self.values[j] + (self.values[j + 1] - self.values[j]) * h;
        }
        let (h, lo, hi) = self.cross_fraction(locs, axis, base);
        lo + (hi - lo) * h
    }

    /// Limited Hermite fraction along `axis > 0` together with the two
    /// bracketing hyperplane values.
    fn cross_fraction(&self, locs: &[AxisLoc; MAX_DIM], axis: usize, base: usize) -> (f64, f64, f64) {
        let loc = locs[axis];
        let n = self.grid.counts()[axis];
        let stride = self.grid.strides()[axis];
        let dx = self.grid.spacing()[axis];
        let j = loc.cell;
        let w0 = window_start(j, n);
        let w1 = window_start(j + 1, n);
        let mut rows = [0.0; 6];
        for r in w0..w1 + 5 {
            rows[r - w0] = self.cubic_value(locs, axis - 1, base + r * stride);
        }
        let d0 = stencil_derivative(&rows[0..5], j - w0, dx);
        let d1 = stencil_derivative(&rows[w1 - w0..w1 - w0 + 5], j + 1 - w1, dx);
        let lo = rows[j - w0];
        let hi = rows[j + 1 - w0];
        let (a, b) = interval_ratios(lo, hi, d0, d1, dx);
        let h = hermite_fraction(&hermite_coefficients(a, b), loc.s).clamp(0.0, 1.0);
        (h, lo, hi)
    }

    fn cubic_weights(
        &self,
        locs: &[AxisLoc; MAX_DIM],
        axis: usize,
        base: usize,
        scale: f64,
        out: &mut Weights,
    ) {
        let loc = locs[axis];
        let stride = self.grid.strides()[axis];
        if loc.s == 0.0 {
            let base = base + loc.cell * stride;
            if axis == 0 {
                out.push(base, scale);
            } else {
                self.cubic_weights(locs, axis - 1, base, scale, out);
            }
            return;
        }
        if axis == 0 {
            let j = base + loc.cell;
            let h = hermite_fraction(&self.coef[self.coef_index(j)], loc.s).clamp(0.0, 1.0);
            out.push(j, scale * (1.0 - h));
            out.push(j + 1, scale * h);
            return;
        }
        let (h, _, _) = self.cross_fraction(locs, axis, base);
        let lo = base + loc.cell * stride;
        self.cubic_weights(locs, axis - 1, lo, scale * (1.0 - h), out);
        self.cubic_weights(locs, axis - 1, lo + stride, scale * h, out);
    }
}

/// Limited Hermite coefficients for every axis-0 interval of every grid line.
fn axis0_coefficients(grid: &Grid, values: &[f64]) -> Vec<[f64; 3]> {
    let n = grid.counts()[0];
    let dx = grid.spacing()[0];
    let lines = grid.len() / n;
    let mut coef = Vec::with_capacity(lines * (n - 1));
    let mut d = vec![0.0; n];
    for line in 0..lines {
        let v = &values[line * n..(line + 1) * n];
        for (i, di) in d.iter_mut().enumerate() {
            let w0 = window_start(i, n);
            *di = stencil_derivative(&v[w0..w0 + 5], i - w0, dx);
        }
        for i in 0..n - 1 {
            let (a, b) = interval_ratios(v[i], v[i + 1], d[i], d[i + 1], dx);
            let c = hermite_coefficients(a, b);
            coef.push(c);
        }
    }
    coef
}

/// Interpolates `u` at `p` with the given kind.
pub fn interpolate(grid: &Grid, u: &GridFunction, p: &[f64], kind: InterpKind) -> Result<f64> {
    Interpolant::new(grid, &u.values, kind)?.value(p)
}
