//! Uniform tensor-product grids and nodal functions.
//!
//! Nodes are stored with axis 0 varying fastest.

use crate::error::{Error, Result};

/// Largest supported spatial dimension.
pub const MAX_DIM: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    lower: Vec<f64>,
    upper: Vec<f64>,
    counts: Vec<usize>,
    spacing: Vec<f64>,
    inv_spacing: Vec<f64>,
    strides: Vec<usize>,
    len: usize,
}

impl Grid {
    /// Grid on the box `[lower, upper]` with `counts[a]` nodes along axis `a`.
    pub fn new(lower: &[f64], upper: &[f64], counts: &[usize]) -> Result<Self> {
        let n = lower.len();
        if n == 0 || n > MAX_DIM {
            return Err(Error::Config(format!(
                "dimension must be between 1 and {MAX_DIM}, got {n}"
            )));
        }
        if upper.len() != n || counts.len() != n {
            return Err(Error::Shape(format!(
                "bounds and counts disagree in length ({}, {}, {})",
                n,
                upper.len(),
                counts.len()
            )));
        }
        let mut spacing = Vec::with_capacity(n);
        let mut strides = Vec::with_capacity(n);
        let mut len = 1usize;
        for a in 0..n {
            if !(lower[a].is_finite() && upper[a].is_finite()) || lower[a] >= upper[a] {
                return Err(Error::Config(format!(
                    "axis {a}: need finite lower < upper, got [{}, {}]",
                    lower[a], upper[a]
                )));
            }
            if counts[a] < 5 {
                return Err(Error::Config(format!(
                    "axis {a}: at least 5 nodes required, got {}",
                    counts[a]
                )));
            }
            spacing.push((upper[a] - lower[a]) / (counts[a] - 1) as f64);
            strides.push(len);
            len *= counts[a];
        }
        Ok(Self {
            lower: lower.to_vec(),
            upper: upper.to_vec(),
            counts: counts.to_vec(),
            inv_spacing: spacing.iter().map(|h| 1.0 / h).collect(),
            spacing,
            strides,
            len,
        })
    }

    /// Grid on `[lower, upper]` whose spacing along every axis is `dx`.
    ///
    /// Each box side must be an integer multiple of `dx` (relative tolerance 1e-9).
    pub fn with_spacing(lower: &[f64], upper: &[f64], dx: f64) -> Result<Self> {
        if !(dx > 0.0) {
            return Err(Error::Config(format!("spacing must be positive, got {dx}")));
        }
        let mut counts = Vec::with_capacity(lower.len());
        for a in 0..lower.len().min(upper.len()) {
            let cells = (upper[a] - lower[a]) / dx;
            let rounded = cells.round();
            if (cells - rounded).abs() > 1e-9 * cells.max(1.0) {
                return Err(Error::Config(format!(
                    "axis {a}: length {} is not a multiple of dx = {dx}",
                    upper[a] - lower[a]
                )));
            }
            counts.push(rounded as usize + 1);
        }
        Self::new(lower, upper, &counts)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn inv_spacing(&self) -> &[f64] {
        &self.inv_spacing
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    /// Largest spacing over all axes.
    pub fn dx(&self) -> f64 {
        self.spacing.iter().cloned().fold(0.0, f64::max)
    }

    /// Coordinate of node `i` along `axis`. The end nodes reproduce the bounds exactly.
    #[inline]
    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        if i + 1 == self.counts[axis] {
            self.upper[axis]
        } else {
            self.lower[axis] + i as f64 * self.spacing[axis]
        }
    }

    #[inline]
    pub fn index_along(&self, node: usize, axis: usize) -> usize {
        (node / self.strides[axis]) % self.counts[axis]
    }

    pub fn multi_index(&self, node: usize, out: &mut [usize]) {
        for a in 0..self.dim() {
            out[a] = self.index_along(node, a);
        }
    }

    pub fn linear_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    /// Writes the coordinates of `node` into `out`.
    #[inline]
    pub fn node_coords(&self, node: usize, out: &mut [f64]) {
        for a in 0..self.dim() {
            out[a] = self.coord(a, self.index_along(node, a));
        }
    }

    pub fn point(&self, node: usize) -> Vec<f64> {
        let mut p = vec![0.0; self.dim()];
        self.node_coords(node, &mut p);
        p
    }

    /// Whether `node` lies on the face `axis`/`upper_side`.
    #[inline]
    pub fn on_face(&self, node: usize, axis: usize, upper_side: bool) -> bool {
        let i = self.index_along(node, axis);
        if upper_side {
            i + 1 == self.counts[axis]
        } else {
            i == 0
        }
    }

    /// Trapezoidal quadrature weight of `node` (product of per-axis weights).
    pub fn quadrature_weight(&self, node: usize) -> f64 {
        let mut w = 1.0;
        for a in 0..self.dim() {
            let i = self.index_along(node, a);
            let h = self.spacing[a];
            w *= if i == 0 || i + 1 == self.counts[a] {
                0.5 * h
            } else {
                h
            };
        }
        w
    }

    /// Whether `p` lies in the closed box, up to a relative tolerance.
    pub fn contains(&self, p: &[f64]) -> bool {
        (0..self.dim()).all(|a| {
            let tol = 1e-12 * (self.upper[a] - self.lower[a]);
            p[a] >= self.lower[a] - tol && p[a] <= self.upper[a] + tol
        })
    }

    pub fn same_shape(&self, other: &Grid) -> bool {
        self.counts == other.counts && self.lower == other.lower && self.upper == other.upper
    }
}

/// Values attached to the nodes of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape(format!(
                "grid has {} nodes but {} values were given",
                grid.len(),
                values.len()
            )));
        }
        Ok(Self { values })
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self {
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        let mut p = vec![0.0; grid.dim()];
        let values = (0..grid.len())
            .map(|j| {
                grid.node_coords(j, &mut p);
                f(&p)
            })
            .collect();
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// An axis together with a sign.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Direction {
    pub axis: usize,
    pub increasing: bool,
}

/// Checks that `u` is monotone along `dir` on every grid line, with tolerance 1e-12.
pub fn check_monotone_direction(grid: &Grid, u: &GridFunction, dir: Direction) -> Result<bool> {
    if u.len() != grid.len() {
        return Err(Error::Shape("grid function does not match grid".into()));
    }
    if dir.axis >= grid.dim() {
        return Err(Error::Config(format!("axis {} out of range", dir.axis)));
    }
    let stride = grid.strides()[dir.axis];
    let sign = if dir.increasing { 1.0 } else { -1.0 };
    for j in 0..grid.len() {
        if grid.index_along(j, dir.axis) + 1 < grid.counts()[dir.axis] {
            let step = sign * (u.values[j + stride] - u.values[j]);
            if step < -1e-12 {
                return Ok(false);
            }
        }
    }
    Ok(true)
}
