//! Sparse matrices and an iterative solver for the policy-evaluation systems.

use crate::error::{Error, Result};

/// Compressed sparse row matrix.
#[derive(Debug, Clone, Default)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl CsrMatrix {
    pub fn with_capacity(n: usize, nnz: usize) -> Self {
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        Self {
            n: 0,
            row_ptr,
            cols: Vec::with_capacity(nnz),
            vals: Vec::with_capacity(nnz),
        }
    }

    /// Appends a row given as unsorted `(col, value)` pairs; duplicates are summed.
    pub fn push_row(&mut self, entries: &mut Vec<(usize, f64)>) {
        entries.sort_unstable_by_key(|e| e.0);
        let start = self.cols.len();
        for &(c, v) in entries.iter() {
            if self.cols.len() > start && *self.cols.last().unwrap() == c {
                *self.vals.last_mut().unwrap() += v;
            } else {
                self.cols.push(c);
                self.vals.push(v);
            }
        }
        self.row_ptr.push(self.cols.len());
        self.n += 1;
    }

    pub fn mul(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut s = 0.0;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.vals[p] * x[self.cols[p]];
            }
            y[i] = s;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                (self.row_ptr[i]..self.row_ptr[i + 1])
                    .find(|&p| self.cols[p] == i)
                    .map(|p| self.vals[p])
                    .unwrap_or(0.0)
            })
            .collect()
    }

    /// `max_i |b_i - (A x)_i|`.
    pub fn residual_max(&self, x: &[f64], b: &[f64]) -> f64 {
        let mut r = vec![0.0; self.n];
        self.mul(x, &mut r);
        r.iter().zip(b).fold(0.0, |m, (ax, bi)| m.max((bi - ax).abs()))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Solves `A x = b` by Jacobi-preconditioned BiCGSTAB, starting from `x`, until
/// `max |b - A x| <= tol`. Falls back to Gauss-Seidel sweeps if BiCGSTAB stalls.
/// Returns the number of iterations used.
pub fn solve(a: &CsrMatrix, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> Result<usize> {
    let n = a.n;
    let diag = a.diagonal();
    if diag.iter().any(|&d| d == 0.0) {
        return Err(Error::Config("singular row in policy system".into()));
    }
    let mut iters = 0;
    for _restart in 0..8 {
        let (done, used) = bicgstab(a, &diag, b, x, tol, max_iter);
        iters += used;
        if done {
            return Ok(iters);
        }
    }
    // Gauss-Seidel converges for the diagonally dominant M-matrices produced by monotone schemes.
    let sweeps = 50 * max_iter.max(1000);
    for s in 0..sweeps {
        for i in 0..n {
            let mut acc = b[i];
            for p in a.row_ptr[i]..a.row_ptr[i + 1] {
                let c = a.cols[p];
                if c != i {
                    acc -= a.vals[p] * x[c];
                }
            }
            x[i] = acc / diag[i];
        }
        if s % 16 == 15 && a.residual_max(x, b) <= tol {
            return Ok(iters + s + 1);
        }
    }
    let res = a.residual_max(x, b);
    if res <= tol {
        return Ok(iters + sweeps);
    }
    Err(Error::NoConvergence {
        solver: "linear solver",
        iterations: iters + sweeps,
        residual: res,
    })
}

fn bicgstab(a: &CsrMatrix, diag: &[f64], b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> (bool, usize) {
    let n = a.n;
    let mut r = vec![0.0; n];
    a.mul(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    if max_abs(&r) <= tol {
        return (true, 0);
    }
    let r0 = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];
    for it in 1..=max_iter {
        let rho_new = dot(&r0, &r);
        if rho_new == 0.0 || !rho_new.is_finite() {
            return (false, it);
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
            y[i] = p[i] / diag[i];
        }
        a.mul(&y, &mut v);
        let den = dot(&r0, &v);
        if den == 0.0 || !den.is_finite() {
            return (false, it);
        }
        alpha = rho / den;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if max_abs(&s) <= tol {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            return (a.residual_max(x, b) <= tol, it);
        }
        for i in 0..n {
            z[i] = s[i] / diag[i];
        }
        a.mul(&z, &mut t);
        let tt = dot(&t, &t);
        if tt == 0.0 {
            return (false, it);
        }
        omega = dot(&t, &s) / tt;
        for i in 0..n {
            x[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        if max_abs(&r) <= tol {
            return (a.residual_max(x, b) <= tol, it);
        }
        if omega == 0.0 || !omega.is_finite() {
            return (false, it);
        }
    }
    (false, max_iter)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian(n: usize, shift: f64) -> CsrMatrix {
        let mut a = CsrMatrix::with_capacity(n, 3 * n);
        for i in 0..n {
            let mut row = vec![(i, 2.0 + shift)];
            if i > 0 {
                row.push((i - 1, -0.7));
            }
            if i + 1 < n {
                row.push((i + 1, -1.3));
            }
            a.push_row(&mut row);
        }
        a
    }

    #[test]
    fn solves_nonsymmetric_m_matrix() {
        let a = laplacian(200, 0.01);
        let xs: Vec<f64> = (0..200).map(|i| (i as f64 * 0.1).sin()).collect();
        let mut b = vec![0.0; 200];
        a.mul(&xs, &mut b);
        let mut x = vec![0.0; 200];
        solve(&a, &b, &mut x, 1e-12, 2000).unwrap();
        assert!(a.residual_max(&x, &b) <= 1e-12);
        let err = x.iter().zip(&xs).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn duplicate_entries_are_summed() {
        let mut a = CsrMatrix::with_capacity(1, 2);
        a.push_row(&mut vec![(0, 1.0), (0, 2.0)]);
        assert_eq!(a.vals, vec![3.0]);
    }

    #[test]
    fn zero_diagonal_is_rejected() {
        let mut a = CsrMatrix::with_capacity(1, 1);
        a.push_row(&mut vec![(0, 0.0)]);
        let mut x = vec![0.0];
        assert!(solve(&a, &[1.0], &mut x, 1e-10, 10).is_err());
    }
}
