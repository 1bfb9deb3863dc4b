//! Anderson mixing for a fixed-point map `u -> g(u)`.

use std::collections::VecDeque;

/// Keeps the last `depth` differences of map values and of residuals `g(u) - u`.
pub(crate) struct Anderson {
    depth: usize,
    dg: VecDeque<Vec<f64>>,
    df: VecDeque<Vec<f64>>,
    last: Option<(Vec<f64>, Vec<f64>)>,
}

impl Anderson {
    pub(crate) fn new(depth: usize) -> Self {
        Self {
            depth,
            dg: VecDeque::new(),
            df: VecDeque::new(),
            last: None,
        }
    }

    pub(crate) fn reset(&mut self) {
        self.dg.clear();
        self.df.clear();
        self.last = None;
    }

    /// Next iterate from the current one `u` and its image `g`. Depth 0 returns `g`.
    pub(crate) fn mix(&mut self, u: &[f64], g: Vec<f64>) -> Vec<f64> {
        if self.depth == 0 {
            return g;
        }
        let f: Vec<f64> = g.iter().zip(u).map(|(g, u)| g - u).collect();
        if let Some((g0, f0)) = self.last.take() {
            if self.dg.len() == self.depth {
                self.dg.pop_front();
                self.df.pop_front();
            }
            self.dg.push_back(g.iter().zip(&g0).map(|(a, b)| a - b).collect());
            self.df.push_back(f.iter().zip(&f0).map(|(a, b)| a - b).collect());
        }
        let out = match least_squares(&self.df, &f) {
            Some(gamma) => {
                let mut out = g.clone();
                for (c, d) in gamma.iter().zip(&self.dg) {
                    for (o, d) in out.iter_mut().zip(d) {
                        *o -= c * d;
                    }
                }
                out
            }
            None => g.clone(),
        };
        self.last = Some((g, f));
        out
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}

/// Minimizes `|f - sum_i gamma_i cols_i|` through regularized normal equations.
fn least_squares(cols: &VecDeque<Vec<f64>>, f: &[f64]) -> Option<Vec<f64>> {
    let m = cols.len();
    if m == 0 {
        return None;
    }
    let mut a = vec![vec![0.0; m + 1]; m];
    for i in 0..m {
        for j in 0..=i {
            let v = dot(&cols[i], &cols[j]);
            a[i][j] = v;
            a[j][i] = v;
        }
        a[i][m] = dot(&cols[i], f);
    }
    let scale = (0..m).map(|i| a[i][i]).fold(0.0, f64::max);
    if scale == 0.0 {
        return None;
    }
    for (i, row) in a.iter_mut().enumerate() {
        row[i] += 1e-12 * scale;
    }
    // Gaussian elimination; the matrix is symmetric positive definite
    for p in 0..m {
        let piv = a[p][p];
        if piv <= 0.0 {
            return None;
        }
        for r in p + 1..m {
            let q = a[r][p] / piv;
            for c in p..=m {
                a[r][c] -= q * a[p][c];
            }
        }
    }
    let mut x = vec![0.0; m];
    for i in (0..m).rev() {
        let s: f64 = (i + 1..m).map(|j| a[i][j] * x[j]).sum();
        x[i] = (a[i][m] - s) / a[i][i];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_map_converges_fast() {
        // g(u) = M u + b with a slowly contracting diagonal M
        let diag = [0.95, 0.9, 0.5, 0.99];
        let b = [1.0, -2.0, 0.5, 0.1];
        let fixed: Vec<f64> = diag.iter().zip(&b).map(|(d, b)| b / (1.0 - d)).collect();
        let mut aa = Anderson::new(5);
        let mut u = vec![0.0; 4];
        for _ in 0..12 {
            let g: Vec<f64> = u.iter().zip(diag.iter().zip(&b)).map(|(u, (d, b))| d * u + b).collect();
            u = aa.mix(&u, g);
        }
        let err = u.iter().zip(&fixed).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn zero_depth_is_plain_iteration() {
        let mut aa = Anderson::new(0);
        for g in [vec![1.0, 2.0], vec![3.0, -1.0], vec![0.5, 0.5]] {
            assert_eq!(aa.mix(&[0.0, 0.0], g.clone()), g);
        }
    }
}
