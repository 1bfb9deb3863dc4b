//! One-dimensional building blocks of the monotone cubic interpolant:
//! fourth-order slope estimates, the slope-ratio limiter and Hermite evaluation.

/// Centered fourth-order first-derivative estimate at the middle of a 5-point window.
#[inline]
pub fn derivative_estimate(w: &[f64; 5], dx: f64) -> f64 {
    (w[0] - 8.0 * w[1] + 8.0 * w[3] - w[4]) / (12.0 * dx)
}

/// Fourth-order first-derivative estimate at position `at` (0..5) of a 5-point window.
///
/// `at == 2` is the centered formula; the others are one-sided and are used
/// at the two nodes nearest each end of a grid line.
#[inline]
pub fn stencil_derivative(w: &[f64], at: usize, dx: f64) -> f64 {
    let c: [f64; 5] = match at {
        0 => [-25.0, 48.0, -36.0, 16.0, -3.0],
        1 => [-3.0, -10.0, 18.0, -6.0, 1.0],
        2 => [1.0, -8.0, 0.0, 8.0, -1.0],
        3 => [-1.0, 6.0, -18.0, 10.0, 3.0],
        4 => [3.0, -16.0, 36.0, -48.0, 25.0],
        _ => panic!("stencil position {at} out of range"),
    };
    (c[0] * w[0] + c[1] * w[1] + c[2] * w[2] + c[3] * w[3] + c[4] * w[4]) / (12.0 * dx)
}

/// First node of the 5-point window used for the slope at node `i` of a line with `n` nodes.
#[inline]
pub fn window_start(i: usize, n: usize) -> usize {
    i.saturating_sub(2).min(n - 5)
}

/// Cubic Hermite polynomial on `[x_i, x_i + dx]` with end values `phi_i`, `phi_next`
/// and end slopes `d_i`, `d_next`, evaluated at offset `xi` from `x_i`.
pub fn cubic_eval_1d(phi_i: f64, phi_next: f64, d_i: f64, d_next: f64, dx: f64, xi: f64) -> f64 {
    let delta = (phi_next - phi_i) / dx;
    let c2 = (3.0 * delta - d_next - 2.0 * d_i) / dx;
    let c3 = -(2.0 * delta - d_next - d_i) / (dx * dx);
    phi_i + xi * (d_i + xi * (c2 + xi * c3))
}

#[inline]
fn ellipse(a: f64, b: f64) -> f64 {
    a * a + a * b + b * b - 6.0 * (a + b) + 9.0
}

/// Whether the slope ratios `(a, b)` lie in the monotonicity region
/// (union of the ellipse and the box `[0, 3]^2`), up to `tol`.
pub fn in_monotone_region(a: f64, b: f64, tol: f64) -> bool {
    if a < -tol || b < -tol {
        return false;
    }
    (a <= 3.0 + tol && b <= 3.0 + tol) || ellipse(a, b) <= tol
}

/// Larger root in `y` of the ellipse boundary at fixed `x` (`x` in `[0, 4]`).
#[inline]
fn upper_root(x: f64) -> f64 {
    0.5 * ((6.0 - x) + (3.0 * x * (4.0 - x)).max(0.0).sqrt())
}

/// Smaller root in `y` of the ellipse boundary at fixed `x` (`x` in `[0, 4]`).
#[inline]
fn lower_root(x: f64) -> f64 {
    0.5 * ((6.0 - x) - (3.0 * x * (4.0 - x)).max(0.0).sqrt())
}

/// Moves the slope ratios `(a, b)` into the monotonicity region.
///
/// Negative ratios are clipped to zero, points already inside are returned
/// unchanged and the remaining points are moved onto the region boundary.
pub fn limit_ratios(a: f64, b: f64) -> (f64, f64) {
    let a = if a > 0.0 { a } else { 0.0 };
    let b = if b > 0.0 { b } else { 0.0 };
    if in_monotone_region(a, b, 0.0) {
        return (a, b);
    }
    if a >= 3.0 && b >= 3.0 {
        return (3.0, 3.0);
    }
    if b > 3.0 {
        let (a, b) = shrink(a, b);
        (a, b)
    } else {
        let (b, a) = shrink(b, a);
        (a, b)
    }
}

/// Case `y > 3`, `x < 3`: either decrease `y` onto the boundary, or increase `x`
/// until it meets the boundary or the line `x + y = 4`.
fn shrink(x: f64, y: f64) -> (f64, f64) {
    if x + y >= 4.0 {
        return (x, y.min(upper_root(x)));
    }
    let lo = lower_root(y);
    if lo <= 4.0 - y {
        (lo.max(x), y)
    } else {
        let x = 4.0 - y;
        (x, y.min(upper_root(x)))
    }
}

/// Limits the slopes `d_i`, `d_next` of an interval with secant slope `delta`.
///
/// A flat interval (`delta == 0`) yields zero slopes.
pub fn limit_slopes(d_i: f64, d_next: f64, delta: f64) -> (f64, f64) {
    if delta == 0.0 {
        return (0.0, 0.0);
    }
    let (a, b) = limit_ratios(d_i / delta, d_next / delta);
    (a * delta, b * delta)
}

/// Limited slope ratios for the interval `[phi_i, phi_next]`.
///
/// Intervals whose values agree to within `1e-14 (1 + |phi_i| + |phi_next|)`
/// are treated as flat and get unit ratios.
#[inline]
pub fn interval_ratios(phi_i: f64, phi_next: f64, d_i: f64, d_next: f64, dx: f64) -> (f64, f64) {
    let diff = phi_next - phi_i;
    if diff.abs() <= 1e-14 * (1.0 + phi_i.abs() + phi_next.abs()) {
        return (1.0, 1.0);
    }
    let delta = diff / dx;
    limit_ratios(d_i / delta, d_next / delta)
}

/// Coefficients `(p1, p2, p3)` of `h(s) = s (p1 + s (p2 + s p3))`, the normalized
/// Hermite cubic with end-slope ratios `a`, `b`.
#[inline]
pub fn hermite_coefficients(a: f64, b: f64) -> [f64; 3] {
    [a, 3.0 - b - 2.0 * a, a + b - 2.0]
}

#[inline]
pub fn hermite_fraction(c: &[f64; 3], s: f64) -> f64 {
    s * (c[0] + s * (c[1] + s * c[2]))
}

/// Monotone cubic interpolation of the samples `values` (spacing `dx`, first
/// node at 0) evaluated at offset `x`.
pub fn monotone_cubic_1d(values: &[f64], dx: f64, x: f64) -> f64 {
    let n = values.len();
    assert!(n >= 5, "need at least 5 samples");
    let t = (x / dx).clamp(0.0, (n - 1) as f64);
    let i = (t.floor() as usize).min(n - 2);
    let s = t - i as f64;
    if s == 0.0 {
        return values[i];
    }
    let slope = |k: usize| {
        let w0 = window_start(k, n);
        stencil_derivative(&values[w0..w0 + 5], k - w0, dx)
    };
    let (a, b) = interval_ratios(values[i], values[i + 1], slope(i), slope(i + 1), dx);
    let h = hermite_fraction(&hermite_coefficients(a, b), s).clamp(0.0, 1.0);
    values[i] + (values[i + 1] - values[i]) * h
}
