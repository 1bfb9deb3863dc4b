//! Benchmark problems with known (or qualitatively known) solutions.

use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;

use crate::boundary::{BoundaryFn, BoundarySpec, FaceCondition, OverstepPolicy};
use crate::error::{Error, Result};
use crate::problem::{
    unit_circle, Coefficients, Control, ControlSet, Dependence, NodeContext, Problem, SolutionFn,
};

pub const NAMES: [&str; 7] = [
    "smooth_linear_b01",
    "smooth_linear_b0",
    "nonsmooth_linear",
    "control_a",
    "control_b",
    "superrep_test",
    "superrep_pricing",
];

/// Builds the named problem for grid spacing `dx` (the control sets of some problems depend on it).
pub fn benchmark(name: &str, dx: f64) -> Result<Problem> {
    if !(dx > 0.0) {
        return Err(Error::Config(format!("dx must be positive, got {dx}")));
    }
    match name {
        "smooth_linear_b01" => Ok(smooth_linear(0.1f64.sqrt())),
        "smooth_linear_b0" => Ok(smooth_linear(0.0)),
        "nonsmooth_linear" => Ok(nonsmooth_linear()),
        "control_a" => Ok(control_a(dx)),
        "control_b" => Ok(control_b(dx)),
        "superrep_test" => Ok(superrep_test(dx)),
        "superrep_pricing" => Ok(superrep_pricing(dx)),
        _ => Err(Error::UnknownProblem(name.to_string())),
    }
}

/// Grid spacing of refinement level `level` (0-based) for the named problem.
/// `cubic` selects the coarser start used with cubic interpolation where it differs.
pub fn level_dx(name: &str, level: usize, cubic: bool) -> Result<f64> {
    let base = match name {
        "smooth_linear_b01" | "smooth_linear_b0" | "nonsmooth_linear" | "control_a"
        | "control_b" => PI / 80.0,
        "superrep_test" | "superrep_pricing" => {
            if cubic {
                0.3
            } else {
                0.15
            }
        }
        _ => return Err(Error::UnknownProblem(name.to_string())),
    };
    Ok(base / (1u64 << level) as f64)
}

/// Number of control directions on the unit circle for spacing `h`: `4 pi / h`
/// rounded to the nearest even integer.
pub fn circle_count(h: f64) -> usize {
    let n = 4.0 * PI / h;
    let even = (n / 2.0).round() as usize * 2;
    even.max(2)
}

fn square() -> (Vec<f64>, Vec<f64>) {
    (vec![-PI, -PI], vec![PI, PI])
}

fn dirichlet_exact(exact: SolutionFn) -> BoundarySpec {
    let g: BoundaryFn = exact;
    BoundarySpec::dirichlet(2, g, OverstepPolicy::UseExtension)
}

/// `u = (2 - t) sin x1 sin x2` with `sigma = sqrt2 [[sin(x1+x2), beta, 0], [cos(x1+x2), 0, beta]]`.
struct SmoothLinear {
    beta: f64,
}

impl Coefficients for SmoothLinear {
    fn dim(&self) -> usize {
        2
    }
    fn noise_dim(&self) -> usize {
        3
    }
    fn prepare(&self, ctx: &mut NodeContext) {
        let (x1, x2) = (ctx.x[0], ctx.x[1]);
        let (s, c) = (x1 + x2).sin_cos();
        let (s1, c1) = x1.sin_cos();
        let (s2, c2) = x2.sin_cos();
        ctx.cache[..4].copy_from_slice(&[s, c, s1 * s2, c1 * c2]);
    }
    fn sigma(&self, ctx: &NodeContext, _: Control, out: &mut [f64]) {
        let (s, c) = (ctx.cache[0], ctx.cache[1]);
        let b = SQRT_2 * self.beta;
        out.copy_from_slice(&[SQRT_2 * s, b, 0.0, SQRT_2 * c, 0.0, b]);
    }
    fn drift(&self, _: &NodeContext, _: Control, out: &mut [f64]) {
        out.fill(0.0);
    }
    fn source(&self, ctx: &NodeContext, _: Control) -> f64 {
        let t = ctx.t;
        let [s, c, ss, cc] = [ctx.cache[0], ctx.cache[1], ctx.cache[2], ctx.cache[3]];
        let b2 = self.beta * self.beta;
        ss * ((1.0 + 2.0 * b2) * (2.0 - t) - 1.0) - 2.0 * (2.0 - t) * cc * s * c
    }
    fn dependence(&self) -> Dependence {
        Dependence {
            sigma: false,
            drift: false,
            source: false,
            time_weight: false,
        }
    }
}

pub fn smooth_linear(beta: f64) -> Problem {
    let exact: SolutionFn = Arc::new(|t, x: &[f64]| (2.0 - t) * x[0].sin() * x[1].sin());
    let (lower, upper) = square();
    Problem {
        name: if beta == 0.0 {
            "smooth_linear_b0".into()
        } else {
            "smooth_linear_b01".into()
        },
        lower,
        upper,
        coefficients: Arc::new(SmoothLinear { beta }),
        initial: Arc::new(|x: &[f64]| 2.0 * x[0].sin() * x[1].sin()),
        exact: Some(exact.clone()),
        controls: ControlSet::none(),
        boundary: dirichlet_exact(exact),
        horizon: 1.0,
    }
}

/// Exact solution with a kink in the first derivative across `x1 = 0`.
fn nonsmooth_exact(t: f64, x: &[f64]) -> f64 {
    let a = if x[0] <= 0.0 {
        (0.5 * x[0]).sin()
    } else {
        (0.25 * x[0]).sin()
    };
    (1.0 + t) * (0.5 * x[1]).sin() * a
}

struct Nonsmooth;

impl Coefficients for Nonsmooth {
    fn dim(&self) -> usize {
        2
    }
    fn noise_dim(&self) -> usize {
        1
    }
    fn sigma(&self, ctx: &NodeContext, _: Control, out: &mut [f64]) {
        out[0] = SQRT_2 * ctx.x[0].sin();
        out[1] = SQRT_2 * ctx.x[1].sin();
    }
    fn drift(&self, _: &NodeContext, _: Control, out: &mut [f64]) {
        out.fill(0.0);
    }
    fn source(&self, ctx: &NodeContext, _: Control) -> f64 {
        let (t, x1, x2) = (ctx.t, ctx.x[0], ctx.x[1]);
        let (s1, s2) = (x1.sin(), x2.sin());
        let (h2s, h2c) = (0.5 * x2).sin_cos();
        if x1 <= 0.0 {
            let (hs, hc) = (0.5 * x1).sin_cos();
            h2s * hs * (1.0 + 0.25 * (1.0 + t) * (s1 * s1 + s2 * s2))
                - s1 * s2 * h2c * 0.5 * (1.0 + t) * hc
        } else {
            let (qs, qc) = (0.25 * x1).sin_cos();
            h2s * qs * (1.0 + (1.0 + t) / 16.0 * (s1 * s1 + 4.0 * s2 * s2))
                - s1 * s2 * h2c * 0.25 * (1.0 + t) * qc
        }
    }
    fn dependence(&self) -> Dependence {
        Dependence {
            sigma: false,
            drift: false,
            source: false,
            time_weight: false,
        }
    }
}

pub fn nonsmooth_linear() -> Problem {
    let exact: SolutionFn = Arc::new(nonsmooth_exact);
    let (lower, upper) = square();
    Problem {
        name: "nonsmooth_linear".into(),
        lower,
        upper,
        coefficients: Arc::new(Nonsmooth),
        initial: Arc::new(|x: &[f64]| nonsmooth_exact(0.0, x)),
        exact: Some(exact.clone()),
        controls: ControlSet::none(),
        boundary: dirichlet_exact(exact),
        horizon: 1.0,
    }
}

/// Controlled drift `b = a` on the unit circle, `sigma = sqrt2 (sin(x1+x2), cos(x1+x2))^T`.
struct ControlA;

impl Coefficients for ControlA {
    fn dim(&self) -> usize {
        2
    }
    fn noise_dim(&self) -> usize {
        1
    }
    fn prepare(&self, ctx: &mut NodeContext) {
        let (x1, x2) = (ctx.x[0], ctx.x[1]);
        let (s, c) = (x1 + x2).sin_cos();
        let (s1, c1) = x1.sin_cos();
        let (s2, c2) = x2.sin_cos();
        let grad = ((c1 * s2).powi(2) + (s1 * c2).powi(2)).sqrt();
        ctx.cache[..5].copy_from_slice(&[s, c, s1 * s2, c1 * c2, grad]);
    }
    fn sigma(&self, ctx: &NodeContext, _: Control, out: &mut [f64]) {
        out[0] = SQRT_2 * ctx.cache[0];
        out[1] = SQRT_2 * ctx.cache[1];
    }
    fn drift(&self, _: &NodeContext, ctrl: Control, out: &mut [f64]) {
        out.copy_from_slice(ctrl.alpha);
    }
    fn source(&self, ctx: &NodeContext, _: Control) -> f64 {
        let t = ctx.t;
        let [s, c, ss, cc, grad] = [
            ctx.cache[0],
            ctx.cache[1],
            ctx.cache[2],
            ctx.cache[3],
            ctx.cache[4],
        ];
        (0.5 - t) * ss + (1.5 - t) * (grad - 2.0 * s * c * cc)
    }
    fn dependence(&self) -> Dependence {
        Dependence {
            sigma: false,
            drift: true,
            source: false,
            time_weight: false,
        }
    }
}

pub fn control_a(dx: f64) -> Problem {
    let exact: SolutionFn = Arc::new(|t, x: &[f64]| (1.5 - t) * x[0].sin() * x[1].sin());
    let (lower, upper) = square();
    Problem {
        name: "control_a".into(),
        lower,
        upper,
        coefficients: Arc::new(ControlA),
        initial: Arc::new(|x: &[f64]| 1.5 * x[0].sin() * x[1].sin()),
        exact: Some(exact.clone()),
        controls: ControlSet::minimize_over(unit_circle(circle_count(dx))),
        boundary: dirichlet_exact(exact),
        horizon: 0.5,
    }
}

/// Controlled diffusion `sigma = sqrt2 (a1, a2)^T` on the unit circle.
struct ControlB;

impl Coefficients for ControlB {
    fn dim(&self) -> usize {
        2
    }
    fn noise_dim(&self) -> usize {
        1
    }
    fn prepare(&self, ctx: &mut NodeContext) {
        let (s1, c1) = ctx.x[0].sin_cos();
        let (s2, c2) = ctx.x[1].sin_cos();
        ctx.cache[0] = s1 * s2;
        ctx.cache[1] = c1 * c2;
    }
    fn sigma(&self, _: &NodeContext, ctrl: Control, out: &mut [f64]) {
        out[0] = SQRT_2 * ctrl.alpha[0];
        out[1] = SQRT_2 * ctrl.alpha[1];
    }
    fn drift(&self, _: &NodeContext, _: Control, out: &mut [f64]) {
        out.fill(0.0);
    }
    fn source(&self, ctx: &NodeContext, ctrl: Control) -> f64 {
        let t = ctx.t;
        (1.0 - t) * ctx.cache[0] - 2.0 * ctrl.alpha[0] * ctrl.alpha[1] * (2.0 - t) * ctx.cache[1]
    }
    fn dependence(&self) -> Dependence {
        Dependence {
            sigma: true,
            drift: false,
            source: true,
            time_weight: false,
        }
    }
}

pub fn control_b(dx: f64) -> Problem {
    let exact: SolutionFn = Arc::new(|t, x: &[f64]| (2.0 - t) * x[0].sin() * x[1].sin());
    let (lower, upper) = square();
    Problem {
        name: "control_b".into(),
        lower,
        upper,
        coefficients: Arc::new(ControlB),
        initial: Arc::new(|x: &[f64]| 2.0 * x[0].sin() * x[1].sin()),
        exact: Some(exact.clone()),
        controls: ControlSet::minimize_over(unit_circle(circle_count(dx))),
        boundary: dirichlet_exact(exact),
        horizon: 0.5,
    }
}

/// Superreplication dynamics on `[0, 3]^2`:
/// `inf_{|b| = 1} { b1^2 u_t - tr[a^b D^2 u] } = f` with
/// `sigma^b = (b1 x1 sqrt(x2), b2 x2 (3 - x2))^T`.
struct Superrep {
    /// Source term; `None` for the homogeneous pricing equation.
    with_source: bool,
}

fn superrep_exact(t: f64, x: &[f64]) -> f64 {
    1.0 + t * t - (-x[0] * x[0] - x[1] * x[1]).exp()
}

fn superrep_source(t: f64, x1: f64, x2: f64) -> f64 {
    let e = (-x1 * x1 - x2 * x2).exp();
    let u_t = 2.0 * t;
    let u11 = -(4.0 * x1 * x1 - 2.0) * e;
    let u22 = -(4.0 * x2 * x2 - 2.0) * e;
    let u12 = -4.0 * x1 * x2 * e;
    let eta = x2 * (3.0 - x2);
    let p = u_t - 0.5 * x1 * x1 * x2 * u11;
    let q = -0.5 * eta * eta * u22;
    let r = x1 * x2.max(0.0).sqrt() * eta * u12;
    0.5 * (p + q - ((p - q) * (p - q) + r * r).sqrt())
}

impl Coefficients for Superrep {
    fn dim(&self) -> usize {
        2
    }
    fn noise_dim(&self) -> usize {
        1
    }
    fn prepare(&self, ctx: &mut NodeContext) {
        let (x1, x2) = (ctx.x[0], ctx.x[1]);
        ctx.cache[0] = x1 * x2.max(0.0).sqrt();
        ctx.cache[1] = x2 * (3.0 - x2);
        ctx.cache[2] = if self.with_source {
            superrep_source(ctx.t, x1, x2)
        } else {
            0.0
        };
    }
    fn sigma(&self, ctx: &NodeContext, ctrl: Control, out: &mut [f64]) {
        out[0] = ctrl.beta[0] * ctx.cache[0];
        out[1] = ctrl.beta[1] * ctx.cache[1];
    }
    fn drift(&self, _: &NodeContext, _: Control, out: &mut [f64]) {
        out.fill(0.0);
    }
    fn source(&self, ctx: &NodeContext, _: Control) -> f64 {
        ctx.cache[2]
    }
    fn time_weight(&self, _: &NodeContext, ctrl: Control) -> f64 {
        ctrl.beta[0] * ctrl.beta[0]
    }
    fn dependence(&self) -> Dependence {
        Dependence {
            sigma: true,
            drift: false,
            source: false,
            time_weight: true,
        }
    }
}

/// Directions `(cos(pi i / N), sin(pi i / N))`, `i = 1..N`, with `N = 3 / dx`.
///
/// Components within rounding of zero are set to zero, so the vertical direction
/// really switches off the time weight and the first noise component.
pub fn half_circle(dx: f64) -> Vec<Vec<f64>> {
    let n = (3.0 / dx).round().max(1.0) as usize;
    let snap = |v: f64| if v.abs() < 1e-12 { 0.0 } else { v };
    (1..=n)
        .map(|i| {
            let phi = PI * i as f64 / n as f64;
            vec![snap(phi.cos()), snap(phi.sin())]
        })
        .collect()
}

fn superrep_boundary(g: BoundaryFn) -> BoundarySpec {
    BoundarySpec {
        faces: vec![
            FaceCondition::Dirichlet(g.clone()),
            FaceCondition::Neumann,
            FaceCondition::Dirichlet(g),
            FaceCondition::Neumann,
        ],
        overstep: OverstepPolicy::UseExtension,
    }
}

pub fn superrep_test(dx: f64) -> Problem {
    let exact: SolutionFn = Arc::new(superrep_exact);
    Problem {
        name: "superrep_test".into(),
        lower: vec![0.0, 0.0],
        upper: vec![3.0, 3.0],
        coefficients: Arc::new(Superrep { with_source: true }),
        initial: Arc::new(|x: &[f64]| superrep_exact(0.0, x)),
        exact: Some(exact.clone()),
        controls: ControlSet::maximize_over(half_circle(dx)),
        boundary: superrep_boundary(exact),
        horizon: 1.0,
    }
}

fn put_payoff(x: &[f64]) -> f64 {
    (1.0 - x[0]).max(0.0)
}

pub fn superrep_pricing(dx: f64) -> Problem {
    Problem {
        name: "superrep_pricing".into(),
        lower: vec![0.0, 0.0],
        upper: vec![3.0, 3.0],
        coefficients: Arc::new(Superrep { with_source: false }),
        initial: Arc::new(put_payoff),
        exact: None,
        controls: ControlSet::maximize_over(half_circle(dx)),
        boundary: superrep_boundary(Arc::new(|_, x: &[f64]| put_payoff(x))),
        horizon: 1.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_knows_all_names() {
        for name in NAMES {
            let p = benchmark(name, 0.15).unwrap();
            assert_eq!(p.name, name);
            p.validate().unwrap();
        }
        assert!(matches!(benchmark("nope", 0.1), Err(Error::UnknownProblem(_))));
    }

    #[test]
    fn circle_counts() {
        assert_eq!(circle_count(PI / 80.0), 320);
        assert_eq!(circle_count(PI / 160.0), 640);
        assert_eq!(circle_count(1.0), 12);
        assert_eq!(half_circle(0.15).len(), 20);
        let last = half_circle(0.15)[19].clone();
        assert_eq!(last, vec![-1.0, 0.0]);
        assert_eq!(half_circle(0.15)[9], vec![0.0, 1.0]);
    }

    #[test]
    fn nonsmooth_exact_value() {
        let v = nonsmooth_exact(1.0, &[PI / 2.0, PI]);
        assert!((v - 2.0 * (PI / 8.0).sin()).abs() < 1e-15);
    }

    #[test]
    fn level_spacings() {
        assert_eq!(level_dx("smooth_linear_b0", 1, false).unwrap(), PI / 160.0);
        assert_eq!(level_dx("superrep_test", 2, false).unwrap(), 0.0375);
        assert_eq!(level_dx("superrep_test", 0, true).unwrap(), 0.3);
    }
}
