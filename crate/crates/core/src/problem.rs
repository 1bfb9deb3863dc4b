//! Problem description: coefficients, controls, data and boundary conditions.
//!
//! The equation is
//! `sup_a inf_b { tau^{ab} u_t - L^{ab} u - c^{ab} u - f^{ab} } = 0`
//! with `L u = tr[a D^2 u] + b . Du`, `a = sigma sigma^T / 2` and `tau = 1`
//! unless a problem supplies a time weight. With `tau = 1` this is
//! `u_t - inf_a sup_b { L u + c u + f } = 0`.

use std::fmt;
use std::sync::Arc;

use crate::boundary::BoundarySpec;
use crate::error::{Error, Result};
use crate::grid::{Grid, MAX_DIM};

/// One control pair: `alpha` is minimized over in the Hamiltonian, `beta` maximized.
#[derive(Debug, Clone, Copy)]
pub struct Control<'a> {
    pub alpha: &'a [f64],
    pub beta: &'a [f64],
}

/// Finite product control set `A x B`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSet {
    pub alpha: Vec<Vec<f64>>,
    pub beta: Vec<Vec<f64>>,
}

impl ControlSet {
    /// A single (empty) control: no optimization.
    pub fn none() -> Self {
        Self {
            alpha: vec![vec![]],
            beta: vec![vec![]],
        }
    }

    pub fn minimize_over(alpha: Vec<Vec<f64>>) -> Self {
        Self {
            alpha,
            beta: vec![vec![]],
        }
    }

    pub fn maximize_over(beta: Vec<Vec<f64>>) -> Self {
        Self {
            alpha: vec![vec![]],
            beta,
        }
    }

    pub fn len(&self) -> usize {
        self.alpha.len() * self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, ia: usize, ib: usize) -> Control<'_> {
        Control {
            alpha: &self.alpha[ia],
            beta: &self.beta[ib],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha.is_empty() || self.beta.is_empty() {
            return Err(Error::Config("control sets must be nonempty".into()));
        }
        Ok(())
    }
}

/// `n` equispaced points on the unit circle, starting at angle `2 pi / n`.
pub fn unit_circle(n: usize) -> Vec<Vec<f64>> {
    (1..=n)
        .map(|i| {
            let phi = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            vec![phi.cos(), phi.sin()]
        })
        .collect()
}

/// Number of node-dependent scalars a coefficient set may cache per node.
pub const CACHE_LEN: usize = 8;

/// Evaluation point of the coefficients plus a scratch cache filled by `prepare`.
#[derive(Debug, Clone, Copy)]
pub struct NodeContext {
    pub t: f64,
    pub x: [f64; MAX_DIM],
    pub cache: [f64; CACHE_LEN],
}

impl NodeContext {
    pub fn new(t: f64, x: &[f64]) -> Self {
        let mut xs = [0.0; MAX_DIM];
        xs[..x.len()].copy_from_slice(x);
        Self {
            t,
            x: xs,
            cache: [0.0; CACHE_LEN],
        }
    }
}

/// Which coefficients vary with the control. Used to share work across controls.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dependence {
    pub sigma: bool,
    pub drift: bool,
    pub source: bool,
    /// Whether `time_weight` may differ from 1.
    pub time_weight: bool,
}

impl Default for Dependence {
    fn default() -> Self {
        Self {
            sigma: true,
            drift: true,
            source: true,
            time_weight: false,
        }
    }
}

/// Controlled coefficients of the equation.
pub trait Coefficients: Send + Sync {
    fn dim(&self) -> usize;

    /// Number of columns `P` of sigma.
    fn noise_dim(&self) -> usize;

    /// Fills `ctx.cache` with node-dependent, control-independent quantities.
    fn prepare(&self, _ctx: &mut NodeContext) {}

    /// Writes sigma (`N x P`, row-major) into `out`.
    fn sigma(&self, ctx: &NodeContext, ctrl: Control, out: &mut [f64]);

    fn drift(&self, ctx: &NodeContext, ctrl: Control, out: &mut [f64]);

    fn discount(&self, _ctx: &NodeContext, _ctrl: Control) -> f64 {
        0.0
    }

    fn source(&self, ctx: &NodeContext, ctrl: Control) -> f64;

    fn time_weight(&self, _ctx: &NodeContext, _ctrl: Control) -> f64 {
        1.0
    }

    fn dependence(&self) -> Dependence {
        Dependence::default()
    }
}

pub type SigmaFn = Arc<dyn Fn(f64, &[f64], Control, &mut [f64]) + Send + Sync>;
pub type ScalarFn = Arc<dyn Fn(f64, &[f64], Control) -> f64 + Send + Sync>;

/// Coefficients given by closures `(t, x, control) -> value`.
#[derive(Clone)]
pub struct ClosureCoefficients {
    pub dim: usize,
    pub noise_dim: usize,
    pub sigma: SigmaFn,
    pub drift: SigmaFn,
    pub discount: ScalarFn,
    pub source: ScalarFn,
}

impl ClosureCoefficients {
    /// Zero drift, zero discount; sigma and source from closures.
    pub fn diffusion(dim: usize, noise_dim: usize, sigma: SigmaFn, source: ScalarFn) -> Self {
        Self {
            dim,
            noise_dim,
            sigma,
            drift: Arc::new(|_, _, _, out: &mut [f64]| out.fill(0.0)),
            discount: Arc::new(|_, _, _| 0.0),
            source,
        }
    }
}

impl Coefficients for ClosureCoefficients {
    fn dim(&self) -> usize {
        self.dim
    }
    fn noise_dim(&self) -> usize {
        self.noise_dim
    }
    fn sigma(&self, ctx: &NodeContext, ctrl: Control, out: &mut [f64]) {
        (self.sigma)(ctx.t, &ctx.x[..self.dim], ctrl, out)
    }
    fn drift(&self, ctx: &NodeContext, ctrl: Control, out: &mut [f64]) {
        (self.drift)(ctx.t, &ctx.x[..self.dim], ctrl, out)
    }
    fn discount(&self, ctx: &NodeContext, ctrl: Control) -> f64 {
        (self.discount)(ctx.t, &ctx.x[..self.dim], ctrl)
    }
    fn source(&self, ctx: &NodeContext, ctrl: Control) -> f64 {
        (self.source)(ctx.t, &ctx.x[..self.dim], ctrl)
    }
}

pub type FieldFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type SolutionFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct Problem {
    pub name: String,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub coefficients: Arc<dyn Coefficients>,
    pub initial: FieldFn,
    pub exact: Option<SolutionFn>,
    pub controls: ControlSet,
    pub boundary: BoundarySpec,
    /// Default final time.
    pub horizon: f64,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("name", &self.name)
            .field("lower", &self.lower)
            .field("upper", &self.upper)
            .field("controls", &self.controls.len())
            .field("boundary", &self.boundary)
            .field("horizon", &self.horizon)
            .finish()
    }
}

impl Problem {
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        if n == 0 || n > MAX_DIM || self.upper.len() != n {
            return Err(Error::Config(format!("bad domain dimension {n}")));
        }
        if self.coefficients.dim() != n {
            return Err(Error::Shape(format!(
                "coefficients have dimension {}, domain has {n}",
                self.coefficients.dim()
            )));
        }
        self.controls.validate()?;
        self.boundary.validate(n)
    }

    /// Grid with spacing `dx` on the problem domain.
    pub fn grid(&self, dx: f64) -> Result<Grid> {
        Grid::with_spacing(&self.lower, &self.upper, dx)
    }

    /// Exact solution at time `t` sampled on `grid`, if known.
    pub fn exact_on(&self, grid: &Grid, t: f64) -> Option<Vec<f64>> {
        let exact = self.exact.as_ref()?;
        let mut p = vec![0.0; grid.dim()];
        Some(
            (0..grid.len())
                .map(|j| {
                    grid.node_coords(j, &mut p);
                    exact(t, &p)
                })
                .collect(),
        )
    }
}
