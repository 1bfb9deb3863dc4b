//! Boundary conditions per face and the treatment of stencil points that leave the box.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{Grid, MAX_DIM};

pub type BoundaryFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum FaceCondition {
    /// Prescribed values `g(t, x)`.
    Dirichlet(BoundaryFn),
    /// Homogeneous Neumann: stencil points beyond the face are projected back onto it.
    Neumann,
    /// The dynamics never exit through this face; doing so is an error.
    Degenerate,
}

impl fmt::Debug for FaceCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FaceCondition::Dirichlet(_) => write!(f, "Dirichlet"),
            FaceCondition::Neumann => write!(f, "Neumann"),
            FaceCondition::Degenerate => write!(f, "Degenerate"),
        }
    }
}

/// What to do with a stencil point that exits through a Dirichlet face.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverstepPolicy {
    Error,
    /// Use the boundary data at the projection of the point onto the face.
    ClampToBoundary,
    /// Evaluate the boundary data at the exterior point itself.
    UseExtension,
}

/// Conditions for the `2N` faces, indexed `2 * axis + side` with side 1 the upper face.
#[derive(Clone, Debug)]
pub struct BoundarySpec {
    pub faces: Vec<FaceCondition>,
    pub overstep: OverstepPolicy,
}

/// Where a stencil point ended up after boundary treatment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Landing {
    /// Inside the closed box; interpolate there.
    Interior,
    /// Take the data of this Dirichlet face at the (possibly adjusted) point.
    Dirichlet(usize),
}

impl BoundarySpec {
    pub fn uniform(dim: usize, face: FaceCondition, overstep: OverstepPolicy) -> Self {
        Self {
            faces: vec![face; 2 * dim],
            overstep,
        }
    }

    /// Dirichlet on every face with the same data.
    pub fn dirichlet(dim: usize, g: BoundaryFn, overstep: OverstepPolicy) -> Self {
        Self::uniform(dim, FaceCondition::Dirichlet(g), overstep)
    }

    pub fn face_index(axis: usize, upper: bool) -> usize {
        2 * axis + upper as usize
    }

    pub fn face(&self, axis: usize, upper: bool) -> &FaceCondition {
        &self.faces[Self::face_index(axis, upper)]
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.faces.len() != 2 * dim {
            return Err(Error::Shape(format!(
                "boundary has {} faces, expected {}",
                self.faces.len(),
                2 * dim
            )));
        }
        Ok(())
    }

    /// Evaluates the data of Dirichlet face `face` at `(t, p)`.
    pub fn dirichlet_value(&self, face: usize, t: f64, p: &[f64]) -> f64 {
        match &self.faces[face] {
            FaceCondition::Dirichlet(g) => g(t, p),
            _ => unreachable!("face {face} is not a Dirichlet face"),
        }
    }

    /// Applies the face conditions to the stencil point `p` (first `grid.dim()` entries).
    ///
    /// Neumann faces clamp the offending coordinate. A Dirichlet exit is reported
    /// through the returned landing; under `ClampToBoundary` the coordinate is clamped
    /// as well, under `UseExtension` it is left in place.
    pub fn resolve(&self, grid: &Grid, p: &mut [f64; MAX_DIM]) -> Result<Landing> {
        let mut landing = Landing::Interior;
        for a in 0..grid.dim() {
            let lo = grid.lower()[a];
            let hi = grid.upper()[a];
            let tol = 1e-12 * (hi - lo);
            let (upper, bound) = if p[a] < lo {
                (false, lo)
            } else if p[a] > hi {
                (true, hi)
            } else {
                continue;
            };
            if (p[a] - bound).abs() <= tol {
                p[a] = bound;
                continue;
            }
            let idx = Self::face_index(a, upper);
            match &self.faces[idx] {
                FaceCondition::Neumann => p[a] = bound,
                FaceCondition::Degenerate => {
                    return Err(Error::Domain {
                        point: p[..grid.dim()].to_vec(),
                        detail: format!("stencil point exits degenerate face {idx}"),
                    })
                }
                FaceCondition::Dirichlet(_) => match self.overstep {
                    OverstepPolicy::Error => {
                        return Err(Error::Domain {
                            point: p[..grid.dim()].to_vec(),
                            detail: format!("stencil point exits Dirichlet face {idx}"),
                        })
                    }
                    OverstepPolicy::ClampToBoundary => {
                        p[a] = bound;
                        if landing == Landing::Interior {
                            landing = Landing::Dirichlet(idx);
                        }
                    }
                    OverstepPolicy::UseExtension => {
                        if landing == Landing::Interior {
                            landing = Landing::Dirichlet(idx);
                        }
                    }
                },
            }
        }
        Ok(landing)
    }
}

/// Role of a node in the discrete problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeRole {
    /// Unknown value determined by the scheme.
    Free,
    /// Value fixed by the data of the given Dirichlet face.
    Dirichlet(usize),
}

/// Per-node roles plus, for nodes on Neumann faces, the inward neighbor used
/// when the node's equation degenerates completely.
#[derive(Debug, Clone)]
pub struct NodeLayout {
    pub roles: Vec<NodeRole>,
    pub inward: Vec<Option<usize>>,
}

impl NodeLayout {
    pub fn new(grid: &Grid, spec: &BoundarySpec) -> Result<Self> {
        spec.validate(grid.dim())?;
        let mut roles = Vec::with_capacity(grid.len());
        let mut inward = Vec::with_capacity(grid.len());
        for j in 0..grid.len() {
            let mut role = NodeRole::Free;
            let mut nb = j;
            let mut on_neumann = false;
            for a in 0..grid.dim() {
                for upper in [false, true] {
                    if !grid.on_face(j, a, upper) {
                        continue;
                    }
                    let idx = BoundarySpec::face_index(a, upper);
                    match &spec.faces[idx] {
                        FaceCondition::Dirichlet(_) => {
                            if role == NodeRole::Free {
                                role = NodeRole::Dirichlet(idx);
                            }
                        }
                        FaceCondition::Neumann => {
                            on_neumann = true;
                            let s = grid.strides()[a];
                            nb = if upper { nb - s } else { nb + s };
                        }
                        FaceCondition::Degenerate => {}
                    }
                }
            }
            roles.push(role);
            inward.push(if on_neumann && role == NodeRole::Free {
                Some(nb)
            } else {
                None
            });
        }
        Ok(Self { roles, inward })
    }

    pub fn is_free(&self, j: usize) -> bool {
        self.roles[j] == NodeRole::Free
    }
}
