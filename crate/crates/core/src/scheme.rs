//! Monotone quadrature discretization of the Monge-Ampere operator.
//!
//! At an interior node `x` the determinant of the Hessian is approximated
//! through the angular integral of `1 / u_theta_theta`:
//!
//! ```text
//! F(x) = -( (1/pi) sum_j mu_j / max(D_j u(x), h^2) )^(-2)
//!        - min(min_j D_j u(x), h^2) + f(x)
//! ```
//!
//! where `D_j` is a (possibly uncentered) second difference along stencil
//! direction `j` and `mu_j` are non-uniform composite Simpson weights over
//! `[0, pi)`. Boundary rows are `u(x) - g(x)`.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::ops::{Index, IndexMut};

use log::warn;
use thiserror::Error;

use crate::geometry::{DirectionSet, Grid, NodeId, StencilArm};
use crate::linalg::{CsrBuilder, CsrMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchemeError {
    #[error("quadrature weight {index} is {value}, the angle set is too non-uniform for a monotone rule")]
    NonPositiveWeight { index: usize, value: f64 },
    #[error("expected {expected} values for {what}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
}

/// Real values on every node of a grid (interior and boundary).
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    values: Vec<f64>,
}

impl GridFunction {
    pub fn zeros(grid: &Grid) -> Self {
        Self {
            values: vec![0.0; grid.num_nodes()],
        }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        Self {
            values: grid.nodes().iter().map(|p| f(p.x, p.y)).collect(),
        }
    }

    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Self, SchemeError> {
        if values.len() != grid.num_nodes() {
            return Err(SchemeError::LengthMismatch {
                what: "grid function",
                expected: grid.num_nodes(),
                got: values.len(),
            });
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Text table `node_id value`, 17 significant digits.
    pub fn dump(&self) -> String {
        let mut out = String::from("node_id value\n");
        for (i, v) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{i} {v:.16e}");
        }
        out
    }
}

impl Index<NodeId> for GridFunction {
    type Output = f64;

    fn index(&self, id: NodeId) -> &f64 {
        &self.values[id.0]
    }
}

impl IndexMut<NodeId> for GridFunction {
    fn index_mut(&mut self, id: NodeId) -> &mut f64 {
        &mut self.values[id.0]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureWeights {
    weights: Vec<f64>,
}

impl QuadratureWeights {
    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Composite Simpson weights on the periodic angle set, one panel per
/// consecutive (even, odd, even) triple with the last panel wrapping to
/// `theta_0 + pi`.
pub fn quad_weights(dirs: &DirectionSet) -> Result<QuadratureWeights, SchemeError> {
    weights_from_gaps(dirs.gaps())
}

fn weights_from_gaps(gaps: &[f64]) -> Result<QuadratureWeights, SchemeError> {
    let m = gaps.len();
    assert!(m >= 2 && m.is_multiple_of(2), "need an even number of directions");
    let gap = |k: isize| gaps[k.rem_euclid(m as isize) as usize];
    let weights: Vec<f64> = (0..m as isize)
        .map(|j| {
            if j % 2 == 1 {
                let (a, b) = (gap(j - 1), gap(j));
                (a + b).powi(3) / (6.0 * a * b)
            } else {
                let (a, b) = (gap(j), gap(j + 1));
                let (c, d) = (gap(j - 2), gap(j - 1));
                (a + b) / 6.0 * (2.0 - b / a) + (c + d) / 6.0 * (2.0 - c / d)
            }
        })
        .collect();
    if let Some((index, &value)) = weights.iter().enumerate().find(|(_, w)| !(**w > 0.0)) {
        return Err(SchemeError::NonPositiveWeight { index, value });
    }
    Ok(QuadratureWeights { weights })
}

/// Right-hand side on interior nodes and Dirichlet data on boundary nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemData {
    f: Vec<f64>,
    g: Vec<f64>,
}

impl ProblemData {
    pub fn new(grid: &Grid, f: Vec<f64>, g: Vec<f64>) -> Result<Self, SchemeError> {
        if f.len() != grid.num_interior() {
            return Err(SchemeError::LengthMismatch {
                what: "right-hand side",
                expected: grid.num_interior(),
                got: f.len(),
            });
        }
        if g.len() != grid.num_boundary() {
            return Err(SchemeError::LengthMismatch {
                what: "boundary data",
                expected: grid.num_boundary(),
                got: g.len(),
            });
        }
        if let Some(i) = f.iter().position(|v| *v < 0.0) {
            warn!("right-hand side is negative at interior node {i}; the convex problem is ill-posed there");
        }
        Ok(Self { f, g })
    }

    /// Samples `f` at interior nodes and `g` at boundary nodes.
    pub fn sample(grid: &Grid, f: impl Fn(f64, f64) -> f64, g: impl Fn(f64, f64) -> f64) -> Self {
        let f = grid.interior_ids().map(|id| f(grid[id].x, grid[id].y)).collect();
        let g = grid.boundary_ids().map(|id| g(grid[id].x, grid[id].y)).collect();
        Self::new(grid, f, g).expect("sampled lengths match the grid")
    }

    pub fn f(&self, node: NodeId) -> f64 {
        self.f[node.0]
    }

    /// Dirichlet value at a boundary node.
    pub fn g(&self, grid: &Grid, node: NodeId) -> f64 {
        self.g[node.0 - grid.num_interior()]
    }

    pub fn rhs(&self) -> &[f64] {
        &self.f
    }

    pub fn boundary_values(&self) -> &[f64] {
        &self.g
    }

    /// A grid function equal to `g` on the boundary and `interior` inside.
    pub fn with_boundary(&self, grid: &Grid, interior: impl Fn(f64, f64) -> f64) -> GridFunction {
        let mut u = GridFunction::from_fn(grid, interior);
        self.impose_boundary(grid, &mut u);
        u
    }

    pub fn impose_boundary(&self, grid: &Grid, u: &mut GridFunction) {
        let ni = grid.num_interior();
        u.values_mut()[ni..].copy_from_slice(&self.g);
    }
}

/// Ordered unknown set with a reverse map from node to column.
#[derive(Debug, Clone)]
pub struct Unknowns {
    nodes: Vec<NodeId>,
    column: Vec<Option<usize>>,
}

impl Unknowns {
    pub fn new(grid: &Grid, nodes: Vec<NodeId>) -> Self {
        let mut column = vec![None; grid.num_nodes()];
        for (k, id) in nodes.iter().enumerate() {
            assert!(grid.is_interior(*id), "unknowns must be interior nodes");
            assert!(column[id.0].is_none(), "duplicate unknown {id:?}");
            column[id.0] = Some(k);
        }
        Self { nodes, column }
    }

    pub fn all_interior(grid: &Grid) -> Self {
        Self::new(grid, grid.interior_ids().collect())
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn column(&self, id: NodeId) -> Option<usize> {
        self.column[id.0]
    }

    pub fn gather(&self, u: &GridFunction) -> Vec<f64> {
        self.nodes.iter().map(|&id| u[id]).collect()
    }

    pub fn scatter(&self, x: &[f64], u: &mut GridFunction) {
        for (&id, &v) in self.nodes.iter().zip(x) {
            u[id] = v;
        }
    }
}

/// The discrete operator bound to a grid.
#[derive(Debug, Clone)]
pub struct Scheme<'g> {
    grid: &'g Grid,
    weights: QuadratureWeights,
}

struct ArmDiff {
    value: f64,
    /// Derivatives with respect to `u(x + r+ nu)`, `u(x - r- nu)`, `u(x)`.
    d_plus: f64,
    d_minus: f64,
    d_center: f64,
}

fn arm_diff(u: &GridFunction, center: NodeId, arm: &StencilArm) -> ArmDiff {
    let (rp, rm) = (arm.r_plus, arm.r_minus);
    let denom = rp * rm * (rp + rm) / 2.0;
    let value = (rm * u[arm.plus] + rp * u[arm.minus] - (rp + rm) * u[center]) / denom;
    ArmDiff {
        value,
        d_plus: rm / denom,
        d_minus: rp / denom,
        d_center: -(rp + rm) / denom,
    }
}

impl<'g> Scheme<'g> {
    pub fn new(grid: &'g Grid) -> Result<Self, SchemeError> {
        Ok(Self {
            grid,
            weights: quad_weights(grid.directions())?,
        })
    }

    pub fn grid(&self) -> &'g Grid {
        self.grid
    }

    pub fn weights(&self) -> &QuadratureWeights {
        &self.weights
    }

    /// Second difference along direction `j`, exact on quadratics:
    /// `[r- u(x + r+ nu) + r+ u(x - r- nu) - (r+ + r-) u(x)] / [r+ r- (r+ + r-) / 2]`.
    pub fn dir_second_diff(&self, u: &GridFunction, node: NodeId, j: usize) -> f64 {
        arm_diff(u, node, &self.grid.stencil(node).arms[j]).value
    }

    pub fn residual(&self, u: &GridFunction, data: &ProblemData, node: NodeId) -> f64 {
        if !self.grid.is_interior(node) {
            return u[node] - data.g(self.grid, node);
        }
        let h2 = self.grid.h().powi(2);
        let mut harmonic = 0.0;
        let mut least = h2;
        for (arm, mu) in self.grid.stencil(node).arms.iter().zip(self.weights.as_slice()) {
            let d = arm_diff(u, node, arm).value;
            harmonic += mu / d.max(h2);
            least = least.min(d);
        }
        -(harmonic / PI).powi(-2) - least + data.f(node)
    }

    /// Residual on every node, interior first.
    pub fn residual_all(&self, u: &GridFunction, data: &ProblemData) -> Vec<f64> {
        (0..self.grid.num_nodes()).map(|i| self.residual(u, data, NodeId(i))).collect()
    }

    pub fn interior_residual_norm(&self, u: &GridFunction, data: &ProblemData) -> f64 {
        self.grid
            .interior_ids()
            .map(|id| self.residual(u, data, id).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// One row of the Jacobian as `(node, derivative)` pairs over all
    /// stencil nodes, unmerged.
    fn row_derivatives(&self, u: &GridFunction, node: NodeId, out: &mut Vec<(NodeId, f64)>) {
        out.clear();
        let h2 = self.grid.h().powi(2);
        let arms = &self.grid.stencil(node).arms;
        let diffs: Vec<ArmDiff> = arms.iter().map(|arm| arm_diff(u, node, arm)).collect();
        let harmonic: f64 = diffs
            .iter()
            .zip(self.weights.as_slice())
            .map(|(d, mu)| mu / d.value.max(h2))
            .sum::<f64>()
            / PI;
        // d/dS of -S^(-2) is 2 S^(-3); dS/dD_j = -mu_j / (pi D_j^2) on the identity branch.
        let outer = 2.0 * harmonic.powi(-3);
        let mut center = 0.0;
        for ((d, arm), mu) in diffs.iter().zip(arms).zip(self.weights.as_slice()) {
            if d.value >= h2 {
                let coef = -outer * mu / (PI * d.value * d.value);
                out.push((arm.plus, coef * d.d_plus));
                out.push((arm.minus, coef * d.d_minus));
                center += coef * d.d_center;
            }
        }
        // The min term: first minimizing direction, unless h^2 wins.
        let (mut best, mut best_val) = (None, h2);
        for (j, d) in diffs.iter().enumerate() {
            if d.value < best_val {
                best = Some(j);
                best_val = d.value;
            }
        }
        if let Some(j) = best {
            out.push((arms[j].plus, -diffs[j].d_plus));
            out.push((arms[j].minus, -diffs[j].d_minus));
            center -= diffs[j].d_center;
        }
        out.push((node, center));
    }

    /// Exact Jacobian of the interior rows at `unknowns`, with respect to the
    /// values at `unknowns`; every other node is treated as fixed data.
    pub fn assemble_jacobian(&self, u: &GridFunction, unknowns: &Unknowns) -> CsrMatrix {
        let mut builder = CsrBuilder::new(unknowns.len());
        let mut scratch = Vec::new();
        for &node in unknowns.nodes() {
            self.row_derivatives(u, node, &mut scratch);
            let row = scratch
                .iter()
                .filter_map(|&(nb, v)| unknowns.column(nb).map(|c| (c, v)))
                .collect();
            builder.push_row(row).expect("columns come from the unknown map");
        }
        builder.finish()
    }
}
