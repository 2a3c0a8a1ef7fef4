//! Computational grid for the square `(-L, L)^2`.
//!
//! The interior is an `N x N` lattice with spacing `h = 2L / (N + 1)`. Every
//! interior node carries a wide stencil of `2w` directions; when a stencil
//! arm would leave the square it is cut at the wall and a supplemental
//! boundary node is placed at the intersection point. Boundary nodes are
//! keyed by exact rational lattice coordinates, so coincident intersections
//! (corners, shared rays) merge without any floating-point tolerance.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::ops::Index;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("half-width must be positive and finite, got {0}")]
    InvalidHalfWidth(f64),
    #[error("need at least one interior node per axis")]
    EmptyLattice,
    #[error("grid spacing {h} does not divide the width {width} into a whole number of cells")]
    IncompatibleSpacing { h: f64, width: f64 },
    #[error("stencil arm {direction} of node {node} reaches neither a node nor the boundary")]
    UnreachableArm { node: usize, direction: usize },
}

/// Smallest integer `w >= 1` with `w^3 >= 1/h`, i.e. `ceil(h^(-1/3))`.
///
/// `cbrt` is not exact at perfect cubes, so the floating estimate is
/// corrected with integer powers.
pub fn stencil_width(h: f64) -> usize {
    let mut w = (1.0 / h).cbrt().ceil().max(1.0) as usize;
    let covers = |w: usize| (w as f64).powi(3) * h >= 1.0 - 1e-12;
    while w > 1 && covers(w - 1) {
        w -= 1;
    }
    while !covers(w) {
        w += 1;
    }
    w
}

/// Square domain `(-L, L)^2` with `N` interior nodes per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainSpec {
    half_width: f64,
    n: usize,
    h: f64,
    w: usize,
}

impl DomainSpec {
    pub fn new(half_width: f64, n: usize) -> Result<Self, GeometryError> {
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(GeometryError::InvalidHalfWidth(half_width));
        }
        if n == 0 {
            return Err(GeometryError::EmptyLattice);
        }
        let h = 2.0 * half_width / (n as f64 + 1.0);
        Ok(Self {
            half_width,
            n,
            h,
            w: stencil_width(h),
        })
    }

    /// Builds the spec from a target spacing; `2L/h` must be an integer.
    pub fn from_spacing(half_width: f64, h: f64) -> Result<Self, GeometryError> {
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(GeometryError::InvalidHalfWidth(half_width));
        }
        let width = 2.0 * half_width;
        let cells = (width / h).round();
        if !(h.is_finite() && h > 0.0) || (cells * h - width).abs() > 1e-9 * width {
            return Err(GeometryError::IncompatibleSpacing { h, width });
        }
        if cells < 2.0 {
            return Err(GeometryError::EmptyLattice);
        }
        Self::new(half_width, cells as usize - 1)
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    /// Interior nodes per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Stencil width `ceil(h^(-1/3))`.
    pub fn w(&self) -> usize {
        self.w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Interior,
    Boundary,
}

impl NodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Interior => "interior",
            NodeKind::Boundary => "boundary",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub kind: NodeKind,
    pub x: f64,
    pub y: f64,
}

/// The `2w` stencil directions `e_j = (w - j, w - |w - j|)` and their angles.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionSet {
    offsets: Vec<(i64, i64)>,
    angles: Vec<f64>,
    gaps: Vec<f64>,
}

impl DirectionSet {
    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn offsets(&self) -> &[(i64, i64)] {
        &self.offsets
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    /// `gaps[j] = angles[j+1] - angles[j]`, the last one wrapping through `pi`.
    pub fn gaps(&self) -> &[f64] {
        &self.gaps
    }

    pub fn unit_vector(&self, j: usize) -> (f64, f64) {
        let (s, c) = self.angles[j].sin_cos();
        (c, s)
    }
}

pub fn build_directions(w: usize) -> DirectionSet {
    assert!(w >= 1, "stencil width must be at least 1");
    let wi = w as i64;
    let offsets: Vec<(i64, i64)> = (0..2 * wi).map(|j| (wi - j, wi - (wi - j).abs())).collect();
    let angles: Vec<f64> = offsets
        .iter()
        .map(|&(ex, ey)| (ey as f64).atan2(ex as f64))
        .collect();
    let m = angles.len();
    let gaps = (0..m)
        .map(|j| {
            if j + 1 < m {
                angles[j + 1] - angles[j]
            } else {
                angles[0] + PI - angles[j]
            }
        })
        .collect();
    DirectionSet {
        offsets,
        angles,
        gaps,
    }
}

/// One stencil direction at one node: the two neighbors along `+nu_j` and
/// `-nu_j` and their distances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StencilArm {
    pub plus: NodeId,
    pub minus: NodeId,
    pub r_plus: f64,
    pub r_minus: f64,
    pub centered: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeStencil {
    pub arms: Vec<StencilArm>,
}

/// Interior lattice plus supplemental boundary nodes, with a stencil per
/// interior node. Interior ids come first, ordered row-major with `x`
/// fastest; boundary ids follow in order of discovery.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    spec: DomainSpec,
    directions: DirectionSet,
    nodes: Vec<Node>,
    stencils: Vec<NodeStencil>,
}

fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Where an arm from lattice point `(i, j)` along integer offset `d` ends.
enum ArmEnd {
    Lattice(usize, usize),
    /// Wall point at lattice coordinates `(x_num / den, y_num / den)`,
    /// reached at parameter `t = t_num / t_den` along the offset.
    Wall {
        x_num: i64,
        y_num: i64,
        den: i64,
        t_num: i64,
        t_den: i64,
    },
}

fn trace_arm(n: usize, i: usize, j: usize, d: (i64, i64)) -> Option<ArmEnd> {
    let ni = n as i64;
    let (i, j) = (i as i64, j as i64);
    let (ti, tj) = (i + d.0, j + d.1);
    if (1..=ni).contains(&ti) && (1..=ni).contains(&tj) {
        return Some(ArmEnd::Lattice(ti as usize, tj as usize));
    }
    // Distance to the wall in lattice units, as a fraction a/b of the offset.
    let axis_t = |pos: i64, step: i64| -> Option<(i64, i64)> {
        match step.signum() {
            1 => Some((ni + 1 - pos, step)),
            -1 => Some((pos, -step)),
            _ => None,
        }
    };
    let t = match (axis_t(i, d.0), axis_t(j, d.1)) {
        (Some(a), Some(b)) => {
            if a.0 * b.1 <= b.0 * a.1 {
                a
            } else {
                b
            }
        }
        (Some(a), None) | (None, Some(a)) => a,
        (None, None) => return None,
    };
    let (t_num, t_den) = t;
    let mut x_num = i * t_den + t_num * d.0;
    let mut y_num = j * t_den + t_num * d.1;
    let mut den = t_den;
    let g = gcd(gcd(x_num, y_num), den);
    x_num /= g;
    y_num /= g;
    den /= g;
    Some(ArmEnd::Wall {
        x_num,
        y_num,
        den,
        t_num,
        t_den,
    })
}

pub fn build_grid(spec: DomainSpec) -> Result<Grid, GeometryError> {
    let n = spec.n;
    let h = spec.h;
    let l = spec.half_width;
    let directions = build_directions(spec.w);

    let mut nodes = Vec::with_capacity(n * n);
    for iy in 1..=n {
        for ix in 1..=n {
            nodes.push(Node {
                kind: NodeKind::Interior,
                x: -l + ix as f64 * h,
                y: -l + iy as f64 * h,
            });
        }
    }

    let wall = n as i64 + 1;
    let coord = |num: i64, den: i64| -> f64 {
        if num == 0 {
            -l
        } else if num == wall * den {
            l
        } else {
            -l + (num as f64 / den as f64) * h
        }
    };

    let mut boundary_index: HashMap<(i64, i64, i64), NodeId> = HashMap::new();
    let mut stencils = Vec::with_capacity(n * n);
    for iy in 1..=n {
        for ix in 1..=n {
            let node = (iy - 1) * n + (ix - 1);
            let mut arms = Vec::with_capacity(directions.len());
            for (dir, &(ex, ey)) in directions.offsets.iter().enumerate() {
                let length = h * ((ex * ex + ey * ey) as f64).sqrt();
                let mut ends = [(NodeId(0), 0.0, false); 2];
                for (slot, sign) in [1i64, -1].into_iter().enumerate() {
                    let end = trace_arm(n, ix, iy, (sign * ex, sign * ey))
                        .ok_or(GeometryError::UnreachableArm { node, direction: dir })?;
                    ends[slot] = match end {
                        ArmEnd::Lattice(tx, ty) => (NodeId((ty - 1) * n + (tx - 1)), length, true),
                        ArmEnd::Wall {
                            x_num,
                            y_num,
                            den,
                            t_num,
                            t_den,
                        } => {
                            let id = *boundary_index.entry((x_num, y_num, den)).or_insert_with(|| {
                                nodes.push(Node {
                                    kind: NodeKind::Boundary,
                                    x: coord(x_num, den),
                                    y: coord(y_num, den),
                                });
                                NodeId(nodes.len() - 1)
                            });
                            (id, length * t_num as f64 / t_den as f64, false)
                        }
                    };
                }
                let [(plus, r_plus, plus_inside), (minus, r_minus, minus_inside)] = ends;
                if !(r_plus > 0.0 && r_minus > 0.0) {
                    return Err(GeometryError::UnreachableArm { node, direction: dir });
                }
                arms.push(StencilArm {
                    plus,
                    minus,
                    r_plus,
                    r_minus,
                    centered: plus_inside && minus_inside,
                });
            }
            stencils.push(NodeStencil { arms });
        }
    }

    Ok(Grid {
        spec,
        directions,
        nodes,
        stencils,
    })
}

impl Grid {
    pub fn spec(&self) -> &DomainSpec {
        &self.spec
    }

    pub fn directions(&self) -> &DirectionSet {
        &self.directions
    }

    pub fn h(&self) -> f64 {
        self.spec.h
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_interior(&self) -> usize {
        self.spec.n * self.spec.n
    }

    pub fn num_boundary(&self) -> usize {
        self.nodes.len() - self.num_interior()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn is_interior(&self, id: NodeId) -> bool {
        id.0 < self.num_interior()
    }

    /// Id of the interior lattice node `(ix, iy)`, `1 <= ix, iy <= N`.
    pub fn interior_id(&self, ix: usize, iy: usize) -> NodeId {
        let n = self.spec.n;
        assert!((1..=n).contains(&ix) && (1..=n).contains(&iy), "lattice index out of range");
        NodeId((iy - 1) * n + (ix - 1))
    }

    /// Lattice indices of an interior node.
    pub fn lattice(&self, id: NodeId) -> Option<(usize, usize)> {
        let n = self.spec.n;
        self.is_interior(id).then(|| (id.0 % n + 1, id.0 / n + 1))
    }

    pub fn interior_ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.num_interior()).map(NodeId)
    }

    pub fn boundary_ids(&self) -> impl Iterator<Item = NodeId> {
        (self.num_interior()..self.nodes.len()).map(NodeId)
    }

    pub fn stencil(&self, id: NodeId) -> &NodeStencil {
        &self.stencils[id.0]
    }

    /// Text table `node_id kind x y`, coordinates with 17 significant digits.
    pub fn dump(&self) -> String {
        let mut out = String::from("node_id kind x y\n");
        for (id, node) in self.nodes.iter().enumerate() {
            let _ = writeln!(out, "{id} {} {:.16e} {:.16e}", node.kind.as_str(), node.x, node.y);
        }
        out
    }
}

impl Index<NodeId> for Grid {
    type Output = Node;

    fn index(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn stencil_width_at_exact_cubes() {
        assert_eq!(stencil_width(0.125), 2);
        assert_eq!(stencil_width(1.0 / 27.0), 3);
        assert_eq!(stencil_width(0.05), 3);
        assert_eq!(stencil_width(0.25), 2);
        assert_eq!(stencil_width(0.025), 4);
        assert_eq!(stencil_width(0.01), 5);
        assert_eq!(stencil_width(2.0), 1);
    }

    #[test]
    fn spec_from_spacing() {
        let spec = DomainSpec::from_spacing(0.5, 0.05).unwrap();
        assert_eq!(spec.n(), 19);
        assert!(close(spec.h(), 0.05, 1e-15));
        assert_eq!(spec.w(), 3);
        assert!(matches!(
            DomainSpec::from_spacing(0.5, 0.3),
            Err(GeometryError::IncompatibleSpacing { .. })
        ));
        assert!(matches!(DomainSpec::from_spacing(0.5, 1.0), Err(GeometryError::EmptyLattice)));
        assert!(DomainSpec::new(-1.0, 3).is_err());
        assert!(DomainSpec::new(1.0, 0).is_err());
    }

    #[test]
    fn directions_w1() {
        let d = build_directions(1);
        assert_eq!(d.offsets(), &[(1, 0), (0, 1)]);
        assert!(close(d.angles()[0], 0.0, 1e-15));
        assert!(close(d.angles()[1], PI / 2.0, 1e-15));
    }

    #[test]
    fn directions_w2() {
        let d = build_directions(2);
        assert_eq!(d.offsets(), &[(2, 0), (1, 1), (0, 2), (-1, 1)]);
        for (k, a) in d.angles().iter().enumerate() {
            assert!(close(*a, k as f64 * PI / 4.0, 1e-15));
        }
        for g in d.gaps() {
            assert!(close(*g, PI / 4.0, 1e-15));
        }
    }

    #[test]
    fn directions_w3() {
        let d = build_directions(3);
        assert_eq!(d.offsets(), &[(3, 0), (2, 1), (1, 2), (0, 3), (-1, 2), (-2, 1)]);
        let expect = [
            0.0,
            0.5f64.atan(),
            2.0f64.atan(),
            PI / 2.0,
            PI - 2.0f64.atan(),
            PI - 0.5f64.atan(),
        ];
        for (a, e) in d.angles().iter().zip(expect) {
            assert!(close(*a, e, 1e-15));
        }
    }

    #[test]
    fn angular_coverage() {
        for w in 1..=10 {
            let d = build_directions(w);
            assert_eq!(d.len(), 2 * w);
            assert_eq!(d.angles()[0], 0.0);
            assert!(d.angles().windows(2).all(|p| p[0] < p[1]));
            assert!(*d.angles().last().unwrap() < PI);
            let total: f64 = d.gaps().iter().sum();
            assert!(close(total, PI, 1e-12));
        }
    }

    #[test]
    fn center_node_of_small_grid() {
        let spec = DomainSpec::new(0.5, 3).unwrap();
        assert!(close(spec.h(), 0.25, 1e-15));
        assert_eq!(spec.w(), 2);
        let grid = build_grid(spec).unwrap();
        assert_eq!(grid.num_interior(), 9);
        let center = grid.interior_id(2, 2);
        assert!(close(grid[center].x, 0.0, 1e-15) && close(grid[center].y, 0.0, 1e-15));
        let st = grid.stencil(center);
        // (2,0) and (0,2) arms reach the walls at distance 0.5; diagonals stay inside.
        for (j, arm) in st.arms.iter().enumerate() {
            let axis = j % 2 == 0;
            assert_eq!(grid.is_interior(arm.plus), !axis);
            assert_eq!(grid.is_interior(arm.minus), !axis);
            if axis {
                assert!(close(arm.r_plus, 0.5, 1e-15) && close(arm.r_minus, 0.5, 1e-15));
            } else {
                assert!(arm.centered);
                assert!(close(arm.r_plus, 0.25 * 2f64.sqrt(), 1e-15));
            }
        }
    }

    #[test]
    fn wall_adjacent_arm_is_short() {
        let grid = build_grid(DomainSpec::new(1.0, 7).unwrap()).unwrap();
        let h = grid.h();
        let w = grid.spec().w() as f64;
        let id = grid.interior_id(7, 4);
        let arm = grid.stencil(id).arms[0];
        assert!(!grid.is_interior(arm.plus));
        assert!(close(arm.r_plus, h, 1e-14));
        assert!(arm.r_plus < h * w);
        assert!(close(grid[arm.plus].x, 1.0, 0.0));
    }

    /// Independent ray enumerator: floating-point intersection against each of
    /// the four walls, deduplicated with a coordinate tolerance.
    fn brute_force_boundary(spec: DomainSpec) -> Vec<(f64, f64)> {
        let l = spec.half_width();
        let h = spec.h();
        let n = spec.n() as i64;
        let w = spec.w() as i64;
        let mut pts: Vec<(f64, f64)> = Vec::new();
        for iy in 1..=n {
            for ix in 1..=n {
                let (x, y) = (-l + ix as f64 * h, -l + iy as f64 * h);
                for j in 0..2 * w {
                    let e = (w - j, w - (w - j).abs());
                    for s in [1i64, -1] {
                        let (dx, dy) = ((s * e.0) as f64 * h, (s * e.1) as f64 * h);
                        let (tx, ty) = (ix + s * e.0, iy + s * e.1);
                        if tx >= 1 && tx <= n && ty >= 1 && ty <= n {
                            continue;
                        }
                        let mut t_best = f64::INFINITY;
                        for (p, d) in [(x, dx), (y, dy)] {
                            for wall in [-l, l] {
                                if d != 0.0 {
                                    let t = (wall - p) / d;
                                    if t > 0.0 && t < t_best {
                                        t_best = t;
                                    }
                                }
                            }
                        }
                        let q = (x + t_best * dx, y + t_best * dy);
                        if !pts
                            .iter()
                            .any(|p| (p.0 - q.0).abs() < 1e-12 * l && (p.1 - q.1).abs() < 1e-12 * l)
                        {
                            pts.push(q);
                        }
                    }
                }
            }
        }
        pts
    }

    #[test]
    fn boundary_count_matches_brute_force() {
        for (l, n) in [(0.5, 3), (0.5, 9), (1.0, 19), (0.7, 12)] {
            let spec = DomainSpec::new(l, n).unwrap();
            let grid = build_grid(spec).unwrap();
            let oracle = brute_force_boundary(spec);
            assert_eq!(grid.num_boundary(), oracle.len(), "L={l} N={n}");
            for id in grid.boundary_ids() {
                let p = grid[id];
                assert!(oracle
                    .iter()
                    .any(|q| (p.x - q.0).abs() < 1e-12 * l && (p.y - q.1).abs() < 1e-12 * l));
            }
        }
    }

    #[test]
    fn arms_reproduce_neighbor_coordinates() {
        for (l, n) in [(0.5, 3), (0.5, 19), (2.0, 15)] {
            let grid = build_grid(DomainSpec::new(l, n).unwrap()).unwrap();
            let h = grid.h();
            for id in grid.interior_ids() {
                let x = grid[id];
                for (j, arm) in grid.stencil(id).arms.iter().enumerate() {
                    let (cx, cy) = grid.directions().unit_vector(j);
                    let p = grid[arm.plus];
                    let m = grid[arm.minus];
                    assert!(close(x.x + arm.r_plus * cx, p.x, 1e-12 * l));
                    assert!(close(x.y + arm.r_plus * cy, p.y, 1e-12 * l));
                    assert!(close(x.x - arm.r_minus * cx, m.x, 1e-12 * l));
                    assert!(close(x.y - arm.r_minus * cy, m.y, 1e-12 * l));
                    if arm.centered {
                        let (ex, ey) = grid.directions().offsets()[j];
                        let len = h * ((ex * ex + ey * ey) as f64).sqrt();
                        assert!(close(arm.r_plus, len, 1e-15) && close(arm.r_minus, len, 1e-15));
                    }
                    for nb in [arm.plus, arm.minus] {
                        if !grid.is_interior(nb) {
                            let b = grid[nb];
                            let on_wall = close(b.x.abs(), l, 1e-12 * l) || close(b.y.abs(), l, 1e-12 * l);
                            assert!(on_wall);
                            assert!(b.x.abs() <= l && b.y.abs() <= l);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn interior_stencils_are_symmetric() {
        let grid = build_grid(DomainSpec::new(0.5, 11).unwrap()).unwrap();
        for id in grid.interior_ids() {
            for (j, arm) in grid.stencil(id).arms.iter().enumerate() {
                if grid.is_interior(arm.plus) {
                    let back = grid.stencil(arm.plus).arms[j];
                    assert_eq!(back.minus, id);
                    assert_eq!(back.r_minus, arm.r_plus);
                }
            }
        }
    }

    #[test]
    fn lattice_round_trip_and_determinism() {
        let spec = DomainSpec::new(1.0, 8).unwrap();
        let a = build_grid(spec).unwrap();
        let b = build_grid(spec).unwrap();
        assert_eq!(a, b);
        for id in a.interior_ids() {
            let (ix, iy) = a.lattice(id).unwrap();
            assert_eq!(a.interior_id(ix, iy), id);
            assert!(close(a[id].x, -1.0 + ix as f64 * a.h(), 1e-15));
        }
        assert!(a.lattice(NodeId(a.num_interior())).is_none());
    }

    #[test]
    fn single_node_grid() {
        let grid = build_grid(DomainSpec::new(1.0, 1).unwrap()).unwrap();
        assert_eq!(grid.num_interior(), 1);
        assert_eq!(grid.spec().w(), 1);
        let st = grid.stencil(NodeId(0));
        assert_eq!(st.arms.len(), 2);
        assert!(st.arms.iter().all(|a| !a.centered && close(a.r_plus, 1.0, 1e-15)));
        assert_eq!(grid.num_boundary(), 4);
    }

    #[test]
    fn dump_has_one_row_per_node() {
        let grid = build_grid(DomainSpec::new(0.5, 3).unwrap()).unwrap();
        let text = grid.dump();
        assert_eq!(text.lines().count(), grid.num_nodes() + 1);
        assert!(text.lines().nth(1).unwrap().starts_with("0 interior -2.5000000000000000e-1"));
    }
}
