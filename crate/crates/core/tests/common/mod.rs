#![allow(dead_code)]

use ma_ddm::geometry::{build_grid, DomainSpec, Grid, NodeId};
use ma_ddm::scheme::{GridFunction, ProblemData, Scheme, Unknowns};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn small_grid(l: f64, h: f64) -> Grid {
    build_grid(DomainSpec::from_spacing(l, h).unwrap()).unwrap()
}

pub fn jitter(grid: &Grid, u: &mut GridFunction, amp: f64, rng: &mut ChaCha8Rng) {
    for id in grid.interior_ids() {
        u[id] += amp * rng.gen_range(-1.0..1.0);
    }
}

pub fn fd_jacobian(scheme: &Scheme, data: &ProblemData, u: &GridFunction, step: f64) -> Vec<Vec<f64>> {
    let grid = scheme.grid();
    let ids: Vec<NodeId> = grid.interior_ids().collect();
    let mut cols = vec![vec![0.0; ids.len()]; ids.len()];
    for (k, &id) in ids.iter().enumerate() {
        let mut up = u.clone();
        up[id] += step;
        let mut dn = u.clone();
        dn[id] -= step;
        for (r, &row) in ids.iter().enumerate() {
            cols[k][r] = (scheme.residual(&up, data, row) - scheme.residual(&dn, data, row)) / (2.0 * step);
        }
    }
    cols
}

pub fn kink_distance(scheme: &Scheme, u: &GridFunction, row: NodeId) -> f64 {
    let h2 = scheme.grid().h().powi(2);
    let mut d: Vec<f64> = (0..scheme.grid().directions().len())
        .map(|j| scheme.dir_second_diff(u, row, j))
        .collect();
    let mut dist = d.iter().map(|v| (v - h2).abs()).fold(f64::INFINITY, f64::min);
    d.sort_by(f64::total_cmp);
    if d[0] < h2 {
        dist = dist.min(d[1] - d[0]);
    }
    dist
}

pub fn max_relative_error(scheme: &Scheme, data: &ProblemData, u: &GridFunction, rows_ok: impl Fn(NodeId) -> bool) -> f64 {
    let grid = scheme.grid();
    let ids: Vec<NodeId> = grid.interior_ids().collect();
    let jac = scheme.assemble_jacobian(u, &Unknowns::all_interior(grid));
    let fd = fd_jacobian(scheme, data, u, 1e-6);
    let mut worst: f64 = 0.0;
    for (r, &row) in ids.iter().enumerate() {
        if !rows_ok(row) {
            continue;
        }
        for (c, col) in fd.iter().enumerate() {
            let (a, b) = (jac.get(r, c), col[r]);
            worst = worst.max((a - b).abs() / a.abs().max(b.abs()).max(1.0));
        }
    }
    worst
}
