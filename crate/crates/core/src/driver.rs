//! End-to-end solve of a problem: coarse initialization, then either one
//! global Newton solve (`N_d = 1`) or the outer DDM iteration.

use std::time::Instant;

use crate::ddm::{coarse_initialize, global_newton, quadratic_seed, DdmConfig, DdmError, DdmSolver, DecompositionSpec};
use crate::geometry::Grid;
use crate::linalg::KrylovConfig;
use crate::problems::{l2_error, max_error, ProblemSpec};
use crate::report::SolveReport;
use crate::scheme::{GridFunction, ProblemData, Scheme};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub decomposition: DecompositionSpec,
    /// Newton and outer thresholds are this multiple of `h`.
    pub tol_factor: f64,
    pub krylov: KrylovConfig,
    pub max_newton: usize,
    pub max_outer: usize,
    pub coarse_init: bool,
    pub threads: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            decomposition: DecompositionSpec::single(),
            tol_factor: 1.0,
            krylov: KrylovConfig::default(),
            max_newton: 200,
            max_outer: 500,
            coarse_init: true,
            threads: 1,
        }
    }
}

impl SolveOptions {
    pub fn ddm_config(&self, h: f64) -> DdmConfig {
        let mut cfg = DdmConfig::new(h * self.tol_factor, self.decomposition);
        cfg.max_outer = self.max_outer;
        cfg.newton.max_iterations = self.max_newton;
        cfg.newton.krylov = self.krylov;
        cfg.coarse_init = self.coarse_init;
        cfg.threads = self.threads;
        cfg
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub u: GridFunction,
    pub report: SolveReport,
}

/// Solves with sampled data; `problem` supplies the coarse initialization
/// and the error norms when available.
pub fn solve(
    grid: &Grid,
    data: ProblemData,
    problem: Option<&ProblemSpec>,
    opts: &SolveOptions,
) -> Result<Solution, DdmError> {
    let start = Instant::now();
    let h = grid.h();
    let cfg = opts.ddm_config(h);
    let mut report = SolveReport {
        problem: problem.map_or("custom".into(), |p| p.id.to_string()),
        half_width: grid.spec().half_width(),
        h,
        n: grid.spec().n(),
        w: grid.spec().w(),
        m: opts.decomposition.m,
        n_split: opts.decomposition.n,
        p_x: opts.decomposition.p_x,
        p_y: opts.decomposition.p_y,
        ..Default::default()
    };

    let mut coarse_newton = cfg.newton;
    coarse_newton.abs_tol = h * opts.tol_factor;
    let u0 = match problem {
        Some(p) if opts.coarse_init => {
            let (u0, init) = coarse_initialize(p, grid, &coarse_newton)?;
            report.coarse_newton_iterations = init.newton.as_ref().map(|r| r.iterations);
            report.coarse_fell_back = init.fell_back;
            u0
        }
        _ => quadratic_seed(grid, &data),
    };

    let u = if opts.decomposition.count() == 1 {
        let scheme = Scheme::new(grid)?;
        let (u, rep) = global_newton(&scheme, &data, &u0, &coarse_newton)?;
        report.outer_iterations = 1;
        report.converged = rep.converged;
        report.total_newton_iterations = rep.iterations;
        report.total_krylov_iterations = rep.krylov_iterations;
        report.residual_history = rep.residual_history;
        report.final_residual = rep.final_residual;
        u
    } else {
        let solver = DdmSolver::new(grid, data, cfg)?;
        let (u, out) = solver.solve_from(u0)?;
        report.outer_iterations = out.outer_iterations;
        report.converged = out.converged;
        report.total_newton_iterations = out.newton_iterations;
        report.total_krylov_iterations = out.krylov_iterations;
        report.final_residual = *out.residual_history.last().expect("history starts non-empty");
        report.residual_history = out.residual_history;
        u
    };

    if let Some(exact) = problem.and_then(|p| p.exact.as_ref()) {
        report.l2_error = Some(l2_error(&u, exact.as_ref(), grid));
        report.max_error = Some(max_error(&u, exact.as_ref(), grid));
    }
    report.wall_seconds = start.elapsed().as_secs_f64();
    Ok(Solution { u, report })
}

/// [`solve`] for a built-in problem with evaluators.
pub fn solve_problem(problem: &ProblemSpec, grid: &Grid, opts: &SolveOptions) -> Result<Solution, DdmError> {
    solve(grid, problem.sample(grid), Some(problem), opts)
}
