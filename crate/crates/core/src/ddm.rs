//! Overlapping domain decomposition for the discrete scheme.
//!
//! The interior lattice is split into an `m x n` block layout, each block is
//! widened by a number of overlap layers, and one outer iteration solves the
//! scheme independently on every widened block (values outside the block
//! frozen to the previous iterate) and merges the block solutions with a
//! partition of unity.

use std::ops::RangeInclusive;

use log::{debug, info, warn};
use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{build_grid, DomainSpec, GeometryError, Grid, NodeId};
use crate::linalg::CsrMatrix;
use crate::nonlinear::{newton_solve, NewtonConfig, NewtonError, NewtonReport, NonlinearSystem};
use crate::problems::ProblemSpec;
use crate::scheme::{GridFunction, ProblemData, Scheme, SchemeError, Unknowns};

#[derive(Debug, Error)]
pub enum DdmError {
    #[error("invalid decomposition: {0}")]
    InvalidDecomposition(String),
    #[error("subdomain {index} is empty")]
    EmptySubdomain { index: usize },
    #[error("Newton solve on subdomain {index} did not converge (|F| = {:.3e} after {} iterations)", report.final_residual, report.iterations)]
    SubdomainDiverged { index: usize, report: Box<NewtonReport> },
    #[error("Newton solve on subdomain {index} failed: {source}")]
    SubdomainFailed {
        index: usize,
        #[source]
        source: NewtonError,
    },
    #[error(transparent)]
    Newton(#[from] NewtonError),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("could not build thread pool: {0}")]
    ThreadPool(String),
}

/// `m` splits along `x`, `n` along `y`, overlap fractions per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecompositionSpec {
    pub m: usize,
    pub n: usize,
    pub p_x: f64,
    pub p_y: f64,
}

impl DecompositionSpec {
    pub fn new(m: usize, n: usize, p_x: f64, p_y: f64) -> Self {
        Self { m, n, p_x, p_y }
    }

    pub fn uniform(m: usize, n: usize, p: f64) -> Self {
        Self::new(m, n, p, p)
    }

    pub fn single() -> Self {
        Self::uniform(1, 1, 0.0)
    }

    pub fn count(&self) -> usize {
        self.m * self.n
    }

    /// Overlap layers `(delta_x, delta_y)` for `n_grid` interior nodes per axis:
    /// `round(p * N / splits)`, at least one layer whenever `p > 0`.
    pub fn layers(&self, n_grid: usize) -> (usize, usize) {
        let layers = |p: f64, splits: usize| {
            let d = (p * n_grid as f64 / splits as f64).round() as usize;
            if p > 0.0 {
                d.max(1)
            } else {
                d
            }
        };
        (layers(self.p_x, self.m), layers(self.p_y, self.n))
    }

    fn validate(&self, n_grid: usize) -> Result<(), DdmError> {
        if self.m == 0 || self.n == 0 {
            return Err(DdmError::InvalidDecomposition("need at least one split per axis".into()));
        }
        if self.m > n_grid || self.n > n_grid {
            return Err(DdmError::InvalidDecomposition(format!(
                "{}x{} splits exceed the {n_grid} nodes per axis",
                self.m, self.n
            )));
        }
        for p in [self.p_x, self.p_y] {
            if !(0.0..=1.0).contains(&p) {
                return Err(DdmError::InvalidDecomposition(format!("overlap fraction {p} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// One widened block `G_i` of interior nodes.
#[derive(Debug, Clone)]
pub struct Subdomain {
    pub index: usize,
    /// Inclusive lattice index ranges (1-based) after widening.
    pub x_range: RangeInclusive<usize>,
    pub y_range: RangeInclusive<usize>,
    pub unknowns: Unknowns,
}

impl Subdomain {
    pub fn contains(&self, node: NodeId) -> bool {
        self.unknowns.column(node).is_some()
    }

    pub fn len(&self) -> usize {
        self.unknowns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.unknowns.is_empty()
    }
}

/// Partition of unity `lambda_i(x)` over interior nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct MergeWeights {
    weights: Vec<Vec<f64>>,
}

impl MergeWeights {
    pub fn weight(&self, subdomain: usize, node: NodeId) -> f64 {
        self.weights[subdomain][node.0]
    }

    pub fn num_subdomains(&self) -> usize {
        self.weights.len()
    }
}

#[derive(Debug, Clone)]
pub struct Decomposition {
    pub spec: DecompositionSpec,
    pub layers: (usize, usize),
    pub subdomains: Vec<Subdomain>,
    pub weights: MergeWeights,
}

/// Contiguous blocks of `1..=n` with sizes differing by at most one.
fn split_axis(n: usize, parts: usize) -> Vec<RangeInclusive<usize>> {
    let (base, rem) = (n / parts, n % parts);
    let mut start = 1;
    (0..parts)
        .map(|k| {
            let len = base + usize::from(k < rem);
            let r = start..=(start + len).saturating_sub(1);
            start += len;
            r
        })
        .collect()
}

fn widen(r: &RangeInclusive<usize>, by: usize, n: usize) -> RangeInclusive<usize> {
    r.start().saturating_sub(by).max(1)..=(r.end() + by).min(n)
}

pub fn decompose(grid: &Grid, dspec: &DecompositionSpec) -> Result<Decomposition, DdmError> {
    let n = grid.spec().n();
    dspec.validate(n)?;
    let layers = dspec.layers(n);
    let xs = split_axis(n, dspec.m);
    let ys = split_axis(n, dspec.n);
    let mut subdomains = Vec::with_capacity(dspec.count());
    for by in &ys {
        for bx in &xs {
            let index = subdomains.len();
            if bx.is_empty() || by.is_empty() {
                return Err(DdmError::EmptySubdomain { index });
            }
            let x_range = widen(bx, layers.0, n);
            let y_range = widen(by, layers.1, n);
            let nodes = y_range
                .clone()
                .flat_map(|iy| x_range.clone().map(move |ix| (ix, iy)))
                .map(|(ix, iy)| grid.interior_id(ix, iy))
                .collect();
            subdomains.push(Subdomain {
                index,
                x_range,
                y_range,
                unknowns: Unknowns::new(grid, nodes),
            });
        }
    }

    let mut multiplicity = vec![0usize; grid.num_interior()];
    for s in &subdomains {
        for id in s.unknowns.nodes() {
            multiplicity[id.0] += 1;
        }
    }
    debug_assert!(multiplicity.iter().all(|&c| c > 0), "blocks cover the lattice");
    let weights = subdomains
        .iter()
        .map(|s| {
            let mut w = vec![0.0; grid.num_interior()];
            for id in s.unknowns.nodes() {
                w[id.0] = 1.0 / multiplicity[id.0] as f64;
            }
            w
        })
        .collect();

    Ok(Decomposition {
        spec: *dspec,
        layers,
        subdomains,
        weights: MergeWeights { weights },
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DdmConfig {
    pub decomposition: DecompositionSpec,
    /// Outer loop stops when the interior residual 2-norm drops below this.
    pub outer_tol: f64,
    pub max_outer: usize,
    /// Subdomain Newton settings; `abs_tol` is the subdomain stopping threshold.
    pub newton: NewtonConfig,
    pub coarse_init: bool,
    /// Worker threads for the subdomain solves; 1 runs them in order.
    pub threads: usize,
}

impl DdmConfig {
    /// Defaults for spacing `h`: outer threshold `h`, subdomain threshold
    /// `h / sqrt(N_d)`.
    pub fn new(h: f64, decomposition: DecompositionSpec) -> Self {
        let nd = decomposition.count() as f64;
        Self {
            decomposition,
            outer_tol: h,
            max_outer: 500,
            newton: NewtonConfig::with_tolerance(h / nd.sqrt()),
            coarse_init: true,
            threads: 1,
        }
    }
}

/// Scheme rows at `unknowns`, with every other node held at `frozen`.
pub struct RestrictedSystem<'a> {
    pub scheme: &'a Scheme<'a>,
    pub data: &'a ProblemData,
    pub frozen: &'a GridFunction,
    pub unknowns: &'a Unknowns,
}

impl RestrictedSystem<'_> {
    fn expand(&self, x: &[f64]) -> GridFunction {
        let mut u = self.frozen.clone();
        self.unknowns.scatter(x, &mut u);
        u
    }
}

impl NonlinearSystem for RestrictedSystem<'_> {
    fn dim(&self) -> usize {
        self.unknowns.len()
    }

    fn residual(&self, x: &[f64], out: &mut [f64]) {
        let u = self.expand(x);
        for (o, &id) in out.iter_mut().zip(self.unknowns.nodes()) {
            *o = self.scheme.residual(&u, self.data, id);
        }
    }

    fn jacobian(&self, x: &[f64]) -> CsrMatrix {
        self.scheme.assemble_jacobian(&self.expand(x), self.unknowns)
    }
}

/// Newton solve of the full interior system starting from `u0`; boundary
/// values are reset to `g`.
pub fn global_newton(
    scheme: &Scheme,
    data: &ProblemData,
    u0: &GridFunction,
    cfg: &NewtonConfig,
) -> Result<(GridFunction, NewtonReport), NewtonError> {
    let grid = scheme.grid();
    let mut frozen = u0.clone();
    data.impose_boundary(grid, &mut frozen);
    let unknowns = Unknowns::all_interior(grid);
    let system = RestrictedSystem {
        scheme,
        data,
        frozen: &frozen,
        unknowns: &unknowns,
    };
    let (x, report) = newton_solve(&system, unknowns.gather(&frozen), cfg)?;
    unknowns.scatter(&x, &mut frozen);
    Ok((frozen, report))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DdmOutcome {
    pub converged: bool,
    pub outer_iterations: usize,
    /// Interior residual norm of the start and of every iterate.
    pub residual_history: Vec<f64>,
    pub newton_iterations: usize,
    pub krylov_iterations: usize,
    /// Newton iterations per outer iteration, per subdomain.
    pub subdomain_newton: Vec<Vec<usize>>,
}

pub struct DdmSolver<'g> {
    scheme: Scheme<'g>,
    data: ProblemData,
    decomposition: Decomposition,
    cfg: DdmConfig,
    pool: Option<rayon::ThreadPool>,
}

impl<'g> DdmSolver<'g> {
    pub fn new(grid: &'g Grid, data: ProblemData, cfg: DdmConfig) -> Result<Self, DdmError> {
        let scheme = Scheme::new(grid)?;
        let decomposition = decompose(grid, &cfg.decomposition)?;
        let pool = if cfg.threads > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(cfg.threads)
                    .build()
                    .map_err(|e| DdmError::ThreadPool(e.to_string()))?,
            )
        } else {
            None
        };
        Ok(Self {
            scheme,
            data,
            decomposition,
            cfg,
            pool,
        })
    }

    pub fn grid(&self) -> &'g Grid {
        self.scheme.grid()
    }

    pub fn scheme(&self) -> &Scheme<'g> {
        &self.scheme
    }

    pub fn data(&self) -> &ProblemData {
        &self.data
    }

    pub fn decomposition(&self) -> &Decomposition {
        &self.decomposition
    }

    pub fn config(&self) -> &DdmConfig {
        &self.cfg
    }

    pub fn residual_norm(&self, u: &GridFunction) -> f64 {
        self.scheme.interior_residual_norm(u, &self.data)
    }

    /// Row `node` of the subdomain operator `F_i(u_i; v)`.
    pub fn subdomain_residual(&self, i: usize, u_i: &GridFunction, v: &GridFunction, node: NodeId) -> f64 {
        let grid = self.grid();
        if !grid.is_interior(node) {
            u_i[node] - self.data.g(grid, node)
        } else if self.decomposition.subdomains[i].contains(node) {
            self.scheme.residual(u_i, &self.data, node)
        } else {
            u_i[node] - v[node]
        }
    }

    /// `S_i[v]`: solves the scheme on `G_i` with `v` frozen elsewhere and `g`
    /// on the boundary, warm-started from `v`.
    pub fn solve_subdomain(&self, i: usize, v: &GridFunction) -> Result<(GridFunction, NewtonReport), DdmError> {
        let grid = self.grid();
        let sub = &self.decomposition.subdomains[i];
        let mut frozen = v.clone();
        self.data.impose_boundary(grid, &mut frozen);
        let system = RestrictedSystem {
            scheme: &self.scheme,
            data: &self.data,
            frozen: &frozen,
            unknowns: &sub.unknowns,
        };
        let (x, report) = newton_solve(&system, sub.unknowns.gather(&frozen), &self.cfg.newton)
            .map_err(|source| DdmError::SubdomainFailed { index: i, source })?;
        if !report.converged {
            return Err(DdmError::SubdomainDiverged {
                index: i,
                report: Box::new(report),
            });
        }
        sub.unknowns.scatter(&x, &mut frozen);
        Ok((frozen, report))
    }

    /// One outer step `u_next = sum_i lambda_i S_i[u_prev]`.
    pub fn iterate(&self, u_prev: &GridFunction) -> Result<(GridFunction, Vec<NewtonReport>), DdmError> {
        let count = self.decomposition.subdomains.len();
        let solve_all = || -> Vec<Result<(GridFunction, NewtonReport), DdmError>> {
            (0..count).into_par_iter().map(|i| self.solve_subdomain(i, u_prev)).collect()
        };
        let results = match &self.pool {
            Some(pool) => pool.install(solve_all),
            None => (0..count).map(|i| self.solve_subdomain(i, u_prev)).collect(),
        };

        let grid = self.grid();
        let mut next = GridFunction::zeros(grid);
        let mut reports = Vec::with_capacity(count);
        // Accumulate in subdomain order so the sum is independent of scheduling.
        for (i, result) in results.into_iter().enumerate() {
            let (u_i, report) = result?;
            for &id in self.decomposition.subdomains[i].unknowns.nodes() {
                next[id] += self.decomposition.weights.weight(i, id) * u_i[id];
            }
            reports.push(report);
        }
        self.data.impose_boundary(grid, &mut next);
        Ok((next, reports))
    }

    /// Repeats [`Self::iterate`] from `u0` until the interior residual norm
    /// drops below the outer threshold.
    pub fn solve_from(&self, u0: GridFunction) -> Result<(GridFunction, DdmOutcome), DdmError> {
        let mut u = u0;
        self.data.impose_boundary(self.grid(), &mut u);
        let mut outcome = DdmOutcome::default();
        let mut norm = self.residual_norm(&u);
        outcome.residual_history.push(norm);
        while norm >= self.cfg.outer_tol && outcome.outer_iterations < self.cfg.max_outer {
            let (next, reports) = self.iterate(&u)?;
            u = next;
            norm = self.residual_norm(&u);
            outcome.outer_iterations += 1;
            outcome.residual_history.push(norm);
            outcome.newton_iterations += reports.iter().map(|r| r.iterations).sum::<usize>();
            outcome.krylov_iterations += reports.iter().map(|r| r.krylov_iterations).sum::<usize>();
            outcome.subdomain_newton.push(reports.iter().map(|r| r.iterations).collect());
            debug!("ddm {:>4}: |F| = {:.6e}", outcome.outer_iterations, norm);
        }
        outcome.converged = norm < self.cfg.outer_tol;
        if !outcome.converged {
            warn!(
                "outer iteration stopped after {} steps with |F| = {norm:.3e}",
                outcome.outer_iterations
            );
        }
        Ok((u, outcome))
    }
}

/// Initial guess `|x|^2 / 2` in the interior, `g` on the boundary.
pub fn quadratic_seed(grid: &Grid, data: &ProblemData) -> GridFunction {
    data.with_boundary(grid, |x, y| 0.5 * (x * x + y * y))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoarseInitReport {
    pub coarse_n: usize,
    pub coarse_h: f64,
    pub newton: Option<NewtonReport>,
    /// The coarse solve failed and the quadratic seed was used instead.
    pub fell_back: bool,
}

/// Coarse lattice size for spacing `4h`: `floor((N + 1) / 4) - 1`, at least 1.
pub fn coarse_size(n: usize) -> usize {
    ((n + 1) / 4).saturating_sub(1).max(1)
}

/// Bilinear interpolation of coarse lattice values onto the fine interior.
///
/// `coarse` holds `(N_c + 2)^2` values including the wall rows and columns,
/// indexed `[iy * (N_c + 2) + ix]`.
pub fn interpolate_to_fine(coarse: &[f64], coarse_n: usize, fine: &Grid) -> Vec<f64> {
    let stride = coarse_n + 2;
    assert_eq!(coarse.len(), stride * stride);
    let fine_cells = fine.spec().n() + 1;
    let coarse_cells = coarse_n + 1;
    // Fine index i sits at coarse coordinate i * coarse_cells / fine_cells.
    let locate = |i: usize| -> (usize, f64) {
        let num = i * coarse_cells;
        let k = (num / fine_cells).min(coarse_cells - 1);
        (k, (num - k * fine_cells) as f64 / fine_cells as f64)
    };
    fine.interior_ids()
        .map(|id| {
            let (ix, iy) = fine.lattice(id).expect("interior node");
            let (kx, tx) = locate(ix);
            let (ky, ty) = locate(iy);
            let at = |a: usize, b: usize| coarse[b * stride + a];
            (1.0 - tx) * (1.0 - ty) * at(kx, ky)
                + tx * (1.0 - ty) * at(kx + 1, ky)
                + (1.0 - tx) * ty * at(kx, ky + 1)
                + tx * ty * at(kx + 1, ky + 1)
        })
        .collect()
}

/// Solves on a grid of spacing about `4h` from the quadratic seed and
/// interpolates the result onto `fine`; boundary values are `g`.
pub fn coarse_initialize(
    problem: &ProblemSpec,
    fine: &Grid,
    newton: &NewtonConfig,
) -> Result<(GridFunction, CoarseInitReport), DdmError> {
    let l = fine.spec().half_width();
    let coarse_n = coarse_size(fine.spec().n());
    let coarse_grid = build_grid(DomainSpec::new(l, coarse_n)?)?;
    let coarse_h = coarse_grid.h();
    let data = problem.sample(&coarse_grid);
    let scheme = Scheme::new(&coarse_grid)?;
    let seed = quadratic_seed(&coarse_grid, &data);
    let fine_data = problem.sample(fine);

    let (solution, newton_report) = match global_newton(&scheme, &data, &seed, newton) {
        Ok((u, rep)) if rep.converged => (Some(u), Some(rep)),
        Ok((_, rep)) => {
            warn!("coarse solve did not converge, falling back to the quadratic seed");
            (None, Some(rep))
        }
        Err(e) => {
            warn!("coarse solve failed ({e}), falling back to the quadratic seed");
            (None, None)
        }
    };
    let report = CoarseInitReport {
        coarse_n,
        coarse_h,
        newton: newton_report,
        fell_back: solution.is_none(),
    };
    let Some(coarse_u) = solution else {
        return Ok((quadratic_seed(fine, &fine_data), report));
    };

    let stride = coarse_n + 2;
    let mut lattice = vec![0.0; stride * stride];
    for iy in 0..stride {
        for ix in 0..stride {
            let inside = (1..=coarse_n).contains(&ix) && (1..=coarse_n).contains(&iy);
            lattice[iy * stride + ix] = if inside {
                coarse_u[coarse_grid.interior_id(ix, iy)]
            } else {
                (problem.g)(-l + ix as f64 * coarse_h, -l + iy as f64 * coarse_h)
            };
        }
    }
    let interior = interpolate_to_fine(&lattice, coarse_n, fine);
    let mut u = GridFunction::zeros(fine);
    u.values_mut()[..interior.len()].copy_from_slice(&interior);
    fine_data.impose_boundary(fine, &mut u);
    info!(
        "coarse initialization on {coarse_n}x{coarse_n} lattice (h = {coarse_h:.4}) in {} Newton steps",
        report.newton.as_ref().map_or(0, |r| r.iterations)
    );
    Ok((u, report))
}
