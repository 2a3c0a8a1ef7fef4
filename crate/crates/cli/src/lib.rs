//! Command-line driver: single runs, parameter sweeps, and the file formats
//! used for solution dumps and custom problem data.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::warn;
use ma_ddm::ddm::DdmError;
use ma_ddm::geometry::{build_grid, DomainSpec, Grid};
use ma_ddm::scheme::{GridFunction, ProblemData};
use ma_ddm::{solve, DecompositionSpec, ProblemId, ProblemSpec, SolveOptions, SolveReport, Solution, CSV_HEADER};
use thiserror::Error;

pub const EXIT_NOT_CONVERGED: u8 = 2;
pub const EXIT_USAGE: u8 = 64;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Data { path: PathBuf, line: usize, msg: String },
    #[error("solver failed: {0}")]
    Solve(#[from] DdmError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Data { .. } => EXIT_USAGE,
            CliError::Solve(DdmError::InvalidDecomposition(_) | DdmError::Geometry(_)) => EXIT_USAGE,
            CliError::Solve(_) => EXIT_NOT_CONVERGED,
            CliError::Io { .. } => 1,
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Spacing {
    H(f64),
    N(usize),
}

/// `MxN` subdomain layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub m: usize,
    pub n: usize,
}

impl FromStr for Layout {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (a, b) = s
            .trim()
            .split_once(['x', 'X'])
            .ok_or_else(|| format!("expected MxN, got '{s}'"))?;
        let parse = |t: &str| t.trim().parse::<usize>().map_err(|_| format!("bad subdomain count in '{s}'"));
        let layout = Layout { m: parse(a)?, n: parse(b)? };
        if layout.m == 0 || layout.n == 0 {
            return Err(format!("subdomain counts must be positive, got '{s}'"));
        }
        Ok(layout)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemId,
    pub half_width: f64,
    /// Exactly one of `h` or `N`; a sweep may supply it instead.
    pub spacing: Option<Spacing>,
    pub layout: Layout,
    /// Overlap per axis in percent.
    pub overlap_x: f64,
    pub overlap_y: f64,
    /// Solver knobs; the decomposition field is rebuilt from the fields above.
    pub solver: SolveOptions,
    /// Sampled `f`/`g` for custom problems.
    pub data: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            problem: ProblemId::Example1,
            half_width: 0.5,
            spacing: None,
            layout: Layout { m: 1, n: 1 },
            overlap_x: 0.0,
            overlap_y: 0.0,
            solver: SolveOptions::default(),
            data: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.half_width > 0.0 && self.half_width.is_finite()) {
            return Err(usage(format!("L must be positive, got {}", self.half_width)));
        }
        match self.spacing {
            None => return Err(usage("one of --h or --N is required")),
            Some(Spacing::H(h)) if !(h > 0.0 && h.is_finite()) => {
                return Err(usage(format!("h must be positive, got {h}")))
            }
            Some(Spacing::N(0)) => return Err(usage("N must be at least 1")),
            _ => {}
        }
        for p in [self.overlap_x, self.overlap_y] {
            if !(0.0..=100.0).contains(&p) {
                return Err(usage(format!("overlap {p}% outside [0, 100]")));
            }
        }
        let s = &self.solver;
        if !(s.tol_factor > 0.0) || !(s.krylov.rel_tol > 0.0) {
            return Err(usage("tolerances must be positive"));
        }
        if s.krylov.restart == 0 || s.threads == 0 || s.max_outer == 0 || s.max_newton == 0 {
            return Err(usage("restart, threads and iteration limits must be at least 1"));
        }
        if (self.problem == ProblemId::Custom) != self.data.is_some() {
            return Err(usage("--data is required for, and only allowed with, --problem custom"));
        }
        Ok(())
    }

    pub fn domain(&self) -> Result<DomainSpec, CliError> {
        let spec = match self.spacing {
            Some(Spacing::H(h)) => DomainSpec::from_spacing(self.half_width, h),
            Some(Spacing::N(n)) => DomainSpec::new(self.half_width, n),
            None => return Err(usage("one of --h or --N is required")),
        };
        spec.map_err(|e| usage(e.to_string()))
    }

    pub fn decomposition(&self) -> DecompositionSpec {
        DecompositionSpec::new(self.layout.m, self.layout.n, self.overlap_x / 100.0, self.overlap_y / 100.0)
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            decomposition: self.decomposition(),
            ..self.solver
        }
    }

    /// Report carrying only the configuration, for runs that never started.
    fn empty_report(&self) -> SolveReport {
        let d = self.decomposition();
        let mut report = SolveReport {
            problem: self.problem.to_string(),
            half_width: self.half_width,
            m: d.m,
            n_split: d.n,
            p_x: d.p_x,
            p_y: d.p_y,
            ..Default::default()
        };
        if let Ok(spec) = self.domain() {
            report.h = spec.h();
            report.n = spec.n();
            report.w = spec.w();
        }
        report
    }
}

/// Builds the grid and runs one solve.
pub fn run_single(cfg: &RunConfig) -> Result<(Grid, Solution), CliError> {
    cfg.validate()?;
    let grid = build_grid(cfg.domain()?).map_err(|e| usage(e.to_string()))?;
    let opts = cfg.solve_options();
    if opts.decomposition.count() > 1 && (cfg.overlap_x == 0.0 || cfg.overlap_y == 0.0) {
        warn!("zero overlap on an axis: the blocks still cover the grid, but convergence is only known with overlap");
    }
    let solution = match cfg.problem {
        ProblemId::Custom => {
            let path = cfg.data.as_ref().expect("validated");
            let data = read_problem_data(path, &grid)?;
            solve(&grid, data, None, &opts)?
        }
        id => {
            let problem = ProblemSpec::by_id(id).expect("built-in problem");
            solve(&grid, problem.sample(&grid), Some(&problem), &opts)?
        }
    };
    Ok((grid, solution))
}

/// Lists crossed by a sweep; every list is nonempty.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub problems: Vec<ProblemId>,
    pub half_widths: Vec<f64>,
    pub spacings: Vec<Spacing>,
    pub layouts: Vec<Layout>,
    /// Overlap percentages `(x, y)`; the file gives uniform values.
    pub overlaps: Vec<(f64, f64)>,
}

fn parse_list<T: FromStr>(key: &str, raw: &str) -> Result<Vec<T>, CliError> {
    let items: Vec<&str> = raw.split(',').map(str::trim).filter(|t| !t.is_empty()).collect();
    if items.is_empty() {
        return Err(usage(format!("sweep list '{key}' is empty")));
    }
    items
        .into_iter()
        .map(|t| t.parse::<T>().map_err(|_| usage(format!("bad value '{t}' in sweep list '{key}'"))))
        .collect()
}

impl Sweep {
    /// Parses `key = v1, v2, ...` lines (`#` starts a comment). Keys are
    /// `problem`, `L`, `h`, `N`, `nd` and `overlap`; missing keys take their
    /// value from `base`.
    pub fn parse(text: &str, base: &RunConfig) -> Result<Self, CliError> {
        let mut sweep = Sweep {
            problems: vec![base.problem],
            half_widths: vec![base.half_width],
            spacings: base.spacing.into_iter().collect(),
            layouts: vec![base.layout],
            overlaps: vec![(base.overlap_x, base.overlap_y)],
        };
        let (mut saw_h, mut saw_n) = (false, false);
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, raw) = line
                .split_once('=')
                .ok_or_else(|| usage(format!("sweep line {}: expected key = list", lineno + 1)))?;
            let key = key.trim();
            match key {
                "problem" => sweep.problems = parse_list(key, raw)?,
                "L" => sweep.half_widths = parse_list(key, raw)?,
                "h" => {
                    saw_h = true;
                    sweep.spacings = parse_list::<f64>(key, raw)?.into_iter().map(Spacing::H).collect();
                }
                "N" => {
                    saw_n = true;
                    sweep.spacings = parse_list::<usize>(key, raw)?.into_iter().map(Spacing::N).collect();
                }
                "nd" => sweep.layouts = parse_list(key, raw)?,
                "overlap" => sweep.overlaps = parse_list::<f64>(key, raw)?.into_iter().map(|p| (p, p)).collect(),
                other => return Err(usage(format!("unknown sweep key '{other}'"))),
            }
        }
        if saw_h && saw_n {
            return Err(usage("sweep gives both h and N"));
        }
        if sweep.spacings.is_empty() {
            return Err(usage("sweep needs h or N, in the file or on the command line"));
        }
        Ok(sweep)
    }

    /// Configurations in cross-product order, the last list varying fastest.
    pub fn configs(&self, base: &RunConfig) -> Vec<RunConfig> {
        let mut out = Vec::new();
        for &problem in &self.problems {
            for &half_width in &self.half_widths {
                for &spacing in &self.spacings {
                    for &layout in &self.layouts {
                        for &(px, py) in &self.overlaps {
                            out.push(RunConfig {
                                problem,
                                half_width,
                                spacing: Some(spacing),
                                layout,
                                overlap_x: px,
                                overlap_y: py,
                                ..base.clone()
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

/// Runs every configuration, writing the CSV header and one row per run as
/// it finishes. Failed runs are recorded with `converged = false`.
pub fn run_sweep<W: Write>(configs: &[RunConfig], out: &mut W) -> Result<Vec<SolveReport>, CliError> {
    let stdout_err = |source| CliError::Io {
        path: PathBuf::from("<sweep output>"),
        source,
    };
    writeln!(out, "{CSV_HEADER}").map_err(stdout_err)?;
    let mut reports = Vec::with_capacity(configs.len());
    for cfg in configs {
        let report = match run_single(cfg) {
            Ok((_, sol)) => sol.report,
            Err(e) => {
                warn!("sweep row failed: {e}");
                cfg.empty_report()
            }
        };
        writeln!(out, "{}", report.csv_row()).map_err(stdout_err)?;
        out.flush().map_err(stdout_err)?;
        reports.push(report);
    }
    Ok(reports)
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// `x,y,value` rows, interior nodes then boundary nodes.
pub fn solution_csv(grid: &Grid, u: &GridFunction) -> String {
    let mut s = String::from("x,y,value\n");
    for (node, v) in grid.nodes().iter().zip(u.values()) {
        s.push_str(&format!("{},{},{}\n", fmt17(node.x), fmt17(node.y), fmt17(*v)));
    }
    s
}

/// `kind,x,y` rows for every node, interior then boundary; a custom data file
/// repeats these rows with a fourth `value` column.
pub fn node_listing_csv(grid: &Grid) -> String {
    let mut s = String::from("kind,x,y\n");
    for node in grid.nodes() {
        s.push_str(&format!("{},{},{}\n", node.kind.as_str(), fmt17(node.x), fmt17(node.y)));
    }
    s
}

/// Reads `kind,x,y,value` rows matching [`node_listing_csv`]: `f` at interior
/// nodes, `g` at boundary nodes.
pub fn read_problem_data(path: &Path, grid: &Grid) -> Result<ProblemData, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_problem_data(&text, grid).map_err(|(line, msg)| CliError::Data {
        path: path.to_path_buf(),
        line,
        msg,
    })
}

fn parse_problem_data(text: &str, grid: &Grid) -> Result<ProblemData, (usize, String)> {
    let tol = 1e-9 * grid.spec().half_width().max(1.0);
    let mut rows = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    match rows.next() {
        Some((_, header)) if header.replace(' ', "") == "kind,x,y,value" => {}
        Some((line, _)) => return Err((line, "expected header kind,x,y,value".into())),
        None => return Err((1, "empty data file".into())),
    }
    let mut values = Vec::with_capacity(grid.num_nodes());
    for (line, row) in rows {
        let idx = values.len();
        let Some(node) = grid.nodes().get(idx) else {
            return Err((line, format!("more rows than the {} grid nodes", grid.num_nodes())));
        };
        let cols: Vec<&str> = row.split(',').map(str::trim).collect();
        if cols.len() != 4 {
            return Err((line, format!("expected 4 columns, found {}", cols.len())));
        }
        if cols[0] != node.kind.as_str() {
            return Err((line, format!("expected a {} node", node.kind.as_str())));
        }
        let num = |t: &str| t.parse::<f64>().map_err(|_| (line, format!("bad number '{t}'")));
        let (x, y, v) = (num(cols[1])?, num(cols[2])?, num(cols[3])?);
        if (x - node.x).abs() > tol || (y - node.y).abs() > tol {
            return Err((line, format!("node ({x}, {y}) does not match grid node ({}, {})", node.x, node.y)));
        }
        if !v.is_finite() {
            return Err((line, "value is not finite".into()));
        }
        values.push(v);
    }
    if values.len() != grid.num_nodes() {
        return Err((0, format!("found {} rows, the grid has {} nodes", values.len(), grid.num_nodes())));
    }
    let g = values.split_off(grid.num_interior());
    ProblemData::new(grid, values, g).map_err(|e| (0, e.to_string()))
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(io_err(path))
}
