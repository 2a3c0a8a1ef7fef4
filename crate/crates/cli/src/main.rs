use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use ma_ddm::geometry::build_grid;
use ma_ddm::ProblemId;
use ma_ddm_cli::{
    node_listing_csv, run_single, run_sweep, solution_csv, write_file, CliError, Layout, RunConfig, Spacing, Sweep,
    EXIT_NOT_CONVERGED, EXIT_USAGE,
};

/// Monge-Ampere solver with overlapping domain decomposition.
#[derive(Debug, Parser)]
#[command(name = "ma-ddm", version)]
struct Args {
    /// ex1, ex2 or custom.
    #[arg(long, default_value = "ex1")]
    problem: ProblemId,
    /// Half-width of the square domain (-L, L)^2.
    #[arg(long = "L", default_value_t = 0.5)]
    half_width: f64,
    /// Grid spacing.
    #[arg(long = "h", conflicts_with = "n")]
    h: Option<f64>,
    /// Interior nodes per axis.
    #[arg(long = "N")]
    n: Option<usize>,
    /// Subdomain layout MxN (splits along x, splits along y).
    #[arg(long, default_value = "1x1")]
    nd: Layout,
    /// Overlap in percent on both axes.
    #[arg(long, default_value_t = 0.0)]
    overlap: f64,
    #[arg(long)]
    overlap_x: Option<f64>,
    #[arg(long)]
    overlap_y: Option<f64>,
    #[arg(long, default_value_t = 500)]
    max_outer: usize,
    #[arg(long, default_value_t = 200)]
    max_newton: usize,
    /// Newton and outer thresholds as a multiple of h.
    #[arg(long, default_value_t = 1.0)]
    newton_tol_factor: f64,
    /// Relative residual target of the GMRES solves.
    #[arg(long, default_value_t = 1e-5)]
    krylov_tol: f64,
    #[arg(long, default_value_t = 30)]
    restart: usize,
    /// Jacobi-precondition the GMRES solves.
    #[arg(long)]
    jacobi: bool,
    /// Start from the quadratic seed instead of a coarse-grid solve.
    #[arg(long)]
    no_coarse_init: bool,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Report file: key-value record for a single run, CSV for a sweep.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the solution as x,y,value rows.
    #[arg(long)]
    dump_solution: Option<PathBuf>,
    /// Sweep description with key = list lines.
    #[arg(long)]
    sweep: Option<PathBuf>,
    /// Write the grid nodes (kind,x,y) for building a custom data file and exit.
    #[arg(long)]
    emit_boundary_nodes: Option<PathBuf>,
    /// Custom problem data: kind,x,y,value rows (f inside, g on the boundary).
    #[arg(long)]
    data: Option<PathBuf>,
}

impl Args {
    fn config(&self) -> RunConfig {
        let mut cfg = RunConfig {
            problem: self.problem,
            half_width: self.half_width,
            spacing: self.h.map(Spacing::H).or(self.n.map(Spacing::N)),
            layout: self.nd,
            overlap_x: self.overlap_x.unwrap_or(self.overlap),
            overlap_y: self.overlap_y.unwrap_or(self.overlap),
            data: self.data.clone(),
            ..Default::default()
        };
        let s = &mut cfg.solver;
        s.max_outer = self.max_outer;
        s.max_newton = self.max_newton;
        s.tol_factor = self.newton_tol_factor;
        s.krylov.rel_tol = self.krylov_tol;
        s.krylov.restart = self.restart;
        s.krylov.jacobi = self.jacobi;
        s.coarse_init = !self.no_coarse_init;
        s.threads = self.threads;
        cfg
    }
}

fn run(args: &Args) -> Result<u8, CliError> {
    let cfg = args.config();

    if let Some(path) = &args.emit_boundary_nodes {
        let grid = build_grid(cfg.domain()?).map_err(|e| CliError::Usage(e.to_string()))?;
        write_file(path, &node_listing_csv(&grid))?;
        return Ok(0);
    }

    if let Some(path) = &args.sweep {
        let text = fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
        let sweep = Sweep::parse(&text, &cfg)?;
        let configs = sweep.configs(&cfg);
        for c in &configs {
            c.validate()?;
        }
        let reports = match &args.out {
            Some(out) => {
                let file = fs::File::create(out).map_err(|source| CliError::Io {
                    path: out.clone(),
                    source,
                })?;
                run_sweep(&configs, &mut io::BufWriter::new(file))?
            }
            None => run_sweep(&configs, &mut io::stdout().lock())?,
        };
        return Ok(if reports.iter().all(|r| r.converged) { 0 } else { EXIT_NOT_CONVERGED });
    }

    let (grid, solution) = run_single(&cfg)?;
    let record = solution.report.to_key_value();
    print!("{record}");
    io::stdout().flush().ok();
    if let Some(path) = &args.out {
        write_file(path, &record)?;
    }
    if let Some(path) = &args.dump_solution {
        write_file(path, &solution_csv(&grid, &solution.u))?;
    }
    Ok(if solution.report.converged { 0 } else { EXIT_NOT_CONVERGED })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    match run(&args) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
