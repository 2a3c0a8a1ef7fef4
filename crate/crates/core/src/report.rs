//! Run summaries in key-value and CSV form.

use std::fmt::Write as _;

/// Column order of [`SolveReport::csv_row`].
pub const CSV_HEADER: &str = "problem,L,h,N,w,m,n,p_x,p_y,outer_iterations,converged,total_newton_iterations,total_krylov_iterations,l2_error,max_error,wall_seconds";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveReport {
    pub problem: String,
    pub half_width: f64,
    pub h: f64,
    pub n: usize,
    pub w: usize,
    pub m: usize,
    pub n_split: usize,
    pub p_x: f64,
    pub p_y: f64,
    /// Outer DDM iterations; a single-domain run counts its global solve as one.
    pub outer_iterations: usize,
    pub converged: bool,
    pub total_newton_iterations: usize,
    pub total_krylov_iterations: usize,
    pub final_residual: f64,
    pub residual_history: Vec<f64>,
    pub l2_error: Option<f64>,
    pub max_error: Option<f64>,
    pub coarse_newton_iterations: Option<usize>,
    pub coarse_fell_back: bool,
    pub wall_seconds: f64,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), |x| format!("{x:.6e}"))
}

impl SolveReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{:.3}",
            self.problem,
            self.half_width,
            self.h,
            self.n,
            self.w,
            self.m,
            self.n_split,
            self.p_x,
            self.p_y,
            self.outer_iterations,
            self.converged,
            self.total_newton_iterations,
            self.total_krylov_iterations,
            opt(self.l2_error),
            opt(self.max_error),
            self.wall_seconds
        )
    }

    /// One `key = value` line per field.
    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("problem", self.problem.clone());
        kv("L", self.half_width.to_string());
        kv("h", self.h.to_string());
        kv("N", self.n.to_string());
        kv("w", self.w.to_string());
        kv("m", self.m.to_string());
        kv("n", self.n_split.to_string());
        kv("p_x", self.p_x.to_string());
        kv("p_y", self.p_y.to_string());
        kv("outer_iterations", self.outer_iterations.to_string());
        kv("converged", self.converged.to_string());
        kv("total_newton_iterations", self.total_newton_iterations.to_string());
        kv("total_krylov_iterations", self.total_krylov_iterations.to_string());
        kv("final_residual", format!("{:.6e}", self.final_residual));
        kv(
            "residual_history",
            self.residual_history
                .iter()
                .map(|r| format!("{r:.6e}"))
                .collect::<Vec<_>>()
                .join(" "),
        );
        kv("l2_error", opt(self.l2_error));
        kv("max_error", opt(self.max_error));
        kv(
            "coarse_newton_iterations",
            self.coarse_newton_iterations.map_or("none".into(), |k| k.to_string()),
        );
        kv("coarse_fell_back", self.coarse_fell_back.to_string());
        kv("wall_seconds", format!("{:.3}", self.wall_seconds));
        out
    }
}
