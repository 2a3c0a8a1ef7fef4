//! Compressed sparse row storage and restarted GMRES.

use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("column index {col} out of range for dimension {n}")]
    ColumnOutOfRange { col: usize, n: usize },
    #[error("right-hand side contains non-finite values")]
    NonFiniteInput,
    #[error("invalid Krylov configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("zero diagonal entry in row {0}, Jacobi preconditioner undefined")]
    ZeroDiagonal(usize),
}

/// Square sparse matrix in CSR form. Column indices are sorted and unique
/// within every row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn identity(n: usize) -> Self {
        Self {
            n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::identity(diag.len());
        m.values.copy_from_slice(diag);
        m
    }

    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self, LinalgError> {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(r, c, v) in triplets {
            if r >= n {
                return Err(LinalgError::DimensionMismatch { expected: n, got: r + 1 });
            }
            if c >= n {
                return Err(LinalgError::ColumnOutOfRange { col: c, n });
            }
            rows[r].push((c, v));
        }
        let mut b = CsrBuilder::new(n);
        for row in rows {
            b.push_row(row)?;
        }
        Ok(b.finish())
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut b = CsrBuilder::new(n);
        for row in rows {
            let entries = row.iter().copied().enumerate().filter(|(_, v)| *v != 0.0).collect();
            b.push_row(entries).expect("dense row within bounds");
        }
        b.finish()
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[span.clone()].binary_search(&j) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.n]; self.n];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        out
    }

    /// `y = A x`, summing each row left to right.
    pub fn spmv(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.spmv_into(x, &mut y);
        y
    }

    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n, "spmv: input length");
        assert_eq!(y.len(), self.n, "spmv: output length");
        for (i, yi) in y.iter_mut().enumerate() {
            let span = self.row_ptr[i]..self.row_ptr[i + 1];
            *yi = self.col_idx[span.clone()]
                .iter()
                .zip(&self.values[span])
                .fold(0.0, |acc, (&j, &v)| acc + v * x[j]);
        }
    }

    /// Matrix-market style `row col value` listing (1-based).
    pub fn dump(&self) -> String {
        let mut out = format!("%%MatrixMarket matrix coordinate real general\n{} {} {}\n", self.n, self.n, self.nnz());
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                let _ = writeln!(out, "{} {} {:.16e}", i + 1, j + 1, v);
            }
        }
        out
    }
}

/// Row-by-row CSR assembly.
#[derive(Debug)]
pub struct CsrBuilder {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrBuilder {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            row_ptr: vec![0],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Appends the next row; entries may be unsorted and repeated.
    pub fn push_row(&mut self, mut entries: Vec<(usize, f64)>) -> Result<(), LinalgError> {
        if self.row_ptr.len() > self.n {
            return Err(LinalgError::DimensionMismatch {
                expected: self.n,
                got: self.row_ptr.len(),
            });
        }
        entries.sort_by_key(|e| e.0);
        for (c, v) in entries {
            if c >= self.n {
                return Err(LinalgError::ColumnOutOfRange { col: c, n: self.n });
            }
            if self.col_idx.len() > *self.row_ptr.last().unwrap() && *self.col_idx.last().unwrap() == c {
                *self.values.last_mut().unwrap() += v;
            } else {
                self.col_idx.push(c);
                self.values.push(v);
            }
        }
        self.row_ptr.push(self.col_idx.len());
        Ok(())
    }

    pub fn finish(mut self) -> CsrMatrix {
        while self.row_ptr.len() <= self.n {
            self.row_ptr.push(self.col_idx.len());
        }
        CsrMatrix {
            n: self.n,
            row_ptr: self.row_ptr,
            col_idx: self.col_idx,
            values: self.values,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovConfig {
    /// Stop when `||b - A x|| / ||b||` falls below this.
    pub rel_tol: f64,
    pub restart: usize,
    /// Total inner iterations; `None` means `10 n`.
    pub max_iterations: Option<usize>,
    /// Right Jacobi preconditioning.
    pub jacobi: bool,
}

impl Default for KrylovConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-5,
            restart: 30,
            max_iterations: None,
            jacobi: false,
        }
    }
}

impl KrylovConfig {
    fn validate(&self) -> Result<(), LinalgError> {
        if !(self.rel_tol > 0.0) {
            return Err(LinalgError::InvalidConfig("tolerance must be positive"));
        }
        if self.restart == 0 {
            return Err(LinalgError::InvalidConfig("restart length must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GmresStop {
    Converged,
    /// Arnoldi produced an exactly zero vector; the iterate is the best
    /// available in the Krylov space.
    Breakdown,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct GmresOutcome {
    pub x: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub stop: GmresStop,
    /// True relative residual of the returned iterate.
    pub relative_residual: f64,
    /// Estimated residual norm after every inner iteration (restarts
    /// included), starting with `||b||`.
    pub residual_history: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Restarted GMRES with zero initial guess, modified Gram-Schmidt and a
/// selective second orthogonalization pass.
pub fn gmres_solve(a: &CsrMatrix, b: &[f64], cfg: &KrylovConfig) -> Result<GmresOutcome, LinalgError> {
    cfg.validate()?;
    let n = a.dim();
    if b.len() != n {
        return Err(LinalgError::DimensionMismatch { expected: n, got: b.len() });
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::NonFiniteInput);
    }
    let inv_diag = if cfg.jacobi {
        let d = a.diagonal();
        if let Some(i) = d.iter().position(|v| *v == 0.0) {
            return Err(LinalgError::ZeroDiagonal(i));
        }
        Some(d.iter().map(|v| 1.0 / v).collect::<Vec<_>>())
    } else {
        None
    };
    let precondition = |v: &[f64]| -> Vec<f64> {
        match &inv_diag {
            Some(d) => v.iter().zip(d).map(|(a, b)| a * b).collect(),
            None => v.to_vec(),
        }
    };

    let max_iter = cfg.max_iterations.unwrap_or(10 * n).max(1);
    let b_norm = norm2(b);
    let mut x = vec![0.0; n];
    let mut history = vec![b_norm];
    if b_norm == 0.0 {
        return Ok(GmresOutcome {
            x,
            converged: true,
            iterations: 0,
            stop: GmresStop::Converged,
            relative_residual: 0.0,
            residual_history: history,
        });
    }
    let target = cfg.rel_tol * b_norm;
    let m = cfg.restart.min(n);
    let mut total = 0usize;
    let mut r = b.to_vec();
    let mut beta = b_norm;
    let mut stop = GmresStop::MaxIterations;
    let mut w = vec![0.0; n];

    'outer: while total < max_iter {
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        basis.push(r.iter().map(|v| v / beta).collect());
        // Hessenberg columns, already rotated.
        let mut hess: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut rotations: Vec<(f64, f64)> = Vec::with_capacity(m);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k = 0;
        let mut breakdown = false;

        while k < m && total < max_iter {
            let z = precondition(&basis[k]);
            a.spmv_into(&z, &mut w);
            let w_norm_before = norm2(&w);
            let mut col = vec![0.0; k + 2];
            for (i, v) in basis.iter().enumerate() {
                let c = dot(&w, v);
                col[i] = c;
                w.iter_mut().zip(v).for_each(|(wi, vi)| *wi -= c * vi);
            }
            let mut w_norm = norm2(&w);
            // Reorthogonalize when the projected-out part is large.
            if w_norm > 0.0 {
                let loss = basis.iter().map(|v| dot(&w, v).abs()).fold(0.0, f64::max) / w_norm;
                if loss > 1e-8 || w_norm < 1e-3 * w_norm_before {
                    for (i, v) in basis.iter().enumerate() {
                        let c = dot(&w, v);
                        col[i] += c;
                        w.iter_mut().zip(v).for_each(|(wi, vi)| *wi -= c * vi);
                    }
                    w_norm = norm2(&w);
                }
            }
            col[k + 1] = w_norm;
            for (i, &(c, s)) in rotations.iter().enumerate() {
                let (a0, a1) = (col[i], col[i + 1]);
                col[i] = c * a0 + s * a1;
                col[i + 1] = -s * a0 + c * a1;
            }
            let (c, s) = {
                let (p, q) = (col[k], col[k + 1]);
                let rho = p.hypot(q);
                if rho == 0.0 {
                    (1.0, 0.0)
                } else {
                    (p / rho, q / rho)
                }
            };
            col[k] = c * col[k] + s * col[k + 1];
            col[k + 1] = 0.0;
            g[k + 1] = -s * g[k];
            g[k] *= c;
            rotations.push((c, s));
            hess.push(col);
            total += 1;
            k += 1;
            history.push(g[k].abs());
            if w_norm == 0.0 {
                breakdown = true;
                break;
            }
            if g[k].abs() <= target {
                break;
            }
            basis.push(w.iter().map(|v| v / w_norm).collect());
        }

        // Back substitution on the rotated triangle.
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let s: f64 = ((i + 1)..k).map(|j| hess[j][i] * y[j]).sum();
            y[i] = if hess[i][i] != 0.0 { (g[i] - s) / hess[i][i] } else { 0.0 };
        }
        let mut update = vec![0.0; n];
        for (yi, v) in y.iter().zip(&basis) {
            update.iter_mut().zip(v).for_each(|(u, vi)| *u += yi * vi);
        }
        let update = precondition(&update);
        x.iter_mut().zip(&update).for_each(|(xi, ui)| *xi += ui);

        let ax = a.spmv(&x);
        r = b.iter().zip(&ax).map(|(bi, axi)| bi - axi).collect();
        beta = norm2(&r);
        if beta <= target {
            stop = GmresStop::Converged;
            break 'outer;
        }
        if breakdown {
            stop = GmresStop::Breakdown;
            break 'outer;
        }
    }

    let relative_residual = beta / b_norm;
    Ok(GmresOutcome {
        x,
        converged: stop == GmresStop::Converged,
        iterations: total,
        stop,
        relative_residual,
        residual_history: history,
    })
}
