//! Damped Newton-Krylov iteration with backtracking on the residual norm.

use log::debug;
use thiserror::Error;

use crate::linalg::{gmres_solve, CsrMatrix, KrylovConfig, LinalgError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NewtonError {
    #[error("linear solve failed at Newton iteration {iteration}: {source}")]
    LinearSolve {
        iteration: usize,
        #[source]
        source: LinalgError,
    },
    #[error("Krylov solve did not converge at Newton iteration {iteration} (relative residual {relative_residual:.3e})")]
    LinearSolveFailure { iteration: usize, relative_residual: f64 },
    #[error("initial guess has non-finite entries")]
    NonFiniteStart,
    #[error("invalid Newton configuration: {0}")]
    InvalidConfig(&'static str),
}

/// A square nonlinear system `F(x) = 0` with an assembled Jacobian.
pub trait NonlinearSystem {
    fn dim(&self) -> usize;
    fn residual(&self, x: &[f64], out: &mut [f64]);
    fn jacobian(&self, x: &[f64]) -> CsrMatrix;
}

/// Adapter turning a pair of closures into a [`NonlinearSystem`].
pub struct FnSystem<R, J> {
    dim: usize,
    residual: R,
    jacobian: J,
}

impl<R, J> FnSystem<R, J>
where
    R: Fn(&[f64], &mut [f64]),
    J: Fn(&[f64]) -> CsrMatrix,
{
    pub fn new(dim: usize, residual: R, jacobian: J) -> Self {
        Self { dim, residual, jacobian }
    }
}

impl<R, J> NonlinearSystem for FnSystem<R, J>
where
    R: Fn(&[f64], &mut [f64]),
    J: Fn(&[f64]) -> CsrMatrix,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn residual(&self, x: &[f64], out: &mut [f64]) {
        (self.residual)(x, out)
    }

    fn jacobian(&self, x: &[f64]) -> CsrMatrix {
        (self.jacobian)(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonConfig {
    /// Stop once `||F||_2` drops below this.
    pub abs_tol: f64,
    pub max_iterations: usize,
    /// Armijo constant in `||F(u + l y)|| <= (1 - c l) ||F(u)||`.
    pub sufficient_decrease: f64,
    pub min_step: f64,
    pub krylov: KrylovConfig,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            abs_tol: 1e-8,
            max_iterations: 200,
            sufficient_decrease: 1e-4,
            min_step: 1e-8,
            krylov: KrylovConfig::default(),
        }
    }
}

impl NewtonConfig {
    pub fn with_tolerance(abs_tol: f64) -> Self {
        Self {
            abs_tol,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<(), NewtonError> {
        if !(self.abs_tol > 0.0) {
            return Err(NewtonError::InvalidConfig("residual threshold must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(NewtonError::InvalidConfig("need at least one iteration"));
        }
        if !(self.sufficient_decrease > 0.0 && self.sufficient_decrease < 1.0) {
            return Err(NewtonError::InvalidConfig("sufficient-decrease constant must lie in (0, 1)"));
        }
        if !(self.min_step > 0.0 && self.min_step < 1.0) {
            return Err(NewtonError::InvalidConfig("minimum step must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NewtonReport {
    pub iterations: usize,
    pub final_residual: f64,
    /// `||F||_2` at the start and after every iteration.
    pub residual_history: Vec<f64>,
    /// Accepted step length of every iteration.
    pub step_lengths: Vec<f64>,
    pub converged: bool,
    pub krylov_iterations: usize,
    /// Iterations whose line search hit the minimum step and took the full step.
    pub line_search_fallbacks: usize,
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn newton_solve<S: NonlinearSystem + ?Sized>(
    system: &S,
    x0: Vec<f64>,
    cfg: &NewtonConfig,
) -> Result<(Vec<f64>, NewtonReport), NewtonError> {
    cfg.validate()?;
    assert_eq!(x0.len(), system.dim(), "initial guess has the wrong length");
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(NewtonError::NonFiniteStart);
    }
    let n = system.dim();
    let mut x = x0;
    let mut f = vec![0.0; n];
    system.residual(&x, &mut f);
    let mut f_norm = norm2(&f);
    let mut report = NewtonReport {
        residual_history: vec![f_norm],
        ..Default::default()
    };
    let mut trial = vec![0.0; n];
    let mut f_trial = vec![0.0; n];

    while f_norm >= cfg.abs_tol && report.iterations < cfg.max_iterations {
        let k = report.iterations;
        let jac = system.jacobian(&x);
        let rhs: Vec<f64> = f.iter().map(|v| -v).collect();
        let lin = gmres_solve(&jac, &rhs, &cfg.krylov).map_err(|source| NewtonError::LinearSolve { iteration: k, source })?;
        report.krylov_iterations += lin.iterations;
        if !lin.converged {
            return Err(NewtonError::LinearSolveFailure {
                iteration: k,
                relative_residual: lin.relative_residual,
            });
        }
        let step = lin.x;

        let mut lambda = 1.0;
        let accepted = loop {
            for ((t, xi), si) in trial.iter_mut().zip(&x).zip(&step) {
                *t = xi + lambda * si;
            }
            system.residual(&trial, &mut f_trial);
            let trial_norm = norm2(&f_trial);
            if trial_norm <= (1.0 - cfg.sufficient_decrease * lambda) * f_norm {
                break Some(trial_norm);
            }
            lambda *= 0.5;
            if lambda < cfg.min_step {
                break None;
            }
        };
        match accepted {
            Some(trial_norm) => {
                std::mem::swap(&mut x, &mut trial);
                std::mem::swap(&mut f, &mut f_trial);
                f_norm = trial_norm;
            }
            None => {
                lambda = 1.0;
                report.line_search_fallbacks += 1;
                x.iter_mut().zip(&step).for_each(|(xi, si)| *xi += si);
                system.residual(&x, &mut f);
                f_norm = norm2(&f);
            }
        }
        report.iterations += 1;
        report.residual_history.push(f_norm);
        report.step_lengths.push(lambda);
        debug!(
            "newton {:>3}: |F| = {:.6e}, step = {:.3e}, krylov = {}",
            report.iterations, f_norm, lambda, lin.iterations
        );
        if !f_norm.is_finite() {
            break;
        }
    }
    report.final_residual = f_norm;
    report.converged = f_norm < cfg.abs_tol;
    Ok((x, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_system_one_iteration() {
        let a = CsrMatrix::from_dense(&[vec![4.0, 1.0, 0.0], vec![1.0, 3.0, -1.0], vec![0.0, -1.0, 2.0]]);
        let b = [1.0, 2.0, 3.0];
        let sys = FnSystem::new(
            3,
            |x: &[f64], out: &mut [f64]| {
                let ax = a.spmv(x);
                for i in 0..3 {
                    out[i] = ax[i] - b[i];
                }
            },
            |_: &[f64]| a.clone(),
        );
        let cfg = NewtonConfig {
            abs_tol: 1e-4,
            ..Default::default()
        };
        let (x, rep) = newton_solve(&sys, vec![0.0; 3], &cfg).unwrap();
        assert!(rep.converged);
        assert_eq!(rep.iterations, 1);
        assert_eq!(rep.residual_history.len(), rep.iterations + 1);
        let lin = gmres_solve(&a, &b, &cfg.krylov).unwrap();
        for (p, q) in x.iter().zip(&lin.x) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn cube_root_of_eight() {
        // Hand iteration u <- u - (u^3 - 8) / (3 u^2) from 3:
        // 2.2962963, 2.0365874, 2.0006534, 2.0000002.
        let sys = FnSystem::new(
            1,
            |x: &[f64], out: &mut [f64]| out[0] = x[0].powi(3) - 8.0,
            |x: &[f64]| CsrMatrix::from_diagonal(&[3.0 * x[0] * x[0]]),
        );
        let cfg = NewtonConfig {
            abs_tol: 1e-10,
            ..Default::default()
        };
        let (x, rep) = newton_solve(&sys, vec![3.0], &cfg).unwrap();
        assert!(rep.converged);
        assert!(rep.iterations <= 10);
        assert!((x[0] - 2.0).abs() < 1e-8);
        assert!((rep.residual_history[1] - (2.2962963f64.powi(3) - 8.0)).abs() < 1e-5);
    }

    #[test]
    fn line_search_damps_overshoot() {
        // arctan: full Newton steps diverge from |x0| > 1.39.
        let sys = FnSystem::new(
            1,
            |x: &[f64], out: &mut [f64]| out[0] = x[0].atan(),
            |x: &[f64]| CsrMatrix::from_diagonal(&[1.0 / (1.0 + x[0] * x[0])]),
        );
        let (x, rep) = newton_solve(&sys, vec![3.0], &NewtonConfig::default()).unwrap();
        assert!(rep.converged);
        assert!(x[0].abs() < 1e-8);
        assert!(rep.step_lengths[0] < 1.0);
        for (k, pair) in rep.residual_history.windows(2).enumerate() {
            assert!(pair[1] <= (1.0 - 1e-4 * rep.step_lengths[k]) * pair[0]);
        }
    }

    #[test]
    fn max_iterations_returns_unconverged() {
        let sys = FnSystem::new(
            1,
            |x: &[f64], out: &mut [f64]| out[0] = x[0].powi(3) - 8.0,
            |x: &[f64]| CsrMatrix::from_diagonal(&[3.0 * x[0] * x[0]]),
        );
        let cfg = NewtonConfig {
            max_iterations: 2,
            abs_tol: 1e-14,
            ..Default::default()
        };
        let (x, rep) = newton_solve(&sys, vec![3.0], &cfg).unwrap();
        assert!(!rep.converged);
        assert_eq!(rep.iterations, 2);
        assert!((x[0] - 2.036587402525661).abs() < 1e-12);
    }

    #[test]
    fn stalled_line_search_takes_full_step() {
        // A sign-flipped Jacobian makes every step an ascent direction, so
        // backtracking exhausts and the full step is taken.
        let sys = FnSystem::new(
            1,
            |x: &[f64], out: &mut [f64]| out[0] = x[0],
            |_: &[f64]| CsrMatrix::from_diagonal(&[-1.0]),
        );
        let cfg = NewtonConfig {
            max_iterations: 1,
            ..Default::default()
        };
        let (x, rep) = newton_solve(&sys, vec![1.0], &cfg).unwrap();
        assert_eq!(rep.line_search_fallbacks, 1);
        assert_eq!(rep.step_lengths, vec![1.0]);
        assert_eq!(x, vec![2.0]);
        assert!(!rep.converged);
    }

    #[test]
    fn singular_jacobian_reports_linear_failure() {
        let sys = FnSystem::new(
            2,
            |x: &[f64], out: &mut [f64]| {
                out[0] = x[0] - 1.0;
                out[1] = x[1] - 1.0;
            },
            |_: &[f64]| CsrMatrix::from_dense(&[vec![1.0, 0.0], vec![0.0, 0.0]]),
        );
        let err = newton_solve(&sys, vec![0.0, 0.0], &NewtonConfig::default()).unwrap_err();
        assert!(matches!(err, NewtonError::LinearSolveFailure { iteration: 0, .. }));
    }

    #[test]
    fn rejects_bad_config_and_start() {
        let sys = FnSystem::new(1, |x: &[f64], out: &mut [f64]| out[0] = x[0], |_: &[f64]| CsrMatrix::identity(1));
        let bad = NewtonConfig {
            min_step: 2.0,
            ..Default::default()
        };
        assert!(newton_solve(&sys, vec![1.0], &bad).is_err());
        assert!(matches!(
            newton_solve(&sys, vec![f64::NAN], &NewtonConfig::default()),
            Err(NewtonError::NonFiniteStart)
        ));
    }

    #[test]
    fn deterministic_iterates() {
        let sys = FnSystem::new(
            2,
            |x: &[f64], out: &mut [f64]| {
                out[0] = x[0].exp() - 2.0 + 0.1 * x[1];
                out[1] = x[1].powi(3) + x[1] - 1.0;
            },
            |x: &[f64]| CsrMatrix::from_dense(&[vec![x[0].exp(), 0.1], vec![0.0, 3.0 * x[1] * x[1] + 1.0]]),
        );
        let a = newton_solve(&sys, vec![2.0, 2.0], &NewtonConfig::default()).unwrap();
        let b = newton_solve(&sys, vec![2.0, 2.0], &NewtonConfig::default()).unwrap();
        assert_eq!(a, b);
    }
}
