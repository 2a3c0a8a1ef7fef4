//! Benchmark problems with known solutions, and error norms.

use std::fmt;
use std::sync::Arc;

use crate::geometry::Grid;
use crate::scheme::{GridFunction, ProblemData};

pub type Evaluator = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemId {
    Example1,
    Example2,
    Custom,
}

impl ProblemId {
    pub fn name(self) -> &'static str {
        match self {
            ProblemId::Example1 => "ex1",
            ProblemId::Example2 => "ex2",
            ProblemId::Custom => "custom",
        }
    }
}

impl fmt::Display for ProblemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ProblemId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "ex1" | "example1" | "1" => Ok(ProblemId::Example1),
            "ex2" | "example2" | "2" => Ok(ProblemId::Example2),
            "custom" => Ok(ProblemId::Custom),
            other => Err(format!("unknown problem '{other}' (expected ex1, ex2 or custom)")),
        }
    }
}

/// Right-hand side, Dirichlet data and (optionally) the exact solution.
#[derive(Clone)]
pub struct ProblemSpec {
    pub id: ProblemId,
    pub f: Evaluator,
    pub g: Evaluator,
    pub exact: Option<Evaluator>,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("id", &self.id)
            .field("exact", &self.exact.is_some())
            .finish()
    }
}

impl ProblemSpec {
    pub fn custom(
        f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        g: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            id: ProblemId::Custom,
            f: Arc::new(f),
            g: Arc::new(g),
            exact: None,
        }
    }

    pub fn by_id(id: ProblemId) -> Option<Self> {
        match id {
            ProblemId::Example1 => Some(example1()),
            ProblemId::Example2 => Some(example2()),
            ProblemId::Custom => None,
        }
    }

    pub fn sample(&self, grid: &Grid) -> ProblemData {
        ProblemData::sample(grid, |x, y| (self.f)(x, y), |x, y| (self.g)(x, y))
    }

    pub fn exact_on(&self, grid: &Grid) -> Option<GridFunction> {
        self.exact.as_ref().map(|u| GridFunction::from_fn(grid, |x, y| u(x, y)))
    }
}

fn ex1_u(x: f64, y: f64) -> f64 {
    (0.5 * (x * x + y * y)).exp()
}

/// Smooth radial solution `u = exp(|x|^2 / 2)`, `f = (1 + |x|^2) exp(|x|^2)`.
pub fn example1() -> ProblemSpec {
    ProblemSpec {
        id: ProblemId::Example1,
        f: Arc::new(|x, y| {
            let r2 = x * x + y * y;
            (1.0 + r2) * r2.exp()
        }),
        g: Arc::new(ex1_u),
        exact: Some(Arc::new(ex1_u)),
    }
}

fn ex2_u(x: f64, y: f64) -> f64 {
    let r = x.hypot(y);
    (r - 0.2).max(0.0).powf(2.5)
}

/// `C^1` solution `u = max(|x| - 1/5, 0)^(5/2)`, flat (and `f = 0`) on the
/// disc of radius 1/5.
pub fn example2() -> ProblemSpec {
    ProblemSpec {
        id: ProblemId::Example2,
        f: Arc::new(|x, y| {
            let r = x.hypot(y);
            if r <= 0.2 {
                0.0
            } else {
                0.375 * (5.0 * r - 1.0).powi(2) / r
            }
        }),
        g: Arc::new(ex2_u),
        exact: Some(Arc::new(ex2_u)),
    }
}

/// `h * sqrt(sum over interior nodes of (u - u_exact)^2)`.
pub fn l2_error(u: &GridFunction, exact: &dyn Fn(f64, f64) -> f64, grid: &Grid) -> f64 {
    let sum: f64 = grid
        .interior_ids()
        .map(|id| {
            let p = grid[id];
            (u[id] - exact(p.x, p.y)).powi(2)
        })
        .sum();
    grid.h() * sum.sqrt()
}

/// Max-norm error over interior nodes.
pub fn max_error(u: &GridFunction, exact: &dyn Fn(f64, f64) -> f64, grid: &Grid) -> f64 {
    grid.interior_ids()
        .map(|id| {
            let p = grid[id];
            (u[id] - exact(p.x, p.y)).abs()
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, DomainSpec};

    #[test]
    fn example1_values() {
        let p = example1();
        assert_eq!((p.exact.as_ref().unwrap())(0.0, 0.0), 1.0);
        assert_eq!((p.f)(0.0, 0.0), 1.0);
        // (1 + 1) e^1
        let two_e = 2.0 * 1f64.exp();
        assert!(((p.f)(1.0, 0.0) - two_e).abs() < 1e-12);
        assert!(((p.f)(1.0, 0.0) - 5.43656).abs() < 1e-5);
    }

    #[test]
    fn example2_values() {
        let p = example2();
        let u = p.exact.as_ref().unwrap();
        for (x, y) in [(0.0, 0.0), (0.1, 0.05), (0.0, 0.2), (-0.14, 0.14)] {
            assert_eq!((p.f)(x, y), 0.0);
            assert_eq!(u(x, y), 0.0);
        }
        assert!((u(1.0, 0.0) - 0.8f64.powf(2.5)).abs() < 1e-15);
        assert!((u(1.0, 0.0) - 0.57243).abs() < 1e-5);
    }

    #[test]
    fn boundary_data_is_exact_solution() {
        for p in [example1(), example2()] {
            let u = p.exact.as_ref().unwrap();
            for (x, y) in [(0.5, 0.1), (-1.0, 0.3), (0.25, -2.0)] {
                assert_eq!((p.g)(x, y), u(x, y));
            }
        }
    }

    #[test]
    fn parse_ids() {
        assert_eq!("EX1".parse::<ProblemId>().unwrap(), ProblemId::Example1);
        assert_eq!("ex2".parse::<ProblemId>().unwrap(), ProblemId::Example2);
        assert!("ex3".parse::<ProblemId>().is_err());
        assert!(ProblemSpec::by_id(ProblemId::Custom).is_none());
    }

    #[test]
    fn error_norms() {
        let grid = build_grid(DomainSpec::new(0.5, 9).unwrap()).unwrap();
        let p = example1();
        let exact = p.exact.clone().unwrap();
        let u = p.exact_on(&grid).unwrap();
        assert_eq!(l2_error(&u, exact.as_ref(), &grid), 0.0);
        assert_eq!(max_error(&u, exact.as_ref(), &grid), 0.0);
        let c = 0.01;
        let shifted = GridFunction::from_fn(&grid, |x, y| exact(x, y) + c);
        let expect = grid.h() * c * (grid.num_interior() as f64).sqrt();
        assert!((l2_error(&shifted, exact.as_ref(), &grid) - expect).abs() < 1e-14);
        assert!((max_error(&shifted, exact.as_ref(), &grid) - c).abs() < 1e-14);
    }
}
