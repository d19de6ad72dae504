//! Time grids, fractional orders, solver options, and solution trajectories.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Uniform discretization of `[a, b]` into `n` steps of size `h = (b - a)/n`.
///
/// Grid points are `t_k = a + k*h` for `k = 0..=n`; `t_n` reproduces `b`
/// up to one unit of floating-point rounding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    a: f64,
    b: f64,
    n: usize,
    h: f64,
}

impl TimeGrid {
    pub fn new(a: f64, b: f64, n: usize) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "grid endpoints must be finite, got [{a}, {b}]"
            )));
        }
        if n == 0 {
            return Err(Error::InvalidArgument("grid needs at least 1 step".into()));
        }
        let h = (b - a) / n as f64;
        if !(h > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "grid step must be positive, got h = {h} from [{a}, {b}] with {n} steps"
            )));
        }
        Ok(TimeGrid { a, b, n, h })
    }

    pub fn start(&self) -> f64 {
        self.a
    }

    pub fn end(&self) -> f64 {
        self.b
    }

    /// Number of steps.
    pub fn steps(&self) -> usize {
        self.n
    }

    /// Number of grid points (`steps + 1`).
    pub fn points(&self) -> usize {
        self.n + 1
    }

    pub fn step_size(&self) -> f64 {
        self.h
    }

    /// `t_k = a + k*h`.
    pub fn t(&self, k: usize) -> f64 {
        debug_assert!(k <= self.n);
        self.a + k as f64 * self.h
    }
}

/// Fractional derivative order, restricted to `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct FractionalOrder(f64);

impl FractionalOrder {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha.is_finite() && alpha > 0.0 && alpha <= 1.0 {
            Ok(FractionalOrder(alpha))
        } else {
            Err(Error::InvalidArgument(format!(
                "fractional order must lie in (0, 1], got {alpha}"
            )))
        }
    }

    pub fn get(&self) -> f64 {
        self.0
    }

    /// True when this is exactly the classical first-order derivative.
    pub fn is_one(&self) -> bool {
        self.0 == 1.0
    }
}

impl TryFrom<f64> for FractionalOrder {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        FractionalOrder::new(v)
    }
}

impl From<FractionalOrder> for f64 {
    fn from(a: FractionalOrder) -> f64 {
        a.get()
    }
}

/// Integration scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMethod {
    /// Explicit fractional Adams-Bashforth-Moulton predictor; valid for any
    /// order in `(0, 1]`.
    AbmPredictor,
    /// Classical forward Euler; valid only when the order is exactly 1.
    Euler,
}

/// Solver configuration: scheme plus optional short-memory truncation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub method: SolverMethod,
    /// Keep only the most recent `K` history terms in the fractional sum;
    /// `None` means full history.
    pub memory_window: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            method: SolverMethod::AbmPredictor,
            memory_window: None,
        }
    }
}

impl SolverOptions {
    /// Check the options against an order and a grid before integrating.
    pub fn validate(&self, alpha: &FractionalOrder, grid: &TimeGrid) -> Result<()> {
        if self.method == SolverMethod::Euler && !alpha.is_one() {
            return Err(Error::InvalidArgument(format!(
                "euler method requires order exactly 1, got {}",
                alpha.get()
            )));
        }
        if let Some(k) = self.memory_window {
            if k == 0 || k > grid.steps() {
                return Err(Error::InvalidArgument(format!(
                    "memory window must satisfy 1 <= K <= {}, got {k}",
                    grid.steps()
                )));
            }
        }
        Ok(())
    }
}

/// Dense solution record: one state vector and one stored RHS evaluation per
/// grid point. The RHS evaluations are retained for the backward pass.
#[derive(Debug, Clone)]
pub struct Trajectory {
    grid: TimeGrid,
    dim: usize,
    values: Vec<f64>,
    rhs_evals: Vec<f64>,
}

impl Trajectory {
    pub(crate) fn zeroed(grid: TimeGrid, dim: usize) -> Self {
        let len = grid.points() * dim;
        Trajectory {
            grid,
            dim,
            values: vec![0.0; len],
            rhs_evals: vec![0.0; len],
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// State vector at grid point `k`.
    pub fn state(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    /// Stored RHS evaluation at grid point `k`.
    pub fn rhs_eval(&self, k: usize) -> &[f64] {
        &self.rhs_evals[k * self.dim..(k + 1) * self.dim]
    }

    pub(crate) fn state_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.values[k * self.dim..(k + 1) * self.dim]
    }

    /// Split into simultaneous state/rhs accessors (the solver reads old RHS
    /// rows while writing the current state row).
    pub(crate) fn rows_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.values, &mut self.rhs_evals)
    }

    /// Total floats stored (states + RHS evaluations); used by the memory
    /// accounting tests.
    pub fn stored_floats(&self) -> usize {
        self.values.len() + self.rhs_evals.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_reproduces_endpoint_within_rounding() {
        for &(a, b, n) in &[(0.0, 1.0, 7usize), (-2.5, 3.1, 1000), (0.3, 0.4, 3)] {
            let g = TimeGrid::new(a, b, n).unwrap();
            let tn = g.t(n);
            assert!(
                (tn - b).abs() <= 2.0 * f64::EPSILON * b.abs().max(1.0),
                "t_N = {tn} vs b = {b}"
            );
        }
    }

    #[test]
    fn grid_points_strictly_increase() {
        let g = TimeGrid::new(0.0, 1e-3, 997).unwrap();
        for k in 1..g.points() {
            assert!(g.t(k) > g.t(k - 1));
        }
    }

    #[test]
    fn grid_rejects_degenerate_inputs() {
        assert!(TimeGrid::new(0.0, 1.0, 0).is_err());
        assert!(TimeGrid::new(1.0, 1.0, 5).is_err());
        assert!(TimeGrid::new(2.0, 1.0, 5).is_err());
        assert!(TimeGrid::new(0.0, f64::INFINITY, 5).is_err());
    }

    #[test]
    fn order_accepts_half_open_unit_interval() {
        assert!(FractionalOrder::new(1e-9).is_ok());
        assert!(FractionalOrder::new(0.5).is_ok());
        assert!(FractionalOrder::new(1.0).unwrap().is_one());
        assert!(FractionalOrder::new(0.0).is_err());
        assert!(FractionalOrder::new(-0.2).is_err());
        assert!(FractionalOrder::new(1.0 + 1e-12).is_err());
        assert!(FractionalOrder::new(f64::NAN).is_err());
    }

    #[test]
    fn euler_requires_order_one() {
        let grid = TimeGrid::new(0.0, 1.0, 10).unwrap();
        let opts = SolverOptions {
            method: SolverMethod::Euler,
            memory_window: None,
        };
        assert!(opts
            .validate(&FractionalOrder::new(1.0).unwrap(), &grid)
            .is_ok());
        assert!(opts
            .validate(&FractionalOrder::new(0.9).unwrap(), &grid)
            .is_err());
    }

    #[test]
    fn memory_window_bounds_are_enforced() {
        let grid = TimeGrid::new(0.0, 1.0, 10).unwrap();
        let alpha = FractionalOrder::new(0.5).unwrap();
        for (k, ok) in [(1usize, true), (10, true), (11, false), (0, false)] {
            let opts = SolverOptions {
                method: SolverMethod::AbmPredictor,
                memory_window: Some(k),
            };
            assert_eq!(opts.validate(&alpha, &grid).is_ok(), ok, "K = {k}");
        }
    }
}
