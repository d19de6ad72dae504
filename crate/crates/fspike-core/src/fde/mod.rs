//! Fractional-differential-equation core: time grids, special functions, and
//! explicit integrators for left- and right-Caputo systems of order in
//! `(0, 1]`.

mod grid;
mod solver;
pub mod special;

pub use grid::{FractionalOrder, SolverMethod, SolverOptions, TimeGrid, Trajectory};
pub use solver::{
    abm_weight, solve_caputo_backward, solve_caputo_forward, solve_caputo_forward_projected,
};
pub use special::{gamma, ln_gamma, mittag_leffler};
