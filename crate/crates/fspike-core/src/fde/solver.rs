//! Forward and backward fractional integrators.
//!
//! The forward scheme is the explicit fractional Adams-Bashforth-Moulton
//! predictor for left-Caputo systems of order `a` in `(0, 1]`:
//!
//! ```text
//! y_k = y_0 + (1/Gamma(a)) * sum_{j=0}^{k-1} mu_{j,k} f(t_j, y_j)
//! mu_{j,k} = (h^a / a) * ((k-j)^a - (k-1-j)^a)
//! ```
//!
//! For `a = 1` the weights collapse to `h` and the scheme is forward Euler
//! in summed form. The backward integrator mirrors the weights in time for
//! right-Caputo systems integrated from a terminal condition.

use crate::error::{Error, Result};
use crate::fde::special::gamma;
use crate::fde::{FractionalOrder, SolverMethod, SolverOptions, TimeGrid, Trajectory};

/// History weight `mu_{j,k} = (h^a / a) * ((k-j)^a - (k-1-j)^a)` attached to
/// the RHS evaluation at step `j` when reconstructing the state at step `k`.
///
/// Strictly positive, and strictly decreasing in the lag `k - j` for `a < 1`.
pub fn abm_weight(k: usize, j: usize, h: f64, alpha: &FractionalOrder) -> Result<f64> {
    if j >= k {
        return Err(Error::IndexOrder(format!(
            "abm_weight requires j < k, got j = {j}, k = {k}"
        )));
    }
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "abm_weight requires h > 0, got {h}"
        )));
    }
    let a = alpha.get();
    let lag = (k - j) as f64;
    Ok(h.powf(a) / a * (lag.powf(a) - (lag - 1.0).powf(a)))
}

/// Table of `i^a - (i-1)^a` for `i = 1..=n`, shared by every step of a solve
/// so the per-step work is one multiply-add per history term.
fn lag_increments(n: usize, a: f64) -> Vec<f64> {
    let mut pow = Vec::with_capacity(n + 1);
    for i in 0..=n {
        pow.push((i as f64).powf(a));
    }
    (1..=n).map(|i| pow[i] - pow[i - 1]).collect()
}

fn check_finite(v: &[f64], step: usize, what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Divergence {
            step,
            context: None,
            detail: format!("non-finite {what}"),
        })
    }
}

/// Integrate `D^a y = f(t, y)` forward from `y(a) = y0` over the grid.
///
/// The RHS writes its output into the provided slice. All RHS evaluations are
/// stored in the returned [`Trajectory`] for later use by a backward pass.
/// With `memory_window = K` the history sum keeps only the `K` most recent
/// terms.
pub fn solve_caputo_forward<F>(
    mut rhs: F,
    y0: &[f64],
    grid: &TimeGrid,
    alpha: &FractionalOrder,
    opts: &SolverOptions,
) -> Result<Trajectory>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    solve_caputo_forward_projected(&mut rhs, |_, _| false, y0, grid, alpha, opts)
}

/// [`solve_caputo_forward`] with a post-step state projection.
///
/// After each new state is formed, `project(t_k, y_k)` may rewrite it in
/// place (returning true if it did); the projection delta is carried into the
/// reconstruction base so that later steps start from the projected state.
/// At order 1 with projection this reproduces the classical
/// "step, then reset" recurrence exactly. Spiking layers with a hard reset
/// use this hook; the identity projection recovers the plain solver.
pub fn solve_caputo_forward_projected<F, P>(
    mut rhs: F,
    mut project: P,
    y0: &[f64],
    grid: &TimeGrid,
    alpha: &FractionalOrder,
    opts: &SolverOptions,
) -> Result<Trajectory>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    P: FnMut(f64, &mut [f64]) -> bool,
{
    opts.validate(alpha, grid)?;
    let dim = y0.len();
    if dim == 0 {
        return Err(Error::InvalidArgument("state dimension is zero".into()));
    }
    let n = grid.steps();
    let h = grid.step_size();
    let a = alpha.get();
    let mut traj = Trajectory::zeroed(*grid, dim);

    traj.state_mut(0).copy_from_slice(y0);
    let mut base = y0.to_vec();
    if project(grid.t(0), traj.state_mut(0)) {
        for (b, (after, before)) in base
            .iter_mut()
            .zip(traj.state(0).iter().zip(y0.iter()))
            .map(|(b, p)| (b, p))
        {
            *b += *after - *before;
        }
    }

    {
        let (values, evals) = traj.rows_mut();
        rhs(grid.t(0), &values[0..dim], &mut evals[0..dim]);
    }
    check_finite(traj.rhs_eval(0), 0, "rhs output")?;

    match opts.method {
        SolverMethod::Euler => {
            for k in 1..=n {
                let t = grid.t(k);
                {
                    let (values, evals) = traj.rows_mut();
                    let (prev, cur) = values.split_at_mut(k * dim);
                    let prev_y = &prev[(k - 1) * dim..];
                    let prev_f = &evals[(k - 1) * dim..k * dim];
                    for i in 0..dim {
                        cur[i] = prev_y[i] + h * prev_f[i];
                    }
                }
                check_finite(traj.state(k), k, "state")?;
                project(t, traj.state_mut(k));
                {
                    let (values, evals) = traj.rows_mut();
                    rhs(
                        t,
                        &values[k * dim..(k + 1) * dim],
                        &mut evals[k * dim..(k + 1) * dim],
                    );
                }
                check_finite(traj.rhs_eval(k), k, "rhs output")?;
            }
        }
        SolverMethod::AbmPredictor => {
            let incr = lag_increments(n, a);
            let scale = h.powf(a) / (a * gamma(a));
            let window = opts.memory_window.unwrap_or(n);
            let mut acc = vec![0.0; dim];
            let mut pre = vec![0.0; dim];
            for k in 1..=n {
                let t = grid.t(k);
                acc.iter_mut().for_each(|x| *x = 0.0);
                let lo = k.saturating_sub(window);
                {
                    let (_, evals) = traj.rows_mut();
                    for j in lo..k {
                        // mu_{j,k} / h^a * a = (k-j)^a - (k-1-j)^a
                        let w = incr[k - j - 1];
                        let fj = &evals[j * dim..(j + 1) * dim];
                        for i in 0..dim {
                            acc[i] += w * fj[i];
                        }
                    }
                }
                for i in 0..dim {
                    pre[i] = base[i] + scale * acc[i];
                }
                check_finite(&pre, k, "state")?;
                {
                    let state = traj.state_mut(k);
                    state.copy_from_slice(&pre);
                    if project(t, state) {
                        for i in 0..dim {
                            base[i] += state[i] - pre[i];
                        }
                    }
                }
                {
                    let (values, evals) = traj.rows_mut();
                    rhs(
                        t,
                        &values[k * dim..(k + 1) * dim],
                        &mut evals[k * dim..(k + 1) * dim],
                    );
                }
                check_finite(traj.rhs_eval(k), k, "rhs output")?;
            }
        }
    }
    Ok(traj)
}

/// Integrate a right-Caputo system backward from a terminal condition at
/// `t = b`:
///
/// ```text
/// lambda_k = lambda_N + (1/Gamma(a)) * sum_{j=k+1}^{N} mu'_{j,k} g(t_j, lambda_j)
/// mu'_{j,k} = (h^a / a) * ((j-k)^a - (j-1-k)^a)
/// ```
///
/// the time mirror of the forward scheme; for `a = 1` it reduces to
/// reverse-time Euler. With `memory_window = K` the sum keeps only the `K`
/// terms nearest to `k`.
pub fn solve_caputo_backward<F>(
    mut rhs: F,
    lambda_b: &[f64],
    grid: &TimeGrid,
    alpha: &FractionalOrder,
    opts: &SolverOptions,
) -> Result<Trajectory>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    opts.validate(alpha, grid)?;
    let dim = lambda_b.len();
    if dim == 0 {
        return Err(Error::InvalidArgument("state dimension is zero".into()));
    }
    let n = grid.steps();
    let h = grid.step_size();
    let a = alpha.get();
    let mut traj = Trajectory::zeroed(*grid, dim);

    traj.state_mut(n).copy_from_slice(lambda_b);
    {
        let (values, evals) = traj.rows_mut();
        rhs(
            grid.t(n),
            &values[n * dim..(n + 1) * dim],
            &mut evals[n * dim..(n + 1) * dim],
        );
    }
    check_finite(traj.rhs_eval(n), n, "rhs output")?;

    match opts.method {
        SolverMethod::Euler => {
            for k in (0..n).rev() {
                {
                    let (values, evals) = traj.rows_mut();
                    let (cur, next) = values.split_at_mut((k + 1) * dim);
                    let next_l = &next[0..dim];
                    let next_g = &evals[(k + 1) * dim..(k + 2) * dim];
                    let cur_l = &mut cur[k * dim..];
                    for i in 0..dim {
                        cur_l[i] = next_l[i] + h * next_g[i];
                    }
                }
                check_finite(traj.state(k), k, "state")?;
                {
                    let (values, evals) = traj.rows_mut();
                    rhs(
                        grid.t(k),
                        &values[k * dim..(k + 1) * dim],
                        &mut evals[k * dim..(k + 1) * dim],
                    );
                }
                check_finite(traj.rhs_eval(k), k, "rhs output")?;
            }
        }
        SolverMethod::AbmPredictor => {
            let incr = lag_increments(n, a);
            let scale = h.powf(a) / (a * gamma(a));
            let window = opts.memory_window.unwrap_or(n);
            let mut acc = vec![0.0; dim];
            for k in (0..n).rev() {
                acc.iter_mut().for_each(|x| *x = 0.0);
                let hi = (k + window).min(n);
                {
                    let (_, evals) = traj.rows_mut();
                    for j in (k + 1)..=hi {
                        let w = incr[j - k - 1];
                        let gj = &evals[j * dim..(j + 1) * dim];
                        for i in 0..dim {
                            acc[i] += w * gj[i];
                        }
                    }
                }
                {
                    let state = traj.state_mut(k);
                    for i in 0..dim {
                        state[i] = lambda_b[i] + scale * acc[i];
                    }
                }
                check_finite(traj.state(k), k, "state")?;
                {
                    let (values, evals) = traj.rows_mut();
                    rhs(
                        grid.t(k),
                        &values[k * dim..(k + 1) * dim],
                        &mut evals[k * dim..(k + 1) * dim],
                    );
                }
                check_finite(traj.rhs_eval(k), k, "rhs output")?;
            }
        }
    }
    Ok(traj)
}
