//! Gradient computation via the adjoint of the forward integrator.
//!
//! Instead of discretizing the continuous adjoint equation independently,
//! the backward pass is the exact transpose of the explicit history-form
//! scheme the forward pass actually ran:
//!
//! ```text
//! forward:  y_m = y_0 + sum_{j < m} c_{j,m} f(t_j, y_j),
//!           c_{j,m} = (h^a / (a Gamma(a))) [(m-j)^a - (m-1-j)^a]
//! adjoint:  p_N = dL/dy_N,
//!           g_k = sum_{m = k+1}^{min(N, k+K)} c_{k,m} p_m,
//!           p_k = J(t_k)^T g_k,
//!           dW  += (g_k)_U (x) X(t_k) * r / tau   per layer, per node
//! ```
//!
//! so the returned gradient is the true derivative of the discrete loss (up
//! to the Heaviside/surrogate substitution in `J`); under the smooth spike
//! activation the substitution is exact and finite differences agree to
//! machine-level accuracy. At order 1 this reduces to classical
//! backpropagation through the unrolled Euler recurrence. Peak memory holds
//! the forward trajectory plus O(1) parameter-sized buffers per live sample,
//! independent of the number of time steps.

use crate::error::{Error, Result};
use crate::fde::{gamma, SolverMethod, SolverOptions, TimeGrid};
use crate::network::{NetworkSpec, NetworkState, StateLayout};
use crate::neuron::{NeuronModel, ResetRule};
use crate::surrogate::surrogate_grad;
use rayon::prelude::*;
use std::sync::atomic::{AtomicUsize, Ordering};

/// Discrete adjoint states over the grid, packed like the forward state
/// `[U^(1) ... U^(L), S_sum]`. The terminal row is the boundary condition
/// verbatim; interior rows hold the discrete adjoint weight of node `k`
/// divided by `h`, a first-order-consistent sampling of the continuous
/// adjoint.
#[derive(Debug, Clone)]
pub struct AdjointTrajectory {
    grid: TimeGrid,
    dim: usize,
    data: Vec<f64>,
}

impl AdjointTrajectory {
    fn zeros(grid: TimeGrid, dim: usize) -> Self {
        Self {
            grid,
            dim,
            data: vec![0.0; grid.points() * dim],
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Adjoint vector at grid node `k`.
    pub fn lambda(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    fn lambda_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.data[k * self.dim..(k + 1) * self.dim]
    }

    /// The boundary condition at the final time.
    pub fn terminal(&self) -> &[f64] {
        self.lambda(self.grid.steps())
    }
}

/// One gradient matrix per layer, shaped like the layer's weights
/// (row-major `out_dim x in_dim`).
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    layers: Vec<Vec<f64>>,
}

impl GradientSet {
    pub fn zeros_like(spec: &NetworkSpec) -> Self {
        Self {
            layers: spec.layers.iter().map(|l| vec![0.0; l.w.len()]).collect(),
        }
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layer(&self, l: usize) -> &[f64] {
        &self.layers[l]
    }

    pub fn layer_mut(&mut self, l: usize) -> &mut [f64] {
        &mut self.layers[l]
    }

    /// Elementwise `self += other`.
    pub fn add_assign(&mut self, other: &GradientSet) {
        assert_eq!(self.layers.len(), other.layers.len());
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            assert_eq!(a.len(), b.len());
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, c: f64) {
        for l in self.layers.iter_mut() {
            for x in l.iter_mut() {
                *x *= c;
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.iter())
            .fold(0.0, |m, &x| m.max(x.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.layers.iter().all(|l| l.iter().all(|x| x.is_finite()))
    }
}

/// Allocation accounting for one `backward` call: how many parameter-shaped
/// buffers were created (must not scale with the number of time steps) and
/// how many floats of trajectory-shaped adjoint storage were used (scales
/// linearly with the number of time steps).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BackwardStats {
    pub param_buffer_allocs: usize,
    pub trajectory_floats: usize,
}

/// Gradients plus everything observable about the backward sweep.
#[derive(Debug, Clone)]
pub struct BackwardDetail {
    /// Sum over the batch of per-sample gradients.
    pub gradients: GradientSet,
    /// Per-sample adjoint trajectories, in batch order.
    pub adjoints: Vec<AdjointTrajectory>,
    pub stats: BackwardStats,
}

/// `J(t)^T v` where `J` is the Jacobian of the packed dynamics at the given
/// stored forward state, with the surrogate derivative standing in for the
/// Heaviside step's. Blocks: each layer couples to itself (leak and soft
/// reset), to the next layer (spikes feeding forward), and the final layer
/// to the spike-count slot.
fn jacobian_transpose_product(
    spec: &NetworkSpec,
    layout: &StateLayout,
    state: &[f64],
    v: &[f64],
    out: &mut [f64],
) {
    out.fill(0.0);
    let last = layout.num_layers() - 1;
    for (l, layer) in spec.layers.iter().enumerate() {
        let u = &state[layout.u_range(l)];
        let theta = layer.neuron.theta;
        let tau = layer.neuron.tau_alpha;
        let leak = matches!(layer.neuron.model, NeuronModel::Lif);
        let soft = matches!(layer.neuron.reset, ResetRule::SoftSubtract);
        for i in 0..layer.out_dim {
            let sp = surrogate_grad(&layer.surrogate, u[i] - theta);
            let v_own = v[layout.u_range(l).start + i];
            let mut acc = 0.0;
            if leak {
                acc -= v_own / tau;
            }
            if soft && sp != 0.0 {
                acc -= theta * sp * v_own / tau;
            }
            if l < last {
                let nxt = &spec.layers[l + 1];
                let vn = &v[layout.u_range(l + 1)];
                let mut c = 0.0;
                for (i2, vni) in vn.iter().enumerate() {
                    c += nxt.w[i2 * nxt.in_dim + i] * vni;
                }
                if sp != 0.0 {
                    acc += sp * c * nxt.neuron.r / nxt.neuron.tau_alpha;
                }
            } else if sp != 0.0 {
                acc += sp * v[layout.s_sum_range()][i];
            }
            out[layout.u_range(l).start + i] = acc;
        }
    }
    // Nothing in the dynamics reads S_sum, so its adjoint block stays zero.
}

/// Right-hand side of the adjoint equation, `-J(t)^T lambda`, evaluated at
/// the stored forward state of sample `b` nearest to `t`.
pub fn adjoint_rhs(
    spec: &NetworkSpec,
    forward: &NetworkState,
    b: usize,
    t: f64,
    lambda: &[f64],
) -> Result<Vec<f64>> {
    let layout = spec.layout();
    if layout != *forward.layout() {
        return Err(Error::DimensionMismatch(
            "network spec does not match the forward state's layout".into(),
        ));
    }
    if b >= forward.batch() {
        return Err(Error::InvalidArgument(format!(
            "sample {b} out of range (batch = {})",
            forward.batch()
        )));
    }
    if lambda.len() != layout.packed_len() {
        return Err(Error::DimensionMismatch(format!(
            "adjoint vector length {} != packed state length {}",
            lambda.len(),
            layout.packed_len()
        )));
    }
    let grid = forward.grid();
    let h = grid.step_size();
    let rel = (t - grid.start()) / h;
    if rel < -0.5 || rel > grid.steps() as f64 + 0.5 {
        return Err(Error::Sequencing(format!(
            "no stored forward state near t = {t}; forward covers [{}, {}]",
            grid.start(),
            grid.end()
        )));
    }
    let k = (rel.round() as usize).min(grid.steps());
    let state = forward.sample(b).trajectory.state(k);
    let mut out = vec![0.0; layout.packed_len()];
    jacobian_transpose_product(spec, &layout, state, lambda, &mut out);
    for x in out.iter_mut() {
        *x = -*x;
    }
    Ok(out)
}

struct SampleBackward {
    grads: GradientSet,
    adjoint: AdjointTrajectory,
}

fn backward_sample(
    spec: &NetworkSpec,
    layout: &StateLayout,
    forward: &NetworkState,
    b: usize,
    terminal: &[f64],
    opts: &SolverOptions,
    inc: &[f64],
    param_allocs: &AtomicUsize,
    traj_floats: &AtomicUsize,
) -> Result<SampleBackward> {
    let grid = *forward.grid();
    let n = grid.steps();
    let h = grid.step_size();
    let dim = layout.packed_len();
    let window = opts.memory_window.unwrap_or(n).max(1);

    let mut grads = GradientSet::zeros_like(spec);
    param_allocs.fetch_add(grads.num_layers(), Ordering::Relaxed);

    let mut adjoint = AdjointTrajectory::zeros(grid, dim);
    adjoint.lambda_mut(n).copy_from_slice(terminal);
    // p_k = dL/dy_k rows and one reusable g buffer; all trajectory-shaped.
    let mut p = vec![0.0_f64; (n + 1) * dim];
    let mut g = vec![0.0_f64; dim];
    traj_floats.fetch_add(adjoint.data.len() + p.len() + g.len(), Ordering::Relaxed);
    p[n * dim..].copy_from_slice(terminal);

    let trajectory = &forward.sample(b).trajectory;
    let euler = matches!(opts.method, SolverMethod::Euler);
    let scale = if euler {
        h
    } else {
        let a = spec.alpha.get();
        h.powf(a) / (a * gamma(a))
    };

    for k in (0..n).rev() {
        g.fill(0.0);
        if euler {
            // Classical reverse recurrence: lambda_k = lambda_{k+1} +
            // h J_k^T lambda_{k+1}; the weight on f_k is g = h lambda_{k+1}.
            let (head, tail) = p.split_at_mut((k + 1) * dim);
            let lam_next = &tail[..dim];
            for (gi, li) in g.iter_mut().zip(lam_next) {
                *gi = h * li;
            }
            let pk = &mut head[k * dim..];
            jacobian_transpose_product(spec, layout, trajectory.state(k), &g, pk);
            for (x, l2) in pk.iter_mut().zip(lam_next) {
                *x += l2;
            }
        } else {
            let hi = n.min(k + window);
            for m in (k + 1)..=hi {
                let w = scale * inc[m - k];
                let pm = &p[m * dim..(m + 1) * dim];
                for (gi, pi) in g.iter_mut().zip(pm) {
                    *gi += w * pi;
                }
            }
            let (head, _) = p.split_at_mut((k + 1) * dim);
            jacobian_transpose_product(spec, layout, trajectory.state(k), &g, &mut head[k * dim..]);
        }

        if !g.iter().all(|x| x.is_finite()) {
            return Err(Error::Divergence {
                step: k,
                context: Some("adjoint sweep".into()),
                detail: "non-finite adjoint state".into(),
            });
        }

        let lam_row = adjoint.lambda_mut(k);
        if euler {
            lam_row.copy_from_slice(&p[k * dim..(k + 1) * dim]);
        } else {
            for (x, gi) in lam_row.iter_mut().zip(&g) {
                *x = gi / h;
            }
        }

        // Gradient quadrature at node k: dW^(l) += (g_k)_{U^(l)} (x) X^(l)(t_k) * r/tau.
        for (l, layer) in spec.layers.iter().enumerate() {
            let gu = &g[layout.u_range(l)];
            let x: &[f64] = if l == 0 {
                forward.input().frame(k.min(forward.input().frames() - 1), b)
            } else {
                forward.spikes(b, l - 1, k)
            };
            let coef = layer.neuron.r / layer.neuron.tau_alpha;
            let dw = grads.layer_mut(l);
            for (i, gi) in gu.iter().enumerate() {
                if *gi == 0.0 {
                    continue;
                }
                let row = &mut dw[i * layer.in_dim..(i + 1) * layer.in_dim];
                let c = coef * gi;
                for (wij, xj) in row.iter_mut().zip(x) {
                    *wij += c * xj;
                }
            }
        }
    }

    Ok(SampleBackward { grads, adjoint })
}

/// Backward sweep from explicit per-sample terminal conditions (full packed
/// vectors, length `batch * packed_len`), for losses that depend on states
/// other than the spike counts. Returns per-sample adjoints and allocation
/// statistics alongside the batch-summed gradients.
pub fn backward_from_terminal(
    spec: &NetworkSpec,
    forward: &NetworkState,
    terminal: &[f64],
    grid: &TimeGrid,
    opts: &SolverOptions,
) -> Result<BackwardDetail> {
    let layout = spec.layout();
    if layout != *forward.layout() {
        return Err(Error::DimensionMismatch(
            "network spec does not match the forward state's layout".into(),
        ));
    }
    if grid != forward.grid() {
        return Err(Error::Sequencing(
            "backward grid differs from the grid the forward pass used".into(),
        ));
    }
    let batch = forward.batch();
    if terminal.len() != batch * layout.packed_len() {
        return Err(Error::DimensionMismatch(format!(
            "terminal conditions length {} != batch {} x packed length {}",
            terminal.len(),
            batch,
            layout.packed_len()
        )));
    }
    if !terminal.iter().all(|x| x.is_finite()) {
        return Err(Error::InvalidArgument(
            "terminal condition contains a non-finite entry".into(),
        ));
    }
    if spec
        .layers
        .iter()
        .any(|l| matches!(l.neuron.reset, ResetRule::HardZero))
    {
        return Err(Error::InvalidArgument(
            "gradients require soft_subtract resets; the hard reset's \
             projection is not differentiable"
                .into(),
        ));
    }
    if matches!(opts.method, SolverMethod::Euler) && spec.alpha.get() != 1.0 {
        return Err(Error::InvalidArgument(format!(
            "euler backward requires order 1, got {}",
            spec.alpha.get()
        )));
    }

    let n = grid.steps();
    // Quadrature increment table i^a - (i-1)^a, shared by every sample.
    let a = spec.alpha.get();
    let mut inc = vec![0.0_f64; n + 1];
    let mut prev = 0.0;
    for (i, slot) in inc.iter_mut().enumerate().skip(1) {
        let cur = (i as f64).powf(a);
        *slot = cur - prev;
        prev = cur;
    }

    let param_allocs = AtomicUsize::new(0);
    let traj_floats = AtomicUsize::new(inc.len());
    let d = layout.packed_len();
    let per_sample: Result<Vec<SampleBackward>> = (0..batch)
        .into_par_iter()
        .map(|b| {
            backward_sample(
                spec,
                &layout,
                forward,
                b,
                &terminal[b * d..(b + 1) * d],
                opts,
                &inc,
                &param_allocs,
                &traj_floats,
            )
        })
        .collect();
    let per_sample = per_sample?;

    let mut gradients = GradientSet::zeros_like(spec);
    param_allocs.fetch_add(gradients.num_layers(), Ordering::Relaxed);
    let mut adjoints = Vec::with_capacity(batch);
    // Fixed batch-order reduction keeps the sum bit-reproducible.
    for s in per_sample {
        gradients.add_assign(&s.grads);
        adjoints.push(s.adjoint);
    }
    if !gradients.all_finite() {
        return Err(Error::Divergence {
            step: 0,
            context: Some("gradient accumulation".into()),
            detail: "non-finite gradient after batch reduction".into(),
        });
    }
    Ok(BackwardDetail {
        gradients,
        adjoints,
        stats: BackwardStats {
            param_buffer_allocs: param_allocs.load(Ordering::Relaxed),
            trajectory_floats: traj_floats.load(Ordering::Relaxed),
        },
    })
}

/// Gradients of a loss on the terminal spike counts: `loss_grad` holds
/// `dL/d counts` per sample (length `batch * out_dim`), which becomes the
/// `S_sum` block of the terminal adjoint condition, all other blocks zero.
/// Returns the per-sample gradients summed over the batch.
pub fn backward(
    spec: &NetworkSpec,
    forward: &NetworkState,
    loss_grad: &[f64],
    grid: &TimeGrid,
    opts: &SolverOptions,
) -> Result<GradientSet> {
    let layout = spec.layout();
    let batch = forward.batch();
    let out_dim = spec.out_dim();
    if loss_grad.len() != batch * out_dim {
        return Err(Error::DimensionMismatch(format!(
            "loss gradient length {} != batch {} x output dim {}",
            loss_grad.len(),
            batch,
            out_dim
        )));
    }
    let d = layout.packed_len();
    let mut terminal = vec![0.0_f64; batch * d];
    for b in 0..batch {
        terminal[b * d..(b + 1) * d][layout.s_sum_range()]
            .copy_from_slice(&loss_grad[b * out_dim..(b + 1) * out_dim]);
    }
    Ok(backward_from_terminal(spec, forward, &terminal, grid, opts)?.gradients)
}
