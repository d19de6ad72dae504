//! Multi-layer spiking networks as one coupled fractional ODE.
//!
//! An L-layer dense network is packed into a single flat state vector
//!
//! ```text
//! [U^(1), U^(2), ..., U^(L), S_sum]
//! ```
//!
//! whose dynamics couple the layers instantaneously: layer `l` receives
//! `X^(l) = S_out^(l-1)` (the raw input for `l = 1`), produces spikes
//! `S_out^(l) = H(U^(l) - theta_l)`, and drives its membrane block with
//! `(-U + R W X - theta S_out) / tau_l`. The augmented block `S_sum`
//! integrates the final layer's spikes under the same fractional order; its
//! terminal value drives prediction and the loss. At order 1 it is `h` times
//! the plain spike count; below order 1 it is a memory-weighted count in
//! which the influence of old spikes fades.

use crate::error::{Error, Result};
use crate::fde::{
    solve_caputo_forward_projected, FractionalOrder, SolverOptions, TimeGrid, Trajectory,
};
use crate::neuron::{NeuronModel, NeuronParams, ResetRule};
use crate::surrogate::{surrogate_primitive, SurrogateSpec};
use rand::Rng;
use rayon::prelude::*;
use std::cell::{Cell, RefCell};

/// One dense spiking layer: an `out_dim x in_dim` weight matrix (row-major),
/// its neuron constants, and the surrogate used for its spikes during
/// training.
#[derive(Debug, Clone)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Row-major weights: `w[i * in_dim + j]` connects input `j` to neuron `i`.
    pub w: Vec<f64>,
    pub neuron: NeuronParams,
    pub surrogate: SurrogateSpec,
}

impl LayerSpec {
    /// Build a layer after checking dimensions and weight finiteness.
    pub fn new(
        in_dim: usize,
        out_dim: usize,
        w: Vec<f64>,
        neuron: NeuronParams,
        surrogate: SurrogateSpec,
    ) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::InvalidArgument(format!(
                "layer dimensions must be positive, got {in_dim} -> {out_dim}"
            )));
        }
        if w.len() != in_dim * out_dim {
            return Err(Error::DimensionMismatch(format!(
                "weight length {} != {out_dim} x {in_dim}",
                w.len()
            )));
        }
        if !w.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidArgument(
                "weights contain a non-finite entry".into(),
            ));
        }
        let neuron = neuron.validated()?;
        Ok(Self {
            in_dim,
            out_dim,
            w,
            neuron,
            surrogate,
        })
    }

    /// A layer with all-zero weights.
    pub fn zeros(
        in_dim: usize,
        out_dim: usize,
        neuron: NeuronParams,
        surrogate: SurrogateSpec,
    ) -> Result<Self> {
        Self::new(in_dim, out_dim, vec![0.0; in_dim * out_dim], neuron, surrogate)
    }

    /// A layer initialised uniformly in `[-1/sqrt(in_dim), 1/sqrt(in_dim)]`.
    pub fn random_uniform<R: Rng>(
        in_dim: usize,
        out_dim: usize,
        neuron: NeuronParams,
        surrogate: SurrogateSpec,
        rng: &mut R,
    ) -> Result<Self> {
        if in_dim == 0 {
            return Err(Error::InvalidArgument("in_dim must be positive".into()));
        }
        let lim = 1.0 / (in_dim as f64).sqrt();
        let w = (0..in_dim * out_dim)
            .map(|_| rng.gen_range(-lim..lim))
            .collect();
        Self::new(in_dim, out_dim, w, neuron, surrogate)
    }

    /// Weight from input `j` to neuron `i`.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.w[i * self.in_dim + j]
    }
}

/// An ordered stack of layers sharing one fractional order.
#[derive(Debug, Clone)]
pub struct NetworkSpec {
    pub layers: Vec<LayerSpec>,
    pub alpha: FractionalOrder,
}

impl NetworkSpec {
    /// Build a network after checking the dimension chain and that every
    /// layer's neuron order agrees with the network-wide order.
    pub fn new(layers: Vec<LayerSpec>, alpha: FractionalOrder) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("network has no layers".into()));
        }
        for (l, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::DimensionMismatch(format!(
                    "layer {l} output dim {} != layer {} input dim {}",
                    pair[0].out_dim,
                    l + 1,
                    pair[1].in_dim
                )));
            }
        }
        for (l, layer) in layers.iter().enumerate() {
            if layer.neuron.alpha.get() != alpha.get() {
                return Err(Error::InvalidArgument(format!(
                    "layer {l} neuron order {} != network order {}",
                    layer.neuron.alpha.get(),
                    alpha.get()
                )));
            }
        }
        Ok(Self { layers, alpha })
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim
    }

    /// Total number of trainable weights.
    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len()).sum()
    }

    pub fn layout(&self) -> StateLayout {
        StateLayout::of(self)
    }
}

/// Offsets of each layer's membrane block and of the spike-count block
/// inside the packed state vector `[U^(1) ... U^(L), S_sum]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateLayout {
    u_dims: Vec<usize>,
    u_offsets: Vec<usize>,
    packed_len: usize,
    spike_offsets: Vec<usize>,
    spike_len: usize,
}

impl StateLayout {
    fn of(spec: &NetworkSpec) -> Self {
        let u_dims: Vec<usize> = spec.layers.iter().map(|l| l.out_dim).collect();
        let mut u_offsets = Vec::with_capacity(u_dims.len());
        let mut off = 0;
        for &d in &u_dims {
            u_offsets.push(off);
            off += d;
        }
        let packed_len = off + *u_dims.last().unwrap();
        // Spike rows are laid out like the membrane blocks, without S_sum.
        let spike_offsets = u_offsets.clone();
        Self {
            spike_len: off,
            u_dims,
            u_offsets,
            packed_len,
            spike_offsets,
        }
    }

    pub fn num_layers(&self) -> usize {
        self.u_dims.len()
    }

    /// Slice range of layer `l`'s membrane block in the packed state.
    pub fn u_range(&self, l: usize) -> std::ops::Range<usize> {
        self.u_offsets[l]..self.u_offsets[l] + self.u_dims[l]
    }

    /// Slice range of the spike-count block in the packed state.
    pub fn s_sum_range(&self) -> std::ops::Range<usize> {
        let d = *self.u_dims.last().unwrap();
        self.packed_len - d..self.packed_len
    }

    /// Slice range of layer `l` in a flat per-node spike row.
    pub fn spike_range(&self, l: usize) -> std::ops::Range<usize> {
        self.spike_offsets[l]..self.spike_offsets[l] + self.u_dims[l]
    }

    /// Length of the packed state vector.
    pub fn packed_len(&self) -> usize {
        self.packed_len
    }

    /// Length of one flat spike row (all layers, no S_sum block).
    pub fn spike_row_len(&self) -> usize {
        self.spike_len
    }
}

/// Spike trains as a dense `frames x batch x dim` tensor of reals
/// (binary for rate-coded data, but real-valued inputs are allowed).
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeTensor {
    frames: usize,
    batch: usize,
    dim: usize,
    data: Vec<f64>,
}

impl SpikeTensor {
    pub fn zeros(frames: usize, batch: usize, dim: usize) -> Result<Self> {
        if frames == 0 || batch == 0 || dim == 0 {
            return Err(Error::InvalidArgument(format!(
                "tensor shape must be positive, got {frames} x {batch} x {dim}"
            )));
        }
        Ok(Self {
            frames,
            batch,
            dim,
            data: vec![0.0; frames * batch * dim],
        })
    }

    pub fn from_vec(data: Vec<f64>, frames: usize, batch: usize, dim: usize) -> Result<Self> {
        if data.len() != frames * batch * dim {
            return Err(Error::DimensionMismatch(format!(
                "tensor data length {} != {frames} x {batch} x {dim}",
                data.len()
            )));
        }
        if !data.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidArgument(
                "tensor contains a non-finite entry".into(),
            ));
        }
        Self {
            frames,
            batch,
            dim,
            data,
        }
        .checked()
    }

    fn checked(self) -> Result<Self> {
        if self.frames == 0 || self.batch == 0 || self.dim == 0 {
            return Err(Error::InvalidArgument(format!(
                "tensor shape must be positive, got {} x {} x {}",
                self.frames, self.batch, self.dim
            )));
        }
        Ok(self)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }
    pub fn batch(&self) -> usize {
        self.batch
    }
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The input vector of sample `b` during frame `k`.
    pub fn frame(&self, k: usize, b: usize) -> &[f64] {
        let start = (k * self.batch + b) * self.dim;
        &self.data[start..start + self.dim]
    }

    pub fn frame_mut(&mut self, k: usize, b: usize) -> &mut [f64] {
        let start = (k * self.batch + b) * self.dim;
        &mut self.data[start..start + self.dim]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// A tensor containing only the selected samples, in the given order.
    pub fn select_samples(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidArgument("empty sample selection".into()));
        }
        if indices.iter().any(|&b| b >= self.batch) {
            return Err(Error::InvalidArgument(format!(
                "sample index out of range (batch = {})",
                self.batch
            )));
        }
        let mut out = Self::zeros(self.frames, indices.len(), self.dim)?;
        for k in 0..self.frames {
            for (nb, &b) in indices.iter().enumerate() {
                out.frame_mut(k, nb).copy_from_slice(self.frame(k, b));
            }
        }
        Ok(out)
    }
}

/// How spike values are produced from the membrane potential: the exact
/// Heaviside step for simulation and training (with the surrogate derivative
/// standing in for the step's gradient), or each layer's surrogate primitive
/// as a smooth stand-in so finite-difference gradient checks see a
/// differentiable forward pass that is exactly consistent with the backward
/// rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpikeActivation {
    Heaviside,
    Smooth,
}

#[inline]
fn spike_value(act: SpikeActivation, surrogate: &SurrogateSpec, x: f64) -> f64 {
    match act {
        SpikeActivation::Heaviside => {
            if x >= 0.0 {
                1.0
            } else {
                0.0
            }
        }
        SpikeActivation::Smooth => surrogate_primitive(surrogate, x),
    }
}

/// Core packed-dynamics evaluation shared by [`concat_dynamics`] and the
/// forward solver.
///
/// `spikes` is one flat spike row; when `keep_recorded_hard` is set, rows of
/// hard-reset layers are taken as already present (recorded by the reset
/// projection from pre-reset potentials) instead of recomputed from the
/// (now reset) membrane state.
fn eval_packed_dynamics(
    spec: &NetworkSpec,
    layout: &StateLayout,
    x_input: &[f64],
    state: &[f64],
    act: SpikeActivation,
    keep_recorded_hard: bool,
    spikes: &mut [f64],
    out: &mut [f64],
) {
    // Pass 1: spike values per layer.
    for (l, layer) in spec.layers.iter().enumerate() {
        let hard = matches!(layer.neuron.reset, ResetRule::HardZero);
        if hard && keep_recorded_hard {
            continue;
        }
        let u = &state[layout.u_range(l)];
        let srange = layout.spike_range(l);
        let theta = layer.neuron.theta;
        for (si, &ui) in spikes[srange].iter_mut().zip(u) {
            *si = spike_value(act, &layer.surrogate, ui - theta);
        }
    }
    // Pass 2: membrane derivatives and the spike-count slot.
    for (l, layer) in spec.layers.iter().enumerate() {
        let u = &state[layout.u_range(l)];
        let leak = matches!(layer.neuron.model, NeuronModel::Lif);
        let soft = matches!(layer.neuron.reset, ResetRule::SoftSubtract);
        let (theta, tau, r) = (layer.neuron.theta, layer.neuron.tau_alpha, layer.neuron.r);
        let (s_own, x): (&[f64], &[f64]) = if l == 0 {
            (&spikes[layout.spike_range(l)], x_input)
        } else {
            let (prev, own) = spikes.split_at(layout.spike_range(l).start);
            (
                &own[..layer.out_dim],
                &prev[layout.spike_range(l - 1)],
            )
        };
        let du = &mut out[layout.u_range(l)];
        for i in 0..layer.out_dim {
            let row = &layer.w[i * layer.in_dim..(i + 1) * layer.in_dim];
            let mut acc = 0.0;
            for (wij, xj) in row.iter().zip(x) {
                acc += wij * xj;
            }
            let mut v = r * acc;
            if leak {
                v -= u[i];
            }
            if soft && s_own[i] != 0.0 {
                v -= theta * s_own[i];
            }
            du[i] = v / tau;
        }
    }
    let last = layout.num_layers() - 1;
    let s_last = &spikes[layout.spike_range(last)];
    out[layout.s_sum_range()].copy_from_slice(s_last);
}

/// The concatenated network dynamics `f(t, state)` for the packed state
/// `[U^(1) ... U^(L), S_sum]`: spikes are computed from the state on the
/// fly, `X^(1) = input_fn(t)`, `X^(l) = S_out^(l-1)`, and the `S_sum` slot
/// receives the final layer's spike vector.
pub fn concat_dynamics<F>(
    spec: &NetworkSpec,
    t: f64,
    state: &[f64],
    input_fn: F,
) -> Result<Vec<f64>>
where
    F: Fn(f64) -> Vec<f64>,
{
    concat_dynamics_with_activation(spec, t, state, input_fn, SpikeActivation::Heaviside)
}

/// [`concat_dynamics`] with an explicit spike activation, so gradient checks
/// can differentiate the smooth variant directly.
pub fn concat_dynamics_with_activation<F>(
    spec: &NetworkSpec,
    t: f64,
    state: &[f64],
    input_fn: F,
    act: SpikeActivation,
) -> Result<Vec<f64>>
where
    F: Fn(f64) -> Vec<f64>,
{
    let layout = spec.layout();
    if state.len() != layout.packed_len() {
        return Err(Error::DimensionMismatch(format!(
            "packed state length {} != layout length {}",
            state.len(),
            layout.packed_len()
        )));
    }
    let x1 = input_fn(t);
    if x1.len() != spec.in_dim() {
        return Err(Error::DimensionMismatch(format!(
            "input length {} != first layer input dim {}",
            x1.len(),
            spec.in_dim()
        )));
    }
    let mut out = vec![0.0; layout.packed_len()];
    let mut spikes = vec![0.0; layout.spike_row_len()];
    eval_packed_dynamics(
        spec,
        &layout,
        &x1,
        state,
        act,
        false,
        &mut spikes,
        &mut out,
    );
    Ok(out)
}

/// Everything recorded about one sample's forward pass: the packed solver
/// trajectory (states and RHS evaluations at every node) plus the spike row
/// per node (needed verbatim by the backward pass; under hard reset spikes
/// are not recoverable from the reset potentials).
#[derive(Debug, Clone)]
pub struct SampleState {
    pub trajectory: Trajectory,
    spikes: Vec<f64>,
}

/// Batched forward-pass result. Keeps the driving input alongside the
/// trajectories because the gradient integral needs `X^(1)(t_k)` verbatim.
#[derive(Debug, Clone)]
pub struct NetworkState {
    grid: TimeGrid,
    layout: StateLayout,
    input: SpikeTensor,
    samples: Vec<SampleState>,
}

impl NetworkState {
    pub fn batch(&self) -> usize {
        self.samples.len()
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn layout(&self) -> &StateLayout {
        &self.layout
    }

    /// The input tensor this state was produced from.
    pub fn input(&self) -> &SpikeTensor {
        &self.input
    }

    pub fn sample(&self, b: usize) -> &SampleState {
        &self.samples[b]
    }

    /// Membrane potentials of layer `l` at node `k` for sample `b`.
    pub fn membrane(&self, b: usize, l: usize, k: usize) -> &[f64] {
        &self.samples[b].trajectory.state(k)[self.layout.u_range(l)]
    }

    /// Spike vector of layer `l` at node `k` for sample `b`.
    pub fn spikes(&self, b: usize, l: usize, k: usize) -> &[f64] {
        let row = self.layout.spike_row_len();
        &self.samples[b].spikes[k * row..(k + 1) * row][self.layout.spike_range(l)]
    }

    /// Accumulated final-layer spike counts at node `k` for sample `b`.
    pub fn s_sum(&self, b: usize, k: usize) -> &[f64] {
        &self.samples[b].trajectory.state(k)[self.layout.s_sum_range()]
    }

    /// Terminal spike counts (the classification logits).
    pub fn final_counts(&self, b: usize) -> &[f64] {
        self.s_sum(b, self.grid.steps())
    }

    /// Argmax class of the terminal counts; ties resolve to the lowest index.
    pub fn predicted_class(&self, b: usize) -> usize {
        let counts = self.final_counts(b);
        let mut best = 0;
        for (i, &c) in counts.iter().enumerate() {
            if c > counts[best] {
                best = i;
            }
        }
        best
    }
}

/// Forward-integrate the network over a batch of spike trains.
///
/// Input frame `k` is held constant on `[t_k, t_{k+1})` (zero-order hold),
/// so the tensor must carry exactly `grid.steps()` frames; the terminal RHS
/// evaluation at `t_N` reuses the last frame. Samples are integrated
/// independently (in parallel) and deterministically.
pub fn forward(
    spec: &NetworkSpec,
    input: &SpikeTensor,
    grid: &TimeGrid,
    opts: &SolverOptions,
) -> Result<NetworkState> {
    forward_with_activation(spec, input, grid, opts, SpikeActivation::Heaviside)
}

/// [`forward`] with an explicit spike activation; the smooth activation is
/// only valid when every layer uses the soft reset.
pub fn forward_with_activation(
    spec: &NetworkSpec,
    input: &SpikeTensor,
    grid: &TimeGrid,
    opts: &SolverOptions,
    act: SpikeActivation,
) -> Result<NetworkState> {
    let layout = spec.layout();
    if input.dim() != spec.in_dim() {
        return Err(Error::DimensionMismatch(format!(
            "input dim {} != first layer input dim {}",
            input.dim(),
            spec.in_dim()
        )));
    }
    if input.frames() != grid.steps() {
        return Err(Error::DimensionMismatch(format!(
            "input has {} frames but the grid has {} steps; frame k is held \
             on [t_k, t_k+1), so frames must equal steps",
            input.frames(),
            grid.steps()
        )));
    }
    if act == SpikeActivation::Smooth
        && spec
            .layers
            .iter()
            .any(|l| matches!(l.neuron.reset, ResetRule::HardZero))
    {
        return Err(Error::InvalidArgument(
            "smooth spike activation requires soft_subtract resets".into(),
        ));
    }
    let samples: Result<Vec<SampleState>> = (0..input.batch())
        .into_par_iter()
        .map(|b| run_sample(spec, &layout, input, b, grid, opts, act))
        .collect();
    Ok(NetworkState {
        grid: *grid,
        layout,
        input: input.clone(),
        samples: samples?,
    })
}

fn run_sample(
    spec: &NetworkSpec,
    layout: &StateLayout,
    input: &SpikeTensor,
    b: usize,
    grid: &TimeGrid,
    opts: &SolverOptions,
    act: SpikeActivation,
) -> Result<SampleState> {
    let n = grid.steps();
    let h = grid.step_size();
    let a = grid.start();
    let row = layout.spike_row_len();
    let recorded = RefCell::new(vec![0.0_f64; (n + 1) * row]);
    let bad_layer: Cell<Option<usize>> = Cell::new(None);
    let any_hard = spec
        .layers
        .iter()
        .any(|l| matches!(l.neuron.reset, ResetRule::HardZero));
    let node_of = |t: f64| (((t - a) / h).round() as usize).min(n);

    let project = |t: f64, y: &mut [f64]| -> bool {
        if !any_hard {
            return false;
        }
        let node = node_of(t);
        let mut rec = recorded.borrow_mut();
        let rec_row = &mut rec[node * row..(node + 1) * row];
        let mut changed = false;
        for (l, layer) in spec.layers.iter().enumerate() {
            if !matches!(layer.neuron.reset, ResetRule::HardZero) {
                continue;
            }
            let theta = layer.neuron.theta;
            let urange = layout.u_range(l);
            let srange = layout.spike_range(l);
            for (ui, si) in y[urange].iter_mut().zip(&mut rec_row[srange]) {
                if *ui - theta >= 0.0 {
                    *si = 1.0;
                    *ui = 0.0;
                    changed = true;
                } else {
                    *si = 0.0;
                }
            }
        }
        changed
    };

    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| {
        let node = node_of(t);
        let frame = input.frame(node.min(input.frames() - 1), b);
        let mut rec = recorded.borrow_mut();
        let rec_row = &mut rec[node * row..(node + 1) * row];
        eval_packed_dynamics(spec, layout, frame, y, act, any_hard, rec_row, dy);
        if bad_layer.get().is_none() {
            for l in 0..layout.num_layers() {
                if !dy[layout.u_range(l)].iter().all(|v| v.is_finite()) {
                    bad_layer.set(Some(l));
                    break;
                }
            }
        }
    };

    let y0 = vec![0.0; layout.packed_len()];
    let trajectory =
        solve_caputo_forward_projected(rhs, project, &y0, grid, &spec.alpha, opts).map_err(
            |e| match e {
                Error::Divergence {
                    step,
                    context: None,
                    detail,
                } => Error::Divergence {
                    step,
                    context: Some(match bad_layer.get() {
                        Some(l) => format!("network layer {l}"),
                        None => "packed network state".into(),
                    }),
                    detail,
                },
                other => other,
            },
        )?;
    Ok(SampleState {
        trajectory,
        spikes: recorded.into_inner(),
    })
}
