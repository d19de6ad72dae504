//! Losses, optimizers, the batched training loop, evaluation, and the
//! finite-difference gradient-check harness.

use crate::adjoint::{backward, GradientSet};
use crate::error::{Error, Result};
use crate::fde::{FractionalOrder, SolverOptions, TimeGrid};
use crate::network::{
    forward, forward_with_activation, NetworkSpec, NetworkState, SpikeActivation, SpikeTensor,
};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Loss on the terminal spike counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LossKind {
    /// Softmax over the counts, then mean negative log-likelihood.
    CrossEntropyOnCounts,
    /// Mean squared error against `target` times the one-hot label vector.
    MseOnCounts { target: f64 },
}

/// Mean loss over the batch and its gradient w.r.t. every count.
///
/// `counts` is row-major `batch x num_classes`; the returned gradient has
/// the same shape and already carries the `1/batch` factor of the mean.
pub fn loss_and_grad(
    kind: LossKind,
    counts: &[f64],
    labels: &[usize],
    num_classes: usize,
) -> Result<(f64, Vec<f64>)> {
    if num_classes == 0 {
        return Err(Error::InvalidArgument("num_classes must be positive".into()));
    }
    let batch = labels.len();
    if batch == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if counts.len() != batch * num_classes {
        return Err(Error::DimensionMismatch(format!(
            "counts length {} != batch {batch} x classes {num_classes}",
            counts.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
        return Err(Error::InvalidArgument(format!(
            "label {bad} out of range for {num_classes} classes"
        )));
    }
    let inv_b = 1.0 / batch as f64;
    let mut grad = vec![0.0_f64; counts.len()];
    let mut loss = 0.0_f64;
    match kind {
        LossKind::CrossEntropyOnCounts => {
            for (b, &label) in labels.iter().enumerate() {
                let row = &counts[b * num_classes..(b + 1) * num_classes];
                let g = &mut grad[b * num_classes..(b + 1) * num_classes];
                let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for (gi, &c) in g.iter_mut().zip(row) {
                    *gi = (c - m).exp();
                    z += *gi;
                }
                loss += (z.ln() + m - row[label]) * inv_b;
                for gi in g.iter_mut() {
                    *gi *= inv_b / z;
                }
                g[label] -= inv_b;
            }
        }
        LossKind::MseOnCounts { target } => {
            for (b, &label) in labels.iter().enumerate() {
                let row = &counts[b * num_classes..(b + 1) * num_classes];
                let g = &mut grad[b * num_classes..(b + 1) * num_classes];
                for (i, (gi, &c)) in g.iter_mut().zip(row).enumerate() {
                    let want = if i == label { target } else { 0.0 };
                    let d = c - want;
                    loss += d * d * inv_b;
                    *gi = 2.0 * d * inv_b;
                }
            }
        }
    }
    Ok((loss, grad))
}

/// Stochastic optimizer choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// Optimizer hyperparameters; defaults follow the common Adam setting
/// (lr 1e-3, betas (0.9, 0.999), epsilon 1e-8).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Adam,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn sgd(learning_rate: f64) -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            learning_rate,
            ..Self::default()
        }
    }

    pub fn adam(learning_rate: f64) -> Self {
        Self {
            kind: OptimizerKind::Adam,
            learning_rate,
            ..Self::default()
        }
    }

    fn validated(self) -> Result<Self> {
        // Zero is allowed deliberately: it freezes the weights, which makes
        // dry runs and determinism checks cheap.
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must lie in [0, 1), got {v}"
                )));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        Ok(self)
    }
}

/// Optimizer with its per-parameter state (Adam moments).
#[derive(Debug, Clone)]
pub struct Optimizer {
    cfg: OptimizerConfig,
    step_count: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(cfg: OptimizerConfig, spec: &NetworkSpec) -> Result<Self> {
        let cfg = cfg.validated()?;
        let shapes: Vec<usize> = spec.layers.iter().map(|l| l.w.len()).collect();
        let zeros = || shapes.iter().map(|&n| vec![0.0; n]).collect::<Vec<_>>();
        Ok(Self {
            cfg,
            step_count: 0,
            m: zeros(),
            v: zeros(),
        })
    }

    /// Apply one update in place. SGD moves each weight by exactly
    /// `-learning_rate * gradient`.
    pub fn step(&mut self, spec: &mut NetworkSpec, grads: &GradientSet) -> Result<()> {
        if grads.num_layers() != spec.layers.len() {
            return Err(Error::DimensionMismatch(format!(
                "gradient has {} layers, network has {}",
                grads.num_layers(),
                spec.layers.len()
            )));
        }
        let lr = self.cfg.learning_rate;
        match self.cfg.kind {
            OptimizerKind::Sgd => {
                for (layer, g) in spec.layers.iter_mut().zip((0..).map(|l| grads.layer(l))) {
                    for (w, gi) in layer.w.iter_mut().zip(g) {
                        *w -= lr * gi;
                    }
                }
            }
            OptimizerKind::Adam => {
                self.step_count += 1;
                let (b1, b2, eps) = (self.cfg.beta1, self.cfg.beta2, self.cfg.epsilon);
                let c1 = 1.0 - b1.powi(self.step_count as i32);
                let c2 = 1.0 - b2.powi(self.step_count as i32);
                for (l, layer) in spec.layers.iter_mut().enumerate() {
                    let g = grads.layer(l);
                    let (ml, vl) = (&mut self.m[l], &mut self.v[l]);
                    for i in 0..layer.w.len() {
                        ml[i] = b1 * ml[i] + (1.0 - b1) * g[i];
                        vl[i] = b2 * vl[i] + (1.0 - b2) * g[i] * g[i];
                        let m_hat = ml[i] / c1;
                        let v_hat = vl[i] / c2;
                        layer.w[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}

/// A labelled spike dataset: one tensor holding every sample's spike train
/// plus the class index per sample.
#[derive(Debug, Clone)]
pub struct SpikeDataset {
    pub inputs: SpikeTensor,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl SpikeDataset {
    pub fn new(inputs: SpikeTensor, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if labels.len() != inputs.batch() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {} samples",
                labels.len(),
                inputs.batch()
            )));
        }
        if num_classes == 0 {
            return Err(Error::InvalidArgument("num_classes must be positive".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(Self {
            inputs,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Everything the training loop needs besides the network and the data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub loss: LossKind,
    pub seed: u64,
    /// Number of spike timesteps (grid steps and input frames).
    pub t_steps: usize,
    /// Spacing between grid points.
    pub time_interval: f64,
    pub solver: SolverOptions,
    pub alpha: FractionalOrder,
}

impl TrainConfig {
    pub fn validated(self) -> Result<Self> {
        if self.t_steps == 0 {
            return Err(Error::InvalidArgument("t_steps must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
        }
        if !(self.time_interval > 0.0) || !self.time_interval.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "time_interval must be positive, got {}",
                self.time_interval
            )));
        }
        self.optimizer.validated()?;
        self.solver.validate(&self.alpha, &self.grid()?)?;
        Ok(self)
    }

    /// The integration grid `[0, t_steps * time_interval]` with `t_steps`
    /// steps, so each input frame spans one step.
    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(0.0, self.t_steps as f64 * self.time_interval, self.t_steps)
    }
}

/// Per-epoch observations. Wall-clock and memory are environmental; every
/// other field is a deterministic function of the seed and inputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
    pub wall_clock_seconds: f64,
    pub peak_rss_bytes: Option<u64>,
    /// Mean firing rate per layer: spikes / (t_steps * neurons * samples),
    /// counted over nodes 1..=t_steps of each training forward pass.
    pub firing_rates: Vec<f64>,
}

/// Full training record, one entry per epoch.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunMetrics {
    pub epochs: Vec<EpochMetrics>,
}

impl RunMetrics {
    pub fn final_test_accuracy(&self) -> Option<f64> {
        self.epochs.last().and_then(|e| e.test_accuracy)
    }

    pub fn final_train_accuracy(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.train_accuracy)
    }
}

/// Peak resident set size of this process in bytes, read from the kernel's
/// high-water mark (`VmHWM`); `None` where unavailable.
pub fn peak_rss_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    for line in status.lines() {
        if let Some(rest) = line.strip_prefix("VmHWM:") {
            let kb: u64 = rest.trim().trim_end_matches("kB").trim().parse().ok()?;
            return Some(kb * 1024);
        }
    }
    None
}

fn flat_counts(st: &NetworkState) -> Vec<f64> {
    let mut out = Vec::with_capacity(st.batch() * st.final_counts(0).len());
    for b in 0..st.batch() {
        out.extend_from_slice(st.final_counts(b));
    }
    out
}

fn check_dataset(spec: &NetworkSpec, data: &SpikeDataset, cfg: &TrainConfig) -> Result<()> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("dataset is empty".into()));
    }
    if data.inputs.dim() != spec.in_dim() {
        return Err(Error::DimensionMismatch(format!(
            "dataset feature dim {} != network input dim {}",
            data.inputs.dim(),
            spec.in_dim()
        )));
    }
    if data.num_classes != spec.out_dim() {
        return Err(Error::DimensionMismatch(format!(
            "dataset has {} classes, network outputs {}",
            data.num_classes,
            spec.out_dim()
        )));
    }
    if data.inputs.frames() != cfg.t_steps {
        return Err(Error::DimensionMismatch(format!(
            "dataset has {} frames, config expects t_steps = {}",
            data.inputs.frames(),
            cfg.t_steps
        )));
    }
    Ok(())
}

/// Fraction of samples whose argmax terminal count equals the label,
/// evaluated in batches of `cfg.batch_size`.
pub fn evaluate(spec: &NetworkSpec, data: &SpikeDataset, cfg: &TrainConfig) -> Result<f64> {
    let cfg = cfg.validated()?;
    check_dataset(spec, data, &cfg)?;
    let grid = cfg.grid()?;
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut correct = 0usize;
    for chunk in idx.chunks(cfg.batch_size) {
        let batch = data.inputs.select_samples(chunk)?;
        let st = forward(spec, &batch, &grid, &cfg.solver)?;
        for (pos, &i) in chunk.iter().enumerate() {
            if st.predicted_class(pos) == data.labels[i] {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Mini-batch gradient descent: per epoch, shuffle (seeded), then for each
/// batch run forward, loss, adjoint backward, and one optimizer step.
/// Returns the trained network and per-epoch metrics. Deterministic for a
/// fixed config: shuffling derives from `cfg.seed`, batch reductions are
/// ordered, and sample integrations are independent.
pub fn train_loop(
    spec: &NetworkSpec,
    train: &SpikeDataset,
    test: Option<&SpikeDataset>,
    cfg: &TrainConfig,
) -> Result<(NetworkSpec, RunMetrics)> {
    let cfg = cfg.validated()?;
    check_dataset(spec, train, &cfg)?;
    if let Some(t) = test {
        check_dataset(spec, t, &cfg)?;
    }
    if spec.alpha.get() != cfg.alpha.get() {
        return Err(Error::InvalidArgument(format!(
            "config order {} != network order {}",
            cfg.alpha.get(),
            spec.alpha.get()
        )));
    }
    let grid = cfg.grid()?;
    let mut model = spec.clone();
    let mut optimizer = Optimizer::new(cfg.optimizer, &model)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut metrics = RunMetrics::default();
    let num_layers = model.layers.len();

    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0_f64;
        let mut correct = 0usize;
        let mut spike_sums = vec![0.0_f64; num_layers];

        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch_input = train.inputs.select_samples(chunk)?;
            let st = forward(&model, &batch_input, &grid, &cfg.solver)?;
            let counts = flat_counts(&st);
            let labels: Vec<usize> = chunk.iter().map(|&i| train.labels[i]).collect();
            let (loss, dcounts) =
                loss_and_grad(cfg.loss, &counts, &labels, train.num_classes)?;
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    step: batch_idx,
                    context: Some(format!("epoch {epoch}, batch {batch_idx}")),
                    detail: format!("non-finite training loss {loss}"),
                });
            }
            for (pos, &label) in labels.iter().enumerate() {
                if st.predicted_class(pos) == label {
                    correct += 1;
                }
            }
            for (l, sum) in spike_sums.iter_mut().enumerate() {
                for b in 0..st.batch() {
                    for k in 1..=cfg.t_steps {
                        *sum += st.spikes(b, l, k).iter().sum::<f64>();
                    }
                }
            }
            let grads = backward(&model, &st, &dcounts, &grid, &cfg.solver)?;
            optimizer.step(&mut model, &grads)?;
            loss_sum += loss * chunk.len() as f64;
        }

        let firing_rates: Vec<f64> = spike_sums
            .iter()
            .enumerate()
            .map(|(l, s)| {
                s / (cfg.t_steps as f64 * model.layers[l].out_dim as f64 * train.len() as f64)
            })
            .collect();
        let test_accuracy = match test {
            Some(t) => Some(evaluate(&model, t, &cfg)?),
            None => None,
        };
        metrics.epochs.push(EpochMetrics {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            train_accuracy: correct as f64 / train.len() as f64,
            test_accuracy,
            wall_clock_seconds: started.elapsed().as_secs_f64(),
            peak_rss_bytes: peak_rss_bytes(),
            firing_rates,
        });
    }
    Ok((model, metrics))
}

/// Result of [`gradcheck`]: the worst and mean relative disagreement between
/// the adjoint gradient and central finite differences over every weight.
/// Relative error uses `|a - f| / max(|a|, |f|, 1e-8)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub max_rel_error: f64,
    pub mean_rel_error: f64,
    pub worst_layer: usize,
    pub worst_index: usize,
    pub params_checked: usize,
}

/// Validate the adjoint gradients against central finite differences on one
/// sample, with the smooth spike activation replacing the Heaviside step so
/// the finite differences are meaningful. Intended for small networks; the
/// cost is two forward passes per weight.
pub fn gradcheck(
    spec: &NetworkSpec,
    sample: &SpikeTensor,
    label: usize,
    cfg: &TrainConfig,
    epsilon: f64,
) -> Result<GradcheckReport> {
    let cfg = cfg.validated()?;
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "perturbation must be positive, got {epsilon}"
        )));
    }
    if sample.batch() != 1 {
        return Err(Error::InvalidArgument(format!(
            "gradcheck takes a single sample, got batch {}",
            sample.batch()
        )));
    }
    if sample.frames() != cfg.t_steps || sample.dim() != spec.in_dim() {
        return Err(Error::DimensionMismatch(format!(
            "sample shape {} x {} does not match t_steps {} / input dim {}",
            sample.frames(),
            sample.dim(),
            cfg.t_steps,
            spec.in_dim()
        )));
    }
    if spec.num_params() >= 5000 {
        return Err(Error::InvalidArgument(format!(
            "gradcheck is quadratic-cost; refusing {} parameters (limit 5000)",
            spec.num_params()
        )));
    }
    if label >= spec.out_dim() {
        return Err(Error::InvalidArgument(format!(
            "label {label} out of range for {} outputs",
            spec.out_dim()
        )));
    }
    let grid = cfg.grid()?;
    let labels = [label];

    let run_loss = |s: &NetworkSpec| -> Result<f64> {
        let st = forward_with_activation(s, sample, &grid, &cfg.solver, SpikeActivation::Smooth)?;
        Ok(loss_and_grad(cfg.loss, &flat_counts(&st), &labels, s.out_dim())?.0)
    };

    let st = forward_with_activation(spec, sample, &grid, &cfg.solver, SpikeActivation::Smooth)?;
    let (_, dcounts) = loss_and_grad(cfg.loss, &flat_counts(&st), &labels, spec.out_dim())?;
    let grads = backward(spec, &st, &dcounts, &grid, &cfg.solver)?;

    let mut report = GradcheckReport {
        max_rel_error: 0.0,
        mean_rel_error: 0.0,
        worst_layer: 0,
        worst_index: 0,
        params_checked: 0,
    };
    let mut err_sum = 0.0_f64;
    let mut probe = spec.clone();
    for l in 0..spec.layers.len() {
        for i in 0..spec.layers[l].w.len() {
            let w0 = spec.layers[l].w[i];
            probe.layers[l].w[i] = w0 + epsilon;
            let up = run_loss(&probe)?;
            probe.layers[l].w[i] = w0 - epsilon;
            let down = run_loss(&probe)?;
            probe.layers[l].w[i] = w0;
            let fd = (up - down) / (2.0 * epsilon);
            let adj = grads.layer(l)[i];
            let rel = (adj - fd).abs() / adj.abs().max(fd.abs()).max(1e-8);
            err_sum += rel;
            report.params_checked += 1;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst_layer = l;
                report.worst_index = i;
            }
        }
    }
    report.mean_rel_error = err_sum / report.params_checked.max(1) as f64;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::LayerSpec;
    use crate::neuron::NeuronParams;
    use crate::surrogate::SurrogateSpec;
    use rand::Rng;

    fn order(a: f64) -> FractionalOrder {
        FractionalOrder::new(a).unwrap()
    }

    fn lif(a: f64, tau: f64, theta: f64) -> NeuronParams {
        NeuronParams::lif(order(a), tau, theta).unwrap()
    }

    fn sg() -> SurrogateSpec {
        SurrogateSpec::default()
    }

    fn cfg(alpha: f64, t_steps: usize) -> TrainConfig {
        TrainConfig {
            epochs: 1,
            batch_size: 8,
            optimizer: OptimizerConfig::default(),
            loss: LossKind::CrossEntropyOnCounts,
            seed: 0,
            t_steps,
            time_interval: 0.5,
            solver: SolverOptions::default(),
            alpha: order(alpha),
        }
    }

    fn random_net(dims: &[usize], a: f64, seed: u64) -> NetworkSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = dims
            .windows(2)
            .map(|d| {
                LayerSpec::random_uniform(d[0], d[1], lif(a, 2.0, 1.0), sg(), &mut rng).unwrap()
            })
            .collect();
        NetworkSpec::new(layers, order(a)).unwrap()
    }

    /// Two-class rate-coded dataset: class 0 drives the first half of the
    /// input channels at a high rate, class 1 the second half.
    fn separable_dataset(
        samples_per_class: usize,
        t_steps: usize,
        dim: usize,
        seed: u64,
    ) -> SpikeDataset {
        let n = 2 * samples_per_class;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut inputs = SpikeTensor::zeros(t_steps, n, dim).unwrap();
        let mut labels = Vec::with_capacity(n);
        for b in 0..n {
            let class = b % 2;
            labels.push(class);
            for k in 0..t_steps {
                let frame = inputs.frame_mut(k, b);
                for (i, x) in frame.iter_mut().enumerate() {
                    let hot = (i < dim / 2) == (class == 0);
                    let rate = if hot { 0.9 } else { 0.05 };
                    *x = if rng.gen_bool(rate) { 1.0 } else { 0.0 };
                }
            }
        }
        SpikeDataset::new(inputs, labels, 2).unwrap()
    }

    #[test]
    fn cross_entropy_on_uniform_counts_is_log_c() {
        for c in [2usize, 5, 10] {
            let counts = vec![3.7; c * 2];
            let (loss, grad) =
                loss_and_grad(LossKind::CrossEntropyOnCounts, &counts, &[0, 1], c).unwrap();
            assert!((loss - (c as f64).ln()).abs() < 1e-12, "C = {c}: {loss}");
            // Gradient rows sum to zero (softmax identity).
            for b in 0..2 {
                let s: f64 = grad[b * c..(b + 1) * c].iter().sum();
                assert!(s.abs() < 1e-15);
            }
        }
    }

    #[test]
    fn cross_entropy_gradient_signs_follow_the_label() {
        let counts = vec![5.0, 1.0, 0.5];
        let (_, grad) = loss_and_grad(LossKind::CrossEntropyOnCounts, &counts, &[0], 3).unwrap();
        assert!(grad[0] < 0.0, "true class pushes up");
        assert!(grad[1] > 0.0 && grad[2] > 0.0, "others push down");
        assert!((grad.iter().sum::<f64>()).abs() < 1e-15);
    }

    #[test]
    fn mse_is_exactly_zero_on_a_perfect_one_hot() {
        let target = 8.0;
        let counts = vec![target, 0.0, 0.0, 0.0];
        let (loss, grad) =
            loss_and_grad(LossKind::MseOnCounts { target }, &counts, &[0], 4).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn loss_rejects_bad_labels_and_shapes() {
        assert!(loss_and_grad(LossKind::CrossEntropyOnCounts, &[1.0, 2.0], &[2], 2).is_err());
        assert!(loss_and_grad(LossKind::CrossEntropyOnCounts, &[1.0], &[0], 2).is_err());
    }

    #[test]
    fn finite_difference_validates_both_losses() {
        let counts = vec![2.0, -1.0, 0.5, 0.3, 4.0, 1.0];
        let labels = [1usize, 2];
        for kind in [
            LossKind::CrossEntropyOnCounts,
            LossKind::MseOnCounts { target: 3.0 },
        ] {
            let (_, grad) = loss_and_grad(kind, &counts, &labels, 3).unwrap();
            let eps = 1e-6;
            for i in 0..counts.len() {
                let mut up = counts.clone();
                up[i] += eps;
                let mut dn = counts.clone();
                dn[i] -= eps;
                let lu = loss_and_grad(kind, &up, &labels, 3).unwrap().0;
                let ld = loss_and_grad(kind, &dn, &labels, 3).unwrap().0;
                let fd = (lu - ld) / (2.0 * eps);
                assert!((fd - grad[i]).abs() < 1e-8, "{kind:?} slot {i}");
            }
        }
    }

    #[test]
    fn sgd_step_is_exactly_minus_rate_times_gradient() {
        let mut spec = random_net(&[3, 2], 1.0, 1);
        let before = spec.clone();
        let mut grads = GradientSet::zeros_like(&spec);
        for (i, g) in grads.layer_mut(0).iter_mut().enumerate() {
            *g = 0.25 * (i as f64 + 1.0);
        }
        let mut opt = Optimizer::new(OptimizerConfig::sgd(0.125), &spec).unwrap();
        opt.step(&mut spec, &grads).unwrap();
        for i in 0..before.layers[0].w.len() {
            let want = before.layers[0].w[i] - 0.125 * 0.25 * (i as f64 + 1.0);
            assert_eq!(spec.layers[0].w[i], want);
        }
    }

    #[test]
    fn adam_first_step_moves_weights_by_learning_rate() {
        // With bias correction the first Adam step is -lr * g/(|g| + eps'),
        // i.e. close to -lr * sign(g).
        let mut spec = random_net(&[2, 2], 1.0, 2);
        let before = spec.clone();
        let mut grads = GradientSet::zeros_like(&spec);
        grads.layer_mut(0).copy_from_slice(&[0.5, -2.0, 1e-3, 0.0]);
        let mut opt = Optimizer::new(OptimizerConfig::adam(0.1), &spec).unwrap();
        opt.step(&mut spec, &grads).unwrap();
        let d: Vec<f64> = spec.layers[0]
            .w
            .iter()
            .zip(&before.layers[0].w)
            .map(|(a, b)| a - b)
            .collect();
        assert!((d[0] + 0.1).abs() < 1e-6);
        assert!((d[1] - 0.1).abs() < 1e-6);
        assert!(d[2] < 0.0 && d[2].abs() < 0.1 + 1e-9);
        assert_eq!(d[3], 0.0);
    }

    #[test]
    fn hand_set_weights_solve_the_separable_problem_perfectly() {
        // Verifies the dataset is actually separable before testing learning.
        let t_steps = 8;
        let data = separable_dataset(16, t_steps, 4, 3);
        let w = vec![
            2.0, 2.0, 0.0, 0.0, // neuron 0 listens to class-0 channels
            0.0, 0.0, 2.0, 2.0, // neuron 1 listens to class-1 channels
        ];
        let layer = LayerSpec::new(4, 2, w, lif(1.0, 2.0, 1.0), sg()).unwrap();
        let spec = NetworkSpec::new(vec![layer], order(1.0)).unwrap();
        let acc = evaluate(&spec, &data, &cfg(1.0, t_steps)).unwrap();
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn training_learns_the_separable_problem() {
        let t_steps = 8;
        let train = separable_dataset(32, t_steps, 4, 4);
        let test = separable_dataset(16, t_steps, 4, 5);
        let spec = random_net(&[4, 2], 1.0, 6);
        let mut c = cfg(1.0, t_steps);
        c.epochs = 30;
        c.batch_size = 16;
        c.optimizer = OptimizerConfig::adam(0.02);
        let (_, metrics) = train_loop(&spec, &train, Some(&test), &c).unwrap();
        let final_train = metrics.final_train_accuracy().unwrap();
        assert!(final_train >= 0.95, "train accuracy {final_train}");
        assert!(
            metrics.epochs[9].train_loss < metrics.epochs[0].train_loss,
            "loss should drop: {} -> {}",
            metrics.epochs[0].train_loss,
            metrics.epochs[9].train_loss
        );
        for e in &metrics.epochs {
            assert!(e.train_accuracy >= 0.0 && e.train_accuracy <= 1.0);
            let t = e.test_accuracy.unwrap();
            assert!((0.0..=1.0).contains(&t));
            for &r in &e.firing_rates {
                assert!((0.0..=1.0).contains(&r), "firing rate {r}");
            }
        }
    }

    #[test]
    fn zero_learning_rate_leaves_weights_bit_identical() {
        let t_steps = 4;
        let train = separable_dataset(8, t_steps, 4, 7);
        let spec = random_net(&[4, 2], 0.8, 8);
        let mut c = cfg(0.8, t_steps);
        c.epochs = 2;
        c.optimizer = OptimizerConfig::adam(0.0);
        let (model, _) = train_loop(&spec, &train, None, &c).unwrap();
        for l in 0..spec.layers.len() {
            assert_eq!(spec.layers[l].w, model.layers[l].w);
        }
    }

    #[test]
    fn identical_configs_reproduce_identical_runs() {
        let t_steps = 6;
        let train = separable_dataset(12, t_steps, 4, 9);
        let spec = random_net(&[4, 2], 0.7, 10);
        let mut c = cfg(0.7, t_steps);
        c.epochs = 3;
        c.optimizer = OptimizerConfig::adam(0.01);
        let (m1, r1) = train_loop(&spec, &train, None, &c).unwrap();
        let (m2, r2) = train_loop(&spec, &train, None, &c).unwrap();
        for l in 0..m1.layers.len() {
            assert_eq!(m1.layers[l].w, m2.layers[l].w);
        }
        for (a, b) in r1.epochs.iter().zip(&r2.epochs) {
            assert_eq!(a.train_loss.to_bits(), b.train_loss.to_bits());
            assert_eq!(a.train_accuracy, b.train_accuracy);
            assert_eq!(a.firing_rates, b.firing_rates);
        }
    }

    #[test]
    fn divergent_weights_abort_with_location() {
        let t_steps = 4;
        let train = separable_dataset(4, t_steps, 4, 11);
        let mut spec = random_net(&[4, 2], 1.0, 12);
        spec.layers[0].w.fill(1e308);
        let c = cfg(1.0, t_steps);
        let err = train_loop(&spec, &train, None, &c).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }), "{err}");
    }

    #[test]
    fn gradcheck_passes_on_a_smooth_toy_network() {
        let t_steps = 8;
        let spec = random_net(&[4, 8, 2], 0.8, 13);
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let mut sample = SpikeTensor::zeros(t_steps, 1, 4).unwrap();
        for v in sample.data_mut() {
            *v = if rng.gen_bool(0.5) { 1.0 } else { 0.0 };
        }
        let report = gradcheck(&spec, &sample, 1, &cfg(0.8, t_steps), 1e-4).unwrap();
        assert!(
            report.max_rel_error < 1e-3,
            "max rel err {} at layer {} index {}",
            report.max_rel_error,
            report.worst_layer,
            report.worst_index
        );
        assert_eq!(report.params_checked, 4 * 8 + 8 * 2);
    }

    #[test]
    fn gradcheck_stays_small_when_counts_hit_the_mse_target_exactly() {
        // One output neuron; set the MSE target to the achieved count so the
        // loss gradient vanishes. The adjoint gradient is exactly zero and
        // the central difference only sees its O(epsilon^2) curvature term,
        // so the floored relative error must stay far below the usual bound.
        let t_steps = 4;
        let layer = LayerSpec::new(1, 1, vec![3.0], lif(1.0, 1.0, 0.5), sg()).unwrap();
        let spec = NetworkSpec::new(vec![layer], order(1.0)).unwrap();
        let mut sample = SpikeTensor::zeros(t_steps, 1, 1).unwrap();
        sample.data_mut().fill(1.0);
        let mut c = cfg(1.0, t_steps);
        let grid = c.grid().unwrap();
        let st = forward_with_activation(
            &spec,
            &sample,
            &grid,
            &c.solver,
            SpikeActivation::Smooth,
        )
        .unwrap();
        let achieved = st.final_counts(0)[0];
        c.loss = LossKind::MseOnCounts { target: achieved };
        let report = gradcheck(&spec, &sample, 0, &c, 1e-4).unwrap();
        assert!(report.max_rel_error < 1e-3, "{}", report.max_rel_error);
    }

    #[test]
    fn gradcheck_rejects_oversized_networks() {
        let spec = random_net(&[100, 100], 1.0, 15);
        let sample = SpikeTensor::zeros(4, 1, 100).unwrap();
        assert!(matches!(
            gradcheck(&spec, &sample, 0, &cfg(1.0, 4), 1e-4),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn config_validation_rejects_nonsense() {
        let mut c = cfg(0.5, 0);
        assert!(c.validated().is_err());
        c.t_steps = 4;
        c.batch_size = 0;
        assert!(c.validated().is_err());
        c.batch_size = 8;
        c.time_interval = -1.0;
        assert!(c.validated().is_err());
        c.time_interval = 0.5;
        c.optimizer.learning_rate = -0.1;
        assert!(c.validated().is_err());
        c.optimizer.learning_rate = 1e-3;
        assert!(c.validated().is_ok());
    }

    #[test]
    fn peak_rss_reports_something_plausible_on_linux() {
        if let Some(b) = peak_rss_bytes() {
            assert!(b > 1 << 20, "suspiciously small RSS: {b}");
        }
    }
}
