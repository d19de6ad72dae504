//! Implementations of the subcommands. Each returns a machine-parseable
//! JSON summary that the dispatcher prints on success.

use super::config::RunConfig;
use super::plot::{parse_numeric_csv, render_line_chart};
use super::{
    EnergyArgs, EvalArgs, GradcheckArgs, PlotArgs, RobustnessArgs, SimulateNeuronArgs,
    SolveFdeArgs, TrainArgs,
};
use crate::data_io::{self, Corruption};
use crate::energy::{dense_network_activity, estimate_energy, EnergyModel};
use crate::error::{Error, Result};
use crate::fde::{
    gamma, mittag_leffler, solve_caputo_forward, FractionalOrder, SolverMethod, SolverOptions,
    TimeGrid,
};
use crate::network::{forward, LayerSpec, NetworkSpec, SpikeTensor};
use crate::neuron::{NeuronModel, NeuronParams, ResetRule};
use crate::surrogate::SurrogateSpec;
use crate::train::{self, SpikeDataset, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::{json, Value};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::Io {
                path: parent.to_path_buf(),
                source: e,
            })?;
        }
    }
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn parse_method(name: &str) -> Result<SolverMethod> {
    match name {
        "abm_predictor" => Ok(SolverMethod::AbmPredictor),
        "euler" => Ok(SolverMethod::Euler),
        other => Err(Error::InvalidArgument(format!(
            "unknown solver method '{other}' (abm_predictor | euler)"
        ))),
    }
}

/// Echo the merged configuration into the output directory so the run can
/// be reproduced from its artifacts alone.
fn echo_config(cfg: &RunConfig) -> Result<std::path::PathBuf> {
    let path = cfg.output.dir.join("config.effective.toml");
    write_text(&path, &cfg.to_toml())?;
    Ok(path)
}

// ---------------------------------------------------------------------------
// solve-fde
// ---------------------------------------------------------------------------

pub fn solve_fde(args: &SolveFdeArgs) -> Result<Value> {
    let alpha = FractionalOrder::new(args.alpha)?;
    let grid = TimeGrid::new(args.start, args.end, args.steps)?;
    let opts = SolverOptions {
        method: parse_method(&args.method)?,
        memory_window: args.memory_window,
    };
    let a = alpha.get();
    let (rhs, reference): (
        Box<dyn FnMut(f64, &[f64], &mut [f64])>,
        Box<dyn Fn(f64) -> Result<f64>>,
    ) = match args.rhs.as_str() {
        "decay" => (
            Box::new(|_t, y: &[f64], out: &mut [f64]| out[0] = -y[0]),
            Box::new(move |t: f64| {
                let z = -(t - args.start).powf(a);
                Ok(args.y0 * if t == args.start { 1.0 } else { mittag_leffler(&alpha, z)? })
            }),
        ),
        "drive" => {
            let c = args.coefficient;
            (
                Box::new(move |_t, _y: &[f64], out: &mut [f64]| out[0] = c),
                Box::new(move |t: f64| {
                    Ok(args.y0 + c * (t - args.start).powf(a) / gamma(a + 1.0))
                }),
            )
        }
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown rhs '{other}' (decay | drive)"
            )))
        }
    };
    let traj = solve_caputo_forward(rhs, &[args.y0], &grid, &alpha, &opts)?;
    let mut csv = String::from("t,y,reference,abs_error\n");
    let mut max_err = 0.0_f64;
    for k in 0..grid.points() {
        let t = grid.t(k);
        let y = traj.state(k)[0];
        let r = reference(t)?;
        let e = (y - r).abs();
        max_err = max_err.max(e);
        let _ = writeln!(csv, "{t},{y},{r},{e}");
    }
    write_text(&args.out, &csv)?;
    Ok(json!({
        "command": "solve-fde",
        "rhs": args.rhs,
        "alpha": args.alpha,
        "steps": args.steps,
        "max_abs_error": max_err,
        "output": args.out.display().to_string(),
    }))
}

// ---------------------------------------------------------------------------
// simulate-neuron
// ---------------------------------------------------------------------------

pub fn simulate_neuron(args: &SimulateNeuronArgs) -> Result<Value> {
    let alpha = FractionalOrder::new(args.alpha)?;
    let grid = TimeGrid::new(args.start, args.end, args.steps)?;
    let model = match args.model.as_str() {
        "lif" => NeuronModel::Lif,
        "if" => NeuronModel::If,
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown neuron model '{other}' (lif | if)"
            )))
        }
    };
    let reset = match args.reset.as_str() {
        "soft" => ResetRule::SoftSubtract,
        "hard" => ResetRule::HardZero,
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown reset '{other}' (soft | hard)"
            )))
        }
    };
    let params = NeuronParams {
        alpha,
        tau_alpha: args.tau,
        r: 1.0,
        theta: args.theta,
        reset,
        model,
    }
    .validated()?;
    let opts = SolverOptions {
        method: parse_method(&args.method)?,
        memory_window: args.memory_window,
    };

    // Drive signal, one value per grid step (zero-order hold).
    let mut drive = vec![0.0_f64; grid.steps()];
    match args.drive.as_str() {
        "constant" => drive.fill(args.level),
        "step" => {
            let half = args.start + (args.end - args.start) / 2.0;
            for (k, d) in drive.iter_mut().enumerate() {
                if grid.t(k) >= half {
                    *d = args.level;
                }
            }
        }
        "noisy" => {
            let normal = Normal::new(0.0, args.noise_sigma)
                .map_err(|e| Error::InvalidArgument(format!("noise sigma: {e}")))?;
            let mut rng = ChaCha8Rng::seed_from_u64(args.noise_seed);
            for d in drive.iter_mut() {
                *d = args.level + normal.sample(&mut rng);
            }
        }
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown drive '{other}' (constant | step | noisy)"
            )))
        }
    }

    // A single neuron is a one-layer network with a unit input weight.
    let layer = LayerSpec::new(1, 1, vec![1.0], params, SurrogateSpec::default())?;
    let spec = NetworkSpec::new(vec![layer], alpha)?;
    let input = SpikeTensor::from_vec(drive.clone(), grid.steps(), 1, 1)?;
    let state = forward(&spec, &input, &grid, &opts)?;

    let mut csv = String::from("t,input,membrane,spike\n");
    let mut spike_times = Vec::new();
    for k in 0..grid.points() {
        let t = grid.t(k);
        let u = state.membrane(0, 0, k)[0];
        let s = state.spikes(0, 0, k)[0];
        if s != 0.0 {
            spike_times.push(t);
        }
        let d = drive[k.min(grid.steps() - 1)];
        let _ = writeln!(csv, "{t},{d},{u},{s}");
    }
    write_text(&args.out, &csv)?;
    Ok(json!({
        "command": "simulate-neuron",
        "alpha": args.alpha,
        "drive": args.drive,
        "spike_count": spike_times.len(),
        "spike_times": spike_times,
        "final_membrane": state.membrane(0, 0, grid.steps())[0],
        "output": args.out.display().to_string(),
    }))
}

// ---------------------------------------------------------------------------
// train / eval
// ---------------------------------------------------------------------------

/// Per-class confusion counts (rows = actual, columns = predicted) plus
/// overall accuracy, evaluated in batches.
fn confusion_matrix(
    spec: &NetworkSpec,
    data: &SpikeDataset,
    cfg: &TrainConfig,
) -> Result<(Vec<usize>, f64)> {
    let grid = cfg.grid()?;
    let c = data.num_classes;
    let mut counts = vec![0usize; c * c];
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut correct = 0usize;
    for chunk in idx.chunks(cfg.batch_size) {
        let batch = data.inputs.select_samples(chunk)?;
        let st = forward(spec, &batch, &grid, &cfg.solver)?;
        for (pos, &i) in chunk.iter().enumerate() {
            let pred = st.predicted_class(pos);
            counts[data.labels[i] * c + pred] += 1;
            correct += usize::from(pred == data.labels[i]);
        }
    }
    Ok((counts, correct as f64 / data.len() as f64))
}

fn confusion_csv(counts: &[usize], num_classes: usize) -> String {
    let mut csv = String::from("actual");
    for p in 0..num_classes {
        let _ = write!(csv, ",pred_{p}");
    }
    csv.push('\n');
    for a in 0..num_classes {
        let _ = write!(csv, "{a}");
        for p in 0..num_classes {
            let _ = write!(csv, ",{}", counts[a * num_classes + p]);
        }
        csv.push('\n');
    }
    csv
}

pub fn train(args: &TrainArgs) -> Result<Value> {
    let cfg = RunConfig::load(&args.config, &args.overrides.to_overrides())?;
    let spec = cfg.network_spec()?;
    let tc = cfg.train_config()?;
    let (train_set, test_set) = cfg.load_datasets()?;
    if train_set.inputs.dim() != spec.in_dim() {
        return Err(Error::Config(format!(
            "network.dims: input width {} != data feature dim {}",
            spec.in_dim(),
            train_set.inputs.dim()
        )));
    }
    fs::create_dir_all(&cfg.output.dir).map_err(|e| Error::Io {
        path: cfg.output.dir.clone(),
        source: e,
    })?;
    let echoed = echo_config(&cfg)?;

    let (model, metrics) = train::train_loop(&spec, &train_set, Some(&test_set), &tc)?;

    // Line-delimited epoch records.
    let mut jsonl = String::new();
    for e in &metrics.epochs {
        let _ = writeln!(jsonl, "{}", serde_json::to_string(e).expect("metrics serialize"));
    }
    write_text(&cfg.output.dir.join("metrics.jsonl"), &jsonl)?;

    // Plot-friendly epoch curve.
    let mut curve = String::from("epoch,train_loss,train_accuracy,test_accuracy\n");
    for e in &metrics.epochs {
        let _ = writeln!(
            curve,
            "{},{},{},{}",
            e.epoch,
            e.train_loss,
            e.train_accuracy,
            e.test_accuracy.unwrap_or(f64::NAN)
        );
    }
    write_text(&cfg.output.dir.join("metrics.csv"), &curve)?;

    let ckpt = cfg.output.dir.join("model.ckpt");
    data_io::save_checkpoint(&model, &ckpt)?;

    let (counts, accuracy) = confusion_matrix(&model, &test_set, &tc)?;
    write_text(
        &cfg.output.dir.join("confusion.csv"),
        &confusion_csv(&counts, test_set.num_classes),
    )?;

    let summary = json!({
        "command": "train",
        "epochs": metrics.epochs.len(),
        "final_train_accuracy": metrics.final_train_accuracy(),
        "final_test_accuracy": accuracy,
        "checkpoint": ckpt.display().to_string(),
        "metrics": cfg.output.dir.join("metrics.jsonl").display().to_string(),
        "confusion": cfg.output.dir.join("confusion.csv").display().to_string(),
        "effective_config": echoed.display().to_string(),
    });
    write_text(
        &cfg.output.dir.join("summary.json"),
        &format!("{}\n", serde_json::to_string_pretty(&summary).expect("summary")),
    )?;
    Ok(summary)
}

pub fn eval(args: &EvalArgs) -> Result<Value> {
    let mut cfg = RunConfig::load(&args.config, &args.overrides.to_overrides())?;
    let spec = data_io::load_checkpoint(&args.checkpoint)?;
    // The checkpoint owns the model hyperparameters; keep the config's
    // solver/data sections but follow the stored order.
    cfg.network.alpha = spec.alpha.get();
    let tc = cfg.train_config()?;
    let (_, test_set) = cfg.load_datasets()?;
    if test_set.inputs.dim() != spec.in_dim() || test_set.num_classes != spec.out_dim() {
        return Err(Error::DimensionMismatch(format!(
            "checkpoint expects {} -> {}, dataset provides {} features / {} classes",
            spec.in_dim(),
            spec.out_dim(),
            test_set.inputs.dim(),
            test_set.num_classes
        )));
    }
    fs::create_dir_all(&cfg.output.dir).map_err(|e| Error::Io {
        path: cfg.output.dir.clone(),
        source: e,
    })?;
    let echoed = echo_config(&cfg)?;
    let (counts, accuracy) = confusion_matrix(&spec, &test_set, &tc)?;
    write_text(
        &cfg.output.dir.join("confusion.csv"),
        &confusion_csv(&counts, test_set.num_classes),
    )?;
    let summary = json!({
        "command": "eval",
        "checkpoint": args.checkpoint.display().to_string(),
        "samples": test_set.len(),
        "accuracy": accuracy,
        "confusion": cfg.output.dir.join("confusion.csv").display().to_string(),
        "effective_config": echoed.display().to_string(),
    });
    write_text(
        &cfg.output.dir.join("summary.json"),
        &format!("{}\n", serde_json::to_string_pretty(&summary).expect("summary")),
    )?;
    Ok(summary)
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

pub fn gradcheck(args: &GradcheckArgs) -> Result<Value> {
    let cfg = RunConfig::load(&args.config, &args.overrides.to_overrides())?;
    let spec = cfg.network_spec()?;
    let tc = cfg.train_config()?;
    let dim = spec.in_dim();
    let sample = data_io::encode_bernoulli(
        &vec![0.5; dim],
        1,
        dim,
        tc.t_steps,
        args.sample_seed,
    )?;
    let report = train::gradcheck(&spec, &sample, args.label, &tc, args.epsilon)?;
    let summary = json!({
        "command": "gradcheck",
        "max_rel_error": report.max_rel_error,
        "mean_rel_error": report.mean_rel_error,
        "worst_layer": report.worst_layer,
        "worst_index": report.worst_index,
        "params_checked": report.params_checked,
        "threshold": args.threshold,
    });
    if report.max_rel_error > args.threshold {
        println!("{summary}");
        return Err(Error::Precision(format!(
            "gradient check failed: max relative error {} exceeds threshold {}",
            report.max_rel_error, args.threshold
        )));
    }
    Ok(summary)
}

// ---------------------------------------------------------------------------
// robustness
// ---------------------------------------------------------------------------

pub fn robustness(args: &RobustnessArgs) -> Result<Value> {
    let mut cfg = RunConfig::load(&args.config, &args.overrides.to_overrides())?;
    let spec = data_io::load_checkpoint(&args.checkpoint)?;
    cfg.network.alpha = spec.alpha.get();
    let tc = cfg.train_config()?;
    let (_, test_set) = cfg.load_datasets()?;
    if args.levels.is_empty() {
        return Err(Error::InvalidArgument("no corruption levels given".into()));
    }
    let dim = test_set.inputs.dim();
    let side = (dim as f64).sqrt().round() as usize;
    let make = |level: f64| -> Result<Corruption> {
        match args.corruption.as_str() {
            "gaussian" => Ok(Corruption::Gaussian { sigma: level }),
            "discard" => Ok(Corruption::Discard { probability: level }),
            "occlusion" => {
                if side * side != dim {
                    return Err(Error::InvalidArgument(format!(
                        "occlusion needs a square feature grid, dim {dim} is not a square"
                    )));
                }
                Ok(Corruption::Occlusion {
                    fraction: level,
                    rows: side,
                    cols: side,
                })
            }
            other => Err(Error::InvalidArgument(format!(
                "unknown corruption '{other}' (gaussian | discard | occlusion)"
            ))),
        }
    };
    fs::create_dir_all(&cfg.output.dir).map_err(|e| Error::Io {
        path: cfg.output.dir.clone(),
        source: e,
    })?;
    let echoed = echo_config(&cfg)?;
    let mut csv = String::from("level,accuracy\n");
    let mut pairs = Vec::new();
    for &level in &args.levels {
        // One seed for every level: matched corruption draws across the sweep.
        let corrupted = data_io::corrupt(&test_set.inputs, &make(level)?, args.corruption_seed)?;
        let noisy = SpikeDataset::new(corrupted, test_set.labels.clone(), test_set.num_classes)?;
        let accuracy = train::evaluate(&spec, &noisy, &tc)?;
        let _ = writeln!(csv, "{level},{accuracy}");
        pairs.push(json!({ "level": level, "accuracy": accuracy }));
    }
    let out = cfg.output.dir.join("robustness.csv");
    write_text(&out, &csv)?;
    let summary = json!({
        "command": "robustness",
        "corruption": args.corruption,
        "checkpoint": args.checkpoint.display().to_string(),
        "sweep": pairs,
        "output": out.display().to_string(),
        "effective_config": echoed.display().to_string(),
    });
    write_text(
        &cfg.output.dir.join("summary.json"),
        &format!("{}\n", serde_json::to_string_pretty(&summary).expect("summary")),
    )?;
    Ok(summary)
}

// ---------------------------------------------------------------------------
// energy
// ---------------------------------------------------------------------------

pub fn energy(args: &EnergyArgs) -> Result<Value> {
    let spec = data_io::load_checkpoint(&args.checkpoint)?;
    let activity = dense_network_activity(&spec, &args.rates)?;
    let report = estimate_energy(&activity, &EnergyModel::with_timesteps(args.timesteps))?;
    if let Some(ref out) = args.out {
        let mut csv = String::from("layer,flops,firing_rate,joules\n");
        for (i, (act, joules)) in activity.iter().zip(&report.per_layer).enumerate() {
            let _ = writeln!(csv, "{i},{},{},{joules}", act.flops, act.firing_rate);
        }
        write_text(out, &csv)?;
    }
    Ok(json!({
        "command": "energy",
        "checkpoint": args.checkpoint.display().to_string(),
        "timesteps": args.timesteps,
        "per_layer_joules": report.per_layer,
        "total_joules": report.total,
        "output": args.out.as_ref().map(|p| p.display().to_string()),
    }))
}

// ---------------------------------------------------------------------------
// plot
// ---------------------------------------------------------------------------

pub fn plot(args: &PlotArgs) -> Result<Value> {
    let text = read_text(&args.input)?;
    let csv = parse_numeric_csv(&text)?;
    let title = match args.title {
        Some(ref t) => t.clone(),
        None => args
            .input
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "chart".into()),
    };
    let y: Option<Vec<String>> = args.y.clone();
    let svg = render_line_chart(&csv, args.x.as_deref(), y.as_deref(), &title)?;
    write_text(&args.out, &svg)?;
    Ok(json!({
        "command": "plot",
        "input": args.input.display().to_string(),
        "rows": csv.rows(),
        "series": csv.headers.len() - 1,
        "output": args.out.display().to_string(),
    }))
}
