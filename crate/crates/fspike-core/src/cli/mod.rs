//! Command-line interface: argument parsing, dispatch, exit codes.
//!
//! Every command prints a one-line JSON summary on success. Failures print a
//! JSON error record to stderr (`{"error": {"kind", "message", "exit_code"}}`)
//! and map to process exit codes: 1 for usage/config errors, 2 for numerical
//! failures, 3 for I/O and format errors.

pub mod commands;
pub mod config;
pub mod plot;

use crate::error::Error;
use clap::{Args, Parser, Subcommand};
use config::Overrides;
use std::ffi::OsString;
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(
    name = "fspike",
    version,
    about = "Fractional-order spiking neural networks: solve, train, evaluate"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate a scalar fractional differential equation and compare
    /// against its closed-form solution
    SolveFde(SolveFdeArgs),
    /// Simulate a single spiking neuron under a configurable drive signal
    SimulateNeuron(SimulateNeuronArgs),
    /// Train a network from a TOML configuration
    Train(TrainArgs),
    /// Evaluate a saved checkpoint on the test split
    Eval(EvalArgs),
    /// Compare analytic gradients against finite differences
    Gradcheck(GradcheckArgs),
    /// Sweep input corruptions against a saved checkpoint
    Robustness(RobustnessArgs),
    /// Estimate inference energy for a saved checkpoint
    Energy(EnergyArgs),
    /// Render a CSV file as an SVG line chart
    Plot(PlotArgs),
}

/// Flags that override values from the configuration file. Flags win.
#[derive(Debug, Clone, Default, Args)]
pub struct OverrideArgs {
    /// Fractional order of the whole model, 0 < alpha <= 1
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Number of training epochs
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Minibatch size
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Seed for shuffling and encoding
    #[arg(long)]
    pub seed: Option<u64>,
    /// Optimizer learning rate
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Number of simulation time steps per sample
    #[arg(long)]
    pub t_steps: Option<usize>,
    /// Solver method: abm_predictor | euler
    #[arg(long)]
    pub method: Option<String>,
    /// Short-memory window length in steps (omit for full history)
    #[arg(long)]
    pub memory_window: Option<usize>,
    /// Directory holding (or receiving) the dataset files
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Number of training samples to load or generate
    #[arg(long)]
    pub train_count: Option<usize>,
    /// Number of test samples to load or generate
    #[arg(long)]
    pub test_count: Option<usize>,
    /// Directory receiving run artifacts
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

impl OverrideArgs {
    pub fn to_overrides(&self) -> Overrides {
        Overrides {
            alpha: self.alpha,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            learning_rate: self.learning_rate,
            t_steps: self.t_steps,
            method: self.method.clone(),
            memory_window: self.memory_window,
            data_dir: self.data_dir.clone(),
            train_count: self.train_count,
            test_count: self.test_count,
            out_dir: self.out_dir.clone(),
        }
    }
}

#[derive(Debug, Args)]
pub struct SolveFdeArgs {
    /// Fractional order, 0 < alpha <= 1
    #[arg(long)]
    pub alpha: f64,
    /// Right-hand side: decay (D^a y = -y) | drive (D^a y = c)
    #[arg(long, default_value = "decay")]
    pub rhs: String,
    /// Initial value y(start)
    #[arg(long, default_value_t = 1.0)]
    pub y0: f64,
    /// Constant c for the drive right-hand side
    #[arg(long, default_value_t = 1.0)]
    pub coefficient: f64,
    /// Left end of the time interval
    #[arg(long, default_value_t = 0.0)]
    pub start: f64,
    /// Right end of the time interval
    #[arg(long, default_value_t = 1.0)]
    pub end: f64,
    /// Number of uniform steps
    #[arg(long, default_value_t = 200)]
    pub steps: usize,
    /// Solver method: abm_predictor | euler
    #[arg(long, default_value = "abm_predictor")]
    pub method: String,
    /// Short-memory window length in steps (omit for full history)
    #[arg(long)]
    pub memory_window: Option<usize>,
    /// Output CSV path (t, y, reference, abs_error)
    #[arg(long, default_value = "solution.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateNeuronArgs {
    /// Fractional order, 0 < alpha <= 1
    #[arg(long)]
    pub alpha: f64,
    /// Membrane time constant raised to alpha
    #[arg(long, default_value_t = 2.0)]
    pub tau: f64,
    /// Firing threshold
    #[arg(long, default_value_t = 1.0)]
    pub theta: f64,
    /// Membrane model: lif | if
    #[arg(long, default_value = "lif")]
    pub model: String,
    /// Reset rule after a spike: soft | hard
    #[arg(long, default_value = "soft")]
    pub reset: String,
    /// Drive shape: constant | step | noisy
    #[arg(long, default_value = "constant")]
    pub drive: String,
    /// Drive amplitude
    #[arg(long, default_value_t = 1.5)]
    pub level: f64,
    /// Standard deviation of the noisy drive
    #[arg(long, default_value_t = 0.1)]
    pub noise_sigma: f64,
    /// Seed for the noisy drive
    #[arg(long, default_value_t = 0)]
    pub noise_seed: u64,
    /// Left end of the time interval
    #[arg(long, default_value_t = 0.0)]
    pub start: f64,
    /// Right end of the time interval
    #[arg(long, default_value_t = 20.0)]
    pub end: f64,
    /// Number of uniform steps
    #[arg(long, default_value_t = 400)]
    pub steps: usize,
    /// Solver method: abm_predictor | euler
    #[arg(long, default_value = "abm_predictor")]
    pub method: String,
    /// Short-memory window length in steps (omit for full history)
    #[arg(long)]
    pub memory_window: Option<usize>,
    /// Output CSV path (t, input, membrane, spike)
    #[arg(long, default_value = "neuron.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// TOML run configuration
    #[arg(long)]
    pub config: PathBuf,
    #[command(flatten)]
    pub overrides: OverrideArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// TOML run configuration (provides the data and solver sections)
    #[arg(long)]
    pub config: PathBuf,
    /// Trained model checkpoint
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub overrides: OverrideArgs,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// TOML run configuration describing the network to check
    #[arg(long)]
    pub config: PathBuf,
    /// Class label of the probe sample
    #[arg(long, default_value_t = 0)]
    pub label: usize,
    /// Seed for the random probe sample
    #[arg(long, default_value_t = 7)]
    pub sample_seed: u64,
    /// Finite-difference step size
    #[arg(long, default_value_t = 1e-4)]
    pub epsilon: f64,
    /// Maximum acceptable relative error
    #[arg(long, default_value_t = 1e-3)]
    pub threshold: f64,
    #[command(flatten)]
    pub overrides: OverrideArgs,
}

#[derive(Debug, Args)]
pub struct RobustnessArgs {
    /// TOML run configuration (provides the data and solver sections)
    #[arg(long)]
    pub config: PathBuf,
    /// Trained model checkpoint
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Corruption family: gaussian | discard | occlusion
    #[arg(long)]
    pub corruption: String,
    /// Comma-separated corruption levels to sweep
    #[arg(long, value_delimiter = ',', required = true)]
    pub levels: Vec<f64>,
    /// Seed shared by every level so draws are matched across the sweep
    #[arg(long, default_value_t = 0)]
    pub corruption_seed: u64,
    #[command(flatten)]
    pub overrides: OverrideArgs,
}

#[derive(Debug, Args)]
pub struct EnergyArgs {
    /// Trained model checkpoint
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Comma-separated per-layer firing rates in [0, 1]
    #[arg(long, value_delimiter = ',', required = true)]
    pub rates: Vec<f64>,
    /// Simulation time steps per inference
    #[arg(long, default_value_t = 16)]
    pub timesteps: usize,
    /// Optional CSV path for the per-layer breakdown
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Input CSV with a header row and numeric columns
    #[arg(long)]
    pub input: PathBuf,
    /// Output SVG path
    #[arg(long, default_value = "chart.svg")]
    pub out: PathBuf,
    /// Column used for the x axis (default: first column)
    #[arg(long)]
    pub x: Option<String>,
    /// Comma-separated columns to draw (default: every other column)
    #[arg(long, value_delimiter = ',')]
    pub y: Option<Vec<String>>,
    /// Chart title (default: input file stem)
    #[arg(long)]
    pub title: Option<String>,
}

/// Honor FSPIKE_THREADS by sizing the global worker pool before any
/// parallel work runs. Silently keeps the default when unset or invalid,
/// and when a pool already exists (tests call `run` repeatedly).
fn configure_threads() {
    if let Ok(v) = std::env::var("FSPIKE_THREADS") {
        if let Ok(n) = v.trim().parse::<usize>() {
            if n > 0 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

fn print_error(err: &Error) {
    let record = serde_json::json!({
        "error": {
            "kind": err.kind(),
            "message": err.to_string(),
            "exit_code": err.exit_code(),
        }
    });
    eprintln!("{record}");
}

/// Parse arguments, run the selected command, and return the process exit
/// code. Kept separate from `main` so integration tests can drive it.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    configure_threads();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            eprint!("{e}");
            print_error(&Error::InvalidArgument(format!(
                "argument parsing failed: {}",
                e.kind()
            )));
            return 1;
        }
    };
    let result = match &cli.command {
        Command::SolveFde(a) => commands::solve_fde(a),
        Command::SimulateNeuron(a) => commands::simulate_neuron(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
        Command::Robustness(a) => commands::robustness(a),
        Command::Energy(a) => commands::energy(a),
        Command::Plot(a) => commands::plot(a),
    };
    match result {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            print_error(&e);
            e.exit_code()
        }
    }
}
