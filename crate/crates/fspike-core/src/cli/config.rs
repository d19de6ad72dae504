//! Run configuration: a single TOML document with flat sections per module,
//! merged with command-line flag overrides (flags win). Unknown keys are
//! rejected, and the merged effective configuration is echoed to the output
//! directory so any run can be reproduced from its artifacts.

use crate::data_io::{self, Encoding, IdxDatasetPaths};
use crate::error::{Error, Result};
use crate::fde::{FractionalOrder, SolverMethod, SolverOptions};
use crate::network::{LayerSpec, NetworkSpec};
use crate::neuron::{NeuronModel, NeuronParams, ResetRule};
use crate::surrogate::{SurrogateKind, SurrogateSpec};
use crate::train::{LossKind, OptimizerConfig, OptimizerKind, SpikeDataset, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

fn conf(field: &str, detail: impl std::fmt::Display) -> Error {
    Error::Config(format!("{field}: {detail}"))
}

/// Complete run description loaded from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub network: NetworkSection,
    pub train: TrainSection,
    #[serde(default)]
    pub solver: SolverSection,
    pub data: DataSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    /// Layer widths from input to output, e.g. [784, 128, 10].
    pub dims: Vec<usize>,
    pub alpha: f64,
    pub tau_alpha: f64,
    pub theta: f64,
    #[serde(default = "default_r")]
    pub r: f64,
    #[serde(default = "default_reset")]
    pub reset: String,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default = "default_surrogate")]
    pub surrogate: String,
    /// Sharpness of the surrogate; omitted = the family's default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surrogate_scale: Option<f64>,
    #[serde(default)]
    pub init_seed: u64,
}

fn default_r() -> f64 {
    1.0
}
fn default_reset() -> String {
    "soft".into()
}
fn default_model() -> String {
    "lif".into()
}
fn default_surrogate() -> String {
    "sigmoid".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    pub t_steps: usize,
    #[serde(default = "default_time_interval")]
    pub time_interval: f64,
    #[serde(default = "default_optimizer")]
    pub optimizer: String,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_loss")]
    pub loss: String,
    /// Target count for the mse loss; ignored by cross_entropy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mse_target: Option<f64>,
}

fn default_time_interval() -> f64 {
    1.0
}
fn default_optimizer() -> String {
    "adam".into()
}
fn default_learning_rate() -> f64 {
    1e-3
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_epsilon() -> f64 {
    1e-8
}
fn default_loss() -> String {
    "cross_entropy".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "default_method")]
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memory_window: Option<usize>,
}

fn default_method() -> String {
    "abm_predictor".into()
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            method: default_method(),
            memory_window: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// "idx": IDX files under `dir` (standard MNIST names) or explicit
    /// paths; "csv": `train_csv`/`test_csv`; "synthetic": digit images
    /// generated under `dir` on first use.
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_images: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_labels: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_images: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_labels: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_csv: Option<PathBuf>,
    pub train_count: usize,
    pub test_count: usize,
    #[serde(default = "default_classes")]
    pub num_classes: usize,
    #[serde(default = "default_encoding")]
    pub encoding: String,
    #[serde(default)]
    pub encode_seed: u64,
}

fn default_classes() -> usize {
    10
}
fn default_encoding() -> String {
    "bernoulli".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: default_out_dir(),
        }
    }
}

/// Flag-level overrides; every populated field replaces its config value.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Overrides {
    pub alpha: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub seed: Option<u64>,
    pub learning_rate: Option<f64>,
    pub t_steps: Option<usize>,
    pub method: Option<String>,
    pub memory_window: Option<usize>,
    pub data_dir: Option<PathBuf>,
    pub train_count: Option<usize>,
    pub test_count: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    /// Parse a TOML document, rejecting unknown keys with their field path.
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    /// Load from a file and apply flag overrides.
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut cfg = Self::from_toml(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.apply(overrides);
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.alpha {
            self.network.alpha = v;
        }
        if let Some(v) = o.epochs {
            self.train.epochs = v;
        }
        if let Some(v) = o.batch_size {
            self.train.batch_size = v;
        }
        if let Some(v) = o.seed {
            self.train.seed = v;
        }
        if let Some(v) = o.learning_rate {
            self.train.learning_rate = v;
        }
        if let Some(v) = o.t_steps {
            self.train.t_steps = v;
        }
        if let Some(ref v) = o.method {
            self.solver.method = v.clone();
        }
        if let Some(v) = o.memory_window {
            self.solver.memory_window = Some(v);
        }
        if let Some(ref v) = o.data_dir {
            self.data.dir = Some(v.clone());
        }
        if let Some(v) = o.train_count {
            self.data.train_count = v;
        }
        if let Some(v) = o.test_count {
            self.data.test_count = v;
        }
        if let Some(ref v) = o.out_dir {
            self.output.dir = v.clone();
        }
    }

    pub fn alpha(&self) -> Result<FractionalOrder> {
        FractionalOrder::new(self.network.alpha).map_err(|e| conf("network.alpha", e))
    }

    pub fn solver_options(&self) -> Result<SolverOptions> {
        let method = match self.solver.method.as_str() {
            "abm_predictor" => SolverMethod::AbmPredictor,
            "euler" => SolverMethod::Euler,
            other => {
                return Err(conf(
                    "solver.method",
                    format!("unknown method '{other}' (abm_predictor | euler)"),
                ))
            }
        };
        Ok(SolverOptions {
            method,
            memory_window: self.solver.memory_window,
        })
    }

    fn neuron_params(&self) -> Result<NeuronParams> {
        let model = match self.network.model.as_str() {
            "lif" => NeuronModel::Lif,
            "if" => NeuronModel::If,
            other => return Err(conf("network.model", format!("unknown model '{other}'"))),
        };
        let reset = match self.network.reset.as_str() {
            "soft" => ResetRule::SoftSubtract,
            "hard" => ResetRule::HardZero,
            other => return Err(conf("network.reset", format!("unknown reset '{other}'"))),
        };
        NeuronParams {
            alpha: self.alpha()?,
            tau_alpha: self.network.tau_alpha,
            r: self.network.r,
            theta: self.network.theta,
            reset,
            model,
        }
        .validated()
        .map_err(|e| conf("network", e))
    }

    fn surrogate_spec(&self) -> Result<SurrogateSpec> {
        let kind = match self.network.surrogate.as_str() {
            "sigmoid" => SurrogateKind::Sigmoid,
            "arctan" => SurrogateKind::Arctan,
            "piecewise_linear" => SurrogateKind::PiecewiseLinear,
            "gaussian" => SurrogateKind::Gaussian,
            other => {
                return Err(conf(
                    "network.surrogate",
                    format!("unknown surrogate '{other}'"),
                ))
            }
        };
        match self.network.surrogate_scale {
            Some(s) => SurrogateSpec::new(kind, s).map_err(|e| conf("network.surrogate_scale", e)),
            None => Ok(SurrogateSpec::with_default_scale(kind)),
        }
    }

    /// Build the network with weights initialized from `network.init_seed`.
    pub fn network_spec(&self) -> Result<NetworkSpec> {
        if self.network.dims.len() < 2 {
            return Err(conf(
                "network.dims",
                "need at least an input and an output width",
            ));
        }
        if *self.network.dims.last().unwrap() != self.data.num_classes {
            return Err(conf(
                "network.dims",
                format!(
                    "output width {} != data.num_classes {}",
                    self.network.dims.last().unwrap(),
                    self.data.num_classes
                ),
            ));
        }
        let neuron = self.neuron_params()?;
        let surrogate = self.surrogate_spec()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.network.init_seed);
        let layers = self
            .network
            .dims
            .windows(2)
            .map(|d| LayerSpec::random_uniform(d[0], d[1], neuron, surrogate, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        NetworkSpec::new(layers, self.alpha()?)
    }

    fn loss_kind(&self) -> Result<LossKind> {
        match self.train.loss.as_str() {
            "cross_entropy" => Ok(LossKind::CrossEntropyOnCounts),
            "mse" => {
                let target = self.train.mse_target.ok_or_else(|| {
                    conf("train.mse_target", "required when train.loss = \"mse\"")
                })?;
                Ok(LossKind::MseOnCounts { target })
            }
            other => Err(conf("train.loss", format!("unknown loss '{other}'"))),
        }
    }

    fn optimizer_config(&self) -> Result<OptimizerConfig> {
        let kind = match self.train.optimizer.as_str() {
            "sgd" => OptimizerKind::Sgd,
            "adam" => OptimizerKind::Adam,
            other => {
                return Err(conf(
                    "train.optimizer",
                    format!("unknown optimizer '{other}'"),
                ))
            }
        };
        Ok(OptimizerConfig {
            kind,
            learning_rate: self.train.learning_rate,
            beta1: self.train.beta1,
            beta2: self.train.beta2,
            epsilon: self.train.epsilon,
        })
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        TrainConfig {
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            optimizer: self.optimizer_config()?,
            loss: self.loss_kind()?,
            seed: self.train.seed,
            t_steps: self.train.t_steps,
            time_interval: self.train.time_interval,
            solver: self.solver_options()?,
            alpha: self.alpha()?,
        }
        .validated()
        .map_err(|e| conf("train", e))
    }

    fn encoding(&self) -> Result<Encoding> {
        match self.data.encoding.as_str() {
            "bernoulli" => Ok(Encoding::Bernoulli),
            "poisson" => Ok(Encoding::Poisson),
            other => Err(conf(
                "data.encoding",
                format!("unknown encoding '{other}'"),
            )),
        }
    }

    fn idx_paths(&self) -> Result<IdxDatasetPaths> {
        if let Some(ref dir) = self.data.dir {
            return Ok(IdxDatasetPaths::under(dir));
        }
        let need = |field: &str, v: &Option<PathBuf>| {
            v.clone()
                .ok_or_else(|| conf(field, "required when data.dir is not set"))
        };
        Ok(IdxDatasetPaths {
            train_images: need("data.train_images", &self.data.train_images)?,
            train_labels: need("data.train_labels", &self.data.train_labels)?,
            test_images: need("data.test_images", &self.data.test_images)?,
            test_labels: need("data.test_labels", &self.data.test_labels)?,
        })
    }

    fn csv_dataset(&self, path: &Path, count: usize, seed: u64) -> Result<SpikeDataset> {
        let csv = data_io::load_csv_dataset(path)?;
        if count == 0 || count > csv.len() {
            return Err(conf(
                "data",
                format!("requested {count} samples, {} holds {}", path.display(), csv.len()),
            ));
        }
        data_io::dataset_from_intensities(
            &csv.features[..count * csv.dim],
            &csv.labels[..count],
            self.data.num_classes,
            csv.dim,
            self.train.t_steps,
            seed,
            self.encoding()?,
        )
    }

    /// Load (or, for synthetic data, first generate) the train and test
    /// datasets described by the `[data]` section. Train and test encodings
    /// draw from different seed streams.
    pub fn load_datasets(&self) -> Result<(SpikeDataset, SpikeDataset)> {
        let seed = self.data.encode_seed;
        let test_seed = seed ^ 0x7e57_da7a;
        match self.data.kind.as_str() {
            "idx" | "synthetic" => {
                let paths = if self.data.kind == "synthetic" {
                    let dir = self.data.dir.as_ref().ok_or_else(|| {
                        conf("data.dir", "required for synthetic data")
                    })?;
                    data_io::ensure_digit_dataset(
                        dir,
                        self.data.train_count,
                        self.data.test_count,
                        seed,
                    )?
                } else {
                    self.idx_paths()?
                };
                let train = data_io::load_idx_dataset(
                    &paths.train_images,
                    &paths.train_labels,
                    self.data.train_count,
                    self.data.num_classes,
                    self.train.t_steps,
                    seed,
                    self.encoding()?,
                )?;
                let test = data_io::load_idx_dataset(
                    &paths.test_images,
                    &paths.test_labels,
                    self.data.test_count,
                    self.data.num_classes,
                    self.train.t_steps,
                    test_seed,
                    self.encoding()?,
                )?;
                Ok((train, test))
            }
            "csv" => {
                let train_path = self
                    .data
                    .train_csv
                    .clone()
                    .ok_or_else(|| conf("data.train_csv", "required for csv data"))?;
                let test_path = self
                    .data
                    .test_csv
                    .clone()
                    .ok_or_else(|| conf("data.test_csv", "required for csv data"))?;
                Ok((
                    self.csv_dataset(&train_path, self.data.train_count, seed)?,
                    self.csv_dataset(&test_path, self.data.test_count, test_seed)?,
                ))
            }
            other => Err(conf("data.kind", format!("unknown kind '{other}'"))),
        }
    }

    /// Serialize the merged configuration for the reproducibility echo.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}
