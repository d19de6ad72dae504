//! Spike encoding, IDX and CSV dataset ingestion, input corruptions for
//! robustness sweeps, and checkpoint persistence.
//!
//! All randomized operations take an explicit seed and are bit-reproducible.
//! File formats are strict: magic numbers, sizes, and offsets are verified
//! and any disagreement is reported with the byte offset of the problem.

use crate::error::{Error, Result};
use crate::fde::FractionalOrder;
use crate::network::{LayerSpec, NetworkSpec, SpikeTensor};
use crate::neuron::{NeuronModel, NeuronParams, ResetRule};
use crate::surrogate::{SurrogateKind, SurrogateSpec};
use crate::train::SpikeDataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
const IDX_LABEL_MAGIC: u32 = 0x0000_0801;
const CHECKPOINT_HEADER: &str = "FSPIKE-CHECKPOINT v1";

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

// ---------------------------------------------------------------------------
// Rate encoding
// ---------------------------------------------------------------------------

/// How analog intensities become binary spike trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    /// Each timestep fires independently with probability = intensity.
    Bernoulli,
    /// Rate coding: per-step firing with probability min(rate, 1).
    Poisson,
}

fn encode_rates(
    values: &[f64],
    batch: usize,
    dim: usize,
    t_steps: usize,
    seed: u64,
    what: &str,
) -> Result<SpikeTensor> {
    if values.len() != batch * dim {
        return Err(Error::DimensionMismatch(format!(
            "{what}: {} values for batch {batch} x dim {dim}",
            values.len()
        )));
    }
    if let Some(&bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "{what}: non-finite value {bad}"
        )));
    }
    let clamped = values.iter().filter(|&&v| !(0.0..=1.0).contains(&v)).count();
    if clamped > 0 {
        eprintln!("warning: {what}: clamped {clamped} value(s) outside [0, 1]");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = SpikeTensor::zeros(t_steps, batch, dim)?;
    for k in 0..t_steps {
        for b in 0..batch {
            let frame = out.frame_mut(k, b);
            let row = &values[b * dim..(b + 1) * dim];
            for (x, &v) in frame.iter_mut().zip(row) {
                if rng.gen_bool(v.clamp(0.0, 1.0)) {
                    *x = 1.0;
                }
            }
        }
    }
    Ok(out)
}

/// Sample a binary spike train where each timestep of each feature fires
/// independently with probability equal to the intensity (clamped to [0, 1]
/// with a warning). `intensities` is row-major `batch x dim`.
pub fn encode_bernoulli(
    intensities: &[f64],
    batch: usize,
    dim: usize,
    t_steps: usize,
    seed: u64,
) -> Result<SpikeTensor> {
    encode_rates(intensities, batch, dim, t_steps, seed, "encode_bernoulli")
}

/// Rate-coded spike train: per-step firing with probability `min(rate, 1)`.
/// Statistically identical to [`encode_bernoulli`] on rates already in
/// [0, 1]; kept separate because the clamping direction is part of the
/// contract for rates above 1.
pub fn encode_poisson(
    rates: &[f64],
    batch: usize,
    dim: usize,
    t_steps: usize,
    seed: u64,
) -> Result<SpikeTensor> {
    encode_rates(rates, batch, dim, t_steps, seed, "encode_poisson")
}

/// Encode a batch of analog feature vectors (values in [0, 1], row-major
/// `count x dim`) into a labelled spike dataset.
pub fn dataset_from_intensities(
    features: &[f64],
    labels: &[usize],
    num_classes: usize,
    dim: usize,
    t_steps: usize,
    seed: u64,
    encoding: Encoding,
) -> Result<SpikeDataset> {
    let batch = labels.len();
    let inputs = match encoding {
        Encoding::Bernoulli => encode_bernoulli(features, batch, dim, t_steps, seed)?,
        Encoding::Poisson => encode_poisson(features, batch, dim, t_steps, seed)?,
    };
    SpikeDataset::new(inputs, labels.to_vec(), num_classes)
}

// ---------------------------------------------------------------------------
// IDX files
// ---------------------------------------------------------------------------

/// Image stack loaded from an IDX file, pixels scaled to [0, 1] by /255.
/// `pixels` is row-major `count x (rows * cols)`.
#[derive(Debug, Clone, PartialEq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<f64>,
}

fn be_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::Format {
            offset: bytes.len() as u64,
            detail: format!("file truncated inside {what} (need {end} bytes)"),
        });
    }
    Ok(u32::from_be_bytes(bytes[offset..end].try_into().unwrap()))
}

fn check_payload(bytes: &[u8], header: usize, expected: usize, what: &str) -> Result<()> {
    let have = bytes.len() - header;
    if have < expected {
        return Err(Error::Format {
            offset: bytes.len() as u64,
            detail: format!("{what} payload truncated: expected {expected} bytes, found {have}"),
        });
    }
    if have > expected {
        return Err(Error::Format {
            offset: (header + expected) as u64,
            detail: format!("{what} has {} trailing bytes", have - expected),
        });
    }
    Ok(())
}

/// Parse an IDX image file: big-endian magic 0x00000803, three big-endian
/// u32 dimensions (count, rows, cols), then one unsigned byte per pixel.
pub fn load_idx_images(path: &Path) -> Result<IdxImages> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    parse_idx_images(&bytes)
}

/// [`load_idx_images`] on an in-memory byte buffer.
pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    let magic = be_u32(bytes, 0, "magic number")?;
    if magic != IDX_IMAGE_MAGIC {
        return Err(Error::Format {
            offset: 0,
            detail: format!("bad image magic {magic:#010x}, expected {IDX_IMAGE_MAGIC:#010x}"),
        });
    }
    let count = be_u32(bytes, 4, "image count")? as usize;
    let rows = be_u32(bytes, 8, "row count")? as usize;
    let cols = be_u32(bytes, 12, "column count")? as usize;
    check_payload(bytes, 16, count * rows * cols, "image")?;
    let pixels = bytes[16..].iter().map(|&b| f64::from(b) / 255.0).collect();
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels,
    })
}

/// Parse an IDX label file: big-endian magic 0x00000801, one big-endian u32
/// count, then one unsigned byte per label.
pub fn load_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    parse_idx_labels(&bytes)
}

/// [`load_idx_labels`] on an in-memory byte buffer.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0, "magic number")?;
    if magic != IDX_LABEL_MAGIC {
        return Err(Error::Format {
            offset: 0,
            detail: format!("bad label magic {magic:#010x}, expected {IDX_LABEL_MAGIC:#010x}"),
        });
    }
    let count = be_u32(bytes, 4, "label count")? as usize;
    check_payload(bytes, 8, count, "label")?;
    Ok(bytes[8..].to_vec())
}

/// Serialize an image stack (raw bytes, row-major `count x rows x cols`)
/// into the IDX format accepted by [`load_idx_images`].
pub fn write_idx_images(
    path: &Path,
    pixels: &[u8],
    count: usize,
    rows: usize,
    cols: usize,
) -> Result<()> {
    if pixels.len() != count * rows * cols {
        return Err(Error::DimensionMismatch(format!(
            "{} pixel bytes for {count} x {rows} x {cols} images",
            pixels.len()
        )));
    }
    let mut bytes = Vec::with_capacity(16 + pixels.len());
    bytes.extend_from_slice(&IDX_IMAGE_MAGIC.to_be_bytes());
    for d in [count, rows, cols] {
        bytes.extend_from_slice(&(d as u32).to_be_bytes());
    }
    bytes.extend_from_slice(pixels);
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

/// Serialize labels into the IDX format accepted by [`load_idx_labels`].
pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<()> {
    let mut bytes = Vec::with_capacity(8 + labels.len());
    bytes.extend_from_slice(&IDX_LABEL_MAGIC.to_be_bytes());
    bytes.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    bytes.extend_from_slice(labels);
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

// ---------------------------------------------------------------------------
// Input corruptions
// ---------------------------------------------------------------------------

/// A corruption applied to encoded inputs for robustness sweeps.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Corruption {
    /// Add N(0, sigma^2) noise to every entry (output is real-valued).
    Gaussian { sigma: f64 },
    /// Zero each entry independently with the given probability.
    Discard { probability: f64 },
    /// Zero a centered square covering `fraction` of the `rows x cols` grid.
    Occlusion {
        fraction: f64,
        rows: usize,
        cols: usize,
    },
}

/// Add independent N(0, sigma^2) noise to every entry. The result is
/// real-valued; the network accepts real input currents at the first layer.
/// `sigma = 0` returns the input bit-exactly.
pub fn inject_gaussian_noise(spikes: &SpikeTensor, sigma: f64, seed: u64) -> Result<SpikeTensor> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "noise level must be finite and >= 0, got {sigma}"
        )));
    }
    let mut out = spikes.clone();
    if sigma == 0.0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma)
        .map_err(|e| Error::InvalidArgument(format!("noise level {sigma}: {e}")))?;
    for x in out.data_mut() {
        *x += normal.sample(&mut rng);
    }
    Ok(out)
}

/// Zero each entry independently with probability `probability`.
pub fn discard_spikes(spikes: &SpikeTensor, probability: f64, seed: u64) -> Result<SpikeTensor> {
    if !(0.0..=1.0).contains(&probability) {
        return Err(Error::InvalidArgument(format!(
            "discard probability must lie in [0, 1], got {probability}"
        )));
    }
    let mut out = spikes.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for x in out.data_mut() {
        if rng.gen_bool(probability) {
            *x = 0.0;
        }
    }
    Ok(out)
}

/// Zero a centered square block covering approximately `fraction` of a
/// `rows x cols` feature grid (side = round(sqrt(fraction * rows * cols)),
/// capped at the grid). Deterministic — there is no random placement.
pub fn occlude_center(
    spikes: &SpikeTensor,
    fraction: f64,
    rows: usize,
    cols: usize,
) -> Result<SpikeTensor> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidArgument(format!(
            "occlusion fraction must lie in [0, 1], got {fraction}"
        )));
    }
    if rows * cols != spikes.dim() {
        return Err(Error::DimensionMismatch(format!(
            "grid {rows} x {cols} does not match feature dim {}",
            spikes.dim()
        )));
    }
    let side = ((fraction * (rows * cols) as f64).sqrt().round() as usize).min(rows.min(cols));
    let (r0, c0) = ((rows - side) / 2, (cols - side) / 2);
    let mut out = spikes.clone();
    for k in 0..out.frames() {
        for b in 0..out.batch() {
            let frame = out.frame_mut(k, b);
            for r in r0..r0 + side {
                frame[r * cols + c0..r * cols + c0 + side].fill(0.0);
            }
        }
    }
    Ok(out)
}

/// Apply one [`Corruption`]. Occlusion ignores the seed (it has no random
/// element); the parameter is uniform so sweeps can share one code path.
pub fn corrupt(spikes: &SpikeTensor, corruption: &Corruption, seed: u64) -> Result<SpikeTensor> {
    match *corruption {
        Corruption::Gaussian { sigma } => inject_gaussian_noise(spikes, sigma, seed),
        Corruption::Discard { probability } => discard_spikes(spikes, probability, seed),
        Corruption::Occlusion {
            fraction,
            rows,
            cols,
        } => occlude_center(spikes, fraction, rows, cols),
    }
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

fn reset_name(r: ResetRule) -> &'static str {
    match r {
        ResetRule::SoftSubtract => "soft",
        ResetRule::HardZero => "hard",
    }
}

fn model_name(m: NeuronModel) -> &'static str {
    match m {
        NeuronModel::Lif => "lif",
        NeuronModel::If => "if",
    }
}

fn surrogate_name(k: SurrogateKind) -> &'static str {
    match k {
        SurrogateKind::Sigmoid => "sigmoid",
        SurrogateKind::Arctan => "arctan",
        SurrogateKind::PiecewiseLinear => "piecewise_linear",
        SurrogateKind::Gaussian => "gaussian",
    }
}

/// Write a network to disk: a textual header (version, architecture
/// metadata, payload offsets) followed by the raw little-endian f64 weights
/// of each layer in order. Round-trips bit-exactly through
/// [`load_checkpoint`].
pub fn save_checkpoint(spec: &NetworkSpec, path: &Path) -> Result<()> {
    let mut header = String::new();
    let _ = writeln!(header, "{CHECKPOINT_HEADER}");
    let _ = writeln!(header, "alpha = {}", spec.alpha.get());
    let _ = writeln!(header, "layers = {}", spec.layers.len());
    let mut offset = 0usize;
    for (i, l) in spec.layers.iter().enumerate() {
        let _ = writeln!(
            header,
            "layer = {i} in = {} out = {} model = {} tau_alpha = {} r = {} theta = {} \
             reset = {} surrogate = {} scale = {} offset = {offset} count = {}",
            l.in_dim,
            l.out_dim,
            model_name(l.neuron.model),
            l.neuron.tau_alpha,
            l.neuron.r,
            l.neuron.theta,
            reset_name(l.neuron.reset),
            surrogate_name(l.surrogate.kind),
            l.surrogate.scale,
            l.w.len(),
        );
        offset += l.w.len() * 8;
    }
    let _ = writeln!(header, "DATA");
    let mut file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    file.write_all(header.as_bytes()).map_err(|e| io_err(path, e))?;
    let mut payload = Vec::with_capacity(offset);
    for l in &spec.layers {
        for &w in &l.w {
            payload.extend_from_slice(&w.to_le_bytes());
        }
    }
    file.write_all(&payload).map_err(|e| io_err(path, e))
}

struct HeaderCursor<'a> {
    rest: &'a [u8],
    offset: u64,
}

impl<'a> HeaderCursor<'a> {
    fn next_line(&mut self, what: &str) -> Result<(u64, &'a str)> {
        let nl = self.rest.iter().position(|&b| b == b'\n').ok_or(Error::Format {
            offset: self.offset + self.rest.len() as u64,
            detail: format!("header ended before {what}"),
        })?;
        let start = self.offset;
        let line = std::str::from_utf8(&self.rest[..nl]).map_err(|_| Error::Format {
            offset: start,
            detail: format!("{what} is not valid UTF-8"),
        })?;
        self.rest = &self.rest[nl + 1..];
        self.offset += nl as u64 + 1;
        Ok((start, line))
    }
}

/// One `key = value` pair from a header line, errors carrying `offset`.
fn field<'a>(
    parts: &mut impl Iterator<Item = &'a str>,
    key: &str,
    offset: u64,
) -> Result<&'a str> {
    let bad = |detail: String| Error::Format { offset, detail };
    match (parts.next(), parts.next(), parts.next()) {
        (Some(k), Some("="), Some(v)) if k == key => Ok(v),
        (Some(k), _, _) if k != key => Err(bad(format!("expected field '{key}', found '{k}'"))),
        _ => Err(bad(format!("malformed field '{key}'"))),
    }
}

fn parse_f64(s: &str, key: &str, offset: u64) -> Result<f64> {
    s.parse().map_err(|_| Error::Format {
        offset,
        detail: format!("field '{key}': '{s}' is not a number"),
    })
}

fn parse_usize(s: &str, key: &str, offset: u64) -> Result<usize> {
    s.parse().map_err(|_| Error::Format {
        offset,
        detail: format!("field '{key}': '{s}' is not a non-negative integer"),
    })
}

/// Read a checkpoint written by [`save_checkpoint`], validating the format
/// version, header consistency, payload offsets, and total size before
/// reconstructing the network.
pub fn load_checkpoint(path: &Path) -> Result<NetworkSpec> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    parse_checkpoint(&bytes)
}

/// [`load_checkpoint`] on an in-memory byte buffer.
pub fn parse_checkpoint(bytes: &[u8]) -> Result<NetworkSpec> {
    let mut cur = HeaderCursor {
        rest: bytes,
        offset: 0,
    };
    let (at, first) = cur.next_line("the version line")?;
    if first != CHECKPOINT_HEADER {
        return Err(Error::Format {
            offset: at,
            detail: format!("unrecognized header '{first}', expected '{CHECKPOINT_HEADER}'"),
        });
    }
    let (at, line) = cur.next_line("the alpha line")?;
    let alpha_raw = field(&mut line.split_whitespace(), "alpha", at)?;
    let alpha = FractionalOrder::new(parse_f64(alpha_raw, "alpha", at)?)?;
    let (at, line) = cur.next_line("the layer count")?;
    let num_layers = parse_usize(field(&mut line.split_whitespace(), "layers", at)?, "layers", at)?;

    struct LayerHeader {
        line_offset: u64,
        spec: LayerSpec,
        payload_offset: usize,
        count: usize,
    }
    let mut headers = Vec::with_capacity(num_layers);
    let mut expect_offset = 0usize;
    for i in 0..num_layers {
        let (at, line) = cur.next_line(&format!("layer {i} metadata"))?;
        let p = &mut line.split_whitespace();
        let bad = |detail: String| Error::Format { offset: at, detail };
        let index = parse_usize(field(p, "layer", at)?, "layer", at)?;
        if index != i {
            return Err(bad(format!("layer index {index}, expected {i}")));
        }
        let in_dim = parse_usize(field(p, "in", at)?, "in", at)?;
        let out_dim = parse_usize(field(p, "out", at)?, "out", at)?;
        let model = match field(p, "model", at)? {
            "lif" => NeuronModel::Lif,
            "if" => NeuronModel::If,
            other => return Err(bad(format!("unknown neuron model '{other}'"))),
        };
        let tau_alpha = parse_f64(field(p, "tau_alpha", at)?, "tau_alpha", at)?;
        let r = parse_f64(field(p, "r", at)?, "r", at)?;
        let theta = parse_f64(field(p, "theta", at)?, "theta", at)?;
        let reset = match field(p, "reset", at)? {
            "soft" => ResetRule::SoftSubtract,
            "hard" => ResetRule::HardZero,
            other => return Err(bad(format!("unknown reset rule '{other}'"))),
        };
        let kind = match field(p, "surrogate", at)? {
            "sigmoid" => SurrogateKind::Sigmoid,
            "arctan" => SurrogateKind::Arctan,
            "piecewise_linear" => SurrogateKind::PiecewiseLinear,
            "gaussian" => SurrogateKind::Gaussian,
            other => return Err(bad(format!("unknown surrogate '{other}'"))),
        };
        let scale = parse_f64(field(p, "scale", at)?, "scale", at)?;
        let payload_offset = parse_usize(field(p, "offset", at)?, "offset", at)?;
        let count = parse_usize(field(p, "count", at)?, "count", at)?;
        if let Some(extra) = p.next() {
            return Err(bad(format!("unexpected trailing token '{extra}'")));
        }
        if payload_offset != expect_offset {
            return Err(bad(format!(
                "layer {i} payload offset {payload_offset}, expected {expect_offset}"
            )));
        }
        if count != in_dim * out_dim {
            return Err(bad(format!(
                "layer {i} weight count {count} != in {in_dim} x out {out_dim}"
            )));
        }
        expect_offset += count * 8;
        let neuron = NeuronParams {
            alpha,
            tau_alpha,
            r,
            theta,
            reset,
            model,
        }
        .validated()?;
        let surrogate = SurrogateSpec::new(kind, scale)?;
        headers.push(LayerHeader {
            line_offset: at,
            spec: LayerSpec::zeros(in_dim, out_dim, neuron, surrogate)?,
            payload_offset,
            count,
        });
    }
    let (data_at, marker) = cur.next_line("the DATA marker")?;
    if marker != "DATA" {
        return Err(Error::Format {
            offset: data_at,
            detail: format!("expected DATA marker, found '{marker}'"),
        });
    }
    let payload = cur.rest;
    let payload_base = cur.offset;
    if payload.len() != expect_offset {
        // Name the first layer whose byte range the payload cannot satisfy.
        let culprit = headers
            .iter()
            .position(|h| h.payload_offset + h.count * 8 > payload.len())
            .unwrap_or(num_layers.saturating_sub(1));
        return Err(Error::Format {
            offset: payload_base + payload.len().min(expect_offset) as u64,
            detail: format!(
                "payload is {} bytes but the header promises {expect_offset} \
                 (first mismatch in layer {culprit})",
                payload.len()
            ),
        });
    }
    let mut layers = Vec::with_capacity(num_layers);
    for h in headers {
        let mut spec = h.spec;
        let bytes = &payload[h.payload_offset..h.payload_offset + h.count * 8];
        for (w, chunk) in spec.w.iter_mut().zip(bytes.chunks_exact(8)) {
            *w = f64::from_le_bytes(chunk.try_into().unwrap());
        }
        if let Some(bad) = spec.w.iter().find(|w| !w.is_finite()) {
            return Err(Error::Format {
                offset: h.line_offset,
                detail: format!("non-finite weight {bad} in payload"),
            });
        }
        layers.push(spec);
    }
    NetworkSpec::new(layers, alpha)
}

// ---------------------------------------------------------------------------
// CSV datasets
// ---------------------------------------------------------------------------

/// Analog dataset loaded from CSV: `features` is row-major `len x dim`,
/// labels come from the final column.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvDataset {
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
    pub dim: usize,
}

impl CsvDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Parse a dataset CSV: one header row, then one sample per line with the
/// integer class label in the final column.
pub fn load_csv_dataset(path: &Path) -> Result<CsvDataset> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_csv_dataset(&text)
}

/// [`load_csv_dataset`] on an in-memory string.
pub fn parse_csv_dataset(text: &str) -> Result<CsvDataset> {
    let mut lines = text.lines();
    let header = lines.next().ok_or(Error::Format {
        offset: 0,
        detail: "empty file (expected a header row)".into(),
    })?;
    let columns = header.split(',').count();
    if columns < 2 {
        return Err(Error::Format {
            offset: 0,
            detail: format!("header has {columns} column(s); need features plus a label"),
        });
    }
    let dim = columns - 1;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut offset = header.len() as u64 + 1;
    for line in lines {
        let at = offset;
        offset += line.len() as u64 + 1;
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != columns {
            return Err(Error::Format {
                offset: at,
                detail: format!("row has {} cells, header has {columns}", cells.len()),
            });
        }
        for cell in &cells[..dim] {
            let v: f64 = cell.trim().parse().map_err(|_| Error::Format {
                offset: at,
                detail: format!("feature cell '{cell}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Format {
                    offset: at,
                    detail: format!("non-finite feature {v}"),
                });
            }
            features.push(v);
        }
        let label_cell = cells[dim].trim();
        labels.push(label_cell.parse().map_err(|_| Error::Format {
            offset: at,
            detail: format!("label cell '{label_cell}' is not a non-negative integer"),
        })?);
    }
    if labels.is_empty() {
        return Err(Error::Format {
            offset,
            detail: "no data rows after the header".into(),
        });
    }
    Ok(CsvDataset {
        features,
        labels,
        dim,
    })
}

/// Write a dataset CSV in the layout read by [`load_csv_dataset`].
pub fn write_csv_dataset(
    path: &Path,
    features: &[f64],
    labels: &[usize],
    dim: usize,
) -> Result<()> {
    if features.len() != labels.len() * dim {
        return Err(Error::DimensionMismatch(format!(
            "{} features for {} labels x dim {dim}",
            features.len(),
            labels.len()
        )));
    }
    let mut text = String::new();
    for i in 0..dim {
        let _ = write!(text, "f{i},");
    }
    text.push_str("label\n");
    for (b, &label) in labels.iter().enumerate() {
        for v in &features[b * dim..(b + 1) * dim] {
            let _ = write!(text, "{v},");
        }
        let _ = writeln!(text, "{label}");
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

// ---------------------------------------------------------------------------
// Synthetic digit images
// ---------------------------------------------------------------------------

/// 8x12 stencils for the ten digits, rendered into 28x28 images with
/// translation jitter and pixel noise by [`generate_digit_images`].
const DIGIT_GLYPHS: [[&str; 12]; 10] = [
    [
        "..####..", ".#....#.", "#......#", "#......#", "#......#", "#......#", "#......#",
        "#......#", "#......#", "#......#", ".#....#.", "..####..",
    ],
    [
        "...##...", "..###...", ".#.##...", "...##...", "...##...", "...##...", "...##...",
        "...##...", "...##...", "...##...", ".######.", ".######.",
    ],
    [
        ".#####..", "#.....#.", "......#.", "......#.", ".....#..", "....#...", "...#....",
        "..#.....", ".#......", "#.......", "#.......", "########",
    ],
    [
        ".#####..", "#.....#.", "......#.", "......#.", "...###..", "...###..", "......#.",
        "......#.", "......#.", "......#.", "#.....#.", ".#####..",
    ],
    [
        "....##..", "...###..", "..#.##..", ".#..##..", "#...##..", "#...##..", "########",
        "....##..", "....##..", "....##..", "....##..", "....##..",
    ],
    [
        "########", "#.......", "#.......", "#.......", "######..", "......#.", ".......#",
        ".......#", ".......#", ".......#", "#.....#.", ".#####..",
    ],
    [
        "..####..", ".#......", "#.......", "#.......", "#.####..", "##....#.", "#......#",
        "#......#", "#......#", "#......#", ".#....#.", "..####..",
    ],
    [
        "########", ".......#", "......#.", "......#.", ".....#..", ".....#..", "....#...",
        "....#...", "...#....", "...#....", "..#.....", "..#.....",
    ],
    [
        "..####..", ".#....#.", "#......#", ".#....#.", "..####..", ".#....#.", "#......#",
        "#......#", "#......#", "#......#", ".#....#.", "..####..",
    ],
    [
        "..####..", ".#....#.", "#......#", "#......#", "#......#", ".#....##", "..####.#",
        ".......#", ".......#", ".......#", "......#.", ".####...",
    ],
];

pub const DIGIT_IMAGE_SIDE: usize = 28;

/// Generate `count` labelled 28x28 grayscale digit images (u8 pixels,
/// row-major). Each image is a 2x-upscaled glyph placed with +/-2 pixel
/// translation jitter, per-pixel brightness variation, occasional stroke
/// dropout, and sparse background speckle. Classes cycle 0..=9 so any
/// prefix is nearly balanced. Deterministic in `seed`.
pub fn generate_digit_images(count: usize, seed: u64) -> (Vec<u8>, Vec<u8>) {
    let side = DIGIT_IMAGE_SIDE;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pixels = vec![0u8; count * side * side];
    let mut labels = Vec::with_capacity(count);
    for (b, image) in pixels.chunks_mut(side * side).enumerate() {
        let class = b % 10;
        labels.push(class as u8);
        let glyph = &DIGIT_GLYPHS[class];
        // Glyph cells upscale 2x to 16 x 24; center it, then jitter.
        let row0 = (side as i64 - 24) / 2 + rng.gen_range(-2..=2);
        let col0 = (side as i64 - 16) / 2 + rng.gen_range(-2..=2);
        let brightness = rng.gen_range(0.6..=1.0);
        for (gr, row) in glyph.iter().enumerate() {
            for (gc, cell) in row.bytes().enumerate() {
                if cell != b'#' {
                    continue;
                }
                let mut value = (rng.gen_range(180.0..=255.0) * brightness) as u8;
                if rng.gen_bool(0.03) {
                    value /= 3;
                }
                for dr in 0..2 {
                    for dc in 0..2 {
                        let r = row0 + (2 * gr + dr) as i64;
                        let c = col0 + (2 * gc + dc) as i64;
                        if (0..side as i64).contains(&r) && (0..side as i64).contains(&c) {
                            image[r as usize * side + c as usize] = value;
                        }
                    }
                }
            }
        }
        for p in image.iter_mut() {
            if *p == 0 && rng.gen_bool(0.02) {
                *p = rng.gen_range(20..=90);
            }
        }
    }
    (pixels, labels)
}

/// The four standard file names of an IDX digit dataset under `dir`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxDatasetPaths {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
}

impl IdxDatasetPaths {
    pub fn under(dir: &Path) -> Self {
        Self {
            train_images: dir.join("train-images-idx3-ubyte"),
            train_labels: dir.join("train-labels-idx1-ubyte"),
            test_images: dir.join("t10k-images-idx3-ubyte"),
            test_labels: dir.join("t10k-labels-idx1-ubyte"),
        }
    }

    pub fn all_exist(&self) -> bool {
        [
            &self.train_images,
            &self.train_labels,
            &self.test_images,
            &self.test_labels,
        ]
        .iter()
        .all(|p| p.is_file())
    }
}

/// Ensure `dir` holds an IDX digit dataset with at least the requested
/// sample counts, generating synthetic digit images if the files are
/// missing. Existing files are left untouched.
pub fn ensure_digit_dataset(
    dir: &Path,
    train_count: usize,
    test_count: usize,
    seed: u64,
) -> Result<IdxDatasetPaths> {
    let paths = IdxDatasetPaths::under(dir);
    if paths.all_exist() {
        return Ok(paths);
    }
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let side = DIGIT_IMAGE_SIDE;
    let (train_pixels, train_labels) = generate_digit_images(train_count, seed);
    // Offset the test seed so train and test draws never overlap.
    let (test_pixels, test_labels) = generate_digit_images(test_count, seed ^ 0x5eed_0f_7e57);
    write_idx_images(&paths.train_images, &train_pixels, train_count, side, side)?;
    write_idx_labels(&paths.train_labels, &train_labels)?;
    write_idx_images(&paths.test_images, &test_pixels, test_count, side, side)?;
    write_idx_labels(&paths.test_labels, &test_labels)?;
    Ok(paths)
}

/// Load an IDX image/label pair, take the first `count` samples, and encode
/// them into a spike dataset with the given timestep count and seed.
pub fn load_idx_dataset(
    images: &Path,
    labels: &Path,
    count: usize,
    num_classes: usize,
    t_steps: usize,
    seed: u64,
    encoding: Encoding,
) -> Result<SpikeDataset> {
    let imgs = load_idx_images(images)?;
    let raw_labels = load_idx_labels(labels)?;
    if imgs.count != raw_labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} images but {} labels",
            imgs.count,
            raw_labels.len()
        )));
    }
    if count == 0 || count > imgs.count {
        return Err(Error::InvalidArgument(format!(
            "requested {count} samples, file holds {}",
            imgs.count
        )));
    }
    let dim = imgs.rows * imgs.cols;
    let features = &imgs.pixels[..count * dim];
    let labels: Vec<usize> = raw_labels[..count].iter().map(|&l| l as usize).collect();
    dataset_from_intensities(features, &labels, num_classes, dim, t_steps, seed, encoding)
}
