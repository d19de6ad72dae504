//! Post-hoc inference energy estimation from per-layer operation counts and
//! recorded firing rates, using fixed per-operation costs for 32-bit
//! floating-point arithmetic in a 45nm process.
//!
//! A spiking layer only accumulates when its input spikes, so its cost per
//! executed operation is one accumulate (`E_AC`); the designated first layer
//! receives analog input and pays full multiply-accumulates (`E_MAC`). The
//! per-layer estimate is `E_op * T * R * FL` with `T` timesteps, firing rate
//! `R`, and `FL` floating-point operations per inference.

use crate::error::{Error, Result};
use crate::network::NetworkSpec;
use serde::{Deserialize, Serialize};

/// Joules per multiply-accumulate in the reference 45nm process.
pub const E_MAC_JOULES: f64 = 4.6e-12;
/// Joules per accumulate in the reference 45nm process.
pub const E_AC_JOULES: f64 = 0.9e-12;

/// Per-operation energy costs plus the timestep count of the network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyModel {
    pub e_mac: f64,
    pub e_ac: f64,
    pub timesteps: usize,
}

impl EnergyModel {
    /// Reference 45nm costs with the given timestep count.
    pub fn with_timesteps(timesteps: usize) -> Self {
        Self {
            e_mac: E_MAC_JOULES,
            e_ac: E_AC_JOULES,
            timesteps,
        }
    }

    fn validated(self) -> Result<Self> {
        for (name, v) in [("e_mac", self.e_mac), ("e_ac", self.e_ac)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(self)
    }
}

/// Which arithmetic a layer performs per delivered input event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperationKind {
    /// Full multiply-accumulate (analog-input first layer).
    MultiplyAccumulate,
    /// Accumulate only (binary spike input).
    Accumulate,
}

/// One layer's contribution to the estimate: its operation kind, FLOP count
/// per inference, and recorded mean firing rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerActivity {
    pub kind: OperationKind,
    pub flops: f64,
    pub firing_rate: f64,
}

/// Estimate broken down by layer; `total` is the exact sum of `per_layer`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub per_layer: Vec<f64>,
    pub total: f64,
}

/// FLOPs of a dense layer per inference: one multiply and one add per
/// weight.
pub fn dense_flops(in_dim: usize, out_dim: usize) -> f64 {
    2.0 * in_dim as f64 * out_dim as f64
}

/// FLOPs of a square-kernel convolution per inference.
pub fn conv_flops(kernel: usize, c_in: usize, c_out: usize, h_out: usize, w_out: usize) -> f64 {
    2.0 * (kernel * kernel * c_in * c_out * h_out * w_out) as f64
}

/// Sum `E_op * T * R * FL` over the layers. Errors on rates outside [0, 1]
/// or non-positive FLOP counts.
pub fn estimate_energy(layers: &[LayerActivity], model: &EnergyModel) -> Result<EnergyReport> {
    let model = model.validated()?;
    let t = model.timesteps as f64;
    let mut per_layer = Vec::with_capacity(layers.len());
    let mut total = 0.0_f64;
    for (i, l) in layers.iter().enumerate() {
        if !(0.0..=1.0).contains(&l.firing_rate) {
            return Err(Error::InvalidArgument(format!(
                "layer {i}: firing rate must lie in [0, 1], got {}",
                l.firing_rate
            )));
        }
        if !(l.flops > 0.0) || !l.flops.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "layer {i}: flops must be positive and finite, got {}",
                l.flops
            )));
        }
        let e_op = match l.kind {
            OperationKind::MultiplyAccumulate => model.e_mac,
            OperationKind::Accumulate => model.e_ac,
        };
        let joules = e_op * t * l.firing_rate * l.flops;
        per_layer.push(joules);
        total += joules;
    }
    Ok(EnergyReport { per_layer, total })
}

/// Describe a dense network for [`estimate_energy`]: the first layer pays
/// multiply-accumulates (analog input), the rest accumulate spikes.
/// `firing_rates` is one recorded rate per layer.
pub fn dense_network_activity(
    spec: &NetworkSpec,
    firing_rates: &[f64],
) -> Result<Vec<LayerActivity>> {
    if firing_rates.len() != spec.layers.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} firing rates for {} layers",
            firing_rates.len(),
            spec.layers.len()
        )));
    }
    Ok(spec
        .layers
        .iter()
        .zip(firing_rates)
        .enumerate()
        .map(|(i, (l, &rate))| LayerActivity {
            kind: if i == 0 {
                OperationKind::MultiplyAccumulate
            } else {
                OperationKind::Accumulate
            },
            flops: dense_flops(l.in_dim, l.out_dim),
            firing_rate: rate,
        })
        .collect())
}
