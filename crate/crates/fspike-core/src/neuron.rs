//! Leaky / non-leaky integrate-and-fire membrane dynamics of fractional
//! order, spike generation, and reset rules.
//!
//! The membrane potential of a layer obeys the order-`a` Caputo equation
//!
//! ```text
//! tau_a * D^a U = -U + R I_in - theta S_out     (lif, soft_subtract)
//! ```
//!
//! The leak `-U` is dropped for the `if_` model, and the `-theta S_out`
//! term is dropped when the reset is `hard_zero` (the reset then acts as a
//! post-step projection `U <- U (1 - S_out)` instead). Under constant
//! current and no spiking, the closed-form solution is
//! `U(t) = R I + (U0 - R I) E_a(-t^a / tau_a)`, which [`relaxation_curve`]
//! evaluates as the analytic oracle for the solver-integrated neuron.

use crate::error::{Error, Result};
use crate::fde::{mittag_leffler, FractionalOrder, TimeGrid, Trajectory};
use serde::{Deserialize, Serialize};

/// What happens to the membrane potential when the neuron fires.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResetRule {
    /// Subtract the threshold, folded into the dynamics as `-theta S_out`.
    SoftSubtract,
    /// Zero the potential after each step as a state projection.
    HardZero,
}

/// Membrane model: leaky or non-leaky integrate-and-fire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NeuronModel {
    #[serde(rename = "lif")]
    Lif,
    #[serde(rename = "if_", alias = "if")]
    If,
}

/// Per-layer neuron constants. `tau_alpha` carries units of time^a so the
/// fractional equation is dimensionally consistent; `r` is the membrane
/// resistance (1 by convention).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeuronParams {
    pub alpha: FractionalOrder,
    pub tau_alpha: f64,
    #[serde(default = "default_resistance")]
    pub r: f64,
    pub theta: f64,
    #[serde(default = "default_reset")]
    pub reset: ResetRule,
    #[serde(default = "default_model")]
    pub model: NeuronModel,
}

fn default_resistance() -> f64 {
    1.0
}
fn default_reset() -> ResetRule {
    ResetRule::SoftSubtract
}
fn default_model() -> NeuronModel {
    NeuronModel::Lif
}

impl NeuronParams {
    /// Soft-reset LIF neuron with unit resistance.
    pub fn lif(alpha: FractionalOrder, tau_alpha: f64, theta: f64) -> Result<Self> {
        Self {
            alpha,
            tau_alpha,
            r: 1.0,
            theta,
            reset: ResetRule::SoftSubtract,
            model: NeuronModel::Lif,
        }
        .validated()
    }

    /// Soft-reset IF neuron (no leak) with unit resistance.
    pub fn if_(alpha: FractionalOrder, tau_alpha: f64, theta: f64) -> Result<Self> {
        Self {
            model: NeuronModel::If,
            ..Self::lif(alpha, tau_alpha, theta)?
        }
        .validated()
    }

    /// Validate the invariants `tau_alpha > 0`, `theta > 0`, `r` finite.
    /// `theta = +inf` is allowed: it models a non-spiking diagnostic neuron.
    pub fn validated(self) -> Result<Self> {
        if !(self.tau_alpha > 0.0 && self.tau_alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "tau_alpha must be positive and finite, got {}",
                self.tau_alpha
            )));
        }
        if !(self.theta > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "theta must be positive, got {}",
                self.theta
            )));
        }
        if !self.r.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "membrane resistance must be finite, got {}",
                self.r
            )));
        }
        Ok(self)
    }
}

/// Snapshot of a layer: membrane potentials and the binary spike vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeState {
    pub u: Vec<f64>,
    pub s_out: Vec<f64>,
}

impl SpikeState {
    /// Build a state, checking that the spike vector is exactly binary and
    /// the dimensions agree.
    pub fn new(u: Vec<f64>, s_out: Vec<f64>) -> Result<Self> {
        if u.len() != s_out.len() {
            return Err(Error::DimensionMismatch(format!(
                "potential dim {} != spike dim {}",
                u.len(),
                s_out.len()
            )));
        }
        if let Some(bad) = s_out.iter().find(|&&s| s != 0.0 && s != 1.0) {
            return Err(Error::InvalidArgument(format!(
                "spike entries must be exactly 0 or 1, got {bad}"
            )));
        }
        Ok(Self { u, s_out })
    }
}

/// Right-hand side of the membrane equation: the Caputo derivative
/// `D^a U` as a function of the current state.
///
/// - `lif`, `soft_subtract`: `(-U + R I_in - theta S_out) / tau_alpha`
/// - `if_` drops the leak term `-U`;
/// - `hard_zero` drops the `-theta S_out` term (reset is a projection).
pub fn membrane_rhs(
    params: &NeuronParams,
    u: &[f64],
    i_in: &[f64],
    s_out: &[f64],
) -> Result<Vec<f64>> {
    if u.len() != i_in.len() || u.len() != s_out.len() {
        return Err(Error::DimensionMismatch(format!(
            "membrane_rhs dims: U {}, I_in {}, S_out {}",
            u.len(),
            i_in.len(),
            s_out.len()
        )));
    }
    let leak = matches!(params.model, NeuronModel::Lif);
    let soft = matches!(params.reset, ResetRule::SoftSubtract);
    let mut out = Vec::with_capacity(u.len());
    for i in 0..u.len() {
        let mut v = params.r * i_in[i];
        if leak {
            v -= u[i];
        }
        // Guard s = 0 explicitly so a non-spiking diagnostic neuron with
        // theta = +inf does not produce inf * 0 = NaN.
        if soft && s_out[i] != 0.0 {
            v -= params.theta * s_out[i];
        }
        out.push(v / params.tau_alpha);
    }
    Ok(out)
}

/// Componentwise spike decision `H(U - theta)` with the boundary firing:
/// `H(0) = 1`.
pub fn generate_spikes(u: &[f64], theta: f64) -> Vec<f64> {
    u.iter()
        .map(|&ui| if ui - theta >= 0.0 { 1.0 } else { 0.0 })
        .collect()
}

/// Steady-state membrane potential under constant current and no spiking:
/// `R I_const`.
pub fn steady_state_voltage(params: &NeuronParams, i_const: f64) -> f64 {
    params.r * i_const
}

/// Closed-form relaxation of a non-spiking neuron under constant current:
/// `U(t) = R I + (U0 - R I) E_a(-t^a / tau_a)`, evaluated on the grid.
/// The returned trajectory stores only states; its RHS slots are zero.
pub fn relaxation_curve(
    params: &NeuronParams,
    i_const: f64,
    u0: f64,
    grid: &TimeGrid,
) -> Result<Trajectory> {
    let u_inf = steady_state_voltage(params, i_const);
    let mut traj = Trajectory::zeroed(*grid, 1);
    for k in 0..grid.points() {
        let t = grid.t(k) - grid.start();
        let e = if t == 0.0 {
            1.0
        } else {
            mittag_leffler(
                &params.alpha,
                -t.powf(params.alpha.get()) / params.tau_alpha,
            )?
        };
        traj.state_mut(k)[0] = u_inf + (u0 - u_inf) * e;
    }
    Ok(traj)
}
