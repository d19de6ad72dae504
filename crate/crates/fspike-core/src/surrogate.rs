//! Surrogate spike gradients.
//!
//! The spike nonlinearity is a Heaviside step, whose derivative is zero
//! almost everywhere; training replaces it with a smooth, symmetric,
//! nonnegative surrogate `s(x)` of the pre-threshold value `x = U - theta`.
//! Four families are provided:
//!
//! - `sigmoid`:          `k * sig(k x) * (1 - sig(k x))`
//! - `arctan`:           `k / (1 + (k x)^2)`
//! - `piecewise_linear`: `1 / (2 g)` on `[-g, g]`, else `0`
//! - `gaussian`:         `exp(-x^2 / (2 s^2)) / (s sqrt(2 pi))`

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Which surrogate family to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurrogateKind {
    Sigmoid,
    Arctan,
    PiecewiseLinear,
    Gaussian,
}

impl SurrogateKind {
    /// Conventional default sharpness for each family.
    pub fn default_scale(self) -> f64 {
        match self {
            SurrogateKind::Sigmoid => 5.0,
            SurrogateKind::Arctan => 2.0,
            SurrogateKind::PiecewiseLinear => 1.0,
            SurrogateKind::Gaussian => 1.0,
        }
    }
}

/// A surrogate family plus its sharpness parameter (`k` for sigmoid/arctan,
/// the half-width `g` for piecewise_linear, the standard deviation for
/// gaussian).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateSpec {
    pub kind: SurrogateKind,
    pub scale: f64,
}

impl Default for SurrogateSpec {
    fn default() -> Self {
        Self::with_default_scale(SurrogateKind::Sigmoid)
    }
}

impl SurrogateSpec {
    /// A spec with an explicit scale; the scale must be positive and finite.
    pub fn new(kind: SurrogateKind, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "surrogate scale must be positive and finite, got {scale}"
            )));
        }
        Ok(Self { kind, scale })
    }

    /// A spec with the family's conventional default scale.
    pub fn with_default_scale(kind: SurrogateKind) -> Self {
        Self {
            kind,
            scale: kind.default_scale(),
        }
    }
}

/// The surrogate derivative `s(x)` at pre-threshold value `x = U - theta`.
/// Always nonnegative, symmetric in `x`, and maximal at `x = 0`.
pub fn surrogate_grad(spec: &SurrogateSpec, x: f64) -> f64 {
    let sc = spec.scale;
    match spec.kind {
        SurrogateKind::Sigmoid => {
            let s = sigmoid(sc * x.abs());
            sc * s * (1.0 - s)
        }
        SurrogateKind::Arctan => sc / (1.0 + (sc * x) * (sc * x)),
        SurrogateKind::PiecewiseLinear => {
            if x.abs() <= sc {
                1.0 / (2.0 * sc)
            } else {
                0.0
            }
        }
        SurrogateKind::Gaussian => {
            (-x * x / (2.0 * sc * sc)).exp() / (sc * (2.0 * PI).sqrt())
        }
    }
}

/// Chain rule through the spike nonlinearity: the gradient w.r.t. the
/// membrane potential is `upstream * s(x)`.
pub fn backward_rule(spec: &SurrogateSpec, upstream: f64, x: f64) -> f64 {
    upstream * surrogate_grad(spec, x)
}

/// The antiderivative of [`surrogate_grad`] with `primitive(0) = 1/2`: a
/// smooth stand-in for the Heaviside step used by gradient checking, so the
/// checked forward pass is exactly consistent with the surrogate backward
/// rule. For kinds whose gradient integrates to one (sigmoid,
/// piecewise_linear, gaussian) this is a sigmoid-shaped map into `[0, 1]`;
/// the arctan kind has total mass `pi` and ranges over
/// `[1/2 - pi/2, 1/2 + pi/2]`.
pub fn surrogate_primitive(spec: &SurrogateSpec, x: f64) -> f64 {
    let sc = spec.scale;
    match spec.kind {
        SurrogateKind::Sigmoid => sigmoid(sc * x),
        SurrogateKind::Arctan => 0.5 + (sc * x).atan(),
        SurrogateKind::PiecewiseLinear => ((x + sc) / (2.0 * sc)).clamp(0.0, 1.0),
        SurrogateKind::Gaussian => 0.5 * (1.0 + libm::erf(x / (sc * std::f64::consts::SQRT_2))),
    }
}

/// Logistic function, evaluated stably for large |y|.
fn sigmoid(y: f64) -> f64 {
    if y >= 0.0 {
        1.0 / (1.0 + (-y).exp())
    } else {
        let e = y.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(kind: SurrogateKind, scale: f64) -> SurrogateSpec {
        SurrogateSpec::new(kind, scale).unwrap()
    }

    #[test]
    fn peak_values_match_closed_forms() {
        // sigmoid: k * 1/2 * 1/2
        assert_eq!(surrogate_grad(&spec(SurrogateKind::Sigmoid, 5.0), 0.0), 1.25);
        // arctan: k / 1
        assert_eq!(surrogate_grad(&spec(SurrogateKind::Arctan, 2.0), 0.0), 2.0);
        // piecewise: inside the window vs outside
        let pw = spec(SurrogateKind::PiecewiseLinear, 1.0);
        assert_eq!(surrogate_grad(&pw, 0.5), 0.5);
        assert_eq!(surrogate_grad(&pw, 1.5), 0.0);
        // gaussian: peak of the unit normal
        let g = surrogate_grad(&spec(SurrogateKind::Gaussian, 1.0), 0.0);
        assert!((g - 0.3989422804014327).abs() < 1e-15, "{g}");
    }

    #[test]
    fn backward_rule_is_plain_scaling() {
        let sg = spec(SurrogateKind::Sigmoid, 5.0);
        assert_eq!(backward_rule(&sg, 0.0, 0.3), 0.0);
        assert_eq!(backward_rule(&sg, 2.0, 0.0), 2.5);
        let pw = spec(SurrogateKind::PiecewiseLinear, 1.0);
        assert_eq!(backward_rule(&pw, 1.0, 3.0), 0.0);
    }

    #[test]
    fn scale_must_be_positive_and_finite() {
        assert!(SurrogateSpec::new(SurrogateKind::Sigmoid, 0.0).is_err());
        assert!(SurrogateSpec::new(SurrogateKind::Sigmoid, -1.0).is_err());
        assert!(SurrogateSpec::new(SurrogateKind::Sigmoid, f64::NAN).is_err());
        assert!(SurrogateSpec::new(SurrogateKind::Sigmoid, f64::INFINITY).is_err());
    }

    #[test]
    fn default_scales_follow_convention() {
        assert_eq!(SurrogateSpec::default().scale, 5.0);
        assert_eq!(
            SurrogateSpec::with_default_scale(SurrogateKind::Arctan).scale,
            2.0
        );
        assert_eq!(
            SurrogateSpec::with_default_scale(SurrogateKind::PiecewiseLinear).scale,
            1.0
        );
        assert_eq!(
            SurrogateSpec::with_default_scale(SurrogateKind::Gaussian).scale,
            1.0
        );
    }

    #[test]
    fn piecewise_linear_has_exact_unit_mass() {
        for g in [0.25, 1.0, 3.0] {
            let s = spec(SurrogateKind::PiecewiseLinear, g);
            assert_eq!(2.0 * g * surrogate_grad(&s, 0.0), 1.0);
        }
    }

    #[test]
    fn sigmoid_surrogate_matches_finite_difference_of_logistic() {
        // s(x) must be d/dx sig(k x) to high accuracy.
        let k = 5.0;
        let s = spec(SurrogateKind::Sigmoid, k);
        let eps = 1e-6;
        let mut x = -3.0;
        while x <= 3.0 {
            let fd = (sigmoid(k * (x + eps)) - sigmoid(k * (x - eps))) / (2.0 * eps);
            let got = surrogate_grad(&s, x);
            assert!((got - fd).abs() < 1e-6, "x = {x}: {got} vs {fd}");
            x += 0.05;
        }
    }

    #[test]
    fn primitive_is_the_antiderivative_of_the_gradient() {
        for kind in [
            SurrogateKind::Sigmoid,
            SurrogateKind::Arctan,
            SurrogateKind::PiecewiseLinear,
            SurrogateKind::Gaussian,
        ] {
            let s = SurrogateSpec::with_default_scale(kind);
            assert!((surrogate_primitive(&s, 0.0) - 0.5).abs() < 1e-15, "{kind:?}");
            let eps = 1e-5;
            let mut x = -2.95;
            while x <= 3.0 {
                let fd = (surrogate_primitive(&s, x + eps) - surrogate_primitive(&s, x - eps))
                    / (2.0 * eps);
                let g = surrogate_grad(&s, x);
                assert!(
                    (fd - g).abs() < 2e-5 * g.max(1.0),
                    "{kind:?} at x = {x}: fd {fd} vs grad {g}"
                );
                x += 0.1;
            }
        }
    }

    #[test]
    fn unit_mass_primitives_saturate_at_zero_and_one() {
        for kind in [
            SurrogateKind::Sigmoid,
            SurrogateKind::PiecewiseLinear,
            SurrogateKind::Gaussian,
        ] {
            let s = SurrogateSpec::with_default_scale(kind);
            assert!(surrogate_primitive(&s, -60.0).abs() < 1e-12, "{kind:?}");
            assert!((surrogate_primitive(&s, 60.0) - 1.0).abs() < 1e-12, "{kind:?}");
        }
    }

    #[test]
    fn serde_round_trips_kind_names() {
        let s: SurrogateSpec =
            serde_json::from_str(r#"{"kind":"piecewise_linear","scale":2.0}"#).unwrap();
        assert_eq!(s.kind, SurrogateKind::PiecewiseLinear);
        let j = serde_json::to_string(&s).unwrap();
        assert!(j.contains("piecewise_linear"), "{j}");
    }

    fn any_spec() -> impl Strategy<Value = SurrogateSpec> {
        (
            prop_oneof![
                Just(SurrogateKind::Sigmoid),
                Just(SurrogateKind::Arctan),
                Just(SurrogateKind::PiecewiseLinear),
                Just(SurrogateKind::Gaussian),
            ],
            0.05f64..20.0,
        )
            .prop_map(|(kind, scale)| SurrogateSpec::new(kind, scale).unwrap())
    }

    proptest! {
        #[test]
        fn surrogate_is_nonnegative_symmetric_and_peaked_at_zero(
            s in any_spec(),
            x in -100.0f64..100.0,
        ) {
            let v = surrogate_grad(&s, x);
            prop_assert!(v >= 0.0);
            prop_assert_eq!(v, surrogate_grad(&s, -x));
            prop_assert!(v <= surrogate_grad(&s, 0.0));
        }
    }
}
