use serde::{Deserialize, Serialize};

use crate::quad::GaussRule;
use crate::{Error, Result};

/// Firing-rate nonlinearity `f`.
///
/// Serialized as `{kind, params}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "kebab-case")]
pub enum GainFunction {
    /// `1 / (1 + e^{-β(u-θ)})`
    Logistic { beta: f64, theta: f64 },
    /// `(tanh(β(u-θ)) + 1) / 2`
    TanhSigmoid { beta: f64, theta: f64 },
    /// `[b(u - u_b) + 1] H(u - u_b)`
    GuoChowRamp { b: f64, u_b: f64 },
    /// `f ≡ value`
    Constant { value: f64 },
}

/// Distance from saturation at which rate values are clamped before inversion.
pub const RANGE_CLAMP: f64 = 1e-12;

impl GainFunction {
    pub fn validate(&self) -> Result<()> {
        match *self {
            GainFunction::Logistic { beta, theta } | GainFunction::TanhSigmoid { beta, theta } => {
                if !(beta > 0.0) || !beta.is_finite() {
                    return Err(Error::invalid("gain.beta", "must be > 0"));
                }
                if !theta.is_finite() {
                    return Err(Error::invalid("gain.theta", "must be finite"));
                }
            }
            GainFunction::GuoChowRamp { b, u_b } => {
                if !(b >= 0.0) || !b.is_finite() {
                    return Err(Error::invalid("gain.b", "must be >= 0"));
                }
                if !u_b.is_finite() {
                    return Err(Error::invalid("gain.u_b", "must be finite"));
                }
            }
            GainFunction::Constant { value } => {
                if !value.is_finite() {
                    return Err(Error::invalid("gain.value", "must be finite"));
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        match *self {
            GainFunction::Logistic { beta, theta } => logistic(beta * (u - theta)),
            GainFunction::TanhSigmoid { beta, theta } => 0.5 * ((beta * (u - theta)).tanh() + 1.0),
            GainFunction::GuoChowRamp { b, u_b } => {
                if u >= u_b {
                    b * (u - u_b) + 1.0
                } else {
                    0.0
                }
            }
            GainFunction::Constant { value } => value,
        }
    }

    /// `f'(u)`. For the ramp the value at `u_b` is the right derivative `b`.
    #[inline]
    pub fn deriv(&self, u: f64) -> f64 {
        match *self {
            GainFunction::Logistic { beta, theta } => {
                let s = logistic(beta * (u - theta));
                beta * s * (1.0 - s)
            }
            GainFunction::TanhSigmoid { beta, theta } => {
                let t = (beta * (u - theta)).tanh();
                0.5 * beta * (1.0 - t * t)
            }
            GainFunction::GuoChowRamp { b, u_b } => {
                if u >= u_b {
                    b
                } else {
                    0.0
                }
            }
            GainFunction::Constant { .. } => 0.0,
        }
    }

    /// Global Lipschitz constant; infinite for the discontinuous ramp.
    pub fn lipschitz(&self) -> f64 {
        match *self {
            GainFunction::Logistic { beta, .. } => 0.25 * beta,
            GainFunction::TanhSigmoid { beta, .. } => 0.5 * beta,
            GainFunction::GuoChowRamp { .. } => f64::INFINITY,
            GainFunction::Constant { .. } => 0.0,
        }
    }

    /// `sup |f|` when finite.
    pub fn sup_abs(&self) -> Option<f64> {
        match *self {
            GainFunction::Logistic { .. } | GainFunction::TanhSigmoid { .. } => Some(1.0),
            GainFunction::GuoChowRamp { b, .. } => (b == 0.0).then_some(1.0),
            GainFunction::Constant { value } => Some(value.abs()),
        }
    }

    /// Continuously differentiable everywhere.
    pub fn is_smooth(&self) -> bool {
        !matches!(self, GainFunction::GuoChowRamp { .. })
    }

    /// Location of the ramp's jump, if any.
    pub fn kink(&self) -> Option<f64> {
        match *self {
            GainFunction::GuoChowRamp { u_b, .. } => Some(u_b),
            _ => None,
        }
    }

    /// Logistic and tanh gains as a logistic `(β, θ)` pair; `(tanh z + 1)/2` is
    /// the logistic function of `2z`.
    fn as_logistic(&self) -> Option<(f64, f64)> {
        match *self {
            GainFunction::Logistic { beta, theta } => Some((beta, theta)),
            GainFunction::TanhSigmoid { beta, theta } => Some((2.0 * beta, theta)),
            _ => None,
        }
    }

    /// `g = f^{-1}` on `(0, 1)`. Values within [`RANGE_CLAMP`] of saturation are
    /// clamped; values at or beyond the range are errors.
    pub fn inverse(&self, p: f64) -> Result<f64> {
        let (beta, theta) = self.as_logistic().ok_or(Error::UnsuitableGain("invertible"))?;
        let p = clamp_rate(p).ok_or(Error::OutOfRange { node: 0, value: p })?;
        Ok(theta + (p / (1.0 - p)).ln() / beta)
    }

    /// `∫_0^P g(r) dr` for an invertible gain.
    ///
    /// Substituting `r = f(u)` gives `∫_{-∞}^{g(P)} u f'(u) du`; the lower limit
    /// is cut where `f` drops below `1e-17` and the rest is integrated with
    /// composite 32-node Gauss–Legendre panels about two decay lengths wide.
    pub fn inverse_antiderivative(&self, p: f64) -> Result<f64> {
        let (beta, theta) = self.as_logistic().ok_or(Error::UnsuitableGain("invertible"))?;
        let upper = self.inverse(p)?;
        let lower = theta + (1e-17f64).ln() / beta;
        if upper <= lower {
            return Ok(0.0);
        }
        let panels = ((upper - lower) * beta / 2.0).ceil().max(1.0) as usize;
        let rule = GaussRule::new(32);
        Ok(rule.integrate_composite(lower, upper, panels, |u| {
            let s = logistic(beta * (u - theta));
            u * beta * s * (1.0 - s)
        }))
    }
}

fn clamp_rate(p: f64) -> Option<f64> {
    if !(p > 0.0 && p < 1.0) {
        return None;
    }
    Some(p.clamp(RANGE_CLAMP, 1.0 - RANGE_CLAMP))
}

#[inline]
fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
