use serde::{Deserialize, Serialize};

use crate::model::ModelSpec;
use crate::quad::GaussRule;
use crate::{CoefficientVector, Error, Result};

/// A scalar potential with `drift = −V′`.
pub trait Potential1D {
    fn value(&self, u: f64) -> f64;
    fn deriv(&self, u: f64) -> f64;
    fn second_deriv(&self, u: f64) -> f64;
}

/// `V(u) = u⁴/4 − u²/2`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SymmetricQuartic;

impl Potential1D for SymmetricQuartic {
    fn value(&self, u: f64) -> f64 {
        0.25 * u.powi(4) - 0.5 * u * u
    }
    fn deriv(&self, u: f64) -> f64 {
        u.powi(3) - u
    }
    fn second_deriv(&self, u: f64) -> f64 {
        3.0 * u * u - 1.0
    }
}

/// Potential of a one-mode model: `V(u) = −∫₀ᵘ g(s) ds` with `g` the mode-0
/// drift, `V″ = −J₀₀`.
#[derive(Debug, Clone)]
pub struct ModeZeroPotential {
    model: ModelSpec,
    rule: GaussRule,
}

impl ModeZeroPotential {
    pub fn new(model: &ModelSpec) -> Result<Self> {
        if model.n_modes() != 1 {
            return Err(Error::invalid("model", "mode-zero potential needs a one-mode model"));
        }
        Ok(Self { model: model.clone(), rule: GaussRule::new(20) })
    }

    fn drift(&self, u: f64) -> f64 {
        self.model.drift(&CoefficientVector::from_element(1, u)).map(|g| g[0]).unwrap_or(f64::NAN)
    }
}

impl Potential1D for ModeZeroPotential {
    fn value(&self, u: f64) -> f64 {
        let panels = ((u.abs() / 0.25).ceil() as usize).max(1);
        -self.rule.integrate_composite(0.0, u, panels, |s| self.drift(s))
    }
    fn deriv(&self, u: f64) -> f64 {
        -self.drift(u)
    }
    fn second_deriv(&self, u: f64) -> f64 {
        self.model.jacobian(&CoefficientVector::from_element(1, u)).map(|j| -j[(0, 0)]).unwrap_or(f64::NAN)
    }
}

/// Critical points of a double well: `lower < saddle < upper`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoubleWell {
    pub lower: f64,
    pub saddle: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Well {
    Lower,
    Upper,
}

impl DoubleWell {
    /// Locates the critical points on `[a, b]` by a sign scan of `V′` on
    /// `samples` cells followed by bisection. Exactly two minima and one
    /// maximum are required, with a strictly positive barrier from each side.
    pub fn find(v: &impl Potential1D, a: f64, b: f64, samples: usize) -> Result<Self> {
        if !(a < b) || samples < 3 {
            return Err(Error::invalid("interval", "needs a < b and at least 3 samples"));
        }
        let xs: Vec<f64> = (0..=samples).map(|k| a + (b - a) * k as f64 / samples as f64).collect();
        let mut roots = Vec::new();
        for w in xs.windows(2) {
            let (fa, fb) = (v.deriv(w[0]), v.deriv(w[1]));
            if fa == 0.0 {
                roots.push(w[0]);
            } else if fa * fb < 0.0 {
                roots.push(bisect(|x| v.deriv(x), w[0], w[1]));
            }
        }
        if roots.len() != 3 {
            return Err(Error::NotDoubleWell(format!("found {} critical points on [{a}, {b}]", roots.len())));
        }
        let (lower, saddle, upper) = (roots[0], roots[1], roots[2]);
        if !(v.second_deriv(lower) > 0.0 && v.second_deriv(saddle) < 0.0 && v.second_deriv(upper) > 0.0) {
            return Err(Error::NotDoubleWell("critical points are not min, max, min".into()));
        }
        let vs = v.value(saddle);
        if !(vs > v.value(lower) && vs > v.value(upper)) {
            return Err(Error::NotDoubleWell("zero barrier".into()));
        }
        Ok(Self { lower, saddle, upper })
    }

    pub fn well(&self, which: Well) -> f64 {
        match which {
            Well::Lower => self.lower,
            Well::Upper => self.upper,
        }
    }

    /// `V(s) − V(well)`.
    pub fn barrier(&self, v: &impl Potential1D, which: Well) -> f64 {
        v.value(self.saddle) - v.value(self.well(which))
    }
}

fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let mut fa = f(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if (fm < 0.0) == (fa < 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KramersEstimate {
    pub mean_exit_time: f64,
    pub prefactor: f64,
    pub barrier: f64,
    /// `2ΔV / (ε²λ₀²)`.
    pub exponent: f64,
}

/// `E[τ] ≈ 2π / √(|V″(s)| V″(u)) · exp(2ΔV / (ε²λ₀²))` for escape from the
/// chosen well over the saddle of `wells`.
pub fn kramers_scalar(
    v: &impl Potential1D,
    wells: &DoubleWell,
    which: Well,
    lambda0: f64,
    epsilon: f64,
) -> Result<KramersEstimate> {
    if !(lambda0 > 0.0) {
        return Err(Error::invalid("lambda0", "must be > 0"));
    }
    if !(epsilon > 0.0) {
        return Err(Error::invalid("epsilon", "must be > 0"));
    }
    let barrier = wells.barrier(v, which);
    if !(barrier > 0.0) {
        return Err(Error::NotDoubleWell("zero barrier".into()));
    }
    let curv_s = v.second_deriv(wells.saddle).abs();
    let curv_w = v.second_deriv(wells.well(which));
    let prefactor = 2.0 * std::f64::consts::PI / (curv_s * curv_w).sqrt();
    let exponent = 2.0 * barrier / (epsilon * epsilon * lambda0 * lambda0);
    Ok(KramersEstimate { mean_exit_time: prefactor * exponent.exp(), prefactor, barrier, exponent })
}
