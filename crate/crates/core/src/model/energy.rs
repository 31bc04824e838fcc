use super::ModelSpec;
use crate::spectral::project;
use crate::{CoefficientVector, Error, Result};

/// `E[P] = ∫ α G(P) dx − ½ ⟨P, K_N P⟩` for a rate field given on the model
/// grid, where `G(P) = ∫_0^P g` and `K_N` is the Galerkin kernel matrix acting
/// on the projection of `P`.
pub fn energy_field(rates: &[f64], model: &ModelSpec) -> Result<f64> {
    let grid = model.grid();
    if rates.len() != grid.len() {
        return Err(Error::LengthMismatch { expected: grid.len(), got: rates.len() });
    }
    let gain = model.gain();
    let mut local = 0.0;
    for (k, (&p, &w)) in rates.iter().zip(grid.weights()).enumerate() {
        let g = gain.inverse_antiderivative(p).map_err(|e| match e {
            Error::OutOfRange { value, .. } => Error::OutOfRange { node: k, value },
            other => other,
        })?;
        local += w * model.alpha() * g;
    }
    let c = project(rates, model.basis(), grid)?;
    let quad = c.dot(&(model.kernel_matrix() * &c));
    Ok(local - 0.5 * quad)
}

/// Energy of the rate field with Galerkin coefficients `p`.
pub fn energy_eval(p: &CoefficientVector, model: &ModelSpec) -> Result<f64> {
    let field = model.field(p)?;
    energy_field(field.as_slice(), model)
}
