//! Orthonormal Neumann cosine basis on `B = [0, 2π]^d`, noise spectra,
//! quadrature grids and the maps between grid samples and Galerkin
//! coefficients.

mod basis;
mod grid;
pub(crate) use basis::axis_factor;

pub use basis::{basis_eval, build_basis, noise_spectrum_exponential, BasisExport, MultiIndex, SpectralBasis};
pub use grid::{build_gauss_grid, build_quadrature, default_quadrature_order, GridKind, QuadratureGrid};

use crate::{CoefficientVector, Error, Result};
use nalgebra::DMatrix;

/// `(2π)^d`.
pub fn domain_measure(dim: usize) -> f64 {
    (2.0 * std::f64::consts::PI).powi(dim as i32)
}

pub(crate) fn check_in_domain(x: &[f64]) -> Result<()> {
    const SLACK: f64 = 1e-12;
    let hi = 2.0 * std::f64::consts::PI + SLACK;
    if x.iter().all(|&c| c.is_finite() && c >= -SLACK && c <= hi) {
        Ok(())
    } else {
        Err(Error::OutsideDomain { point: x.to_vec() })
    }
}

/// Values `v_i(x_k)` of every basis function at every grid node (`N × n_nodes`).
pub fn basis_table(basis: &SpectralBasis, grid: &QuadratureGrid) -> DMatrix<f64> {
    let n = basis.n_modes();
    let m = grid.len();
    let mut table = DMatrix::zeros(n, m);
    for (i, idx) in basis.indices().iter().enumerate() {
        for k in 0..m {
            table[(i, k)] = idx.eval(grid.node(k));
        }
    }
    table
}

/// Quadrature Gram matrix `⟨v_i, v_j⟩`.
pub fn gram_matrix(basis: &SpectralBasis, grid: &QuadratureGrid) -> DMatrix<f64> {
    let table = basis_table(basis, grid);
    let mut weighted = table.clone();
    for (k, &w) in grid.weights().iter().enumerate() {
        weighted.column_mut(k).scale_mut(w);
    }
    &weighted * table.transpose()
}

/// Coefficients `⟨field, v_i⟩` of grid samples.
pub fn project(samples: &[f64], basis: &SpectralBasis, grid: &QuadratureGrid) -> Result<CoefficientVector> {
    if samples.len() != grid.len() {
        return Err(Error::LengthMismatch { expected: grid.len(), got: samples.len() });
    }
    if grid.dim() != basis.dim() {
        return Err(Error::LengthMismatch { expected: basis.dim(), got: grid.dim() });
    }
    let mut out = CoefficientVector::zeros(basis.n_modes());
    for (k, (&s, &w)) in samples.iter().zip(grid.weights()).enumerate() {
        let x = grid.node(k);
        let fw = s * w;
        for (i, idx) in basis.indices().iter().enumerate() {
            out[i] += fw * idx.eval(x);
        }
    }
    Ok(out)
}

/// `Σ_i u^i v_i(x)`.
pub fn reconstruct(u: &CoefficientVector, basis: &SpectralBasis, x: &[f64]) -> Result<f64> {
    if u.len() != basis.n_modes() {
        return Err(Error::LengthMismatch { expected: basis.n_modes(), got: u.len() });
    }
    if x.len() != basis.dim() {
        return Err(Error::LengthMismatch { expected: basis.dim(), got: x.len() });
    }
    check_in_domain(x)?;
    Ok(basis.indices().iter().zip(u.iter()).map(|(idx, c)| c * idx.eval(x)).sum())
}

/// Reconstruction at every node of `grid`.
pub fn reconstruct_on_grid(u: &CoefficientVector, basis: &SpectralBasis, grid: &QuadratureGrid) -> Result<Vec<f64>> {
    if u.len() != basis.n_modes() {
        return Err(Error::LengthMismatch { expected: basis.n_modes(), got: u.len() });
    }
    Ok((0..grid.len())
        .map(|k| {
            let x = grid.node(k);
            basis.indices().iter().zip(u.iter()).map(|(idx, c)| c * idx.eval(x)).sum()
        })
        .collect())
}

/// The two series of the spatial-continuity conditions, maximised over the grid:
/// `sup_x Σ λ_i² v_i(x)²` and `sup_x Σ λ_i² L_i^{2ρ} |v_i(x)|^{2(1-ρ)}`.
pub fn regularity_sums(basis: &SpectralBasis, grid: &QuadratureGrid, rho: f64) -> Result<(f64, f64)> {
    let lam = basis.lambda_sq()?;
    let mut sup1 = 0.0f64;
    let mut sup2 = 0.0f64;
    for k in 0..grid.len() {
        let x = grid.node(k);
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for (i, idx) in basis.indices().iter().enumerate() {
            let v = idx.eval(x);
            s1 += lam[i] * v * v;
            s2 += lam[i] * basis.lipschitz()[i].powf(2.0 * rho) * v.abs().powf(2.0 * (1.0 - rho));
        }
        sup1 = sup1.max(s1);
        sup2 = sup2.max(s2);
    }
    Ok((sup1, sup2))
}
