//! Amari field model in Galerkin form: gains, kernels, the truncated drift
//! `−αu + (KF)(u)`, its Jacobian, stationary states and the rate-variable
//! energy.

mod energy;
mod gain;
mod kernel;
mod stationary;

pub use energy::{energy_eval, energy_field};
pub use gain::{GainFunction, RANGE_CLAMP};
pub use kernel::{kernel_images, KernelSpec, SpectralCoupling};
pub use stationary::{classify, stationary_solve, Classification, SolveMethod, StationaryState, STABILITY_MARGIN};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::spectral::{
    basis_table, build_basis, build_gauss_grid, build_quadrature, default_quadrature_order, domain_measure,
    noise_spectrum_exponential, QuadratureGrid, SpectralBasis,
};
use crate::{CoefficientVector, Error, Result};

const GAUSS_PER_PANEL: usize = 8;

/// Basis part of a model definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisConfig {
    pub d: usize,
    pub cutoff: u32,
}

/// Serializable model definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub alpha: f64,
    pub gain: GainFunction,
    pub kernel: KernelSpec,
    pub basis: BasisConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadrature_order: Option<usize>,
}

impl ModelConfig {
    /// Build the model with the exponential noise spectrum of correlation length `xi`.
    pub fn build(&self, xi: f64) -> Result<ModelSpec> {
        let basis = noise_spectrum_exponential(&build_basis(self.basis.d, self.basis.cutoff)?, xi)?;
        ModelSpec::new(self.alpha, self.gain.clone(), self.kernel.clone(), basis, self.quadrature_order)
    }
}

/// Immutable Galerkin model. All operations are pure.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    alpha: f64,
    gain: GainFunction,
    kernel: KernelSpec,
    basis: SpectralBasis,
    grid: QuadratureGrid,
    /// `v_i(x_k)`, `N × n_nodes`.
    table: DMatrix<f64>,
    /// `(K v_i)(x_k)`, `N × n_nodes`.
    images: DMatrix<f64>,
    kernel_matrix: DMatrix<f64>,
    kappa: Option<Vec<f64>>,
}

/// Scratch buffers for allocation-free drift evaluation.
#[derive(Debug, Clone)]
pub struct Workspace {
    field: DVector<f64>,
    weighted: DVector<f64>,
}

impl ModelSpec {
    /// Assemble a model. Spectral kernels use a trapezoid grid of
    /// `quadrature_order` points per axis; integral kernels use composite
    /// Gauss–Legendre with about that many nodes per axis.
    pub fn new(
        alpha: f64,
        gain: GainFunction,
        kernel: KernelSpec,
        basis: SpectralBasis,
        quadrature_order: Option<usize>,
    ) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::invalid("alpha", "must be > 0"));
        }
        gain.validate()?;
        kernel.validate()?;
        let order = quadrature_order.unwrap_or_else(|| default_quadrature_order(&basis));
        let n = basis.n_modes();
        let (grid, table, images, kernel_matrix, kappa) = match &kernel {
            KernelSpec::SpectralCoupled(c) => {
                let kappa = c.resolve(&basis)?;
                let grid = build_quadrature(basis.dim(), order)?;
                let table = basis_table(&basis, &grid);
                let mut images = table.clone();
                for (i, k) in kappa.iter().enumerate() {
                    images.row_mut(i).scale_mut(*k);
                }
                let km = DMatrix::from_diagonal(&DVector::from_column_slice(&kappa));
                (grid, table, images, km, Some(kappa))
            }
            _ => {
                let panels = order.div_ceil(GAUSS_PER_PANEL).max(1);
                let grid = build_gauss_grid(basis.dim(), panels, GAUSS_PER_PANEL)?;
                let table = basis_table(&basis, &grid);
                let images = kernel_images(&kernel, &basis, &grid, panels, GAUSS_PER_PANEL)?;
                let mut km = DMatrix::zeros(n, n);
                let w = grid.weights();
                for i in 0..n {
                    for j in 0..n {
                        km[(i, j)] = (0..grid.len()).map(|k| w[k] * table[(i, k)] * images[(j, k)]).sum();
                    }
                }
                let max_dev = (&km - km.transpose()).amax();
                if max_dev > 1e-6 {
                    return Err(Error::AsymmetricKernel { max_dev });
                }
                let km = (&km + km.transpose()) * 0.5;
                (grid, table, images, km, None)
            }
        };
        Ok(Self { alpha, gain, kernel, basis, grid, table, images, kernel_matrix, kappa })
    }

    /// The scenario with `κ_0 = α` and `κ_i = λ_i` (α = 1, tanh gain β = 4,
    /// θ = 0.5): constant fields `U ≡ c` are stationary exactly when `c = f(c)`.
    pub fn homogeneous_bistable(d: usize, cutoff: u32, xi: f64) -> Result<Self> {
        let alpha = 1.0;
        let basis = noise_spectrum_exponential(&build_basis(d, cutoff)?, xi)?;
        Self::new(
            alpha,
            GainFunction::TanhSigmoid { beta: 4.0, theta: 0.5 },
            KernelSpec::SpectralCoupled(SpectralCoupling::from_spectrum(alpha, 1.0)),
            basis,
            None,
        )
    }

    /// One-mode reduction of the homogeneous bistable scenario (`λ_0 = 1`).
    pub fn scalar_bistable() -> Result<Self> {
        let alpha = 1.0;
        let basis = build_basis(1, 0)?.with_eigenvalues(vec![1.0])?;
        Self::new(
            alpha,
            GainFunction::TanhSigmoid { beta: 4.0, theta: 0.5 },
            KernelSpec::SpectralCoupled(SpectralCoupling::explicit(vec![alpha])),
            basis,
            Some(2),
        )
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn gain(&self) -> &GainFunction {
        &self.gain
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn basis(&self) -> &SpectralBasis {
        &self.basis
    }

    pub fn grid(&self) -> &QuadratureGrid {
        &self.grid
    }

    pub fn n_modes(&self) -> usize {
        self.basis.n_modes()
    }

    pub fn kernel_matrix(&self) -> &DMatrix<f64> {
        &self.kernel_matrix
    }

    /// Kernel eigenvalues for spectral-coupled kernels.
    pub fn kappa(&self) -> Option<&[f64]> {
        self.kappa.as_deref()
    }

    pub fn lambda_sq(&self) -> Result<&[f64]> {
        self.basis.lambda_sq()
    }

    pub fn basis_table(&self) -> &DMatrix<f64> {
        &self.table
    }

    pub fn kernel_images(&self) -> &DMatrix<f64> {
        &self.images
    }

    /// `‖K‖₂` of the Galerkin kernel matrix.
    pub fn kernel_norm(&self) -> f64 {
        match &self.kappa {
            Some(k) => k.iter().fold(0.0f64, |m, v| m.max(v.abs())),
            None => self.kernel_matrix.clone().symmetric_eigenvalues().amax(),
        }
    }

    /// Operator norm of the discrete map from grid rates to `KF` coefficients,
    /// `‖Kimg · diag(√W)‖₂`, so that `‖(KF)(u)‖₂ ≤ bound · ‖f(U)‖_{L²}`.
    pub fn nonlinearity_bound(&self) -> f64 {
        if let Some(k) = &self.kappa {
            return k.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        }
        let mut scaled = self.images.clone();
        for (k, mut col) in scaled.column_iter_mut().enumerate() {
            col *= self.grid.weights()[k].sqrt();
        }
        let gram = &scaled * scaled.transpose();
        gram.symmetric_eigenvalues().amax().sqrt()
    }

    /// `α + ‖K‖₂ · Lip(f)`.
    pub fn lipschitz_constant(&self) -> f64 {
        self.alpha + self.kernel_norm() * self.gain.lipschitz()
    }

    /// The first `n` modes, sharing grid and kernel images.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        let basis = self.basis.truncated(n)?;
        Ok(Self {
            alpha: self.alpha,
            gain: self.gain.clone(),
            kernel: self.kernel.clone(),
            basis,
            grid: self.grid.clone(),
            table: self.table.rows(0, n).into_owned(),
            images: self.images.rows(0, n).into_owned(),
            kernel_matrix: self.kernel_matrix.view((0, 0), (n, n)).into_owned(),
            kappa: self.kappa.as_ref().map(|k| k[..n].to_vec()),
        })
    }

    /// Copy with a different gain; grid and kernel data are reused.
    pub fn with_gain(&self, gain: GainFunction) -> Result<Self> {
        gain.validate()?;
        Ok(Self { gain, ..self.clone() })
    }

    pub fn workspace(&self) -> Workspace {
        Workspace { field: DVector::zeros(self.grid.len()), weighted: DVector::zeros(self.grid.len()) }
    }

    fn check_len(&self, u: &CoefficientVector) -> Result<()> {
        if u.len() != self.n_modes() {
            return Err(Error::LengthMismatch { expected: self.n_modes(), got: u.len() });
        }
        Ok(())
    }

    /// Coefficients of the constant field `U ≡ c`.
    pub fn constant_state(&self, c: f64) -> CoefficientVector {
        let mut u = CoefficientVector::zeros(self.n_modes());
        if let Some(p) = self.basis.indices().iter().position(|i| i.norm_sq() == 0) {
            u[p] = c * domain_measure(self.basis.dim()).sqrt();
        }
        u
    }

    /// `U(x_k)` at every grid node.
    pub fn field(&self, u: &CoefficientVector) -> Result<DVector<f64>> {
        self.check_len(u)?;
        Ok(self.table.tr_mul(u))
    }

    /// `(KF)(u)_i = ∫ f(U(x)) (K v_i)(x) dx`.
    pub fn nemytskii(&self, u: &CoefficientVector) -> Result<CoefficientVector> {
        let mut ws = self.workspace();
        self.check_len(u)?;
        Ok(self.nemytskii_with(u, &mut ws))
    }

    fn nemytskii_with(&self, u: &CoefficientVector, ws: &mut Workspace) -> CoefficientVector {
        let mut out = CoefficientVector::zeros(self.n_modes());
        self.nemytskii_into(u, ws, &mut out);
        out
    }

    fn nemytskii_into(&self, u: &CoefficientVector, ws: &mut Workspace, out: &mut CoefficientVector) {
        ws.field.gemv_tr(1.0, &self.table, u, 0.0);
        for ((wf, &x), &w) in ws.weighted.iter_mut().zip(ws.field.iter()).zip(self.grid.weights()) {
            *wf = w * self.gain.eval(x);
        }
        out.gemv(1.0, &self.images, &ws.weighted, 0.0);
    }

    /// `−αu + (KF)(u)`.
    pub fn drift(&self, u: &CoefficientVector) -> Result<CoefficientVector> {
        self.check_len(u)?;
        let mut ws = self.workspace();
        let mut out = CoefficientVector::zeros(self.n_modes());
        self.drift_into(u, &mut ws, &mut out);
        Ok(out)
    }

    /// Allocation-free drift; lengths are not checked.
    pub fn drift_into(&self, u: &CoefficientVector, ws: &mut Workspace, out: &mut CoefficientVector) {
        self.nemytskii_into(u, ws, out);
        out.axpy(-self.alpha, u, 1.0);
    }

    /// `Jᵀ v` without forming `J`; the gain derivative is taken as in
    /// [`ModelSpec::jacobian`].
    pub fn jacobian_tr_mul(
        &self,
        u: &CoefficientVector,
        v: &CoefficientVector,
        ws: &mut Workspace,
    ) -> CoefficientVector {
        ws.field.gemv_tr(1.0, &self.table, u, 0.0);
        ws.weighted.gemv_tr(1.0, &self.images, v, 0.0);
        for ((s, &x), &w) in ws.weighted.iter_mut().zip(ws.field.iter()).zip(self.grid.weights()) {
            *s *= w * self.gain.deriv(x);
        }
        let mut out = &self.table * &ws.weighted;
        out.axpy(-self.alpha, v, 1.0);
        out
    }

    /// `J = −αI + Kimg · diag(W f'(U)) · Vᵀ`. Logs a warning when a ramp gain's
    /// kink lies inside the range of the field on the grid.
    pub fn jacobian(&self, u: &CoefficientVector) -> Result<DMatrix<f64>> {
        let field = self.field(u)?;
        if let Some(kink) = self.gain.kink() {
            let (lo, hi) = (field.min(), field.max());
            if lo <= kink && kink <= hi {
                log::warn!("field crosses the gain kink u_b = {kink}; Jacobian uses one-sided derivatives");
            }
        }
        let mut scaled = self.table.transpose();
        for (k, mut row) in scaled.row_iter_mut().enumerate() {
            row *= self.grid.weights()[k] * self.gain.deriv(field[k]);
        }
        let mut j = &self.images * scaled;
        for i in 0..self.n_modes() {
            j[(i, i)] -= self.alpha;
        }
        Ok(j)
    }
}
