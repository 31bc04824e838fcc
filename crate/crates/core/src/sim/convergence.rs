use serde::{Deserialize, Serialize};

use super::{Scheme, Stepper};
use crate::model::ModelSpec;
use crate::noise::{lambda_of, NoiseStream};
use crate::{CoefficientVector, Error, Result};

/// Coupled runs of the truncations of `reference` to each `N` in `ns`.
#[derive(Debug, Clone)]
pub struct ConvergenceSetup<'a> {
    pub reference: &'a ModelSpec,
    pub ns: Vec<usize>,
    pub epsilon: f64,
    pub seed: u64,
    pub path_id: u64,
    pub dt: f64,
    pub t_end: f64,
    /// Reference-level initial coefficients; level `N` starts from `P^N u₀`.
    pub initial: CoefficientVector,
    pub scheme: Scheme,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    /// `sup_t ‖u^{ref}_t − u^N_t‖₂` (equal to the `L²` distance of the fields).
    pub sup_l2: f64,
    /// `sup_t max_k |U^{ref}_t(x_k) − U^N_t(x_k)|` over the model grid.
    pub sup_grid: f64,
    /// `(Σ_{N ≤ i < N_ref} λ_i²)^{1/2}`.
    pub tail_trace_sqrt: f64,
    /// `‖(I − P^N) u₀‖₂`.
    pub initial_tail: f64,
    /// `ε · tail_trace_sqrt + initial_tail`.
    pub envelope: f64,
}

/// Pathwise errors of each truncation against the reference level, driven by
/// the same per-mode noise streams.
pub fn galerkin_convergence(setup: &ConvergenceSetup<'_>) -> Result<Vec<ConvergenceRow>> {
    let reference = setup.reference;
    let n_ref = reference.n_modes();
    if setup.ns.windows(2).any(|w| w[0] >= w[1]) || setup.ns.iter().any(|&n| n == 0 || n > n_ref) {
        return Err(Error::invalid("ns", format!("must be ascending within 1..={n_ref}")));
    }
    if setup.initial.len() != n_ref {
        return Err(Error::LengthMismatch { expected: n_ref, got: setup.initial.len() });
    }
    if !(setup.dt > 0.0) || !(setup.t_end >= setup.dt) {
        return Err(Error::invalid("dt", "must satisfy 0 < dt <= t_end"));
    }
    if setup.scheme == Scheme::EulerMaruyama && setup.dt >= 1.0 / reference.alpha() {
        return Err(Error::invalid("dt", "must be < 1/alpha"));
    }
    let lambda = lambda_of(reference.basis());
    let lam_sq = reference.lambda_sq()?;
    let stepper = Stepper::new(setup.scheme, reference.alpha(), setup.dt);
    let models: Vec<ModelSpec> = setup.ns.iter().map(|&n| reference.truncated(n)).collect::<Result<_>>()?;

    let mut stream = NoiseStream::new(setup.seed, setup.path_id, reference.basis());
    let mut xi = vec![0.0; n_ref];
    let mut noise = vec![0.0; n_ref];
    let mut u_ref = setup.initial.clone();
    let mut kf_ref = CoefficientVector::zeros(n_ref);
    let mut ws_ref = reference.workspace();
    let mut levels: Vec<_> = models
        .iter()
        .map(|m| {
            let n = m.n_modes();
            (setup.initial.rows(0, n).into_owned(), CoefficientVector::zeros(n), m.workspace())
        })
        .collect();
    let mut sup_l2 = vec![0.0f64; models.len()];
    let mut sup_grid = vec![0.0f64; models.len()];

    let mut record = |u_ref: &CoefficientVector,
                      levels: &[(CoefficientVector, CoefficientVector, crate::model::Workspace)]| {
        let field_ref = reference.basis_table().tr_mul(u_ref);
        for (l, (u, _, _)) in levels.iter().enumerate() {
            let n = u.len();
            let mut diff = u_ref.clone();
            diff.rows_mut(0, n).axpy(-1.0, u, 1.0);
            sup_l2[l] = sup_l2[l].max(diff.norm());
            let field = models[l].basis_table().tr_mul(u);
            sup_grid[l] = sup_grid[l].max((&field_ref - field).amax());
        }
    };
    record(&u_ref, &levels);
    let steps = (setup.t_end / setup.dt).round() as usize;
    for step in 1..=steps {
        stream.next_normals(&mut xi);
        for i in 0..n_ref {
            noise[i] = setup.epsilon * lambda[i] * stepper.noise_sd * xi[i];
        }
        stepper.advance(reference, &mut u_ref, &mut kf_ref, &mut ws_ref, &noise);
        for (m, (u, kf, ws)) in models.iter().zip(levels.iter_mut()) {
            stepper.advance(m, u, kf, ws, &noise[..m.n_modes()]);
        }
        if !u_ref.iter().all(|v| v.is_finite()) {
            return Err(Error::BlowUp { step });
        }
        record(&u_ref, &levels);
    }

    Ok(setup
        .ns
        .iter()
        .enumerate()
        .map(|(l, &n)| {
            let tail_trace_sqrt = lam_sq[n..].iter().sum::<f64>().sqrt();
            let initial_tail = setup.initial.rows(n, n_ref - n).norm();
            ConvergenceRow {
                n,
                sup_l2: sup_l2[l],
                sup_grid: sup_grid[l],
                tail_trace_sqrt,
                initial_tail,
                envelope: setup.epsilon * tail_trace_sqrt + initial_tail,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{project, MultiIndex};

    fn tanh_initial(model: &ModelSpec) -> CoefficientVector {
        let grid = model.grid();
        let samples: Vec<f64> =
            (0..grid.len()).map(|k| 0.5 + 0.4 * (2.0 * (grid.node(k)[0] - std::f64::consts::PI)).tanh()).collect();
        project(&samples, model.basis(), grid).unwrap()
    }

    #[test]
    fn reference_level_has_zero_error() {
        let m = ModelSpec::homogeneous_bistable(1, 15, 1.0).unwrap();
        let setup = ConvergenceSetup {
            reference: &m,
            ns: vec![4, 16],
            epsilon: 0.2,
            seed: 1,
            path_id: 0,
            dt: 0.01,
            t_end: 1.0,
            initial: tanh_initial(&m),
            scheme: Scheme::EulerMaruyama,
        };
        let rows = galerkin_convergence(&setup).unwrap();
        assert_eq!(rows[1].sup_l2, 0.0);
        assert_eq!(rows[1].sup_grid, 0.0);
        assert!(rows[0].sup_l2 > 0.0);
        let _ = MultiIndex::new(vec![0]);
    }

    #[test]
    fn error_decreases_with_n() {
        let m = ModelSpec::homogeneous_bistable(1, 31, 1.0).unwrap();
        for seed in 0..2 {
            let setup = ConvergenceSetup {
                reference: &m,
                ns: vec![4, 8, 16],
                epsilon: 0.2,
                seed,
                path_id: 0,
                dt: 0.01,
                t_end: 5.0,
                initial: tanh_initial(&m),
                scheme: Scheme::EulerMaruyama,
            };
            let rows = galerkin_convergence(&setup).unwrap();
            for w in rows.windows(2) {
                assert!(w[1].sup_l2 < w[0].sup_l2);
                assert!(w[1].sup_grid < w[0].sup_grid);
            }
        }
    }
}
