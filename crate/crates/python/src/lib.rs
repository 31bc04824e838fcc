//! Python bindings. Vectors cross the boundary as lists of floats, paths as
//! lists of rows (one row per mode), and structured reports as JSON-shaped
//! dicts.

use nalgebra::DMatrix;
use nfldp_core::cli::{exit_code, parse_config, run};
use nfldp_core::ldp::{
    action_eval, action_gradient, kramers_scalar, minimize_action, multiscale_truncate, quasipotential, DiscretePath,
    DoubleWell, InitialPath, MinimizeOptions, ModeZeroPotential, SymmetricQuartic, Well,
};
use nfldp_core::model::{stationary_solve, ModelConfig, ModelSpec, SolveMethod};
use nfldp_core::noise::NoiseConfig;
use nfldp_core::sim::{simulate, ExitExperiment, Scheme, SimConfig};
use nfldp_core::spectral::{build_basis, build_quadrature, gram_matrix, noise_spectrum_exponential};
use nfldp_core::{CoefficientVector, Error};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyAny;

fn to_py(e: Error) -> PyErr {
    match exit_code(&e) {
        2 => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn json_to_py<'py>(py: Python<'py>, value: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn vector(values: Vec<f64>) -> CoefficientVector {
    CoefficientVector::from_vec(values)
}

fn path_from_rows(t_end: f64, rows: Vec<Vec<f64>>) -> PyResult<DiscretePath> {
    let n = rows.len();
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("path rows must have equal length"));
    }
    DiscretePath::new(t_end, DMatrix::from_fn(n, cols, |i, k| rows[i][k])).map_err(to_py)
}

fn path_rows(p: &DiscretePath) -> Vec<Vec<f64>> {
    p.nodes.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Galerkin-truncated stochastic neural field.
#[pyclass(name = "Model", frozen)]
struct PyModel {
    inner: ModelSpec,
}

#[pymethods]
impl PyModel {
    /// Build from a model config given as a JSON string.
    #[staticmethod]
    #[pyo3(signature = (config_json, xi=1.0))]
    fn from_json(config_json: &str, xi: f64) -> PyResult<Self> {
        let cfg: ModelConfig = serde_json::from_str(config_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Self { inner: cfg.build(xi).map_err(to_py)? })
    }

    #[staticmethod]
    #[pyo3(signature = (d=1, cutoff=15, xi=1.0))]
    fn homogeneous_bistable(d: usize, cutoff: u32, xi: f64) -> PyResult<Self> {
        Ok(Self { inner: ModelSpec::homogeneous_bistable(d, cutoff, xi).map_err(to_py)? })
    }

    #[staticmethod]
    fn scalar_bistable() -> PyResult<Self> {
        Ok(Self { inner: ModelSpec::scalar_bistable().map_err(to_py)? })
    }

    #[getter]
    fn n_modes(&self) -> usize {
        self.inner.n_modes()
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha()
    }

    fn lambda_sq(&self) -> PyResult<Vec<f64>> {
        Ok(self.inner.lambda_sq().map_err(to_py)?.to_vec())
    }

    fn truncated(&self, n: usize) -> PyResult<Self> {
        Ok(Self { inner: self.inner.truncated(n).map_err(to_py)? })
    }

    /// Coefficients of the constant field `U ≡ c`.
    fn constant_state(&self, c: f64) -> Vec<f64> {
        self.inner.constant_state(c).iter().copied().collect()
    }

    fn drift(&self, u: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.inner.drift(&vector(u)).map_err(to_py)?.iter().copied().collect())
    }

    fn nemytskii(&self, u: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.inner.nemytskii(&vector(u)).map_err(to_py)?.iter().copied().collect())
    }

    /// Newton solve for a stationary state; returns `(u_star, classification)`.
    #[pyo3(signature = (guess, tol=1e-12, max_iter=200))]
    fn stationary(&self, guess: Vec<f64>, tol: f64, max_iter: usize) -> PyResult<(Vec<f64>, String)> {
        let s = stationary_solve(&self.inner, &vector(guess), SolveMethod::Newton, tol, max_iter).map_err(to_py)?;
        let class =
            serde_json::to_value(s.classification).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
        Ok((s.u_star.iter().copied().collect(), class))
    }

    /// Euler–Maruyama trajectory; returns `(times, states)`.
    #[pyo3(signature = (initial, epsilon, t_end, dt=0.01, seed=0, path_id=0, record_every=1))]
    #[allow(clippy::too_many_arguments)]
    fn simulate(
        &self,
        py: Python<'_>,
        initial: Vec<f64>,
        epsilon: f64,
        t_end: f64,
        dt: f64,
        seed: u64,
        path_id: u64,
        record_every: usize,
    ) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
        let noise = NoiseConfig::new(self.inner.basis().clone(), epsilon, seed).map_err(to_py)?;
        let cfg = SimConfig {
            model: &self.inner,
            noise: &noise,
            dt,
            t_end,
            initial: vector(initial),
            scheme: Scheme::EulerMaruyama,
            record_every,
        };
        let traj = py.detach(|| simulate(&cfg, path_id)).map_err(to_py)?;
        Ok((traj.times, traj.states.iter().map(|s| s.iter().copied().collect()).collect()))
    }

    /// First exit times from a ball, one entry per path (`None` if censored).
    #[pyo3(signature = (center, radius, epsilon, n_paths, t_max, seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn exit_times(
        &self,
        py: Python<'_>,
        center: Vec<f64>,
        radius: f64,
        epsilon: f64,
        n_paths: usize,
        t_max: f64,
        seed: u64,
    ) -> PyResult<Vec<Option<f64>>> {
        let exp = ExitExperiment {
            center: vector(center),
            radius,
            epsilons: vec![epsilon],
            n_paths,
            t_max,
            dt: None,
            seed,
            scheme: Scheme::EulerMaruyama,
        };
        let s = py.detach(|| nfldp_core::sim::first_exit(&self.inner, &exp, 0)).map_err(to_py)?;
        Ok(s.taus.iter().zip(&s.censored).map(|(&t, &c)| (!c).then_some(t)).collect())
    }

    /// Discrete action of a path given as one row per mode; returns
    /// `(total, (a1, a2, a3))`.
    fn action(&self, t_end: f64, rows: Vec<Vec<f64>>) -> PyResult<(f64, (f64, f64, f64))> {
        let a = action_eval(&path_from_rows(t_end, rows)?, &self.inner).map_err(to_py)?;
        Ok((a.total, a.terms))
    }

    fn action_gradient(&self, t_end: f64, rows: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let p = path_from_rows(t_end, rows)?;
        let g = action_gradient(&p, &self.inner).map_err(to_py)?;
        Ok(g.row_iter().map(|r| r.iter().copied().collect()).collect())
    }

    /// Minimum-action path; returns a dict with `action`, `converged`,
    /// `iterations` and `path` (rows per mode).
    #[pyo3(signature = (start, end, t_end, m=200, max_iters=5000))]
    fn minimize_action<'py>(
        &self,
        py: Python<'py>,
        start: Vec<f64>,
        end: Vec<f64>,
        t_end: f64,
        m: usize,
        max_iters: usize,
    ) -> PyResult<Bound<'py, PyAny>> {
        let opts = MinimizeOptions { max_iters, ..MinimizeOptions::default() };
        let (a, b) = (vector(start), vector(end));
        let r = py
            .detach(|| minimize_action(&a, &b, t_end, m, &self.inner, InitialPath::HeteroclinicGuess, &opts))
            .map_err(to_py)?;
        let out = serde_json::json!({
            "action": r.action.total,
            "converged": r.converged,
            "iterations": r.iterations,
            "path": path_rows(&r.path),
        });
        json_to_py(py, &out)
    }

    /// Quasipotential report `{value, T_profile, N_eff, converged}`.
    #[pyo3(signature = (start, end, t_grid, m=400, multiscale_tol=None))]
    fn quasipotential<'py>(
        &self,
        py: Python<'py>,
        start: Vec<f64>,
        end: Vec<f64>,
        t_grid: Vec<f64>,
        m: usize,
        multiscale_tol: Option<f64>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let opts = MinimizeOptions::default();
        let (a, b) = (vector(start), vector(end));
        let report = py
            .detach(|| {
                let q = quasipotential(&a, &b, &self.inner, &t_grid, m, &opts)?;
                let n_eff = match multiscale_tol {
                    Some(tol) => Some(multiscale_truncate(&q.path, &self.inner, tol, &opts)?.n_eff),
                    None => None,
                };
                Ok::<_, Error>(q.report(n_eff))
            })
            .map_err(to_py)?;
        json_to_py(py, &report)
    }

    /// Kramers mean exit time from the lower (or upper) well of the mode-0
    /// potential. Requires a one-mode model.
    #[pyo3(signature = (epsilon, upper=false, a=-10.0, b=10.0))]
    fn kramers<'py>(&self, py: Python<'py>, epsilon: f64, upper: bool, a: f64, b: f64) -> PyResult<Bound<'py, PyAny>> {
        let v = ModeZeroPotential::new(&self.inner).map_err(to_py)?;
        let wells = DoubleWell::find(&v, a, b, 4000).map_err(to_py)?;
        let lambda0 = self.inner.lambda_sq().map_err(to_py)?[0].sqrt();
        let which = if upper { Well::Upper } else { Well::Lower };
        let k = kramers_scalar(&v, &wells, which, lambda0, epsilon).map_err(to_py)?;
        json_to_py(py, &serde_json::json!({ "wells": wells, "estimate": k }))
    }
}

/// Largest deviation of the discrete Gram matrix from the identity.
#[pyfunction]
#[pyo3(signature = (d, cutoff, order=None))]
fn gram_deviation(d: usize, cutoff: u32, order: Option<usize>) -> PyResult<f64> {
    let basis = build_basis(d, cutoff).map_err(to_py)?;
    let grid = build_quadrature(d, order.unwrap_or(4 * cutoff as usize + 64)).map_err(to_py)?;
    let n = basis.n_modes();
    Ok((gram_matrix(&basis, &grid) - DMatrix::identity(n, n)).amax())
}

/// Basis export (`{dim, cutoff, indices, lambda_sq, ...}`) with the
/// exponential noise spectrum.
#[pyfunction]
#[pyo3(signature = (d, cutoff, xi=1.0))]
fn basis<'py>(py: Python<'py>, d: usize, cutoff: u32, xi: f64) -> PyResult<Bound<'py, PyAny>> {
    let b = noise_spectrum_exponential(&build_basis(d, cutoff).map_err(to_py)?, xi).map_err(to_py)?;
    json_to_py(py, &b.export())
}

/// Kramers mean exit time for `V(x) = x⁴/4 − x²/2`.
#[pyfunction]
fn kramers_quartic(epsilon: f64) -> PyResult<f64> {
    let wells = DoubleWell::find(&SymmetricQuartic, -2.0, 2.1, 410).map_err(to_py)?;
    Ok(kramers_scalar(&SymmetricQuartic, &wells, Well::Lower, 1.0, epsilon).map_err(to_py)?.mean_exit_time)
}

/// Run a full CLI experiment from config text; returns the manifest dict.
#[pyfunction]
#[pyo3(signature = (config_text, output_dir=None))]
fn run_config<'py>(py: Python<'py>, config_text: &str, output_dir: Option<String>) -> PyResult<Bound<'py, PyAny>> {
    let mut cfg = parse_config(config_text).map_err(to_py)?;
    if let Some(dir) = output_dir {
        cfg.output_dir = dir;
    }
    let outcome = py.detach(|| run(&cfg)).map_err(to_py)?;
    json_to_py(py, &outcome.manifest)
}

#[pymodule]
fn nfldp(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(gram_deviation, m)?)?;
    m.add_function(wrap_pyfunction!(basis, m)?)?;
    m.add_function(wrap_pyfunction!(kramers_quartic, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    Ok(())
}
