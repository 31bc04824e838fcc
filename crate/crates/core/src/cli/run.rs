use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::config::{Command, ExperimentConfig};
use super::manifest::{sha256_hex, RunDir, RunManifest};
use crate::ldp::{
    action_eval, boundary_quasipotential, kramers_scalar, minimize_path, multiscale_truncate, quasipotential,
    DiscretePath, DoubleWell, ModeZeroPotential, Potential1D, Well,
};
use crate::model::{stationary_solve, KernelSpec, ModelSpec, SpectralCoupling};
use crate::noise::NoiseConfig;
use crate::sim::{
    exit_scaling, first_exit, galerkin_convergence, gronwall_envelope, simulate, transition_times, validate_radius,
    ConvergenceSetup, ExitExperiment, ExitSamples, SimConfig,
};
use crate::spectral::domain_measure;
use crate::{CoefficientVector, Error, Result};

/// Completed run. `flagged` marks outputs that were written but record a
/// censoring or convergence failure.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    pub flagged: Option<String>,
}

/// Process exit status for an error: 2 configuration, 4 censoring or
/// convergence, 3 any other numerical failure.
pub fn exit_code(err: &Error) -> i32 {
    match err.root() {
        Error::Config(_)
        | Error::InvalidParameter { .. }
        | Error::UnsupportedDimension(_)
        | Error::LengthMismatch { .. }
        | Error::OutsideDomain { .. }
        | Error::SpectrumUnset
        | Error::RadiusOutsideBasin { .. }
        | Error::Json(_) => 2,
        Error::AllCensored { .. } | Error::ExcessiveCensoring { .. } | Error::NonConvergence { .. } => 4,
        _ => 3,
    }
}

/// Hash of the canonical JSON form of the expanded config.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    // Where and on how many threads a run happens does not change its results.
    let mut key = cfg.clone();
    key.output_dir.clear();
    key.threads = 0;
    sha256_hex(serde_json::to_string(&key).expect("config serializes").as_bytes())
}

/// Executes the configured command into `cfg.output_dir`, on a pool of
/// `cfg.threads` workers.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Config(format!("threads: {e}")))?;
    pool.install(|| run_inner(cfg))
}

fn run_inner(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let clock = Instant::now();
    let mut out = RunDir::create(&cfg.output_dir)?;
    out.write("config.json", format!("{}\n", cfg.to_json()).as_bytes())?;
    let model = cfg.model.build(cfg.noise.xi).map_err(|e| e.in_module("field_model"))?;
    let flagged = match cfg.command {
        Command::Spectrum => spectrum(cfg, &model, &mut out)?,
        Command::Stationary => stationary(cfg, &model, &mut out).map_err(|e| e.in_module("field_model"))?,
        Command::Simulate => run_simulate(cfg, &model, &mut out).map_err(|e| e.in_module("galerkin_sim"))?,
        Command::Convergence => convergence(cfg, &model, &mut out).map_err(|e| e.in_module("galerkin_sim"))?,
        Command::ExitTimes => exit_times(cfg, &model, &mut out).map_err(|e| e.in_module("galerkin_sim"))?,
        Command::Action => action(cfg, &model, &mut out).map_err(|e| e.in_module("ldp_action"))?,
        Command::Quasipotential => run_quasipotential(cfg, &model, &mut out).map_err(|e| e.in_module("ldp_action"))?,
        Command::KramersCompare => kramers_compare(cfg, &model, &mut out).map_err(|e| e.in_module("ldp_action"))?,
    };
    if let Some(reason) = &flagged {
        log::warn!("{reason}");
    }
    let manifest = out.finish(cfg.command.name(), config_hash(cfg), clock.elapsed().as_secs_f64())?;
    Ok(RunOutcome { manifest, flagged })
}

type Flag = Option<String>;

fn csv_line(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn spectrum(cfg: &ExperimentConfig, model: &ModelSpec, out: &mut RunDir) -> Result<Flag> {
    let basis = model.basis();
    out.write_json("basis.json", &basis.export())?;
    let lam = basis.lambda_sq()?;
    let rows: Vec<_> =
        basis.indices().iter().zip(lam).map(|(i, l)| json!({"index": i, "norm": i.norm(), "lambda_sq": l})).collect();
    out.write_json("spectrum.json", &json!({"xi": cfg.noise.xi, "trace": lam.iter().sum::<f64>(), "modes": rows}))?;
    Ok(None)
}

fn stationary(cfg: &ExperimentConfig, model: &ModelSpec, out: &mut RunDir) -> Result<Flag> {
    let p = cfg.stationary.as_ref().expect("expanded config");
    let mut states = Vec::new();
    for &g in &p.guesses {
        let s = stationary_solve(model, &model.constant_state(g), p.method, p.tol, p.max_iter)?;
        states.push(json!({
            "guess": g,
            "u_star": s.u_star.as_slice(),
            "residual": s.residual,
            "iterations": s.iterations,
            "classification": s.classification,
            "eigenvalues": s.jacobian_eigs.iter().map(|e| [e.re, e.im]).collect::<Vec<_>>(),
            "eta": s.eta(model.alpha()),
        }));
    }
    out.write_json("stationary.json", &json!({ "states": states }))?;
    Ok(None)
}

fn run_simulate(cfg: &ExperimentConfig, model: &ModelSpec, out: &mut RunDir) -> Result<Flag> {
    let p = cfg.simulate.as_ref().expect("expanded config");
    let noise = NoiseConfig::new(model.basis().clone(), cfg.noise.epsilon, cfg.seed)?;
    let initial = p.initial.resolve(model)?;
    let sim = SimConfig {
        model,
        noise: &noise,
        dt: p.dt,
        t_end: p.t_end,
        initial: initial.clone(),
        scheme: p.scheme,
        record_every: p.record_every,
    };
    let files: Vec<(Vec<u8>, serde_json::Value)> = (0..p.n_paths as u64)
        .into_par_iter()
        .map(|id| {
            let traj = simulate(&sim, id)?;
            let mut csv = Vec::new();
            traj.write_csv(&mut csv)?;
            let meta = json!({
                "seed": cfg.seed,
                "path_id": id,
                "N": model.n_modes(),
                "dt": p.dt,
                "epsilon": cfg.noise.epsilon,
                "scheme": p.scheme,
                "t_end": p.t_end,
                "sup_norm": traj.sup_norm(),
                "noise_sup": traj.noise_sup,
                "gronwall_envelope": gronwall_envelope(model, initial.norm(), traj.noise_sup, p.t_end),
            });
            Ok((csv, meta))
        })
        .collect::<Result<_>>()?;
    for (id, (csv, meta)) in files.iter().enumerate() {
        out.write(&format!("path_{id:04}.csv"), csv)?;
        out.write_json(&format!("path_{id:04}.json"), meta)?;
    }
    Ok(None)
}

fn convergence(cfg: &ExperimentConfig, model: &ModelSpec, out: &mut RunDir) -> Result<Flag> {
    let p = cfg.convergence.as_ref().expect("expanded config");
    let initial = p.initial.resolve(model)?;
    let per_seed: Vec<_> = (0..p.n_seeds as u64)
        .into_par_iter()
        .map(|s| {
            let setup = ConvergenceSetup {
                reference: model,
                ns: p.ns.clone(),
                epsilon: cfg.noise.epsilon,
                seed: cfg.seed.wrapping_add(s),
                path_id: 0,
                dt: p.dt,
                t_end: p.t_end,
                initial: initial.clone(),
                scheme: p.scheme,
            };
            galerkin_convergence(&setup).map(|rows| (setup.seed, rows))
        })
        .collect::<Result<_>>()?;
    let mut csv = String::from("seed,n,sup_l2,sup_grid,tail_trace_sqrt,initial_tail,envelope\n");
    let mut monotone = Vec::new();
    let mut ratios = Vec::new();
    for (seed, rows) in &per_seed {
        for r in rows {
            csv.push_str(&format!(
                "{seed},{},{}\n",
                r.n,
                csv_line(&[r.sup_l2, r.sup_grid, r.tail_trace_sqrt, r.initial_tail, r.envelope])
            ));
            if r.envelope > 0.0 {
                ratios.push(r.sup_l2 / r.envelope);
            }
        }
        let ok = rows.windows(2).all(|w| w[1].sup_l2 < w[0].sup_l2 && w[1].sup_grid < w[0].sup_grid);
        monotone.push(json!({"seed": seed, "strictly_decreasing": ok}));
    }
    out.write("convergence.csv", csv.as_bytes())?;
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
    out.write_json(
        "convergence.json",
        &json!({
            "n_ref": model.n_modes(),
            "ns": p.ns,
            "seeds": monotone,
            "envelope_ratio_min": lo,
            "envelope_ratio_max": hi,
        }),
    )?;
    Ok(None)
}

#[derive(Serialize)]
struct LevelSummary {
    epsilon: f64,
    n: usize,
    mean: Option<f64>,
    sem: Option<f64>,
    eps2_log_mean: Option<f64>,
    n_censored: usize,
    dt: f64,
}

fn level_summary(s: &ExitSamples) -> LevelSummary {
    let exits = s.n() - s.n_censored();
    let mean = s.mean();
    LevelSummary {
        epsilon: s.epsilon,
        n: s.n(),
        mean,
        sem: mean.map(|m| m / (exits as f64).sqrt()),
        eps2_log_mean: mean.map(|m| s.epsilon * s.epsilon * m.ln()),
        n_censored: s.n_censored(),
        dt: s.dt,
    }
}

fn censoring_flag(samples: &[ExitSamples]) -> Flag {
    samples
        .iter()
        .find(|s| s.censored_fraction() >= 0.5)
        .map(|s| format!("censoring fraction {:.3} at epsilon = {}", s.censored_fraction(), s.epsilon))
}

fn exit_times(cfg: &ExperimentConfig, model: &ModelSpec, out: &mut RunDir) -> Result<Flag> {
    let p = cfg.exit_times.as_ref().expect("expanded config");
    let center = p.center.resolve(model)?;
    if p.check_radius {
        validate_radius(model, &center, p.radius, 16, cfg.seed)?;
    }
    let exp = ExitExperiment {
        center,
        radius: p.radius,
        epsilons: p.epsilons.clone(),
        n_paths: p.n_paths,
        t_max: p.t_max,
        dt: p.dt,
        seed: cfg.seed,
        scheme: p.scheme,
    };
    let samples: Vec<ExitSamples> =
        (0..exp.epsilons.len()).map(|j| first_exit(model, &exp, j)).collect::<Result<_>>()?;
    let mut csv = Vec::from(&b"epsilon,path_id,tau,censored\n"[..]);
    for s in &samples {
        s.write_csv_rows(&mut csv)?;
    }
    out.write("exit_times.csv", &csv)?;
    let flag = censoring_flag(&samples);
    let scaling = if samples.len() >= 3 && flag.is_none() { Some(exit_scaling(&samples)?) } else { None };
    out.write_json(
        "exit_summary.json",
        &json!({
            "levels": samples.iter().map(level_summary).collect::<Vec<_>>(),
            "z_bar": scaling.as_ref().map(|s| s.z_bar),
            "z_bar_ci": scaling.as_ref().map(|s| s.z_bar_ci),
            "fit": scaling.as_ref().map(|s| &s.fit),
        }),
    )?;
    Ok(flag)
}

fn path_csv(path: &DiscretePath) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    path.write_csv(&mut buf)?;
    Ok(buf)
}

fn action(cfg: &ExperimentConfig, model: &ModelSpec, out: &mut RunDir) -> Result<Flag> {
    let p = cfg.action.as_ref().expect("expanded config");
    let start = p.start.resolve(model)?;
    let end = p.end.resolve(model)?;
    let path = DiscretePath::initial(&start, &end, p.t_end, p.m, p.init)?;
    let (path, value, converged, iterations) = if p.minimize {
        let r = minimize_path(path, model, &p.options, model.n_modes())?;
        (r.path, r.action, r.converged, r.iterations)
    } else {
        let a = action_eval(&path, model)?;
        (path, a, true, 0)
    };
    out.write("path.csv", &path_csv(&path)?)?;
    out.write_json(
        "action.json",
        &json!({
            "total": value.total,
            "terms": {"a1": value.terms.0, "a2": value.terms.1, "a3": value.terms.2},
            "T": p.t_end,
            "M": p.m,
            "minimized": p.minimize,
            "converged": converged,
            "iterations": iterations,
        }),
    )?;
    Ok((!converged).then(|| format!("action minimisation did not converge in {iterations} iterations")))
}

fn run_quasipotential(cfg: &ExperimentConfig, model: &ModelSpec, out: &mut RunDir) -> Result<Flag> {
    let p = cfg.quasipotential.as_ref().expect("expanded config");
    let start = p.start.resolve(model)?;
    let end = p.end.resolve(model)?;
    let n = model.n_modes();
    let (q, boundary) = match &p.boundary {
        None => (quasipotential(&start, &end, model, &p.t_grid, p.m, &p.options)?, None),
        Some(b) => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let points: Vec<CoefficientVector> = (0..b.n_points)
                .map(|_| {
                    let d = CoefficientVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
                    &start + d.normalize() * b.radius
                })
                .collect();
            let search = boundary_quasipotential(&start, &end, &points, model, &p.t_grid, p.m, &p.options)?;
            let rows: Vec<_> = search
                .boundary
                .iter()
                .map(|(v, r)| json!({"point": v.as_slice(), "value": r.value, "converged": r.converged}))
                .collect();
            let summary = json!({"saddle_value": search.saddle.value, "boundary": rows, "z_bar": search.z_bar});
            (search.saddle, Some(summary))
        }
    };
    let n_eff = match p.multiscale_tol {
        Some(tol) => {
            let ms = multiscale_truncate(&q.path, model, tol, &p.options)?;
            out.write_json("multiscale.json", &ms)?;
            Some(ms.n_eff)
        }
        None => None,
    };
    if let Some(b) = boundary {
        out.write_json("boundary.json", &b)?;
    }
    out.write("path.csv", &path_csv(&q.path)?)?;
    out.write_json("quasipotential.json", &q.report(n_eff))?;
    Ok((!q.converged).then(|| "quasipotential minimisation did not converge on every horizon".to_string()))
}

/// One-mode model for the Kramers comparison. A diagonal kernel keeps the
/// constant mode invariant, so a two-point grid integrates it exactly and the
/// Monte Carlo runs far faster than on the full grid.
fn mode_zero_reduction(model: &ModelSpec) -> Result<ModelSpec> {
    match model.kappa() {
        Some(kappa) => ModelSpec::new(
            model.alpha(),
            model.gain().clone(),
            KernelSpec::SpectralCoupled(SpectralCoupling::explicit(vec![kappa[0]])),
            model.basis().truncated(1)?,
            Some(2),
        ),
        None => model.truncated(1),
    }
}

fn kramers_compare(cfg: &ExperimentConfig, model: &ModelSpec, out: &mut RunDir) -> Result<Flag> {
    let p = cfg.kramers_compare.as_ref().expect("expanded config");
    let reduced = mode_zero_reduction(model)?;
    let lambda0 = reduced.lambda_sq()?[0].sqrt();
    let v = ModeZeroPotential::new(&reduced)?;
    let sup = reduced.gain().sup_abs().unwrap_or(10.0);
    let reach =
        reduced.nonlinearity_bound() * sup * domain_measure(reduced.basis().dim()).sqrt() / reduced.alpha() + 1.0;
    let wells = DoubleWell::find(&v, -reach, reach, 4000)?;
    let (from, to) = match p.well {
        Well::Lower => (wells.lower, wells.upper),
        Well::Upper => (wells.upper, wells.lower),
    };
    let barrier = wells.barrier(&v, p.well);
    let epsilons: Vec<f64> = if p.epsilons.is_empty() {
        [3.0, 4.0, 5.0].iter().map(|k| (2.0 * barrier / (k * lambda0 * lambda0)).sqrt()).collect()
    } else {
        p.epsilons.clone()
    };
    let delta = p.delta * (to - from).abs();
    let start = CoefficientVector::from_element(1, from);
    let target = CoefficientVector::from_element(1, to);
    let mut csv = Vec::from(&b"epsilon,path_id,tau,censored\n"[..]);
    let mut rows = Vec::new();
    let mut samples = Vec::new();
    for (j, &eps) in epsilons.iter().enumerate() {
        let k = kramers_scalar(&v, &wells, p.well, lambda0, eps)?;
        let s = transition_times(
            &reduced,
            &start,
            &target,
            delta,
            eps,
            p.n_paths,
            p.t_max,
            p.dt,
            cfg.seed.wrapping_add(j as u64),
        )?;
        s.write_csv_rows(&mut csv)?;
        let level = level_summary(&s);
        rows.push(json!({
            "epsilon": eps,
            "exponent": k.exponent,
            "kramers_mean": k.mean_exit_time,
            "prefactor": k.prefactor,
            "mc_mean": level.mean,
            "mc_sem": level.sem,
            "ratio": level.mean.map(|m| m / k.mean_exit_time),
            "n": level.n,
            "n_censored": level.n_censored,
        }));
        samples.push(s);
    }
    out.write("kramers_times.csv", &csv)?;
    out.write_json(
        "kramers.json",
        &json!({
            "lambda0": lambda0,
            "wells": wells,
            "barrier": barrier,
            "quasipotential": 2.0 * barrier / (lambda0 * lambda0),
            "curvature_saddle": v.second_deriv(wells.saddle),
            "curvature_well": v.second_deriv(from),
            "levels": rows,
        }),
    )?;
    Ok(censoring_flag(&samples))
}
