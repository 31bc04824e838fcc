//! End-to-end acceptance checks. Each test prints one PASS/FAIL line on
//! stderr (bypassing the test harness capture) and then asserts.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::DMatrix;
use nfldp_core::cli::{run, Command, ExperimentConfig, StateSpec};
use nfldp_core::ldp::{
    action_eval, action_gradient, kramers_scalar, minimize_action, multiscale_truncate, quasipotential, DiscretePath,
    DoubleWell, InitialPath, MinimizeOptions, ModeZeroPotential, SymmetricQuartic, Well,
};
use nfldp_core::model::{stationary_solve, GainFunction, KernelSpec, ModelSpec, SolveMethod, SpectralCoupling};
use nfldp_core::noise::{covariance_diagnostic, ou_step, ou_truncation_error, wiener_increments, NoiseConfig, OUState};
use nfldp_core::sim::{
    exit_scaling, first_exit, galerkin_convergence, transition_times, ConvergenceSetup, ExitExperiment, Scheme,
};
use nfldp_core::spectral::{
    basis_eval, build_basis, build_quadrature, gram_matrix, noise_spectrum_exponential, project,
};
use nfldp_core::{stats, CoefficientVector};
use rand::{Rng, SeedableRng};

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    let line = format!("acceptance {id:>2} {name:<28} {} {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn solve(model: &ModelSpec, c: f64) -> CoefficientVector {
    stationary_solve(model, &model.constant_state(c), SolveMethod::Newton, 1e-13, 200).unwrap().u_star
}

// --- independent scalar oracle for the homogeneous bistable reduction -----

/// Mode-0 drift of the one-mode reduction written out by hand:
/// `g(u) = −u + √(2π) f(u/√(2π))`, `f(v) = ½(1 + tanh(4(v − ½)))`.
fn scalar_drift(u: f64) -> f64 {
    let s = (2.0 * PI).sqrt();
    -u + s * 0.5 * (1.0 + (4.0 * (u / s - 0.5)).tanh())
}

fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if (f(m) > 0.0) == (f(a) > 0.0) {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// `(u₋, s, u₊, ΔV)` with `ΔV = −∫_{u₋}^{s} g` by composite Simpson.
fn scalar_oracle() -> (f64, f64, f64, f64) {
    let xs: Vec<f64> = (0..=4000).map(|k| -1.0 + 5.0 * k as f64 / 4000.0).collect();
    let roots: Vec<f64> = xs
        .windows(2)
        .filter(|w| scalar_drift(w[0]) * scalar_drift(w[1]) < 0.0)
        .map(|w| bisect(scalar_drift, w[0], w[1]))
        .collect();
    assert_eq!(roots.len(), 3);
    let (lo, s, hi) = (roots[0], roots[1], roots[2]);
    let n = 200_000;
    let h = (s - lo) / n as f64;
    let mut acc = scalar_drift(lo) + scalar_drift(s);
    for k in 1..n {
        acc += if k % 2 == 1 { 4.0 } else { 2.0 } * scalar_drift(lo + k as f64 * h);
    }
    (lo, s, hi, -acc * h / 3.0)
}

fn scalar_quasipotential(model: &ModelSpec) -> f64 {
    let (lo, s) = (solve(model, 0.0), solve(model, 0.5));
    let q = quasipotential(&lo, &s, model, &[2.0, 4.0, 6.0, 8.0, 10.0], 500, &MinimizeOptions::default()).unwrap();
    q.value
}

// --- 1 ---------------------------------------------------------------------

#[test]
fn c01_spectral_fidelity() {
    let mut worst = 0.0f64;
    for (d, cutoff) in [(1, 63), (2, 4)] {
        let basis = build_basis(d, cutoff).unwrap();
        assert!(basis.n_modes() <= 64);
        let grid = build_quadrature(d, 4 * cutoff as usize + 64).unwrap();
        let g = gram_matrix(&basis, &grid);
        worst = worst.max((g - DMatrix::identity(basis.n_modes(), basis.n_modes())).amax());
    }
    let mut bound_ok = true;
    let b1 = build_basis(1, 63).unwrap();
    for k in 0..10_000 {
        let x = [2.0 * PI * k as f64 / 9_999.0];
        for i in b1.indices() {
            bound_ok &= basis_eval(&b1, i, &x).unwrap().abs() <= PI.powf(-0.5) + 1e-15;
        }
    }
    let b2 = build_basis(2, 4).unwrap();
    for k in 0..10_000 {
        let x = [2.0 * PI * (k % 100) as f64 / 99.0, 2.0 * PI * (k / 100) as f64 / 99.0];
        for i in b2.indices() {
            bound_ok &= basis_eval(&b2, i, &x).unwrap().abs() <= 1.0 / PI + 1e-15;
        }
    }
    let pass = worst < 1e-8 && bound_ok;
    report(1, "spectral fidelity", pass, &format!("max Gram deviation {worst:.2e}, sup bound holds: {bound_ok}"));
    assert!(pass);
}

// --- 2 ---------------------------------------------------------------------

#[test]
fn c02_noise_correctness() {
    let basis = noise_spectrum_exponential(&build_basis(1, 7).unwrap(), 1.0).unwrap();
    let cfg = NoiseConfig::new(basis, 1.0, 11).unwrap();
    let dt = 0.01;
    let inc = wiener_increments(&cfg, 0, dt, 100_000).unwrap();
    let lambda = cfg.lambda();
    let mut inc_dev = 0.0f64;
    for mode in 0..8 {
        let xs: Vec<f64> = inc.iter().map(|v| v[mode]).collect();
        inc_dev = inc_dev.max((stats::variance(&xs) / dt - 1.0).abs());
    }
    let alpha = 1.0;
    let mut state = OUState::zero(8);
    let mut samples: Vec<Vec<f64>> = vec![Vec::new(); 8];
    let mut stream = cfg.stream(1);
    let mut xi = vec![0.0; 8];
    for k in 0..100_050 {
        stream.next_normals(&mut xi);
        state = ou_step(&state, 1.0, &xi, alpha, &lambda);
        if k >= 50 {
            for (m, s) in samples.iter_mut().enumerate() {
                s.push(state.values[m]);
            }
        }
    }
    let ou_dev = (0..8)
        .map(|m| (stats::variance(&samples[m]) / (lambda[m] * lambda[m] / (2.0 * alpha)) - 1.0).abs())
        .fold(0.0, f64::max);

    let xi_c = 0.5;
    let cov_cfg =
        NoiseConfig::new(noise_spectrum_exponential(&build_basis(1, 40).unwrap(), xi_c).unwrap(), 1.0, 5).unwrap();
    let pairs = vec![
        (vec![3.0], vec![3.0]),
        (vec![2.5], vec![2.8]),
        (vec![3.4], vec![3.1]),
        (vec![2.0], vec![2.2]),
        (vec![4.0], vec![3.7]),
    ];
    let cov = covariance_diagnostic(&cov_cfg, xi_c, 1.0, &pairs, 50_000).unwrap();
    let pass = inc_dev < 0.05 && ou_dev < 0.05 && cov.series_z < 3.0 && cov.gaussian_rel_dev < 0.10;
    report(
        2,
        "noise correctness",
        pass,
        &format!(
            "increment var dev {inc_dev:.3}, OU var dev {ou_dev:.3}, series z {:.2}, gaussian rel dev {:.3}",
            cov.series_z, cov.gaussian_rel_dev
        ),
    );
    assert!(pass);
}

// --- 3 ---------------------------------------------------------------------

#[test]
fn c03_galerkin_convergence() {
    let reference = ModelSpec::homogeneous_bistable(1, 31, 1.0).unwrap();
    let grid = reference.grid();
    let samples: Vec<f64> = (0..grid.len()).map(|k| 0.5 + 0.4 * (2.0 * (grid.node(k)[0] - PI)).tanh()).collect();
    let initial = project(&samples, reference.basis(), grid).unwrap();
    let ns = vec![4, 8, 16];
    let mut monotone = true;
    let mut ratio_sums = vec![0.0; ns.len()];
    let seeds = 6;
    for seed in 0..seeds {
        let setup = ConvergenceSetup {
            reference: &reference,
            ns: ns.clone(),
            epsilon: 0.2,
            seed,
            path_id: 0,
            dt: 0.01,
            t_end: 5.0,
            initial: initial.clone(),
            scheme: Scheme::EulerMaruyama,
        };
        let rows = galerkin_convergence(&setup).unwrap();
        monotone &= rows.windows(2).all(|w| w[1].sup_l2 < w[0].sup_l2 && w[1].sup_grid < w[0].sup_grid);
        for (k, r) in rows.iter().enumerate() {
            ratio_sums[k] += r.sup_l2 / r.envelope / seeds as f64;
        }
    }
    let (lo, hi) = ratio_sums.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
    let band = hi / lo;
    let pass = monotone && band <= 10.0;
    report(
        3,
        "galerkin convergence",
        pass,
        &format!("strictly decreasing on {seeds} seeds: {monotone}, error/envelope in [{lo:.3}, {hi:.3}]"),
    );
    assert!(pass);
}

// --- 4 ---------------------------------------------------------------------

#[test]
fn c04_ou_truncation_rate() {
    let cfg =
        NoiseConfig::new(noise_spectrum_exponential(&build_basis(1, 31).unwrap(), 1.0).unwrap(), 1.0, 21).unwrap();
    let ratios: Vec<f64> = [2, 4, 8, 12, 16]
        .iter()
        .map(|&n| ou_truncation_error(&cfg, 1.0, n, 32, 5.0, 0.01, 400).unwrap().ratio)
        .collect();
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
    let pass = hi <= 5.0 && lo > 0.0 && hi / lo <= 5.0;
    report(4, "OU truncation rate", pass, &format!("E[sup err]/b_N over N = 2..16 in [{lo:.3}, {hi:.3}]"));
    assert!(pass);
}

// --- 5 ---------------------------------------------------------------------

#[test]
fn c05_rate_function_identities() {
    let basis = noise_spectrum_exponential(&build_basis(1, 2).unwrap(), 1.0).unwrap();
    let model = ModelSpec::new(
        1.0,
        GainFunction::Logistic { beta: 3.0, theta: 0.4 },
        KernelSpec::Gaussian { amplitude: 1.5, width: 0.8 },
        basis,
        None,
    )
    .unwrap();
    let mut rng = rand::rngs::StdRng::seed_from_u64(5);
    let mut identity = 0.0f64;
    for _ in 0..100 {
        let p = DiscretePath::new(2.0, DMatrix::from_fn(3, 31, |_, _| rng.random_range(-1.5..1.5))).unwrap();
        let a = action_eval(&p, &model).unwrap();
        identity = identity.max((a.total - 0.5 * (a.terms.0 - 2.0 * a.terms.1 + a.terms.2)).abs() / a.total);
    }

    let two = ModelSpec::homogeneous_bistable(1, 1, 1.0).unwrap();
    let mut p = DiscretePath::new(2.0, DMatrix::from_fn(2, 21, |_, _| rng.random_range(-1.0..1.0))).unwrap();
    let g = action_gradient(&p, &two).unwrap();
    let mut grad_err = 0.0f64;
    let h = 1e-6;
    for k in 1..20 {
        for i in 0..2 {
            let orig = p.nodes[(i, k)];
            p.nodes[(i, k)] = orig + h;
            let up = action_eval(&p, &two).unwrap().total;
            p.nodes[(i, k)] = orig - h;
            let dn = action_eval(&p, &two).unwrap().total;
            p.nodes[(i, k)] = orig;
            grad_err = grad_err.max(((up - dn) / (2.0 * h) - g[(i, k)]).abs());
        }
    }

    let smooth = |m: usize| {
        DiscretePath::new(
            3.0,
            DMatrix::from_fn(3, m + 1, |i, k| {
                let t = 3.0 * k as f64 / m as f64;
                (0.7 * t + i as f64).sin() / (1.0 + i as f64)
            }),
        )
        .unwrap()
    };
    let v: Vec<f64> = [50, 100, 200].iter().map(|&m| action_eval(&smooth(m), &model).unwrap().total).collect();
    let richardson = (v[0] - v[1]) / (v[1] - v[2]);

    let mut u = CoefficientVector::from_vec(vec![1.2, -0.4, 0.3]);
    let (t, m, sub) = (3.0, 3000, 10);
    let dt = t / (m * sub) as f64;
    let mut nodes = vec![u.clone()];
    for _ in 0..m {
        for _ in 0..sub {
            let k1 = model.drift(&u).unwrap();
            let k2 = model.drift(&(&u + &k1 * (dt / 2.0))).unwrap();
            let k3 = model.drift(&(&u + &k2 * (dt / 2.0))).unwrap();
            let k4 = model.drift(&(&u + &k3 * dt)).unwrap();
            u += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        }
        nodes.push(u.clone());
    }
    let ode_action = action_eval(&DiscretePath::from_nodes(t, &nodes).unwrap(), &model).unwrap().total;

    let pass = identity < 1e-9 && grad_err < 1e-5 && (3.0..=5.0).contains(&richardson) && ode_action < 1e-6;
    report(
        5,
        "rate function identities",
        pass,
        &format!(
            "identity {identity:.1e}, gradient {grad_err:.1e}, Richardson {richardson:.3}, ODE action {ode_action:.1e}"
        ),
    );
    assert!(pass);
}

// --- 6 ---------------------------------------------------------------------

#[test]
fn c06_quasipotential_oracle() {
    let model = ModelSpec::scalar_bistable().unwrap();
    let (_, _, _, dv) = scalar_oracle();
    let target = 2.0 * dv / model.lambda_sq().unwrap()[0];
    let z = scalar_quasipotential(&model);
    let rel = (z - target).abs() / target;
    let pass = rel < 0.02;
    report(6, "quasipotential oracle", pass, &format!("min action {z:.5}, 2ΔV/λ₀² {target:.5}, rel err {rel:.2e}"));
    assert!(pass);
}

// --- 7 ---------------------------------------------------------------------

#[test]
fn c07_exit_time_scaling() {
    let model = ModelSpec::scalar_bistable().unwrap();
    let lam2 = model.lambda_sq().unwrap()[0];
    let (lo, s, _, dv) = scalar_oracle();
    let z = scalar_quasipotential(&model);
    let epsilons: Vec<f64> = [3.0, 4.0, 5.0].iter().map(|k| (2.0 * dv / (k * lam2)).sqrt()).collect();
    let exp = ExitExperiment {
        center: CoefficientVector::from_element(1, lo),
        radius: 0.999 * (s - lo),
        epsilons: epsilons.clone(),
        n_paths: 1000,
        t_max: 1e7,
        dt: None,
        seed: 2024,
        scheme: Scheme::EulerMaruyama,
    };
    let samples: Vec<_> = (0..epsilons.len()).map(|j| first_exit(&model, &exp, j).unwrap()).collect();
    let scaling = exit_scaling(&samples).unwrap();
    let rel = (scaling.z_bar - z).abs() / z;
    let pass = rel < 0.20;
    let levels: Vec<String> = scaling.rows.iter().map(|r| format!("{:.4}", r.eps2_log_mean)).collect();
    report(
        7,
        "exit-time scaling",
        pass,
        &format!(
            "ε² ln E[τ] = [{}], extrapolated {:.4} ± {:.4}, quasipotential {z:.4}, rel err {rel:.3}",
            levels.join(", "),
            scaling.z_bar,
            scaling.z_bar_ci
        ),
    );
    assert!(pass);
}

// --- 8 ---------------------------------------------------------------------

#[test]
fn c08_kramers_cross_check() {
    let wells = DoubleWell::find(&SymmetricQuartic, -2.0, 2.1, 410).unwrap();
    let k = kramers_scalar(&SymmetricQuartic, &wells, Well::Lower, 1.0, 0.1f64.sqrt()).unwrap();
    let exact = 2.0 * PI / 2.0f64.sqrt() * 5.0f64.exp();
    let quartic_rel = (k.mean_exit_time - exact).abs() / exact;

    let model = ModelSpec::scalar_bistable().unwrap();
    let lam0 = model.lambda_sq().unwrap()[0].sqrt();
    let v = ModeZeroPotential::new(&model).unwrap();
    let w = DoubleWell::find(&v, -1.0, 4.0, 2000).unwrap();
    let barrier = w.barrier(&v, Well::Lower);
    let mut ratios = Vec::new();
    for (j, kk) in [3.0, 4.0, 5.0].iter().enumerate() {
        let eps = (2.0 * barrier / (kk * lam0 * lam0)).sqrt();
        let pred = kramers_scalar(&v, &w, Well::Lower, lam0, eps).unwrap();
        let start = CoefficientVector::from_element(1, w.lower);
        let target = CoefficientVector::from_element(1, w.upper);
        let delta = 0.1 * (w.upper - w.lower);
        let s = transition_times(&model, &start, &target, delta, eps, 200, 1e7, 0.01, 77 + j as u64).unwrap();
        ratios.push(s.mean().unwrap() / pred.mean_exit_time);
    }
    let within = ratios.iter().all(|r| (1.0 / 3.0..=3.0).contains(r));
    let pass = quartic_rel < 1e-12 && within;
    let shown: Vec<String> = ratios.iter().map(|r| format!("{r:.3}")).collect();
    report(
        8,
        "Kramers cross-check",
        pass,
        &format!("quartic rel err {quartic_rel:.1e}, MC/Kramers ratios [{}]", shown.join(", ")),
    );
    assert!(pass);
}

// --- 9 ---------------------------------------------------------------------

#[test]
fn c09_multiscale_truncation() {
    let model = ModelSpec::homogeneous_bistable(1, 15, 1.0).unwrap();
    let lo = solve(&model, 0.0);
    let s = solve(&model, 0.5);
    let mut start = lo.clone();
    start[1] += 0.3;
    start[2] -= 0.2;
    let opts = MinimizeOptions::default();
    let r = minimize_action(&start, &s, 8.0, 200, &model, InitialPath::HeteroclinicGuess, &opts).unwrap();
    let ms = multiscale_truncate(&r.path, &model, 0.01, &opts).unwrap();
    let change = (ms.pinned_actions[ms.n_eff] - ms.full_action).abs() / ms.full_action;
    let pass = ms.n_eff < 16 && change < 0.01;
    report(
        9,
        "multi-scale truncation",
        pass,
        &format!("N_eff {} of 16, relative action change {change:.2e}, full action {:.4}", ms.n_eff, ms.full_action),
    );
    assert!(pass);
}

// --- 10 --------------------------------------------------------------------

#[test]
fn c10_projected_nonlinearity_bound() {
    let basis = noise_spectrum_exponential(&build_basis(1, 15).unwrap(), 1.0).unwrap();
    let n = basis.n_modes();
    let model = ModelSpec::new(
        1.0,
        GainFunction::TanhSigmoid { beta: 4.0, theta: 0.5 },
        KernelSpec::SpectralCoupled(SpectralCoupling::explicit(vec![1.0; n])),
        basis,
        None,
    )
    .unwrap();
    let bound = (2.0 * PI).sqrt();
    let mut rng = rand::rngs::StdRng::seed_from_u64(10);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let scale = rng.random_range(0.1..20.0);
        let u = CoefficientVector::from_fn(n, |_, _| rng.random_range(-scale..scale));
        worst = worst.max(model.nemytskii(&u).unwrap().amax());
    }
    let pass = worst <= bound * (1.0 + 1e-9);
    report(10, "projected nonlinearity bound", pass, &format!("max |P_N F(U)_i| {worst:.5} vs K_f √(2π) {bound:.5}"));
    assert!(pass);
}

// --- 11 --------------------------------------------------------------------

#[test]
fn c11_reproducibility() {
    let tmp = tempfile::tempdir().unwrap();
    let mut all_equal = true;
    for command in [Command::Simulate, Command::ExitTimes, Command::Quasipotential] {
        let mut cfg = ExperimentConfig::new(command);
        cfg.model.basis.cutoff = 3;
        cfg.model.quadrature_order = None;
        cfg = cfg.expanded();
        if let Some(e) = cfg.exit_times.as_mut() {
            e.n_paths = 40;
            e.radius = 0.6;
            e.epsilons = vec![0.5, 0.45, 0.4];
        }
        if let Some(q) = cfg.quasipotential.as_mut() {
            q.t_grid = vec![1.0, 2.0, 3.0];
            q.m = 60;
            q.multiscale_tol = None;
            q.end = StateSpec::Stationary { guess: 0.5 };
        }
        let mut checksums = Vec::new();
        for rep in 0..2 {
            cfg.output_dir = tmp.path().join(format!("{}-{rep}", command.name())).to_string_lossy().into_owned();
            let outcome = run(&cfg).unwrap();
            checksums.push(
                outcome
                    .manifest
                    .outputs
                    .iter()
                    .filter(|o| o.file != "config.json")
                    .map(|o| o.sha256.clone())
                    .collect::<Vec<_>>(),
            );
        }
        all_equal &= checksums[0] == checksums[1] && !checksums[0].is_empty();
    }
    report(11, "reproducibility", all_equal, "simulate, exit-times, quasipotential reruns give identical checksums");
    assert!(all_equal);
}
