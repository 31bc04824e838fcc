use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ldp::{InitialPath, MinimizeOptions, Well};
use crate::model::{
    stationary_solve, BasisConfig, GainFunction, KernelSpec, ModelConfig, ModelSpec, SolveMethod, SpectralCoupling,
};
use crate::noise::RngKind;
use crate::sim::Scheme;
use crate::spectral::{build_basis, default_quadrature_order, project};
use crate::{CoefficientVector, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Spectrum,
    Stationary,
    Simulate,
    Convergence,
    ExitTimes,
    Action,
    Quasipotential,
    KramersCompare,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Stationary => "stationary",
            Command::Simulate => "simulate",
            Command::Convergence => "convergence",
            Command::ExitTimes => "exit-times",
            Command::Action => "action",
            Command::Quasipotential => "quasipotential",
            Command::KramersCompare => "kramers-compare",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSection {
    /// Correlation length of the exponential spectrum.
    pub xi: f64,
    pub epsilon: f64,
    pub rng: RngKind,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self { xi: 1.0, epsilon: 0.1, rng: RngKind::Chacha8 }
    }
}

/// A state in coefficient space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StateSpec {
    /// `U ≡ value`.
    Constant {
        value: f64,
    },
    Coefficients {
        values: Vec<f64>,
    },
    /// Newton solve started from `U ≡ guess`.
    Stationary {
        guess: f64,
    },
    /// `U(x) = offset + amplitude · tanh(steepness (x₁ − π))`, projected.
    TanhFront {
        offset: f64,
        amplitude: f64,
        steepness: f64,
    },
}

impl StateSpec {
    pub fn resolve(&self, model: &ModelSpec) -> Result<CoefficientVector> {
        let n = model.n_modes();
        match self {
            StateSpec::Constant { value } => Ok(model.constant_state(*value)),
            StateSpec::Coefficients { values } => {
                if values.len() != n {
                    return Err(Error::LengthMismatch { expected: n, got: values.len() });
                }
                Ok(CoefficientVector::from_column_slice(values))
            }
            StateSpec::Stationary { guess } => {
                let s = stationary_solve(model, &model.constant_state(*guess), SolveMethod::Newton, 1e-12, 200)?;
                Ok(s.u_star)
            }
            StateSpec::TanhFront { offset, amplitude, steepness } => {
                let grid = model.grid();
                let samples: Vec<f64> = (0..grid.len())
                    .map(|k| offset + amplitude * (steepness * (grid.node(k)[0] - std::f64::consts::PI)).tanh())
                    .collect();
                project(&samples, model.basis(), grid)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StationaryParams {
    pub guesses: Vec<f64>,
    pub method: SolveMethod,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for StationaryParams {
    fn default() -> Self {
        Self { guesses: vec![0.0, 0.5, 1.0], method: SolveMethod::Newton, tol: 1e-12, max_iter: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateParams {
    pub initial: StateSpec,
    pub t_end: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub scheme: Scheme,
    pub record_every: usize,
}

impl Default for SimulateParams {
    fn default() -> Self {
        Self {
            initial: StateSpec::Stationary { guess: 0.0 },
            t_end: 10.0,
            dt: 0.01,
            n_paths: 1,
            scheme: Scheme::EulerMaruyama,
            record_every: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConvergenceParams {
    pub ns: Vec<usize>,
    pub n_seeds: usize,
    pub initial: StateSpec,
    pub t_end: f64,
    pub dt: f64,
    pub scheme: Scheme,
}

impl Default for ConvergenceParams {
    fn default() -> Self {
        Self {
            ns: vec![4, 8, 16],
            n_seeds: 5,
            initial: StateSpec::TanhFront { offset: 0.5, amplitude: 0.4, steepness: 2.0 },
            t_end: 5.0,
            dt: 0.01,
            scheme: Scheme::EulerMaruyama,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExitTimesParams {
    pub center: StateSpec,
    pub radius: f64,
    pub epsilons: Vec<f64>,
    pub n_paths: usize,
    pub t_max: f64,
    /// `null` picks the step per noise level.
    pub dt: Option<f64>,
    pub scheme: Scheme,
    pub check_radius: bool,
}

impl Default for ExitTimesParams {
    fn default() -> Self {
        Self {
            center: StateSpec::Stationary { guess: 0.0 },
            radius: 0.5,
            epsilons: vec![0.3, 0.25, 0.2],
            n_paths: 1000,
            t_max: 1e4,
            dt: None,
            scheme: Scheme::EulerMaruyama,
            check_radius: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ActionParams {
    pub start: StateSpec,
    pub end: StateSpec,
    pub t_end: f64,
    pub m: usize,
    pub init: InitialPath,
    /// Evaluate the initial path only when false.
    pub minimize: bool,
    pub options: MinimizeOptions,
}

impl Default for ActionParams {
    fn default() -> Self {
        Self {
            start: StateSpec::Stationary { guess: 0.0 },
            end: StateSpec::Stationary { guess: 0.5 },
            t_end: 10.0,
            m: 200,
            init: InitialPath::HeteroclinicGuess,
            minimize: true,
            options: MinimizeOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoundaryParams {
    pub radius: f64,
    pub n_points: usize,
}

impl Default for BoundaryParams {
    fn default() -> Self {
        Self { radius: 0.5, n_points: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuasipotentialParams {
    pub start: StateSpec,
    pub end: StateSpec,
    pub t_grid: Vec<f64>,
    pub m: usize,
    pub options: MinimizeOptions,
    /// Relative tolerance of the multi-scale test; `null` skips it.
    pub multiscale_tol: Option<f64>,
    /// Sampled sphere points around `start`; `null` targets `end` only.
    pub boundary: Option<BoundaryParams>,
}

impl Default for QuasipotentialParams {
    fn default() -> Self {
        Self {
            start: StateSpec::Stationary { guess: 0.0 },
            end: StateSpec::Stationary { guess: 0.5 },
            t_grid: vec![2.0, 4.0, 8.0, 12.0],
            m: 400,
            options: MinimizeOptions::default(),
            multiscale_tol: Some(0.01),
            boundary: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KramersParams {
    pub well: Well,
    pub epsilons: Vec<f64>,
    pub n_paths: usize,
    pub t_max: f64,
    pub dt: f64,
    /// Arrival ball radius around the opposite well, relative to the well
    /// separation.
    pub delta: f64,
}

impl Default for KramersParams {
    fn default() -> Self {
        Self { well: Well::Lower, epsilons: vec![], n_paths: 200, t_max: 1e5, dt: 0.01, delta: 0.1 }
    }
}

fn default_output_dir() -> String {
    "nfldp-run".into()
}

fn default_model() -> ModelConfig {
    ModelConfig {
        alpha: 1.0,
        gain: GainFunction::TanhSigmoid { beta: 4.0, theta: 0.5 },
        kernel: KernelSpec::SpectralCoupled(SpectralCoupling::from_spectrum(1.0, 1.0)),
        basis: BasisConfig { d: 1, cutoff: 15 },
        quadrature_order: None,
    }
}

/// One experiment: a command, the model and noise it runs on, and the
/// parameters of that command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub command: Command,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
    /// Worker threads; 0 uses every core.
    #[serde(default)]
    pub threads: usize,
    #[serde(default = "default_model")]
    pub model: ModelConfig,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stationary: Option<StationaryParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exit_times: Option<ExitTimesParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<ActionParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quasipotential: Option<QuasipotentialParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kramers_compare: Option<KramersParams>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Toml,
}

impl Format {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => Format::Toml,
            _ => Format::Json,
        }
    }

    fn sniff(text: &str) -> Self {
        if text.trim_start().starts_with('{') {
            Format::Json
        } else {
            Format::Toml
        }
    }
}

/// Parses, rejects unknown keys, fills the command's defaults and validates.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    parse_config_as(text, Format::sniff(text))
}

pub fn parse_config_as(text: &str, format: Format) -> Result<ExperimentConfig> {
    let mut unknown = Vec::new();
    let mut track = |p: serde_ignored::Path<'_>| unknown.push(p.to_string().replace(".?", "").replace("?.", ""));
    let cfg: ExperimentConfig = match format {
        Format::Json => {
            let mut de = serde_json::Deserializer::from_str(text);
            serde_ignored::deserialize(&mut de, &mut track).map_err(|e| Error::Config(e.to_string()))?
        }
        Format::Toml => {
            let de = toml::Deserializer::parse(text).map_err(|e| Error::Config(e.to_string()))?;
            serde_ignored::deserialize(de, &mut track).map_err(|e| Error::Config(e.to_string()))?
        }
    };
    if !unknown.is_empty() {
        return Err(Error::Config(format!("unknown keys: {}", unknown.join(", "))));
    }
    let cfg = cfg.expanded();
    cfg.validate()?;
    Ok(cfg)
}

/// Parses a config for a command chosen on the command line. A config
/// without a `command` key takes `command`; a different one is an error.
pub fn parse_config_for(text: &str, format: Format, command: Command) -> Result<ExperimentConfig> {
    let present = match format {
        Format::Json => {
            let mut v: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
            let obj = v.as_object_mut().ok_or_else(|| Error::Config("config must be an object".into()))?;
            let present = obj.get("command").cloned();
            if present.is_none() {
                obj.insert("command".into(), serde_json::to_value(command)?);
                return parse_config_as(&v.to_string(), format);
            }
            present.and_then(|c| c.as_str().map(str::to_string))
        }
        Format::Toml => {
            let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
            match table.get("command") {
                None => return parse_config_as(&format!("command = \"{}\"\n{text}", command.name()), format),
                Some(c) => c.as_str().map(str::to_string),
            }
        }
    };
    let cfg = parse_config_as(text, format)?;
    if cfg.command != command {
        return Err(Error::Config(format!(
            "config command {} does not match requested {}",
            present.unwrap_or_default(),
            command.name()
        )));
    }
    Ok(cfg)
}

impl ExperimentConfig {
    /// Minimal config for `command` with every default filled in.
    pub fn new(command: Command) -> Self {
        Self {
            command,
            seed: 0,
            output_dir: default_output_dir(),
            threads: 0,
            model: default_model(),
            noise: NoiseSection::default(),
            stationary: None,
            simulate: None,
            convergence: None,
            exit_times: None,
            action: None,
            quasipotential: None,
            kramers_compare: None,
        }
        .expanded()
    }

    /// Same config with the command's section and the quadrature order made
    /// explicit.
    pub fn expanded(mut self) -> Self {
        match self.command {
            Command::Spectrum => {}
            Command::Stationary => {
                self.stationary.get_or_insert_with(Default::default);
            }
            Command::Simulate => {
                self.simulate.get_or_insert_with(Default::default);
            }
            Command::Convergence => {
                self.convergence.get_or_insert_with(Default::default);
            }
            Command::ExitTimes => {
                self.exit_times.get_or_insert_with(Default::default);
            }
            Command::Action => {
                self.action.get_or_insert_with(Default::default);
            }
            Command::Quasipotential => {
                self.quasipotential.get_or_insert_with(Default::default);
            }
            Command::KramersCompare => {
                self.kramers_compare.get_or_insert_with(Default::default);
            }
        }
        if self.model.quadrature_order.is_none() {
            if let Ok(b) = build_basis(self.model.basis.d, self.model.basis.cutoff) {
                self.model.quadrature_order = Some(default_quadrature_order(&b));
            }
        }
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Range checks; the first failure names its field.
    pub fn validate(&self) -> Result<()> {
        fn positive(name: &str, v: f64) -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be > 0")))
            }
        }
        fn nonneg(name: &str, v: f64) -> Result<()> {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be >= 0")))
            }
        }
        fn nonzero(name: &str, v: usize) -> Result<()> {
            if v > 0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be > 0")))
            }
        }
        positive("alpha", self.model.alpha)?;
        positive("xi", self.noise.xi)?;
        nonneg("epsilon", self.noise.epsilon)?;
        if !(1..=2).contains(&self.model.basis.d) {
            return Err(Error::Config("basis.d must be 1 or 2".into()));
        }
        if let Some(p) = &self.stationary {
            positive("tol", p.tol)?;
            nonzero("max_iter", p.max_iter)?;
            if p.guesses.is_empty() {
                return Err(Error::Config("guesses must not be empty".into()));
            }
        }
        if let Some(p) = &self.simulate {
            positive("dt", p.dt)?;
            positive("t_end", p.t_end)?;
            nonzero("n_paths", p.n_paths)?;
            nonzero("record_every", p.record_every)?;
        }
        if let Some(p) = &self.convergence {
            positive("dt", p.dt)?;
            positive("t_end", p.t_end)?;
            nonzero("n_seeds", p.n_seeds)?;
            if p.ns.is_empty() {
                return Err(Error::Config("ns must not be empty".into()));
            }
        }
        if let Some(p) = &self.exit_times {
            positive("radius", p.radius)?;
            positive("t_max", p.t_max)?;
            nonzero("n_paths", p.n_paths)?;
            if let Some(dt) = p.dt {
                positive("dt", dt)?;
            }
            if p.epsilons.is_empty() {
                return Err(Error::Config("epsilons must not be empty".into()));
            }
            for &e in &p.epsilons {
                positive("epsilons", e)?;
            }
        }
        if let Some(p) = &self.action {
            positive("t_end", p.t_end)?;
            nonzero("m", p.m)?;
            check_options(&p.options)?;
        }
        if let Some(p) = &self.quasipotential {
            nonzero("m", p.m)?;
            check_options(&p.options)?;
            if p.t_grid.len() < 3 || p.t_grid.windows(2).any(|w| !(w[0] < w[1])) || !(p.t_grid[0] > 0.0) {
                return Err(Error::Config("t_grid must hold at least 3 positive ascending horizons".into()));
            }
            if let Some(tol) = p.multiscale_tol {
                positive("multiscale_tol", tol)?;
            }
            if let Some(b) = &p.boundary {
                positive("boundary.radius", b.radius)?;
            }
        }
        if let Some(p) = &self.kramers_compare {
            positive("dt", p.dt)?;
            positive("t_max", p.t_max)?;
            positive("delta", p.delta)?;
            nonzero("n_paths", p.n_paths)?;
            for &e in &p.epsilons {
                positive("epsilons", e)?;
            }
        }
        self.model.gain.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.model.kernel.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }
}

fn check_options(o: &MinimizeOptions) -> Result<()> {
    o.validate().map_err(|e| Error::Config(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_echoes_defaults() {
        let cfg = parse_config(r#"{"command": "simulate"}"#).unwrap();
        let sim = cfg.simulate.as_ref().unwrap();
        assert_eq!(sim, &SimulateParams::default());
        assert_eq!(cfg.model.quadrature_order, Some(64));
        let echoed: serde_json::Value = serde_json::from_str(&cfg.to_json()).unwrap();
        for key in ["seed", "output_dir", "threads", "model", "noise", "simulate"] {
            assert!(echoed.get(key).is_some(), "{key}");
        }
        for key in ["initial", "t_end", "dt", "n_paths", "scheme", "record_every"] {
            assert!(echoed["simulate"].get(key).is_some(), "{key}");
        }
        assert!(echoed["exit_times"].is_null());
    }

    #[test]
    fn negative_alpha_is_named() {
        let err = parse_config(r#"{"command": "spectrum", "model": {"alpha": -1, "gain": {"kind": "logistic", "params": {"beta": 1, "theta": 0}}, "kernel": {"kind": "gaussian", "params": {"amplitude": 1, "width": 1}}, "basis": {"d": 1, "cutoff": 4}}}"#)
            .unwrap_err();
        assert_eq!(err.to_string(), "config error: alpha must be > 0");
        let err = parse_config("command = \"simulate\"\n[simulate]\ndt = 0.0\n").unwrap_err();
        assert!(err.to_string().contains("dt must be > 0"));
        let err = parse_config(r#"{"command": "spectrum", "noise": {"xi": 0}}"#).unwrap_err();
        assert!(err.to_string().contains("xi must be > 0"));
    }

    #[test]
    fn unknown_keys_are_all_listed() {
        let err = parse_config(r#"{"command": "simulate", "bogus": 1, "simulate": {"dtt": 0.1}, "noise": {"x": 2}}"#)
            .unwrap_err()
            .to_string();
        for key in ["bogus", "simulate.dtt", "noise.x"] {
            assert!(err.contains(key), "{err}");
        }
        let err = parse_config("command = \"action\"\n[action.options]\nmax_iter = 3\n").unwrap_err().to_string();
        assert!(err.contains("action.options.max_iter"), "{err}");
    }

    #[test]
    fn round_trip_every_command() {
        for cmd in [
            Command::Spectrum,
            Command::Stationary,
            Command::Simulate,
            Command::Convergence,
            Command::ExitTimes,
            Command::Action,
            Command::Quasipotential,
            Command::KramersCompare,
        ] {
            let mut cfg = ExperimentConfig::new(cmd);
            cfg.seed = 42;
            assert_eq!(parse_config(&cfg.to_json()).unwrap(), cfg);
            assert_eq!(parse_config_as(&cfg.to_toml().unwrap(), Format::Toml).unwrap(), cfg);
        }
    }

    #[test]
    fn command_from_cli() {
        let cfg = parse_config_for("seed = 3\n", Format::Toml, Command::Spectrum).unwrap();
        assert_eq!((cfg.command, cfg.seed), (Command::Spectrum, 3));
        let cfg = parse_config_for(r#"{"seed": 4}"#, Format::Json, Command::Action).unwrap();
        assert!(cfg.action.is_some());
        assert!(parse_config_for(r#"{"command": "action"}"#, Format::Json, Command::Spectrum).is_err());
    }

    #[test]
    fn state_specs_resolve() {
        let m = ModelSpec::homogeneous_bistable(1, 7, 1.0).unwrap();
        let c = StateSpec::Constant { value: 0.3 }.resolve(&m).unwrap();
        assert!((c[0] - 0.3 * (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-12);
        let s = StateSpec::Stationary { guess: 1.0 }.resolve(&m).unwrap();
        assert!(m.drift(&s).unwrap().amax() < 1e-10);
        let f = StateSpec::TanhFront { offset: 0.5, amplitude: 0.4, steepness: 2.0 }.resolve(&m).unwrap();
        assert!(f[1].abs() > 0.1);
        assert!(StateSpec::Coefficients { values: vec![1.0] }.resolve(&m).is_err());
    }

    proptest::proptest! {
        #[test]
        fn round_trip_random_values(
            seed in 0u64..=i64::MAX as u64,
            alpha in 0.01f64..10.0,
            xi in 0.05f64..4.0,
            eps in 1e-3f64..2.0,
            cutoff in 0u32..40,
            radius in 0.01f64..3.0,
            n_paths in 1usize..100_000,
        ) {
            let mut cfg = ExperimentConfig::new(Command::ExitTimes);
            cfg.seed = seed;
            cfg.model.alpha = alpha;
            cfg.model.basis.cutoff = cutoff;
            cfg.noise.xi = xi;
            cfg.noise.epsilon = eps;
            let p = cfg.exit_times.as_mut().unwrap();
            p.radius = radius;
            p.n_paths = n_paths;
            proptest::prop_assert_eq!(&parse_config(&cfg.to_json()).unwrap(), &cfg);
            proptest::prop_assert_eq!(&parse_config_as(&cfg.to_toml().unwrap(), Format::Toml).unwrap(), &cfg);
        }
    }
}
