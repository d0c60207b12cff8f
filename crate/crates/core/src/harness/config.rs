//! Experiment configuration: JSON in, validated typed config out.
//!
//! Validation walks the whole document and reports every violation, each
//! naming its field. The canonical form is pretty JSON with sorted keys and
//! every default spelled out.

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::detection::Regime;
use crate::ilcrs::Interpolation;

pub const EXPERIMENTS: [&str; 7] = ["planck", "mode", "detector", "interference", "eckart", "ilcrs", "soliton"];

pub const DEFAULT_TRIALS: u64 = 10_000;
pub const DEFAULT_OUTPUT: &str = "sedsim-out";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    /// Dotted path, e.g. `params.wavelength_m`.
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config is not valid JSON at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("unknown experiment `{0}` (expected one of planck, mode, detector, interference, eckart, ilcrs, soliton)")]
    UnknownExperiment(String),
    #[error("invalid config:\n{}", .0.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<ConfigIssue>),
}

impl ConfigError {
    pub fn issues(&self) -> &[ConfigIssue] {
        match self {
            ConfigError::Invalid(issues) => issues,
            _ => &[],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub master_seed: u64,
    pub trials: u64,
    pub output: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    pub params: Params,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Params {
    Planck(PlanckParams),
    Mode(ModeParams),
    Detector(DetectorParams),
    Interference(InterferenceParams),
    Eckart(EckartParams),
    Ilcrs(IlcrsParams),
    Soliton(SolitonParams),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanckParams {
    pub temperature_k: f64,
    pub freq_min_hz: f64,
    pub freq_max_hz: f64,
    pub points: u64,
    pub log_spacing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeParams {
    pub freq_min_hz: f64,
    pub freq_max_hz: f64,
    pub points: u64,
    /// Frequency of the zero-point samples.
    pub sample_frequency_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectorParams {
    pub baseline_e0: f64,
    pub gain: f64,
    pub regime: Regime,
    pub beta_minus_one: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    MonteCarlo,
    ClosedForm,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InterferenceParams {
    pub wavelength_m: f64,
    pub regime: Regime,
    pub points: u64,
    /// Scan covers `[0, span_wavelengths · λ]`.
    pub span_wavelengths: f64,
    pub method: Method,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomSpec {
    pub label: String,
    pub mass_amu: f64,
    pub position: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EckartParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<Vec<AtomSpec>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_xyz_path: Option<PathBuf>,
    /// A single molecule to bind; otherwise `trials` random distortions of
    /// the reference are generated.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub molecule_xyz_path: Option<PathBuf>,
    pub distortion_angstrom: f64,
    pub resolve_permutation: bool,
    pub mass_tolerance: f64,
    pub frame_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IlcrsParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibrate_density: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibrate_rate: Option<f64>,
    pub dispersion: f64,
    pub reference_wavelength_nm: f64,
    /// Fixed redshift; otherwise integrated along the sightline.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sightline_path: Option<PathBuf>,
    pub interpolation: Interpolation,
    pub uniform_density: f64,
    pub path_length_m: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spectrum_path: Option<PathBuf>,
    pub lines_nm: Vec<f64>,
    pub pulse_length_s: f64,
    pub collision_time_s: f64,
    pub raman_frequency_hz: f64,
    pub margin: f64,
    pub intensities: Vec<f64>,
    pub stimulated_proportionality: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolitonParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub polynomial: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub response_path: Option<PathBuf>,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub tolerance: f64,
    pub period_m: f64,
    pub evanescent_radius_m: f64,
    pub critical_flux_w: f64,
    pub k_max: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_radius_m: Option<f64>,
}

impl ExperimentConfig {
    /// Pretty JSON, keys sorted, defaults explicit. Parses back to `self`.
    pub fn to_canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let mut text = serde_json::to_string_pretty(&value).expect("value serializes");
        text.push('\n');
        text
    }

    /// Config with every parameter at its default.
    pub fn default_for(experiment: &str) -> Result<Self, ConfigError> {
        let mut raw = Map::new();
        raw.insert("experiment".into(), Value::from(experiment));
        validate_value(Value::Object(raw))
    }
}

/// Parses and validates config text.
pub fn validate_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let value: Value = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    validate_value(value)
}

/// Validates an already parsed document.
pub fn validate_value(value: Value) -> Result<ExperimentConfig, ConfigError> {
    let mut issues = Vec::new();
    let Value::Object(top) = value else {
        return Err(ConfigError::Invalid(vec![ConfigIssue {
            field: "(root)".into(),
            message: "must be a JSON object".into(),
        }]));
    };
    let experiment = match top.get("experiment") {
        Some(Value::String(name)) if EXPERIMENTS.contains(&name.as_str()) => name.clone(),
        Some(Value::String(name)) => return Err(ConfigError::UnknownExperiment(name.clone())),
        Some(_) => return Err(ConfigError::UnknownExperiment("(not a string)".into())),
        None => {
            return Err(ConfigError::Invalid(vec![ConfigIssue {
                field: "experiment".into(),
                message: "is required".into(),
            }]))
        }
    };

    let empty = Map::new();
    let mut r = Fields::new(&top, "", &mut issues);
    r.seen.insert("experiment".into());
    let master_seed = r.u64_or("master_seed", 0, |_| Ok(()));
    let trials = r.u64_or("trials", DEFAULT_TRIALS, |n| at_least(n, 1));
    let output = PathBuf::from(r.string_or("output", DEFAULT_OUTPUT));
    let threads = r
        .opt_u64("threads", |n| at_least(n, 1))
        .map(|n| n as usize);
    let params_value = match r.take("params") {
        Some(Value::Object(map)) => Some(map),
        Some(_) => {
            r.issue("params", "must be an object");
            None
        }
        None => None,
    };
    r.finish();
    let params_map = params_value.unwrap_or(&empty);
    let mut p = Fields::new(params_map, "params.", &mut issues);
    let params = match experiment.as_str() {
        "planck" => Params::Planck(planck_params(&mut p)),
        "mode" => Params::Mode(mode_params(&mut p)),
        "detector" => Params::Detector(detector_params(&mut p)),
        "interference" => Params::Interference(interference_params(&mut p)),
        "eckart" => Params::Eckart(eckart_params(&mut p)),
        "ilcrs" => Params::Ilcrs(ilcrs_params(&mut p)),
        "soliton" => Params::Soliton(soliton_params(&mut p)),
        _ => unreachable!("checked against EXPERIMENTS"),
    };
    p.finish();

    if issues.is_empty() {
        Ok(ExperimentConfig {
            experiment,
            master_seed,
            trials,
            output,
            threads,
            params,
        })
    } else {
        Err(ConfigError::Invalid(issues))
    }
}

fn at_least(n: u64, min: u64) -> Result<(), String> {
    if n >= min {
        Ok(())
    } else {
        Err(format!("must be at least {min}, got {n}"))
    }
}

fn positive(x: f64) -> Result<(), String> {
    if x > 0.0 {
        Ok(())
    } else {
        Err(format!("must be positive, got {x}"))
    }
}

fn nonnegative(x: f64) -> Result<(), String> {
    if x >= 0.0 {
        Ok(())
    } else {
        Err(format!("must be nonnegative, got {x}"))
    }
}

fn any_finite(_: f64) -> Result<(), String> {
    Ok(())
}

/// Reads typed fields out of one JSON object, recording issues instead of
/// stopping at the first one.
struct Fields<'a, 'b> {
    map: &'a Map<String, Value>,
    prefix: &'static str,
    issues: &'b mut Vec<ConfigIssue>,
    seen: BTreeSet<String>,
}

impl<'a, 'b> Fields<'a, 'b> {
    fn new(map: &'a Map<String, Value>, prefix: &'static str, issues: &'b mut Vec<ConfigIssue>) -> Self {
        Self {
            map,
            prefix,
            issues,
            seen: BTreeSet::new(),
        }
    }

    fn issue(&mut self, name: &str, message: impl Into<String>) {
        self.issues.push(ConfigIssue {
            field: format!("{}{name}", self.prefix),
            message: message.into(),
        });
    }

    fn take(&mut self, name: &str) -> Option<&'a Value> {
        self.seen.insert(name.to_string());
        self.map.get(name).filter(|v| !v.is_null())
    }

    fn finish(self) {
        let unknown: Vec<String> = self
            .map
            .keys()
            .filter(|k| !self.seen.contains(*k))
            .cloned()
            .collect();
        for key in unknown {
            self.issues.push(ConfigIssue {
                field: format!("{}{key}", self.prefix),
                message: "is not a recognised field".into(),
            });
        }
    }

    fn opt_f64(&mut self, name: &str, check: impl Fn(f64) -> Result<(), String>) -> Option<f64> {
        let value = self.take(name)?;
        match value.as_f64().filter(|x| x.is_finite()) {
            Some(x) => match check(x) {
                Ok(()) => Some(x),
                Err(message) => {
                    self.issue(name, message);
                    None
                }
            },
            None => {
                self.issue(name, format!("must be a finite number, got {value}"));
                None
            }
        }
    }

    fn f64_or(&mut self, name: &str, default: f64, check: impl Fn(f64) -> Result<(), String>) -> f64 {
        let present = self.map.get(name).is_some_and(|v| !v.is_null());
        self.opt_f64(name, check)
            .unwrap_or(if present { f64::NAN } else { default })
    }

    fn opt_u64(&mut self, name: &str, check: impl Fn(u64) -> Result<(), String>) -> Option<u64> {
        let value = self.take(name)?;
        match value.as_u64() {
            Some(n) => match check(n) {
                Ok(()) => Some(n),
                Err(message) => {
                    self.issue(name, message);
                    None
                }
            },
            None => {
                self.issue(name, format!("must be a nonnegative integer, got {value}"));
                None
            }
        }
    }

    fn u64_or(&mut self, name: &str, default: u64, check: impl Fn(u64) -> Result<(), String>) -> u64 {
        let present = self.map.get(name).is_some_and(|v| !v.is_null());
        self.opt_u64(name, check).unwrap_or(if present { 0 } else { default })
    }

    fn bool_or(&mut self, name: &str, default: bool) -> bool {
        match self.take(name) {
            None => default,
            Some(Value::Bool(b)) => *b,
            Some(other) => {
                self.issue(name, format!("must be true or false, got {other}"));
                default
            }
        }
    }

    fn opt_string(&mut self, name: &str) -> Option<String> {
        match self.take(name)? {
            Value::String(s) => Some(s.clone()),
            other => {
                self.issue(name, format!("must be a string, got {other}"));
                None
            }
        }
    }

    fn string_or(&mut self, name: &str, default: &str) -> String {
        self.opt_string(name).unwrap_or_else(|| default.to_string())
    }

    fn opt_f64_list(&mut self, name: &str, check: impl Fn(f64) -> Result<(), String>) -> Option<Vec<f64>> {
        let value = self.take(name)?;
        let Some(items) = value.as_array() else {
            self.issue(name, "must be an array of numbers");
            return None;
        };
        let mut out = Vec::with_capacity(items.len());
        let mut ok = true;
        for (i, item) in items.iter().enumerate() {
            match item.as_f64().filter(|x| x.is_finite()) {
                Some(x) => {
                    if let Err(message) = check(x) {
                        self.issue(&format!("{name}[{i}]"), message);
                        ok = false;
                    }
                    out.push(x);
                }
                None => {
                    self.issue(&format!("{name}[{i}]"), format!("must be a finite number, got {item}"));
                    ok = false;
                }
            }
        }
        ok.then_some(out)
    }

    fn f64_list_or(&mut self, name: &str, default: &[f64], check: impl Fn(f64) -> Result<(), String>) -> Vec<f64> {
        self.opt_f64_list(name, check).unwrap_or_else(|| default.to_vec())
    }

    fn parsed_or<T: for<'de> Deserialize<'de>>(&mut self, name: &str, default: T, expected: &str) -> T {
        match self.take(name) {
            None => default,
            Some(v) => match T::deserialize(v) {
                Ok(t) => t,
                Err(_) => {
                    self.issue(name, format!("must be {expected}, got {v}"));
                    default
                }
            },
        }
    }
}

fn planck_params(p: &mut Fields) -> PlanckParams {
    let temperature_k = p.f64_or("temperature_k", 300.0, nonnegative);
    let freq_min_hz = p.f64_or("freq_min_hz", 1e9, positive);
    let freq_max_hz = p.f64_or("freq_max_hz", 1e15, positive);
    if freq_max_hz <= freq_min_hz {
        p.issue("freq_max_hz", format!("must exceed freq_min_hz ({freq_min_hz})"));
    }
    PlanckParams {
        temperature_k,
        freq_min_hz,
        freq_max_hz,
        points: p.u64_or("points", 61, |n| at_least(n, 2)),
        log_spacing: p.bool_or("log_spacing", true),
    }
}

fn mode_params(p: &mut Fields) -> ModeParams {
    let freq_min_hz = p.f64_or("freq_min_hz", 1e14, positive);
    let freq_max_hz = p.f64_or("freq_max_hz", std::f64::consts::E * 1e14, positive);
    if freq_max_hz <= freq_min_hz {
        p.issue("freq_max_hz", format!("must exceed freq_min_hz ({freq_min_hz})"));
    }
    ModeParams {
        freq_min_hz,
        freq_max_hz,
        points: p.u64_or("points", 201, |n| at_least(n, 2)),
        sample_frequency_hz: p.f64_or("sample_frequency_hz", 5e14, positive),
    }
}

const REGIME_EXPECTED: &str = "\"amplitude\" or \"intensity\"";

fn detector_params(p: &mut Fields) -> DetectorParams {
    DetectorParams {
        baseline_e0: p.f64_or("baseline_e0", 1.0, positive),
        gain: p.f64_or("gain", 1.0, positive),
        regime: p.parsed_or("regime", Regime::Amplitude, REGIME_EXPECTED),
        beta_minus_one: p.f64_list_or("beta_minus_one", &[1e-4, 1e-3, 1e-2, 1e-1], |x| {
            if x > -1.0 {
                Ok(())
            } else {
                Err(format!("must exceed -1, got {x}"))
            }
        }),
    }
}

fn interference_params(p: &mut Fields) -> InterferenceParams {
    InterferenceParams {
        wavelength_m: p.f64_or("wavelength_m", 500e-9, positive),
        regime: p.parsed_or("regime", Regime::Amplitude, REGIME_EXPECTED),
        points: p.u64_or("points", 101, |n| at_least(n, 2)),
        span_wavelengths: p.f64_or("span_wavelengths", 1.0, positive),
        method: p.parsed_or("method", Method::MonteCarlo, "\"monte_carlo\" or \"closed_form\""),
    }
}

fn eckart_params(p: &mut Fields) -> EckartParams {
    let reference: Option<Vec<AtomSpec>> = match p.take("reference") {
        None => None,
        Some(v) => match Vec::<AtomSpec>::deserialize(v) {
            Ok(atoms) if atoms.is_empty() => {
                p.issue("reference", "must list at least one atom");
                None
            }
            Ok(atoms) => {
                for (i, a) in atoms.iter().enumerate() {
                    if !(a.mass_amu.is_finite() && a.mass_amu > 0.0) {
                        p.issue(&format!("reference[{i}].mass_amu"), format!("must be positive, got {}", a.mass_amu));
                    }
                }
                Some(atoms)
            }
            Err(e) => {
                p.issue("reference", format!("must be a list of {{label, mass_amu, position: [x, y, z]}}: {e}"));
                None
            }
        },
    };
    let reference_xyz_path = p.opt_string("reference_xyz_path").map(PathBuf::from);
    if reference.is_some() && reference_xyz_path.is_some() {
        p.issue("reference_xyz_path", "give either reference or reference_xyz_path, not both");
    }
    EckartParams {
        reference,
        reference_xyz_path,
        molecule_xyz_path: p.opt_string("molecule_xyz_path").map(PathBuf::from),
        distortion_angstrom: p.f64_or("distortion_angstrom", 0.05, nonnegative),
        resolve_permutation: p.bool_or("resolve_permutation", true),
        mass_tolerance: p.f64_or("mass_tolerance", crate::eckart::DEFAULT_MASS_TOLERANCE, nonnegative),
        frame_tolerance: p.f64_or("frame_tolerance", crate::eckart::DEFAULT_FRAME_TOLERANCE, positive),
    }
}

fn ilcrs_params(p: &mut Fields) -> IlcrsParams {
    let kappa = p.opt_f64("kappa", nonnegative);
    let calibrate_density = p.opt_f64("calibrate_density", positive);
    let calibrate_rate = p.opt_f64("calibrate_rate", positive);
    let kappa_given = p.map.get("kappa").is_some_and(|v| !v.is_null());
    let density_given = p.map.get("calibrate_density").is_some_and(|v| !v.is_null());
    let rate_given = p.map.get("calibrate_rate").is_some_and(|v| !v.is_null());
    match (kappa_given, density_given, rate_given) {
        (true, false, false) | (false, true, true) => {}
        (true, _, _) => p.issue("kappa", "give either kappa or calibrate_density with calibrate_rate, not both"),
        (false, true, false) => p.issue("calibrate_rate", "is required with calibrate_density"),
        (false, false, true) => p.issue("calibrate_density", "is required with calibrate_rate"),
        (false, false, false) => p.issue("kappa", "is required unless calibrate_density and calibrate_rate are given"),
    }
    IlcrsParams {
        kappa,
        calibrate_density,
        calibrate_rate,
        dispersion: p.f64_or("dispersion", 0.0, any_finite),
        reference_wavelength_nm: p.f64_or("reference_wavelength_nm", 550.0, positive),
        z: p.opt_f64("z", |z| if z > -1.0 { Ok(()) } else { Err(format!("must exceed -1, got {z}")) }),
        sightline_path: p.opt_string("sightline_path").map(PathBuf::from),
        interpolation: p.parsed_or(
            "interpolation",
            Interpolation::PiecewiseLinear,
            "\"piecewise_linear\" or \"piecewise_constant\"",
        ),
        uniform_density: p.f64_or("uniform_density", 20.0, nonnegative),
        path_length_m: p.f64_or("path_length_m", 1.0e25, positive),
        spectrum_path: p.opt_string("spectrum_path").map(PathBuf::from),
        lines_nm: p.f64_list_or("lines_nm", &[400.0, 700.0], positive),
        pulse_length_s: p.f64_or("pulse_length_s", 1e-8, positive),
        collision_time_s: p.f64_or("collision_time_s", 1e-7, positive),
        raman_frequency_hz: p.f64_or("raman_frequency_hz", 1e7, positive),
        margin: p.f64_or("margin", 1.0, positive),
        intensities: p.f64_list_or(
            "intensities",
            &[0.0, 1e3, 2e3, 3e3, 4e3, 5e3, 6e3, 7e3, 8e3, 9e3],
            nonnegative,
        ),
        stimulated_proportionality: p.f64_or("stimulated_proportionality", 1e-12, any_finite),
    }
}

fn soliton_params(p: &mut Fields) -> SolitonParams {
    let polynomial = p.opt_f64_list("polynomial", any_finite);
    if let Some(c) = &polynomial {
        if c.len() < 2 {
            p.issue("polynomial", "needs at least a constant and a linear coefficient");
        } else if c[0] != 0.0 {
            p.issue("polynomial", format!("constant term must be 0 so that beta(0) = 0, got {}", c[0]));
        }
    }
    let response_path = p.opt_string("response_path").map(PathBuf::from);
    if polynomial.is_some() && response_path.is_some() {
        p.issue("response_path", "give either polynomial or response_path, not both");
    }
    let polynomial = if response_path.is_none() && polynomial.is_none() {
        Some(vec![0.0, 2.0, -1.0])
    } else {
        polynomial
    };
    let alpha_min = p.f64_or("alpha_min", 0.1, any_finite);
    let alpha_max = p.f64_or("alpha_max", 3.0, any_finite);
    if alpha_max <= alpha_min {
        p.issue("alpha_max", format!("must exceed alpha_min ({alpha_min})"));
    } else if alpha_min <= crate::soliton::ALPHA_ZERO_CUTOFF && alpha_max >= -crate::soliton::ALPHA_ZERO_CUTOFF {
        p.issue("alpha_min", "search interval must exclude a neighbourhood of alpha = 0");
    }
    let period_m = p.f64_or("period_m", 1e-6, positive);
    let evanescent_radius_m = p.f64_or("evanescent_radius_m", 1e-7, positive);
    SolitonParams {
        polynomial,
        response_path,
        alpha_min,
        alpha_max,
        tolerance: p.f64_or("tolerance", 1e-10, positive),
        period_m,
        evanescent_radius_m,
        critical_flux_w: p.f64_or("critical_flux_w", 1.0, positive),
        k_max: p.u64_or("k_max", 10, |n| {
            at_least(n, 1)?;
            if n > u32::MAX as u64 {
                Err(format!("must be at most {}", u32::MAX))
            } else {
                Ok(())
            }
        }) as u32,
        target_radius_m: p.opt_f64("target_radius_m", positive),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_configs_parse() {
        for name in EXPERIMENTS {
            let extra = if name == "ilcrs" { r#", "params": {"kappa": 1e-27}"# } else { "" };
            let text = format!(r#"{{"experiment": "{name}", "master_seed": 7, "trials": 100, "output": "out"{extra}}}"#);
            let config = validate_config(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(config.experiment, name);
            assert_eq!(config.master_seed, 7);
        }
    }

    #[test]
    fn canonical_round_trip() {
        for name in EXPERIMENTS {
            let mut config = ExperimentConfig::default_for(name).or_else(|_| {
                validate_config(&format!(r#"{{"experiment": "{name}", "params": {{"kappa": 2e-27}}}}"#))
            }).unwrap();
            config.threads = Some(3);
            let text = config.to_canonical_json();
            let again = validate_config(&text).unwrap();
            assert_eq!(again, config);
            assert_eq!(again.to_canonical_json(), text);
        }
    }

    #[test]
    fn all_violations_reported() {
        let text = r#"{"experiment": "interference", "trials": -5, "params": {"wavelength_m": 0}}"#;
        match validate_config(text) {
            Err(ConfigError::Invalid(issues)) => {
                assert_eq!(issues.len(), 2, "{issues:?}");
                assert_eq!(issues[0].field, "trials");
                assert_eq!(issues[1].field, "params.wavelength_m");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn structural_errors() {
        match validate_config("{\n  \"experiment\": \"planck\",\n  oops\n}") {
            Err(ConfigError::Parse { line, column, .. }) => {
                assert_eq!(line, 3);
                assert!(column > 0);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            validate_config(r#"{"experiment": "laser"}"#),
            Err(ConfigError::UnknownExperiment(name)) if name == "laser"
        ));
        let err = validate_config(r#"{"experiment": "planck", "sede": 1}"#).unwrap_err();
        assert_eq!(err.issues()[0].field, "sede");
    }

    #[test]
    fn cross_field_rules() {
        let err = validate_config(r#"{"experiment": "ilcrs", "params": {"kappa": 1, "calibrate_density": 20, "calibrate_rate": 1}}"#).unwrap_err();
        assert_eq!(err.issues().len(), 1);
        let ok = validate_config(r#"{"experiment": "ilcrs", "params": {"calibrate_density": 20, "calibrate_rate": 2.3e-26}}"#);
        assert!(ok.is_ok());
        let err = validate_config(r#"{"experiment": "soliton", "params": {"alpha_min": -1, "alpha_max": 1}}"#).unwrap_err();
        assert_eq!(err.issues()[0].field, "params.alpha_min");
        let err = validate_config(r#"{"experiment": "planck", "params": {"freq_min_hz": 10, "freq_max_hz": 5}}"#).unwrap_err();
        assert_eq!(err.issues()[0].field, "params.freq_max_hz");
    }
}
