//! Run configuration files.
//!
//! A configuration is a JSON object with an optional `experiment` (used by
//! `hydro run`, `tagged run` and `excl sim`), optional `tagged` and `scaling`
//! sections, `tolerances` and `output`. Parsing walks the document field by
//! field so that every problem is reported, not only the first one.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use stablex_core::hydro::{EnvironmentModel, ExperimentSpec, ScalingSpec, Shape};
use stablex_core::StableLaw;

pub const DEFAULT_GUARD_SITES: usize = 10;
pub const DEFAULT_BOUNDARY_TOLERANCE: f64 = 1e-3;
pub const DEFAULT_REFERENCE_DT: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaggedSettings {
    /// Thresholds δ of `P(|x_t/N - u_t| > δ)`.
    pub deltas: Vec<f64>,
    /// Wall-clock budget; levels still running when it expires are reported
    /// with the replicas finished so far.
    #[serde(default)]
    pub time_limit_secs: Option<f64>,
}

/// Pass/fail thresholds for the commands that have them. Absent entries
/// disable the corresponding check.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Largest accepted `|slope - expected|` in `scaling run`.
    #[serde(default)]
    pub scaling_slope: Option<f64>,
    /// Largest accepted exceedance at the finest level in `tagged run`.
    #[serde(default)]
    pub tagged_exceedance: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSettings {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default = "yes")]
    pub csv: bool,
    #[serde(default = "yes")]
    pub json: bool,
    /// Write run-length encoded configurations from `excl sim`.
    #[serde(default)]
    pub snapshots: bool,
}

fn yes() -> bool {
    true
}

impl Default for OutputSettings {
    fn default() -> Self {
        Self {
            dir: None,
            csv: true,
            json: true,
            snapshots: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub experiment: Option<ExperimentSpec>,
    pub tagged: Option<TaggedSettings>,
    pub scaling: Option<ScalingSpec>,
    pub tolerances: Tolerances,
    pub output: OutputSettings,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: not valid JSON: {message}")]
    Syntax { path: String, message: String },
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

/// Consumes the keys of one JSON object, recording problems under `path`.
struct Fields<'a> {
    path: String,
    map: Map<String, Value>,
    errors: &'a mut Vec<String>,
}

impl<'a> Fields<'a> {
    fn new(path: &str, value: Value, errors: &'a mut Vec<String>) -> Option<Self> {
        match value {
            Value::Object(map) => Some(Self {
                path: path.into(),
                map,
                errors,
            }),
            other => {
                errors.push(format!("{}: expected an object, got {other}", display(path)));
                None
            }
        }
    }

    fn key(&self, key: &str) -> String {
        if self.path.is_empty() {
            key.into()
        } else {
            format!("{}.{key}", self.path)
        }
    }

    fn optional<T: DeserializeOwned>(&mut self, key: &str) -> Result<Option<T>, ()> {
        match self.map.remove(key) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => serde_json::from_value(v).map(Some).map_err(|e| {
                let k = self.key(key);
                self.errors.push(format!("{k}: {e}"));
            }),
        }
    }

    fn required<T: DeserializeOwned>(&mut self, key: &str) -> Option<T> {
        match self.optional(key) {
            Ok(Some(v)) => Some(v),
            Ok(None) => {
                let k = self.key(key);
                self.errors.push(format!("{k}: missing"));
                None
            }
            Err(()) => None,
        }
    }

    fn or<T: DeserializeOwned>(&mut self, key: &str, default: T) -> Option<T> {
        self.optional(key).ok().map(|v| v.unwrap_or(default))
    }

    fn object(&mut self, key: &str) -> Option<Value> {
        self.map.remove(key).filter(|v| !v.is_null())
    }

    fn finish(self) {
        for k in self.map.keys() {
            let k = if self.path.is_empty() {
                k.clone()
            } else {
                format!("{}.{k}", self.path)
            };
            self.errors.push(format!("{k}: unknown key"));
        }
    }
}

fn display(path: &str) -> &str {
    if path.is_empty() {
        "<root>"
    } else {
        path
    }
}

fn parse_law(value: Value, path: &str, errors: &mut Vec<String>) -> Option<StableLaw> {
    let mut f = Fields::new(path, value, errors)?;
    let alpha: Option<f64> = f.required("alpha");
    let c0: Option<f64> = f.or("c0", 1.0);
    f.finish();
    let (alpha, c0) = (alpha?, c0?);
    let mut ok = true;
    if !(alpha > 0.0 && alpha < 1.0) {
        errors.push(format!("{path}.alpha: must lie in (0, 1), got {alpha}"));
        ok = false;
    }
    if !(c0 > 0.0 && c0.is_finite()) {
        errors.push(format!("{path}.c0: must be positive and finite, got {c0}"));
        ok = false;
    }
    if ok {
        StableLaw::new(alpha, c0).ok()
    } else {
        None
    }
}

fn parse_experiment(value: Value, errors: &mut Vec<String>) -> Option<ExperimentSpec> {
    let path = "experiment";
    let mut f = Fields::new(path, value, errors)?;
    let law_value = f.object("law");
    let resolution: Option<u64> = f.required("resolution");
    let ns: Option<Vec<u64>> = f.required("ns");
    let window: Option<(i64, i64)> = f.required("window");
    let environment: Option<EnvironmentModel> = f.or("environment", EnvironmentModel::Quenched);
    let profile: Option<Shape> = f.required("profile");
    let test_functions: Option<Vec<Shape>> = f.or("test_functions", Vec::new());
    let sample_times: Option<Vec<f64>> = f.required("sample_times");
    let horizon: Option<f64> = f.required("horizon");
    let replicas: Option<usize> = f.required("replicas");
    let seed: Option<u64> = f.required("seed");
    let condition_origin: Option<bool> = f.or("condition_origin", false);
    let guard_sites: Option<usize> = f.or("guard_sites", DEFAULT_GUARD_SITES);
    let boundary_tolerance: Option<f64> = f.or("boundary_tolerance", DEFAULT_BOUNDARY_TOLERANCE);
    let reference_dt: Option<f64> = f.or("reference_dt", DEFAULT_REFERENCE_DT);
    f.finish();
    let law = match law_value {
        Some(v) => parse_law(v, "experiment.law", errors),
        None => {
            errors.push("experiment.law: missing".into());
            None
        }
    };
    // A stand-in law lets the remaining checks run when the law itself is bad;
    // its problem has already been recorded.
    let spec = ExperimentSpec {
        law: law.unwrap_or(StableLaw::new(0.5, 1.0).unwrap()),
        resolution: resolution?,
        ns: ns?,
        window: window?,
        environment: environment?,
        profile: profile?,
        test_functions: test_functions?,
        sample_times: sample_times?,
        horizon: horizon?,
        replicas: replicas?,
        seed: seed?,
        condition_origin: condition_origin?,
        guard_sites: guard_sites?,
        boundary_tolerance: boundary_tolerance?,
        reference_dt: reference_dt?,
    };
    for v in spec.violations() {
        errors.push(format!("{path}.{v}"));
    }
    law.map(|_| spec)
}

fn parse_scaling(value: Value, errors: &mut Vec<String>) -> Option<ScalingSpec> {
    let mut f = Fields::new("scaling", value, errors)?;
    let model: Option<stablex_core::hydro::ScalingModel> = f.required("model");
    let ladder: Option<Vec<u64>> = f.required("ladder");
    let environments: Option<usize> = f.required("environments");
    let bootstrap: Option<usize> = f.or("bootstrap", 1000);
    let confidence: Option<f64> = f.or("confidence", 0.95);
    let seed: Option<u64> = f.required("seed");
    f.finish();
    let spec = ScalingSpec {
        model: model?,
        ladder: ladder?,
        environments: environments?,
        bootstrap: bootstrap?,
        confidence: confidence?,
        seed: seed?,
    };
    let v = spec.violations();
    let ok = v.is_empty();
    errors.extend(v.into_iter().map(|v| format!("scaling.{v}")));
    ok.then_some(spec)
}

/// Validates a parsed JSON document.
pub fn config_from_value(value: Value) -> Result<RunConfig, ConfigError> {
    let mut errors = Vec::new();
    let Some(mut root) = Fields::new("", value, &mut errors) else {
        return Err(ConfigError::Invalid(errors));
    };
    let experiment = root.object("experiment");
    let scaling = root.object("scaling");
    let tagged: Result<Option<TaggedSettings>, ()> = root.optional("tagged");
    let tolerances: Option<Tolerances> = root.or("tolerances", Tolerances::default());
    let output: Option<OutputSettings> = root.or("output", OutputSettings::default());
    root.finish();
    let experiment = experiment.map(|v| parse_experiment(v, &mut errors));
    let scaling = scaling.map(|v| parse_scaling(v, &mut errors));
    if let Ok(Some(t)) = &tagged {
        if t.deltas.is_empty() || t.deltas.iter().any(|d| d.is_nan() || *d <= 0.0) {
            errors.push("tagged.deltas: need at least one positive threshold".into());
        }
        if let Some(s) = t.time_limit_secs {
            if s.is_nan() || s <= 0.0 {
                errors.push(format!("tagged.time_limit_secs: must be positive, got {s}"));
            }
        }
    }
    if !errors.is_empty() {
        return Err(ConfigError::Invalid(errors));
    }
    Ok(RunConfig {
        experiment: experiment.flatten(),
        tagged: tagged.ok().flatten(),
        scaling: scaling.flatten(),
        tolerances: tolerances.unwrap_or_default(),
        output: output.unwrap_or_default(),
    })
}

pub fn parse_config_str(text: &str, origin: &str) -> Result<RunConfig, ConfigError> {
    let value: Value = serde_json::from_str(text).map_err(|e| ConfigError::Syntax {
        path: origin.into(),
        message: e.to_string(),
    })?;
    config_from_value(value)
}

pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config_str(&text, &path.display().to_string())
}

impl RunConfig {
    /// Every field written out, defaults included.
    pub fn normalized(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn require_experiment(&self) -> Result<&ExperimentSpec, ConfigError> {
        self.experiment
            .as_ref()
            .ok_or_else(|| ConfigError::Invalid(vec!["experiment: missing".into()]))
    }

    pub fn require_scaling(&self) -> Result<&ScalingSpec, ConfigError> {
        self.scaling
            .as_ref()
            .ok_or_else(|| ConfigError::Invalid(vec!["scaling: missing".into()]))
    }

    pub fn require_tagged(&self) -> Result<&TaggedSettings, ConfigError> {
        self.tagged
            .as_ref()
            .ok_or_else(|| ConfigError::Invalid(vec!["tagged: missing".into()]))
    }
}
