//! Run configuration: defaults, JSON file and dotted command-line overrides,
//! merged as JSON values and then validated section by section.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use swarm_relax::first_order::FoConfig;
use swarm_relax::harness::{scenario_eps_list, Scenario, SweepSpec};
use swarm_relax::kernels::{MorseParams, VisionParams};
use swarm_relax::one_d::{OneDConfig, OneDField, OneDSpec};
use swarm_relax::polar::{SyntheticField, SyntheticSpec};
use swarm_relax::relax::{Mode, RelaxConfig};
use swarm_relax::roots::RootConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },

    #[error("malformed JSON at line {line}, column {column}: {msg}")]
    Syntax { line: usize, column: usize, msg: String },

    #[error("{path}: {msg}")]
    Field { path: String, msg: String },
}

impl ConfigError {
    fn field(path: impl Into<String>, msg: impl Into<String>) -> Self {
        ConfigError::Field { path: path.into(), msg: msg.into() }
    }
}

/// Vision parameters as written by the user; `c_norm` is derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VisionSection {
    pub a: f64,
    pub b: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_norm: Option<f64>,
}

impl Default for VisionSection {
    fn default() -> Self {
        let v = VisionParams::run_defaults();
        VisionSection { a: v.a(), b: v.b(), c_norm: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// `null` selects the scenario's own list.
    pub eps_list: Option<Vec<f64>>,
    pub mode: Mode,
    pub perturb: [f64; 3],
    pub auto_extend: bool,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection { eps_list: None, mode: Mode::SingleMoving, perturb: [1.0, 1.0, 1.0], auto_extend: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// ε of the single-run subcommands.
    pub epsilon: f64,
    pub max_jumps: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection { epsilon: 1e-4, max_jumps: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub morse: MorseParams,
    pub vision: VisionSection,
    /// `null` selects the preset of the scenario.
    pub synthetic: Option<SyntheticSpec>,
    pub one_d: OneDSpec,
    pub roots: RootConfig,
    pub relax: RelaxConfig,
    pub one_d_steps: OneDConfig,
    pub fo: FoConfig,
    pub sweep: SweepSection,
    pub run: RunSection,
    pub output: OutputSection,
    pub seed: u64,
    /// Worker threads of the sweeps; 0 uses every core.
    pub jobs: usize,
    pub log_level: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scenario: Scenario::SyntheticRp,
            morse: MorseParams::default(),
            vision: VisionSection::default(),
            synthetic: None,
            one_d: OneDSpec::default(),
            roots: RootConfig::default(),
            relax: RelaxConfig::default(),
            one_d_steps: OneDConfig::default(),
            fo: FoConfig::default(),
            sweep: SweepSection::default(),
            run: RunSection::default(),
            output: OutputSection::default(),
            seed: 0,
            jobs: 0,
            log_level: "warn".into(),
        }
    }
}

/// Keys whose value is replaced as a whole instead of merged key by key.
const ATOMIC: [&str; 2] = ["synthetic.r_profile", "one_d.h"];

fn preset(scenario: Scenario) -> SyntheticField {
    match scenario {
        Scenario::SyntheticRn => SyntheticField::rn_default(),
        _ => SyntheticField::rp_default(),
    }
}

/// Defaults as a JSON tree.
pub fn defaults_value() -> Value {
    serde_json::to_value(RunConfig::default()).expect("defaults serialize")
}

/// Every overridable leaf with the text shown as its default. Synthetic
/// leaves come from the positive-speed preset.
pub fn leaves() -> Vec<(String, String)> {
    let mut v = defaults_value();
    v["synthetic"] = serde_json::to_value(preset(Scenario::SyntheticRp).spec()).expect("preset serializes");
    let mut out = Vec::new();
    collect_leaves(&v, "", &mut out);
    for (path, shown) in &mut out {
        if path.starts_with("synthetic.") {
            *shown = "scenario preset".into();
        } else if path == "sweep.eps_list" {
            *shown = "scenario list".into();
        }
    }
    out
}

fn collect_leaves(v: &Value, prefix: &str, out: &mut Vec<(String, String)>) {
    match v {
        Value::Object(m) if !ATOMIC.contains(&prefix) => {
            for (k, child) in m {
                let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                collect_leaves(child, &path, out);
            }
        }
        _ => out.push((prefix.to_string(), serde_json::to_string(v).expect("value serializes"))),
    }
}

fn merge(base: &mut Value, over: Value, prefix: &str, scenario: Scenario) {
    match over {
        Value::Object(m) if !ATOMIC.contains(&prefix) => {
            if prefix == "synthetic" && base.is_null() {
                *base = serde_json::to_value(preset(scenario).spec()).expect("preset serializes");
            }
            if !base.is_object() {
                *base = Value::Object(Map::new());
            }
            let obj = base.as_object_mut().expect("object");
            for (k, child) in m {
                let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                merge(obj.entry(k).or_insert(Value::Null), child, &path, scenario);
            }
        }
        other => *base = other,
    }
}

/// Read a flag value: JSON if it parses, a comma list of JSON values, or a bare string.
pub fn flag_value(raw: &str) -> Value {
    if let Ok(v) = serde_json::from_str(raw) {
        return v;
    }
    if raw.contains(',') {
        let parts: Option<Vec<Value>> = raw.split(',').map(|p| serde_json::from_str(p.trim()).ok()).collect();
        if let Some(p) = parts {
            return Value::Array(p);
        }
    }
    Value::String(raw.to_string())
}

fn nest(path: &str, v: Value) -> Value {
    path.rsplit('.').fold(v, |acc, key| {
        let mut m = Map::new();
        m.insert(key.to_string(), acc);
        Value::Object(m)
    })
}

fn parse_file(text: &str) -> Result<Value, ConfigError> {
    let v: Value = serde_json::from_str(text).map_err(|e| ConfigError::Syntax {
        line: e.line(),
        column: e.column(),
        msg: e.to_string(),
    })?;
    if !v.is_object() {
        return Err(ConfigError::field("<root>", "the configuration must be a JSON object"));
    }
    Ok(v)
}

fn scenario_of(file: &Value, flags: &[(String, Value)]) -> Result<Scenario, ConfigError> {
    let chosen = flags
        .iter()
        .rev()
        .find(|(p, _)| p == "scenario")
        .map(|(_, v)| v.clone())
        .or_else(|| file.get("scenario").cloned());
    match chosen {
        None => Ok(Scenario::default()),
        Some(v) => serde_json::from_value(v).map_err(|e| ConfigError::field("scenario", e.to_string())),
    }
}

/// Merge defaults, the optional file and the flag overrides (later wins).
pub fn merged_value(file_text: Option<&str>, flags: &[(String, Value)]) -> Result<Value, ConfigError> {
    let file = match file_text {
        Some(t) => parse_file(t)?,
        None => Value::Object(Map::new()),
    };
    let scenario = scenario_of(&file, flags)?;
    let mut v = defaults_value();
    merge(&mut v, file, "", scenario);
    for (path, val) in flags {
        merge(&mut v, nest(path, val.clone()), "", scenario);
    }
    Ok(v)
}

/// A validated configuration with the derived objects built.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub raw: RunConfig,
    pub vision: VisionParams,
    pub synthetic: Option<SyntheticField>,
}

fn in_section(section: &str, e: swarm_relax::Error) -> ConfigError {
    match e {
        swarm_relax::Error::InvalidParam { field, reason } => {
            let path = if field == section || field.starts_with(&format!("{section}.")) {
                field
            } else {
                format!("{section}.{field}")
            };
            ConfigError::field(path, reason)
        }
        other => ConfigError::field(section, other.to_string()),
    }
}

pub fn resolve(v: Value) -> Result<Resolved, ConfigError> {
    let raw: RunConfig = serde_path_to_error::deserialize(v).map_err(|e| {
        let path = e.path().to_string();
        ConfigError::field(if path == "." { "<root>".into() } else { path }, e.into_inner().to_string())
    })?;
    raw.morse.validate().map_err(|e| in_section("morse", e))?;
    let vision = VisionParams::new(raw.vision.a, raw.vision.b).map_err(|e| in_section("vision", e))?;
    if let Some(c) = raw.vision.c_norm {
        if (c - vision.c_norm()).abs() > 1e-12 * vision.c_norm() {
            return Err(ConfigError::field(
                "vision.c_norm",
                format!("derived from a and b as {}, got {c}", vision.c_norm()),
            ));
        }
    }
    let synthetic = match &raw.synthetic {
        Some(s) => Some(SyntheticField::new(s.clone()).map_err(|e| in_section("synthetic", e))?),
        None => None,
    };
    OneDField::new(raw.one_d).map_err(|e| in_section("one_d", e))?;
    raw.roots.validate().map_err(|e| in_section("roots", e))?;
    raw.relax.validate().map_err(|e| in_section("relax", e))?;
    raw.fo.validate().map_err(|e| in_section("fo", e))?;
    if !(raw.one_d_steps.steps_per_eps > 0.0) {
        return Err(ConfigError::field("one_d_steps.steps_per_eps", "must be positive"));
    }
    if !(raw.run.epsilon > 0.0 && raw.run.epsilon.is_finite()) {
        return Err(ConfigError::field("run.epsilon", "must be positive"));
    }
    if raw.log_level.parse::<log::LevelFilter>().is_err() {
        return Err(ConfigError::field("log_level", "expected off, error, warn, info, debug or trace"));
    }
    let r = Resolved { raw, vision, synthetic };
    r.sweep_spec(r.raw.scenario).validate().map_err(|e| in_section("sweep", e))?;
    Ok(r)
}

/// Merge and validate in one go.
pub fn parse_config(file_text: Option<&str>, flags: &[(String, Value)]) -> Result<Resolved, ConfigError> {
    resolve(merged_value(file_text, flags)?)
}

impl Resolved {
    /// The configuration as it will be used, with `vision.c_norm` filled in.
    pub fn echo(&self) -> Value {
        let mut v = serde_json::to_value(&self.raw).expect("config serializes");
        v["vision"] = serde_json::to_value(self.vision).expect("vision serializes");
        v
    }

    pub fn synthetic_field(&self, scenario: Scenario) -> SyntheticField {
        self.synthetic.clone().unwrap_or_else(|| preset(scenario))
    }

    pub fn sweep_spec(&self, scenario: Scenario) -> SweepSpec {
        let c = &self.raw;
        SweepSpec {
            eps_list: c.sweep.eps_list.clone().unwrap_or_else(|| scenario_eps_list(scenario)),
            scenario,
            mode: c.sweep.mode,
            perturb: c.sweep.perturb,
            seed: c.seed,
            auto_extend: c.sweep.auto_extend,
            synthetic: self.synthetic.clone(),
            one_d: c.one_d,
            morse: c.morse,
            vision: self.vision,
            relax: c.relax,
            one_d_steps: c.one_d_steps,
            roots: c.roots,
        }
    }
}
