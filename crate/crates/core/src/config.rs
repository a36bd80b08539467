//! Simulation configuration: the JSON experiment description and its typed
//! form.

use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value as Json};
use thiserror::Error;

use crate::doc::{self, Doc, Value};

pub const DEFAULT_TIMESTEP: f64 = 0.01;
pub const DEFAULT_SIMULATION_NAME: &str = "simulation";

/// Recognized top-level keys naming features this framework does not have.
const UNSUPPORTED_KEYS: &[&str] = &[
    "ConnectROS",
    "ConnectMQTT",
    "ComputationalGraph",
    "StatusFunction",
    "EventLoopTimeout",
    "EventLoopTimestep",
    "ExternalProcesses",
];

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ConfigError {
    #[error("malformed config: {0}")]
    MalformedDocument(String),
    #[error("{context}: missing required field {field}")]
    MissingField { context: String, field: &'static str },
    #[error("engine name {0:?} used more than once")]
    DuplicateEngineName(String),
    #[error("function name {0:?} used more than once")]
    DuplicateFunctionName(String),
    #[error("unsupported feature {key} (all unsupported keys: {})", all.join(", "))]
    UnsupportedFeature { key: String, all: Vec<String> },
    #[error("{field}: {reason}")]
    InvalidValue { field: String, reason: String },
    #[error("config declares no engines")]
    NoEngines,
    #[error("cannot read config {path}: {message}")]
    Io { path: PathBuf, message: String },
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::InvalidValue {
        field: field.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataPackProcessor {
    Tf,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Launch {
    InProcess,
    Subprocess {
        cmd: String,
        args: Vec<String>,
        env: Vec<(String, String)>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub engine_name: String,
    pub engine_type: String,
    pub engine_timestep: f64,
    /// Seconds; zero or negative disables the timeout.
    pub engine_command_timeout: f64,
    pub launch: Launch,
    pub extra: Doc,
}

impl EngineConfig {
    pub fn new(name: impl Into<String>, engine_type: impl Into<String>) -> Self {
        Self {
            engine_name: name.into(),
            engine_type: engine_type.into(),
            engine_timestep: DEFAULT_TIMESTEP,
            engine_command_timeout: 0.0,
            launch: Launch::InProcess,
            extra: Doc::new(),
        }
    }

    pub fn timestep_ns(&self) -> u64 {
        seconds_to_ns(self.engine_timestep).expect("validated at parse time")
    }

    pub fn command_timeout(&self) -> Option<std::time::Duration> {
        (self.engine_command_timeout > 0.0).then(|| std::time::Duration::from_secs_f64(self.engine_command_timeout))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputBinding {
    pub keyword: String,
    pub datapack_name: String,
    pub engine_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionConfig {
    pub name: String,
    pub function_id: String,
    pub is_preprocessing: bool,
    pub linked_engine: Option<String>,
    pub inputs: Vec<InputBinding>,
    /// Kept from script-based configs; never executed.
    pub file_name: Option<String>,
}

impl FunctionConfig {
    pub fn new(name: impl Into<String>, function_id: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            function_id: function_id.into(),
            is_preprocessing: false,
            linked_engine: None,
            inputs: Vec::new(),
            file_name: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub simulation_name: String,
    pub simulation_description: Option<String>,
    /// Seconds of simulated time; 0 runs until stopped externally.
    pub simulation_timeout: u64,
    pub simulation_timestep: f64,
    pub engine_configs: Vec<EngineConfig>,
    pub functions: Vec<FunctionConfig>,
    pub datapack_processor: DataPackProcessor,
}

impl SimulationConfig {
    pub fn timestep_ns(&self) -> u64 {
        seconds_to_ns(self.simulation_timestep).expect("validated at parse time")
    }

    pub fn engine(&self, name: &str) -> Option<&EngineConfig> {
        self.engine_configs.iter().find(|e| e.engine_name == name)
    }
}

/// Converts a positive duration in seconds to whole nanoseconds. Values that
/// do not land on a nanosecond (within float noise) are rejected.
pub fn seconds_to_ns(seconds: f64) -> Result<u64, String> {
    if !seconds.is_finite() || seconds <= 0.0 {
        return Err(format!("{seconds} is not a positive number of seconds"));
    }
    let ns = seconds * 1e9;
    if ns > u64::MAX as f64 / 2.0 {
        return Err(format!("{seconds} s is too large"));
    }
    let rounded = ns.round();
    if rounded < 1.0 || (ns - rounded).abs() > 1e-6 * rounded.max(1.0) {
        return Err(format!("{seconds} s is not a whole number of nanoseconds"));
    }
    Ok(rounded as u64)
}

fn get_str(obj: &Map<String, Json>, key: &str, ctx: &str) -> Result<Option<String>, ConfigError> {
    match obj.get(key) {
        None => Ok(None),
        Some(Json::String(s)) => Ok(Some(s.clone())),
        Some(_) => Err(invalid(format!("{ctx}.{key}"), "expected a string")),
    }
}

fn require_str(obj: &Map<String, Json>, key: &'static str, ctx: &str) -> Result<String, ConfigError> {
    match get_str(obj, key, ctx)? {
        Some(s) if !s.is_empty() => Ok(s),
        Some(_) => Err(invalid(format!("{ctx}.{key}"), "must not be empty")),
        None => Err(ConfigError::MissingField {
            context: ctx.to_owned(),
            field: key,
        }),
    }
}

fn get_f64(obj: &Map<String, Json>, key: &str, ctx: &str) -> Result<Option<f64>, ConfigError> {
    match obj.get(key) {
        None => Ok(None),
        Some(j) => j
            .as_f64()
            .map(Some)
            .ok_or_else(|| invalid(format!("{ctx}.{key}"), "expected a number")),
    }
}

fn get_timestep(obj: &Map<String, Json>, key: &str, ctx: &str) -> Result<f64, ConfigError> {
    let dt = get_f64(obj, key, ctx)?.unwrap_or(DEFAULT_TIMESTEP);
    seconds_to_ns(dt).map_err(|r| invalid(format!("{ctx}.{key}"), r))?;
    Ok(dt)
}

fn get_array<'a>(obj: &'a Map<String, Json>, key: &str, ctx: &str) -> Result<&'a [Json], ConfigError> {
    match obj.get(key) {
        None => Ok(&[]),
        Some(Json::Array(a)) => Ok(a),
        Some(_) => Err(invalid(format!("{ctx}.{key}"), "expected an array")),
    }
}

fn get_string_list(obj: &Map<String, Json>, key: &str, ctx: &str) -> Result<Vec<String>, ConfigError> {
    get_array(obj, key, ctx)?
        .iter()
        .map(|v| {
            v.as_str()
                .map(str::to_owned)
                .ok_or_else(|| invalid(format!("{ctx}.{key}"), "expected an array of strings"))
        })
        .collect()
}

fn as_object<'a>(j: &'a Json, ctx: &str) -> Result<&'a Map<String, Json>, ConfigError> {
    j.as_object().ok_or_else(|| invalid(ctx, "expected an object"))
}

fn parse_engine(j: &Json, index: usize) -> Result<EngineConfig, ConfigError> {
    let ctx = format!("EngineConfigs[{index}]");
    let o = as_object(j, &ctx)?;
    let mut cfg = EngineConfig::new(require_str(o, "EngineName", &ctx)?, require_str(o, "EngineType", &ctx)?);
    let ctx = format!("engine {:?}", cfg.engine_name);
    cfg.engine_timestep = get_timestep(o, "EngineTimestep", &ctx)?;
    cfg.engine_command_timeout = get_f64(o, "EngineCommandTimeout", &ctx)?.unwrap_or(0.0);
    if !cfg.engine_command_timeout.is_finite() {
        return Err(invalid(format!("{ctx}.EngineCommandTimeout"), "must be finite"));
    }

    if let Some(lc) = o.get("EngineLaunchCommand") {
        let lc = as_object(lc, &format!("{ctx}.EngineLaunchCommand"))?;
        match lc.get("LaunchType").and_then(Json::as_str) {
            Some("BasicFork") => {}
            other => {
                return Err(invalid(
                    format!("{ctx}.EngineLaunchCommand"),
                    format!("unsupported LaunchType {other:?}; only BasicFork is available"),
                ))
            }
        }
    }
    let args = get_string_list(o, "EngineProcStartParams", &ctx)?;
    let env = get_string_list(o, "EngineEnvParams", &ctx)?
        .into_iter()
        .map(|kv| match kv.split_once('=') {
            Some((k, v)) if !k.is_empty() => Ok((k.to_owned(), v.to_owned())),
            _ => Err(invalid(
                format!("{ctx}.EngineEnvParams"),
                format!("{kv:?} is not KEY=VALUE"),
            )),
        })
        .collect::<Result<Vec<_>, _>>()?;
    cfg.launch = match get_str(o, "EngineProcCmd", &ctx)? {
        Some(cmd) if !cmd.is_empty() => Launch::Subprocess { cmd, args, env },
        _ if !args.is_empty() || !env.is_empty() => {
            return Err(invalid(
                format!("{ctx}.EngineProcStartParams"),
                "process parameters given without EngineProcCmd",
            ))
        }
        _ => Launch::InProcess,
    };

    if let Some(extra) = o.get("Extra") {
        let extra = as_object(extra, &format!("{ctx}.Extra"))?;
        cfg.extra = doc::doc_from_json(extra).map_err(|r| invalid(format!("{ctx}.Extra"), r))?;
    }
    // Engine-type specific keys outside "Extra" (e.g. PythonFileName) are
    // folded into it.
    for (k, v) in o {
        if matches!(
            k.as_str(),
            "EngineName"
                | "EngineType"
                | "EngineTimestep"
                | "EngineCommandTimeout"
                | "EngineLaunchCommand"
                | "EngineProcCmd"
                | "EngineProcStartParams"
                | "EngineEnvParams"
                | "Extra"
        ) {
            continue;
        }
        let v = doc::value_from_json(v).map_err(|r| invalid(format!("{ctx}.{k}"), r))?;
        if cfg.extra.insert(k.clone(), v).is_some() {
            return Err(invalid(format!("{ctx}.{k}"), "given both inline and in Extra"));
        }
    }
    Ok(cfg)
}

fn parse_function(j: &Json, index: usize) -> Result<FunctionConfig, ConfigError> {
    let ctx = format!("DataPackProcessingFunctions[{index}]");
    let o = as_object(j, &ctx)?;
    let name = require_str(o, "Name", &ctx)?;
    let ctx = format!("function {name:?}");
    for k in o.keys() {
        if !matches!(
            k.as_str(),
            "Name" | "FunctionId" | "FileName" | "IsPreprocessing" | "LinkedEngine" | "Inputs"
        ) {
            return Err(ConfigError::MalformedDocument(format!("{ctx}: unknown key {k:?}")));
        }
    }
    let function_id = get_str(o, "FunctionId", &ctx)?.unwrap_or_else(|| name.clone());
    let is_preprocessing = match o.get("IsPreprocessing") {
        None => false,
        Some(Json::Bool(b)) => *b,
        Some(_) => return Err(invalid(format!("{ctx}.IsPreprocessing"), "expected a boolean")),
    };
    let inputs = get_array(o, "Inputs", &ctx)?
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let bctx = format!("{ctx}.Inputs[{i}]");
            let b = as_object(b, &bctx)?;
            Ok(InputBinding {
                keyword: require_str(b, "Keyword", &bctx)?,
                datapack_name: require_str(b, "DataPackName", &bctx)?,
                engine_name: require_str(b, "EngineName", &bctx)?,
            })
        })
        .collect::<Result<_, ConfigError>>()?;
    Ok(FunctionConfig {
        name,
        function_id,
        is_preprocessing,
        linked_engine: get_str(o, "LinkedEngine", &ctx)?,
        inputs,
        file_name: get_str(o, "FileName", &ctx)?,
    })
}

/// Parses a configuration document. Defaults fill absent keys only.
pub fn parse_config(text: &[u8]) -> Result<SimulationConfig, ConfigError> {
    let root: Json = serde_json::from_slice(text).map_err(|e| ConfigError::MalformedDocument(e.to_string()))?;
    let o = root
        .as_object()
        .ok_or_else(|| ConfigError::MalformedDocument("top level is not an object".into()))?;

    let mut unsupported: Vec<String> = o
        .keys()
        .filter(|k| UNSUPPORTED_KEYS.contains(&k.as_str()))
        .cloned()
        .collect();
    if let Some(Json::String(s)) = o.get("SimulationLoop") {
        if s == "EventLoop" {
            unsupported.push("SimulationLoop=EventLoop".into());
        }
    }
    if let Some(Json::String(s)) = o.get("DataPackProcessor") {
        if s == "cg" {
            unsupported.push("DataPackProcessor=cg".into());
        }
    }
    if let Some(first) = unsupported.first() {
        return Err(ConfigError::UnsupportedFeature {
            key: first.clone(),
            all: unsupported,
        });
    }

    for k in o.keys() {
        if !matches!(
            k.as_str(),
            "SimulationName"
                | "SimulationDescription"
                | "SimulationTimeout"
                | "SimulationTimestep"
                | "SimulationLoop"
                | "ProcessLauncherType"
                | "DataPackProcessor"
                | "EngineConfigs"
                | "DataPackProcessingFunctions"
        ) {
            return Err(ConfigError::MalformedDocument(format!("unknown key {k:?}")));
        }
    }

    let ctx = "simulation";
    match get_str(o, "SimulationLoop", ctx)?.as_deref() {
        None | Some("FTILoop") => {}
        Some(other) => return Err(invalid("SimulationLoop", format!("unknown loop {other:?}"))),
    }
    match get_str(o, "ProcessLauncherType", ctx)?.as_deref() {
        None | Some("Basic") => {}
        Some(other) => return Err(invalid("ProcessLauncherType", format!("unknown launcher {other:?}"))),
    }
    match get_str(o, "DataPackProcessor", ctx)?.as_deref() {
        None | Some("tf") => {}
        Some(other) => return Err(invalid("DataPackProcessor", format!("unknown processor {other:?}"))),
    }

    let simulation_timeout = match o.get("SimulationTimeout") {
        None => 0,
        Some(j) => j
            .as_u64()
            .ok_or_else(|| invalid("SimulationTimeout", "expected a non-negative integer"))?,
    };
    let simulation_timestep = get_timestep(o, "SimulationTimestep", ctx)?;

    let engine_configs = get_array(o, "EngineConfigs", ctx)?
        .iter()
        .enumerate()
        .map(|(i, e)| parse_engine(e, i))
        .collect::<Result<Vec<_>, _>>()?;
    if engine_configs.is_empty() {
        return Err(ConfigError::NoEngines);
    }
    for (i, e) in engine_configs.iter().enumerate() {
        if engine_configs[..i].iter().any(|p| p.engine_name == e.engine_name) {
            return Err(ConfigError::DuplicateEngineName(e.engine_name.clone()));
        }
    }

    let functions = get_array(o, "DataPackProcessingFunctions", ctx)?
        .iter()
        .enumerate()
        .map(|(i, f)| parse_function(f, i))
        .collect::<Result<Vec<_>, _>>()?;
    for (i, f) in functions.iter().enumerate() {
        if functions[..i].iter().any(|p| p.name == f.name) {
            return Err(ConfigError::DuplicateFunctionName(f.name.clone()));
        }
    }

    Ok(SimulationConfig {
        simulation_name: get_str(o, "SimulationName", ctx)?.unwrap_or_else(|| DEFAULT_SIMULATION_NAME.into()),
        simulation_description: get_str(o, "SimulationDescription", ctx)?,
        simulation_timeout,
        simulation_timestep,
        engine_configs,
        functions,
        datapack_processor: DataPackProcessor::Tf,
    })
}

/// Reads and parses a config file. Relative `TrajectoryFile` paths in engine
/// extras are resolved against the config file's directory.
pub fn load_config(path: &Path) -> Result<SimulationConfig, ConfigError> {
    let text = std::fs::read(path).map_err(|e| ConfigError::Io {
        path: path.to_owned(),
        message: e.to_string(),
    })?;
    let mut cfg = parse_config(&text)?;
    let base = path.parent().unwrap_or(Path::new(""));
    for e in &mut cfg.engine_configs {
        if let Some(Value::Str(p)) = e.extra.get_mut("TrajectoryFile") {
            let rel = PathBuf::from(&*p);
            if rel.is_relative() {
                *p = base.join(rel).to_string_lossy().into_owned();
            }
        }
    }
    Ok(cfg)
}

fn engine_to_json(e: &EngineConfig) -> Result<Json, String> {
    let mut m = Map::new();
    m.insert("EngineName".into(), json!(e.engine_name));
    m.insert("EngineType".into(), json!(e.engine_type));
    m.insert("EngineTimestep".into(), doc::float_to_json(e.engine_timestep)?);
    m.insert(
        "EngineCommandTimeout".into(),
        doc::float_to_json(e.engine_command_timeout)?,
    );
    if let Launch::Subprocess { cmd, args, env } = &e.launch {
        m.insert("EngineProcCmd".into(), json!(cmd));
        m.insert("EngineProcStartParams".into(), json!(args));
        let env: Vec<String> = env.iter().map(|(k, v)| format!("{k}={v}")).collect();
        m.insert("EngineEnvParams".into(), json!(env));
    }
    if !e.extra.is_empty() {
        m.insert("Extra".into(), doc::doc_to_json(&e.extra)?);
    }
    Ok(Json::Object(m))
}

fn function_to_json(f: &FunctionConfig) -> Json {
    let mut m = Map::new();
    m.insert("Name".into(), json!(f.name));
    m.insert("FunctionId".into(), json!(f.function_id));
    m.insert("IsPreprocessing".into(), json!(f.is_preprocessing));
    if let Some(le) = &f.linked_engine {
        m.insert("LinkedEngine".into(), json!(le));
    }
    if let Some(file) = &f.file_name {
        m.insert("FileName".into(), json!(file));
    }
    let inputs: Vec<Json> = f
        .inputs
        .iter()
        .map(|b| json!({ "Keyword": b.keyword, "DataPackName": b.datapack_name, "EngineName": b.engine_name }))
        .collect();
    m.insert("Inputs".into(), Json::Array(inputs));
    Json::Object(m)
}

/// Serializes a config back to its JSON form; `parse_config` of the output
/// yields an equal config.
pub fn config_to_json(cfg: &SimulationConfig) -> Result<Json, String> {
    let mut m = Map::new();
    m.insert("SimulationName".into(), json!(cfg.simulation_name));
    if let Some(d) = &cfg.simulation_description {
        m.insert("SimulationDescription".into(), json!(d));
    }
    m.insert("SimulationTimeout".into(), json!(cfg.simulation_timeout));
    m.insert(
        "SimulationTimestep".into(),
        doc::float_to_json(cfg.simulation_timestep)?,
    );
    m.insert("DataPackProcessor".into(), json!("tf"));
    m.insert(
        "EngineConfigs".into(),
        Json::Array(
            cfg.engine_configs
                .iter()
                .map(engine_to_json)
                .collect::<Result<_, _>>()?,
        ),
    );
    m.insert(
        "DataPackProcessingFunctions".into(),
        Json::Array(cfg.functions.iter().map(function_to_json).collect()),
    );
    Ok(Json::Object(m))
}

pub fn print_config(cfg: &SimulationConfig) -> Result<String, String> {
    config_to_json(cfg).map(|j| serde_json::to_string_pretty(&j).expect("JSON values always serialize"))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str =
        r#"{"SimulationTimeout": 1, "EngineConfigs": [{"EngineName": "a", "EngineType": "vehicle_sim"}]}"#;

    #[test]
    fn defaults_for_absent_keys() {
        let cfg = parse_config(MINIMAL.as_bytes()).unwrap();
        assert_eq!(cfg.simulation_timestep, 0.01);
        assert_eq!(cfg.timestep_ns(), 10_000_000);
        assert_eq!(cfg.engine_configs[0].engine_timestep, 0.01);
        assert_eq!(cfg.engine_configs[0].engine_command_timeout, 0.0);
        assert_eq!(cfg.engine_configs[0].command_timeout(), None);
        assert_eq!(cfg.simulation_name, DEFAULT_SIMULATION_NAME);
    }

    #[test]
    fn explicit_values_are_kept() {
        let text = r#"{"SimulationTimestep": 0.02, "EngineConfigs": [
            {"EngineName": "a", "EngineType": "vehicle_sim", "EngineTimestep": 0.005, "EngineCommandTimeout": 0.5}]}"#;
        let cfg = parse_config(text.as_bytes()).unwrap();
        assert_eq!(cfg.simulation_timestep, 0.02);
        assert_eq!(cfg.engine_configs[0].timestep_ns(), 5_000_000);
        assert_eq!(
            cfg.engine_configs[0].command_timeout(),
            Some(std::time::Duration::from_millis(500))
        );
    }

    #[test]
    fn missing_required_engine_fields() {
        let err = parse_config(br#"{"EngineConfigs": [{"EngineType": "x"}]}"#).unwrap_err();
        assert!(matches!(
            err,
            ConfigError::MissingField {
                field: "EngineName",
                ..
            }
        ));
        let err = parse_config(br#"{"EngineConfigs": [{"EngineName": "x"}]}"#).unwrap_err();
        assert!(matches!(
            err,
            ConfigError::MissingField {
                field: "EngineType",
                ..
            }
        ));
    }

    #[test]
    fn duplicate_engine_names() {
        let text = br#"{"EngineConfigs": [{"EngineName": "gazebo", "EngineType": "gazebo"},
                                          {"EngineName": "gazebo", "EngineType": "gazebo"}]}"#;
        assert_eq!(
            parse_config(text).unwrap_err(),
            ConfigError::DuplicateEngineName("gazebo".into())
        );
    }

    #[test]
    fn unsupported_keys_are_all_reported() {
        let text = br#"{"ConnectROS": true, "ComputationalGraph": [], "DataPackProcessor": "cg",
                        "EngineConfigs": [{"EngineName": "a", "EngineType": "vehicle_sim"}]}"#;
        match parse_config(text).unwrap_err() {
            ConfigError::UnsupportedFeature { key, all } => {
                assert_eq!(key, "ComputationalGraph");
                assert_eq!(all, ["ComputationalGraph", "ConnectROS", "DataPackProcessor=cg"]);
            }
            e => panic!("unexpected {e}"),
        }
        let text = br#"{"SimulationLoop": "EventLoop", "EngineConfigs": [{"EngineName": "a", "EngineType": "x"}]}"#;
        assert!(matches!(
            parse_config(text),
            Err(ConfigError::UnsupportedFeature { .. })
        ));
    }

    #[test]
    fn rejects_bad_documents() {
        assert!(matches!(parse_config(b"[1]"), Err(ConfigError::MalformedDocument(_))));
        assert!(matches!(parse_config(b"{"), Err(ConfigError::MalformedDocument(_))));
        assert_eq!(parse_config(b"{}").unwrap_err(), ConfigError::NoEngines);
        let typo = br#"{"SimulationTimeOut": 1, "EngineConfigs": [{"EngineName": "a", "EngineType": "x"}]}"#;
        assert!(matches!(parse_config(typo), Err(ConfigError::MalformedDocument(_))));
        let neg = br#"{"SimulationTimestep": -0.1, "EngineConfigs": [{"EngineName": "a", "EngineType": "x"}]}"#;
        assert!(matches!(parse_config(neg), Err(ConfigError::InvalidValue { .. })));
        let frac = br#"{"SimulationTimestep": 1e-10, "EngineConfigs": [{"EngineName": "a", "EngineType": "x"}]}"#;
        assert!(matches!(parse_config(frac), Err(ConfigError::InvalidValue { .. })));
    }

    #[test]
    fn inline_engine_keys_fold_into_extra() {
        let text = br#"{"EngineConfigs": [{"EngineName": "p", "EngineType": "python_json",
                        "PythonFileName": "engine_1.py", "Extra": {"Seed": 3}}]}"#;
        let cfg = parse_config(text).unwrap();
        let extra = &cfg.engine_configs[0].extra;
        assert_eq!(extra["PythonFileName"], Value::Str("engine_1.py".into()));
        assert_eq!(extra["Seed"], Value::Int(3));
    }

    #[test]
    fn subprocess_launch() {
        let text = br#"{"EngineConfigs": [{"EngineName": "p", "EngineType": "vehicle_sim",
                        "EngineProcCmd": "/bin/nrpl", "EngineProcStartParams": ["engine"],
                        "EngineEnvParams": ["A=1"], "EngineLaunchCommand": {"LaunchType": "BasicFork"}}]}"#;
        let cfg = parse_config(text).unwrap();
        assert_eq!(
            cfg.engine_configs[0].launch,
            Launch::Subprocess {
                cmd: "/bin/nrpl".into(),
                args: vec!["engine".into()],
                env: vec![("A".into(), "1".into())],
            }
        );
        let bad = br#"{"EngineConfigs": [{"EngineName": "p", "EngineType": "x", "EngineEnvParams": ["A"]}]}"#;
        assert!(parse_config(bad).is_err());
    }

    #[test]
    fn print_parse_roundtrip() {
        let text = br#"{"SimulationName": "s", "SimulationDescription": "d", "SimulationTimeout": 3,
            "SimulationTimestep": 0.02,
            "EngineConfigs": [{"EngineName": "p", "EngineType": "controller", "EngineProcCmd": "x",
                               "Extra": {"Waypoints": [[1.0, 2.5]], "CruiseSpeed": 2.0}}],
            "DataPackProcessingFunctions": [{"Name": "f", "FunctionId": "state_tf", "LinkedEngine": "p",
                "IsPreprocessing": true, "Inputs": [{"Keyword": "k", "DataPackName": "n", "EngineName": "p"}]}]}"#;
        let cfg = parse_config(text).unwrap();
        let printed = print_config(&cfg).unwrap();
        assert_eq!(parse_config(printed.as_bytes()).unwrap(), cfg);
    }

    #[test]
    fn nanosecond_conversion() {
        assert_eq!(seconds_to_ns(0.01), Ok(10_000_000));
        assert_eq!(seconds_to_ns(0.001), Ok(1_000_000));
        assert_eq!(seconds_to_ns(1e-9), Ok(1));
        assert!(seconds_to_ns(0.0).is_err());
        assert!(seconds_to_ns(1.5e-9).is_err());
        assert!(seconds_to_ns(f64::NAN).is_err());
    }
}
