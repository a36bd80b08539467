//! Transceiver and preprocessing functions: declarative input bindings, pure
//! bodies, and output routing.

mod builtin;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::config::SimulationConfig;
use crate::datapack::{DataPack, DataPackCache, DataPackId, PayloadKind};
use crate::perception::Detection;

pub use builtin::{camera_tf, detection_log_tf, motor_set_tf, state_tf, ACTORS_DATAPACK, STATE_LOCATION_DATAPACK};

/// Side records a function body hands to the metrics sink.
#[derive(Debug, Clone, PartialEq)]
pub enum SinkRecord {
    Detection { step: u64, detection: Option<Detection> },
}

#[derive(Debug, Clone)]
pub struct FunctionContext {
    pub linked_engine: String,
    pub step_index: u64,
    pub sim_time_ns: u64,
    pub records: Vec<SinkRecord>,
}

impl FunctionContext {
    pub fn new(linked_engine: impl Into<String>, step_index: u64, sim_time_ns: u64) -> Self {
        Self {
            linked_engine: linked_engine.into(),
            step_index,
            sim_time_ns,
            records: Vec::new(),
        }
    }
}

pub type Inputs = BTreeMap<String, DataPack>;
pub type FunctionBody = Arc<dyn Fn(&Inputs, &mut FunctionContext) -> Result<Vec<DataPack>, String> + Send + Sync>;

/// A registered body together with the keywords it reads and their types.
#[derive(Clone)]
pub struct FunctionEntry {
    pub inputs: Vec<(String, PayloadKind)>,
    pub body: FunctionBody,
}

#[derive(Clone, Default)]
pub struct FunctionRegistry {
    entries: BTreeMap<String, FunctionEntry>,
}

impl FunctionRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_builtins() -> Self {
        let mut r = Self::new();
        builtin::register_all(&mut r);
        r
    }

    pub fn register<F>(&mut self, id: &str, inputs: &[(&str, PayloadKind)], body: F)
    where
        F: Fn(&Inputs, &mut FunctionContext) -> Result<Vec<DataPack>, String> + Send + Sync + 'static,
    {
        self.entries.insert(
            id.to_owned(),
            FunctionEntry {
                inputs: inputs.iter().map(|(k, t)| ((*k).to_owned(), *t)).collect(),
                body: Arc::new(body),
            },
        );
    }

    pub fn get(&self, id: &str) -> Option<&FunctionEntry> {
        self.entries.get(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FunctionKind {
    Transceiver,
    Preprocessing,
}

#[derive(Clone)]
pub struct FunctionSpec {
    pub name: String,
    pub kind: FunctionKind,
    pub linked_engine: String,
    pub inputs: Vec<(String, DataPackId)>,
    pub body: FunctionBody,
}

impl fmt::Debug for FunctionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FunctionSpec")
            .field("name", &self.name)
            .field("kind", &self.kind)
            .field("linked_engine", &self.linked_engine)
            .field("inputs", &self.inputs)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum WiringError {
    #[error("function {function:?}: no registered function with id {id:?}")]
    UnknownFunctionId { function: String, id: String },
    #[error("function {0:?} has no LinkedEngine")]
    MissingLinkedEngine(String),
    #[error("function {function:?} refers to unknown engine {engine:?}")]
    UnknownEngineRef { function: String, engine: String },
    #[error("function {function:?} binds keyword {keyword:?} twice")]
    DuplicateKeyword { function: String, keyword: String },
    #[error("function {function:?}: {detail}")]
    BindingMismatch { function: String, detail: String },
    #[error("preprocessing function {function:?} reads from {engine:?}, not its linked engine")]
    ForeignPreprocessingInput { function: String, engine: String },
}

/// Checks every function reference in `cfg` against the configured engines
/// and the registry, and builds the executable specs in declaration order.
pub fn build_specs(cfg: &SimulationConfig, registry: &FunctionRegistry) -> Result<Vec<FunctionSpec>, WiringError> {
    let engines: BTreeSet<&str> = cfg.engine_configs.iter().map(|e| e.engine_name.as_str()).collect();
    cfg.functions
        .iter()
        .map(|f| {
            let function = f.name.clone();
            let entry = registry
                .get(&f.function_id)
                .ok_or_else(|| WiringError::UnknownFunctionId {
                    function: function.clone(),
                    id: f.function_id.clone(),
                })?;
            let linked = f
                .linked_engine
                .clone()
                .ok_or_else(|| WiringError::MissingLinkedEngine(function.clone()))?;
            if !engines.contains(linked.as_str()) {
                return Err(WiringError::UnknownEngineRef {
                    function,
                    engine: linked,
                });
            }
            let kind = if f.is_preprocessing {
                FunctionKind::Preprocessing
            } else {
                FunctionKind::Transceiver
            };

            let mut inputs = Vec::with_capacity(f.inputs.len());
            for b in &f.inputs {
                if inputs.iter().any(|(k, _): &(String, DataPackId)| *k == b.keyword) {
                    return Err(WiringError::DuplicateKeyword {
                        function,
                        keyword: b.keyword.clone(),
                    });
                }
                if !engines.contains(b.engine_name.as_str()) {
                    return Err(WiringError::UnknownEngineRef {
                        function,
                        engine: b.engine_name.clone(),
                    });
                }
                if kind == FunctionKind::Preprocessing && b.engine_name != linked {
                    return Err(WiringError::ForeignPreprocessingInput {
                        function,
                        engine: b.engine_name.clone(),
                    });
                }
                let (_, ptype) =
                    entry
                        .inputs
                        .iter()
                        .find(|(k, _)| *k == b.keyword)
                        .ok_or_else(|| WiringError::BindingMismatch {
                            function: function.clone(),
                            detail: format!("{:?} takes no input named {:?}", f.function_id, b.keyword),
                        })?;
                inputs.push((
                    b.keyword.clone(),
                    DataPackId::new(b.datapack_name.as_str(), *ptype, b.engine_name.as_str()),
                ));
            }
            if let Some((k, _)) = entry.inputs.iter().find(|(k, _)| !inputs.iter().any(|(b, _)| b == k)) {
                return Err(WiringError::BindingMismatch {
                    function,
                    detail: format!("input {k:?} of {:?} is not bound", f.function_id),
                });
            }
            Ok(FunctionSpec {
                name: f.name.clone(),
                kind,
                linked_engine: linked,
                inputs,
                body: entry.body.clone(),
            })
        })
        .collect()
}

pub fn validate_wiring(cfg: &SimulationConfig, registry: &FunctionRegistry) -> Result<(), WiringError> {
    build_specs(cfg, registry).map(|_| ())
}

/// Preprocessing functions first, then transceiver functions; declaration
/// order is kept within each group.
pub fn pipeline_order(specs: &[FunctionSpec]) -> Vec<&FunctionSpec> {
    let pfs = specs.iter().filter(|s| s.kind == FunctionKind::Preprocessing);
    let tfs = specs.iter().filter(|s| s.kind == FunctionKind::Transceiver);
    pfs.chain(tfs).collect()
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum PipelineError {
    #[error("function {function:?} failed: {message}")]
    BodyFault { function: String, message: String },
    #[error("function {function:?} produced a datapack for unknown engine {engine:?}")]
    OutputToUnknownEngine { function: String, engine: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Routed {
    ToEngines(Vec<DataPack>),
    ToCache(Vec<DataPack>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionOutput {
    pub routed: Routed,
    pub records: Vec<SinkRecord>,
}

/// Resolves inputs (fresh engine data, then cached preprocessing outputs,
/// else an empty datapack) and runs the body.
pub fn execute_function(
    spec: &FunctionSpec,
    cache: &DataPackCache,
    engine_packs: &BTreeMap<DataPackId, DataPack>,
    known_engines: &BTreeSet<String>,
    step_index: u64,
    sim_time_ns: u64,
) -> Result<FunctionOutput, PipelineError> {
    let inputs: Inputs = spec
        .inputs
        .iter()
        .map(|(kw, id)| {
            let dp = match engine_packs.get(id) {
                Some(dp) if !dp.is_empty() => dp.clone(),
                found => match cache.fetch(id) {
                    Ok(dp) => dp.clone(),
                    Err(_) => found.cloned().unwrap_or_else(|| DataPack::empty_for(id.clone())),
                },
            };
            (kw.clone(), dp)
        })
        .collect();
    let mut ctx = FunctionContext::new(spec.linked_engine.as_str(), step_index, sim_time_ns);
    let outputs = (spec.body)(&inputs, &mut ctx).map_err(|message| PipelineError::BodyFault {
        function: spec.name.clone(),
        message,
    })?;
    let routed = match spec.kind {
        FunctionKind::Preprocessing => Routed::ToCache(outputs),
        FunctionKind::Transceiver => {
            if let Some(dp) = outputs.iter().find(|dp| !known_engines.contains(dp.engine_name())) {
                return Err(PipelineError::OutputToUnknownEngine {
                    function: spec.name.clone(),
                    engine: dp.engine_name().to_owned(),
                });
            }
            Routed::ToEngines(outputs)
        }
    };
    Ok(FunctionOutput {
        routed,
        records: ctx.records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{parse_config, FunctionConfig, InputBinding};
    use crate::datapack::Payload;
    use crate::doc;

    fn spec(name: &str, kind: FunctionKind) -> FunctionSpec {
        FunctionSpec {
            name: name.into(),
            kind,
            linked_engine: "e".into(),
            inputs: vec![],
            body: Arc::new(|_, _| Ok(vec![])),
        }
    }

    #[test]
    fn preprocessing_runs_first_in_stable_order() {
        use FunctionKind::*;
        let specs = [
            spec("tf_a", Transceiver),
            spec("pf_b", Preprocessing),
            spec("tf_c", Transceiver),
        ];
        let names: Vec<_> = pipeline_order(&specs).iter().map(|s| s.name.as_str()).collect();
        assert_eq!(names, ["pf_b", "tf_a", "tf_c"]);
        assert!(pipeline_order(&[]).is_empty());
        let specs = [spec("pf_1", Preprocessing), spec("pf_2", Preprocessing)];
        let names: Vec<_> = pipeline_order(&specs).iter().map(|s| s.name.as_str()).collect();
        assert_eq!(names, ["pf_1", "pf_2"]);
    }

    fn two_engine_config() -> SimulationConfig {
        parse_config(
            br#"{"EngineConfigs": [{"EngineName": "vehicle", "EngineType": "vehicle_sim"},
                                   {"EngineName": "car_ctl_engine", "EngineType": "controller"}]}"#,
        )
        .unwrap()
    }

    fn state_fn() -> FunctionConfig {
        let mut f = FunctionConfig::new("state", "state_tf");
        f.linked_engine = Some("car_ctl_engine".into());
        f.inputs.push(InputBinding {
            keyword: "state_gazebo".into(),
            datapack_name: crate::vehicle::LINK_DATAPACK.into(),
            engine_name: "vehicle".into(),
        });
        f
    }

    #[test]
    fn wiring_errors() {
        let reg = FunctionRegistry::with_builtins();
        let mut cfg = two_engine_config();
        cfg.functions.push(state_fn());
        let specs = build_specs(&cfg, &reg).unwrap();
        assert_eq!(specs[0].inputs[0].1.kind, PayloadKind::LinkState);

        let mut ghost = cfg.clone();
        ghost.functions[0].linked_engine = Some("ghost".into());
        assert!(matches!(
            validate_wiring(&ghost, &reg),
            Err(WiringError::UnknownEngineRef { engine, .. }) if engine == "ghost"
        ));

        let mut unknown = cfg.clone();
        unknown.functions[0].function_id = "does_not_exist".into();
        assert!(matches!(
            validate_wiring(&unknown, &reg),
            Err(WiringError::UnknownFunctionId { .. })
        ));

        let mut pf = cfg.clone();
        pf.functions[0].is_preprocessing = true;
        assert!(matches!(
            validate_wiring(&pf, &reg),
            Err(WiringError::ForeignPreprocessingInput { .. })
        ));

        let mut dup = cfg.clone();
        let b = dup.functions[0].inputs[0].clone();
        dup.functions[0].inputs.push(b);
        assert!(matches!(
            validate_wiring(&dup, &reg),
            Err(WiringError::DuplicateKeyword { .. })
        ));

        let mut unbound = cfg;
        unbound.functions[0].inputs.clear();
        assert!(matches!(
            validate_wiring(&unbound, &reg),
            Err(WiringError::BindingMismatch { .. })
        ));
    }

    #[test]
    fn preprocessing_outputs_stay_in_cache() {
        let id = DataPackId::new("raw", PayloadKind::Doc, "e");
        let pf = FunctionSpec {
            name: "pf".into(),
            kind: FunctionKind::Preprocessing,
            linked_engine: "e".into(),
            inputs: vec![("raw".into(), id.clone())],
            body: Arc::new(|inputs, ctx| {
                let n = inputs["raw"].doc().map_err(|e| e.to_string())?.len() as i64;
                Ok(vec![DataPack::new(
                    "count",
                    ctx.linked_engine.as_str(),
                    Payload::Doc(doc! { "n" => n }),
                )])
            }),
        };
        let mut packs = BTreeMap::new();
        packs.insert(
            id.clone(),
            DataPack::new("raw", "e", Payload::Doc(doc! { "a" => 1i64 })),
        );
        let engines = BTreeSet::from(["e".to_owned()]);
        let out = execute_function(&pf, &DataPackCache::new(), &packs, &engines, 0, 0).unwrap();
        let Routed::ToCache(dps) = out.routed else {
            panic!("preprocessing output routed to engines")
        };
        assert_eq!(dps[0].doc().unwrap()["n"], doc::Value::Int(1));
    }

    #[test]
    fn transceiver_output_to_unknown_engine() {
        let tf = FunctionSpec {
            name: "tf".into(),
            kind: FunctionKind::Transceiver,
            linked_engine: "e".into(),
            inputs: vec![],
            body: Arc::new(|_, _| Ok(vec![DataPack::empty("x", "ghost", PayloadKind::Doc)])),
        };
        let engines = BTreeSet::from(["e".to_owned()]);
        assert_eq!(
            execute_function(&tf, &DataPackCache::new(), &BTreeMap::new(), &engines, 0, 0),
            Err(PipelineError::OutputToUnknownEngine {
                function: "tf".into(),
                engine: "ghost".into()
            })
        );
    }

    #[test]
    fn inputs_fall_back_to_cache_then_empty() {
        let cached = DataPackId::new("pre", PayloadKind::Doc, "e");
        let missing = DataPackId::new("none", PayloadKind::Doc, "e");
        let tf = FunctionSpec {
            name: "tf".into(),
            kind: FunctionKind::Transceiver,
            linked_engine: "e".into(),
            inputs: vec![("a".into(), cached.clone()), ("b".into(), missing.clone())],
            body: Arc::new(|inputs, _| {
                assert!(!inputs["a"].is_empty());
                assert!(inputs["b"].is_empty());
                Ok(vec![])
            }),
        };
        let mut cache = DataPackCache::new();
        cache.store(DataPack::new("pre", "e", Payload::Doc(doc! { "v" => 1.0 })));
        let mut packs = BTreeMap::new();
        packs.insert(cached.clone(), DataPack::empty_for(cached));
        let engines = BTreeSet::from(["e".to_owned()]);
        let out = execute_function(&tf, &cache, &packs, &engines, 0, 0).unwrap();
        assert_eq!(out.routed, Routed::ToEngines(vec![]));
    }
}
