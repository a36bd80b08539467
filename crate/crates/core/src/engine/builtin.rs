use std::collections::BTreeMap;
use std::sync::Arc;

use super::{EngineError, EngineScript, Registry, ScriptError};
use crate::config::EngineConfig;
use crate::controller::ControllerEngine;
use crate::doc::Doc;
use crate::perception::{CameraEngine, DetectorEngine};
use crate::vehicle::VehicleEngine;

pub type ScriptConstructor = Arc<dyn Fn(&Doc) -> Result<Box<dyn EngineScript>, ScriptError> + Send + Sync>;

/// Engine types that exist in script-based setups but have no
/// implementation here.
const FOREIGN_ENGINE_TYPES: &[&str] = &["python_json", "gazebo", "gazebo_grpc", "gazebo_json", "nest_json"];

/// Maps engine type strings to script constructors.
#[derive(Clone, Default)]
pub struct EngineFactory {
    constructors: BTreeMap<String, ScriptConstructor>,
}

fn boxed<S: EngineScript + 'static>(r: Result<S, ScriptError>) -> Result<Box<dyn EngineScript>, ScriptError> {
    r.map(|s| Box::new(s) as Box<dyn EngineScript>)
}

impl EngineFactory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_builtins() -> Self {
        let mut f = Self::new();
        f.register("vehicle_sim", |x| boxed(VehicleEngine::from_extra(x)));
        f.register("controller", |x| boxed(ControllerEngine::from_extra(x)));
        f.register("camera", |x| boxed(CameraEngine::from_extra(x)));
        f.register("detector", |x| boxed(DetectorEngine::from_extra(x)));
        f
    }

    pub fn register<F>(&mut self, engine_type: &str, ctor: F)
    where
        F: Fn(&Doc) -> Result<Box<dyn EngineScript>, ScriptError> + Send + Sync + 'static,
    {
        self.constructors.insert(engine_type.to_owned(), Arc::new(ctor));
    }

    pub fn types(&self) -> impl Iterator<Item = &str> {
        self.constructors.keys().map(String::as_str)
    }

    pub fn check(&self, cfg: &EngineConfig) -> Result<(), EngineError> {
        if self.constructors.contains_key(&cfg.engine_type) {
            Ok(())
        } else if FOREIGN_ENGINE_TYPES.contains(&cfg.engine_type.as_str()) {
            Err(EngineError::UnsupportedEngineType {
                engine: cfg.engine_name.clone(),
                engine_type: cfg.engine_type.clone(),
            })
        } else {
            Err(EngineError::UnknownEngineType {
                engine: cfg.engine_name.clone(),
                engine_type: cfg.engine_type.clone(),
            })
        }
    }

    /// Builds the script for `cfg`. An integer `FaultAtStep` extra wraps it
    /// in a [`FaultInjector`].
    pub fn create(&self, cfg: &EngineConfig) -> Result<Box<dyn EngineScript>, EngineError> {
        self.check(cfg)?;
        let ctor = &self.constructors[&cfg.engine_type];
        let script = ctor(&cfg.extra).map_err(|e| EngineError::SpawnFailed {
            engine: cfg.engine_name.clone(),
            reason: format!("cannot build {} script: {e}", cfg.engine_type),
        })?;
        match cfg.extra.get("FaultAtStep") {
            None => Ok(script),
            Some(v) => {
                let n = v
                    .as_i64()
                    .and_then(|n| u64::try_from(n).ok())
                    .ok_or_else(|| EngineError::SpawnFailed {
                        engine: cfg.engine_name.clone(),
                        reason: "FaultAtStep must be a non-negative integer".into(),
                    })?;
                Ok(Box::new(FaultInjector::new(script, n)))
            }
        }
    }
}

/// Delegates to a script and fails its `run_loop` call number `fault_at`
/// (counting from zero).
pub struct FaultInjector {
    inner: Box<dyn EngineScript>,
    fault_at: u64,
    calls: u64,
}

impl FaultInjector {
    pub fn new(inner: Box<dyn EngineScript>, fault_at: u64) -> Self {
        Self {
            inner,
            fault_at,
            calls: 0,
        }
    }
}

impl EngineScript for FaultInjector {
    fn initialize(&mut self, registry: &mut Registry) -> Result<(), ScriptError> {
        self.inner.initialize(registry)
    }

    fn run_loop(&mut self, registry: &mut Registry, timestep_ns: u64) -> Result<(), ScriptError> {
        let call = self.calls;
        self.calls += 1;
        if call == self.fault_at {
            return Err(ScriptError(format!("injected fault at run_loop call {call}")));
        }
        self.inner.run_loop(registry, timestep_ns)
    }

    fn shutdown(&mut self, registry: &mut Registry) -> Result<(), ScriptError> {
        self.inner.shutdown(registry)
    }
}
