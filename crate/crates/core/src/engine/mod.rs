//! Engines: independently stepped simulation participants behind the
//! request/reply protocol.
//!
//! An [`EngineScript`] owns the simulation logic and talks to the outside
//! world only through its [`Registry`] of named datapacks. The server side
//! ([`serve_engine`]) drives the script from protocol messages; the client
//! side ([`EngineHandle`]) is what the orchestrator holds.

mod builtin;
mod launch;
mod server;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::datapack::{DataPack, DataPackError, DataPackId, Payload, PayloadKind};

pub use builtin::{EngineFactory, FaultInjector, ScriptConstructor};
pub use launch::{
    launch_engine, pick_free_port, DirectConnection, EngineConnection, EngineError, EngineHandle, Teardown,
    DEFAULT_HANDSHAKE_TIMEOUT, SHUTDOWN_GRACE,
};
pub use server::{serve_engine, serve_tcp, EngineServer};

/// Failure raised by a script callback; reported to the orchestrator as an
/// engine fault.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("{0}")]
pub struct ScriptError(pub String);

impl From<RegistryError> for ScriptError {
    fn from(e: RegistryError) -> Self {
        ScriptError(e.to_string())
    }
}

impl From<DataPackError> for ScriptError {
    fn from(e: DataPackError) -> Self {
        ScriptError(e.to_string())
    }
}

pub trait EngineScript: Send {
    /// Registers datapacks and sets their initial values.
    fn initialize(&mut self, registry: &mut Registry) -> Result<(), ScriptError>;

    /// Advances the engine by exactly one timestep.
    fn run_loop(&mut self, registry: &mut Registry, timestep_ns: u64) -> Result<(), ScriptError>;

    fn shutdown(&mut self, _registry: &mut Registry) -> Result<(), ScriptError> {
        Ok(())
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum RegistryError {
    #[error("datapack {0:?} is not registered")]
    UnregisteredName(String),
    #[error("datapack {0:?} registered outside initialize")]
    RegisterAfterInit(String),
    #[error("datapack {0:?} registered twice")]
    AlreadyRegistered(String),
    #[error("datapack {name:?} is registered as {expected}, got {found}")]
    KindMismatch {
        name: String,
        expected: PayloadKind,
        found: PayloadKind,
    },
    #[error("datapack {name:?} addressed to engine {target:?}, not {engine:?}")]
    WrongEngine {
        name: String,
        target: String,
        engine: String,
    },
}

/// Engine-local datapack store. Each name's payload type is fixed when it is
/// registered.
#[derive(Debug, Clone)]
pub struct Registry {
    engine_name: String,
    packs: BTreeMap<String, DataPack>,
    open: bool,
}

impl Registry {
    pub fn new(engine_name: impl Into<String>) -> Self {
        Self {
            engine_name: engine_name.into(),
            packs: BTreeMap::new(),
            open: false,
        }
    }

    pub fn engine_name(&self) -> &str {
        &self.engine_name
    }

    pub(crate) fn set_open(&mut self, open: bool) {
        self.open = open;
    }

    pub fn register(&mut self, name: &str, kind: PayloadKind) -> Result<(), RegistryError> {
        if !self.open {
            return Err(RegistryError::RegisterAfterInit(name.to_owned()));
        }
        if self.packs.contains_key(name) {
            return Err(RegistryError::AlreadyRegistered(name.to_owned()));
        }
        self.packs
            .insert(name.to_owned(), DataPack::empty(name, self.engine_name.as_str(), kind));
        Ok(())
    }

    fn slot(&mut self, name: &str) -> Result<&mut DataPack, RegistryError> {
        self.packs
            .get_mut(name)
            .ok_or_else(|| RegistryError::UnregisteredName(name.to_owned()))
    }

    pub fn set(&mut self, name: &str, payload: Payload) -> Result<(), RegistryError> {
        let slot = self.slot(name)?;
        let expected = slot.id().kind;
        if payload.kind() != expected {
            return Err(RegistryError::KindMismatch {
                name: name.to_owned(),
                expected,
                found: payload.kind(),
            });
        }
        *slot = DataPack::new(name, slot.engine_name().to_owned(), payload);
        Ok(())
    }

    pub fn set_empty(&mut self, name: &str) -> Result<(), RegistryError> {
        let slot = self.slot(name)?;
        *slot = DataPack::empty_for(slot.id().clone());
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&DataPack, RegistryError> {
        self.packs
            .get(name)
            .ok_or_else(|| RegistryError::UnregisteredName(name.to_owned()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.packs.keys().map(String::as_str)
    }

    /// Stores a datapack delivered by the orchestrator.
    pub fn receive(&mut self, dp: DataPack) -> Result<(), RegistryError> {
        if dp.engine_name() != self.engine_name {
            return Err(RegistryError::WrongEngine {
                name: dp.name().to_owned(),
                target: dp.engine_name().to_owned(),
                engine: self.engine_name.clone(),
            });
        }
        let slot = self.slot(dp.name())?;
        if slot.id().kind != dp.id().kind {
            return Err(RegistryError::KindMismatch {
                name: dp.name().to_owned(),
                expected: slot.id().kind,
                found: dp.id().kind,
            });
        }
        *slot = dp;
        Ok(())
    }

    /// Answers a datapack request. Names this engine does not provide come
    /// back empty.
    pub fn lookup(&self, id: &DataPackId) -> Result<DataPack, RegistryError> {
        match self.packs.get(&id.name) {
            Some(dp) if id.engine_name == self.engine_name => {
                if dp.id().kind != id.kind {
                    return Err(RegistryError::KindMismatch {
                        name: id.name.clone(),
                        expected: dp.id().kind,
                        found: id.kind,
                    });
                }
                Ok(dp.clone())
            }
            _ => Ok(DataPack::empty_for(id.clone())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::doc;
    use crate::doc::Doc;

    fn open_registry() -> Registry {
        let mut r = Registry::new("car_ctl_engine");
        r.set_open(true);
        r
    }

    #[test]
    fn register_set_get_actors() {
        let mut r = open_registry();
        r.register("actors", PayloadKind::Doc).unwrap();
        let actors = doc! { "angular_L" => 0i64, "angular_R" => 0i64, "linear_L" => 0i64, "linear_R" => 0i64 };
        r.set("actors", Payload::Doc(actors.clone())).unwrap();
        assert_eq!(r.get("actors").unwrap().doc().unwrap(), &actors);
    }

    #[test]
    fn unregistered_and_late_registration() {
        let mut r = open_registry();
        assert_eq!(
            r.get("never_registered").unwrap_err(),
            RegistryError::UnregisteredName("never_registered".into())
        );
        r.set_open(false);
        assert_eq!(
            r.register("late", PayloadKind::Doc),
            Err(RegistryError::RegisterAfterInit("late".into()))
        );
    }

    #[test]
    fn type_fixed_at_registration() {
        let mut r = open_registry();
        r.register("actors", PayloadKind::Doc).unwrap();
        let link = crate::vehicle::publish_link_state(
            &crate::vehicle::VehicleState::default(),
            &crate::vehicle::VehicleParams::default(),
        );
        assert!(matches!(
            r.set("actors", Payload::LinkState(link)),
            Err(RegistryError::KindMismatch { .. })
        ));
    }

    #[test]
    fn receive_and_lookup() {
        let mut r = open_registry();
        r.register("state_location", PayloadKind::Doc).unwrap();
        let dp = DataPack::new(
            "state_location",
            "car_ctl_engine",
            Payload::Doc(doc! { "location_x" => 1.0 }),
        );
        r.receive(dp.clone()).unwrap();
        assert_eq!(r.lookup(dp.id()).unwrap(), dp);

        let foreign = DataPack::new("state_location", "vehicle", Payload::Doc(Doc::new()));
        assert!(matches!(r.receive(foreign), Err(RegistryError::WrongEngine { .. })));

        let unknown = DataPackId::new("nothing", PayloadKind::Doc, "car_ctl_engine");
        assert!(r.lookup(&unknown).unwrap().is_empty());
    }
}
