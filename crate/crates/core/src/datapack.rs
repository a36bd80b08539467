//! DataPacks: the named, engine-bound unit of data routed through a simulation.
//!
//! A DataPack may be *empty*: it carries an identifier but no payload. Engines
//! answer requests they cannot serve with empty packs, and reading the data of
//! an empty pack is an error distinct from asking the cache for an identifier
//! it has never seen.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::doc::Doc;
use crate::perception::{CameraFrame, Detection};
use crate::vehicle::{JointCommand, LinkState};

/// Payload variant names as they travel on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PayloadKind {
    Doc,
    LinkState,
    JointCommand,
    CameraFrame,
    Detection,
}

impl PayloadKind {
    pub const ALL: [PayloadKind; 5] = [
        PayloadKind::Doc,
        PayloadKind::LinkState,
        PayloadKind::JointCommand,
        PayloadKind::CameraFrame,
        PayloadKind::Detection,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PayloadKind::Doc => "doc",
            PayloadKind::LinkState => "link_state",
            PayloadKind::JointCommand => "joint_command",
            PayloadKind::CameraFrame => "camera_frame",
            PayloadKind::Detection => "detection",
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }
}

impl fmt::Display for PayloadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PayloadKind {
    type Err = UnknownPayloadKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| UnknownPayloadKind(s.to_owned()))
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("unknown payload type tag {0:?}")]
pub struct UnknownPayloadKind(pub String);

/// `(name, type tag, engine)` triple naming a DataPack. Equality is structural
/// on all three fields.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DataPackId {
    pub name: String,
    pub kind: PayloadKind,
    pub engine_name: String,
}

impl DataPackId {
    pub fn new(name: impl Into<String>, kind: PayloadKind, engine_name: impl Into<String>) -> Self {
        let id = Self {
            name: name.into(),
            kind,
            engine_name: engine_name.into(),
        };
        debug_assert!(!id.name.is_empty() && !id.engine_name.is_empty());
        id
    }
}

impl fmt::Display for DataPackId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{} ({})", self.name, self.engine_name, self.kind)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Doc(Doc),
    LinkState(LinkState),
    JointCommand(JointCommand),
    CameraFrame(CameraFrame),
    Detection(Detection),
}

impl Payload {
    pub fn kind(&self) -> PayloadKind {
        match self {
            Payload::Doc(_) => PayloadKind::Doc,
            Payload::LinkState(_) => PayloadKind::LinkState,
            Payload::JointCommand(_) => PayloadKind::JointCommand,
            Payload::CameraFrame(_) => PayloadKind::CameraFrame,
            Payload::Detection(_) => PayloadKind::Detection,
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum DataPackError {
    #[error("datapack {0} is empty")]
    Empty(DataPackId),
    #[error("datapack {0} was never stored")]
    NotFound(DataPackId),
    #[error("datapack {id} declared as {} but payload is {found}", id.kind)]
    KindMismatch { id: DataPackId, found: PayloadKind },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataPack {
    id: DataPackId,
    payload: Option<Payload>,
}

impl DataPack {
    /// A full DataPack; the type tag follows the payload variant.
    pub fn new(name: impl Into<String>, engine_name: impl Into<String>, payload: Payload) -> Self {
        Self {
            id: DataPackId::new(name, payload.kind(), engine_name),
            payload: Some(payload),
        }
    }

    pub fn empty(name: impl Into<String>, engine_name: impl Into<String>, kind: PayloadKind) -> Self {
        Self::empty_for(DataPackId::new(name, kind, engine_name))
    }

    pub fn empty_for(id: DataPackId) -> Self {
        Self { id, payload: None }
    }

    /// Pairs an existing identifier with a payload, rejecting variant mismatches.
    pub fn with_id(id: DataPackId, payload: Option<Payload>) -> Result<Self, DataPackError> {
        if let Some(p) = &payload {
            if p.kind() != id.kind {
                return Err(DataPackError::KindMismatch { id, found: p.kind() });
            }
        }
        Ok(Self { id, payload })
    }

    pub fn id(&self) -> &DataPackId {
        &self.id
    }

    pub fn name(&self) -> &str {
        &self.id.name
    }

    pub fn engine_name(&self) -> &str {
        &self.id.engine_name
    }

    pub fn is_empty(&self) -> bool {
        self.payload.is_none()
    }

    pub fn data(&self) -> Result<&Payload, DataPackError> {
        self.payload
            .as_ref()
            .ok_or_else(|| DataPackError::Empty(self.id.clone()))
    }

    pub fn payload(&self) -> Option<&Payload> {
        self.payload.as_ref()
    }

    pub fn into_payload(self) -> Option<Payload> {
        self.payload
    }

    pub fn doc(&self) -> Result<&Doc, DataPackError> {
        match self.data()? {
            Payload::Doc(d) => Ok(d),
            other => Err(self.mismatch(other)),
        }
    }

    pub fn link_state(&self) -> Result<&LinkState, DataPackError> {
        match self.data()? {
            Payload::LinkState(s) => Ok(s),
            other => Err(self.mismatch(other)),
        }
    }

    pub fn camera_frame(&self) -> Result<&CameraFrame, DataPackError> {
        match self.data()? {
            Payload::CameraFrame(f) => Ok(f),
            other => Err(self.mismatch(other)),
        }
    }

    pub fn detection(&self) -> Result<&Detection, DataPackError> {
        match self.data()? {
            Payload::Detection(d) => Ok(d),
            other => Err(self.mismatch(other)),
        }
    }

    pub fn joint_command(&self) -> Result<&JointCommand, DataPackError> {
        match self.data()? {
            Payload::JointCommand(c) => Ok(c),
            other => Err(self.mismatch(other)),
        }
    }

    fn mismatch(&self, found: &Payload) -> DataPackError {
        DataPackError::KindMismatch {
            id: self.id.clone(),
            found: found.kind(),
        }
    }
}

/// Last-writer-wins store of DataPacks keyed by identifier.
#[derive(Debug, Clone, Default)]
pub struct DataPackCache {
    entries: BTreeMap<DataPackId, DataPack>,
}

impl DataPackCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn store(&mut self, dp: DataPack) {
        self.entries.insert(dp.id.clone(), dp);
    }

    pub fn fetch(&self, id: &DataPackId) -> Result<&DataPack, DataPackError> {
        self.entries.get(id).ok_or_else(|| DataPackError::NotFound(id.clone()))
    }

    pub fn contains(&self, id: &DataPackId) -> bool {
        self.entries.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &DataPack> {
        self.entries.values()
    }
}
