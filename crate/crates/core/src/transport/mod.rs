//! Framed request/reply protocol between the orchestrator and engine servers.
//!
//! Every message travels in a [`frame`] envelope. The payload is encoded with
//! one of two codecs: a JSON text codec, where typed payloads are lowered to
//! documents (pixel buffers become integer arrays), and a compact big-endian
//! binary codec that embeds byte buffers verbatim.

mod binary;
mod channel;
pub mod frame;
mod text;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::datapack::{DataPack, DataPackId};

pub use channel::{queue_pair, Channel, Client, QueueChannel, TcpChannel};
pub use frame::FrameDecoder;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Codec {
    Text,
    Binary,
}

impl Codec {
    pub fn code(self) -> u8 {
        match self {
            Codec::Text => 0x00,
            Codec::Binary => 0x01,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0x00 => Some(Codec::Text),
            0x01 => Some(Codec::Binary),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Codec::Text => "text",
            Codec::Binary => "binary",
        }
    }
}

impl fmt::Display for Codec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Codec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(Codec::Text),
            "binary" => Ok(Codec::Binary),
            other => Err(format!("unknown codec {other:?} (expected text or binary)")),
        }
    }
}

/// Error codes carried by [`Message::Error`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ErrorCode(pub u16);

impl ErrorCode {
    pub const ENGINE_FAULT: ErrorCode = ErrorCode(1);
    pub const NOT_INITIALIZED: ErrorCode = ErrorCode(2);
    pub const MALFORMED_REQUEST: ErrorCode = ErrorCode(3);
    pub const UNREGISTERED_DATAPACK: ErrorCode = ErrorCode(4);
    pub const UNEXPECTED_MESSAGE: ErrorCode = ErrorCode(5);
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match *self {
            ErrorCode::ENGINE_FAULT => "ENGINE_FAULT",
            ErrorCode::NOT_INITIALIZED => "NOT_INITIALIZED",
            ErrorCode::MALFORMED_REQUEST => "MALFORMED_REQUEST",
            ErrorCode::UNREGISTERED_DATAPACK => "UNREGISTERED_DATAPACK",
            ErrorCode::UNEXPECTED_MESSAGE => "UNEXPECTED_MESSAGE",
            ErrorCode(other) => return write!(f, "ERROR_{other}"),
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Init {
        engine_name: String,
        engine_timestep_ns: u64,
    },
    InitReply {
        engine_name: String,
    },
    RunStep {
        until_time_ns: u64,
    },
    RunStepReply {
        engine_time_ns: u64,
    },
    GetDataPacks {
        ids: Vec<DataPackId>,
    },
    GetDataPacksReply {
        packs: Vec<DataPack>,
    },
    SetDataPacks {
        packs: Vec<DataPack>,
    },
    SetDataPacksAck,
    Shutdown,
    ShutdownAck,
    Error {
        code: ErrorCode,
        message: String,
    },
}

pub mod msg_type {
    pub const INIT: u8 = 0x01;
    pub const RUN_STEP: u8 = 0x02;
    pub const GET_DATAPACKS: u8 = 0x03;
    pub const SET_DATAPACKS: u8 = 0x04;
    pub const SHUTDOWN: u8 = 0x05;
    pub const INIT_REPLY: u8 = 0x81;
    pub const RUN_STEP_REPLY: u8 = 0x82;
    pub const GET_DATAPACKS_REPLY: u8 = 0x83;
    pub const SET_DATAPACKS_ACK: u8 = 0x84;
    pub const SHUTDOWN_ACK: u8 = 0x85;
    pub const ERROR: u8 = 0xFF;
}

impl Message {
    pub fn msg_type(&self) -> u8 {
        use msg_type::*;
        match self {
            Message::Init { .. } => INIT,
            Message::InitReply { .. } => INIT_REPLY,
            Message::RunStep { .. } => RUN_STEP,
            Message::RunStepReply { .. } => RUN_STEP_REPLY,
            Message::GetDataPacks { .. } => GET_DATAPACKS,
            Message::GetDataPacksReply { .. } => GET_DATAPACKS_REPLY,
            Message::SetDataPacks { .. } => SET_DATAPACKS,
            Message::SetDataPacksAck => SET_DATAPACKS_ACK,
            Message::Shutdown => SHUTDOWN,
            Message::ShutdownAck => SHUTDOWN_ACK,
            Message::Error { .. } => ERROR,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Message::Init { .. } => "Init",
            Message::InitReply { .. } => "InitReply",
            Message::RunStep { .. } => "RunStep",
            Message::RunStepReply { .. } => "RunStepReply",
            Message::GetDataPacks { .. } => "GetDataPacks",
            Message::GetDataPacksReply { .. } => "GetDataPacksReply",
            Message::SetDataPacks { .. } => "SetDataPacks",
            Message::SetDataPacksAck => "SetDataPacksAck",
            Message::Shutdown => "Shutdown",
            Message::ShutdownAck => "ShutdownAck",
            Message::Error { .. } => "Error",
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum TransportError {
    #[error("bad frame magic")]
    BadMagic,
    #[error("unsupported protocol version {0}")]
    BadVersion(u8),
    #[error("frame uses {found} codec, expected {expected}")]
    CodecMismatch { expected: Codec, found: Codec },
    #[error("frame truncated")]
    Truncated,
    #[error("malformed payload: {0}")]
    MalformedPayload(String),
    #[error("unknown message type {0:#04x}")]
    UnknownMessageType(u8),
    #[error("payload cannot be encoded: {0}")]
    Unencodable(String),
    #[error("timed out waiting for reply")]
    Timeout,
    #[error("connection closed")]
    ConnectionClosed,
    #[error("remote error {code}: {message}")]
    RemoteError { code: ErrorCode, message: String },
    #[error("unexpected reply {got} to {request}")]
    UnexpectedReply { request: &'static str, got: &'static str },
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for TransportError {
    fn from(e: std::io::Error) -> Self {
        use std::io::ErrorKind::*;
        match e.kind() {
            WouldBlock | TimedOut => TransportError::Timeout,
            UnexpectedEof | ConnectionReset | ConnectionAborted | BrokenPipe => TransportError::ConnectionClosed,
            _ => TransportError::Io(e.to_string()),
        }
    }
}

/// Encodes a message as a complete frame. Output is deterministic.
pub fn encode_message(msg: &Message, codec: Codec) -> Result<Vec<u8>, TransportError> {
    let payload = match codec {
        Codec::Binary => binary::encode(msg),
        Codec::Text => text::encode(msg)?,
    };
    frame::write_frame(codec, msg.msg_type(), &payload)
}

pub fn decode_message(bytes: &[u8], expect: Codec) -> Result<Message, TransportError> {
    let (header, payload) = frame::split_frame(bytes)?;
    if header.codec != expect {
        return Err(TransportError::CodecMismatch {
            expected: expect,
            found: header.codec,
        });
    }
    match expect {
        Codec::Binary => binary::decode(header.msg_type, payload),
        Codec::Text => text::decode(header.msg_type, payload),
    }
}

/// Binary encoding of a single DataPack; the orchestrator hashes these.
pub fn datapack_bytes(dp: &DataPack) -> Vec<u8> {
    binary::datapack_bytes(dp)
}
