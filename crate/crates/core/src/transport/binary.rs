//! Binary payload codec: fixed field order, big-endian integers, IEEE-754
//! doubles, `u32` length prefixes for strings, byte buffers and lists.

use super::{msg_type, ErrorCode, Message, TransportError};
use crate::datapack::{DataPack, DataPackId, Payload, PayloadKind};
use crate::doc::{Doc, Value};
use crate::perception::{CameraFrame, Detection};
use crate::vehicle::{JointCommand, LinkState, TargetType};

const TAG_BOOL: u8 = 0;
const TAG_INT: u8 = 1;
const TAG_FLOAT: u8 = 2;
const TAG_STR: u8 = 3;
const TAG_BYTES: u8 = 4;
const TAG_ARRAY: u8 = 5;
const TAG_MAP: u8 = 6;

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_be_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_be_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_be_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.u64(v.to_bits());
    }
    fn len(&mut self, n: usize) {
        // Frame lengths are u32, so anything longer could not be sent anyway.
        self.u32(n as u32);
    }
    fn bytes(&mut self, b: &[u8]) {
        self.len(b.len());
        self.0.extend_from_slice(b);
    }
    fn str(&mut self, s: &str) {
        self.bytes(s.as_bytes());
    }

    fn id(&mut self, id: &DataPackId) {
        self.str(&id.name);
        self.u8(id.kind.code());
        self.str(&id.engine_name);
    }

    fn value(&mut self, v: &Value) {
        match v {
            Value::Bool(b) => {
                self.u8(TAG_BOOL);
                self.u8(*b as u8);
            }
            Value::Int(i) => {
                self.u8(TAG_INT);
                self.u64(*i as u64);
            }
            Value::Float(f) => {
                self.u8(TAG_FLOAT);
                self.f64(*f);
            }
            Value::Str(s) => {
                self.u8(TAG_STR);
                self.str(s);
            }
            Value::Bytes(b) => {
                self.u8(TAG_BYTES);
                self.bytes(b);
            }
            Value::Array(items) => {
                self.u8(TAG_ARRAY);
                self.len(items.len());
                items.iter().for_each(|i| self.value(i));
            }
            Value::Map(m) => {
                self.u8(TAG_MAP);
                self.doc(m);
            }
        }
    }

    fn doc(&mut self, d: &Doc) {
        self.len(d.len());
        for (k, v) in d {
            self.str(k);
            self.value(v);
        }
    }

    fn payload(&mut self, p: &Payload) {
        match p {
            Payload::Doc(d) => self.doc(d),
            Payload::LinkState(s) => {
                for v in s.pos.iter().chain(&s.rot).chain(&s.lin_vel).chain(&s.ang_vel) {
                    self.f64(*v);
                }
            }
            Payload::JointCommand(c) => {
                self.str(&c.joint_name);
                self.u8(match c.target_type {
                    TargetType::Velocity => 0,
                    TargetType::Position => 1,
                });
                self.f64(c.target_value);
            }
            Payload::CameraFrame(f) => {
                self.u32(f.image_height);
                self.u32(f.image_width);
                self.u32(f.image_depth);
                self.bytes(&f.image_data);
            }
            Payload::Detection(d) => {
                self.u32(d.x_min);
                self.u32(d.y_min);
                self.u32(d.x_max);
                self.u32(d.y_max);
                self.f64(d.score);
                self.str(&d.label);
            }
        }
    }

    fn datapack(&mut self, dp: &DataPack) {
        self.id(dp.id());
        match dp.payload() {
            None => self.u8(0),
            Some(p) => {
                self.u8(1);
                self.payload(p);
            }
        }
    }
}

pub(super) fn datapack_bytes(dp: &DataPack) -> Vec<u8> {
    let mut w = Writer::default();
    w.datapack(dp);
    w.0
}

pub(super) fn encode(msg: &Message) -> Vec<u8> {
    let mut w = Writer::default();
    match msg {
        Message::Init {
            engine_name,
            engine_timestep_ns,
        } => {
            w.str(engine_name);
            w.u64(*engine_timestep_ns);
        }
        Message::InitReply { engine_name } => w.str(engine_name),
        Message::RunStep { until_time_ns } => w.u64(*until_time_ns),
        Message::RunStepReply { engine_time_ns } => w.u64(*engine_time_ns),
        Message::GetDataPacks { ids } => {
            w.len(ids.len());
            ids.iter().for_each(|id| w.id(id));
        }
        Message::GetDataPacksReply { packs } | Message::SetDataPacks { packs } => {
            w.len(packs.len());
            packs.iter().for_each(|p| w.datapack(p));
        }
        Message::SetDataPacksAck | Message::Shutdown | Message::ShutdownAck => {}
        Message::Error { code, message } => {
            w.u16(code.0);
            w.str(message);
        }
    }
    w.0
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

fn malformed(what: impl Into<String>) -> TransportError {
    TransportError::MalformedPayload(what.into())
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TransportError> {
        if self.buf.len() - self.pos < n {
            return Err(malformed(format!("needs {n} more bytes at offset {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, TransportError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, TransportError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32, TransportError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, TransportError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, TransportError> {
        Ok(f64::from_bits(self.u64()?))
    }
    fn bytes(&mut self) -> Result<&'a [u8], TransportError> {
        let n = self.u32()? as usize;
        self.take(n)
    }
    fn str(&mut self) -> Result<String, TransportError> {
        let b = self.bytes()?;
        String::from_utf8(b.to_vec()).map_err(|_| malformed("string is not UTF-8"))
    }
    /// Element count, bounded by the remaining bytes so corrupt counts cannot
    /// trigger huge allocations.
    fn count(&mut self) -> Result<usize, TransportError> {
        let n = self.u32()? as usize;
        if n > self.buf.len() - self.pos {
            return Err(malformed(format!("element count {n} exceeds payload")));
        }
        Ok(n)
    }

    fn id(&mut self) -> Result<DataPackId, TransportError> {
        let name = self.str()?;
        let code = self.u8()?;
        let kind = PayloadKind::from_code(code).ok_or_else(|| malformed(format!("unknown payload kind {code}")))?;
        let engine_name = self.str()?;
        if name.is_empty() || engine_name.is_empty() {
            return Err(malformed("datapack identifier with empty name"));
        }
        Ok(DataPackId {
            name,
            kind,
            engine_name,
        })
    }

    fn value(&mut self, depth: usize) -> Result<Value, TransportError> {
        if depth > 64 {
            return Err(malformed("document nested too deeply"));
        }
        Ok(match self.u8()? {
            TAG_BOOL => match self.u8()? {
                0 => Value::Bool(false),
                1 => Value::Bool(true),
                b => return Err(malformed(format!("bad bool byte {b}"))),
            },
            TAG_INT => Value::Int(self.u64()? as i64),
            TAG_FLOAT => Value::Float(self.f64()?),
            TAG_STR => Value::Str(self.str()?),
            TAG_BYTES => Value::Bytes(self.bytes()?.to_vec()),
            TAG_ARRAY => {
                let n = self.count()?;
                let mut items = Vec::with_capacity(n);
                for _ in 0..n {
                    items.push(self.value(depth + 1)?);
                }
                Value::Array(items)
            }
            TAG_MAP => Value::Map(self.doc(depth + 1)?),
            t => return Err(malformed(format!("unknown value tag {t}"))),
        })
    }

    fn doc(&mut self, depth: usize) -> Result<Doc, TransportError> {
        let n = self.count()?;
        let mut d = Doc::new();
        for _ in 0..n {
            let k = self.str()?;
            let v = self.value(depth)?;
            d.insert(k, v);
        }
        Ok(d)
    }

    fn vec3(&mut self) -> Result<[f64; 3], TransportError> {
        Ok([self.f64()?, self.f64()?, self.f64()?])
    }

    fn payload(&mut self, kind: PayloadKind) -> Result<Payload, TransportError> {
        Ok(match kind {
            PayloadKind::Doc => Payload::Doc(self.doc(0)?),
            PayloadKind::LinkState => Payload::LinkState(LinkState {
                pos: self.vec3()?,
                rot: [self.f64()?, self.f64()?, self.f64()?, self.f64()?],
                lin_vel: self.vec3()?,
                ang_vel: self.vec3()?,
            }),
            PayloadKind::JointCommand => {
                let joint_name = self.str()?;
                let target_type = match self.u8()? {
                    0 => TargetType::Velocity,
                    1 => TargetType::Position,
                    t => return Err(malformed(format!("unknown joint target type {t}"))),
                };
                Payload::JointCommand(JointCommand {
                    joint_name,
                    target_type,
                    target_value: self.f64()?,
                })
            }
            PayloadKind::CameraFrame => {
                let (h, w, d) = (self.u32()?, self.u32()?, self.u32()?);
                let data = self.bytes()?.to_vec();
                Payload::CameraFrame(CameraFrame::new(h, w, d, data).map_err(|e| malformed(e.to_string()))?)
            }
            PayloadKind::Detection => Payload::Detection(Detection {
                x_min: self.u32()?,
                y_min: self.u32()?,
                x_max: self.u32()?,
                y_max: self.u32()?,
                score: self.f64()?,
                label: self.str()?,
            }),
        })
    }

    fn datapack(&mut self) -> Result<DataPack, TransportError> {
        let id = self.id()?;
        let payload = match self.u8()? {
            0 => None,
            1 => Some(self.payload(id.kind)?),
            b => return Err(malformed(format!("bad presence byte {b}"))),
        };
        DataPack::with_id(id, payload).map_err(|e| malformed(e.to_string()))
    }

    fn packs(&mut self) -> Result<Vec<DataPack>, TransportError> {
        let n = self.count()?;
        (0..n).map(|_| self.datapack()).collect()
    }

    fn finish(self) -> Result<(), TransportError> {
        if self.pos != self.buf.len() {
            return Err(malformed(format!("{} trailing bytes", self.buf.len() - self.pos)));
        }
        Ok(())
    }
}

pub(super) fn decode(kind: u8, payload: &[u8]) -> Result<Message, TransportError> {
    use msg_type::*;
    let mut r = Reader { buf: payload, pos: 0 };
    let msg = match kind {
        INIT => Message::Init {
            engine_name: r.str()?,
            engine_timestep_ns: r.u64()?,
        },
        INIT_REPLY => Message::InitReply { engine_name: r.str()? },
        RUN_STEP => Message::RunStep {
            until_time_ns: r.u64()?,
        },
        RUN_STEP_REPLY => Message::RunStepReply {
            engine_time_ns: r.u64()?,
        },
        GET_DATAPACKS => {
            let n = r.count()?;
            let ids = (0..n).map(|_| r.id()).collect::<Result<_, _>>()?;
            Message::GetDataPacks { ids }
        }
        GET_DATAPACKS_REPLY => Message::GetDataPacksReply { packs: r.packs()? },
        SET_DATAPACKS => Message::SetDataPacks { packs: r.packs()? },
        SET_DATAPACKS_ACK => Message::SetDataPacksAck,
        SHUTDOWN => Message::Shutdown,
        SHUTDOWN_ACK => Message::ShutdownAck,
        ERROR => Message::Error {
            code: ErrorCode(r.u16()?),
            message: r.str()?,
        },
        other => return Err(TransportError::UnknownMessageType(other)),
    };
    r.finish()?;
    Ok(msg)
}
