//! JSON payload codec. Typed payloads are lowered to objects whose field names
//! follow the datapack attribute names (`pos`, `rot`, `image_data`, ...); byte
//! buffers become arrays of integers.

use serde_json::{json, Map, Value as Json};

use super::{msg_type, ErrorCode, Message, TransportError};
use crate::datapack::{DataPack, DataPackId, Payload, PayloadKind};
use crate::doc::{self, Doc};
use crate::perception::{CameraFrame, Detection};
use crate::vehicle::{JointCommand, LinkState, TargetType};

fn malformed(what: impl Into<String>) -> TransportError {
    TransportError::MalformedPayload(what.into())
}

fn float(v: f64) -> Result<Json, TransportError> {
    doc::float_to_json(v).map_err(TransportError::Unencodable)
}

fn floats(vs: &[f64]) -> Result<Json, TransportError> {
    vs.iter()
        .map(|&v| float(v))
        .collect::<Result<Vec<_>, _>>()
        .map(Json::Array)
}

fn byte_array(b: &[u8]) -> Json {
    Json::Array(b.iter().map(|&x| Json::from(x)).collect())
}

fn doc_to_json(d: &Doc) -> Result<Json, TransportError> {
    doc::doc_to_json(d).map_err(TransportError::Unencodable)
}

fn payload_to_json(p: &Payload) -> Result<Json, TransportError> {
    Ok(match p {
        Payload::Doc(d) => doc_to_json(d)?,
        Payload::LinkState(s) => json!({
            "pos": floats(&s.pos)?,
            "rot": floats(&s.rot)?,
            "lin_vel": floats(&s.lin_vel)?,
            "ang_vel": floats(&s.ang_vel)?,
        }),
        Payload::JointCommand(c) => {
            let mut m = Map::new();
            m.insert("joint_name".into(), Json::String(c.joint_name.clone()));
            m.insert(c.target_type.as_str().into(), float(c.target_value)?);
            Json::Object(m)
        }
        Payload::CameraFrame(f) => json!({
            "image_height": f.image_height,
            "image_width": f.image_width,
            "image_depth": f.image_depth,
            "image_data": byte_array(&f.image_data),
        }),
        Payload::Detection(d) => json!({
            "x_min": d.x_min,
            "y_min": d.y_min,
            "x_max": d.x_max,
            "y_max": d.y_max,
            "score": float(d.score)?,
            "label": d.label,
        }),
    })
}

fn id_to_json(id: &DataPackId) -> Json {
    json!({ "name": id.name, "type": id.kind.as_str(), "engine_name": id.engine_name })
}

fn datapack_to_json(dp: &DataPack) -> Result<Json, TransportError> {
    let mut m = match id_to_json(dp.id()) {
        Json::Object(m) => m,
        _ => unreachable!(),
    };
    let data = match dp.payload() {
        None => Json::Null,
        Some(p) => payload_to_json(p)?,
    };
    m.insert("data".into(), data);
    Ok(Json::Object(m))
}

fn packs_to_json(packs: &[DataPack]) -> Result<Json, TransportError> {
    let packs = packs.iter().map(datapack_to_json).collect::<Result<Vec<_>, _>>()?;
    Ok(json!({ "packs": packs }))
}

pub(super) fn encode(msg: &Message) -> Result<Vec<u8>, TransportError> {
    let j = match msg {
        Message::Init {
            engine_name,
            engine_timestep_ns,
        } => json!({ "engine_name": engine_name, "engine_timestep": engine_timestep_ns }),
        Message::InitReply { engine_name } => json!({ "engine_name": engine_name }),
        Message::RunStep { until_time_ns } => json!({ "until_time": until_time_ns }),
        Message::RunStepReply { engine_time_ns } => json!({ "engine_time": engine_time_ns }),
        Message::GetDataPacks { ids } => json!({ "ids": ids.iter().map(id_to_json).collect::<Vec<_>>() }),
        Message::GetDataPacksReply { packs } | Message::SetDataPacks { packs } => packs_to_json(packs)?,
        Message::SetDataPacksAck | Message::Shutdown | Message::ShutdownAck => json!({}),
        Message::Error { code, message } => json!({ "code": code.0, "message": message }),
    };
    serde_json::to_vec(&j).map_err(|e| TransportError::Unencodable(e.to_string()))
}

fn field<'a>(obj: &'a Map<String, Json>, key: &str) -> Result<&'a Json, TransportError> {
    obj.get(key).ok_or_else(|| malformed(format!("missing field {key:?}")))
}

fn as_object<'a>(j: &'a Json, what: &str) -> Result<&'a Map<String, Json>, TransportError> {
    j.as_object()
        .ok_or_else(|| malformed(format!("{what} is not an object")))
}

fn get_str(obj: &Map<String, Json>, key: &str) -> Result<String, TransportError> {
    field(obj, key)?
        .as_str()
        .map(str::to_owned)
        .ok_or_else(|| malformed(format!("{key} is not a string")))
}

fn get_u64(obj: &Map<String, Json>, key: &str) -> Result<u64, TransportError> {
    field(obj, key)?
        .as_u64()
        .ok_or_else(|| malformed(format!("{key} is not an unsigned integer")))
}

fn get_u32(obj: &Map<String, Json>, key: &str) -> Result<u32, TransportError> {
    u32::try_from(get_u64(obj, key)?).map_err(|_| malformed(format!("{key} exceeds 32 bits")))
}

fn get_f64(obj: &Map<String, Json>, key: &str) -> Result<f64, TransportError> {
    field(obj, key)?
        .as_f64()
        .ok_or_else(|| malformed(format!("{key} is not a number")))
}

fn get_floats<const N: usize>(obj: &Map<String, Json>, key: &str) -> Result<[f64; N], TransportError> {
    let arr = field(obj, key)?
        .as_array()
        .filter(|a| a.len() == N)
        .ok_or_else(|| malformed(format!("{key} is not an array of {N} numbers")))?;
    let mut out = [0.0; N];
    for (o, v) in out.iter_mut().zip(arr) {
        *o = v
            .as_f64()
            .ok_or_else(|| malformed(format!("{key} holds a non-number")))?;
    }
    Ok(out)
}

fn json_to_doc(m: &Map<String, Json>) -> Result<Doc, TransportError> {
    doc::doc_from_json(m).map_err(malformed)
}

fn json_to_payload(kind: PayloadKind, j: &Json) -> Result<Payload, TransportError> {
    let o = as_object(j, "datapack data")?;
    Ok(match kind {
        PayloadKind::Doc => Payload::Doc(json_to_doc(o)?),
        PayloadKind::LinkState => Payload::LinkState(LinkState {
            pos: get_floats(o, "pos")?,
            rot: get_floats(o, "rot")?,
            lin_vel: get_floats(o, "lin_vel")?,
            ang_vel: get_floats(o, "ang_vel")?,
        }),
        PayloadKind::JointCommand => {
            let joint_name = get_str(o, "joint_name")?;
            let (target_type, key) = match (o.contains_key("position"), o.contains_key("velocity")) {
                (true, false) => (TargetType::Position, "position"),
                (false, true) => (TargetType::Velocity, "velocity"),
                _ => return Err(malformed("joint command needs exactly one of position/velocity")),
            };
            Payload::JointCommand(JointCommand {
                joint_name,
                target_type,
                target_value: get_f64(o, key)?,
            })
        }
        PayloadKind::CameraFrame => {
            let data = field(o, "image_data")?
                .as_array()
                .ok_or_else(|| malformed("image_data is not an array"))?
                .iter()
                .map(|v| v.as_u64().and_then(|x| u8::try_from(x).ok()))
                .collect::<Option<Vec<u8>>>()
                .ok_or_else(|| malformed("image_data holds values outside 0..=255"))?;
            let frame = CameraFrame::new(
                get_u32(o, "image_height")?,
                get_u32(o, "image_width")?,
                get_u32(o, "image_depth")?,
                data,
            )
            .map_err(|e| malformed(e.to_string()))?;
            Payload::CameraFrame(frame)
        }
        PayloadKind::Detection => Payload::Detection(Detection {
            x_min: get_u32(o, "x_min")?,
            y_min: get_u32(o, "y_min")?,
            x_max: get_u32(o, "x_max")?,
            y_max: get_u32(o, "y_max")?,
            score: get_f64(o, "score")?,
            label: get_str(o, "label")?,
        }),
    })
}

fn json_to_id(j: &Json) -> Result<DataPackId, TransportError> {
    let o = as_object(j, "datapack identifier")?;
    let name = get_str(o, "name")?;
    let engine_name = get_str(o, "engine_name")?;
    if name.is_empty() || engine_name.is_empty() {
        return Err(malformed("datapack identifier with empty name"));
    }
    let kind = get_str(o, "type")?
        .parse::<PayloadKind>()
        .map_err(|e| malformed(e.to_string()))?;
    Ok(DataPackId {
        name,
        kind,
        engine_name,
    })
}

fn json_to_packs(root: &Map<String, Json>) -> Result<Vec<DataPack>, TransportError> {
    let arr = field(root, "packs")?
        .as_array()
        .ok_or_else(|| malformed("packs is not an array"))?;
    arr.iter()
        .map(|p| {
            let id = json_to_id(p)?;
            let data = field(as_object(p, "datapack")?, "data")?;
            let payload = match data {
                Json::Null => None,
                d => Some(json_to_payload(id.kind, d)?),
            };
            DataPack::with_id(id, payload).map_err(|e| malformed(e.to_string()))
        })
        .collect()
}

pub(super) fn decode(kind: u8, payload: &[u8]) -> Result<Message, TransportError> {
    use msg_type::*;
    // Reject unknown types before parsing the body.
    if !matches!(
        kind,
        INIT | INIT_REPLY
            | RUN_STEP
            | RUN_STEP_REPLY
            | GET_DATAPACKS
            | GET_DATAPACKS_REPLY
            | SET_DATAPACKS
            | SET_DATAPACKS_ACK
            | SHUTDOWN
            | SHUTDOWN_ACK
            | ERROR
    ) {
        return Err(TransportError::UnknownMessageType(kind));
    }
    let root: Json = serde_json::from_slice(payload).map_err(|e| malformed(e.to_string()))?;
    let o = as_object(&root, "message")?;
    Ok(match kind {
        INIT => Message::Init {
            engine_name: get_str(o, "engine_name")?,
            engine_timestep_ns: get_u64(o, "engine_timestep")?,
        },
        INIT_REPLY => Message::InitReply {
            engine_name: get_str(o, "engine_name")?,
        },
        RUN_STEP => Message::RunStep {
            until_time_ns: get_u64(o, "until_time")?,
        },
        RUN_STEP_REPLY => Message::RunStepReply {
            engine_time_ns: get_u64(o, "engine_time")?,
        },
        GET_DATAPACKS => {
            let ids = field(o, "ids")?
                .as_array()
                .ok_or_else(|| malformed("ids is not an array"))?
                .iter()
                .map(json_to_id)
                .collect::<Result<_, _>>()?;
            Message::GetDataPacks { ids }
        }
        GET_DATAPACKS_REPLY => Message::GetDataPacksReply {
            packs: json_to_packs(o)?,
        },
        SET_DATAPACKS => Message::SetDataPacks {
            packs: json_to_packs(o)?,
        },
        SET_DATAPACKS_ACK => Message::SetDataPacksAck,
        SHUTDOWN => Message::Shutdown,
        SHUTDOWN_ACK => Message::ShutdownAck,
        ERROR => Message::Error {
            code: ErrorCode(u16::try_from(get_u64(o, "code")?).map_err(|_| malformed("error code exceeds 16 bits"))?),
            message: get_str(o, "message")?,
        },
        _ => unreachable!(),
    })
}
