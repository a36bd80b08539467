//! Tree-shaped documents: the free-form payload that every codec can carry.

use std::collections::BTreeMap;

use serde_json::{Map, Number, Value as Json};

/// Keys are kept sorted so that every encoding of a document is deterministic.
pub type Doc = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    /// Raw byte buffer. The binary codec carries it verbatim, the text codec
    /// lowers it to an array of integers in `0..=255`.
    Bytes(Vec<u8>),
    Array(Vec<Value>),
    Map(Doc),
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Value::Int(i) => Some(i as f64),
            Value::Float(f) => Some(f),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match *self {
            Value::Int(i) => Some(i),
            Value::Float(f) if f.fract() == 0.0 && f.abs() < 9.0e15 => Some(f as i64),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            _ => None,
        }
    }

    /// Byte view of a value: either a raw buffer or an array of integers that
    /// all fit in a byte.
    pub fn to_bytes(&self) -> Option<Vec<u8>> {
        match self {
            Value::Bytes(b) => Some(b.clone()),
            Value::Array(items) => items
                .iter()
                .map(|v| match v {
                    Value::Int(i) => u8::try_from(*i).ok(),
                    _ => None,
                })
                .collect(),
            _ => None,
        }
    }

    /// The value as the text codec would hand it back: byte buffers become
    /// integer arrays, recursively.
    pub fn lowered(&self) -> Value {
        match self {
            Value::Bytes(b) => Value::Array(b.iter().map(|&x| Value::Int(x as i64)).collect()),
            Value::Array(items) => Value::Array(items.iter().map(Value::lowered).collect()),
            Value::Map(m) => Value::Map(lower_doc(m)),
            other => other.clone(),
        }
    }
}

pub fn lower_doc(doc: &Doc) -> Doc {
    doc.iter().map(|(k, v)| (k.clone(), v.lowered())).collect()
}

impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Bool(v)
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Float(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Str(v.to_owned())
    }
}

impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Str(v)
    }
}

/// Builds a [`Doc`] from `key => value` pairs.
#[macro_export]
macro_rules! doc {
    () => { $crate::doc::Doc::new() };
    ($($key:expr => $value:expr),+ $(,)?) => {{
        let mut d = $crate::doc::Doc::new();
        $( d.insert(String::from($key), $crate::doc::Value::from($value)); )+
        d
    }};
}

/// Numeric field lookup accepting both integer and float encodings.
pub fn get_f64(doc: &Doc, key: &str) -> Option<f64> {
    doc.get(key).and_then(Value::as_f64)
}

/// Converts a document value to JSON. Byte buffers become integer arrays;
/// non-finite floats have no JSON form and are rejected.
pub fn value_to_json(v: &Value) -> Result<Json, String> {
    Ok(match v {
        Value::Bool(b) => Json::Bool(*b),
        Value::Int(i) => Json::from(*i),
        Value::Float(f) => float_to_json(*f)?,
        Value::Str(s) => Json::String(s.clone()),
        Value::Bytes(b) => Json::Array(b.iter().map(|&x| Json::from(x)).collect()),
        Value::Array(items) => Json::Array(items.iter().map(value_to_json).collect::<Result<_, _>>()?),
        Value::Map(m) => doc_to_json(m)?,
    })
}

pub fn float_to_json(f: f64) -> Result<Json, String> {
    Number::from_f64(f)
        .map(Json::Number)
        .ok_or_else(|| format!("non-finite number {f} has no JSON form"))
}

pub fn doc_to_json(d: &Doc) -> Result<Json, String> {
    let mut m = Map::new();
    for (k, v) in d {
        m.insert(k.clone(), value_to_json(v)?);
    }
    Ok(Json::Object(m))
}

/// Converts JSON to a document value. Integers that fit in `i64` stay
/// integers; `null` is not representable.
pub fn value_from_json(j: &Json) -> Result<Value, String> {
    Ok(match j {
        Json::Null => return Err("null is not a document value".into()),
        Json::Bool(b) => Value::Bool(*b),
        Json::Number(n) => {
            if let Some(i) = n.as_i64() {
                Value::Int(i)
            } else if n.is_u64() {
                return Err(format!("integer {n} exceeds the 64-bit signed range"));
            } else {
                Value::Float(n.as_f64().ok_or_else(|| format!("bad number {n}"))?)
            }
        }
        Json::String(s) => Value::Str(s.clone()),
        Json::Array(items) => Value::Array(items.iter().map(value_from_json).collect::<Result<_, _>>()?),
        Json::Object(m) => Value::Map(doc_from_json(m)?),
    })
}

pub fn doc_from_json(m: &Map<String, Json>) -> Result<Doc, String> {
    m.iter().map(|(k, v)| Ok((k.clone(), value_from_json(v)?))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn doc_macro_sorts_keys() {
        let d = doc! { "b" => 1i64, "a" => 2.5 };
        let keys: Vec<_> = d.keys().cloned().collect();
        assert_eq!(keys, ["a", "b"]);
        assert_eq!(get_f64(&d, "b"), Some(1.0));
    }

    #[test]
    fn bytes_lower_to_int_arrays() {
        let v = Value::Map(doc! { "img" => Value::Bytes(vec![0, 7, 255]) });
        let Value::Map(m) = v.lowered() else { unreachable!() };
        assert_eq!(
            m["img"],
            Value::Array(vec![Value::Int(0), Value::Int(7), Value::Int(255)])
        );
        assert_eq!(m["img"].to_bytes(), Some(vec![0, 7, 255]));
    }

    #[test]
    fn json_conversion_keeps_int_float_split() {
        let d = doc! { "i" => 1i64, "f" => 1.0, "s" => "x", "b" => true };
        let j = doc_to_json(&d).unwrap();
        assert_eq!(j.to_string(), r#"{"b":true,"f":1.0,"i":1,"s":"x"}"#);
        assert_eq!(doc_from_json(j.as_object().unwrap()).unwrap(), d);
        assert!(float_to_json(f64::NAN).is_err());
        assert!(value_from_json(&Json::Null).is_err());
    }

    #[test]
    fn out_of_range_ints_are_not_bytes() {
        assert_eq!(Value::Array(vec![Value::Int(256)]).to_bytes(), None);
        assert_eq!(Value::Array(vec![Value::Float(1.0)]).to_bytes(), None);
    }
}
