//! Frame envelope: 12-byte header followed by the codec payload.
//!
//! ```text
//! 0      4   5     6        7         8            12
//! +------+---+-----+--------+---------+------------+---------
//! | NRPL |ver|codec|msg_type|reserved | len (u32BE)| payload
//! +------+---+-----+--------+---------+------------+---------
//! ```

use super::{Codec, TransportError};

pub const MAGIC: [u8; 4] = *b"NRPL";
pub const VERSION: u8 = 0x01;
pub const HEADER_LEN: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameHeader {
    pub codec: Codec,
    pub msg_type: u8,
    pub payload_len: u32,
}

pub fn write_frame(codec: Codec, msg_type: u8, payload: &[u8]) -> Result<Vec<u8>, TransportError> {
    let len = u32::try_from(payload.len()).map_err(|_| {
        TransportError::Unencodable(format!(
            "payload of {} bytes exceeds the 32-bit frame length",
            payload.len()
        ))
    })?;
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(codec.code());
    out.push(msg_type);
    out.push(0);
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(payload);
    Ok(out)
}

/// Validates the header prefix of `bytes`. Magic and version are checked as
/// soon as enough bytes are present, so garbage is rejected before the rest
/// of the frame arrives.
pub fn parse_header(bytes: &[u8]) -> Result<Option<FrameHeader>, TransportError> {
    let magic_seen = bytes.len().min(4);
    if bytes[..magic_seen] != MAGIC[..magic_seen] {
        return Err(TransportError::BadMagic);
    }
    if bytes.len() > 4 && bytes[4] != VERSION {
        return Err(TransportError::BadVersion(bytes[4]));
    }
    if bytes.len() < HEADER_LEN {
        return Ok(None);
    }
    let codec = Codec::from_code(bytes[5])
        .ok_or_else(|| TransportError::MalformedPayload(format!("unknown codec byte {:#04x}", bytes[5])))?;
    if bytes[7] != 0 {
        return Err(TransportError::MalformedPayload(
            "reserved header byte is not zero".into(),
        ));
    }
    let payload_len = u32::from_be_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]);
    Ok(Some(FrameHeader {
        codec,
        msg_type: bytes[6],
        payload_len,
    }))
}

/// Splits a complete frame into its header and payload.
pub fn split_frame(frame: &[u8]) -> Result<(FrameHeader, &[u8]), TransportError> {
    let header = parse_header(frame)?.ok_or(TransportError::Truncated)?;
    let body = &frame[HEADER_LEN..];
    let len = header.payload_len as usize;
    if body.len() < len {
        return Err(TransportError::Truncated);
    }
    if body.len() > len {
        return Err(TransportError::MalformedPayload(format!(
            "{} trailing bytes after frame",
            body.len() - len
        )));
    }
    Ok((header, body))
}

/// Incremental frame splitter for byte streams.
#[derive(Debug, Default)]
pub struct FrameDecoder {
    buf: Vec<u8>,
}

impl FrameDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    pub fn buffered(&self) -> usize {
        self.buf.len()
    }

    /// Pops the next complete frame, if one is buffered.
    pub fn next_frame(&mut self) -> Result<Option<Vec<u8>>, TransportError> {
        if self.buf.is_empty() {
            return Ok(None);
        }
        let Some(header) = parse_header(&self.buf)? else {
            return Ok(None);
        };
        let total = HEADER_LEN + header.payload_len as usize;
        if self.buf.len() < total {
            return Ok(None);
        }
        let rest = self.buf.split_off(total);
        Ok(Some(std::mem::replace(&mut self.buf, rest)))
    }
}
