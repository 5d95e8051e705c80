//! Frames and messages exchanged between center, members and consumers.
//!
//! A frame is a 4-byte big-endian payload length followed by a UTF-8 JSON
//! object whose first field is `"type"`. See `docs/PROTOCOL.md`.

use std::fmt;
use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::GridMember;
use crate::value::{ResultColumn, ResultSet, Value};

/// Default frame limit: 16 MiB of payload.
pub const MAX_FRAME: usize = 16 * 1024 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AckStatus {
    Added,
    Updated,
}

impl fmt::Display for AckStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AckStatus::Added => "added",
            AckStatus::Updated => "updated",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorCode {
    ParseError,
    MappingIncomplete,
    BackendError,
    Internal,
}

impl ErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::ParseError => "PARSE_ERROR",
            ErrorCode::MappingIncomplete => "MAPPING_INCOMPLETE",
            ErrorCode::BackendError => "BACKEND_ERROR",
            ErrorCode::Internal => "INTERNAL",
        }
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum Message {
    Register {
        name: String,
        address: String,
        port: u16,
    },
    RegisterAck {
        status: AckStatus,
        member_count: u64,
    },
    ListMembers,
    MemberList {
        members: Vec<GridMember>,
    },
    Query {
        request_id: String,
        sql: String,
    },
    ResultOk {
        request_id: String,
        columns: Vec<ResultColumn>,
        rows: Vec<Vec<Value>>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        warnings: Vec<String>,
    },
    ResultErr {
        request_id: String,
        code: ErrorCode,
        message: String,
    },
}

const REQUIRED: &[(&str, &[&str])] = &[
    ("Register", &["name", "address", "port"]),
    ("RegisterAck", &["status", "member_count"]),
    ("ListMembers", &[]),
    ("MemberList", &["members"]),
    ("Query", &["request_id", "sql"]),
    ("ResultOk", &["request_id", "columns", "rows"]),
    ("ResultErr", &["request_id", "code", "message"]),
];

impl Message {
    pub fn type_name(&self) -> &'static str {
        match self {
            Message::Register { .. } => "Register",
            Message::RegisterAck { .. } => "RegisterAck",
            Message::ListMembers => "ListMembers",
            Message::MemberList { .. } => "MemberList",
            Message::Query { .. } => "Query",
            Message::ResultOk { .. } => "ResultOk",
            Message::ResultErr { .. } => "ResultErr",
        }
    }

    pub fn register(member: &GridMember) -> Self {
        Message::Register {
            name: member.name.clone(),
            address: member.address.clone(),
            port: member.port,
        }
    }

    pub fn result_ok(request_id: impl Into<String>, rs: ResultSet) -> Self {
        Message::ResultOk {
            request_id: request_id.into(),
            columns: rs.columns,
            rows: rs.rows,
            warnings: rs.warnings,
        }
    }

    pub fn result_err(
        request_id: impl Into<String>,
        code: ErrorCode,
        message: impl Into<String>,
    ) -> Self {
        Message::ResultErr {
            request_id: request_id.into(),
            code,
            message: message.into(),
        }
    }

    fn check(&self) -> Result<(), WireError> {
        if let Message::ResultOk { columns, rows, .. } = self {
            if let Some(i) = rows.iter().position(|r| r.len() != columns.len()) {
                return Err(WireError::InvalidMessage(format!(
                    "row {i} has {} values for {} columns",
                    rows[i].len(),
                    columns.len()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum WireError {
    #[error("payload of {size} bytes exceeds the {limit}-byte frame limit")]
    PayloadTooLarge { size: usize, limit: usize },
    #[error("frame truncated: expected {expected} bytes, got {got}")]
    FrameTruncated { expected: usize, got: usize },
    #[error("{0} bytes after the end of the frame")]
    TrailingBytes(usize),
    #[error("malformed JSON payload: {0}")]
    JsonMalformed(String),
    #[error("unknown message type `{0}`")]
    UnknownMessageType(String),
    #[error("missing field `{0}`")]
    FieldMissing(String),
    #[error("invalid message: {0}")]
    InvalidMessage(String),
    #[error("connection closed")]
    Closed,
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn encode(msg: &Message) -> Result<Vec<u8>, WireError> {
    encode_with_limit(msg, MAX_FRAME)
}

pub fn encode_with_limit(msg: &Message, limit: usize) -> Result<Vec<u8>, WireError> {
    msg.check()?;
    let payload =
        serde_json::to_vec(msg).map_err(|e| WireError::InvalidMessage(e.to_string()))?;
    frame(&payload, limit)
}

/// Prefixes an arbitrary payload with its length.
pub fn frame(payload: &[u8], limit: usize) -> Result<Vec<u8>, WireError> {
    if payload.len() > limit || u32::try_from(payload.len()).is_err() {
        return Err(WireError::PayloadTooLarge {
            size: payload.len(),
            limit,
        });
    }
    let mut out = Vec::with_capacity(4 + payload.len());
    out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    out.extend_from_slice(payload);
    Ok(out)
}

/// Decodes exactly one complete frame.
pub fn decode(bytes: &[u8]) -> Result<Message, WireError> {
    let Some(header) = bytes.get(..4) else {
        return Err(WireError::FrameTruncated {
            expected: 4,
            got: bytes.len(),
        });
    };
    let len = u32::from_be_bytes(header.try_into().expect("4 bytes")) as usize;
    let body = &bytes[4..];
    if len > MAX_FRAME {
        return Err(WireError::PayloadTooLarge {
            size: len,
            limit: MAX_FRAME,
        });
    }
    if body.len() < len {
        return Err(WireError::FrameTruncated {
            expected: len,
            got: body.len(),
        });
    }
    if body.len() > len {
        return Err(WireError::TrailingBytes(body.len() - len));
    }
    decode_payload(body)
}

pub fn decode_payload(payload: &[u8]) -> Result<Message, WireError> {
    let json: serde_json::Value =
        serde_json::from_slice(payload).map_err(|e| WireError::JsonMalformed(e.to_string()))?;
    let obj = json
        .as_object()
        .ok_or_else(|| WireError::JsonMalformed("payload is not a JSON object".into()))?;
    let ty = match obj.get("type") {
        Some(serde_json::Value::String(t)) => t.as_str(),
        Some(_) => return Err(WireError::JsonMalformed("`type` is not a string".into())),
        None => return Err(WireError::FieldMissing("type".into())),
    };
    let (_, fields) = REQUIRED
        .iter()
        .find(|(name, _)| *name == ty)
        .ok_or_else(|| WireError::UnknownMessageType(ty.to_string()))?;
    if let Some(missing) = fields.iter().find(|f| !obj.contains_key(**f)) {
        return Err(WireError::FieldMissing(missing.to_string()));
    }
    let msg: Message =
        serde_json::from_value(json).map_err(|e| WireError::InvalidMessage(e.to_string()))?;
    msg.check()?;
    Ok(msg)
}

/// Incremental decoder for a byte stream carrying back-to-back frames.
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

    /// The next complete message, or `None` until more bytes arrive.
    pub fn next_message(&mut self) -> Result<Option<Message>, WireError> {
        let Some(header) = self.buf.get(..4) else {
            return Ok(None);
        };
        let len = u32::from_be_bytes(header.try_into().expect("4 bytes")) as usize;
        if len > MAX_FRAME {
            return Err(WireError::PayloadTooLarge {
                size: len,
                limit: MAX_FRAME,
            });
        }
        if self.buf.len() < 4 + len {
            return Ok(None);
        }
        let msg = decode_payload(&self.buf[4..4 + len]);
        self.buf.drain(..4 + len);
        msg.map(Some)
    }

    pub fn buffered(&self) -> usize {
        self.buf.len()
    }
}

/// Reads one frame. A clean EOF before the first byte is [`WireError::Closed`].
pub fn read_message(r: &mut impl Read) -> Result<Message, WireError> {
    let mut header = [0u8; 4];
    let got = read_full(r, &mut header)?;
    if got == 0 {
        return Err(WireError::Closed);
    }
    if got < 4 {
        return Err(WireError::FrameTruncated { expected: 4, got });
    }
    let len = u32::from_be_bytes(header) as usize;
    if len > MAX_FRAME {
        return Err(WireError::PayloadTooLarge {
            size: len,
            limit: MAX_FRAME,
        });
    }
    let mut payload = vec![0u8; len];
    let got = read_full(r, &mut payload)?;
    if got < len {
        return Err(WireError::FrameTruncated { expected: len, got });
    }
    decode_payload(&payload)
}

fn read_full(r: &mut impl Read, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

pub fn write_message(w: &mut impl Write, msg: &Message) -> Result<(), WireError> {
    w.write_all(&encode(msg)?)?;
    w.flush()?;
    Ok(())
}
