//! Framed request/response protocol across the trust boundary.
//!
//! Wire layout, all integers big-endian:
//!
//! ```text
//! request:  request_id u64 | kind u8   | len u32 | payload
//! response: request_id u64 | status u8 | len u32 | payload
//! ```
//!
//! Payloads are JSON. Error responses carry [`ErrorPayload`].

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::enclave::{Enclave, QueryResult};
use crate::envelope::Envelope;
use crate::quote::{Budget, Challenge, SignedBudget};

pub const MAX_PAYLOAD: u32 = 1 << 20;
const HEADER_LEN: usize = 13;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum FrameKind {
    Attest = 1,
    PubKey = 2,
    Budget = 3,
    Insert = 4,
    Query = 5,
}

impl TryFrom<u8> for FrameKind {
    type Error = FrameError;

    fn try_from(b: u8) -> Result<Self, FrameError> {
        Ok(match b {
            1 => FrameKind::Attest,
            2 => FrameKind::PubKey,
            3 => FrameKind::Budget,
            4 => FrameKind::Insert,
            5 => FrameKind::Query,
            other => return Err(FrameError::UnknownKind(other)),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RequestFrame {
    pub request_id: u64,
    pub kind: FrameKind,
    pub payload: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResponseFrame {
    pub request_id: u64,
    pub ok: bool,
    pub payload: Vec<u8>,
}

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("frame truncated")]
    Truncated,
    #[error("unknown frame kind {0}")]
    UnknownKind(u8),
    #[error("unknown response status {0}")]
    UnknownStatus(u8),
    #[error("payload of {0} bytes exceeds the frame limit")]
    TooLarge(u32),
    #[error("{0} trailing bytes after frame")]
    Trailing(usize),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn encode(id: u64, tag: u8, payload: &[u8]) -> Vec<u8> {
    let len = u32::try_from(payload.len())
        .ok()
        .filter(|&l| l <= MAX_PAYLOAD)
        .expect("payload within frame limit");
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(&id.to_be_bytes());
    out.push(tag);
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(payload);
    out
}

fn split_header(h: &[u8; HEADER_LEN]) -> Result<(u64, u8, u32), FrameError> {
    let id = u64::from_be_bytes(h[..8].try_into().expect("8 bytes"));
    let len = u32::from_be_bytes(h[9..].try_into().expect("4 bytes"));
    if len > MAX_PAYLOAD {
        return Err(FrameError::TooLarge(len));
    }
    Ok((id, h[8], len))
}

fn decode(bytes: &[u8]) -> Result<(u64, u8, Vec<u8>), FrameError> {
    let header: &[u8; HEADER_LEN] = bytes
        .get(..HEADER_LEN)
        .and_then(|h| h.try_into().ok())
        .ok_or(FrameError::Truncated)?;
    let (id, tag, len) = split_header(header)?;
    let body = &bytes[HEADER_LEN..];
    let len = len as usize;
    if body.len() < len {
        return Err(FrameError::Truncated);
    }
    if body.len() > len {
        return Err(FrameError::Trailing(body.len() - len));
    }
    Ok((id, tag, body.to_vec()))
}

/// Ok(None) on clean end of stream before a header.
fn read_raw(r: &mut impl Read) -> Result<Option<(u64, u8, Vec<u8>)>, FrameError> {
    let mut header = [0u8; HEADER_LEN];
    let mut got = 0;
    while got < HEADER_LEN {
        match r.read(&mut header[got..])? {
            0 if got == 0 => return Ok(None),
            0 => return Err(FrameError::Truncated),
            n => got += n,
        }
    }
    let (id, tag, len) = split_header(&header)?;
    let mut payload = vec![0u8; len as usize];
    r.read_exact(&mut payload).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => FrameError::Truncated,
        _ => FrameError::Io(e),
    })?;
    Ok(Some((id, tag, payload)))
}

impl RequestFrame {
    pub fn new(request_id: u64, kind: FrameKind, payload: Vec<u8>) -> Self {
        RequestFrame {
            request_id,
            kind,
            payload,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        encode(self.request_id, self.kind as u8, &self.payload)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, FrameError> {
        let (request_id, tag, payload) = decode(bytes)?;
        Ok(RequestFrame {
            request_id,
            kind: tag.try_into()?,
            payload,
        })
    }

    pub fn read_from(r: &mut impl Read) -> Result<Option<Self>, FrameError> {
        read_raw(r)?
            .map(|(request_id, tag, payload)| {
                Ok(RequestFrame {
                    request_id,
                    kind: tag.try_into()?,
                    payload,
                })
            })
            .transpose()
    }

    pub fn write_to(&self, w: &mut impl Write) -> io::Result<()> {
        w.write_all(&self.encode())?;
        w.flush()
    }
}

fn status(tag: u8) -> Result<bool, FrameError> {
    match tag {
        0 => Ok(true),
        1 => Ok(false),
        other => Err(FrameError::UnknownStatus(other)),
    }
}

impl ResponseFrame {
    pub fn ok(request_id: u64, body: &impl Serialize) -> Self {
        ResponseFrame {
            request_id,
            ok: true,
            payload: serde_json::to_vec(body).expect("response bodies serialize"),
        }
    }

    pub fn error(request_id: u64, error_kind: &str, detail: impl ToString) -> Self {
        let body = ErrorPayload {
            error_kind: error_kind.to_string(),
            detail: detail.to_string(),
        };
        ResponseFrame {
            request_id,
            ok: false,
            payload: serde_json::to_vec(&body).expect("error bodies serialize"),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        encode(self.request_id, u8::from(!self.ok), &self.payload)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, FrameError> {
        let (request_id, tag, payload) = decode(bytes)?;
        Ok(ResponseFrame {
            request_id,
            ok: status(tag)?,
            payload,
        })
    }

    pub fn read_from(r: &mut impl Read) -> Result<Option<Self>, FrameError> {
        read_raw(r)?
            .map(|(request_id, tag, payload)| {
                Ok(ResponseFrame {
                    request_id,
                    ok: status(tag)?,
                    payload,
                })
            })
            .transpose()
    }

    pub fn write_to(&self, w: &mut impl Write) -> io::Result<()> {
        w.write_all(&self.encode())?;
        w.flush()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorPayload {
    pub error_kind: String,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AttestRequest {
    #[serde(with = "hex::serde")]
    pub nonce: Challenge,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PubKeyResponse {
    pub pem: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InsertRequest {
    pub envelope: serde_json::Value,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InsertResponse {
    pub count: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QueryRequest {
    pub program: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryResponse {
    pub value: f64,
    pub cost: Budget,
    pub remaining: SignedBudget,
}

impl From<QueryResult> for QueryResponse {
    fn from(r: QueryResult) -> Self {
        QueryResponse {
            value: r.value,
            cost: r.cost,
            remaining: r.remaining,
        }
    }
}

fn body<'a, T: Deserialize<'a>>(frame: &'a RequestFrame) -> Result<T, ResponseFrame> {
    serde_json::from_slice(&frame.payload)
        .map_err(|e| ResponseFrame::error(frame.request_id, "BadRequest", e))
}

impl Enclave {
    /// Serves one request. Every request yields exactly one response with its id.
    pub fn handle(&mut self, frame: &RequestFrame) -> ResponseFrame {
        let id = frame.request_id;
        let result = match frame.kind {
            FrameKind::Attest => {
                body::<AttestRequest>(frame).map(|r| ResponseFrame::ok(id, &self.get_quote(r.nonce)))
            }
            FrameKind::PubKey => Ok(ResponseFrame::ok(
                id,
                &PubKeyResponse {
                    pem: self.public_key().to_pem(),
                },
            )),
            FrameKind::Budget => Ok(ResponseFrame::ok(id, &self.remaining())),
            FrameKind::Insert => body::<InsertRequest>(frame).map(|r| {
                match Envelope::from_json(r.envelope) {
                    Err(e) => ResponseFrame::error(id, "MalformedEnvelope", e),
                    Ok(env) => match self.ingest(&env) {
                        Ok(count) => ResponseFrame::ok(id, &InsertResponse { count }),
                        Err(e) => ResponseFrame::error(id, e.kind(), e),
                    },
                }
            }),
            FrameKind::Query => body::<QueryRequest>(frame).map(|r| match self.run_query(&r.program) {
                Ok(res) => ResponseFrame::ok(id, &QueryResponse::from(res)),
                Err(e) => ResponseFrame::error(id, e.kind(), e),
            }),
        };
        result.unwrap_or_else(|err| err)
    }

    /// Serves frames from `r` until end of stream.
    pub fn serve_stream(&mut self, r: &mut impl Read, w: &mut impl Write) -> Result<(), FrameError> {
        while let Some(frame) = RequestFrame::read_from(r)? {
            self.handle(&frame).write_to(w)?;
        }
        Ok(())
    }
}
