//! Binary message framing between owner, server and users.
//!
//! Every frame is `version(1) ∥ kind(1) ∥ body_len(4) ∥ body`; variable
//! fields inside a body are `len(4) ∥ bytes`. Integers are big-endian.
//! Responses use `kind | 0x80` and start with a one-byte status code.

use std::fmt;

use crate::chain::Mode;
use crate::codec::{Reader, Writer};
use crate::crypto::{GroupKey, LAMBDA};
use crate::error::{Error, Result};
use crate::protocol::{
    AddPayload, BloomTriple, FileId, FilterAuth, IndexEntry, Proof, RefreshPayload,
    SearchResponse, SearchToken,
};

pub const VERSION: u8 = 0x01;
pub const HEADER_LEN: usize = 6;
/// Frames larger than this are rejected before allocation.
pub const MAX_BODY_LEN: usize = 1 << 30;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Kind {
    Add = 0x01,
    Refresh = 0x02,
    Search = 0x03,
    GetBloom = 0x04,
    Rotate = 0x05,
}

impl Kind {
    fn from_byte(b: u8, offset: usize) -> Result<Self> {
        Ok(match b {
            0x01 => Kind::Add,
            0x02 => Kind::Refresh,
            0x03 => Kind::Search,
            0x04 => Kind::GetBloom,
            0x05 => Kind::Rotate,
            other => return Err(Error::format(offset, format!("unknown message kind {other:#04x}"))),
        })
    }

    pub fn response_byte(self) -> u8 {
        self as u8 | 0x80
    }
}

/// Status codes carried by every response.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize)]
#[repr(u8)]
pub enum ErrorCode {
    StaleEpoch = 1,
    NotFound = 2,
    DuplicateLabel = 3,
    NonMonotonic = 4,
    Malformed = 5,
    Unsupported = 6,
    BadToken = 7,
    ModeMismatch = 8,
    BrokenChain = 9,
    Rejected = 10,
}

impl ErrorCode {
    fn from_byte(b: u8, offset: usize) -> Result<Self> {
        Ok(match b {
            1 => ErrorCode::StaleEpoch,
            2 => ErrorCode::NotFound,
            3 => ErrorCode::DuplicateLabel,
            4 => ErrorCode::NonMonotonic,
            5 => ErrorCode::Malformed,
            6 => ErrorCode::Unsupported,
            7 => ErrorCode::BadToken,
            8 => ErrorCode::ModeMismatch,
            9 => ErrorCode::BrokenChain,
            10 => ErrorCode::Rejected,
            other => return Err(Error::format(offset, format!("unknown status code {other}"))),
        })
    }

    /// Maps a server-side failure onto the code sent to the client.
    pub fn for_error(e: &Error) -> Self {
        match e {
            Error::StaleEpoch { .. } => ErrorCode::StaleEpoch,
            Error::NotFound(_) => ErrorCode::NotFound,
            Error::DuplicateLabel => ErrorCode::DuplicateLabel,
            Error::NonMonotonicTime { .. } => ErrorCode::NonMonotonic,
            Error::Format { .. } => ErrorCode::Malformed,
            Error::Unsupported(_) => ErrorCode::Unsupported,
            Error::Decryption => ErrorCode::BadToken,
            Error::ModeMismatch { .. } => ErrorCode::ModeMismatch,
            Error::BrokenChain(_) => ErrorCode::BrokenChain,
            Error::Remote(code) => *code,
            _ => ErrorCode::Rejected,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Request {
    Add(AddPayload),
    Refresh(RefreshPayload),
    Search(SearchToken),
    GetBloom,
    /// Delivers a new group key to the server.
    Rotate(GroupKey),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Response {
    /// Success for ADD, REFRESH and ROTATE.
    Ack(Kind),
    Search(SearchResponse),
    Bloom(BloomTriple),
    Error(Kind, ErrorCode),
}

impl Request {
    pub fn kind(&self) -> Kind {
        match self {
            Request::Add(_) => Kind::Add,
            Request::Refresh(_) => Kind::Refresh,
            Request::Search(_) => Kind::Search,
            Request::GetBloom => Kind::GetBloom,
            Request::Rotate(_) => Kind::Rotate,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        match self {
            Request::Add(p) => encode_add(&mut w, p),
            Request::Refresh(p) => {
                w.var(&p.bloom).raw(&p.auth.sigma).u64(p.auth.timestamp);
            }
            Request::Search(t) => encode_token(&mut w, t),
            Request::GetBloom => {}
            Request::Rotate(g) => {
                w.u64(g.epoch).raw(&g.key);
            }
        }
        frame(self.kind() as u8, w.finish())
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let (kind_byte, mut r) = open_frame(bytes)?;
        if kind_byte & 0x80 != 0 {
            return Err(Error::format(1, "expected a request, found a response"));
        }
        let req = match Kind::from_byte(kind_byte, 1)? {
            Kind::Add => Request::Add(decode_add(&mut r)?),
            Kind::Refresh => Request::Refresh(RefreshPayload {
                bloom: r.var()?.to_vec(),
                auth: FilterAuth {
                    sigma: r.array()?,
                    timestamp: r.u64()?,
                },
            }),
            Kind::Search => Request::Search(decode_token(&mut r)?),
            Kind::GetBloom => Request::GetBloom,
            Kind::Rotate => Request::Rotate(GroupKey {
                epoch: r.u64()?,
                key: r.array()?,
            }),
        };
        r.finish()?;
        Ok(req)
    }
}

impl Response {
    pub fn kind(&self) -> Kind {
        match self {
            Response::Ack(k) | Response::Error(k, _) => *k,
            Response::Search(_) => Kind::Search,
            Response::Bloom(_) => Kind::GetBloom,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        match self {
            Response::Ack(_) => {
                w.u8(0);
            }
            Response::Error(_, code) => {
                w.u8(*code as u8);
            }
            Response::Search(s) => {
                w.u8(0).u32(s.ids.len() as u32);
                for id in &s.ids {
                    w.raw(&id.0);
                }
                w.u32(s.ciphertexts.len() as u32);
                for c in &s.ciphertexts {
                    w.var(c);
                }
                match &s.proof {
                    Some(p) => {
                        w.u8(1);
                        encode_triple(&mut w, &p.bloom);
                        w.raw(&p.gamma);
                    }
                    None => {
                        w.u8(0);
                    }
                }
            }
            Response::Bloom(t) => {
                w.u8(0);
                encode_triple(&mut w, t);
            }
        }
        frame(self.kind().response_byte(), w.finish())
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let (kind_byte, mut r) = open_frame(bytes)?;
        if kind_byte & 0x80 == 0 {
            return Err(Error::format(1, "expected a response, found a request"));
        }
        let kind = Kind::from_byte(kind_byte & 0x7f, 1)?;
        let at = r.offset();
        let code = r.u8()?;
        let resp = if code != 0 {
            Response::Error(kind, ErrorCode::from_byte(code, at)?)
        } else {
            match kind {
                Kind::Add | Kind::Refresh | Kind::Rotate => Response::Ack(kind),
                Kind::GetBloom => Response::Bloom(decode_triple(&mut r)?),
                Kind::Search => {
                    let n = r.count(16)?;
                    let ids = (0..n).map(|_| r.array().map(FileId)).collect::<Result<_>>()?;
                    let n = r.count(4)?;
                    let ciphertexts = (0..n).map(|_| r.var().map(<[u8]>::to_vec)).collect::<Result<_>>()?;
                    let at = r.offset();
                    let proof = match r.u8()? {
                        0 => None,
                        1 => Some(Proof {
                            bloom: decode_triple(&mut r)?,
                            gamma: r.array()?,
                        }),
                        other => return Err(Error::format(at, format!("bad proof flag {other}"))),
                    };
                    Response::Search(SearchResponse {
                        ids,
                        ciphertexts,
                        proof,
                    })
                }
            }
        };
        r.finish()?;
        Ok(resp)
    }
}

fn frame(kind: u8, body: Vec<u8>) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + body.len());
    out.push(VERSION);
    out.push(kind);
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(&body);
    out
}

/// Validates the header and returns the kind byte and a reader positioned
/// at the body.
fn open_frame(bytes: &[u8]) -> Result<(u8, Reader<'_>)> {
    let (version, kind, len) = parse_header(bytes)?;
    if version != VERSION {
        return Err(Error::format(0, format!("unsupported version {version:#04x}")));
    }
    if bytes.len() - HEADER_LEN != len {
        return Err(Error::format(
            bytes.len().min(HEADER_LEN + len),
            format!("body length {len} but {} bytes follow the header", bytes.len() - HEADER_LEN),
        ));
    }
    let mut r = Reader::new(bytes);
    r.take(HEADER_LEN)?;
    Ok((kind, r))
}

/// Splits a header into `(version, kind, body_len)`.
pub fn parse_header(bytes: &[u8]) -> Result<(u8, u8, usize)> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(bytes.len(), "truncated frame header"));
    }
    let len = u32::from_be_bytes(bytes[2..6].try_into().unwrap()) as usize;
    if len > MAX_BODY_LEN {
        return Err(Error::format(2, format!("body length {len} exceeds limit")));
    }
    Ok((bytes[0], bytes[1], len))
}

fn encode_add(w: &mut Writer, p: &AddPayload) {
    let mode = if p.auth.is_some() { Mode::Full } else { Mode::Basic };
    w.u8(mode.to_byte()).raw(&p.file_id.0).var(&p.ciphertext).u32(p.entries.len() as u32);
    for e in &p.entries {
        debug_assert_eq!(e.masked.len(), mode.masked_len());
        w.raw(&e.label).raw(&e.masked).raw(&p.file_id.0);
    }
    if let Some(a) = p.auth {
        w.raw(&a.sigma).u64(a.timestamp);
    }
}

fn decode_add(r: &mut Reader<'_>) -> Result<AddPayload> {
    let at = r.offset();
    let mode = Mode::from_byte(r.u8()?, at)?;
    let file_id = FileId(r.array()?);
    let ciphertext = r.var()?.to_vec();
    let width = mode.masked_len();
    let n = r.count(LAMBDA + width + 16)?;
    let mut entries = Vec::with_capacity(n);
    for _ in 0..n {
        let label = r.array()?;
        let masked = r.take(width)?.to_vec();
        let at = r.offset();
        if r.array::<16>()? != file_id.0 {
            return Err(Error::format(at, "entry file id differs from payload file id"));
        }
        entries.push(IndexEntry { label, masked });
    }
    let auth = match mode {
        Mode::Basic => None,
        Mode::Full => Some(FilterAuth {
            sigma: r.array()?,
            timestamp: r.u64()?,
        }),
    };
    Ok(AddPayload {
        file_id,
        ciphertext,
        entries,
        auth,
    })
}

/// Exact encoded size of an ADD request, header included.
pub fn add_frame_len(mode: Mode, ciphertext_len: usize, entries: usize) -> usize {
    let fixed = 1 + 16 + 4 + ciphertext_len + 4;
    let auth = match mode {
        Mode::Basic => 0,
        Mode::Full => LAMBDA + 8,
    };
    HEADER_LEN + fixed + entries * (LAMBDA + mode.masked_len() + 16) + auth
}

fn encode_token(w: &mut Writer, t: &SearchToken) {
    match t {
        SearchToken::Plain { label, key } => {
            w.u8(0).raw(label).raw(key);
        }
        SearchToken::Sealed { epoch, body } => {
            w.u8(1).u64(*epoch).var(body);
        }
    }
}

fn decode_token(r: &mut Reader<'_>) -> Result<SearchToken> {
    let at = r.offset();
    Ok(match r.u8()? {
        0 => SearchToken::Plain {
            label: r.array()?,
            key: r.array()?,
        },
        1 => SearchToken::Sealed {
            epoch: r.u64()?,
            body: r.var()?.to_vec(),
        },
        other => return Err(Error::format(at, format!("unknown token tag {other}"))),
    })
}

fn encode_triple(w: &mut Writer, t: &BloomTriple) {
    w.var(&t.bloom).raw(&t.sigma).u64(t.timestamp);
}

fn decode_triple(r: &mut Reader<'_>) -> Result<BloomTriple> {
    Ok(BloomTriple {
        bloom: r.var()?.to_vec(),
        sigma: r.array()?,
        timestamp: r.u64()?,
    })
}

fn hex8(bytes: &[u8]) -> String {
    bytes.iter().take(4).map(|b| format!("{b:02x}")).collect::<String>() + "…"
}

/// One-line summaries for logs. Not a serialization format.
impl fmt::Display for Request {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Request::Add(p) => write!(
                f,
                "ADD file={} ct={}B entries={} T={:?}",
                p.file_id,
                p.ciphertext.len(),
                p.entries.len(),
                p.auth.map(|a| a.timestamp)
            ),
            Request::Refresh(p) => write!(f, "REFRESH bf={}B T={}", p.bloom.len(), p.auth.timestamp),
            Request::Search(SearchToken::Plain { label, .. }) => write!(f, "SEARCH plain τ={}", hex8(label)),
            Request::Search(SearchToken::Sealed { epoch, .. }) => write!(f, "SEARCH sealed epoch={epoch}"),
            Request::GetBloom => f.write_str("GET_BLOOM"),
            Request::Rotate(g) => write!(f, "ROTATE epoch={}", g.epoch),
        }
    }
}

impl fmt::Display for Response {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Response::Ack(k) => write!(f, "{k:?} ok"),
            Response::Error(k, code) => write!(f, "{k:?} error {code:?}"),
            Response::Search(s) => write!(
                f,
                "SEARCH ok ids={} proof={}",
                s.ids.len(),
                s.proof.as_ref().map_or("none".into(), |p| format!("γ={} T={}", hex8(&p.gamma), p.bloom.timestamp))
            ),
            Response::Bloom(t) => write!(f, "GET_BLOOM ok bf={}B T={}", t.bloom.len(), t.timestamp),
        }
    }
}
