//! Big-endian message encoding.
//!
//! ```text
//! request:  "PAQ1" | u8 1 | u16 len | keyword | u16 k | x | u32 p | p elements
//! response: "PAQ1" | u8 2 | u8 status | x | u32 s | s elements
//! ```
//!
//! Elements are fixed-width (`Field::byte_width`). A non-ok response carries s = 0.

use thiserror::Error;

use crate::field::{Field, FieldElement, FieldError, FieldVector};

pub const MAGIC: &[u8; 4] = b"PAQ1";
const MSG_REQUEST: u8 = 1;
const MSG_RESPONSE: u8 = 2;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("bad magic")]
    Magic,
    #[error("unexpected message type {0}")]
    MessageType(u8),
    #[error("unknown status {0}")]
    Status(u8),
    #[error("message truncated")]
    Truncated,
    #[error("{0} trailing bytes")]
    Trailing(usize),
    #[error("keyword is not UTF-8")]
    Keyword,
    #[error("keyword longer than 65535 bytes")]
    KeywordTooLong,
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Status {
    Ok = 0,
    UnknownKeyword = 1,
    DimensionError = 2,
}

impl TryFrom<u8> for Status {
    type Error = WireError;
    fn try_from(v: u8) -> Result<Self, WireError> {
        match v {
            0 => Ok(Status::Ok),
            1 => Ok(Status::UnknownKeyword),
            2 => Ok(Status::DimensionError),
            other => Err(WireError::Status(other)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Request {
    pub keyword: String,
    pub k: u16,
    pub x: FieldElement,
    pub q: FieldVector,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Response {
    pub status: Status,
    pub x: FieldElement,
    /// Present iff status is ok.
    pub payload: FieldVector,
}

/// Fixed bytes of a request besides the keyword and the p elements.
pub fn request_header_len(field: &Field, keyword: &str) -> usize {
    4 + 1 + 2 + keyword.len() + 2 + field.byte_width() + 4
}

/// Fixed bytes of a response besides the s elements.
pub fn response_header_len(field: &Field) -> usize {
    4 + 1 + 1 + field.byte_width() + 4
}

fn put_elements(field: &Field, v: &[FieldElement], out: &mut Vec<u8>) {
    out.extend_from_slice(&(v.len() as u32).to_be_bytes());
    for e in v {
        field.write_element(e, out);
    }
}

pub fn encode_request(field: &Field, req: &Request) -> Result<Vec<u8>, WireError> {
    let kw = req.keyword.as_bytes();
    let kw_len = u16::try_from(kw.len()).map_err(|_| WireError::KeywordTooLong)?;
    let mut out = Vec::with_capacity(request_header_len(field, &req.keyword) + req.q.len() * field.byte_width());
    out.extend_from_slice(MAGIC);
    out.push(MSG_REQUEST);
    out.extend_from_slice(&kw_len.to_be_bytes());
    out.extend_from_slice(kw);
    out.extend_from_slice(&req.k.to_be_bytes());
    field.write_element(&req.x, &mut out);
    put_elements(field, &req.q, &mut out);
    Ok(out)
}

pub fn encode_response(field: &Field, resp: &Response) -> Vec<u8> {
    let mut out = Vec::with_capacity(response_header_len(field) + resp.payload.len() * field.byte_width());
    out.extend_from_slice(MAGIC);
    out.push(MSG_RESPONSE);
    out.push(resp.status as u8);
    field.write_element(&resp.x, &mut out);
    put_elements(field, &resp.payload, &mut out);
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.buf.len() < n {
            return Err(WireError::Truncated);
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, WireError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn element(&mut self, field: &Field) -> Result<FieldElement, WireError> {
        Ok(field.deserialize(self.take(field.byte_width())?)?)
    }

    fn elements(&mut self, field: &Field) -> Result<FieldVector, WireError> {
        let n = self.u32()? as usize;
        if self.buf.len() < n.saturating_mul(field.byte_width()) {
            return Err(WireError::Truncated);
        }
        (0..n).map(|_| self.element(field)).collect()
    }

    fn header(&mut self, expected: u8) -> Result<(), WireError> {
        if self.take(4)? != MAGIC {
            return Err(WireError::Magic);
        }
        match self.u8()? {
            t if t == expected => Ok(()),
            t => Err(WireError::MessageType(t)),
        }
    }

    fn finish(self) -> Result<(), WireError> {
        match self.buf.len() {
            0 => Ok(()),
            n => Err(WireError::Trailing(n)),
        }
    }
}

pub fn decode_request(field: &Field, bytes: &[u8]) -> Result<Request, WireError> {
    let mut c = Cursor { buf: bytes };
    c.header(MSG_REQUEST)?;
    let kw_len = c.u16()? as usize;
    let keyword = std::str::from_utf8(c.take(kw_len)?).map_err(|_| WireError::Keyword)?.to_string();
    let k = c.u16()?;
    let x = c.element(field)?;
    let q = c.elements(field)?;
    c.finish()?;
    Ok(Request { keyword, k, x, q })
}

pub fn decode_response(field: &Field, bytes: &[u8]) -> Result<Response, WireError> {
    let mut c = Cursor { buf: bytes };
    c.header(MSG_RESPONSE)?;
    let status = Status::try_from(c.u8()?)?;
    let x = c.element(field)?;
    let payload = c.elements(field)?;
    c.finish()?;
    Ok(Response { status, x, payload })
}
