//! Recursive-length-prefix codec with strict canonical-form checks.

use thiserror::Error;

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum RlpItem {
    Bytes(Vec<u8>),
    List(Vec<RlpItem>),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RlpError {
    #[error("input truncated")]
    Truncated,
    #[error("non-canonical length prefix")]
    NonCanonicalLength,
    #[error("single byte below 0x80 encoded with a string prefix")]
    NonCanonicalSingleByte,
    #[error("{0} trailing bytes after item")]
    TrailingBytes(usize),
    #[error("length does not fit in memory")]
    Oversized,
}

impl RlpItem {
    pub fn bytes(b: impl Into<Vec<u8>>) -> Self {
        RlpItem::Bytes(b.into())
    }

    pub fn as_bytes(&self) -> Option<&[u8]> {
        match self {
            RlpItem::Bytes(b) => Some(b),
            RlpItem::List(_) => None,
        }
    }

    pub fn as_list(&self) -> Option<&[RlpItem]> {
        match self {
            RlpItem::List(items) => Some(items),
            RlpItem::Bytes(_) => None,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.encode_into(&mut out);
        out
    }

    fn encode_into(&self, out: &mut Vec<u8>) {
        match self {
            RlpItem::Bytes(b) if b.len() == 1 && b[0] < 0x80 => out.push(b[0]),
            RlpItem::Bytes(b) => {
                encode_header(out, 0x80, b.len());
                out.extend_from_slice(b);
            }
            RlpItem::List(items) => {
                let mut payload = Vec::new();
                for item in items {
                    item.encode_into(&mut payload);
                }
                encode_header(out, 0xc0, payload.len());
                out.extend_from_slice(&payload);
            }
        }
    }
}

fn encode_header(out: &mut Vec<u8>, base: u8, len: usize) {
    if len < 56 {
        out.push(base + len as u8);
    } else {
        let len_bytes = be_minimal(len as u64);
        out.push(base + 55 + len_bytes.len() as u8);
        out.extend_from_slice(&len_bytes);
    }
}

/// Big-endian bytes of `v` with leading zeros stripped (empty for zero).
pub fn be_minimal(v: u64) -> Vec<u8> {
    let bytes = v.to_be_bytes();
    let start = bytes.iter().position(|&b| b != 0).unwrap_or(bytes.len());
    bytes[start..].to_vec()
}

/// Decodes exactly one item spanning all of `input`.
pub fn decode(input: &[u8]) -> Result<RlpItem, RlpError> {
    let (item, used) = decode_prefix(input)?;
    if used != input.len() {
        return Err(RlpError::TrailingBytes(input.len() - used));
    }
    Ok(item)
}

/// Decodes one item from the front of `input`, returning it with the consumed length.
fn decode_prefix(input: &[u8]) -> Result<(RlpItem, usize), RlpError> {
    let &first = input.first().ok_or(RlpError::Truncated)?;
    match first {
        0x00..=0x7f => Ok((RlpItem::Bytes(vec![first]), 1)),
        0x80..=0xbf => {
            let (offset, len) = read_header(input, 0x80)?;
            let payload = slice(input, offset, len)?;
            if len == 1 && payload[0] < 0x80 {
                return Err(RlpError::NonCanonicalSingleByte);
            }
            Ok((RlpItem::Bytes(payload.to_vec()), offset + len))
        }
        0xc0..=0xff => {
            let (offset, len) = read_header(input, 0xc0)?;
            let mut payload = slice(input, offset, len)?;
            let mut items = Vec::new();
            while !payload.is_empty() {
                let (item, used) = decode_prefix(payload)?;
                items.push(item);
                payload = &payload[used..];
            }
            Ok((RlpItem::List(items), offset + len))
        }
    }
}

fn slice(input: &[u8], offset: usize, len: usize) -> Result<&[u8], RlpError> {
    let end = offset.checked_add(len).ok_or(RlpError::Oversized)?;
    input.get(offset..end).ok_or(RlpError::Truncated)
}

/// Returns (payload offset, payload length) for a string (`base` 0x80) or list (`base` 0xc0) header.
fn read_header(input: &[u8], base: u8) -> Result<(usize, usize), RlpError> {
    let tag = input[0] - base;
    if tag < 56 {
        return Ok((1, tag as usize));
    }
    let len_of_len = (tag - 55) as usize;
    let len_bytes = slice(input, 1, len_of_len)?;
    if len_bytes[0] == 0 {
        return Err(RlpError::NonCanonicalLength);
    }
    if len_of_len > std::mem::size_of::<usize>() {
        return Err(RlpError::Oversized);
    }
    let len = len_bytes
        .iter()
        .fold(0usize, |acc, &b| (acc << 8) | b as usize);
    if len < 56 {
        return Err(RlpError::NonCanonicalLength);
    }
    Ok((1 + len_of_len, len))
}
