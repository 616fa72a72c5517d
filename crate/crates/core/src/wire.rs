//! Length-prefixed big-integer framing used on the simulator's message bus.
//!
//! A frame is a big-endian `u32` item count followed by one record per
//! item: a `u32` byte length and the integer in big-endian form, left-padded
//! to the field's fixed width.

use num_bigint::BigUint;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("frame truncated")]
    Truncated,
    #[error("expected {expected} integers, found {found}")]
    Count { expected: usize, found: usize },
    #[error("integer out of range for this field")]
    Range,
    #[error("{0} trailing bytes after frame")]
    Trailing(usize),
}

/// Serialized size of the framing overhead for `count` integers.
pub fn framing_overhead(count: usize) -> usize {
    4 + 4 * count
}

pub fn encode_ints(values: &[&BigUint], width: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(framing_overhead(values.len()) + values.len() * width);
    out.extend_from_slice(&(values.len() as u32).to_be_bytes());
    for v in values {
        let raw = v.to_bytes_be();
        let len = raw.len().max(width);
        out.extend_from_slice(&(len as u32).to_be_bytes());
        out.extend(std::iter::repeat_n(0u8, len - raw.len()));
        out.extend_from_slice(&raw);
    }
    out
}

pub fn decode_ints(bytes: &[u8]) -> Result<Vec<BigUint>, WireError> {
    let mut cursor = bytes;
    let count = read_u32(&mut cursor)? as usize;
    let mut values = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let len = read_u32(&mut cursor)? as usize;
        if cursor.len() < len {
            return Err(WireError::Truncated);
        }
        let (head, tail) = cursor.split_at(len);
        values.push(BigUint::from_bytes_be(head));
        cursor = tail;
    }
    if !cursor.is_empty() {
        return Err(WireError::Trailing(cursor.len()));
    }
    Ok(values)
}

fn read_u32(cursor: &mut &[u8]) -> Result<u32, WireError> {
    if cursor.len() < 4 {
        return Err(WireError::Truncated);
    }
    let (head, tail) = cursor.split_at(4);
    *cursor = tail;
    Ok(u32::from_be_bytes(head.try_into().expect("4 bytes")))
}
