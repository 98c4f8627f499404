//! Wire framing: each record is an 8-byte big-endian timestamp (µs), a
//! 4-byte big-endian payload length, then the payload.

use crate::error::{Error, Result};

pub const HEADER_LEN: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StreamRecord {
    pub t: u64,
    pub payload: Vec<u8>,
}

impl StreamRecord {
    pub fn new(t: u64, payload: impl Into<Vec<u8>>) -> Self {
        StreamRecord { t, payload: payload.into() }
    }
}

pub fn encode_record(out: &mut Vec<u8>, t: u64, payload: &[u8]) {
    let len = u32::try_from(payload.len()).expect("payload longer than u32::MAX");
    out.extend_from_slice(&t.to_be_bytes());
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(payload);
}

pub fn encode<'a>(records: impl IntoIterator<Item = &'a StreamRecord>) -> Vec<u8> {
    let mut out = Vec::new();
    for r in records {
        encode_record(&mut out, r.t, &r.payload);
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Vec<StreamRecord>> {
    let mut out = Vec::new();
    let mut at = 0;
    while at < bytes.len() {
        let rest = &bytes[at..];
        if rest.len() < HEADER_LEN {
            return Err(Error::BadFraming(format!("truncated header at byte {at}")));
        }
        let t = u64::from_be_bytes(rest[..8].try_into().expect("8 bytes"));
        let len = u32::from_be_bytes(rest[8..12].try_into().expect("4 bytes")) as usize;
        let body = &rest[HEADER_LEN..];
        if body.len() < len {
            return Err(Error::BadFraming(format!("record at byte {at} declares {len} bytes, {} remain", body.len())));
        }
        out.push(StreamRecord { t, payload: body[..len].to_vec() });
        at += HEADER_LEN + len;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_big_endian() {
        let bytes = encode(&[StreamRecord::new(0x0102, b"ab".to_vec())]);
        assert_eq!(bytes, [0, 0, 0, 0, 0, 0, 1, 2, 0, 0, 0, 2, b'a', b'b']);
        assert_eq!(decode(&bytes).unwrap(), vec![StreamRecord::new(0x0102, b"ab".to_vec())]);
    }

    #[test]
    fn truncation_is_rejected() {
        let bytes = encode(&[StreamRecord::new(1, b"abc".to_vec())]);
        for cut in 1..bytes.len() {
            assert!(matches!(decode(&bytes[..cut]), Err(Error::BadFraming(_))), "cut {cut}");
        }
        assert_eq!(decode(&[]).unwrap(), vec![]);
    }
}
