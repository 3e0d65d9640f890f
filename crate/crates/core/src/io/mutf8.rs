//! Modified UTF-8 as stored in dex string_data items.
//!
//! U+0000 is written as `C0 80` and supplementary characters as two
//! three-byte surrogate encodings. Decoding rejects overlong forms other
//! than `C0 80`, four-byte sequences, and unpaired surrogates.

use crate::error::{DexError, Result};

fn malformed(offset: usize, reason: &'static str) -> DexError {
    DexError::MalformedString { offset, reason }
}

/// Decodes NUL-terminated MUTF-8 starting at `offset`. Returns the string, its
/// length in UTF-16 code units, and the offset just past the terminator.
pub fn decode_mutf8(bytes: &[u8], offset: usize) -> Result<(String, usize, usize)> {
    let mut units: Vec<u16> = Vec::new();
    let mut pos = offset;
    let byte_at = |p: usize| -> Result<u8> {
        bytes.get(p).copied().ok_or(DexError::Truncated {
            offset: p,
            what: "string data",
        })
    };
    loop {
        let b0 = byte_at(pos)?;
        match b0 {
            0x00 => break,
            0x01..=0x7f => {
                units.push(u16::from(b0));
                pos += 1;
            }
            0xc0..=0xdf => {
                let b1 = byte_at(pos + 1)?;
                if b1 & 0xc0 != 0x80 {
                    return Err(malformed(pos + 1, "invalid continuation byte"));
                }
                let v = (u16::from(b0 & 0x1f) << 6) | u16::from(b1 & 0x3f);
                if v != 0 && v < 0x80 {
                    return Err(malformed(pos, "overlong two-byte sequence"));
                }
                units.push(v);
                pos += 2;
            }
            0xe0..=0xef => {
                let b1 = byte_at(pos + 1)?;
                let b2 = byte_at(pos + 2)?;
                if b1 & 0xc0 != 0x80 {
                    return Err(malformed(pos + 1, "invalid continuation byte"));
                }
                if b2 & 0xc0 != 0x80 {
                    return Err(malformed(pos + 2, "invalid continuation byte"));
                }
                let v = (u16::from(b0 & 0x0f) << 12) | (u16::from(b1 & 0x3f) << 6) | u16::from(b2 & 0x3f);
                if v < 0x800 {
                    return Err(malformed(pos, "overlong three-byte sequence"));
                }
                units.push(v);
                pos += 3;
            }
            _ => return Err(malformed(pos, "invalid lead byte")),
        }
    }
    let len = units.len();
    let s = String::from_utf16(&units).map_err(|_| malformed(offset, "unpaired surrogate"))?;
    Ok((s, len, pos + 1))
}

/// Encodes `s` as MUTF-8 without the trailing NUL.
pub fn encode_mutf8(s: &str) -> Vec<u8> {
    let mut out = Vec::with_capacity(s.len());
    for unit in s.encode_utf16() {
        match unit {
            0x0001..=0x007f => out.push(unit as u8),
            0x0000 | 0x0080..=0x07ff => {
                out.push(0xc0 | (unit >> 6) as u8);
                out.push(0x80 | (unit & 0x3f) as u8);
            }
            _ => {
                out.push(0xe0 | (unit >> 12) as u8);
                out.push(0x80 | ((unit >> 6) & 0x3f) as u8);
                out.push(0x80 | (unit & 0x3f) as u8);
            }
        }
    }
    out
}

/// Length of `s` in UTF-16 code units, the value stored before string data.
pub fn utf16_len(s: &str) -> usize {
    s.encode_utf16().count()
}
