//! LEB128 variable-length integers as used by dex (at most 5 bytes, 32-bit values).

use crate::error::{DexError, Result};

const MAX_BYTES: usize = 5;

/// Decodes an unsigned LEB128 at `offset`; returns the value and the offset just past it.
pub fn read_uleb128(bytes: &[u8], offset: usize) -> Result<(u32, usize)> {
    let mut result: u32 = 0;
    for i in 0..MAX_BYTES {
        let byte = *bytes.get(offset + i).ok_or(DexError::Truncated {
            offset: offset + i,
            what: "uleb128",
        })?;
        let bits = u32::from(byte & 0x7f);
        if i == MAX_BYTES - 1 && (byte & 0x80 != 0 || bits > 0x0f) {
            return Err(DexError::MalformedLeb128 { offset });
        }
        result |= bits << (7 * i);
        if byte & 0x80 == 0 {
            return Ok((result, offset + i + 1));
        }
    }
    unreachable!("loop returns on the fifth byte")
}

/// Decodes a signed LEB128 at `offset`.
pub fn read_sleb128(bytes: &[u8], offset: usize) -> Result<(i32, usize)> {
    let mut result: u32 = 0;
    for i in 0..MAX_BYTES {
        let byte = *bytes.get(offset + i).ok_or(DexError::Truncated {
            offset: offset + i,
            what: "sleb128",
        })?;
        if i == MAX_BYTES - 1 && byte & 0x80 != 0 {
            return Err(DexError::MalformedLeb128 { offset });
        }
        result |= u32::from(byte & 0x7f) << (7 * i);
        if byte & 0x80 == 0 {
            let shift = 7 * (i + 1);
            let value = if shift < 32 {
                ((result << (32 - shift)) as i32) >> (32 - shift)
            } else {
                result as i32
            };
            return Ok((value, offset + i + 1));
        }
    }
    unreachable!("loop returns on the fifth byte")
}

/// Decodes a uleb128p1 (value + 1 encoded); 0 on disk means "absent".
pub fn read_uleb128p1(bytes: &[u8], offset: usize) -> Result<(Option<u32>, usize)> {
    let (v, next) = read_uleb128(bytes, offset)?;
    Ok((v.checked_sub(1), next))
}

/// Minimal unsigned LEB128 encoding of `value`.
pub fn write_uleb128(value: u32) -> Vec<u8> {
    let mut out = Vec::with_capacity(MAX_BYTES);
    push_uleb128(&mut out, value);
    out
}

pub fn push_uleb128(out: &mut Vec<u8>, mut value: u32) {
    loop {
        let byte = (value & 0x7f) as u8;
        value >>= 7;
        if value == 0 {
            out.push(byte);
            return;
        }
        out.push(byte | 0x80);
    }
}

pub fn push_sleb128(out: &mut Vec<u8>, mut value: i32) {
    loop {
        let byte = (value & 0x7f) as u8;
        value >>= 7;
        let done = (value == 0 && byte & 0x40 == 0) || (value == -1 && byte & 0x40 != 0);
        if done {
            out.push(byte);
            return;
        }
        out.push(byte | 0x80);
    }
}

pub fn push_uleb128p1(out: &mut Vec<u8>, value: Option<u32>) {
    push_uleb128(out, value.map_or(0, |v| v + 1));
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Reference decoder written from the textbook definition, independent of `read_uleb128`.
    fn reference_decode(bytes: &[u8]) -> (u64, usize) {
        let mut value = 0u64;
        let mut width = 0;
        for (i, b) in bytes.iter().enumerate() {
            value += u64::from(b % 128) * 128u64.pow(i as u32);
            width = i + 1;
            if b / 128 == 0 {
                break;
            }
        }
        (value, width)
    }

    #[test]
    fn known_values() {
        assert_eq!(read_uleb128(&[0x00], 0).unwrap(), (0, 1));
        assert_eq!(read_uleb128(&[0x7f], 0).unwrap(), (127, 1));
        assert_eq!(reference_decode(&[0xb7, 0x11]), (2231, 2));
        assert_eq!(read_uleb128(&[0xb7, 0x11], 0).unwrap(), (2231, 2));
        assert_eq!(write_uleb128(0), [0x00]);
        assert_eq!(write_uleb128(128), [0x80, 0x01]);
        assert_eq!(write_uleb128(u32::MAX), [0xff, 0xff, 0xff, 0xff, 0x0f]);
    }

    #[test]
    fn sleb_known_values() {
        assert_eq!(read_sleb128(&[0x00], 0).unwrap(), (0, 1));
        assert_eq!(read_sleb128(&[0x01], 0).unwrap(), (1, 1));
        assert_eq!(read_sleb128(&[0x7f], 0).unwrap(), (-1, 1));
        assert_eq!(read_sleb128(&[0x80, 0x7f], 0).unwrap(), (-128, 2));
    }

    #[test]
    fn errors() {
        assert_eq!(
            read_uleb128(&[0x80, 0x80], 0),
            Err(DexError::Truncated { offset: 2, what: "uleb128" })
        );
        assert_eq!(
            read_uleb128(&[0x80, 0x80, 0x80, 0x80, 0x80, 0x01], 0),
            Err(DexError::MalformedLeb128 { offset: 0 })
        );
        assert_eq!(read_uleb128p1(&[0x00], 0).unwrap(), (None, 1));
        assert_eq!(read_uleb128p1(&[0x05], 0).unwrap(), (Some(4), 1));
    }

    proptest! {
        #[test]
        fn uleb_round_trip(v in any::<u32>()) {
            let bytes = write_uleb128(v);
            prop_assert_eq!(read_uleb128(&bytes, 0).unwrap(), (v, bytes.len()));
            prop_assert_eq!(reference_decode(&bytes), (u64::from(v), bytes.len()));
            // minimal: the last byte is nonzero unless the value itself is zero
            prop_assert!(v == 0 || *bytes.last().unwrap() != 0);
        }

        #[test]
        fn sleb_round_trip(v in any::<i32>()) {
            let mut bytes = Vec::new();
            push_sleb128(&mut bytes, v);
            prop_assert_eq!(read_sleb128(&bytes, 0).unwrap(), (v, bytes.len()));
        }
    }
}
