//! encoded_value / encoded_array / encoded_annotation grammar.
//!
//! Used to find the extent of static value and annotation items, and by the
//! merger to rewrite the pool indices they embed.

use super::leb128::{push_uleb128, read_uleb128};
use crate::error::{DexError, Result};

const VALUE_BYTE: u8 = 0x00;
const VALUE_SHORT: u8 = 0x02;
const VALUE_CHAR: u8 = 0x03;
const VALUE_INT: u8 = 0x04;
const VALUE_LONG: u8 = 0x06;
const VALUE_FLOAT: u8 = 0x10;
const VALUE_DOUBLE: u8 = 0x11;
const VALUE_METHOD_TYPE: u8 = 0x15;
const VALUE_METHOD_HANDLE: u8 = 0x16;
const VALUE_STRING: u8 = 0x17;
const VALUE_TYPE: u8 = 0x18;
const VALUE_FIELD: u8 = 0x19;
const VALUE_METHOD: u8 = 0x1a;
const VALUE_ENUM: u8 = 0x1b;
const VALUE_ARRAY: u8 = 0x1c;
const VALUE_ANNOTATION: u8 = 0x1d;
const VALUE_NULL: u8 = 0x1e;
const VALUE_BOOLEAN: u8 = 0x1f;

/// Pool referenced by an index-carrying encoded value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefKind {
    String,
    Type,
    Field,
    Method,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EncodedValue {
    Byte(i8),
    Short(i16),
    Char(u16),
    Int(i32),
    Long(i64),
    Float(f32),
    Double(f64),
    String(u32),
    Type(u32),
    Field(u32),
    Method(u32),
    Enum(u32),
    Array(Vec<EncodedValue>),
    Annotation(EncodedAnnotation),
    Null,
    Boolean(bool),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedAnnotation {
    pub type_idx: u32,
    /// (name string index, value)
    pub elements: Vec<(u32, EncodedValue)>,
}

fn malformed(offset: usize, reason: impl Into<String>) -> DexError {
    DexError::MalformedEncodedValue {
        offset,
        reason: reason.into(),
    }
}

fn read_le(bytes: &[u8], offset: usize, size: usize) -> Result<u64> {
    let slice = bytes.get(offset..offset + size).ok_or(DexError::Truncated {
        offset,
        what: "encoded value",
    })?;
    Ok(slice.iter().rev().fold(0u64, |acc, &b| (acc << 8) | u64::from(b)))
}

fn sign_extend(v: u64, size: usize) -> i64 {
    let shift = 64 - 8 * size as u32;
    ((v << shift) as i64) >> shift
}

fn read_value(bytes: &[u8], offset: usize, depth: usize) -> Result<(EncodedValue, usize)> {
    if depth > 64 {
        return Err(malformed(offset, "nesting too deep"));
    }
    let header = *bytes.get(offset).ok_or(DexError::Truncated {
        offset,
        what: "encoded value",
    })?;
    let value_type = header & 0x1f;
    let arg = (header >> 5) as usize;
    let size = arg + 1;
    let pos = offset + 1;
    let check_size = |max: usize| -> Result<()> {
        if size > max {
            Err(malformed(offset, format!("size {size} too large for type {value_type:#04x}")))
        } else {
            Ok(())
        }
    };
    let index = |max: usize| -> Result<u32> {
        check_size(max)?;
        Ok(read_le(bytes, pos, size)? as u32)
    };
    let value = match value_type {
        VALUE_BYTE => {
            check_size(1)?;
            EncodedValue::Byte(sign_extend(read_le(bytes, pos, size)?, size) as i8)
        }
        VALUE_SHORT => {
            check_size(2)?;
            EncodedValue::Short(sign_extend(read_le(bytes, pos, size)?, size) as i16)
        }
        VALUE_CHAR => {
            check_size(2)?;
            EncodedValue::Char(read_le(bytes, pos, size)? as u16)
        }
        VALUE_INT => {
            check_size(4)?;
            EncodedValue::Int(sign_extend(read_le(bytes, pos, size)?, size) as i32)
        }
        VALUE_LONG => {
            check_size(8)?;
            EncodedValue::Long(sign_extend(read_le(bytes, pos, size)?, size))
        }
        VALUE_FLOAT => {
            check_size(4)?;
            let v = read_le(bytes, pos, size)? << (8 * (4 - size));
            EncodedValue::Float(f32::from_bits(v as u32))
        }
        VALUE_DOUBLE => {
            check_size(8)?;
            let v = read_le(bytes, pos, size)? << (8 * (8 - size));
            EncodedValue::Double(f64::from_bits(v))
        }
        VALUE_STRING => EncodedValue::String(index(4)?),
        VALUE_TYPE => EncodedValue::Type(index(4)?),
        VALUE_FIELD => EncodedValue::Field(index(4)?),
        VALUE_METHOD => EncodedValue::Method(index(4)?),
        VALUE_ENUM => EncodedValue::Enum(index(4)?),
        VALUE_ARRAY => {
            let (items, next) = read_array_body(bytes, pos, depth + 1)?;
            return Ok((EncodedValue::Array(items), next));
        }
        VALUE_ANNOTATION => {
            let (ann, next) = read_annotation_body(bytes, pos, depth + 1)?;
            return Ok((EncodedValue::Annotation(ann), next));
        }
        VALUE_NULL => return Ok((EncodedValue::Null, pos)),
        VALUE_BOOLEAN => {
            if arg > 1 {
                return Err(malformed(offset, "boolean argument out of range"));
            }
            return Ok((EncodedValue::Boolean(arg == 1), pos));
        }
        VALUE_METHOD_TYPE | VALUE_METHOD_HANDLE => {
            return Err(malformed(offset, "method type/handle values require dex 038+"))
        }
        other => return Err(malformed(offset, format!("unknown value type {other:#04x}"))),
    };
    Ok((value, pos + size))
}

fn read_array_body(bytes: &[u8], offset: usize, depth: usize) -> Result<(Vec<EncodedValue>, usize)> {
    let (count, mut pos) = read_uleb128(bytes, offset)?;
    let mut items = Vec::with_capacity((count as usize).min(1024));
    for _ in 0..count {
        let (v, next) = read_value(bytes, pos, depth)?;
        items.push(v);
        pos = next;
    }
    Ok((items, pos))
}

fn read_annotation_body(bytes: &[u8], offset: usize, depth: usize) -> Result<(EncodedAnnotation, usize)> {
    let (type_idx, pos) = read_uleb128(bytes, offset)?;
    let (count, mut pos) = read_uleb128(bytes, pos)?;
    let mut elements = Vec::with_capacity((count as usize).min(1024));
    for _ in 0..count {
        let (name, next) = read_uleb128(bytes, pos)?;
        let (v, next) = read_value(bytes, next, depth)?;
        elements.push((name, v));
        pos = next;
    }
    Ok((EncodedAnnotation { type_idx, elements }, pos))
}

/// Decodes an encoded_array at `offset`; returns the items and the end offset.
pub fn read_encoded_array(bytes: &[u8], offset: usize) -> Result<(Vec<EncodedValue>, usize)> {
    read_array_body(bytes, offset, 0)
}

/// Decodes an encoded_annotation at `offset`; returns it and the end offset.
pub fn read_encoded_annotation(bytes: &[u8], offset: usize) -> Result<(EncodedAnnotation, usize)> {
    read_annotation_body(bytes, offset, 0)
}

fn push_header(out: &mut Vec<u8>, value_type: u8, size: usize) {
    out.push((((size - 1) as u8) << 5) | value_type);
}

fn push_signed(out: &mut Vec<u8>, value_type: u8, v: i64) {
    let mut size = 8;
    while size > 1 {
        let shift = 8 * (size - 1) as u32;
        // drop the top byte when the remaining bytes sign-extend to the same value
        if sign_extend(v as u64 & ((1u64 << shift) - 1), size - 1) == v {
            size -= 1;
        } else {
            break;
        }
    }
    push_header(out, value_type, size);
    out.extend_from_slice(&v.to_le_bytes()[..size]);
}

fn push_unsigned(out: &mut Vec<u8>, value_type: u8, v: u64) {
    let size = (8 - (v.leading_zeros() as usize / 8)).max(1);
    push_header(out, value_type, size);
    out.extend_from_slice(&v.to_le_bytes()[..size]);
}

/// Floating point values are stored right-zero-extended: trailing zero bytes of the
/// little-endian form are dropped from the low end.
fn push_float_bits(out: &mut Vec<u8>, value_type: u8, bits: u64, width: usize) {
    let le = bits.to_le_bytes();
    let mut start = 0;
    while start < width - 1 && le[start] == 0 {
        start += 1;
    }
    push_header(out, value_type, width - start);
    out.extend_from_slice(&le[start..width]);
}

pub fn write_value(out: &mut Vec<u8>, value: &EncodedValue) {
    match value {
        EncodedValue::Byte(v) => {
            push_header(out, VALUE_BYTE, 1);
            out.push(*v as u8);
        }
        EncodedValue::Short(v) => push_signed(out, VALUE_SHORT, i64::from(*v)),
        EncodedValue::Char(v) => push_unsigned(out, VALUE_CHAR, u64::from(*v)),
        EncodedValue::Int(v) => push_signed(out, VALUE_INT, i64::from(*v)),
        EncodedValue::Long(v) => push_signed(out, VALUE_LONG, *v),
        EncodedValue::Float(v) => push_float_bits(out, VALUE_FLOAT, u64::from(v.to_bits()), 4),
        EncodedValue::Double(v) => push_float_bits(out, VALUE_DOUBLE, v.to_bits(), 8),
        EncodedValue::String(i) => push_unsigned(out, VALUE_STRING, u64::from(*i)),
        EncodedValue::Type(i) => push_unsigned(out, VALUE_TYPE, u64::from(*i)),
        EncodedValue::Field(i) => push_unsigned(out, VALUE_FIELD, u64::from(*i)),
        EncodedValue::Method(i) => push_unsigned(out, VALUE_METHOD, u64::from(*i)),
        EncodedValue::Enum(i) => push_unsigned(out, VALUE_ENUM, u64::from(*i)),
        EncodedValue::Array(items) => {
            out.push(VALUE_ARRAY);
            write_array_body(out, items);
        }
        EncodedValue::Annotation(a) => {
            out.push(VALUE_ANNOTATION);
            write_encoded_annotation(out, a);
        }
        EncodedValue::Null => out.push(VALUE_NULL),
        EncodedValue::Boolean(b) => out.push((u8::from(*b) << 5) | VALUE_BOOLEAN),
    }
}

fn write_array_body(out: &mut Vec<u8>, items: &[EncodedValue]) {
    push_uleb128(out, items.len() as u32);
    for v in items {
        write_value(out, v);
    }
}

pub fn write_encoded_array(out: &mut Vec<u8>, items: &[EncodedValue]) {
    write_array_body(out, items);
}

pub fn write_encoded_annotation(out: &mut Vec<u8>, a: &EncodedAnnotation) {
    push_uleb128(out, a.type_idx);
    push_uleb128(out, a.elements.len() as u32);
    for (name, v) in &a.elements {
        push_uleb128(out, *name);
        write_value(out, v);
    }
}

/// Applies `f` to every index embedded in a value tree.
pub fn map_value_refs<F>(value: &mut EncodedValue, f: &mut F) -> Result<()>
where
    F: FnMut(RefKind, u32) -> Result<u32>,
{
    match value {
        EncodedValue::String(i) => *i = f(RefKind::String, *i)?,
        EncodedValue::Type(i) => *i = f(RefKind::Type, *i)?,
        EncodedValue::Field(i) | EncodedValue::Enum(i) => *i = f(RefKind::Field, *i)?,
        EncodedValue::Method(i) => *i = f(RefKind::Method, *i)?,
        EncodedValue::Array(items) => {
            for v in items {
                map_value_refs(v, f)?;
            }
        }
        EncodedValue::Annotation(a) => map_annotation_refs(a, f)?,
        _ => {}
    }
    Ok(())
}

pub fn map_annotation_refs<F>(a: &mut EncodedAnnotation, f: &mut F) -> Result<()>
where
    F: FnMut(RefKind, u32) -> Result<u32>,
{
    a.type_idx = f(RefKind::Type, a.type_idx)?;
    for (name, v) in &mut a.elements {
        *name = f(RefKind::String, *name)?;
        map_value_refs(v, f)?;
    }
    Ok(())
}

/// Re-encodes a complete encoded_array with every index passed through `f`.
pub fn remap_encoded_array<F>(bytes: &[u8], f: &mut F) -> Result<Vec<u8>>
where
    F: FnMut(RefKind, u32) -> Result<u32>,
{
    let (mut items, end) = read_encoded_array(bytes, 0)?;
    if end != bytes.len() {
        return Err(malformed(end, "trailing bytes after encoded array"));
    }
    for v in &mut items {
        map_value_refs(v, f)?;
    }
    let mut out = Vec::with_capacity(bytes.len());
    write_encoded_array(&mut out, &items);
    Ok(out)
}

/// Re-encodes a complete encoded_annotation with every index passed through `f`.
pub fn remap_encoded_annotation<F>(bytes: &[u8], f: &mut F) -> Result<Vec<u8>>
where
    F: FnMut(RefKind, u32) -> Result<u32>,
{
    let (mut a, end) = read_encoded_annotation(bytes, 0)?;
    if end != bytes.len() {
        return Err(malformed(end, "trailing bytes after encoded annotation"));
    }
    map_annotation_refs(&mut a, f)?;
    let mut out = Vec::with_capacity(bytes.len());
    write_encoded_annotation(&mut out, &a);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn round_trip(v: EncodedValue) -> Vec<u8> {
        let mut out = Vec::new();
        write_value(&mut out, &v);
        let (back, end) = read_value(&out, 0, 0).unwrap();
        assert_eq!(end, out.len());
        assert_eq!(back, v);
        out
    }

    #[test]
    fn minimal_widths() {
        assert_eq!(round_trip(EncodedValue::Int(0)), [0x04, 0x00]);
        assert_eq!(round_trip(EncodedValue::Int(-1)), [0x04, 0xff]);
        assert_eq!(round_trip(EncodedValue::Int(128)), [0x24, 0x80, 0x00]);
        assert_eq!(round_trip(EncodedValue::String(0x1234)), [0x37, 0x34, 0x12]);
        assert_eq!(round_trip(EncodedValue::Float(1.0)), [0x30, 0x80, 0x3f]);
        assert_eq!(round_trip(EncodedValue::Boolean(true)), [0x3f]);
        assert_eq!(round_trip(EncodedValue::Null), [0x1e]);
        round_trip(EncodedValue::Double(-2.5));
        round_trip(EncodedValue::Long(i64::MIN));
        round_trip(EncodedValue::Array(vec![EncodedValue::Type(3), EncodedValue::Byte(-3)]));
    }

    #[test]
    fn remap_widens_indices() {
        let mut bytes = Vec::new();
        write_encoded_array(&mut bytes, &[EncodedValue::String(1), EncodedValue::Int(7)]);
        let out = remap_encoded_array(&bytes, &mut |k, i| {
            assert_eq!(k, RefKind::String);
            Ok(i + 0x10000)
        })
        .unwrap();
        let (items, _) = read_encoded_array(&out, 0).unwrap();
        assert_eq!(items, [EncodedValue::String(0x10001), EncodedValue::Int(7)]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(read_value(&[0x1f | (2 << 5)], 0, 0).is_err());
        assert!(read_value(&[0x04 | (4 << 5), 0, 0, 0, 0, 0], 0, 0).is_err());
        assert!(read_value(&[0x24, 0x01], 0, 0).is_err());
        assert!(read_value(&[0x16, 0x00], 0, 0).is_err());
    }

    proptest! {
        #[test]
        fn scalars_round_trip(i in any::<i32>(), l in any::<i64>(), s in any::<i16>(), c in any::<u16>(), f in any::<u32>()) {
            round_trip(EncodedValue::Int(i));
            round_trip(EncodedValue::Long(l));
            round_trip(EncodedValue::Short(s));
            round_trip(EncodedValue::Char(c));
            let fv = f32::from_bits(f);
            let mut out = Vec::new();
            write_value(&mut out, &EncodedValue::Float(fv));
            let (back, _) = read_value(&out, 0, 0).unwrap();
            match back {
                EncodedValue::Float(b) => prop_assert_eq!(b.to_bits(), f),
                other => prop_assert!(false, "{other:?}"),
            }
        }
    }
}
