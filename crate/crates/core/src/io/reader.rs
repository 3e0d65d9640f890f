use std::collections::HashMap;

use super::checksum::{verify_checksums, HEADER_SIZE};
use super::encoded::{read_encoded_annotation, read_encoded_array};
use super::leb128::{read_sleb128, read_uleb128, read_uleb128p1};
use super::mutf8::decode_mutf8;
use crate::error::{DexError, Pool, Result};
use crate::model::*;

pub const DEX_MAGIC_PREFIX: &[u8; 4] = b"dex\n";
pub const DEX_VERSION: &[u8; 3] = b"035";
pub const ENDIAN_CONSTANT: u32 = 0x1234_5678;

struct Reader<'a> {
    bytes: &'a [u8],
}

impl<'a> Reader<'a> {
    fn slice(&self, offset: usize, len: usize, what: &'static str) -> Result<&'a [u8]> {
        offset
            .checked_add(len)
            .and_then(|end| self.bytes.get(offset..end))
            .ok_or(DexError::Truncated { offset, what })
    }

    fn u8(&self, offset: usize, what: &'static str) -> Result<u8> {
        Ok(self.slice(offset, 1, what)?[0])
    }

    fn u16(&self, offset: usize, what: &'static str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.slice(offset, 2, what)?.try_into().unwrap()))
    }

    fn u32(&self, offset: usize, what: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.slice(offset, 4, what)?.try_into().unwrap()))
    }
}

fn checked(pool: Pool, index: u32, size: usize, offset: usize) -> Result<u32> {
    if (index as usize) < size {
        Ok(index)
    } else {
        Err(DexError::IndexOutOfRange {
            pool,
            index,
            size,
            offset: Some(offset),
        })
    }
}

/// Reads and checks the header, including checksum and signature.
///
/// Integrity is checked before any field it covers, so damage anywhere past
/// the magic is reported as a checksum or signature mismatch.
pub fn parse_header(bytes: &[u8]) -> Result<DexHeader> {
    check_magic(bytes)?;
    verify_checksums(bytes)?;
    read_header_fields(bytes)
}

fn check_magic(bytes: &[u8]) -> Result<[u8; 8]> {
    if bytes.len() < HEADER_SIZE {
        return Err(DexError::Truncated {
            offset: bytes.len(),
            what: "header",
        });
    }
    let magic: [u8; 8] = bytes[..8].try_into().unwrap();
    if &magic[..4] != DEX_MAGIC_PREFIX || magic[7] != 0 || !magic[4..7].iter().all(u8::is_ascii_digit) {
        return Err(DexError::BadMagic { found: magic });
    }
    if &magic[4..7] != DEX_VERSION {
        return Err(DexError::UnsupportedVersion {
            version: String::from_utf8_lossy(&magic[4..7]).into_owned(),
        });
    }
    Ok(magic)
}

/// Header fields with magic, version, endian tag, header size and file size
/// checked, but not the checksum or signature.
pub fn read_header_fields(bytes: &[u8]) -> Result<DexHeader> {
    let magic = check_magic(bytes)?;
    let r = Reader { bytes };
    let u = |off: usize| r.u32(off, "header");
    let endian_tag = u(0x28)?;
    if endian_tag != ENDIAN_CONSTANT {
        return Err(DexError::BadEndianTag { value: endian_tag });
    }
    let header_size = u(0x24)?;
    if header_size as usize != HEADER_SIZE {
        return Err(DexError::BadHeaderSize { value: header_size });
    }
    let file_size = u(0x20)?;
    if (file_size as usize) > bytes.len() {
        return Err(DexError::Truncated {
            offset: bytes.len(),
            what: "file (shorter than header file_size)",
        });
    }
    if file_size as usize != bytes.len() {
        return Err(DexError::FileSizeMismatch {
            declared: file_size,
            actual: bytes.len(),
        });
    }
    Ok(DexHeader {
        magic,
        checksum: u(0x08)?,
        signature: bytes[0x0c..0x20].try_into().unwrap(),
        file_size,
        header_size,
        endian_tag,
        link_size: u(0x2c)?,
        link_off: u(0x30)?,
        map_off: u(0x34)?,
        string_ids_size: u(0x38)?,
        string_ids_off: u(0x3c)?,
        type_ids_size: u(0x40)?,
        type_ids_off: u(0x44)?,
        proto_ids_size: u(0x48)?,
        proto_ids_off: u(0x4c)?,
        field_ids_size: u(0x50)?,
        field_ids_off: u(0x54)?,
        method_ids_size: u(0x58)?,
        method_ids_off: u(0x5c)?,
        class_defs_size: u(0x60)?,
        class_defs_off: u(0x64)?,
        data_size: u(0x68)?,
        data_off: u(0x6c)?,
    })
}

/// Decodes a complete dex file. Integrity fields are verified, every index
/// is range-checked, and the result passes `DexFile::validate`.
pub fn parse_dex(bytes: &[u8]) -> Result<DexFile> {
    let header = parse_header(bytes)?;
    let r = Reader { bytes };
    let section = |off: u32, count: u32, item: usize, what: &'static str| -> Result<usize> {
        let len = (count as usize).checked_mul(item).ok_or(DexError::Truncated {
            offset: off as usize,
            what,
        })?;
        r.slice(off as usize, len, what)?;
        Ok(off as usize)
    };

    let string_ids_off = section(header.string_ids_off, header.string_ids_size, 4, "string_ids")?;
    let mut strings = Vec::with_capacity(header.string_ids_size as usize);
    for i in 0..header.string_ids_size as usize {
        let data_off = r.u32(string_ids_off + 4 * i, "string_ids")? as usize;
        let (utf16_len, start) = read_uleb128(bytes, data_off)?;
        let (s, len, _) = decode_mutf8(bytes, start)?;
        if len != utf16_len as usize {
            return Err(DexError::MalformedString {
                offset: data_off,
                reason: "declared UTF-16 length does not match data",
            });
        }
        strings.push(s);
    }
    let n_strings = strings.len();

    let type_ids_off = section(header.type_ids_off, header.type_ids_size, 4, "type_ids")?;
    let mut type_ids = Vec::with_capacity(header.type_ids_size as usize);
    for i in 0..header.type_ids_size as usize {
        let off = type_ids_off + 4 * i;
        let idx = checked(Pool::Strings, r.u32(off, "type_ids")?, n_strings, off)?;
        type_ids.push(TypeId {
            descriptor_idx: StringIdx(idx),
        });
    }
    let n_types = type_ids.len();

    let read_type_list = |off: u32| -> Result<Vec<TypeIdx>> {
        if off == 0 {
            return Ok(Vec::new());
        }
        let off = off as usize;
        let size = r.u32(off, "type_list")? as usize;
        r.slice(off + 4, size.saturating_mul(2), "type_list")?;
        (0..size)
            .map(|j| {
                let at = off + 4 + 2 * j;
                Ok(TypeIdx(checked(Pool::Types, u32::from(r.u16(at, "type_list")?), n_types, at)?))
            })
            .collect()
    };

    let proto_ids_off = section(header.proto_ids_off, header.proto_ids_size, 12, "proto_ids")?;
    let mut proto_ids = Vec::with_capacity(header.proto_ids_size as usize);
    for i in 0..header.proto_ids_size as usize {
        let off = proto_ids_off + 12 * i;
        proto_ids.push(ProtoId {
            shorty_idx: StringIdx(checked(Pool::Strings, r.u32(off, "proto_ids")?, n_strings, off)?),
            return_type_idx: TypeIdx(checked(Pool::Types, r.u32(off + 4, "proto_ids")?, n_types, off + 4)?),
            parameters: read_type_list(r.u32(off + 8, "proto_ids")?)?,
        });
    }
    let n_protos = proto_ids.len();

    let field_ids_off = section(header.field_ids_off, header.field_ids_size, 8, "field_ids")?;
    let mut field_ids = Vec::with_capacity(header.field_ids_size as usize);
    for i in 0..header.field_ids_size as usize {
        let off = field_ids_off + 8 * i;
        field_ids.push(FieldId {
            class_idx: TypeIdx(checked(Pool::Types, u32::from(r.u16(off, "field_ids")?), n_types, off)?),
            type_idx: TypeIdx(checked(Pool::Types, u32::from(r.u16(off + 2, "field_ids")?), n_types, off + 2)?),
            name_idx: StringIdx(checked(Pool::Strings, r.u32(off + 4, "field_ids")?, n_strings, off + 4)?),
        });
    }
    let n_fields = field_ids.len();

    let method_ids_off = section(header.method_ids_off, header.method_ids_size, 8, "method_ids")?;
    let mut method_ids = Vec::with_capacity(header.method_ids_size as usize);
    for i in 0..header.method_ids_size as usize {
        let off = method_ids_off + 8 * i;
        method_ids.push(MethodId {
            class_idx: TypeIdx(checked(Pool::Types, u32::from(r.u16(off, "method_ids")?), n_types, off)?),
            proto_idx: ProtoIdx(checked(Pool::Protos, u32::from(r.u16(off + 2, "method_ids")?), n_protos, off + 2)?),
            name_idx: StringIdx(checked(Pool::Strings, r.u32(off + 4, "method_ids")?, n_strings, off + 4)?),
        });
    }
    let n_methods = method_ids.len();

    let counts = Counts {
        strings: n_strings,
        types: n_types,
        fields: n_fields,
        methods: n_methods,
    };
    let class_defs_off = section(header.class_defs_off, header.class_defs_size, 32, "class_defs")?;
    let mut class_defs = Vec::with_capacity(header.class_defs_size as usize);
    for i in 0..header.class_defs_size as usize {
        let off = class_defs_off + 32 * i;
        let f = |k: usize| r.u32(off + 4 * k, "class_defs");
        let optional = |pool: Pool, v: u32, size: usize, at: usize| -> Result<Option<u32>> {
            if v == NO_INDEX {
                Ok(None)
            } else {
                checked(pool, v, size, at).map(Some)
            }
        };
        let class_idx = TypeIdx(checked(Pool::Types, f(0)?, n_types, off)?);
        let annotations_off = f(5)?;
        let class_data_off = f(6)?;
        let static_values_off = f(7)?;
        class_defs.push(ClassDef {
            class_idx,
            access_flags: f(1)?,
            superclass: optional(Pool::Types, f(2)?, n_types, off + 8)?.map(TypeIdx),
            interfaces: read_type_list(f(3)?)?,
            source_file: optional(Pool::Strings, f(4)?, n_strings, off + 16)?.map(StringIdx),
            annotations: match annotations_off {
                0 => None,
                o => Some(read_annotations_directory(&r, o as usize, &counts)?),
            },
            class_data: match class_data_off {
                0 => None,
                o => Some(read_class_data(&r, o as usize, &counts)?),
            },
            static_values: match static_values_off {
                0 => None,
                o => {
                    let (_, end) = read_encoded_array(bytes, o as usize)?;
                    Some(EncodedArray(bytes[o as usize..end].to_vec()))
                }
            },
        });
    }

    let map = read_map_list(&r, header.map_off as usize)?;

    let dex = DexFile {
        strings,
        type_ids,
        proto_ids,
        field_ids,
        method_ids,
        class_defs,
        layout: Some(DexLayout { header, map }),
    };
    dex.validate()?;
    Ok(dex)
}

struct Counts {
    strings: usize,
    types: usize,
    fields: usize,
    methods: usize,
}

fn read_map_list(r: &Reader<'_>, off: usize) -> Result<Vec<MapItem>> {
    if off == 0 {
        return Err(DexError::Malformed {
            what: "header",
            offset: 0x34,
            reason: "map_off is zero".into(),
        });
    }
    let size = r.u32(off, "map_list")? as usize;
    r.slice(off + 4, size.saturating_mul(12), "map_list")?;
    (0..size)
        .map(|i| {
            let at = off + 4 + 12 * i;
            Ok(MapItem {
                item_type: r.u16(at, "map_list")?,
                size: r.u32(at + 4, "map_list")?,
                offset: r.u32(at + 8, "map_list")?,
            })
        })
        .collect()
}

fn read_class_data(r: &Reader<'_>, off: usize, counts: &Counts) -> Result<ClassData> {
    let bytes = r.bytes;
    let (n_static, pos) = read_uleb128(bytes, off)?;
    let (n_instance, pos) = read_uleb128(bytes, pos)?;
    let (n_direct, pos) = read_uleb128(bytes, pos)?;
    let (n_virtual, mut pos) = read_uleb128(bytes, pos)?;

    let read_fields = |n: u32, pos: &mut usize| -> Result<Vec<EncodedField>> {
        let mut out = Vec::new();
        let mut idx: u32 = 0;
        for k in 0..n {
            let at = *pos;
            let (diff, p) = read_uleb128(bytes, *pos)?;
            let (flags, p) = read_uleb128(bytes, p)?;
            *pos = p;
            if k > 0 && diff == 0 {
                return Err(malformed_class_data(at, "duplicate field index"));
            }
            idx = idx.checked_add(diff).ok_or_else(|| malformed_class_data(at, "field index overflow"))?;
            checked(Pool::Fields, idx, counts.fields, at)?;
            out.push(EncodedField {
                field_idx: FieldIdx(idx),
                access_flags: flags,
            });
        }
        Ok(out)
    };
    let static_fields = read_fields(n_static, &mut pos)?;
    let instance_fields = read_fields(n_instance, &mut pos)?;

    let read_methods = |n: u32, pos: &mut usize| -> Result<Vec<EncodedMethod>> {
        let mut out = Vec::new();
        let mut idx: u32 = 0;
        for k in 0..n {
            let at = *pos;
            let (diff, p) = read_uleb128(bytes, *pos)?;
            let (flags, p) = read_uleb128(bytes, p)?;
            let (code_off, p) = read_uleb128(bytes, p)?;
            *pos = p;
            if k > 0 && diff == 0 {
                return Err(malformed_class_data(at, "duplicate method index"));
            }
            idx = idx.checked_add(diff).ok_or_else(|| malformed_class_data(at, "method index overflow"))?;
            checked(Pool::Methods, idx, counts.methods, at)?;
            let code = match code_off {
                0 => None,
                o => Some(read_code_item(r, o as usize, counts)?),
            };
            out.push(EncodedMethod {
                method_idx: MethodIdx(idx),
                access_flags: flags,
                code,
            });
        }
        Ok(out)
    };
    let direct_methods = read_methods(n_direct, &mut pos)?;
    let virtual_methods = read_methods(n_virtual, &mut pos)?;

    Ok(ClassData {
        static_fields,
        instance_fields,
        direct_methods,
        virtual_methods,
    })
}

fn malformed_class_data(offset: usize, reason: &str) -> DexError {
    DexError::Malformed {
        what: "class_data_item",
        offset,
        reason: reason.into(),
    }
}

fn read_code_item(r: &Reader<'_>, off: usize, counts: &Counts) -> Result<CodeItem> {
    let registers_size = r.u16(off, "code_item")?;
    let ins_size = r.u16(off + 2, "code_item")?;
    let outs_size = r.u16(off + 4, "code_item")?;
    let tries_size = r.u16(off + 6, "code_item")? as usize;
    let debug_off = r.u32(off + 8, "code_item")?;
    let insns_size = r.u32(off + 12, "code_item")? as usize;
    let insns_bytes = r.slice(off + 16, insns_size.saturating_mul(2), "code_item insns")?;
    let insns: Vec<u16> = insns_bytes
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]))
        .collect();

    let mut tries = Vec::with_capacity(tries_size);
    let mut handlers = Vec::new();
    if tries_size > 0 {
        let mut pos = off + 16 + insns_size * 2;
        if insns_size % 2 == 1 {
            pos += 2;
        }
        let mut raw_tries = Vec::with_capacity(tries_size);
        for _ in 0..tries_size {
            raw_tries.push((
                r.u32(pos, "try_item")?,
                r.u16(pos + 4, "try_item")?,
                r.u16(pos + 6, "try_item")?,
                pos,
            ));
            pos += 8;
        }
        let list_start = pos;
        let (count, mut p) = read_uleb128(r.bytes, list_start)?;
        let mut by_offset = HashMap::new();
        for i in 0..count as usize {
            by_offset.insert(p - list_start, i);
            let (size, next) = read_sleb128(r.bytes, p)?;
            p = next;
            let mut handler = CatchHandler::default();
            for _ in 0..size.unsigned_abs() {
                let at = p;
                let (ty, next) = read_uleb128(r.bytes, p)?;
                let (addr, next) = read_uleb128(r.bytes, next)?;
                p = next;
                handler.catches.push((TypeIdx(checked(Pool::Types, ty, counts.types, at)?), addr));
            }
            if size <= 0 {
                let (addr, next) = read_uleb128(r.bytes, p)?;
                p = next;
                handler.catch_all = Some(addr);
            }
            handlers.push(handler);
        }
        for (start_addr, insn_count, handler_off, at) in raw_tries {
            let handler = *by_offset.get(&(handler_off as usize)).ok_or_else(|| DexError::Malformed {
                what: "try_item",
                offset: at + 6,
                reason: format!("handler_off {handler_off} does not start a handler"),
            })?;
            tries.push(TryItem {
                start_addr,
                insn_count,
                handler,
            });
        }
    }

    let debug_info = match debug_off {
        0 => None,
        o => {
            let end = skip_debug_info(r.bytes, o as usize, counts)?;
            Some(r.bytes[o as usize..end].to_vec())
        }
    };

    Ok(CodeItem {
        registers_size,
        ins_size,
        outs_size,
        debug_info,
        insns,
        tries,
        handlers,
    })
}

const DBG_END_SEQUENCE: u8 = 0x00;
const DBG_ADVANCE_PC: u8 = 0x01;
const DBG_ADVANCE_LINE: u8 = 0x02;
const DBG_START_LOCAL: u8 = 0x03;
const DBG_START_LOCAL_EXTENDED: u8 = 0x04;
const DBG_END_LOCAL: u8 = 0x05;
const DBG_RESTART_LOCAL: u8 = 0x06;
const DBG_SET_FILE: u8 = 0x09;

/// Finds the end of a debug_info_item by walking its state-machine opcodes.
fn skip_debug_info(bytes: &[u8], off: usize, counts: &Counts) -> Result<usize> {
    let (_line_start, mut p) = read_uleb128(bytes, off)?;
    let (params, next) = read_uleb128(bytes, p)?;
    p = next;
    let check_string = |v: Option<u32>, at: usize| -> Result<()> {
        if let Some(i) = v {
            checked(Pool::Strings, i, counts.strings, at)?;
        }
        Ok(())
    };
    for _ in 0..params {
        let (name, next) = read_uleb128p1(bytes, p)?;
        check_string(name, p)?;
        p = next;
    }
    loop {
        let op = *bytes.get(p).ok_or(DexError::Truncated {
            offset: p,
            what: "debug_info_item",
        })?;
        p += 1;
        match op {
            DBG_END_SEQUENCE => return Ok(p),
            DBG_ADVANCE_PC | DBG_END_LOCAL | DBG_RESTART_LOCAL => p = read_uleb128(bytes, p)?.1,
            DBG_ADVANCE_LINE => p = read_sleb128(bytes, p)?.1,
            DBG_START_LOCAL | DBG_START_LOCAL_EXTENDED => {
                p = read_uleb128(bytes, p)?.1;
                let (name, next) = read_uleb128p1(bytes, p)?;
                check_string(name, p)?;
                let (ty, next2) = read_uleb128p1(bytes, next)?;
                if let Some(t) = ty {
                    checked(Pool::Types, t, counts.types, next)?;
                }
                p = next2;
                if op == DBG_START_LOCAL_EXTENDED {
                    let (sig, next) = read_uleb128p1(bytes, p)?;
                    check_string(sig, p)?;
                    p = next;
                }
            }
            DBG_SET_FILE => {
                let (name, next) = read_uleb128p1(bytes, p)?;
                check_string(name, p)?;
                p = next;
            }
            _ => {}
        }
    }
}

fn read_annotation_set(r: &Reader<'_>, off: usize) -> Result<AnnotationSet> {
    let size = r.u32(off, "annotation_set_item")? as usize;
    r.slice(off + 4, size.saturating_mul(4), "annotation_set_item")?;
    (0..size)
        .map(|i| {
            let item_off = r.u32(off + 4 + 4 * i, "annotation_set_item")? as usize;
            let visibility = r.u8(item_off, "annotation_item")?;
            let (_, end) = read_encoded_annotation(r.bytes, item_off + 1)?;
            Ok(Annotation {
                visibility,
                encoded: r.bytes[item_off + 1..end].to_vec(),
            })
        })
        .collect()
}

fn read_annotations_directory(r: &Reader<'_>, off: usize, counts: &Counts) -> Result<AnnotationsDirectory> {
    let what = "annotations_directory_item";
    let class_off = r.u32(off, what)? as usize;
    let n_fields = r.u32(off + 4, what)? as usize;
    let n_methods = r.u32(off + 8, what)? as usize;
    let n_params = r.u32(off + 12, what)? as usize;
    let total = n_fields
        .checked_add(n_methods)
        .and_then(|n| n.checked_add(n_params))
        .and_then(|n| n.checked_mul(8))
        .ok_or(DexError::Truncated { offset: off, what })?;
    r.slice(off + 16, total, what)?;
    let mut dir = AnnotationsDirectory {
        class_annotations: match class_off {
            0 => None,
            o => Some(read_annotation_set(r, o)?),
        },
        ..Default::default()
    };
    let mut pos = off + 16;
    for _ in 0..n_fields {
        let idx = checked(Pool::Fields, r.u32(pos, what)?, counts.fields, pos)?;
        let set = read_annotation_set(r, r.u32(pos + 4, what)? as usize)?;
        dir.fields.push((FieldIdx(idx), set));
        pos += 8;
    }
    for _ in 0..n_methods {
        let idx = checked(Pool::Methods, r.u32(pos, what)?, counts.methods, pos)?;
        let set = read_annotation_set(r, r.u32(pos + 4, what)? as usize)?;
        dir.methods.push((MethodIdx(idx), set));
        pos += 8;
    }
    for _ in 0..n_params {
        let idx = checked(Pool::Methods, r.u32(pos, what)?, counts.methods, pos)?;
        let list_off = r.u32(pos + 4, what)? as usize;
        let size = r.u32(list_off, "annotation_set_ref_list")? as usize;
        r.slice(list_off + 4, size.saturating_mul(4), "annotation_set_ref_list")?;
        let mut sets = Vec::with_capacity(size);
        for i in 0..size {
            let set_off = r.u32(list_off + 4 + 4 * i, "annotation_set_ref_list")? as usize;
            sets.push(match set_off {
                0 => None,
                o => Some(read_annotation_set(r, o)?),
            });
        }
        dir.parameters.push((MethodIdx(idx), sets));
        pos += 8;
    }
    Ok(dir)
}
