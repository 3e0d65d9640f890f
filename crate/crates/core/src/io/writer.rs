use std::collections::hash_map::Entry;
use std::collections::HashMap;

use super::checksum::{fix_checksums, HEADER_SIZE};
use super::leb128::{push_sleb128, push_uleb128};
use super::mutf8::{encode_mutf8, utf16_len};
use super::reader::ENDIAN_CONSTANT;
use crate::error::{DexError, Result};
use crate::model::*;

pub const TYPE_HEADER_ITEM: u16 = 0x0000;
pub const TYPE_STRING_ID_ITEM: u16 = 0x0001;
pub const TYPE_TYPE_ID_ITEM: u16 = 0x0002;
pub const TYPE_PROTO_ID_ITEM: u16 = 0x0003;
pub const TYPE_FIELD_ID_ITEM: u16 = 0x0004;
pub const TYPE_METHOD_ID_ITEM: u16 = 0x0005;
pub const TYPE_CLASS_DEF_ITEM: u16 = 0x0006;
pub const TYPE_MAP_LIST: u16 = 0x1000;
pub const TYPE_TYPE_LIST: u16 = 0x1001;
pub const TYPE_ANNOTATION_SET_REF_LIST: u16 = 0x1002;
pub const TYPE_ANNOTATION_SET_ITEM: u16 = 0x1003;
pub const TYPE_CLASS_DATA_ITEM: u16 = 0x2000;
pub const TYPE_CODE_ITEM: u16 = 0x2001;
pub const TYPE_STRING_DATA_ITEM: u16 = 0x2002;
pub const TYPE_DEBUG_INFO_ITEM: u16 = 0x2003;
pub const TYPE_ANNOTATION_ITEM: u16 = 0x2004;
pub const TYPE_ENCODED_ARRAY_ITEM: u16 = 0x2005;
pub const TYPE_ANNOTATIONS_DIRECTORY_ITEM: u16 = 0x2006;

/// The data section under construction. Offsets handed out are absolute file offsets.
struct Data {
    base: usize,
    buf: Vec<u8>,
    map: Vec<MapItem>,
}

impl Data {
    fn offset(&self) -> u32 {
        (self.base + self.buf.len()) as u32
    }

    fn align4(&mut self) {
        while !(self.base + self.buf.len()).is_multiple_of(4) {
            self.buf.push(0);
        }
    }

    fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    /// Records a map entry for a section starting at `start` with `count` items.
    fn section(&mut self, item_type: u16, start: u32, count: usize) {
        if count > 0 {
            self.map.push(MapItem {
                item_type,
                size: count as u32,
                offset: start,
            });
        }
    }
}

fn code_key(class: usize, list: usize, method: usize) -> (usize, usize, usize) {
    (class, list, method)
}

/// Serializes a validated `DexFile` with fixed checksums.
///
/// Sections are emitted in a fixed order (header, id pools, class_defs,
/// then the data section ending with the map list), so output depends only
/// on the model.
pub fn write_dex(dex: &DexFile) -> Result<Vec<u8>> {
    dex.validate()?;

    let n_strings = dex.strings.len();
    let n_types = dex.type_ids.len();
    let n_protos = dex.proto_ids.len();
    let n_fields = dex.field_ids.len();
    let n_methods = dex.method_ids.len();
    let n_classes = dex.class_defs.len();

    let string_ids_off = HEADER_SIZE;
    let type_ids_off = string_ids_off + 4 * n_strings;
    let proto_ids_off = type_ids_off + 4 * n_types;
    let field_ids_off = proto_ids_off + 12 * n_protos;
    let method_ids_off = field_ids_off + 8 * n_fields;
    let class_defs_off = method_ids_off + 8 * n_methods;
    let data_off = class_defs_off + 32 * n_classes;

    let mut data = Data {
        base: data_off,
        buf: Vec::new(),
        map: Vec::new(),
    };

    // string_data_item
    let start = data.offset();
    let mut string_offsets = Vec::with_capacity(n_strings);
    for s in &dex.strings {
        string_offsets.push(data.offset());
        push_uleb128(&mut data.buf, utf16_len(s) as u32);
        data.buf.extend_from_slice(&encode_mutf8(s));
        data.buf.push(0);
    }
    data.section(TYPE_STRING_DATA_ITEM, start, n_strings);

    // type_list, shared between protos and interfaces
    data.align4();
    let start = data.offset();
    let mut type_lists: HashMap<&[TypeIdx], u32> = HashMap::new();
    let lists = dex
        .proto_ids
        .iter()
        .map(|p| p.parameters.as_slice())
        .chain(dex.class_defs.iter().map(|c| c.interfaces.as_slice()));
    for list in lists {
        if list.is_empty() || type_lists.contains_key(list) {
            continue;
        }
        data.align4();
        type_lists.insert(list, data.offset());
        data.u32(list.len() as u32);
        for t in list {
            data.u16(t.0 as u16);
        }
    }
    data.section(TYPE_TYPE_LIST, start, type_lists.len());
    let type_list_off = |list: &[TypeIdx]| if list.is_empty() { 0 } else { type_lists[list] };

    // annotation_item
    let start = data.offset();
    let mut annotation_items: HashMap<(u8, &[u8]), u32> = HashMap::new();
    let all_sets: Vec<&AnnotationSet> = dex
        .class_defs
        .iter()
        .filter_map(|c| c.annotations.as_ref())
        .flat_map(|d| {
            d.class_annotations
                .iter()
                .chain(d.fields.iter().map(|(_, s)| s))
                .chain(d.methods.iter().map(|(_, s)| s))
                .chain(d.parameters.iter().flat_map(|(_, sets)| sets.iter().flatten()))
        })
        .collect();
    for set in &all_sets {
        for a in set.iter() {
            let key = (a.visibility, a.encoded.as_slice());
            if let Entry::Vacant(e) = annotation_items.entry(key) {
                e.insert(data.offset());
                data.buf.push(a.visibility);
                data.buf.extend_from_slice(&a.encoded);
            }
        }
    }
    data.section(TYPE_ANNOTATION_ITEM, start, annotation_items.len());

    // annotation_set_item
    data.align4();
    let start = data.offset();
    let mut annotation_sets: HashMap<Vec<u32>, u32> = HashMap::new();
    for set in &all_sets {
        let entries: Vec<u32> = set
            .iter()
            .map(|a| annotation_items[&(a.visibility, a.encoded.as_slice())])
            .collect();
        if !annotation_sets.contains_key(&entries) {
            annotation_sets.insert(entries.clone(), data.offset());
            data.u32(entries.len() as u32);
            for e in entries {
                data.u32(e);
            }
        }
    }
    data.section(TYPE_ANNOTATION_SET_ITEM, start, annotation_sets.len());
    let set_off = |set: &AnnotationSet| -> u32 {
        let entries: Vec<u32> = set
            .iter()
            .map(|a| annotation_items[&(a.visibility, a.encoded.as_slice())])
            .collect();
        annotation_sets[&entries]
    };

    // annotation_set_ref_list
    let start = data.offset();
    let mut ref_lists: HashMap<(usize, usize), u32> = HashMap::new();
    for (ci, class) in dex.class_defs.iter().enumerate() {
        if let Some(dir) = &class.annotations {
            for (pi, (_, sets)) in dir.parameters.iter().enumerate() {
                ref_lists.insert((ci, pi), data.offset());
                data.u32(sets.len() as u32);
                for s in sets {
                    let off = s.as_ref().map_or(0, &set_off);
                    data.u32(off);
                }
            }
        }
    }
    data.section(TYPE_ANNOTATION_SET_REF_LIST, start, ref_lists.len());

    // annotations_directory_item
    let start = data.offset();
    let mut directories = vec![0u32; n_classes];
    let mut n_directories = 0;
    for (ci, class) in dex.class_defs.iter().enumerate() {
        let Some(dir) = &class.annotations else { continue };
        directories[ci] = data.offset();
        n_directories += 1;
        data.u32(dir.class_annotations.as_ref().map_or(0, &set_off));
        data.u32(dir.fields.len() as u32);
        data.u32(dir.methods.len() as u32);
        data.u32(dir.parameters.len() as u32);
        for (f, set) in &dir.fields {
            data.u32(f.0);
            data.u32(set_off(set));
        }
        for (m, set) in &dir.methods {
            data.u32(m.0);
            data.u32(set_off(set));
        }
        for (pi, (m, _)) in dir.parameters.iter().enumerate() {
            data.u32(m.0);
            data.u32(ref_lists[&(ci, pi)]);
        }
    }
    data.section(TYPE_ANNOTATIONS_DIRECTORY_ITEM, start, n_directories);

    // encoded_array_item
    let start = data.offset();
    let mut arrays: HashMap<&[u8], u32> = HashMap::new();
    for class in &dex.class_defs {
        if let Some(values) = &class.static_values {
            if !arrays.contains_key(values.0.as_slice()) {
                arrays.insert(&values.0, data.offset());
                data.buf.extend_from_slice(&values.0);
            }
        }
    }
    data.section(TYPE_ENCODED_ARRAY_ITEM, start, arrays.len());

    // debug_info_item
    let start = data.offset();
    let mut debug_offsets = HashMap::new();
    for (ci, class) in dex.class_defs.iter().enumerate() {
        for (li, list) in method_lists(class).into_iter().enumerate() {
            for (mi, m) in list.iter().enumerate() {
                if let Some(debug) = m.code.as_ref().and_then(|c| c.debug_info.as_ref()) {
                    debug_offsets.insert(code_key(ci, li, mi), data.offset());
                    data.buf.extend_from_slice(debug);
                }
            }
        }
    }
    data.section(TYPE_DEBUG_INFO_ITEM, start, debug_offsets.len());

    // code_item
    data.align4();
    let start = data.offset();
    let mut code_offsets = HashMap::new();
    for (ci, class) in dex.class_defs.iter().enumerate() {
        for (li, list) in method_lists(class).into_iter().enumerate() {
            for (mi, m) in list.iter().enumerate() {
                if let Some(code) = &m.code {
                    data.align4();
                    let key = code_key(ci, li, mi);
                    code_offsets.insert(key, data.offset());
                    let debug_off = debug_offsets.get(&key).copied().unwrap_or(0);
                    write_code_item(&mut data, code, debug_off)?;
                }
            }
        }
    }
    data.section(TYPE_CODE_ITEM, start, code_offsets.len());

    // class_data_item
    let start = data.offset();
    let mut class_data_offsets = vec![0u32; n_classes];
    let mut n_class_data = 0;
    for (ci, class) in dex.class_defs.iter().enumerate() {
        let Some(cd) = &class.class_data else { continue };
        class_data_offsets[ci] = data.offset();
        n_class_data += 1;
        let out = &mut data.buf;
        push_uleb128(out, cd.static_fields.len() as u32);
        push_uleb128(out, cd.instance_fields.len() as u32);
        push_uleb128(out, cd.direct_methods.len() as u32);
        push_uleb128(out, cd.virtual_methods.len() as u32);
        for list in [&cd.static_fields, &cd.instance_fields] {
            let mut prev = 0;
            for f in list {
                push_uleb128(out, f.field_idx.0 - prev);
                push_uleb128(out, f.access_flags);
                prev = f.field_idx.0;
            }
        }
        for (li, list) in [&cd.direct_methods, &cd.virtual_methods].into_iter().enumerate() {
            let mut prev = 0;
            for (mi, m) in list.iter().enumerate() {
                push_uleb128(out, m.method_idx.0 - prev);
                push_uleb128(out, m.access_flags);
                push_uleb128(out, code_offsets.get(&code_key(ci, li, mi)).copied().unwrap_or(0));
                prev = m.method_idx.0;
            }
        }
    }
    data.section(TYPE_CLASS_DATA_ITEM, start, n_class_data);

    // map_list
    data.align4();
    let map_off = data.offset();
    let mut map = vec![MapItem {
        item_type: TYPE_HEADER_ITEM,
        size: 1,
        offset: 0,
    }];
    for (item_type, count, off) in [
        (TYPE_STRING_ID_ITEM, n_strings, string_ids_off),
        (TYPE_TYPE_ID_ITEM, n_types, type_ids_off),
        (TYPE_PROTO_ID_ITEM, n_protos, proto_ids_off),
        (TYPE_FIELD_ID_ITEM, n_fields, field_ids_off),
        (TYPE_METHOD_ID_ITEM, n_methods, method_ids_off),
        (TYPE_CLASS_DEF_ITEM, n_classes, class_defs_off),
    ] {
        if count > 0 {
            map.push(MapItem {
                item_type,
                size: count as u32,
                offset: off as u32,
            });
        }
    }
    map.append(&mut data.map);
    map.push(MapItem {
        item_type: TYPE_MAP_LIST,
        size: 1,
        offset: map_off,
    });
    data.u32(map.len() as u32);
    for item in &map {
        data.u16(item.item_type);
        data.u16(0);
        data.u32(item.size);
        data.u32(item.offset);
    }
    data.align4();

    let file_size = data_off + data.buf.len();
    let mut out = Vec::with_capacity(file_size);
    let off_or_zero = |count: usize, off: usize| if count == 0 { 0 } else { off as u32 };
    let header_fields: [u32; 20] = [
        file_size as u32,
        HEADER_SIZE as u32,
        ENDIAN_CONSTANT,
        0,
        0,
        map_off,
        n_strings as u32,
        off_or_zero(n_strings, string_ids_off),
        n_types as u32,
        off_or_zero(n_types, type_ids_off),
        n_protos as u32,
        off_or_zero(n_protos, proto_ids_off),
        n_fields as u32,
        off_or_zero(n_fields, field_ids_off),
        n_methods as u32,
        off_or_zero(n_methods, method_ids_off),
        n_classes as u32,
        off_or_zero(n_classes, class_defs_off),
        data.buf.len() as u32,
        data_off as u32,
    ];
    out.extend_from_slice(b"dex\n035\0");
    out.extend_from_slice(&[0u8; 24]); // checksum + signature, filled below
    for v in &header_fields {
        out.extend_from_slice(&v.to_le_bytes());
    }
    debug_assert_eq!(out.len(), HEADER_SIZE);

    let mut put32 = |v: u32| out.extend_from_slice(&v.to_le_bytes());
    for off in &string_offsets {
        put32(*off);
    }
    for t in &dex.type_ids {
        put32(t.descriptor_idx.0);
    }
    for p in &dex.proto_ids {
        put32(p.shorty_idx.0);
        put32(p.return_type_idx.0);
        put32(type_list_off(&p.parameters));
    }
    for f in &dex.field_ids {
        out.extend_from_slice(&(f.class_idx.0 as u16).to_le_bytes());
        out.extend_from_slice(&(f.type_idx.0 as u16).to_le_bytes());
        out.extend_from_slice(&f.name_idx.0.to_le_bytes());
    }
    for m in &dex.method_ids {
        out.extend_from_slice(&(m.class_idx.0 as u16).to_le_bytes());
        out.extend_from_slice(&(m.proto_idx.0 as u16).to_le_bytes());
        out.extend_from_slice(&m.name_idx.0.to_le_bytes());
    }
    for (ci, c) in dex.class_defs.iter().enumerate() {
        let static_values_off = c.static_values.as_ref().map_or(0, |v| arrays[v.0.as_slice()]);
        for v in [
            c.class_idx.0,
            c.access_flags,
            c.superclass.map_or(NO_INDEX, |t| t.0),
            type_list_off(&c.interfaces),
            c.source_file.map_or(NO_INDEX, |s| s.0),
            directories[ci],
            class_data_offsets[ci],
            static_values_off,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    debug_assert_eq!(out.len(), data_off);
    out.extend_from_slice(&data.buf);
    fix_checksums(&mut out)?;
    Ok(out)
}

fn method_lists(class: &ClassDef) -> [&[EncodedMethod]; 2] {
    match &class.class_data {
        Some(cd) => [&cd.direct_methods, &cd.virtual_methods],
        None => [&[], &[]],
    }
}

fn write_code_item(data: &mut Data, code: &CodeItem, debug_off: u32) -> Result<()> {
    let tries_size = u16::try_from(code.tries.len())
        .map_err(|_| DexError::Invalid(format!("{} try blocks exceed 65535", code.tries.len())))?;
    data.u16(code.registers_size);
    data.u16(code.ins_size);
    data.u16(code.outs_size);
    data.u16(tries_size);
    data.u32(debug_off);
    data.u32(code.insns.len() as u32);
    for &u in &code.insns {
        data.u16(u);
    }
    if code.tries.is_empty() {
        return Ok(());
    }
    if code.insns.len() % 2 == 1 {
        data.u16(0);
    }

    let mut list = Vec::new();
    push_uleb128(&mut list, code.handlers.len() as u32);
    let mut handler_offsets = Vec::with_capacity(code.handlers.len());
    for h in &code.handlers {
        handler_offsets.push(list.len());
        let n = h.catches.len() as i32;
        push_sleb128(&mut list, if h.catch_all.is_some() { -n } else { n });
        for &(ty, addr) in &h.catches {
            push_uleb128(&mut list, ty.0);
            push_uleb128(&mut list, addr);
        }
        if let Some(addr) = h.catch_all {
            push_uleb128(&mut list, addr);
        }
    }
    for t in &code.tries {
        let handler_off = u16::try_from(handler_offsets[t.handler])
            .map_err(|_| DexError::Invalid("catch handler list exceeds 64 KiB".into()))?;
        data.u32(t.start_addr);
        data.u16(t.insn_count);
        data.u16(handler_off);
    }
    data.buf.extend_from_slice(&list);
    Ok(())
}
