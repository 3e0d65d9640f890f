//! In-memory representation of a dex file.
//!
//! Every cross reference is an index newtype into one of the id pools.
//! Optional references (`superclass`, `source_file`) are `Option`s; the
//! on-disk `NO_INDEX` sentinel only exists in the reader and writer.

pub mod descriptor;
mod validate;

use std::fmt;

use crate::error::{DexError, Pool, Result};

pub use descriptor::{DescriptorError, FieldDescriptor, MethodDescriptor, Prototype};

/// On-disk sentinel for an absent index.
pub const NO_INDEX: u32 = 0xffff_ffff;

/// Upper bound on method_ids (and type_ids, proto_ids): instruction operands are 16 bits.
pub const MAX_POOL_16: usize = 1 << 16;

pub const ACC_PUBLIC: u32 = 0x1;
pub const ACC_PRIVATE: u32 = 0x2;
pub const ACC_PROTECTED: u32 = 0x4;
pub const ACC_STATIC: u32 = 0x8;
pub const ACC_FINAL: u32 = 0x10;
pub const ACC_NATIVE: u32 = 0x100;
pub const ACC_INTERFACE: u32 = 0x200;
pub const ACC_ABSTRACT: u32 = 0x400;
pub const ACC_CONSTRUCTOR: u32 = 0x10000;

macro_rules! index_type {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub struct $name(pub u32);

        impl $name {
            pub fn get(self) -> usize {
                self.0 as usize
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

index_type!(
    /// Index into `DexFile::strings`.
    StringIdx
);
index_type!(
    /// Index into `DexFile::type_ids`.
    TypeIdx
);
index_type!(
    /// Index into `DexFile::proto_ids`.
    ProtoIdx
);
index_type!(
    /// Index into `DexFile::field_ids`.
    FieldIdx
);
index_type!(
    /// Index into `DexFile::method_ids`.
    MethodIdx
);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TypeId {
    pub descriptor_idx: StringIdx,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ProtoId {
    pub shorty_idx: StringIdx,
    pub return_type_idx: TypeIdx,
    pub parameters: Vec<TypeIdx>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FieldId {
    pub class_idx: TypeIdx,
    pub type_idx: TypeIdx,
    pub name_idx: StringIdx,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MethodId {
    pub class_idx: TypeIdx,
    pub proto_idx: ProtoIdx,
    pub name_idx: StringIdx,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassDef {
    pub class_idx: TypeIdx,
    pub access_flags: u32,
    pub superclass: Option<TypeIdx>,
    pub interfaces: Vec<TypeIdx>,
    pub source_file: Option<StringIdx>,
    pub annotations: Option<AnnotationsDirectory>,
    pub class_data: Option<ClassData>,
    pub static_values: Option<EncodedArray>,
}

impl ClassDef {
    pub fn new(class_idx: TypeIdx, access_flags: u32, superclass: Option<TypeIdx>) -> Self {
        ClassDef {
            class_idx,
            access_flags,
            superclass,
            interfaces: Vec::new(),
            source_file: None,
            annotations: None,
            class_data: None,
            static_values: None,
        }
    }

    /// Direct methods followed by virtual methods.
    pub fn methods(&self) -> impl Iterator<Item = &EncodedMethod> {
        self.class_data
            .iter()
            .flat_map(|d| d.direct_methods.iter().chain(d.virtual_methods.iter()))
    }

    pub fn methods_mut(&mut self) -> impl Iterator<Item = &mut EncodedMethod> {
        self.class_data
            .iter_mut()
            .flat_map(|d| d.direct_methods.iter_mut().chain(d.virtual_methods.iter_mut()))
    }
}

/// Field and method lists of a class. Indices are stored absolute (the
/// on-disk delta encoding is handled by the reader and writer) and must be
/// strictly increasing within each list.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClassData {
    pub static_fields: Vec<EncodedField>,
    pub instance_fields: Vec<EncodedField>,
    pub direct_methods: Vec<EncodedMethod>,
    pub virtual_methods: Vec<EncodedMethod>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncodedField {
    pub field_idx: FieldIdx,
    pub access_flags: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedMethod {
    pub method_idx: MethodIdx,
    pub access_flags: u32,
    pub code: Option<CodeItem>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CodeItem {
    pub registers_size: u16,
    pub ins_size: u16,
    pub outs_size: u16,
    /// Raw debug_info_item bytes, carried without interpretation.
    pub debug_info: Option<Vec<u8>>,
    pub insns: Vec<u16>,
    pub tries: Vec<TryItem>,
    pub handlers: Vec<CatchHandler>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TryItem {
    pub start_addr: u32,
    pub insn_count: u16,
    /// Index into `CodeItem::handlers`.
    pub handler: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CatchHandler {
    pub catches: Vec<(TypeIdx, u32)>,
    pub catch_all: Option<u32>,
}

/// Raw encoded_array bytes (size prefix included).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedArray(pub Vec<u8>);

/// One annotation_item: visibility byte plus raw encoded_annotation bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Annotation {
    pub visibility: u8,
    pub encoded: Vec<u8>,
}

pub type AnnotationSet = Vec<Annotation>;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AnnotationsDirectory {
    pub class_annotations: Option<AnnotationSet>,
    pub fields: Vec<(FieldIdx, AnnotationSet)>,
    pub methods: Vec<(MethodIdx, AnnotationSet)>,
    pub parameters: Vec<(MethodIdx, Vec<Option<AnnotationSet>>)>,
}

impl AnnotationsDirectory {
    pub fn is_empty(&self) -> bool {
        self.class_annotations.is_none()
            && self.fields.is_empty()
            && self.methods.is_empty()
            && self.parameters.is_empty()
    }
}

/// Header fields of a parsed file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DexHeader {
    pub magic: [u8; 8],
    pub checksum: u32,
    pub signature: [u8; 20],
    pub file_size: u32,
    pub header_size: u32,
    pub endian_tag: u32,
    pub link_size: u32,
    pub link_off: u32,
    pub map_off: u32,
    pub string_ids_size: u32,
    pub string_ids_off: u32,
    pub type_ids_size: u32,
    pub type_ids_off: u32,
    pub proto_ids_size: u32,
    pub proto_ids_off: u32,
    pub field_ids_size: u32,
    pub field_ids_off: u32,
    pub method_ids_size: u32,
    pub method_ids_off: u32,
    pub class_defs_size: u32,
    pub class_defs_off: u32,
    pub data_size: u32,
    pub data_off: u32,
}

impl DexHeader {
    /// The three version digits of the magic, e.g. `"035"`.
    pub fn version(&self) -> String {
        String::from_utf8_lossy(&self.magic[4..7]).into_owned()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MapItem {
    pub item_type: u16,
    pub size: u32,
    pub offset: u32,
}

/// Where a parsed file's sections were. Not part of structural equality.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DexLayout {
    pub header: DexHeader,
    pub map: Vec<MapItem>,
}

/// A fully decoded dex file.
///
/// Equality is structural: two files compare equal when their pools and
/// class definitions are equal, regardless of where the sections sat on disk.
#[derive(Debug, Clone, Default)]
pub struct DexFile {
    pub strings: Vec<String>,
    pub type_ids: Vec<TypeId>,
    pub proto_ids: Vec<ProtoId>,
    pub field_ids: Vec<FieldId>,
    pub method_ids: Vec<MethodId>,
    pub class_defs: Vec<ClassDef>,
    pub layout: Option<DexLayout>,
}

impl PartialEq for DexFile {
    fn eq(&self, other: &Self) -> bool {
        self.strings == other.strings
            && self.type_ids == other.type_ids
            && self.proto_ids == other.proto_ids
            && self.field_ids == other.field_ids
            && self.method_ids == other.method_ids
            && self.class_defs == other.class_defs
    }
}

impl Eq for DexFile {}

fn range_error(pool: Pool, index: u32, size: usize) -> DexError {
    DexError::IndexOutOfRange {
        pool,
        index,
        size,
        offset: None,
    }
}

impl DexFile {
    pub fn string(&self, idx: StringIdx) -> Result<&str> {
        self.strings
            .get(idx.get())
            .map(String::as_str)
            .ok_or_else(|| range_error(Pool::Strings, idx.0, self.strings.len()))
    }

    /// Descriptor of a type id, through the type → string indirection.
    pub fn resolve_type(&self, idx: TypeIdx) -> Result<&str> {
        let id = self
            .type_ids
            .get(idx.get())
            .ok_or_else(|| range_error(Pool::Types, idx.0, self.type_ids.len()))?;
        self.string(id.descriptor_idx)
    }

    pub fn proto_id(&self, idx: ProtoIdx) -> Result<&ProtoId> {
        self.proto_ids
            .get(idx.get())
            .ok_or_else(|| range_error(Pool::Protos, idx.0, self.proto_ids.len()))
    }

    pub fn field_id(&self, idx: FieldIdx) -> Result<&FieldId> {
        self.field_ids
            .get(idx.get())
            .ok_or_else(|| range_error(Pool::Fields, idx.0, self.field_ids.len()))
    }

    pub fn method_id(&self, idx: MethodIdx) -> Result<&MethodId> {
        self.method_ids
            .get(idx.get())
            .ok_or_else(|| range_error(Pool::Methods, idx.0, self.method_ids.len()))
    }

    pub fn prototype(&self, idx: ProtoIdx) -> Result<Prototype> {
        let proto = self.proto_id(idx)?;
        let return_type = self.resolve_type(proto.return_type_idx)?.to_owned();
        let parameters = proto
            .parameters
            .iter()
            .map(|&t| self.resolve_type(t).map(str::to_owned))
            .collect::<Result<Vec<_>>>()?;
        Ok(Prototype {
            return_type,
            parameters,
        })
    }

    /// Walks method id → class, name and prototype into a `MethodDescriptor`.
    pub fn method_id_to_descriptor(&self, idx: MethodIdx) -> Result<MethodDescriptor> {
        let id = self.method_id(idx)?;
        Ok(MethodDescriptor {
            class: self.resolve_type(id.class_idx)?.to_owned(),
            name: self.string(id.name_idx)?.to_owned(),
            prototype: self.prototype(id.proto_idx)?,
        })
    }

    pub fn field_id_to_descriptor(&self, idx: FieldIdx) -> Result<FieldDescriptor> {
        let id = self.field_id(idx)?;
        Ok(FieldDescriptor {
            class: self.resolve_type(id.class_idx)?.to_owned(),
            name: self.string(id.name_idx)?.to_owned(),
            field_type: self.resolve_type(id.type_idx)?.to_owned(),
        })
    }

    /// Position of a string in the sorted pool.
    pub fn find_string(&self, value: &str) -> Option<StringIdx> {
        self.strings
            .binary_search_by(|s| cmp_utf16(s, value))
            .ok()
            .map(|i| StringIdx(i as u32))
    }

    pub fn find_type(&self, descriptor: &str) -> Option<TypeIdx> {
        let sidx = self.find_string(descriptor)?;
        self.type_ids
            .binary_search_by(|t| t.descriptor_idx.cmp(&sidx))
            .ok()
            .map(|i| TypeIdx(i as u32))
    }

    pub fn find_class_def(&self, descriptor: &str) -> Option<&ClassDef> {
        let tidx = self.find_type(descriptor)?;
        self.class_defs.iter().find(|c| c.class_idx == tidx)
    }

    /// Number of code items across all class definitions.
    pub fn code_item_count(&self) -> usize {
        self.class_defs
            .iter()
            .flat_map(ClassDef::methods)
            .filter(|m| m.code.is_some())
            .count()
    }
}

/// Orders strings by UTF-16 code units, the dex string pool order.
pub fn cmp_utf16(a: &str, b: &str) -> std::cmp::Ordering {
    if a.is_ascii() && b.is_ascii() {
        return a.as_bytes().cmp(b.as_bytes());
    }
    a.encode_utf16().cmp(b.encode_utf16())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn utf16_order_differs_from_utf8_for_supplementary() {
        // U+FFFD encodes above U+10000 in UTF-8 order but below it in UTF-16 order.
        let bmp = "\u{FFFD}";
        let supp = "\u{10000}";
        assert!(bmp.as_bytes() < supp.as_bytes());
        assert_eq!(cmp_utf16(bmp, supp), std::cmp::Ordering::Greater);
    }
}
