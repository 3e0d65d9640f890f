use std::fmt;

use thiserror::Error;

/// The id pools and tables of a dex file, used to name the pool an index points into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pool {
    Strings,
    Types,
    Protos,
    Fields,
    Methods,
    ClassDefs,
}

impl fmt::Display for Pool {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Pool::Strings => "string_ids",
            Pool::Types => "type_ids",
            Pool::Protos => "proto_ids",
            Pool::Fields => "field_ids",
            Pool::Methods => "method_ids",
            Pool::ClassDefs => "class_defs",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DexError {
    #[error("truncated {what} at offset {offset:#x}")]
    Truncated { offset: usize, what: &'static str },

    #[error("bad magic {found:02x?} at offset 0x0")]
    BadMagic { found: [u8; 8] },

    #[error("unsupported dex version {version:?} at offset 0x4 (only 035 is accepted)")]
    UnsupportedVersion { version: String },

    #[error("bad endian tag {value:#010x} at offset 0x28")]
    BadEndianTag { value: u32 },

    #[error("bad header size {value:#x} at offset 0x24")]
    BadHeaderSize { value: u32 },

    #[error("file_size {declared} at offset 0x20 does not match buffer length {actual}")]
    FileSizeMismatch { declared: u32, actual: usize },

    #[error("checksum mismatch at offset 0x8: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },

    #[error("SHA-1 signature mismatch at offset 0xc")]
    SignatureMismatch,

    #[error("{pool} index {index} out of range (size {size}){}", at(*.offset))]
    IndexOutOfRange {
        pool: Pool,
        index: u32,
        size: usize,
        offset: Option<usize>,
    },

    #[error("malformed uleb128 at offset {offset:#x}")]
    MalformedLeb128 { offset: usize },

    #[error("malformed string data at offset {offset:#x}: {reason}")]
    MalformedString { offset: usize, reason: &'static str },

    #[error("malformed encoded value at offset {offset:#x}: {reason}")]
    MalformedEncodedValue { offset: usize, reason: String },

    #[error("malformed code at code unit {unit:#x}: {reason}")]
    MalformedCode { unit: usize, reason: String },

    #[error("malformed {what} at offset {offset:#x}: {reason}")]
    Malformed {
        what: &'static str,
        offset: usize,
        reason: String,
    },

    #[error("invalid descriptor {descriptor:?}: {reason}")]
    InvalidDescriptor { descriptor: String, reason: String },

    #[error("{pool} not sorted or not unique at index {index}")]
    Unsorted { pool: Pool, index: usize },

    #[error("validation failed: {0}")]
    Invalid(String),

    #[error("{pool} would hold {count} entries, limit is {limit}")]
    Capacity {
        pool: Pool,
        count: usize,
        limit: usize,
    },

    #[error("class {0} is already defined in this dex")]
    ClassAlreadyDefined(String),

    #[error("unsupported: {0}")]
    Unsupported(String),
}

fn at(offset: Option<usize>) -> String {
    match offset {
        Some(o) => format!(" at offset {o:#x}"),
        None => String::new(),
    }
}

impl DexError {
    /// Byte offset (or code-unit offset for code errors) the diagnostic refers to, when known.
    pub fn offset(&self) -> Option<usize> {
        match self {
            DexError::Truncated { offset, .. }
            | DexError::MalformedLeb128 { offset }
            | DexError::MalformedString { offset, .. }
            | DexError::MalformedEncodedValue { offset, .. }
            | DexError::Malformed { offset, .. } => Some(*offset),
            DexError::MalformedCode { unit, .. } => Some(*unit),
            DexError::BadMagic { .. } => Some(0),
            DexError::UnsupportedVersion { .. } => Some(4),
            DexError::ChecksumMismatch { .. } => Some(8),
            DexError::SignatureMismatch => Some(12),
            DexError::FileSizeMismatch { .. } => Some(0x20),
            DexError::BadHeaderSize { .. } => Some(0x24),
            DexError::BadEndianTag { .. } => Some(0x28),
            DexError::IndexOutOfRange { offset, .. } => *offset,
            _ => None,
        }
    }
}

pub type Result<T, E = DexError> = std::result::Result<T, E>;
