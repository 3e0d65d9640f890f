//! Byte-level reading and writing of dex files.

pub mod checksum;
pub mod encoded;
pub mod leb128;
pub mod mutf8;
mod reader;
pub mod writer;

pub use checksum::{adler32, fix_checksums, verify_checksums};
pub use leb128::{read_sleb128, read_uleb128, read_uleb128p1, write_uleb128};
pub use mutf8::{decode_mutf8, encode_mutf8};
pub use reader::{parse_dex, parse_header, read_header_fields, DEX_VERSION, ENDIAN_CONSTANT};
pub use writer::write_dex;
