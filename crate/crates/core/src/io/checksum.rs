//! Header integrity fields: SHA-1 signature and Adler-32 checksum.

use sha1::{Digest, Sha1};

use crate::error::{DexError, Result};

pub const CHECKSUM_OFFSET: usize = 8;
pub const SIGNATURE_OFFSET: usize = 12;
/// First byte covered by the signature.
pub const SIGNATURE_END: usize = 32;
pub const HEADER_SIZE: usize = 0x70;

pub fn adler32(bytes: &[u8]) -> u32 {
    adler::adler32_slice(bytes)
}

pub fn sha1(bytes: &[u8]) -> [u8; 20] {
    Sha1::digest(bytes).into()
}

/// Recomputes the signature over bytes[32..], then the checksum over bytes[12..].
///
/// The checksum covers the signature, so the order is fixed.
pub fn fix_checksums(bytes: &mut [u8]) -> Result<()> {
    if bytes.len() < HEADER_SIZE {
        return Err(DexError::Truncated {
            offset: bytes.len(),
            what: "header",
        });
    }
    let signature = sha1(&bytes[SIGNATURE_END..]);
    bytes[SIGNATURE_OFFSET..SIGNATURE_END].copy_from_slice(&signature);
    let checksum = adler32(&bytes[SIGNATURE_OFFSET..]);
    bytes[CHECKSUM_OFFSET..SIGNATURE_OFFSET].copy_from_slice(&checksum.to_le_bytes());
    Ok(())
}

/// Checks both header integrity fields of a complete file.
pub fn verify_checksums(bytes: &[u8]) -> Result<()> {
    if bytes.len() < HEADER_SIZE {
        return Err(DexError::Truncated {
            offset: bytes.len(),
            what: "header",
        });
    }
    let stored = u32::from_le_bytes(bytes[CHECKSUM_OFFSET..SIGNATURE_OFFSET].try_into().unwrap());
    let computed = adler32(&bytes[SIGNATURE_OFFSET..]);
    if stored != computed {
        return Err(DexError::ChecksumMismatch { stored, computed });
    }
    if bytes[SIGNATURE_OFFSET..SIGNATURE_END] != sha1(&bytes[SIGNATURE_END..]) {
        return Err(DexError::SignatureMismatch);
    }
    Ok(())
}
