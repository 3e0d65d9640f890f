//! APK (zip) reading, `classes.dex` substitution and repacking.
//!
//! Only what APK repacking needs is supported: stored and deflated entries,
//! single-disk archives, no Zip64, no encryption. Entries other than the
//! replaced dex are copied with their original compressed bytes.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::DeflateDecoder;
use flate2::write::DeflateEncoder;
use flate2::Compression;
use thiserror::Error;

use crate::blacklist::Blacklist;
use crate::error::DexError;
use crate::io::{parse_dex, write_dex};
use crate::patcher::{patch_dex, PatchReport};

pub const CLASSES_DEX: &str = "classes.dex";
pub const META_INF: &str = "META-INF/";

pub const METHOD_STORED: u16 = 0;
pub const METHOD_DEFLATED: u16 = 8;

const LOCAL_HEADER_SIG: u32 = 0x0403_4b50;
const CENTRAL_HEADER_SIG: u32 = 0x0201_4b50;
const EOCD_SIG: u32 = 0x0605_4b50;
const ZIP64_LOCATOR_SIG: u32 = 0x0706_4b50;
const EOCD_LEN: usize = 22;
const MAX_COMMENT: usize = 0xffff;
const FLAG_ENCRYPTED: u16 = 0x0001;
const FLAG_DATA_DESCRIPTOR: u16 = 0x0008;
const FLAG_UTF8: u16 = 0x0800;

#[derive(Debug, Error)]
pub enum ApkError {
    #[error("not a zip archive: {0}")]
    NotZip(String),
    #[error("Zip64 archives are not supported")]
    Zip64,
    #[error("{path}: {reason}")]
    Corrupt { path: String, reason: String },
    #[error("{path}: CRC mismatch (stored {stored:#010x}, computed {computed:#010x})")]
    CrcMismatch { path: String, stored: u32, computed: u32 },
    #[error("{path}: unsupported {what}")]
    Unsupported { path: String, what: String },
    #[error("duplicate entry {0}")]
    DuplicateEntry(String),
    #[error("archive has no classes.dex")]
    MissingClassesDex,
    #[error("multidex archives are not supported (found {})", .0.join(", "))]
    Multidex(Vec<String>),
    #[error("archive too large to write without Zip64")]
    TooLarge,
    #[error(transparent)]
    Dex(#[from] DexError),
}

pub type Result<T, E = ApkError> = std::result::Result<T, E>;

/// One archive member.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApkEntry {
    pub name: String,
    pub method: u16,
    pub crc32: u32,
    pub mod_time: u16,
    pub mod_date: u16,
    /// Member bytes as stored in the archive.
    pub raw: Vec<u8>,
    /// Uncompressed member bytes.
    pub data: Vec<u8>,
}

impl ApkEntry {
    pub fn stored(name: impl Into<String>, data: Vec<u8>) -> Self {
        ApkEntry {
            name: name.into(),
            method: METHOD_STORED,
            crc32: crc32fast::hash(&data),
            mod_time: 0,
            mod_date: 0x21,
            raw: data.clone(),
            data,
        }
    }

    pub fn deflated(name: impl Into<String>, data: Vec<u8>) -> Self {
        let mut enc = DeflateEncoder::new(Vec::new(), Compression::default());
        enc.write_all(&data).expect("writing to a Vec cannot fail");
        let raw = enc.finish().expect("writing to a Vec cannot fail");
        ApkEntry {
            name: name.into(),
            method: METHOD_DEFLATED,
            crc32: crc32fast::hash(&data),
            mod_time: 0,
            mod_date: 0x21,
            raw,
            data,
        }
    }

    pub fn is_meta_inf(&self) -> bool {
        self.name.starts_with(META_INF)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ApkArchive {
    pub entries: Vec<ApkEntry>,
    pub source: Option<PathBuf>,
}

impl ApkArchive {
    pub fn new(entries: Vec<ApkEntry>) -> Self {
        ApkArchive { entries, source: None }
    }

    pub fn entry(&self, name: &str) -> Option<&ApkEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    /// Root-level `classes*.dex` entries, in archive order.
    pub fn dex_entries(&self) -> Vec<&str> {
        self.entries
            .iter()
            .map(|e| e.name.as_str())
            .filter(|n| {
                n.strip_prefix("classes")
                    .and_then(|r| r.strip_suffix(".dex"))
                    .is_some_and(|mid| mid.chars().all(|c| c.is_ascii_digit()))
            })
            .collect()
    }

    /// The single `classes.dex`, rejecting multidex archives.
    pub fn classes_dex(&self) -> Result<&[u8]> {
        let dex = self.dex_entries();
        if dex.len() > 1 {
            return Err(ApkError::Multidex(dex.into_iter().map(str::to_owned).collect()));
        }
        self.entry(CLASSES_DEX).map(|e| e.data.as_slice()).ok_or(ApkError::MissingClassesDex)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        write_zip(&self.entries)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'a str,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8], pos: usize, what: &'a str) -> Self {
        Cursor { bytes, pos, what }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(ApkError::Corrupt {
                path: self.what.to_owned(),
                reason: format!("truncated at offset {}", self.pos),
            });
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

fn find_eocd(bytes: &[u8]) -> Result<usize> {
    if bytes.len() < EOCD_LEN {
        return Err(ApkError::NotZip("shorter than an end-of-central-directory record".into()));
    }
    let lowest = bytes.len().saturating_sub(EOCD_LEN + MAX_COMMENT);
    (lowest..=bytes.len() - EOCD_LEN)
        .rev()
        .find(|&i| {
            bytes[i..i + 4] == EOCD_SIG.to_le_bytes()
                && i + EOCD_LEN + usize::from(u16::from_le_bytes([bytes[i + 20], bytes[i + 21]])) == bytes.len()
        })
        .ok_or_else(|| ApkError::NotZip("no end-of-central-directory record".into()))
}

/// Reads every central directory entry and verifies its CRC.
pub fn open_apk(bytes: &[u8]) -> Result<ApkArchive> {
    let eocd = find_eocd(bytes)?;
    if eocd >= 20 && bytes[eocd - 20..eocd - 16] == ZIP64_LOCATOR_SIG.to_le_bytes() {
        return Err(ApkError::Zip64);
    }
    let mut c = Cursor::new(bytes, eocd + 4, "end of central directory");
    let disk = c.u16()?;
    let cd_disk = c.u16()?;
    let disk_entries = c.u16()?;
    let total_entries = c.u16()?;
    let cd_size = c.u32()?;
    let cd_offset = c.u32()?;
    if total_entries == 0xffff || cd_size == 0xffff_ffff || cd_offset == 0xffff_ffff {
        return Err(ApkError::Zip64);
    }
    if disk != 0 || cd_disk != 0 || disk_entries != total_entries {
        return Err(ApkError::Unsupported {
            path: "archive".into(),
            what: "multi-disk layout".into(),
        });
    }

    let mut entries = Vec::with_capacity(usize::from(total_entries));
    let mut names = HashSet::new();
    let mut c = Cursor::new(bytes, cd_offset as usize, "central directory");
    for _ in 0..total_entries {
        if c.u32()? != CENTRAL_HEADER_SIG {
            return Err(ApkError::Corrupt {
                path: "central directory".into(),
                reason: format!("bad entry signature at offset {}", c.pos - 4),
            });
        }
        let _made_by = c.u16()?;
        let _needed = c.u16()?;
        let flags = c.u16()?;
        let method = c.u16()?;
        let mod_time = c.u16()?;
        let mod_date = c.u16()?;
        let crc32 = c.u32()?;
        let compressed = c.u32()?;
        let uncompressed = c.u32()?;
        let name_len = usize::from(c.u16()?);
        let extra_len = usize::from(c.u16()?);
        let comment_len = usize::from(c.u16()?);
        let _disk_start = c.u16()?;
        let _internal = c.u16()?;
        let _external = c.u32()?;
        let local_offset = c.u32()?;
        let name = String::from_utf8_lossy(c.take(name_len)?).into_owned();
        c.take(extra_len + comment_len)?;

        if compressed == 0xffff_ffff || uncompressed == 0xffff_ffff || local_offset == 0xffff_ffff {
            return Err(ApkError::Zip64);
        }
        if flags & FLAG_ENCRYPTED != 0 {
            return Err(ApkError::Unsupported {
                path: name,
                what: "encryption".into(),
            });
        }
        if !names.insert(name.clone()) {
            return Err(ApkError::DuplicateEntry(name));
        }

        let mut l = Cursor::new(bytes, local_offset as usize, &name);
        if l.u32()? != LOCAL_HEADER_SIG {
            return Err(ApkError::Corrupt {
                path: name.clone(),
                reason: "bad local header signature".into(),
            });
        }
        l.take(22)?;
        let local_name_len = usize::from(l.u16()?);
        let local_extra_len = usize::from(l.u16()?);
        l.take(local_name_len + local_extra_len)?;
        let raw = l.take(compressed as usize)?.to_vec();

        let data = match method {
            METHOD_STORED => raw.clone(),
            METHOD_DEFLATED => {
                let mut out = Vec::with_capacity(uncompressed as usize);
                DeflateDecoder::new(raw.as_slice())
                    .read_to_end(&mut out)
                    .map_err(|e| ApkError::Corrupt {
                        path: name.clone(),
                        reason: format!("bad deflate stream: {e}"),
                    })?;
                out
            }
            other => {
                return Err(ApkError::Unsupported {
                    path: name,
                    what: format!("compression method {other}"),
                })
            }
        };
        if data.len() != uncompressed as usize {
            return Err(ApkError::Corrupt {
                path: name,
                reason: format!("size {} does not match declared {}", data.len(), uncompressed),
            });
        }
        let computed = crc32fast::hash(&data);
        if computed != crc32 {
            return Err(ApkError::CrcMismatch {
                path: name,
                stored: crc32,
                computed,
            });
        }
        entries.push(ApkEntry {
            name,
            method,
            crc32,
            mod_time,
            mod_date,
            raw,
            data,
        });
    }
    Ok(ApkArchive { entries, source: None })
}

pub fn open_apk_file(path: &Path) -> std::io::Result<Result<ApkArchive>> {
    let bytes = std::fs::read(path)?;
    Ok(open_apk(&bytes).map(|mut a| {
        a.source = Some(path.to_owned());
        a
    }))
}

/// Serializes entries as a zip archive with sizes in the local headers.
pub fn write_zip(entries: &[ApkEntry]) -> Result<Vec<u8>> {
    if entries.len() >= 0xffff {
        return Err(ApkError::TooLarge);
    }
    let mut out = Vec::new();
    let mut central = Vec::new();
    for e in entries {
        let offset = u32::try_from(out.len()).map_err(|_| ApkError::TooLarge)?;
        let compressed = u32::try_from(e.raw.len()).map_err(|_| ApkError::TooLarge)?;
        let uncompressed = u32::try_from(e.data.len()).map_err(|_| ApkError::TooLarge)?;
        let name = e.name.as_bytes();
        let flags = if e.name.is_ascii() { 0 } else { FLAG_UTF8 };
        let needed: u16 = if e.method == METHOD_STORED { 10 } else { 20 };

        let mut common = Vec::with_capacity(26);
        common.extend_from_slice(&needed.to_le_bytes());
        common.extend_from_slice(&(flags & !FLAG_DATA_DESCRIPTOR).to_le_bytes());
        common.extend_from_slice(&e.method.to_le_bytes());
        common.extend_from_slice(&e.mod_time.to_le_bytes());
        common.extend_from_slice(&e.mod_date.to_le_bytes());
        common.extend_from_slice(&e.crc32.to_le_bytes());
        common.extend_from_slice(&compressed.to_le_bytes());
        common.extend_from_slice(&uncompressed.to_le_bytes());
        common.extend_from_slice(&(name.len() as u16).to_le_bytes());
        common.extend_from_slice(&0u16.to_le_bytes());

        out.extend_from_slice(&LOCAL_HEADER_SIG.to_le_bytes());
        out.extend_from_slice(&common);
        out.extend_from_slice(name);
        out.extend_from_slice(&e.raw);

        central.extend_from_slice(&CENTRAL_HEADER_SIG.to_le_bytes());
        central.extend_from_slice(&20u16.to_le_bytes());
        central.extend_from_slice(&common);
        central.extend_from_slice(&0u16.to_le_bytes());
        central.extend_from_slice(&0u16.to_le_bytes());
        central.extend_from_slice(&0u16.to_le_bytes());
        central.extend_from_slice(&0u32.to_le_bytes());
        central.extend_from_slice(&offset.to_le_bytes());
        central.extend_from_slice(name);
    }
    let cd_offset = u32::try_from(out.len()).map_err(|_| ApkError::TooLarge)?;
    let cd_size = u32::try_from(central.len()).map_err(|_| ApkError::TooLarge)?;
    out.extend_from_slice(&central);
    out.extend_from_slice(&EOCD_SIG.to_le_bytes());
    out.extend_from_slice(&[0; 4]);
    out.extend_from_slice(&(entries.len() as u16).to_le_bytes());
    out.extend_from_slice(&(entries.len() as u16).to_le_bytes());
    out.extend_from_slice(&cd_size.to_le_bytes());
    out.extend_from_slice(&cd_offset.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    Ok(out)
}

/// Replaces `classes.dex` (stored uncompressed) and optionally drops
/// `META-INF/`. Every other entry keeps its bytes, method and position.
pub fn repack(apk: &ApkArchive, new_dex: &[u8], strip_meta: bool) -> Result<Vec<u8>> {
    if apk.entry(CLASSES_DEX).is_none() {
        return Err(ApkError::MissingClassesDex);
    }
    let entries: Vec<ApkEntry> = apk
        .entries
        .iter()
        .filter(|e| !(strip_meta && e.is_meta_inf()))
        .map(|e| {
            if e.name == CLASSES_DEX {
                ApkEntry {
                    mod_time: e.mod_time,
                    mod_date: e.mod_date,
                    ..ApkEntry::stored(CLASSES_DEX, new_dex.to_vec())
                }
            } else {
                e.clone()
            }
        })
        .collect();
    write_zip(&entries)
}

/// Opens an APK, patches its `classes.dex` and repacks it without signatures.
pub fn patch_apk(bytes: &[u8], blacklist: &Blacklist, stub_class: Option<&str>) -> Result<(Vec<u8>, PatchReport)> {
    let apk = open_apk(bytes)?;
    let dex = parse_dex(apk.classes_dex()?)?;
    let (patched, report) = patch_dex(&dex, blacklist, stub_class)?;
    let new_dex = write_dex(&patched)?;
    Ok((repack(&apk, &new_dex, true)?, report))
}
