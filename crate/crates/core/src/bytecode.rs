//! Dalvik instruction decoding for dex version 035.
//!
//! Opcodes 0x3e-0x43, 0x73, 0x79-0x7a and 0xe3-0xff are unused in this
//! version and reject as unknown.

use std::fmt;

use crate::error::{DexError, Result};
use crate::model::MethodIdx;

/// Instruction formats, named after the Dalvik format ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    F10x,
    F12x,
    F11n,
    F11x,
    F10t,
    F20t,
    F22x,
    F21t,
    F21s,
    F21h,
    F21c,
    F23x,
    F22b,
    F22t,
    F22s,
    F22c,
    F32x,
    F30t,
    F31t,
    F31i,
    F31c,
    F35c,
    F3rc,
    F51l,
}

impl Format {
    /// Length in 16-bit code units.
    pub fn units(self) -> usize {
        use Format::*;
        match self {
            F10x | F12x | F11n | F11x | F10t => 1,
            F20t | F22x | F21t | F21s | F21h | F21c | F23x | F22b | F22t | F22s | F22c => 2,
            F32x | F30t | F31t | F31i | F31c | F35c | F3rc => 3,
            F51l => 5,
        }
    }
}

/// Pool an instruction's index operand refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IndexKind {
    String,
    Type,
    Field,
    Method,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OpInfo {
    pub name: &'static str,
    pub format: Format,
    pub index: Option<IndexKind>,
}

const fn op(name: &'static str, format: Format) -> Option<OpInfo> {
    Some(OpInfo {
        name,
        format,
        index: None,
    })
}

const fn op_ref(name: &'static str, format: Format, kind: IndexKind) -> Option<OpInfo> {
    Some(OpInfo {
        name,
        format,
        index: Some(kind),
    })
}

/// Name, format and index kind of an opcode, or `None` when unused in 035.
pub fn op_info(opcode: u8) -> Option<OpInfo> {
    use Format::*;
    use IndexKind::*;
    match opcode {
        0x00 => op("nop", F10x),
        0x01 => op("move", F12x),
        0x02 => op("move/from16", F22x),
        0x03 => op("move/16", F32x),
        0x04 => op("move-wide", F12x),
        0x05 => op("move-wide/from16", F22x),
        0x06 => op("move-wide/16", F32x),
        0x07 => op("move-object", F12x),
        0x08 => op("move-object/from16", F22x),
        0x09 => op("move-object/16", F32x),
        0x0a => op("move-result", F11x),
        0x0b => op("move-result-wide", F11x),
        0x0c => op("move-result-object", F11x),
        0x0d => op("move-exception", F11x),
        0x0e => op("return-void", F10x),
        0x0f => op("return", F11x),
        0x10 => op("return-wide", F11x),
        0x11 => op("return-object", F11x),
        0x12 => op("const/4", F11n),
        0x13 => op("const/16", F21s),
        0x14 => op("const", F31i),
        0x15 => op("const/high16", F21h),
        0x16 => op("const-wide/16", F21s),
        0x17 => op("const-wide/32", F31i),
        0x18 => op("const-wide", F51l),
        0x19 => op("const-wide/high16", F21h),
        0x1a => op_ref("const-string", F21c, String),
        0x1b => op_ref("const-string/jumbo", F31c, String),
        0x1c => op_ref("const-class", F21c, Type),
        0x1d => op("monitor-enter", F11x),
        0x1e => op("monitor-exit", F11x),
        0x1f => op_ref("check-cast", F21c, Type),
        0x20 => op_ref("instance-of", F22c, Type),
        0x21 => op("array-length", F12x),
        0x22 => op_ref("new-instance", F21c, Type),
        0x23 => op_ref("new-array", F22c, Type),
        0x24 => op_ref("filled-new-array", F35c, Type),
        0x25 => op_ref("filled-new-array/range", F3rc, Type),
        0x26 => op("fill-array-data", F31t),
        0x27 => op("throw", F11x),
        0x28 => op("goto", F10t),
        0x29 => op("goto/16", F20t),
        0x2a => op("goto/32", F30t),
        0x2b => op("packed-switch", F31t),
        0x2c => op("sparse-switch", F31t),
        0x2d => op("cmpl-float", F23x),
        0x2e => op("cmpg-float", F23x),
        0x2f => op("cmpl-double", F23x),
        0x30 => op("cmpg-double", F23x),
        0x31 => op("cmp-long", F23x),
        0x32 => op("if-eq", F22t),
        0x33 => op("if-ne", F22t),
        0x34 => op("if-lt", F22t),
        0x35 => op("if-ge", F22t),
        0x36 => op("if-gt", F22t),
        0x37 => op("if-le", F22t),
        0x38 => op("if-eqz", F21t),
        0x39 => op("if-nez", F21t),
        0x3a => op("if-ltz", F21t),
        0x3b => op("if-gez", F21t),
        0x3c => op("if-gtz", F21t),
        0x3d => op("if-lez", F21t),
        0x44 => op("aget", F23x),
        0x45 => op("aget-wide", F23x),
        0x46 => op("aget-object", F23x),
        0x47 => op("aget-boolean", F23x),
        0x48 => op("aget-byte", F23x),
        0x49 => op("aget-char", F23x),
        0x4a => op("aget-short", F23x),
        0x4b => op("aput", F23x),
        0x4c => op("aput-wide", F23x),
        0x4d => op("aput-object", F23x),
        0x4e => op("aput-boolean", F23x),
        0x4f => op("aput-byte", F23x),
        0x50 => op("aput-char", F23x),
        0x51 => op("aput-short", F23x),
        0x52 => op_ref("iget", F22c, Field),
        0x53 => op_ref("iget-wide", F22c, Field),
        0x54 => op_ref("iget-object", F22c, Field),
        0x55 => op_ref("iget-boolean", F22c, Field),
        0x56 => op_ref("iget-byte", F22c, Field),
        0x57 => op_ref("iget-char", F22c, Field),
        0x58 => op_ref("iget-short", F22c, Field),
        0x59 => op_ref("iput", F22c, Field),
        0x5a => op_ref("iput-wide", F22c, Field),
        0x5b => op_ref("iput-object", F22c, Field),
        0x5c => op_ref("iput-boolean", F22c, Field),
        0x5d => op_ref("iput-byte", F22c, Field),
        0x5e => op_ref("iput-char", F22c, Field),
        0x5f => op_ref("iput-short", F22c, Field),
        0x60 => op_ref("sget", F21c, Field),
        0x61 => op_ref("sget-wide", F21c, Field),
        0x62 => op_ref("sget-object", F21c, Field),
        0x63 => op_ref("sget-boolean", F21c, Field),
        0x64 => op_ref("sget-byte", F21c, Field),
        0x65 => op_ref("sget-char", F21c, Field),
        0x66 => op_ref("sget-short", F21c, Field),
        0x67 => op_ref("sput", F21c, Field),
        0x68 => op_ref("sput-wide", F21c, Field),
        0x69 => op_ref("sput-object", F21c, Field),
        0x6a => op_ref("sput-boolean", F21c, Field),
        0x6b => op_ref("sput-byte", F21c, Field),
        0x6c => op_ref("sput-char", F21c, Field),
        0x6d => op_ref("sput-short", F21c, Field),
        0x6e => op_ref("invoke-virtual", F35c, Method),
        0x6f => op_ref("invoke-super", F35c, Method),
        0x70 => op_ref("invoke-direct", F35c, Method),
        0x71 => op_ref("invoke-static", F35c, Method),
        0x72 => op_ref("invoke-interface", F35c, Method),
        0x74 => op_ref("invoke-virtual/range", F3rc, Method),
        0x75 => op_ref("invoke-super/range", F3rc, Method),
        0x76 => op_ref("invoke-direct/range", F3rc, Method),
        0x77 => op_ref("invoke-static/range", F3rc, Method),
        0x78 => op_ref("invoke-interface/range", F3rc, Method),
        0x7b..=0x8f => op(UNOP_NAMES[(opcode - 0x7b) as usize], F12x),
        0x90..=0xaf => op(BINOP_NAMES[(opcode - 0x90) as usize], F23x),
        0xb0..=0xcf => op(BINOP_2ADDR_NAMES[(opcode - 0xb0) as usize], F12x),
        0xd0..=0xd7 => op(LIT16_NAMES[(opcode - 0xd0) as usize], F22s),
        0xd8..=0xe2 => op(LIT8_NAMES[(opcode - 0xd8) as usize], F22b),
        _ => None,
    }
}

const UNOP_NAMES: [&str; 21] = [
    "neg-int", "not-int", "neg-long", "not-long", "neg-float", "neg-double", "int-to-long",
    "int-to-float", "int-to-double", "long-to-int", "long-to-float", "long-to-double",
    "float-to-int", "float-to-long", "float-to-double", "double-to-int", "double-to-long",
    "double-to-float", "int-to-byte", "int-to-char", "int-to-short",
];

const BINOP_NAMES: [&str; 32] = [
    "add-int", "sub-int", "mul-int", "div-int", "rem-int", "and-int", "or-int", "xor-int",
    "shl-int", "shr-int", "ushr-int", "add-long", "sub-long", "mul-long", "div-long", "rem-long",
    "and-long", "or-long", "xor-long", "shl-long", "shr-long", "ushr-long", "add-float",
    "sub-float", "mul-float", "div-float", "rem-float", "add-double", "sub-double", "mul-double",
    "div-double", "rem-double",
];

const BINOP_2ADDR_NAMES: [&str; 32] = [
    "add-int/2addr", "sub-int/2addr", "mul-int/2addr", "div-int/2addr", "rem-int/2addr",
    "and-int/2addr", "or-int/2addr", "xor-int/2addr", "shl-int/2addr", "shr-int/2addr",
    "ushr-int/2addr", "add-long/2addr", "sub-long/2addr", "mul-long/2addr", "div-long/2addr",
    "rem-long/2addr", "and-long/2addr", "or-long/2addr", "xor-long/2addr", "shl-long/2addr",
    "shr-long/2addr", "ushr-long/2addr", "add-float/2addr", "sub-float/2addr", "mul-float/2addr",
    "div-float/2addr", "rem-float/2addr", "add-double/2addr", "sub-double/2addr",
    "mul-double/2addr", "div-double/2addr", "rem-double/2addr",
];

const LIT16_NAMES: [&str; 8] = [
    "add-int/lit16", "rsub-int", "mul-int/lit16", "div-int/lit16", "rem-int/lit16",
    "and-int/lit16", "or-int/lit16", "xor-int/lit16",
];

const LIT8_NAMES: [&str; 11] = [
    "add-int/lit8", "rsub-int/lit8", "mul-int/lit8", "div-int/lit8", "rem-int/lit8",
    "and-int/lit8", "or-int/lit8", "xor-int/lit8", "shl-int/lit8", "shr-int/lit8",
    "ushr-int/lit8",
];

pub const PACKED_SWITCH_PAYLOAD: u16 = 0x0100;
pub const SPARSE_SWITCH_PAYLOAD: u16 = 0x0200;
pub const FILL_ARRAY_DATA_PAYLOAD: u16 = 0x0300;

pub const OP_RETURN_VOID: u8 = 0x0e;
pub const OP_RETURN: u8 = 0x0f;
pub const OP_RETURN_WIDE: u8 = 0x10;
pub const OP_RETURN_OBJECT: u8 = 0x11;
pub const OP_CONST_4: u8 = 0x12;
pub const OP_CONST_WIDE_16: u8 = 0x16;
pub const OP_NEW_INSTANCE: u8 = 0x22;
pub const OP_INVOKE_VIRTUAL: u8 = 0x6e;
pub const OP_INVOKE_SUPER: u8 = 0x6f;
pub const OP_INVOKE_DIRECT: u8 = 0x70;
pub const OP_INVOKE_STATIC: u8 = 0x71;
pub const OP_INVOKE_INTERFACE: u8 = 0x72;
pub const OP_INVOKE_VIRTUAL_RANGE: u8 = 0x74;
pub const OP_INVOKE_SUPER_RANGE: u8 = 0x75;
pub const OP_INVOKE_DIRECT_RANGE: u8 = 0x76;
pub const OP_INVOKE_STATIC_RANGE: u8 = 0x77;
pub const OP_INVOKE_INTERFACE_RANGE: u8 = 0x78;

/// Payload pseudo-instructions embedded in the code stream as data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Payload {
    PackedSwitch,
    SparseSwitch,
    FillArrayData,
}

/// An index operand found in an instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexRef {
    pub kind: IndexKind,
    pub value: u32,
    /// True for the 32-bit operand of const-string/jumbo.
    pub wide: bool,
}

/// One decoded instruction or payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Instruction {
    /// Offset in code units from the start of the code item.
    pub offset: usize,
    /// Opcode byte; 0x00 for payloads.
    pub opcode: u8,
    /// Length in code units.
    pub len: usize,
    pub payload: Option<Payload>,
    pub index: Option<IndexRef>,
}

impl Instruction {
    pub fn name(&self) -> &'static str {
        match self.payload {
            Some(Payload::PackedSwitch) => "packed-switch-payload",
            Some(Payload::SparseSwitch) => "sparse-switch-payload",
            Some(Payload::FillArrayData) => "fill-array-data-payload",
            None => op_info(self.opcode).map_or("?", |i| i.name),
        }
    }
}

fn malformed(unit: usize, reason: impl Into<String>) -> DexError {
    DexError::MalformedCode {
        unit,
        reason: reason.into(),
    }
}

fn payload_len(insns: &[u16], offset: usize, kind: Payload) -> Result<usize> {
    let at = |i: usize| -> Result<u32> {
        insns
            .get(offset + i)
            .map(|&u| u32::from(u))
            .ok_or_else(|| malformed(offset, "payload header runs past end of code"))
    };
    let len = match kind {
        Payload::PackedSwitch => at(1)? as usize * 2 + 4,
        Payload::SparseSwitch => at(1)? as usize * 4 + 2,
        Payload::FillArrayData => {
            let width = at(1)? as u64;
            let size = (at(2)? | (at(3)? << 16)) as u64;
            ((width * size).div_ceil(2) + 4) as usize
        }
    };
    Ok(len)
}

/// Linearly decodes a whole instruction stream.
///
/// Every code unit is covered by exactly one returned entry; payloads are
/// sized from their embedded counts.
pub fn decode_instructions(insns: &[u16]) -> Result<Vec<Instruction>> {
    let mut out = Vec::new();
    let mut offset = 0;
    while offset < insns.len() {
        let unit = insns[offset];
        let opcode = (unit & 0xff) as u8;
        let payload = match unit {
            PACKED_SWITCH_PAYLOAD => Some(Payload::PackedSwitch),
            SPARSE_SWITCH_PAYLOAD => Some(Payload::SparseSwitch),
            FILL_ARRAY_DATA_PAYLOAD => Some(Payload::FillArrayData),
            _ => None,
        };
        let (len, index) = match payload {
            Some(kind) => (payload_len(insns, offset, kind)?, None),
            None => {
                let info = op_info(opcode).ok_or_else(|| malformed(offset, format!("unknown opcode {opcode:#04x}")))?;
                let len = info.format.units();
                if offset + len > insns.len() {
                    return Err(malformed(offset, format!("{} runs past end of code", info.name)));
                }
                let index = info.index.map(|kind| match info.format {
                    Format::F31c => IndexRef {
                        kind,
                        value: u32::from(insns[offset + 1]) | (u32::from(insns[offset + 2]) << 16),
                        wide: true,
                    },
                    _ => IndexRef {
                        kind,
                        value: u32::from(insns[offset + 1]),
                        wide: false,
                    },
                });
                (len, index)
            }
        };
        if offset + len > insns.len() {
            return Err(malformed(offset, "payload runs past end of code"));
        }
        out.push(Instruction {
            offset,
            opcode: if payload.is_some() { 0 } else { opcode },
            len,
            payload,
            index,
        });
        offset += len;
    }
    Ok(out)
}

/// The invoke family. `Interface` covers both 0x72 and 0x78.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum InvokeKind {
    Virtual,
    Super,
    Direct,
    Static,
    Interface,
}

impl InvokeKind {
    /// Kind and range flag of an invoke opcode.
    pub fn from_opcode(opcode: u8) -> Option<(InvokeKind, bool)> {
        let kind = match opcode {
            OP_INVOKE_VIRTUAL => (InvokeKind::Virtual, false),
            OP_INVOKE_SUPER => (InvokeKind::Super, false),
            OP_INVOKE_DIRECT => (InvokeKind::Direct, false),
            OP_INVOKE_STATIC => (InvokeKind::Static, false),
            OP_INVOKE_INTERFACE => (InvokeKind::Interface, false),
            OP_INVOKE_VIRTUAL_RANGE => (InvokeKind::Virtual, true),
            OP_INVOKE_SUPER_RANGE => (InvokeKind::Super, true),
            OP_INVOKE_DIRECT_RANGE => (InvokeKind::Direct, true),
            OP_INVOKE_STATIC_RANGE => (InvokeKind::Static, true),
            OP_INVOKE_INTERFACE_RANGE => (InvokeKind::Interface, true),
            _ => return None,
        };
        Some(kind)
    }

    pub fn opcode(self, range: bool) -> u8 {
        match (self, range) {
            (InvokeKind::Virtual, false) => OP_INVOKE_VIRTUAL,
            (InvokeKind::Super, false) => OP_INVOKE_SUPER,
            (InvokeKind::Direct, false) => OP_INVOKE_DIRECT,
            (InvokeKind::Static, false) => OP_INVOKE_STATIC,
            (InvokeKind::Interface, false) => OP_INVOKE_INTERFACE,
            (InvokeKind::Virtual, true) => OP_INVOKE_VIRTUAL_RANGE,
            (InvokeKind::Super, true) => OP_INVOKE_SUPER_RANGE,
            (InvokeKind::Direct, true) => OP_INVOKE_DIRECT_RANGE,
            (InvokeKind::Static, true) => OP_INVOKE_STATIC_RANGE,
            (InvokeKind::Interface, true) => OP_INVOKE_INTERFACE_RANGE,
        }
    }

    /// Whether the call passes a receiver as its first argument.
    pub fn has_receiver(self) -> bool {
        self != InvokeKind::Static
    }
}

impl fmt::Display for InvokeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            InvokeKind::Virtual => "virtual",
            InvokeKind::Super => "super",
            InvokeKind::Direct => "direct",
            InvokeKind::Static => "static",
            InvokeKind::Interface => "interface",
        };
        f.write_str(s)
    }
}

/// A method call found in a code item.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InvokeSite {
    pub code_offset: usize,
    pub opcode: u8,
    pub method_idx: MethodIdx,
    pub is_range: bool,
    pub arg_count: u8,
}

impl InvokeSite {
    pub fn kind(&self) -> InvokeKind {
        InvokeKind::from_opcode(self.opcode).expect("scan_invokes only yields invoke opcodes").0
    }

    /// Length in code units; always 3 for the invoke family.
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        3
    }
}

/// Every invoke instruction in a code stream.
pub fn scan_invokes(insns: &[u16]) -> Result<Vec<InvokeSite>> {
    let mut sites = Vec::new();
    for insn in decode_instructions(insns)? {
        if insn.payload.is_some() {
            continue;
        }
        let Some((_, is_range)) = InvokeKind::from_opcode(insn.opcode) else {
            continue;
        };
        let head = insns[insn.offset];
        let arg_count = if is_range { (head >> 8) as u8 } else { (head >> 12) as u8 };
        sites.push(InvokeSite {
            code_offset: insn.offset,
            opcode: insn.opcode,
            method_idx: MethodIdx(u32::from(insns[insn.offset + 1])),
            is_range,
            arg_count,
        });
    }
    Ok(sites)
}

/// Turns an invoke site into invoke-static (or invoke-static/range) on
/// `stub`. Only the opcode byte and the method index change.
pub fn rewrite_site(insns: &mut [u16], site: &InvokeSite, stub: MethodIdx) -> Result<()> {
    let stub_idx = u16::try_from(stub.0).map_err(|_| DexError::Capacity {
        pool: crate::error::Pool::Methods,
        count: stub.get() + 1,
        limit: crate::model::MAX_POOL_16,
    })?;
    let head = insns
        .get(site.code_offset)
        .copied()
        .filter(|&u| (u & 0xff) as u8 == site.opcode && site.code_offset + 3 <= insns.len())
        .ok_or_else(|| malformed(site.code_offset, "invoke site does not match the code"))?;
    let new_opcode = if site.is_range {
        OP_INVOKE_STATIC_RANGE
    } else {
        OP_INVOKE_STATIC
    };
    insns[site.code_offset] = (head & 0xff00) | u16::from(new_opcode);
    insns[site.code_offset + 1] = stub_idx;
    Ok(())
}
