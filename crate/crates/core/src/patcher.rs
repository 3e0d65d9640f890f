//! Call-site redirection: every invoke of a blacklisted method becomes an
//! invoke-static of a generated stub, in place and without changing code size.

use std::collections::HashMap;
use std::fmt::{self, Write as _};

use crate::blacklist::Blacklist;
use crate::bytecode::{decode_instructions, op_info, rewrite_site, scan_invokes, InvokeKind, InvokeSite};
use crate::error::{DexError, Result};
use crate::merger::merge_stub;
use crate::model::*;
use crate::resolver::find_call_targets;
use crate::stubgen::{build_stub_specs, DEFAULT_STUB_CLASS};

/// One rewritten call site.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchEntry {
    /// Descriptor of the class containing the call.
    pub class: String,
    /// The method containing the call.
    pub method: MethodDescriptor,
    /// Offset of the invoke in code units.
    pub code_offset: usize,
    pub old_opcode: u8,
    pub new_opcode: u8,
    /// Method index in the input file.
    pub old_method_idx: MethodIdx,
    /// Method index of the stub in the output file.
    pub new_method_idx: MethodIdx,
    pub target: MethodDescriptor,
    pub stub: MethodDescriptor,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PatchReport {
    pub entries: Vec<PatchEntry>,
    pub scanned_methods: usize,
    pub scanned_instructions: usize,
    /// Blacklist entries the file never references.
    pub inert: Vec<MethodDescriptor>,
}

impl PatchReport {
    pub fn patched_sites(&self) -> usize {
        self.entries.len()
    }

    /// Human-readable summary followed by one block per site.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "scanned {} methods, {} instructions",
            self.scanned_methods, self.scanned_instructions
        );
        let _ = writeln!(out, "patched {} call sites", self.entries.len());
        for e in &self.entries {
            let _ = writeln!(
                out,
                "{}->{}{} @{:#06x}: {} method@{} -> {} method@{}",
                e.class,
                e.method.name,
                e.method.prototype,
                e.code_offset,
                opcode_name(e.old_opcode),
                e.old_method_idx,
                opcode_name(e.new_opcode),
                e.new_method_idx
            );
            let _ = writeln!(out, "    target {}", e.target);
            let _ = writeln!(out, "    stub   {}", e.stub);
        }
        let _ = writeln!(out, "inert blacklist entries: {}", self.inert.len());
        for d in &self.inert {
            let _ = writeln!(out, "    {d}");
        }
        out
    }

    /// One tab-separated record per site: class, method, offset, old opcode,
    /// new opcode, old index, new index, target, stub.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t0x{:02x}\t0x{:02x}\t{}\t{}\t{}\t{}",
                e.class,
                e.method,
                e.code_offset,
                e.old_opcode,
                e.new_opcode,
                e.old_method_idx,
                e.new_method_idx,
                e.target,
                e.stub
            );
        }
        out
    }
}

impl fmt::Display for PatchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

fn opcode_name(opcode: u8) -> &'static str {
    op_info(opcode).map_or("?", |i| i.name)
}

/// A call site located by (class definition, method index, invoke).
#[derive(Debug, Clone, Copy)]
struct Located {
    class_pos: usize,
    method_idx: MethodIdx,
    site: InvokeSite,
}

fn locate(err: DexError, dex: &DexFile, method_idx: MethodIdx) -> DexError {
    let where_ = dex
        .method_id_to_descriptor(method_idx)
        .map_or_else(|_| format!("method {method_idx}"), |d| d.to_string());
    match err {
        DexError::MalformedCode { unit, reason } => DexError::MalformedCode {
            unit,
            reason: format!("{reason} (in {where_})"),
        },
        other => other,
    }
}

/// Redirects every call to a blacklisted method into a stub class.
///
/// When the file contains no such call the input is returned unchanged and
/// the report has no entries.
pub fn patch_dex(dex: &DexFile, blacklist: &Blacklist, stub_class: Option<&str>) -> Result<(DexFile, PatchReport)> {
    let stub_class = stub_class.unwrap_or(DEFAULT_STUB_CLASS);
    let targets = find_call_targets(dex, blacklist);
    let target_of: HashMap<MethodIdx, &MethodDescriptor> = targets.hits.iter().map(|(d, i)| (*i, d)).collect();
    let mut report = PatchReport {
        inert: targets.inert.clone(),
        ..Default::default()
    };

    let mut located = Vec::new();
    let mut kinds: HashMap<MethodIdx, Vec<InvokeKind>> = HashMap::new();
    for (class_pos, class) in dex.class_defs.iter().enumerate() {
        for m in class.methods() {
            let Some(code) = m.code.as_ref().filter(|c| !c.insns.is_empty()) else {
                continue;
            };
            report.scanned_methods += 1;
            report.scanned_instructions += decode_instructions(&code.insns)
                .map_err(|e| locate(e, dex, m.method_idx))?
                .len();
            for site in scan_invokes(&code.insns).map_err(|e| locate(e, dex, m.method_idx))? {
                if target_of.contains_key(&site.method_idx) {
                    let k = kinds.entry(site.method_idx).or_default();
                    if !k.contains(&site.kind()) {
                        k.push(site.kind());
                    }
                    located.push(Located {
                        class_pos,
                        method_idx: m.method_idx,
                        site,
                    });
                }
            }
        }
    }
    if located.is_empty() {
        return Ok((dex.clone(), report));
    }

    let hits: Vec<(MethodDescriptor, Vec<InvokeKind>)> = targets
        .hits
        .iter()
        .filter_map(|(d, i)| kinds.get(i).map(|k| (d.clone(), k.clone())))
        .collect();
    let spec = build_stub_specs(&hits, stub_class)?;
    let merged = merge_stub(dex, &spec)?;
    let mut out = merged.dex;
    let remap = merged.remap;

    for loc in &located {
        let target = target_of[&loc.site.method_idx];
        let stub_pos = spec
            .methods
            .iter()
            .position(|s| &s.origin == target && s.has_receiver() == loc.site.kind().has_receiver())
            .expect("every observed kind has a stub");
        let stub_idx = merged.stub_methods[stub_pos];
        let new_method = remap.method(loc.method_idx)?;
        let class = &mut out.class_defs[loc.class_pos];
        let method = class
            .methods_mut()
            .find(|m| m.method_idx == new_method)
            .expect("merged class keeps its methods");
        let code = method.code.as_mut().expect("scanned method has code");
        let site = InvokeSite {
            method_idx: remap.method(loc.site.method_idx)?,
            ..loc.site
        };
        rewrite_site(&mut code.insns, &site, stub_idx)?;
        report.entries.push(PatchEntry {
            class: dex.resolve_type(dex.class_defs[loc.class_pos].class_idx)?.to_owned(),
            method: dex.method_id_to_descriptor(loc.method_idx)?,
            code_offset: loc.site.code_offset,
            old_opcode: loc.site.opcode,
            new_opcode: (code.insns[loc.site.code_offset] & 0xff) as u8,
            old_method_idx: loc.site.method_idx,
            new_method_idx: stub_idx,
            target: target.clone(),
            stub: spec.methods[stub_pos].descriptor(stub_class),
        });
    }
    out.validate()?;
    Ok((out, report))
}
