//! A minimal disassembler: decodes every method body and resolves pool
//! references to their names.
//!
//! ```bash
//! cargo run --example disassemble -- classes.dex
//! ```

use dexpatch::bytecode::{decode_instructions, IndexKind};
use dexpatch::fixtures::imei_app;
use dexpatch::io::parse_dex;
use dexpatch::model::{DexFile, FieldIdx, MethodIdx, StringIdx, TypeIdx};

fn operand(dex: &DexFile, kind: IndexKind, value: u32) -> String {
    let resolved = match kind {
        IndexKind::String => dex.string(StringIdx(value)).map(|s| format!("{s:?}")),
        IndexKind::Type => dex.resolve_type(TypeIdx(value)).map(str::to_owned),
        IndexKind::Field => dex.field_id_to_descriptor(FieldIdx(value)).map(|f| f.to_string()),
        IndexKind::Method => dex.method_id_to_descriptor(MethodIdx(value)).map(|m| m.to_string()),
    };
    resolved.unwrap_or_else(|e| format!("<{e}>"))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dex = match std::env::args().nth(1) {
        Some(path) => parse_dex(&std::fs::read(path)?)?,
        None => imei_app(),
    };
    for class in &dex.class_defs {
        println!(".class {}", dex.resolve_type(class.class_idx)?);
        for m in class.methods() {
            println!("  .method {}", dex.method_id_to_descriptor(m.method_idx)?);
            let Some(code) = &m.code else {
                println!("    (no code)");
                continue;
            };
            println!("    .registers {}  ins {}  outs {}", code.registers_size, code.ins_size, code.outs_size);
            for insn in decode_instructions(&code.insns)? {
                let units: Vec<String> = code.insns[insn.offset..insn.offset + insn.len.min(3)]
                    .iter()
                    .map(|u| format!("{u:04x}"))
                    .collect();
                let target = insn.index.map(|r| operand(&dex, r.kind, r.value)).unwrap_or_default();
                println!("    {:04x}: {:<15} {:<22} {}", insn.offset, units.join(" "), insn.name(), target);
            }
        }
    }
    Ok(())
}
