//! Builds a small dex file from scratch and writes it to disk.
//!
//! ```bash
//! cargo run --example build_dex -- /tmp/hello.dex
//! ```

use dexpatch::builder::{ClassSpec, CodeSpec, DexBuilder, Insn, MethodSpec};
use dexpatch::bytecode::InvokeKind;
use dexpatch::io::{parse_dex, write_dex};
use dexpatch::model::{MethodDescriptor, ACC_PUBLIC, ACC_STATIC};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "hello.dex".into());

    let println: MethodDescriptor = "Ljava/io/PrintStream;->println(Ljava/lang/String;)V".parse()?;
    let greet = MethodSpec::new(
        "greet",
        "(Ljava/io/PrintStream;)V",
        ACC_PUBLIC | ACC_STATIC,
        Some(CodeSpec::new(
            1,
            vec![
                Insn::const_string(0, "hello from a generated method"),
                Insn::invoke(InvokeKind::Virtual, println, &[1, 0]),
                Insn::return_void(),
            ],
        )),
    );

    let mut builder = DexBuilder::new();
    builder.class(ClassSpec::new("Lcom/example/Hello;").method(greet));
    let dex = builder.build()?;
    let bytes = write_dex(&dex)?;
    std::fs::write(&out, &bytes)?;

    let back = parse_dex(&bytes)?;
    println!("wrote {out}: {} bytes", bytes.len());
    println!("  strings {}, types {}, methods {}", back.strings.len(), back.type_ids.len(), back.method_ids.len());
    Ok(())
}
