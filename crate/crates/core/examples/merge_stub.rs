//! Generates a stub class for one framework method and merges it into a
//! file, showing how existing pool indices move.
//!
//! ```bash
//! cargo run --example merge_stub
//! ```

use dexpatch::bytecode::InvokeKind;
use dexpatch::fixtures::{imei_app, IMEI_GETTER};
use dexpatch::merger::merge_stub;
use dexpatch::model::MethodIdx;
use dexpatch::stubgen::{build_stub_specs, DEFAULT_STUB_CLASS};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dex = imei_app();
    let spec = build_stub_specs(&[(IMEI_GETTER.parse()?, vec![InvokeKind::Virtual])], DEFAULT_STUB_CLASS)?;
    for m in &spec.methods {
        println!("stub {}  strategy {}", m.descriptor(&spec.class_descriptor), m.strategy);
    }

    let merged = merge_stub(&dex, &spec)?;
    println!("method ids: {} -> {}", dex.method_ids.len(), merged.dex.method_ids.len());
    for (old, &new) in merged.remap.methods.iter().enumerate() {
        let d = dex.method_id_to_descriptor(MethodIdx(old as u32))?;
        println!("  {old:>3} -> {new:>3}  {d}");
    }
    for idx in &merged.stub_methods {
        println!("  new {:>3}  {}", idx.0, merged.dex.method_id_to_descriptor(*idx)?);
    }
    Ok(())
}
