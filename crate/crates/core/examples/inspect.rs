//! Prints header fields and pool sizes of a dex file.
//!
//! ```bash
//! cargo run --example inspect -- classes.dex
//! ```
//!
//! Without an argument the built-in sample application is inspected.

use dexpatch::fixtures::imei_app;
use dexpatch::io::{parse_dex, read_header_fields, verify_checksums, write_dex};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let bytes = match std::env::args().nth(1) {
        Some(path) => std::fs::read(path)?,
        None => write_dex(&imei_app())?,
    };

    let h = read_header_fields(&bytes)?;
    let integrity = match verify_checksums(&bytes) {
        Ok(()) => "ok".to_owned(),
        Err(e) => e.to_string(),
    };
    println!("version     {}", h.version());
    println!("file size   {}", h.file_size);
    println!("checksum    {:#010x} ({integrity})", h.checksum);
    println!("map offset  {:#x}", h.map_off);

    let dex = parse_dex(&bytes)?;
    println!("strings     {}", dex.strings.len());
    println!("types       {}", dex.type_ids.len());
    println!("protos      {}", dex.proto_ids.len());
    println!("fields      {}", dex.field_ids.len());
    println!("methods     {}", dex.method_ids.len());
    println!("classes     {}", dex.class_defs.len());
    println!("code items  {}", dex.code_item_count());
    println!("sections:");
    for (name, off) in [
        ("string_ids", h.string_ids_off),
        ("type_ids", h.type_ids_off),
        ("proto_ids", h.proto_ids_off),
        ("field_ids", h.field_ids_off),
        ("method_ids", h.method_ids_off),
        ("class_defs", h.class_defs_off),
        ("data", h.data_off),
    ] {
        println!("  {name:<11} {off:#x}");
    }
    Ok(())
}
