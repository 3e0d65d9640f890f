//! Patches the `classes.dex` of an APK and repacks it without signatures.
//!
//! ```bash
//! cargo run --example repack_apk -- app.apk app-patched.apk
//! ```
//!
//! The output must be re-signed (for example with `apksigner`) before it can
//! be installed.

use dexpatch::apk::{open_apk, patch_apk};
use dexpatch::blacklist::Blacklist;
use dexpatch::fixtures::imei_apk;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let input = match args.first() {
        Some(path) => std::fs::read(path)?,
        None => imei_apk(),
    };

    let before = open_apk(&input)?;
    let (output, report) = patch_apk(&input, &Blacklist::default_policy(), None)?;
    let after = open_apk(&output)?;

    println!("patched {} call sites", report.patched_sites());
    for e in &before.entries {
        let status = match after.entry(&e.name) {
            None => "removed",
            Some(n) if n.raw == e.raw => "unchanged",
            Some(_) => "rewritten",
        };
        println!("  {:<28} {:>8} bytes  {status}", e.name, e.data.len());
    }
    if let Some(out) = args.get(1) {
        std::fs::write(out, &output)?;
        println!("wrote {out}");
    }
    Ok(())
}
