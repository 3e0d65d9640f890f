//! Redirects every call to a blacklisted method to a generated stub.
//!
//! ```bash
//! cargo run --example patch_imei -- classes.dex patched.dex [policy.blacklist]
//! ```
//!
//! With no arguments the built-in sample application is patched in memory
//! against the bundled policy.

use dexpatch::blacklist::{parse_blacklist, Blacklist};
use dexpatch::fixtures::imei_app;
use dexpatch::io::{parse_dex, verify_checksums, write_dex};
use dexpatch::patcher::patch_dex;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let dex = match args.first() {
        Some(path) => parse_dex(&std::fs::read(path)?)?,
        None => imei_app(),
    };
    let blacklist = match args.get(2) {
        Some(path) => parse_blacklist(&std::fs::read_to_string(path)?)?,
        None => Blacklist::default_policy(),
    };

    let (patched, report) = patch_dex(&dex, &blacklist, None)?;
    print!("{report}");

    let bytes = write_dex(&patched)?;
    verify_checksums(&bytes)?;
    match args.get(1) {
        Some(out) => {
            std::fs::write(out, &bytes)?;
            println!("wrote {out} ({} bytes)", bytes.len());
        }
        None => println!("patched file is {} bytes, checksums verified", bytes.len()),
    }
    Ok(())
}
