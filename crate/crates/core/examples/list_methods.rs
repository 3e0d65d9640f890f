//! Lists the methods a class defines, or every method of every class.
//!
//! ```bash
//! cargo run --example list_methods -- classes.dex 'Lcom/example/imei/MainActivity;'
//! ```

use dexpatch::fixtures::imei_app;
use dexpatch::io::parse_dex;
use dexpatch::resolver::{class_def_methods, list_class_methods};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let dex = match args.next() {
        Some(path) => parse_dex(&std::fs::read(path)?)?,
        None => imei_app(),
    };
    let methods = match args.next() {
        Some(class) => list_class_methods(&dex, &class),
        None => dex.class_defs.iter().flat_map(|c| class_def_methods(&dex, c)).collect(),
    };
    for m in methods {
        let kind = if m.direct { "direct " } else { "virtual" };
        let size = m.code.map_or("no code".to_owned(), |c| format!("{} units", c.insns.len()));
        println!("{kind}  {:#06x}  {:<10}  {}", m.access_flags, size, m.descriptor);
    }
    Ok(())
}
