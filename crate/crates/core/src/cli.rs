//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 malformed input (dex, zip or
//! blacklist), 3 patch pipeline failure, 4 I/O error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::apk::{open_apk, repack, ApkError};
use crate::blacklist::{parse_blacklist, Blacklist};
use crate::io::{parse_dex, read_header_fields, verify_checksums, write_dex};
use crate::patcher::{patch_dex, PatchReport};
use crate::resolver::{class_def_methods, list_class_methods};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FORMAT: i32 = 2;
pub const EXIT_PIPELINE: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "dexpatch", version, about = "Redirect blacklisted method calls in dex files and APKs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print header fields, checksum status and pool sizes.
    Inspect { dex: PathBuf },
    /// List defined method signatures, optionally for one class.
    Methods {
        dex: PathBuf,
        /// Class descriptor, e.g. Lcom/example/Main;
        class: Option<String>,
    },
    /// Patch a dex file.
    Patch {
        input: PathBuf,
        output: PathBuf,
        #[command(flatten)]
        opts: PatchOpts,
    },
    /// Patch the classes.dex of an APK and repack it without signatures.
    ApkPatch {
        input: PathBuf,
        output: PathBuf,
        #[command(flatten)]
        opts: PatchOpts,
    },
}

#[derive(Debug, Args)]
struct PatchOpts {
    /// Blacklist file; the built-in policy (getDeviceId) when omitted.
    #[arg(long)]
    blacklist: Option<PathBuf>,
    /// Descriptor of the generated stub class.
    #[arg(long, default_value = crate::stubgen::DEFAULT_STUB_CLASS)]
    stub_class: String,
    /// Write the report to this file instead of standard output.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
    report_format: ReportFormat,
    /// Scan and report without writing the output file.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReportFormat {
    Text,
    Tsv,
}

#[derive(Debug)]
enum Failure {
    Format(String),
    Pipeline(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Format(_) => EXIT_FORMAT,
            Failure::Pipeline(_) => EXIT_PIPELINE,
            Failure::Io(_) => EXIT_IO,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Format(m) | Failure::Pipeline(m) | Failure::Io(m) => m,
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), Failure> {
    out.write_all(text.as_bytes())
        .map_err(|e| Failure::Io(format!("standard output: {e}")))
}

fn format_error(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Format(format!("{}: {e}", path.display()))
}

/// Runs the tool with `args` (program name first) and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let rendered = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(rendered.as_bytes())
            } else {
                out.write_all(rendered.as_bytes())
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::Inspect { dex } => inspect(&dex, out),
        Command::Methods { dex, class } => methods(&dex, class.as_deref(), out),
        Command::Patch { input, output, opts } => patch(&input, &output, &opts, out),
        Command::ApkPatch { input, output, opts } => apk_patch(&input, &output, &opts, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "dexpatch: {}", f.message());
            f.code()
        }
    }
}

fn inspect(path: &Path, out: &mut dyn Write) -> Result<(), Failure> {
    let bytes = read(path)?;
    let h = read_header_fields(&bytes).map_err(|e| format_error(path, e))?;
    let integrity = verify_checksums(&bytes);
    let mut text = String::new();
    text.push_str(&format!("magic        dex\\n{}\\0\n", h.version()));
    text.push_str(&format!("file_size    {}\n", h.file_size));
    text.push_str(&format!(
        "checksum     {:#010x} {}\n",
        h.checksum,
        if integrity.is_ok() { "ok" } else { "INVALID" }
    ));
    text.push_str(&format!(
        "signature    {}\n",
        h.signature.iter().map(|b| format!("{b:02x}")).collect::<String>()
    ));
    for (name, n) in [
        ("string_ids", h.string_ids_size),
        ("type_ids", h.type_ids_size),
        ("proto_ids", h.proto_ids_size),
        ("field_ids", h.field_ids_size),
        ("method_ids", h.method_ids_size),
        ("class_defs", h.class_defs_size),
    ] {
        text.push_str(&format!("{name:<12} {n}\n"));
    }
    emit(out, &text)?;
    integrity.map_err(|e| format_error(path, e))?;
    parse_dex(&bytes).map_err(|e| format_error(path, e))?;
    Ok(())
}

fn methods(path: &Path, class: Option<&str>, out: &mut dyn Write) -> Result<(), Failure> {
    let dex = parse_dex(&read(path)?).map_err(|e| format_error(path, e))?;
    let listed = match class {
        Some(c) => list_class_methods(&dex, c),
        None => dex.class_defs.iter().flat_map(|c| class_def_methods(&dex, c)).collect(),
    };
    let text: String = listed.iter().map(|m| format!("{}\n", m.descriptor)).collect();
    emit(out, &text)
}

fn load_blacklist(opts: &PatchOpts) -> Result<Blacklist, Failure> {
    match &opts.blacklist {
        None => Ok(Blacklist::default_policy()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Failure::Io(format!("{}: {e}", p.display())))?;
            parse_blacklist(&text).map_err(|e| format_error(p, e))
        }
    }
}

fn write_report(report: &PatchReport, opts: &PatchOpts, out: &mut dyn Write) -> Result<(), Failure> {
    let text = match opts.report_format {
        ReportFormat::Text => report.to_text(),
        ReportFormat::Tsv => report.to_tsv(),
    };
    match &opts.report {
        Some(p) => write(p, text.as_bytes()),
        None => emit(out, &text),
    }
}

fn patch(input: &Path, output: &Path, opts: &PatchOpts, out: &mut dyn Write) -> Result<(), Failure> {
    let blacklist = load_blacklist(opts)?;
    let dex = parse_dex(&read(input)?).map_err(|e| format_error(input, e))?;
    let (patched, report) =
        patch_dex(&dex, &blacklist, Some(&opts.stub_class)).map_err(|e| Failure::Pipeline(e.to_string()))?;
    if !opts.dry_run {
        let bytes = write_dex(&patched).map_err(|e| Failure::Pipeline(e.to_string()))?;
        write(output, &bytes)?;
    }
    write_report(&report, opts, out)
}

fn apk_error(path: &Path, e: ApkError) -> Failure {
    match e {
        ApkError::MissingClassesDex | ApkError::Multidex(_) => Failure::Pipeline(format!("{}: {e}", path.display())),
        other => format_error(path, other),
    }
}

fn apk_patch(input: &Path, output: &Path, opts: &PatchOpts, out: &mut dyn Write) -> Result<(), Failure> {
    let blacklist = load_blacklist(opts)?;
    let apk = open_apk(&read(input)?).map_err(|e| apk_error(input, e))?;
    let dex_bytes = apk.classes_dex().map_err(|e| apk_error(input, e))?;
    let dex = parse_dex(dex_bytes).map_err(|e| format_error(input, format!("classes.dex: {e}")))?;
    let (patched, report) =
        patch_dex(&dex, &blacklist, Some(&opts.stub_class)).map_err(|e| Failure::Pipeline(e.to_string()))?;
    if !opts.dry_run {
        let new_dex = write_dex(&patched).map_err(|e| Failure::Pipeline(e.to_string()))?;
        let bytes = repack(&apk, &new_dex, true).map_err(|e| Failure::Pipeline(e.to_string()))?;
        write(output, &bytes)?;
    }
    write_report(&report, opts, out)
}
