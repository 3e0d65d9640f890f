//! Small sample applications built with `DexBuilder`.

use crate::apk::{write_zip, ApkEntry};
use crate::builder::{ClassSpec, CodeSpec, DexBuilder, Insn, MethodSpec};
use crate::bytecode::InvokeKind;
use crate::model::*;

pub const IMEI_GETTER: &str = "Landroid/telephony/TelephonyManager;->getDeviceId()Ljava/lang/String;";
pub const MAIN_ACTIVITY: &str = "Lcom/example/imei/MainActivity;";
const ACTIVITY: &str = "Landroid/app/Activity;";

fn md(s: &str) -> MethodDescriptor {
    s.parse().expect("valid descriptor literal")
}

/// An activity that reads the IMEI through `TelephonyManager.getDeviceId()`:
///
/// ```text
/// readImei()Ljava/lang/String;      registers v0..v2, this = v2
///   0000  const-string v0, "phone"
///   0002  invoke-virtual {v2, v0}, Landroid/app/Activity;->getSystemService(Ljava/lang/String;)Ljava/lang/Object;
///   0005  move-result-object v0
///   0006  check-cast v0, Landroid/telephony/TelephonyManager;
///   0008  invoke-virtual {v0}, Landroid/telephony/TelephonyManager;->getDeviceId()Ljava/lang/String;
///   000b  move-result-object v1
///   000c  return-object v1
/// ```
pub fn imei_app_spec() -> ClassSpec {
    let init = MethodSpec::new(
        "<init>",
        "()V",
        ACC_PUBLIC | ACC_CONSTRUCTOR,
        Some(CodeSpec::new(
            0,
            vec![
                Insn::invoke(InvokeKind::Direct, md("Landroid/app/Activity;-><init>()V"), &[0]),
                Insn::return_void(),
            ],
        )),
    );
    let read_imei = MethodSpec::new(
        "readImei",
        "()Ljava/lang/String;",
        ACC_PUBLIC,
        Some(CodeSpec::new(
            2,
            vec![
                Insn::const_string(0, "phone"),
                Insn::invoke(
                    InvokeKind::Virtual,
                    md("Landroid/app/Activity;->getSystemService(Ljava/lang/String;)Ljava/lang/Object;"),
                    &[2, 0],
                ),
                Insn::move_result_object(0),
                Insn::check_cast(0, "Landroid/telephony/TelephonyManager;"),
                Insn::invoke(InvokeKind::Virtual, md(IMEI_GETTER), &[0]),
                Insn::move_result_object(1),
                Insn::return_object(1),
            ],
        )),
    );
    let mut class = ClassSpec::new(MAIN_ACTIVITY).superclass(ACTIVITY).method(init).method(read_imei);
    class.source_file = Some("MainActivity.java".to_owned());
    class
}

/// Code-unit offset of the `getDeviceId` call inside `readImei`.
pub const IMEI_CALL_OFFSET: usize = 8;

pub fn imei_app() -> DexFile {
    let mut b = DexBuilder::new();
    b.class(imei_app_spec());
    b.build().expect("sample app is well formed")
}

/// A minimal APK around `imei_app`, signed-looking `META-INF/` included.
pub fn imei_apk() -> Vec<u8> {
    let dex = crate::io::write_dex(&imei_app()).expect("sample app serializes");
    let manifest = b"<?xml version=\"1.0\" encoding=\"utf-8\"?>\n\
<manifest package=\"com.example.imei\">\n\
  <uses-permission android:name=\"android.permission.READ_PHONE_STATE\"/>\n\
  <application><activity android:name=\".MainActivity\"/></application>\n\
</manifest>\n";
    let entries = vec![
        ApkEntry::deflated("AndroidManifest.xml", manifest.to_vec()),
        ApkEntry::deflated("classes.dex", dex),
        ApkEntry::stored("resources.arsc", (0u8..=255).cycle().take(1024).collect()),
        ApkEntry::deflated("res/layout/main.xml", b"<LinearLayout/>\n".repeat(8)),
        ApkEntry::deflated(
            "META-INF/MANIFEST.MF",
            b"Manifest-Version: 1.0\r\nCreated-By: 1.0 (Android)\r\n\r\n".to_vec(),
        ),
        ApkEntry::deflated("META-INF/CERT.SF", b"Signature-Version: 1.0\r\n\r\n".to_vec()),
        ApkEntry::stored("META-INF/CERT.RSA", vec![0x30, 0x82, 0x01, 0x00]),
    ];
    write_zip(&entries).expect("small archive")
}
