use dexpatch::apk::*;
use dexpatch::blacklist::Blacklist;
use dexpatch::fixtures::{imei_apk, IMEI_GETTER};
use dexpatch::io::{parse_dex, verify_checksums};
use dexpatch::model::MethodDescriptor;
use dexpatch::resolver::find_method_index;
use proptest::prelude::*;

fn names(a: &ApkArchive) -> Vec<&str> {
    a.entries.iter().map(|e| e.name.as_str()).collect()
}

fn local_header_names(bytes: &[u8]) -> Vec<String> {
    let mut out = Vec::new();
    let mut pos = 0;
    while bytes[pos..].starts_with(&[0x50, 0x4b, 0x03, 0x04]) {
        let h = &bytes[pos..];
        let size = u32::from_le_bytes(h[18..22].try_into().unwrap()) as usize;
        let name_len = u16::from_le_bytes(h[26..28].try_into().unwrap()) as usize;
        let extra_len = u16::from_le_bytes(h[28..30].try_into().unwrap()) as usize;
        out.push(String::from_utf8(h[30..30 + name_len].to_vec()).unwrap());
        pos += 30 + name_len + extra_len + size;
    }
    out
}

#[test]
fn imei_apk_patch_keeps_other_entries() {
    let input = imei_apk();
    let before = open_apk(&input).unwrap();
    let (output, report) = patch_apk(&input, &Blacklist::default_policy(), None).unwrap();
    assert_eq!(report.patched_sites(), 1);
    let after = open_apk(&output).unwrap();

    let kept: Vec<&str> = names(&before).into_iter().filter(|n| !n.starts_with("META-INF/")).collect();
    assert_eq!(names(&after), kept);
    assert_eq!(local_header_names(&output), kept);

    for e in &after.entries {
        if e.name == "classes.dex" {
            assert_eq!(e.method, 0);
            assert_eq!(e.raw, e.data);
            continue;
        }
        let old = before.entry(&e.name).unwrap();
        assert_eq!(e.raw, old.raw, "{}", e.name);
        assert_eq!(e.data, old.data);
        assert_eq!((e.method, e.crc32), (old.method, old.crc32));
    }

    let dex_bytes = after.classes_dex().unwrap();
    verify_checksums(dex_bytes).unwrap();
    let dex = parse_dex(dex_bytes).unwrap();
    let target: MethodDescriptor = IMEI_GETTER.parse().unwrap();
    assert!(find_method_index(&dex, &target).is_some());
    assert!(dex.find_class_def("Lru/innopolis/Stub;").is_some());
}

#[test]
fn repack_without_stripping_keeps_signatures() {
    let apk = open_apk(&imei_apk()).unwrap();
    let same = apk.classes_dex().unwrap().to_vec();
    let out = open_apk(&repack(&apk, &same, false).unwrap()).unwrap();
    assert_eq!(names(&out), names(&apk));
    assert!(out.entry("META-INF/CERT.RSA").is_some());
}

#[test]
fn missing_classes_dex() {
    let zip = write_zip(&[ApkEntry::stored("AndroidManifest.xml", b"<m/>".to_vec())]).unwrap();
    let apk = open_apk(&zip).unwrap();
    assert!(matches!(apk.classes_dex(), Err(ApkError::MissingClassesDex)));
    assert!(matches!(repack(&apk, b"x", true), Err(ApkError::MissingClassesDex)));
    assert!(matches!(patch_apk(&zip, &Blacklist::default_policy(), None), Err(ApkError::MissingClassesDex)));
}

#[test]
fn nested_dex_is_not_multidex() {
    let apk = ApkArchive::new(vec![
        ApkEntry::stored("classes.dex", vec![1]),
        ApkEntry::stored("assets/classes2.dex", vec![2]),
        ApkEntry::stored("classesX.dex", vec![3]),
    ]);
    assert_eq!(apk.dex_entries(), ["classes.dex"]);
    assert_eq!(apk.classes_dex().unwrap(), [1]);
}

#[test]
fn corrupt_dex_inside_apk_is_a_dex_error() {
    let zip = write_zip(&[ApkEntry::stored("classes.dex", b"dex\n035\0".to_vec())]).unwrap();
    assert!(matches!(patch_apk(&zip, &Blacklist::default_policy(), None), Err(ApkError::Dex(_))));
}

#[test]
fn truncated_archive_rejected() {
    let bytes = imei_apk();
    for cut in [0, 10, bytes.len() / 2, bytes.len() - 1] {
        assert!(open_apk(&bytes[..cut]).is_err(), "cut at {cut}");
    }
}

fn arb_entry() -> impl Strategy<Value = ApkEntry> {
    (
        "[a-z]{1,6}(/[a-z0-9_.]{1,8}){0,2}",
        prop::collection::vec(any::<u8>(), 0..600),
        any::<bool>(),
    )
        .prop_map(|(n, d, deflate)| if deflate { ApkEntry::deflated(n, d) } else { ApkEntry::stored(n, d) })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn write_open_round_trip(entries in prop::collection::vec(arb_entry(), 0..8)) {
        let mut seen = std::collections::BTreeSet::new();
        let entries: Vec<ApkEntry> = entries.into_iter().filter(|e| seen.insert(e.name.clone())).collect();
        let bytes = write_zip(&entries).unwrap();
        let back = open_apk(&bytes).unwrap();
        prop_assert_eq!(&back.entries, &entries);
        prop_assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn single_byte_damage_never_panics(pos in any::<prop::sample::Index>(), byte in any::<u8>()) {
        let mut bytes = imei_apk();
        let i = pos.index(bytes.len());
        bytes[i] = byte;
        let _ = open_apk(&bytes);
    }
}
