mod common;

use common::*;
use dexpatch::error::{DexError, Pool};
use dexpatch::fixtures::{imei_app, MAIN_ACTIVITY};
use dexpatch::io::writer::*;
use dexpatch::io::*;
use dexpatch::model::*;
use proptest::prelude::*;

/// `readImei` as decoded by an independent disassembler from the written file.
const READ_IMEI_UNITS: [u16; 13] = [
    0x001a, 0x000c, 0x206e, 0x0001, 0x0002, 0x000c, 0x001f, 0x0001, 0x106e, 0x0002, 0x0000, 0x010c, 0x0111,
];

#[test]
fn imei_fixture_pool_sizes_and_code() {
    let bytes = write_dex(&imei_app()).unwrap();
    let dex = parse_dex(&bytes).unwrap();
    assert_eq!(dex.strings.len(), 14);
    assert_eq!(dex.type_ids.len(), 6);
    assert_eq!(dex.proto_ids.len(), 3);
    assert_eq!(dex.field_ids.len(), 0);
    assert_eq!(dex.method_ids.len(), 5);
    assert_eq!(dex.class_defs.len(), 1);
    let read_imei = md(&format!("{MAIN_ACTIVITY}->readImei()Ljava/lang/String;"));
    assert_eq!(code_of(&dex, &read_imei).unwrap().insns, READ_IMEI_UNITS);
    assert_eq!(dex.resolve_type(TypeIdx(4)).unwrap(), "Ljava/lang/String;");
    assert_eq!(dex.resolve_type(TypeIdx(5)).unwrap(), "V");
}

#[test]
fn resolve_type_out_of_range_names_the_pool() {
    let dex = imei_app();
    let err = dex.resolve_type(TypeIdx(dex.type_ids.len() as u32)).unwrap_err();
    assert!(matches!(err, DexError::IndexOutOfRange { pool: Pool::Types, index: 6, size: 6, .. }));
}

#[test]
fn method_descriptors_of_the_fixture() {
    let dex = imei_app();
    let all: Vec<String> = (0..dex.method_ids.len())
        .map(|i| dex.method_id_to_descriptor(MethodIdx(i as u32)).unwrap().to_string())
        .collect();
    assert_eq!(
        all,
        [
            "Landroid/app/Activity;-><init>()V",
            "Landroid/app/Activity;->getSystemService(Ljava/lang/String;)Ljava/lang/Object;",
            "Landroid/telephony/TelephonyManager;->getDeviceId()Ljava/lang/String;",
            "Lcom/example/imei/MainActivity;-><init>()V",
            "Lcom/example/imei/MainActivity;->readImei()Ljava/lang/String;",
        ]
    );
}

#[test]
fn header_rejections() {
    let good = write_dex(&imei_app()).unwrap();

    assert!(matches!(parse_dex(&good[..0x40]), Err(DexError::Truncated { .. })));
    assert!(matches!(parse_dex(&good[..good.len() - 4]), Err(DexError::ChecksumMismatch { .. })));
    assert!(matches!(read_header_fields(&good[..good.len() - 4]), Err(DexError::Truncated { .. })));

    let mut size = good.clone();
    size[0x20] ^= 1;
    assert!(matches!(parse_dex(&size), Err(DexError::ChecksumMismatch { .. })));

    let mut bad = good.clone();
    bad[0] = b'x';
    assert!(matches!(parse_dex(&bad), Err(DexError::BadMagic { .. })));

    let mut v36 = good.clone();
    v36[4..7].copy_from_slice(b"036");
    fix_checksums(&mut v36).unwrap();
    assert!(matches!(parse_dex(&v36), Err(DexError::UnsupportedVersion { .. })));

    let mut endian = good.clone();
    endian[40..44].copy_from_slice(&0x7856_3412u32.to_le_bytes());
    fix_checksums(&mut endian).unwrap();
    assert!(matches!(parse_dex(&endian), Err(DexError::BadEndianTag { .. })));

    let mut sum = good.clone();
    sum[8] ^= 1;
    assert!(matches!(parse_dex(&sum), Err(DexError::ChecksumMismatch { .. })));

    let mut sig = good.clone();
    sig[12] ^= 1;
    let a = adler32(&sig[12..]);
    sig[8..12].copy_from_slice(&a.to_le_bytes());
    assert!(matches!(parse_dex(&sig), Err(DexError::SignatureMismatch)));
}

#[test]
fn dangling_index_is_located() {
    let mut bytes = write_dex(&imei_app()).unwrap();
    let type_ids_off = u32::from_le_bytes(bytes[0x44..0x48].try_into().unwrap()) as usize;
    bytes[type_ids_off..type_ids_off + 4].copy_from_slice(&999u32.to_le_bytes());
    fix_checksums(&mut bytes).unwrap();
    let err = parse_dex(&bytes).unwrap_err();
    assert!(matches!(err, DexError::IndexOutOfRange { pool: Pool::Strings, index: 999, .. }), "{err}");
    assert_eq!(err.offset(), Some(type_ids_off));
}

#[test]
fn unsorted_pool_rejected_before_writing() {
    let mut dex = imei_app();
    dex.strings.swap(0, 1);
    assert!(matches!(write_dex(&dex), Err(DexError::Unsorted { pool: Pool::Strings, .. })));
}

#[test]
fn adler32_reference_values() {
    assert_eq!(adler32(b""), 1);
    assert_eq!(adler32(b"abc"), 0x024d_0127);
}

#[test]
fn fix_checksums_is_idempotent() {
    let mut bytes = write_dex(&random_dex(3, 4, 20)).unwrap();
    let once = bytes.clone();
    fix_checksums(&mut bytes).unwrap();
    assert_eq!(bytes, once);
    verify_checksums(&bytes).unwrap();
}

#[test]
fn mutf8_nul_and_supplementary() {
    let enc = encode_mutf8("a\u{0}b\u{1f600}");
    assert!(!enc.contains(&0));
    assert_eq!(&enc[1..3], &[0xc0, 0x80]);
    assert_eq!(enc.len(), 1 + 2 + 1 + 6);
    let mut nul_terminated = enc.clone();
    nul_terminated.push(0);
    let (s, utf16, _) = decode_mutf8(&nul_terminated, 0).unwrap();
    assert_eq!(s, "a\u{0}b\u{1f600}");
    assert_eq!(utf16, 5);
}

#[test]
fn uleb128_examples() {
    assert_eq!(read_uleb128(&[0x00], 0).unwrap(), (0, 1));
    assert_eq!(read_uleb128(&[0x7f], 0).unwrap(), (127, 1));
    assert_eq!(read_uleb128(&[0xb7, 0x11], 0).unwrap(), (2231, 2));
    assert_eq!(write_uleb128(128), [0x80, 0x01]);
    assert!(read_uleb128(&[0x80, 0x80], 0).is_err());
    assert!(read_uleb128(&[0x80, 0x80, 0x80, 0x80, 0x80, 0x01], 0).is_err());
}

#[test]
fn empty_file_round_trips() {
    let dex = DexFile::default();
    let bytes = write_dex(&dex).unwrap();
    assert_eq!(parse_dex(&bytes).unwrap(), dex);
}

#[test]
fn map_list_covers_emitted_sections() {
    let bytes = write_dex(&random_dex(11, 6, 40)).unwrap();
    let dex = parse_dex(&bytes).unwrap();
    let layout = dex.layout.as_ref().unwrap();
    let types: Vec<u16> = layout.map.iter().map(|m| m.item_type).collect();
    for t in [TYPE_HEADER_ITEM, TYPE_STRING_ID_ITEM, TYPE_CLASS_DEF_ITEM, TYPE_CODE_ITEM, TYPE_MAP_LIST] {
        assert!(types.contains(&t), "missing map type {t:#x}");
    }
    let mut offsets: Vec<u32> = layout.map.iter().map(|m| m.offset).collect();
    let sorted = {
        offsets.sort();
        offsets.clone()
    };
    assert_eq!(layout.map.iter().map(|m| m.offset).collect::<Vec<_>>(), sorted);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn round_trip_and_idempotence(seed in any::<u64>(), classes in 1usize..16, strings in 1usize..128) {
        let dex = random_dex(seed, classes, strings);
        dex.validate().unwrap();
        let bytes = write_dex(&dex).unwrap();
        let parsed = parse_dex(&bytes).unwrap();
        prop_assert_eq!(&parsed, &dex);
        let again = write_dex(&parsed).unwrap();
        prop_assert_eq!(again, bytes);
    }

    #[test]
    fn any_payload_byte_flip_is_detected(seed in any::<u64>(), pick in any::<prop::sample::Index>(), bit in 0u8..8) {
        let bytes = write_dex(&random_dex(seed, 2, 8)).unwrap();
        let at = 12 + pick.index(bytes.len() - 12);
        let mut flipped = bytes.clone();
        flipped[at] ^= 1 << bit;
        prop_assert!(verify_checksums(&flipped).is_err());
        prop_assert!(parse_dex(&flipped).is_err());
    }

    #[test]
    fn uleb128_round_trip(v in any::<u32>()) {
        let enc = write_uleb128(v);
        prop_assert_eq!(read_uleb128(&enc, 0).unwrap(), (v, enc.len()));
    }
}
