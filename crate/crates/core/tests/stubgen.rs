mod common;

use common::*;
use dexpatch::bytecode::{decode_instructions, InvokeKind};
use dexpatch::error::DexError;
use dexpatch::model::*;
use dexpatch::stubgen::*;
use proptest::prelude::*;

const RETURN_TYPES: &[&str] = &["V", "Z", "B", "S", "C", "I", "F", "J", "D", "Ljava/lang/String;", "Ljava/lang/Object;", "[B", "[[J"];

fn expected_return_opcode(ret: &str) -> u8 {
    match ret {
        "V" => 0x0e,
        "J" | "D" => 0x10,
        "Z" | "B" | "S" | "C" | "I" | "F" => 0x0f,
        _ => 0x11,
    }
}

#[test]
fn strategy_bodies_match_the_dalvik_opcode_table() {
    let p = |s: &str| -> Prototype { s.parse().unwrap() };
    let void = emit_stub_code(ReturnStrategy::Void, &p("()V"), None).unwrap();
    assert_eq!(void.insns, [0x000e]);
    assert_eq!((void.registers_size, void.ins_size, void.outs_size), (0, 0, 0));

    let prim = emit_stub_code(ReturnStrategy::ZeroPrimitive, &p("(Lx/Y;)I"), None).unwrap();
    assert_eq!(prim.insns, [0x0012, 0x000f]);
    assert_eq!((prim.registers_size, prim.ins_size), (2, 1));

    let wide = emit_stub_code(ReturnStrategy::ZeroWide, &p("(Lx/Y;II)J"), None).unwrap();
    assert_eq!(wide.insns, [0x0016, 0x0000, 0x0010]);
    assert!(wide.registers_size >= 2 + 3);

    let null = emit_stub_code(ReturnStrategy::NullReference, &p("()[B"), None).unwrap();
    assert_eq!(null.insns, [0x0012, 0x0011]);

    let refs = ConstructRefs {
        type_idx: TypeIdx(4),
        init_idx: MethodIdx(5),
    };
    let ctor = emit_stub_code(ReturnStrategy::ConstructDefault, &p("(Landroid/telephony/TelephonyManager;)Ljava/lang/String;"), Some(refs)).unwrap();
    assert_eq!(ctor.insns, [0x0022, 0x0004, 0x1070, 0x0005, 0x0000, 0x0011]);
    let names: Vec<&str> = decode_instructions(&ctor.insns).unwrap().iter().map(|i| i.name()).collect();
    assert_eq!(names, ["new-instance", "invoke-direct", "return-object"]);
    assert_eq!((ctor.registers_size, ctor.ins_size, ctor.outs_size), (2, 1, 1));
    assert!(emit_stub_code(ReturnStrategy::ConstructDefault, &p("()Ljava/lang/String;"), None).is_err());
}

#[test]
fn one_stub_for_virtual_and_virtual_range() {
    let imei = md(dexpatch::fixtures::IMEI_GETTER);
    let spec = build_stub_specs(&[(imei.clone(), vec![InvokeKind::Virtual])], DEFAULT_STUB_CLASS).unwrap();
    assert_eq!(spec.methods.len(), 1);
    assert_eq!(spec.class_descriptor, "Lru/innopolis/Stub;");
    let m = &spec.methods[0];
    assert_eq!(m.strategy, ReturnStrategy::ConstructDefault);
    assert_eq!(m.prototype.to_string(), "(Landroid/telephony/TelephonyManager;)Ljava/lang/String;");
    assert!(spec.stub_for(&imei, InvokeKind::Interface).is_some());
    assert!(spec.stub_for(&imei, InvokeKind::Static).is_none());
}

#[test]
fn distinct_targets_get_distinct_names() {
    let a = md("La/B;->x()V");
    let b = md("La/B;->x(I)V");
    let c = md("La_B;->x()V");
    let spec = build_stub_specs(
        &[(a, vec![InvokeKind::Static]), (b, vec![InvokeKind::Static]), (c, vec![InvokeKind::Static])],
        DEFAULT_STUB_CLASS,
    )
    .unwrap();
    let mut names: Vec<&str> = spec.methods.iter().map(|m| m.name.as_str()).collect();
    let n = names.len();
    names.sort();
    names.dedup();
    assert_eq!(names.len(), n);
}

#[test]
fn too_many_parameters_rejected() {
    let params = "I".repeat(255);
    let d = md(&format!("La/B;->many({params})V"));
    assert!(build_stub_specs(&[(d.clone(), vec![InvokeKind::Static])], DEFAULT_STUB_CLASS).is_ok());
    let err = build_stub_specs(&[(d, vec![InvokeKind::Virtual])], DEFAULT_STUB_CLASS).unwrap_err();
    assert!(matches!(err, DexError::Unsupported(_)));
    let wide = md(&format!("La/B;->wide({})V", "J".repeat(128)));
    assert!(build_stub_specs(&[(wide, vec![InvokeKind::Static])], DEFAULT_STUB_CLASS).is_err());
}

fn arb_descriptor() -> impl Strategy<Value = MethodDescriptor> {
    let field = prop::sample::select(vec!["I", "J", "D", "Z", "Ljava/lang/String;", "[B", "Lx/Y;"]);
    (
        prop::sample::select(vec!["La/B;", "Lc/D;", "Landroid/Foo;"]),
        prop::sample::select(vec!["get", "put", "run"]),
        prop::collection::vec(field, 0..5),
        prop::sample::select(RETURN_TYPES.to_vec()),
    )
        .prop_map(|(c, n, ps, r)| {
            MethodDescriptor::new(c, n, Prototype::new(r, ps.into_iter().map(str::to_owned).collect()))
        })
}

fn arb_kind() -> impl Strategy<Value = InvokeKind> {
    prop::sample::select(vec![
        InvokeKind::Virtual,
        InvokeKind::Super,
        InvokeKind::Direct,
        InvokeKind::Static,
        InvokeKind::Interface,
    ])
}

proptest! {
    #[test]
    fn bodies_decode_and_end_in_matching_return(d in arb_descriptor(), kind in arb_kind()) {
        let proto = derive_stub_prototype(&d, kind);
        prop_assert_eq!(&proto.return_type, &d.prototype.return_type);
        prop_assert_eq!(proto.parameters.len(), d.prototype.parameters.len() + usize::from(kind.has_receiver()));
        let strategy = choose_return_strategy(&proto.return_type);
        let refs = Some(ConstructRefs { type_idx: TypeIdx(0), init_idx: MethodIdx(0) });
        let code = emit_stub_code(strategy, &proto, refs).unwrap();
        let decoded = decode_instructions(&code.insns).unwrap();
        let covered: usize = decoded.iter().map(|i| i.len).sum();
        prop_assert_eq!(covered, code.insns.len());
        prop_assert_eq!(decoded.last().unwrap().opcode, expected_return_opcode(&proto.return_type));
        prop_assert_eq!(code.ins_size as u32, proto.parameter_registers());
        prop_assert!(code.registers_size >= code.ins_size + strategy.locals());
    }

    #[test]
    fn build_is_deterministic(hits in prop::collection::vec((arb_descriptor(), prop::collection::vec(arb_kind(), 1..3)), 1..8)) {
        let a = build_stub_specs(&hits, DEFAULT_STUB_CLASS).unwrap();
        let mut reversed = hits.clone();
        reversed.reverse();
        let b = build_stub_specs(&reversed, DEFAULT_STUB_CLASS).unwrap();
        prop_assert_eq!(&a, &b);
        for (d, kinds) in &hits {
            for k in kinds {
                prop_assert!(a.stub_for(d, *k).is_some());
            }
        }
    }
}
