use dexpatch::blacklist::*;
use dexpatch::model::{MethodDescriptor, Prototype};
use proptest::prelude::*;

#[test]
fn shipped_policy_file() {
    let b = parse_blacklist(DEFAULT_POLICY).unwrap();
    let lines: Vec<String> = b.descriptors().map(|d| d.to_string()).collect();
    assert_eq!(lines, ["Landroid/telephony/TelephonyManager;->getDeviceId()Ljava/lang/String;"]);
}

#[test]
fn located_errors() {
    let cases: &[(&str, usize, usize)] = &[
        ("La/B;->f(", 1, 10),
        ("\n\nLa/B;-f()V", 3, 6),
        ("La/B;->f()", 1, 11),
        ("La/B;->f()Q", 1, 11),
        ("La/B;->f()V trailing", 1, 12),
        ("java.lang.String.foo", 1, 1),
        ("La/B;->f(V)V", 1, 10),
        ("La/B;->g()V\nLa/B;->f(I", 2, 11),
    ];
    for &(text, line, column) in cases {
        let err = parse_blacklist(text).unwrap_err();
        assert_eq!((err.line, err.column), (line, column), "{text:?}: {err}");
    }
}

#[test]
fn class_initializer_rejected() {
    assert!(parse_blacklist("La/B;-><clinit>()V").is_err());
}

#[test]
fn display_round_trips() {
    let text = "# x\nLa/B;->f()V\nLc/D;->g([[ILjava/lang/String;J)[B\n";
    let b = parse_blacklist(text).unwrap();
    assert_eq!(parse_blacklist(&b.to_string()).unwrap().entries().len(), 2);
    assert_eq!(b.entries()[1].line, 3);
}

fn arb_type(allow_void: bool) -> impl Strategy<Value = String> {
    let base = prop_oneof![
        prop::sample::select(vec!["Z", "B", "S", "C", "I", "J", "F", "D"]).prop_map(str::to_owned),
        "[a-z]{1,4}(/[A-Za-z$_][A-Za-z0-9$_]{0,5}){0,3}".prop_map(|s| format!("L{s};")),
    ];
    let arr = (0usize..3, base).prop_map(|(d, t)| format!("{}{t}", "[".repeat(d)));
    if allow_void {
        prop_oneof![Just("V".to_owned()), arr].boxed()
    } else {
        arr.boxed()
    }
}

fn arb_method() -> impl Strategy<Value = MethodDescriptor> {
    (
        "[a-z]{1,4}(/[A-Z][a-zA-Z0-9]{0,5}){1,3}",
        "[a-zA-Z_$][a-zA-Z0-9_$]{0,8}",
        prop::collection::vec(arb_type(false), 0..5),
        arb_type(true),
    )
        .prop_map(|(c, n, ps, r)| MethodDescriptor::new(format!("L{c};"), n, Prototype::new(r, ps)))
}

proptest! {
    #[test]
    fn print_parse_round_trip(ms in prop::collection::vec(arb_method(), 0..10)) {
        let b = Blacklist::from_descriptors(ms.clone());
        let text = b.to_string();
        let back = parse_blacklist(&text).unwrap();
        let got: Vec<&MethodDescriptor> = back.descriptors().collect();
        let want: Vec<&MethodDescriptor> = b.descriptors().collect();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn total_over_arbitrary_text(text in "\\PC{0,80}") {
        match parse_blacklist(&text) {
            Ok(_) => {}
            Err(e) => prop_assert!(e.line >= 1 && e.column >= 1),
        }
    }
}
