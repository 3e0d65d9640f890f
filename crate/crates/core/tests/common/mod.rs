#![allow(dead_code)]

use dexpatch::blacklist::Blacklist;
use dexpatch::builder::{AnnotationSpec, ClassSpec, CodeSpec, Constant, DexBuilder, FieldSpec, Insn, MethodSpec, TrySpec};
use dexpatch::bytecode::{decode_instructions, scan_invokes, InvokeKind, InvokeSite};
use dexpatch::model::*;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const ALL_INVOKE_OPCODES: [u8; 10] = [0x6e, 0x6f, 0x70, 0x71, 0x72, 0x74, 0x75, 0x76, 0x77, 0x78];

pub fn md(s: &str) -> MethodDescriptor {
    s.parse().unwrap()
}

const PROTOS: &[&str] = &[
    "()V",
    "(I)V",
    "()I",
    "(Ljava/lang/String;)Ljava/lang/String;",
    "(IJ)Z",
    "([B)[B",
    "(Ljava/lang/Object;I)Ljava/lang/Object;",
    "(DF)D",
    "(IIII)J",
    "(Ljava/lang/String;IJLjava/lang/Object;)V",
];

const FIELD_TYPES: &[&str] = &["I", "J", "Z", "Ljava/lang/String;", "[I", "Ljava/lang/Object;"];

const WORDS: &[&str] = &[
    "phone", "imei", "alpha", "\u{e9}t\u{e9}", "\u{4e2d}\u{6587}", "nul\u{0}byte", "\u{1f600}smile", "z", "Zebra", "_", "a b",
];

/// Deterministic random generator of well-formed dex files.
pub struct Gen {
    pub rng: ChaCha8Rng,
    /// Methods that code may call.
    pub callees: Vec<MethodDescriptor>,
    /// Subset of `callees` considered blacklisted.
    pub targets: Vec<MethodDescriptor>,
    /// Invokes emitted to a target, counted by construction.
    pub planted: usize,
    /// Invokes emitted to a non-target callee.
    pub decoys: usize,
    /// Opcodes emitted so far, by value.
    pub opcodes_seen: [bool; 256],
    strings: Vec<String>,
}

impl Gen {
    pub fn new(seed: u64) -> Self {
        let mut g = Gen {
            rng: ChaCha8Rng::seed_from_u64(seed),
            callees: Vec::new(),
            targets: Vec::new(),
            planted: 0,
            decoys: 0,
            opcodes_seen: [false; 256],
            strings: Vec::new(),
        };
        for k in 0..6 {
            for j in 0..4 {
                let proto = PROTOS[(k * 4 + j) % PROTOS.len()];
                g.callees.push(md(&format!("Lfw/Api{k};->call{j}{proto}")));
            }
        }
        g
    }

    pub fn random_string(&mut self) -> String {
        let parts = self.rng.random_range(1..=3);
        let mut s = String::new();
        for _ in 0..parts {
            s.push_str(WORDS.choose(&mut self.rng).unwrap());
            s.push_str(&self.rng.random_range(0..10_000u32).to_string());
        }
        s
    }

    fn pick_string(&mut self) -> String {
        if self.strings.is_empty() || self.rng.random_bool(0.2) {
            let s = self.random_string();
            self.strings.push(s.clone());
            s
        } else {
            self.strings.choose(&mut self.rng).unwrap().clone()
        }
    }

    /// An invoke of `callee`, using a random kind (and range form when requested).
    pub fn invoke(&mut self, callee: &MethodDescriptor, kind: InvokeKind, range: bool) -> Insn {
        let receiver = u16::from(kind.has_receiver());
        let regs = receiver + callee.prototype.parameter_registers() as u16;
        self.opcodes_seen[kind.opcode(range || regs > 5) as usize] = true;
        if range || regs > 5 {
            Insn::invoke_range(kind, callee.clone(), 0, regs as u8)
        } else {
            let args: Vec<u8> = (0..regs as u8).collect();
            Insn::invoke(kind, callee.clone(), &args)
        }
    }

    fn random_kind(&mut self) -> (InvokeKind, bool) {
        let op = *ALL_INVOKE_OPCODES.choose(&mut self.rng).unwrap();
        InvokeKind::from_opcode(op).unwrap()
    }

    fn random_call(&mut self) -> Insn {
        let callee = self.callees.choose(&mut self.rng).unwrap().clone();
        if self.targets.contains(&callee) {
            self.planted += 1;
        } else {
            self.decoys += 1;
        }
        let (kind, range) = self.random_kind();
        self.invoke(&callee, kind, range)
    }

    fn filler(&mut self, class: &ClassSpec) -> Insn {
        match self.rng.random_range(0..12) {
            0 => Insn::const_string(self.rng.random_range(0..16), self.pick_string()),
            1 => Insn::const4(self.rng.random_range(0..16), self.rng.random_range(-8..8)),
            2 => Insn::add_int(self.rng.random_range(0..16), self.rng.random_range(0..16), self.rng.random_range(0..16)),
            3 => Insn::new_instance(self.rng.random_range(0..16), "Ljava/lang/StringBuilder;"),
            4 => Insn::check_cast(self.rng.random_range(0..16), class.descriptor.clone()),
            5 => Insn::const_class(self.rng.random_range(0..16), "Lfw/Api0;"),
            6 => Insn::TypeOp2 {
                opcode: 0x23,
                a: self.rng.random_range(0..16),
                b: self.rng.random_range(0..16),
                class: "[I".into(),
            },
            7 => Insn::TypeOp2 {
                opcode: 0x20,
                a: self.rng.random_range(0..16),
                b: self.rng.random_range(0..16),
                class: "Ljava/lang/String;".into(),
            },
            8 if !class.static_fields.is_empty() => {
                let f = class.static_fields.choose(&mut self.rng).unwrap();
                Insn::FieldOp {
                    opcode: 0x60 + self.rng.random_range(0..14),
                    a: self.rng.random_range(0..16),
                    b: 0,
                    field: FieldDescriptor::new(class.descriptor.clone(), f.name.clone(), f.field_type.clone()),
                }
            }
            9 if !class.instance_fields.is_empty() => {
                let f = class.instance_fields.choose(&mut self.rng).unwrap();
                Insn::FieldOp {
                    opcode: 0x52 + self.rng.random_range(0..14),
                    a: self.rng.random_range(0..16),
                    b: self.rng.random_range(0..16),
                    field: FieldDescriptor::new(class.descriptor.clone(), f.name.clone(), f.field_type.clone()),
                }
            }
            _ => Insn::move_result(self.rng.random_range(0..16)),
        }
    }

    /// A method body of roughly `len` instructions, with `calls` random invokes.
    pub fn code(&mut self, class: &ClassSpec, len: usize, calls: usize) -> CodeSpec {
        let mut insns: Vec<Insn> = (0..len).map(|_| self.filler(class)).collect();
        for _ in 0..calls {
            let at = self.rng.random_range(0..=insns.len());
            let call = self.random_call();
            insns.insert(at, call);
        }
        insns.push(Insn::return_void());
        match self.rng.random_range(0..6) {
            0 => insns.push(Insn::Raw(vec![0x0100, 2, 0, 0, 3, 0, 5, 0])),
            1 => insns.push(Insn::Raw(vec![0x0300, 2, 3, 0, 0x6e6e, 0x7171, 0x0078])),
            2 => insns.push(Insn::Raw(vec![0x0200, 1, 0x6e, 0, 2, 0])),
            _ => {}
        }
        let mut code = CodeSpec::new(16, insns);
        if self.rng.random_bool(0.25) {
            code.tries.push(TrySpec {
                start: 0,
                count: 1,
                catches: vec![("Ljava/lang/Exception;".into(), 0)],
                catch_all: self.rng.random_bool(0.5).then_some(0),
            });
        }
        if self.rng.random_bool(0.2) {
            code.debug_info = Some(vec![0x01, 0x00, 0x07, 0x0e, 0x00]);
        }
        code
    }

    pub fn class(&mut self, descriptor: String, methods: usize, calls_per_method: usize, body_len: usize) -> ClassSpec {
        let mut class = ClassSpec::new(descriptor);
        if self.rng.random_bool(0.3) {
            class.interfaces.push("Ljava/lang/Runnable;".into());
        }
        if self.rng.random_bool(0.5) {
            class.source_file = Some(format!("{}.java", self.random_string()));
        }
        for i in 0..self.rng.random_range(0..3) {
            let ty = FIELD_TYPES.choose(&mut self.rng).unwrap().to_string();
            class.static_fields.push(FieldSpec {
                name: format!("S{i}"),
                field_type: ty,
                access_flags: ACC_PUBLIC | ACC_STATIC,
            });
        }
        for (i, f) in class.static_fields.iter().enumerate() {
            let v = match f.field_type.as_str() {
                "I" => Constant::Int(self.rng.random()),
                "J" => Constant::Long(self.rng.random()),
                "Z" => Constant::Bool(self.rng.random()),
                "Ljava/lang/String;" => Constant::String(self.pick_string()),
                _ => Constant::Null,
            };
            if i == class.static_values.len() && self.rng.random_bool(0.8) {
                class.static_values.push(v);
            }
        }
        for i in 0..self.rng.random_range(0..3) {
            class.instance_fields.push(FieldSpec {
                name: format!("f{i}"),
                field_type: FIELD_TYPES.choose(&mut self.rng).unwrap().to_string(),
                access_flags: ACC_PRIVATE,
            });
        }
        if self.rng.random_bool(0.3) {
            class.annotations.push(AnnotationSpec {
                visibility: 2,
                annotation_type: "Ldalvik/annotation/Signature;".into(),
                elements: vec![("value".into(), Constant::String(self.pick_string()))],
            });
        }
        for j in 0..methods {
            let proto = *PROTOS.choose(&mut self.rng).unwrap();
            let (flags, has_code) = match self.rng.random_range(0..10) {
                0 => (ACC_PUBLIC | ACC_ABSTRACT, false),
                1 => (ACC_PUBLIC | ACC_NATIVE, false),
                2 | 3 => (ACC_PUBLIC | ACC_STATIC, true),
                4 => (ACC_PRIVATE, true),
                _ => (ACC_PUBLIC, true),
            };
            let code = has_code.then(|| self.code(&class, body_len, calls_per_method));
            let mut m = MethodSpec::new(format!("m{j}"), proto, flags, code);
            if self.rng.random_bool(0.1) {
                m.annotations.push(AnnotationSpec {
                    visibility: 1,
                    annotation_type: "Ljava/lang/Deprecated;".into(),
                    elements: Vec::new(),
                });
            }
            class.methods.push(m);
        }
        class
    }
}

/// A random file with `classes` classes and at least `strings` extra strings.
pub fn random_dex(seed: u64, classes: usize, strings: usize) -> DexFile {
    let mut g = Gen::new(seed);
    let mut b = DexBuilder::new();
    for _ in 0..strings {
        let s = g.random_string();
        b.string(&s);
    }
    for i in 0..classes {
        let methods = g.rng.random_range(1..6);
        let class = g.class(format!("Lgen/p{}/C{i};", i % 7), methods, 1, 6);
        b.class(class);
    }
    b.build().unwrap()
}

/// A file with planted calls to blacklisted targets and decoy calls to
/// lookalike methods (same name other class, same class other name, same
/// name other prototype).
pub struct Planted {
    pub dex: DexFile,
    pub blacklist: Blacklist,
    pub targets: Vec<MethodDescriptor>,
    pub planted: usize,
    pub decoys: usize,
    pub opcodes_seen: [bool; 256],
}

pub fn planted_dex(seed: u64, classes: usize, calls_per_method: usize) -> Planted {
    let mut g = Gen::new(seed);
    let targets = vec![
        md("Lfw/Secret;->leak(I)Ljava/lang/String;"),
        md("Lfw/Secret;->count()J"),
        md("Lfw/Secret;->wipe(Ljava/lang/String;IJ[B)V"),
    ];
    let decoys = [
        "Lfw/Other;->leak(I)Ljava/lang/String;",
        "Lfw/Secret;->safe(I)Ljava/lang/String;",
        "Lfw/Secret;->leak(J)Ljava/lang/String;",
        "Lfw/Secret;->count()I",
        "Lfw/Secretive;->count()J",
    ];
    g.callees = targets.clone();
    g.callees.extend(decoys.iter().map(|d| md(d)));
    g.targets = targets.clone();
    let mut b = DexBuilder::new();
    for i in 0..classes {
        let class = g.class(format!("Lapp/K{i};"), 3, calls_per_method, 4);
        b.class(class);
    }
    Planted {
        dex: b.build().unwrap(),
        blacklist: Blacklist::from_descriptors(targets.clone()),
        targets,
        planted: g.planted,
        decoys: g.decoys,
        opcodes_seen: g.opcodes_seen,
    }
}

/// A large file: `classes` classes of `methods` methods with long bodies of
/// filler, extra framework references, and exactly `sites` planted calls.
pub fn large_dex(seed: u64, classes: usize, methods: usize, body_len: usize, extra_refs: usize, sites: usize) -> Planted {
    let mut g = Gen::new(seed);
    let target = md(dexpatch::fixtures::IMEI_GETTER);
    g.targets = vec![target.clone()];
    let mut b = DexBuilder::new();
    for k in 0..extra_refs {
        b.method_ref(&md(&format!("Lfw/Big{};->api{}()V", k % 97, k)));
    }
    let mut specs: Vec<ClassSpec> = (0..classes)
        .map(|i| g.class(format!("Lbig/p{}/C{i};", i % 31), methods, 0, body_len))
        .collect();
    let mut placed = 0;
    while placed < sites {
        let c = g.rng.random_range(0..specs.len());
        let m = g.rng.random_range(0..specs[c].methods.len());
        let Some(code) = specs[c].methods[m].code.as_mut() else { continue };
        let (kind, range) = g.random_kind();
        let call = g.invoke(&target, kind, range);
        code.insns.insert(0, call);
        placed += 1;
    }
    for s in specs.drain(..) {
        b.class(s);
    }
    Planted {
        dex: b.build().unwrap(),
        blacklist: Blacklist::from_descriptors([target.clone()]),
        targets: vec![target],
        planted: sites,
        decoys: 0,
        opcodes_seen: g.opcodes_seen,
    }
}

/// Every invoke in the file, with the class and method containing it.
pub fn all_sites(dex: &DexFile) -> Vec<(TypeIdx, MethodIdx, InvokeSite)> {
    let mut out = Vec::new();
    for class in &dex.class_defs {
        for m in class.methods() {
            if let Some(code) = &m.code {
                for site in scan_invokes(&code.insns).unwrap() {
                    out.push((class.class_idx, m.method_idx, site));
                }
            }
        }
    }
    out
}

/// Number of invokes resolving to one of `targets`.
pub fn count_calls_to(dex: &DexFile, targets: &[MethodDescriptor]) -> usize {
    all_sites(dex)
        .iter()
        .filter(|(_, _, s)| targets.contains(&dex.method_id_to_descriptor(s.method_idx).unwrap()))
        .count()
}

/// Code of a method, found by descriptor.
pub fn code_of<'a>(dex: &'a DexFile, method: &MethodDescriptor) -> Option<&'a CodeItem> {
    dex.class_defs
        .iter()
        .flat_map(|c| c.methods())
        .find(|m| &dex.method_id_to_descriptor(m.method_idx).unwrap() == method)
        .and_then(|m| m.code.as_ref())
}

/// Instruction lengths of a code stream.
pub fn lengths(insns: &[u16]) -> Vec<usize> {
    decode_instructions(insns).unwrap().iter().map(|i| i.len).collect()
}
