//! Assemble a `DexFile` from descriptors and symbolic instructions.
//!
//! Pool indices are resolved after every referenced string, type, field and
//! method is known, so callers never deal with raw indices.

use crate::bytecode::InvokeKind;
use crate::error::{DexError, Result};
use crate::io::encoded::{write_encoded_annotation, write_encoded_array, EncodedAnnotation, EncodedValue};
use crate::model::descriptor::register_width;
use crate::model::*;
use crate::pool::{PoolBuilder, Pools};

/// One instruction, with pool references written as descriptors.
#[derive(Debug, Clone, PartialEq)]
pub enum Insn {
    /// Encoded code units carrying no pool reference.
    Raw(Vec<u16>),
    ConstString { dst: u8, value: String },
    /// 21c type ops: const-class, check-cast, new-instance.
    TypeOp { opcode: u8, reg: u8, class: String },
    /// 22c type ops: instance-of, new-array.
    TypeOp2 { opcode: u8, a: u8, b: u8, class: String },
    /// iget*/iput* (22c, `a`/`b` are 4-bit) and sget*/sput* (21c, only `a` used).
    FieldOp { opcode: u8, a: u8, b: u8, field: FieldDescriptor },
    Invoke { opcode: u8, args: Vec<u8>, method: MethodDescriptor },
    InvokeRange { opcode: u8, first: u16, count: u8, method: MethodDescriptor },
}

impl Insn {
    pub fn nop() -> Insn {
        Insn::Raw(vec![0x0000])
    }

    pub fn return_void() -> Insn {
        Insn::Raw(vec![0x000e])
    }

    pub fn return_value(reg: u8) -> Insn {
        Insn::Raw(vec![(u16::from(reg) << 8) | 0x0f])
    }

    pub fn return_object(reg: u8) -> Insn {
        Insn::Raw(vec![(u16::from(reg) << 8) | 0x11])
    }

    pub fn move_result(reg: u8) -> Insn {
        Insn::Raw(vec![(u16::from(reg) << 8) | 0x0a])
    }

    pub fn move_result_object(reg: u8) -> Insn {
        Insn::Raw(vec![(u16::from(reg) << 8) | 0x0c])
    }

    /// const/4 with a literal in -8..=7.
    pub fn const4(reg: u8, value: i8) -> Insn {
        Insn::Raw(vec![((value as u16 & 0xf) << 12) | (u16::from(reg & 0xf) << 8) | 0x12])
    }

    pub fn add_int(dst: u8, a: u8, b: u8) -> Insn {
        Insn::Raw(vec![(u16::from(dst) << 8) | 0x90, (u16::from(b) << 8) | u16::from(a)])
    }

    pub fn const_string(dst: u8, value: impl Into<String>) -> Insn {
        Insn::ConstString {
            dst,
            value: value.into(),
        }
    }

    pub fn new_instance(reg: u8, class: impl Into<String>) -> Insn {
        Insn::TypeOp {
            opcode: 0x22,
            reg,
            class: class.into(),
        }
    }

    pub fn check_cast(reg: u8, class: impl Into<String>) -> Insn {
        Insn::TypeOp {
            opcode: 0x1f,
            reg,
            class: class.into(),
        }
    }

    pub fn const_class(reg: u8, class: impl Into<String>) -> Insn {
        Insn::TypeOp {
            opcode: 0x1c,
            reg,
            class: class.into(),
        }
    }

    pub fn invoke(kind: InvokeKind, method: MethodDescriptor, args: &[u8]) -> Insn {
        Insn::Invoke {
            opcode: kind.opcode(false),
            args: args.to_vec(),
            method,
        }
    }

    pub fn invoke_range(kind: InvokeKind, method: MethodDescriptor, first: u16, count: u8) -> Insn {
        Insn::InvokeRange {
            opcode: kind.opcode(true),
            first,
            count,
            method,
        }
    }

    fn collect(&self, pools: &mut PoolBuilder) {
        match self {
            Insn::Raw(_) => {}
            Insn::ConstString { value, .. } => pools.add_string(value),
            Insn::TypeOp { class, .. } | Insn::TypeOp2 { class, .. } => pools.add_type(class),
            Insn::FieldOp { field, .. } => pools.add_field(field),
            Insn::Invoke { method, .. } | Insn::InvokeRange { method, .. } => pools.add_method(method),
        }
    }

    fn outs(&self) -> u16 {
        match self {
            Insn::Invoke { args, .. } => args.len() as u16,
            Insn::InvokeRange { count, .. } => u16::from(*count),
            _ => 0,
        }
    }

    fn assemble(&self, pools: &Pools, out: &mut Vec<u16>) -> Result<()> {
        let missing = |what: String| DexError::Invalid(format!("unresolved reference {what}"));
        let idx16 = |v: u32| -> Result<u16> {
            u16::try_from(v).map_err(|_| DexError::Unsupported(format!("index {v} needs a jumbo instruction")))
        };
        match self {
            Insn::Raw(units) => out.extend_from_slice(units),
            Insn::ConstString { dst, value } => {
                let s = pools.string(value).ok_or_else(|| missing(value.clone()))?;
                out.extend_from_slice(&[(u16::from(*dst) << 8) | 0x1a, idx16(s.0)?]);
            }
            Insn::TypeOp { opcode, reg, class } => {
                let t = pools.type_idx(class).ok_or_else(|| missing(class.clone()))?;
                out.extend_from_slice(&[(u16::from(*reg) << 8) | u16::from(*opcode), idx16(t.0)?]);
            }
            Insn::TypeOp2 { opcode, a, b, class } => {
                let t = pools.type_idx(class).ok_or_else(|| missing(class.clone()))?;
                let head = (u16::from(*b & 0xf) << 12) | (u16::from(*a & 0xf) << 8) | u16::from(*opcode);
                out.extend_from_slice(&[head, idx16(t.0)?]);
            }
            Insn::FieldOp { opcode, a, b, field } => {
                let f = pools.field(field).ok_or_else(|| missing(field.to_string()))?;
                let head = if *opcode >= 0x60 {
                    (u16::from(*a) << 8) | u16::from(*opcode)
                } else {
                    (u16::from(*b & 0xf) << 12) | (u16::from(*a & 0xf) << 8) | u16::from(*opcode)
                };
                out.extend_from_slice(&[head, idx16(f.0)?]);
            }
            Insn::Invoke { opcode, args, method } => {
                if args.len() > 5 {
                    return Err(DexError::Invalid(format!("{} arguments need invoke/range", args.len())));
                }
                let m = pools.method(method).ok_or_else(|| missing(method.to_string()))?;
                let reg = |i: usize| u16::from(args.get(i).copied().unwrap_or(0) & 0xf);
                let head = ((args.len() as u16) << 12) | (reg(4) << 8) | u16::from(*opcode);
                let regs = (reg(3) << 12) | (reg(2) << 8) | (reg(1) << 4) | reg(0);
                out.extend_from_slice(&[head, idx16(m.0)?, regs]);
            }
            Insn::InvokeRange {
                opcode,
                first,
                count,
                method,
            } => {
                let m = pools.method(method).ok_or_else(|| missing(method.to_string()))?;
                out.extend_from_slice(&[(u16::from(*count) << 8) | u16::from(*opcode), idx16(m.0)?, *first]);
            }
        }
        Ok(())
    }
}

/// Scalar constants usable in static values and annotations.
#[derive(Debug, Clone, PartialEq)]
pub enum Constant {
    Int(i32),
    Long(i64),
    Bool(bool),
    Null,
    String(String),
    Type(String),
}

impl Constant {
    fn collect(&self, pools: &mut PoolBuilder) {
        match self {
            Constant::String(s) => pools.add_string(s),
            Constant::Type(t) => pools.add_type(t),
            _ => {}
        }
    }

    fn encode(&self, pools: &Pools) -> EncodedValue {
        match self {
            Constant::Int(v) => EncodedValue::Int(*v),
            Constant::Long(v) => EncodedValue::Long(*v),
            Constant::Bool(b) => EncodedValue::Boolean(*b),
            Constant::Null => EncodedValue::Null,
            Constant::String(s) => EncodedValue::String(pools.string(s).expect("collected").0),
            Constant::Type(t) => EncodedValue::Type(pools.type_idx(t).expect("collected").0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationSpec {
    pub visibility: u8,
    pub annotation_type: String,
    pub elements: Vec<(String, Constant)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrySpec {
    pub start: u32,
    pub count: u16,
    pub catches: Vec<(String, u32)>,
    pub catch_all: Option<u32>,
}

/// Method body. `ins` and `outs` are derived; `locals` is the number of
/// registers below the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeSpec {
    pub locals: u16,
    pub insns: Vec<Insn>,
    pub tries: Vec<TrySpec>,
    pub debug_info: Option<Vec<u8>>,
}

impl CodeSpec {
    pub fn new(locals: u16, insns: Vec<Insn>) -> Self {
        CodeSpec {
            locals,
            insns,
            tries: Vec::new(),
            debug_info: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSpec {
    pub name: String,
    pub prototype: Prototype,
    pub access_flags: u32,
    pub code: Option<CodeSpec>,
    pub annotations: Vec<AnnotationSpec>,
}

impl MethodSpec {
    pub fn new(name: impl Into<String>, prototype: &str, access_flags: u32, code: Option<CodeSpec>) -> Self {
        MethodSpec {
            name: name.into(),
            prototype: prototype.parse().expect("valid prototype literal"),
            access_flags,
            code,
            annotations: Vec::new(),
        }
    }

    fn is_direct(&self) -> bool {
        self.access_flags & (ACC_STATIC | ACC_PRIVATE | ACC_CONSTRUCTOR) != 0 || self.name.starts_with('<')
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldSpec {
    pub name: String,
    pub field_type: String,
    pub access_flags: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassSpec {
    pub descriptor: String,
    pub access_flags: u32,
    pub superclass: Option<String>,
    pub interfaces: Vec<String>,
    pub source_file: Option<String>,
    pub static_fields: Vec<FieldSpec>,
    pub instance_fields: Vec<FieldSpec>,
    pub methods: Vec<MethodSpec>,
    pub static_values: Vec<Constant>,
    pub annotations: Vec<AnnotationSpec>,
}

impl ClassSpec {
    pub fn new(descriptor: impl Into<String>) -> Self {
        ClassSpec {
            descriptor: descriptor.into(),
            access_flags: ACC_PUBLIC,
            superclass: Some("Ljava/lang/Object;".to_owned()),
            interfaces: Vec::new(),
            source_file: None,
            static_fields: Vec::new(),
            instance_fields: Vec::new(),
            methods: Vec::new(),
            static_values: Vec::new(),
            annotations: Vec::new(),
        }
    }

    pub fn method(mut self, method: MethodSpec) -> Self {
        self.methods.push(method);
        self
    }

    pub fn superclass(mut self, superclass: impl Into<String>) -> Self {
        self.superclass = Some(superclass.into());
        self
    }

    fn method_descriptor(&self, m: &MethodSpec) -> MethodDescriptor {
        MethodDescriptor::new(self.descriptor.clone(), m.name.clone(), m.prototype.clone())
    }

    fn field_descriptor(&self, f: &FieldSpec) -> FieldDescriptor {
        FieldDescriptor::new(self.descriptor.clone(), f.name.clone(), f.field_type.clone())
    }
}

/// Collects class specifications and extra pool entries, then builds a validated `DexFile`.
#[derive(Debug, Default, Clone)]
pub struct DexBuilder {
    classes: Vec<ClassSpec>,
    extra: PoolBuilder,
}

impl DexBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn class(&mut self, class: ClassSpec) -> &mut Self {
        self.classes.push(class);
        self
    }

    /// Adds a string to the pool without referencing it from code.
    pub fn string(&mut self, s: &str) -> &mut Self {
        self.extra.add_string(s);
        self
    }

    /// Adds a method reference to the pool without calling it.
    pub fn method_ref(&mut self, m: &MethodDescriptor) -> &mut Self {
        self.extra.add_method(m);
        self
    }

    pub fn build(&self) -> Result<DexFile> {
        let mut pb = self.extra.clone();
        for class in &self.classes {
            pb.add_type(&class.descriptor);
            if let Some(s) = &class.superclass {
                pb.add_type(s);
            }
            for i in &class.interfaces {
                pb.add_type(i);
            }
            if let Some(s) = &class.source_file {
                pb.add_string(s);
            }
            for f in class.static_fields.iter().chain(&class.instance_fields) {
                pb.add_field(&class.field_descriptor(f));
            }
            for v in &class.static_values {
                v.collect(&mut pb);
            }
            for a in class.annotations.iter().chain(class.methods.iter().flat_map(|m| &m.annotations)) {
                pb.add_type(&a.annotation_type);
                for (name, v) in &a.elements {
                    pb.add_string(name);
                    v.collect(&mut pb);
                }
            }
            for m in &class.methods {
                pb.add_method(&class.method_descriptor(m));
                if let Some(code) = &m.code {
                    for insn in &code.insns {
                        insn.collect(&mut pb);
                    }
                    for t in &code.tries {
                        for (ty, _) in &t.catches {
                            pb.add_type(ty);
                        }
                    }
                }
            }
        }
        let pools = pb.build();
        let class_defs = self
            .classes
            .iter()
            .map(|c| assemble_class(c, &pools))
            .collect::<Result<Vec<_>>>()?;
        let dex = pools.into_dex(class_defs);
        dex.validate()?;
        Ok(dex)
    }
}

fn encode_annotation(a: &AnnotationSpec, pools: &Pools) -> Annotation {
    let mut elements: Vec<(u32, EncodedValue)> = a
        .elements
        .iter()
        .map(|(name, v)| (pools.string(name).expect("collected").0, v.encode(pools)))
        .collect();
    elements.sort_by_key(|(name, _)| *name);
    let mut encoded = Vec::new();
    write_encoded_annotation(
        &mut encoded,
        &EncodedAnnotation {
            type_idx: pools.type_idx(&a.annotation_type).expect("collected").0,
            elements,
        },
    );
    Annotation {
        visibility: a.visibility,
        encoded,
    }
}

fn assemble_class(class: &ClassSpec, pools: &Pools) -> Result<ClassDef> {
    let ty = |d: &str| pools.type_idx(d).expect("collected");
    let mut def = ClassDef::new(ty(&class.descriptor), class.access_flags, class.superclass.as_deref().map(ty));
    def.interfaces = class.interfaces.iter().map(|i| ty(i)).collect();
    def.source_file = class.source_file.as_deref().map(|s| pools.string(s).expect("collected"));

    let mut data = ClassData::default();
    for (specs, list) in [
        (&class.static_fields, &mut data.static_fields),
        (&class.instance_fields, &mut data.instance_fields),
    ] {
        for f in specs {
            list.push(EncodedField {
                field_idx: pools.field(&class.field_descriptor(f)).expect("collected"),
                access_flags: f.access_flags,
            });
        }
        list.sort_by_key(|f| f.field_idx);
    }

    let mut annotated_methods = Vec::new();
    for m in &class.methods {
        let method_idx = pools.method(&class.method_descriptor(m)).expect("collected");
        let code = m.code.as_ref().map(|c| assemble_code(c, m, pools)).transpose()?;
        let encoded = EncodedMethod {
            method_idx,
            access_flags: m.access_flags,
            code,
        };
        if m.is_direct() {
            data.direct_methods.push(encoded);
        } else {
            data.virtual_methods.push(encoded);
        }
        if !m.annotations.is_empty() {
            annotated_methods.push((method_idx, m.annotations.iter().map(|a| encode_annotation(a, pools)).collect()));
        }
    }
    data.direct_methods.sort_by_key(|m| m.method_idx);
    data.virtual_methods.sort_by_key(|m| m.method_idx);
    annotated_methods.sort_by_key(|(idx, _)| *idx);

    let has_members = !(data.static_fields.is_empty()
        && data.instance_fields.is_empty()
        && data.direct_methods.is_empty()
        && data.virtual_methods.is_empty());
    if has_members {
        def.class_data = Some(data);
    }
    if !class.static_values.is_empty() {
        let values: Vec<EncodedValue> = class.static_values.iter().map(|v| v.encode(pools)).collect();
        let mut bytes = Vec::new();
        write_encoded_array(&mut bytes, &values);
        def.static_values = Some(EncodedArray(bytes));
    }
    if !class.annotations.is_empty() || !annotated_methods.is_empty() {
        def.annotations = Some(AnnotationsDirectory {
            class_annotations: if class.annotations.is_empty() {
                None
            } else {
                Some(class.annotations.iter().map(|a| encode_annotation(a, pools)).collect())
            },
            methods: annotated_methods,
            ..Default::default()
        });
    }
    Ok(def)
}

fn assemble_code(code: &CodeSpec, method: &MethodSpec, pools: &Pools) -> Result<CodeItem> {
    let receiver = u16::from(method.access_flags & ACC_STATIC == 0);
    let ins: u16 = receiver + method.prototype.parameters.iter().map(|p| register_width(p)).sum::<u16>();
    let mut insns = Vec::new();
    for insn in &code.insns {
        insn.assemble(pools, &mut insns)?;
    }
    let mut item = CodeItem {
        registers_size: code.locals + ins,
        ins_size: ins,
        outs_size: code.insns.iter().map(Insn::outs).max().unwrap_or(0),
        debug_info: code.debug_info.clone(),
        insns,
        tries: Vec::new(),
        handlers: Vec::new(),
    };
    for t in &code.tries {
        item.handlers.push(CatchHandler {
            catches: t
                .catches
                .iter()
                .map(|(ty, addr)| (pools.type_idx(ty).expect("collected"), *addr))
                .collect(),
            catch_all: t.catch_all,
        });
        item.tries.push(TryItem {
            start_addr: t.start,
            insn_count: t.count,
            handler: item.handlers.len() - 1,
        });
    }
    Ok(item)
}
