//! Synthesis of the stub class: one public static method per blacklisted
//! target, returning a harmless default value.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use crate::bytecode::{
    InvokeKind, OP_CONST_4, OP_CONST_WIDE_16, OP_INVOKE_DIRECT, OP_NEW_INSTANCE, OP_RETURN, OP_RETURN_OBJECT,
    OP_RETURN_VOID, OP_RETURN_WIDE,
};
use crate::error::{DexError, Result};
use crate::model::descriptor::register_width;
use crate::model::*;

pub const DEFAULT_STUB_CLASS: &str = "Lru/innopolis/Stub;";
pub const STRING_DESCRIPTOR: &str = "Ljava/lang/String;";
const MAX_PARAMETERS: usize = 255;

/// How a stub produces its return value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ReturnStrategy {
    /// `return-void`
    Void,
    /// `const/4 v0, #0; return v0`
    ZeroPrimitive,
    /// `const-wide/16 v0, #0; return-wide v0`
    ZeroWide,
    /// `const/4 v0, #0; return-object v0`
    NullReference,
    /// `new-instance v0, T; invoke-direct {v0}, T-><init>()V; return-object v0`
    ConstructDefault,
}

impl ReturnStrategy {
    /// Registers the body uses below the parameters.
    pub fn locals(self) -> u16 {
        match self {
            ReturnStrategy::Void => 0,
            ReturnStrategy::ZeroWide => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for ReturnStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ReturnStrategy::Void => "VOID",
            ReturnStrategy::ZeroPrimitive => "ZERO_PRIMITIVE",
            ReturnStrategy::ZeroWide => "ZERO_WIDE",
            ReturnStrategy::NullReference => "NULL_REFERENCE",
            ReturnStrategy::ConstructDefault => "CONSTRUCT_DEFAULT",
        };
        f.write_str(s)
    }
}

/// One generated stub.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StubMethod {
    pub name: String,
    pub prototype: Prototype,
    pub strategy: ReturnStrategy,
    pub origin: MethodDescriptor,
    /// Invoke kinds observed at call sites, sorted.
    pub kinds: Vec<InvokeKind>,
}

impl StubMethod {
    /// Whether the stub takes the original receiver as its first parameter.
    pub fn has_receiver(&self) -> bool {
        self.kinds.first().is_some_and(|k| k.has_receiver())
    }

    pub fn descriptor(&self, class_descriptor: &str) -> MethodDescriptor {
        MethodDescriptor::new(class_descriptor.to_owned(), self.name.clone(), self.prototype.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StubSpec {
    pub class_descriptor: String,
    pub methods: Vec<StubMethod>,
}

impl StubSpec {
    /// The stub replacing calls to `origin` made with `kind`.
    pub fn stub_for(&self, origin: &MethodDescriptor, kind: InvokeKind) -> Option<&StubMethod> {
        self.methods
            .iter()
            .find(|m| &m.origin == origin && m.has_receiver() == kind.has_receiver())
    }
}

/// Prototype of the static replacement for `origin` called through `kind`:
/// the receiver's class is prepended for every non-static kind.
pub fn derive_stub_prototype(origin: &MethodDescriptor, kind: InvokeKind) -> Prototype {
    let mut parameters = Vec::with_capacity(origin.prototype.parameters.len() + 1);
    if kind.has_receiver() {
        parameters.push(origin.class.clone());
    }
    parameters.extend(origin.prototype.parameters.iter().cloned());
    Prototype {
        return_type: origin.prototype.return_type.clone(),
        parameters,
    }
}

pub fn choose_return_strategy(return_descriptor: &str) -> ReturnStrategy {
    match return_descriptor {
        "V" => ReturnStrategy::Void,
        "J" | "D" => ReturnStrategy::ZeroWide,
        "Z" | "B" | "S" | "C" | "I" | "F" => ReturnStrategy::ZeroPrimitive,
        STRING_DESCRIPTOR => ReturnStrategy::ConstructDefault,
        _ => ReturnStrategy::NullReference,
    }
}

/// Pool indices a `ConstructDefault` body refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConstructRefs {
    pub type_idx: TypeIdx,
    pub init_idx: MethodIdx,
}

/// Code item implementing `strategy` for a static method of `prototype`.
pub fn emit_stub_code(strategy: ReturnStrategy, prototype: &Prototype, refs: Option<ConstructRefs>) -> Result<CodeItem> {
    let ins: u16 = prototype.parameters.iter().map(|p| register_width(p)).sum();
    let op = u16::from;
    let (insns, outs) = match strategy {
        ReturnStrategy::Void => (vec![op(OP_RETURN_VOID)], 0),
        ReturnStrategy::ZeroPrimitive => (vec![op(OP_CONST_4), op(OP_RETURN)], 0),
        ReturnStrategy::ZeroWide => (vec![op(OP_CONST_WIDE_16), 0x0000, op(OP_RETURN_WIDE)], 0),
        ReturnStrategy::NullReference => (vec![op(OP_CONST_4), op(OP_RETURN_OBJECT)], 0),
        ReturnStrategy::ConstructDefault => {
            let refs = refs.ok_or_else(|| DexError::Invalid("default construction needs type and <init> indices".into()))?;
            let narrow = |v: u32, what: &str| {
                u16::try_from(v).map_err(|_| DexError::Unsupported(format!("{what} index {v} does not fit 16 bits")))
            };
            let type_idx = narrow(refs.type_idx.0, "type")?;
            let init_idx = narrow(refs.init_idx.0, "method")?;
            (
                vec![
                    op(OP_NEW_INSTANCE),
                    type_idx,
                    0x1000 | op(OP_INVOKE_DIRECT),
                    init_idx,
                    0x0000,
                    op(OP_RETURN_OBJECT),
                ],
                1,
            )
        }
    };
    Ok(CodeItem {
        registers_size: strategy.locals() + ins,
        ins_size: ins,
        outs_size: outs,
        debug_info: None,
        insns,
        tries: Vec::new(),
        handlers: Vec::new(),
    })
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '$' { c } else { '_' })
        .collect()
}

/// Groups call targets by (origin, receiver-or-not) and names one stub per group.
pub fn build_stub_specs(hits: &[(MethodDescriptor, Vec<InvokeKind>)], class_descriptor: &str) -> Result<StubSpec> {
    if hits.is_empty() {
        return Err(DexError::Invalid("no call targets to stub".into()));
    }
    let mut groups: BTreeMap<(String, bool), (MethodDescriptor, Vec<InvokeKind>)> = BTreeMap::new();
    for (origin, kinds) in hits {
        for &kind in kinds {
            let entry = groups
                .entry((origin.to_string(), kind.has_receiver()))
                .or_insert_with(|| (origin.clone(), Vec::new()));
            if !entry.1.contains(&kind) {
                entry.1.push(kind);
            }
        }
    }

    let mut used = HashSet::new();
    let mut methods = Vec::with_capacity(groups.len());
    for (_, (origin, mut kinds)) in groups {
        kinds.sort();
        let prototype = derive_stub_prototype(&origin, kinds[0]);
        if prototype.parameters.len() > MAX_PARAMETERS || prototype.parameter_registers() > MAX_PARAMETERS as u32 {
            return Err(DexError::Unsupported(format!(
                "{origin}: stub would need {} parameters ({} registers), limit is {MAX_PARAMETERS}",
                prototype.parameters.len(),
                prototype.parameter_registers()
            )));
        }
        let base = format!("stub_{}_{}", sanitize(&origin.class), sanitize(&origin.name));
        let mut name = base.clone();
        let mut n = 2;
        while !used.insert(name.clone()) {
            name = format!("{base}_{n}");
            n += 1;
        }
        methods.push(StubMethod {
            name,
            strategy: choose_return_strategy(&prototype.return_type),
            prototype,
            origin,
            kinds,
        });
    }
    Ok(StubSpec {
        class_descriptor: class_descriptor.to_owned(),
        methods,
    })
}
