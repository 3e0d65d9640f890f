//! Merging stub definitions into an application dex.
//!
//! All pools are rebuilt from content and re-sorted; every index held by the
//! original file (class definitions, code, annotations, static values) is
//! then rewritten through an `IndexRemap`.

use crate::bytecode::{decode_instructions, IndexKind};
use crate::error::{DexError, Pool, Result};
use crate::io::encoded::{remap_encoded_annotation, remap_encoded_array, RefKind};
use crate::model::*;
use crate::pool::{PoolBuilder, Pools};
use crate::stubgen::{emit_stub_code, ConstructRefs, ReturnStrategy, StubSpec, STRING_DESCRIPTOR};

const OBJECT_DESCRIPTOR: &str = "Ljava/lang/Object;";

/// Old index to new index, one table per pool.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IndexRemap {
    pub strings: Vec<u32>,
    pub types: Vec<u32>,
    pub protos: Vec<u32>,
    pub fields: Vec<u32>,
    pub methods: Vec<u32>,
}

fn lookup(table: &[u32], pool: Pool, index: u32) -> Result<u32> {
    table.get(index as usize).copied().ok_or(DexError::IndexOutOfRange {
        pool,
        index,
        size: table.len(),
        offset: None,
    })
}

impl IndexRemap {
    /// The identity mapping for a file's pools.
    pub fn identity(dex: &DexFile) -> Self {
        let ids = |n: usize| (0..n as u32).collect();
        IndexRemap {
            strings: ids(dex.strings.len()),
            types: ids(dex.type_ids.len()),
            protos: ids(dex.proto_ids.len()),
            fields: ids(dex.field_ids.len()),
            methods: ids(dex.method_ids.len()),
        }
    }

    pub fn string(&self, idx: StringIdx) -> Result<StringIdx> {
        lookup(&self.strings, Pool::Strings, idx.0).map(StringIdx)
    }

    pub fn type_idx(&self, idx: TypeIdx) -> Result<TypeIdx> {
        lookup(&self.types, Pool::Types, idx.0).map(TypeIdx)
    }

    pub fn proto(&self, idx: ProtoIdx) -> Result<ProtoIdx> {
        lookup(&self.protos, Pool::Protos, idx.0).map(ProtoIdx)
    }

    pub fn field(&self, idx: FieldIdx) -> Result<FieldIdx> {
        lookup(&self.fields, Pool::Fields, idx.0).map(FieldIdx)
    }

    pub fn method(&self, idx: MethodIdx) -> Result<MethodIdx> {
        lookup(&self.methods, Pool::Methods, idx.0).map(MethodIdx)
    }

    fn by_kind(&self, kind: RefKind, index: u32) -> Result<u32> {
        match kind {
            RefKind::String => lookup(&self.strings, Pool::Strings, index),
            RefKind::Type => lookup(&self.types, Pool::Types, index),
            RefKind::Field => lookup(&self.fields, Pool::Fields, index),
            RefKind::Method => lookup(&self.methods, Pool::Methods, index),
        }
    }

    fn from_pools(dex: &DexFile, pools: &Pools) -> Result<Self> {
        let missing = || DexError::Invalid("merged pools lost an original entry".into());
        let strings = dex
            .strings
            .iter()
            .map(|s| pools.string(s).map(|i| i.0).ok_or_else(missing))
            .collect::<Result<_>>()?;
        let types = (0..dex.type_ids.len())
            .map(|i| pools.type_idx(dex.resolve_type(TypeIdx(i as u32))?).map(|t| t.0).ok_or_else(missing))
            .collect::<Result<_>>()?;
        let protos = (0..dex.proto_ids.len())
            .map(|i| pools.proto(&dex.prototype(ProtoIdx(i as u32))?).map(|p| p.0).ok_or_else(missing))
            .collect::<Result<_>>()?;
        let fields = (0..dex.field_ids.len())
            .map(|i| {
                pools
                    .field(&dex.field_id_to_descriptor(FieldIdx(i as u32))?)
                    .map(|f| f.0)
                    .ok_or_else(missing)
            })
            .collect::<Result<_>>()?;
        let methods = (0..dex.method_ids.len())
            .map(|i| {
                pools
                    .method(&dex.method_id_to_descriptor(MethodIdx(i as u32))?)
                    .map(|m| m.0)
                    .ok_or_else(missing)
            })
            .collect::<Result<_>>()?;
        Ok(IndexRemap {
            strings,
            types,
            protos,
            fields,
            methods,
        })
    }
}

/// Rewrites every pool index embedded in the instruction stream. Code length,
/// registers and all non-index code units are unchanged; debug info is dropped.
pub fn remap_code_item(code: &CodeItem, remap: &IndexRemap) -> Result<CodeItem> {
    let mut insns = code.insns.clone();
    for insn in decode_instructions(&code.insns)? {
        let Some(r) = insn.index else { continue };
        let new = match r.kind {
            IndexKind::String => remap.by_kind(RefKind::String, r.value),
            IndexKind::Type => remap.by_kind(RefKind::Type, r.value),
            IndexKind::Field => remap.by_kind(RefKind::Field, r.value),
            IndexKind::Method => remap.by_kind(RefKind::Method, r.value),
        }
        .map_err(|e| DexError::MalformedCode {
            unit: insn.offset,
            reason: e.to_string(),
        })?;
        if r.wide {
            insns[insn.offset + 1] = new as u16;
            insns[insn.offset + 2] = (new >> 16) as u16;
        } else {
            insns[insn.offset + 1] = u16::try_from(new).map_err(|_| DexError::Capacity {
                pool: match r.kind {
                    IndexKind::String => Pool::Strings,
                    IndexKind::Type => Pool::Types,
                    IndexKind::Field => Pool::Fields,
                    IndexKind::Method => Pool::Methods,
                },
                count: new as usize + 1,
                limit: MAX_POOL_16,
            })?;
        }
    }
    let handlers = code
        .handlers
        .iter()
        .map(|h| {
            Ok(CatchHandler {
                catches: h
                    .catches
                    .iter()
                    .map(|&(t, addr)| Ok((remap.type_idx(t)?, addr)))
                    .collect::<Result<_>>()?,
                catch_all: h.catch_all,
            })
        })
        .collect::<Result<_>>()?;
    Ok(CodeItem {
        registers_size: code.registers_size,
        ins_size: code.ins_size,
        outs_size: code.outs_size,
        debug_info: None,
        insns,
        tries: code.tries.clone(),
        handlers,
    })
}

fn remap_annotation_set(set: &AnnotationSet, remap: &IndexRemap) -> Result<AnnotationSet> {
    let mut f = |kind, idx| remap.by_kind(kind, idx);
    set.iter()
        .map(|a| {
            Ok(Annotation {
                visibility: a.visibility,
                encoded: remap_encoded_annotation(&a.encoded, &mut f)?,
            })
        })
        .collect()
}

fn remap_annotations(dir: &AnnotationsDirectory, remap: &IndexRemap) -> Result<AnnotationsDirectory> {
    let class_annotations = dir
        .class_annotations
        .as_ref()
        .map(|s| remap_annotation_set(s, remap))
        .transpose()?;
    let mut fields = dir
        .fields
        .iter()
        .map(|(f, s)| Ok((remap.field(*f)?, remap_annotation_set(s, remap)?)))
        .collect::<Result<Vec<_>>>()?;
    fields.sort_by_key(|(f, _)| *f);
    let mut methods = dir
        .methods
        .iter()
        .map(|(m, s)| Ok((remap.method(*m)?, remap_annotation_set(s, remap)?)))
        .collect::<Result<Vec<_>>>()?;
    methods.sort_by_key(|(m, _)| *m);
    let mut parameters = dir
        .parameters
        .iter()
        .map(|(m, sets)| {
            let sets = sets
                .iter()
                .map(|s| s.as_ref().map(|s| remap_annotation_set(s, remap)).transpose())
                .collect::<Result<Vec<_>>>()?;
            Ok((remap.method(*m)?, sets))
        })
        .collect::<Result<Vec<_>>>()?;
    parameters.sort_by_key(|(m, _)| *m);
    Ok(AnnotationsDirectory {
        class_annotations,
        fields,
        methods,
        parameters,
    })
}

/// Applies `remap` to every index held by a class definition.
pub fn remap_class_def(class: &ClassDef, remap: &IndexRemap) -> Result<ClassDef> {
    let class_data = class
        .class_data
        .as_ref()
        .map(|data| -> Result<ClassData> {
            let fields = |list: &[EncodedField]| -> Result<Vec<EncodedField>> {
                let mut out = list
                    .iter()
                    .map(|f| {
                        Ok(EncodedField {
                            field_idx: remap.field(f.field_idx)?,
                            access_flags: f.access_flags,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                out.sort_by_key(|f| f.field_idx);
                Ok(out)
            };
            let methods = |list: &[EncodedMethod]| -> Result<Vec<EncodedMethod>> {
                let mut out = list
                    .iter()
                    .map(|m| {
                        Ok(EncodedMethod {
                            method_idx: remap.method(m.method_idx)?,
                            access_flags: m.access_flags,
                            code: m.code.as_ref().map(|c| remap_code_item(c, remap)).transpose()?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                out.sort_by_key(|m| m.method_idx);
                Ok(out)
            };
            Ok(ClassData {
                static_fields: fields(&data.static_fields)?,
                instance_fields: fields(&data.instance_fields)?,
                direct_methods: methods(&data.direct_methods)?,
                virtual_methods: methods(&data.virtual_methods)?,
            })
        })
        .transpose()?;
    let mut f = |kind, idx| remap.by_kind(kind, idx);
    Ok(ClassDef {
        class_idx: remap.type_idx(class.class_idx)?,
        access_flags: class.access_flags,
        superclass: class.superclass.map(|s| remap.type_idx(s)).transpose()?,
        interfaces: class
            .interfaces
            .iter()
            .map(|&i| remap.type_idx(i))
            .collect::<Result<_>>()?,
        source_file: class.source_file.map(|s| remap.string(s)).transpose()?,
        annotations: class.annotations.as_ref().map(|d| remap_annotations(d, remap)).transpose()?,
        class_data,
        static_values: class
            .static_values
            .as_ref()
            .map(|v| remap_encoded_array(&v.0, &mut f).map(EncodedArray))
            .transpose()?,
    })
}

/// Result of merging a stub class into a file.
#[derive(Debug, Clone)]
pub struct Merged {
    pub dex: DexFile,
    pub remap: IndexRemap,
    /// New method index of each stub, parallel to `StubSpec::methods`.
    pub stub_methods: Vec<MethodIdx>,
}

/// Adds the stub class described by `spec` to `dex`, rebuilding all pools.
pub fn merge_stub(dex: &DexFile, spec: &StubSpec) -> Result<Merged> {
    if spec.methods.is_empty() {
        return Err(DexError::Invalid("stub specification has no methods".into()));
    }
    if dex.find_class_def(&spec.class_descriptor).is_some() {
        return Err(DexError::ClassAlreadyDefined(spec.class_descriptor.clone()));
    }
    let needs_string_ctor = spec
        .methods
        .iter()
        .any(|m| m.strategy == ReturnStrategy::ConstructDefault);
    let string_init = MethodDescriptor::new(STRING_DESCRIPTOR, "<init>", Prototype::new("V", Vec::new()));

    let mut pb = PoolBuilder::new();
    pb.add_dex(dex)?;
    pb.add_type(&spec.class_descriptor);
    pb.add_type(OBJECT_DESCRIPTOR);
    if needs_string_ctor {
        pb.add_method(&string_init);
    }
    let stub_descriptors: Vec<MethodDescriptor> = spec
        .methods
        .iter()
        .map(|m| m.descriptor(&spec.class_descriptor))
        .collect();
    for d in &stub_descriptors {
        pb.add_method(d);
    }
    if pb.method_count() > MAX_POOL_16 {
        return Err(DexError::Capacity {
            pool: Pool::Methods,
            count: pb.method_count(),
            limit: MAX_POOL_16,
        });
    }

    let pools = pb.build();
    let remap = IndexRemap::from_pools(dex, &pools)?;
    let mut class_defs = dex
        .class_defs
        .iter()
        .map(|c| remap_class_def(c, &remap))
        .collect::<Result<Vec<_>>>()?;

    let refs = needs_string_ctor.then(|| ConstructRefs {
        type_idx: pools.type_idx(STRING_DESCRIPTOR).expect("added"),
        init_idx: pools.method(&string_init).expect("added"),
    });
    let stub_methods: Vec<MethodIdx> = stub_descriptors
        .iter()
        .map(|d| pools.method(d).expect("added"))
        .collect();
    let mut direct_methods = spec
        .methods
        .iter()
        .zip(&stub_methods)
        .map(|(m, &method_idx)| {
            Ok(EncodedMethod {
                method_idx,
                access_flags: ACC_PUBLIC | ACC_STATIC,
                code: Some(emit_stub_code(m.strategy, &m.prototype, refs)?),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    direct_methods.sort_by_key(|m| m.method_idx);
    let mut stub_class = ClassDef::new(
        pools.type_idx(&spec.class_descriptor).expect("added"),
        ACC_PUBLIC,
        Some(pools.type_idx(OBJECT_DESCRIPTOR).expect("added")),
    );
    stub_class.class_data = Some(ClassData {
        direct_methods,
        ..Default::default()
    });
    class_defs.push(stub_class);

    let merged = pools.into_dex(class_defs);
    merged.validate()?;
    Ok(Merged {
        dex: merged,
        remap,
        stub_methods,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bytecode::InvokeKind;
    use crate::stubgen::{build_stub_specs, DEFAULT_STUB_CLASS};

    #[test]
    fn identity_remap_leaves_code_untouched() {
        let code = CodeItem {
            registers_size: 2,
            ins_size: 1,
            outs_size: 1,
            debug_info: None,
            insns: vec![0x001a, 0x0003, 0x106e, 0x0001, 0x0001, 0x000e],
            tries: Vec::new(),
            handlers: Vec::new(),
        };
        let remap = IndexRemap {
            strings: (0..4).collect(),
            methods: (0..2).collect(),
            ..Default::default()
        };
        assert_eq!(remap_code_item(&code, &remap).unwrap(), code);
    }

    #[test]
    fn remap_touches_only_index_units() {
        let code = CodeItem {
            insns: vec![0x106e, 0x0001, 0x0002, 0x000e],
            ..Default::default()
        };
        let remap = IndexRemap {
            methods: vec![0, 9],
            ..Default::default()
        };
        assert_eq!(remap_code_item(&code, &remap).unwrap().insns, [0x106e, 0x0009, 0x0002, 0x000e]);
    }

    #[test]
    fn overflowing_index_is_a_capacity_error() {
        let code = CodeItem {
            insns: vec![0x001a, 0x0000],
            ..Default::default()
        };
        let remap = IndexRemap {
            strings: vec![0x1_0000],
            ..Default::default()
        };
        assert!(matches!(remap_code_item(&code, &remap), Err(DexError::Capacity { .. })));
    }

    #[test]
    fn collision_and_empty_spec_rejected() {
        let dex = DexFile::default();
        let md: MethodDescriptor = "La/B;->f()V".parse().unwrap();
        let mut spec = build_stub_specs(&[(md, vec![InvokeKind::Static])], DEFAULT_STUB_CLASS).unwrap();
        let merged = merge_stub(&dex, &spec).unwrap();
        assert!(matches!(merge_stub(&merged.dex, &spec), Err(DexError::ClassAlreadyDefined(_))));
        spec.methods.clear();
        assert!(merge_stub(&dex, &spec).is_err());
    }
}
