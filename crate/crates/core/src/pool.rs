//! Content-addressed construction of sorted id pools.
//!
//! Items are added by value (strings, descriptors, prototypes); `build`
//! deduplicates, sorts every pool into dex order and assigns indices.

use std::collections::{HashMap, HashSet};

use crate::error::Result;
use crate::model::*;

#[derive(Debug, Default, Clone)]
pub struct PoolBuilder {
    strings: HashSet<String>,
    types: HashSet<String>,
    protos: HashSet<Prototype>,
    fields: HashSet<FieldDescriptor>,
    methods: HashSet<MethodDescriptor>,
}

impl PoolBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_string(&mut self, s: &str) {
        if !self.strings.contains(s) {
            self.strings.insert(s.to_owned());
        }
    }

    pub fn add_type(&mut self, descriptor: &str) {
        self.add_string(descriptor);
        if !self.types.contains(descriptor) {
            self.types.insert(descriptor.to_owned());
        }
    }

    pub fn add_proto(&mut self, proto: &Prototype) {
        if self.protos.contains(proto) {
            return;
        }
        self.add_string(&proto.shorty());
        self.add_type(&proto.return_type);
        for p in &proto.parameters {
            self.add_type(p);
        }
        self.protos.insert(proto.clone());
    }

    pub fn add_field(&mut self, field: &FieldDescriptor) {
        if self.fields.contains(field) {
            return;
        }
        self.add_type(&field.class);
        self.add_type(&field.field_type);
        self.add_string(&field.name);
        self.fields.insert(field.clone());
    }

    pub fn add_method(&mut self, method: &MethodDescriptor) {
        if self.methods.contains(method) {
            return;
        }
        self.add_type(&method.class);
        self.add_string(&method.name);
        self.add_proto(&method.prototype);
        self.methods.insert(method.clone());
    }

    /// Adds every pool entry of an existing file.
    pub fn add_dex(&mut self, dex: &DexFile) -> Result<()> {
        for s in &dex.strings {
            self.add_string(s);
        }
        for i in 0..dex.type_ids.len() {
            self.add_type(dex.resolve_type(TypeIdx(i as u32))?);
        }
        for i in 0..dex.proto_ids.len() {
            self.add_proto(&dex.prototype(ProtoIdx(i as u32))?);
        }
        for i in 0..dex.field_ids.len() {
            self.add_field(&dex.field_id_to_descriptor(FieldIdx(i as u32))?);
        }
        for i in 0..dex.method_ids.len() {
            self.add_method(&dex.method_id_to_descriptor(MethodIdx(i as u32))?);
        }
        Ok(())
    }

    pub fn method_count(&self) -> usize {
        self.methods.len()
    }

    pub fn build(self) -> Pools {
        let mut strings: Vec<String> = self.strings.into_iter().collect();
        strings.sort_unstable_by(|a, b| cmp_utf16(a, b));
        let string_index: HashMap<String, u32> =
            strings.iter().enumerate().map(|(i, s)| (s.clone(), i as u32)).collect();

        let mut types: Vec<(u32, String)> = self
            .types
            .into_iter()
            .map(|t| (string_index[&t], t))
            .collect();
        types.sort_unstable();
        let type_index: HashMap<String, u32> =
            types.iter().enumerate().map(|(i, (_, t))| (t.clone(), i as u32)).collect();
        let type_ids = types
            .iter()
            .map(|&(s, _)| TypeId {
                descriptor_idx: StringIdx(s),
            })
            .collect();

        let mut protos: Vec<(ProtoId, Prototype)> = self
            .protos
            .into_iter()
            .map(|p| {
                let id = ProtoId {
                    shorty_idx: StringIdx(string_index[&p.shorty()]),
                    return_type_idx: TypeIdx(type_index[&p.return_type]),
                    parameters: p.parameters.iter().map(|t| TypeIdx(type_index[t])).collect(),
                };
                (id, p)
            })
            .collect();
        protos.sort_unstable_by(|(a, _), (b, _)| {
            (a.return_type_idx, &a.parameters).cmp(&(b.return_type_idx, &b.parameters))
        });
        let proto_index: HashMap<Prototype, u32> = protos
            .iter()
            .enumerate()
            .map(|(i, (_, p))| (p.clone(), i as u32))
            .collect();
        let proto_ids = protos.into_iter().map(|(id, _)| id).collect();

        let mut fields: Vec<(FieldId, FieldDescriptor)> = self
            .fields
            .into_iter()
            .map(|f| {
                let id = FieldId {
                    class_idx: TypeIdx(type_index[&f.class]),
                    type_idx: TypeIdx(type_index[&f.field_type]),
                    name_idx: StringIdx(string_index[&f.name]),
                };
                (id, f)
            })
            .collect();
        fields.sort_unstable_by_key(|(id, _)| (id.class_idx, id.name_idx, id.type_idx));
        let field_index: HashMap<FieldDescriptor, u32> = fields
            .iter()
            .enumerate()
            .map(|(i, (_, f))| (f.clone(), i as u32))
            .collect();
        let field_ids = fields.into_iter().map(|(id, _)| id).collect();

        let mut methods: Vec<(MethodId, MethodDescriptor)> = self
            .methods
            .into_iter()
            .map(|m| {
                let id = MethodId {
                    class_idx: TypeIdx(type_index[&m.class]),
                    proto_idx: ProtoIdx(proto_index[&m.prototype]),
                    name_idx: StringIdx(string_index[&m.name]),
                };
                (id, m)
            })
            .collect();
        methods.sort_unstable_by_key(|(id, _)| (id.class_idx, id.name_idx, id.proto_idx));
        let method_index: HashMap<MethodDescriptor, u32> = methods
            .iter()
            .enumerate()
            .map(|(i, (_, m))| (m.clone(), i as u32))
            .collect();
        let method_ids = methods.into_iter().map(|(id, _)| id).collect();

        Pools {
            strings,
            type_ids,
            proto_ids,
            field_ids,
            method_ids,
            string_index,
            type_index,
            proto_index,
            field_index,
            method_index,
        }
    }
}

/// Sorted pools plus lookups from content to index.
#[derive(Debug, Clone)]
pub struct Pools {
    pub strings: Vec<String>,
    pub type_ids: Vec<TypeId>,
    pub proto_ids: Vec<ProtoId>,
    pub field_ids: Vec<FieldId>,
    pub method_ids: Vec<MethodId>,
    string_index: HashMap<String, u32>,
    type_index: HashMap<String, u32>,
    proto_index: HashMap<Prototype, u32>,
    field_index: HashMap<FieldDescriptor, u32>,
    method_index: HashMap<MethodDescriptor, u32>,
}

impl Pools {
    pub fn string(&self, s: &str) -> Option<StringIdx> {
        self.string_index.get(s).copied().map(StringIdx)
    }

    pub fn type_idx(&self, descriptor: &str) -> Option<TypeIdx> {
        self.type_index.get(descriptor).copied().map(TypeIdx)
    }

    pub fn proto(&self, proto: &Prototype) -> Option<ProtoIdx> {
        self.proto_index.get(proto).copied().map(ProtoIdx)
    }

    pub fn field(&self, field: &FieldDescriptor) -> Option<FieldIdx> {
        self.field_index.get(field).copied().map(FieldIdx)
    }

    pub fn method(&self, method: &MethodDescriptor) -> Option<MethodIdx> {
        self.method_index.get(method).copied().map(MethodIdx)
    }

    /// Combines the pools with class definitions into a `DexFile`.
    pub fn into_dex(self, class_defs: Vec<ClassDef>) -> DexFile {
        DexFile {
            strings: self.strings,
            type_ids: self.type_ids,
            proto_ids: self.proto_ids,
            field_ids: self.field_ids,
            method_ids: self.method_ids,
            class_defs,
            layout: None,
        }
    }
}
