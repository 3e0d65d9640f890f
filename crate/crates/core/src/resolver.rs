//! Signature listing and lookup over a `DexFile`.

use std::cmp::Ordering;

use crate::blacklist::Blacklist;
use crate::model::*;

/// One method defined by a class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMethod<'a> {
    pub descriptor: MethodDescriptor,
    pub method_idx: MethodIdx,
    pub access_flags: u32,
    pub direct: bool,
    pub code: Option<&'a CodeItem>,
}

/// Methods defined by `class_descriptor`, direct methods first, then virtual,
/// each in method pool order. Empty when the class is absent or has no members.
pub fn list_class_methods<'a>(dex: &'a DexFile, class_descriptor: &str) -> Vec<ClassMethod<'a>> {
    dex.find_class_def(class_descriptor)
        .map(|c| class_def_methods(dex, c))
        .unwrap_or_default()
}

/// Methods of a class definition, direct then virtual.
pub fn class_def_methods<'a>(dex: &'a DexFile, class: &'a ClassDef) -> Vec<ClassMethod<'a>> {
    let Some(data) = &class.class_data else {
        return Vec::new();
    };
    let direct = data.direct_methods.iter().map(|m| (m, true));
    let virtual_ = data.virtual_methods.iter().map(|m| (m, false));
    direct
        .chain(virtual_)
        .map(|(m, direct)| ClassMethod {
            descriptor: dex
                .method_id_to_descriptor(m.method_idx)
                .expect("validated file resolves every method id"),
            method_idx: m.method_idx,
            access_flags: m.access_flags,
            direct,
            code: m.code.as_ref(),
        })
        .collect()
}

/// Every defined method across all classes, in class definition order.
pub fn list_all_methods(dex: &DexFile) -> Vec<ClassMethod<'_>> {
    dex.class_defs.iter().flat_map(|c| class_def_methods(dex, c)).collect()
}

/// Looks up a method id by descriptor using the sort order of the pools.
pub fn find_method_index(dex: &DexFile, target: &MethodDescriptor) -> Option<MethodIdx> {
    let class_idx = dex.find_type(&target.class)?;
    let name_idx = dex.find_string(&target.name)?;
    let proto_idx = find_proto_index(dex, &target.prototype)?;
    dex.method_ids
        .binary_search_by(|m| (m.class_idx, m.name_idx, m.proto_idx).cmp(&(class_idx, name_idx, proto_idx)))
        .ok()
        .map(|i| MethodIdx(i as u32))
}

pub fn find_proto_index(dex: &DexFile, proto: &Prototype) -> Option<ProtoIdx> {
    let return_idx = dex.find_type(&proto.return_type)?;
    let params = proto
        .parameters
        .iter()
        .map(|p| dex.find_type(p))
        .collect::<Option<Vec<_>>>()?;
    dex.proto_ids
        .binary_search_by(|p| match p.return_type_idx.cmp(&return_idx) {
            Ordering::Equal => p.parameters.as_slice().cmp(params.as_slice()),
            other => other,
        })
        .ok()
        .map(|i| ProtoIdx(i as u32))
}

pub fn find_field_index(dex: &DexFile, target: &FieldDescriptor) -> Option<FieldIdx> {
    let class_idx = dex.find_type(&target.class)?;
    let name_idx = dex.find_string(&target.name)?;
    let type_idx = dex.find_type(&target.field_type)?;
    dex.field_ids
        .binary_search_by(|f| (f.class_idx, f.name_idx, f.type_idx).cmp(&(class_idx, name_idx, type_idx)))
        .ok()
        .map(|i| FieldIdx(i as u32))
}

/// Blacklist entries resolved against the method pool.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CallTargets {
    /// Entries present in the pool, with their method index.
    pub hits: Vec<(MethodDescriptor, MethodIdx)>,
    /// Entries the file never references.
    pub inert: Vec<MethodDescriptor>,
}

impl CallTargets {
    pub fn target_for(&self, idx: MethodIdx) -> Option<&MethodDescriptor> {
        self.hits.iter().find(|(_, i)| *i == idx).map(|(d, _)| d)
    }
}

/// Resolves every blacklist entry against the method pool, in blacklist order.
pub fn find_call_targets(dex: &DexFile, blacklist: &Blacklist) -> CallTargets {
    let mut targets = CallTargets::default();
    for d in blacklist.descriptors() {
        match find_method_index(dex, d) {
            Some(idx) => targets.hits.push((d.clone(), idx)),
            None => targets.inert.push(d.clone()),
        }
    }
    targets
}
