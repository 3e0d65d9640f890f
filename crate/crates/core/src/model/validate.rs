use std::collections::HashSet;

use super::descriptor::{self, DescriptorError};
use super::*;
use crate::bytecode::{decode_instructions, IndexKind};

fn check<T>(pool: Pool, index: u32, items: &[T]) -> Result<()> {
    if (index as usize) < items.len() {
        Ok(())
    } else {
        Err(range_error(pool, index, items.len()))
    }
}

fn descriptor_error(descriptor: &str, err: DescriptorError) -> DexError {
    DexError::InvalidDescriptor {
        descriptor: descriptor.to_owned(),
        reason: err.to_string(),
    }
}

fn check_strictly_sorted<K: Ord>(pool: Pool, keys: impl Iterator<Item = K>) -> Result<()> {
    let mut prev: Option<K> = None;
    for (i, key) in keys.enumerate() {
        if let Some(p) = &prev {
            if *p >= key {
                return Err(DexError::Unsorted { pool, index: i });
            }
        }
        prev = Some(key);
    }
    Ok(())
}

fn check_capacity(pool: Pool, count: usize) -> Result<()> {
    if count > MAX_POOL_16 {
        return Err(DexError::Capacity {
            pool,
            count,
            limit: MAX_POOL_16,
        });
    }
    Ok(())
}

impl DexFile {
    /// Asserts every model invariant: sorted unique pools, in-range indices,
    /// well-formed descriptors and shorties, and decodable code.
    pub fn validate(&self) -> Result<()> {
        for (i, pair) in self.strings.windows(2).enumerate() {
            if cmp_utf16(&pair[0], &pair[1]) != std::cmp::Ordering::Less {
                return Err(DexError::Unsorted {
                    pool: Pool::Strings,
                    index: i + 1,
                });
            }
        }

        check_capacity(Pool::Types, self.type_ids.len())?;
        check_capacity(Pool::Protos, self.proto_ids.len())?;
        check_capacity(Pool::Methods, self.method_ids.len())?;

        for t in &self.type_ids {
            let d = self.string(t.descriptor_idx)?;
            descriptor::validate_return_type(d).map_err(|e| descriptor_error(d, e))?;
        }
        check_strictly_sorted(Pool::Types, self.type_ids.iter().map(|t| t.descriptor_idx))?;

        for (i, p) in self.proto_ids.iter().enumerate() {
            let proto = self.prototype(ProtoIdx(i as u32))?;
            proto.validate().map_err(|e| descriptor_error(&proto.to_string(), e))?;
            let shorty = self.string(p.shorty_idx)?;
            if shorty != proto.shorty() {
                return Err(DexError::Invalid(format!(
                    "proto {i}: shorty {shorty:?} does not match {proto}"
                )));
            }
        }
        check_strictly_sorted(
            Pool::Protos,
            self.proto_ids.iter().map(|p| (p.return_type_idx, &p.parameters)),
        )?;

        for f in &self.field_ids {
            let d = self.field_id_to_descriptor_unchecked(f)?;
            descriptor::validate_class_type(&d.class).map_err(|e| descriptor_error(&d.class, e))?;
            descriptor::validate_field_type(&d.field_type).map_err(|e| descriptor_error(&d.field_type, e))?;
            descriptor::validate_member_name(&d.name).map_err(|e| descriptor_error(&d.name, e))?;
        }
        check_strictly_sorted(
            Pool::Fields,
            self.field_ids.iter().map(|f| (f.class_idx, f.name_idx, f.type_idx)),
        )?;

        for i in 0..self.method_ids.len() {
            let d = self.method_id_to_descriptor(MethodIdx(i as u32))?;
            descriptor::validate_class_type(&d.class).map_err(|e| descriptor_error(&d.class, e))?;
            descriptor::validate_member_name(&d.name).map_err(|e| descriptor_error(&d.name, e))?;
        }
        check_strictly_sorted(
            Pool::Methods,
            self.method_ids.iter().map(|m| (m.class_idx, m.name_idx, m.proto_idx)),
        )?;

        let mut defined = HashSet::new();
        for class in &self.class_defs {
            self.validate_class_def(class)?;
            if !defined.insert(class.class_idx) {
                return Err(DexError::Invalid(format!(
                    "class {} defined twice",
                    self.resolve_type(class.class_idx)?
                )));
            }
        }
        Ok(())
    }

    fn field_id_to_descriptor_unchecked(&self, f: &FieldId) -> Result<FieldDescriptor> {
        Ok(FieldDescriptor {
            class: self.resolve_type(f.class_idx)?.to_owned(),
            name: self.string(f.name_idx)?.to_owned(),
            field_type: self.resolve_type(f.type_idx)?.to_owned(),
        })
    }

    fn validate_class_def(&self, class: &ClassDef) -> Result<()> {
        let name = self.resolve_type(class.class_idx)?;
        if !name.starts_with('L') {
            return Err(DexError::Invalid(format!("class_def for non-class type {name}")));
        }
        if let Some(s) = class.superclass {
            self.resolve_type(s)?;
        }
        for &i in &class.interfaces {
            self.resolve_type(i)?;
        }
        if let Some(s) = class.source_file {
            self.string(s)?;
        }
        if let Some(dir) = &class.annotations {
            for (f, _) in &dir.fields {
                check(Pool::Fields, f.0, &self.field_ids)?;
            }
            for (m, _) in &dir.methods {
                check(Pool::Methods, m.0, &self.method_ids)?;
            }
            for (m, _) in &dir.parameters {
                check(Pool::Methods, m.0, &self.method_ids)?;
            }
        }
        let Some(data) = &class.class_data else {
            return Ok(());
        };
        for list in [&data.static_fields, &data.instance_fields] {
            for f in list {
                check(Pool::Fields, f.field_idx.0, &self.field_ids)?;
            }
            check_strictly_sorted(Pool::Fields, list.iter().map(|f| f.field_idx))
                .map_err(|_| DexError::Invalid(format!("{name}: field list not strictly increasing")))?;
        }
        for list in [&data.direct_methods, &data.virtual_methods] {
            for m in list {
                check(Pool::Methods, m.method_idx.0, &self.method_ids)?;
                if let Some(code) = &m.code {
                    self.validate_code(code).map_err(|e| match e {
                        DexError::MalformedCode { unit, reason } => DexError::MalformedCode {
                            unit,
                            reason: format!("{reason} (in {name} method {})", m.method_idx),
                        },
                        other => other,
                    })?;
                }
            }
            check_strictly_sorted(Pool::Methods, list.iter().map(|m| m.method_idx))
                .map_err(|_| DexError::Invalid(format!("{name}: method list not strictly increasing")))?;
        }
        Ok(())
    }

    fn validate_code(&self, code: &CodeItem) -> Result<()> {
        if code.ins_size > code.registers_size {
            return Err(DexError::Invalid(format!(
                "ins_size {} exceeds registers_size {}",
                code.ins_size, code.registers_size
            )));
        }
        for insn in decode_instructions(&code.insns)? {
            if let Some(r) = insn.index {
                let (pool, size) = match r.kind {
                    IndexKind::String => (Pool::Strings, self.strings.len()),
                    IndexKind::Type => (Pool::Types, self.type_ids.len()),
                    IndexKind::Field => (Pool::Fields, self.field_ids.len()),
                    IndexKind::Method => (Pool::Methods, self.method_ids.len()),
                };
                if r.value as usize >= size {
                    return Err(DexError::MalformedCode {
                        unit: insn.offset,
                        reason: format!("{pool} index {} out of range (size {size})", r.value),
                    });
                }
            }
        }
        for t in &code.tries {
            let end = t.start_addr as usize + t.insn_count as usize;
            if end > code.insns.len() {
                return Err(DexError::MalformedCode {
                    unit: t.start_addr as usize,
                    reason: "try block runs past end of code".into(),
                });
            }
            if t.handler >= code.handlers.len() {
                return Err(DexError::Invalid(format!("try handler {} missing", t.handler)));
            }
        }
        if code.tries.is_empty() && !code.handlers.is_empty() {
            return Err(DexError::Invalid("catch handlers without try blocks".into()));
        }
        for h in &code.handlers {
            if h.catches.is_empty() && h.catch_all.is_none() {
                return Err(DexError::Invalid("catch handler with no catch clauses".into()));
            }
            for &(ty, _) in &h.catches {
                self.resolve_type(ty)?;
            }
        }
        Ok(())
    }
}
