//! The shader table: ray-generation, miss and hit-group records.
//!
//! Construction is two-pass. The builder collects entries and checks ids
//! and root-argument types as they arrive; [`ShaderTableBuilder::build`]
//! then checks the whole layout against the scene (record `k` must serve
//! ray type `k mod m` of instance `k / m`) and serializes every hit-group
//! record into one contiguous byte buffer of fixed stride.

use std::sync::Arc;

use indexmap::IndexMap;
use thiserror::Error;

use super::indexing::{Granularity, IndexError};
use crate::compat::{
    max_root_arguments_size, Category, CompatError, CompatVariant, RootArguments,
    RootArgumentsKind, TaggedRecord, TypeMismatch, VariantKind,
};
use crate::scene::{EntityId, Scene, SceneError};

/// Bytes of record header preceding the root arguments: hit-group index,
/// local-signature index, ray contribution, root-arguments tag, and
/// reserved padding up to the size of a shader identifier.
pub const RECORD_HEADER_SIZE: usize = 32;

/// `(r, g, i)` of the indexing rule that a record position serves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecordKey {
    pub ray_contribution: u32,
    pub geometry_index: u32,
    pub instance_contribution: u32,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TableError {
    #[error(transparent)]
    UnknownId(#[from] SceneError),
    #[error(transparent)]
    TypeMismatch(#[from] TypeMismatch),
    #[error(transparent)]
    Compat(#[from] CompatError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error("ray generation shader already set to {existing:?}")]
    DuplicateRayGen { existing: String },
    #[error("no ray generation shader")]
    MissingRayGen,
    #[error("miss record for ray {ray:?} added twice")]
    DuplicateMiss { ray: EntityId },
    #[error("no miss record for ray {ray:?}")]
    MissingMiss { ray: EntityId },
    #[error("miss record {index} is for ray {found:?}, expected {expected:?}")]
    MissOrder {
        index: usize,
        expected: EntityId,
        found: EntityId,
    },
    #[error("hit group record {record}: {reason} (expected {expected:?})")]
    LayoutViolation {
        record: usize,
        expected: Option<RecordKey>,
        reason: String,
    },
    #[error("record address {address} is outside the table of {records} records")]
    OutOfRange { address: u64, records: usize },
    #[error("byte address {address} is not on a record boundary")]
    Misaligned { address: u64 },
    #[error("hit group {hit_group:?} is associated with both {first:?} and {second:?}")]
    ConflictingAssociation {
        hit_group: EntityId,
        first: EntityId,
        second: EntityId,
    },
}

/// One hit-group record before serialization.
#[derive(Debug, Clone, PartialEq)]
pub struct ShaderTableEntry {
    pub ray: EntityId,
    pub hit_group: EntityId,
    pub local_signature: EntityId,
    pub root_arguments: RootArguments,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MissRecord {
    pub ray: EntityId,
    pub shader: String,
}

/// Where hit-group records start and in which unit addresses count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TableLayout {
    pub start: u64,
    pub granularity: Granularity,
}

#[derive(Clone)]
pub struct ShaderTableBuilder {
    scene: Arc<Scene>,
    ray_gen: Option<String>,
    misses: Vec<MissRecord>,
    entries: Vec<ShaderTableEntry>,
}

impl ShaderTableBuilder {
    pub fn new(scene: Arc<Scene>) -> Self {
        Self {
            scene,
            ray_gen: None,
            misses: Vec::new(),
            entries: Vec::new(),
        }
    }

    pub fn add_ray_gen(&mut self, entry_point: &str) -> Result<(), TableError> {
        if let Some(existing) = &self.ray_gen {
            return Err(TableError::DuplicateRayGen {
                existing: existing.clone(),
            });
        }
        self.ray_gen = Some(entry_point.to_owned());
        Ok(())
    }

    /// Appends the miss record of `ray_id`, using the ray type's miss shader.
    pub fn add_miss(&mut self, ray_id: &str) -> Result<(), TableError> {
        let ray = self.scene.ray(ray_id)?;
        if self.misses.iter().any(|m| m.ray == ray.id) {
            return Err(TableError::DuplicateMiss { ray: ray.id.clone() });
        }
        self.misses.push(MissRecord {
            ray: ray.id.clone(),
            shader: ray.miss_shader.clone(),
        });
        Ok(())
    }

    /// Appends a hit-group record. All ids must exist and the arguments must
    /// be of the variant the local signature declares.
    pub fn add_common_entry(
        &mut self,
        ray_id: &str,
        hit_group_id: &str,
        local_signature_id: &str,
        root_arguments: RootArguments,
    ) -> Result<usize, TableError> {
        let ray = self.scene.ray(ray_id)?.id.clone();
        let hit_group = self.scene.hit_group(hit_group_id)?.id.clone();
        let signature = self.scene.local_signature(local_signature_id)?;
        let declared = signature.root_arguments_kind().ok_or_else(|| SceneError::InvalidSignature {
            id: signature.id.clone(),
            reason: "no root arguments type".into(),
        })?;
        declared.check(root_arguments.kind())?;
        self.entries.push(ShaderTableEntry {
            ray,
            hit_group,
            local_signature: signature.id.clone(),
            root_arguments,
        });
        Ok(self.entries.len() - 1)
    }

    pub fn entries(&self) -> &[ShaderTableEntry] {
        &self.entries
    }

    /// Mutable access to pending entries, for tests that construct invalid layouts.
    pub fn entries_mut(&mut self) -> &mut Vec<ShaderTableEntry> {
        &mut self.entries
    }

    /// Checks the layout contract and serializes the table.
    pub fn build(&self, layout: TableLayout) -> Result<ShaderTable, TableError> {
        let scene = &self.scene;
        let ray_gen = self.ray_gen.clone().ok_or(TableError::MissingRayGen)?;
        for (r, ray) in scene.rays().enumerate() {
            match self.misses.get(r) {
                None => return Err(TableError::MissingMiss { ray: ray.id.clone() }),
                Some(m) if m.ray != ray.id => {
                    return Err(TableError::MissOrder {
                        index: r,
                        expected: ray.id.clone(),
                        found: m.ray.clone(),
                    })
                }
                Some(_) => {}
            }
        }
        self.check_layout()?;

        let stride = record_stride()?;
        let mut bytes = vec![0u8; stride * self.entries.len()];
        for (k, e) in self.entries.iter().enumerate() {
            let hg = scene.hit_group_index(e.hit_group.as_str()).expect("checked on add");
            let sig = scene
                .local_signature_index(e.local_signature.as_str())
                .expect("checked on add");
            let r = scene.ray_contribution(e.ray.as_str()).expect("checked on add");
            let record = e.root_arguments.to_record();
            let out = &mut bytes[k * stride..(k + 1) * stride];
            out[0..4].copy_from_slice(&(hg as u32).to_le_bytes());
            out[4..8].copy_from_slice(&(sig as u32).to_le_bytes());
            out[8..12].copy_from_slice(&(r as u32).to_le_bytes());
            out[12..16].copy_from_slice(&record.tag.to_le_bytes());
            out[RECORD_HEADER_SIZE..RECORD_HEADER_SIZE + record.bytes.len()].copy_from_slice(&record.bytes);
        }
        Ok(ShaderTable {
            ray_gen,
            misses: self.misses.clone(),
            entries: self.entries.clone(),
            bytes,
            stride,
            layout,
        })
    }

    /// Record `k` must serve ray type `k mod m` of instance `k / m`, use a
    /// hit group with an intersection shader exactly when that instance is
    /// procedural, and (for procedural arguments) name that instance's
    /// instance-buffer slot.
    fn check_layout(&self) -> Result<(), TableError> {
        let scene = &self.scene;
        let m = scene.ray_count().max(1);
        let slots = scene.instance_slots();
        let expected_len = slots.len() * m;
        let violation = |record: usize, expected: Option<RecordKey>, reason: String| {
            Err(TableError::LayoutViolation {
                record,
                expected,
                reason,
            })
        };
        for k in 0..self.entries.len().max(expected_len) {
            let key = (k < expected_len).then(|| RecordKey {
                ray_contribution: (k % m) as u32,
                geometry_index: 0,
                instance_contribution: ((k / m) * m) as u32,
            });
            let Some(entry) = self.entries.get(k) else {
                return violation(k, key, "missing record".into());
            };
            let Some(key) = key else {
                return violation(k, None, "record is not reachable from any instance".into());
            };
            let slot = &slots[k / m];
            let r = scene.ray_contribution(entry.ray.as_str()).expect("checked on add");
            if r as u32 != key.ray_contribution {
                return violation(k, Some(key), format!("serves ray {:?}", entry.ray.as_str()));
            }
            let geometry = scene.geometry_at(slot.geometry_index).expect("slot geometry");
            let group = scene.hit_group(entry.hit_group.as_str())?;
            if group.intersection.is_some() != geometry.is_procedural() {
                return violation(
                    k,
                    Some(key),
                    format!(
                        "hit group {:?} does not match geometry {:?}",
                        group.id.as_str(),
                        geometry.id.as_str()
                    ),
                );
            }
            if let RootArguments::Procedural(args) = &entry.root_arguments {
                if slot.procedural_index != Some(args.instance_index as usize) {
                    return violation(
                        k,
                        Some(key),
                        format!(
                            "root arguments name instance {} but the record belongs to {:?}",
                            args.instance_index, slot.procedural_index
                        ),
                    );
                }
            }
        }
        Ok(())
    }
}

/// Stride of a hit-group record: header plus the largest root-arguments variant.
pub fn record_stride() -> Result<usize, CompatError> {
    Ok(RECORD_HEADER_SIZE + max_root_arguments_size(RootArgumentsKind::ALL.iter().copied())?)
}

/// A hit-group record read back from table bytes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HitGroupRecord<'a> {
    pub index: usize,
    pub hit_group: usize,
    pub local_signature: usize,
    pub ray_contribution: u32,
    pub arguments_tag: u32,
    pub arguments: &'a [u8],
}

impl HitGroupRecord<'_> {
    /// Decodes the root arguments, failing if the stored variant differs
    /// from `expected`.
    pub fn root_arguments(&self, expected: RootArgumentsKind) -> Result<RootArguments, CompatError> {
        let record = TaggedRecord {
            category: Category::RootArguments,
            tag: self.arguments_tag,
            bytes: self.arguments.to_vec(),
        };
        RootArguments::from_record(&record, expected)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShaderTable {
    ray_gen: String,
    misses: Vec<MissRecord>,
    entries: Vec<ShaderTableEntry>,
    bytes: Vec<u8>,
    stride: usize,
    layout: TableLayout,
}

impl ShaderTable {
    pub fn ray_gen(&self) -> &str {
        &self.ray_gen
    }

    pub fn misses(&self) -> &[MissRecord] {
        &self.misses
    }

    pub fn miss(&self, ray_contribution: usize) -> Result<&MissRecord, TableError> {
        self.misses.get(ray_contribution).ok_or(TableError::OutOfRange {
            address: ray_contribution as u64,
            records: self.misses.len(),
        })
    }

    pub fn entries(&self) -> &[ShaderTableEntry] {
        &self.entries
    }

    pub fn record_count(&self) -> usize {
        self.entries.len()
    }

    /// Size in bytes of one hit-group record.
    pub fn stride_bytes(&self) -> usize {
        self.stride
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn layout(&self) -> TableLayout {
        self.layout
    }

    /// The start address `h_s` to pass to the indexing rule.
    pub fn start_address(&self) -> u64 {
        self.layout.start
    }

    /// The stride `h_p` to pass to the indexing rule.
    pub fn address_stride(&self) -> u64 {
        match self.layout.granularity {
            Granularity::Records => 1,
            Granularity::Bytes => self.stride as u64,
        }
    }

    /// Record index an address refers to.
    pub fn index_of(&self, address: u64) -> Result<usize, TableError> {
        let out_of_range = TableError::OutOfRange {
            address,
            records: self.entries.len(),
        };
        let offset = address.checked_sub(self.layout.start).ok_or(out_of_range.clone())?;
        let stride = self.address_stride();
        if offset % stride != 0 {
            return Err(TableError::Misaligned { address });
        }
        let index = offset / stride;
        if index >= self.entries.len() as u64 {
            return Err(out_of_range);
        }
        Ok(index as usize)
    }

    pub fn record(&self, index: usize) -> Result<HitGroupRecord<'_>, TableError> {
        if index >= self.entries.len() {
            return Err(TableError::OutOfRange {
                address: index as u64,
                records: self.entries.len(),
            });
        }
        let b = &self.bytes[index * self.stride..(index + 1) * self.stride];
        let word = |o: usize| u32::from_le_bytes(b[o..o + 4].try_into().expect("4 bytes"));
        Ok(HitGroupRecord {
            index,
            hit_group: word(0) as usize,
            local_signature: word(4) as usize,
            ray_contribution: word(8),
            arguments_tag: word(12),
            arguments: &b[RECORD_HEADER_SIZE..],
        })
    }

    pub fn record_at(&self, address: u64) -> Result<HitGroupRecord<'_>, TableError> {
        self.record(self.index_of(address)?)
    }
}

/// Maps every hit group used in the table to its local signature. A hit
/// group bound to two different signatures is an error.
pub fn derive_export_associations(
    table: &ShaderTable,
) -> Result<IndexMap<EntityId, EntityId>, TableError> {
    let mut out: IndexMap<EntityId, EntityId> = IndexMap::new();
    for e in table.entries() {
        match out.get(&e.hit_group) {
            Some(existing) if *existing != e.local_signature => {
                return Err(TableError::ConflictingAssociation {
                    hit_group: e.hit_group.clone(),
                    first: existing.clone(),
                    second: e.local_signature.clone(),
                })
            }
            Some(_) => {}
            None => {
                out.insert(e.hit_group.clone(), e.local_signature.clone());
            }
        }
    }
    Ok(out)
}
