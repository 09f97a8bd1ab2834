//! Scene entities and the id-keyed registry that associates them.
//!
//! Every category keeps insertion order. That order is load-bearing: ray
//! creation order assigns ray contributions and geometry/instance creation
//! order assigns instance contributions.

use std::borrow::Borrow;
use std::fmt;
use std::sync::Arc;

use indexmap::IndexMap;
use thiserror::Error;

use crate::compat::{
    Payload, RootArguments, RootArgumentsKind, RootComponent, ResourceHandle,
    CompatVariant,
};
use crate::math::{is_affine, Aabb, Mat4, Vec3, SINGULAR_EPSILON};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EntityCategory {
    Ray,
    HitGroup,
    Geometry,
    GlobalSignature,
    LocalSignature,
}

impl fmt::Display for EntityCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EntityCategory::Ray => "ray",
            EntityCategory::HitGroup => "hit group",
            EntityCategory::Geometry => "geometry",
            EntityCategory::GlobalSignature => "global root signature",
            EntityCategory::LocalSignature => "local root signature",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SceneError {
    #[error("entity ids must be non-empty")]
    EmptyId,
    #[error("duplicate {category} id {id:?}")]
    DuplicateId { category: EntityCategory, id: EntityId },
    #[error("no {category} with id {id:?}")]
    NotFound { category: EntityCategory, id: String },
    #[error("geometry {id:?}: {reason}")]
    InvalidGeometry { id: EntityId, reason: String },
    #[error("invalid instance transform: {0}")]
    InvalidTransform(String),
    #[error("root signature {id:?}: {reason}")]
    InvalidSignature { id: EntityId, reason: String },
    #[error("hit group {id:?} has no entry points besides an empty triangle group")]
    InvalidHitGroup { id: EntityId },
}

/// Non-empty string id of a scene entity.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntityId(String);

impl EntityId {
    pub fn new(id: impl Into<String>) -> Result<Self, SceneError> {
        let id = id.into();
        if id.is_empty() {
            return Err(SceneError::EmptyId);
        }
        Ok(EntityId(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Borrow<str> for EntityId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl TryFrom<&str> for EntityId {
    type Error = SceneError;
    fn try_from(s: &str) -> Result<Self, SceneError> {
        EntityId::new(s)
    }
}

/// A ray type: its miss shader and the payload variant it carries.
#[derive(Debug, Clone, PartialEq)]
pub struct RayType {
    pub id: EntityId,
    pub miss_shader: String,
    pub payload_template: Payload,
}

impl RayType {
    pub fn new(
        id: &str,
        miss_shader: impl Into<String>,
        payload_template: Payload,
    ) -> Result<Self, SceneError> {
        Ok(Self {
            id: EntityId::new(id)?,
            miss_shader: miss_shader.into(),
            payload_template,
        })
    }
}

/// Up to three shaders that handle one geometry for one ray type.
#[derive(Debug, Clone, PartialEq)]
pub struct HitGroup {
    pub id: EntityId,
    pub internal_name: String,
    pub any_hit: Option<String>,
    pub closest_hit: Option<String>,
    pub intersection: Option<String>,
}

fn entry_point(name: &str) -> Option<String> {
    (!name.is_empty()).then(|| name.to_owned())
}

impl HitGroup {
    /// Empty entry-point names mean "no shader of that kind".
    pub fn new(
        id: &str,
        internal_name: &str,
        any_hit: &str,
        closest_hit: &str,
        intersection: &str,
    ) -> Result<Self, SceneError> {
        Ok(Self {
            id: EntityId::new(id)?,
            internal_name: internal_name.to_owned(),
            any_hit: entry_point(any_hit),
            closest_hit: entry_point(closest_hit),
            intersection: entry_point(intersection),
        })
    }

    pub fn entry_points(&self) -> impl Iterator<Item = &str> {
        [&self.any_hit, &self.closest_hit, &self.intersection]
            .into_iter()
            .filter_map(|e| e.as_deref())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vertex {
    pub position: Vec3,
    pub normal: Vec3,
}

/// Both directions of an instance's affine transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceTransform {
    pub local_to_world: Mat4,
    pub world_to_local: Mat4,
}

impl InstanceTransform {
    pub const IDENTITY_TOLERANCE: f64 = 1e-5;

    /// Derives the inverse of an affine local-to-world matrix.
    pub fn new(local_to_world: Mat4) -> Result<Self, SceneError> {
        if !is_affine(&local_to_world) {
            return Err(SceneError::InvalidTransform("matrix is not affine".into()));
        }
        let det = local_to_world.determinant();
        if !det.is_finite() || det.abs() <= SINGULAR_EPSILON {
            return Err(SceneError::InvalidTransform(format!(
                "matrix is not invertible (det = {det:e})"
            )));
        }
        let world_to_local = local_to_world
            .try_inverse()
            .ok_or_else(|| SceneError::InvalidTransform("matrix is not invertible".into()))?;
        Self::from_pair(local_to_world, world_to_local)
    }

    /// Accepts an explicit pair, checking that they are inverses.
    pub fn from_pair(local_to_world: Mat4, world_to_local: Mat4) -> Result<Self, SceneError> {
        let product = local_to_world * world_to_local;
        let err = (product - Mat4::identity()).abs().max();
        if !(err <= Self::IDENTITY_TOLERANCE) {
            return Err(SceneError::InvalidTransform(format!(
                "local_to_world * world_to_local deviates from identity by {err:e}"
            )));
        }
        Ok(Self {
            local_to_world,
            world_to_local,
        })
    }

    pub fn identity() -> Self {
        Self {
            local_to_world: Mat4::identity(),
            world_to_local: Mat4::identity(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GeometryKind {
    Triangles {
        vertices: Vec<Vertex>,
        indices: Vec<u32>,
    },
    Procedural {
        aabb: Aabb,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub id: EntityId,
    pub kind: GeometryKind,
    pub instances: Vec<InstanceTransform>,
}

impl Geometry {
    pub fn triangles(
        id: &str,
        vertices: Vec<Vertex>,
        indices: Vec<u32>,
        instances: Vec<InstanceTransform>,
    ) -> Result<Self, SceneError> {
        let id = EntityId::new(id)?;
        let invalid = |reason: String| SceneError::InvalidGeometry {
            id: id.clone(),
            reason,
        };
        if !indices.len().is_multiple_of(3) {
            return Err(invalid(format!(
                "index count {} is not a multiple of 3",
                indices.len()
            )));
        }
        if let Some(bad) = indices.iter().find(|&&i| i as usize >= vertices.len()) {
            return Err(invalid(format!(
                "index {bad} out of range for {} vertices",
                vertices.len()
            )));
        }
        Self::finish(id, GeometryKind::Triangles { vertices, indices }, instances)
    }

    pub fn procedural(
        id: &str,
        aabb: Aabb,
        instances: Vec<InstanceTransform>,
    ) -> Result<Self, SceneError> {
        let id = EntityId::new(id)?;
        if !aabb.is_proper() {
            return Err(SceneError::InvalidGeometry {
                id,
                reason: "aabb min must be below max on every axis".into(),
            });
        }
        Self::finish(id, GeometryKind::Procedural { aabb }, instances)
    }

    fn finish(
        id: EntityId,
        kind: GeometryKind,
        instances: Vec<InstanceTransform>,
    ) -> Result<Self, SceneError> {
        if instances.is_empty() {
            return Err(SceneError::InvalidGeometry {
                id,
                reason: "at least one instance is required".into(),
            });
        }
        Ok(Self {
            id,
            kind,
            instances,
        })
    }

    pub fn is_procedural(&self) -> bool {
        matches!(self.kind, GeometryKind::Procedural { .. })
    }

    pub fn triangle_count(&self) -> usize {
        match &self.kind {
            GeometryKind::Triangles { indices, .. } => indices.len() / 3,
            GeometryKind::Procedural { .. } => 0,
        }
    }

    /// Vertices of triangle `prim`, if this is triangle geometry.
    pub fn triangle(&self, prim: usize) -> Option<[Vertex; 3]> {
        match &self.kind {
            GeometryKind::Triangles { vertices, indices } => {
                let i = indices.get(prim * 3..prim * 3 + 3)?;
                Some([
                    vertices[i[0] as usize],
                    vertices[i[1] as usize],
                    vertices[i[2] as usize],
                ])
            }
            GeometryKind::Procedural { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ViewKind {
    Cbv,
    Srv,
    Uav,
    Sampler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DescriptorRange {
    pub handle: ResourceHandle,
    pub view: ViewKind,
    pub slot: u32,
    pub count: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SignatureEntry {
    InlineConstant {
        component: RootComponent,
        slot: u32,
    },
    InlineDescriptor {
        component: RootComponent,
        view: ViewKind,
        slot: u32,
    },
    DescriptorTable {
        ranges: Vec<DescriptorRange>,
    },
}

impl SignatureEntry {
    /// Register slots the entry occupies, by view class. Inline constants
    /// live in constant-buffer registers.
    fn registers(&self) -> Vec<(ViewKind, u32)> {
        match self {
            SignatureEntry::InlineConstant { slot, .. } => vec![(ViewKind::Cbv, *slot)],
            SignatureEntry::InlineDescriptor { view, slot, .. } => vec![(*view, *slot)],
            SignatureEntry::DescriptorTable { ranges } => ranges
                .iter()
                .flat_map(|r| (r.slot..r.slot.saturating_add(r.count)).map(move |s| (r.view, s)))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignatureScope {
    Global,
    Local,
}

/// The declared resource interface of a shader.
#[derive(Debug, Clone, PartialEq)]
pub struct RootSignature {
    pub id: EntityId,
    pub scope: SignatureScope,
    pub entries: Vec<SignatureEntry>,
    pub root_arguments_template: Option<RootArguments>,
}

impl RootSignature {
    pub fn global(id: &str) -> Result<Self, SceneError> {
        Ok(Self {
            id: EntityId::new(id)?,
            scope: SignatureScope::Global,
            entries: Vec::new(),
            root_arguments_template: None,
        })
    }

    pub fn local(id: &str) -> Result<Self, SceneError> {
        Ok(Self {
            id: EntityId::new(id)?,
            scope: SignatureScope::Local,
            entries: Vec::new(),
            root_arguments_template: None,
        })
    }

    fn invalid(&self, reason: impl Into<String>) -> SceneError {
        SceneError::InvalidSignature {
            id: self.id.clone(),
            reason: reason.into(),
        }
    }

    fn push(&mut self, entry: SignatureEntry) -> Result<usize, SceneError> {
        let taken: Vec<_> = self.entries.iter().flat_map(|e| e.registers()).collect();
        let mut fresh = entry.registers();
        fresh.sort();
        if fresh.windows(2).any(|w| w[0] == w[1]) {
            return Err(self.invalid("entry overlaps itself"));
        }
        if let Some(reg) = fresh.iter().find(|r| taken.contains(r)) {
            return Err(self.invalid(format!("register {:?} slot {} already bound", reg.0, reg.1)));
        }
        self.entries.push(entry);
        Ok(self.entries.len() - 1)
    }

    pub fn add_constant(&mut self, component: RootComponent, slot: u32) -> Result<usize, SceneError> {
        self.push(SignatureEntry::InlineConstant { component, slot })
    }

    pub fn add_descriptor(
        &mut self,
        component: RootComponent,
        view: ViewKind,
        slot: u32,
    ) -> Result<usize, SceneError> {
        self.push(SignatureEntry::InlineDescriptor {
            component,
            view,
            slot,
        })
    }

    /// Returns the entry index of the new table.
    pub fn add_descriptor_table(&mut self, ranges: Vec<DescriptorRange>) -> Result<usize, SceneError> {
        if ranges.iter().any(|r| r.count == 0) {
            return Err(self.invalid("descriptor range with zero count"));
        }
        self.push(SignatureEntry::DescriptorTable { ranges })
    }

    /// Declares the root-arguments variant records bound to this local
    /// signature must carry.
    pub fn set_root_arguments_type(&mut self, template: RootArguments) -> Result<(), SceneError> {
        if self.scope != SignatureScope::Local {
            return Err(self.invalid("only local signatures take root arguments"));
        }
        self.root_arguments_template = Some(template);
        Ok(())
    }

    pub fn root_arguments_kind(&self) -> Option<RootArgumentsKind> {
        self.root_arguments_template.as_ref().map(|t| t.kind())
    }

    fn validate(&self) -> Result<(), SceneError> {
        match (self.scope, &self.root_arguments_template) {
            (SignatureScope::Local, None) => {
                Err(self.invalid("local signature needs a root arguments type"))
            }
            (SignatureScope::Global, Some(_)) => {
                Err(self.invalid("global signature cannot carry root arguments"))
            }
            _ => Ok(()),
        }
    }

    /// Inline entries as (register class, slot, declared component kind).
    pub fn inline_entries(&self) -> impl Iterator<Item = (ViewKind, u32, &RootComponent)> {
        self.entries.iter().filter_map(|e| match e {
            SignatureEntry::InlineConstant { component, slot } => Some((ViewKind::Cbv, *slot, component)),
            SignatureEntry::InlineDescriptor {
                component,
                view,
                slot,
            } => Some((*view, *slot, component)),
            SignatureEntry::DescriptorTable { .. } => None,
        })
    }
}

/// Borrowed view of any entity, returned by [`Scene::get_by_id`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EntityRef<'a> {
    Ray(&'a RayType),
    HitGroup(&'a HitGroup),
    Geometry(&'a Geometry),
    Signature(&'a RootSignature),
}

/// One TLAS-level instance as laid out by creation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InstanceSlot {
    /// Sequential over every instance of every geometry.
    pub ordinal: usize,
    pub geometry_index: usize,
    pub instance_in_geometry: usize,
    /// Sequential over procedural instances only; its position in the instance buffer.
    pub procedural_index: Option<usize>,
}

/// Transforms of every procedural instance, in creation order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct InstanceBuffer(pub Arc<[InstanceTransform]>);

impl InstanceBuffer {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&InstanceTransform> {
        self.0.get(index)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Scene {
    rays: IndexMap<EntityId, RayType>,
    hit_groups: IndexMap<EntityId, HitGroup>,
    geometries: IndexMap<EntityId, Geometry>,
    global_signatures: IndexMap<EntityId, RootSignature>,
    local_signatures: IndexMap<EntityId, RootSignature>,
}

fn insert<T>(
    map: &mut IndexMap<EntityId, T>,
    category: EntityCategory,
    id: &EntityId,
    value: T,
) -> Result<(), SceneError> {
    if map.contains_key(id) {
        return Err(SceneError::DuplicateId {
            category,
            id: id.clone(),
        });
    }
    map.insert(id.clone(), value);
    Ok(())
}

fn lookup<'a, T>(
    map: &'a IndexMap<EntityId, T>,
    category: EntityCategory,
    id: &str,
) -> Result<&'a T, SceneError> {
    map.get(id).ok_or_else(|| SceneError::NotFound {
        category,
        id: id.to_owned(),
    })
}

impl Scene {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_ray(&mut self, ray: RayType) -> Result<(), SceneError> {
        let id = ray.id.clone();
        insert(&mut self.rays, EntityCategory::Ray, &id, ray)
    }

    pub fn add_hit_group(&mut self, group: HitGroup) -> Result<(), SceneError> {
        let id = group.id.clone();
        insert(&mut self.hit_groups, EntityCategory::HitGroup, &id, group)
    }

    pub fn add_geometry(&mut self, geometry: Geometry) -> Result<(), SceneError> {
        let id = geometry.id.clone();
        insert(&mut self.geometries, EntityCategory::Geometry, &id, geometry)
    }

    pub fn add_global_signature(&mut self, sig: RootSignature) -> Result<(), SceneError> {
        if sig.scope != SignatureScope::Global {
            return Err(sig.invalid("expected a global signature"));
        }
        sig.validate()?;
        let id = sig.id.clone();
        insert(&mut self.global_signatures, EntityCategory::GlobalSignature, &id, sig)
    }

    pub fn add_local_signature(&mut self, sig: RootSignature) -> Result<(), SceneError> {
        if sig.scope != SignatureScope::Local {
            return Err(sig.invalid("expected a local signature"));
        }
        sig.validate()?;
        let id = sig.id.clone();
        insert(&mut self.local_signatures, EntityCategory::LocalSignature, &id, sig)
    }

    pub fn get_by_id(&self, category: EntityCategory, id: &str) -> Result<EntityRef<'_>, SceneError> {
        Ok(match category {
            EntityCategory::Ray => EntityRef::Ray(self.ray(id)?),
            EntityCategory::HitGroup => EntityRef::HitGroup(self.hit_group(id)?),
            EntityCategory::Geometry => EntityRef::Geometry(self.geometry(id)?),
            EntityCategory::GlobalSignature => EntityRef::Signature(self.global_signature(id)?),
            EntityCategory::LocalSignature => EntityRef::Signature(self.local_signature(id)?),
        })
    }

    pub fn ray(&self, id: &str) -> Result<&RayType, SceneError> {
        lookup(&self.rays, EntityCategory::Ray, id)
    }

    pub fn hit_group(&self, id: &str) -> Result<&HitGroup, SceneError> {
        lookup(&self.hit_groups, EntityCategory::HitGroup, id)
    }

    pub fn geometry(&self, id: &str) -> Result<&Geometry, SceneError> {
        lookup(&self.geometries, EntityCategory::Geometry, id)
    }

    pub fn global_signature(&self, id: &str) -> Result<&RootSignature, SceneError> {
        lookup(&self.global_signatures, EntityCategory::GlobalSignature, id)
    }

    pub fn local_signature(&self, id: &str) -> Result<&RootSignature, SceneError> {
        lookup(&self.local_signatures, EntityCategory::LocalSignature, id)
    }

    pub fn rays(&self) -> impl ExactSizeIterator<Item = &RayType> {
        self.rays.values()
    }

    pub fn hit_groups(&self) -> impl ExactSizeIterator<Item = &HitGroup> {
        self.hit_groups.values()
    }

    pub fn geometries(&self) -> impl ExactSizeIterator<Item = &Geometry> {
        self.geometries.values()
    }

    pub fn global_signatures(&self) -> impl ExactSizeIterator<Item = &RootSignature> {
        self.global_signatures.values()
    }

    pub fn local_signatures(&self) -> impl ExactSizeIterator<Item = &RootSignature> {
        self.local_signatures.values()
    }

    pub fn ray_at(&self, contribution: usize) -> Option<&RayType> {
        self.rays.get_index(contribution).map(|(_, r)| r)
    }

    /// Ray contribution of a ray type: its creation index.
    pub fn ray_contribution(&self, id: &str) -> Option<usize> {
        self.rays.get_index_of(id)
    }

    pub fn hit_group_index(&self, id: &str) -> Option<usize> {
        self.hit_groups.get_index_of(id)
    }

    pub fn hit_group_at(&self, index: usize) -> Option<&HitGroup> {
        self.hit_groups.get_index(index).map(|(_, g)| g)
    }

    pub fn geometry_at(&self, index: usize) -> Option<&Geometry> {
        self.geometries.get_index(index).map(|(_, g)| g)
    }

    pub fn local_signature_index(&self, id: &str) -> Option<usize> {
        self.local_signatures.get_index_of(id)
    }

    pub fn local_signature_at(&self, index: usize) -> Option<&RootSignature> {
        self.local_signatures.get_index(index).map(|(_, s)| s)
    }

    pub fn ray_count(&self) -> usize {
        self.rays.len()
    }

    /// Every instance flattened in (geometry creation, instance creation) order.
    pub fn instance_slots(&self) -> Vec<InstanceSlot> {
        let mut out = Vec::new();
        let mut procedural = 0;
        for (geometry_index, g) in self.geometries.values().enumerate() {
            for instance_in_geometry in 0..g.instances.len() {
                let procedural_index = g.is_procedural().then(|| {
                    procedural += 1;
                    procedural - 1
                });
                out.push(InstanceSlot {
                    ordinal: out.len(),
                    geometry_index,
                    instance_in_geometry,
                    procedural_index,
                });
            }
        }
        out
    }

    pub fn procedural_instance_count(&self) -> usize {
        self.geometries
            .values()
            .filter(|g| g.is_procedural())
            .map(|g| g.instances.len())
            .sum()
    }

    /// Transforms of every procedural instance, geometry order then instance order.
    pub fn build_instance_buffer(&self) -> InstanceBuffer {
        let v: Vec<InstanceTransform> = self
            .geometries
            .values()
            .filter(|g| g.is_procedural())
            .flat_map(|g| g.instances.iter().copied())
            .collect();
        InstanceBuffer(v.into())
    }
}
