//! The host/shader compatibility layer.
//!
//! Every value that crosses from host code into a shader callback (or
//! back) belongs to one of four categories: payloads, root components,
//! root arguments and attribute structs. Each category is a tagged union
//! and every boundary crossing checks the tag, so a shader that reads a
//! shadow payload as a radiance payload gets a [`TypeMismatch`] instead of
//! garbage.

mod layout;

use std::fmt;
use std::ops::{Add, Mul};

use nalgebra::{Matrix4, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use layout::{packed_size, FieldKind};
use layout::{ByteReader, ByteWriter};

/// Deepest trace nesting a pipeline accepts by default.
pub const MAX_RECURSION: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Category {
    Payload,
    RootComponent,
    RootArguments,
    AttributeStruct,
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Category::Payload => "payload",
            Category::RootComponent => "root component",
            Category::RootArguments => "root arguments",
            Category::AttributeStruct => "attribute struct",
        };
        f.write_str(s)
    }
}

/// A value of one category was used where another variant was declared.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("type mismatch in {category}: expected {expected}, found {found}")]
pub struct TypeMismatch {
    pub category: Category,
    pub expected: &'static str,
    pub found: &'static str,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompatError {
    #[error(transparent)]
    TypeMismatch(#[from] TypeMismatch),
    #[error("{0} category has no variants")]
    EmptyCategory(Category),
    #[error("record truncated: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("unknown {category} tag {tag}")]
    UnknownTag { category: Category, tag: u32 },
    #[error("invalid value: {0}")]
    InvalidValue(String),
}

/// Linear RGBA color. Values may exceed 1 before the final image encode.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Rgba(pub [f32; 4]);

impl Rgba {
    pub const BLACK: Rgba = Rgba([0.0, 0.0, 0.0, 1.0]);
    pub const WHITE: Rgba = Rgba([1.0, 1.0, 1.0, 1.0]);

    pub const fn new(r: f32, g: f32, b: f32, a: f32) -> Self {
        Rgba([r, g, b, a])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }

    pub fn scale(self, s: f32) -> Rgba {
        Rgba(self.0.map(|c| c * s))
    }

    pub fn lerp(self, other: Rgba, t: f32) -> Rgba {
        let mut out = self.0;
        for (o, b) in out.iter_mut().zip(other.0) {
            *o += (b - *o) * t;
        }
        Rgba(out)
    }
}

impl Add for Rgba {
    type Output = Rgba;
    fn add(self, rhs: Rgba) -> Rgba {
        let mut out = self.0;
        for (o, b) in out.iter_mut().zip(rhs.0) {
            *o += b;
        }
        Rgba(out)
    }
}

impl Mul for Rgba {
    type Output = Rgba;
    fn mul(self, rhs: Rgba) -> Rgba {
        let mut out = self.0;
        for (o, b) in out.iter_mut().zip(rhs.0) {
            *o *= b;
        }
        Rgba(out)
    }
}

/// Common surface of the four tagged unions.
pub trait CompatVariant: Sized {
    type Kind: VariantKind;

    fn kind(&self) -> Self::Kind;

    /// Appends the packed field bytes (without any tag) to `out`.
    fn encode_into(&self, out: &mut Vec<u8>);

    /// Reads the packed fields of `kind` from `bytes`.
    fn decode_fields(kind: Self::Kind, bytes: &[u8]) -> Result<Self, CompatError>;

    /// Serializes into a tagged record.
    fn to_record(&self) -> TaggedRecord {
        let mut bytes = Vec::new();
        self.encode_into(&mut bytes);
        TaggedRecord {
            category: Self::Kind::CATEGORY,
            tag: self.kind().tag(),
            bytes,
        }
    }

    /// Reads a record under the tag the caller expects. The tag is compared
    /// before any field is touched.
    fn from_record(record: &TaggedRecord, expected: Self::Kind) -> Result<Self, CompatError> {
        let category = Self::Kind::CATEGORY;
        if record.category != category {
            return Err(CompatError::InvalidValue(format!(
                "record of category {} read as {}",
                record.category, category
            )));
        }
        let found = Self::Kind::from_tag(record.tag)?;
        expected.check(found)?;
        Self::decode_fields(found, &record.bytes)
    }
}

pub trait VariantKind: Copy + Eq + fmt::Debug + 'static {
    const CATEGORY: Category;
    const ALL: &'static [Self];

    fn name(self) -> &'static str;
    fn tag(self) -> u32;
    fn fields(self) -> &'static [FieldKind];

    fn size(self) -> usize {
        packed_size(self.fields())
    }

    fn from_tag(tag: u32) -> Result<Self, CompatError> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.tag() == tag)
            .ok_or(CompatError::UnknownTag {
                category: Self::CATEGORY,
                tag,
            })
    }

    fn check(self, found: Self) -> Result<(), TypeMismatch> {
        if self == found {
            Ok(())
        } else {
            Err(TypeMismatch {
                category: Self::CATEGORY,
                expected: self.name(),
                found: found.name(),
            })
        }
    }
}

/// A serialized category value together with its tag.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggedRecord {
    pub category: Category,
    pub tag: u32,
    pub bytes: Vec<u8>,
}

fn max_size<K: VariantKind>(kinds: impl IntoIterator<Item = K>) -> Result<usize, CompatError> {
    kinds
        .into_iter()
        .map(|k| k.size())
        .max()
        .ok_or(CompatError::EmptyCategory(K::CATEGORY))
}

/// Largest payload variant in `kinds`.
pub fn max_payload_size(kinds: impl IntoIterator<Item = PayloadKind>) -> Result<usize, CompatError> {
    max_size(kinds)
}

/// Largest root-arguments variant in `kinds`. This sizes every hit-group record.
pub fn max_root_arguments_size(
    kinds: impl IntoIterator<Item = RootArgumentsKind>,
) -> Result<usize, CompatError> {
    max_size(kinds)
}

pub fn max_attribute_size(
    kinds: impl IntoIterator<Item = AttributeKind>,
) -> Result<usize, CompatError> {
    max_size(kinds)
}

pub fn max_root_component_size(
    kinds: impl IntoIterator<Item = RootComponentKind>,
) -> Result<usize, CompatError> {
    max_size(kinds)
}

// ---------------------------------------------------------------------------
// Payloads

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RayPayload {
    pub color: Rgba,
    pub recursion_depth: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ShadowRayPayload {
    pub hit: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Payload {
    Ray(RayPayload),
    Shadow(ShadowRayPayload),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PayloadKind {
    Ray,
    Shadow,
}

impl VariantKind for PayloadKind {
    const CATEGORY: Category = Category::Payload;
    const ALL: &'static [Self] = &[PayloadKind::Ray, PayloadKind::Shadow];

    fn name(self) -> &'static str {
        match self {
            PayloadKind::Ray => "RayPayload",
            PayloadKind::Shadow => "ShadowRayPayload",
        }
    }

    fn tag(self) -> u32 {
        self as u32
    }

    fn fields(self) -> &'static [FieldKind] {
        match self {
            PayloadKind::Ray => &[FieldKind::Float4, FieldKind::U32],
            PayloadKind::Shadow => &[FieldKind::Bool],
        }
    }
}

impl Payload {
    pub fn ray() -> Self {
        Payload::Ray(RayPayload::default())
    }

    pub fn shadow() -> Self {
        Payload::Shadow(ShadowRayPayload::default())
    }

    /// A fresh payload of the same variant with default fields.
    pub fn fresh(kind: PayloadKind) -> Self {
        match kind {
            PayloadKind::Ray => Payload::ray(),
            PayloadKind::Shadow => Payload::shadow(),
        }
    }

    fn mismatch(&self, expected: PayloadKind) -> TypeMismatch {
        TypeMismatch {
            category: Category::Payload,
            expected: expected.name(),
            found: self.kind().name(),
        }
    }

    pub fn as_ray(&self) -> Result<&RayPayload, TypeMismatch> {
        match self {
            Payload::Ray(p) => Ok(p),
            _ => Err(self.mismatch(PayloadKind::Ray)),
        }
    }

    pub fn as_ray_mut(&mut self) -> Result<&mut RayPayload, TypeMismatch> {
        match self {
            Payload::Ray(p) => Ok(p),
            _ => Err(self.mismatch(PayloadKind::Ray)),
        }
    }

    pub fn as_shadow(&self) -> Result<&ShadowRayPayload, TypeMismatch> {
        match self {
            Payload::Shadow(p) => Ok(p),
            _ => Err(self.mismatch(PayloadKind::Shadow)),
        }
    }

    pub fn as_shadow_mut(&mut self) -> Result<&mut ShadowRayPayload, TypeMismatch> {
        match self {
            Payload::Shadow(p) => Ok(p),
            _ => Err(self.mismatch(PayloadKind::Shadow)),
        }
    }

    pub fn validate(&self, max_recursion: u32) -> Result<(), CompatError> {
        if let Payload::Ray(p) = self {
            if !p.color.is_finite() {
                return Err(CompatError::InvalidValue("payload color is not finite".into()));
            }
            if p.recursion_depth > max_recursion {
                return Err(CompatError::InvalidValue(format!(
                    "payload recursion depth {} exceeds {}",
                    p.recursion_depth, max_recursion
                )));
            }
        }
        Ok(())
    }
}

impl CompatVariant for Payload {
    type Kind = PayloadKind;

    fn kind(&self) -> PayloadKind {
        match self {
            Payload::Ray(_) => PayloadKind::Ray,
            Payload::Shadow(_) => PayloadKind::Shadow,
        }
    }

    fn encode_into(&self, out: &mut Vec<u8>) {
        let mut w = ByteWriter::new(out);
        match self {
            Payload::Ray(p) => {
                w.floats(&p.color.0);
                w.u32(p.recursion_depth);
            }
            Payload::Shadow(p) => w.bool(p.hit),
        }
    }

    fn decode_fields(kind: PayloadKind, bytes: &[u8]) -> Result<Self, CompatError> {
        let mut r = ByteReader::new(bytes);
        Ok(match kind {
            PayloadKind::Ray => Payload::Ray(RayPayload {
                color: Rgba(r.floats::<4>()?),
                recursion_depth: r.u32()?,
            }),
            PayloadKind::Shadow => Payload::Shadow(ShadowRayPayload { hit: r.bool()? }),
        })
    }
}

// ---------------------------------------------------------------------------
// Root components

/// Per-frame constants visible to every shader through the global signature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneConstantBuffer {
    pub camera_position: Vector3<f32>,
    pub projection_to_world: Matrix4<f32>,
    pub light_position: Vector3<f32>,
    pub light_ambient: Rgba,
    pub light_diffuse: Rgba,
    pub elapsed_time: f32,
}

impl Default for SceneConstantBuffer {
    fn default() -> Self {
        Self {
            camera_position: Vector3::zeros(),
            projection_to_world: Matrix4::identity(),
            light_position: Vector3::zeros(),
            light_ambient: Rgba::BLACK,
            light_diffuse: Rgba::WHITE,
            elapsed_time: 0.0,
        }
    }
}

impl SceneConstantBuffer {
    pub fn validate(&self) -> Result<(), CompatError> {
        let det = self.projection_to_world.cast::<f64>().determinant();
        if !det.is_finite() || det.abs() <= crate::math::SINGULAR_EPSILON {
            return Err(CompatError::InvalidValue(format!(
                "projection_to_world is singular (det = {det:e})"
            )));
        }
        Ok(())
    }
}

/// Phong material of one primitive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrimitiveConstantBuffer {
    pub albedo: Rgba,
    pub reflectance: f32,
    pub diffuse_coef: f32,
    pub specular_coef: f32,
    pub specular_power: f32,
    pub step_scale: f32,
}

impl Default for PrimitiveConstantBuffer {
    fn default() -> Self {
        Self {
            albedo: Rgba::WHITE,
            reflectance: 0.0,
            diffuse_coef: 0.9,
            specular_coef: 0.3,
            specular_power: 32.0,
            step_scale: 1.0,
        }
    }
}

impl PrimitiveConstantBuffer {
    pub fn validate(&self) -> Result<(), CompatError> {
        if !(self.step_scale > 0.0 && self.step_scale <= 1.0) {
            return Err(CompatError::InvalidValue(format!(
                "step_scale must be in (0, 1], got {}",
                self.step_scale
            )));
        }
        if !(0.0..=1.0).contains(&self.reflectance) {
            return Err(CompatError::InvalidValue(format!(
                "reflectance must be in [0, 1], got {}",
                self.reflectance
            )));
        }
        if !self.albedo.is_finite() {
            return Err(CompatError::InvalidValue("albedo is not finite".into()));
        }
        Ok(())
    }

    fn write(&self, w: &mut ByteWriter<'_>) {
        w.floats(&self.albedo.0);
        w.floats(&[
            self.reflectance,
            self.diffuse_coef,
            self.specular_coef,
            self.specular_power,
            self.step_scale,
        ]);
    }

    fn read(r: &mut ByteReader<'_>) -> Result<Self, CompatError> {
        let albedo = Rgba(r.floats::<4>()?);
        let [reflectance, diffuse_coef, specular_coef, specular_power, step_scale] =
            r.floats::<5>()?;
        Ok(Self {
            albedo,
            reflectance,
            diffuse_coef,
            specular_coef,
            specular_power,
            step_scale,
        })
    }

    const FIELDS: [FieldKind; 6] = [
        FieldKind::Float4,
        FieldKind::F32,
        FieldKind::F32,
        FieldKind::F32,
        FieldKind::F32,
        FieldKind::F32,
    ];
}

/// Opaque handle to an engine-owned resource (output target, acceleration
/// structure, geometry buffers).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ResourceHandle(pub u32);

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RootComponent {
    DontApply(ResourceHandle),
    SceneConstantBuffer(SceneConstantBuffer),
    InstanceBuffer(ResourceHandle),
    PrimitiveConstantBuffer(PrimitiveConstantBuffer),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RootComponentKind {
    DontApply,
    SceneConstantBuffer,
    InstanceBuffer,
    PrimitiveConstantBuffer,
}

const SCENE_CB_FIELDS: [FieldKind; 6] = [
    FieldKind::Float3,
    FieldKind::Float4x4,
    FieldKind::Float3,
    FieldKind::Float4,
    FieldKind::Float4,
    FieldKind::F32,
];

impl VariantKind for RootComponentKind {
    const CATEGORY: Category = Category::RootComponent;
    const ALL: &'static [Self] = &[
        RootComponentKind::DontApply,
        RootComponentKind::SceneConstantBuffer,
        RootComponentKind::InstanceBuffer,
        RootComponentKind::PrimitiveConstantBuffer,
    ];

    fn name(self) -> &'static str {
        match self {
            RootComponentKind::DontApply => "DontApply",
            RootComponentKind::SceneConstantBuffer => "SceneConstantBuffer",
            RootComponentKind::InstanceBuffer => "InstanceBuffer",
            RootComponentKind::PrimitiveConstantBuffer => "PrimitiveConstantBuffer",
        }
    }

    fn tag(self) -> u32 {
        self as u32
    }

    fn fields(self) -> &'static [FieldKind] {
        match self {
            RootComponentKind::DontApply | RootComponentKind::InstanceBuffer => &[FieldKind::U32],
            RootComponentKind::SceneConstantBuffer => &SCENE_CB_FIELDS,
            RootComponentKind::PrimitiveConstantBuffer => &PrimitiveConstantBuffer::FIELDS,
        }
    }
}

impl RootComponent {
    fn mismatch(&self, expected: RootComponentKind) -> TypeMismatch {
        TypeMismatch {
            category: Category::RootComponent,
            expected: expected.name(),
            found: self.kind().name(),
        }
    }

    pub fn as_scene_constants(&self) -> Result<&SceneConstantBuffer, TypeMismatch> {
        match self {
            RootComponent::SceneConstantBuffer(c) => Ok(c),
            _ => Err(self.mismatch(RootComponentKind::SceneConstantBuffer)),
        }
    }

    pub fn as_instance_buffer(&self) -> Result<ResourceHandle, TypeMismatch> {
        match self {
            RootComponent::InstanceBuffer(h) => Ok(*h),
            _ => Err(self.mismatch(RootComponentKind::InstanceBuffer)),
        }
    }

    pub fn as_primitive_constants(&self) -> Result<&PrimitiveConstantBuffer, TypeMismatch> {
        match self {
            RootComponent::PrimitiveConstantBuffer(c) => Ok(c),
            _ => Err(self.mismatch(RootComponentKind::PrimitiveConstantBuffer)),
        }
    }

    pub fn as_opaque(&self) -> Result<ResourceHandle, TypeMismatch> {
        match self {
            RootComponent::DontApply(h) => Ok(*h),
            _ => Err(self.mismatch(RootComponentKind::DontApply)),
        }
    }

    pub fn validate(&self) -> Result<(), CompatError> {
        match self {
            RootComponent::SceneConstantBuffer(c) => c.validate(),
            RootComponent::PrimitiveConstantBuffer(c) => c.validate(),
            _ => Ok(()),
        }
    }
}

impl CompatVariant for RootComponent {
    type Kind = RootComponentKind;

    fn kind(&self) -> RootComponentKind {
        match self {
            RootComponent::DontApply(_) => RootComponentKind::DontApply,
            RootComponent::SceneConstantBuffer(_) => RootComponentKind::SceneConstantBuffer,
            RootComponent::InstanceBuffer(_) => RootComponentKind::InstanceBuffer,
            RootComponent::PrimitiveConstantBuffer(_) => RootComponentKind::PrimitiveConstantBuffer,
        }
    }

    fn encode_into(&self, out: &mut Vec<u8>) {
        let mut w = ByteWriter::new(out);
        match self {
            RootComponent::DontApply(h) | RootComponent::InstanceBuffer(h) => w.u32(h.0),
            RootComponent::SceneConstantBuffer(c) => {
                w.floats(c.camera_position.as_slice());
                // row-major, as a shader constant buffer would see it
                w.floats(c.projection_to_world.transpose().as_slice());
                w.floats(c.light_position.as_slice());
                w.floats(&c.light_ambient.0);
                w.floats(&c.light_diffuse.0);
                w.f32(c.elapsed_time);
            }
            RootComponent::PrimitiveConstantBuffer(c) => c.write(&mut w),
        }
    }

    fn decode_fields(kind: RootComponentKind, bytes: &[u8]) -> Result<Self, CompatError> {
        let mut r = ByteReader::new(bytes);
        Ok(match kind {
            RootComponentKind::DontApply => RootComponent::DontApply(ResourceHandle(r.u32()?)),
            RootComponentKind::InstanceBuffer => {
                RootComponent::InstanceBuffer(ResourceHandle(r.u32()?))
            }
            RootComponentKind::SceneConstantBuffer => {
                let camera_position = Vector3::from(r.floats::<3>()?);
                let m = r.floats::<16>()?;
                let projection_to_world = Matrix4::from_row_slice(&m);
                let light_position = Vector3::from(r.floats::<3>()?);
                let light_ambient = Rgba(r.floats::<4>()?);
                let light_diffuse = Rgba(r.floats::<4>()?);
                let elapsed_time = r.f32()?;
                RootComponent::SceneConstantBuffer(SceneConstantBuffer {
                    camera_position,
                    projection_to_world,
                    light_position,
                    light_ambient,
                    light_diffuse,
                    elapsed_time,
                })
            }
            RootComponentKind::PrimitiveConstantBuffer => {
                RootComponent::PrimitiveConstantBuffer(PrimitiveConstantBuffer::read(&mut r)?)
            }
        })
    }
}

// ---------------------------------------------------------------------------
// Root arguments

/// Which signed-distance primitive a procedural record renders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimitiveType {
    Mandelbulb = 0,
    Pacman = 1,
    JuliaSets = 2,
}

impl PrimitiveType {
    pub const ALL: [PrimitiveType; 3] = [
        PrimitiveType::Mandelbulb,
        PrimitiveType::Pacman,
        PrimitiveType::JuliaSets,
    ];

    pub fn from_index(i: u32) -> Option<Self> {
        Self::ALL.get(i as usize).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangleRootArguments {
    pub material: PrimitiveConstantBuffer,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProceduralRootArguments {
    pub material: PrimitiveConstantBuffer,
    pub primitive_type: PrimitiveType,
    /// Index into the global instance buffer.
    pub instance_index: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RootArguments {
    Triangle(TriangleRootArguments),
    Procedural(ProceduralRootArguments),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RootArgumentsKind {
    Triangle,
    Procedural,
}

const PROCEDURAL_ARGS_FIELDS: [FieldKind; 8] = [
    FieldKind::Float4,
    FieldKind::F32,
    FieldKind::F32,
    FieldKind::F32,
    FieldKind::F32,
    FieldKind::F32,
    FieldKind::U32,
    FieldKind::U32,
];

impl VariantKind for RootArgumentsKind {
    const CATEGORY: Category = Category::RootArguments;
    const ALL: &'static [Self] = &[RootArgumentsKind::Triangle, RootArgumentsKind::Procedural];

    fn name(self) -> &'static str {
        match self {
            RootArgumentsKind::Triangle => "TriangleRootArguments",
            RootArgumentsKind::Procedural => "ProceduralRootArguments",
        }
    }

    fn tag(self) -> u32 {
        self as u32
    }

    fn fields(self) -> &'static [FieldKind] {
        match self {
            RootArgumentsKind::Triangle => &PrimitiveConstantBuffer::FIELDS,
            RootArgumentsKind::Procedural => &PROCEDURAL_ARGS_FIELDS,
        }
    }
}

impl RootArguments {
    fn mismatch(&self, expected: RootArgumentsKind) -> TypeMismatch {
        TypeMismatch {
            category: Category::RootArguments,
            expected: expected.name(),
            found: self.kind().name(),
        }
    }

    pub fn as_triangle(&self) -> Result<&TriangleRootArguments, TypeMismatch> {
        match self {
            RootArguments::Triangle(a) => Ok(a),
            _ => Err(self.mismatch(RootArgumentsKind::Triangle)),
        }
    }

    pub fn as_procedural(&self) -> Result<&ProceduralRootArguments, TypeMismatch> {
        match self {
            RootArguments::Procedural(a) => Ok(a),
            _ => Err(self.mismatch(RootArgumentsKind::Procedural)),
        }
    }

    pub fn material(&self) -> &PrimitiveConstantBuffer {
        match self {
            RootArguments::Triangle(a) => &a.material,
            RootArguments::Procedural(a) => &a.material,
        }
    }

    /// Checks the instance index against the number of procedural instances
    /// the arguments are meant for.
    pub fn validate(&self, procedural_instances: usize) -> Result<(), CompatError> {
        self.material().validate()?;
        if let RootArguments::Procedural(a) = self {
            if a.instance_index as usize >= procedural_instances {
                return Err(CompatError::InvalidValue(format!(
                    "instance_index {} out of range for {} procedural instances",
                    a.instance_index, procedural_instances
                )));
            }
        }
        Ok(())
    }
}

impl CompatVariant for RootArguments {
    type Kind = RootArgumentsKind;

    fn kind(&self) -> RootArgumentsKind {
        match self {
            RootArguments::Triangle(_) => RootArgumentsKind::Triangle,
            RootArguments::Procedural(_) => RootArgumentsKind::Procedural,
        }
    }

    fn encode_into(&self, out: &mut Vec<u8>) {
        let mut w = ByteWriter::new(out);
        match self {
            RootArguments::Triangle(a) => a.material.write(&mut w),
            RootArguments::Procedural(a) => {
                a.material.write(&mut w);
                w.u32(a.primitive_type as u32);
                w.u32(a.instance_index);
            }
        }
    }

    fn decode_fields(kind: RootArgumentsKind, bytes: &[u8]) -> Result<Self, CompatError> {
        let mut r = ByteReader::new(bytes);
        let material = PrimitiveConstantBuffer::read(&mut r)?;
        Ok(match kind {
            RootArgumentsKind::Triangle => RootArguments::Triangle(TriangleRootArguments { material }),
            RootArgumentsKind::Procedural => {
                let raw = r.u32()?;
                let primitive_type = PrimitiveType::from_index(raw).ok_or_else(|| {
                    CompatError::InvalidValue(format!("unknown primitive type {raw}"))
                })?;
                RootArguments::Procedural(ProceduralRootArguments {
                    material,
                    primitive_type,
                    instance_index: r.u32()?,
                })
            }
        })
    }
}

// ---------------------------------------------------------------------------
// Attribute structs

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProceduralPrimitiveAttributes {
    /// Unit normal in the primitive's local space.
    pub normal: Vector3<f32>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangleAttributes {
    pub barycentrics: Vector2<f32>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AttributeStruct {
    Procedural(ProceduralPrimitiveAttributes),
    Triangle(TriangleAttributes),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AttributeKind {
    Procedural,
    Triangle,
}

impl VariantKind for AttributeKind {
    const CATEGORY: Category = Category::AttributeStruct;
    const ALL: &'static [Self] = &[AttributeKind::Procedural, AttributeKind::Triangle];

    fn name(self) -> &'static str {
        match self {
            AttributeKind::Procedural => "ProceduralPrimitiveAttributes",
            AttributeKind::Triangle => "TriangleAttributes",
        }
    }

    fn tag(self) -> u32 {
        self as u32
    }

    fn fields(self) -> &'static [FieldKind] {
        match self {
            AttributeKind::Procedural => &[FieldKind::Float3],
            AttributeKind::Triangle => &[FieldKind::Float2],
        }
    }
}

impl AttributeStruct {
    fn mismatch(&self, expected: AttributeKind) -> TypeMismatch {
        TypeMismatch {
            category: Category::AttributeStruct,
            expected: expected.name(),
            found: self.kind().name(),
        }
    }

    pub fn as_procedural(&self) -> Result<&ProceduralPrimitiveAttributes, TypeMismatch> {
        match self {
            AttributeStruct::Procedural(a) => Ok(a),
            _ => Err(self.mismatch(AttributeKind::Procedural)),
        }
    }

    pub fn as_triangle(&self) -> Result<&TriangleAttributes, TypeMismatch> {
        match self {
            AttributeStruct::Triangle(a) => Ok(a),
            _ => Err(self.mismatch(AttributeKind::Triangle)),
        }
    }

    pub fn validate(&self) -> Result<(), CompatError> {
        match self {
            AttributeStruct::Procedural(a) => {
                let len = a.normal.norm();
                if (len - 1.0).abs() > 1e-4 {
                    return Err(CompatError::InvalidValue(format!(
                        "attribute normal has length {len}"
                    )));
                }
            }
            AttributeStruct::Triangle(a) => {
                let (u, v) = (a.barycentrics.x, a.barycentrics.y);
                if !(0.0..=1.0).contains(&u) || !(0.0..=1.0).contains(&v) || u + v > 1.0 + 1e-6 {
                    return Err(CompatError::InvalidValue(format!(
                        "barycentrics ({u}, {v}) outside the triangle"
                    )));
                }
            }
        }
        Ok(())
    }
}

impl CompatVariant for AttributeStruct {
    type Kind = AttributeKind;

    fn kind(&self) -> AttributeKind {
        match self {
            AttributeStruct::Procedural(_) => AttributeKind::Procedural,
            AttributeStruct::Triangle(_) => AttributeKind::Triangle,
        }
    }

    fn encode_into(&self, out: &mut Vec<u8>) {
        let mut w = ByteWriter::new(out);
        match self {
            AttributeStruct::Procedural(a) => w.floats(a.normal.as_slice()),
            AttributeStruct::Triangle(a) => w.floats(a.barycentrics.as_slice()),
        }
    }

    fn decode_fields(kind: AttributeKind, bytes: &[u8]) -> Result<Self, CompatError> {
        let mut r = ByteReader::new(bytes);
        Ok(match kind {
            AttributeKind::Procedural => AttributeStruct::Procedural(ProceduralPrimitiveAttributes {
                normal: Vector3::from(r.floats::<3>()?),
            }),
            AttributeKind::Triangle => AttributeStruct::Triangle(TriangleAttributes {
                barycentrics: Vector2::from(r.floats::<2>()?),
            }),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn payload_max_picks_ray_payload() {
        // RayPayload: float4 color + u32 depth; ShadowRayPayload: one bool.
        let ray = 16 + 4;
        let shadow = 1;
        assert_eq!(PayloadKind::Ray.size(), ray);
        assert_eq!(PayloadKind::Shadow.size(), shadow);
        assert_eq!(max_payload_size(PayloadKind::ALL.iter().copied()), Ok(ray));
        assert_eq!(
            max_payload_size([PayloadKind::Shadow, PayloadKind::Ray]),
            max_payload_size([PayloadKind::Ray, PayloadKind::Shadow])
        );
    }

    #[test]
    fn single_variant_and_empty_sets() {
        assert_eq!(max_payload_size([PayloadKind::Shadow]), Ok(1));
        assert_eq!(
            max_root_arguments_size([RootArgumentsKind::Triangle]),
            Ok(RootArgumentsKind::Triangle.size())
        );
        assert_eq!(
            max_payload_size([]),
            Err(CompatError::EmptyCategory(Category::Payload))
        );
        assert_eq!(
            max_root_arguments_size([]),
            Err(CompatError::EmptyCategory(Category::RootArguments))
        );
    }

    #[test]
    fn procedural_arguments_are_the_largest() {
        assert_eq!(RootArgumentsKind::Triangle.size(), 36);
        assert_eq!(RootArgumentsKind::Procedural.size(), 44);
        assert_eq!(
            max_root_arguments_size(RootArgumentsKind::ALL.iter().copied()),
            Ok(44)
        );
    }

    #[test]
    fn encoded_length_matches_layout() {
        let samples: Vec<Box<dyn Fn() -> (usize, usize)>> = vec![
            Box::new(|| (Payload::ray().to_record().bytes.len(), PayloadKind::Ray.size())),
            Box::new(|| (Payload::shadow().to_record().bytes.len(), PayloadKind::Shadow.size())),
            Box::new(|| {
                let a = RootArguments::Procedural(ProceduralRootArguments {
                    material: PrimitiveConstantBuffer::default(),
                    primitive_type: PrimitiveType::Pacman,
                    instance_index: 3,
                });
                (a.to_record().bytes.len(), RootArgumentsKind::Procedural.size())
            }),
        ];
        for s in samples {
            let (got, want) = s();
            assert_eq!(got, want);
        }
        assert_eq!(RootComponentKind::SceneConstantBuffer.size(), 124);
    }

    #[test]
    fn wrong_tag_is_rejected_before_decode() {
        let rec = Payload::shadow().to_record();
        let err = Payload::from_record(&rec, PayloadKind::Ray).unwrap_err();
        assert!(matches!(err, CompatError::TypeMismatch(_)));

        // Even a truncated body is never read when the tag is wrong.
        let mut short = RootArguments::Triangle(TriangleRootArguments {
            material: PrimitiveConstantBuffer::default(),
        })
        .to_record();
        short.bytes.truncate(2);
        let err = RootArguments::from_record(&short, RootArgumentsKind::Procedural).unwrap_err();
        assert!(matches!(err, CompatError::TypeMismatch(_)));
    }

    #[test]
    fn accessors_report_mismatch() {
        let mut p = Payload::shadow();
        assert!(p.as_ray_mut().is_err());
        assert!(p.as_shadow_mut().is_ok());
        let c = RootComponent::InstanceBuffer(ResourceHandle(0));
        let e = c.as_scene_constants().unwrap_err();
        assert_eq!(e.expected, "SceneConstantBuffer");
        assert_eq!(e.found, "InstanceBuffer");
    }

    #[test]
    fn invariants_are_checked() {
        let m = PrimitiveConstantBuffer {
            step_scale: 0.0,
            ..Default::default()
        };
        assert!(m.validate().is_err());
        let bad = AttributeStruct::Triangle(TriangleAttributes {
            barycentrics: Vector2::new(0.7, 0.5),
        });
        assert!(bad.validate().is_err());
        let mut p = Payload::ray();
        p.as_ray_mut().unwrap().recursion_depth = MAX_RECURSION + 1;
        assert!(p.validate(MAX_RECURSION).is_err());
        let sc = SceneConstantBuffer {
            camera_position: Vector3::zeros(),
            projection_to_world: Matrix4::zeros(),
            light_position: Vector3::zeros(),
            light_ambient: Rgba::BLACK,
            light_diffuse: Rgba::WHITE,
            elapsed_time: 0.0,
        };
        assert!(sc.validate().is_err());
        let args = RootArguments::Procedural(ProceduralRootArguments {
            material: PrimitiveConstantBuffer::default(),
            primitive_type: PrimitiveType::Mandelbulb,
            instance_index: 4,
        });
        assert!(args.validate(4).is_err());
        assert!(args.validate(5).is_ok());
    }

    fn rgba() -> impl Strategy<Value = Rgba> {
        prop::array::uniform4(-1e6f32..1e6).prop_map(Rgba)
    }

    fn material() -> impl Strategy<Value = PrimitiveConstantBuffer> {
        (rgba(), prop::array::uniform5(-1e3f32..1e3)).prop_map(|(albedo, f)| {
            PrimitiveConstantBuffer {
                albedo,
                reflectance: f[0],
                diffuse_coef: f[1],
                specular_coef: f[2],
                specular_power: f[3],
                step_scale: f[4],
            }
        })
    }

    fn root_arguments() -> impl Strategy<Value = RootArguments> {
        prop_oneof![
            material().prop_map(|material| RootArguments::Triangle(TriangleRootArguments { material })),
            (material(), 0u32..3, any::<u32>()).prop_map(|(material, t, i)| {
                RootArguments::Procedural(ProceduralRootArguments {
                    material,
                    primitive_type: PrimitiveType::from_index(t).unwrap(),
                    instance_index: i,
                })
            }),
        ]
    }

    fn root_component() -> impl Strategy<Value = RootComponent> {
        prop_oneof![
            any::<u32>().prop_map(|h| RootComponent::DontApply(ResourceHandle(h))),
            any::<u32>().prop_map(|h| RootComponent::InstanceBuffer(ResourceHandle(h))),
            material().prop_map(RootComponent::PrimitiveConstantBuffer),
            (
                prop::array::uniform3(-1e3f32..1e3),
                prop::array::uniform16(-1e3f32..1e3),
                prop::array::uniform3(-1e3f32..1e3),
                rgba(),
                rgba(),
                0f32..1e4
            )
                .prop_map(|(c, m, l, a, d, t)| {
                    RootComponent::SceneConstantBuffer(SceneConstantBuffer {
                        camera_position: Vector3::from(c),
                        projection_to_world: Matrix4::from_column_slice(&m),
                        light_position: Vector3::from(l),
                        light_ambient: a,
                        light_diffuse: d,
                        elapsed_time: t,
                    })
                }),
        ]
    }

    proptest! {
        #[test]
        fn root_arguments_round_trip(args in root_arguments()) {
            let rec = args.to_record();
            prop_assert_eq!(RootArguments::from_record(&rec, args.kind()).unwrap(), args);
            let other = RootArgumentsKind::ALL.iter().copied().find(|k| *k != args.kind()).unwrap();
            prop_assert!(
                matches!(RootArguments::from_record(&rec, other), Err(CompatError::TypeMismatch(_))),
                "wrong tag must be rejected"
            );
        }

        #[test]
        fn root_components_round_trip(c in root_component()) {
            let rec = c.to_record();
            prop_assert_eq!(rec.bytes.len(), c.kind().size());
            prop_assert_eq!(RootComponent::from_record(&rec, c.kind()).unwrap(), c);
        }

        #[test]
        fn payloads_and_attributes_round_trip(
            color in rgba(), depth in 0u32..4, hit: bool,
            n in prop::array::uniform3(-1f32..1.0), b in prop::array::uniform2(0f32..0.5),
        ) {
            for p in [Payload::Ray(RayPayload { color, recursion_depth: depth }), Payload::Shadow(ShadowRayPayload { hit })] {
                prop_assert_eq!(Payload::from_record(&p.to_record(), p.kind()).unwrap(), p);
            }
            for a in [
                AttributeStruct::Procedural(ProceduralPrimitiveAttributes { normal: Vector3::from(n) }),
                AttributeStruct::Triangle(TriangleAttributes { barycentrics: Vector2::from(b) }),
            ] {
                prop_assert_eq!(AttributeStruct::from_record(&a.to_record(), a.kind()).unwrap(), a);
            }
        }

        #[test]
        fn max_size_is_order_independent(perm in Just(RootArgumentsKind::ALL.to_vec()).prop_shuffle()) {
            prop_assert_eq!(
                max_root_arguments_size(perm.iter().copied()),
                max_root_arguments_size(RootArgumentsKind::ALL.iter().copied())
            );
        }
    }
}
