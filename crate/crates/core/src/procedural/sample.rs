//! The sample scene — a ground plane, a Julia set, two Pac-Men and a
//! Mandelbulb — described as data and replayed through the build sequence:
//! rays, hit groups, geometry, constant buffers, instance buffer,
//! acceleration structure, root signatures and shader-table entries.

use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::camera::Camera;
use super::shaders::{
    primitive_shaders, sample_registry, ShaderParams, CLOSEST_HIT_TRIANGLE, MISS, MISS_SHADOW, RAYGEN,
};
use crate::accel::{AccelError, AccelerationStructure};
use crate::compat::{
    CompatError, Payload, PrimitiveConstantBuffer, PrimitiveType, ProceduralRootArguments, Rgba, RootArguments,
    RootComponent, ResourceHandle, SceneConstantBuffer, TriangleRootArguments,
};
use crate::math::{affine_from_rows, affine_to_rows, rotation_y, translation, uniform_scale, Aabb, Vec3};
use crate::pipeline::{
    DispatchError, DispatchOutput, GlobalResources, Pipeline, PipelineConfig, PipelineError, ShaderRegistry,
    ShaderTable, ShaderTableBuilder, TableError, TableLayout,
};
use crate::scene::{
    DescriptorRange, Geometry, HitGroup, InstanceTransform, RayType, RootSignature, Scene, SceneError, Vertex,
    ViewKind,
};

pub const RADIANCE: &str = "Radiance";
pub const SHADOW: &str = "Shadow";
pub const GLOBAL_SIGNATURE: &str = "GlobalSignature";
pub const TRIANGLE_SIGNATURE: &str = "Triangle";
pub const PROCEDURAL_SIGNATURE: &str = "Procedural";
pub const TRIANGLE_HIT_GROUP: &str = "Triangle";
pub const TRIANGLE_SHADOW_HIT_GROUP: &str = "Triangle_Shadow";

/// Descriptor handles of the globally bound resources.
pub const OUTPUT_HANDLE: ResourceHandle = ResourceHandle(0);
pub const ACCEL_HANDLE: ResourceHandle = ResourceHandle(1);
pub const GEOMETRY_BUFFERS_HANDLE: ResourceHandle = ResourceHandle(2);
pub const INSTANCE_BUFFER_HANDLE: ResourceHandle = ResourceHandle(3);

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("{entity}: {message}")]
    Invalid { entity: String, message: String },
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Accel(#[from] AccelError),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Compat(#[from] CompatError),
}

fn invalid(entity: impl Into<String>, message: impl Into<String>) -> BuildError {
    BuildError::Invalid {
        entity: entity.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Light {
    pub position: [f64; 3],
    pub ambient: Rgba,
    pub diffuse: Rgba,
}

impl Default for Light {
    fn default() -> Self {
        Self {
            position: [6.0, 14.0, 10.0],
            ambient: Rgba::new(0.22, 0.22, 0.25, 1.0),
            diffuse: Rgba::new(0.9, 0.88, 0.82, 1.0),
        }
    }
}

/// One geometry with its material and instances. Instance transforms are
/// affine local-to-world matrices written as 12 row-major numbers (the top
/// three rows of the 4×4 matrix).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeometryDesc {
    /// A square grid in the local xz plane, centred on the origin, facing +y.
    Plane {
        id: String,
        size: f64,
        subdivisions: u32,
        #[serde(default)]
        material: PrimitiveConstantBuffer,
        instances: Vec<[f64; 12]>,
    },
    /// An indexed triangle mesh; normals default to area-weighted vertex normals.
    Mesh {
        id: String,
        positions: Vec<[f64; 3]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        normals: Option<Vec<[f64; 3]>>,
        indices: Vec<u32>,
        #[serde(default)]
        material: PrimitiveConstantBuffer,
        instances: Vec<[f64; 12]>,
    },
    /// A signed-distance primitive inside a local-space AABB.
    Procedural {
        id: String,
        primitive: PrimitiveType,
        aabb: Aabb,
        #[serde(default)]
        material: PrimitiveConstantBuffer,
        instances: Vec<[f64; 12]>,
    },
}

impl GeometryDesc {
    pub fn id(&self) -> &str {
        match self {
            GeometryDesc::Plane { id, .. } | GeometryDesc::Mesh { id, .. } | GeometryDesc::Procedural { id, .. } => id,
        }
    }

    pub fn material(&self) -> &PrimitiveConstantBuffer {
        match self {
            GeometryDesc::Plane { material, .. }
            | GeometryDesc::Mesh { material, .. }
            | GeometryDesc::Procedural { material, .. } => material,
        }
    }

    pub fn instances(&self) -> &[[f64; 12]] {
        match self {
            GeometryDesc::Plane { instances, .. }
            | GeometryDesc::Mesh { instances, .. }
            | GeometryDesc::Procedural { instances, .. } => instances,
        }
    }

    pub fn primitive(&self) -> Option<PrimitiveType> {
        match self {
            GeometryDesc::Procedural { primitive, .. } => Some(*primitive),
            _ => None,
        }
    }
}

/// Everything needed to build the sample scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneDescription {
    pub camera: Camera,
    pub light: Light,
    pub shaders: ShaderParams,
    pub geometry: Vec<GeometryDesc>,
}

fn rows(m: crate::math::Mat4) -> [f64; 12] {
    affine_to_rows(&m)
}

fn material(albedo: Rgba, specular_coef: f32, specular_power: f32, step_scale: f32) -> PrimitiveConstantBuffer {
    PrimitiveConstantBuffer {
        albedo,
        specular_coef,
        specular_power,
        step_scale,
        ..Default::default()
    }
}

impl Default for SceneDescription {
    /// The built-in sample: plane, Julia set, two Pac-Men and a Mandelbulb.
    fn default() -> Self {
        // Pac-Man's mouth opens towards local +x; turn it towards +z (the camera side).
        let face_camera = rotation_y(-90.0);
        Self {
            camera: Camera::default(),
            light: Light::default(),
            shaders: ShaderParams::default(),
            geometry: vec![
                GeometryDesc::Plane {
                    id: "GlobalGeometry".into(),
                    size: 40.0,
                    subdivisions: 8,
                    material: material(Rgba::new(0.62, 0.62, 0.6, 1.0), 0.1, 8.0, 1.0),
                    instances: vec![rows(crate::math::Mat4::identity())],
                },
                GeometryDesc::Procedural {
                    id: "Julia".into(),
                    primitive: PrimitiveType::JuliaSets,
                    aabb: Aabb::new(Vec3::repeat(-1.5), Vec3::repeat(1.5)),
                    material: material(Rgba::new(0.85, 0.32, 0.24, 1.0), 0.4, 24.0, 0.5),
                    instances: vec![rows(
                        translation(Vec3::new(-4.5, 1.8, -0.5)) * rotation_y(30.0) * uniform_scale(1.2),
                    )],
                },
                GeometryDesc::Procedural {
                    id: "Pacman".into(),
                    primitive: PrimitiveType::Pacman,
                    aabb: Aabb::new(Vec3::repeat(-1.2), Vec3::repeat(1.2)),
                    material: material(Rgba::new(1.0, 0.82, 0.1, 1.0), 0.5, 32.0, 1.0),
                    instances: vec![
                        rows(translation(Vec3::new(-1.4, 1.0, 2.6)) * rotation_y(20.0) * face_camera),
                        rows(
                            translation(Vec3::new(1.2, 0.8, -2.2))
                                * rotation_y(-25.0)
                                * face_camera
                                * uniform_scale(0.8),
                        ),
                    ],
                },
                GeometryDesc::Procedural {
                    id: "Mandelbulb".into(),
                    primitive: PrimitiveType::Mandelbulb,
                    aabb: Aabb::new(Vec3::repeat(-1.25), Vec3::repeat(1.25)),
                    material: material(Rgba::new(0.35, 0.55, 0.9, 1.0), 0.4, 24.0, 0.5),
                    instances: vec![rows(translation(Vec3::new(4.2, 1.6, 0.0)) * uniform_scale(1.3))],
                },
            ],
        }
    }
}

/// Frame-dependent inputs: output size and animation time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub width: u32,
    pub height: u32,
    pub time: f64,
}

impl Default for Frame {
    fn default() -> Self {
        Self {
            width: 320,
            height: 240,
            time: 0.0,
        }
    }
}

impl Frame {
    pub fn validate(&self) -> Result<(), BuildError> {
        if self.width == 0 || self.height == 0 {
            return Err(invalid(
                "frame",
                format!("image size must be at least 1x1, got {}x{}", self.width, self.height),
            ));
        }
        if !self.time.is_finite() {
            return Err(invalid("frame", "time must be finite"));
        }
        Ok(())
    }

    pub fn aspect(&self) -> f64 {
        self.width as f64 / self.height as f64
    }
}

/// A square `size × size` grid of `subdivisions²` quads in the xz plane,
/// normals +y, counter-clockwise seen from above.
pub fn plane_mesh(size: f64, subdivisions: u32) -> (Vec<Vertex>, Vec<u32>) {
    let n = subdivisions.max(1);
    let step = size / n as f64;
    let half = size / 2.0;
    let mut vertices = Vec::with_capacity(((n + 1) * (n + 1)) as usize);
    for iz in 0..=n {
        for ix in 0..=n {
            vertices.push(Vertex {
                position: Vec3::new(-half + ix as f64 * step, 0.0, -half + iz as f64 * step),
                normal: Vec3::y(),
            });
        }
    }
    let mut indices = Vec::with_capacity((n * n * 6) as usize);
    let row = n + 1;
    for iz in 0..n {
        for ix in 0..n {
            let a = iz * row + ix;
            let (b, c, d) = (a + 1, a + row, a + row + 1);
            indices.extend_from_slice(&[a, c, b, b, c, d]);
        }
    }
    (vertices, indices)
}

/// Area-weighted vertex normals; isolated vertices get +y.
pub fn vertex_normals(positions: &[Vec3], indices: &[u32]) -> Vec<Vec3> {
    let mut normals = vec![Vec3::zeros(); positions.len()];
    for tri in indices.chunks_exact(3) {
        let [a, b, c] = [tri[0], tri[1], tri[2]].map(|i| i as usize);
        let face = (positions[b] - positions[a]).cross(&(positions[c] - positions[a]));
        for i in [a, b, c] {
            normals[i] += face;
        }
    }
    normals
        .into_iter()
        .map(|n| n.try_normalize(0.0).unwrap_or_else(Vec3::y))
        .collect()
}

fn instance_transforms(id: &str, instances: &[[f64; 12]]) -> Result<Vec<InstanceTransform>, BuildError> {
    instances
        .iter()
        .enumerate()
        .map(|(k, r)| {
            if r.iter().any(|v| !v.is_finite()) {
                return Err(invalid(id, format!("instance {k}: matrix entries must be finite")));
            }
            InstanceTransform::new(affine_from_rows(r)).map_err(|e| invalid(id, format!("instance {k}: {e}")))
        })
        .collect()
}

fn build_rays(scene: &mut Scene) -> Result<(), BuildError> {
    scene.add_ray(RayType::new(RADIANCE, MISS, Payload::ray())?)?;
    scene.add_ray(RayType::new(SHADOW, MISS_SHADOW, Payload::shadow())?)?;
    Ok(())
}

fn build_hit_groups(scene: &mut Scene) -> Result<(), BuildError> {
    scene.add_hit_group(HitGroup::new(
        TRIANGLE_HIT_GROUP,
        "HitGroup_Triangle",
        "",
        CLOSEST_HIT_TRIANGLE,
        "",
    )?)?;
    scene.add_hit_group(HitGroup::new(
        TRIANGLE_SHADOW_HIT_GROUP,
        "HitGroup_Triangle_Shadow",
        "",
        "",
        "",
    )?)?;
    for kind in [PrimitiveType::Pacman, PrimitiveType::Mandelbulb, PrimitiveType::JuliaSets] {
        let names = primitive_shaders(kind);
        scene.add_hit_group(HitGroup::new(
            names.hit_group,
            &format!("HitGroup_{}", names.hit_group),
            "",
            names.closest_hit,
            names.intersection,
        )?)?;
        scene.add_hit_group(HitGroup::new(
            names.shadow_hit_group,
            &format!("HitGroup_{}", names.shadow_hit_group),
            "",
            "",
            names.intersection,
        )?)?;
    }
    Ok(())
}

fn build_geometry(scene: &mut Scene, desc: &SceneDescription) -> Result<(), BuildError> {
    for g in &desc.geometry {
        let id = g.id();
        let instances = instance_transforms(id, g.instances())?;
        let geometry = match g {
            GeometryDesc::Plane { size, subdivisions, .. } => {
                if !(size.is_finite() && *size > 0.0) || *subdivisions == 0 {
                    return Err(invalid(id, "plane size must be > 0 and subdivisions >= 1"));
                }
                let (vertices, indices) = plane_mesh(*size, *subdivisions);
                Geometry::triangles(id, vertices, indices, instances)?
            }
            GeometryDesc::Mesh {
                positions,
                normals,
                indices,
                ..
            } => {
                let positions: Vec<Vec3> = positions.iter().map(|p| Vec3::from(*p)).collect();
                if positions.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
                    return Err(invalid(id, "vertex positions must be finite"));
                }
                if indices.iter().any(|&i| i as usize >= positions.len()) || indices.len() % 3 != 0 {
                    return Err(invalid(id, "indices must form triangles over the given positions"));
                }
                let normals = match normals {
                    Some(n) if n.len() != positions.len() => {
                        return Err(invalid(
                            id,
                            format!("{} normals for {} positions", n.len(), positions.len()),
                        ))
                    }
                    Some(n) => n
                        .iter()
                        .map(|v| Vec3::from(*v).try_normalize(0.0).unwrap_or_else(Vec3::y))
                        .collect(),
                    None => vertex_normals(&positions, indices),
                };
                let vertices = positions
                    .into_iter()
                    .zip(normals)
                    .map(|(position, normal)| Vertex { position, normal })
                    .collect();
                Geometry::triangles(id, vertices, indices.clone(), instances)?
            }
            GeometryDesc::Procedural { aabb, .. } => Geometry::procedural(id, *aabb, instances)?,
        };
        g.material()
            .validate()
            .map_err(|e| invalid(id, format!("material: {e}")))?;
        scene.add_geometry(geometry)?;
    }
    Ok(())
}

/// The per-frame scene constants: camera, light and time.
pub fn scene_constants(desc: &SceneDescription, frame: &Frame) -> SceneConstantBuffer {
    SceneConstantBuffer {
        camera_position: desc.camera.position_v().cast::<f32>(),
        projection_to_world: desc.camera.projection_to_world(frame.aspect()).cast::<f32>(),
        light_position: Vec3::from(desc.light.position).cast::<f32>(),
        light_ambient: desc.light.ambient,
        light_diffuse: desc.light.diffuse,
        elapsed_time: frame.time as f32,
    }
}

fn build_root_signatures(scene: &mut Scene) -> Result<(), BuildError> {
    let mut global = RootSignature::global(GLOBAL_SIGNATURE)?;
    global.add_descriptor_table(vec![DescriptorRange {
        handle: OUTPUT_HANDLE,
        view: ViewKind::Uav,
        slot: 0,
        count: 1,
    }])?;
    global.add_descriptor(RootComponent::DontApply(ACCEL_HANDLE), ViewKind::Srv, 0)?;
    global.add_descriptor(
        RootComponent::SceneConstantBuffer(SceneConstantBuffer::default()),
        ViewKind::Cbv,
        0,
    )?;
    global.add_descriptor(RootComponent::InstanceBuffer(INSTANCE_BUFFER_HANDLE), ViewKind::Srv, 3)?;
    global.add_descriptor_table(vec![DescriptorRange {
        handle: GEOMETRY_BUFFERS_HANDLE,
        view: ViewKind::Srv,
        slot: 1,
        count: 2,
    }])?;
    scene.add_global_signature(global)?;

    let mut triangle = RootSignature::local(TRIANGLE_SIGNATURE)?;
    triangle.add_constant(
        RootComponent::PrimitiveConstantBuffer(PrimitiveConstantBuffer::default()),
        1,
    )?;
    triangle.set_root_arguments_type(RootArguments::Triangle(TriangleRootArguments {
        material: PrimitiveConstantBuffer::default(),
    }))?;
    scene.add_local_signature(triangle)?;

    let mut procedural = RootSignature::local(PROCEDURAL_SIGNATURE)?;
    procedural.add_constant(
        RootComponent::PrimitiveConstantBuffer(PrimitiveConstantBuffer::default()),
        1,
    )?;
    procedural.set_root_arguments_type(RootArguments::Procedural(ProceduralRootArguments {
        material: PrimitiveConstantBuffer::default(),
        primitive_type: PrimitiveType::Mandelbulb,
        instance_index: 0,
    }))?;
    scene.add_local_signature(procedural)?;
    Ok(())
}

/// The scene skeleton: rays, hit groups, geometry and root signatures.
pub fn build_scene(desc: &SceneDescription) -> Result<Scene, BuildError> {
    let mut scene = Scene::new();
    build_rays(&mut scene)?;
    build_hit_groups(&mut scene)?;
    build_geometry(&mut scene, desc)?;
    build_root_signatures(&mut scene)?;
    Ok(scene)
}

/// Shader-table entries in instance order: for every instance a radiance
/// record followed by a shadow record. Procedural records carry the
/// instance's position in the instance buffer; the hit groups follow each
/// geometry's declared primitive.
pub fn shader_table_builder(scene: Arc<Scene>, desc: &SceneDescription) -> Result<ShaderTableBuilder, BuildError> {
    let mut builder = ShaderTableBuilder::new(scene.clone());
    builder.add_ray_gen(RAYGEN)?;
    builder.add_miss(RADIANCE)?;
    builder.add_miss(SHADOW)?;
    for slot in scene.instance_slots() {
        let g = &desc.geometry[slot.geometry_index];
        let material = *g.material();
        match (g.primitive(), slot.procedural_index) {
            (Some(primitive_type), Some(instance_index)) => {
                let args = RootArguments::Procedural(ProceduralRootArguments {
                    material,
                    primitive_type,
                    instance_index: instance_index as u32,
                });
                let names = primitive_shaders(primitive_type);
                builder.add_common_entry(RADIANCE, names.hit_group, PROCEDURAL_SIGNATURE, args)?;
                builder.add_common_entry(SHADOW, names.shadow_hit_group, PROCEDURAL_SIGNATURE, args)?;
            }
            _ => {
                let args = RootArguments::Triangle(TriangleRootArguments { material });
                builder.add_common_entry(RADIANCE, TRIANGLE_HIT_GROUP, TRIANGLE_SIGNATURE, args)?;
                builder.add_common_entry(SHADOW, TRIANGLE_SHADOW_HIT_GROUP, TRIANGLE_SIGNATURE, args)?;
            }
        }
    }
    Ok(builder)
}

/// Global bindings for one frame.
pub fn frame_globals(scene: &Scene, desc: &SceneDescription, frame: &Frame) -> GlobalResources {
    let mut globals = GlobalResources::new();
    globals
        .bind(ViewKind::Srv, 0, RootComponent::DontApply(ACCEL_HANDLE))
        .bind(
            ViewKind::Cbv,
            0,
            RootComponent::SceneConstantBuffer(scene_constants(desc, frame)),
        )
        .bind(ViewKind::Srv, 3, RootComponent::InstanceBuffer(INSTANCE_BUFFER_HANDLE))
        .attach_instance_buffer(INSTANCE_BUFFER_HANDLE, scene.build_instance_buffer());
    globals
}

/// A built, render-ready sample scene.
pub struct SampleScene {
    pub description: SceneDescription,
    pub frame: Frame,
    pub scene: Arc<Scene>,
    pub accel: Arc<AccelerationStructure>,
    pub table: Arc<ShaderTable>,
    pub pipeline: Pipeline,
    pub globals: GlobalResources,
    pub build_time: Duration,
}

impl SampleScene {
    /// Renders the current frame with `threads` workers (0 = all cores).
    pub fn render(&self, threads: usize) -> Result<DispatchOutput, DispatchError> {
        self.pipeline
            .dispatch_rays(self.frame.width, self.frame.height, &self.globals, threads)
    }

    /// Switches to another frame (size, time) without rebuilding.
    pub fn set_frame(&mut self, frame: Frame) -> Result<(), BuildError> {
        frame.validate()?;
        self.frame = frame;
        self.globals = frame_globals(&self.scene, &self.description, &frame);
        Ok(())
    }
}

pub fn validate_description(desc: &SceneDescription) -> Result<(), BuildError> {
    desc.camera.validate().map_err(|m| invalid("camera", m))?;
    let l = &desc.light;
    if !l.position.iter().all(|v| v.is_finite()) || !l.ambient.is_finite() || !l.diffuse.is_finite() {
        return Err(invalid("light", "position and colors must be finite"));
    }
    desc.shaders.validate().map_err(|m| invalid("shaders", m))?;
    if desc.geometry.is_empty() {
        return Err(invalid("geometry", "the scene needs at least one geometry"));
    }
    Ok(())
}

/// Builds the sample with its own shader set.
pub fn build_sample(desc: &SceneDescription, frame: Frame) -> Result<SampleScene, BuildError> {
    build_sample_with(desc, frame, &sample_registry(desc.shaders))
}

/// Builds the sample with a caller-supplied registry (for instrumentation).
pub fn build_sample_with(
    desc: &SceneDescription,
    frame: Frame,
    registry: &ShaderRegistry,
) -> Result<SampleScene, BuildError> {
    let start = Instant::now();
    validate_description(desc)?;
    frame.validate()?;
    let scene = Arc::new(build_scene(desc)?);
    let accel = Arc::new(AccelerationStructure::build(&scene)?);
    let table = Arc::new(shader_table_builder(scene.clone(), desc)?.build(TableLayout::default())?);
    let pipeline = Pipeline::new(
        scene.clone(),
        accel.clone(),
        table.clone(),
        registry,
        GLOBAL_SIGNATURE,
        PipelineConfig::default(),
    )?;
    let globals = frame_globals(&scene, desc, &frame);
    globals.validate_against(&scene, GLOBAL_SIGNATURE)?;
    Ok(SampleScene {
        description: desc.clone(),
        frame,
        scene,
        accel,
        table,
        pipeline,
        globals,
        build_time: start.elapsed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_sample_has_the_four_geometries() {
        let scene = build_scene(&SceneDescription::default()).unwrap();
        let ids: Vec<&str> = scene.geometries().map(|g| g.id.as_str()).collect();
        assert_eq!(ids, ["GlobalGeometry", "Julia", "Pacman", "Mandelbulb"]);
        assert_eq!(scene.hit_groups().len(), 8);
        assert_eq!(scene.procedural_instance_count(), 4);
    }

    #[test]
    fn plane_mesh_counts_and_normals() {
        let (v, i) = plane_mesh(2.0, 2);
        assert_eq!(v.len(), 9);
        assert_eq!(i.len(), 24);
        let positions: Vec<Vec3> = v.iter().map(|v| v.position).collect();
        for n in vertex_normals(&positions, &i) {
            assert!((n - Vec3::y()).norm() < 1e-12);
        }
    }

    #[test]
    fn table_follows_instance_order() {
        let desc = SceneDescription::default();
        let scene = Arc::new(build_scene(&desc).unwrap());
        let table = shader_table_builder(scene, &desc).unwrap().build(TableLayout::default()).unwrap();
        let groups: Vec<&str> = table.entries().iter().map(|e| e.hit_group.as_str()).collect();
        assert_eq!(
            groups,
            [
                "Triangle",
                "Triangle_Shadow",
                "Julia",
                "Julia_Shadow",
                "Pacman",
                "Pacman_Shadow",
                "Pacman",
                "Pacman_Shadow",
                "Mandelbulb",
                "Mandelbulb_Shadow"
            ]
        );
    }

    #[test]
    fn invalid_inputs_name_the_entity() {
        let mut desc = SceneDescription::default();
        if let GeometryDesc::Procedural { instances, .. } = &mut desc.geometry[2] {
            instances[0] = [0.0; 12];
        }
        let err = build_sample(&desc, Frame::default()).err().unwrap();
        assert!(err.to_string().contains("Pacman"), "{err}");

        let mut dup = SceneDescription::default();
        dup.geometry.push(dup.geometry[1].clone());
        let err = build_sample(&dup, Frame::default()).err().unwrap();
        assert!(matches!(err, BuildError::Scene(SceneError::DuplicateId { .. })), "{err}");
        assert!(err.to_string().contains("Julia"));
    }

    #[test]
    fn builds_and_renders_a_tiny_frame() {
        let sample = build_sample(
            &SceneDescription::default(),
            Frame {
                width: 16,
                height: 12,
                time: 0.0,
            },
        )
        .unwrap();
        let out = sample.render(1).unwrap();
        assert_eq!(out.image.width(), 16);
        assert!(out.stats.traces >= 16 * 12);
    }
}
