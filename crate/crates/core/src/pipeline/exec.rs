//! Pipeline state, trace execution and ray dispatch.

use std::cell::Cell;
use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use indexmap::IndexMap;
use rayon::prelude::*;
use thiserror::Error;

use super::indexing::record_address;
use super::registry::{
    AnyHitShader, ClosestHitShader, HitInfo, IntersectionShader, MissShader, RayGenInput, RayGenShader,
    RayInfo, ShaderRegistry, ShaderStage,
};
use super::table::{derive_export_associations, ShaderTable, TableError};
use crate::accel::{Acceptance, AccelerationStructure, HitReport, TlasInstance, TraversalCallbacks};
use crate::compat::{
    AttributeStruct, CompatError, CompatVariant, Payload, ResourceHandle, Rgba, RootArguments, RootComponent,
    SceneConstantBuffer, TypeMismatch, VariantKind, MAX_RECURSION,
};
use crate::image::Image;
use crate::math::Ray;
use crate::scene::{EntityId, InstanceBuffer, Scene, SceneError, ViewKind};

/// Errors raised while a trace (or a shader it runs) executes.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum TraceError {
    #[error(transparent)]
    TypeMismatch(#[from] TypeMismatch),
    #[error(transparent)]
    Compat(#[from] CompatError),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error("trace recursion depth {depth} exceeds the limit {max}")]
    RecursionLimit { depth: u32, max: u32 },
    #[error("invalid trace: {0}")]
    InvalidTrace(String),
    #[error("no global binding for {view:?} register {slot}")]
    MissingBinding { view: ViewKind, slot: u32 },
    #[error("no instance buffer attached for handle {0:?}")]
    MissingInstanceBuffer(ResourceHandle),
    #[error("{0}")]
    Shader(String),
}

/// Errors found while assembling a pipeline or validating its inputs.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    TypeMismatch(#[from] TypeMismatch),
    #[error(transparent)]
    Compat(#[from] CompatError),
    #[error("{stage} shader {name:?} is not registered")]
    UnresolvedEntryPoint { stage: ShaderStage, name: String },
    #[error("acceleration structure uses {found} records per instance but the scene has {expected} ray types")]
    RecordStride { expected: u32, found: u32 },
    #[error("global signature expects {view:?} register {slot} to be bound")]
    MissingBinding { view: ViewKind, slot: u32 },
    #[error("no instance buffer attached for handle {0:?}")]
    MissingInstanceBuffer(ResourceHandle),
    #[error("instance buffer has {found} entries, scene has {expected} procedural instances")]
    InstanceBufferSize { expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DispatchError {
    #[error(transparent)]
    Invalid(#[from] PipelineError),
    #[error("pixel ({}, {}): {source}", pixel[0], pixel[1])]
    Shader { pixel: [u32; 2], source: TraceError },
    #[error("pixel ({}, {}): shader panicked: {message}", pixel[0], pixel[1])]
    Panic { pixel: [u32; 2], message: String },
    #[error("dispatch dimensions must be positive, got {width}x{height}")]
    EmptyDimensions { width: u32, height: u32 },
    #[error("could not start worker threads: {0}")]
    ThreadPool(String),
}

/// What a trace does when it would exceed the recursion limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OverflowPolicy {
    /// Run the ray type's miss shader instead of tracing.
    #[default]
    InvokeMiss,
    /// Fail the dispatch with [`TraceError::RecursionLimit`].
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PipelineConfig {
    pub max_recursion: u32,
    pub overflow: OverflowPolicy,
    /// Edge length of the square pixel tiles handed to worker threads.
    pub tile_size: u32,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            max_recursion: MAX_RECURSION,
            overflow: OverflowPolicy::default(),
            tile_size: 16,
        }
    }
}

/// Ray flags understood by [`Tracer::trace`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RayFlags {
    /// Commit the first accepted hit and stop traversal.
    pub accept_first_hit_and_end_search: bool,
    /// Do not run the closest-hit shader.
    pub skip_closest_hit_shader: bool,
}

impl RayFlags {
    pub const NONE: RayFlags = RayFlags {
        accept_first_hit_and_end_search: false,
        skip_closest_hit_shader: false,
    };
    /// The usual occlusion-ray combination.
    pub const SHADOW: RayFlags = RayFlags {
        accept_first_hit_and_end_search: true,
        skip_closest_hit_shader: true,
    };
}

/// Resources bound through the global root signature.
#[derive(Debug, Clone, Default)]
pub struct GlobalResources {
    bindings: Vec<(ViewKind, u32, RootComponent)>,
    instance_buffers: HashMap<ResourceHandle, InstanceBuffer>,
}

impl GlobalResources {
    pub fn new() -> Self {
        Self::default()
    }

    /// Binds `component` to a register, replacing any previous binding.
    pub fn bind(&mut self, view: ViewKind, slot: u32, component: RootComponent) -> &mut Self {
        self.bindings.retain(|(v, s, _)| !(*v == view && *s == slot));
        self.bindings.push((view, slot, component));
        self
    }

    pub fn attach_instance_buffer(&mut self, handle: ResourceHandle, buffer: InstanceBuffer) -> &mut Self {
        self.instance_buffers.insert(handle, buffer);
        self
    }

    pub fn component(&self, view: ViewKind, slot: u32) -> Option<&RootComponent> {
        self.bindings
            .iter()
            .find(|(v, s, _)| *v == view && *s == slot)
            .map(|(_, _, c)| c)
    }

    /// The first bound scene constant buffer.
    pub fn scene_constants(&self) -> Result<&SceneConstantBuffer, TraceError> {
        self.bindings
            .iter()
            .find_map(|(_, _, c)| c.as_scene_constants().ok())
            .ok_or(TraceError::MissingBinding {
                view: ViewKind::Cbv,
                slot: 0,
            })
    }

    /// The instance buffer behind the first bound instance-buffer component.
    pub fn instance_buffer(&self) -> Result<&InstanceBuffer, TraceError> {
        let handle = self
            .bindings
            .iter()
            .find_map(|(_, _, c)| c.as_instance_buffer().ok())
            .ok_or(TraceError::MissingBinding {
                view: ViewKind::Srv,
                slot: 0,
            })?;
        self.instance_buffers
            .get(&handle)
            .ok_or(TraceError::MissingInstanceBuffer(handle))
    }

    /// Checks every inline entry of `scene`'s global signature `id` against the bindings.
    pub fn validate_against(&self, scene: &Scene, id: &str) -> Result<(), PipelineError> {
        let signature = scene.global_signature(id)?;
        for (view, slot, declared) in signature.inline_entries() {
            let bound = self
                .component(view, slot)
                .ok_or(PipelineError::MissingBinding { view, slot })?;
            declared.kind().check(bound.kind())?;
            bound.validate()?;
            if let RootComponent::InstanceBuffer(handle) = bound {
                let buffer = self
                    .instance_buffers
                    .get(handle)
                    .ok_or(PipelineError::MissingInstanceBuffer(*handle))?;
                let expected = scene.procedural_instance_count();
                if buffer.len() != expected {
                    return Err(PipelineError::InstanceBufferSize {
                        expected,
                        found: buffer.len(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// A hit-group record with its shaders looked up and arguments decoded.
struct ResolvedRecord {
    intersection: Option<IntersectionShader>,
    any_hit: Option<AnyHitShader>,
    closest_hit: Option<ClosestHitShader>,
    arguments: RootArguments,
}

/// Everything needed to dispatch rays: scene, acceleration structure,
/// shader table and resolved shader functions.
pub struct Pipeline {
    scene: Arc<Scene>,
    accel: Arc<AccelerationStructure>,
    table: Arc<ShaderTable>,
    global_signature: EntityId,
    config: PipelineConfig,
    ray_gen: RayGenShader,
    misses: Vec<MissShader>,
    records: Vec<ResolvedRecord>,
    associations: IndexMap<EntityId, EntityId>,
}

fn resolve<'a, T>(
    found: Option<&'a T>,
    stage: ShaderStage,
    name: &str,
) -> Result<&'a T, PipelineError> {
    found.ok_or_else(|| PipelineError::UnresolvedEntryPoint {
        stage,
        name: name.to_owned(),
    })
}

impl Pipeline {
    /// Resolves every entry point the table can reach and decodes every
    /// record's root arguments under its local signature's declared type.
    pub fn new(
        scene: Arc<Scene>,
        accel: Arc<AccelerationStructure>,
        table: Arc<ShaderTable>,
        registry: &ShaderRegistry,
        global_signature: &str,
        config: PipelineConfig,
    ) -> Result<Self, PipelineError> {
        let global_signature = scene.global_signature(global_signature)?.id.clone();
        let expected_stride = scene.ray_count().max(1) as u32;
        if accel.records_per_instance() != expected_stride {
            return Err(PipelineError::RecordStride {
                expected: expected_stride,
                found: accel.records_per_instance(),
            });
        }
        let ray_gen = resolve(
            registry.get_ray_gen(table.ray_gen()),
            ShaderStage::RayGeneration,
            table.ray_gen(),
        )?
        .clone();
        let misses = (0..scene.ray_count())
            .map(|r| {
                let name = &table.miss(r)?.shader;
                Ok(resolve(registry.get_miss(name), ShaderStage::Miss, name)?.clone())
            })
            .collect::<Result<Vec<_>, PipelineError>>()?;
        let associations = derive_export_associations(&table)?;

        let procedural = scene.procedural_instance_count();
        let mut records = Vec::with_capacity(table.record_count());
        for k in 0..table.record_count() {
            let record = table.record(k)?;
            let group = scene
                .hit_group_at(record.hit_group)
                .ok_or(TableError::OutOfRange {
                    address: record.hit_group as u64,
                    records: scene.hit_groups().len(),
                })?;
            let signature = scene
                .local_signature_at(record.local_signature)
                .ok_or(TableError::OutOfRange {
                    address: record.local_signature as u64,
                    records: scene.local_signatures().len(),
                })?;
            let expected = signature.root_arguments_kind().ok_or_else(|| SceneError::InvalidSignature {
                id: signature.id.clone(),
                reason: "no root arguments type".into(),
            })?;
            let arguments = record.root_arguments(expected)?;
            arguments.validate(procedural)?;
            let intersection = match &group.intersection {
                Some(n) => Some(resolve(registry.get_intersection(n), ShaderStage::Intersection, n)?.clone()),
                None => None,
            };
            let any_hit = match &group.any_hit {
                Some(n) => Some(resolve(registry.get_any_hit(n), ShaderStage::AnyHit, n)?.clone()),
                None => None,
            };
            let closest_hit = match &group.closest_hit {
                Some(n) => Some(resolve(registry.get_closest_hit(n), ShaderStage::ClosestHit, n)?.clone()),
                None => None,
            };
            records.push(ResolvedRecord {
                intersection,
                any_hit,
                closest_hit,
                arguments,
            });
        }

        Ok(Self {
            scene,
            accel,
            table,
            global_signature,
            config,
            ray_gen,
            misses,
            records,
            associations,
        })
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn accel(&self) -> &AccelerationStructure {
        &self.accel
    }

    pub fn table(&self) -> &ShaderTable {
        &self.table
    }

    pub fn config(&self) -> PipelineConfig {
        self.config
    }

    /// Hit group -> local signature, as derived from the table.
    pub fn export_associations(&self) -> &IndexMap<EntityId, EntityId> {
        &self.associations
    }

    /// Root arguments stored in record `index`.
    pub fn record_arguments(&self, index: usize) -> Option<&RootArguments> {
        self.records.get(index).map(|r| &r.arguments)
    }

    /// Record index serving ray contribution `r` with multiplier `m` for TLAS instance `instance`.
    pub fn record_index(&self, r: u32, m: u32, geometry_index: u32, instance: &TlasInstance) -> Result<usize, TraceError> {
        let address = record_address(
            self.table.start_address(),
            self.table.address_stride(),
            r as u64,
            m as u64,
            geometry_index as u64,
            instance.contribution as u64,
        )
        .map_err(TableError::from)?;
        Ok(self.table.index_of(address)?)
    }

    /// Runs the ray-generation shader for every pixel, `threads` workers
    /// (0 = all cores). The image is identical for every thread count.
    pub fn dispatch_rays(
        &self,
        width: u32,
        height: u32,
        globals: &GlobalResources,
        threads: usize,
    ) -> Result<DispatchOutput, DispatchError> {
        if width == 0 || height == 0 {
            return Err(DispatchError::EmptyDimensions { width, height });
        }
        globals.validate_against(&self.scene, self.global_signature.as_str())?;
        let start = Instant::now();
        let tile = self.config.tile_size.max(1);
        let tiles: Vec<[u32; 4]> = (0..height)
            .step_by(tile as usize)
            .flat_map(|y0| {
                (0..width)
                    .step_by(tile as usize)
                    .map(move |x0| [x0, y0, (x0 + tile).min(width), (y0 + tile).min(height)])
            })
            .collect();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| DispatchError::ThreadPool(e.to_string()))?;
        let results: Vec<Result<TileOutput, DispatchError>> =
            pool.install(|| tiles.par_iter().map(|t| self.render_tile(*t, width, height, globals)).collect());

        let mut image = Image::new(width, height);
        let mut stats = DispatchStats::default();
        let mut first_error: Option<DispatchError> = None;
        for (t, result) in tiles.iter().zip(results) {
            match result {
                Ok(out) => {
                    let mut i = 0;
                    for y in t[1]..t[3] {
                        for x in t[0]..t[2] {
                            image.set(x, y, out.pixels[i]);
                            i += 1;
                        }
                    }
                    stats.traces += out.traces;
                    stats.max_depth = stats.max_depth.max(out.max_depth);
                }
                Err(e) => {
                    let earlier = |a: &DispatchError, b: &DispatchError| {
                        let key = |e: &DispatchError| e.pixel().map(|[x, y]| (y, x));
                        key(a) < key(b)
                    };
                    if first_error.as_ref().is_none_or(|f| earlier(&e, f)) {
                        first_error = Some(e);
                    }
                }
            }
        }
        if let Some(e) = first_error {
            return Err(e);
        }
        stats.pixels = width as u64 * height as u64;
        stats.elapsed = start.elapsed();
        Ok(DispatchOutput { image, stats })
    }

    fn render_tile(&self, t: [u32; 4], width: u32, height: u32, globals: &GlobalResources) -> Result<TileOutput, DispatchError> {
        let mut out = TileOutput {
            pixels: Vec::with_capacity(((t[2] - t[0]) * (t[3] - t[1])) as usize),
            traces: 0,
            max_depth: 0,
        };
        for y in t[1]..t[3] {
            for x in t[0]..t[2] {
                let counters = Counters::default();
                let tracer = Tracer {
                    pipeline: self,
                    globals,
                    depth: 0,
                    counters: &counters,
                };
                let input = RayGenInput {
                    pixel: [x, y],
                    dimensions: [width, height],
                };
                let color = catch_unwind(AssertUnwindSafe(|| (self.ray_gen)(&input, &tracer)))
                    .map_err(|p| DispatchError::Panic {
                        pixel: [x, y],
                        message: panic_message(p.as_ref()),
                    })?
                    .map_err(|source| DispatchError::Shader { pixel: [x, y], source })?;
                out.pixels.push(color);
                out.traces += counters.traces.get();
                out.max_depth = out.max_depth.max(counters.max_depth.get());
            }
        }
        Ok(out)
    }
}

fn panic_message(p: &(dyn std::any::Any + Send)) -> String {
    if let Some(s) = p.downcast_ref::<&str>() {
        (*s).to_owned()
    } else if let Some(s) = p.downcast_ref::<String>() {
        s.clone()
    } else {
        "non-string panic payload".to_owned()
    }
}

impl DispatchError {
    pub fn pixel(&self) -> Option<[u32; 2]> {
        match self {
            DispatchError::Shader { pixel, .. } | DispatchError::Panic { pixel, .. } => Some(*pixel),
            _ => None,
        }
    }
}

struct TileOutput {
    pixels: Vec<Rgba>,
    traces: u64,
    max_depth: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DispatchStats {
    pub pixels: u64,
    /// Trace calls, including ones redirected to a miss by the recursion limit.
    pub traces: u64,
    /// Deepest trace nesting reached.
    pub max_depth: u32,
    pub elapsed: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispatchOutput {
    pub image: Image,
    pub stats: DispatchStats,
}

#[derive(Default)]
struct Counters {
    traces: Cell<u64>,
    max_depth: Cell<u32>,
}

/// Handle through which shaders reach pipeline state and trace new rays.
#[derive(Clone, Copy)]
pub struct Tracer<'a> {
    pipeline: &'a Pipeline,
    globals: &'a GlobalResources,
    depth: u32,
    counters: &'a Counters,
}

impl<'a> Tracer<'a> {
    pub fn globals(&self) -> &'a GlobalResources {
        self.globals
    }

    pub fn scene_constants(&self) -> Result<&'a SceneConstantBuffer, TraceError> {
        self.globals.scene_constants()
    }

    pub fn scene(&self) -> &'a Scene {
        &self.pipeline.scene
    }

    /// Number of traces enclosing the current shader (0 in ray generation).
    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn max_recursion(&self) -> u32 {
        self.pipeline.config.max_recursion
    }

    fn child(&self) -> Tracer<'a> {
        Tracer {
            depth: self.depth + 1,
            ..*self
        }
    }

    /// Traces `ray` for ray type `ray_contribution`, selecting hit-group
    /// records with the indexing rule and the given geometry multiplier.
    /// The payload must be of the ray type's payload variant and stays so.
    pub fn trace(
        &self,
        ray: Ray,
        flags: RayFlags,
        ray_contribution: u32,
        multiplier: u32,
        payload: &mut Payload,
    ) -> Result<(), TraceError> {
        let p = self.pipeline;
        self.counters.traces.set(self.counters.traces.get() + 1);
        let ray_type = p.scene.ray_at(ray_contribution as usize).ok_or_else(|| {
            TraceError::InvalidTrace(format!(
                "ray contribution {ray_contribution} but only {} ray types",
                p.scene.ray_count()
            ))
        })?;
        let kind = ray_type.payload_template.kind();
        kind.check(payload.kind())?;
        if ray_contribution >= multiplier {
            return Err(TraceError::InvalidTrace(format!(
                "ray contribution {ray_contribution} must be below the multiplier {multiplier}"
            )));
        }
        if !ray.is_valid() {
            return Err(TraceError::InvalidTrace(format!("degenerate ray {ray:?}")));
        }
        let child = self.child();
        self.counters.max_depth.set(self.counters.max_depth.get().max(child.depth));
        let info = RayInfo {
            ray,
            ray_contribution,
            depth: child.depth,
        };
        let miss = &p.misses[ray_contribution as usize];

        if self.depth >= p.config.max_recursion {
            return match p.config.overflow {
                OverflowPolicy::InvokeMiss => {
                    miss(payload, &info, &child)?;
                    kind.check(payload.kind()).map_err(Into::into)
                }
                OverflowPolicy::Error => Err(TraceError::RecursionLimit {
                    depth: child.depth,
                    max: p.config.max_recursion,
                }),
            };
        }

        let mut callbacks = Callbacks {
            pipeline: p,
            globals: self.globals,
            ray_contribution,
            multiplier,
            payload: &mut *payload,
            end_on_first: flags.accept_first_hit_and_end_search,
        };
        let hit = if flags.accept_first_hit_and_end_search {
            p.accel.traverse_first(&ray, &mut callbacks)?
        } else {
            p.accel.traverse_closest(&ray, &mut callbacks)?
        };

        match hit {
            None => miss(payload, &info, &child)?,
            Some(hit) => {
                let instance = &p.accel.instances()[hit.instance];
                let index = p.record_index(ray_contribution, multiplier, hit.geometry_index, instance)?;
                let record = &p.records[index];
                if let (false, Some(closest_hit)) = (flags.skip_closest_hit_shader, &record.closest_hit) {
                    let hit_info = HitInfo {
                        ray: info,
                        t: hit.t,
                        instance_id: instance.instance_id,
                        procedural_index: instance.procedural_index,
                        geometry_index: hit.geometry_index,
                        primitive_index: hit.primitive_index,
                        scene_geometry: instance.blas_index,
                        object_to_world: instance.transform.local_to_world,
                        world_to_object: instance.transform.world_to_local,
                        record: index,
                    };
                    closest_hit(payload, &hit.attributes, &hit_info, &record.arguments, &child)?;
                }
            }
        }
        kind.check(payload.kind())?;
        Ok(())
    }
}

struct Callbacks<'p, 'a> {
    pipeline: &'a Pipeline,
    globals: &'a GlobalResources,
    ray_contribution: u32,
    multiplier: u32,
    payload: &'p mut Payload,
    end_on_first: bool,
}

impl Callbacks<'_, '_> {
    fn any_hit(
        &mut self,
        record: &ResolvedRecord,
        attributes: &AttributeStruct,
        t: f64,
    ) -> Result<Acceptance, TraceError> {
        let kind = self.payload.kind();
        let verdict = match &record.any_hit {
            Some(f) => f(self.payload, attributes, &record.arguments, t)?,
            None => Acceptance::Accept,
        };
        kind.check(self.payload.kind())?;
        Ok(match verdict {
            Acceptance::Accept if self.end_on_first => Acceptance::AcceptAndEnd,
            v => v,
        })
    }
}

impl TraversalCallbacks for Callbacks<'_, '_> {
    type Error = TraceError;

    fn intersect_procedural(
        &mut self,
        instance: &TlasInstance,
        local_ray: &Ray,
        report: &mut HitReport,
    ) -> Result<(), TraceError> {
        let index = self.pipeline.record_index(self.ray_contribution, self.multiplier, 0, instance)?;
        let record = &self.pipeline.records[index];
        let Some(intersection) = &record.intersection else {
            return Err(TraceError::InvalidTrace(format!(
                "record {index} serves a procedural instance but has no intersection shader"
            )));
        };
        let mut candidate = HitReport::new(report.t_min(), report.t_closest(), report.entry(), report.exit());
        intersection(local_ray, &record.arguments, self.globals, &mut candidate)?;
        if let Some(&(t, attributes)) = candidate.hit() {
            match self.any_hit(record, &attributes, t)? {
                Acceptance::Ignore => {}
                Acceptance::Accept if !candidate.ends_search() => {
                    report.report(t, attributes);
                }
                _ => {
                    report.report_and_end(t, attributes);
                }
            }
        }
        Ok(())
    }

    fn accept_triangle(
        &mut self,
        instance: &TlasInstance,
        t: f64,
        attributes: &AttributeStruct,
    ) -> Result<Acceptance, TraceError> {
        let index = self.pipeline.record_index(self.ray_contribution, self.multiplier, 0, instance)?;
        let record = &self.pipeline.records[index];
        if record.intersection.is_some() {
            return Err(TraceError::InvalidTrace(format!(
                "record {index} serves a triangle instance but has an intersection shader"
            )));
        }
        self.any_hit(record, attributes, t)
    }
}
