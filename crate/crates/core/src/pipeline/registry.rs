//! Host-side shader functions, registered by entry-point name.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::exec::{GlobalResources, TraceError, Tracer};
use crate::accel::{Acceptance, HitReport};
use crate::compat::{AttributeStruct, Payload, Rgba, RootArguments};
use crate::math::{transform_normal, Mat4, Ray, Vec3};

/// Pixel handed to the ray-generation shader.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RayGenInput {
    pub pixel: [u32; 2],
    pub dimensions: [u32; 2],
}

/// The ray a miss or hit shader runs for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayInfo {
    /// World-space ray.
    pub ray: Ray,
    pub ray_contribution: u32,
    /// Trace nesting of this ray; rays traced from ray generation have depth 1.
    pub depth: u32,
}

/// Everything the closest-hit shader learns about the committed hit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HitInfo {
    pub ray: RayInfo,
    pub t: f64,
    pub instance_id: u32,
    /// Instance-buffer slot, for procedural instances.
    pub procedural_index: Option<u32>,
    pub geometry_index: u32,
    pub primitive_index: u32,
    /// Scene index of the hit geometry.
    pub scene_geometry: usize,
    pub object_to_world: Mat4,
    pub world_to_object: Mat4,
    /// Hit-group record that served the hit.
    pub record: usize,
}

impl HitInfo {
    pub fn world_position(&self) -> Vec3 {
        self.ray.ray.at(self.t)
    }

    /// Object-space normal carried to world space and normalized.
    pub fn normal_to_world(&self, object_normal: &Vec3) -> Vec3 {
        transform_normal(&self.world_to_object, object_normal).normalize()
    }
}

pub type RayGenShader = Arc<dyn Fn(&RayGenInput, &Tracer<'_>) -> Result<Rgba, TraceError> + Send + Sync>;

pub type MissShader = Arc<dyn Fn(&mut Payload, &RayInfo, &Tracer<'_>) -> Result<(), TraceError> + Send + Sync>;

/// Runs on the object-space ray and reports candidate hits.
pub type IntersectionShader = Arc<
    dyn Fn(&Ray, &RootArguments, &GlobalResources, &mut HitReport) -> Result<(), TraceError> + Send + Sync,
>;

/// Decides whether a candidate at distance `t` is committed.
pub type AnyHitShader = Arc<
    dyn Fn(&mut Payload, &AttributeStruct, &RootArguments, f64) -> Result<Acceptance, TraceError>
        + Send
        + Sync,
>;

pub type ClosestHitShader = Arc<
    dyn Fn(&mut Payload, &AttributeStruct, &HitInfo, &RootArguments, &Tracer<'_>) -> Result<(), TraceError>
        + Send
        + Sync,
>;

/// Shader stage, for error messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShaderStage {
    RayGeneration,
    Miss,
    Intersection,
    AnyHit,
    ClosestHit,
}

impl std::fmt::Display for ShaderStage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ShaderStage::RayGeneration => "ray generation",
            ShaderStage::Miss => "miss",
            ShaderStage::Intersection => "intersection",
            ShaderStage::AnyHit => "any-hit",
            ShaderStage::ClosestHit => "closest-hit",
        })
    }
}

#[derive(Clone, Default)]
pub struct ShaderRegistry {
    ray_gen: BTreeMap<String, RayGenShader>,
    miss: BTreeMap<String, MissShader>,
    intersection: BTreeMap<String, IntersectionShader>,
    any_hit: BTreeMap<String, AnyHitShader>,
    closest_hit: BTreeMap<String, ClosestHitShader>,
}

impl ShaderRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn ray_gen(
        &mut self,
        name: &str,
        f: impl Fn(&RayGenInput, &Tracer<'_>) -> Result<Rgba, TraceError> + Send + Sync + 'static,
    ) -> &mut Self {
        self.ray_gen.insert(name.to_owned(), Arc::new(f));
        self
    }

    pub fn miss(
        &mut self,
        name: &str,
        f: impl Fn(&mut Payload, &RayInfo, &Tracer<'_>) -> Result<(), TraceError> + Send + Sync + 'static,
    ) -> &mut Self {
        self.miss.insert(name.to_owned(), Arc::new(f));
        self
    }

    pub fn intersection(
        &mut self,
        name: &str,
        f: impl Fn(&Ray, &RootArguments, &GlobalResources, &mut HitReport) -> Result<(), TraceError>
            + Send
            + Sync
            + 'static,
    ) -> &mut Self {
        self.intersection.insert(name.to_owned(), Arc::new(f));
        self
    }

    pub fn any_hit(
        &mut self,
        name: &str,
        f: impl Fn(&mut Payload, &AttributeStruct, &RootArguments, f64) -> Result<Acceptance, TraceError>
            + Send
            + Sync
            + 'static,
    ) -> &mut Self {
        self.any_hit.insert(name.to_owned(), Arc::new(f));
        self
    }

    pub fn closest_hit(
        &mut self,
        name: &str,
        f: impl Fn(&mut Payload, &AttributeStruct, &HitInfo, &RootArguments, &Tracer<'_>) -> Result<(), TraceError>
            + Send
            + Sync
            + 'static,
    ) -> &mut Self {
        self.closest_hit.insert(name.to_owned(), Arc::new(f));
        self
    }

    pub fn get_ray_gen(&self, name: &str) -> Option<&RayGenShader> {
        self.ray_gen.get(name)
    }

    pub fn get_miss(&self, name: &str) -> Option<&MissShader> {
        self.miss.get(name)
    }

    pub fn get_intersection(&self, name: &str) -> Option<&IntersectionShader> {
        self.intersection.get(name)
    }

    pub fn get_any_hit(&self, name: &str) -> Option<&AnyHitShader> {
        self.any_hit.get(name)
    }

    pub fn get_closest_hit(&self, name: &str) -> Option<&ClosestHitShader> {
        self.closest_hit.get(name)
    }
}
