//! A software ray tracer built on the hardware ray-tracing execution model:
//! typed shader-compatibility unions, an id-keyed scene, two-level
//! acceleration structures, a shader table addressed by the indexing rule,
//! and a pipeline that dispatches ray-generation, intersection, any-hit,
//! closest-hit and miss shaders. The `procedural` module holds a
//! sphere-traced sample scene with Pac-Men, a Julia set and a Mandelbulb.

// Negated comparisons such as `!(x > 0.0)` are used on purpose: they also
// reject NaN, which `x <= 0.0` would let through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accel;
pub mod compat;
pub mod image;
pub mod math;
pub mod pipeline;
pub mod procedural;
pub mod scene;

pub use accel::{AccelerationStructure, HitReport};
pub use compat::{
    AttributeStruct, Payload, PrimitiveConstantBuffer, PrimitiveType, Rgba, RootArguments, RootComponent,
    SceneConstantBuffer, TypeMismatch,
};
pub use image::Image;
pub use math::{Aabb, Mat4, Ray, Vec3};
pub use pipeline::{
    DispatchError, GlobalResources, Pipeline, PipelineConfig, RayFlags, ShaderRegistry, ShaderTable,
    ShaderTableBuilder, TraceError, Tracer,
};
pub use procedural::{build_sample, Frame, SampleScene, SceneDescription};
pub use scene::{EntityId, Geometry, HitGroup, InstanceTransform, RayType, RootSignature, Scene, SceneError};
