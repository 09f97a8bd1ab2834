//! Procedural geometry: distance functions, sphere tracing, the camera,
//! the sample scene's shaders and its builder.

pub mod camera;
pub mod sample;
pub mod sdf;
pub mod shaders;
pub mod sphere_trace;

pub use camera::Camera;
pub use sample::{build_sample, build_sample_with, BuildError, Frame, GeometryDesc, Light, SampleScene, SceneDescription};
pub use sdf::{CutPlane, JuliaParams, MandelbulbParams, PacmanParams};
pub use shaders::{phong, primary_ray, sample_registry, PhongTerms, SdfPrimitive, ShaderParams};
pub use sphere_trace::{gradient_normal, sphere_trace, MarchHit, SphereTraceConfig};
