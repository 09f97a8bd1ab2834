//! The sample scene's shader set: ray generation, the two miss shaders,
//! sphere-tracing intersection shaders and Phong closest-hit shaders that
//! cast shadow rays.

use nalgebra::{Vector3, Vector4};
use serde::{Deserialize, Serialize};

use super::sdf::{julia, mandelbulb, pacman, JuliaParams, MandelbulbParams, PacmanParams};
use super::sphere_trace::{gradient_normal, sphere_trace, SphereTraceConfig};
use crate::accel::HitReport;
use crate::compat::{
    AttributeStruct, Payload, PrimitiveConstantBuffer, PrimitiveType, ProceduralPrimitiveAttributes,
    RayPayload, Rgba, RootArguments, SceneConstantBuffer, ShadowRayPayload,
};
use crate::math::{transform_normal, Ray, Vec3};
use crate::pipeline::{
    GlobalResources, HitInfo, RayFlags, RayGenInput, RayInfo, ShaderRegistry, TraceError, Tracer,
};

pub const RAYGEN: &str = "Raygen";
pub const MISS: &str = "Miss";
pub const MISS_SHADOW: &str = "Miss_Shadow";
pub const CLOSEST_HIT_TRIANGLE: &str = "ClosestHit_Triangle";

/// Ray contributions of the sample's two ray types, in creation order.
pub const RADIANCE_RAY: u32 = 0;
pub const SHADOW_RAY: u32 = 1;

/// Primary rays end here, world units.
pub const PRIMARY_RAY_T_MAX: f64 = 1.0e4;
/// Shadow-ray origins are pushed off the surface by this much along the normal.
pub const SHADOW_BIAS: f64 = 2.0e-3;

/// Background gradient, bottom to top.
pub const SKY_HORIZON: Rgba = Rgba::new(0.85, 0.89, 0.95, 1.0);
pub const SKY_ZENITH: Rgba = Rgba::new(0.30, 0.50, 0.82, 1.0);

/// Per-primitive shape parameters and the marcher configuration.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShaderParams {
    pub pacman: PacmanParams,
    pub julia: JuliaParams,
    pub mandelbulb: MandelbulbParams,
    pub sphere_trace: SphereTraceConfig,
}

impl ShaderParams {
    pub fn validate(&self) -> Result<(), String> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        let p = &self.pacman;
        if !(p.body_radius > 0.0 && p.eye_radius >= 0.0 && p.mouth_half_angle_deg < 90.0)
            || !finite(&p.eye_center)
            || !p.mouth_half_angle_deg.is_finite()
        {
            return Err("pacman: body_radius must be > 0, eye_radius >= 0 and the mouth half angle below 90 degrees".into());
        }
        if !finite(&self.julia.c) || self.julia.iterations == 0 {
            return Err("julia: seed must be finite and iterations >= 1".into());
        }
        if let Some(plane) = &self.julia.cut_plane {
            let n = Vec3::from(plane.normal);
            if !(n.norm() > 0.0) || !n.norm().is_finite() || !plane.offset.is_finite() {
                return Err("julia: cut plane needs a finite non-zero normal".into());
            }
        }
        let m = &self.mandelbulb;
        if !(m.power.is_finite() && m.power > 1.0) || m.min_iterations == 0 || m.max_iterations == 0 || !(m.period > 0.0) {
            return Err("mandelbulb: power must be > 1, iterations >= 1 and period > 0".into());
        }
        let st = &self.sphere_trace;
        if !(st.epsilon > 0.0) || st.max_steps == 0 {
            return Err("sphere_trace: epsilon must be > 0 and max_steps >= 1".into());
        }
        Ok(())
    }
}

/// Hit-group ids and entry points of a primitive.
pub struct PrimitiveShaders {
    pub hit_group: &'static str,
    pub shadow_hit_group: &'static str,
    pub closest_hit: &'static str,
    pub intersection: &'static str,
}

pub fn primitive_shaders(kind: PrimitiveType) -> PrimitiveShaders {
    match kind {
        PrimitiveType::Pacman => PrimitiveShaders {
            hit_group: "Pacman",
            shadow_hit_group: "Pacman_Shadow",
            closest_hit: "ClosestHit_Pacman",
            intersection: "Intersection_Pacman",
        },
        PrimitiveType::Mandelbulb => PrimitiveShaders {
            hit_group: "Mandelbulb",
            shadow_hit_group: "Mandelbulb_Shadow",
            closest_hit: "ClosestHit_Mandelbulb",
            intersection: "Intersection_Mandelbulb",
        },
        PrimitiveType::JuliaSets => PrimitiveShaders {
            hit_group: "Julia",
            shadow_hit_group: "Julia_Shadow",
            closest_hit: "ClosestHit_Julia",
            intersection: "Intersection_Julia",
        },
    }
}

/// A primitive's distance function at one moment of the animation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SdfPrimitive {
    Pacman(PacmanParams),
    Julia(JuliaParams),
    Mandelbulb { power: f64, iterations: u32 },
}

impl SdfPrimitive {
    pub fn new(kind: PrimitiveType, params: &ShaderParams, time: f64) -> Self {
        match kind {
            PrimitiveType::Pacman => SdfPrimitive::Pacman(params.pacman),
            PrimitiveType::JuliaSets => SdfPrimitive::Julia(params.julia),
            PrimitiveType::Mandelbulb => SdfPrimitive::Mandelbulb {
                power: params.mandelbulb.power,
                iterations: params.mandelbulb.iterations_at(time),
            },
        }
    }

    pub fn distance(&self, p: &Vec3) -> f64 {
        match self {
            SdfPrimitive::Pacman(params) => pacman(p, params),
            SdfPrimitive::Julia(params) => julia(p, params),
            SdfPrimitive::Mandelbulb { power, iterations } => mandelbulb(p, *power, *iterations),
        }
    }

    /// Sphere-traces the local ray over `[t0, t1]`; returns the hit
    /// parameter and the local-space normal.
    pub fn intersect(
        &self,
        local_ray: &Ray,
        t0: f64,
        t1: f64,
        step_scale: f64,
        config: &SphereTraceConfig,
    ) -> Option<(f64, Vec3)> {
        let f = |p: &Vec3| self.distance(p);
        let hit = sphere_trace(f, local_ray, t0, t1, step_scale, config)?;
        let normal = gradient_normal(f, &local_ray.at(hit.t), 2.0 * config.epsilon, &-local_ray.direction);
        Some((hit.t, normal))
    }
}

/// The three Phong terms; `occluded` zeroes diffuse and specular.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhongTerms {
    pub ambient: Rgba,
    pub diffuse: Rgba,
    pub specular: Rgba,
}

impl PhongTerms {
    pub fn total(&self) -> Rgba {
        let mut c = self.ambient + self.diffuse + self.specular;
        c.0[3] = 1.0;
        c
    }
}

/// Phong shading with unit vectors `n` (normal), `l` (towards the light)
/// and `v` (towards the viewer).
pub fn phong(
    material: &PrimitiveConstantBuffer,
    light_ambient: Rgba,
    light_diffuse: Rgba,
    n: &Vec3,
    l: &Vec3,
    v: &Vec3,
    occluded: bool,
) -> PhongTerms {
    let ambient = material.albedo * light_ambient;
    if occluded {
        return PhongTerms {
            ambient,
            diffuse: Rgba::new(0.0, 0.0, 0.0, 0.0),
            specular: Rgba::new(0.0, 0.0, 0.0, 0.0),
        };
    }
    let n_dot_l = n.dot(l).max(0.0) as f32;
    let diffuse = (material.albedo * light_diffuse).scale(material.diffuse_coef * n_dot_l);
    let specular = if n_dot_l > 0.0 {
        let r = 2.0 * n.dot(l) * n - l;
        let r_dot_v = r.dot(v).max(0.0) as f32;
        light_diffuse.scale(material.specular_coef * r_dot_v.powf(material.specular_power))
    } else {
        Rgba::new(0.0, 0.0, 0.0, 0.0)
    };
    PhongTerms {
        ambient,
        diffuse,
        specular,
    }
}

fn v3(v: &Vector3<f32>) -> Vec3 {
    v.cast::<f64>()
}

/// The primary ray through the centre of `pixel`: unproject the pixel at
/// the far plane with `projection_to_world` and aim from the camera.
pub fn primary_ray(pixel: [u32; 2], dimensions: [u32; 2], constants: &SceneConstantBuffer) -> Ray {
    let x = (pixel[0] as f64 + 0.5) / dimensions[0] as f64 * 2.0 - 1.0;
    let y = 1.0 - (pixel[1] as f64 + 0.5) / dimensions[1] as f64 * 2.0;
    let world = constants.projection_to_world.cast::<f64>() * Vector4::new(x, y, 1.0, 1.0);
    let target = world.xyz() / world.w;
    let origin = v3(&constants.camera_position);
    Ray::new(origin, (target - origin).normalize(), 0.0, PRIMARY_RAY_T_MAX)
}

/// Background colour seen along a (world-space) direction.
pub fn sky(direction: &Vec3) -> Rgba {
    let t = 0.5 * (direction.normalize().y + 1.0);
    SKY_HORIZON.lerp(SKY_ZENITH, t as f32)
}

/// Whether `payload` may carry ray type `ray`, looked up by ray contribution.
fn ray_count(tracer: &Tracer<'_>) -> u32 {
    tracer.scene().ray_count() as u32
}

/// Shades a hit: Phong lighting plus one shadow ray towards the light.
fn shade(
    payload: &mut Payload,
    hit: &HitInfo,
    world_normal: Vec3,
    material: &PrimitiveConstantBuffer,
    tracer: &Tracer<'_>,
) -> Result<(), TraceError> {
    let out = payload.as_ray_mut()?;
    let constants = tracer.scene_constants()?;
    let position = hit.world_position();
    let v = -hit.ray.ray.direction.normalize();
    let mut n = world_normal;
    if n.dot(&v) < 0.0 {
        n = -n;
    }
    let to_light = v3(&constants.light_position) - position;
    let distance = to_light.norm();
    let l = to_light / distance;
    let occluded = if n.dot(&l) > 0.0 {
        let origin = position + n * SHADOW_BIAS;
        let shadow_ray = Ray::new(origin, l, 0.0, distance);
        // Occluded unless the shadow miss shader clears the flag.
        let mut shadow = Payload::Shadow(ShadowRayPayload { hit: true });
        tracer.trace(shadow_ray, RayFlags::SHADOW, SHADOW_RAY, ray_count(tracer), &mut shadow)?;
        shadow.as_shadow()?.hit
    } else {
        false
    };
    let terms = phong(material, constants.light_ambient, constants.light_diffuse, &n, &l, &v, occluded);
    out.color = terms.total();
    Ok(())
}

fn wrong_primitive(shader: &str, found: PrimitiveType) -> TraceError {
    TraceError::Shader(format!("{shader} invoked with primitive type {found:?}"))
}

/// Registers every shader the sample scene references.
pub fn sample_registry(params: ShaderParams) -> ShaderRegistry {
    let mut registry = ShaderRegistry::new();
    registry
        .ray_gen(RAYGEN, |input: &RayGenInput, tracer: &Tracer<'_>| {
            let ray = primary_ray(input.pixel, input.dimensions, tracer.scene_constants()?);
            let mut payload = Payload::Ray(RayPayload {
                color: Rgba::BLACK,
                recursion_depth: 0,
            });
            tracer.trace(ray, RayFlags::NONE, RADIANCE_RAY, ray_count(tracer), &mut payload)?;
            Ok(payload.as_ray()?.color)
        })
        .miss(MISS, |payload: &mut Payload, info: &RayInfo, _: &Tracer<'_>| {
            payload.as_ray_mut()?.color = sky(&info.ray.direction);
            Ok(())
        })
        .miss(MISS_SHADOW, |payload: &mut Payload, _: &RayInfo, _: &Tracer<'_>| {
            payload.as_shadow_mut()?.hit = false;
            Ok(())
        })
        .closest_hit(
            CLOSEST_HIT_TRIANGLE,
            |payload: &mut Payload,
             attributes: &AttributeStruct,
             hit: &HitInfo,
             args: &RootArguments,
             tracer: &Tracer<'_>| {
                let material = args.as_triangle()?.material;
                let b = attributes.as_triangle()?.barycentrics.cast::<f64>();
                let geometry = tracer
                    .scene()
                    .geometry_at(hit.scene_geometry)
                    .ok_or_else(|| TraceError::Shader(format!("no geometry {}", hit.scene_geometry)))?;
                let [a, bv, c] = geometry.triangle(hit.primitive_index as usize).ok_or_else(|| {
                    TraceError::Shader(format!("no triangle {} in {:?}", hit.primitive_index, geometry.id.as_str()))
                })?;
                let local = a.normal * (1.0 - b.x - b.y) + bv.normal * b.x + c.normal * b.y;
                shade(payload, hit, hit.normal_to_world(&local), &material, tracer)
            },
        );

    for kind in PrimitiveType::ALL {
        let names = primitive_shaders(kind);
        registry.intersection(
            names.intersection,
            move |local_ray: &Ray, args: &RootArguments, globals: &GlobalResources, report: &mut HitReport| {
                let args = args.as_procedural()?;
                if args.primitive_type != kind {
                    return Err(wrong_primitive(names.intersection, args.primitive_type));
                }
                let time = globals.scene_constants()?.elapsed_time as f64;
                let sdf = SdfPrimitive::new(kind, &params, time);
                let step_scale = args.material.step_scale as f64;
                if let Some((t, normal)) =
                    sdf.intersect(local_ray, report.entry(), report.exit(), step_scale, &params.sphere_trace)
                {
                    report.report(
                        t,
                        AttributeStruct::Procedural(ProceduralPrimitiveAttributes {
                            normal: normal.cast::<f32>(),
                        }),
                    );
                }
                Ok(())
            },
        );
        registry.closest_hit(
            names.closest_hit,
            move |payload: &mut Payload,
                  attributes: &AttributeStruct,
                  hit: &HitInfo,
                  args: &RootArguments,
                  tracer: &Tracer<'_>| {
                let args = args.as_procedural()?;
                if args.primitive_type != kind {
                    return Err(wrong_primitive(names.closest_hit, args.primitive_type));
                }
                let local = v3(&attributes.as_procedural()?.normal);
                // Object-to-world comes from the instance buffer slot named
                // by the record's root arguments.
                let instance = tracer
                    .globals()
                    .instance_buffer()?
                    .get(args.instance_index as usize)
                    .ok_or_else(|| TraceError::Shader(format!("instance index {} out of range", args.instance_index)))?;
                let normal = transform_normal(&instance.world_to_local, &local);
                shade(payload, hit, normal, &args.material, tracer)
            },
        );
    }
    registry
}
