//! Shading invariants of the sample scene: gradient normals, shadow rays
//! against brute-force occlusion, ambient-only shading in shadow, and
//! intersection shaders skipped for rays that miss every box.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use raytable::compat::{Payload, PrimitiveType, RayPayload, Rgba, ShadowRayPayload};
use raytable::math::{transform_point, Ray, Vec3};
use raytable::pipeline::RayFlags;
use raytable::procedural::sample::{build_sample_with, GeometryDesc};
use raytable::procedural::shaders::{primitive_shaders, sample_registry, SdfPrimitive, RAYGEN};
use raytable::procedural::{gradient_normal, sdf, sphere_trace, Frame, PacmanParams, SampleScene, SceneDescription};

fn forward_difference_normal(f: impl Fn(&Vec3) -> f64, p: &Vec3, h: f64) -> Vec3 {
    let f0 = f(p);
    Vec3::new(
        f(&(p + Vec3::x() * h)) - f0,
        f(&(p + Vec3::y() * h)) - f0,
        f(&(p + Vec3::z() * h)) - f0,
    )
    .normalize()
}

/// True when `p` lies within `band` of a seam of the Pac-Man CSG tree, i.e.
/// two of its primitive terms vanish there and the field has a crease.
fn on_pacman_crease(p: &Vec3, params: &PacmanParams, band: f64) -> bool {
    let [e0, e1] = params.eyes();
    let mut terms = vec![
        sdf::sphere(p, &Vec3::zeros(), params.body_radius),
        sdf::sphere(p, &e0, params.eye_radius),
        sdf::sphere(p, &e1, params.eye_radius),
    ];
    if let Some([n1, n2]) = params.mouth_planes() {
        terms.push(sdf::half_space(p, &n1, 0.0));
        terms.push(sdf::half_space(p, &n2, 0.0));
    }
    terms.iter().filter(|t| t.abs() < band).count() >= 2
}

#[test]
fn central_and_forward_difference_normals_agree() {
    let desc = SceneDescription::default();
    let config = desc.shaders.sphere_trace;
    let h = 2.0 * config.epsilon;
    // The reference uses a much finer step so its own O(h) truncation error
    // does not dominate on the high-curvature fractal surfaces.
    let h_forward = config.epsilon * 1e-2;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for g in &desc.geometry {
        let GeometryDesc::Procedural { id, primitive, aabb, material, .. } = g else { continue };
        let sdf = SdfPrimitive::new(*primitive, &desc.shaders, 0.0);
        let f = |p: &Vec3| sdf.distance(p);
        let mut checked = 0;
        while checked < 1000 {
            let origin = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                .normalize()
                * 4.0;
            let aim = Vec3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
            let ray = Ray::new(origin, (aim - origin).normalize(), 0.0, 100.0);
            let Some((t0, t1)) = aabb.intersect_ray(&ray, 0.0, 100.0) else { continue };
            let Some(hit) = sphere_trace(f, &ray, t0, t1, material.step_scale as f64, &config) else { continue };
            let p = ray.at(hit.t);
            if *primitive == PrimitiveType::Pacman && on_pacman_crease(&p, &desc.shaders.pacman, 4.0 * h) {
                continue;
            }
            let central = gradient_normal(f, &p, h, &-ray.direction);
            let forward = forward_difference_normal(f, &p, h_forward);
            let angle = central.dot(&forward).clamp(-1.0, 1.0).acos().to_degrees();
            assert!(angle <= 1.0, "{id}: normals differ by {angle:.3} degrees at {p:?}");
            checked += 1;
        }
    }
}

/// World-space signed distance to the nearest procedural instance.
fn scene_distance(sample: &SampleScene, p: &Vec3) -> f64 {
    let buffer = sample.scene.build_instance_buffer();
    let mut k = 0;
    let mut best = f64::INFINITY;
    for g in &sample.description.geometry {
        let GeometryDesc::Procedural { primitive, instances, .. } = g else { continue };
        let sdf = SdfPrimitive::new(*primitive, &sample.description.shaders, sample.frame.time);
        for _ in instances {
            let t = buffer.get(k).unwrap();
            let local = transform_point(&t.world_to_local, p);
            // Local distances shrink or grow with the instance scale; the
            // sign, which is all the oracle needs, is preserved.
            best = best.min(sdf.distance(&local));
            k += 1;
        }
    }
    best
}

/// Brute-force occlusion: dense samples on the segment, with a margin so
/// grazing configurations are reported as ambiguous.
fn brute_force_occluded(sample: &SampleScene, from: &Vec3, to: &Vec3) -> Option<bool> {
    let n = 4000;
    let min = (1..n)
        .map(|s| scene_distance(sample, &from.lerp(to, s as f64 / n as f64)))
        .fold(f64::INFINITY, f64::min);
    if min.abs() < 0.02 {
        None
    } else {
        Some(min < 0.0)
    }
}

fn plane_points(n: usize, seed: u64) -> Vec<Vec3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| Vec3::new(rng.random_range(-8.0..6.0), 0.0, rng.random_range(-6.0..5.0)))
        .collect()
}

#[test]
fn shadow_rays_match_brute_force_occlusion() {
    let desc = SceneDescription::default();
    let light = Vec3::from(desc.light.position);
    let points = Arc::new(plane_points(600, 12));
    let mut registry = sample_registry(desc.shaders);
    let pts = points.clone();
    registry.ray_gen(RAYGEN, move |input, tracer| {
        let p = pts[input.pixel[0] as usize] + Vec3::y() * 1e-3;
        let to_light = light - p;
        let mut payload = Payload::Shadow(ShadowRayPayload { hit: true });
        let ray = Ray::new(p, to_light.normalize(), 0.0, to_light.norm());
        tracer.trace(ray, RayFlags::SHADOW, 1, 2, &mut payload)?;
        Ok(Rgba::new(payload.as_shadow()?.hit as u8 as f32, 0.0, 0.0, 1.0))
    });
    let frame = Frame {
        width: points.len() as u32,
        height: 1,
        time: 0.0,
    };
    let sample = build_sample_with(&desc, frame, &registry).unwrap();
    let image = sample.render(0).unwrap().image;
    let (mut occluded, mut compared) = (0, 0);
    for (x, p) in points.iter().enumerate() {
        let Some(expected) = brute_force_occluded(&sample, p, &light) else { continue };
        let got = image.get(x as u32, 0).unwrap().0[0] == 1.0;
        assert_eq!(got, expected, "plane point {p:?}");
        compared += 1;
        occluded += expected as usize;
    }
    assert!(compared > 400 && occluded > 5, "{compared} compared, {occluded} occluded");
}

#[test]
fn occluded_points_get_ambient_only() {
    let desc = SceneDescription::default();
    let light = Vec3::from(desc.light.position);
    let probe = build_sample_with(&desc, Frame::default(), &sample_registry(desc.shaders)).unwrap();
    let shadowed: Vec<Vec3> = plane_points(2000, 13)
        .into_iter()
        .filter(|p| brute_force_occluded(&probe, p, &light) == Some(true))
        .take(20)
        .collect();
    assert!(shadowed.len() >= 5);
    let targets = Arc::new(shadowed);
    let mut registry = sample_registry(desc.shaders);
    let t = targets.clone();
    registry.ray_gen(RAYGEN, move |input, tracer| {
        // Straight down onto the plane from just above it.
        let p = t[input.pixel[0] as usize];
        let ray = Ray::new(p + Vec3::y() * 0.01, -Vec3::y(), 0.0, 1.0);
        let mut payload = Payload::Ray(RayPayload::default());
        tracer.trace(ray, RayFlags::NONE, 0, 2, &mut payload)?;
        Ok(payload.as_ray()?.color)
    });
    let frame = Frame {
        width: targets.len() as u32,
        height: 1,
        time: 0.0,
    };
    let image = build_sample_with(&desc, frame, &registry).unwrap().render(1).unwrap().image;
    let GeometryDesc::Plane { material, .. } = &desc.geometry[0] else { panic!() };
    let ambient = material.albedo * desc.light.ambient;
    for x in 0..targets.len() as u32 {
        let c = image.get(x, 0).unwrap();
        for k in 0..3 {
            assert!((c.0[k] - ambient.0[k]).abs() < 1e-6, "pixel {x}: {c:?} vs ambient {ambient:?}");
        }
    }
}

#[test]
fn rays_missing_every_box_run_no_intersection_shader() {
    let desc = SceneDescription::default();
    let calls = Arc::new(AtomicUsize::new(0));
    let base = sample_registry(desc.shaders);
    let mut registry = base.clone();
    for kind in PrimitiveType::ALL {
        let name = primitive_shaders(kind).intersection;
        let f = base.get_intersection(name).unwrap().clone();
        let c = calls.clone();
        registry.intersection(name, move |r, a, g, rep| {
            c.fetch_add(1, Ordering::Relaxed);
            f(r, a, g, rep)
        });
    }
    let colors = Arc::new(Mutex::new(Vec::new()));
    let out = colors.clone();
    registry.ray_gen(RAYGEN, move |input, tracer| {
        // Upwards from high above the scene: only sky.
        let x = input.pixel[0] as f64 - 8.0;
        let ray = Ray::new(Vec3::new(x, 20.0, 0.0), Vec3::new(0.1, 1.0, 0.0), 0.0, 1e4);
        let mut payload = Payload::Ray(RayPayload::default());
        tracer.trace(ray, RayFlags::NONE, 0, 2, &mut payload)?;
        out.lock().unwrap().push(payload.as_ray()?.color);
        Ok(payload.as_ray()?.color)
    });
    let frame = Frame {
        width: 16,
        height: 1,
        time: 0.0,
    };
    build_sample_with(&desc, frame, &registry).unwrap().render(1).unwrap();
    assert_eq!(calls.load(Ordering::Relaxed), 0);
    assert_eq!(colors.lock().unwrap().len(), 16);
}

