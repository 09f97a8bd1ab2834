//! Sphere tracing over a ray interval, plus gradient normals.

use serde::{Deserialize, Serialize};

use crate::math::{Ray, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SphereTraceConfig {
    /// Surface threshold on |f|, local units.
    pub epsilon: f64,
    pub max_steps: u32,
}

impl Default for SphereTraceConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-4,
            max_steps: 512,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarchHit {
    pub t: f64,
    /// Distance-function evaluations spent.
    pub evaluations: u32,
}

/// Bisection rounds used to settle on the surface after an overshoot.
const REFINE_ROUNDS: u32 = 64;

/// Marches `f` along `ray` over `[t0, t1]`, advancing by
/// `step_scale · f(x) / |d|` (the direction need not be unit length, so
/// ray parameters match world space). Converges where `|f| ≤ epsilon`. If a
/// step lands inside the surface the crossing is bisected back to the
/// threshold. A ray that starts inside reports nothing.
pub fn sphere_trace(
    f: impl Fn(&Vec3) -> f64,
    ray: &Ray,
    t0: f64,
    t1: f64,
    step_scale: f64,
    config: &SphereTraceConfig,
) -> Option<MarchHit> {
    let speed = ray.direction.norm();
    if !(speed > 0.0) || !(t0 <= t1) {
        return None;
    }
    let eps = config.epsilon;
    let mut evaluations = 0;
    let mut eval = |t: f64| {
        evaluations += 1;
        f(&ray.at(t))
    };
    let mut t = t0;
    let mut prev_t = t0;
    for step in 0..config.max_steps {
        if t > t1 {
            return None;
        }
        let d = eval(t);
        if d.is_nan() {
            return None;
        }
        if d.abs() <= eps {
            return Some(MarchHit { t, evaluations });
        }
        if d < 0.0 {
            if step == 0 {
                return None;
            }
            // f(prev_t) > eps and f(t) < -eps: bisect to the threshold.
            let (mut lo, mut hi) = (prev_t, t);
            for _ in 0..REFINE_ROUNDS {
                let mid = 0.5 * (lo + hi);
                let dm = eval(mid);
                if dm.abs() <= eps {
                    return Some(MarchHit { t: mid, evaluations });
                }
                if dm > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return None;
        }
        prev_t = t;
        t += step_scale * d / speed;
    }
    None
}

/// Normalized central-difference gradient with step `h`; falls back to
/// `fallback` where the gradient vanishes.
pub fn gradient_normal(f: impl Fn(&Vec3) -> f64, p: &Vec3, h: f64, fallback: &Vec3) -> Vec3 {
    let mut g = Vec3::zeros();
    for axis in 0..3 {
        let mut e = Vec3::zeros();
        e[axis] = h;
        g[axis] = f(&(p + e)) - f(&(p - e));
    }
    let n = g.norm();
    if n > 0.0 && n.is_finite() {
        g / n
    } else {
        fallback.normalize()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::procedural::sdf::sphere;

    fn unit_sphere(p: &Vec3) -> f64 {
        sphere(p, &Vec3::zeros(), 1.0)
    }

    #[test]
    fn closed_form_sphere_hit() {
        let ray = Ray::new(Vec3::new(0.0, 0.0, -3.0), Vec3::z(), 0.0, 10.0);
        let hit = sphere_trace(unit_sphere, &ray, 0.0, 10.0, 1.0, &SphereTraceConfig::default()).unwrap();
        assert!((hit.t - 2.0).abs() < 1e-3);
        let n = gradient_normal(unit_sphere, &ray.at(hit.t), 2e-4, &-ray.direction);
        assert!((n - Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-3);
    }

    #[test]
    fn unnormalized_direction_keeps_parameter() {
        let ray = Ray::new(Vec3::new(0.0, 0.0, -3.0), Vec3::z() * 4.0, 0.0, 10.0);
        let hit = sphere_trace(unit_sphere, &ray, 0.0, 10.0, 1.0, &SphereTraceConfig::default()).unwrap();
        assert!((hit.t - 0.5).abs() < 1e-3);
    }

    #[test]
    fn misses_and_interval_limits() {
        let cfg = SphereTraceConfig::default();
        let miss = Ray::new(Vec3::new(2.0, 0.0, -3.0), Vec3::z(), 0.0, 10.0);
        assert!(sphere_trace(unit_sphere, &miss, 0.0, 10.0, 1.0, &cfg).is_none());
        let hit_ray = Ray::new(Vec3::new(0.0, 0.0, -3.0), Vec3::z(), 0.0, 10.0);
        assert!(sphere_trace(unit_sphere, &hit_ray, 0.0, 1.5, 1.0, &cfg).is_none());
        let inside = Ray::new(Vec3::zeros(), Vec3::z(), 0.0, 10.0);
        assert!(sphere_trace(unit_sphere, &inside, 0.0, 10.0, 1.0, &cfg).is_none());
    }

    #[test]
    fn overshoot_is_refined() {
        // An over-estimating field (1.5x the true distance) with full steps overshoots.
        let f = |p: &Vec3| 1.5 * unit_sphere(p);
        let ray = Ray::new(Vec3::new(0.0, 0.0, -3.0), Vec3::z(), 0.0, 10.0);
        let hit = sphere_trace(f, &ray, 0.0, 10.0, 1.0, &SphereTraceConfig::default()).unwrap();
        assert!(f(&ray.at(hit.t)).abs() <= 1e-4);
        assert!((hit.t - 2.0).abs() < 1e-3);
    }
}
