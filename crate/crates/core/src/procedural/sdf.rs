//! Signed distance functions and distance estimators, in local space.
//!
//! Sign convention: negative inside, positive outside. The CSG combinators
//! preserve that convention and, applied to exact SDFs, yield lower bounds
//! of the true distance, which is all sphere tracing needs.

use serde::{Deserialize, Serialize};

use crate::math::Vec3;

pub fn sphere(p: &Vec3, center: &Vec3, radius: f64) -> f64 {
    (p - center).norm() - radius
}

/// Signed distance to the half-space `n·p <= offset`; `n` must be unit length.
pub fn half_space(p: &Vec3, normal: &Vec3, offset: f64) -> f64 {
    normal.dot(p) - offset
}

pub fn union(a: f64, b: f64) -> f64 {
    a.min(b)
}

pub fn intersection(a: f64, b: f64) -> f64 {
    a.max(b)
}

/// `a` with `b` carved out.
pub fn subtract(a: f64, b: f64) -> f64 {
    a.max(-b)
}

// ---------------------------------------------------------------------------
// Pac-man

/// A sphere body with two eye bumps and a wedge-shaped mouth. The mouth
/// opens towards +x; its apex is the z axis, so the jaw hinges about z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PacmanParams {
    pub body_radius: f64,
    /// Half opening angle of the mouth, degrees; 0 or less closes it.
    pub mouth_half_angle_deg: f64,
    pub eye_radius: f64,
    /// Centre of the +z eye; the other eye is mirrored across z = 0.
    pub eye_center: [f64; 3],
}

impl Default for PacmanParams {
    fn default() -> Self {
        Self {
            body_radius: 1.0,
            mouth_half_angle_deg: 30.0,
            eye_radius: 0.16,
            eye_center: [0.45, 0.72, 0.45],
        }
    }
}

impl PacmanParams {
    pub fn eyes(&self) -> [Vec3; 2] {
        let [x, y, z] = self.eye_center;
        [Vec3::new(x, y, z), Vec3::new(x, y, -z)]
    }

    /// Outward normals of the two planes bounding the mouth wedge; the
    /// wedge is where both signed distances are non-positive.
    pub fn mouth_planes(&self) -> Option<[Vec3; 2]> {
        let a = self.mouth_half_angle_deg.to_radians();
        (a > 0.0).then(|| {
            let (s, c) = a.sin_cos();
            [Vec3::new(-s, c, 0.0), Vec3::new(-s, -c, 0.0)]
        })
    }
}

/// `(body ∪ eyes) − mouth`.
pub fn pacman(p: &Vec3, params: &PacmanParams) -> f64 {
    let [e0, e1] = params.eyes();
    let body = sphere(p, &Vec3::zeros(), params.body_radius);
    let solid = union(
        body,
        union(sphere(p, &e0, params.eye_radius), sphere(p, &e1, params.eye_radius)),
    );
    match params.mouth_planes() {
        Some([n1, n2]) => {
            let wedge = intersection(half_space(p, &n1, 0.0), half_space(p, &n2, 0.0));
            subtract(solid, wedge)
        }
        None => solid,
    }
}

// ---------------------------------------------------------------------------
// Quaternion Julia set

/// A cut plane `normal·p = offset`; the side the normal points to is removed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CutPlane {
    pub normal: [f64; 3],
    pub offset: f64,
}

impl CutPlane {
    /// Signed distance to the kept half-space (normal normalized here).
    pub fn distance(&self, p: &Vec3) -> f64 {
        let n = Vec3::from(self.normal);
        half_space(p, &n.normalize(), self.offset)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JuliaParams {
    /// Quaternion seed `(real, i, j, k)`.
    pub c: [f64; 4],
    pub iterations: u32,
    pub cut_plane: Option<CutPlane>,
}

impl Default for JuliaParams {
    fn default() -> Self {
        Self {
            c: [-0.291, -0.399, 0.339, 0.437],
            iterations: 9,
            cut_plane: None,
        }
    }
}

pub const JULIA_BAILOUT: f64 = 4.0;

type Quat = [f64; 4];

fn quat_square(q: &Quat) -> Quat {
    let [a, b, c, d] = *q;
    [a * a - b * b - c * c - d * d, 2.0 * a * b, 2.0 * a * c, 2.0 * a * d]
}

fn quat_norm(q: &Quat) -> f64 {
    q.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Distance estimate for the quaternion Julia set of `z ← z² + c`, sliced
/// at w = 0: iterate from `z₀ = (p, 0)` tracking `|z'|` with
/// `|z'| ← 2|z||z'|`, then `DE = |z| ln|z| / (2|z'|)`, intersected with the
/// optional cut plane.
pub fn julia(p: &Vec3, params: &JuliaParams) -> f64 {
    let mut z: Quat = [p.x, p.y, p.z, 0.0];
    let mut dz = 1.0;
    let mut r = quat_norm(&z);
    for _ in 0..params.iterations {
        if r > JULIA_BAILOUT {
            break;
        }
        dz *= 2.0 * r;
        let sq = quat_square(&z);
        z = [sq[0] + params.c[0], sq[1] + params.c[1], sq[2] + params.c[2], sq[3] + params.c[3]];
        r = quat_norm(&z);
    }
    // The orbit sits exactly at 0 (e.g. p = 0, c = 0): deep inside.
    let de = if r == 0.0 || dz == 0.0 {
        -f64::MIN_POSITIVE
    } else {
        0.5 * r * r.ln() / dz
    };
    match &params.cut_plane {
        Some(plane) => intersection(de, plane.distance(p)),
        None => de,
    }
}

// ---------------------------------------------------------------------------
// Mandelbulb

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MandelbulbParams {
    pub power: f64,
    /// Iteration count at the start of each animation period.
    pub min_iterations: u32,
    /// Iteration count approached at the end of each period.
    pub max_iterations: u32,
    /// Animation period, seconds.
    pub period: f64,
}

impl Default for MandelbulbParams {
    fn default() -> Self {
        Self {
            power: 8.0,
            min_iterations: 2,
            max_iterations: 12,
            period: 10.0,
        }
    }
}

impl MandelbulbParams {
    /// `min + floor((t mod period) / period · (max − min))`, at least 1.
    pub fn iterations_at(&self, time: f64) -> u32 {
        let (lo, hi) = (self.min_iterations.min(self.max_iterations), self.max_iterations.max(self.min_iterations));
        let phase = if self.period > 0.0 && time.is_finite() {
            time.rem_euclid(self.period) / self.period
        } else {
            0.0
        };
        let step = (phase * f64::from(hi - lo)).floor() as u32;
        (lo + step.min(hi - lo)).max(1)
    }
}

pub const MANDELBULB_BAILOUT: f64 = 2.0;

/// Power-n Mandelbulb distance estimate via the triplex (spherical
/// coordinate) iteration with running derivative `dr ← n rⁿ⁻¹ dr + 1`;
/// `DE = 0.5 ln(r) r / dr`.
pub fn mandelbulb(p: &Vec3, power: f64, iterations: u32) -> f64 {
    let mut z = *p;
    let mut dr = 1.0;
    let mut r = z.norm();
    for _ in 0..iterations.max(1) {
        if r > MANDELBULB_BAILOUT {
            break;
        }
        if r == 0.0 {
            // zⁿ = 0: the next iterate is p itself and the derivative restarts.
            z = *p;
            dr = 1.0;
        } else {
            let theta = (z.z / r).clamp(-1.0, 1.0).acos() * power;
            let phi = z.y.atan2(z.x) * power;
            dr = r.powf(power - 1.0) * power * dr + 1.0;
            let zr = r.powf(power);
            let (st, ct) = theta.sin_cos();
            let (sp, cp) = phi.sin_cos();
            z = Vec3::new(st * cp, st * sp, ct) * zr + p;
        }
        r = z.norm();
    }
    if r == 0.0 {
        return 0.0;
    }
    0.5 * r.ln() * r / dr
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_point(rng: &mut ChaCha8Rng, r: f64) -> Vec3 {
        Vec3::new(rng.random_range(-r..r), rng.random_range(-r..r), rng.random_range(-r..r))
    }

    #[test]
    fn combinators() {
        assert_eq!(union(1.0, -2.0), -2.0);
        assert_eq!(intersection(1.0, -2.0), 1.0);
        assert_eq!(subtract(-1.0, -0.5), 0.5);
        assert_eq!(subtract(-1.0, 0.5), -0.5);
        assert!((sphere(&Vec3::new(3.0, 4.0, 0.0), &Vec3::zeros(), 1.0) - 4.0).abs() < 1e-15);
    }

    #[test]
    fn pacman_center_and_mouth() {
        let closed = PacmanParams {
            mouth_half_angle_deg: 0.0,
            ..Default::default()
        };
        assert!((pacman(&Vec3::zeros(), &closed) + closed.body_radius).abs() < 1e-15);
        let open = PacmanParams::default();
        let outside = Vec3::new(2.0 * open.body_radius, 0.0, 0.0);
        assert!(pacman(&outside, &open) > 0.0);
        // Inside the body but within the mouth wedge: carved out.
        assert!(pacman(&Vec3::new(0.5, 0.0, 0.0), &open) > 0.0);
        // Inside the body behind the hinge: solid.
        assert!(pacman(&Vec3::new(-0.5, 0.0, 0.0), &open) < 0.0);
    }

    /// Point-membership oracle built from exact per-primitive tests.
    fn pacman_member(p: &Vec3, params: &PacmanParams) -> bool {
        let [e0, e1] = params.eyes();
        let in_solid = p.norm() < params.body_radius
            || (p - e0).norm() < params.eye_radius
            || (p - e1).norm() < params.eye_radius;
        let a = params.mouth_half_angle_deg.to_radians();
        let in_mouth = a > 0.0 && p.y.atan2(p.x).abs() < a;
        in_solid && !in_mouth
    }

    #[test]
    fn pacman_sign_matches_membership() {
        let params = PacmanParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (mut agree, mut total) = (0usize, 0usize);
        for _ in 0..10_000 {
            let p = random_point(&mut rng, 1.3);
            let d = pacman(&p, &params);
            if d.abs() < 2e-4 {
                continue; // crease band
            }
            total += 1;
            agree += usize::from((d < 0.0) == pacman_member(&p, &params));
        }
        assert!(agree as f64 >= 0.999 * total as f64, "{agree}/{total}");
    }

    #[test]
    fn sdfs_are_one_lipschitz_where_exact() {
        let params = PacmanParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..2000 {
            let a = random_point(&mut rng, 1.5);
            let b = a + random_point(&mut rng, 0.1);
            let lhs = (pacman(&a, &params) - pacman(&b, &params)).abs();
            assert!(lhs <= (a - b).norm() * (1.0 + 1e-9));
        }
    }

    #[test]
    fn julia_zero_seed_is_unit_ball() {
        let params = JuliaParams {
            c: [0.0; 4],
            iterations: 11,
            cut_plane: None,
        };
        let p = Vec3::new(2.0, 0.0, 0.0);
        let de = julia(&p, &params);
        assert!(de > 0.0 && de <= (p.norm() - 1.0) * (1.0 + 1e-3), "{de}");
        assert!(julia(&Vec3::new(0.3, 0.2, 0.1), &params) < 0.0);
        assert!(julia(&Vec3::zeros(), &params) < 0.0);
    }

    #[test]
    fn julia_grows_along_outward_ray() {
        let params = JuliaParams::default();
        let dir = Vec3::new(0.3, 0.8, -0.52).normalize();
        let mut prev = julia(&(dir * 4.5), &params);
        for k in 1..40 {
            let d = julia(&(dir * (4.5 + k as f64 * 0.25)), &params);
            assert!(d > prev);
            prev = d;
        }
    }

    #[test]
    fn julia_cut_plane_dominates_on_removed_side() {
        let plane = CutPlane {
            normal: [0.0, 0.0, 1.0],
            offset: 0.0,
        };
        // c = 0: the filled set is the unit ball, so this point is inside.
        let ball = JuliaParams {
            c: [0.0; 4],
            ..Default::default()
        };
        let params = JuliaParams {
            cut_plane: Some(plane),
            ..ball
        };
        let p = Vec3::new(0.1, 0.0, 0.5);
        assert!(julia(&p, &ball) < 0.0);
        assert_eq!(julia(&p, &params), plane.distance(&p));
    }

    #[test]
    fn mandelbulb_exterior_origin_and_iterations() {
        let outside = Vec3::new(2.0, 0.0, 0.0);
        assert!(mandelbulb(&outside, 8.0, 12) > 0.0);
        assert!(mandelbulb(&Vec3::zeros(), 8.0, 12) <= 0.0);
        // Direct iteration oracle: the orbit of 0 stays at 0.
        let p = Vec3::new(0.9, 0.4, 0.3);
        let (a, b) = (mandelbulb(&p, 8.0, 1), mandelbulb(&p, 8.0, 20));
        assert!(a > 0.0 && b > 0.0 && a != b, "{a} {b}");
    }

    #[test]
    fn iteration_schedule() {
        let m = MandelbulbParams::default();
        assert_eq!(m.iterations_at(0.0), 2);
        assert_eq!(m.iterations_at(5.0), 7);
        assert_eq!(m.iterations_at(9.999), 11);
        assert_eq!(m.iterations_at(10.0), 2);
        assert_eq!(m.iterations_at(-5.0), 7);
        let mut prev = 0;
        for k in 0..100 {
            let it = m.iterations_at(k as f64 * 0.1);
            assert!(it >= prev);
            prev = it;
        }
    }
}
