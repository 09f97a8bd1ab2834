use crate::math::{Ray, Vec3};

/// Tolerance on barycentric bounds so rays through a shared edge are
/// claimed by at least one of the adjacent triangles.
const EDGE_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangleHit {
    pub t: f64,
    pub u: f64,
    pub v: f64,
}

/// Möller–Trumbore ray/triangle test, both faces. The returned `t` is not
/// range-checked; barycentrics are clamped onto the triangle.
pub fn intersect_triangle(ray: &Ray, v0: &Vec3, v1: &Vec3, v2: &Vec3) -> Option<TriangleHit> {
    let e1 = v1 - v0;
    let e2 = v2 - v0;
    let p = ray.direction.cross(&e2);
    let det = e1.dot(&p);
    let scale = e1.norm() * e2.norm() * ray.direction.norm();
    if det.abs() <= f64::EPSILON * scale || det == 0.0 {
        return None;
    }
    let inv = 1.0 / det;
    let s = ray.origin - v0;
    let u = s.dot(&p) * inv;
    if !(-EDGE_EPSILON..=1.0 + EDGE_EPSILON).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = ray.direction.dot(&q) * inv;
    if v < -EDGE_EPSILON || u + v > 1.0 + EDGE_EPSILON {
        return None;
    }
    let t = e2.dot(&q) * inv;
    let u = u.clamp(0.0, 1.0);
    let v = v.clamp(0.0, 1.0 - u);
    Some(TriangleHit { t, u, v })
}

/// Zero (or numerically zero) area.
pub fn is_degenerate(v0: &Vec3, v1: &Vec3, v2: &Vec3) -> bool {
    let e1 = v1 - v0;
    let e2 = v2 - v0;
    let area2 = e1.cross(&e2).norm();
    !(area2 > f64::EPSILON * e1.norm() * e2.norm())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hits_from_both_sides() {
        let (a, b, c) = (
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
        );
        let front = Ray::new(Vec3::new(0.25, 0.25, -1.0), Vec3::z(), 0.0, 10.0);
        let back = Ray::new(Vec3::new(0.25, 0.25, 1.0), -Vec3::z(), 0.0, 10.0);
        for r in [front, back] {
            let h = intersect_triangle(&r, &a, &b, &c).unwrap();
            assert!((h.t - 1.0).abs() < 1e-12);
            assert!((h.u - 0.25).abs() < 1e-12 && (h.v - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn misses_outside_and_parallel() {
        let (a, b, c) = (Vec3::zeros(), Vec3::x(), Vec3::y());
        let outside = Ray::new(Vec3::new(0.8, 0.8, -1.0), Vec3::z(), 0.0, 10.0);
        assert!(intersect_triangle(&outside, &a, &b, &c).is_none());
        let parallel = Ray::new(Vec3::new(0.2, 0.2, 0.0), Vec3::x(), 0.0, 10.0);
        assert!(intersect_triangle(&parallel, &a, &b, &c).is_none());
    }

    #[test]
    fn degenerate_detection() {
        assert!(is_degenerate(&Vec3::zeros(), &Vec3::x(), &(Vec3::x() * 2.0)));
        assert!(is_degenerate(&Vec3::zeros(), &Vec3::zeros(), &Vec3::y()));
        assert!(!is_degenerate(&Vec3::zeros(), &Vec3::x(), &Vec3::y()));
    }
}
