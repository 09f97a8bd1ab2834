//! Small geometric vocabulary shared by every other module: vectors,
//! affine matrices, rays and axis-aligned boxes.

use nalgebra::{Matrix4, Point3, Vector3, Vector4};
use serde::{Deserialize, Serialize};

pub type Vec3 = Vector3<f64>;
pub type Mat4 = Matrix4<f64>;

/// Determinant magnitude below which a matrix is treated as singular.
pub const SINGULAR_EPSILON: f64 = 1e-12;

/// Applies an affine matrix to a point (w = 1).
pub fn transform_point(m: &Mat4, p: &Vec3) -> Vec3 {
    m.transform_point(&Point3::from(*p)).coords
}

/// Applies an affine matrix to a direction (w = 0).
pub fn transform_vector(m: &Mat4, v: &Vec3) -> Vec3 {
    m.transform_vector(v)
}

/// Transforms a surface normal given the inverse of the matrix that maps
/// the surface. Result is normalized.
pub fn transform_normal(inverse: &Mat4, n: &Vec3) -> Vec3 {
    let linear = inverse.fixed_view::<3, 3>(0, 0).transpose();
    (linear * n).normalize()
}

/// Builds a 4×4 affine matrix from 12 row-major numbers (a 3×4 block).
pub fn affine_from_rows(rows: &[f64; 12]) -> Mat4 {
    Mat4::new(
        rows[0], rows[1], rows[2], rows[3], //
        rows[4], rows[5], rows[6], rows[7], //
        rows[8], rows[9], rows[10], rows[11], //
        0.0, 0.0, 0.0, 1.0,
    )
}

/// Inverse of [`affine_from_rows`].
pub fn affine_to_rows(m: &Mat4) -> [f64; 12] {
    let mut out = [0.0; 12];
    for r in 0..3 {
        for c in 0..4 {
            out[r * 4 + c] = m[(r, c)];
        }
    }
    out
}

/// True when the bottom row is exactly (0, 0, 0, 1).
pub fn is_affine(m: &Mat4) -> bool {
    m.row(3) == Vector4::new(0.0, 0.0, 0.0, 1.0).transpose()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
    pub t_min: f64,
    pub t_max: f64,
}

impl Ray {
    pub fn new(origin: Vec3, direction: Vec3, t_min: f64, t_max: f64) -> Self {
        Self {
            origin,
            direction,
            t_min,
            t_max,
        }
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }

    /// A usable query ray has a non-zero direction and a non-empty interval.
    pub fn is_valid(&self) -> bool {
        self.direction.norm_squared() > 0.0
            && self.t_min < self.t_max
            && self.origin.iter().all(|c| c.is_finite())
            && self.direction.iter().all(|c| c.is_finite())
    }

    /// Maps the ray through an affine matrix. The direction is not
    /// renormalized, so ray parameters `t` are identical in both spaces.
    pub fn transformed(&self, m: &Mat4) -> Ray {
        Ray {
            origin: transform_point(m, &self.origin),
            direction: transform_vector(m, &self.direction),
            t_min: self.t_min,
            t_max: self.t_max,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub const EMPTY: Aabb = Aabb {
        min: [f64::INFINITY; 3],
        max: [f64::NEG_INFINITY; 3],
    };

    pub fn new(min: Vec3, max: Vec3) -> Self {
        Self {
            min: [min.x, min.y, min.z],
            max: [max.x, max.y, max.z],
        }
    }

    pub fn min_v(&self) -> Vec3 {
        Vec3::from(self.min)
    }

    pub fn max_v(&self) -> Vec3 {
        Vec3::from(self.max)
    }

    /// Strictly positive extent on every axis.
    pub fn is_proper(&self) -> bool {
        (0..3).all(|a| self.min[a] < self.max[a])
    }

    pub fn grow_point(&mut self, p: &Vec3) {
        for a in 0..3 {
            self.min[a] = self.min[a].min(p[a]);
            self.max[a] = self.max[a].max(p[a]);
        }
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        let mut out = *self;
        for a in 0..3 {
            out.min[a] = out.min[a].min(other.min[a]);
            out.max[a] = out.max[a].max(other.max[a]);
        }
        out
    }

    pub fn center(&self) -> Vec3 {
        (self.min_v() + self.max_v()) * 0.5
    }

    pub fn extent(&self) -> Vec3 {
        self.max_v() - self.min_v()
    }

    pub fn longest_axis(&self) -> usize {
        let e = self.extent();
        if e.x >= e.y && e.x >= e.z {
            0
        } else if e.y >= e.z {
            1
        } else {
            2
        }
    }

    pub fn contains_point(&self, p: &Vec3, slack: f64) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] - slack && p[a] <= self.max[a] + slack)
    }

    pub fn contains_box(&self, other: &Aabb, slack: f64) -> bool {
        (0..3).all(|a| other.min[a] >= self.min[a] - slack && other.max[a] <= self.max[a] + slack)
    }

    pub fn corners(&self) -> [Vec3; 8] {
        let mut out = [Vec3::zeros(); 8];
        for (i, c) in out.iter_mut().enumerate() {
            *c = Vec3::new(
                if i & 1 == 0 { self.min[0] } else { self.max[0] },
                if i & 2 == 0 { self.min[1] } else { self.max[1] },
                if i & 4 == 0 { self.min[2] } else { self.max[2] },
            );
        }
        out
    }

    /// Bounding box of this box after an affine transform.
    pub fn transformed(&self, m: &Mat4) -> Aabb {
        let mut out = Aabb::EMPTY;
        for c in self.corners() {
            out.grow_point(&transform_point(m, &c));
        }
        out
    }

    /// Slab test. Returns the parametric entry and exit of the ray clipped
    /// to `[t_min, t_max]`, or `None` when the ray misses.
    pub fn intersect_ray(&self, ray: &Ray, t_min: f64, t_max: f64) -> Option<(f64, f64)> {
        let mut t0 = t_min;
        let mut t1 = t_max;
        for a in 0..3 {
            let inv = 1.0 / ray.direction[a];
            let mut near = (self.min[a] - ray.origin[a]) * inv;
            let mut far = (self.max[a] - ray.origin[a]) * inv;
            if near > far {
                std::mem::swap(&mut near, &mut far);
            }
            // NaN from 0 * inf (origin on a slab plane, parallel ray) keeps the old bound.
            if near > t0 {
                t0 = near;
            }
            if far < t1 {
                t1 = far;
            }
            if t0 > t1 {
                return None;
            }
        }
        Some((t0, t1))
    }
}

/// Rotation about the y axis, degrees.
pub fn rotation_y(degrees: f64) -> Mat4 {
    Mat4::from_axis_angle(&Vector3::y_axis(), degrees.to_radians())
}

pub fn translation(t: Vec3) -> Mat4 {
    Mat4::new_translation(&t)
}

pub fn uniform_scale(s: f64) -> Mat4 {
    Mat4::new_scaling(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slab_hits_and_misses() {
        let b = Aabb::new(Vec3::new(-1.0, -1.0, -1.0), Vec3::new(1.0, 1.0, 1.0));
        let r = Ray::new(Vec3::new(0.0, 0.0, -3.0), Vec3::new(0.0, 0.0, 1.0), 0.0, 100.0);
        let (t0, t1) = b.intersect_ray(&r, r.t_min, r.t_max).unwrap();
        assert!((t0 - 2.0).abs() < 1e-12 && (t1 - 4.0).abs() < 1e-12);

        let miss = Ray::new(Vec3::new(0.0, 2.0, -3.0), Vec3::new(0.0, 0.0, 1.0), 0.0, 100.0);
        assert!(b.intersect_ray(&miss, 0.0, 100.0).is_none());
    }

    #[test]
    fn affine_rows_round_trip() {
        let m = translation(Vec3::new(1.0, 2.0, 3.0)) * rotation_y(30.0) * uniform_scale(2.0);
        let rows = affine_to_rows(&m);
        assert_eq!(affine_from_rows(&rows), m);
        assert!(is_affine(&m));
    }

    #[test]
    fn transformed_ray_keeps_parameter() {
        let m = translation(Vec3::new(0.0, 1.0, 0.0)) * uniform_scale(3.0);
        let inv = m.try_inverse().unwrap();
        let world = Ray::new(Vec3::new(0.5, 4.0, 0.2), Vec3::new(0.1, -1.0, 0.3), 0.0, 10.0);
        let local = world.transformed(&inv);
        let t = 1.7;
        let back = transform_point(&m, &local.at(t));
        assert!((back - world.at(t)).norm() < 1e-12);
    }
}
