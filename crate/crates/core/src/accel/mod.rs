//! Two-level acceleration structure: one BLAS per scene geometry and a TLAS
//! over every instance.
//!
//! Each BLAS holds exactly one geometry, so the geometry index reported for
//! a hit is always 0. Instances are flattened in (geometry, instance)
//! creation order; the instance at position `k` gets id `k` and a shader
//! table contribution of `k * records_per_instance`, which lays records out
//! as consecutive runs of one record per ray type.

mod bvh;
mod triangle;

use std::convert::Infallible;

use nalgebra::Vector2;
use thiserror::Error;

pub use bvh::{Bvh, BvhNode, NodeKind, Walk};
pub use triangle::{intersect_triangle, is_degenerate, TriangleHit};

use crate::compat::{AttributeStruct, TriangleAttributes};
use crate::math::{Aabb, Ray, Vec3};
use crate::scene::{EntityId, GeometryKind, InstanceTransform, Scene};

pub const MAX_LEAF_TRIANGLES: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AccelError {
    #[error("scene has no geometry")]
    EmptyScene,
    #[error("instance count {0} does not fit the 32-bit contribution range")]
    TooManyInstances(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlasTriangle {
    pub positions: [Vec3; 3],
    /// Index of the triangle in the source geometry's index buffer.
    pub primitive_index: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BlasKind {
    Triangles {
        bvh: Bvh,
        triangles: Vec<BlasTriangle>,
        dropped_degenerate: usize,
    },
    Procedural {
        aabb: Aabb,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Blas {
    pub geometry_id: EntityId,
    pub kind: BlasKind,
}

impl Blas {
    /// Geometry index within this BLAS. Always 0: one geometry per BLAS.
    pub const GEOMETRY_INDEX: u32 = 0;

    pub fn geometry_count(&self) -> u32 {
        1
    }

    pub fn root_aabb(&self) -> Aabb {
        match &self.kind {
            BlasKind::Triangles { bvh, .. } => bvh.root_aabb(),
            BlasKind::Procedural { aabb } => *aabb,
        }
    }

    pub fn is_procedural(&self) -> bool {
        matches!(self.kind, BlasKind::Procedural { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TlasInstance {
    pub blas_index: usize,
    /// Sequential id, 0..N-1 in creation order.
    pub instance_id: u32,
    /// Position in the instance buffer, for procedural instances.
    pub procedural_index: Option<u32>,
    /// The instance term `i` of the record indexing rule.
    pub contribution: u32,
    pub transform: InstanceTransform,
    pub world_aabb: Aabb,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraversalHit {
    pub t: f64,
    /// Index into [`AccelerationStructure::instances`].
    pub instance: usize,
    /// The geometry term `g` of the record indexing rule.
    pub geometry_index: u32,
    pub primitive_index: u32,
    pub attributes: AttributeStruct,
}

/// Whether a candidate hit is committed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Acceptance {
    Accept,
    Ignore,
    AcceptAndEnd,
}

/// Handed to procedural intersection callbacks: the ray interval clipped to
/// the primitive's box, and a slot for reported hits.
#[derive(Debug)]
pub struct HitReport {
    t_min: f64,
    t_closest: f64,
    entry: f64,
    exit: f64,
    hit: Option<(f64, AttributeStruct)>,
    end_search: bool,
}

impl HitReport {
    pub fn new(t_min: f64, t_closest: f64, entry: f64, exit: f64) -> Self {
        Self {
            t_min,
            t_closest,
            entry,
            exit,
            hit: None,
            end_search: false,
        }
    }

    pub fn t_min(&self) -> f64 {
        self.t_min
    }

    /// Entry parameter of the ray into the primitive's box (clamped to the ray interval).
    pub fn entry(&self) -> f64 {
        self.entry
    }

    pub fn exit(&self) -> f64 {
        self.exit
    }

    /// Closest committed distance so far; reports beyond it are dropped.
    pub fn t_closest(&self) -> f64 {
        self.t_closest
    }

    /// Commits a hit if `t` lies within the current interval.
    pub fn report(&mut self, t: f64, attributes: AttributeStruct) -> bool {
        if !(t >= self.t_min && t <= self.t_closest) {
            return false;
        }
        self.t_closest = t;
        self.hit = Some((t, attributes));
        true
    }

    /// Commits a hit and stops traversal.
    pub fn report_and_end(&mut self, t: f64, attributes: AttributeStruct) -> bool {
        let ok = self.report(t, attributes);
        self.end_search |= ok;
        ok
    }

    pub fn hit(&self) -> Option<&(f64, AttributeStruct)> {
        self.hit.as_ref()
    }

    /// Whether a committed hit asked traversal to stop.
    pub fn ends_search(&self) -> bool {
        self.end_search
    }
}

/// Hooks invoked during traversal.
pub trait TraversalCallbacks {
    type Error;

    /// Called for every procedural instance whose box the ray enters, with
    /// the ray in the instance's local space.
    fn intersect_procedural(
        &mut self,
        instance: &TlasInstance,
        local_ray: &Ray,
        report: &mut HitReport,
    ) -> Result<(), Self::Error>;

    /// Called for every built-in triangle candidate before it is committed.
    fn accept_triangle(
        &mut self,
        _instance: &TlasInstance,
        _t: f64,
        _attributes: &AttributeStruct,
    ) -> Result<Acceptance, Self::Error> {
        Ok(Acceptance::Accept)
    }
}

impl<F> TraversalCallbacks for F
where
    F: FnMut(&TlasInstance, &Ray, &mut HitReport),
{
    type Error = Infallible;

    fn intersect_procedural(
        &mut self,
        instance: &TlasInstance,
        local_ray: &Ray,
        report: &mut HitReport,
    ) -> Result<(), Infallible> {
        self(instance, local_ray, report);
        Ok(())
    }
}

/// Callbacks for scenes without procedural geometry (procedural boxes are skipped).
pub struct TrianglesOnly;

impl TraversalCallbacks for TrianglesOnly {
    type Error = Infallible;

    fn intersect_procedural(
        &mut self,
        _: &TlasInstance,
        _: &Ray,
        _: &mut HitReport,
    ) -> Result<(), Infallible> {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Closest,
    First,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccelerationStructure {
    blas: Vec<Blas>,
    instances: Vec<TlasInstance>,
    tlas: Bvh,
    records_per_instance: u32,
}

impl AccelerationStructure {
    /// Builds one BLAS per geometry and the TLAS over all instances. The
    /// per-instance record stride is the scene's ray-type count.
    pub fn build(scene: &Scene) -> Result<Self, AccelError> {
        Self::build_with_stride(scene, scene.ray_count().max(1) as u32)
    }

    /// As [`build`](Self::build) with an explicit number of shader-table
    /// records per instance (the multiplier `m` times geometries per BLAS).
    pub fn build_with_stride(scene: &Scene, records_per_instance: u32) -> Result<Self, AccelError> {
        if scene.geometries().len() == 0 {
            return Err(AccelError::EmptyScene);
        }
        let records_per_instance = records_per_instance.max(1);
        let mut blas = Vec::with_capacity(scene.geometries().len());
        for g in scene.geometries() {
            let kind = match &g.kind {
                GeometryKind::Procedural { aabb } => BlasKind::Procedural { aabb: *aabb },
                GeometryKind::Triangles { .. } => {
                    let mut triangles = Vec::with_capacity(g.triangle_count());
                    let mut dropped_here = 0;
                    for prim in 0..g.triangle_count() {
                        let [a, b, c] = g.triangle(prim).expect("triangle geometry");
                        if is_degenerate(&a.position, &b.position, &c.position) {
                            dropped_here += 1;
                            continue;
                        }
                        triangles.push(BlasTriangle {
                            positions: [a.position, b.position, c.position],
                            primitive_index: prim as u32,
                        });
                    }
                    if dropped_here > 0 {
                        log::warn!(
                            "geometry {:?}: dropped {} degenerate triangles",
                            g.id.as_str(),
                            dropped_here
                        );
                    }
                    let boxes: Vec<Aabb> = triangles
                        .iter()
                        .map(|t| {
                            let mut b = Aabb::EMPTY;
                            t.positions.iter().for_each(|p| b.grow_point(p));
                            b
                        })
                        .collect();
                    BlasKind::Triangles {
                        bvh: Bvh::build(&boxes, MAX_LEAF_TRIANGLES),
                        triangles,
                        dropped_degenerate: dropped_here,
                    }
                }
            };
            blas.push(Blas {
                geometry_id: g.id.clone(),
                kind,
            });
        }

        let slots = scene.instance_slots();
        let max_contribution = (slots.len() as u64) * records_per_instance as u64;
        if max_contribution > u32::MAX as u64 {
            return Err(AccelError::TooManyInstances(slots.len()));
        }
        let instances: Vec<TlasInstance> = slots
            .iter()
            .map(|s| {
                let g = scene.geometry_at(s.geometry_index).expect("slot geometry");
                let transform = g.instances[s.instance_in_geometry];
                let b = &blas[s.geometry_index];
                let root = b.root_aabb();
                // A triangle BLAS whose triangles were all dropped has an empty box.
                let world_aabb = if root.min[0] <= root.max[0] {
                    root.transformed(&transform.local_to_world)
                } else {
                    Aabb::EMPTY
                };
                TlasInstance {
                    blas_index: s.geometry_index,
                    instance_id: s.ordinal as u32,
                    procedural_index: s.procedural_index.map(|p| p as u32),
                    contribution: s.ordinal as u32 * records_per_instance * b.geometry_count(),
                    transform,
                    world_aabb,
                }
            })
            .collect();
        let boxes: Vec<Aabb> = instances.iter().map(|i| i.world_aabb).collect();
        let tlas = Bvh::build(&boxes, 1);
        Ok(Self {
            blas,
            instances,
            tlas,
            records_per_instance,
        })
    }

    pub fn blas(&self) -> &[Blas] {
        &self.blas
    }

    pub fn instances(&self) -> &[TlasInstance] {
        &self.instances
    }

    pub fn records_per_instance(&self) -> u32 {
        self.records_per_instance
    }

    pub fn dropped_triangles(&self) -> usize {
        self.blas
            .iter()
            .map(|b| match &b.kind {
                BlasKind::Triangles {
                    dropped_degenerate, ..
                } => *dropped_degenerate,
                BlasKind::Procedural { .. } => 0,
            })
            .sum()
    }

    pub fn traverse_closest<C: TraversalCallbacks>(
        &self,
        ray: &Ray,
        callbacks: &mut C,
    ) -> Result<Option<TraversalHit>, C::Error> {
        self.traverse(ray, Mode::Closest, callbacks)
    }

    /// True when anything is hit in the ray interval; stops at the first
    /// committed hit.
    pub fn traverse_any<C: TraversalCallbacks>(
        &self,
        ray: &Ray,
        callbacks: &mut C,
    ) -> Result<bool, C::Error> {
        Ok(self.traverse(ray, Mode::First, callbacks)?.is_some())
    }

    /// Like [`traverse_any`](Self::traverse_any) but returns the first
    /// committed hit, which need not be the closest.
    pub fn traverse_first<C: TraversalCallbacks>(
        &self,
        ray: &Ray,
        callbacks: &mut C,
    ) -> Result<Option<TraversalHit>, C::Error> {
        self.traverse(ray, Mode::First, callbacks)
    }

    fn traverse<C: TraversalCallbacks>(
        &self,
        ray: &Ray,
        mode: Mode,
        callbacks: &mut C,
    ) -> Result<Option<TraversalHit>, C::Error> {
        if !ray.is_valid() {
            return Ok(None);
        }
        let mut best: Option<TraversalHit> = None;
        self.tlas.walk(ray, |item, t_closest| {
            let instance = &self.instances[item as usize];
            let local = ray.transformed(&instance.transform.world_to_local);
            let blas = &self.blas[instance.blas_index];
            let mut end = false;
            match &blas.kind {
                BlasKind::Procedural { aabb } => {
                    if let Some((entry, exit)) = aabb.intersect_ray(&local, ray.t_min, t_closest) {
                        let mut report = HitReport::new(ray.t_min, t_closest, entry, exit);
                        callbacks.intersect_procedural(instance, &local, &mut report)?;
                        if let Some((t, attributes)) = report.hit {
                            best = Some(TraversalHit {
                                t,
                                instance: item as usize,
                                geometry_index: Blas::GEOMETRY_INDEX,
                                primitive_index: 0,
                                attributes,
                            });
                            end = report.end_search || mode == Mode::First;
                        }
                    }
                }
                BlasKind::Triangles { bvh, triangles, .. } => {
                    let mut local_ray = local;
                    local_ray.t_max = t_closest;
                    bvh.walk(&local_ray, |tri_index, t_limit| {
                        let tri = &triangles[tri_index as usize];
                        let [a, b, c] = &tri.positions;
                        let Some(h) = intersect_triangle(&local_ray, a, b, c) else {
                            return Ok(Walk::Continue(t_limit));
                        };
                        if !(h.t >= ray.t_min && h.t <= t_limit) {
                            return Ok(Walk::Continue(t_limit));
                        }
                        let attributes = AttributeStruct::Triangle(TriangleAttributes {
                            barycentrics: Vector2::new(h.u as f32, h.v as f32),
                        });
                        match callbacks.accept_triangle(instance, h.t, &attributes)? {
                            Acceptance::Ignore => Ok(Walk::Continue(t_limit)),
                            accepted => {
                                best = Some(TraversalHit {
                                    t: h.t,
                                    instance: item as usize,
                                    geometry_index: Blas::GEOMETRY_INDEX,
                                    primitive_index: tri.primitive_index,
                                    attributes,
                                });
                                if accepted == Acceptance::AcceptAndEnd || mode == Mode::First {
                                    end = true;
                                    Ok(Walk::Stop)
                                } else {
                                    Ok(Walk::Continue(h.t))
                                }
                            }
                        }
                    })?;
                }
            }
            if end {
                return Ok(Walk::Stop);
            }
            Ok(Walk::Continue(best.map_or(t_closest, |b| b.t)))
        })?;
        Ok(best)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compat::Payload;
    use crate::math::{rotation_y, translation, uniform_scale};
    use crate::scene::{Geometry, RayType, Vertex};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn vtx(x: f64, y: f64, z: f64) -> Vertex {
        Vertex {
            position: Vec3::new(x, y, z),
            normal: Vec3::z(),
        }
    }

    /// Unit square at z = 0 made of two triangles.
    fn square_scene() -> Scene {
        let mut s = Scene::new();
        s.add_geometry(
            Geometry::triangles(
                "Plane",
                vec![vtx(-0.5, -0.5, 0.0), vtx(0.5, -0.5, 0.0), vtx(0.5, 0.5, 0.0), vtx(-0.5, 0.5, 0.0)],
                vec![0, 1, 2, 0, 2, 3],
                vec![InstanceTransform::identity()],
            )
            .unwrap(),
        )
        .unwrap();
        s
    }

    fn unit_box() -> Aabb {
        Aabb::new(Vec3::new(-1.0, -1.0, -1.0), Vec3::new(1.0, 1.0, 1.0))
    }

    #[test]
    fn empty_scene_is_an_error() {
        assert_eq!(AccelerationStructure::build(&Scene::new()), Err(AccelError::EmptyScene));
    }

    #[test]
    fn axis_ray_hits_square_at_t1() {
        let accel = AccelerationStructure::build(&square_scene()).unwrap();
        let ray = Ray::new(Vec3::new(0.1, 0.2, -1.0), Vec3::z(), 0.0, 10.0);
        let hit = accel.traverse_closest(&ray, &mut TrianglesOnly).unwrap().unwrap();
        // Closed form: plane z = 0 reached at t = -o.z / d.z = 1.
        assert!((hit.t - 1.0).abs() < 1e-12);
        let b = hit.attributes.as_triangle().unwrap().barycentrics;
        let tri = match &accel.blas()[0].kind {
            BlasKind::Triangles { triangles, .. } => triangles
                .iter()
                .find(|t| t.primitive_index == hit.primitive_index)
                .unwrap()
                .positions,
            _ => unreachable!(),
        };
        let p = tri[0] * (1.0 - b.x as f64 - b.y as f64) + tri[1] * b.x as f64 + tri[2] * b.y as f64;
        assert!((p - ray.at(1.0)).norm() < 1e-6);
        assert_eq!(hit.geometry_index, 0);
    }

    #[test]
    fn ray_outside_everything_misses() {
        let accel = AccelerationStructure::build(&square_scene()).unwrap();
        let ray = Ray::new(Vec3::new(5.0, 5.0, -1.0), Vec3::z(), 0.0, 10.0);
        assert!(accel.traverse_closest(&ray, &mut TrianglesOnly).unwrap().is_none());
        assert!(!accel.traverse_any(&ray, &mut TrianglesOnly).unwrap());
    }

    #[test]
    fn shared_edge_is_watertight() {
        let accel = AccelerationStructure::build(&square_scene()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..2000 {
            // Points on the diagonal shared by both triangles.
            let s = rng.random_range(-0.5..0.5);
            let target = Vec3::new(s, s, 0.0);
            let origin = target + Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), -2.0);
            let ray = Ray::new(origin, target - origin, 0.0, 10.0);
            assert!(accel.traverse_any(&ray, &mut TrianglesOnly).unwrap(), "leak at {target:?}");
        }
    }

    #[test]
    fn degenerate_triangles_are_dropped() {
        let mut s = Scene::new();
        s.add_geometry(
            Geometry::triangles(
                "T",
                vec![vtx(0.0, 0.0, 0.0), vtx(1.0, 0.0, 0.0), vtx(0.0, 1.0, 0.0), vtx(2.0, 0.0, 0.0)],
                vec![0, 1, 2, 0, 1, 3],
                vec![InstanceTransform::identity()],
            )
            .unwrap(),
        )
        .unwrap();
        let a = AccelerationStructure::build(&s).unwrap();
        assert_eq!(a.dropped_triangles(), 1);
    }

    /// The two-BLAS layout of the classic two-ray-type example, under the
    /// one-geometry-per-BLAS rule: two triangle geometries and one
    /// procedural geometry with two instances.
    #[test]
    fn blas_per_geometry_count() {
        let mut s = Scene::new();
        s.add_ray(RayType::new("Radiance", "Miss", Payload::ray()).unwrap()).unwrap();
        s.add_ray(RayType::new("Shadow", "Miss_Shadow", Payload::shadow()).unwrap()).unwrap();
        for id in ["T0", "T1"] {
            s.add_geometry(
                Geometry::triangles(
                    id,
                    vec![vtx(0.0, 0.0, 0.0), vtx(1.0, 0.0, 0.0), vtx(0.0, 1.0, 0.0)],
                    vec![0, 1, 2],
                    vec![InstanceTransform::identity()],
                )
                .unwrap(),
            )
            .unwrap();
        }
        let inst = |x| InstanceTransform::new(translation(Vec3::new(x, 0.0, 0.0))).unwrap();
        s.add_geometry(Geometry::procedural("P", unit_box(), vec![inst(3.0), inst(6.0)]).unwrap())
            .unwrap();
        let a = AccelerationStructure::build(&s).unwrap();
        // Oracle: one BLAS per geometry, one TLAS entry per instance.
        let expected_blas = s.geometries().len();
        let expected_instances: usize = s.geometries().map(|g| g.instances.len()).sum();
        assert_eq!(a.blas().len(), expected_blas);
        assert_eq!(a.blas().len(), 3);
        assert_eq!(a.instances().len(), expected_instances);
        assert_eq!(a.instances().len(), 4);
        let ids: Vec<u32> = a.instances().iter().map(|i| i.instance_id).collect();
        assert_eq!(ids, vec![0, 1, 2, 3]);
        let contributions: Vec<u32> = a.instances().iter().map(|i| i.contribution).collect();
        assert_eq!(contributions, vec![0, 2, 4, 6]);
        for i in a.instances() {
            let root = a.blas()[i.blas_index].root_aabb();
            assert!(i.world_aabb.contains_box(&root.transformed(&i.transform.local_to_world), 1e-9));
        }
    }

    #[test]
    fn local_space_intersection_matches_world_space() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = translation(Vec3::new(1.0, -2.0, 0.5)) * rotation_y(33.0) * uniform_scale(2.5);
        let inst = InstanceTransform::new(m).unwrap();
        let tri = [Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.3)];
        let world_tri = tri.map(|p| crate::math::transform_point(&m, &p));
        for _ in 0..200 {
            let target = world_tri[0] * 0.3 + world_tri[1] * 0.3 + world_tri[2] * 0.4;
            let origin = target
                + Vec3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-6.0..-2.0));
            let ray = Ray::new(origin, target - origin, 0.0, 100.0);
            let w = intersect_triangle(&ray, &world_tri[0], &world_tri[1], &world_tri[2]).unwrap();
            let local = ray.transformed(&inst.world_to_local);
            let l = intersect_triangle(&local, &tri[0], &tri[1], &tri[2]).unwrap();
            assert!((w.t - l.t).abs() <= 1e-4 * w.t.abs());
        }
    }

    #[test]
    fn procedural_callback_gets_local_ray_and_clamped_interval() {
        let mut s = Scene::new();
        let m = translation(Vec3::new(0.0, 0.0, 5.0)) * uniform_scale(2.0);
        s.add_geometry(
            Geometry::procedural("P", unit_box(), vec![InstanceTransform::new(m).unwrap()]).unwrap(),
        )
        .unwrap();
        let a = AccelerationStructure::build(&s).unwrap();
        let ray = Ray::new(Vec3::zeros(), Vec3::z(), 0.0, 100.0);
        let mut calls = 0;
        let hit = a
            .traverse_closest(&ray, &mut |_: &TlasInstance, local: &Ray, r: &mut HitReport| {
                calls += 1;
                // World box spans z in [3, 7].
                assert!((r.entry() - 3.0).abs() < 1e-12 && (r.exit() - 7.0).abs() < 1e-12);
                assert!((local.at(r.entry()).z + 1.0).abs() < 1e-12);
                r.report(4.0, AttributeStruct::Procedural(crate::compat::ProceduralPrimitiveAttributes {
                    normal: nalgebra::Vector3::new(0.0, 0.0, -1.0),
                }));
            })
            .unwrap()
            .unwrap();
        assert_eq!(calls, 1);
        assert_eq!(hit.t, 4.0);

        let miss = Ray::new(Vec3::new(10.0, 0.0, 0.0), Vec3::z(), 0.0, 100.0);
        let mut calls = 0;
        let none = a
            .traverse_closest(&miss, &mut |_: &TlasInstance, _: &Ray, _: &mut HitReport| calls += 1)
            .unwrap();
        assert!(none.is_none());
        assert_eq!(calls, 0);
    }
}
