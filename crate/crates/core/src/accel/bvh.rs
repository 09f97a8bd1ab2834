//! Binary BVH over a list of boxes, built by median split on the longest
//! centroid axis. Used both for triangle BLAS and for the TLAS.

use crate::math::{Aabb, Ray};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeKind {
    Inner { left: u32, right: u32 },
    /// Items `order[start..start + count]`.
    Leaf { start: u32, count: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BvhNode {
    pub aabb: Aabb,
    pub kind: NodeKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bvh {
    pub nodes: Vec<BvhNode>,
    /// Item indices permuted so each leaf covers a contiguous range.
    pub order: Vec<u32>,
}

/// What to do after visiting a leaf item.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Walk {
    /// Keep going; the closest accepted distance so far.
    Continue(f64),
    Stop,
}

impl Bvh {
    pub fn build(boxes: &[Aabb], max_leaf: usize) -> Bvh {
        let max_leaf = max_leaf.max(1);
        let mut bvh = Bvh {
            nodes: Vec::with_capacity(boxes.len().max(1) * 2),
            order: (0..boxes.len() as u32).collect(),
        };
        if boxes.is_empty() {
            return bvh;
        }
        let centroids: Vec<_> = boxes.iter().map(|b| b.center()).collect();
        bvh.split(boxes, &centroids, 0, boxes.len(), max_leaf);
        bvh
    }

    fn split(
        &mut self,
        boxes: &[Aabb],
        centroids: &[crate::math::Vec3],
        start: usize,
        end: usize,
        max_leaf: usize,
    ) -> u32 {
        let items = &mut self.order[start..end];
        let bounds = items
            .iter()
            .fold(Aabb::EMPTY, |acc, &i| acc.union(&boxes[i as usize]));
        let node_index = self.nodes.len() as u32;
        let count = end - start;
        if count <= max_leaf {
            self.nodes.push(BvhNode {
                aabb: bounds,
                kind: NodeKind::Leaf {
                    start: start as u32,
                    count: count as u32,
                },
            });
            return node_index;
        }

        let mut cbounds = Aabb::EMPTY;
        for &i in items.iter() {
            cbounds.grow_point(&centroids[i as usize]);
        }
        let axis = cbounds.longest_axis();
        let mid = count / 2;
        // Ties broken by item index so the build is deterministic.
        items.select_nth_unstable_by(mid, |&a, &b| {
            centroids[a as usize][axis]
                .total_cmp(&centroids[b as usize][axis])
                .then(a.cmp(&b))
        });

        self.nodes.push(BvhNode {
            aabb: bounds,
            kind: NodeKind::Leaf { start: 0, count: 0 },
        });
        let left = self.split(boxes, centroids, start, start + mid, max_leaf);
        let right = self.split(boxes, centroids, start + mid, end, max_leaf);
        self.nodes[node_index as usize].kind = NodeKind::Inner { left, right };
        node_index
    }

    pub fn root_aabb(&self) -> Aabb {
        self.nodes.first().map_or(Aabb::EMPTY, |n| n.aabb)
    }

    /// Visits candidate items front to back, pruning subtrees beyond the
    /// running closest distance returned by `visit`.
    pub fn walk<E>(
        &self,
        ray: &Ray,
        mut visit: impl FnMut(u32, f64) -> Result<Walk, E>,
    ) -> Result<(), E> {
        if self.nodes.is_empty() {
            return Ok(());
        }
        let mut t_max = ray.t_max;
        let mut stack: Vec<(u32, f64)> = Vec::with_capacity(64);
        match self.nodes[0].aabb.intersect_ray(ray, ray.t_min, t_max) {
            Some((t0, _)) => stack.push((0, t0)),
            None => return Ok(()),
        }
        while let Some((index, t_entry)) = stack.pop() {
            if t_entry > t_max {
                continue;
            }
            let node = &self.nodes[index as usize];
            match node.kind {
                NodeKind::Leaf { start, count } => {
                    for &item in &self.order[start as usize..(start + count) as usize] {
                        match visit(item, t_max)? {
                            Walk::Continue(t) => t_max = t_max.min(t),
                            Walk::Stop => return Ok(()),
                        }
                    }
                }
                NodeKind::Inner { left, right } => {
                    let hl = self.nodes[left as usize].aabb.intersect_ray(ray, ray.t_min, t_max);
                    let hr = self.nodes[right as usize].aabb.intersect_ray(ray, ray.t_min, t_max);
                    match (hl, hr) {
                        (Some((tl, _)), Some((tr, _))) => {
                            // Push the far child first so the near one pops next.
                            if tl <= tr {
                                stack.push((right, tr));
                                stack.push((left, tl));
                            } else {
                                stack.push((left, tl));
                                stack.push((right, tr));
                            }
                        }
                        (Some((tl, _)), None) => stack.push((left, tl)),
                        (None, Some((tr, _))) => stack.push((right, tr)),
                        (None, None) => {}
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Vec3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_boxes(n: usize, seed: u64) -> Vec<Aabb> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let c = Vec3::new(
                    rng.random_range(-10.0..10.0),
                    rng.random_range(-10.0..10.0),
                    rng.random_range(-10.0..10.0),
                );
                let h = Vec3::new(
                    rng.random_range(0.01..1.0),
                    rng.random_range(0.01..1.0),
                    rng.random_range(0.01..1.0),
                );
                Aabb::new(c - h, c + h)
            })
            .collect()
    }

    #[test]
    fn every_item_in_exactly_one_leaf() {
        let boxes = random_boxes(257, 1);
        let bvh = Bvh::build(&boxes, 4);
        let mut seen = vec![0u32; boxes.len()];
        for node in &bvh.nodes {
            if let NodeKind::Leaf { start, count } = node.kind {
                assert!(count as usize <= 4);
                for &i in &bvh.order[start as usize..(start + count) as usize] {
                    seen[i as usize] += 1;
                    assert!(node.aabb.contains_box(&boxes[i as usize], 1e-6));
                }
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn parents_contain_children() {
        let boxes = random_boxes(100, 2);
        let bvh = Bvh::build(&boxes, 4);
        for node in &bvh.nodes {
            if let NodeKind::Inner { left, right } = node.kind {
                assert!(node.aabb.contains_box(&bvh.nodes[left as usize].aabb, 1e-6));
                assert!(node.aabb.contains_box(&bvh.nodes[right as usize].aabb, 1e-6));
            }
        }
    }

    #[test]
    fn identical_centroids_still_terminate() {
        let b = Aabb::new(Vec3::zeros(), Vec3::new(1.0, 1.0, 1.0));
        let bvh = Bvh::build(&vec![b; 33], 4);
        let leaves = bvh
            .nodes
            .iter()
            .filter(|n| matches!(n.kind, NodeKind::Leaf { .. }))
            .count();
        assert!(leaves >= 9);
    }

    #[test]
    fn build_is_deterministic() {
        let boxes = random_boxes(500, 3);
        assert_eq!(Bvh::build(&boxes, 4), Bvh::build(&boxes, 4));
    }

    #[test]
    fn walk_visits_every_box_the_ray_enters() {
        let boxes = random_boxes(300, 4);
        let bvh = Bvh::build(&boxes, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let o = Vec3::new(-20.0, rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
            let d = Vec3::new(1.0, rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3));
            let ray = Ray::new(o, d, 0.0, f64::INFINITY);
            let mut visited = vec![false; boxes.len()];
            bvh.walk::<()>(&ray, |i, t| {
                visited[i as usize] = true;
                Ok(Walk::Continue(t))
            })
            .unwrap();
            for (i, b) in boxes.iter().enumerate() {
                if b.intersect_ray(&ray, 0.0, f64::INFINITY).is_some() {
                    assert!(visited[i], "box {i} entered but not visited");
                }
            }
        }
    }
}
