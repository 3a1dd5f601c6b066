//! Bounding volume hierarchy with median splits on the longest centroid axis.

use super::{Aabb, GeometryError, Ray, SurfaceHit, Triangle, Vec3};

const LEAF_SIZE: usize = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct BvhNode {
    pub bounds: Aabb,
    /// Leaf: first index into `Bvh::indices`. Interior: index of the left child
    /// (the right child is stored at `first + 1`).
    pub first: u32,
    /// Number of triangles for a leaf, zero for interior nodes.
    pub count: u32,
}

impl BvhNode {
    pub fn is_leaf(&self) -> bool {
        self.count > 0
    }
}

#[derive(Clone, Debug)]
pub struct Bvh {
    pub nodes: Vec<BvhNode>,
    pub indices: Vec<u32>,
}

impl Bvh {
    pub fn build(triangles: &[Triangle]) -> Result<Bvh, GeometryError> {
        if triangles.is_empty() {
            return Err(GeometryError::EmptyScene);
        }
        let centroids: Vec<Vec3> = triangles.iter().map(Triangle::centroid).collect();
        // Pad boxes slightly so grazing hits accepted by the triangle test are
        // never culled by rounding in the slab test.
        let bounds: Vec<Aabb> = triangles
            .iter()
            .map(|t| {
                let b = t.bounds();
                let pad = Vec3::splat(1e-9 * (1.0 + b.min.abs().max(b.max.abs()).max_element()));
                Aabb::new(b.min - pad, b.max + pad)
            })
            .collect();
        let mut bvh = Bvh {
            nodes: Vec::with_capacity(2 * triangles.len()),
            indices: (0..triangles.len() as u32).collect(),
        };
        bvh.nodes.push(BvhNode { bounds: Aabb::EMPTY, first: 0, count: 0 });
        bvh.subdivide(0, 0, triangles.len(), &centroids, &bounds);
        Ok(bvh)
    }

    fn subdivide(&mut self, node: usize, start: usize, end: usize, centroids: &[Vec3], bounds: &[Aabb]) {
        let idx = &mut self.indices[start..end];
        let node_bounds = idx.iter().fold(Aabb::EMPTY, |b, &i| b.union(bounds[i as usize]));
        self.nodes[node].bounds = node_bounds;
        let count = end - start;
        if count <= LEAF_SIZE {
            self.nodes[node].first = start as u32;
            self.nodes[node].count = count as u32;
            return;
        }
        let centroid_bounds = idx.iter().fold(Aabb::EMPTY, |b, &i| b.grow(centroids[i as usize]));
        let axis = centroid_bounds.longest_axis();
        let mid = count / 2;
        idx.select_nth_unstable_by(mid, |&a, &b| {
            centroids[a as usize][axis]
                .total_cmp(&centroids[b as usize][axis])
                .then(a.cmp(&b))
        });
        let left = self.nodes.len();
        self.nodes.push(BvhNode { bounds: Aabb::EMPTY, first: 0, count: 0 });
        self.nodes.push(BvhNode { bounds: Aabb::EMPTY, first: 0, count: 0 });
        self.nodes[node].first = left as u32;
        self.subdivide(left, start, start + mid, centroids, bounds);
        self.subdivide(left + 1, start + mid, end, centroids, bounds);
    }

    /// Nearest hit in `(t_min, t_max)`. Equal distances resolve to the lowest triangle id.
    pub fn intersect(&self, triangles: &[Triangle], ray: &Ray) -> Option<SurfaceHit> {
        let inv_dir = ray.dir.recip();
        let mut best: Option<(f64, u32, f64, f64)> = None;
        let mut t_max = ray.t_max;
        let mut stack = [0u32; 64];
        let mut sp = 1;
        while sp > 0 {
            sp -= 1;
            let node = &self.nodes[stack[sp] as usize];
            if !node.bounds.hit(ray.origin, inv_dir, ray.t_min, t_max) {
                continue;
            }
            if node.is_leaf() {
                let range = node.first as usize..(node.first + node.count) as usize;
                for &id in &self.indices[range] {
                    let probe = Ray { t_max: ray.t_max, ..*ray };
                    if let Some((t, b1, b2)) = triangles[id as usize].intersect(&probe) {
                        let better = match best {
                            None => true,
                            Some((bt, bid, _, _)) => t < bt || (t == bt && id < bid),
                        };
                        if better {
                            best = Some((t, id, b1, b2));
                            t_max = t;
                        }
                    }
                }
            } else {
                stack[sp] = node.first;
                stack[sp + 1] = node.first + 1;
                sp += 2;
            }
        }
        best.map(|(t, id, b1, b2)| triangles[id as usize].surface_hit(id, t, b1, b2))
    }

    /// Any-hit query for shadow rays.
    pub fn occluded(&self, triangles: &[Triangle], ray: &Ray) -> bool {
        let inv_dir = ray.dir.recip();
        let mut stack = [0u32; 64];
        let mut sp = 1;
        while sp > 0 {
            sp -= 1;
            let node = &self.nodes[stack[sp] as usize];
            if !node.bounds.hit(ray.origin, inv_dir, ray.t_min, ray.t_max) {
                continue;
            }
            if node.is_leaf() {
                let range = node.first as usize..(node.first + node.count) as usize;
                if self.indices[range].iter().any(|&id| triangles[id as usize].intersect(ray).is_some()) {
                    return true;
                }
            } else {
                stack[sp] = node.first;
                stack[sp + 1] = node.first + 1;
                sp += 2;
            }
        }
        false
    }
}

/// Reference nearest-hit search over every triangle.
pub fn intersect_brute(triangles: &[Triangle], ray: &Ray) -> Option<SurfaceHit> {
    let mut best: Option<(f64, u32, f64, f64)> = None;
    for (id, tri) in triangles.iter().enumerate() {
        if let Some((t, b1, b2)) = tri.intersect(ray) {
            if best.is_none_or(|(bt, _, _, _)| t < bt) {
                best = Some((t, id as u32, b1, b2));
            }
        }
    }
    best.map(|(t, id, b1, b2)| triangles[id as usize].surface_hit(id, t, b1, b2))
}
