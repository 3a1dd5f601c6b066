//! Triangle geometry, ray casting and surface sampling.

mod bvh;
mod sampling;

pub use bvh::{intersect_brute, Bvh, BvhNode};
pub use sampling::{cosine_hemisphere, sample_direction_uniform, sample_surface, AreaTable};

use glam::DVec3;
use thiserror::Error;

pub type Vec3 = DVec3;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("scene contains no triangles")]
    EmptyScene,
    #[error("area table requires at least one triangle with positive area")]
    EmptyAreaTable,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub dir: Vec3,
    pub t_min: f64,
    pub t_max: f64,
}

impl Ray {
    pub fn new(origin: Vec3, dir: Vec3) -> Self {
        Ray { origin, dir, t_min: 0.0, t_max: f64::INFINITY }
    }

    pub fn with_range(origin: Vec3, dir: Vec3, t_min: f64, t_max: f64) -> Self {
        debug_assert!(t_min >= 0.0 && t_min < t_max);
        Ray { origin, dir, t_min, t_max }
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.dir * t
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub const EMPTY: Aabb = Aabb {
        min: DVec3::splat(f64::INFINITY),
        max: DVec3::splat(f64::NEG_INFINITY),
    };

    pub fn new(min: Vec3, max: Vec3) -> Self {
        Aabb { min, max }
    }

    pub fn from_points(points: &[Vec3]) -> Self {
        points.iter().fold(Aabb::EMPTY, |b, &p| b.grow(p))
    }

    pub fn grow(self, p: Vec3) -> Self {
        Aabb { min: self.min.min(p), max: self.max.max(p) }
    }

    pub fn union(self, o: Aabb) -> Self {
        Aabb { min: self.min.min(o.min), max: self.max.max(o.max) }
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn diagonal(&self) -> f64 {
        self.extent().length()
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
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

    pub fn contains(&self, o: &Aabb) -> bool {
        self.min.cmple(o.min).all() && self.max.cmpge(o.max).all()
    }

    /// Pads every axis by `fraction` of that axis' extent on both sides.
    /// Flat axes are padded by `fraction` of the diagonal instead.
    pub fn padded(&self, fraction: f64) -> Aabb {
        let diag = self.diagonal().max(f64::MIN_POSITIVE);
        let e = self.extent();
        let pad = Vec3::new(
            if e.x > 0.0 { e.x } else { diag },
            if e.y > 0.0 { e.y } else { diag },
            if e.z > 0.0 { e.z } else { diag },
        ) * fraction;
        Aabb { min: self.min - pad, max: self.max + pad }
    }

    /// Maps `p` into the unit cube spanned by this box.
    pub fn normalize(&self, p: Vec3) -> Vec3 {
        (p - self.min) / self.extent()
    }

    /// Slab test returning the overlap of the ray with the box, if any.
    #[inline]
    pub fn hit(&self, origin: Vec3, inv_dir: Vec3, t_min: f64, t_max: f64) -> bool {
        let t0 = (self.min - origin) * inv_dir;
        let t1 = (self.max - origin) * inv_dir;
        // f64::min/max ignore NaN from 0 * inf, keeping the test conservative.
        let near = t0.x.min(t1.x).max(t0.y.min(t1.y)).max(t0.z.min(t1.z)).max(t_min);
        let far = t0.x.max(t1.x).min(t0.y.max(t1.y)).min(t0.z.max(t1.z)).min(t_max);
        near <= far
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Triangle {
    pub v: [Vec3; 3],
    pub normals: Option<[Vec3; 3]>,
    pub material: u32,
    pub emitter: Option<u32>,
}

impl Triangle {
    pub fn new(v: [Vec3; 3], material: u32) -> Self {
        Triangle { v, normals: None, material, emitter: None }
    }

    pub fn area(&self) -> f64 {
        0.5 * (self.v[1] - self.v[0]).cross(self.v[2] - self.v[0]).length()
    }

    /// Unit normal following the counter-clockwise winding.
    pub fn geometric_normal(&self) -> Vec3 {
        (self.v[1] - self.v[0]).cross(self.v[2] - self.v[0]).normalize()
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::from_points(&self.v)
    }

    pub fn centroid(&self) -> Vec3 {
        (self.v[0] + self.v[1] + self.v[2]) / 3.0
    }

    /// Möller–Trumbore. Returns `(t, b1, b2)` for hits with `t` in the open ray range.
    #[inline]
    pub fn intersect(&self, ray: &Ray) -> Option<(f64, f64, f64)> {
        let e1 = self.v[1] - self.v[0];
        let e2 = self.v[2] - self.v[0];
        let p = ray.dir.cross(e2);
        let det = e1.dot(p);
        if det.abs() < 1e-300 {
            return None;
        }
        let inv_det = 1.0 / det;
        let s = ray.origin - self.v[0];
        let b1 = s.dot(p) * inv_det;
        if !(0.0..=1.0).contains(&b1) {
            return None;
        }
        let q = s.cross(e1);
        let b2 = ray.dir.dot(q) * inv_det;
        if b2 < 0.0 || b1 + b2 > 1.0 {
            return None;
        }
        let t = e2.dot(q) * inv_det;
        (t > ray.t_min && t < ray.t_max).then_some((t, b1, b2))
    }

    /// Builds the hit record at barycentrics `(b1, b2)`.
    pub fn surface_hit(&self, id: u32, t: f64, b1: f64, b2: f64) -> SurfaceHit {
        let b0 = 1.0 - b1 - b2;
        let position = self.v[0] * b0 + self.v[1] * b1 + self.v[2] * b2;
        let mut geo_normal = self.geometric_normal();
        let shading_normal = match self.normals {
            Some(n) => {
                let ns = (n[0] * b0 + n[1] * b1 + n[2] * b2).normalize_or_zero();
                if ns == Vec3::ZERO {
                    geo_normal
                } else {
                    if ns.dot(geo_normal) < 0.0 {
                        geo_normal = -geo_normal;
                    }
                    ns
                }
            }
            None => geo_normal,
        };
        SurfaceHit {
            position,
            geo_normal,
            shading_normal,
            material: self.material,
            triangle: id,
            t,
        }
    }
}

/// Ray/scene intersection record. The front side of the surface is the
/// hemisphere around `shading_normal`; `geo_normal` is oriented to match.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfaceHit {
    pub position: Vec3,
    pub geo_normal: Vec3,
    pub shading_normal: Vec3,
    pub material: u32,
    pub triangle: u32,
    pub t: f64,
}

impl SurfaceHit {
    /// Ray leaving the surface along `dir`, offset by `eps` to the side `dir` points to.
    pub fn spawn_ray(&self, dir: Vec3, eps: f64) -> Ray {
        let offset = if dir.dot(self.geo_normal) >= 0.0 { eps } else { -eps };
        Ray::new(self.position + self.geo_normal * offset, dir)
    }

    /// Shadow ray towards `target`, stopping short of it.
    pub fn spawn_ray_to(&self, target: Vec3, eps: f64) -> Ray {
        let dir = target - self.position;
        let offset = if dir.dot(self.geo_normal) >= 0.0 { eps } else { -eps };
        let origin = self.position + self.geo_normal * offset;
        let d = target - origin;
        let dist = d.length();
        Ray::with_range(origin, d / dist, 0.0, (dist - eps).max(f64::MIN_POSITIVE))
    }

    pub fn is_front(&self, dir: Vec3) -> bool {
        dir.dot(self.shading_normal) > 0.0
    }
}

/// Orthonormal basis around a unit normal (Duff et al. branchless construction).
#[derive(Clone, Copy, Debug)]
pub struct Frame {
    pub s: Vec3,
    pub t: Vec3,
    pub n: Vec3,
}

impl Frame {
    pub fn from_normal(n: Vec3) -> Self {
        let sign = 1.0f64.copysign(n.z);
        let a = -1.0 / (sign + n.z);
        let b = n.x * n.y * a;
        let s = Vec3::new(1.0 + sign * n.x * n.x * a, sign * b, -sign * n.x);
        let t = Vec3::new(b, sign + n.y * n.y * a, -n.y);
        Frame { s, t, n }
    }

    pub fn to_world(&self, v: Vec3) -> Vec3 {
        self.s * v.x + self.t * v.y + self.n * v.z
    }

    pub fn to_local(&self, v: Vec3) -> Vec3 {
        Vec3::new(v.dot(self.s), v.dot(self.t), v.dot(self.n))
    }
}

/// Mirror reflection of `wo` about `n`; both point away from the surface.
pub fn reflect(wo: Vec3, n: Vec3) -> Vec3 {
    n * (2.0 * wo.dot(n)) - wo
}
