//! Scattering models, emitter sampling and the per-hit property record fed to the network.

mod bsdf;

pub use bsdf::{Bsdf, DirSample};

use crate::color::Rgb;
use crate::geometry::{sample_surface, Aabb, SurfaceHit, Vec3};
use crate::scene::{Material, Scene};

/// Shading normal to use when scattering towards `wo`, or `None` when `wo`
/// leaves the back of a one-sided surface.
pub fn oriented_normal(hit: &SurfaceHit, material: &Material, wo: Vec3) -> Option<Vec3> {
    if hit.is_front(wo) {
        Some(hit.shading_normal)
    } else if material.two_sided {
        Some(-hit.shading_normal)
    } else {
        None
    }
}

/// Balance heuristic weight of strategy `a` against `b`.
pub fn balance_heuristic(pdf_a: f64, pdf_b: f64) -> f64 {
    if pdf_a + pdf_b > 0.0 {
        pdf_a / (pdf_a + pdf_b)
    } else {
        0.0
    }
}

#[derive(Clone, Copy, Debug)]
pub struct EmitterSample {
    pub wi: Vec3,
    /// Solid-angle density at the shading point.
    pub pdf: f64,
    pub hit: SurfaceHit,
    pub radiance: Rgb,
}

/// Samples a visible point on an emitter, uniformly by emitter area.
/// Returns `None` for scenes without emitters, back-facing samples and occluded samples.
pub fn sample_emitter(scene: &Scene, x: &SurfaceHit, u: [f64; 3]) -> Option<EmitterSample> {
    let table = scene.emitter_table.as_ref()?;
    let (y, pdf_area) = sample_surface(table, &scene.triangles, u);
    let d = y.position - x.position;
    let dist2 = d.length_squared();
    if dist2 <= 0.0 {
        return None;
    }
    let wi = d / dist2.sqrt();
    let radiance = scene.emitted(&y, -wi);
    let cos_y = y.geo_normal.dot(-wi).abs();
    if radiance.is_black() || cos_y <= 0.0 {
        return None;
    }
    if scene.occluded(&x.spawn_ray_to(y.position, scene.ray_eps)) {
        return None;
    }
    let mut hit = y;
    hit.t = dist2.sqrt();
    Some(EmitterSample { wi, pdf: pdf_area * dist2 / cos_y, hit, radiance })
}

/// Solid-angle density with which `sample_emitter` would pick `y` from `x`.
pub fn emitter_pdf(scene: &Scene, x: Vec3, y: &SurfaceHit) -> f64 {
    let Some(table) = scene.emitter_table.as_ref() else { return 0.0 };
    if scene.triangles[y.triangle as usize].emitter.is_none() {
        return 0.0;
    }
    let d = y.position - x;
    let dist2 = d.length_squared();
    let cos_y = y.geo_normal.dot(d).abs() / dist2.sqrt();
    if cos_y <= 0.0 {
        return 0.0;
    }
    table.pdf() * dist2 / cos_y
}

/// Scene information at a surface point, as presented to the network.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalProps {
    /// Position normalized into the unit cube of the field bounds.
    pub position: Vec3,
    pub wo: Vec3,
    pub normal: Vec3,
    pub diffuse: Rgb,
    pub specular: Rgb,
    pub roughness: [f64; 2],
}

impl LocalProps {
    pub fn new(hit: &SurfaceHit, wo: Vec3, bounds: &Aabb, material: &Material) -> Self {
        let normal = oriented_normal(hit, material, wo).unwrap_or(hit.shading_normal);
        let r = material.bsdf.roughness();
        LocalProps {
            position: bounds.normalize(hit.position).clamp(Vec3::ZERO, Vec3::ONE),
            wo,
            normal,
            diffuse: material.bsdf.diffuse_reflectance(),
            specular: material.bsdf.specular_reflectance(),
            roughness: [r, r],
        }
    }

    pub fn in_declared_ranges(&self) -> bool {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        let signed = |v: f64| (-1.0..=1.0).contains(&v);
        self.position.to_array().into_iter().all(unit)
            && self.wo.to_array().into_iter().all(signed)
            && self.normal.to_array().into_iter().all(signed)
            && self.diffuse.0.into_iter().all(signed)
            && self.specular.0.into_iter().all(signed)
            && self.roughness.into_iter().all(unit)
    }
}
