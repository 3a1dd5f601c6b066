//! Runtime scene: validated triangles, materials, emitters and acceleration data.

use log::warn;
use thiserror::Error;

use crate::color::Rgb;
use crate::geometry::{Aabb, AreaTable, Bvh, GeometryError, Ray, SurfaceHit, Triangle, Vec3};
use crate::materials::Bsdf;

/// Fraction of the scene diagonal used to offset secondary ray origins.
pub const RAY_EPS_FRACTION: f64 = 1e-4;
/// Fraction of each axis by which the field's normalization box is padded.
pub const BOUNDS_PADDING: f64 = 0.01;

#[derive(Debug, Error, PartialEq)]
pub enum SceneError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("triangle {0} has a non-finite vertex")]
    NonFiniteVertex(usize),
    #[error("triangle {triangle} references missing material {material}")]
    MissingMaterial { triangle: usize, material: u32 },
    #[error("triangle {triangle} references missing emitter {emitter}")]
    MissingEmitter { triangle: usize, emitter: u32 },
    #[error("material '{0}' has a reflectance outside [0, 1]")]
    BadReflectance(String),
    #[error("material '{0}' has a Phong exponent below 1")]
    BadExponent(String),
    #[error("emitter {0} has negative or non-finite radiance")]
    BadEmission(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Material {
    pub name: String,
    pub bsdf: Bsdf,
    pub two_sided: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Emitter {
    pub radiance: Rgb,
    pub two_sided: bool,
    pub triangles: Vec<u32>,
}

#[derive(Clone, Debug)]
pub struct Scene {
    pub triangles: Vec<Triangle>,
    pub materials: Vec<Material>,
    pub emitters: Vec<Emitter>,
    pub bvh: Bvh,
    pub bounds: Aabb,
    pub ray_eps: f64,
    pub surface_table: AreaTable,
    /// Non-specular surfaces, where training samples are drawn.
    pub train_table: Option<AreaTable>,
    pub emitter_table: Option<AreaTable>,
}

impl Scene {
    /// Validates the input, drops degenerate triangles and builds the BVH and area tables.
    /// Emitter triangle lists are rebuilt from the per-triangle `emitter` ids.
    pub fn new(triangles: Vec<Triangle>, materials: Vec<Material>, emitters: Vec<(Rgb, bool)>) -> Result<Scene, SceneError> {
        for m in &materials {
            let refl = m.bsdf.diffuse_reflectance().in_unit_range() && m.bsdf.specular_reflectance().in_unit_range();
            if !refl {
                return Err(SceneError::BadReflectance(m.name.clone()));
            }
            if let Bsdf::GlossyPhong { exponent, .. } = m.bsdf {
                if !(exponent >= 1.0) {
                    return Err(SceneError::BadExponent(m.name.clone()));
                }
            }
        }
        for (i, (e, _)) in emitters.iter().enumerate() {
            if !e.is_finite() || e.0.iter().any(|&c| c < 0.0) {
                return Err(SceneError::BadEmission(i));
            }
        }
        for (i, t) in triangles.iter().enumerate() {
            if !t.v.iter().all(|v| v.is_finite()) {
                return Err(SceneError::NonFiniteVertex(i));
            }
            if t.material as usize >= materials.len() {
                return Err(SceneError::MissingMaterial { triangle: i, material: t.material });
            }
            if let Some(e) = t.emitter {
                if e as usize >= emitters.len() {
                    return Err(SceneError::MissingEmitter { triangle: i, emitter: e });
                }
            }
        }
        let raw_bounds = triangles.iter().fold(Aabb::EMPTY, |b, t| b.union(t.bounds()));
        let scale2 = raw_bounds.diagonal().powi(2);
        let before = triangles.len();
        let triangles: Vec<Triangle> = triangles.into_iter().filter(|t| t.area() >= 1e-12 * scale2).collect();
        if triangles.len() < before {
            warn!("dropped {} degenerate triangles", before - triangles.len());
        }
        if triangles.is_empty() {
            return Err(GeometryError::EmptyScene.into());
        }
        let bounds = triangles.iter().fold(Aabb::EMPTY, |b, t| b.union(t.bounds()));
        let bvh = Bvh::build(&triangles)?;
        let all = 0..triangles.len() as u32;
        let surface_table = AreaTable::new(&triangles, all.clone())?;
        let train_table = AreaTable::new(
            &triangles,
            all.clone().filter(|&i| !materials[triangles[i as usize].material as usize].bsdf.is_delta()),
        )
        .ok();
        let emitter_table = AreaTable::new(&triangles, all.clone().filter(|&i| triangles[i as usize].emitter.is_some())).ok();
        let emitters = emitters
            .into_iter()
            .enumerate()
            .map(|(k, (radiance, two_sided))| Emitter {
                radiance,
                two_sided,
                triangles: all.clone().filter(|&i| triangles[i as usize].emitter == Some(k as u32)).collect(),
            })
            .collect();
        Ok(Scene {
            ray_eps: RAY_EPS_FRACTION * bounds.diagonal(),
            triangles,
            materials,
            emitters,
            bvh,
            bounds,
            surface_table,
            train_table,
            emitter_table,
        })
    }

    pub fn intersect(&self, ray: &Ray) -> Option<SurfaceHit> {
        self.bvh.intersect(&self.triangles, ray)
    }

    pub fn occluded(&self, ray: &Ray) -> bool {
        self.bvh.occluded(&self.triangles, ray)
    }

    pub fn material(&self, hit: &SurfaceHit) -> &Material {
        &self.materials[hit.material as usize]
    }

    pub fn emitter(&self, hit: &SurfaceHit) -> Option<&Emitter> {
        self.triangles[hit.triangle as usize].emitter.map(|e| &self.emitters[e as usize])
    }

    /// Emitted radiance leaving `hit` towards `wo`; zero behind one-sided emitters.
    pub fn emitted(&self, hit: &SurfaceHit, wo: Vec3) -> Rgb {
        match self.emitter(hit) {
            Some(e) if e.two_sided || hit.is_front(wo) => e.radiance,
            _ => Rgb::BLACK,
        }
    }

    pub fn has_emitters(&self) -> bool {
        self.emitter_table.is_some()
    }

    /// Box used to normalize positions for the radiance field.
    pub fn field_bounds(&self) -> Aabb {
        self.bounds.padded(BOUNDS_PADDING)
    }

    pub fn total_area(&self) -> f64 {
        self.surface_table.total
    }
}
