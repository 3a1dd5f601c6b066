use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::obj::parse_obj;
use super::IoError;
use crate::color::Rgb;
use crate::geometry::{Triangle, Vec3};
use crate::materials::Bsdf;
use crate::render::Camera;
use crate::scene::{Material, Scene};

pub const SCENE_VERSION: u32 = 1;

/// Scene file contents, as written by hand.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneDoc {
    pub version: u32,
    pub camera: CameraDoc,
    #[serde(default)]
    pub materials: Vec<MaterialDoc>,
    #[serde(default)]
    pub emitters: Vec<EmitterDoc>,
    #[serde(default)]
    pub meshes: Vec<MeshDoc>,
    #[serde(default)]
    pub training: Option<TrainingDoc>,
}

fn default_up() -> [f64; 3] {
    [0.0, 1.0, 0.0]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraDoc {
    pub origin: [f64; 3],
    pub look_at: [f64; 3],
    #[serde(default = "default_up")]
    pub up: [f64; 3],
    /// Vertical field of view in degrees.
    pub fov: f64,
    pub width: usize,
    pub height: usize,
}

/// `type` is one of `lambertian`, `mirror` or `phong` (which also needs `exponent`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialDoc {
    pub name: String,
    #[serde(rename = "type")]
    pub kind: String,
    pub reflectance: [f64; 3],
    #[serde(default)]
    pub exponent: Option<f64>,
    #[serde(default)]
    pub two_sided: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmitterDoc {
    pub name: String,
    pub radiance: [f64; 3],
    #[serde(default)]
    pub two_sided: bool,
}

/// Geometry given inline (`vertices` + `triangles`, or `quads`) or by an OBJ
/// file path relative to the scene file. Transforms apply as scale, then
/// rotation about +y, then translation.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshDoc {
    #[serde(default)]
    pub name: Option<String>,
    pub material: String,
    #[serde(default)]
    pub emitter: Option<String>,
    #[serde(default)]
    pub vertices: Option<Vec<[f64; 3]>>,
    #[serde(default)]
    pub triangles: Option<Vec<[usize; 3]>>,
    #[serde(default)]
    pub normals: Option<Vec<[f64; 3]>>,
    #[serde(default)]
    pub quads: Option<Vec<[[f64; 3]; 4]>>,
    #[serde(default)]
    pub obj: Option<String>,
    #[serde(default)]
    pub scale: Option<[f64; 3]>,
    #[serde(default)]
    pub rotate_y: Option<f64>,
    #[serde(default)]
    pub translate: Option<[f64; 3]>,
    /// Reverses triangle winding, turning the surface inside out.
    #[serde(default)]
    pub flip: bool,
}

/// Optional per-scene training defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingDoc {
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub steps: Option<usize>,
    pub lr: Option<f64>,
    pub levels: Option<usize>,
    pub width: Option<usize>,
    pub depth: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug)]
pub struct LoadedScene {
    pub doc: SceneDoc,
    pub scene: Scene,
    pub camera: Camera,
}

pub fn load_scene(path: impl AsRef<Path>) -> Result<LoadedScene, IoError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    parse_scene(&text, path)
}

/// Parses and validates a scene document; `path` is used for error messages
/// and to resolve mesh files.
pub fn parse_scene(text: &str, path: &Path) -> Result<LoadedScene, IoError> {
    let doc: SceneDoc = toml::from_str(text).map_err(|e| IoError::parse(path, e.to_string()))?;
    let invalid = |at: String, message: String| IoError::Invalid { path: path.to_path_buf(), at, message };

    if doc.version != SCENE_VERSION {
        return Err(invalid("version".into(), format!("unsupported version {} (expected {SCENE_VERSION})", doc.version)));
    }
    if doc.meshes.is_empty() {
        return Err(invalid("meshes".into(), "scene has no meshes".into()));
    }

    let c = &doc.camera;
    let camera = Camera {
        origin: Vec3::from_array(c.origin),
        look_at: Vec3::from_array(c.look_at),
        up: Vec3::from_array(c.up),
        fov_deg: c.fov,
        width: c.width,
        height: c.height,
    };
    camera.validate().map_err(|m| invalid("camera".into(), m))?;

    let mut material_ids = HashMap::new();
    let mut materials = Vec::with_capacity(doc.materials.len());
    for (i, m) in doc.materials.iter().enumerate() {
        let at = format!("materials[{i}]");
        let reflectance = Rgb(m.reflectance);
        let bsdf = match (m.kind.as_str(), m.exponent) {
            ("lambertian", None) => Bsdf::Lambertian { reflectance },
            ("mirror", None) => Bsdf::Mirror { reflectance },
            ("phong", Some(exponent)) => Bsdf::GlossyPhong { reflectance, exponent },
            ("phong", None) => return Err(invalid(at, format!("phong material '{}' needs an exponent", m.name))),
            ("lambertian" | "mirror", Some(_)) => {
                return Err(invalid(at, format!("material '{}': exponent only applies to phong", m.name)))
            }
            (other, _) => return Err(invalid(at, format!("unknown material type '{other}'"))),
        };
        if material_ids.insert(m.name.clone(), materials.len() as u32).is_some() {
            return Err(invalid(at, format!("duplicate material name '{}'", m.name)));
        }
        materials.push(Material { name: m.name.clone(), bsdf, two_sided: m.two_sided });
    }

    let mut emitter_ids = HashMap::new();
    let mut emitters = Vec::with_capacity(doc.emitters.len());
    for (i, e) in doc.emitters.iter().enumerate() {
        if emitter_ids.insert(e.name.clone(), emitters.len() as u32).is_some() {
            return Err(invalid(format!("emitters[{i}]"), format!("duplicate emitter name '{}'", e.name)));
        }
        emitters.push((Rgb(e.radiance), e.two_sided));
    }

    let base = path.parent().unwrap_or(Path::new("."));
    let mut triangles = Vec::new();
    for (i, mesh) in doc.meshes.iter().enumerate() {
        let at = format!("meshes[{i}]");
        let material = *material_ids
            .get(&mesh.material)
            .ok_or_else(|| invalid(format!("{at}.material"), format!("undefined material '{}'", mesh.material)))?;
        let emitter = match &mesh.emitter {
            None => None,
            Some(name) => Some(
                *emitter_ids
                    .get(name)
                    .ok_or_else(|| invalid(format!("{at}.emitter"), format!("undefined emitter '{name}'")))?,
            ),
        };
        let raw = mesh_triangles(mesh, base).map_err(|(field, m)| invalid(format!("{at}{field}"), m))?;
        if raw.is_empty() {
            return Err(invalid(at, "mesh has no triangles".into()));
        }
        for (mut v, mut normals) in raw {
            for p in v.iter_mut() {
                *p = transform(mesh, *p);
            }
            if let Some(ns) = normals.as_mut() {
                for n in ns.iter_mut() {
                    *n = transform_normal(mesh, *n);
                }
            }
            if mesh.flip {
                v.swap(1, 2);
                normals = normals.map(|mut ns| {
                    ns.swap(1, 2);
                    ns.map(|n| -n)
                });
            }
            if let Some(k) = v.iter().position(|p| !p.is_finite()) {
                return Err(invalid(at, format!("vertex {k} of a triangle is not finite")));
            }
            let mut t = Triangle::new(v, material);
            t.normals = normals;
            t.emitter = emitter;
            triangles.push(t);
        }
    }

    let scene = Scene::new(triangles, materials, emitters).map_err(|source| IoError::Scene { path: path.to_path_buf(), source })?;
    Ok(LoadedScene { doc, scene, camera })
}

type RawTriangle = ([Vec3; 3], Option<[Vec3; 3]>);

fn mesh_triangles(mesh: &MeshDoc, base: &Path) -> Result<Vec<RawTriangle>, (String, String)> {
    let sources = [mesh.vertices.is_some(), mesh.quads.is_some(), mesh.obj.is_some()];
    if sources.iter().filter(|&&s| s).count() != 1 {
        return Err((String::new(), "give exactly one of vertices/triangles, quads or obj".into()));
    }
    if let Some(quads) = &mesh.quads {
        let mut out = Vec::with_capacity(2 * quads.len());
        for q in quads {
            let p = q.map(Vec3::from_array);
            out.push(([p[0], p[1], p[2]], None));
            out.push(([p[0], p[2], p[3]], None));
        }
        return Ok(out);
    }
    if let Some(file) = &mesh.obj {
        let full = base.join(file);
        let text = std::fs::read_to_string(&full).map_err(|e| (".obj".to_string(), format!("{}: {e}", full.display())))?;
        let obj = parse_obj(&text).map_err(|e| (".obj".to_string(), format!("{}: {e}", full.display())))?;
        return Ok(obj
            .triangles
            .iter()
            .zip(&obj.triangle_normals)
            .map(|(t, n)| (t.map(|i| obj.positions[i]), n.map(|n| n.map(|i| obj.normals[i]))))
            .collect());
    }
    let vertices: Vec<Vec3> = mesh.vertices.as_ref().unwrap().iter().map(|&v| Vec3::from_array(v)).collect();
    let tris = mesh.triangles.as_ref().ok_or((".triangles".to_string(), "vertices given without triangles".into()))?;
    let normals: Option<Vec<Vec3>> = mesh.normals.as_ref().map(|ns| ns.iter().map(|&n| Vec3::from_array(n).normalize_or_zero()).collect());
    if let Some(ns) = &normals {
        if ns.len() != vertices.len() {
            return Err((".normals".into(), format!("{} normals for {} vertices", ns.len(), vertices.len())));
        }
    }
    let mut out = Vec::with_capacity(tris.len());
    for (k, t) in tris.iter().enumerate() {
        if let Some(&bad) = t.iter().find(|&&i| i >= vertices.len()) {
            return Err((format!(".triangles[{k}]"), format!("vertex index {bad} out of range ({} vertices)", vertices.len())));
        }
        out.push((t.map(|i| vertices[i]), normals.as_ref().map(|ns| t.map(|i| ns[i]))));
    }
    Ok(out)
}

fn rotate_y(p: Vec3, degrees: f64) -> Vec3 {
    let (s, c) = degrees.to_radians().sin_cos();
    Vec3::new(c * p.x + s * p.z, p.y, -s * p.x + c * p.z)
}

fn transform(mesh: &MeshDoc, p: Vec3) -> Vec3 {
    let mut p = p * Vec3::from_array(mesh.scale.unwrap_or([1.0; 3]));
    if let Some(a) = mesh.rotate_y {
        p = rotate_y(p, a);
    }
    p + Vec3::from_array(mesh.translate.unwrap_or([0.0; 3]))
}

fn transform_normal(mesh: &MeshDoc, n: Vec3) -> Vec3 {
    let mut n = n / Vec3::from_array(mesh.scale.unwrap_or([1.0; 3]));
    if let Some(a) = mesh.rotate_y {
        n = rotate_y(n, a);
    }
    n.normalize_or_zero()
}
