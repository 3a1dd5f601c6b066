use rand::Rng;
use rayon::prelude::*;

use super::{Camera, Film, RenderError};
use crate::color::Rgb;
use crate::geometry::{SurfaceHit, Vec3};
use crate::materials::{balance_heuristic, emitter_pdf, oriented_normal, sample_emitter};
use crate::rng;
use crate::scene::Scene;

/// Bounce index from which Russian roulette may terminate a path.
pub const RR_START_DEPTH: usize = 5;

/// Radiance leaving `hit` towards `wo`, by unidirectional path tracing with
/// next-event estimation and balance-heuristic MIS, using at most
/// `max_depth` bounces. Emission of `hit` itself is included only when
/// `with_emission` is set.
pub fn radiance_from(
    scene: &Scene,
    hit: &SurfaceHit,
    wo: Vec3,
    rng: &mut impl Rng,
    max_depth: usize,
    with_emission: bool,
) -> Rgb {
    let mut l = if with_emission { scene.emitted(hit, wo) } else { Rgb::BLACK };
    let (mut hit, mut wo) = (*hit, wo);
    let mut beta = Rgb::WHITE;
    for depth in 0..max_depth {
        let mat = scene.material(&hit);
        let Some(n) = oriented_normal(&hit, mat, wo) else { break };
        let bsdf = &mat.bsdf;
        let ue = [rng.random(), rng.random(), rng.random()];
        if !bsdf.is_delta() {
            if let Some(es) = sample_emitter(scene, &hit, ue) {
                let cos = n.dot(es.wi);
                if cos > 0.0 {
                    let w = balance_heuristic(es.pdf, bsdf.pdf(n, es.wi, wo));
                    l += beta * bsdf.eval(n, es.wi, wo) * es.radiance * (cos * w / es.pdf);
                }
            }
        }
        let Some(s) = bsdf.sample(n, wo, [rng.random(), rng.random()]) else { break };
        beta *= s.weight;
        if beta.is_black() {
            break;
        }
        let Some(next) = scene.intersect(&hit.spawn_ray(s.wi, scene.ray_eps)) else { break };
        let e = scene.emitted(&next, -s.wi);
        if !e.is_black() {
            let w = if s.is_delta { 1.0 } else { balance_heuristic(s.pdf, emitter_pdf(scene, hit.position, &next)) };
            l += beta * e * w;
        }
        if depth + 1 >= RR_START_DEPTH {
            let q = beta.max_component().min(1.0);
            if rng.random::<f64>() >= q {
                break;
            }
            beta *= 1.0 / q;
        }
        hit = next;
        wo = -s.wi;
    }
    l
}

/// Path-traced estimate of the scattered radiance `T{L}(x, wo)`, i.e. the
/// outgoing radiance without the emission of `x`.
pub fn scattered_radiance(scene: &Scene, x: &SurfaceHit, wo: Vec3, rng: &mut impl Rng, max_depth: usize) -> Rgb {
    radiance_from(scene, x, wo, rng, max_depth, false)
}

/// Reference image by path tracing, `spp` jittered samples per pixel.
pub fn path_trace(scene: &Scene, camera: &Camera, spp: usize, max_depth: usize, seed: u64) -> Result<Film, RenderError> {
    camera.validate().map_err(RenderError::Config)?;
    if spp == 0 || max_depth == 0 {
        return Err(RenderError::Config("spp and max depth must be at least 1".into()));
    }
    let (w, h) = (camera.width, camera.height);
    let values: Vec<Rgb> = (0..w * h)
        .into_par_iter()
        .map(|p| {
            let mut sum = Rgb::BLACK;
            for s in 0..spp {
                let mut r = rng::stream(seed, p as u64, s as u64);
                let ray = camera.ray(p % w, p / w, [r.random(), r.random()]);
                if let Some(hit) = scene.intersect(&ray) {
                    sum += radiance_from(scene, &hit, -ray.dir, &mut r, max_depth, true);
                }
            }
            sum * (1.0 / spp as f64)
        })
        .collect();
    let mut film = Film::new(w, h);
    for (p, v) in values.into_iter().enumerate() {
        film.set(p, v, spp as u32);
    }
    Ok(film)
}
