use rand::Rng;
use rayon::prelude::*;

use super::{path_trace, Camera, Film, RenderError};
use crate::color::Rgb;
use crate::diff::Real;
use crate::field::RadianceField;
use crate::materials::{oriented_normal, LocalProps};
use crate::rng;
use crate::scene::Scene;
use crate::solver::{follow_mirrors, scatter_sample, ScatterBatch, ScatterSample};

/// Upper bound on network queries gathered before one batched evaluation.
const QUERY_BUDGET: usize = 1 << 15;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RenderMode {
    Lhs,
    Rhs,
    Residual,
    PathTrace,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenderJob {
    pub mode: RenderMode,
    pub spp: usize,
    /// Incident samples per shading point (RHS and residual).
    pub m: usize,
    /// Bounce limit (path tracing).
    pub max_depth: usize,
    pub seed: u64,
    /// Residual normalizer stabilizer.
    pub eps: f64,
    pub emitter_sampling: bool,
}

impl Default for RenderJob {
    fn default() -> Self {
        RenderJob { mode: RenderMode::Lhs, spp: 1, m: 1, max_depth: 64, seed: 0, eps: 0.01, emitter_sampling: true }
    }
}

/// Renders `job`. Path tracing ignores the field.
pub fn render<T: Real>(scene: &Scene, field: &RadianceField<T>, camera: &Camera, job: &RenderJob) -> Result<Film, RenderError> {
    match job.mode {
        RenderMode::Lhs => render_lhs(scene, field, camera, job.spp, job.seed),
        RenderMode::Rhs => render_rhs(scene, field, camera, job.spp, job.m, job.seed, job.emitter_sampling),
        RenderMode::Residual => render_residual(scene, field, camera, job.spp, job.m, job.seed, job.eps, job.emitter_sampling),
        RenderMode::PathTrace => path_trace(scene, camera, job.spp, job.max_depth, job.seed),
    }
}

/// Camera sample `s` of pixel `p` resolved to scatter samples whose sum over
/// the pixel's samples, divided by spp, is the pixel estimate.
fn pixel_batch<T: Real>(
    scene: &Scene,
    field: &RadianceField<T>,
    camera: &Camera,
    spp: usize,
    seed: u64,
    per_hit: &(dyn Fn(&mut rng::StreamRng, &crate::solver::ChainEnd, &mut Vec<ScatterSample>) + Sync),
) -> Result<Film, RenderError> {
    camera.validate().map_err(RenderError::Config)?;
    if spp == 0 {
        return Err(RenderError::Config("spp must be at least 1".into()));
    }
    let (w, h) = (camera.width, camera.height);
    let mut film = Film::new(w, h);
    let pixels_per_chunk = (QUERY_BUDGET / spp).max(1);
    let total = w * h;
    let mut start = 0;
    while start < total {
        let end = (start + pixels_per_chunk).min(total);
        let per_pixel: Vec<Vec<ScatterSample>> = (start..end)
            .into_par_iter()
            .map(|p| {
                let mut out = Vec::with_capacity(spp);
                for s in 0..spp {
                    let mut r = rng::stream(seed, p as u64, s as u64);
                    let ray = camera.ray(p % w, p / w, [r.random(), r.random()]);
                    let Some(first) = scene.intersect(&ray) else { continue };
                    let wo = -ray.dir;
                    let mut direct = scene.emitted(&first, wo);
                    if let Some(end) = follow_mirrors(scene, first, wo) {
                        direct += end.emitted;
                        per_hit(&mut r, &end, &mut out);
                    }
                    out.push(ScatterSample { query: None, constant: direct });
                }
                out
            })
            .collect();
        let mut batch = ScatterBatch::new(spp);
        for samples in per_pixel {
            batch.push_point(samples);
        }
        let q = field.eval_n(&batch.props)?;
        for (i, v) in batch.evaluate(&q).into_iter().enumerate() {
            film.set(start + i, v, spp as u32);
        }
        start = end;
    }
    Ok(film)
}

/// `L = N + E` at the first non-specular surface seen through each pixel.
pub fn render_lhs<T: Real>(scene: &Scene, field: &RadianceField<T>, camera: &Camera, spp: usize, seed: u64) -> Result<Film, RenderError> {
    let bounds = *field.bounds();
    pixel_batch(scene, field, camera, spp, seed, &|_, end, out| {
        let mat = scene.material(&end.hit);
        if oriented_normal(&end.hit, mat, end.wo).is_some() {
            let props = LocalProps::new(&end.hit, end.wo, &bounds, mat);
            out.push(ScatterSample { query: Some((props, end.throughput)), constant: Rgb::BLACK });
        }
    })
}

/// `E + T{N + E}` with `m` incident samples at the first non-specular surface.
pub fn render_rhs<T: Real>(
    scene: &Scene,
    field: &RadianceField<T>,
    camera: &Camera,
    spp: usize,
    m: usize,
    seed: u64,
    emitter_sampling: bool,
) -> Result<Film, RenderError> {
    if m == 0 {
        return Err(RenderError::Config("m must be at least 1".into()));
    }
    let bounds = *field.bounds();
    let inv_m = 1.0 / m as f64;
    pixel_batch(scene, field, camera, spp, seed, &|r, end, out| {
        for _ in 0..m {
            let s = scatter_sample(scene, &bounds, &end.hit, end.wo, r, emitter_sampling);
            out.push(ScatterSample {
                query: s.query.map(|(p, w)| (p, w * end.throughput * inv_m)),
                constant: s.constant * end.throughput * inv_m,
            });
        }
    })
}

/// Per-pixel relative residual `|LHS - RHS| / (max(m, 0) + eps)` with
/// `m = (LHS + RHS) / 2`, channelwise.
#[allow(clippy::too_many_arguments)]
pub fn render_residual<T: Real>(
    scene: &Scene,
    field: &RadianceField<T>,
    camera: &Camera,
    spp: usize,
    m: usize,
    seed: u64,
    eps: f64,
    emitter_sampling: bool,
) -> Result<Film, RenderError> {
    if !(eps > 0.0) {
        return Err(RenderError::Config("eps must be positive".into()));
    }
    let lhs = render_lhs(scene, field, camera, spp, seed)?;
    let rhs = render_rhs(scene, field, camera, spp, m, seed, emitter_sampling)?;
    let pixels = lhs
        .pixels()
        .iter()
        .zip(rhs.pixels())
        .map(|(&a, &b)| {
            let (a, b) = (a as f64, b as f64);
            ((a - b).abs() / (((a + b) * 0.5).max(0.0) + eps)) as f32
        })
        .collect();
    Ok(Film::from_pixels(lhs.width(), lhs.height(), pixels))
}
