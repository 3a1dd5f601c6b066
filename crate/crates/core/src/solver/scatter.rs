//! Monte Carlo estimation of the scattering operator `T{N + E}`.

use rand::Rng;

use crate::color::Rgb;
use crate::diff::{Graph, Real, Tensor, Var};
use crate::field::{FieldError, RadianceField};
use crate::geometry::{Aabb, SurfaceHit, Vec3};
use crate::materials::{balance_heuristic, emitter_pdf, oriented_normal, sample_emitter, LocalProps};
use crate::scene::Scene;

/// Longest run of consecutive mirror bounces followed before giving up.
pub const MAX_MIRROR_CHAIN: usize = 16;

/// One sample of the scattered radiance: `weight * N(query) + constant`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScatterSample {
    pub query: Option<(LocalProps, Rgb)>,
    pub constant: Rgb,
}

pub(crate) fn u2(rng: &mut impl Rng) -> [f64; 2] {
    [rng.random(), rng.random()]
}

pub(crate) fn u3(rng: &mut impl Rng) -> [f64; 3] {
    [rng.random(), rng.random(), rng.random()]
}

/// Where a path lands after following mirror reflections.
#[derive(Clone, Copy, Debug)]
pub struct ChainEnd {
    pub hit: SurfaceHit,
    pub wo: Vec3,
    /// Product of mirror reflectances along the chain.
    pub throughput: Rgb,
    /// Emission of every surface reached after the start, weighted by the
    /// throughput at that point.
    pub emitted: Rgb,
    pub bounces: usize,
}

/// Follows mirror reflections from `hit` (seen from `wo`) until a
/// non-specular surface. Returns `None` if the path escapes, reaches the back
/// of a one-sided mirror, or exceeds [`MAX_MIRROR_CHAIN`] bounces.
pub fn follow_mirrors(scene: &Scene, hit: SurfaceHit, wo: Vec3) -> Option<ChainEnd> {
    let (mut hit, mut wo) = (hit, wo);
    let mut throughput = Rgb::WHITE;
    let mut emitted = Rgb::BLACK;
    for bounces in 0..=MAX_MIRROR_CHAIN {
        let mat = scene.material(&hit);
        if !mat.bsdf.is_delta() {
            return Some(ChainEnd { hit, wo, throughput, emitted, bounces });
        }
        if bounces == MAX_MIRROR_CHAIN {
            break;
        }
        let n = oriented_normal(&hit, mat, wo)?;
        let s = mat.bsdf.sample(n, wo, [0.0, 0.0])?;
        throughput *= s.weight;
        if throughput.is_black() {
            return None;
        }
        let next = scene.intersect(&hit.spawn_ray(s.wi, scene.ray_eps))?;
        wo = -s.wi;
        emitted += throughput * scene.emitted(&next, wo);
        hit = next;
    }
    None
}

/// Draws one sample of `T{N + E}(x, wo)` at a non-specular point.
///
/// The emission part combines BSDF and emitter sampling with the balance
/// heuristic (emitter sampling only when `emitter_sampling` is set). The
/// network part is estimated by BSDF sampling alone, after following any
/// mirror chain to the first non-specular surface.
pub fn scatter_sample(
    scene: &Scene,
    bounds: &Aabb,
    x: &SurfaceHit,
    wo: Vec3,
    rng: &mut impl Rng,
    emitter_sampling: bool,
) -> ScatterSample {
    let mut constant = Rgb::BLACK;
    let mat = scene.material(x);
    let Some(n) = oriented_normal(x, mat, wo) else {
        return ScatterSample { query: None, constant };
    };
    let bsdf = &mat.bsdf;
    let use_nee = emitter_sampling && scene.has_emitters();

    let ue = u3(rng);
    if use_nee {
        if let Some(es) = sample_emitter(scene, x, ue) {
            let cos = n.dot(es.wi);
            if cos > 0.0 {
                let f = bsdf.eval(n, es.wi, wo);
                let w = balance_heuristic(es.pdf, bsdf.pdf(n, es.wi, wo));
                constant += f * es.radiance * (cos * w / es.pdf);
            }
        }
    }

    let ub = u2(rng);
    let Some(s) = bsdf.sample(n, wo, ub) else {
        return ScatterSample { query: None, constant };
    };
    if s.weight.is_black() {
        return ScatterSample { query: None, constant };
    }
    let ray = x.spawn_ray(s.wi, scene.ray_eps);
    let Some(first) = scene.intersect(&ray) else {
        return ScatterSample { query: None, constant };
    };

    // Emission at the first surface reached by the BSDF sample competes with
    // emitter sampling; everything reached through a mirror does not.
    let e = scene.emitted(&first, -s.wi);
    if !e.is_black() {
        let w = if use_nee && !s.is_delta {
            balance_heuristic(s.pdf, emitter_pdf(scene, x.position, &first))
        } else {
            1.0
        };
        constant += s.weight * e * w;
    }

    let Some(end) = follow_mirrors(scene, first, -s.wi) else {
        return ScatterSample { query: None, constant };
    };
    constant += s.weight * end.emitted;

    let end_mat = scene.material(&end.hit);
    if oriented_normal(&end.hit, end_mat, end.wo).is_none() {
        return ScatterSample { query: None, constant };
    }
    let props = LocalProps::new(&end.hit, end.wo, bounds, end_mat);
    ScatterSample { query: Some((props, s.weight * end.throughput)), constant }
}

/// Scatter samples of many shading points, flattened for one batched
/// network evaluation.
#[derive(Clone, Debug, Default)]
pub struct ScatterBatch {
    pub m: usize,
    pub props: Vec<LocalProps>,
    pub weights: Vec<Rgb>,
    /// Query rows of point `j` are `offsets[j]..offsets[j + 1]`.
    pub offsets: Vec<usize>,
    /// Per-point sum of the constant parts over its samples.
    pub constants: Vec<Rgb>,
}

impl ScatterBatch {
    pub fn new(m: usize) -> Self {
        ScatterBatch { m, props: Vec::new(), weights: Vec::new(), offsets: vec![0], constants: Vec::new() }
    }

    pub fn points(&self) -> usize {
        self.constants.len()
    }

    pub fn push_point(&mut self, samples: impl IntoIterator<Item = ScatterSample>) {
        let mut c = Rgb::BLACK;
        for s in samples {
            c += s.constant;
            if let Some((p, w)) = s.query {
                self.props.push(p);
                self.weights.push(w);
            }
        }
        self.constants.push(c);
        self.offsets.push(self.props.len());
    }

    pub fn append(&mut self, other: ScatterBatch) {
        let base = self.props.len();
        self.props.extend(other.props);
        self.weights.extend(other.weights);
        self.constants.extend(other.constants);
        self.offsets.extend(other.offsets[1..].iter().map(|o| o + base));
    }

    /// Records `T` (points x 3) from the network outputs of the query rows.
    pub fn record<T: Real>(&self, graph: &mut Graph<T>, queries: Var) -> Result<Var, FieldError> {
        let w: Vec<T> = self.weights.iter().flat_map(|w| w.0.map(T::of)).collect();
        let w = graph.constant(Tensor::from_vec(self.weights.len(), 3, w));
        let weighted = graph.mul(queries, w)?;
        let sum = graph.segment_sum(weighted, &self.offsets)?;
        let c: Vec<T> = self.constants.iter().flat_map(|c| c.0.map(T::of)).collect();
        let c = graph.constant(Tensor::from_vec(self.points(), 3, c));
        let total = graph.add(sum, c)?;
        Ok(graph.scale(total, T::of(1.0 / self.m as f64)))
    }

    /// Numeric `T` per point given network outputs for the query rows.
    pub fn evaluate(&self, queries: &[Rgb]) -> Vec<Rgb> {
        let inv_m = 1.0 / self.m as f64;
        (0..self.points())
            .map(|j| {
                let mut t = self.constants[j];
                for q in self.offsets[j]..self.offsets[j + 1] {
                    t += self.weights[q] * queries[q];
                }
                t * inv_m
            })
            .collect()
    }
}

/// Records an `M`-sample estimate of `T{N + E}(x, wo)` as a 1x3 node.
#[allow(clippy::too_many_arguments)]
pub fn estimate_scatter<T: Real>(
    graph: &mut Graph<T>,
    field: &RadianceField<T>,
    scene: &Scene,
    x: &SurfaceHit,
    wo: Vec3,
    m: usize,
    rng: &mut impl Rng,
    emitter_sampling: bool,
) -> Result<Var, FieldError> {
    let mut batch = ScatterBatch::new(m);
    batch.push_point((0..m).map(|_| scatter_sample(scene, field.bounds(), x, wo, rng, emitter_sampling)));
    let q = field.forward_n(graph, &batch.props)?;
    batch.record(graph, q)
}

/// Numeric `M`-sample estimate of `T{N + E}(x, wo)`.
pub fn estimate_scatter_value<T: Real>(
    field: &RadianceField<T>,
    scene: &Scene,
    x: &SurfaceHit,
    wo: Vec3,
    m: usize,
    rng: &mut impl Rng,
    emitter_sampling: bool,
) -> Result<Rgb, FieldError> {
    let mut batch = ScatterBatch::new(m);
    batch.push_point((0..m).map(|_| scatter_sample(scene, field.bounds(), x, wo, rng, emitter_sampling)));
    let q = field.eval_n(&batch.props)?;
    Ok(batch.evaluate(&q)[0])
}
