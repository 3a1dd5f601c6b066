//! Radiance field: sparse multi-resolution feature grid (or an alternative
//! input encoding) followed by an MLP, with `L = N + E`.

mod encoding;
mod grid;
mod occupancy;

pub use encoding::positional_encoding;
pub use grid::{corner_keys, occupied_voxels, voxel_hash, FeatureGrid, GridLevel, GridStats, LevelStats, FEATURE_INIT_SCALE};
pub use occupancy::triangle_box_overlap;

use rand::Rng;
use thiserror::Error;

use crate::color::Rgb;
use crate::diff::{DiffError, Graph, ParamId, ParamStore, Real, Tensor, Var};
use crate::geometry::{Aabb, SurfaceHit, Vec3};
use crate::materials::LocalProps;
use crate::rng;
use crate::scene::Scene;

#[derive(Debug, Error, PartialEq)]
pub enum FieldError {
    #[error("lattice coordinate {coord:?} outside grid of size {grid_size}")]
    CoordOutOfRange { coord: [i64; 3], grid_size: u64 },
    #[error("invalid field configuration: {0}")]
    Config(String),
    #[error("incompatible field: {0}")]
    Incompatible(String),
    #[error(transparent)]
    Diff(#[from] DiffError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Encoder {
    /// Sparse feature grids at resolutions 2, 4, ..., 2^levels.
    Grid { levels: usize, features: usize },
    PositionalEncoding { bands: usize },
    None,
}

impl Encoder {
    pub fn width(&self) -> usize {
        match *self {
            Encoder::Grid { features, .. } => features,
            Encoder::PositionalEncoding { bands } => 6 * bands,
            Encoder::None => 0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Encoder::Grid { .. } => "grid",
            Encoder::PositionalEncoding { .. } => "posenc",
            Encoder::None => "none",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FieldConfig {
    pub encoder: Encoder,
    /// Number of linear layers, the last of which maps to RGB.
    pub depth: usize,
    pub width: usize,
    pub local_props: bool,
}

impl Default for FieldConfig {
    fn default() -> Self {
        FieldConfig { encoder: Encoder::Grid { levels: 5, features: 16 }, depth: 4, width: 128, local_props: true }
    }
}

impl FieldConfig {
    /// Width of the MLP input row.
    pub fn input_width(&self) -> usize {
        let props = if self.local_props { 3 + 3 + 3 + 2 } else { 0 };
        3 + self.encoder.width() + 3 + props
    }

    /// `(fan_in, fan_out)` of every linear layer.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(self.depth);
        let mut fan_in = self.input_width();
        for i in 0..self.depth {
            let out = if i + 1 == self.depth { 3 } else { self.width };
            shapes.push((fan_in, out));
            fan_in = out;
        }
        shapes
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        if self.depth == 0 {
            return Err(FieldError::Config("MLP depth must be at least 1".into()));
        }
        if self.depth > 1 && self.width == 0 {
            return Err(FieldError::Config("MLP width must be positive".into()));
        }
        match self.encoder {
            Encoder::Grid { levels, features } if levels == 0 || features == 0 => {
                Err(FieldError::Config("grid encoder needs at least one level and one feature".into()))
            }
            Encoder::PositionalEncoding { bands } if bands == 0 || bands > 30 => {
                Err(FieldError::Config(format!("positional encoding bands must be in 1..=30, got {bands}")))
            }
            _ => Ok(()),
        }
    }
}

/// Neural field `N_theta`, plus everything needed to evaluate `L = N + E`.
#[derive(Clone, Debug)]
pub struct RadianceField<T> {
    config: FieldConfig,
    bounds: Aabb,
    store: ParamStore<T>,
    grid: Option<FeatureGrid>,
    layers: Vec<(ParamId, ParamId)>,
}

/// Rows evaluated per graph during batched inference.
const INFERENCE_CHUNK: usize = 4096;

impl<T: Real> RadianceField<T> {
    /// Fresh field over `scene`, with MLP layers drawn from
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` and grid features from
    /// `U(-0.01, 0.01)`.
    pub fn new(scene: &Scene, config: FieldConfig, seed: u64) -> Result<Self, FieldError> {
        config.validate()?;
        let bounds = scene.field_bounds();
        let mut store = ParamStore::new();
        let grid = match config.encoder {
            Encoder::Grid { levels, features } => {
                Some(FeatureGrid::build(&scene.triangles, &bounds, levels, features, &mut store, seed)?)
            }
            _ => None,
        };
        let mut layers = Vec::with_capacity(config.depth);
        for (i, (fan_in, fan_out)) in config.layer_shapes().into_iter().enumerate() {
            let mut r = rng::stream(seed, 0x006d_6c70, i as u64);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let mut draw = |n: usize| -> Vec<T> { (0..n).map(|_| T::of(r.random_range(-bound..=bound))).collect() };
            let w = Tensor::from_vec(fan_in, fan_out, draw(fan_in * fan_out));
            let b = Tensor::from_vec(1, fan_out, draw(fan_out));
            layers.push((store.add(format!("mlp.{i}.weight"), w), store.add(format!("mlp.{i}.bias"), b)));
        }
        Ok(RadianceField { config, bounds, store, grid, layers })
    }

    /// Reassembles a field from stored parts, checking shapes.
    pub fn from_parts(
        config: FieldConfig,
        bounds: Aabb,
        store: ParamStore<T>,
        grid: Option<FeatureGrid>,
        layers: Vec<(ParamId, ParamId)>,
    ) -> Result<Self, FieldError> {
        config.validate()?;
        let shapes = config.layer_shapes();
        if layers.len() != shapes.len() {
            return Err(FieldError::Incompatible(format!("expected {} layers, got {}", shapes.len(), layers.len())));
        }
        for (i, (&(w, b), &(fi, fo))) in layers.iter().zip(&shapes).enumerate() {
            if store.value(w).shape() != (fi, fo) || store.value(b).shape() != (1, fo) {
                return Err(FieldError::Incompatible(format!(
                    "layer {i}: weight {:?} / bias {:?} do not match {:?}",
                    store.value(w).shape(),
                    store.value(b).shape(),
                    (fi, fo)
                )));
            }
        }
        if matches!(config.encoder, Encoder::Grid { .. }) != grid.is_some() {
            return Err(FieldError::Incompatible("grid presence does not match encoder".into()));
        }
        Ok(RadianceField { config, bounds, store, grid, layers })
    }

    pub fn config(&self) -> &FieldConfig {
        &self.config
    }

    pub fn bounds(&self) -> &Aabb {
        &self.bounds
    }

    pub fn store(&self) -> &ParamStore<T> {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    pub fn grid(&self) -> Option<&FeatureGrid> {
        self.grid.as_ref()
    }

    pub fn layers(&self) -> &[(ParamId, ParamId)] {
        &self.layers
    }

    pub fn grid_stats(&self) -> Option<GridStats> {
        self.grid.as_ref().map(FeatureGrid::stats)
    }

    /// Network inputs for a query at `hit` seen from direction `wo`.
    pub fn props(&self, scene: &Scene, hit: &SurfaceHit, wo: Vec3) -> LocalProps {
        LocalProps::new(hit, wo, &self.bounds, scene.material(hit))
    }

    /// Records `N_theta` for a batch of queries; returns a `B x 3` node.
    pub fn forward_n(&self, graph: &mut Graph<T>, props: &[LocalProps]) -> Result<Var, FieldError> {
        self.forward_n_with(&self.store, graph, props)
    }

    /// As [`forward_n`](Self::forward_n), reading parameters from `store`.
    pub fn forward_n_with(&self, store: &ParamStore<T>, graph: &mut Graph<T>, props: &[LocalProps]) -> Result<Var, FieldError> {
        let b = props.len();
        let positions: Vec<[f64; 3]> = props.iter().map(|p| p.position.to_array()).collect();
        let mut head = Vec::with_capacity(b * 3);
        for p in &positions {
            head.extend(p.map(T::of));
        }
        let head = graph.constant(Tensor::from_vec(b, 3, head));
        let mut parts = vec![head];
        match self.config.encoder {
            Encoder::Grid { .. } => {
                let grid = self.grid.as_ref().expect("grid encoder without grid");
                parts.push(grid.query(graph, store, &positions));
            }
            Encoder::PositionalEncoding { bands } => {
                let mut enc = Vec::with_capacity(b * 6 * bands);
                for p in &positions {
                    enc.extend(positional_encoding(*p, bands).into_iter().map(T::of));
                }
                parts.push(graph.constant(Tensor::from_vec(b, 6 * bands, enc)));
            }
            Encoder::None => {}
        }
        let tail_w = self.config.input_width() - 3 - self.config.encoder.width();
        let mut tail = Vec::with_capacity(b * tail_w);
        for p in props {
            tail.extend(p.wo.to_array().map(T::of));
            if self.config.local_props {
                tail.extend(p.normal.to_array().map(T::of));
                tail.extend(p.diffuse.0.map(T::of));
                tail.extend(p.specular.0.map(T::of));
                tail.extend(p.roughness.map(T::of));
            }
        }
        parts.push(graph.constant(Tensor::from_vec(b, tail_w, tail)));
        let mut x = graph.concat_cols(&parts)?;
        for (i, &(w, bias)) in self.layers.iter().enumerate() {
            let wv = graph.param(store, w);
            let bv = graph.param(store, bias);
            x = graph.affine(x, wv, bv)?;
            if i + 1 < self.layers.len() {
                x = graph.relu(x);
            }
        }
        Ok(x)
    }

    /// Evaluates `N_theta` without keeping a graph, in fixed-size chunks.
    pub fn eval_n(&self, props: &[LocalProps]) -> Result<Vec<Rgb>, FieldError> {
        let mut out = Vec::with_capacity(props.len());
        for chunk in props.chunks(INFERENCE_CHUNK) {
            let mut graph = Graph::new();
            let y = self.forward_n(&mut graph, chunk)?;
            let t = graph.value(y);
            for r in 0..t.rows() {
                let row = t.row(r);
                out.push(Rgb::new(row[0].as_f64(), row[1].as_f64(), row[2].as_f64()));
            }
        }
        Ok(out)
    }

    /// `L = N + E` at `hit` in direction `wo`. Back faces of one-sided
    /// materials carry no radiance.
    pub fn radiance_l(&self, scene: &Scene, hit: &SurfaceHit, wo: Vec3) -> Result<Rgb, FieldError> {
        let e = scene.emitted(hit, wo);
        if crate::materials::oriented_normal(hit, scene.material(hit), wo).is_none() {
            return Ok(e);
        }
        let n = self.eval_n(&[self.props(scene, hit, wo)])?;
        Ok(n[0] + e)
    }

    /// Field for a modified scene: rebuilt sparse grid with features copied
    /// for shared vertices, same MLP weights.
    pub fn transfer(&self, scene: &Scene, seed: u64) -> Result<(Self, usize), FieldError> {
        if !self.bounds.contains(&scene.bounds) {
            return Err(FieldError::Incompatible("modified scene extends beyond the trained field bounds".into()));
        }
        let Some(old) = &self.grid else {
            return Ok((self.clone(), 0));
        };
        // Rebuild against the original normalization box so lattice keys align.
        let mut store = ParamStore::new();
        let grid = FeatureGrid::build(&scene.triangles, &self.bounds, old.levels.len(), old.features, &mut store, seed)?;
        let copied = grid.transfer_from(&mut store, old, &self.store)?;
        let mut layers = Vec::new();
        for &(w, b) in &self.layers {
            let wi = store.add(self.store.name(w), self.store.value(w).clone());
            let bi = store.add(self.store.name(b), self.store.value(b).clone());
            layers.push((wi, bi));
        }
        let next = RadianceField::from_parts(self.config, self.bounds, store, Some(grid), layers)?;
        Ok((next, copied))
    }
}
