//! Binary checkpoint: little-endian, every array length-prefixed.
//!
//! Layout: `"NRAD"`, version `u32`, precision flag `u8`, field bounds
//! (6 x `f64`), encoder (`u8` kind, 2 x `u32`), MLP depth/width `u32`,
//! local-props flag `u8`, grid levels, MLP layers, step and seed `u64`.
//! Features and weights are stored as `f32`.

use std::path::Path;

use super::IoError;
use crate::diff::{ParamStore, Real, Tensor};
use crate::field::{Encoder, FeatureGrid, FieldConfig, GridLevel, RadianceField};
use crate::geometry::{Aabb, Vec3};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"NRAD";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CheckpointState {
    /// Completed training steps.
    pub step: u64,
    /// Seed of the run; with `step` it fixes all future random streams.
    pub seed: u64,
    /// Parameters were trained in double precision and rounded to `f32`.
    pub downcast: bool,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f32s<T: Real>(&mut self, v: &[T]) {
        self.u64(v.len() as u64);
        for x in v {
            self.0.extend_from_slice(&(x.as_f64() as f32).to_le_bytes());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            format!("truncated checkpoint: needed {n} bytes at offset {}, file has {}", self.pos, self.bytes.len())
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, String> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn len(&mut self, elem: usize) -> Result<usize, String> {
        let n = self.u64()? as usize;
        if n.checked_mul(elem).is_none_or(|b| b > self.bytes.len() - self.pos) {
            return Err(format!("truncated checkpoint: array of {n} elements at offset {}", self.pos));
        }
        Ok(n)
    }
    fn f32s<T: Real>(&mut self) -> Result<Vec<T>, String> {
        let n = self.len(4)?;
        Ok(self.take(4 * n)?.chunks_exact(4).map(|c| T::of(f32::from_le_bytes(c.try_into().unwrap()) as f64)).collect())
    }
}

pub fn checkpoint_to_bytes<T: Real>(field: &RadianceField<T>, state: &CheckpointState) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u32(CHECKPOINT_VERSION);
    w.u8(u8::from(state.downcast || T::NAME == "f64"));
    let b = field.bounds();
    for v in [b.min, b.max] {
        for c in v.to_array() {
            w.f64(c);
        }
    }
    let cfg = field.config();
    let (kind, a, bb) = match cfg.encoder {
        Encoder::Grid { levels, features } => (0, levels, features),
        Encoder::PositionalEncoding { bands } => (1, bands, 0),
        Encoder::None => (2, 0, 0),
    };
    w.u8(kind);
    w.u32(a as u32);
    w.u32(bb as u32);
    w.u32(cfg.depth as u32);
    w.u32(cfg.width as u32);
    w.u8(u8::from(cfg.local_props));

    let store = field.store();
    let levels = field.grid().map(|g| g.levels.as_slice()).unwrap_or(&[]);
    w.u32(levels.len() as u32);
    for l in levels {
        w.u32(l.resolution as u32);
        w.u64(l.occupied_voxels as u64);
        w.u64(l.keys.len() as u64);
        for &k in &l.keys {
            w.u64(k);
        }
        w.f32s(store.value(l.param).data());
    }
    w.u32(field.layers().len() as u32);
    for &(wt, bias) in field.layers() {
        let t = store.value(wt);
        w.u32(t.rows() as u32);
        w.u32(t.cols() as u32);
        w.f32s(t.data());
        w.f32s(store.value(bias).data());
    }
    w.u64(state.step);
    w.u64(state.seed);
    w.0
}

pub fn checkpoint_from_bytes<T: Real>(bytes: &[u8]) -> Result<(RadianceField<T>, CheckpointState), String> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err("not a checkpoint (bad magic)".into());
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(format!("checkpoint version {version} is not supported (expected {CHECKPOINT_VERSION})"));
    }
    let downcast = r.u8()? != 0;
    let mut c = [0.0; 6];
    for v in c.iter_mut() {
        *v = r.f64()?;
    }
    let bounds = Aabb::new(Vec3::new(c[0], c[1], c[2]), Vec3::new(c[3], c[4], c[5]));
    let (kind, a, b) = (r.u8()?, r.u32()? as usize, r.u32()? as usize);
    let encoder = match kind {
        0 => Encoder::Grid { levels: a, features: b },
        1 => Encoder::PositionalEncoding { bands: a },
        2 => Encoder::None,
        k => return Err(format!("unknown encoder kind {k}")),
    };
    let depth = r.u32()? as usize;
    let width = r.u32()? as usize;
    let local_props = r.u8()? != 0;
    let config = FieldConfig { encoder, depth, width, local_props };

    let mut store = ParamStore::new();
    let n_levels = r.u32()? as usize;
    let mut levels = Vec::with_capacity(n_levels.min(64));
    for i in 0..n_levels {
        let resolution = r.u32()? as usize;
        let occupied_voxels = r.u64()? as usize;
        let n = r.len(8)?;
        let keys: Vec<u64> = (0..n).map(|_| r.u64()).collect::<Result<_, _>>()?;
        if keys.windows(2).any(|k| k[0] >= k[1]) {
            return Err(format!("grid level {i}: keys are not strictly increasing"));
        }
        let feats = r.f32s::<T>()?;
        if feats.len() != n * b {
            return Err(format!("grid level {i}: {} feature values for {n} vertices", feats.len()));
        }
        let param = store.add(format!("grid.{i}"), Tensor::from_vec(n, b, feats));
        levels.push(GridLevel { resolution, keys, occupied_voxels, param });
    }
    let grid = (!levels.is_empty()).then_some(FeatureGrid { features: b, levels });
    let n_layers = r.u32()? as usize;
    let mut layers = Vec::with_capacity(n_layers.min(64));
    for i in 0..n_layers {
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let wv = r.f32s::<T>()?;
        let bv = r.f32s::<T>()?;
        if wv.len() != rows * cols || bv.len() != cols {
            return Err(format!("layer {i}: array sizes do not match {rows}x{cols}"));
        }
        let wi = store.add(format!("mlp.{i}.weight"), Tensor::from_vec(rows, cols, wv));
        let bi = store.add(format!("mlp.{i}.bias"), Tensor::from_vec(1, cols, bv));
        layers.push((wi, bi));
    }
    let step = r.u64()?;
    let seed = r.u64()?;
    if r.pos != bytes.len() {
        return Err(format!("{} trailing bytes after checkpoint", bytes.len() - r.pos));
    }
    let field = RadianceField::from_parts(config, bounds, store, grid, layers).map_err(|e| e.to_string())?;
    Ok((field, CheckpointState { step, seed, downcast }))
}

pub fn save_checkpoint<T: Real>(field: &RadianceField<T>, state: &CheckpointState, path: impl AsRef<Path>) -> Result<(), IoError> {
    let path = path.as_ref();
    std::fs::write(path, checkpoint_to_bytes(field, state)).map_err(|e| IoError::io(path, e))
}

pub fn load_checkpoint<T: Real>(path: impl AsRef<Path>) -> Result<(RadianceField<T>, CheckpointState), IoError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| IoError::io(path, e))?;
    checkpoint_from_bytes(&bytes).map_err(|m| IoError::parse(path, m))
}
