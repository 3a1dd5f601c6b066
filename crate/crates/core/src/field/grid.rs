use rand::Rng;

use super::occupancy::triangle_box_overlap;
use super::FieldError;
use crate::diff::{trilinear_gather, Graph, ParamId, ParamStore, Real, SparseFeatureLevel, Tensor, Var};
use crate::geometry::{Aabb, Triangle, Vec3};
use crate::rng;

/// Half-width of the uniform feature initialization.
pub const FEATURE_INIT_SCALE: f64 = 1e-2;

/// Relative enlargement of voxels in the overlap test, so that surfaces lying
/// exactly on voxel faces mark both neighbours.
const OVERLAP_SLACK: f64 = 1e-6;

/// Mixed-radix key `x + y g + z g^2` of a lattice coordinate.
pub fn voxel_hash(coord: [i64; 3], grid_size: u64) -> Result<u64, FieldError> {
    if coord.iter().any(|&c| c < 0 || c as u64 >= grid_size) {
        return Err(FieldError::CoordOutOfRange { coord, grid_size });
    }
    let [x, y, z] = coord.map(|c| c as u64);
    Ok(x + y * grid_size + z * grid_size * grid_size)
}

/// One sparse lattice: sorted keys of stored vertices and the parameter
/// tensor holding their features row by row.
#[derive(Clone, Debug, PartialEq)]
pub struct GridLevel {
    pub resolution: usize,
    pub keys: Vec<u64>,
    pub occupied_voxels: usize,
    pub param: ParamId,
}

impl GridLevel {
    pub fn vertices_per_axis(&self) -> u64 {
        self.resolution as u64 + 1
    }

    pub fn find(&self, key: u64) -> Option<usize> {
        self.keys.binary_search(&key).ok()
    }
}

impl SparseFeatureLevel for GridLevel {
    fn resolution(&self) -> usize {
        self.resolution
    }

    fn lookup(&self, v: [u32; 3]) -> Option<u32> {
        let g = self.vertices_per_axis();
        let key = v[0] as u64 + v[1] as u64 * g + v[2] as u64 * g * g;
        self.find(key).map(|i| i as u32)
    }

    fn param(&self) -> ParamId {
        self.param
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LevelStats {
    pub resolution: usize,
    pub occupied_voxels: usize,
    pub stored_vertices: usize,
    pub density_percent: f64,
    pub storage_bytes: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridStats {
    pub features: usize,
    pub levels: Vec<LevelStats>,
}

/// Multi-resolution sparse feature grid over the field bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureGrid {
    pub features: usize,
    pub levels: Vec<GridLevel>,
}

/// Voxels (as `[x, y, z]` at `resolution` voxels per axis) overlapping at least
/// one triangle, sorted by key and deduplicated.
pub fn occupied_voxels(triangles: &[Triangle], bounds: &Aabb, resolution: usize) -> Vec<[u32; 3]> {
    let r = resolution as f64;
    let voxel = 1.0 / r;
    let half = Vec3::splat(0.5 * voxel * (1.0 + OVERLAP_SLACK));
    let mut keys = Vec::new();
    for tri in triangles {
        let v = tri.v.map(|p| bounds.normalize(p));
        let lo = v[0].min(v[1]).min(v[2]);
        let hi = v[0].max(v[1]).max(v[2]);
        let range = |a: usize| {
            let l = ((lo[a] * r - OVERLAP_SLACK).floor().max(0.0) as usize).min(resolution - 1);
            let h = ((hi[a] * r + OVERLAP_SLACK).floor().max(0.0) as usize).min(resolution - 1);
            l..=h
        };
        for z in range(2) {
            for y in range(1) {
                for x in range(0) {
                    let center = Vec3::new(x as f64 + 0.5, y as f64 + 0.5, z as f64 + 0.5) * voxel;
                    if triangle_box_overlap(center, half, v) {
                        keys.push((x + y * resolution + z * resolution * resolution) as u64);
                    }
                }
            }
        }
    }
    keys.sort_unstable();
    keys.dedup();
    let rr = resolution as u64;
    keys.into_iter().map(|k| [(k % rr) as u32, (k / rr % rr) as u32, (k / (rr * rr)) as u32]).collect()
}

/// Sorted, deduplicated keys of the corner vertices of `voxels`.
pub fn corner_keys(voxels: &[[u32; 3]], resolution: usize) -> Vec<u64> {
    let g = resolution as u64 + 1;
    let mut keys = Vec::with_capacity(voxels.len() * 8);
    for v in voxels {
        for c in 0..8u32 {
            let p = [v[0] + (c & 1), v[1] + ((c >> 1) & 1), v[2] + ((c >> 2) & 1)];
            keys.push(p[0] as u64 + p[1] as u64 * g + p[2] as u64 * g * g);
        }
    }
    keys.sort_unstable();
    keys.dedup();
    keys
}

fn init_features<T: Real>(rows: usize, cols: usize, seed: u64, level: usize) -> Tensor<T> {
    let mut r = rng::stream(seed, 0x6772_6964, level as u64);
    let data = (0..rows * cols)
        .map(|_| T::of(r.random_range(-FEATURE_INIT_SCALE..=FEATURE_INIT_SCALE)))
        .collect();
    Tensor::from_vec(rows, cols, data)
}

impl FeatureGrid {
    /// Allocates the corners of every voxel touching geometry on levels of
    /// resolution 2, 4, 8, ... and registers their features in `store`.
    pub fn build<T: Real>(
        triangles: &[Triangle],
        bounds: &Aabb,
        levels: usize,
        features: usize,
        store: &mut ParamStore<T>,
        seed: u64,
    ) -> Result<FeatureGrid, FieldError> {
        if levels == 0 || levels > 12 {
            return Err(FieldError::Config(format!("grid level count must be in 1..=12, got {levels}")));
        }
        if features == 0 {
            return Err(FieldError::Config("grid feature length must be positive".into()));
        }
        let mut out = Vec::with_capacity(levels);
        for i in 0..levels {
            let resolution = 2usize << i;
            let voxels = occupied_voxels(triangles, bounds, resolution);
            let keys = corner_keys(&voxels, resolution);
            let param = store.add(format!("grid.{i}"), init_features(keys.len(), features, seed, i));
            out.push(GridLevel { resolution, keys, occupied_voxels: voxels.len(), param });
        }
        Ok(FeatureGrid { features, levels: out })
    }

    /// Copies features of vertices present in both grids from `old` into
    /// `self`; other vertices keep their fresh initialization.
    pub fn transfer_from<T: Real>(
        &self,
        store: &mut ParamStore<T>,
        old: &FeatureGrid,
        old_store: &ParamStore<T>,
    ) -> Result<usize, FieldError> {
        if old.features != self.features || old.levels.len() != self.levels.len() {
            return Err(FieldError::Incompatible(format!(
                "grid layout {}x{} does not match {}x{}",
                old.levels.len(),
                old.features,
                self.levels.len(),
                self.features
            )));
        }
        let mut copied = 0;
        for (new, prev) in self.levels.iter().zip(&old.levels) {
            if new.resolution != prev.resolution {
                return Err(FieldError::Incompatible(format!(
                    "level resolution {} does not match {}",
                    prev.resolution, new.resolution
                )));
            }
            let src = old_store.value(prev.param).clone();
            let dst = store.value_mut(new.param);
            for (row, key) in new.keys.iter().enumerate() {
                if let Some(j) = prev.find(*key) {
                    dst.data_mut()[row * self.features..(row + 1) * self.features].copy_from_slice(src.row(j));
                    copied += 1;
                }
            }
        }
        Ok(copied)
    }

    /// Level-averaged interpolated features at points in the unit cube.
    pub fn query<T: Real>(&self, graph: &mut Graph<T>, store: &ParamStore<T>, points: &[[f64; 3]]) -> Var {
        let mut acc: Option<Var> = None;
        for level in &self.levels {
            let v = trilinear_gather(graph, store, level, points);
            acc = Some(match acc {
                None => v,
                Some(a) => graph.add(a, v).expect("levels share the feature length"),
            });
        }
        let sum = acc.expect("grid has at least one level");
        graph.scale(sum, T::of(1.0 / self.levels.len() as f64))
    }

    pub fn stats(&self) -> GridStats {
        let levels = self
            .levels
            .iter()
            .map(|l| LevelStats {
                resolution: l.resolution,
                occupied_voxels: l.occupied_voxels,
                stored_vertices: l.keys.len(),
                density_percent: l.occupied_voxels as f64 / (l.resolution as f64).powi(3) * 100.0,
                storage_bytes: l.keys.len() * self.features * 4,
            })
            .collect();
        GridStats { features: self.features, levels }
    }
}
