mod common;

use std::collections::BTreeSet;

use nrad::diff::{Graph, ParamStore};
use nrad::field::{occupied_voxels, voxel_hash, Encoder, FeatureGrid, FieldConfig, RadianceField};
use nrad::geometry::{Aabb, Triangle, Vec3};
use nrad::rng::stream;

/// Clips the triangle against the box with Sutherland-Hodgman; a non-empty
/// remainder means overlap. `slack` grows the box.
fn clip_overlaps(tri: &Triangle, lo: Vec3, hi: Vec3, slack: f64) -> bool {
    let mut poly: Vec<Vec3> = tri.v.to_vec();
    for axis in 0..3 {
        for (bound, keep_below) in [(lo[axis] - slack, false), (hi[axis] + slack, true)] {
            let inside = |p: &Vec3| if keep_below { p[axis] <= bound } else { p[axis] >= bound };
            let mut out = Vec::new();
            for i in 0..poly.len() {
                let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
                match (inside(&a), inside(&b)) {
                    (true, true) => out.push(b),
                    (true, false) | (false, true) => {
                        let t = (bound - a[axis]) / (b[axis] - a[axis]);
                        let x = a + (b - a) * t;
                        if inside(&b) {
                            out.push(x);
                            out.push(b);
                        } else {
                            out.push(x);
                        }
                    }
                    (false, false) => {}
                }
            }
            poly = out;
            if poly.is_empty() {
                return false;
            }
        }
    }
    true
}

fn brute_occupancy(tris: &[Triangle], bounds: &Aabb, res: usize, slack: f64) -> BTreeSet<[u32; 3]> {
    let cell = bounds.extent() / res as f64;
    let mut out = BTreeSet::new();
    for k in 0..res {
        for j in 0..res {
            for i in 0..res {
                let lo = bounds.min + cell * Vec3::new(i as f64, j as f64, k as f64);
                if tris.iter().any(|t| clip_overlaps(t, lo, lo + cell, slack)) {
                    out.insert([i as u32, j as u32, k as u32]);
                }
            }
        }
    }
    out
}

#[test]
fn closed_cube_shell_occupies_the_outer_layer() {
    let loaded = common::load("furnace.toml");
    let bounds = loaded.scene.field_bounds();
    for res in [2usize, 4, 8, 16] {
        let n = occupied_voxels(&loaded.scene.triangles, &bounds, res).len();
        let inner = res.saturating_sub(2);
        assert_eq!(n, res.pow(3) - inner.pow(3), "resolution {res}");
    }
}

#[test]
fn occupancy_matches_polygon_clipping_recount() {
    let loaded = common::load("cornell.toml");
    let tris = &loaded.scene.triangles;
    let bounds = loaded.scene.field_bounds();
    for res in [4usize, 8, 16] {
        let got: BTreeSet<[u32; 3]> = occupied_voxels(tris, &bounds, res).into_iter().collect();
        let tight = brute_occupancy(tris, &bounds, res, 0.0);
        let loose = brute_occupancy(tris, &bounds, res, 1e-5 * bounds.diagonal());
        // Touching within round-off may go either way; everything else must agree.
        assert!(tight.is_subset(&got), "resolution {res}: missed {:?}", tight.difference(&got).next());
        assert!(got.is_subset(&loose), "resolution {res}: spurious {:?}", got.difference(&loose).next());
    }
}

#[test]
fn density_falls_as_resolution_doubles() {
    for name in ["furnace.toml", "cornell.toml"] {
        let loaded = common::load(name);
        let mut store = ParamStore::<f32>::new();
        let grid = FeatureGrid::build(&loaded.scene.triangles, &loaded.scene.field_bounds(), 5, 16, &mut store, 0).unwrap();
        let stats = grid.stats();
        for w in stats.levels.windows(2) {
            assert!(w[1].density_percent < w[0].density_percent, "{name}: {w:?}");
        }
        for l in &stats.levels {
            assert_eq!(l.storage_bytes, l.stored_vertices * 16 * 4);
            let total = (l.resolution as f64).powi(3);
            assert!((l.density_percent - 100.0 * l.occupied_voxels as f64 / total).abs() < 1e-9);
        }
        let numel: usize = stats.levels.iter().map(|l| l.stored_vertices * 16).sum();
        assert_eq!(numel, store.numel());
    }
}

#[test]
fn voxel_hash_rejects_out_of_range_coordinates() {
    assert_eq!(voxel_hash([1, 2, 3], 5).unwrap(), 1 + 5 * (2 + 5 * 3));
    assert!(voxel_hash([5, 0, 0], 5).is_err());
    assert!(voxel_hash([0, -1, 0], 5).is_err());
}

#[test]
fn grid_encoding_is_continuous_across_voxel_faces() {
    let loaded = common::load("cornell.toml");
    let mut store = ParamStore::<f64>::new();
    let bounds = loaded.scene.field_bounds();
    let grid = FeatureGrid::build(&loaded.scene.triangles, &bounds, 4, 4, &mut store, 3).unwrap();
    // Points on the floor, stepping across the face x = 0.5 of every level.
    let y = bounds.normalize(Vec3::new(0.0, 0.0, 0.0)).y;
    let d = 1e-7;
    let pts = [[0.5 - d, y, 0.3], [0.5 + d, y, 0.3], [0.5, y, 0.3]];
    let mut g = Graph::new();
    let v = grid.query(&mut g, &store, &pts);
    let t = g.value(v);
    for c in 0..4 {
        assert!((t.get(0, c) - t.get(1, c)).abs() < 1e-6);
        assert!((t.get(0, c) - t.get(2, c)).abs() < 1e-6);
    }
    assert_eq!(g.missing_corners(), 0);
}

#[test]
fn network_output_is_finite_on_surface_samples() {
    let loaded = common::load("cornell.toml");
    let scene = &loaded.scene;
    let configs = [
        FieldConfig::default(),
        FieldConfig { encoder: Encoder::PositionalEncoding { bands: 6 }, ..FieldConfig::default() },
        FieldConfig { encoder: Encoder::None, local_props: false, ..FieldConfig::default() },
    ];
    let mut r = stream(8, 0, 0);
    let samples: Vec<_> = (0..256).map(|_| nrad::solver::sample_one(scene, &mut r).unwrap()).collect();
    for config in configs {
        let field = RadianceField::<f32>::new(scene, config, 1).unwrap();
        let props: Vec<_> = samples.iter().map(|s| field.props(scene, &s.hit, s.wo)).collect();
        assert!(props.iter().all(|p| p.in_declared_ranges()));
        let out = field.eval_n(&props).unwrap();
        assert!(out.iter().all(|c| c.is_finite()), "{config:?}");
    }
}

#[test]
fn transfer_keeps_features_of_shared_vertices() {
    let a = common::load("cornell.toml");
    let b = common::load("cornell_moved.toml");
    let config = FieldConfig { encoder: Encoder::Grid { levels: 4, features: 4 }, ..FieldConfig::default() };
    let field = RadianceField::<f32>::new(&a.scene, config, 2).unwrap();
    let (moved, copied) = field.transfer(&b.scene, 9).unwrap();
    assert!(copied > 0);
    assert_eq!(moved.bounds(), field.bounds());
    let (old, new) = (field.grid().unwrap(), moved.grid().unwrap());
    let mut seen = 0;
    for (lo, ln) in old.levels.iter().zip(&new.levels) {
        for (row, key) in ln.keys.iter().enumerate() {
            if let Some(orow) = lo.find(*key) {
                seen += 1;
                assert_eq!(moved.store().value(ln.param).row(row), field.store().value(lo.param).row(orow));
            }
        }
    }
    assert_eq!(seen, copied);
    for (&(w0, _), &(w1, _)) in field.layers().iter().zip(moved.layers()) {
        assert_eq!(field.store().value(w0), moved.store().value(w1));
    }
}

#[test]
fn transfer_rejects_scenes_beyond_the_trained_bounds() {
    let small = common::load("furnace.toml");
    let big = common::load("cornell.toml");
    let field = RadianceField::<f32>::new(&small.scene, FieldConfig::default(), 0).unwrap();
    assert!(field.transfer(&big.scene, 0).is_err());
}
