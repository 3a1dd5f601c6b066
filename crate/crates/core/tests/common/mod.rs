#![allow(dead_code)]

use std::path::{Path, PathBuf};

use nrad::diff::{Real, Tensor};
use nrad::field::{FieldConfig, RadianceField};
use nrad::io::{load_scene, parse_scene, LoadedScene};
use nrad::Scene;

pub fn scene_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenes").join(name)
}

pub fn load(name: &str) -> LoadedScene {
    load_scene(scene_path(name)).unwrap()
}

pub fn parse(text: &str) -> LoadedScene {
    parse_scene(text, Path::new("inline.toml")).unwrap()
}

/// Field whose network output is `value` everywhere: last layer zeroed, bias set.
pub fn constant_field<T: Real>(scene: &Scene, config: FieldConfig, value: [f64; 3]) -> RadianceField<T> {
    let mut field = RadianceField::<T>::new(scene, config, 0).unwrap();
    let &(w, b) = field.layers().last().unwrap();
    let store = field.store_mut();
    let (rows, cols) = store.value(w).shape();
    store.replace(w, Tensor::zeros(rows, cols));
    store.replace(b, Tensor::from_vec(1, 3, value.map(T::of).to_vec()));
    field
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
