mod common;

use std::path::Path;

use nrad::field::{Encoder, FieldConfig, RadianceField};
use nrad::io::{
    checkpoint_from_bytes, checkpoint_to_bytes, load_checkpoint, load_scene, parse_scene, pfm_from_bytes, pfm_to_bytes,
    read_log, read_pfm, save_checkpoint, write_png_preview, write_pfm, CheckpointState, IoError, LogWriter,
};
use nrad::render::Film;
use nrad::rng::stream;
use nrad::solver::{sample_one, StepRecord};

fn gradient_film(w: usize, h: usize) -> Film {
    Film::from_pixels(w, h, (0..w * h * 3).map(|i| i as f32 * 0.37 - 5.0).collect())
}

#[test]
fn pfm_round_trip_is_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.pfm");
    let mut film = gradient_film(5, 3);
    film.set(4, nrad::Rgb::new(1e-30, f32::MAX as f64, -0.0), 1);
    write_pfm(&film, &path).unwrap();
    let back = read_pfm(&path).unwrap();
    let bits = |f: &Film| f.pixels().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&film), bits(&back));
}

#[test]
fn pfm_rows_are_stored_bottom_first() {
    // 1x2 image, top pixel 1s, bottom pixel 2s.
    let film = Film::from_pixels(1, 2, vec![1.0, 1.0, 1.0, 2.0, 2.0, 2.0]);
    let bytes = pfm_to_bytes(&film);
    let header = b"PF\n1 2\n-1.0\n";
    assert_eq!(&bytes[..header.len()], header);
    assert_eq!(f32::from_le_bytes(bytes[header.len()..header.len() + 4].try_into().unwrap()), 2.0);
}

#[test]
fn big_endian_pfm_is_read() {
    let mut bytes = b"PF\n2 1\n1.0\n".to_vec();
    for v in [0.5f32, 1.0, 1.5, -2.0, 3.25, 4.0] {
        bytes.extend_from_slice(&v.to_be_bytes());
    }
    let film = pfm_from_bytes(&bytes).unwrap();
    assert_eq!(film.dims(), (2, 1));
    assert_eq!(film.pixels(), &[0.5, 1.0, 1.5, -2.0, 3.25, 4.0]);
}

#[test]
fn malformed_pfm_is_rejected() {
    assert!(pfm_from_bytes(b"P6\n1 1\n255\n").is_err());
    assert!(pfm_from_bytes(b"PF\n2 2\n-1.0\n\0\0\0\0").is_err());
    assert!(pfm_from_bytes(b"PF\n1 1\n0\n\0\0\0\0\0\0\0\0\0\0\0\0").is_err());
}

#[test]
fn png_preview_has_image_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.png");
    write_png_preview(&gradient_film(7, 4), &path, 0.0).unwrap();
    let img = image::open(&path).unwrap().to_rgb8();
    assert_eq!(img.dimensions(), (7, 4));
}

fn trained_like_field() -> (nrad::io::LoadedScene, RadianceField<f32>) {
    let loaded = common::load("cornell.toml");
    let config = FieldConfig { encoder: Encoder::Grid { levels: 3, features: 3 }, depth: 3, width: 16, local_props: true };
    let field = RadianceField::<f32>::new(&loaded.scene, config, 12).unwrap();
    (loaded, field)
}

#[test]
fn checkpoint_round_trip_preserves_the_field() {
    let (loaded, field) = trained_like_field();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.nrad");
    let state = CheckpointState { step: 42, seed: 7, downcast: false };
    save_checkpoint(&field, &state, &path).unwrap();
    let (back, s) = load_checkpoint::<f32>(&path).unwrap();
    assert_eq!(s, state);
    assert_eq!(back.config(), field.config());
    assert_eq!(back.bounds(), field.bounds());
    for id in field.store().ids() {
        assert_eq!(field.store().value(id), back.store().value(id));
        assert_eq!(field.store().name(id), back.store().name(id));
    }
    let mut r = stream(0, 0, 0);
    let props: Vec<_> = (0..64)
        .map(|_| {
            let s = sample_one(&loaded.scene, &mut r).unwrap();
            field.props(&loaded.scene, &s.hit, s.wo)
        })
        .collect();
    assert_eq!(field.eval_n(&props).unwrap(), back.eval_n(&props).unwrap());
}

#[test]
fn double_precision_checkpoint_rounds_to_single() {
    let loaded = common::load("furnace.toml");
    let field = RadianceField::<f64>::new(&loaded.scene, FieldConfig::default(), 1).unwrap();
    let bytes = checkpoint_to_bytes(&field, &CheckpointState { step: 1, seed: 1, downcast: true });
    let (back, state) = checkpoint_from_bytes::<f32>(&bytes).unwrap();
    assert!(state.downcast);
    for id in field.store().ids() {
        let want: Vec<f32> = field.store().value(id).data().iter().map(|&v| v as f32).collect();
        assert_eq!(back.store().value(id).data(), &want[..]);
    }
}

#[test]
fn damaged_checkpoints_are_rejected() {
    let (_, field) = trained_like_field();
    let bytes = checkpoint_to_bytes(&field, &CheckpointState::default());
    assert!(checkpoint_from_bytes::<f32>(&bytes[..bytes.len() - 1]).is_err());
    assert!(checkpoint_from_bytes::<f32>(&bytes[..10]).is_err());
    let mut longer = bytes.clone();
    longer.push(0);
    assert!(checkpoint_from_bytes::<f32>(&longer).is_err());
    let mut magic = bytes.clone();
    magic[0] = b'X';
    assert!(checkpoint_from_bytes::<f32>(&magic).is_err());
    let mut version = bytes;
    version[4] = 99;
    assert!(checkpoint_from_bytes::<f32>(&version).is_err());
}

#[test]
fn training_log_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("train.csv");
    let rows = [
        StepRecord { step: 1, loss: 0.1 + 0.2, lr: 5e-4, samples: 8192, wall_ms: 17 },
        StepRecord { step: 2, loss: 1.0 / 3.0, lr: 1.65e-4, samples: 16384, wall_ms: 30 },
    ];
    let mut w = LogWriter::create(&path).unwrap();
    for r in &rows {
        w.write(r).unwrap();
    }
    w.flush().unwrap();
    drop(w);
    assert!(std::fs::read_to_string(&path).unwrap().starts_with("step,loss,lr,samples,wall_ms\n"));
    assert_eq!(read_log(&path).unwrap(), rows);
}

fn scene_error(text: &str) -> String {
    match parse_scene(text, Path::new("bad.toml")) {
        Ok(_) => panic!("accepted invalid scene"),
        Err(e) => e.to_string(),
    }
}

const HEAD: &str = "version = 1\n[camera]\norigin = [0.0, 0.0, 3.0]\nlook_at = [0.0, 0.0, 0.0]\nfov = 40.0\nwidth = 4\nheight = 4\n";
const WHITE: &str = "[[materials]]\nname = \"white\"\ntype = \"lambertian\"\nreflectance = [0.5, 0.5, 0.5]\n";
const TRI: &str = "vertices = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]\ntriangles = [[0, 1, 2]]\n";

#[test]
fn scene_errors_name_the_offending_entry() {
    let e = scene_error(&format!("{HEAD}{WHITE}[[meshes]]\nmaterial = \"foo\"\n{TRI}"));
    assert!(e.contains("meshes[0].material") && e.contains("undefined material 'foo'"), "{e}");

    let e = scene_error(&format!("{HEAD}{WHITE}[[meshes]]\nmaterial = \"white\"\nemitter = \"sun\"\n{TRI}"));
    assert!(e.contains("meshes[0].emitter") && e.contains("'sun'"), "{e}");

    let e = scene_error(&format!("{HEAD}{WHITE}[[meshes]]\nmaterial = \"white\"\ncolour = 3\n{TRI}"));
    assert!(e.contains("colour"), "{e}");

    let e = scene_error(&format!("{}{WHITE}[[meshes]]\nmaterial = \"white\"\n{TRI}", HEAD.replace("version = 1", "version = 2")));
    assert!(e.contains("version"), "{e}");

    let e = scene_error(&format!("{HEAD}[[materials]]\nname = \"g\"\ntype = \"phong\"\nreflectance = [0.5, 0.5, 0.5]\n[[meshes]]\nmaterial = \"g\"\n{TRI}"));
    assert!(e.contains("materials[0]") && e.contains("exponent"), "{e}");

    let e = scene_error(&format!("{HEAD}{WHITE}[[meshes]]\nmaterial = \"white\"\nvertices = [[0.0, 0.0, 0.0]]\ntriangles = [[0, 1, 2]]\n"));
    assert!(e.contains("meshes[0]"), "{e}");
}

#[test]
fn obj_meshes_load_relative_to_the_scene() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("quad.obj"), "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n").unwrap();
    let scene_path = dir.path().join("s.toml");
    std::fs::write(&scene_path, format!("{HEAD}{WHITE}[[meshes]]\nmaterial = \"white\"\nobj = \"quad.obj\"\nscale = [2.0, 2.0, 2.0]\n")).unwrap();
    let loaded = load_scene(&scene_path).unwrap();
    assert_eq!(loaded.scene.triangles.len(), 2);
    assert!((loaded.scene.total_area() - 4.0).abs() < 1e-12);

    std::fs::write(&scene_path, format!("{HEAD}{WHITE}[[meshes]]\nmaterial = \"white\"\nobj = \"missing.obj\"\n")).unwrap();
    assert!(matches!(load_scene(&scene_path), Err(IoError::Invalid { .. }) | Err(IoError::Io { .. })));
}

#[test]
fn bundled_scenes_load() {
    for (name, tris) in [("furnace.toml", 12), ("cornell.toml", 32), ("cornell_moved.toml", 32)] {
        let loaded = common::load(name);
        assert_eq!(loaded.scene.triangles.len(), tris, "{name}");
        assert!(loaded.scene.has_emitters());
    }
}
