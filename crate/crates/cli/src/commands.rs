use std::path::{Path, PathBuf};

use log::info;

use nrad::diff::{ParamStore, Real};
use nrad::field::{Encoder, FeatureGrid, FieldConfig, RadianceField};
use nrad::io::{load_checkpoint, load_scene, read_pfm, save_checkpoint, write_png_preview, write_pfm, CheckpointState, LoadedScene, LogWriter};
use nrad::render::{self, mape, mse, Camera, Film, RenderJob, RenderMode};
use nrad::solver::{self, residual_grad_check, Normalizer, ResidualCheckOptions, SolverError, StepRecord, TrainConfig, TrainMode, Trainer};

use crate::args::*;
use crate::Failure;

pub fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Train(a) => train(a),
        Command::Finetune(a) => finetune(a),
        Command::Render(a) => render_cmd(a),
        Command::Pathtrace(a) => pathtrace(a),
        Command::Compare(a) => compare(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::GridStats(a) => grid_stats(a),
    }
}

fn scene(path: &Path) -> Result<LoadedScene, Failure> {
    load_scene(path).map_err(Failure::config)
}

fn solver_failure(e: SolverError) -> Failure {
    match e {
        SolverError::Config(_) | SolverError::NoTrainableSurface => Failure::config(e),
        SolverError::Field(nrad::field::FieldError::Config(_)) => Failure::config(e),
        SolverError::Field(nrad::field::FieldError::Incompatible(_)) => Failure::config(e),
        _ => Failure::runtime(e),
    }
}

fn with_size(mut camera: Camera, width: Option<usize>, height: Option<usize>) -> Result<Camera, Failure> {
    camera.width = width.unwrap_or(camera.width);
    camera.height = height.unwrap_or(camera.height);
    camera.validate().map_err(Failure::config)?;
    Ok(camera)
}

fn train_config(o: &OptimArgs, loaded: &LoadedScene, fallback_seed: Option<u64>) -> TrainConfig {
    let t = loaded.doc.training.clone().unwrap_or_default();
    let d = TrainConfig::default();
    TrainConfig {
        n: o.n.or(t.n).unwrap_or(d.n),
        m: o.m.or(t.m).unwrap_or(d.m),
        steps: o.steps.or(t.steps).unwrap_or(d.steps),
        lr: o.lr.or(t.lr).unwrap_or(d.lr),
        seed: o.seed.or(t.seed).or(fallback_seed).unwrap_or(d.seed),
        eps: o.eps,
        mode: match o.mode {
            ModeArg::SelfTrain => TrainMode::SelfTrain,
            ModeArg::Noisy => TrainMode::NoisyTarget,
        },
        normalizer: match o.normalizer {
            NormalizerArg::Mean => Normalizer::Mean,
            NormalizerArg::Lhs => Normalizer::LhsOnly,
            NormalizerArg::Rhs => Normalizer::RhsOnly,
            NormalizerArg::None => Normalizer::None,
        },
        emitter_sampling: !o.no_emitter_sampling,
        ..d
    }
}

fn print_train_config(scene: &Path, config: &TrainConfig, field: &FieldConfig, precision: PrecisionArg) {
    println!("scene: {}", scene.display());
    println!("config: {config:?}");
    println!("field: {field:?}");
    println!("precision: {precision:?}");
    println!("seed: {}", config.seed);
}

/// Shared training loop for `train` and `finetune`: logs every step, writes
/// periodic and final checkpoints and an LHS preview.
fn drive<T: Real>(mut trainer: Trainer<'_, T>, loaded: &LoadedScene, out: &Path, o: &OptimArgs) -> Result<(), Failure> {
    std::fs::create_dir_all(out).map_err(|e| Failure::runtime(format!("{}: {e}", out.display())))?;
    let steps = trainer.config().steps;
    let every = o.checkpoint_every.unwrap_or((steps / 10).max(1));
    if every == 0 {
        return Err(Failure::config("--checkpoint-every must be at least 1"));
    }
    let seed = trainer.config().seed;
    let state = |step: usize| CheckpointState { step: step as u64, seed, downcast: T::NAME == "f64" };

    let mut log = LogWriter::create(out.join("train.csv")).map_err(Failure::runtime)?;
    let mut first: Option<StepRecord> = None;
    let mut last: Option<StepRecord> = None;
    while !trainer.is_finished() {
        let r = trainer.step().map_err(solver_failure)?;
        log.write(&r).map_err(Failure::runtime)?;
        first.get_or_insert(r);
        last = Some(r);
        if r.step % every == 0 {
            log.flush().map_err(Failure::runtime)?;
            let path = out.join(format!("checkpoint-{:06}.nrad", r.step));
            save_checkpoint(trainer.field(), &state(r.step), &path).map_err(Failure::runtime)?;
            println!("step {}/{} loss {:.6e} lr {:.3e} ({} ms)", r.step, steps, r.loss, r.lr, r.wall_ms);
        }
    }
    log.flush().map_err(Failure::runtime)?;
    if trainer.missing_corners() > 0 {
        info!("{} grid corner lookups fell outside sparse storage", trainer.missing_corners());
    }
    let done = trainer.steps_done();
    let field = trainer.into_field();
    save_checkpoint(&field, &state(done), out.join("final.nrad")).map_err(Failure::runtime)?;

    let film = render::render_lhs(&loaded.scene, &field, &loaded.camera, o.preview_spp.max(1), seed).map_err(Failure::runtime)?;
    write_pfm(&film, out.join("lhs.pfm")).map_err(Failure::runtime)?;
    write_png_preview(&film, out.join("lhs.png"), 0.0).map_err(Failure::runtime)?;

    if let (Some(f), Some(l)) = (first, last) {
        println!("initial loss: {:.6e}", f.loss);
        println!("final loss: {:.6e}", l.loss);
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn train(a: TrainArgs) -> Result<(), Failure> {
    let loaded = scene(&a.scene)?;
    let t = loaded.doc.training.clone().unwrap_or_default();
    let d = FieldConfig::default();
    let encoder = match a.encoder {
        EncoderArg::Grid => Encoder::Grid { levels: a.levels.or(t.levels).unwrap_or(5), features: a.features },
        EncoderArg::Posenc => Encoder::PositionalEncoding { bands: a.bands },
        EncoderArg::None => Encoder::None,
    };
    let field_config = FieldConfig {
        encoder,
        depth: a.depth.or(t.depth).unwrap_or(d.depth),
        width: a.width.or(t.width).unwrap_or(d.width),
        local_props: !a.no_local_props,
    };
    let config = train_config(&a.optim, &loaded, None);
    print_train_config(&a.scene, &config, &field_config, a.optim.precision);
    field_config.validate().map_err(Failure::config)?;
    config.validate().map_err(Failure::config)?;

    fn go<T: Real>(loaded: &LoadedScene, fc: FieldConfig, config: TrainConfig, a: &TrainArgs) -> Result<(), Failure> {
        let field = RadianceField::<T>::new(&loaded.scene, fc, config.seed).map_err(Failure::config)?;
        println!("parameters: {}", field.store().numel());
        let trainer = Trainer::new(&loaded.scene, field, config).map_err(solver_failure)?;
        drive(trainer, loaded, &a.out, &a.optim)
    }
    match a.optim.precision {
        PrecisionArg::F32 => go::<f32>(&loaded, field_config, config, &a),
        PrecisionArg::F64 => go::<f64>(&loaded, field_config, config, &a),
    }
}

fn finetune(a: FinetuneArgs) -> Result<(), Failure> {
    let loaded = scene(&a.scene)?;

    fn go<T: Real>(loaded: &LoadedScene, a: &FinetuneArgs) -> Result<(), Failure> {
        let (old, state) = load_checkpoint::<T>(&a.checkpoint).map_err(Failure::config)?;
        let config = train_config(&a.optim, loaded, Some(state.seed));
        print_train_config(&a.scene, &config, old.config(), a.optim.precision);
        println!("checkpoint: {} (step {})", a.checkpoint.display(), state.step);
        config.validate().map_err(Failure::config)?;
        let (trainer, copied) = solver::finetune(&loaded.scene, &old, config).map_err(solver_failure)?;
        println!("transferred grid vertices: {copied}");
        drive(trainer, loaded, &a.out, &a.optim)
    }
    match a.optim.precision {
        PrecisionArg::F32 => go::<f32>(&loaded, &a),
        PrecisionArg::F64 => go::<f64>(&loaded, &a),
    }
}

fn png_path(pfm: &Path) -> PathBuf {
    pfm.with_extension("png")
}

fn write_image(film: &Film, out: &Path, exposure: f64) -> Result<(), Failure> {
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Failure::runtime(format!("{}: {e}", dir.display())))?;
    }
    write_pfm(film, out).map_err(Failure::runtime)?;
    write_png_preview(film, png_path(out), exposure).map_err(Failure::runtime)?;
    if !film.is_finite() {
        log::warn!("image contains non-finite pixels");
    }
    Ok(())
}

fn render_cmd(a: RenderArgs) -> Result<(), Failure> {
    let loaded = scene(&a.scene)?;
    let camera = with_size(loaded.camera, a.width, a.height)?;
    let (field, state) = load_checkpoint::<f32>(&a.checkpoint).map_err(Failure::config)?;
    let job = RenderJob {
        mode: match a.mode {
            RenderModeArg::Lhs => RenderMode::Lhs,
            RenderModeArg::Rhs => RenderMode::Rhs,
            RenderModeArg::Residual => RenderMode::Residual,
        },
        spp: a.spp,
        m: a.m.unwrap_or(1),
        seed: a.seed,
        emitter_sampling: !a.no_emitter_sampling,
        ..RenderJob::default()
    };
    println!("scene: {}", a.scene.display());
    println!("checkpoint: {} (step {}, trained with seed {})", a.checkpoint.display(), state.step, state.seed);
    println!("job: {job:?}");
    println!("image: {}x{}", camera.width, camera.height);
    println!("seed: {}", a.seed);
    let film = render::render(&loaded.scene, &field, &camera, &job).map_err(Failure::config)?;
    write_image(&film, &a.out, a.exposure)?;
    println!("mean: {:.6e}", film.mean());
    println!("wrote {}", a.out.display());
    Ok(())
}

fn pathtrace(a: PathtraceArgs) -> Result<(), Failure> {
    let loaded = scene(&a.scene)?;
    let camera = with_size(loaded.camera, a.width, a.height)?;
    println!("scene: {}", a.scene.display());
    println!("spp: {} max_depth: {}", a.spp, a.max_depth);
    println!("image: {}x{}", camera.width, camera.height);
    println!("seed: {}", a.seed);
    let film = render::path_trace(&loaded.scene, &camera, a.spp, a.max_depth, a.seed).map_err(Failure::config)?;
    write_image(&film, &a.out, a.exposure)?;
    println!("mean: {:.6e}", film.mean());
    println!("wrote {}", a.out.display());
    Ok(())
}

fn compare(a: CompareArgs) -> Result<(), Failure> {
    let img = read_pfm(&a.image).map_err(Failure::config)?;
    let reference = read_pfm(&a.reference).map_err(Failure::config)?;
    println!("image: {}", a.image.display());
    println!("reference: {}", a.reference.display());
    let e = mse(&img, &reference).map_err(Failure::config)?;
    let p = mape(&img, &reference).map_err(Failure::config)?;
    println!("mse: {e:.9e}");
    println!("mape: {p:.9e}");
    Ok(())
}

fn gradcheck(a: GradcheckArgs) -> Result<(), Failure> {
    let loaded = scene(&a.scene)?;
    let opts = ResidualCheckOptions {
        per_param: a.params_subsample,
        seed: a.seed,
        fault: a.corrupt_backward.then_some(1.5),
        ..ResidualCheckOptions::default()
    };
    println!("scene: {}", a.scene.display());
    println!("options: {opts:?}");
    println!("tolerance: {:e}", a.tolerance);
    println!("seed: {}", a.seed);
    let check = residual_grad_check(&loaded.scene, &opts).map_err(solver_failure)?;
    println!("parameters: {}", check.params);
    for (name, r) in [("end-to-end", &check.end_to_end), ("frozen-normalizer", &check.frozen_normalizer)] {
        println!("{name}: {} coordinates, max relative error {:.3e}", r.coords_checked, r.max_rel_err);
        if let Some(w) = &r.worst {
            println!("  worst: {}[{}] analytic {:.9e} numeric {:.9e}", w.param, w.index, w.analytic, w.numeric);
        }
    }
    if check.passes(a.tolerance) {
        println!("gradcheck: PASS");
        Ok(())
    } else {
        println!("gradcheck: FAIL");
        Err(Failure::runtime(format!("max relative error {:.3e} exceeds {:e}", check.max_rel_err(), a.tolerance)))
    }
}

fn grid_stats(a: GridStatsArgs) -> Result<(), Failure> {
    let loaded = scene(&a.scene)?;
    println!("scene: {}", a.scene.display());
    println!("levels: {} features: {}", a.levels, a.features);
    let mut store = ParamStore::<f32>::new();
    let bounds = loaded.scene.field_bounds();
    let grid = FeatureGrid::build(&loaded.scene.triangles, &bounds, a.levels, a.features, &mut store, 0).map_err(Failure::config)?;
    let stats = grid.stats();
    println!("{:>10} {:>10} {:>10} {:>9} {:>12}", "resolution", "voxels", "vertices", "density%", "bytes");
    for l in &stats.levels {
        println!(
            "{:>10} {:>10} {:>10} {:>9.3} {:>12}",
            l.resolution, l.occupied_voxels, l.stored_vertices, l.density_percent, l.storage_bytes
        );
    }
    let total: usize = stats.levels.iter().map(|l| l.storage_bytes).sum();
    println!("total bytes: {total}");
    Ok(())
}
