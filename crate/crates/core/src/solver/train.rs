use std::time::Instant;

use log::{debug, warn};
use rayon::prelude::*;

use super::scatter::{scatter_sample, ScatterBatch, ScatterSample};
use super::{relative_loss, sample_one, BatchSample, SolverError, TrainConfig, TrainMode};
use crate::color::Rgb;
use crate::diff::{Adam, AdamConfig, Graph, ParamStore, Real, Tensor, Var};
use crate::field::RadianceField;
use crate::geometry::Aabb;
use crate::materials::LocalProps;
use crate::render::scattered_radiance;
use crate::rng;
use crate::scene::Scene;

/// One row of the training log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    /// One-based index of the update.
    pub step: usize,
    /// Loss of the batch the update was computed from.
    pub loss: f64,
    pub lr: f64,
    /// Incident samples consumed so far, `N * M * step`.
    pub samples: u64,
    pub wall_ms: u64,
}

/// Everything a training step needs from the scene, drawn before touching
/// the network. Sample `j` of batch `key` uses its own random stream, so the
/// batch is independent of how the work is scheduled.
#[derive(Clone, Debug)]
pub struct TrainBatch {
    pub samples: Vec<BatchSample>,
    pub lhs: Vec<LocalProps>,
    pub emission: Vec<Rgb>,
    pub scatter: ScatterBatch,
    /// Path-traced stand-ins for `T` in noisy-target mode.
    pub targets: Option<Vec<Rgb>>,
}

/// Graph nodes of interest from [`TrainBatch::record_loss`].
#[derive(Clone, Copy, Debug)]
pub struct LossNodes {
    pub loss: Var,
    /// `N` at the batch samples.
    pub lhs: Var,
    /// Scattered radiance `T`.
    pub scatter: Var,
}

enum PointData {
    Scatter(Vec<ScatterSample>),
    Target(Rgb),
}

impl TrainBatch {
    pub fn gather(scene: &Scene, bounds: &Aabb, config: &TrainConfig, seed: u64, key: u64) -> Result<Self, SolverError> {
        config.validate()?;
        let per_point: Vec<(BatchSample, LocalProps, Rgb, PointData)> = (0..config.n)
            .into_par_iter()
            .map(|j| {
                let mut r = rng::stream(seed, key, j as u64);
                let s = sample_one(scene, &mut r)?;
                let props = LocalProps::new(&s.hit, s.wo, bounds, scene.material(&s.hit));
                let e = scene.emitted(&s.hit, s.wo);
                let data = match config.mode {
                    TrainMode::SelfTrain => PointData::Scatter(
                        (0..config.m)
                            .map(|_| scatter_sample(scene, bounds, &s.hit, s.wo, &mut r, config.emitter_sampling))
                            .collect(),
                    ),
                    TrainMode::NoisyTarget => {
                        let mut t = Rgb::BLACK;
                        for _ in 0..config.m {
                            t += scattered_radiance(scene, &s.hit, s.wo, &mut r, config.target_depth);
                        }
                        PointData::Target(t * (1.0 / config.m as f64))
                    }
                };
                Ok((s, props, e, data))
            })
            .collect::<Result<_, SolverError>>()?;

        let mut batch = TrainBatch {
            samples: Vec::with_capacity(config.n),
            lhs: Vec::with_capacity(config.n),
            emission: Vec::with_capacity(config.n),
            scatter: ScatterBatch::new(config.m),
            targets: None,
        };
        let mut targets = Vec::new();
        for (s, props, e, data) in per_point {
            batch.samples.push(s);
            batch.lhs.push(props);
            batch.emission.push(e);
            match data {
                PointData::Scatter(samples) => batch.scatter.push_point(samples),
                PointData::Target(t) => targets.push(t),
            }
        }
        if config.mode == TrainMode::NoisyTarget {
            batch.targets = Some(targets);
        }
        Ok(batch)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Records the relative residual loss with network parameters from `store`.
    pub fn record_loss<T: Real>(
        &self,
        graph: &mut Graph<T>,
        field: &RadianceField<T>,
        store: &ParamStore<T>,
        config: &TrainConfig,
    ) -> Result<LossNodes, SolverError> {
        let n = self.len();
        let rgb_rows = |v: &[Rgb]| Tensor::from_vec(v.len(), 3, v.iter().flat_map(|c| c.0.map(T::of)).collect());
        let (lhs, t) = match &self.targets {
            Some(targets) => {
                let lhs = field.forward_n_with(store, graph, &self.lhs)?;
                (lhs, graph.constant(rgb_rows(targets)))
            }
            None => {
                let mut props = Vec::with_capacity(n + self.scatter.props.len());
                props.extend_from_slice(&self.lhs);
                props.extend_from_slice(&self.scatter.props);
                let y = field.forward_n_with(store, graph, &props)?;
                let lhs = graph.slice_rows(y, 0, n)?;
                let q = graph.slice_rows(y, n, self.scatter.props.len())?;
                (lhs, self.scatter.record(graph, q)?)
            }
        };
        let e = graph.constant(rgb_rows(&self.emission));
        let lhs_full = graph.add(lhs, e)?;
        let rhs_full = graph.add(e, t)?;
        let residual = graph.sub(lhs, t)?;
        let pdfs: Vec<f64> = self.samples.iter().map(BatchSample::pdf).collect();
        let loss = relative_loss(graph, residual, lhs_full, rhs_full, &pdfs, config.eps, config.normalizer)?;
        Ok(LossNodes { loss, lhs, scatter: t })
    }
}

fn non_finite_rows<T: Real>(graph: &Graph<T>, nodes: &LossNodes) -> Vec<usize> {
    let (a, b) = (graph.value(nodes.lhs), graph.value(nodes.scatter));
    (0..a.rows())
        .filter(|&r| a.row(r).iter().chain(b.row(r)).any(|v| !v.is_finite()))
        .collect()
}

/// Runs the residual-minimization loop over a field it owns.
pub struct Trainer<'a, T> {
    scene: &'a Scene,
    field: RadianceField<T>,
    adam: Adam<T>,
    config: TrainConfig,
    step: usize,
    started: Instant,
    missing_corners: u64,
}

impl<'a, T: Real> Trainer<'a, T> {
    pub fn new(scene: &'a Scene, field: RadianceField<T>, config: TrainConfig) -> Result<Self, SolverError> {
        config.validate()?;
        if scene.train_table.is_none() {
            return Err(SolverError::NoTrainableSurface);
        }
        let adam = Adam::new(AdamConfig { lr: config.lr, ..AdamConfig::default() });
        Ok(Trainer { scene, field, adam, config, step: 0, started: Instant::now(), missing_corners: 0 })
    }

    /// Continues a run from `step` completed updates. Optimizer moments start fresh.
    pub fn resume_at(mut self, step: usize) -> Self {
        self.step = step;
        self
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn field(&self) -> &RadianceField<T> {
        &self.field
    }

    pub fn into_field(self) -> RadianceField<T> {
        self.field
    }

    /// Completed updates.
    pub fn steps_done(&self) -> usize {
        self.step
    }

    pub fn is_finished(&self) -> bool {
        self.step >= self.config.steps
    }

    /// Grid interpolation corners that were absent from sparse storage.
    pub fn missing_corners(&self) -> u64 {
        self.missing_corners
    }

    /// One update: sample, record the loss, back-propagate, Adam step.
    pub fn step(&mut self) -> Result<StepRecord, SolverError> {
        let lr = self.config.lr_at(self.step);
        self.adam.set_lr(lr);
        let t0 = Instant::now();
        let batch = TrainBatch::gather(self.scene, self.field.bounds(), &self.config, self.config.seed, self.step as u64)?;
        let t1 = Instant::now();
        let mut graph = Graph::new();
        let nodes = batch.record_loss(&mut graph, &self.field, self.field.store(), &self.config)?;
        let t2 = Instant::now();
        let loss = graph.value(nodes.loss).data()[0].as_f64();
        if !loss.is_finite() {
            return Err(SolverError::NonFinite { step: self.step, samples: non_finite_rows(&graph, &nodes) });
        }
        if graph.missing_corners() > 0 && self.missing_corners == 0 {
            warn!("grid queries touched {} unallocated vertices at step {}", graph.missing_corners(), self.step);
        }
        self.missing_corners += graph.missing_corners();
        graph.backward(nodes.loss, self.field.store_mut())?;
        let t3 = Instant::now();
        self.adam.step(self.field.store_mut());
        debug!(
            "step {}: sample {:?} forward {:?} backward {:?} adam {:?}",
            self.step,
            t1 - t0,
            t2 - t1,
            t3 - t2,
            t3.elapsed()
        );
        self.step += 1;
        Ok(StepRecord {
            step: self.step,
            loss,
            lr,
            samples: (self.config.n * self.config.m * self.step) as u64,
            wall_ms: self.started.elapsed().as_millis() as u64,
        })
    }

    /// Steps until the configured count is reached.
    pub fn run(&mut self) -> Result<Vec<StepRecord>, SolverError> {
        let mut log = Vec::with_capacity(self.config.steps.saturating_sub(self.step));
        while !self.is_finished() {
            log.push(self.step()?);
        }
        Ok(log)
    }
}

/// Mean loss of `field` over `batches` fresh batches drawn under `seed`,
/// without updating anything.
pub fn evaluate_loss<T: Real>(
    scene: &Scene,
    field: &RadianceField<T>,
    config: &TrainConfig,
    seed: u64,
    batches: usize,
) -> Result<Vec<f64>, SolverError> {
    (0..batches as u64)
        .map(|b| {
            let batch = TrainBatch::gather(scene, field.bounds(), config, seed, b)?;
            let mut graph = Graph::new();
            let nodes = batch.record_loss(&mut graph, field, field.store(), config)?;
            Ok(graph.value(nodes.loss).data()[0].as_f64())
        })
        .collect()
}

/// Trainer for `scene` starting from a field trained on a related scene:
/// the sparse grid is rebuilt, shared vertices keep their features, and the
/// optimizer starts fresh. Returns the trainer and the number of copied vertices.
pub fn finetune<'a, T: Real>(
    scene: &'a Scene,
    field: &RadianceField<T>,
    config: TrainConfig,
) -> Result<(Trainer<'a, T>, usize), SolverError> {
    let (next, copied) = field.transfer(scene, config.seed)?;
    Ok((Trainer::new(scene, next, config)?, copied))
}
