//! Residual minimization: batch sampling, the scattering estimate, the
//! relative residual loss and the training loop.

mod check;
mod scatter;
mod train;

pub use check::{residual_grad_check, ResidualCheck, ResidualCheckOptions};

pub use scatter::{
    estimate_scatter, estimate_scatter_value, follow_mirrors, scatter_sample, ChainEnd, ScatterBatch, ScatterSample,
    MAX_MIRROR_CHAIN,
};
pub use train::{evaluate_loss, finetune, LossNodes, StepRecord, TrainBatch, Trainer};

use rand::Rng;
use thiserror::Error;

use crate::diff::{DiffError, Graph, Real, Tensor, Var};
use crate::field::FieldError;
use crate::geometry::{sample_direction_uniform, sample_surface, SurfaceHit, Vec3};
use crate::scene::Scene;

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("scene has no non-specular surface to train on")]
    NoTrainableSurface,
    #[error("non-finite loss at step {step}; offending samples {samples:?}")]
    NonFinite { step: usize, samples: Vec<usize> },
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Diff(#[from] DiffError),
}

/// Where the scattered radiance `T` in the residual comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainMode {
    /// `T{N + E}` estimated with the field being trained.
    SelfTrain,
    /// `T` replaced by a path-traced estimate held constant.
    NoisyTarget,
}

/// Denominator of the relative residual.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Normalizer {
    /// `(LHS + RHS) / 2`.
    Mean,
    LhsOnly,
    RhsOnly,
    /// Plain squared residual.
    None,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    /// Surface samples per step.
    pub n: usize,
    /// Incident samples per surface sample.
    pub m: usize,
    pub steps: usize,
    pub lr: f64,
    /// Learning-rate factor applied at each third of the run.
    pub decay: f64,
    pub eps: f64,
    pub seed: u64,
    pub mode: TrainMode,
    pub normalizer: Normalizer,
    /// Combine emitter sampling with BSDF sampling for the emission term.
    pub emitter_sampling: bool,
    /// Bounce limit of the path tracer in noisy-target mode.
    pub target_depth: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n: 1024,
            m: 8,
            steps: 5000,
            lr: 5e-4,
            decay: 0.33,
            eps: 0.01,
            seed: 0,
            mode: TrainMode::SelfTrain,
            normalizer: Normalizer::Mean,
            emitter_sampling: true,
            target_depth: 64,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: &str| Err(SolverError::Config(m.into()));
        if self.n == 0 || self.m == 0 || self.steps == 0 {
            return bad("n, m and steps must be at least 1");
        }
        if !(self.eps > 0.0) {
            return bad("eps must be positive");
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return bad("learning rate must be positive");
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return bad("decay must be in (0, 1]");
        }
        if self.target_depth == 0 {
            return bad("target path depth must be at least 1");
        }
        Ok(())
    }

    /// Learning rate for zero-based `step`: `lr * decay^floor(3 step / S)`.
    pub fn lr_at(&self, step: usize) -> f64 {
        let third = (3 * step.min(self.steps.saturating_sub(1))) / self.steps;
        self.lr * self.decay.powi(third as i32)
    }
}

/// A training location and outgoing direction with their densities.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BatchSample {
    pub hit: SurfaceHit,
    pub wo: Vec3,
    pub pdf_position: f64,
    pub pdf_direction: f64,
}

impl BatchSample {
    pub fn pdf(&self) -> f64 {
        self.pdf_position * self.pdf_direction
    }
}

/// One training sample: uniform by area over non-specular surfaces, then a
/// uniform direction over the hemisphere (sphere for two-sided materials).
pub fn sample_one(scene: &Scene, rng: &mut impl Rng) -> Result<BatchSample, SolverError> {
    let table = scene.train_table.as_ref().ok_or(SolverError::NoTrainableSurface)?;
    let (hit, pdf_position) = sample_surface(table, &scene.triangles, scatter::u3(rng));
    let two_sided = scene.material(&hit).two_sided;
    let (wo, pdf_direction) = sample_direction_uniform(hit.shading_normal, two_sided, scatter::u2(rng));
    Ok(BatchSample { hit, wo, pdf_position, pdf_direction })
}

pub fn sample_batch(scene: &Scene, n: usize, rng: &mut impl Rng) -> Result<Vec<BatchSample>, SolverError> {
    if n == 0 {
        return Err(SolverError::Config("batch size must be at least 1".into()));
    }
    (0..n).map(|_| sample_one(scene, rng)).collect()
}

/// Mean over rows and channels of `(r / (sg(m) + eps))^2 / p`.
///
/// `lhs` is `N + E` and `rhs` is `E + T`; the normalizer `m` is built from
/// them, clamped at zero and excluded from differentiation.
pub fn relative_loss<T: Real>(
    graph: &mut Graph<T>,
    residual: Var,
    lhs: Var,
    rhs: Var,
    pdfs: &[f64],
    eps: f64,
    normalizer: Normalizer,
) -> Result<Var, SolverError> {
    if !(eps > 0.0) {
        return Err(SolverError::Config("eps must be positive".into()));
    }
    let rows = graph.value(residual).rows();
    if pdfs.len() != rows {
        return Err(SolverError::Config(format!("{} densities for {rows} residual rows", pdfs.len())));
    }
    let scaled = match normalizer {
        Normalizer::None => residual,
        _ => {
            let m = match normalizer {
                Normalizer::Mean => {
                    let s = graph.add(lhs, rhs)?;
                    graph.scale(s, T::of(0.5))
                }
                Normalizer::LhsOnly => lhs,
                _ => rhs,
            };
            let m = graph.stop_gradient(m);
            let m = graph.relu(m);
            let denom = graph.add_scalar(m, T::of(eps));
            graph.div(residual, denom)?
        }
    };
    let sq = graph.square(scaled);
    let cols = graph.value(residual).cols();
    let inv_p: Vec<T> = pdfs.iter().flat_map(|&p| std::iter::repeat_n(T::of(1.0 / p), cols)).collect();
    let inv_p = graph.constant(Tensor::from_vec(rows, cols, inv_p));
    let weighted = graph.mul(sq, inv_p)?;
    Ok(graph.mean(weighted))
}
