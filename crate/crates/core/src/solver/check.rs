//! End-to-end gradient verification of the residual loss on a small
//! double-precision field.

use super::{relative_loss, Normalizer, SolverError, TrainBatch, TrainConfig};
use crate::diff::{grad_check, DiffError, GradCheckOptions, GradCheckReport, Graph, ParamStore, Tensor, Var};
use crate::field::{Encoder, FieldConfig, RadianceField};
use crate::scene::Scene;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResidualCheckOptions {
    /// Surface samples in the frozen batch.
    pub n: usize,
    pub m: usize,
    pub levels: usize,
    pub features: usize,
    pub depth: usize,
    pub width: usize,
    /// Coordinates probed per parameter tensor.
    pub per_param: usize,
    pub seed: u64,
    /// Scale applied to weight gradients in the backward pass (fault injection).
    pub fault: Option<f64>,
}

impl Default for ResidualCheckOptions {
    fn default() -> Self {
        ResidualCheckOptions { n: 8, m: 4, levels: 2, features: 2, depth: 2, width: 8, per_param: 24, seed: 0, fault: None }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResidualCheck {
    /// Trainable scalars in the field.
    pub params: usize,
    /// Recorded gradients against finite differences of the unnormalized
    /// loss. Differencing the normalized loss itself would include the
    /// normalizer's dependence on the parameters, which training excludes.
    pub end_to_end: GradCheckReport,
    /// Recorded gradients against finite differences of the loss with its
    /// normalizer replaced by a constant computed at the unperturbed parameters.
    pub frozen_normalizer: GradCheckReport,
}

impl ResidualCheck {
    pub fn max_rel_err(&self) -> f64 {
        self.end_to_end.max_rel_err.max(self.frozen_normalizer.max_rel_err)
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.end_to_end.passes(tolerance) && self.frozen_normalizer.passes(tolerance)
    }
}

fn diff_err(e: SolverError) -> DiffError {
    match e {
        SolverError::Diff(d) => d,
        other => DiffError::Invalid(other.to_string()),
    }
}

/// Builds a tiny grid-encoded field on `scene`, draws one batch with a fixed
/// random stream and checks the gradients of its residual loss against
/// central differences, both without a normalizer and with the stop-gradient
/// mean normalizer.
pub fn residual_grad_check(scene: &Scene, opts: &ResidualCheckOptions) -> Result<ResidualCheck, SolverError> {
    let field_config = FieldConfig {
        encoder: Encoder::Grid { levels: opts.levels, features: opts.features },
        depth: opts.depth,
        width: opts.width,
        local_props: true,
    };
    let field = RadianceField::<f64>::new(scene, field_config, opts.seed)?;
    let config = TrainConfig { n: opts.n, m: opts.m, steps: 1, seed: opts.seed, normalizer: Normalizer::Mean, ..TrainConfig::default() };
    let batch = TrainBatch::gather(scene, field.bounds(), &config, opts.seed, 0)?;
    let gc = GradCheckOptions { per_param: opts.per_param, seed: opts.seed, ..GradCheckOptions::default() };

    let record_with = |s: &ParamStore<f64>, config: &TrainConfig| -> Result<(Graph<f64>, super::LossNodes), DiffError> {
        let mut g = Graph::new();
        if let Some(f) = opts.fault {
            g.inject_fault(f);
        }
        let nodes = batch.record_loss(&mut g, &field, s, config).map_err(diff_err)?;
        Ok((g, nodes))
    };
    let record = |s: &ParamStore<f64>| record_with(s, &config);

    let plain = TrainConfig { normalizer: Normalizer::None, ..config };
    let mut store = field.store().clone();
    let end_to_end = grad_check(&mut store, |s| record_with(s, &plain).map(|(g, n)| (g, n.loss)), &gc)?;

    // Normalizer (N + 2E + T) / 2 at the unperturbed parameters.
    let (g0, n0) = record(field.store()).map_err(SolverError::from)?;
    let (lhs0, t0) = (g0.value(n0.lhs), g0.value(n0.scatter));
    let rows = lhs0.rows();
    let denom: Vec<f64> = (0..rows * 3)
        .map(|i| {
            let e = batch.emission[i / 3].0[i % 3];
            let m = 0.5 * (lhs0.data()[i] + 2.0 * e + t0.data()[i]);
            m.max(0.0) + config.eps
        })
        .collect();
    let denom = Tensor::from_vec(rows, 3, denom);
    let pdfs: Vec<f64> = batch.samples.iter().map(|s| s.pdf()).collect();

    // Value of the frozen loss, gradient of the real one.
    let frozen = |s: &ParamStore<f64>| -> Result<(Graph<f64>, Var), DiffError> {
        let (mut g, nodes) = record(s)?;
        let r = g.sub(nodes.lhs, nodes.scatter)?;
        let d = g.constant(denom.clone());
        let scaled = g.div(r, d)?;
        let fixed = relative_loss(&mut g, scaled, scaled, scaled, &pdfs, config.eps, Normalizer::None).map_err(diff_err)?;
        let fixed = g.stop_gradient(fixed);
        let real_sg = g.stop_gradient(nodes.loss);
        let delta = g.sub(nodes.loss, real_sg)?;
        let out = g.add(fixed, delta)?;
        Ok((g, out))
    };
    let mut store = field.store().clone();
    let frozen_normalizer = grad_check(&mut store, frozen, &gc)?;

    Ok(ResidualCheck { params: field.store().numel(), end_to_end, frozen_normalizer })
}
