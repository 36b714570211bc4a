use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{backward_with, cosine_loss_grad, mean_loss_with, LossFn, TrainItem, TrainableParams};
use crate::encoder::Retriever;
use crate::error::{Error, Result};

/// Denominator floor for the relative error, so parameters whose true
/// gradient is zero are judged on absolute error instead.
pub const REL_ERROR_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TensorCheck {
    pub name: String,
    pub probes: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub eps: f64,
    pub max_rel_error: f64,
    pub tensors: Vec<TensorCheck>,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares `backward` against central differences of the mean loss over
/// `items`, on `probe_count` randomly chosen scalars of every trainable tensor
/// (all of them if the tensor is smaller).
pub fn grad_check(
    model: &Retriever,
    items: &[TrainItem],
    probe_count: usize,
    eps: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    grad_check_with(model, items, probe_count, eps, seed, cosine_loss_grad)
}

/// `grad_check` for an arbitrary per-item objective.
pub fn grad_check_with(
    model: &Retriever,
    items: &[TrainItem],
    probe_count: usize,
    eps: f64,
    seed: u64,
    loss_fn: LossFn,
) -> Result<GradCheckReport> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
    }
    let (_, grads) = backward_with(model, items, loss_fn)?;
    let base = TrainableParams::from_model(model);
    let names = base.tensor_names();
    let analytic = grads.tensors();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = model.clone();
    let mut tensors = Vec::with_capacity(names.len());

    for (ti, name) in names.iter().enumerate() {
        let len = analytic[ti].len();
        let picks = rand::seq::index::sample(&mut rng, len, probe_count.min(len));
        let mut worst: f64 = 0.0;
        for j in picks.iter() {
            let mut shifted = base.clone();
            let original = shifted.tensors()[ti][j];
            shifted.tensors_mut()[ti][j] = original + eps;
            shifted.apply_to(&mut probe);
            let plus = mean_loss_with(&probe, items, loss_fn)?;
            shifted.tensors_mut()[ti][j] = original - eps;
            shifted.apply_to(&mut probe);
            let minus = mean_loss_with(&probe, items, loss_fn)?;
            let numeric = (plus - minus) / (2.0 * eps);
            worst = worst.max(relative_error(analytic[ti][j], numeric));
        }
        tensors.push(TensorCheck {
            name: name.clone(),
            probes: picks.len(),
            max_rel_error: worst,
        });
    }
    let max_rel_error = tensors.iter().map(|t| t.max_rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        eps,
        max_rel_error,
        tensors,
    })
}
