//! Cosine-distillation training of the speech branch against frozen text
//! embeddings.

mod adam;
mod gradcheck;
mod params;

pub use adam::{adam_step, AdamState};
pub use gradcheck::{grad_check, grad_check_with, GradCheckReport, TensorCheck};
pub use params::TrainableParams;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adapter::{downsample, downsample_backward, project, project_backward};
use crate::corpus::Corpus;
use crate::encoder::{pool, Embedding, Retriever};
use crate::error::{Error, Result};

/// Added to both norms in the cosine loss so silent inputs stay finite.
pub const NORM_GUARD: f64 = 1e-12;

const SHUFFLE_STREAM: u64 = 0x5368_7566_666c_6521;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub grad_accum_steps: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 5e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 4,
            grad_accum_steps: 16,
            max_epochs: 20,
            patience: 3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |b: f64| (0.0..1.0).contains(&b);
        if !(self.lr > 0.0) || !unit(self.beta1) || !unit(self.beta2) || !(self.eps > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "need lr > 0, 0 <= beta < 1, eps > 0: {self:?}"
            )));
        }
        if self.batch_size == 0 || self.grad_accum_steps == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::InvalidParameter(
                "batch_size, grad_accum_steps, max_epochs and patience must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// `1 - cos(e_s, e_t)`, with `NORM_GUARD` added to each norm.
pub fn cosine_loss(e_s: &Embedding, e_t: &Embedding) -> f64 {
    cosine_loss_grad(e_s, e_t).0
}

/// Loss and its gradient with respect to `e_s`.
pub fn cosine_loss_grad(e_s: &Embedding, e_t: &Embedding) -> (f64, Embedding) {
    let ns = e_s.dot(e_s).sqrt();
    let nt = e_t.dot(e_t).sqrt();
    let (gs, gt) = (ns + NORM_GUARD, nt + NORM_GUARD);
    let dot = e_s.dot(e_t);
    let cos = dot / (gs * gt);
    let mut d_cos = e_t / (gs * gt);
    if ns > 0.0 {
        d_cos -= &(e_s * (dot / (gs * gs * gt * ns)));
    }
    (1.0 - cos, -d_cos)
}

/// A training pair: log-mel frames of a passage and the frozen text
/// embedding of its transcript.
#[derive(Debug, Clone)]
pub struct TrainItem {
    pub features: Array2<f64>,
    pub target: Embedding,
}

/// Precomputes features and text targets for every passage.
pub fn prepare_items(model: &Retriever, corpus: &Corpus) -> Result<Vec<TrainItem>> {
    corpus
        .passages()
        .par_iter()
        .map(|p| {
            Ok(TrainItem {
                features: model.features(&p.audio.load()?)?,
                target: model.embed_text(&p.transcript)?,
            })
        })
        .collect()
}

fn check_finite(x: &Array2<f64>, stage: &str) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(stage.to_string()))
    }
}

/// Per-item objective on `(e_s, e_t)`: its value and gradient with respect to `e_s`.
pub type LossFn = fn(&Embedding, &Embedding) -> (f64, Embedding);

/// Loss of one item; accumulates its parameter gradients into `grads`.
pub fn item_gradient(model: &Retriever, item: &TrainItem, grads: &mut TrainableParams) -> Result<f64> {
    item_gradient_with(model, item, grads, cosine_loss_grad)
}

fn item_gradient_with(
    model: &Retriever,
    item: &TrainItem,
    grads: &mut TrainableParams,
    loss_fn: LossFn,
) -> Result<f64> {
    let factor = model.adapter.downsample_factor;
    let (enc, enc_inputs) = model.speech.forward_cached(&item.features)?;
    check_finite(&enc, "speech encoder output")?;
    let pooled = downsample(&enc, factor)?;
    let projected = project(&pooled, &model.adapter)?;
    check_finite(&projected, "adapter projection output")?;
    let (out, cache) = model.backbone.forward_cached(&projected)?;
    check_finite(&out, "backbone output")?;
    let e_s = pool(&out)?;

    let (loss, d_e) = loss_fn(&e_s, &item.target);
    let t = out.nrows();
    let d_out = Array2::from_shape_fn(out.raw_dim(), |(_, j)| d_e[j] / t as f64);
    let d_projected = model.backbone.backward_input(&cache, &d_out);
    let d_pooled = project_backward(&pooled, &d_projected, &model.adapter, &mut grads.adapter);
    let d_enc = downsample_backward(&d_pooled, enc.nrows(), factor);
    model.speech.backward(&enc_inputs, d_enc, &mut grads.speech);
    if !loss.is_finite() {
        return Err(Error::NonFinite("loss".into()));
    }
    Ok(loss)
}

/// Summed loss and summed gradients over `items`. Items are processed in
/// parallel and reduced in input order, so the result is deterministic.
fn sum_gradients(model: &Retriever, items: &[&TrainItem]) -> Result<(f64, TrainableParams)> {
    sum_gradients_with(model, items, cosine_loss_grad)
}

fn sum_gradients_with(
    model: &Retriever,
    items: &[&TrainItem],
    loss_fn: LossFn,
) -> Result<(f64, TrainableParams)> {
    let zeros = TrainableParams::from_model(model).zeros_like();
    let per_item: Vec<(f64, TrainableParams)> = items
        .par_iter()
        .map(|item| {
            let mut g = zeros.clone();
            let loss = item_gradient_with(model, item, &mut g, loss_fn)?;
            Ok((loss, g))
        })
        .collect::<Result<_>>()?;
    let mut total = zeros;
    let mut loss = 0.0;
    for (l, g) in &per_item {
        loss += l;
        total.add_assign(g)?;
    }
    Ok((loss, total))
}

/// Mean loss and mean gradients over a batch.
pub fn backward(model: &Retriever, batch: &[TrainItem]) -> Result<(f64, TrainableParams)> {
    backward_with(model, batch, cosine_loss_grad)
}

pub fn backward_with(model: &Retriever, batch: &[TrainItem], loss_fn: LossFn) -> Result<(f64, TrainableParams)> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("training batch"));
    }
    let refs: Vec<&TrainItem> = batch.iter().collect();
    let (loss, mut grads) = sum_gradients_with(model, &refs, loss_fn)?;
    let n = batch.len() as f64;
    grads.scale(1.0 / n);
    Ok((loss / n, grads))
}

pub fn mean_loss(model: &Retriever, items: &[TrainItem]) -> Result<f64> {
    mean_loss_with(model, items, cosine_loss_grad)
}

pub fn mean_loss_with(model: &Retriever, items: &[TrainItem], loss_fn: LossFn) -> Result<f64> {
    if items.is_empty() {
        return Err(Error::EmptyInput("evaluation items"));
    }
    let losses: Vec<f64> = items
        .par_iter()
        .map(|it| Ok(loss_fn(&model.embed_features(&it.features)?, &it.target).0))
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / items.len() as f64)
}

/// Mean `cos(e_s, e_t)` over items.
pub fn mean_cosine(model: &Retriever, items: &[TrainItem]) -> Result<f64> {
    Ok(1.0 - mean_loss(model, items)?)
}

/// Gradient accumulator: sums per-item gradients across micro-batches and
/// hands out their mean over all accumulated items.
#[derive(Debug)]
pub struct GradAccumulator {
    sum: TrainableParams,
    items: usize,
    micro_batches: usize,
}

impl GradAccumulator {
    pub fn new(template: &TrainableParams) -> Self {
        Self {
            sum: template.zeros_like(),
            items: 0,
            micro_batches: 0,
        }
    }

    pub fn micro_batches(&self) -> usize {
        self.micro_batches
    }

    /// Adds one micro-batch; returns its summed loss.
    pub fn accumulate(&mut self, model: &Retriever, micro_batch: &[&TrainItem]) -> Result<f64> {
        let (loss, grads) = sum_gradients(model, micro_batch)?;
        self.sum.add_assign(&grads)?;
        self.items += micro_batch.len();
        self.micro_batches += 1;
        Ok(loss)
    }

    /// Mean gradient over everything accumulated so far; resets the accumulator.
    pub fn take_mean(&mut self) -> Option<TrainableParams> {
        if self.items == 0 {
            return None;
        }
        let zeros = self.sum.zeros_like();
        let mut mean = std::mem::replace(&mut self.sum, zeros);
        mean.scale(1.0 / self.items as f64);
        self.items = 0;
        self.micro_batches = 0;
        Some(mean)
    }
}

/// Applies one Adam step to the model's trainable parameters.
pub fn apply_update(
    model: &mut Retriever,
    grads: &TrainableParams,
    state: &mut AdamState,
    cfg: &TrainConfig,
) -> Result<()> {
    let mut params = TrainableParams::from_model(model);
    adam_step(&mut params.tensors_mut(), &grads.tensors(), state, cfg)?;
    params.apply_to(model);
    Ok(())
}

/// Per-epoch patience on validation loss.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    bad_epochs: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            bad_epochs: 0,
        }
    }

    /// Records `val_loss` for `epoch` (1-based). Returns true if it is a new best.
    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> bool {
        if val_loss < self.best {
            self.best = val_loss;
            self.best_epoch = epoch;
            self.bad_epochs = 0;
            true
        } else {
            self.bad_epochs += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.bad_epochs >= self.patience
    }

    pub fn best(&self) -> (usize, f64) {
        (self.best_epoch, self.best)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub elapsed_s: f64,
}

/// Result of a training run: the model holding the best-validation
/// parameters (rounded to `f32`), plus the per-epoch history.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Retriever,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub history: Vec<EpochLog>,
    pub optimizer_steps: u64,
}

/// Trains `model`'s speech branch on `train`, selecting on `val`.
///
/// Each epoch shuffles the training passages (seeded), walks them in
/// micro-batches of `batch_size`, and takes an Adam step after every
/// `grad_accum_steps` micro-batches with the gradient averaged over all items
/// accumulated. A partial accumulation at the end of an epoch is flushed as a
/// step. Stops after `patience` epochs without validation improvement or at
/// `max_epochs`.
pub fn train(
    model: Retriever,
    train: &Corpus,
    val: &Corpus,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.passages().is_empty() {
        return Err(Error::EmptyInput("training corpus"));
    }
    if val.passages().is_empty() {
        return Err(Error::EmptyInput("validation corpus"));
    }
    let train_items = prepare_items(&model, train)?;
    let val_items = prepare_items(&model, val)?;
    train_on_items(model, &train_items, &val_items, cfg, &mut on_epoch)
}

pub fn train_on_items(
    mut model: Retriever,
    train_items: &[TrainItem],
    val_items: &[TrainItem],
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_items.is_empty() || val_items.is_empty() {
        return Err(Error::EmptyInput("training or validation items"));
    }
    let start = std::time::Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ SHUFFLE_STREAM);
    let mut state = AdamState::new();
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best = TrainableParams::from_model(&model);
    best.round_to_f32();
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..train_items.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut acc = GradAccumulator::new(&TrainableParams::from_model(&model));
        let mut epoch_loss = 0.0;
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let micro: Vec<&TrainItem> = chunk.iter().map(|&i| &train_items[i]).collect();
            let loss = acc.accumulate(&model, &micro).map_err(|e| with_context(e, epoch, step))?;
            epoch_loss += loss;
            if acc.micro_batches() == cfg.grad_accum_steps {
                let grads = acc.take_mean().expect("non-empty accumulation");
                apply_update(&mut model, &grads, &mut state, cfg)?;
            }
        }
        if let Some(grads) = acc.take_mean() {
            apply_update(&mut model, &grads, &mut state, cfg)?;
        }
        if !TrainableParams::from_model(&model).all_finite() {
            return Err(Error::NonFinite(format!("parameters after epoch {epoch}")));
        }
        let train_loss = epoch_loss / train_items.len() as f64;
        let val_loss = mean_loss(&model, val_items)?;
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(Error::NonFinite(format!("loss at epoch {epoch}")));
        }
        let log = EpochLog {
            epoch,
            train_loss,
            val_loss,
            elapsed_s: start.elapsed().as_secs_f64(),
        };
        on_epoch(&log);
        history.push(log);
        if stopper.observe(epoch, val_loss) {
            best = TrainableParams::from_model(&model);
            best.round_to_f32();
        }
        if stopper.should_stop() {
            break;
        }
    }
    let (best_epoch, best_val_loss) = stopper.best();
    best.apply_to(&mut model);
    Ok(TrainOutcome {
        model,
        best_epoch,
        best_val_loss,
        history,
        optimizer_steps: state.t,
    })
}

fn with_context(e: Error, epoch: usize, step: usize) -> Error {
    match e {
        Error::NonFinite(what) => Error::NonFinite(format!("{what} (epoch {epoch}, micro-batch {step})")),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::FeatureConfig;
    use crate::encoder::{ModelConfig, Vocab};
    use ndarray::array;
    use rand::Rng;

    #[test]
    fn cosine_loss_examples() {
        // the norm guard perturbs unit-scale results by ~1e-12
        let a = array![1.0, 2.0, 3.0];
        assert!(cosine_loss(&a, &a).abs() < 1e-11);
        assert!((cosine_loss(&array![1.0, 0.0], &array![0.0, 1.0]) - 1.0).abs() < 1e-11);
        assert!((cosine_loss(&array![1.0, 0.0], &array![-1.0, 0.0]) - 2.0).abs() < 1e-11);
    }

    #[test]
    fn zero_vector_is_finite() {
        let (l, g) = cosine_loss_grad(&array![0.0, 0.0], &array![1.0, 2.0]);
        assert_eq!(l, 1.0);
        assert!(g.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn early_stopping_semantics() {
        let mut s = EarlyStopping::new(3);
        let losses = [0.9, 0.8, 0.81, 0.82, 0.83, 0.5];
        let mut stopped_at = None;
        for (i, &l) in losses.iter().enumerate() {
            s.observe(i + 1, l);
            if s.should_stop() {
                stopped_at = Some(i + 1);
                break;
            }
        }
        assert_eq!(stopped_at, Some(5));
        assert_eq!(s.best(), (2, 0.8));
    }

    fn fixture(config: ModelConfig, n: usize) -> (Retriever, Vec<TrainItem>) {
        let texts = ["alpha beta gamma", "delta alpha", "epsilon zeta eta theta", "beta beta iota", "kappa"];
        let vocab = Vocab::from_texts(texts);
        let model = Retriever::new(vocab, config, FeatureConfig::default(), 11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let items = (0..n)
            .map(|i| TrainItem {
                features: Array2::from_shape_simple_fn((9 + 3 * i, 40), || rng.random_range(-12.0..2.0)),
                target: model.embed_text(texts[i % texts.len()]).unwrap(),
            })
            .collect();
        (model, items)
    }

    fn small() -> ModelConfig {
        ModelConfig { hidden: 16, enc_dim: 12, adapter_gain: 1.0, ..Default::default() }
    }

    fn assert_close(a: &TrainableParams, b: &TrainableParams, tol: f64) {
        for (x, y) in a.tensors().iter().zip(b.tensors()) {
            for (u, v) in x.iter().zip(y) {
                assert!((u - v).abs() <= tol, "{u} vs {v}");
            }
        }
    }

    #[test]
    fn stationary_point_has_zero_gradient() {
        let (model, mut items) = fixture(small(), 3);
        for it in &mut items {
            it.target = model.embed_features(&it.features).unwrap() * 2.5;
        }
        let (loss, grads) = backward(&model, &items).unwrap();
        assert!(loss.abs() < 1e-12);
        assert_close(&grads, &grads.zeros_like(), 1e-9);
    }

    #[test]
    fn duplicated_batch_has_same_gradient() {
        let (model, items) = fixture(small(), 3);
        let doubled: Vec<TrainItem> = items.iter().chain(&items).cloned().collect();
        let (la, ga) = backward(&model, &items).unwrap();
        let (lb, gb) = backward(&model, &doubled).unwrap();
        assert!((la - lb).abs() < 1e-14);
        assert_close(&ga, &gb, 1e-14);
    }

    #[test]
    fn accumulation_matches_concatenated_batch() {
        let (model, items) = fixture(small(), 4);
        let refs: Vec<&TrainItem> = items.iter().collect();
        let mut acc = GradAccumulator::new(&TrainableParams::from_model(&model));
        acc.accumulate(&model, &refs[..2]).unwrap();
        acc.accumulate(&model, &refs[2..]).unwrap();
        let accumulated = acc.take_mean().unwrap();
        let (_, whole) = backward(&model, &items).unwrap();
        assert_close(&accumulated, &whole, 1e-12);

        let cfg = TrainConfig::default();
        let (mut m1, mut m2) = (model.clone(), model.clone());
        apply_update(&mut m1, &accumulated, &mut AdamState::new(), &cfg).unwrap();
        apply_update(&mut m2, &whole, &mut AdamState::new(), &cfg).unwrap();
        assert_close(&TrainableParams::from_model(&m1), &TrainableParams::from_model(&m2), 1e-12);
        assert!(acc.take_mean().is_none());
    }

    #[test]
    fn full_model_gradients_match_finite_differences() {
        let (model, items) = fixture(small(), 2);
        let report = grad_check(&model, &items, 6, 1e-4, 1).unwrap();
        assert_eq!(report.tensors.len(), 6);
        assert!(report.max_rel_error <= 1e-4, "{report:?}");
    }

    #[test]
    fn linear_model_gradients_are_exact() {
        // no mixer layers, one affine encoder layer, and an objective linear
        // in e_s: every scalar parameter enters affinely
        fn linear(e_s: &Embedding, v: &Embedding) -> (f64, Embedding) {
            (e_s.dot(v), v.clone())
        }
        let cfg = ModelConfig { backbone_layers: 0, enc_layers: 1, ..small() };
        let (model, items) = fixture(cfg, 2);
        let report = grad_check_with(&model, &items, 8, 1e-4, 2, linear).unwrap();
        assert!(report.max_rel_error <= 1e-7, "{report:?}");
    }

    #[test]
    fn halving_eps_is_stable() {
        let (model, items) = fixture(small(), 2);
        let a = grad_check(&model, &items, 4, 1e-4, 3).unwrap().max_rel_error;
        let b = grad_check(&model, &items, 4, 5e-5, 3).unwrap().max_rel_error;
        assert!(b <= 10.0 * a.max(1e-12), "{a} -> {b}");
    }

    #[test]
    fn training_leaves_backbone_untouched_and_is_deterministic() {
        let (model, items) = fixture(small(), 5);
        let checksum = model.backbone.checksum();
        let cfg = TrainConfig { lr: 1e-3, batch_size: 2, grad_accum_steps: 2, max_epochs: 4, seed: 9, ..Default::default() };
        let run = || train_on_items(model.clone(), &items[..4], &items[4..], &cfg, &mut |_| {}).unwrap();
        let (a, b) = (run(), run());
        assert_eq!(a.model.backbone.checksum(), checksum);
        assert_eq!(TrainableParams::from_model(&a.model), TrainableParams::from_model(&b.model));
        assert_eq!(a.history.len(), b.history.len());
        // 4 items in micro-batches of 2 with 2-step accumulation: one step per epoch
        assert_eq!(a.optimizer_steps, a.history.len() as u64);
        assert!(a.history.last().unwrap().train_loss < a.history[0].train_loss);
    }

    #[test]
    fn empty_inputs_rejected() {
        let (model, items) = fixture(small(), 1);
        assert!(backward(&model, &[]).is_err());
        let cfg = TrainConfig::default();
        assert!(train_on_items(model, &items, &[], &cfg, &mut |_| {}).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { lr: 0.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { beta2: 1.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { patience: 0, ..Default::default() }.validate().is_err());
    }
}
