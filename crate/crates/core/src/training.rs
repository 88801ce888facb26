//! Loss, backpropagation through time, gradient clipping, Adam with step
//! decay, and the epoch loop.

use serde::{Deserialize, Serialize};

use crate::datapipe::Example;
use crate::error::{shape_err, Error, Result};
use crate::network::{network_backward_acc, network_forward, ModelParameters};
use crate::numeric::{Matrix, SeededRng};

/// Probabilities below this are clamped before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// Gradients share the parameter layout.
pub type Gradients = ModelParameters;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub decay_factor: f64,
    pub decay_every: usize,
    pub max_epochs: usize,
    pub clip_value: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub shuffle: bool,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            decay_factor: 0.1,
            decay_every: 100,
            max_epochs: 1000,
            clip_value: 10.0,
            batch_size: 32,
            seed: 0,
            shuffle: true,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be > 0");
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return bad("decay_factor must be in (0, 1]");
        }
        if self.decay_every == 0 {
            return bad("decay_every must be >= 1");
        }
        if !(self.clip_value > 0.0) {
            return bad("clip_value must be > 0");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return bad("Adam constants must satisfy 0 <= beta < 1 and epsilon > 0");
        }
        Ok(())
    }
}

/// `learning_rate * decay_factor^floor(epoch / decay_every)`.
///
/// The power is applied by repeated multiplication, which keeps the default
/// schedule on the exact decimal values 1e-2, 1e-3, 1e-4.
pub fn lr_schedule(config: &TrainingConfig, epoch: usize) -> f64 {
    let steps = epoch / config.decay_every.max(1);
    (0..steps).fold(config.learning_rate, |lr, _| lr * config.decay_factor)
}

pub fn cross_entropy_loss(probs: &Matrix, label: usize) -> Result<f64> {
    let p = probs.as_slice();
    if label >= p.len() {
        return Err(Error::LabelOutOfRange {
            label,
            num_classes: p.len(),
        });
    }
    Ok(-p[label].max(PROB_FLOOR).ln())
}

/// Adam moments for every parameter matrix, in `matrices_mut` order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first: Vec<Matrix>,
    pub second: Vec<Matrix>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(params: &ModelParameters) -> Self {
        Self::with_constants(params, 0.9, 0.999, 1e-8)
    }

    pub fn with_constants(params: &ModelParameters, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        let zeros: Vec<Matrix> = params
            .named_matrices()
            .iter()
            .map(|(_, m)| Matrix::zeros(m.rows(), m.cols()))
            .collect();
        Self {
            first: zeros.clone(),
            second: zeros,
            step: 0,
            beta1,
            beta2,
            epsilon,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(params: &mut ModelParameters, grads: &Gradients, state: &mut AdamState, lr: f64) -> Result<()> {
    let grad_mats: Vec<&Matrix> = grads.named_matrices().into_iter().map(|(_, m)| m).collect();
    let mut param_mats = params.matrices_mut();
    if grad_mats.len() != param_mats.len() || state.first.len() != param_mats.len() {
        return Err(shape_err("adam_step", param_mats.len(), grad_mats.len()));
    }
    for ((p, g), m) in param_mats.iter().zip(&grad_mats).zip(&state.first) {
        if !p.same_shape(g) || !p.same_shape(m) {
            return Err(shape_err(
                "adam_step",
                format!("{}x{}", p.rows(), p.cols()),
                format!("{}x{}", g.rows(), g.cols()),
            ));
        }
    }
    state.step += 1;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
    let correction1 = 1.0 - b1.powi(state.step as i32);
    let correction2 = 1.0 - b2.powi(state.step as i32);
    for (((p, g), m), v) in param_mats
        .iter_mut()
        .zip(&grad_mats)
        .zip(state.first.iter_mut())
        .zip(state.second.iter_mut())
    {
        let (ps, gs) = (p.as_mut_slice(), g.as_slice());
        let (ms, vs) = (m.as_mut_slice(), v.as_mut_slice());
        for k in 0..ps.len() {
            ms[k] = b1 * ms[k] + (1.0 - b1) * gs[k];
            vs[k] = b2 * vs[k] + (1.0 - b2) * gs[k] * gs[k];
            let m_hat = ms[k] / correction1;
            let v_hat = vs[k] / correction2;
            ps[k] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        if ps.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("adam_step"));
        }
    }
    Ok(())
}

/// Element-wise clamp to `[-clip_value, clip_value]`.
pub fn clip_gradients(grads: &mut Gradients, clip_value: f64) {
    for m in grads.matrices_mut() {
        for v in m.as_mut_slice() {
            *v = v.clamp(-clip_value, clip_value);
        }
    }
}

fn check_example(m: &ModelParameters, ex: &Example) -> Result<()> {
    let c = &m.config;
    if ex.window.shape() != (c.window_length, c.input_size) {
        return Err(shape_err(
            "training example",
            format!("{}x{}", c.window_length, c.input_size),
            format!("{}x{}", ex.window.rows(), ex.window.cols()),
        ));
    }
    if ex.label >= c.num_classes {
        return Err(Error::LabelOutOfRange {
            label: ex.label,
            num_classes: c.num_classes,
        });
    }
    Ok(())
}

/// Forward + backward for one window; accumulates (unscaled) gradients and
/// returns the example's loss.
pub fn example_gradients_acc(m: &ModelParameters, window: &Matrix, label: usize, grads: &mut Gradients) -> Result<f64> {
    let (probs, trace) = network_forward(m, window)?;
    let loss = cross_entropy_loss(&probs, label)?;
    let mut dlogits = probs.into_vec();
    dlogits[label] -= 1.0;
    network_backward_acc(m, &trace, &dlogits, grads)?;
    Ok(loss)
}

/// Mean loss over `batch` and its gradient w.r.t. every parameter.
///
/// Per-example gradients are summed in batch order and then divided by the
/// batch size, so the result is bitwise reproducible.
pub fn bptt_gradients(m: &ModelParameters, batch: &[Example]) -> Result<(Gradients, f64)> {
    let refs: Vec<&Example> = batch.iter().collect();
    batch_gradients(m, &refs)
}

fn batch_gradients(m: &ModelParameters, batch: &[&Example]) -> Result<(Gradients, f64)> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut grads = m.zeros_like();
    let mut loss = 0.0;
    for &ex in batch {
        check_example(m, ex)?;
        loss += example_gradients_acc(m, &ex.window, ex.label, &mut grads)?;
    }
    let scale = 1.0 / batch.len() as f64;
    for g in grads.matrices_mut() {
        g.scale_in_place(scale);
    }
    Ok((grads, loss * scale))
}

/// Mean cross-entropy and argmax accuracy over a set of examples.
pub fn evaluate(m: &ModelParameters, examples: &[Example]) -> Result<(f64, f64)> {
    if examples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut loss = 0.0;
    let mut correct = 0usize;
    for ex in examples {
        check_example(m, ex)?;
        let (probs, _) = network_forward(m, &ex.window)?;
        loss += cross_entropy_loss(&probs, ex.label)?;
        if crate::evaluation::classify(&probs) == ex.label {
            correct += 1;
        }
    }
    let n = examples.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    /// Mean over the epoch's mini-batches, each measured before its update.
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
    pub learning_rate: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters with the lowest validation loss seen (training loss when
    /// no validation set is given).
    pub model: ModelParameters,
    pub best_epoch: Option<usize>,
    pub reports: Vec<EpochReport>,
}

pub fn train(
    initial: &ModelParameters,
    train_set: &[Example],
    val_set: &[Example],
    config: &TrainingConfig,
) -> Result<TrainOutcome> {
    train_with_progress(initial, train_set, val_set, config, |_| {})
}

/// [`train`] with a callback invoked after every epoch.
pub fn train_with_progress(
    initial: &ModelParameters,
    train_set: &[Example],
    val_set: &[Example],
    config: &TrainingConfig,
    mut on_epoch: impl FnMut(&EpochReport),
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for ex in train_set.iter().chain(val_set) {
        check_example(initial, ex)?;
    }

    let mut model = initial.clone();
    let mut adam = AdamState::with_constants(&model, config.beta1, config.beta2, config.epsilon);
    let mut rng = SeededRng::new(config.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut best: Option<(f64, usize, ModelParameters)> = None;
    let mut reports = Vec::with_capacity(config.max_epochs);
    let mut batch: Vec<&Example> = Vec::with_capacity(config.batch_size);

    for epoch in 0..config.max_epochs {
        let lr = lr_schedule(config, epoch);
        if config.shuffle {
            rng.shuffle(&mut order);
        }
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| &train_set[i]));
            let (mut grads, loss) = batch_gradients(&model, &batch)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, loss });
            }
            loss_sum += loss * chunk.len() as f64;
            clip_gradients(&mut grads, config.clip_value);
            adam_step(&mut model, &grads, &mut adam, lr).map_err(|e| match e {
                Error::NonFinite(_) => Error::Divergence { epoch, loss: f64::NAN },
                other => other,
            })?;
        }
        let train_loss = loss_sum / train_set.len() as f64;
        let (val_loss, val_accuracy) = if val_set.is_empty() {
            (None, None)
        } else {
            let (l, a) = evaluate(&model, val_set)?;
            (Some(l), Some(a))
        };
        let score = val_loss.unwrap_or(train_loss);
        if !score.is_finite() {
            return Err(Error::Divergence { epoch, loss: score });
        }
        if best.as_ref().map_or(true, |(s, _, _)| score < *s) {
            best = Some((score, epoch, model.clone()));
        }
        let report = EpochReport {
            epoch,
            train_loss,
            val_loss,
            val_accuracy,
            learning_rate: lr,
        };
        on_epoch(&report);
        reports.push(report);
    }

    Ok(match best {
        Some((_, epoch, model)) => TrainOutcome {
            model,
            best_epoch: Some(epoch),
            reports,
        },
        None => TrainOutcome {
            model,
            best_epoch: None,
            reports,
        },
    })
}
