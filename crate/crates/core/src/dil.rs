//! Deep identity learning: drives the network's response to every gallery
//! kernel toward a discrete impulse.
//!
//! The loss for one kernel K has three parts:
//!   - the squared L2 norm of `net(K) - delta` on the kernel's own frame,
//!   - `|1 - sum(effective_kernel)|`, the DC-gain anchor (the convolution
//!     area property demands a unit-area inverse),
//!   - `|1 - net(K)[center]|`, pinning the response peak.
//! Total: `identity + lambda1 * area + lambda2 * center`.
//!
//! Gradients flow through the layer convolutions directly and through the
//! impulse-response path for the area term. The absolute-value terms use the
//! zero subgradient at their kink. Training is a pure function of
//! (initial model, gallery, config): reruns reproduce histories bit for bit.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::gallery::{delta_target, DegradationKernel, KernelGallery};
use crate::lcnn::{LcnnModel, Provenance};
use crate::tensor::{
    conv_same_batch, conv_same_batch_backward, BatchStack, ConvLayerWeights, ShapeError,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("gallery is empty")]
    EmptyGallery,
    #[error("invalid training config: {0}")]
    BadConfig(String),
    #[error("loss diverged to a non-finite value at epoch {epoch}, batch {batch}")]
    Diverged { epoch: u32, batch: usize },
}

/// The three loss terms and their weighted total for one kernel or one batch.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DilLossTerms {
    pub identity_residual: f64,
    pub conv_area: f64,
    pub center: f64,
    pub total: f64,
}

impl DilLossTerms {
    fn combine(identity_residual: f64, conv_area: f64, center: f64, l1: f64, l2: f64) -> Self {
        DilLossTerms {
            identity_residual,
            conv_area,
            center,
            total: identity_residual + l1 * conv_area + l2 * center,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: u32,
    pub learning_rate: f64,
    /// Step-decay scheduler: multiply the rate by `gamma` every `step_size`
    /// epochs.
    pub step_size: u32,
    pub gamma: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub batch_size: usize,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            // The published rate of 0.1 makes Adam steps larger than the
            // weight scale of this parameterization and the loss diverges
            // within one epoch; one order of magnitude lower trains to the
            // convex floor of the objective.
            learning_rate: 0.01,
            step_size: 20,
            gamma: 0.1,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            lambda1: 0.8,
            lambda2: 0.2,
            batch_size: 32,
            rng_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.learning_rate <= 0.0 || self.gamma <= 0.0 {
            return Err(TrainError::BadConfig("rates must be positive".into()));
        }
        if self.lambda1 < 0.0 || self.lambda2 < 0.0 {
            return Err(TrainError::BadConfig("lambdas must be >= 0".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::BadConfig("batch size must be positive".into()));
        }
        if self.step_size == 0 {
            return Err(TrainError::BadConfig("step size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(TrainError::BadConfig("betas must be in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn lr_at_epoch(&self, epoch: u32) -> f64 {
        self.learning_rate * self.gamma.powi((epoch / self.step_size) as i32)
    }
}

/// Mean loss terms of one epoch plus bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: u32,
    pub lr: f64,
    pub mean: DilLossTerms,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

/// Per-epoch view handed to a training observer (checkpointing, logging).
pub struct TrainProgress<'a> {
    pub epoch: u32,
    pub model: &'a LcnnModel,
    pub stats: &'a EpochStats,
}

/// Loss terms for a single kernel.
pub fn dil_loss(model: &LcnnModel, kernel: &DegradationKernel, l1: f64, l2: f64) -> DilLossTerms {
    let batch = BatchStack::from_grids(&[&kernel.grid]);
    let eval = batch_forward(model, &batch);
    let area = area_term(model);
    DilLossTerms::combine(eval.mean_identity, area.conv_area, eval.mean_center, l1, l2)
}

/// Mean loss terms over a whole gallery (no gradients); used to measure the
/// pre-training baseline and held-out sets.
pub fn mean_loss(model: &LcnnModel, kernels: &[DegradationKernel], l1: f64, l2: f64) -> DilLossTerms {
    assert!(!kernels.is_empty());
    let mut ir = 0.0;
    let mut ce = 0.0;
    for chunk in kernels.chunks(64) {
        let grids: Vec<&crate::tensor::Grid2D> = chunk.iter().map(|k| &k.grid).collect();
        let eval = batch_forward(model, &BatchStack::from_grids(&grids));
        ir += eval.mean_identity * chunk.len() as f64;
        ce += eval.mean_center * chunk.len() as f64;
    }
    let n = kernels.len() as f64;
    let area = area_term(model);
    DilLossTerms::combine(ir / n, area.conv_area, ce / n, l1, l2)
}

struct BatchForward {
    /// Activations per layer, `stacks[0]` being the input batch.
    stacks: Vec<BatchStack>,
    mean_identity: f64,
    mean_center: f64,
}

fn batch_forward(model: &LcnnModel, input: &BatchStack) -> BatchForward {
    let mut stacks = Vec::with_capacity(model.layers().len() + 1);
    stacks.push(input.clone());
    for layer in model.layers() {
        let next = conv_same_batch(stacks.last().unwrap(), layer);
        stacks.push(next);
    }
    let out = stacks.last().unwrap();
    let (h, w) = (out.height, out.width);
    let center = (h / 2) * w + w / 2;
    let mut ir_sum = 0.0;
    let mut ce_sum = 0.0;
    for s in 0..out.n {
        let plane = out.plane(0, s);
        let mut ir = 0.0;
        for (idx, &v) in plane.iter().enumerate() {
            let d = if idx == center { v - 1.0 } else { v };
            ir += d * d;
        }
        ir_sum += ir;
        ce_sum += (1.0 - plane[center]).abs();
    }
    BatchForward {
        stacks,
        mean_identity: ir_sum / input.n as f64,
        mean_center: ce_sum / input.n as f64,
    }
}

struct AreaForward {
    stacks: Vec<BatchStack>,
    /// Sum of the effective kernel (DC gain of the collapsed operator).
    dc_gain: f64,
    conv_area: f64,
    support: usize,
    field: usize,
}

/// Differentiable impulse-response path: forward a centered impulse on a
/// field wide enough that padding cannot touch the response, sum the central
/// `support x support` crop.
fn area_forward(model: &LcnnModel) -> AreaForward {
    let support = model.effective_support();
    let field = 2 * support - 1;
    let impulse = delta_target(field).expect("odd field");
    let batch = BatchStack::from_grids(&[&impulse]);
    let mut stacks = Vec::with_capacity(model.layers().len() + 1);
    stacks.push(batch);
    for layer in model.layers() {
        let next = conv_same_batch(stacks.last().unwrap(), layer);
        stacks.push(next);
    }
    let out = stacks.last().unwrap();
    let lo = (field - support) / 2;
    let mut dc_gain = 0.0;
    for y in lo..lo + support {
        for x in lo..lo + support {
            dc_gain += out.plane(0, 0)[y * field + x];
        }
    }
    AreaForward {
        stacks,
        dc_gain,
        conv_area: (1.0 - dc_gain).abs(),
        support,
        field,
    }
}

fn area_term(model: &LcnnModel) -> AreaForward {
    area_forward(model)
}

/// Subgradient of `|1 - x|` with respect to `x`; zero exactly at the kink.
fn abs_one_minus_grad(x: f64) -> f64 {
    match 1.0 - x {
        d if d > 0.0 => -1.0,
        d if d < 0.0 => 1.0,
        _ => 0.0,
    }
}

/// Backpropagates a loss gradient on the final activations through all
/// layers, returning per-layer weight gradients (input gradient discarded).
fn backprop(
    model: &LcnnModel,
    stacks: &[BatchStack],
    mut grad: BatchStack,
    grads_out: &mut [ConvLayerWeights],
) {
    for (l, layer) in model.layers().iter().enumerate().rev() {
        let (gi, gw) = conv_same_batch_backward(&stacks[l], layer, &grad);
        for (acc, g) in grads_out[l].values_mut().iter_mut().zip(gw.values()) {
            *acc += g;
        }
        grad = gi;
    }
}

/// Mean batch loss and its gradient with respect to every layer's weights.
pub fn loss_and_gradients(
    model: &LcnnModel,
    kernels: &[&DegradationKernel],
    l1: f64,
    l2: f64,
) -> (DilLossTerms, Vec<ConvLayerWeights>) {
    batch_loss_and_grads(model, kernels, l1, l2)
}

/// Mean batch loss and its gradient with respect to every layer.
fn batch_loss_and_grads(
    model: &LcnnModel,
    kernels: &[&DegradationKernel],
    l1: f64,
    l2: f64,
) -> (DilLossTerms, Vec<ConvLayerWeights>) {
    let n = kernels.len();
    let grids: Vec<&crate::tensor::Grid2D> = kernels.iter().map(|k| &k.grid).collect();
    let input = BatchStack::from_grids(&grids);
    let fwd = batch_forward(model, &input);
    let area = area_forward(model);
    let terms = DilLossTerms::combine(fwd.mean_identity, area.conv_area, fwd.mean_center, l1, l2);

    let mut grads: Vec<ConvLayerWeights> = model
        .layers()
        .iter()
        .map(|l| ConvLayerWeights::zeros(l.out_channels(), l.in_channels()))
        .collect();

    // identity + center terms through the kernel batch
    let out = fwd.stacks.last().unwrap();
    let (h, w) = (out.height, out.width);
    let center = (h / 2) * w + w / 2;
    let inv_n = 1.0 / n as f64;
    let mut grad = BatchStack::zeros(n, 1, h, w);
    for s in 0..n {
        let plane = out.plane(0, s);
        let gplane = grad.plane_mut(0, s);
        for (idx, g) in gplane.iter_mut().enumerate() {
            let v = plane[idx];
            let target = if idx == center { 1.0 } else { 0.0 };
            *g = 2.0 * (v - target) * inv_n;
        }
        gplane[center] += l2 * inv_n * abs_one_minus_grad(plane[center]);
    }
    backprop(model, &fwd.stacks, grad, &mut grads);

    // area term through the impulse path
    let sgn = abs_one_minus_grad(area.dc_gain);
    if l1 != 0.0 && sgn != 0.0 {
        let (field, support) = (area.field, area.support);
        let lo = (field - support) / 2;
        let mut agrad = BatchStack::zeros(1, 1, field, field);
        {
            let plane = agrad.plane_mut(0, 0);
            for y in lo..lo + support {
                for x in lo..lo + support {
                    plane[y * field + x] = l1 * sgn;
                }
            }
        }
        backprop(model, &area.stacks, agrad, &mut grads);
    }

    (terms, grads)
}

/// First/second-moment state of the Adam optimizer, one entry per layer.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl AdamState {
    pub fn new(model: &LcnnModel) -> Self {
        AdamState {
            m: model.layers().iter().map(|l| vec![0.0; l.len()]).collect(),
            v: model.layers().iter().map(|l| vec![0.0; l.len()]).collect(),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One Adam update with bias correction. Deterministic; a zero gradient
/// leaves parameters untouched.
pub fn adam_step(
    state: &mut AdamState,
    model: &mut LcnnModel,
    grads: &[ConvLayerWeights],
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
) -> Result<(), ShapeError> {
    if grads.len() != model.layers().len() {
        return Err(ShapeError::Mismatch(format!(
            "{} gradient layers for a {}-layer model",
            grads.len(),
            model.layers().len()
        )));
    }
    for (l, g) in grads.iter().enumerate() {
        if g.len() != model.layers()[l].len() {
            return Err(ShapeError::ValueCount {
                what: "gradient layer",
                len: g.len(),
                expected: model.layers()[l].len(),
            });
        }
    }
    state.t += 1;
    let bc1 = 1.0 - beta1.powi(state.t as i32);
    let bc2 = 1.0 - beta2.powi(state.t as i32);
    for (l, g) in grads.iter().enumerate() {
        let m = &mut state.m[l];
        let v = &mut state.v[l];
        let w = model.layers_mut()[l].values_mut();
        for i in 0..g.len() {
            let gi = g.values()[i];
            m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
            v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            w[i] -= lr * m_hat / (v_hat.sqrt() + epsilon);
        }
    }
    Ok(())
}

pub fn train(
    model: LcnnModel,
    gallery: &KernelGallery,
    cfg: &TrainConfig,
) -> Result<(LcnnModel, TrainHistory), TrainError> {
    train_observed(model, gallery, cfg, |_| {})
}

/// Training loop with a per-epoch observer hook.
pub fn train_observed(
    mut model: LcnnModel,
    gallery: &KernelGallery,
    cfg: &TrainConfig,
    mut observer: impl FnMut(&TrainProgress),
) -> Result<(LcnnModel, TrainHistory), TrainError> {
    cfg.validate()?;
    if gallery.is_empty() {
        return Err(TrainError::EmptyGallery);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut adam = AdamState::new(&model);
    let mut history = TrainHistory::default();
    let n = gallery.len();
    let mut indices: Vec<usize> = (0..n).collect();
    let start_epochs = model.provenance().epochs_completed;

    for epoch in 0..cfg.epochs {
        let t0 = Instant::now();
        let lr = cfg.lr_at_epoch(epoch);
        indices.shuffle(&mut rng);
        let mut sums = DilLossTerms::default();
        for (batch_idx, chunk) in indices.chunks(cfg.batch_size).enumerate() {
            let kernels: Vec<&DegradationKernel> =
                chunk.iter().map(|&i| &gallery.kernels[i]).collect();
            let (terms, grads) = batch_loss_and_grads(&model, &kernels, cfg.lambda1, cfg.lambda2);
            if !terms.total.is_finite() {
                return Err(TrainError::Diverged {
                    epoch,
                    batch: batch_idx,
                });
            }
            let wgt = chunk.len() as f64;
            sums.identity_residual += terms.identity_residual * wgt;
            sums.conv_area += terms.conv_area * wgt;
            sums.center += terms.center * wgt;
            sums.total += terms.total * wgt;
            adam_step(
                &mut adam,
                &mut model,
                &grads,
                lr,
                cfg.adam_beta1,
                cfg.adam_beta2,
                cfg.adam_epsilon,
            )
            .expect("gradient shapes follow the model");
        }
        let inv = 1.0 / n as f64;
        let stats = EpochStats {
            epoch,
            lr,
            mean: DilLossTerms {
                identity_residual: sums.identity_residual * inv,
                conv_area: sums.conv_area * inv,
                center: sums.center * inv,
                total: sums.total * inv,
            },
            seconds: t0.elapsed().as_secs_f64(),
        };
        model.set_provenance(Provenance {
            gallery_seed: gallery.seed,
            epochs_completed: start_epochs + epoch + 1,
        });
        observer(&TrainProgress {
            epoch,
            model: &model,
            stats: &stats,
        });
        history.epochs.push(stats);
    }
    Ok((model, history))
}
