//! Losses, the Adam optimizer, and the desk-scale training loop.
//!
//! The total objective is `mse + 0.1 * perceptual`, where the perceptual
//! term is a feature-space MSE under a frozen extractor. Everything is
//! deterministic under a fixed seed: data order, initialization, and
//! updates, so two identical runs produce bit-identical weight files.

use alloc::vec;
use alloc::vec::Vec;

use crate::fmath;
use crate::metrics;
use crate::model::ModelWeights;
use crate::physics::Image;
use crate::rng::SplitMix64;
use crate::tape::{Tape, Var};
use crate::tensor::{ParamRegistry, Result, Tensor, TensorError};

/// Weight of the perceptual term in the total loss.
pub const PERCEPTUAL_BETA: f64 = 0.1;

/// Loss components for one iteration. `total` is always exactly
/// `mse + beta * perceptual` in f64.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub mse: f64,
    pub perceptual: f64,
    pub beta: f64,
    pub total: f64,
}

impl LossBreakdown {
    fn new(mse: f64, perceptual: f64) -> Self {
        Self {
            mse,
            perceptual,
            beta: PERCEPTUAL_BETA,
            total: mse + PERCEPTUAL_BETA * perceptual,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub perceptual_enabled: bool,
    /// Checkpoint cadence in iterations; 0 disables checkpoints.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 4,
            iterations: 1000,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            perceptual_enabled: true,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate.is_finite()
            && self.learning_rate >= 0.0
            && self.batch_size >= 1
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(TensorError::InvalidConfig {
                detail: "training hyperparameters out of range".into(),
            })
        }
    }
}

/// Frozen feature map for the perceptual loss. Implementations build
/// their computation on the caller's tape so the loss gradient can flow
/// back through it to the image; the extractor's own weights must never
/// be registered as trainable.
pub trait FeatureExtractor {
    fn id(&self) -> &str;
    fn features(&self, tape: &mut Tape, image: Var) -> Result<Var>;
}

/// Features are the image itself; perceptual loss degenerates to MSE.
pub struct IdentityExtractor;

impl FeatureExtractor for IdentityExtractor {
    fn id(&self) -> &str {
        "identity"
    }

    fn features(&self, _tape: &mut Tape, image: Var) -> Result<Var> {
        Ok(image)
    }
}

/// Default perceptual evaluator: a seeded random frozen conv stack
/// (3 -> 8 -> 8 -> 8, kernel 3, ReLU, stride 2 between layers).
pub struct RandConvExtractor {
    layers: Vec<(Tensor, Tensor)>,
}

impl RandConvExtractor {
    pub const ID: &'static str = "rand-conv-v1";
    const WIDTHS: [(usize, usize); 3] = [(3, 8), (8, 8), (8, 8)];

    pub fn seeded(seed: u64) -> Self {
        let mut rng = SplitMix64::new(seed);
        let layers = Self::WIDTHS
            .into_iter()
            .map(|(cin, cout)| {
                let fan_in = cin * 9;
                let bound = fmath::sqrt(1.0 / fan_in as f32);
                let w = Tensor::new(
                    vec![cout, cin, 3, 3],
                    (0..cout * cin * 9).map(|_| rng.uniform(-bound, bound)).collect(),
                );
                let b = Tensor::new(
                    vec![cout],
                    (0..cout).map(|_| rng.uniform(-bound, bound)).collect(),
                );
                (w, b)
            })
            .collect();
        Self { layers }
    }

    pub fn layer_tensors(&self) -> &[(Tensor, Tensor)] {
        &self.layers
    }
}

impl FeatureExtractor for RandConvExtractor {
    fn id(&self) -> &str {
        Self::ID
    }

    fn features(&self, tape: &mut Tape, image: Var) -> Result<Var> {
        let mut x = image;
        for (w, b) in &self.layers {
            let wv = tape.leaf(w);
            let bv = tape.leaf(b);
            let y = tape.conv2d_strided(x, wv, bv, 2)?;
            x = tape.relu(y);
        }
        Ok(x)
    }
}

/// Mean squared error over all `3*h*w` samples, accumulated in f64.
pub fn mse_loss(gt: &Image, out: &Image) -> Result<f64> {
    metrics::mse64(gt, out)
}

/// Mean over the batch of the mean squared feature difference.
pub fn perceptual_loss(
    gt: &[Image],
    out: &[Image],
    extractor: &dyn FeatureExtractor,
) -> Result<f64> {
    if gt.len() != out.len() || gt.is_empty() {
        return Err(TensorError::ShapeMismatch {
            op: "perceptual_loss",
            detail: alloc::format!("batch sizes {} vs {}", gt.len(), out.len()),
        });
    }
    let mut acc = 0.0f64;
    for (g, o) in gt.iter().zip(out) {
        let mut tape = Tape::new();
        let gv = tape.leaf(&g.to_tensor());
        let ov = tape.leaf(&o.to_tensor());
        let fg = extractor.features(&mut tape, gv)?;
        let fo = extractor.features(&mut tape, ov)?;
        let fg_data = tape.data(fg);
        let fo_data = tape.data(fo);
        let mut pair = 0.0f64;
        for (a, b) in fg_data.iter().zip(fo_data) {
            let d = *a as f64 - *b as f64;
            pair += d * d;
        }
        acc += pair / fg_data.len() as f64;
    }
    Ok(acc / gt.len() as f64)
}

/// First/second moment buffers, kept in f64 so the update math is exact
/// to well below f32 resolution.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new(params: &ParamRegistry) -> Self {
        let m = params.iter().map(|(_, t)| vec![0.0; t.numel()]).collect();
        let v = params.iter().map(|(_, t)| vec![0.0; t.numel()]).collect();
        Self { m, v, step: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update over every registered parameter.
pub fn adam_step(
    params: &mut ParamRegistry,
    grads: &[Vec<f32>],
    state: &mut AdamState,
    config: &TrainConfig,
) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(TensorError::ShapeMismatch {
            op: "adam_step",
            detail: alloc::format!(
                "{} gradients / {} moment slots for {} parameters",
                grads.len(),
                state.m.len(),
                params.len()
            ),
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - fmath::pow64(config.beta1, t as f64);
    let bc2 = 1.0 - fmath::pow64(config.beta2, t as f64);
    for (i, (name, tensor)) in params.iter_mut().enumerate() {
        if grads[i].len() != tensor.numel() {
            return Err(TensorError::ShapeMismatch {
                op: "adam_step",
                detail: alloc::format!(
                    "gradient length {} vs parameter `{name}` length {}",
                    grads[i].len(),
                    tensor.numel()
                ),
            });
        }
        let m = &mut state.m[i];
        let v = &mut state.v[i];
        for (j, p) in tensor.data_mut().iter_mut().enumerate() {
            let g = grads[i][j] as f64;
            m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * g;
            v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * g * g;
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            *p = (*p as f64 - config.learning_rate * m_hat / (fmath::sqrt64(v_hat) + config.epsilon))
                as f32;
        }
    }
    Ok(())
}

/// Deterministic mini-batch training over `(hazy, clear)` pairs.
///
/// Emits one [`LossBreakdown`] per iteration and invokes `on_checkpoint`
/// every `checkpoint_every` iterations. Aborts with a diagnostic naming
/// the iteration if the loss goes non-finite.
pub fn train(
    model: &mut ModelWeights,
    dataset: &[(Image, Image)],
    config: &TrainConfig,
    extractor: &dyn FeatureExtractor,
    mut on_checkpoint: impl FnMut(usize, &ModelWeights),
) -> Result<Vec<LossBreakdown>> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(TensorError::InvalidConfig {
            detail: "dataset is empty".into(),
        });
    }
    for (hazy, clear) in dataset {
        if hazy.height() != clear.height() || hazy.width() != clear.width() {
            return Err(TensorError::ShapeMismatch {
                op: "train",
                detail: alloc::format!(
                    "pair extents {}x{} vs {}x{}",
                    hazy.height(),
                    hazy.width(),
                    clear.height(),
                    clear.width()
                ),
            });
        }
        if hazy.height() < 8 || hazy.width() < 8 {
            return Err(TensorError::InputTooSmall {
                op: "train",
                height: hazy.height(),
                width: hazy.width(),
                min: 8,
            });
        }
    }

    let mut rng = SplitMix64::new(config.seed);
    let mut order: Vec<usize> = Vec::new();
    let mut state = AdamState::new(model.params());
    let mut history = Vec::with_capacity(config.iterations);

    for iteration in 0..config.iterations {
        let mut tape = Tape::new();
        let staged = model.stage(&mut tape);

        let mut batch_total: Option<Var> = None;
        let mut mse_sum = 0.0f64;
        let mut perceptual_sum = 0.0f64;
        for _ in 0..config.batch_size {
            if order.is_empty() {
                order = (0..dataset.len()).collect();
                rng.shuffle(&mut order);
            }
            let (hazy, clear) = &dataset[order.pop().unwrap()];

            let input = tape.leaf(&hazy.to_tensor());
            let target = tape.leaf(&clear.to_tensor());
            let output = staged.dehaze(&mut tape, input)?;
            let diff = tape.sub(target, output)?;
            let sq = tape.mul(diff, diff)?;
            let mse_node = tape.mean_all(sq);
            mse_sum += tape.data(mse_node)[0] as f64;

            let sample_loss = if config.perceptual_enabled {
                let f_target = extractor.features(&mut tape, target)?;
                let f_output = extractor.features(&mut tape, output)?;
                let f_diff = tape.sub(f_target, f_output)?;
                let f_sq = tape.mul(f_diff, f_diff)?;
                let perc_node = tape.mean_all(f_sq);
                perceptual_sum += tape.data(perc_node)[0] as f64;
                let weighted = tape.scale(perc_node, PERCEPTUAL_BETA as f32);
                tape.add(mse_node, weighted)?
            } else {
                mse_node
            };
            batch_total = Some(match batch_total {
                None => sample_loss,
                Some(t) => tape.add(t, sample_loss)?,
            });
        }

        let n = config.batch_size as f64;
        let breakdown = LossBreakdown::new(mse_sum / n, perceptual_sum / n);
        if !breakdown.total.is_finite() {
            return Err(TensorError::NonFiniteLoss { iteration });
        }
        history.push(breakdown);

        let loss = tape.scale(batch_total.expect("batch_size >= 1"), 1.0 / n as f32);
        tape.backward(loss)?;
        let grads = staged.read_grads(&tape);
        adam_step(model.params_mut(), &grads, &mut state, config)?;

        if config.checkpoint_every > 0 && (iteration + 1) % config.checkpoint_every == 0 {
            on_checkpoint(iteration + 1, model);
        }
    }
    Ok(history)
}
