//! Multidimensional interactive attention: a channel gate from pooled
//! global statistics, a windowed local-spatial branch, a softmax-weighted
//! spatial cross branch, and their multiplicative fusion.
//!
//! The channel stage runs first and rescales the features; the two
//! spatial branches are computed on the rescaled features, fused by
//! elementwise product, squashed, and applied as the final gate. Every
//! gate is a sigmoid output, so attention maps live strictly in (0,1)
//! and the fused output can never exceed the input in magnitude.

use alloc::vec;

use crate::rng::SplitMix64;
use crate::tape::{Tape, Var};
use crate::tensor::{Result, Tensor, TensorError};

/// Window of the local-spatial sliding average pool.
pub const LOCAL_WINDOW: usize = 8;
/// Stride of the local-spatial sliding average pool.
pub const LOCAL_STRIDE: usize = 4;

/// Shared-MLP channel gate weights, staged on a tape.
/// `w0` is `[c/r, c]`, `w1` is `[c, c/r]`.
#[derive(Debug, Clone, Copy)]
pub struct ChannelAttention {
    pub w0: Var,
    pub w1: Var,
}

/// Per-cell channel MLP of the local branch: `weight` is `[c, c]`,
/// `bias` is `[c]`, applied at every pooled spatial cell.
#[derive(Debug, Clone, Copy)]
pub struct LocalAttention {
    pub weight: Var,
    pub bias: Var,
}

/// Query/value projections of the cross branch, stored as `[c, c]`
/// matrices and applied as 1x1 convolutions.
#[derive(Debug, Clone, Copy)]
pub struct SpatialCross {
    pub wq: Var,
    pub wv: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct Mia {
    pub channel: ChannelAttention,
    pub local: LocalAttention,
    pub cross: SpatialCross,
}

/// Learnable element count of a full MIA block at `channels` width.
pub fn mia_param_count(channels: usize, reduction: usize) -> usize {
    let hidden = channels / reduction;
    2 * hidden * channels          // w0 + w1
        + channels * channels + channels // local mlp
        + 2 * channels * channels // wq + wv
}

fn uniform_tensor(shape: alloc::vec::Vec<usize>, fan_in: usize, rng: &mut SplitMix64) -> Tensor {
    let bound = crate::fmath::sqrt(1.0 / fan_in as f32);
    let numel = shape.iter().product();
    let data = (0..numel).map(|_| rng.uniform(-bound, bound)).collect();
    Tensor::new(shape, data)
}

/// Seeded `(w0, w1)` pair; fails when `reduction` does not divide
/// `channels`.
pub fn init_channel_attention(
    channels: usize,
    reduction: usize,
    rng: &mut SplitMix64,
) -> Result<(Tensor, Tensor)> {
    if reduction == 0 || !channels.is_multiple_of(reduction) {
        return Err(TensorError::InvalidConfig {
            detail: alloc::format!(
                "reduction {reduction} must divide channel count {channels}"
            ),
        });
    }
    let hidden = channels / reduction;
    let w0 = uniform_tensor(vec![hidden, channels], channels, rng);
    let w1 = uniform_tensor(vec![channels, hidden], hidden, rng);
    Ok((w0, w1))
}

/// Seeded `(weight, bias)` for the local branch MLP.
pub fn init_local_attention(channels: usize, rng: &mut SplitMix64) -> (Tensor, Tensor) {
    let w = uniform_tensor(vec![channels, channels], channels, rng);
    let b = uniform_tensor(vec![channels], channels, rng);
    (w, b)
}

/// Seeded `(wq, wv)` projections for the cross branch.
pub fn init_cross_attention(channels: usize, rng: &mut SplitMix64) -> (Tensor, Tensor) {
    let wq = uniform_tensor(vec![channels, channels], channels, rng);
    let wv = uniform_tensor(vec![channels, channels], channels, rng);
    (wq, wv)
}

/// Channel gate `sigma(W1 relu(W0 avg) + W1 relu(W0 max))`, a `[c]`
/// vector in (0,1).
pub fn channel_attention(tape: &mut Tape, x: Var, w: &ChannelAttention) -> Result<Var> {
    let hidden = tape.shape(w.w0)[0];
    let channels = tape.shape(w.w1)[0];
    let zero_hidden = tape.leaf(&Tensor::zeros(vec![hidden]));
    let zero_out = tape.leaf(&Tensor::zeros(vec![channels]));

    let avg = tape.avg_pool_global(x)?;
    let max = tape.max_pool_global(x)?;
    let avg_hidden = tape.fully_connected(avg, w.w0, zero_hidden)?;
    let avg_hidden = tape.relu(avg_hidden);
    let avg_branch = tape.fully_connected(avg_hidden, w.w1, zero_out)?;
    let max_hidden = tape.fully_connected(max, w.w0, zero_hidden)?;
    let max_hidden = tape.relu(max_hidden);
    let max_branch = tape.fully_connected(max_hidden, w.w1, zero_out)?;
    let sum = tape.add(avg_branch, max_branch)?;
    Ok(tape.sigmoid(sum))
}

/// Local branch: window-pool, per-cell channel MLP, ReLU, and
/// nearest-neighbor expansion back to the input extent.
pub fn local_spatial(tape: &mut Tape, x: Var, w: &LocalAttention) -> Result<Var> {
    let (c, h, width) = match tape.shape(x)[..] {
        [c, h, w] => (c, h, w),
        ref s => {
            return Err(TensorError::ShapeMismatch {
                op: "local_spatial",
                detail: alloc::format!("expected [c,h,w], got {s:?}"),
            })
        }
    };
    let pooled = tape.sliding_avg_pool(x, LOCAL_WINDOW, LOCAL_STRIDE)?;
    let kernel = tape.reshape(w.weight, vec![c, c, 1, 1])?;
    let mixed = tape.conv2d(pooled, kernel, w.bias)?;
    let active = tape.relu(mixed);
    tape.upsample_nearest(active, h, width)
}

/// Cross branch: softmax channel weights from the globally pooled query
/// projection, contracted against the value projection; a `[1,h,w]`
/// sigmoid map.
pub fn spatial_cross(tape: &mut Tape, x: Var, w: &SpatialCross) -> Result<Var> {
    let (c, h, width) = match tape.shape(x)[..] {
        [c, h, w] => (c, h, w),
        ref s => {
            return Err(TensorError::ShapeMismatch {
                op: "spatial_cross",
                detail: alloc::format!("expected [c,h,w], got {s:?}"),
            })
        }
    };
    let zero = tape.leaf(&Tensor::zeros(vec![c]));
    let q_kernel = tape.reshape(w.wq, vec![c, c, 1, 1])?;
    let v_kernel = tape.reshape(w.wv, vec![c, c, 1, 1])?;

    let q_feat = tape.conv2d(x, q_kernel, zero)?;
    let q_pooled = tape.avg_pool_global(q_feat)?;
    let q = tape.softmax(q_pooled, 0)?;
    let q_row = tape.reshape(q, vec![1, c])?;

    let v_feat = tape.conv2d(x, v_kernel, zero)?;
    let v_mat = tape.reshape(v_feat, vec![c, h * width])?;

    // the 1xc by cx(h*w) product is a softmax-weighted sum over channels
    let map = tape.matmul(q_row, v_mat)?;
    let map = tape.reshape(map, vec![1, h, width])?;
    Ok(tape.sigmoid(map))
}

/// Full block: channel gate first, then the fused spatial gate applied
/// to the channel-rescaled features.
pub fn mia_forward(tape: &mut Tape, x: Var, mia: &Mia) -> Result<Var> {
    let (_, h, width) = match tape.shape(x)[..] {
        [c, h, w] => (c, h, w),
        ref s => {
            return Err(TensorError::ShapeMismatch {
                op: "mia_forward",
                detail: alloc::format!("expected [c,h,w], got {s:?}"),
            })
        }
    };
    let mc = channel_attention(tape, x, &mia.channel)?;
    let mc_stack = tape.broadcast_channels(mc, h, width)?;
    let rescaled = tape.mul(x, mc_stack)?;

    let local = local_spatial(tape, rescaled, &mia.local)?;
    let cross = spatial_cross(tape, rescaled, &mia.cross)?;
    let fused = tape.mul(local, cross)?;
    let gate = tape.sigmoid(fused);
    tape.mul(rescaled, gate)
}
