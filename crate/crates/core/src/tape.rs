//! Recorded-operation tape with reverse-mode gradients.
//!
//! Every forward op appends a node holding its output buffer and the
//! indices of its inputs; `backward` walks the node list in reverse and
//! accumulates partials into per-node `f32` gradient buffers. A tape is
//! built fresh for each forward pass and owned by a single computation.
//!
//! The op set is exactly what the dehazing network needs: direct
//! convolution with zero ("same") padding, dense layers, ReLU / sigmoid /
//! softmax, global and sliding pooling, channel concat, nearest-neighbor
//! upsampling, matrix product, and the elementwise glue. Broadcasting is
//! deliberately restricted to two patterns so shape errors stay loud:
//! a `[1,h,w]` map against `[c,h,w]` in `add`/`mul`, and the explicit
//! `broadcast_channels` expansion of a `[c]` vector.
//!
//! Reductions and dot products accumulate in `f64` before rounding to
//! the stored `f32`, which keeps analytic gradients within the 1e-4
//! band that the finite-difference suite checks.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::tensor::{Result, Tensor, TensorError};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Conv2d {
        input: Var,
        weight: Var,
        bias: Var,
        stride: usize,
    },
    FullyConnected {
        input: Var,
        weight: Var,
        bias: Var,
    },
    Relu {
        input: Var,
    },
    Sigmoid {
        input: Var,
    },
    Softmax {
        input: Var,
        axis: usize,
    },
    Clamp01 {
        input: Var,
    },
    AvgPoolGlobal {
        input: Var,
    },
    MaxPoolGlobal {
        input: Var,
    },
    SlidingAvgPool {
        input: Var,
        window: usize,
        stride: usize,
    },
    Add {
        lhs: Var,
        rhs: Var,
    },
    Sub {
        lhs: Var,
        rhs: Var,
    },
    Mul {
        lhs: Var,
        rhs: Var,
    },
    BroadcastChannels {
        input: Var,
    },
    ConcatChannels {
        inputs: Vec<Var>,
    },
    Reshape {
        input: Var,
    },
    MatMul {
        lhs: Var,
        rhs: Var,
    },
    UpsampleNearest {
        input: Var,
    },
    MeanAll {
        input: Var,
    },
    SumAll {
        input: Var,
    },
    AddScalar {
        input: Var,
    },
    Scale {
        input: Var,
        value: f32,
    },
}

#[derive(Debug, Clone)]
struct Node {
    shape: Vec<usize>,
    data: Vec<f32>,
    grad: Option<Vec<f32>>,
    op: Op,
}

/// Single-pass computation record. Nodes only reference earlier nodes,
/// so reverse index order is a valid reverse topological order.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn data(&self, v: Var) -> &[f32] {
        &self.nodes[v.0].data
    }

    pub fn grad(&self, v: Var) -> Option<&[f32]> {
        self.nodes[v.0].grad.as_deref()
    }

    /// Copy a node out as a standalone [`Tensor`] (gradient included).
    pub fn value(&self, v: Var) -> Tensor {
        let node = &self.nodes[v.0];
        let mut t = Tensor::new(node.shape.clone(), node.data.clone());
        if let Some(g) = &node.grad {
            t.accumulate_grad(g);
        }
        t
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<f32>, op: Op) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.nodes.push(Node {
            shape,
            data,
            grad: None,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, tensor: &Tensor) -> Var {
        self.push(tensor.shape().to_vec(), tensor.data().to_vec(), Op::Leaf)
    }

    pub fn leaf_parts(&mut self, shape: Vec<usize>, data: Vec<f32>) -> Var {
        assert_eq!(shape.iter().product::<usize>(), data.len());
        self.push(shape, data, Op::Leaf)
    }

    fn chw(&self, v: Var, op: &'static str) -> Result<(usize, usize, usize)> {
        match self.nodes[v.0].shape[..] {
            [c, h, w] => Ok((c, h, w)),
            ref s => Err(TensorError::ShapeMismatch {
                op,
                detail: format!("expected rank-3 [c,h,w] tensor, got {s:?}"),
            }),
        }
    }

    /// 2-D convolution with odd kernel, zero padding of (k-1)/2 per border,
    /// unit stride. Spatial extent is preserved.
    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        self.conv2d_strided(input, weight, bias, 1)
    }

    /// Convolution with the same zero padding but a coarser output grid;
    /// used by the downsampling feature extractor.
    pub fn conv2d_strided(
        &mut self,
        input: Var,
        weight: Var,
        bias: Var,
        stride: usize,
    ) -> Result<Var> {
        let (ci, h, w) = self.chw(input, "conv2d")?;
        let wshape = self.shape(weight);
        let (co, wci, k) = match wshape[..] {
            [co, wci, kh, kw] if kh == kw => (co, wci, kh),
            ref s => {
                return Err(TensorError::ShapeMismatch {
                    op: "conv2d",
                    detail: format!("weight must be [c_out,c_in,k,k], got {s:?}"),
                })
            }
        };
        if k % 2 == 0 {
            return Err(TensorError::InvalidConfig {
                detail: format!("conv2d kernel size {k} must be odd"),
            });
        }
        if wci != ci {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d",
                detail: format!("input channels {ci} vs weight in-channels {wci}"),
            });
        }
        if self.shape(bias) != [co] {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d",
                detail: format!(
                    "bias shape {:?} vs out-channels {co}",
                    self.shape(bias)
                ),
            });
        }
        let pad = (k - 1) / 2;
        let oh = (h + 2 * pad - k) / stride + 1;
        let ow = (w + 2 * pad - k) / stride + 1;
        let out = conv2d_forward(
            &self.nodes[input.0].data,
            (ci, h, w),
            &self.nodes[weight.0].data,
            (co, k),
            &self.nodes[bias.0].data,
            stride,
            (oh, ow),
        );
        Ok(self.push(
            vec![co, oh, ow],
            out,
            Op::Conv2d {
                input,
                weight,
                bias,
                stride,
            },
        ))
    }

    /// Dense layer: `out = weight . input + bias`.
    pub fn fully_connected(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let n = match self.shape(input)[..] {
            [n] => n,
            ref s => {
                return Err(TensorError::ShapeMismatch {
                    op: "fully_connected",
                    detail: format!("input must be a vector, got {s:?}"),
                })
            }
        };
        let (m, wn) = match self.shape(weight)[..] {
            [m, wn] => (m, wn),
            ref s => {
                return Err(TensorError::ShapeMismatch {
                    op: "fully_connected",
                    detail: format!("weight must be [m,n], got {s:?}"),
                })
            }
        };
        if wn != n {
            return Err(TensorError::ShapeMismatch {
                op: "fully_connected",
                detail: format!("input length {n} vs weight columns {wn}"),
            });
        }
        if self.shape(bias) != [m] {
            return Err(TensorError::ShapeMismatch {
                op: "fully_connected",
                detail: format!("bias shape {:?} vs rows {m}", self.shape(bias)),
            });
        }
        let x = &self.nodes[input.0].data;
        let wgt = &self.nodes[weight.0].data;
        let b = &self.nodes[bias.0].data;
        let mut out = vec![0.0f32; m];
        for i in 0..m {
            let row = &wgt[i * n..(i + 1) * n];
            let mut acc = b[i] as f64;
            for (wv, xv) in row.iter().zip(x.iter()) {
                acc += *wv as f64 * *xv as f64;
            }
            out[i] = acc as f32;
        }
        Ok(self.push(vec![m], out, Op::FullyConnected { input, weight, bias }))
    }

    pub fn relu(&mut self, input: Var) -> Var {
        let data: Vec<f32> = self.nodes[input.0].data.iter().map(|v| v.max(0.0)).collect();
        let shape = self.nodes[input.0].shape.clone();
        self.push(shape, data, Op::Relu { input })
    }

    pub fn sigmoid(&mut self, input: Var) -> Var {
        let data: Vec<f32> = self.nodes[input.0]
            .data
            .iter()
            .map(|&v| crate::fmath::sigmoid(v))
            .collect();
        let shape = self.nodes[input.0].shape.clone();
        self.push(shape, data, Op::Sigmoid { input })
    }

    /// Softmax along `axis`, computed with max subtraction.
    pub fn softmax(&mut self, input: Var, axis: usize) -> Result<Var> {
        let shape = self.nodes[input.0].shape.clone();
        if axis >= shape.len() {
            return Err(TensorError::InvalidAxis {
                op: "softmax",
                axis,
                rank: shape.len(),
            });
        }
        let (outer, len, inner) = axis_strides(&shape, axis);
        let x = &self.nodes[input.0].data;
        let mut out = vec![0.0f32; x.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |a: usize| o * len * inner + a * inner + i;
                let mut max = f32::NEG_INFINITY;
                for a in 0..len {
                    max = max.max(x[at(a)]);
                }
                let mut sum = 0.0f64;
                for a in 0..len {
                    let e = crate::fmath::exp(x[at(a)] - max);
                    out[at(a)] = e;
                    sum += e as f64;
                }
                for a in 0..len {
                    out[at(a)] = (out[at(a)] as f64 / sum) as f32;
                }
            }
        }
        Ok(self.push(shape, out, Op::Softmax { input, axis }))
    }

    /// Saturating clamp to [0,1]; the restoration step stores images this way.
    pub fn clamp01(&mut self, input: Var) -> Var {
        let data: Vec<f32> = self.nodes[input.0]
            .data
            .iter()
            .map(|v| v.clamp(0.0, 1.0))
            .collect();
        let shape = self.nodes[input.0].shape.clone();
        self.push(shape, data, Op::Clamp01 { input })
    }

    /// `[c,h,w] -> [c]`, mean over all spatial positions.
    pub fn avg_pool_global(&mut self, input: Var) -> Result<Var> {
        let (c, h, w) = self.chw(input, "avg_pool_global")?;
        let x = &self.nodes[input.0].data;
        let plane = h * w;
        let mut out = vec![0.0f32; c];
        for ch in 0..c {
            let mut acc = 0.0f64;
            for v in &x[ch * plane..(ch + 1) * plane] {
                acc += *v as f64;
            }
            out[ch] = (acc / plane as f64) as f32;
        }
        Ok(self.push(vec![c], out, Op::AvgPoolGlobal { input }))
    }

    /// `[c,h,w] -> [c]`, spatial maximum per channel.
    pub fn max_pool_global(&mut self, input: Var) -> Result<Var> {
        let (c, h, w) = self.chw(input, "max_pool_global")?;
        let x = &self.nodes[input.0].data;
        let plane = h * w;
        let mut out = vec![0.0f32; c];
        for ch in 0..c {
            let mut max = f32::NEG_INFINITY;
            for v in &x[ch * plane..(ch + 1) * plane] {
                max = max.max(*v);
            }
            out[ch] = max;
        }
        Ok(self.push(vec![c], out, Op::MaxPoolGlobal { input }))
    }

    /// Window-mean pooling; output extent is `(e - window)/stride + 1`
    /// per spatial dimension.
    pub fn sliding_avg_pool(&mut self, input: Var, window: usize, stride: usize) -> Result<Var> {
        let (c, h, w) = self.chw(input, "sliding_avg_pool")?;
        if h < window || w < window {
            return Err(TensorError::InputTooSmall {
                op: "sliding_avg_pool",
                height: h,
                width: w,
                min: window,
            });
        }
        let oh = (h - window) / stride + 1;
        let ow = (w - window) / stride + 1;
        let x = &self.nodes[input.0].data;
        let norm = 1.0 / (window * window) as f64;
        let mut out = vec![0.0f32; c * oh * ow];
        for ch in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0f64;
                    for ky in 0..window {
                        let row = ch * h * w + (oy * stride + ky) * w + ox * stride;
                        for v in &x[row..row + window] {
                            acc += *v as f64;
                        }
                    }
                    out[ch * oh * ow + oy * ow + ox] = (acc * norm) as f32;
                }
            }
        }
        Ok(self.push(
            vec![c, oh, ow],
            out,
            Op::SlidingAvgPool {
                input,
                window,
                stride,
            },
        ))
    }

    pub fn add(&mut self, lhs: Var, rhs: Var) -> Result<Var> {
        self.binary_elementwise(lhs, rhs, "add")
    }

    pub fn sub(&mut self, lhs: Var, rhs: Var) -> Result<Var> {
        self.binary_elementwise(lhs, rhs, "sub")
    }

    pub fn mul(&mut self, lhs: Var, rhs: Var) -> Result<Var> {
        self.binary_elementwise(lhs, rhs, "mul")
    }

    fn binary_elementwise(&mut self, lhs: Var, rhs: Var, which: &'static str) -> Result<Var> {
        let pattern = broadcast_pattern(self.shape(lhs), self.shape(rhs), which)?;
        let a = &self.nodes[lhs.0].data;
        let b = &self.nodes[rhs.0].data;
        let f = |x: f32, y: f32| match which {
            "add" => x + y,
            "sub" => x - y,
            _ => x * y,
        };
        let (shape, data) = match pattern {
            Broadcast::None => {
                let data = a.iter().zip(b.iter()).map(|(x, y)| f(*x, *y)).collect();
                (self.nodes[lhs.0].shape.clone(), data)
            }
            // one side is a [1,h,w] map repeated across the other's channels
            Broadcast::LhsMap { c, plane } => {
                let mut data = vec![0.0f32; c * plane];
                for ch in 0..c {
                    for i in 0..plane {
                        data[ch * plane + i] = f(a[i], b[ch * plane + i]);
                    }
                }
                (self.nodes[rhs.0].shape.clone(), data)
            }
            Broadcast::RhsMap { c, plane } => {
                let mut data = vec![0.0f32; c * plane];
                for ch in 0..c {
                    for i in 0..plane {
                        data[ch * plane + i] = f(a[ch * plane + i], b[i]);
                    }
                }
                (self.nodes[lhs.0].shape.clone(), data)
            }
        };
        let op = match which {
            "add" => Op::Add { lhs, rhs },
            "sub" => Op::Sub { lhs, rhs },
            _ => Op::Mul { lhs, rhs },
        };
        Ok(self.push(shape, data, op))
    }

    /// Expand a `[c]` vector to `[c,h,w]` by repetition (per-channel gate).
    pub fn broadcast_channels(&mut self, input: Var, height: usize, width: usize) -> Result<Var> {
        let c = match self.shape(input)[..] {
            [c] => c,
            ref s => {
                return Err(TensorError::ShapeMismatch {
                    op: "broadcast_channels",
                    detail: format!("expected a vector, got {s:?}"),
                })
            }
        };
        let x = &self.nodes[input.0].data;
        let plane = height * width;
        let mut data = vec![0.0f32; c * plane];
        for ch in 0..c {
            data[ch * plane..(ch + 1) * plane].fill(x[ch]);
        }
        Ok(self.push(vec![c, height, width], data, Op::BroadcastChannels { input }))
    }

    /// Stack `[c_i,h,w]` tensors along the channel axis, first argument first.
    pub fn concat_channels(&mut self, inputs: &[Var]) -> Result<Var> {
        if inputs.is_empty() {
            return Err(TensorError::ShapeMismatch {
                op: "concat_channels",
                detail: "no inputs".into(),
            });
        }
        let (_, h, w) = self.chw(inputs[0], "concat_channels")?;
        let mut channels = 0;
        for v in inputs {
            let (c, ih, iw) = self.chw(*v, "concat_channels")?;
            if ih != h || iw != w {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_channels",
                    detail: format!("spatial extents {ih}x{iw} vs {h}x{w}"),
                });
            }
            channels += c;
        }
        let mut data = Vec::with_capacity(channels * h * w);
        for v in inputs {
            data.extend_from_slice(&self.nodes[v.0].data);
        }
        Ok(self.push(
            vec![channels, h, w],
            data,
            Op::ConcatChannels {
                inputs: inputs.to_vec(),
            },
        ))
    }

    pub fn reshape(&mut self, input: Var, shape: Vec<usize>) -> Result<Var> {
        let numel: usize = shape.iter().product();
        if numel != self.nodes[input.0].data.len() {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                detail: format!(
                    "cannot view {:?} as {shape:?}",
                    self.nodes[input.0].shape
                ),
            });
        }
        let data = self.nodes[input.0].data.clone();
        Ok(self.push(shape, data, Op::Reshape { input }))
    }

    /// `[m,n] x [n,p] -> [m,p]`.
    pub fn matmul(&mut self, lhs: Var, rhs: Var) -> Result<Var> {
        let (m, n) = match self.shape(lhs)[..] {
            [m, n] => (m, n),
            ref s => {
                return Err(TensorError::ShapeMismatch {
                    op: "matmul",
                    detail: format!("lhs must be a matrix, got {s:?}"),
                })
            }
        };
        let (rn, p) = match self.shape(rhs)[..] {
            [rn, p] => (rn, p),
            ref s => {
                return Err(TensorError::ShapeMismatch {
                    op: "matmul",
                    detail: format!("rhs must be a matrix, got {s:?}"),
                })
            }
        };
        if rn != n {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                detail: format!("inner dimensions {n} vs {rn}"),
            });
        }
        let a = &self.nodes[lhs.0].data;
        let b = &self.nodes[rhs.0].data;
        let mut out = vec![0.0f32; m * p];
        for i in 0..m {
            for j in 0..p {
                let mut acc = 0.0f64;
                for k in 0..n {
                    acc += a[i * n + k] as f64 * b[k * p + j] as f64;
                }
                out[i * p + j] = acc as f32;
            }
        }
        Ok(self.push(vec![m, p], out, Op::MatMul { lhs, rhs }))
    }

    /// Nearest-neighbor expansion to `target_h x target_w`; output pixel
    /// (i,j) reads source pixel (floor(i*h/target_h), floor(j*w/target_w)).
    pub fn upsample_nearest(&mut self, input: Var, target_h: usize, target_w: usize) -> Result<Var> {
        let (c, h, w) = self.chw(input, "upsample_nearest")?;
        let x = &self.nodes[input.0].data;
        let mut data = vec![0.0f32; c * target_h * target_w];
        for ch in 0..c {
            for y in 0..target_h {
                let sy = y * h / target_h;
                for xcol in 0..target_w {
                    let sx = xcol * w / target_w;
                    data[ch * target_h * target_w + y * target_w + xcol] =
                        x[ch * h * w + sy * w + sx];
                }
            }
        }
        Ok(self.push(
            vec![c, target_h, target_w],
            data,
            Op::UpsampleNearest { input },
        ))
    }

    /// Mean over every element, yielding a scalar. Accumulates in f64.
    pub fn mean_all(&mut self, input: Var) -> Var {
        let x = &self.nodes[input.0].data;
        let mut acc = 0.0f64;
        for v in x {
            acc += *v as f64;
        }
        let mean = (acc / x.len() as f64) as f32;
        self.push(vec![1], vec![mean], Op::MeanAll { input })
    }

    pub fn sum_all(&mut self, input: Var) -> Var {
        let x = &self.nodes[input.0].data;
        let mut acc = 0.0f64;
        for v in x {
            acc += *v as f64;
        }
        self.push(vec![1], vec![acc as f32], Op::SumAll { input })
    }

    pub fn add_scalar(&mut self, input: Var, value: f32) -> Var {
        let data: Vec<f32> = self.nodes[input.0].data.iter().map(|v| v + value).collect();
        let shape = self.nodes[input.0].shape.clone();
        self.push(shape, data, Op::AddScalar { input })
    }

    pub fn scale(&mut self, input: Var, value: f32) -> Var {
        let data: Vec<f32> = self.nodes[input.0].data.iter().map(|v| v * value).collect();
        let shape = self.nodes[input.0].shape.clone();
        self.push(shape, data, Op::Scale { input, value })
    }

    /// Reverse pass from a scalar loss. Each call propagates a fresh
    /// unit seed and adds the results into the persistent per-node grad
    /// buffers, so repeated calls without a reset accumulate.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes[loss.0].data.len() != 1 {
            return Err(TensorError::NonScalarLoss {
                elements: self.nodes[loss.0].data.len(),
            });
        }
        let mut scratch: Vec<Option<Vec<f32>>> = vec![None; loss.0 + 1];
        scratch[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(gout) = scratch[idx].take() else {
                continue;
            };
            self.propagate(idx, &gout, &mut scratch);
            let len = self.nodes[idx].data.len();
            let grad = self.nodes[idx].grad.get_or_insert_with(|| vec![0.0; len]);
            for (g, d) in grad.iter_mut().zip(&gout) {
                *g += d;
            }
        }
        Ok(())
    }

    fn propagate(&self, idx: usize, gout: &[f32], scratch: &mut [Option<Vec<f32>>]) {
        match &self.nodes[idx].op {
            Op::Leaf => {}
            Op::Conv2d {
                input,
                weight,
                bias,
                stride,
            } => {
                let (ci, h, w) = match self.nodes[input.0].shape[..] {
                    [c, h, w] => (c, h, w),
                    _ => unreachable!(),
                };
                let (co, k) = match self.nodes[weight.0].shape[..] {
                    [co, _, k, _] => (co, k),
                    _ => unreachable!(),
                };
                let (oh, ow) = (self.nodes[idx].shape[1], self.nodes[idx].shape[2]);
                let (dinput, dweight, dbias) = conv2d_backward(
                    gout,
                    &self.nodes[input.0].data,
                    (ci, h, w),
                    &self.nodes[weight.0].data,
                    (co, k),
                    *stride,
                    (oh, ow),
                );
                scratch_add(scratch, *input, &dinput);
                scratch_add64(scratch, *weight, &dweight);
                scratch_add64(scratch, *bias, &dbias);
            }
            Op::FullyConnected {
                input,
                weight,
                bias,
            } => {
                let n = self.nodes[input.0].data.len();
                let m = gout.len();
                let x = &self.nodes[input.0].data;
                let wgt = &self.nodes[weight.0].data;
                let mut dinput = vec![0.0f64; n];
                let mut dweight = vec![0.0f64; m * n];
                for i in 0..m {
                    let g = gout[i] as f64;
                    for j in 0..n {
                        dinput[j] += g * wgt[i * n + j] as f64;
                        dweight[i * n + j] += g * x[j] as f64;
                    }
                }
                scratch_add64(scratch, *input, &dinput);
                scratch_add64(scratch, *weight, &dweight);
                scratch_add(scratch, *bias, gout);
            }
            Op::Relu { input } => {
                let delta: Vec<f32> = self.nodes[input.0]
                    .data
                    .iter()
                    .zip(gout)
                    .map(|(x, g)| if *x > 0.0 { *g } else { 0.0 })
                    .collect();
                scratch_add(scratch, *input, &delta);
            }
            Op::Sigmoid { input } => {
                let delta: Vec<f32> = self.nodes[idx]
                    .data
                    .iter()
                    .zip(gout)
                    .map(|(y, g)| g * y * (1.0 - y))
                    .collect();
                scratch_add(scratch, *input, &delta);
            }
            Op::Softmax { input, axis } => {
                let shape = &self.nodes[idx].shape;
                let (outer, len, inner) = axis_strides(shape, *axis);
                let y = &self.nodes[idx].data;
                let mut delta = vec![0.0f32; y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |a: usize| o * len * inner + a * inner + i;
                        let mut dot = 0.0f64;
                        for a in 0..len {
                            dot += gout[at(a)] as f64 * y[at(a)] as f64;
                        }
                        for a in 0..len {
                            let p = at(a);
                            delta[p] = (y[p] as f64 * (gout[p] as f64 - dot)) as f32;
                        }
                    }
                }
                scratch_add(scratch, *input, &delta);
            }
            Op::Clamp01 { input } => {
                let delta: Vec<f32> = self.nodes[input.0]
                    .data
                    .iter()
                    .zip(gout)
                    .map(|(x, g)| if (0.0..=1.0).contains(x) { *g } else { 0.0 })
                    .collect();
                scratch_add(scratch, *input, &delta);
            }
            Op::AvgPoolGlobal { input } => {
                let (c, h, w) = match self.nodes[input.0].shape[..] {
                    [c, h, w] => (c, h, w),
                    _ => unreachable!(),
                };
                let plane = h * w;
                let mut delta = vec![0.0f32; c * plane];
                for ch in 0..c {
                    let g = gout[ch] / plane as f32;
                    delta[ch * plane..(ch + 1) * plane].fill(g);
                }
                scratch_add(scratch, *input, &delta);
            }
            Op::MaxPoolGlobal { input } => {
                let (c, h, w) = match self.nodes[input.0].shape[..] {
                    [c, h, w] => (c, h, w),
                    _ => unreachable!(),
                };
                let plane = h * w;
                let x = &self.nodes[input.0].data;
                let mut delta = vec![0.0f32; c * plane];
                for ch in 0..c {
                    // first maximum wins; ties break deterministically
                    let slice = &x[ch * plane..(ch + 1) * plane];
                    let mut best = 0;
                    for (i, v) in slice.iter().enumerate() {
                        if *v > slice[best] {
                            best = i;
                        }
                    }
                    delta[ch * plane + best] = gout[ch];
                }
                scratch_add(scratch, *input, &delta);
            }
            Op::SlidingAvgPool {
                input,
                window,
                stride,
            } => {
                let (window, stride) = (*window, *stride);
                let (c, h, w) = match self.nodes[input.0].shape[..] {
                    [c, h, w] => (c, h, w),
                    _ => unreachable!(),
                };
                let (oh, ow) = (self.nodes[idx].shape[1], self.nodes[idx].shape[2]);
                let norm = 1.0 / (window * window) as f32;
                let mut delta = vec![0.0f32; c * h * w];
                for ch in 0..c {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let g = gout[ch * oh * ow + oy * ow + ox] * norm;
                            for ky in 0..window {
                                let row = ch * h * w + (oy * stride + ky) * w + ox * stride;
                                for d in &mut delta[row..row + window] {
                                    *d += g;
                                }
                            }
                        }
                    }
                }
                scratch_add(scratch, *input, &delta);
            }
            Op::Add { lhs, rhs } => {
                self.binary_backward(*lhs, *rhs, gout, BinaryKind::Add, scratch);
            }
            Op::Sub { lhs, rhs } => {
                self.binary_backward(*lhs, *rhs, gout, BinaryKind::Sub, scratch);
            }
            Op::Mul { lhs, rhs } => {
                self.binary_backward(*lhs, *rhs, gout, BinaryKind::Mul, scratch);
            }
            Op::BroadcastChannels { input } => {
                let c = self.nodes[input.0].data.len();
                let plane = gout.len() / c;
                let mut delta = vec![0.0f64; c];
                for ch in 0..c {
                    for g in &gout[ch * plane..(ch + 1) * plane] {
                        delta[ch] += *g as f64;
                    }
                }
                scratch_add64(scratch, *input, &delta);
            }
            Op::ConcatChannels { inputs } => {
                let mut offset = 0;
                for v in inputs {
                    let len = self.nodes[v.0].data.len();
                    scratch_add(scratch, *v, &gout[offset..offset + len]);
                    offset += len;
                }
            }
            Op::Reshape { input } => {
                scratch_add(scratch, *input, gout);
            }
            Op::MatMul { lhs, rhs } => {
                let (m, n) = match self.nodes[lhs.0].shape[..] {
                    [m, n] => (m, n),
                    _ => unreachable!(),
                };
                let p = self.nodes[idx].shape[1];
                let a = &self.nodes[lhs.0].data;
                let b = &self.nodes[rhs.0].data;
                let mut da = vec![0.0f64; m * n];
                let mut db = vec![0.0f64; n * p];
                for i in 0..m {
                    for j in 0..p {
                        let g = gout[i * p + j] as f64;
                        for k in 0..n {
                            da[i * n + k] += g * b[k * p + j] as f64;
                            db[k * p + j] += g * a[i * n + k] as f64;
                        }
                    }
                }
                scratch_add64(scratch, *lhs, &da);
                scratch_add64(scratch, *rhs, &db);
            }
            Op::UpsampleNearest { input } => {
                let (c, h, w) = match self.nodes[input.0].shape[..] {
                    [c, h, w] => (c, h, w),
                    _ => unreachable!(),
                };
                let (th, tw) = (self.nodes[idx].shape[1], self.nodes[idx].shape[2]);
                let mut delta = vec![0.0f64; c * h * w];
                for ch in 0..c {
                    for y in 0..th {
                        let sy = y * h / th;
                        for xcol in 0..tw {
                            let sx = xcol * w / tw;
                            delta[ch * h * w + sy * w + sx] +=
                                gout[ch * th * tw + y * tw + xcol] as f64;
                        }
                    }
                }
                scratch_add64(scratch, *input, &delta);
            }
            Op::MeanAll { input } => {
                let n = self.nodes[input.0].data.len();
                let g = gout[0] / n as f32;
                scratch_add(scratch, *input, &vec![g; n]);
            }
            Op::SumAll { input } => {
                let n = self.nodes[input.0].data.len();
                scratch_add(scratch, *input, &vec![gout[0]; n]);
            }
            Op::AddScalar { input } => {
                scratch_add(scratch, *input, gout);
            }
            Op::Scale { input, value } => {
                let delta: Vec<f32> = gout.iter().map(|g| g * value).collect();
                scratch_add(scratch, *input, &delta);
            }
        }
    }

    fn binary_backward(
        &self,
        lhs: Var,
        rhs: Var,
        gout: &[f32],
        kind: BinaryKind,
        scratch: &mut [Option<Vec<f32>>],
    ) {
        let pattern = broadcast_pattern(
            &self.nodes[lhs.0].shape,
            &self.nodes[rhs.0].shape,
            "backward",
        )
        .expect("checked in forward");
        match kind {
            BinaryKind::Add | BinaryKind::Sub => {
                let sign = if matches!(kind, BinaryKind::Sub) { -1.0 } else { 1.0 };
                match pattern {
                    Broadcast::None => {
                        scratch_add(scratch, lhs, gout);
                        let delta: Vec<f32> = gout.iter().map(|g| g * sign).collect();
                        scratch_add(scratch, rhs, &delta);
                    }
                    Broadcast::LhsMap { c, plane } => {
                        let mut dmap = vec![0.0f64; plane];
                        for ch in 0..c {
                            for i in 0..plane {
                                dmap[i] += gout[ch * plane + i] as f64;
                            }
                        }
                        scratch_add64(scratch, lhs, &dmap);
                        let delta: Vec<f32> = gout.iter().map(|g| g * sign).collect();
                        scratch_add(scratch, rhs, &delta);
                    }
                    Broadcast::RhsMap { c, plane } => {
                        scratch_add(scratch, lhs, gout);
                        let mut dmap = vec![0.0f64; plane];
                        for ch in 0..c {
                            for i in 0..plane {
                                dmap[i] += sign as f64 * gout[ch * plane + i] as f64;
                            }
                        }
                        scratch_add64(scratch, rhs, &dmap);
                    }
                }
            }
            BinaryKind::Mul => {
                let a = &self.nodes[lhs.0].data;
                let b = &self.nodes[rhs.0].data;
                match pattern {
                    Broadcast::None => {
                        let da: Vec<f32> = gout.iter().zip(b).map(|(g, y)| g * y).collect();
                        let db: Vec<f32> = gout.iter().zip(a).map(|(g, x)| g * x).collect();
                        scratch_add(scratch, lhs, &da);
                        scratch_add(scratch, rhs, &db);
                    }
                    Broadcast::LhsMap { c, plane } => {
                        let mut dmap = vec![0.0f64; plane];
                        let mut dfull = vec![0.0f32; c * plane];
                        for ch in 0..c {
                            for i in 0..plane {
                                let g = gout[ch * plane + i];
                                dmap[i] += g as f64 * b[ch * plane + i] as f64;
                                dfull[ch * plane + i] = g * a[i];
                            }
                        }
                        scratch_add64(scratch, lhs, &dmap);
                        scratch_add(scratch, rhs, &dfull);
                    }
                    Broadcast::RhsMap { c, plane } => {
                        let mut dmap = vec![0.0f64; plane];
                        let mut dfull = vec![0.0f32; c * plane];
                        for ch in 0..c {
                            for i in 0..plane {
                                let g = gout[ch * plane + i];
                                dfull[ch * plane + i] = g * b[i];
                                dmap[i] += g as f64 * a[ch * plane + i] as f64;
                            }
                        }
                        scratch_add(scratch, lhs, &dfull);
                        scratch_add64(scratch, rhs, &dmap);
                    }
                }
            }
        }
    }
}

fn scratch_add(scratch: &mut [Option<Vec<f32>>], v: Var, delta: &[f32]) {
    let buf = scratch[v.0].get_or_insert_with(|| vec![0.0; delta.len()]);
    for (g, d) in buf.iter_mut().zip(delta) {
        *g += d;
    }
}

fn scratch_add64(scratch: &mut [Option<Vec<f32>>], v: Var, delta: &[f64]) {
    let buf = scratch[v.0].get_or_insert_with(|| vec![0.0; delta.len()]);
    for (g, d) in buf.iter_mut().zip(delta) {
        *g += *d as f32;
    }
}

#[derive(Clone, Copy)]
enum BinaryKind {
    Add,
    Sub,
    Mul,
}

enum Broadcast {
    None,
    /// lhs is the `[1,h,w]` map, rhs is `[c,h,w]`
    LhsMap {
        c: usize,
        plane: usize,
    },
    /// rhs is the `[1,h,w]` map, lhs is `[c,h,w]`
    RhsMap {
        c: usize,
        plane: usize,
    },
}

fn broadcast_pattern(lhs: &[usize], rhs: &[usize], op: &'static str) -> Result<Broadcast> {
    if lhs == rhs {
        return Ok(Broadcast::None);
    }
    if let ([1, lh, lw], [c, rh, rw]) = (lhs, rhs) {
        if lh == rh && lw == rw {
            return Ok(Broadcast::LhsMap {
                c: *c,
                plane: lh * lw,
            });
        }
    }
    if let ([c, lh, lw], [1, rh, rw]) = (lhs, rhs) {
        if lh == rh && lw == rw {
            return Ok(Broadcast::RhsMap {
                c: *c,
                plane: lh * lw,
            });
        }
    }
    Err(TensorError::ShapeMismatch {
        op,
        detail: format!("{lhs:?} vs {rhs:?} (only a [1,h,w] map may broadcast against [c,h,w])"),
    })
}

/// (outer, axis length, inner) strides for iterating lines along `axis`.
fn axis_strides(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn conv2d_forward(
    input: &[f32],
    (ci, h, w): (usize, usize, usize),
    weight: &[f32],
    (co, k): (usize, usize),
    bias: &[f32],
    stride: usize,
    (oh, ow): (usize, usize),
) -> Vec<f32> {
    let pad = (k - 1) / 2;
    let mut out = vec![0.0f32; co * oh * ow];
    for oc in 0..co {
        out[oc * oh * ow..(oc + 1) * oh * ow].fill(bias[oc]);
        for ic in 0..ci {
            for ky in 0..k {
                for kx in 0..k {
                    let wgt = weight[((oc * ci + ic) * k + ky) * k + kx];
                    if wgt == 0.0 {
                        continue;
                    }
                    // output x-range whose source column stays inside [0, w)
                    let (lo, hi) = span(kx, pad, stride, w, ow);
                    if lo > hi {
                        continue;
                    }
                    for oy in 0..oh {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let in_row = &input[(ic * h + iy as usize) * w..(ic * h + iy as usize + 1) * w];
                        let out_row = &mut out[(oc * oh + oy) * ow..(oc * oh + oy + 1) * ow];
                        let ix0 = lo * stride + kx - pad;
                        if stride == 1 {
                            let n = hi - lo + 1;
                            for (o, x) in out_row[lo..lo + n].iter_mut().zip(&in_row[ix0..ix0 + n])
                            {
                                *o += wgt * *x;
                            }
                        } else {
                            let mut ix = ix0;
                            for ox in lo..=hi {
                                out_row[ox] += wgt * in_row[ix];
                                ix += stride;
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Valid output index range along one axis for kernel offset `kx`.
fn span(kx: usize, pad: usize, stride: usize, extent: usize, out_extent: usize) -> (usize, usize) {
    let lo = if pad > kx {
        (pad - kx).div_ceil(stride)
    } else {
        0
    };
    let hi_raw = (extent - 1 + pad).saturating_sub(kx) / stride;
    let hi = hi_raw.min(out_extent.saturating_sub(1));
    (lo, hi)
}

#[allow(clippy::type_complexity)]
fn conv2d_backward(
    gout: &[f32],
    input: &[f32],
    (ci, h, w): (usize, usize, usize),
    weight: &[f32],
    (co, k): (usize, usize),
    stride: usize,
    (oh, ow): (usize, usize),
) -> (Vec<f32>, Vec<f64>, Vec<f64>) {
    let pad = (k - 1) / 2;
    let mut dinput = vec![0.0f32; ci * h * w];
    let mut dweight = vec![0.0f64; co * ci * k * k];
    let mut dbias = vec![0.0f64; co];
    for oc in 0..co {
        let mut bacc = 0.0f64;
        for g in &gout[oc * oh * ow..(oc + 1) * oh * ow] {
            bacc += *g as f64;
        }
        dbias[oc] = bacc;
        for ic in 0..ci {
            for ky in 0..k {
                for kx in 0..k {
                    let wgt = weight[((oc * ci + ic) * k + ky) * k + kx];
                    let (lo, hi) = span(kx, pad, stride, w, ow);
                    if lo > hi {
                        continue;
                    }
                    let mut wacc = 0.0f64;
                    for oy in 0..oh {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let in_row =
                            &input[(ic * h + iy as usize) * w..(ic * h + iy as usize + 1) * w];
                        let din_row = &mut dinput
                            [(ic * h + iy as usize) * w..(ic * h + iy as usize + 1) * w];
                        let g_row = &gout[(oc * oh + oy) * ow..(oc * oh + oy + 1) * ow];
                        let ix0 = lo * stride + kx - pad;
                        if stride == 1 {
                            let n = hi - lo + 1;
                            for ((g, x), d) in g_row[lo..lo + n]
                                .iter()
                                .zip(&in_row[ix0..ix0 + n])
                                .zip(&mut din_row[ix0..ix0 + n])
                            {
                                wacc += *g as f64 * *x as f64;
                                *d += wgt * *g;
                            }
                        } else {
                            let mut ix = ix0;
                            for ox in lo..=hi {
                                let g = g_row[ox];
                                wacc += g as f64 * in_row[ix] as f64;
                                din_row[ix] += wgt * g;
                                ix += stride;
                            }
                        }
                    }
                    dweight[((oc * ci + ic) * k + ky) * k + kx] += wacc;
                }
            }
        }
    }
    (dinput, dweight, dbias)
}
