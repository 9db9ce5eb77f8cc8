//! Plain-loop f64 reference implementations ("the other route").

use priornet_core::model::{ModelWeights, Variant};

/// FNV-1a fold of every data-dependent branch the network takes:
/// ReLU signs, argmax winners, clamp saturation. Central differences
/// are only valid derivative estimates when the signature is the same
/// at both probe points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GateTrace(pub u64);

impl GateTrace {
    pub fn new() -> Self {
        GateTrace(0xcbf2_9ce4_8422_2325)
    }

    fn fold(&mut self, v: u64) {
        self.0 = (self.0 ^ v).wrapping_mul(0x0000_0100_0000_01b3);
    }

    fn gate(&mut self, open: bool) {
        self.fold(open as u64 + 1);
    }

    fn index(&mut self, i: usize) {
        self.fold(i as u64 ^ 0x9e37_79b9_7f4a_7c15);
    }
}

impl Default for GateTrace {
    fn default() -> Self {
        Self::new()
    }
}

/// f64 tensor for oracle math: shape + data.
#[derive(Debug, Clone)]
pub struct T64 {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl T64 {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn from_f32(shape: &[usize], data: &[f32]) -> Self {
        Self::new(shape.to_vec(), data.iter().map(|v| *v as f64).collect())
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn conv2d(
    input: &[f64],
    (ci, h, w): (usize, usize, usize),
    weight: &[f64],
    (co, k): (usize, usize),
    bias: &[f64],
    stride: usize,
) -> (Vec<f64>, usize, usize) {
    let pad = (k - 1) / 2;
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (w + 2 * pad - k) / stride + 1;
    let mut out = vec![0.0; co * oh * ow];
    for oc in 0..co {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = bias[oc];
                for ic in 0..ci {
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            acc += weight[((oc * ci + ic) * k + ky) * k + kx]
                                * input[(ic * h + iy as usize) * w + ix as usize];
                        }
                    }
                }
                out[(oc * oh + oy) * ow + ox] = acc;
            }
        }
    }
    (out, oh, ow)
}

pub fn fully_connected(input: &[f64], weight: &[f64], bias: &[f64], m: usize, n: usize) -> Vec<f64> {
    (0..m)
        .map(|i| {
            let mut acc = bias[i];
            for j in 0..n {
                acc += weight[i * n + j] * input[j];
            }
            acc
        })
        .collect()
}

pub fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.max(0.0)).collect()
}

pub fn sigmoid_vec(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| sigmoid(*v)).collect()
}

pub fn clamp01(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.clamp(0.0, 1.0)).collect()
}

/// Softmax along `axis` of a tensor with the given shape.
pub fn softmax(x: &[f64], shape: &[usize], axis: usize) -> Vec<f64> {
    let outer: usize = shape[..axis].iter().product();
    let len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let mut out = vec![0.0; x.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |a: usize| o * len * inner + a * inner + i;
            let max = (0..len).map(|a| x[at(a)]).fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for a in 0..len {
                let e = (x[at(a)] - max).exp();
                out[at(a)] = e;
                sum += e;
            }
            for a in 0..len {
                out[at(a)] /= sum;
            }
        }
    }
    out
}

pub fn avg_pool_global(x: &[f64], (c, h, w): (usize, usize, usize)) -> Vec<f64> {
    (0..c)
        .map(|ch| x[ch * h * w..(ch + 1) * h * w].iter().sum::<f64>() / (h * w) as f64)
        .collect()
}

pub fn max_pool_global(x: &[f64], (c, h, w): (usize, usize, usize)) -> Vec<f64> {
    (0..c)
        .map(|ch| {
            x[ch * h * w..(ch + 1) * h * w]
                .iter()
                .fold(f64::NEG_INFINITY, |m, v| m.max(*v))
        })
        .collect()
}

pub fn sliding_avg_pool(
    x: &[f64],
    (c, h, w): (usize, usize, usize),
    window: usize,
    stride: usize,
) -> (Vec<f64>, usize, usize) {
    let oh = (h - window) / stride + 1;
    let ow = (w - window) / stride + 1;
    let mut out = vec![0.0; c * oh * ow];
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0.0;
                for ky in 0..window {
                    for kx in 0..window {
                        acc += x[(ch * h + oy * stride + ky) * w + ox * stride + kx];
                    }
                }
                out[(ch * oh + oy) * ow + ox] = acc / (window * window) as f64;
            }
        }
    }
    (out, oh, ow)
}

pub fn upsample_nearest(
    x: &[f64],
    (c, h, w): (usize, usize, usize),
    th: usize,
    tw: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; c * th * tw];
    for ch in 0..c {
        for y in 0..th {
            for xx in 0..tw {
                out[(ch * th + y) * tw + xx] = x[(ch * h + y * h / th) * w + xx * w / tw];
            }
        }
    }
    out
}

pub fn matmul(a: &[f64], b: &[f64], m: usize, n: usize, p: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * p];
    for i in 0..m {
        for j in 0..p {
            let mut acc = 0.0;
            for k in 0..n {
                acc += a[i * n + k] * b[k * p + j];
            }
            out[i * p + j] = acc;
        }
    }
    out
}

/// Extraction-path layer plan for a config: (c_in, c_out, kernel).
pub fn conv_plan(model: &ModelWeights) -> [(usize, usize, usize); 5] {
    let cfg = model.config();
    let c = cfg.channels_per_conv;
    let k = match cfg.variant {
        Variant::Kernel3Only => [3; 5],
        Variant::MultiKernel => [1, 3, 5, 7, 3],
        _ => [cfg.kernel_size; 5],
    };
    [
        (3, c, k[0]),
        (c, c, k[1]),
        (2 * c, c, k[2]),
        (2 * c, c, k[3]),
        (4 * c, 3, k[4]),
    ]
}

fn concat(parts: &[&[f64]]) -> Vec<f64> {
    let mut out = Vec::new();
    for p in parts {
        out.extend_from_slice(p);
    }
    out
}

/// Reference K(x) forward pass over f64 copies of the parameters (in
/// registry order), mirroring the production layer graph by hand.
pub fn forward_k(
    model: &ModelWeights,
    params: &[Vec<f64>],
    input: &[f64],
    (h, w): (usize, usize),
) -> Vec<f64> {
    forward_k_traced(model, params, input, (h, w), &mut GateTrace::new())
}

fn relu_traced(x: &[f64], trace: &mut GateTrace) -> Vec<f64> {
    x.iter()
        .map(|v| {
            trace.gate(*v > 0.0);
            v.max(0.0)
        })
        .collect()
}

fn forward_k_traced(
    model: &ModelWeights,
    params: &[Vec<f64>],
    input: &[f64],
    (h, w): (usize, usize),
    trace: &mut GateTrace,
) -> Vec<f64> {
    let plan = conv_plan(model);
    let cfg = model.config();
    let conv_relu = |idx: usize, x: &[f64], ci: usize, trace: &mut GateTrace| -> Vec<f64> {
        let (_, co, k) = plan[idx];
        let (out, _, _) = conv2d(x, (ci, h, w), &params[2 * idx], (co, k), &params[2 * idx + 1], 1);
        relu_traced(&out, trace)
    };

    let c = cfg.channels_per_conv;
    let c1 = conv_relu(0, input, 3, trace);
    let c2 = conv_relu(1, &c1, c, trace);
    let cat1 = concat(&[&c1, &c2]);
    let c3 = conv_relu(2, &cat1, 2 * c, trace);
    let cat2 = concat(&[&c2, &c3]);
    let c4 = conv_relu(3, &cat2, 2 * c, trace);
    let cat3 = concat(&[&c1, &c2, &c3, &c4]);

    let fused = 4 * c;
    let gated = match cfg.variant {
        Variant::Full | Variant::MultiKernel => mia(
            cfg.mia_reduction,
            fused,
            &cat3,
            (h, w),
            &params[10..16],
            trace,
        ),
        Variant::ChannelAttentionOnly => {
            let mc = channel_gate(
                cfg.mia_reduction,
                fused,
                &cat3,
                (h, w),
                &params[10],
                &params[11],
                trace,
            );
            scale_channels(&cat3, &mc, h * w)
        }
        Variant::NoMia | Variant::Kernel3Only => cat3,
    };

    let (_, co, k) = plan[4];
    let (k_out, _, _) = conv2d(&gated, (fused, h, w), &params[8], (co, k), &params[9], 1);
    k_out
}

fn channel_gate(
    reduction: usize,
    c: usize,
    x: &[f64],
    (h, w): (usize, usize),
    w0: &[f64],
    w1: &[f64],
    trace: &mut GateTrace,
) -> Vec<f64> {
    let hidden = c / reduction;
    let avg = avg_pool_global(x, (c, h, w));
    // record the winning position so argmax jumps invalidate the probe
    let plane = h * w;
    let max: Vec<f64> = (0..c)
        .map(|ch| {
            let slice = &x[ch * plane..(ch + 1) * plane];
            let mut best = 0;
            for (i, v) in slice.iter().enumerate() {
                if *v > slice[best] {
                    best = i;
                }
            }
            trace.index(best);
            slice[best]
        })
        .collect();
    let path = |p: &[f64], trace: &mut GateTrace| -> Vec<f64> {
        let squeezed = relu_traced(&fully_connected(p, w0, &vec![0.0; hidden], hidden, c), trace);
        fully_connected(&squeezed, w1, &vec![0.0; c], c, hidden)
    };
    let pa = path(&avg, trace);
    let pm = path(&max, trace);
    (0..c).map(|i| sigmoid(pa[i] + pm[i])).collect()
}

fn scale_channels(x: &[f64], gains: &[f64], plane: usize) -> Vec<f64> {
    let mut out = x.to_vec();
    for (ch, g) in gains.iter().enumerate() {
        for v in &mut out[ch * plane..(ch + 1) * plane] {
            *v *= g;
        }
    }
    out
}

fn mia(
    reduction: usize,
    c: usize,
    x: &[f64],
    (h, w): (usize, usize),
    weights: &[Vec<f64>],
    trace: &mut GateTrace,
) -> Vec<f64> {
    let (w0, w1, lw, lb, wq, wv) = (
        &weights[0], &weights[1], &weights[2], &weights[3], &weights[4], &weights[5],
    );
    let plane = h * w;
    let mc = channel_gate(reduction, c, x, (h, w), w0, w1, trace);
    let rescaled = scale_channels(x, &mc, plane);

    // local branch
    let (pooled, ph, pw) = sliding_avg_pool(&rescaled, (c, h, w), 8, 4);
    let mut mixed = vec![0.0; c * ph * pw];
    for py in 0..ph {
        for px in 0..pw {
            for oc in 0..c {
                let mut acc = lb[oc];
                for j in 0..c {
                    acc += lw[oc * c + j] * pooled[(j * ph + py) * pw + px];
                }
                trace.gate(acc > 0.0);
                mixed[(oc * ph + py) * pw + px] = acc.max(0.0);
            }
        }
    }
    let local = upsample_nearest(&mixed, (c, ph, pw), h, w);

    // cross branch
    let project = |m: &[f64], ch: usize, pos: usize| -> f64 {
        (0..c).map(|j| m[ch * c + j] * rescaled[j * plane + pos]).sum()
    };
    let mut q_mean = vec![0.0; c];
    for ch in 0..c {
        let mut acc = 0.0;
        for pos in 0..plane {
            acc += project(wq, ch, pos);
        }
        q_mean[ch] = acc / plane as f64;
    }
    let q = softmax(&q_mean, &[c], 0);
    let cross: Vec<f64> = (0..plane)
        .map(|pos| sigmoid((0..c).map(|ch| q[ch] * project(wv, ch, pos)).sum()))
        .collect();

    // fusion
    let mut out = vec![0.0; c * plane];
    for ch in 0..c {
        for pos in 0..plane {
            let gate = sigmoid(local[ch * plane + pos] * cross[pos]);
            out[ch * plane + pos] = rescaled[ch * plane + pos] * gate;
        }
    }
    out
}

/// Full training objective on one sample: MSE between the clamped
/// restoration and the target.
pub fn priornet_loss(
    model: &ModelWeights,
    params: &[Vec<f64>],
    input: &[f64],
    target: &[f64],
    (h, w): (usize, usize),
) -> f64 {
    priornet_loss_gated(model, params, input, target, (h, w)).0
}

/// Loss plus the gate signature of the forward pass that produced it.
pub fn priornet_loss_gated(
    model: &ModelWeights,
    params: &[Vec<f64>],
    input: &[f64],
    target: &[f64],
    (h, w): (usize, usize),
) -> (f64, GateTrace) {
    let mut trace = GateTrace::new();
    let k = forward_k_traced(model, params, input, (h, w), &mut trace);
    let b = model.config().bias_b as f64;
    let mut acc = 0.0;
    for i in 0..input.len() {
        let raw = k[i] * (input[i] - 1.0) + b;
        trace.gate(raw > 0.0);
        trace.gate(raw < 1.0);
        let d = raw.clamp(0.0, 1.0) - target[i];
        acc += d * d;
    }
    (acc / input.len() as f64, trace)
}

/// f64 copies of a model's parameters in registry order.
pub fn params_f64(model: &ModelWeights) -> Vec<Vec<f64>> {
    model
        .params()
        .iter()
        .map(|(_, t)| t.data().iter().map(|v| *v as f64).collect())
        .collect()
}

/// Direct-formula SSIM: recomputes the 11x11 Gaussian window and the
/// centered moments from scratch at every window position. This is the
/// naive double loop the separable production code must agree with.
pub fn naive_ssim(a: &priornet_core::physics::Image, b: &priornet_core::physics::Image) -> f64 {
    const WINDOW: usize = 11;
    const SIGMA: f64 = 1.5;
    let (h, w) = (a.height(), a.width());
    assert!(h >= WINDOW && w >= WINDOW);

    let mut kernel = [[0.0f64; WINDOW]; WINDOW];
    let mid = (WINDOW / 2) as f64;
    let mut norm = 0.0;
    for (i, row) in kernel.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            let dy = i as f64 - mid;
            let dx = j as f64 - mid;
            *cell = (-(dy * dy + dx * dx) / (2.0 * SIGMA * SIGMA)).exp();
            norm += *cell;
        }
    }
    for row in kernel.iter_mut() {
        for cell in row.iter_mut() {
            *cell /= norm;
        }
    }

    let c1 = 0.01f64 * 0.01;
    let c2 = 0.03f64 * 0.03;
    let mut total = 0.0;
    let mut windows = 0usize;
    for ch in 0..3 {
        let xa = a.plane(ch);
        let xb = b.plane(ch);
        for y0 in 0..=h - WINDOW {
            for x0 in 0..=w - WINDOW {
                let mut mu_a = 0.0;
                let mut mu_b = 0.0;
                for i in 0..WINDOW {
                    for j in 0..WINDOW {
                        let at = (y0 + i) * w + x0 + j;
                        mu_a += kernel[i][j] * xa[at] as f64;
                        mu_b += kernel[i][j] * xb[at] as f64;
                    }
                }
                // centered second moments, unlike the raw-moment route
                let mut var_a = 0.0;
                let mut var_b = 0.0;
                let mut cov = 0.0;
                for i in 0..WINDOW {
                    for j in 0..WINDOW {
                        let at = (y0 + i) * w + x0 + j;
                        let da = xa[at] as f64 - mu_a;
                        let db = xb[at] as f64 - mu_b;
                        var_a += kernel[i][j] * da * da;
                        var_b += kernel[i][j] * db * db;
                        cov += kernel[i][j] * da * db;
                    }
                }
                total += ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
                    / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
                windows += 1;
            }
        }
    }
    total / windows as f64
}
