//! Central finite-difference gradient harness.

/// Step used everywhere: small enough for accuracy, large enough that
/// the f64 oracle differences stay far above rounding noise.
pub const FD_STEP: f64 = 1e-3;

/// Relative tolerance of analytic vs finite-difference gradients.
pub const FD_RTOL: f64 = 1e-4;

/// Gradients below this magnitude are compared absolutely
/// (|a - b| <= FD_RTOL * FD_FLOOR), since relative error on a
/// near-zero f32 gradient is meaningless.
pub const FD_FLOOR: f64 = 1e-3;

/// Central difference of `eval` with respect to `params[i][j]`.
pub fn central_diff(
    eval: &mut dyn FnMut(&[Vec<f64>]) -> f64,
    params: &mut [Vec<f64>],
    i: usize,
    j: usize,
) -> f64 {
    let saved = params[i][j];
    params[i][j] = saved + FD_STEP;
    let plus = eval(params);
    params[i][j] = saved - FD_STEP;
    let minus = eval(params);
    params[i][j] = saved;
    (plus - minus) / (2.0 * FD_STEP)
}

/// Value plus gate signature, as produced by the gated oracles.
pub type GatedEval<'a> = dyn FnMut(&[Vec<f64>]) -> (f64, u64) + 'a;

/// Central difference through a piecewise-smooth function. `eval`
/// returns the value together with a signature of every data-dependent
/// gate taken (ReLU signs, argmax winners, clamp saturation). If a
/// probe point lands on the other side of a gate the quotient is not a
/// derivative estimate at all, so `None` is returned and the caller
/// skips (and counts) the probe.
pub fn central_diff_gated(
    eval: &mut GatedEval<'_>,
    params: &mut [Vec<f64>],
    i: usize,
    j: usize,
    center_sig: u64,
) -> Option<f64> {
    let saved = params[i][j];
    params[i][j] = saved + FD_STEP;
    let (plus, sig_plus) = eval(params);
    params[i][j] = saved - FD_STEP;
    let (minus, sig_minus) = eval(params);
    params[i][j] = saved;
    if sig_plus != center_sig || sig_minus != center_sig {
        return None;
    }
    Some((plus - minus) / (2.0 * FD_STEP))
}

/// True when the analytic gradient agrees with the finite difference.
pub fn grads_agree(analytic: f64, fd: f64) -> bool {
    (analytic - fd).abs() <= FD_RTOL * analytic.abs().max(fd.abs()).max(FD_FLOOR)
}

/// Worst relative mismatch over a gradient vector, for diagnostics.
pub fn max_rel_err(analytic: &[f32], fd: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(fd)
        .map(|(a, f)| {
            let a = *a as f64;
            (a - f).abs() / a.abs().max(f.abs()).max(FD_FLOOR)
        })
        .fold(0.0, f64::max)
}
