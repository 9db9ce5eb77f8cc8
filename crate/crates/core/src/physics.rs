//! Atmospheric scattering model: haze synthesis, the per-pixel scaling
//! field K(x), and the affine restoration that inverts it.
//!
//! A hazy observation forms as `I = J*t + A*(1 - t)` where `J` is the
//! clear scene, `t` the per-pixel transmission, and `A` the airlight.
//! Restoration folds `t` and `A` into a single field so the inverse is
//! one affine map per pixel: `J = K*I - K + b`.

use alloc::vec;
use alloc::vec::Vec;

use crate::fmath;
use crate::tensor::{Result, Tensor, TensorError};

/// Transmission values never drop below this floor.
pub const T_FLOOR: f32 = 0.05;

/// Denominator guard for the K(x) closed form at saturated pixels.
pub const EPS_DEN: f32 = 1e-4;

/// Planar RGB image, channel-major, values in [0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Image {
    pub const CHANNELS: usize = 3;

    /// Values are clamped into [0,1] so the stored image always satisfies
    /// the range invariant.
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Self {
        assert!(height >= 1 && width >= 1, "image dimensions must be >= 1");
        assert_eq!(data.len(), 3 * height * width, "data length vs 3*h*w");
        let data = data.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Self {
            height,
            width,
            data,
        }
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Self {
        Self::new(height, width, vec![value; 3 * height * width])
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(3 * height * width);
        for c in 0..3 {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self::new(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    /// One channel plane as a contiguous slice.
    pub fn plane(&self, c: usize) -> &[f32] {
        let plane = self.height * self.width;
        &self.data[c * plane..(c + 1) * plane]
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(vec![3, self.height, self.width], self.data.clone())
    }

    /// Reinterpret a `[3,h,w]` tensor as an image, clamping into range.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        match t.shape() {
            [3, h, w] => Ok(Self::new(*h, *w, t.data().to_vec())),
            s => Err(TensorError::ShapeMismatch {
                op: "image_from_tensor",
                detail: alloc::format!("expected [3,h,w], got {s:?}"),
            }),
        }
    }

}

/// Relative scene depth, nonnegative, same extent as its paired image.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl DepthMap {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), height * width);
        assert!(
            data.iter().all(|v| v.is_finite() && *v >= 0.0),
            "depth must be finite and nonnegative"
        );
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }
}

/// Per-pixel fraction of scene radiance surviving the medium, in
/// `[T_FLOOR, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionMap {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl TransmissionMap {
    /// Clamps every value into `[T_FLOOR, 1]`.
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), height * width);
        let data = data.into_iter().map(|v| v.clamp(T_FLOOR, 1.0)).collect();
        Self {
            height,
            width,
            data,
        }
    }

    pub fn constant(height: usize, width: usize, t: f32) -> Self {
        Self::new(height, width, vec![t; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.data[y * self.width + x]
    }
}

/// Scattering parameters for one scene.
#[derive(Debug, Clone)]
pub struct HazeParams {
    /// Global atmospheric light per RGB channel, each in [0,1].
    pub atmospheric: [f32; 3],
    /// Scattering coefficient, >= 0.
    pub beta_scatter: f32,
    pub transmission: TransmissionMap,
}

impl HazeParams {
    pub fn uniform(a: f32, beta_scatter: f32, t: TransmissionMap) -> Self {
        Self {
            atmospheric: [a.clamp(0.0, 1.0); 3],
            beta_scatter,
            transmission: t,
        }
    }
}

/// Per-pixel scaling field estimated by the network (or derived in
/// closed form), plus the bias of the affine restoration.
#[derive(Debug, Clone, PartialEq)]
pub struct KMap {
    height: usize,
    width: usize,
    /// 3 channels, channel-major, finite but otherwise unbounded.
    data: Vec<f32>,
    pub bias: f32,
}

impl KMap {
    pub fn new(height: usize, width: usize, data: Vec<f32>, bias: f32) -> Self {
        assert_eq!(data.len(), 3 * height * width);
        Self {
            height,
            width,
            data,
            bias,
        }
    }

    pub fn constant(height: usize, width: usize, k: f32, bias: f32) -> Self {
        Self::new(height, width, vec![k; 3 * height * width], bias)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Beer-Lambert transmission from relative depth:
/// `t = clamp(exp(-beta * d), T_FLOOR, 1)`.
pub fn transmission_from_depth(depth: &DepthMap, beta_scatter: f32) -> TransmissionMap {
    debug_assert!(beta_scatter >= 0.0);
    let data = depth
        .data
        .iter()
        .map(|d| fmath::exp(-beta_scatter * d))
        .collect();
    TransmissionMap::new(depth.height, depth.width, data)
}

/// Forward scattering model: `I = J*t + A*(1 - t)`, saturated to [0,1].
pub fn synthesize_haze(clear: &Image, params: &HazeParams) -> Result<Image> {
    if clear.height != params.transmission.height || clear.width != params.transmission.width {
        return Err(TensorError::ShapeMismatch {
            op: "synthesize_haze",
            detail: alloc::format!(
                "image {}x{} vs transmission {}x{}",
                clear.height,
                clear.width,
                params.transmission.height,
                params.transmission.width
            ),
        });
    }
    let plane = clear.height * clear.width;
    let mut data = vec![0.0f32; 3 * plane];
    for c in 0..3 {
        let a = params.atmospheric[c];
        for i in 0..plane {
            let t = params.transmission.data[i];
            data[c * plane + i] = clear.data[c * plane + i] * t + a * (1.0 - t);
        }
    }
    Ok(Image::new(clear.height, clear.width, data))
}

/// Closed-form K(x) that makes `restore` invert `synthesize_haze`:
/// `K = (1/t) * (I - A)/(I - 1) + (A - b)/(I - 1)`.
///
/// Where `|I - 1| < EPS_DEN` the denominator is replaced by
/// `sign(I-1) * EPS_DEN` (sign of zero taken as -1), which keeps K finite
/// at saturated pixels at the cost of accuracy there.
pub fn ideal_k(hazy: &Image, params: &HazeParams, bias: f32) -> KMap {
    debug_assert!(bias.is_finite());
    let plane = hazy.height * hazy.width;
    let mut data = vec![0.0f32; 3 * plane];
    for c in 0..3 {
        let a = params.atmospheric[c];
        for i in 0..plane {
            let v = hazy.data[c * plane + i];
            let t = params.transmission.data[i];
            let mut den = v - 1.0;
            if den.abs() < EPS_DEN {
                den = if den > 0.0 { EPS_DEN } else { -EPS_DEN };
            }
            data[c * plane + i] = (1.0 / t) * ((v - a) / den) + (a - bias) / den;
        }
    }
    KMap::new(hazy.height, hazy.width, data, bias)
}

/// Affine restoration `J = clamp(K*I - K + b, 0, 1)`, evaluated in the
/// factored form `K*(I - 1) + b`. `I - 1` is exact for `I >= 0.5` and
/// the factoring avoids the `K*I - K` cancellation that otherwise
/// scales rounding error with |K|.
pub fn restore(hazy: &Image, k: &KMap, bias: f32) -> Result<Image> {
    if hazy.height != k.height || hazy.width != k.width {
        return Err(TensorError::ShapeMismatch {
            op: "restore",
            detail: alloc::format!(
                "image {}x{} vs K {}x{}",
                hazy.height,
                hazy.width,
                k.height,
                k.width
            ),
        });
    }
    let data = hazy
        .data
        .iter()
        .zip(&k.data)
        .map(|(i, kv)| kv * (i - 1.0) + bias)
        .collect();
    Ok(Image::new(hazy.height, hazy.width, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn random_image(rng: &mut SplitMix64, h: usize, w: usize) -> Image {
        Image::from_fn(h, w, |_, _, _| rng.uniform(0.0, 1.0))
    }

    #[test]
    fn transmission_closed_forms() {
        let d0 = DepthMap::new(2, 2, vec![0.0; 4]);
        assert!(transmission_from_depth(&d0, 1.2)
            .data()
            .iter()
            .all(|t| *t == 1.0));

        let d = DepthMap::new(1, 2, vec![3.0, 5.0]);
        assert!(transmission_from_depth(&d, 0.0)
            .data()
            .iter()
            .all(|t| *t == 1.0));

        let beta = 0.8f32;
        let half = DepthMap::new(1, 1, vec![core::f32::consts::LN_2 / beta]);
        let t = transmission_from_depth(&half, beta);
        assert!((t.data()[0] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn haze_with_full_transmission_is_identity() {
        let mut rng = SplitMix64::new(1);
        let img = random_image(&mut rng, 4, 5);
        let p = HazeParams::uniform(0.9, 0.0, TransmissionMap::constant(4, 5, 1.0));
        let hazy = synthesize_haze(&img, &p).unwrap();
        assert_eq!(hazy.data(), img.data());
    }

    #[test]
    fn haze_floor_and_midpoint_arithmetic() {
        let mut rng = SplitMix64::new(2);
        let img = random_image(&mut rng, 3, 3);
        let p = HazeParams::uniform(1.0, 10.0, TransmissionMap::constant(3, 3, 0.0));
        // constructor clamps t to the floor
        assert!(p.transmission.data().iter().all(|t| *t == T_FLOOR));
        let hazy = synthesize_haze(&img, &p).unwrap();
        for (h, j) in hazy.data().iter().zip(img.data()) {
            assert!((h - (0.05 * j + 0.95)).abs() < 1e-6);
        }

        let grey = Image::filled(2, 2, 0.5);
        let p2 = HazeParams::uniform(1.0, 1.0, TransmissionMap::constant(2, 2, 0.5));
        let hazy2 = synthesize_haze(&grey, &p2).unwrap();
        assert!(hazy2.data().iter().all(|v| (v - 0.75).abs() < 1e-6));
    }

    #[test]
    fn ideal_k_scalar_hand_case() {
        // I=0.75, A=1, t=0.5, b=1: K = 2 and restore gives back J=0.5
        let hazy = Image::filled(1, 1, 0.75);
        let p = HazeParams::uniform(1.0, 1.0, TransmissionMap::constant(1, 1, 0.5));
        let k = ideal_k(&hazy, &p, 1.0);
        assert!(k.data().iter().all(|v| (v - 2.0).abs() < 1e-5));
        let restored = restore(&hazy, &k, 1.0).unwrap();
        assert!(restored.data().iter().all(|v| (v - 0.5).abs() < 1e-5));
    }

    #[test]
    fn ideal_k_no_haze_reduces_to_identity() {
        // t = 1 and A = b: restore(ideal_k) must give J = I
        let mut rng = SplitMix64::new(3);
        let img = Image::from_fn(4, 4, |_, _, _| rng.uniform(0.0, 0.9));
        let p = HazeParams::uniform(0.8, 0.0, TransmissionMap::constant(4, 4, 1.0));
        let hazy = synthesize_haze(&img, &p).unwrap();
        assert_eq!(hazy.data(), img.data());
        let k = ideal_k(&hazy, &p, 0.8);
        let restored = restore(&hazy, &k, 0.8).unwrap();
        for (r, j) in restored.data().iter().zip(img.data()) {
            assert!((r - j).abs() < 1e-5);
        }
    }

    #[test]
    fn restore_closed_forms() {
        let mut rng = SplitMix64::new(4);
        let img = random_image(&mut rng, 3, 4);
        let identity = KMap::constant(3, 4, 1.0, 1.0);
        let out = restore(&img, &identity, 1.0).unwrap();
        assert_eq!(out.data(), img.data());

        let zero = KMap::constant(3, 4, 0.0, 0.3);
        let flat = restore(&img, &zero, 0.3).unwrap();
        assert!(flat.data().iter().all(|v| (v - 0.3).abs() < 1e-7));
    }

    #[test]
    fn round_trip_recovers_clear_scene() {
        let mut rng = SplitMix64::new(5);
        for case in 0..20 {
            let img = random_image(&mut rng, 8, 8);
            let t = TransmissionMap::new(
                8,
                8,
                (0..64).map(|_| rng.uniform(0.1, 1.0)).collect(),
            );
            let a = rng.uniform(0.5, 1.0);
            let b = if case % 2 == 0 { 1.0 } else { 0.5 };
            let p = HazeParams::uniform(a, 1.0, t);
            let hazy = synthesize_haze(&img, &p).unwrap();
            let k = ideal_k(&hazy, &p, b);
            assert!(k.all_finite());
            let restored = restore(&hazy, &k, b).unwrap();
            for i in 0..hazy.data().len() {
                if (hazy.data()[i] - 1.0).abs() >= 1e-3 {
                    assert!(
                        (restored.data()[i] - img.data()[i]).abs() < 1e-5,
                        "case {case} pixel {i}: {} vs {}",
                        restored.data()[i],
                        img.data()[i]
                    );
                }
            }
        }
    }

    #[test]
    fn lowering_transmission_moves_pixels_toward_airlight() {
        let img = Image::filled(2, 2, 0.2);
        let a = 0.9f32;
        let mut last_gap = f32::INFINITY;
        for step in 0..8 {
            let t = 1.0 - step as f32 * 0.12;
            let p = HazeParams::uniform(a, 1.0, TransmissionMap::constant(2, 2, t));
            let hazy = synthesize_haze(&img, &p).unwrap();
            let gap = (hazy.get(0, 0, 0) - a).abs();
            assert!(gap <= last_gap + 1e-7, "gap grew at step {step}");
            last_gap = gap;
        }
    }

    #[test]
    fn outputs_stay_in_unit_range() {
        let mut rng = SplitMix64::new(6);
        for _ in 0..10 {
            let img = random_image(&mut rng, 5, 5);
            let t = TransmissionMap::new(5, 5, (0..25).map(|_| rng.uniform(0.0, 1.0)).collect());
            let p = HazeParams::uniform(rng.uniform(0.0, 1.0), 1.0, t);
            let hazy = synthesize_haze(&img, &p).unwrap();
            assert!(hazy.data().iter().all(|v| (0.0..=1.0).contains(v)));
            let k = ideal_k(&hazy, &p, 1.0);
            let restored = restore(&hazy, &k, 1.0).unwrap();
            assert!(restored.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let img = Image::filled(4, 4, 0.5);
        let p = HazeParams::uniform(1.0, 1.0, TransmissionMap::constant(3, 4, 0.5));
        assert!(synthesize_haze(&img, &p).is_err());
        let k = KMap::constant(5, 5, 1.0, 1.0);
        assert!(restore(&img, &k, 1.0).is_err());
    }
}
