//! Dark Channel Prior baseline dehazer.
//!
//! Haze-free outdoor patches tend to contain a near-zero intensity in at
//! least one RGB channel; haze lifts that minimum toward the airlight.
//! The classic pipeline estimates airlight from the brightest dark-channel
//! pixels, derives a transmission map from the normalized dark channel,
//! refines it with a guided filter so edges stay crisp, and inverts the
//! scattering model.

use alloc::vec;
use alloc::vec::Vec;

use crate::physics::Image;

pub const DCP_PATCH: usize = 15;
pub const DCP_OMEGA: f32 = 0.95;
pub const DCP_T_MIN: f32 = 0.1;
/// Fraction of pixels (brightest dark-channel first) used for airlight.
pub const DCP_AIRLIGHT_FRACTION: f64 = 0.001;
/// Airlight never estimated below this, so an all-black input stays safe.
pub const DCP_AIRLIGHT_FLOOR: f32 = 0.01;
pub const GUIDED_RADIUS: usize = 20;
pub const GUIDED_EPS: f64 = 1e-3;

/// Transmission refinement step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Refinement {
    /// Guided filter with the gray input as guidance (radius 20, eps 1e-3).
    #[default]
    GuidedFilter,
    /// Plain box blur of the same radius.
    BoxBlur,
}

/// Minimum over RGB and over a patch x patch neighborhood (edge
/// replicated) at every pixel.
pub fn dark_channel(image: &Image, patch: usize) -> Vec<f32> {
    assert!(patch % 2 == 1 && patch >= 1, "patch must be odd and >= 1");
    let (h, w) = (image.height(), image.width());
    let half = (patch / 2) as isize;
    // per-pixel channel minimum first, then the spatial erosion
    let mut chan_min = vec![f32::INFINITY; h * w];
    for c in 0..Image::CHANNELS {
        for (m, v) in chan_min.iter_mut().zip(image.plane(c)) {
            *m = m.min(*v);
        }
    }
    let mut out = vec![0.0f32; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut min = f32::INFINITY;
            for dy in -half..=half {
                let sy = (y as isize + dy).clamp(0, h as isize - 1) as usize;
                for dx in -half..=half {
                    let sx = (x as isize + dx).clamp(0, w as isize - 1) as usize;
                    min = min.min(chan_min[sy * w + sx]);
                }
            }
            out[y * w + x] = min;
        }
    }
    out
}

/// Standard luminance weights; the guided filter wants a gray guide.
pub fn gray(image: &Image) -> Vec<f32> {
    let r = image.plane(0);
    let g = image.plane(1);
    let b = image.plane(2);
    r.iter()
        .zip(g)
        .zip(b)
        .map(|((r, g), b)| 0.299 * r + 0.587 * g + 0.114 * b)
        .collect()
}

/// Per-channel mean of the input over the brightest `DCP_AIRLIGHT_FRACTION`
/// of dark-channel pixels (at least one pixel), floored at
/// `DCP_AIRLIGHT_FLOOR`.
pub fn estimate_airlight(image: &Image, dark: &[f32]) -> [f32; 3] {
    let total = dark.len();
    let keep = ((total as f64 * DCP_AIRLIGHT_FRACTION) as usize).max(1);
    let mut order: Vec<usize> = (0..total).collect();
    order.sort_by(|a, b| dark[*b].partial_cmp(&dark[*a]).unwrap().then(a.cmp(b)));
    let mut airlight = [0.0f32; 3];
    for c in 0..3 {
        let plane = image.plane(c);
        let mut acc = 0.0f64;
        for idx in &order[..keep] {
            acc += plane[*idx] as f64;
        }
        airlight[c] = ((acc / keep as f64) as f32).max(DCP_AIRLIGHT_FLOOR);
    }
    airlight
}

/// Box-filter mean with edge-normalized windows, via an integral image.
pub fn box_filter(src: &[f32], h: usize, w: usize, radius: usize) -> Vec<f32> {
    let mut integral = vec![0.0f64; (h + 1) * (w + 1)];
    for y in 0..h {
        for x in 0..w {
            integral[(y + 1) * (w + 1) + x + 1] = src[y * w + x] as f64
                + integral[y * (w + 1) + x + 1]
                + integral[(y + 1) * (w + 1) + x]
                - integral[y * (w + 1) + x];
        }
    }
    let mut out = vec![0.0f32; h * w];
    for y in 0..h {
        let y0 = y.saturating_sub(radius);
        let y1 = (y + radius + 1).min(h);
        for x in 0..w {
            let x0 = x.saturating_sub(radius);
            let x1 = (x + radius + 1).min(w);
            let sum = integral[y1 * (w + 1) + x1] - integral[y0 * (w + 1) + x1]
                - integral[y1 * (w + 1) + x0]
                + integral[y0 * (w + 1) + x0];
            out[y * w + x] = (sum / ((y1 - y0) * (x1 - x0)) as f64) as f32;
        }
    }
    out
}

/// Edge-preserving smoothing of `input` steered by `guide`.
pub fn guided_filter(
    guide: &[f32],
    input: &[f32],
    h: usize,
    w: usize,
    radius: usize,
    eps: f64,
) -> Vec<f32> {
    let mean_g = box_filter(guide, h, w, radius);
    let mean_i = box_filter(input, h, w, radius);
    let gg: Vec<f32> = guide.iter().map(|v| v * v).collect();
    let gi: Vec<f32> = guide.iter().zip(input).map(|(g, i)| g * i).collect();
    let corr_gg = box_filter(&gg, h, w, radius);
    let corr_gi = box_filter(&gi, h, w, radius);

    let n = h * w;
    let mut a = vec![0.0f32; n];
    let mut b = vec![0.0f32; n];
    for i in 0..n {
        let var_g = corr_gg[i] as f64 - mean_g[i] as f64 * mean_g[i] as f64;
        let cov_gi = corr_gi[i] as f64 - mean_g[i] as f64 * mean_i[i] as f64;
        a[i] = (cov_gi / (var_g + eps)) as f32;
        b[i] = mean_i[i] - a[i] * mean_g[i];
    }
    let mean_a = box_filter(&a, h, w, radius);
    let mean_b = box_filter(&b, h, w, radius);
    (0..n).map(|i| mean_a[i] * guide[i] + mean_b[i]).collect()
}

/// Classical single-image dehazing with default refinement.
pub fn dcp_dehaze(image: &Image) -> Image {
    dcp_dehaze_with(image, Refinement::default())
}

pub fn dcp_dehaze_with(image: &Image, refinement: Refinement) -> Image {
    let (h, w) = (image.height(), image.width());
    let dark = dark_channel(image, DCP_PATCH.min(odd_fit(h, w)));
    let airlight = estimate_airlight(image, &dark);

    // transmission from the dark channel of the airlight-normalized image
    let normalized = Image::from_fn(h, w, |c, y, x| image.get(c, y, x) / airlight[c]);
    let dark_norm = dark_channel(&normalized, DCP_PATCH.min(odd_fit(h, w)));
    let mut t: Vec<f32> = dark_norm
        .iter()
        .map(|d| (1.0 - DCP_OMEGA * d).clamp(DCP_T_MIN, 1.0))
        .collect();

    t = match refinement {
        Refinement::GuidedFilter => guided_filter(&gray(image), &t, h, w, GUIDED_RADIUS, GUIDED_EPS),
        Refinement::BoxBlur => box_filter(&t, h, w, GUIDED_RADIUS),
    };
    // refinement can overshoot; keep the divisor in its safe band
    t.iter_mut().for_each(|v| *v = v.clamp(DCP_T_MIN, 1.0));

    Image::from_fn(h, w, |c, y, x| {
        let a = airlight[c];
        (image.get(c, y, x) - a) / t[y * w + x] + a
    })
}

/// Largest odd patch no wider than the shorter image side.
fn odd_fit(h: usize, w: usize) -> usize {
    let m = h.min(w);
    if m.is_multiple_of(2) {
        (m - 1).max(1)
    } else {
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::psnr;
    use crate::physics::{synthesize_haze, HazeParams, TransmissionMap};
    use crate::rng::SplitMix64;

    #[test]
    fn dark_channel_of_white_is_one() {
        let img = Image::filled(6, 6, 1.0);
        assert!(dark_channel(&img, 3).iter().all(|v| *v == 1.0));
    }

    #[test]
    fn dark_channel_with_zero_channel_is_zero() {
        // blue channel identically zero
        let img = Image::from_fn(6, 6, |c, y, x| if c == 2 { 0.0 } else { 0.3 + 0.05 * (y + x) as f32 });
        assert!(dark_channel(&img, 5).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn dark_channel_matches_brute_force_min() {
        let mut rng = SplitMix64::new(10);
        let img = Image::from_fn(5, 5, |_, _, _| rng.uniform(0.0, 1.0));
        let got = dark_channel(&img, 3);
        for y in 0..5usize {
            for x in 0..5 {
                let mut want = f32::INFINITY;
                for dy in -1isize..=1 {
                    for dx in -1isize..=1 {
                        let sy = (y as isize + dy).clamp(0, 4) as usize;
                        let sx = (x as isize + dx).clamp(0, 4) as usize;
                        for c in 0..3 {
                            want = want.min(img.get(c, sy, sx));
                        }
                    }
                }
                assert_eq!(got[y * 5 + x], want);
            }
        }
    }

    #[test]
    fn dark_channel_scales_with_brightness() {
        let mut rng = SplitMix64::new(11);
        let img = Image::from_fn(6, 6, |_, _, _| rng.uniform(0.0, 1.0));
        let base = dark_channel(&img, 3);
        for c_scale in [0.25f32, 0.5, 1.0] {
            let scaled = Image::from_fn(6, 6, |c, y, x| c_scale * img.get(c, y, x));
            let got = dark_channel(&scaled, 3);
            for (g, b) in got.iter().zip(&base) {
                assert!((g - c_scale * b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn haze_free_scene_passes_nearly_unchanged() {
        // deep shadows keep the dark channel near zero, so t stays near
        // one and the output tracks the input
        let mut rng = SplitMix64::new(14);
        let img = Image::from_fn(32, 32, |c, y, x| {
            if (y / 4 + x / 4) % 2 == 0 {
                rng.uniform(0.0, 0.04)
            } else {
                0.25 + 0.1 * c as f32 + rng.uniform(0.0, 0.3)
            }
        });
        let out = dcp_dehaze(&img);
        assert!(psnr(&out, &img).unwrap() > 20.0);
    }

    #[test]
    fn pure_airlight_restores_to_airlight() {
        let img = Image::filled(24, 24, 0.85);
        let out = dcp_dehaze(&img);
        // numerator I - A is ~0 everywhere, so J stays at A
        for v in out.data() {
            assert!((v - 0.85).abs() < 0.02, "{v}");
        }
    }

    #[test]
    fn all_black_image_does_not_blow_up() {
        let img = Image::filled(20, 20, 0.0);
        let out = dcp_dehaze(&img);
        assert!(out.data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn uniform_haze_psnr_improves() {
        let mut rng = SplitMix64::new(12);
        // textured scene with dark regions, which is where DCP is valid
        let clear = Image::from_fn(32, 32, |c, y, x| {
            let tile = ((y / 8 + x / 8) % 2) as f32 * 0.55;
            tile + 0.08 * c as f32 + rng.uniform(0.0, 0.25)
        });
        let params = HazeParams::uniform(0.9, 1.0, TransmissionMap::constant(32, 32, 0.6));
        let hazy = synthesize_haze(&clear, &params).unwrap();
        let restored = dcp_dehaze(&hazy);
        let before = psnr(&hazy, &clear).unwrap();
        let after = psnr(&restored, &clear).unwrap();
        assert!(
            after > before,
            "dcp did not improve psnr: {before:.2} -> {after:.2}"
        );
    }

    #[test]
    fn box_blur_fallback_also_works() {
        let mut rng = SplitMix64::new(13);
        let clear = Image::from_fn(24, 24, |_, y, x| {
            (((y / 6 + x / 6) % 2) as f32) * 0.5 + rng.uniform(0.0, 0.3)
        });
        let params = HazeParams::uniform(0.85, 1.0, TransmissionMap::constant(24, 24, 0.55));
        let hazy = synthesize_haze(&clear, &params).unwrap();
        let restored = dcp_dehaze_with(&hazy, Refinement::BoxBlur);
        assert!(restored.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
