//! Full-reference image quality metrics: PSNR and SSIM.
//!
//! Both operate on [0,1] float images (MAX = 1) and reduce in f64.
//! SSIM follows the reference recipe: 11x11 Gaussian window with
//! sigma 1.5, K1 = 0.01, K2 = 0.03, valid-window cropping (no padding),
//! averaged over window positions and the three channels.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::fmath;
use crate::physics::Image;
use crate::tensor::{Result, TensorError};

/// Reporting ceiling for PSNR. An exact match is infinite and reports
/// this value with the flag set; near-exact pairs saturate to it.
pub const PSNR_CAP_DB: f64 = 99.0;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;

#[derive(Debug, Clone, PartialEq)]
pub struct QualityReport {
    pub image_id: String,
    /// Capped at [`PSNR_CAP_DB`]; infinite only in the exact-match sense.
    pub psnr_db: f64,
    pub ssim: f64,
    pub exact_match: bool,
}

/// Mean squared error accumulated in f64.
pub fn mse64(a: &Image, b: &Image) -> Result<f64> {
    check_extent(a, b, "mse")?;
    let mut acc = 0.0f64;
    for (x, y) in a.data().iter().zip(b.data()) {
        let d = *x as f64 - *y as f64;
        acc += d * d;
    }
    Ok(acc / a.data().len() as f64)
}

/// `10 * log10(1 / mse)` with the exact-match sentinel and cap.
pub fn psnr_from_mse(mse: f64) -> (f64, bool) {
    if mse == 0.0 {
        (PSNR_CAP_DB, true)
    } else {
        ((10.0 * fmath::log10_64(1.0 / mse)).min(PSNR_CAP_DB), false)
    }
}

pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    Ok(psnr_from_mse(mse64(a, b)?).0)
}

/// Mean SSIM over all valid 11x11 windows and the three channels.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    check_extent(a, b, "ssim")?;
    let (h, w) = (a.height(), a.width());
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(TensorError::InputTooSmall {
            op: "ssim",
            height: h,
            width: w,
            min: SSIM_WINDOW,
        });
    }
    let kernel = gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA);
    let mut total = 0.0f64;
    for c in 0..Image::CHANNELS {
        total += channel_ssim(a.plane(c), b.plane(c), h, w, &kernel);
    }
    Ok(total / Image::CHANNELS as f64)
}

pub fn quality(a: &Image, b: &Image, image_id: &str) -> Result<QualityReport> {
    let (psnr_db, exact_match) = psnr_from_mse(mse64(a, b)?);
    Ok(QualityReport {
        image_id: String::from(image_id),
        psnr_db,
        ssim: ssim(a, b)?,
        exact_match,
    })
}

fn check_extent(a: &Image, b: &Image, op: &'static str) -> Result<()> {
    if a.height() != b.height() || a.width() != b.width() {
        return Err(TensorError::ShapeMismatch {
            op,
            detail: alloc::format!(
                "{}x{} vs {}x{}",
                a.height(),
                a.width(),
                b.height(),
                b.width()
            ),
        });
    }
    Ok(())
}

/// Normalized 1-D Gaussian taps; the 2-D window is its outer product.
fn gaussian_kernel(len: usize, sigma: f64) -> Vec<f64> {
    let mid = (len / 2) as f64;
    let mut taps: Vec<f64> = (0..len)
        .map(|i| {
            let d = i as f64 - mid;
            fmath::exp64(-(d * d) / (2.0 * sigma * sigma))
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// Separable implementation: Gaussian-filter the five moment maps
/// (x, y, x^2, y^2, xy) over valid windows, then combine per position.
fn channel_ssim(x: &[f32], y: &[f32], h: usize, w: usize, kernel: &[f64]) -> f64 {
    const K1: f64 = 0.01;
    const K2: f64 = 0.03;
    let c1 = K1 * K1;
    let c2 = K2 * K2;

    let xs: Vec<f64> = x.iter().map(|v| *v as f64).collect();
    let ys: Vec<f64> = y.iter().map(|v| *v as f64).collect();
    let xx: Vec<f64> = xs.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = ys.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = xs.iter().zip(&ys).map(|(a, b)| a * b).collect();

    let mu_x = filter_valid(&xs, h, w, kernel);
    let mu_y = filter_valid(&ys, h, w, kernel);
    let s_xx = filter_valid(&xx, h, w, kernel);
    let s_yy = filter_valid(&yy, h, w, kernel);
    let s_xy = filter_valid(&xy, h, w, kernel);

    let mut acc = 0.0f64;
    for i in 0..mu_x.len() {
        let (mx, my) = (mu_x[i], mu_y[i]);
        let var_x = s_xx[i] - mx * mx;
        let var_y = s_yy[i] - my * my;
        let cov = s_xy[i] - mx * my;
        acc += ((2.0 * mx * my + c1) * (2.0 * cov + c2))
            / ((mx * mx + my * my + c1) * (var_x + var_y + c2));
    }
    acc / mu_x.len() as f64
}

/// Weighted window sums over fully interior positions, computed as a
/// horizontal pass followed by a vertical pass.
fn filter_valid(src: &[f64], h: usize, w: usize, kernel: &[f64]) -> Vec<f64> {
    let k = kernel.len();
    let ow = w - k + 1;
    let oh = h - k + 1;
    let mut horiz = vec![0.0f64; h * ow];
    for y in 0..h {
        for ox in 0..ow {
            let mut acc = 0.0f64;
            for (i, tap) in kernel.iter().enumerate() {
                acc += tap * src[y * w + ox + i];
            }
            horiz[y * ow + ox] = acc;
        }
    }
    let mut out = vec![0.0f64; oh * ow];
    for oy in 0..oh {
        for ox in 0..ow {
            let mut acc = 0.0f64;
            for (i, tap) in kernel.iter().enumerate() {
                acc += tap * horiz[(oy + i) * ow + ox];
            }
            out[oy * ow + ox] = acc;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn random_image(rng: &mut SplitMix64, h: usize, w: usize) -> Image {
        Image::from_fn(h, w, |_, _, _| rng.uniform(0.0, 1.0))
    }

    #[test]
    fn psnr_exact_match_is_flagged() {
        let img = Image::filled(12, 12, 0.4);
        let (db, exact) = psnr_from_mse(mse64(&img, &img).unwrap());
        assert!(exact);
        assert_eq!(db, PSNR_CAP_DB);
    }

    #[test]
    fn psnr_closed_forms() {
        let (db, exact) = psnr_from_mse(0.01);
        assert!(!exact);
        assert!((db - 20.0).abs() < 1e-9);
        let (db, _) = psnr_from_mse(0.0025);
        assert!((db - 26.020599913279625).abs() < 1e-9);
        // representable difference of exactly 0.5 everywhere: mse = 0.25
        let a = Image::filled(12, 12, 0.0);
        let b = Image::filled(12, 12, 0.5);
        let db = psnr(&a, &b).unwrap();
        assert!((db - 10.0 * fmath::log10_64(4.0)).abs() < 1e-12);
    }

    #[test]
    fn ssim_identical_is_exactly_one() {
        let mut rng = SplitMix64::new(1);
        let img = random_image(&mut rng, 16, 13);
        assert_eq!(ssim(&img, &img).unwrap(), 1.0);
    }

    #[test]
    fn ssim_structural_inversion_scores_low() {
        let mut rng = SplitMix64::new(2);
        let base = Image::from_fn(16, 16, |_, _, _| 0.5 + rng.uniform(-0.25, 0.25));
        let inverted = Image::from_fn(16, 16, |c, y, x| 1.0 - base.get(c, y, x));
        let lightly_noised =
            Image::from_fn(16, 16, |c, y, x| base.get(c, y, x) + rng.uniform(-0.02, 0.02));
        let s_inv = ssim(&base, &inverted).unwrap();
        let s_noise = ssim(&base, &lightly_noised).unwrap();
        assert!(s_inv < 0.2, "inverted structure scored {s_inv}");
        assert!(s_noise > 0.8, "light noise scored {s_noise}");
        assert!(s_inv < s_noise);
    }

    #[test]
    fn metrics_are_symmetric() {
        let mut rng = SplitMix64::new(3);
        let a = random_image(&mut rng, 14, 14);
        let b = random_image(&mut rng, 14, 14);
        assert!((psnr(&a, &b).unwrap() - psnr(&b, &a).unwrap()).abs() < 1e-9);
        assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn ssim_bounded_and_small_image_rejected() {
        let mut rng = SplitMix64::new(4);
        for _ in 0..10 {
            let a = random_image(&mut rng, 12, 12);
            let b = random_image(&mut rng, 12, 12);
            let s = ssim(&a, &b).unwrap();
            assert!((-1.0..=1.0).contains(&s));
        }
        let tiny = Image::filled(8, 8, 0.1);
        assert!(matches!(
            ssim(&tiny, &tiny),
            Err(TensorError::InputTooSmall { min: 11, .. })
        ));
    }

    #[test]
    fn psnr_decreases_along_noise_ladder() {
        let mut rng = SplitMix64::new(5);
        let base = random_image(&mut rng, 16, 16);
        let mut last = f64::INFINITY;
        for level in 1..=5 {
            let amp = level as f32 * 0.05;
            let noisy =
                Image::from_fn(16, 16, |c, y, x| base.get(c, y, x) + rng.uniform(-amp, amp));
            let db = psnr(&base, &noisy).unwrap();
            assert!(db < last, "psnr did not drop at level {level}");
            last = db;
        }
    }

    #[test]
    fn mse_matches_two_pass_oracle() {
        let mut rng = SplitMix64::new(6);
        let a = random_image(&mut rng, 9, 9);
        let b = random_image(&mut rng, 9, 9);
        // two-pass: collect squared diffs, then sum smallest-first
        let mut sq: alloc::vec::Vec<f64> = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| {
                let d = *x as f64 - *y as f64;
                d * d
            })
            .collect();
        sq.sort_by(|p, q| p.partial_cmp(q).unwrap());
        let oracle: f64 = sq.iter().sum::<f64>() / sq.len() as f64;
        assert!((mse64(&a, &b).unwrap() - oracle).abs() < 1e-9);
    }
}
