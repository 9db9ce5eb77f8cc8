//! Float math shims over `libm` so the crate stays `no_std`-clean.
//!
//! Everything numeric in this crate routes transcendentals through here;
//! `libm` is a pure-software implementation, which keeps forward passes,
//! golden tensors, and weight files bit-identical across platforms.

#[inline]
pub fn exp(x: f32) -> f32 {
    libm::expf(x)
}

#[inline]
pub fn ln(x: f32) -> f32 {
    libm::logf(x)
}

#[inline]
pub fn sqrt(x: f32) -> f32 {
    libm::sqrtf(x)
}

#[inline]
pub fn floor(x: f32) -> f32 {
    libm::floorf(x)
}

#[inline]
pub fn round(x: f32) -> f32 {
    libm::roundf(x)
}

#[inline]
pub fn exp64(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn sqrt64(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn log10_64(x: f64) -> f64 {
    libm::log10(x)
}

#[inline]
pub fn pow64(x: f64, y: f64) -> f64 {
    libm::pow(x, y)
}

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid(x: f32) -> f32 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_midpoint_and_tails() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(40.0) > 0.999_999);
        assert!(sigmoid(-40.0) < 1e-6);
        // stable form must agree with the naive one where both are safe
        for i in -60..=60 {
            let x = i as f32 * 0.25;
            let naive = 1.0 / (1.0 + exp(-x));
            assert!((sigmoid(x) - naive).abs() < 1e-7);
        }
    }

    #[test]
    fn log10_closed_form() {
        assert_eq!(log10_64(100.0), 2.0);
        assert!((log10_64(400.0) - 2.6020599913279625).abs() < 1e-15);
    }
}
