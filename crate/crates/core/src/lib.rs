//! PriorNet: a ~18 KB single-image dehazing network built around a
//! multidimensional interactive attention block, together with the
//! atmospheric-scattering physics it inverts, a dark-channel-prior
//! baseline, PSNR/SSIM metrics, and a reverse-mode tensor engine
//! small enough to train the whole thing on a CPU.
//!
//! The crate is `no_std` + `alloc`; all float transcendentals go
//! through `libm` so results are bit-reproducible across hosts.
//! File formats, codecs, and the batch CLI live in the companion
//! `priornet-cli` crate.

#![cfg_attr(not(test), no_std)]
// index arithmetic over strided buffers reads better as plain loops
#![allow(clippy::needless_range_loop)]

extern crate alloc;

pub mod attention;
pub mod dcp;
pub mod fmath;
pub mod metrics;
pub mod model;
pub mod physics;
pub mod rng;
pub mod tape;
pub mod tensor;
pub mod train;

pub use tape::{Tape, Var};
pub use tensor::{ParamRegistry, Tensor, TensorError};
