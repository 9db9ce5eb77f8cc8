//! Shared test machinery: an independent 64-bit reference implementation
//! of every network operation, a central-difference gradient harness,
//! and deterministic synthetic scene corpora.
//!
//! Nothing in here touches the tape engine's forward or backward code
//! paths; the oracles are deliberately written as plain nested loops so
//! they can disagree with the production implementation when one of the
//! two is wrong.

#![allow(clippy::needless_range_loop)]

pub mod corpus;
pub mod fd;
pub mod gradcheck;
pub mod oracle;
