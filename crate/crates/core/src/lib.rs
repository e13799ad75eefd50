//! Speech enhancement with decision-tree-guided multi-branched encoders.
//!
//! A training corpus is partitioned by an attribute tree (speaker class, SNR
//! regime, optionally frequency band). One denoising model is trained per
//! selected tree node, and a fusion decoder combines their outputs. The crate
//! carries the whole pipeline: corpus synthesis and mixing, the STFT/wavelet
//! front-end, tree construction, a small trainable model zoo, the ensemble
//! itself, objective metrics and a seeded experiment harness.

pub mod corpus;
pub mod dsdt;
pub mod dsp;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod nn;
pub mod seed;

pub use error::{Error, Result};
