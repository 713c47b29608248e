//! Plate recognition and patrol toolkit.
//!
//! The crate is organized bottom-up: raster primitives and thresholding in
//! [`imaging`], a deterministic synthetic plate generator in [`synth`],
//! plate localization in [`detection`], a template-matching reader in
//! [`ocr`], a remote multimodal model client in [`lmm`], and the systems
//! layers (registry, event log, notifier, bench, patrol) on top.

pub mod bench;
pub mod config;
pub mod detection;
pub mod imaging;
pub mod lmm;
pub mod mock;
pub mod notify;
pub mod ocr;
pub mod patrol;
pub mod recognizer;
pub mod registry;
pub mod retry;
pub mod scalar;
pub mod synth;

pub use scalar::{Real, Scalar};
