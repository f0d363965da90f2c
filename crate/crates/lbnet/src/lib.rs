//! LBNet: a lightweight bimodal single-image super-resolution network.
//!
//! The crate is self-contained: a small reverse-mode autodiff tensor engine
//! (`tensor`), the network itself plus a complexity profiler (`model`), a PNG
//! and bicubic-degradation data pipeline (`data`), an Adam/cosine training
//! loop with binary checkpoints (`train`), Y-channel PSNR/SSIM evaluation
//! (`eval`), and a thin command-line layer (`cli`).
//!
//! Everything computes in `f64`; only checkpoint storage narrows to `f32`.
//! The runnable entry points live in `examples/` (one per capability) and in
//! the single `lbnet` binary, which exposes `train`, `eval`, `profile`, and
//! `sr` subcommands over the same library calls.

pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
