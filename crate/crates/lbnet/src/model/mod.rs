//! Network definition: parameter store, CNN blocks, transformer blocks,
//! the assembled model, and the cost profiler.

pub mod blocks;
pub mod lbnet;
pub mod params;
pub mod profile;
pub mod symmetric;
pub mod transformer;

pub use lbnet::{FusionMode, LBNet, ModelConfig};
pub use params::ParamSet;
pub use profile::{format_count, profile, ProfileReport};
