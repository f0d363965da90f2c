//! The assembled network: configuration, presets, and the full forward pass.

use super::blocks::conv_fwd;
use super::params::{Builder, ParamSet};
use super::symmetric::{register_symmetric, symmetric_fwd};
pub use super::symmetric::FusionMode;
use super::transformer::{register_rt, rt_fwd};
use crate::data::resize;
use crate::error::{Error, Result};
use crate::tensor::{ops, Tape, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub scale: usize,
    pub channels: usize,
    pub n_lffm: usize,
    pub recursions: usize,
    pub tm_count: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    pub ca_reduction: usize,
    pub sa_kernel: usize,
    pub fusion_mode: FusionMode,
    pub qk_reduction: usize,
    pub tm_dim: usize,
    pub rt_enabled: bool,
    pub share_down_weights: bool,
}

impl ModelConfig {
    /// Full-size preset.
    pub fn lbnet(scale: usize) -> Self {
        ModelConfig {
            scale,
            channels: 32,
            n_lffm: 3,
            recursions: 2,
            tm_count: 2,
            heads: 4,
            mlp_ratio: 2,
            ca_reduction: 4,
            sa_kernel: 7,
            fusion_mode: FusionMode::Ca,
            qk_reduction: 2,
            tm_dim: 160,
            rt_enabled: true,
            share_down_weights: true,
        }
    }

    /// Tiny preset: narrower trunk, two fusion modules, three heads.
    pub fn lbnet_t(scale: usize) -> Self {
        ModelConfig {
            channels: 18,
            n_lffm: 2,
            heads: 3,
            ca_reduction: 2,
            tm_dim: 150,
            ..ModelConfig::lbnet(scale)
        }
    }

    pub fn variant(name: &str, scale: usize) -> Result<Self> {
        match name {
            "lbnet" => Ok(ModelConfig::lbnet(scale)),
            "lbnet-t" => Ok(ModelConfig::lbnet_t(scale)),
            other => Err(Error::Config(format!("unknown variant {other} (expected lbnet or lbnet-t)"))),
        }
    }

    /// Check every structural constraint, reporting all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !matches!(self.scale, 2 | 3 | 4) {
            problems.push(format!("scale must be 2, 3, or 4, got {}", self.scale));
        }
        if self.channels < 2 || self.channels % 2 != 0 {
            problems.push(format!("channels must be even and at least 2, got {}", self.channels));
        }
        if self.ca_reduction == 0 || self.channels % self.ca_reduction.max(1) != 0 {
            problems.push(format!(
                "ca_reduction {} must divide channels {}",
                self.ca_reduction, self.channels
            ));
        }
        if self.n_lffm < 1 {
            problems.push("n_lffm must be at least 1".to_string());
        }
        if self.tm_count < 1 {
            problems.push("tm_count must be at least 1".to_string());
        }
        if self.heads < 1 {
            problems.push("heads must be at least 1".to_string());
        }
        if self.mlp_ratio < 1 {
            problems.push("mlp_ratio must be at least 1".to_string());
        }
        if self.sa_kernel % 2 == 0 {
            problems.push(format!("sa_kernel must be odd, got {}", self.sa_kernel));
        }
        if self.qk_reduction == 0 || self.tm_dim % self.qk_reduction.max(1) != 0 {
            problems.push(format!(
                "qk_reduction {} must divide tm_dim {}",
                self.qk_reduction, self.tm_dim
            ));
        }
        if self.heads >= 1 && self.tm_dim % self.heads != 0 {
            problems.push(format!("heads {} must divide tm_dim {}", self.heads, self.tm_dim));
        }
        if self.heads >= 1
            && self.qk_reduction >= 1
            && self.tm_dim % self.qk_reduction == 0
            && (self.tm_dim / self.qk_reduction) % self.heads != 0
        {
            problems.push(format!(
                "heads {} must divide the reduced query width {}",
                self.heads,
                self.tm_dim / self.qk_reduction
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    /// Serialize as `key = value` lines (checkpoint embedding).
    pub fn to_kv_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        put("scale", self.scale.to_string());
        put("channels", self.channels.to_string());
        put("n_lffm", self.n_lffm.to_string());
        put("recursions", self.recursions.to_string());
        put("tm_count", self.tm_count.to_string());
        put("heads", self.heads.to_string());
        put("mlp_ratio", self.mlp_ratio.to_string());
        put("ca_reduction", self.ca_reduction.to_string());
        put("sa_kernel", self.sa_kernel.to_string());
        put("fusion_mode", self.fusion_mode.name().to_string());
        put("qk_reduction", self.qk_reduction.to_string());
        put("tm_dim", self.tm_dim.to_string());
        put("rt_enabled", self.rt_enabled.to_string());
        put("share_down_weights", self.share_down_weights.to_string());
        s
    }

    /// Parse the exact field set written by `to_kv_text`.
    pub fn from_kv_text(text: &str) -> Result<Self> {
        let mut cfg = ModelConfig::lbnet(4);
        let mut seen = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let parse_usize = |v: &str| -> Result<usize> {
                v.parse().map_err(|_| Error::Config(format!("line {}: bad number {v}", lineno + 1)))
            };
            let parse_bool = |v: &str| -> Result<bool> {
                v.parse().map_err(|_| Error::Config(format!("line {}: bad flag {v}", lineno + 1)))
            };
            match key {
                "scale" => cfg.scale = parse_usize(value)?,
                "channels" => cfg.channels = parse_usize(value)?,
                "n_lffm" => cfg.n_lffm = parse_usize(value)?,
                "recursions" => cfg.recursions = parse_usize(value)?,
                "tm_count" => cfg.tm_count = parse_usize(value)?,
                "heads" => cfg.heads = parse_usize(value)?,
                "mlp_ratio" => cfg.mlp_ratio = parse_usize(value)?,
                "ca_reduction" => cfg.ca_reduction = parse_usize(value)?,
                "sa_kernel" => cfg.sa_kernel = parse_usize(value)?,
                "fusion_mode" => cfg.fusion_mode = FusionMode::parse(value)?,
                "qk_reduction" => cfg.qk_reduction = parse_usize(value)?,
                "tm_dim" => cfg.tm_dim = parse_usize(value)?,
                "rt_enabled" => cfg.rt_enabled = parse_bool(value)?,
                "share_down_weights" => cfg.share_down_weights = parse_bool(value)?,
                other => return Err(Error::Config(format!("line {}: unknown key {other}", lineno + 1))),
            }
            if seen.contains(&key.to_string()) {
                return Err(Error::Config(format!("line {}: duplicate key {key}", lineno + 1)));
            }
            seen.push(key.to_string());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub struct LBNet {
    config: ModelConfig,
    params: ParamSet,
}

impl LBNet {
    /// Validate the config and draw fresh parameters from `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut b = Builder::new(seed);
        Self::register(&mut b, &config)?;
        Ok(LBNet { config, params: b.finish() })
    }

    fn register(b: &mut Builder, cfg: &ModelConfig) -> Result<()> {
        b.conv("sf", cfg.channels, 3, 3)?;
        register_symmetric(b, cfg.channels, cfg.n_lffm, cfg.ca_reduction, cfg.sa_kernel, cfg.share_down_weights)?;
        register_rt(b, cfg.channels, cfg.tm_dim, cfg.qk_reduction, cfg.mlp_ratio, cfg.tm_count, cfg.rt_enabled)?;
        // zero-init: a fresh network reproduces its bicubic skip exactly,
        // so training starts from baseline quality rather than noise
        b.conv_zero("recon.conv", 3 * cfg.scale * cfg.scale, cfg.channels, 3)
    }

    /// Adopt externally supplied parameters (checkpoint load). The name
    /// sequence and every shape must match a fresh registration exactly.
    pub fn from_parts(config: ModelConfig, params: ParamSet) -> Result<Self> {
        config.validate()?;
        let mut b = Builder::new(0);
        Self::register(&mut b, &config)?;
        let reference = b.finish();
        if reference.len() != params.len() {
            return Err(Error::Checkpoint(format!(
                "parameter count mismatch: config implies {}, got {}",
                reference.len(),
                params.len()
            )));
        }
        for ((want_name, want), (got_name, got)) in reference.iter().zip(params.iter()) {
            if want_name != got_name {
                return Err(Error::Checkpoint(format!(
                    "parameter order mismatch: expected {want_name}, found {got_name}"
                )));
            }
            if want.shape() != got.shape() {
                return Err(Error::Checkpoint(format!(
                    "{got_name}: shape {:?} does not match config shape {:?}",
                    got.shape(),
                    want.shape()
                )));
            }
        }
        Ok(LBNet { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.total_elements()
    }

    /// Map an `(N,3,h,w)` batch in `[0,1]` to `(N,3,h·s,w·s)`. The learned
    /// path predicts a residual on top of a plain bicubic enlargement.
    pub fn forward(&self, tape: Option<&Tape>, lr: &Tensor) -> Result<Tensor> {
        if lr.rank() != 4 || lr.shape()[1] != 3 {
            return Err(Error::dim("shape", format!("expected (N,3,H,W) input, got {:?}", lr.shape())));
        }
        let cfg = &self.config;
        let p = &self.params;
        let skip = resize::upscale_tensor(tape, lr, cfg.scale)?;
        let shallow = conv_fwd(tape, p, "sf", lr, 1)?;
        let trunk = symmetric_fwd(tape, p, &shallow, cfg.n_lffm, cfg.fusion_mode, cfg.share_down_weights)?;
        let deep = rt_fwd(tape, p, &trunk, cfg.heads, cfg.recursions, cfg.tm_count, cfg.rt_enabled)?;
        let merged = ops::add(tape, &deep, &shallow)?;
        let res = conv_fwd(tape, p, "recon.conv", &merged, 1)?;
        let up = ops::pixel_shuffle(tape, &res, cfg.scale)?;
        ops::add(tape, &up, &skip)
    }
}
