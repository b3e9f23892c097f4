use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::layers::{GatLayer, Linear, LstmCell};
use crate::error::{contract, Result};

/// Recurrent encoder + graph attention + recurrent decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StgatConfig {
    /// Hidden size of the motion encoder; this is the intervened feature.
    pub motion_hidden: usize,
    pub gat_heads: usize,
    pub gat_head_dim: usize,
    /// Width of the single-head second attention layer.
    pub gat_out: usize,
    pub graph_hidden: usize,
    pub noise_dim: usize,
    pub decoder_embed: usize,
}

impl Default for StgatConfig {
    fn default() -> Self {
        Self {
            motion_hidden: 32,
            gat_heads: 4,
            gat_head_dim: 8,
            gat_out: 32,
            graph_hidden: 40,
            noise_dim: 16,
            decoder_embed: 16,
        }
    }
}

impl StgatConfig {
    pub fn decoder_hidden(&self) -> usize {
        self.motion_hidden + self.graph_hidden + self.noise_dim
    }
}

/// Spatial graph convolution + temporal convolution encoder with a
/// time-extrapolating convolutional predictor and a Gaussian head.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StgcnnConfig {
    pub hidden: usize,
    pub st_kernel: usize,
    pub txp_layers: usize,
    pub txp_kernel: usize,
}

impl Default for StgcnnConfig {
    fn default() -> Self {
        Self {
            hidden: 40,
            st_kernel: 3,
            txp_layers: 5,
            txp_kernel: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Stgat,
    Stgcnn,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Stgat => "stgat",
            Family::Stgcnn => "stgcnn",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputMode {
    Point,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelConfig {
    Stgat(StgatConfig),
    Stgcnn(StgcnnConfig),
}

impl ModelConfig {
    pub fn stgat() -> Self {
        ModelConfig::Stgat(StgatConfig::default())
    }

    pub fn stgcnn() -> Self {
        ModelConfig::Stgcnn(StgcnnConfig::default())
    }

    pub fn family(&self) -> Family {
        match self {
            ModelConfig::Stgat(_) => Family::Stgat,
            ModelConfig::Stgcnn(_) => Family::Stgcnn,
        }
    }

    pub fn output_mode(&self) -> OutputMode {
        match self {
            ModelConfig::Stgat(_) => OutputMode::Point,
            ModelConfig::Stgcnn(_) => OutputMode::Gaussian,
        }
    }

    pub fn noise_dim(&self) -> usize {
        match self {
            ModelConfig::Stgat(c) => c.noise_dim,
            ModelConfig::Stgcnn(_) => 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelConfig::Stgat(c) => {
                let sizes = [
                    c.motion_hidden,
                    c.gat_heads,
                    c.gat_head_dim,
                    c.gat_out,
                    c.graph_hidden,
                    c.decoder_embed,
                ];
                if sizes.contains(&0) {
                    return contract(format!("stgat sizes must be >= 1: {c:?}"));
                }
            }
            ModelConfig::Stgcnn(c) => {
                if [c.hidden, c.st_kernel, c.txp_layers, c.txp_kernel].contains(&0) {
                    return contract(format!("stgcnn sizes must be >= 1: {c:?}"));
                }
                if c.st_kernel % 2 == 0 || c.txp_kernel % 2 == 0 {
                    return contract("stgcnn kernels must have odd length");
                }
            }
        }
        Ok(())
    }
}

/// Trainable scalar count from the configuration alone.
pub fn count_parameters(config: &ModelConfig) -> usize {
    match config {
        ModelConfig::Stgat(c) => {
            LstmCell::param_count(2, c.motion_hidden)
                + GatLayer::param_count(c.motion_hidden, c.gat_heads, c.gat_head_dim)
                + GatLayer::param_count(c.gat_heads * c.gat_head_dim, 1, c.gat_out)
                + LstmCell::param_count(c.gat_out, c.graph_hidden)
                + Linear::param_count(2, c.decoder_embed)
                + LstmCell::param_count(c.decoder_embed, c.decoder_hidden())
                + Linear::param_count(c.decoder_hidden(), 2)
        }
        ModelConfig::Stgcnn(c) => {
            let f = c.hidden;
            let conv = |cout: usize, cin: usize, k: usize| cout * cin * k + cout;
            let obs = crate::data::OBS_LEN;
            let pred = crate::data::PRED_LEN;
            Linear::param_count(2, f)
                + conv(f, f, c.st_kernel)
                + Linear::param_count(2, f)
                + conv(pred, obs, c.txp_kernel)
                + (c.txp_layers - 1) * conv(pred, pred, c.txp_kernel)
                + conv(pred, pred, c.txp_kernel)
                + Linear::param_count(f, 5)
        }
    }
}

impl ModelConfig {
    /// Canonical one-line description, e.g. `stgcnn hidden=40 st_kernel=3 ...`.
    pub fn to_text(&self) -> String {
        match self {
            ModelConfig::Stgat(c) => format!(
                "stgat motion_hidden={} gat_heads={} gat_head_dim={} gat_out={} graph_hidden={} noise_dim={} decoder_embed={}",
                c.motion_hidden, c.gat_heads, c.gat_head_dim, c.gat_out, c.graph_hidden, c.noise_dim, c.decoder_embed
            ),
            ModelConfig::Stgcnn(c) => format!(
                "stgcnn hidden={} st_kernel={} txp_layers={} txp_kernel={}",
                c.hidden, c.st_kernel, c.txp_layers, c.txp_kernel
            ),
        }
    }

    /// Inverse of [`ModelConfig::to_text`].
    pub fn from_text(text: &str) -> Result<Self> {
        let mut words = text.split_whitespace();
        let family = words.next().unwrap_or("");
        let mut fields: Vec<(&str, usize)> = Vec::new();
        for w in words {
            let Some((k, v)) = w.split_once('=') else {
                return contract(format!("malformed model field `{w}`"));
            };
            let v = v
                .parse()
                .map_err(|_| crate::Error::Contract(format!("model field `{k}` is not an integer: `{v}`")))?;
            fields.push((k, v));
        }
        let mut config = match family {
            "stgat" => ModelConfig::stgat(),
            "stgcnn" => ModelConfig::stgcnn(),
            other => return contract(format!("unknown model family `{other}`")),
        };
        for (k, v) in fields {
            let slot = match (&mut config, k) {
                (ModelConfig::Stgat(c), "motion_hidden") => &mut c.motion_hidden,
                (ModelConfig::Stgat(c), "gat_heads") => &mut c.gat_heads,
                (ModelConfig::Stgat(c), "gat_head_dim") => &mut c.gat_head_dim,
                (ModelConfig::Stgat(c), "gat_out") => &mut c.gat_out,
                (ModelConfig::Stgat(c), "graph_hidden") => &mut c.graph_hidden,
                (ModelConfig::Stgat(c), "noise_dim") => &mut c.noise_dim,
                (ModelConfig::Stgat(c), "decoder_embed") => &mut c.decoder_embed,
                (ModelConfig::Stgcnn(c), "hidden") => &mut c.hidden,
                (ModelConfig::Stgcnn(c), "st_kernel") => &mut c.st_kernel,
                (ModelConfig::Stgcnn(c), "txp_layers") => &mut c.txp_layers,
                (ModelConfig::Stgcnn(c), "txp_kernel") => &mut c.txp_kernel,
                _ => return contract(format!("unknown {family} field `{k}`")),
            };
            *slot = v;
        }
        config.validate()?;
        Ok(config)
    }
}
