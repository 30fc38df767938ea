//! TOML run configuration. Every key is optional; present keys override the
//! built-in defaults and are in turn overridden by command line flags.
//!
//! ```toml
//! lambda = 0.025
//! beta = 2.25
//! gamma = 0.9
//! outer_iterations = 100
//! inner_iterations = 25
//! alpha = 0.001
//! seed = 0
//! ramp_steps = 100
//!
//! [net]
//! channels = [16, 32, 64]
//! skip_channels = [4, 4, 4]
//! ```

use std::path::Path;

use serde::Deserialize;

use crate::admm::{RunConfig, Seeds};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetOverrides {
    pub input_channels: Option<usize>,
    pub channels: Option<Vec<usize>>,
    pub skip_channels: Option<Vec<usize>>,
    pub kernel_size: Option<usize>,
    pub leaky_slope: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub lambda: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub outer_iterations: Option<usize>,
    pub inner_iterations: Option<usize>,
    pub alpha: Option<f64>,
    pub seed: Option<u64>,
    pub ramp_steps: Option<usize>,
    pub epsilon: Option<f64>,
    pub net: Option<NetOverrides>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Overlays the present keys onto `base`.
    pub fn apply(&self, mut base: RunConfig) -> RunConfig {
        macro_rules! set {
            ($($field:ident => $target:ident),*) => {
                $(if let Some(v) = self.$field { base.$target = v; })*
            };
        }
        set!(lambda => lambda, beta => beta, gamma => gamma, alpha => alpha,
             outer_iterations => outer_iterations, inner_iterations => inner_iterations,
             ramp_steps => ramp_steps, epsilon => epsilon);
        if let Some(seed) = self.seed {
            base.seeds = Seeds::from_master(seed);
        }
        if let Some(net) = &self.net {
            if let Some(v) = net.input_channels {
                base.net.input_channels = v;
            }
            if let Some(v) = &net.channels {
                base.net.channels = v.clone();
            }
            if let Some(v) = &net.skip_channels {
                base.net.skip_channels = v.clone();
            }
            if let Some(v) = net.kernel_size {
                base.net.kernel_size = v;
            }
            if let Some(v) = net.leaky_slope {
                base.net.leaky_slope = v;
            }
        }
        base
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_keeps_defaults() {
        let base = RunConfig::smoothing(3);
        assert_eq!(ConfigFile::parse("").unwrap().apply(base.clone()), base);
    }

    #[test]
    fn overrides() {
        let cfg = ConfigFile::parse(
            "lambda = 0.05\nouter_iterations = 7\nseed = 3\n[net]\nchannels = [8, 8]\nskip_channels = [2, 2]\n",
        )
        .unwrap();
        let out = cfg.apply(RunConfig::smoothing(1));
        assert_eq!(out.lambda, 0.05);
        assert_eq!(out.beta, 2.25);
        assert_eq!(out.outer_iterations, 7);
        assert_eq!(out.seeds, Seeds::from_master(3));
        assert_eq!(out.net.channels, vec![8, 8]);
        assert_eq!(out.net.output_channels, 1);
    }

    #[test]
    fn rejects_unknown_and_mistyped_keys() {
        assert!(ConfigFile::parse("lamda = 0.1").is_err());
        assert!(ConfigFile::parse("lambda = \"big\"").is_err());
        assert!(ConfigFile::parse("[net]\nwidth = 3").is_err());
        assert!(ConfigFile::parse("lambda = ").is_err());
    }
}
