use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of the encoder-decoder. `channels[i]` and `skip_channels[i]` are the
/// widths of level `i`; the depth is the number of levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetSpec {
    pub input_channels: usize,
    pub output_channels: usize,
    pub channels: Vec<usize>,
    pub skip_channels: Vec<usize>,
    pub kernel_size: usize,
    pub leaky_slope: f64,
}

impl NetSpec {
    pub const DEFAULT_INPUT_CHANNELS: usize = 32;

    /// Three levels of 16/32/64 channels with 4-channel skips; sized for a
    /// single CPU core.
    pub fn desk_scale(output_channels: usize) -> Self {
        Self {
            input_channels: Self::DEFAULT_INPUT_CHANNELS,
            output_channels,
            channels: vec![16, 32, 64],
            skip_channels: vec![4, 4, 4],
            kernel_size: 3,
            leaky_slope: 0.2,
        }
    }

    /// Five levels of 128 channels, the customary full-size configuration.
    pub fn full_size(output_channels: usize) -> Self {
        Self {
            channels: vec![128; 5],
            skip_channels: vec![4; 5],
            ..Self::desk_scale(output_channels)
        }
    }

    pub fn depth(&self) -> usize {
        self.channels.len()
    }

    /// Input height and width must be multiples of this.
    pub fn alignment(&self) -> usize {
        1 << self.depth()
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() {
            return Err(Error::InvalidSpec("depth must be at least 1".into()));
        }
        if self.channels.len() != self.skip_channels.len() {
            return Err(Error::InvalidSpec(format!(
                "{} levels but {} skip widths",
                self.channels.len(),
                self.skip_channels.len()
            )));
        }
        if self.input_channels == 0
            || self.output_channels == 0
            || self
                .channels
                .iter()
                .chain(&self.skip_channels)
                .any(|&c| c == 0)
        {
            return Err(Error::InvalidSpec(
                "channel counts must be at least 1".into(),
            ));
        }
        if self.kernel_size.is_multiple_of(2) {
            return Err(Error::InvalidSpec(format!(
                "kernel size must be odd, got {}",
                self.kernel_size
            )));
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return Err(Error::InvalidSpec("leaky slope must lie in (0, 1)".into()));
        }
        if self.depth() > 16 {
            return Err(Error::InvalidSpec("depth above 16 is not supported".into()));
        }
        Ok(())
    }
}
