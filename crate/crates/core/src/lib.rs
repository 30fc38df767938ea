//! Edge-preserving image smoothing by fitting an untrained encoder-decoder
//! network to a single image under an l0 gradient penalty.
//!
//! The penalised objective `||f - g(x)||^2 + lambda * ||grad g(x)||_0` is
//! split with ADMM: the network weights are updated with a few Adam steps,
//! the auxiliary piecewise-constant image is obtained from a region-fusion
//! l0 solver, and the multiplier takes a dual ascent step. Outputs are
//! exponentially averaged across outer iterations.
//!
//! Module map:
//! - [`image`]: dense image tensors, forward differences, l0 counts, losses.
//! - [`fusion`]: the region-fusion l0 gradient solver.
//! - [`net`]: encoder-decoder network, reverse-mode gradients, Adam.
//! - [`admm`]: the outer ADMM driver.
//! - [`metrics`]: PSNR and SSIM.
//! - [`io`], [`synth`], [`report`], [`config`], [`sweep`]: harness pieces
//!   used by the `dipl0` command line tool.

pub mod admm;
pub mod config;
pub mod error;
pub mod fusion;
pub mod image;
pub mod io;
pub mod metrics;
pub mod net;
pub mod report;
pub mod sweep;
pub mod synth;

pub use crate::error::{Error, Result};
pub use crate::image::ImageTensor;

/// Environment variable selecting the execution mode. `parallel` lets the
/// sweep run configurations on a thread pool; anything else (or unset) is the
/// deterministic single-threaded mode.
pub const MODE_ENV: &str = "DIPL0_MODE";

pub fn parallel_mode() -> bool {
    std::env::var(MODE_ENV)
        .map(|v| v.eq_ignore_ascii_case("parallel"))
        .unwrap_or(false)
}
