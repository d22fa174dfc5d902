//! Exact conditional sampling for stochastic super-resolution of stationary
//! Gaussian microtextures.
//!
//! A low-resolution texture `y = A u` is zoomed back by drawing
//! `X_SR ~ X | A X = y`, where `X` is the Gaussian texture model estimated
//! from a high-resolution reference. All operators are periodic and
//! diagonalized by the DFT, so both the kriging precomputation and each
//! sample cost a handful of FFTs.
//!
//! Conventions: images are `M x N` periodic grids, channel-major then
//! row-major; the forward DFT is unnormalized and the inverse carries `1/MN`.

pub mod adsn;
pub mod degrade;
pub mod error;
pub mod grid;
pub mod io;
pub mod kriging;
pub mod metrics;
pub mod oracle;
pub mod periodic_smooth;
pub mod sampler;

#[cfg(test)]
mod test_util;

pub use adsn::{adsn_covariance_kernel, adsn_sample, compute_texton, draw_standard_noise, Texton, NOISE_GENERATOR};
pub use degrade::{apply_degrade, apply_degrade_adjoint, build_downscale_kernel, keys_cubic, DegradeOperator};
pub use error::{Error, Result};
pub use grid::{conv2_periodic, dft2, flip, gather_subgrid, idft2, scatter_subgrid, subsample, GridImage, SpectralImage, SubgridIndex};
pub use io::{load_image, save_image, BitDepth};
pub use kriging::cache::{load_kernels, save_kernels};
pub use kriging::{apply_kriging, precompute_kernels, solve_kriging_kernels, KrigingKernels, KrigingPrecomputation, DEFAULT_TOL_REL};
pub use metrics::{psnr, ssim, MetricReport};
pub use oracle::{DenseOperator, Oracle};
pub use periodic_smooth::{periodic_component, periodic_smooth_decompose, PeriodicSmoothPair};
pub use sampler::{build_sr_model, mse_statistics, sr_sample, sr_sample_batch, Conditioned, ModelOptions, MseReport, SRModel, SRSample};
