//! Image-quality metrics, the paired signed-rank test and the grid/sweep harness.

mod harness;
mod metrics;
mod stats;

pub use harness::{
    acceleration_grid, evaluate_sample, lambda_curve, mean_std, run_grid, CellSummary, GridSpec, ImageRecord, LambdaCurve,
    LambdaPoint, MetricReport, Reconstructor,
};
pub use metrics::{gaussian_taps, psnr, psnr_images, ssim, ssim_images, ssim_with_range, PsnrMode, SSIM_SIGMA, SSIM_WINDOW};
pub use stats::{midranks, wilcoxon_signed_rank, PValueMethod, WilcoxonResult, EXACT_MAX_N};
