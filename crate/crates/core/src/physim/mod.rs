//! Simulated print-and-capture: printer quantization and dot gain, lighting,
//! white balance, camera yaw, blur and sensor noise, followed by known-geometry
//! realignment and a sharpness-based cleaning step.

mod evaluate;
mod params;
mod transforms;

pub use evaluate::{physical_asr, physical_evaluation, PhysicalOutcome, PointOutcome};
pub use params::{CaptureGrid, CaptureGridConfig, CaptureParams};
pub use transforms::{
    capture_stages, exposure_factor, kelvin_to_rgb, laplacian_energy, print_and_capture,
    quantize_levels, realign, simulate_capture, simulate_print, white_balance_gains, CaptureStages,
    YawHomography, FILL,
};
