//! Threshold calibration, digital and simulated-physical success rates, TV
//! statistics, the transferability table, and the noise-budget sweep.

mod records;
mod report;
mod sweep;
mod threshold;

pub use records::{
    digital_asr, evaluate_ax, evaluate_grid, mode_models, verify, AxRecord, CellRecord, EvalMode,
    ModelVerdict, ThresholdSet,
};
pub use report::{
    build_report, cell_digital_asr, cell_physical_asr, physical_transferability, plot_series,
    report_csv, tv_statistics, write_report, AblationReport, CellSummary, TransferEntry,
};
pub use sweep::{epsilon_sweep, sweep_curve_csv, sweep_table_csv, SweepConfig, SweepPoint};
pub use threshold::{
    calibrate_model, calibrate_threshold, f1_at, gallery_scores, Calibration, VerificationThreshold,
};
