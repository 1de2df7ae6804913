//! Imitation score, smoothness, time-warp sweeps, ablation controls and reports.

mod ablation;
mod evaluate;
mod metrics;
mod report;
mod smoothing;

pub use ablation::{run_ablation, training_probe, AblationKind, AblationResult};
pub use evaluate::{evaluate_agent, flexibility_sweep, score_clip, ClipScore, EvalConfig, FlexReport, FlexRow, ScoreReport};
pub use metrics::{error_per_frame, frame_errors, score, score_from_errors, total_error};
pub use report::{emit_report, report_rows, rows_from_csv, rows_to_csv, score_chart_svg, ReportRow, REPORT_HEADER};
pub use smoothing::{
    position_channels, roughness, savitzky_golay, sg_coefficients, smoothness, smoothness_from_roughness,
};
