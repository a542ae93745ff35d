//! Metrics, the abnormal-count sweep and report files.

mod metrics;
mod report;
mod sweep;

pub use metrics::{classify, compute_auc, confusion_at_threshold, select_threshold, Confusion, ScoredSet};
pub use report::{
    emit_report, read_scores_csv, scored_set, sweep_svg, write_scores_csv, FrameScore, MetricsSummary, ReportFiles,
    PLOT_FILE, SCORES_FILE, SUMMARY_FILE,
};
pub use sweep::{mean_std, run_sweep, sweep_seed, SweepEntry, SweepResult};
