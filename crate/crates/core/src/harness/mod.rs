//! Experiment documents, seeded runs, axis sweeps and report files.

mod config;
mod report;
mod run;
mod sweep;

pub use config::{emit_config, parse_config, ExperimentConfig, DEFAULT_OUTPUT_DIR};
pub use report::{
    emit_report, read_rounds_jsonl, report_from_dir, runs_from_records, write_accuracy_vs_axis,
    write_accuracy_vs_round, write_rounds_jsonl, write_summary_csv, SummaryRow, SINGLE_RUN_AXIS,
    SUMMARY_HEADER,
};
pub use run::{run_config, ConfigOutcome};
pub use sweep::{run_sweep, AxisValue, SweepAxis, SweepCell, SweepOutcome, SweepSpec};
