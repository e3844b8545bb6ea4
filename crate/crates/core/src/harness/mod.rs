//! Experiment orchestration: configuration, frame-parallel runs, frame
//! persistence and report files.

mod config;
mod io;
mod report;
mod run;

pub use config::{ProtocolConfig, REFERENCE_RELAY_EXCESS};
pub use io::{read_container, write_container, Container, ContentKind, FrameBlock, ProcessedArrays, MAGIC, VERSION};
pub use report::{
    emit_report, read_run, write_sweep, CorrelationSummary, EstimateSummary, FrameRow, ParameterEcho, PhaseSummary,
    ScatterSource, Summary, SCATTER_POINTS, SUMMARY_FORMAT,
};
pub use run::{
    calibrate, estimate_run, process_frame, rate_run, receive_frame, run_experiment, run_frame, run_sweep,
    run_with_calibration, simulate_frame, FrameRecord, FrameSummary, Mode, PilotStats, RateSummary, RawFrame,
    RawPayload, ReceivedFrame, RunOutput, RunReport, SweepPoint,
};
