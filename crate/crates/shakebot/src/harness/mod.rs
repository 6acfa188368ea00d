//! Experiment harness: configuration, synthetic sensors, end-to-end runs,
//! batch sweeps, the interactive loop, and artifact emission.

mod config;
mod experiment;
mod interactive;
mod synth;

pub use config::{ExperimentConfig, OutcomeSource, SensorConfig};
pub use experiment::{
    append_record, run_seismogram, run_single, run_sweep, write_records_csv,
    write_seismogram_outputs, write_sweep_outputs, ExperimentRecord, FusionSummary, OutcomeLabel,
    RunArtifacts, SeismogramRun, SweepOutput, RECORDS_CSV_HEADER,
};
pub use interactive::interactive_session;
pub use synth::{synthesize_streams, MotionScale, SyntheticStreams};
