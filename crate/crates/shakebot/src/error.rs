//! Crate-wide error type.
//!
//! One enum covers every subsystem so the CLI can map failures onto its
//! documented exit codes and the FFI layer onto numeric status codes.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // --- ground motion ---
    #[error("kappa (PGV/PGA) must be positive, got {0}")]
    NonPositiveKappa(f64),
    #[error("PGA must be non-negative, got {0}")]
    NegativePga(f64),
    #[error("sample rate {rate_hz} Hz undersamples a {frequency_hz} Hz pulse (need >= {min_hz} Hz)")]
    Undersampled {
        rate_hz: f64,
        frequency_hz: f64,
        min_hz: f64,
    },
    #[error("filter cutoff {cutoff_hz} Hz must lie strictly inside (0, {nyquist_hz}) Hz")]
    CutoffOutOfRange { cutoff_hz: f64, nyquist_hz: f64 },
    #[error("filter order must be >= 1, got {0}")]
    InvalidFilterOrder(usize),
    #[error("series of {len} samples is shorter than the filter warm-up of {min_len}")]
    SeriesTooShort { len: usize, min_len: usize },
    #[error("invalid seismogram: {reason}")]
    InvalidSeismogram { reason: String },
    #[error("seismogram format error at line {line}: {reason}")]
    SeismogramFormat { line: usize, reason: String },

    // --- actuation ---
    #[error("invalid motor specification: {0}")]
    InvalidMotor(String),
    #[error("invalid drivetrain: {0}")]
    InvalidDrivetrain(String),
    #[error(
        "commanded angular velocity {requested_rad_s:.4} rad/s exceeds the motor limit of {limit_rad_s:.4} rad/s"
    )]
    OverSpeed {
        requested_rad_s: f64,
        limit_rad_s: f64,
    },
    #[error("required pulse rate {requested_hz:.1} Hz exceeds the generator cap of {limit_hz:.1} Hz")]
    PulseRateExceeded { requested_hz: f64, limit_hz: f64 },
    #[error(
        "commanded motion spans {required_m:.4} m but the usable stroke is {travel_limit_m:.4} m"
    )]
    StrokeOverflow {
        required_m: f64,
        travel_limit_m: f64,
    },
    #[error("execution refused: safety state is {0}, not Idle")]
    ExecutionRefused(String),
    #[error("feasibility rejected: {0}")]
    FeasibilityRejected(String),
    #[error("driver fault: {0}")]
    DriverFault(String),

    // --- perception ---
    #[error("rotation matrix is not orthonormal within tolerance")]
    NonOrthonormalRotation,
    #[error("bed axis must be a unit vector, |axis| = {0}")]
    NonUnitAxis(f64),
    #[error("no fiducial marker is visible in both frames; displacement estimation failed")]
    NoVisibleMarkers,
    #[error("timestamps must be strictly increasing (violation near t = {0})")]
    NonMonotonicTimestamps(f64),
    #[error("need at least {required} samples, got {got}")]
    InsufficientSamples { required: usize, got: usize },
    #[error("regression design is rank-deficient; samples do not constrain the fit")]
    RankDeficient,

    // --- calibration ---
    #[error("degenerate calibration data: {0}")]
    DegenerateData(String),
    #[error("calibration factor {factor:.4} is outside the sanity band ({lo}, {hi})")]
    FactorOutOfBand { factor: f64, lo: f64, hi: f64 },
    #[error("calibration switch not triggered within the budget of {budget} steps")]
    SwitchNotFound { budget: u64 },

    // --- rocking ---
    #[error("invalid rock specification: {0}")]
    InvalidRockSpec(String),
    #[error("numerical failure in rocking integration at t = {time:.6} s")]
    NumericalFailure { time: f64 },

    // --- harness / IO ---
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// CLI exit code: 0 success, 2 config error, 3 feasibility/stroke
    /// rejection, 4 numerical failure, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::SeismogramFormat { .. } | Error::InvalidSeismogram { .. } => {
                2
            }
            Error::StrokeOverflow { .. }
            | Error::OverSpeed { .. }
            | Error::PulseRateExceeded { .. }
            | Error::FeasibilityRejected(_)
            | Error::Undersampled { .. } => 3,
            Error::NumericalFailure { .. } => 4,
            _ => 1,
        }
    }
}
