//! Recorded-seismogram ingestion and the acceleration-to-commands pipeline.

use super::filter::{apply_filter, FilterSpec};
use super::VelocityCommandSeries;
use crate::error::{Error, Result};
use std::io::BufRead;
use std::path::Path;

/// A uniformly sampled acceleration record.
#[derive(Debug, Clone, PartialEq)]
pub struct SeismogramRecord {
    /// Sample interval in s.
    pub dt: f64,
    /// Acceleration samples in m/s².
    pub accel: Vec<f64>,
    /// Free-form label (origin, station, scaling notes).
    pub metadata: String,
}

/// Permitted timestamp jitter when validating uniform sampling, in s.
const DT_JITTER_TOL: f64 = 1e-6;

impl SeismogramRecord {
    pub fn new(dt: f64, accel: Vec<f64>, metadata: impl Into<String>) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidSeismogram {
                reason: format!("sample interval must be positive, got {dt}"),
            });
        }
        if accel.is_empty() {
            return Err(Error::InvalidSeismogram {
                reason: "record holds no samples".into(),
            });
        }
        Ok(SeismogramRecord {
            dt,
            accel,
            metadata: metadata.into(),
        })
    }

    pub fn duration(&self) -> f64 {
        (self.accel.len().saturating_sub(1)) as f64 * self.dt
    }

    /// Parse a two-column `time_s,accel_ms2` CSV. Lines starting with `#`
    /// are comments; timestamps must be uniform within 1e-6 s of jitter.
    pub fn from_csv(reader: impl BufRead, metadata: impl Into<String>) -> Result<Self> {
        let mut times = Vec::new();
        let mut accel = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line.map_err(|e| Error::SeismogramFormat {
                line: line_no,
                reason: e.to_string(),
            })?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            // tolerate a textual header row
            if times.is_empty() && trimmed.starts_with("time_s") {
                continue;
            }
            let mut parts = trimmed.split(',');
            let t_str = parts.next().unwrap_or("").trim();
            let a_str = parts.next().unwrap_or("").trim();
            if parts.next().is_some() {
                return Err(Error::SeismogramFormat {
                    line: line_no,
                    reason: "expected exactly two columns: time_s,accel_ms2".into(),
                });
            }
            let t: f64 = t_str.parse().map_err(|_| Error::SeismogramFormat {
                line: line_no,
                reason: format!("bad time value {t_str:?}"),
            })?;
            let a: f64 = a_str.parse().map_err(|_| Error::SeismogramFormat {
                line: line_no,
                reason: format!("bad acceleration value {a_str:?}"),
            })?;
            times.push((line_no, t));
            accel.push(a);
        }
        if times.len() < 2 {
            return Err(Error::InvalidSeismogram {
                reason: format!("need at least 2 samples, got {}", times.len()),
            });
        }
        let t0 = times[0].1;
        let dt = times[1].1 - t0;
        if !(dt > 0.0) {
            return Err(Error::SeismogramFormat {
                line: times[1].0,
                reason: format!("non-increasing time step {dt}"),
            });
        }
        for (i, (line_no, t)) in times.iter().enumerate() {
            let expected = t0 + i as f64 * dt;
            if (t - expected).abs() > DT_JITTER_TOL {
                return Err(Error::SeismogramFormat {
                    line: *line_no,
                    reason: format!(
                        "non-uniform sampling: t = {t}, expected {expected} (dt = {dt})"
                    ),
                });
            }
        }
        SeismogramRecord::new(dt, accel, metadata)
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_csv(
            std::io::BufReader::new(file),
            path.display().to_string(),
        )
    }
}

/// Cumulative trapezoidal integral of a uniformly sampled series, starting
/// from zero.
pub fn cumulative_trapezoid(values: &[f64], dt: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    out.push(0.0);
    for pair in values.windows(2) {
        acc += 0.5 * (pair[0] + pair[1]) * dt;
        out.push(acc);
    }
    out
}

/// Velocity history implied by a record: trapezoidal integration with
/// v(0) = 0.
pub fn integrate_acceleration(record: &SeismogramRecord) -> Vec<f64> {
    cumulative_trapezoid(&record.accel, record.dt)
}

fn resample_linear(values: &[f64], dt: f64, rate_hz: f64) -> Vec<f64> {
    let duration = (values.len() - 1) as f64 * dt;
    let n = (duration * rate_hz * (1.0 + 1e-12)).floor() as usize;
    (0..=n)
        .map(|k| {
            let t = k as f64 / rate_hz;
            let x = (t / dt).min((values.len() - 1) as f64);
            let i = (x.floor() as usize).min(values.len() - 2);
            let frac = x - i as f64;
            values[i] * (1.0 - frac) + values[i + 1] * frac
        })
        .collect()
}

/// Full seismogram pipeline: low-pass the raw accelerations, integrate to
/// velocity, high-pass to strip the drift-causing low-frequency content,
/// resample onto the controller grid, and remove the residual mean so the
/// held command series implies zero net displacement.
pub fn seismogram_to_commands(
    record: &SeismogramRecord,
    lp: &FilterSpec,
    hp: &FilterSpec,
    rate_hz: f64,
) -> Result<VelocityCommandSeries> {
    if !(rate_hz > 0.0) {
        return Err(Error::Config(format!(
            "command rate must be positive, got {rate_hz}"
        )));
    }
    let smoothed = apply_filter(&record.accel, record.dt, lp)?;
    let velocity = cumulative_trapezoid(&smoothed, record.dt);
    let detrended = apply_filter(&velocity, record.dt, hp)?;
    let mut commands = resample_linear(&detrended, record.dt, rate_hz);
    let mean = commands.iter().sum::<f64>() / commands.len() as f64;
    for v in &mut commands {
        *v -= mean;
    }
    Ok(VelocityCommandSeries {
        rate_hz,
        commands,
        t0: 0.0,
    })
}
