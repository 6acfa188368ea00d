//! Ground-motion synthesis.
//!
//! Converts pulse parameters or recorded seismograms into
//! displacement/velocity/acceleration profiles and uniformly sampled
//! velocity command series for the velocity controller.

mod filter;
mod seismogram;

pub use filter::{apply_filter, FilterKind, FilterSpec};
pub use seismogram::{
    cumulative_trapezoid, integrate_acceleration, seismogram_to_commands, SeismogramRecord,
};

use crate::error::{Error, Result};
use std::f64::consts::PI;

/// Standard gravity in m/s².
pub const STANDARD_GRAVITY: f64 = 9.80665;

/// Single-pulse cosine ground motion, parameterized by amplitude and
/// frequency and, redundantly, by the (PGA, PGV/PGA) pair it derives from.
///
/// The two representations always satisfy `frequency = 1/(2π·kappa)` and
/// `amplitude = pga/(2π·frequency)²`; with the first identity substituted
/// the amplitude reduces to `pga·kappa²`, which is how it is computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseParams {
    /// Displacement amplitude A in m; the bed travels from 0 to 2A and back.
    pub amplitude: f64,
    /// Pulse frequency f in Hz; the pulse lasts exactly 1/f.
    pub frequency: f64,
    /// Peak ground acceleration in m/s².
    pub pga: f64,
    /// PGV/PGA ratio in s.
    pub kappa: f64,
    /// Gravitational acceleration used for unit conversions, m/s².
    pub gravity: f64,
}

impl PulseParams {
    /// Build a pulse from (PGA, PGV/PGA).
    pub fn from_pga_kappa(pga: f64, kappa: f64) -> Result<Self> {
        if !(kappa > 0.0) {
            return Err(Error::NonPositiveKappa(kappa));
        }
        if !(pga >= 0.0) {
            return Err(Error::NegativePga(pga));
        }
        let frequency = 1.0 / (2.0 * PI * kappa);
        let amplitude = pga * kappa * kappa;
        Ok(PulseParams {
            amplitude,
            frequency,
            pga,
            kappa,
            gravity: STANDARD_GRAVITY,
        })
    }

    /// Same pulse with a different gravity constant recorded.
    pub fn with_gravity(mut self, gravity: f64) -> Self {
        self.gravity = gravity;
        self
    }

    /// Peak ground velocity, 2πAf = pga·kappa, in m/s.
    pub fn pgv(&self) -> f64 {
        self.pga * self.kappa
    }

    /// Pulse duration 1/f in s.
    pub fn duration(&self) -> f64 {
        1.0 / self.frequency
    }

    /// Peak bed excursion 2A in m.
    pub fn peak_displacement(&self) -> f64 {
        2.0 * self.amplitude
    }

    /// d(t) = A − A·cos(2πft) for t ∈ [0, 1/f], 0 outside.
    pub fn displacement_at(&self, t: f64) -> f64 {
        if t < 0.0 || t > self.duration() {
            return 0.0;
        }
        self.amplitude * (1.0 - (2.0 * PI * self.frequency * t).cos())
    }

    /// v(t) = 2πAf·sin(2πft) for t ∈ [0, 1/f], 0 outside.
    pub fn velocity_at(&self, t: f64) -> f64 {
        if t < 0.0 || t > self.duration() {
            return 0.0;
        }
        2.0 * PI * self.amplitude * self.frequency * (2.0 * PI * self.frequency * t).sin()
    }

    /// a(t) = (2πf)²A·cos(2πft) for t ∈ [0, 1/f], 0 outside.
    pub fn acceleration_at(&self, t: f64) -> f64 {
        if t < 0.0 || t > self.duration() {
            return 0.0;
        }
        let w = 2.0 * PI * self.frequency;
        w * w * self.amplitude * (w * t).cos()
    }

    /// Check the mutual consistency of the (A, f) and (pga, kappa)
    /// representations to 1e-12 relative.
    pub fn validate(&self) -> Result<()> {
        let f_from_kappa = 1.0 / (2.0 * PI * self.kappa);
        let a_from_pga = self.pga * self.kappa * self.kappa;
        let rel = |x: f64, y: f64| {
            let scale = x.abs().max(y.abs()).max(f64::MIN_POSITIVE);
            (x - y).abs() / scale
        };
        if rel(f_from_kappa, self.frequency) > 1e-12 {
            return Err(Error::Config(format!(
                "inconsistent pulse: frequency {} does not match 1/(2π·kappa) = {}",
                self.frequency, f_from_kappa
            )));
        }
        if self.pga > 0.0 && rel(a_from_pga, self.amplitude) > 1e-12 {
            return Err(Error::Config(format!(
                "inconsistent pulse: amplitude {} does not match pga·kappa² = {}",
                self.amplitude, a_from_pga
            )));
        }
        Ok(())
    }
}

/// Build a pulse from (PGA, PGV/PGA). See [`PulseParams::from_pga_kappa`].
pub fn pulse_from_pga_kappa(pga: f64, kappa: f64) -> Result<PulseParams> {
    PulseParams::from_pga_kappa(pga, kappa)
}

/// Where a profile came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileSource {
    Pulse,
    Seismogram,
}

/// One sample of a ground-motion profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileSample {
    pub t: f64,
    pub d: f64,
    pub v: f64,
    pub a: f64,
}

/// Sampled displacement/velocity/acceleration history of the bed.
#[derive(Debug, Clone)]
pub struct GroundMotionProfile {
    pub samples: Vec<ProfileSample>,
    pub source: ProfileSource,
}

impl GroundMotionProfile {
    pub fn peak_velocity(&self) -> f64 {
        self.samples.iter().map(|s| s.v.abs()).fold(0.0, f64::max)
    }

    pub fn peak_displacement(&self) -> f64 {
        self.samples.iter().map(|s| s.d.abs()).fold(0.0, f64::max)
    }

    pub fn peak_acceleration(&self) -> f64 {
        self.samples.iter().map(|s| s.a.abs()).fold(0.0, f64::max)
    }
}

/// Uniformly sampled desired bed velocities, the shared currency between
/// the trajectory planner / seismogram pipeline and the velocity controller.
///
/// Command `k` is the desired bed velocity over
/// `[t0 + k/rate_hz, t0 + (k+1)/rate_hz)` (zero-order hold).
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityCommandSeries {
    pub rate_hz: f64,
    pub commands: Vec<f64>,
    pub t0: f64,
}

impl VelocityCommandSeries {
    /// Command interval 1/rate in s.
    pub fn dt(&self) -> f64 {
        1.0 / self.rate_hz
    }

    /// Implied duration len/rate in s.
    pub fn duration(&self) -> f64 {
        self.commands.len() as f64 / self.rate_hz
    }

    /// Net displacement of the held (piecewise-constant) command series.
    pub fn net_displacement(&self) -> f64 {
        self.commands.iter().sum::<f64>() * self.dt()
    }

    /// (min, max) of the running displacement, including the zero start.
    pub fn displacement_range(&self) -> (f64, f64) {
        let dt = self.dt();
        let mut pos = 0.0;
        let (mut lo, mut hi) = (0.0f64, 0.0f64);
        for v in &self.commands {
            pos += v * dt;
            lo = lo.min(pos);
            hi = hi.max(pos);
        }
        (lo, hi)
    }

    pub fn peak_velocity(&self) -> f64 {
        self.commands.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }
}

fn check_sample_rate(params: &PulseParams, rate_hz: f64) -> Result<()> {
    let min_hz = 2.0 * params.frequency;
    if rate_hz < min_hz {
        return Err(Error::Undersampled {
            rate_hz,
            frequency_hz: params.frequency,
            min_hz,
        });
    }
    Ok(())
}

/// Sample the pulse kinematics over [0, 1/f].
///
/// The grid is uniform at `sample_rate` with the end point pinned exactly to
/// t = 1/f; the kinematic landmarks t = T/4, T/2 and 3T/4 are inserted when
/// they fall off-grid so the sampled profile carries the exact PGV, peak
/// displacement and acceleration reversal.
pub fn pulse_profile(params: &PulseParams, sample_rate: f64) -> Result<GroundMotionProfile> {
    check_sample_rate(params, sample_rate)?;
    let duration = params.duration();
    let n = (duration * sample_rate).floor() as usize;

    let mut times = Vec::with_capacity(n + 6);
    for k in 0..=n {
        let t = k as f64 / sample_rate;
        if t <= duration {
            times.push(t);
        }
    }
    for landmark in [0.25 * duration, 0.5 * duration, 0.75 * duration, duration] {
        times.push(landmark);
    }
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    times.dedup_by(|a, b| (*a - *b).abs() <= duration * 1e-12);

    let samples = times
        .into_iter()
        .map(|t| ProfileSample {
            t,
            d: params.displacement_at(t),
            v: params.velocity_at(t),
            a: params.acceleration_at(t),
        })
        .collect();
    Ok(GroundMotionProfile {
        samples,
        source: ProfileSource::Pulse,
    })
}

fn sample_commands_to(params: &PulseParams, rate_hz: f64, t_end: f64) -> Vec<f64> {
    let n = (t_end * rate_hz * (1.0 + 1e-12)).floor() as usize;
    (0..=n)
        .map(|k| params.velocity_at(k as f64 / rate_hz))
        .collect()
}

/// Uniformly sample the pulse velocity over the full period [0, 1/f].
pub fn sample_velocity_commands(
    params: &PulseParams,
    rate_hz: f64,
) -> Result<VelocityCommandSeries> {
    check_sample_rate(params, rate_hz)?;
    Ok(VelocityCommandSeries {
        rate_hz,
        commands: sample_commands_to(params, rate_hz, params.duration()),
        t0: 0.0,
    })
}

/// Uniformly sample the pulse velocity over the half period [0, 1/(2f)]:
/// a one-way move of net displacement 2A, used by transmission calibration.
pub fn sample_half_cosine_commands(
    params: &PulseParams,
    rate_hz: f64,
) -> Result<VelocityCommandSeries> {
    check_sample_rate(params, rate_hz)?;
    Ok(VelocityCommandSeries {
        rate_hz,
        commands: sample_commands_to(params, rate_hz, 0.5 * params.duration()),
        t0: 0.0,
    })
}
