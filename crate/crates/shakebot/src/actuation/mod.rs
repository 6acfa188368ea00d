//! Closed-loop stepper drivetrain model.
//!
//! Static motor feasibility analysis, the calibrated velocity controller
//! (translational to angular velocity), microstep pulse-train generation,
//! execution through the driver boundary, and the safety state machine.

mod driver;
mod safety;
mod step_train;

pub use driver::{
    execute, DriverInterface, LimitSwitch, MockDriver, MockDriverConfig, PositionTap,
    PulseOutcome, SoftEstopEvent, TelemetryLog, TelemetrySample,
};
pub use safety::{SafetyEvent, SafetyState, SafetyStatus};
pub use step_train::{commands_to_step_train, StepDirection, StepPulse, StepTrain};

use crate::error::{Error, Result};
use std::f64::consts::PI;

/// Stepper motor ratings relevant to sizing and pulse generation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotorSpec {
    /// Usable torque at the maximum rated speed, N·m.
    pub torque_at_max_speed: f64,
    /// Maximum rated speed, rev/min.
    pub max_speed_rpm: f64,
    /// Full steps per revolution (200 for a 1.8° motor).
    pub full_steps_per_rev: u32,
    /// Microsteps per revolution as configured on the driver.
    pub microsteps_per_rev: u32,
}

impl MotorSpec {
    pub fn new(
        torque_at_max_speed: f64,
        max_speed_rpm: f64,
        full_steps_per_rev: u32,
        microsteps_per_rev: u32,
    ) -> Result<Self> {
        if !(torque_at_max_speed > 0.0) || !(max_speed_rpm > 0.0) {
            return Err(Error::InvalidMotor(
                "torque and speed ratings must be positive".into(),
            ));
        }
        if full_steps_per_rev == 0
            || microsteps_per_rev < full_steps_per_rev
            || microsteps_per_rev % full_steps_per_rev != 0
        {
            return Err(Error::InvalidMotor(format!(
                "microsteps_per_rev ({microsteps_per_rev}) must be a positive multiple of full_steps_per_rev ({full_steps_per_rev})"
            )));
        }
        Ok(MotorSpec {
            torque_at_max_speed,
            max_speed_rpm,
            full_steps_per_rev,
            microsteps_per_rev,
        })
    }

    /// The closed-loop NEMA 34 used throughout: 1.56 N·m at 1200 RPM,
    /// 1.8° steps microstepped to 2000 per revolution.
    pub fn nema34_closed_loop() -> Self {
        MotorSpec {
            torque_at_max_speed: 1.56,
            max_speed_rpm: 1200.0,
            full_steps_per_rev: 200,
            microsteps_per_rev: 2000,
        }
    }

    /// Maximum rated angular speed in rad/s.
    pub fn max_speed_rad_s(&self) -> f64 {
        self.max_speed_rpm * 2.0 * PI / 60.0
    }
}

/// Belt-and-pulley transmission parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Drivetrain {
    /// Toothed pulley radius r, m.
    pub pulley_radius: f64,
    /// Transmission calibration factor γ (dimensionless, 1.0 nominal).
    pub gamma: f64,
    /// Usable stroke of the bed, m.
    pub travel_limit: f64,
    /// Pulse-rate cap of the signal generator, Hz.
    pub max_pulse_rate_hz: f64,
}

/// Sanity band for the transmission factor.
pub const GAMMA_BAND: (f64, f64) = (0.5, 2.0);

impl Drivetrain {
    pub fn new(
        pulley_radius: f64,
        gamma: f64,
        travel_limit: f64,
        max_pulse_rate_hz: f64,
    ) -> Result<Self> {
        if !(pulley_radius > 0.0) {
            return Err(Error::InvalidDrivetrain(
                "pulley radius must be positive".into(),
            ));
        }
        if !(gamma > GAMMA_BAND.0 && gamma < GAMMA_BAND.1) {
            return Err(Error::FactorOutOfBand {
                factor: gamma,
                lo: GAMMA_BAND.0,
                hi: GAMMA_BAND.1,
            });
        }
        if !(travel_limit > 0.0) || !(max_pulse_rate_hz > 0.0) {
            return Err(Error::InvalidDrivetrain(
                "travel limit and pulse-rate cap must be positive".into(),
            ));
        }
        Ok(Drivetrain {
            pulley_radius,
            gamma,
            travel_limit,
            max_pulse_rate_hz,
        })
    }

    /// 25.91 mm pulley, unit γ, 0.45 m stroke, 6.4 kHz pulse cap.
    pub fn shakebot_default() -> Self {
        Drivetrain {
            pulley_radius: 0.02591,
            gamma: 1.0,
            travel_limit: 0.45,
            max_pulse_rate_hz: 6400.0,
        }
    }

    /// Same drivetrain with a different transmission factor.
    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    /// Planner step resolution: desired bed displacement represented by one
    /// microstep, 2πr/(γ·microsteps). With γ calibrated this equals the
    /// physical translation per step.
    pub fn meters_per_step(&self, motor: &MotorSpec) -> f64 {
        2.0 * PI * self.pulley_radius / (self.gamma * motor.microsteps_per_rev as f64)
    }
}

/// Outcome of the static motor sizing check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibilityReport {
    /// Translational force τ/r at max speed, N.
    pub force: f64,
    /// force / payload mass, m/s².
    pub achievable_accel: f64,
    /// achievable / required acceleration.
    pub accel_margin_ratio: f64,
    /// min(rpm-limited, pulse-rate-limited) belt speed, m/s.
    pub max_belt_speed: f64,
    /// ω_max·r, m/s.
    pub rpm_limited_speed: f64,
    /// pulse cap × step resolution, m/s.
    pub pulse_rate_limited_speed: f64,
    pub required_accel: f64,
    pub required_velocity: f64,
    pub accel_ok: bool,
    pub velocity_ok: bool,
}

impl FeasibilityReport {
    pub fn pass(&self) -> bool {
        self.accel_ok && self.velocity_ok
    }
}

/// Static sizing check: F = τ/r, a = F/m, and the belt-speed ceiling.
/// Failures are reported in the flags, never raised.
pub fn feasibility_check(
    motor: &MotorSpec,
    drivetrain: &Drivetrain,
    payload_mass: f64,
    required_accel: f64,
    required_velocity: f64,
) -> FeasibilityReport {
    let force = motor.torque_at_max_speed / drivetrain.pulley_radius;
    let achievable_accel = force / payload_mass;
    let accel_margin_ratio = achievable_accel / required_accel;
    let rpm_limited_speed = motor.max_speed_rad_s() * drivetrain.pulley_radius;
    let pulse_rate_limited_speed =
        drivetrain.max_pulse_rate_hz * drivetrain.meters_per_step(motor);
    let max_belt_speed = rpm_limited_speed.min(pulse_rate_limited_speed);
    FeasibilityReport {
        force,
        achievable_accel,
        accel_margin_ratio,
        max_belt_speed,
        rpm_limited_speed,
        pulse_rate_limited_speed,
        required_accel,
        required_velocity,
        accel_ok: achievable_accel >= required_accel,
        velocity_ok: max_belt_speed >= required_velocity,
    }
}

/// Calibrated velocity controller: ω′ = γ·v/r, rejected when it exceeds the
/// motor's rated angular speed.
pub fn angular_velocity(v: f64, drivetrain: &Drivetrain, motor: &MotorSpec) -> Result<f64> {
    let omega = drivetrain.gamma * v / drivetrain.pulley_radius;
    let limit = motor.max_speed_rad_s();
    if omega.abs() > limit {
        return Err(Error::OverSpeed {
            requested_rad_s: omega.abs(),
            limit_rad_s: limit,
        });
    }
    Ok(omega)
}
