//! Driver boundary and the ideal closed-loop mock.
//!
//! The trait is the seam where real hardware (GPIO pulse output, limit
//! switch interrupts) plugs in; the simulator ships a mock that integrates
//! position exactly, one microstep per pulse, which is the closed-loop
//! assumption the velocity controller is calibrated under.

use super::safety::{SafetyEvent, SafetyState, SafetyStatus};
use super::step_train::{StepDirection, StepTrain};
use crate::error::{Error, Result};
use std::cell::Cell;
use std::io::Write;
use std::rc::Rc;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LimitSwitch {
    Lower,
    Upper,
}

/// Result of delivering one pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PulseOutcome {
    Stepped,
    /// The carriage reached a limit switch; position is clamped there.
    LimitHit(LimitSwitch),
}

/// Boundary to the stepper driver stack (driver, motor, encoder).
///
/// Implementations must deliver pulses in call order; the wall-clock timing
/// tolerance for a pulse is ±10% of the commanded inter-pulse interval. The
/// mock implementation is virtual-time and records ground-truth telemetry.
pub trait DriverInterface {
    /// Energize the motor. Must be called before pulsing.
    fn arm(&mut self) -> Result<()>;

    /// Deliver one microstep edge at (virtual or real) time `time`.
    fn pulse(&mut self, direction: StepDirection, time: f64) -> Result<PulseOutcome>;

    /// De-energize the motor. Idempotent.
    fn disable(&mut self);

    /// Drain recorded ground-truth telemetry, if this driver produces any.
    fn take_telemetry(&mut self) -> TelemetryLog {
        TelemetryLog::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TelemetrySample {
    pub time: f64,
    pub position: f64,
    pub velocity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftEstopEvent {
    pub time: f64,
    pub switch: LimitSwitch,
}

/// Ground-truth (time, position, velocity) history from the mock driver.
#[derive(Debug, Clone, Default)]
pub struct TelemetryLog {
    pub samples: Vec<TelemetrySample>,
    pub soft_estop: Option<SoftEstopEvent>,
}

impl TelemetryLog {
    pub fn end_position(&self) -> Option<f64> {
        self.samples.last().map(|s| s.position)
    }

    pub fn start_time(&self) -> f64 {
        self.samples.first().map(|s| s.time).unwrap_or(0.0)
    }

    pub fn end_time(&self) -> f64 {
        self.samples.last().map(|s| s.time).unwrap_or(0.0)
    }

    /// Bed position at `t`, linearly interpolated between samples (the rotor
    /// moves continuously between microsteps). Clamps outside the record.
    pub fn position_at(&self, t: f64) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        if t <= self.samples[0].time {
            return self.samples[0].position;
        }
        if t >= self.samples[self.samples.len() - 1].time {
            return self.samples[self.samples.len() - 1].position;
        }
        let idx = self
            .samples
            .partition_point(|s| s.time <= t)
            .min(self.samples.len() - 1);
        let hi = &self.samples[idx];
        let lo = &self.samples[idx - 1];
        if hi.time <= lo.time {
            return hi.position;
        }
        let frac = (t - lo.time) / (hi.time - lo.time);
        lo.position * (1.0 - frac) + hi.position * frac
    }

    /// `time_s,position_m,velocity_ms` export.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "time_s,position_m,velocity_ms")?;
        for s in &self.samples {
            writeln!(w, "{},{},{}", s.time, s.position, s.velocity)?;
        }
        Ok(())
    }
}

/// Shared read-only view of the mock's instantaneous position, for wiring
/// synthetic sensors to the rig without borrowing the driver.
#[derive(Debug, Clone)]
pub struct PositionTap(Rc<Cell<f64>>);

impl PositionTap {
    pub fn position(&self) -> f64 {
        self.0.get()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MockDriverConfig {
    /// Initial carriage position, m.
    pub start_position: f64,
    /// Physical translation per microstep, m.
    pub meters_per_step: f64,
    /// Limit/calibration switch positions, m.
    pub lower_switch: f64,
    pub upper_switch: f64,
    /// Inject a driver fault on the n-th pulse (test hook).
    pub fault_at_pulse: Option<u64>,
}

impl MockDriverConfig {
    pub fn new(start_position: f64, meters_per_step: f64, stroke: f64) -> Self {
        MockDriverConfig {
            start_position,
            meters_per_step,
            lower_switch: 0.0,
            upper_switch: stroke,
            fault_at_pulse: None,
        }
    }
}

/// Ideal closed-loop rig: every pulse translates the bed by exactly one
/// physical microstep; limit switches clamp and report.
///
/// Position is kept as an integer step count from an anchor, re-anchored
/// whenever a switch clamps the carriage, so long traverses accumulate no
/// floating-point drift and a switch position is an exact origin.
#[derive(Debug)]
pub struct MockDriver {
    anchor: f64,
    steps_from_anchor: i64,
    meters_per_step: f64,
    lower_switch: f64,
    upper_switch: f64,
    armed: bool,
    pulse_count: u64,
    fault_at_pulse: Option<u64>,
    last_time: Option<f64>,
    telemetry: TelemetryLog,
    tap: Rc<Cell<f64>>,
}

impl MockDriver {
    pub fn new(config: MockDriverConfig) -> Self {
        let tap = Rc::new(Cell::new(config.start_position));
        MockDriver {
            anchor: config.start_position,
            steps_from_anchor: 0,
            meters_per_step: config.meters_per_step,
            lower_switch: config.lower_switch,
            upper_switch: config.upper_switch,
            armed: false,
            pulse_count: 0,
            fault_at_pulse: config.fault_at_pulse,
            last_time: None,
            telemetry: TelemetryLog::default(),
            tap,
        }
    }

    /// Rig whose physical step resolution embeds a hidden transmission
    /// factor: one microstep moves the bed 2πr/(γ_true·microsteps).
    pub fn with_hidden_transmission(
        start_position: f64,
        pulley_radius: f64,
        microsteps_per_rev: u32,
        gamma_true: f64,
        stroke: f64,
    ) -> Self {
        let mps = 2.0 * std::f64::consts::PI * pulley_radius
            / (gamma_true * microsteps_per_rev as f64);
        MockDriver::new(MockDriverConfig::new(start_position, mps, stroke))
    }

    pub fn position(&self) -> f64 {
        self.anchor + self.steps_from_anchor as f64 * self.meters_per_step
    }

    pub fn position_tap(&self) -> PositionTap {
        PositionTap(self.tap.clone())
    }

    pub fn physical_meters_per_step(&self) -> f64 {
        self.meters_per_step
    }

    fn record(&mut self, time: f64, velocity: f64) {
        self.telemetry.samples.push(TelemetrySample {
            time,
            position: self.position(),
            velocity,
        });
    }
}

impl DriverInterface for MockDriver {
    fn arm(&mut self) -> Result<()> {
        self.armed = true;
        if self.telemetry.samples.is_empty() {
            self.record(0.0, 0.0);
        }
        Ok(())
    }

    fn pulse(&mut self, direction: StepDirection, time: f64) -> Result<PulseOutcome> {
        if !self.armed {
            return Err(Error::DriverFault("pulse while motor disabled".into()));
        }
        self.pulse_count += 1;
        if let Some(n) = self.fault_at_pulse {
            if self.pulse_count >= n {
                return Err(Error::DriverFault(format!(
                    "injected fault at pulse {n}"
                )));
            }
        }
        let step = direction.sign() as f64 * self.meters_per_step;
        let proposed =
            self.anchor + (self.steps_from_anchor + direction.sign()) as f64 * self.meters_per_step;
        let dt = self.last_time.map(|t| time - t).unwrap_or(0.0);
        let velocity = if dt > 0.0 { step / dt } else { 0.0 };
        self.last_time = Some(time);

        let outcome = if proposed <= self.lower_switch {
            self.anchor = self.lower_switch;
            self.steps_from_anchor = 0;
            PulseOutcome::LimitHit(LimitSwitch::Lower)
        } else if proposed >= self.upper_switch {
            self.anchor = self.upper_switch;
            self.steps_from_anchor = 0;
            PulseOutcome::LimitHit(LimitSwitch::Upper)
        } else {
            self.steps_from_anchor += direction.sign();
            PulseOutcome::Stepped
        };
        self.tap.set(self.position());
        self.record(time, velocity);
        if let PulseOutcome::LimitHit(switch) = outcome {
            self.telemetry.soft_estop = Some(SoftEstopEvent { time, switch });
        }
        Ok(outcome)
    }

    fn disable(&mut self) {
        self.armed = false;
    }

    fn take_telemetry(&mut self) -> TelemetryLog {
        self.last_time = None;
        std::mem::take(&mut self.telemetry)
    }
}

/// Run a pulse train through a driver under the safety interlock.
///
/// Requires `safety` to be Idle. A limit-switch hit raises SoftEStop,
/// disables the motor and truncates the train; a driver fault raises
/// HardEStop and is returned as the error.
pub fn execute(
    train: &StepTrain,
    driver: &mut dyn DriverInterface,
    safety: &mut SafetyState,
) -> Result<TelemetryLog> {
    if safety.status() != SafetyStatus::Idle {
        return Err(Error::ExecutionRefused(format!("{:?}", safety.status())));
    }
    safety.begin_run();

    if let Err(e) = driver.arm() {
        safety.hard_fault();
        driver.disable();
        return Err(e);
    }

    for pulse in &train.pulses {
        match driver.pulse(pulse.direction, pulse.time) {
            Ok(PulseOutcome::Stepped) => {}
            Ok(PulseOutcome::LimitHit(_)) => {
                safety.apply(SafetyEvent::LimitSwitch);
                break;
            }
            Err(e) => {
                safety.hard_fault();
                driver.disable();
                return Err(e);
            }
        }
    }

    driver.disable();
    safety.finish_run();
    Ok(driver.take_telemetry())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actuation::{commands_to_step_train, Drivetrain, MotorSpec};
    use crate::ground_motion::{pulse_from_pga_kappa, sample_half_cosine_commands};
    use approx::assert_relative_eq;

    fn rig() -> (MotorSpec, Drivetrain) {
        (MotorSpec::nema34_closed_loop(), Drivetrain::shakebot_default())
    }

    fn mock(start: f64) -> MockDriver {
        let (motor, dt) = rig();
        MockDriver::new(MockDriverConfig::new(
            start,
            dt.meters_per_step(&motor),
            dt.travel_limit,
        ))
    }

    #[test]
    fn half_cosine_execution_lands_on_step_grid() {
        // 241 steps from 0.2 m ends at 0.2196 m ± 1 step
        let (motor, dt) = rig();
        let pulse = pulse_from_pga_kappa(0.98, 0.1).unwrap();
        let series = sample_half_cosine_commands(&pulse, 200.0).unwrap();
        let train = commands_to_step_train(&series, &motor, &dt).unwrap();

        let mut driver = mock(0.2);
        let mut safety = SafetyState::new();
        let log = execute(&train, &mut driver, &mut safety).unwrap();

        let end = log.end_position().unwrap();
        assert!((end - 0.2196).abs() <= train.meters_per_step);
        // exact step-grid arithmetic
        assert_relative_eq!(
            end,
            0.2 + train.net_steps() as f64 * train.meters_per_step,
            max_relative = 1e-12
        );
        assert!(log.soft_estop.is_none());
        assert_eq!(safety.status(), SafetyStatus::Idle);
    }

    #[test]
    fn empty_train_initial_telemetry_only() {
        let train = StepTrain {
            pulses: vec![],
            meters_per_step: 8.14e-5,
        };
        let mut driver = mock(0.1);
        let mut safety = SafetyState::new();
        let log = execute(&train, &mut driver, &mut safety).unwrap();
        assert_eq!(log.samples.len(), 1);
        assert_eq!(log.end_position(), Some(0.1));
    }

    #[test]
    fn limit_switch_truncates_and_raises_soft_estop() {
        let (motor, dt) = rig();
        let series = crate::ground_motion::VelocityCommandSeries {
            rate_hz: 200.0,
            commands: vec![0.4; 80], // 0.16 m forward
            t0: 0.0,
        };
        let train = commands_to_step_train(&series, &motor, &dt).unwrap();
        // start 0.35 m: the upper switch at 0.45 m interrupts the move
        let mut driver = mock(0.35);
        let mut safety = SafetyState::new();
        let log = execute(&train, &mut driver, &mut safety).unwrap();

        let event = log.soft_estop.expect("limit switch event");
        assert_eq!(event.switch, LimitSwitch::Upper);
        assert_eq!(log.end_position(), Some(0.45));
        assert_eq!(safety.status(), SafetyStatus::SoftEStop);
        assert!(log.samples.iter().all(|s| s.position <= 0.45 + 1e-12));

        // motor stays refused until the estop is cleared
        let again = execute(&train, &mut driver, &mut safety);
        assert!(matches!(again, Err(Error::ExecutionRefused(_))));
        safety.apply(SafetyEvent::Reset);
        assert_eq!(safety.status(), SafetyStatus::Idle);
    }

    #[test]
    fn driver_fault_raises_hard_estop() {
        let (motor, dt) = rig();
        let pulse = pulse_from_pga_kappa(0.98, 0.1).unwrap();
        let series = sample_half_cosine_commands(&pulse, 200.0).unwrap();
        let train = commands_to_step_train(&series, &motor, &dt).unwrap();

        let mut cfg = MockDriverConfig::new(0.2, dt.meters_per_step(&motor), dt.travel_limit);
        cfg.fault_at_pulse = Some(10);
        let mut driver = MockDriver::new(cfg);
        let mut safety = SafetyState::new();
        assert!(matches!(
            execute(&train, &mut driver, &mut safety),
            Err(Error::DriverFault(_))
        ));
        assert_eq!(safety.status(), SafetyStatus::HardEStop);
        // only a power cycle clears it
        safety.apply(SafetyEvent::Reset);
        assert_eq!(safety.status(), SafetyStatus::HardEStop);
        safety.apply(SafetyEvent::PowerCycle);
        assert_eq!(safety.status(), SafetyStatus::Idle);
    }

    #[test]
    fn telemetry_interpolates_between_pulses() {
        let mut driver = mock(0.1);
        driver.arm().unwrap();
        driver.pulse(StepDirection::Forward, 0.1).unwrap();
        driver.pulse(StepDirection::Forward, 0.2).unwrap();
        let log = driver.take_telemetry();
        let mps = driver.physical_meters_per_step();
        assert_relative_eq!(log.position_at(0.15), 0.1 + 1.5 * mps, max_relative = 1e-9);
        assert_relative_eq!(log.position_at(5.0), 0.1 + 2.0 * mps, max_relative = 1e-12);
    }

    #[test]
    fn position_tap_follows_the_bed() {
        let mut driver = mock(0.2);
        let tap = driver.position_tap();
        driver.arm().unwrap();
        driver.pulse(StepDirection::Reverse, 0.01).unwrap();
        assert_relative_eq!(
            tap.position(),
            0.2 - driver.physical_meters_per_step(),
            max_relative = 1e-12
        );
    }
}
