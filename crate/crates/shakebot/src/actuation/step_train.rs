//! Velocity commands to timed microstep pulses.

use super::{angular_velocity, Drivetrain, MotorSpec};
use crate::error::{Error, Result};
use crate::ground_motion::VelocityCommandSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepDirection {
    Forward,
    Reverse,
}

impl StepDirection {
    pub fn sign(self) -> i64 {
        match self {
            StepDirection::Forward => 1,
            StepDirection::Reverse => -1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepPulse {
    /// Absolute time of the pulse edge, s.
    pub time: f64,
    pub direction: StepDirection,
}

/// Timed microstep schedule, the actuator wire format.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTrain {
    pub pulses: Vec<StepPulse>,
    /// Planner step resolution the train was generated with, m.
    pub meters_per_step: f64,
}

impl StepTrain {
    pub fn net_steps(&self) -> i64 {
        self.pulses.iter().map(|p| p.direction.sign()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.pulses.is_empty()
    }

    pub fn len(&self) -> usize {
        self.pulses.len()
    }
}

/// Convert a velocity command series into a pulse train.
///
/// Within each held command the desired step position advances at
/// v/meters_per_step steps per second; a pulse is emitted each time the
/// running position crosses a half-integer level (k ± 0.5), so the
/// fractional remainder carries across intervals and the emitted step total
/// tracks the rounded commanded displacement, never drifting more than half
/// a step from the commanded displacement integral.
///
/// Rejected up front: commands over the motor's angular speed limit or the
/// generator's pulse-rate cap, and series whose displacement range exceeds
/// the usable stroke.
pub fn commands_to_step_train(
    series: &VelocityCommandSeries,
    motor: &MotorSpec,
    drivetrain: &Drivetrain,
) -> Result<StepTrain> {
    let mps = drivetrain.meters_per_step(motor);
    let dt = series.dt();

    for &v in &series.commands {
        angular_velocity(v, drivetrain, motor)?;
        let pulse_rate = v.abs() / mps;
        if pulse_rate > drivetrain.max_pulse_rate_hz * (1.0 + 1e-9) {
            return Err(Error::PulseRateExceeded {
                requested_hz: pulse_rate,
                limit_hz: drivetrain.max_pulse_rate_hz,
            });
        }
    }

    let (lo, hi) = series.displacement_range();
    if hi - lo > drivetrain.travel_limit {
        return Err(Error::StrokeOverflow {
            required_m: hi - lo,
            travel_limit_m: drivetrain.travel_limit,
        });
    }

    let min_direction_dwell = 2.0 / drivetrain.max_pulse_rate_hz;
    let mut pulses: Vec<StepPulse> = Vec::new();
    let mut target = 0.0_f64; // commanded position, steps
    let mut emitted = 0_i64;

    for (k, &v) in series.commands.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let t_start = series.t0 + k as f64 * dt;
        let start_target = target;
        let step_rate = v / mps; // signed steps per second
        target += step_rate * dt;

        loop {
            let (next, level, direction) = if step_rate > 0.0 {
                (emitted + 1, emitted as f64 + 0.5, StepDirection::Forward)
            } else {
                (emitted - 1, emitted as f64 - 0.5, StepDirection::Reverse)
            };
            // crossing must complete within this interval
            if (target - level) * step_rate.signum() < 0.0 {
                break;
            }
            let tau = (level - start_target) / step_rate;
            let mut time = t_start + tau.clamp(0.0, dt);
            if let Some(last) = pulses.last() {
                if last.direction != direction && time < last.time + min_direction_dwell {
                    time = last.time + min_direction_dwell;
                }
                if time <= last.time {
                    time = last.time + f64::EPSILON.max(last.time.abs() * 1e-15);
                }
            }
            pulses.push(StepPulse { time, direction });
            emitted = next;
        }
    }

    Ok(StepTrain {
        pulses,
        meters_per_step: mps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ground_motion::{pulse_from_pga_kappa, sample_half_cosine_commands, sample_velocity_commands};

    fn rig() -> (MotorSpec, Drivetrain) {
        (MotorSpec::nema34_closed_loop(), Drivetrain::shakebot_default())
    }

    #[test]
    fn half_cosine_step_total_matches_hand_count() {
        // net displacement 2A = 0.0196 m at 8.1399e-5 m/step → 241 steps
        let (motor, dt) = rig();
        let pulse = pulse_from_pga_kappa(0.98, 0.1).unwrap();
        let series = sample_half_cosine_commands(&pulse, 200.0).unwrap();
        let train = commands_to_step_train(&series, &motor, &dt).unwrap();
        assert_eq!(train.net_steps(), 241);
        assert!(train.pulses.iter().all(|p| p.direction == StepDirection::Forward));
    }

    #[test]
    fn zero_series_empty_train() {
        let (motor, dt) = rig();
        let series = VelocityCommandSeries {
            rate_hz: 200.0,
            commands: vec![0.0; 100],
            t0: 0.0,
        };
        let train = commands_to_step_train(&series, &motor, &dt).unwrap();
        assert!(train.is_empty());
    }

    #[test]
    fn stroke_overflow_rejected() {
        // 0.6 m of travel on a 0.45 m stroke
        let (motor, dt) = rig();
        let series = VelocityCommandSeries {
            rate_hz: 200.0,
            commands: vec![0.5; 240], // 0.5 m/s for 1.2 s
            t0: 0.0,
        };
        match commands_to_step_train(&series, &motor, &dt) {
            Err(Error::StrokeOverflow { required_m, travel_limit_m }) => {
                assert!((required_m - 0.6).abs() < 1e-9);
                assert_eq!(travel_limit_m, 0.45);
            }
            other => panic!("expected StrokeOverflow, got {other:?}"),
        }
    }

    #[test]
    fn pulse_rate_cap_rejected() {
        let (motor, dt) = rig();
        // 0.53 m/s needs ≈ 6511 Hz of pulses, above the 6400 Hz cap
        let series = VelocityCommandSeries {
            rate_hz: 200.0,
            commands: vec![0.53; 10],
            t0: 0.0,
        };
        assert!(matches!(
            commands_to_step_train(&series, &motor, &dt),
            Err(Error::PulseRateExceeded { .. })
        ));
    }

    #[test]
    fn pulse_times_strictly_increasing_and_spaced() {
        let (motor, dt) = rig();
        let pulse = pulse_from_pga_kappa(1.8, 0.09).unwrap();
        let series = sample_velocity_commands(&pulse, 200.0).unwrap();
        let train = commands_to_step_train(&series, &motor, &dt).unwrap();
        let min_gap = 1.0 / dt.max_pulse_rate_hz;
        for w in train.pulses.windows(2) {
            assert!(w[1].time > w[0].time);
            assert!(
                w[1].time - w[0].time >= min_gap * (1.0 - 1e-9),
                "gap {} below 1/max_pulse_rate {}",
                w[1].time - w[0].time,
                min_gap
            );
        }
    }

    #[test]
    fn direction_change_inserts_dwell() {
        let (motor, dt) = rig();
        let series = VelocityCommandSeries {
            rate_hz: 200.0,
            commands: vec![0.3, 0.3, -0.3, -0.3],
            t0: 0.0,
        };
        let train = commands_to_step_train(&series, &motor, &dt).unwrap();
        let dwell = 2.0 / dt.max_pulse_rate_hz;
        for w in train.pulses.windows(2) {
            if w[0].direction != w[1].direction {
                assert!(w[1].time - w[0].time >= dwell * (1.0 - 1e-9));
            }
        }
        // equal forward and reverse counts, net zero
        assert_eq!(train.net_steps(), 0);
    }

    #[test]
    fn full_pulse_returns_to_start_within_one_step() {
        let (motor, dt) = rig();
        let pulse = pulse_from_pga_kappa(0.98, 0.1).unwrap();
        let series = sample_velocity_commands(&pulse, 200.0).unwrap();
        let train = commands_to_step_train(&series, &motor, &dt).unwrap();
        let commanded_steps = series.net_displacement() / train.meters_per_step;
        assert!((train.net_steps() as f64 - commanded_steps).abs() < 1.0);
    }
}
