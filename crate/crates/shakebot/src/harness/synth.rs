//! Synthetic sensor streams for the simulated rig.
//!
//! Marker detections sample the mock driver's telemetry (the stepping,
//! physically quantized bed position) through the hidden perception scale
//! 1/σ_true plus Gaussian pose noise; the accelerometer samples the ideal
//! closed-loop bed acceleration plus white noise and a per-run turn-on
//! bias. The two streams run at their own rates with independent phase
//! offsets; nothing aligns them.

use super::config::SensorConfig;
use crate::actuation::TelemetryLog;
use crate::perception::{AccelSample, MarkerDetection, Pose};
use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Camera-frame home translations of the four corner markers.
const MARKER_HOMES: [[f64; 3]; 4] = [
    [-0.28, -0.19, 0.92],
    [0.28, -0.19, 0.92],
    [0.28, 0.19, 0.92],
    [-0.28, 0.19, 0.92],
];

#[derive(Debug, Clone)]
pub struct SyntheticStreams {
    /// Detections of the bed at its start position (the displacement
    /// reference), noisy like any other frame.
    pub reference_frame: Vec<MarkerDetection>,
    /// One detection set per camera frame.
    pub marker_frames: Vec<Vec<MarkerDetection>>,
    pub accel_samples: Vec<AccelSample>,
    /// The accelerometer bias that was drawn for this run, m/s².
    pub accel_bias: f64,
}

impl SyntheticStreams {
    pub fn all_markers(&self) -> Vec<MarkerDetection> {
        self.marker_frames.iter().flatten().copied().collect()
    }
}

/// Scales that noise levels are relative to.
#[derive(Debug, Clone, Copy)]
pub struct MotionScale {
    pub peak_displacement: f64,
    pub peak_acceleration: f64,
}

fn marker_frame(
    displacement_marker_frame: f64,
    time: f64,
    noise: &Normal<f64>,
    rng: &mut impl Rng,
) -> Vec<MarkerDetection> {
    MARKER_HOMES
        .iter()
        .enumerate()
        .map(|(id, home)| {
            let t = Vector3::new(
                home[0] + displacement_marker_frame + noise.sample(rng),
                home[1] + noise.sample(rng),
                home[2] + noise.sample(rng),
            );
            MarkerDetection {
                marker_id: id as u32,
                time,
                pose_in_camera: Pose::from_translation(t),
            }
        })
        .collect()
}

/// Generate both sensor streams over `[0, duration]` for a run whose
/// physical bed position history is `telemetry` (starting at
/// `start_position`) and whose ideal bed acceleration is `true_accel`.
pub fn synthesize_streams(
    telemetry: &TelemetryLog,
    start_position: f64,
    true_accel: &dyn Fn(f64) -> f64,
    duration: f64,
    sensors: &SensorConfig,
    sigma_true: f64,
    scale: &MotionScale,
    rng: &mut impl Rng,
) -> SyntheticStreams {
    let marker_noise = Normal::new(
        0.0,
        (sensors.marker_noise_rel * scale.peak_displacement / sigma_true)
            .max(f64::MIN_POSITIVE),
    )
    .expect("finite std");
    let accel_noise = Normal::new(
        0.0,
        (sensors.accel_noise_rel * scale.peak_acceleration).max(f64::MIN_POSITIVE),
    )
    .expect("finite std");
    let bias_dist = Normal::new(
        0.0,
        (sensors.accel_bias_rel * scale.peak_acceleration).max(f64::MIN_POSITIVE),
    )
    .expect("finite std");
    let accel_bias = bias_dist.sample(rng);

    let reference_frame = marker_frame(0.0, 0.0, &marker_noise, rng);

    let marker_phase = rng.random_range(0.0..1.0 / sensors.marker_rate_hz);
    let mut marker_frames = Vec::new();
    let mut k = 0u64;
    loop {
        let t = marker_phase + k as f64 / sensors.marker_rate_hz;
        if t > duration {
            break;
        }
        let displacement = (telemetry.position_at(t) - start_position) / sigma_true;
        marker_frames.push(marker_frame(displacement, t, &marker_noise, rng));
        k += 1;
    }

    let accel_phase = rng.random_range(0.0..1.0 / sensors.accel_rate_hz);
    let mut accel_samples = Vec::new();
    let mut k = 0u64;
    loop {
        let t = accel_phase + k as f64 / sensors.accel_rate_hz;
        if t > duration {
            break;
        }
        accel_samples.push(AccelSample {
            time: t,
            accel_xyz: Vector3::new(
                true_accel(t) + accel_bias + accel_noise.sample(rng),
                accel_noise.sample(rng),
                accel_noise.sample(rng),
            ),
        });
        k += 1;
    }

    SyntheticStreams {
        reference_frame,
        marker_frames,
        accel_samples,
        accel_bias,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actuation::TelemetrySample;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fake_telemetry() -> TelemetryLog {
        TelemetryLog {
            samples: vec![
                TelemetrySample { time: 0.0, position: 0.2, velocity: 0.0 },
                TelemetrySample { time: 1.0, position: 0.3, velocity: 0.1 },
            ],
            soft_estop: None,
        }
    }

    #[test]
    fn streams_cover_the_window_at_their_rates() {
        let telemetry = fake_telemetry();
        let sensors = SensorConfig {
            marker_rate_hz: 30.0,
            accel_rate_hz: 200.0,
            marker_noise_rel: 0.0,
            accel_noise_rel: 0.0,
            accel_bias_rel: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let streams = synthesize_streams(
            &telemetry,
            0.2,
            &|_| 0.5,
            1.0,
            &sensors,
            1.0,
            &MotionScale { peak_displacement: 0.1, peak_acceleration: 1.0 },
            &mut rng,
        );
        assert!((29..=31).contains(&streams.marker_frames.len()));
        assert!((199..=201).contains(&streams.accel_samples.len()));
        assert_eq!(streams.reference_frame.len(), 4);
        // noiseless: accel exactly the truth
        assert!(streams
            .accel_samples
            .iter()
            .all(|s| (s.accel_xyz.x - 0.5).abs() < 1e-12));
    }

    #[test]
    fn hidden_sigma_scales_marker_displacements() {
        let telemetry = fake_telemetry();
        let sensors = SensorConfig {
            marker_rate_hz: 10.0,
            accel_rate_hz: 10.0,
            marker_noise_rel: 0.0,
            accel_noise_rel: 0.0,
            accel_bias_rel: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let streams = synthesize_streams(
            &telemetry,
            0.2,
            &|_| 0.0,
            1.0,
            &sensors,
            2.0,
            &MotionScale { peak_displacement: 0.1, peak_acceleration: 1.0 },
            &mut rng,
        );
        let last = streams.marker_frames.last().unwrap();
        let t_last = last[0].time;
        let true_disp = telemetry.position_at(t_last) - 0.2;
        let marker_disp = last[0].pose_in_camera.translation().x - MARKER_HOMES[0][0];
        assert!((marker_disp - true_disp / 2.0).abs() < 1e-12);
    }

    #[test]
    fn deterministic_under_seed() {
        let telemetry = fake_telemetry();
        let sensors = SensorConfig {
            marker_rate_hz: 30.0,
            accel_rate_hz: 200.0,
            marker_noise_rel: 0.02,
            accel_noise_rel: 0.02,
            accel_bias_rel: 0.06,
        };
        let scale = MotionScale { peak_displacement: 0.1, peak_acceleration: 1.0 };
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            synthesize_streams(&telemetry, 0.2, &|t| t, 1.0, &sensors, 1.0, &scale, &mut rng)
        };
        let a = run();
        let b = run();
        assert_eq!(a.accel_bias, b.accel_bias);
        assert_eq!(a.accel_samples.len(), b.accel_samples.len());
        for (x, y) in a.accel_samples.iter().zip(&b.accel_samples) {
            assert_eq!(x.accel_xyz, y.accel_xyz);
        }
    }
}
