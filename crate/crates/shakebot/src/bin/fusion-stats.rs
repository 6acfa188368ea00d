//! Dev scratch: fusion accuracy statistics across seeds (to be removed).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use shakebot::actuation::{commands_to_step_train, execute, MockDriver, SafetyState};
use shakebot::ground_motion::{apply_filter, pulse_from_pga_kappa, sample_velocity_commands};
use shakebot::harness::{synthesize_streams, ExperimentConfig, MotionScale};
use shakebot::perception::{
    accel_along_axis, bed_displacement, derive_velocity_from_accel,
    derive_velocity_from_displacement, fit_velocity,
};
use nalgebra::Vector3;

fn main() {
    let mut cfg = ExperimentConfig::default();
    let args: Vec<String> = std::env::args().collect();
    if args.len() > 1 {
        cfg.sensors.accel_bias_rel = args[1].parse().unwrap();
    }
    if args.len() > 2 {
        cfg.sensors.marker_noise_rel = args[2].parse().unwrap();
    }
    let n_seeds: u64 = if args.len() > 3 { args[3].parse().unwrap() } else { 200 };

    let pulse = pulse_from_pga_kappa(0.98, 0.1).unwrap();
    let series = sample_velocity_commands(&pulse, cfg.command_rate_hz).unwrap();
    let train = commands_to_step_train(&series, &cfg.motor, &cfg.drivetrain).unwrap();
    let start = 0.5 * (cfg.drivetrain.travel_limit - pulse.peak_displacement());
    let axis = Vector3::x();

    let mut pgv_ok = 0u64;
    let mut beats_both = 0u64;
    let mut worst_pgv: f64 = 0.0;
    let mut pgv_errs = Vec::new();
    for seed in 0..n_seeds {
        let mut driver = MockDriver::with_hidden_transmission(
            start,
            cfg.drivetrain.pulley_radius,
            cfg.motor.microsteps_per_rev,
            1.0,
            cfg.drivetrain.travel_limit,
        );
        let mut safety = SafetyState::new();
        let telemetry = execute(&train, &mut driver, &mut safety).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = MotionScale {
            peak_displacement: pulse.peak_displacement(),
            peak_acceleration: pulse.pga,
        };
        let accel_fn = |t: f64| pulse.acceleration_at(t);
        let streams = synthesize_streams(
            &telemetry, start, &accel_fn, pulse.duration(), &cfg.sensors, 1.0, &scale, &mut rng,
        );

        let mut disp = Vec::new();
        for frame in &streams.marker_frames {
            disp.push(bed_displacement(frame, &streams.reference_frame, 1.0, &axis).unwrap());
        }
        let v_d = derive_velocity_from_displacement(&disp).unwrap();
        let raw: Vec<f64> = streams
            .accel_samples
            .iter()
            .map(|s| accel_along_axis(s, &axis).unwrap().signed)
            .collect();
        let filtered = apply_filter(&raw, 1.0 / cfg.sensors.accel_rate_hz, &cfg.lowpass).unwrap();
        let projected: Vec<(f64, f64)> = streams
            .accel_samples
            .iter()
            .zip(&filtered)
            .map(|(s, a)| (s.time, *a))
            .collect();
        let v_a = derive_velocity_from_accel(&projected, 0.0).unwrap();

        let (model, _) = fit_velocity(&v_d, &v_a, cfg.fusion_degree).unwrap();
        let est = model.peak_velocity().1;
        let pgv_err = (est - 0.098).abs() / 0.098;
        pgv_errs.push(pgv_err);
        if pgv_err <= 0.05 {
            pgv_ok += 1;
        }
        worst_pgv = worst_pgv.max(pgv_err);

        let rms = |pts: &[(f64, f64)]| -> f64 {
            (pts.iter()
                .map(|(t, v)| (v - pulse.velocity_at(*t)).powi(2))
                .sum::<f64>()
                / pts.len() as f64)
                .sqrt()
        };
        let rms_d = rms(&v_d);
        let rms_a = rms(&v_a);
        let (lo, hi) = model.valid_span();
        let dense: Vec<(f64, f64)> = (0..=500)
            .map(|k| {
                let t = lo + (hi - lo) * k as f64 / 500.0;
                (t, model.predict(t))
            })
            .collect();
        let rms_f = rms(&dense);
        if rms_f < rms_d && rms_f < rms_a {
            beats_both += 1;
        }
    }
    pgv_errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q = |p: f64| pgv_errs[((pgv_errs.len() - 1) as f64 * p) as usize];
    println!(
        "bias_rel={} marker_rel={} seeds={}",
        cfg.sensors.accel_bias_rel, cfg.sensors.marker_noise_rel, n_seeds
    );
    println!(
        "pgv within 5%: {}/{} ({:.1}%), median err {:.3}%, p95 {:.3}%, worst {:.3}%",
        pgv_ok,
        n_seeds,
        100.0 * pgv_ok as f64 / n_seeds as f64,
        100.0 * q(0.5),
        100.0 * q(0.95),
        100.0 * worst_pgv
    );
    println!(
        "fused beats both streams: {}/{} ({:.1}%)",
        beats_both,
        n_seeds,
        100.0 * beats_both as f64 / n_seeds as f64
    );
}
