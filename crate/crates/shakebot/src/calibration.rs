//! Rig calibration: perception scale factor σ, transmission factor γ, and
//! the translational step resolution.
//!
//! Both factors come from the least-squares solution of an overdetermined
//! proportional system: for samples D = factor·d the estimator is
//! (dᵀD)/(dᵀd), the Moore–Penrose pseudoinverse solution.

use crate::actuation::{
    commands_to_step_train, execute, DriverInterface, Drivetrain, MotorSpec, PulseOutcome,
    SafetyState, StepDirection, GAMMA_BAND,
};
use crate::error::{Error, Result};
use crate::ground_motion::{sample_half_cosine_commands, PulseParams};
use rand::Rng;

/// Paired ground-truth and sensor displacements for scale estimation.
#[derive(Debug, Clone)]
pub struct CalibrationSampleSet {
    reference: Vec<f64>,
    measured: Vec<f64>,
    labels: Vec<String>,
}

impl CalibrationSampleSet {
    pub fn new(reference: Vec<f64>, measured: Vec<f64>, labels: Vec<String>) -> Result<Self> {
        if reference.len() != measured.len() || (!labels.is_empty() && labels.len() != reference.len()) {
            return Err(Error::DegenerateData(
                "reference, measured and label lengths differ".into(),
            ));
        }
        if reference.len() < 2 {
            return Err(Error::DegenerateData(format!(
                "need at least 2 samples, got {}",
                reference.len()
            )));
        }
        if measured.iter().all(|d| *d == 0.0) {
            return Err(Error::DegenerateData(
                "all measured displacements are zero".into(),
            ));
        }
        Ok(CalibrationSampleSet {
            reference,
            measured,
            labels,
        })
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        let (reference, measured) = pairs.iter().copied().unzip();
        Self::new(reference, measured, Vec::new())
    }

    pub fn len(&self) -> usize {
        self.reference.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reference.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

/// An estimated multiplicative factor with its fit quality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationResult {
    pub factor: f64,
    pub residual_rms: f64,
    pub n_samples: usize,
}

/// Least-squares factor for reference = factor × measured.
pub fn estimate_scale(samples: &CalibrationSampleSet) -> Result<CalibrationResult> {
    let dtd: f64 = samples.measured.iter().map(|d| d * d).sum();
    if dtd == 0.0 {
        return Err(Error::DegenerateData("dᵀd = 0".into()));
    }
    let dtr: f64 = samples
        .measured
        .iter()
        .zip(&samples.reference)
        .map(|(d, r)| d * r)
        .sum();
    let factor = dtr / dtd;
    let ss: f64 = samples
        .measured
        .iter()
        .zip(&samples.reference)
        .map(|(d, r)| {
            let e = r - factor * d;
            e * e
        })
        .sum();
    Ok(CalibrationResult {
        factor,
        residual_rms: (ss / samples.len() as f64).sqrt(),
        n_samples: samples.len(),
    })
}

/// Transmission factor from half-cosine displacement trials executed with
/// the uncalibrated controller (γ = 1).
///
/// Each trial pairs the desired net displacement D with the measured D′.
/// The pseudoinverse slope ρ of D′ against D is the rig's actual-over-
/// desired response; the factor that corrects it in ω′ = γ·v/r is its
/// reciprocal, which is what gets reported (and what `apply_gamma`
/// installs). The residual is that of the slope fit.
pub fn estimate_gamma(trials: &[(f64, f64)]) -> Result<CalibrationResult> {
    if trials.len() < 2 {
        return Err(Error::DegenerateData(format!(
            "need at least 2 gamma trials, got {}",
            trials.len()
        )));
    }
    let first = trials[0].0;
    if trials.iter().all(|(d, _)| *d == first) {
        return Err(Error::DegenerateData(
            "gamma trials need distinct desired displacements".into(),
        ));
    }
    let desired: Vec<f64> = trials.iter().map(|(d, _)| *d).collect();
    let actual: Vec<f64> = trials.iter().map(|(_, a)| *a).collect();
    // response ratio: actual = ρ · desired
    let ratio = estimate_scale(&CalibrationSampleSet::new(
        actual.clone(),
        desired.clone(),
        Vec::new(),
    )?)?;
    if ratio.factor == 0.0 || !ratio.factor.is_finite() {
        return Err(Error::DegenerateData(format!(
            "degenerate response ratio {}",
            ratio.factor
        )));
    }
    Ok(CalibrationResult {
        factor: 1.0 / ratio.factor,
        residual_rms: ratio.residual_rms,
        n_samples: trials.len(),
    })
}

/// Install an estimated γ on the drivetrain, refusing factors outside the
/// physical sanity band.
pub fn apply_gamma(drivetrain: &Drivetrain, result: &CalibrationResult) -> Result<Drivetrain> {
    if !(result.factor > GAMMA_BAND.0 && result.factor < GAMMA_BAND.1) {
        return Err(Error::FactorOutOfBand {
            factor: result.factor,
            lo: GAMMA_BAND.0,
            hi: GAMMA_BAND.1,
        });
    }
    Ok(drivetrain.with_gamma(result.factor))
}

/// Output of the scripted perception calibration.
#[derive(Debug, Clone)]
pub struct PerceptionCalibration {
    pub sigma: CalibrationResult,
    /// Recovered translational step resolution, m.
    pub meters_per_step: f64,
    /// Steps counted switch-to-switch.
    pub steps_across_stroke: u64,
}

fn seek_switch(
    driver: &mut dyn DriverInterface,
    direction: StepDirection,
    budget: u64,
    mut time: f64,
    dt: f64,
) -> Result<(u64, f64)> {
    for step in 1..=budget {
        time += dt;
        match driver.pulse(direction, time)? {
            PulseOutcome::Stepped => {}
            PulseOutcome::LimitHit(_) => return Ok((step, time)),
        }
    }
    Err(Error::SwitchNotFound { budget })
}

/// Scripted perception calibration on a rig with bed-position calibration
/// switches at both ends of the stroke.
///
/// The bed seeks the lower switch, crosses to the upper switch counting
/// steps (step resolution = measured stroke / count), then visits
/// `n_random_points` positions, pairing step-derived displacement (ground
/// truth) with the marker reading; σ comes from the pseudoinverse fit.
/// `markers` returns the instantaneous marker-derived bed position in the
/// marker frame (arbitrary origin, uncalibrated scale).
pub fn run_perception_calibration(
    driver: &mut dyn DriverInterface,
    markers: &mut dyn FnMut() -> f64,
    measured_stroke: f64,
    n_random_points: usize,
    rng: &mut dyn rand::RngCore,
    step_budget: u64,
) -> Result<PerceptionCalibration> {
    if !(measured_stroke > 0.0) {
        return Err(Error::Config(format!(
            "measured stroke must be positive, got {measured_stroke}"
        )));
    }
    if n_random_points < 2 {
        return Err(Error::DegenerateData(
            "need at least 2 calibration points".into(),
        ));
    }
    driver.arm()?;
    // virtual pacing of the position controller; timing is irrelevant to
    // the counts, it only orders telemetry
    let dt = 1e-3;

    let (_, time) = seek_switch(driver, StepDirection::Reverse, step_budget, 0.0, dt)?;
    let (count, time) = seek_switch(driver, StepDirection::Forward, step_budget, time, dt)?;
    let meters_per_step = measured_stroke / count as f64;

    // return to the lower switch so the sampling grid is anchored exactly
    // at it (the up-traverse may have ended on a clamped partial step)
    let (_, mut time) = seek_switch(driver, StepDirection::Reverse, step_budget, time, dt)?;
    let marker_home = markers();

    // random positions, tracked as step offsets from the lower switch;
    // staying strictly below `count` keeps clear of the upper switch
    let mut cursor: u64 = 0;
    let mut reference = Vec::with_capacity(n_random_points);
    let mut measured = Vec::with_capacity(n_random_points);
    let mut labels = Vec::with_capacity(n_random_points);
    for i in 0..n_random_points {
        let target = rng.random_range(0..count);
        let (dir, n) = if target >= cursor {
            (StepDirection::Forward, target - cursor)
        } else {
            (StepDirection::Reverse, cursor - target)
        };
        for _ in 0..n {
            time += dt;
            if let PulseOutcome::LimitHit(_) = driver.pulse(dir, time)? {
                // walking within [0, count] steps must stay inside the
                // switches; hitting one means the rig disagrees with the
                // recorded count
                return Err(Error::DriverFault(
                    "limit switch hit while visiting calibration points".into(),
                ));
            }
        }
        cursor = target;
        reference.push(target as f64 * meters_per_step);
        measured.push(markers() - marker_home);
        labels.push(format!("point_{i}"));
    }
    driver.disable();

    let sigma = estimate_scale(&CalibrationSampleSet::new(reference, measured, labels)?)?;
    Ok(PerceptionCalibration {
        sigma,
        meters_per_step,
        steps_across_stroke: count,
    })
}

/// Scripted transmission calibration: execute half-cosine motions of
/// distinct desired displacements through the uncalibrated controller
/// (γ forced to 1), measure each actual displacement with the calibrated
/// perception (σ applied to the marker readings), and estimate γ.
///
/// Each trial runs out and back (the same half-cosine reversed) so the rig
/// returns to its start and the trials cannot drift into a limit switch;
/// the rig should start near mid-stroke with the largest trial fitting in
/// the half-stroke either side.
pub fn run_gamma_calibration(
    driver: &mut dyn DriverInterface,
    markers: &mut dyn FnMut() -> f64,
    sigma: f64,
    motor: &MotorSpec,
    drivetrain: &Drivetrain,
    command_rate_hz: f64,
    desired_displacements: &[f64],
    marker_samples_per_reading: usize,
) -> Result<CalibrationResult> {
    let uncalibrated = drivetrain.with_gamma(1.0);
    let mut trials = Vec::with_capacity(desired_displacements.len());
    for &d in desired_displacements {
        if !(d > 0.0) {
            return Err(Error::Config(format!(
                "desired trial displacement must be positive, got {d}"
            )));
        }
        // half-cosine with net displacement 2A = d; κ chosen to keep the
        // trial well inside the speed envelope
        let amplitude = 0.5 * d;
        let kappa = (amplitude / 0.2).sqrt().max(0.05);
        let pga = amplitude / (kappa * kappa);
        let pulse = PulseParams::from_pga_kappa(pga, kappa)?;
        let outbound = sample_half_cosine_commands(&pulse, command_rate_hz)?;
        let mut inbound = outbound.clone();
        for v in &mut inbound.commands {
            *v = -*v;
        }
        let train_out = commands_to_step_train(&outbound, motor, &uncalibrated)?;
        let train_back = commands_to_step_train(&inbound, motor, &uncalibrated)?;

        let read = |markers: &mut dyn FnMut() -> f64| {
            let n = marker_samples_per_reading.max(1);
            (0..n).map(|_| markers()).sum::<f64>() / n as f64
        };
        let before = read(markers);
        let mut safety = SafetyState::new();
        execute(&train_out, driver, &mut safety)?;
        let after = read(markers);
        let mut safety = SafetyState::new();
        execute(&train_back, driver, &mut safety)?;
        let measured = sigma * (after - before).abs();
        trials.push((d, measured));
    }
    estimate_gamma(&trials)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actuation::{MockDriver, MockDriverConfig};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn exact_proportionality_recovered() {
        // d = (1, 2, 3), D = (1.1, 2.2, 3.3) → σ = 1.1, zero residual
        let s = CalibrationSampleSet::new(vec![1.1, 2.2, 3.3], vec![1.0, 2.0, 3.0], vec![]).unwrap();
        let r = estimate_scale(&s).unwrap();
        assert_relative_eq!(r.factor, 1.1, max_relative = 1e-12);
        assert!(r.residual_rms < 1e-15);
    }

    #[test]
    fn identity_scaling() {
        let s = CalibrationSampleSet::new(vec![0.2, 0.4, 0.5], vec![0.2, 0.4, 0.5], vec![]).unwrap();
        assert_relative_eq!(estimate_scale(&s).unwrap().factor, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn hand_evaluated_two_point_fit() {
        // d = (1, 2), D = (1.0, 2.2) → (1 + 4.4)/(1 + 4) = 1.08
        let s = CalibrationSampleSet::new(vec![1.0, 2.2], vec![1.0, 2.0], vec![]).unwrap();
        assert_relative_eq!(estimate_scale(&s).unwrap().factor, 1.08, max_relative = 1e-12);
    }

    #[test]
    fn degenerate_sets_rejected() {
        assert!(CalibrationSampleSet::new(vec![1.0], vec![1.0], vec![]).is_err());
        assert!(CalibrationSampleSet::new(vec![1.0, 2.0], vec![0.0, 0.0], vec![]).is_err());
        assert!(CalibrationSampleSet::new(vec![1.0, 2.0], vec![1.0], vec![]).is_err());
    }

    #[test]
    fn scale_equivariance() {
        let d = vec![0.11, 0.23, 0.31, 0.47];
        let big_d = vec![0.14, 0.27, 0.40, 0.55];
        let s1 = estimate_scale(&CalibrationSampleSet::new(big_d.clone(), d.clone(), vec![]).unwrap())
            .unwrap();
        let c = 3.7;
        let scaled: Vec<f64> = d.iter().map(|x| x * c).collect();
        let s2 =
            estimate_scale(&CalibrationSampleSet::new(big_d, scaled, vec![]).unwrap()).unwrap();
        assert_relative_eq!(s2.factor, s1.factor / c, max_relative = 1e-12);
    }

    #[test]
    fn gamma_slope_examples() {
        // rig responds at ratio 0.98: correction factor = 1/0.98
        let r = estimate_gamma(&[(0.10, 0.098), (0.20, 0.196)]).unwrap();
        assert_relative_eq!(r.factor, 1.0 / 0.98, max_relative = 1e-12);
        assert!(r.residual_rms < 1e-15);

        // perfect transmission
        let r = estimate_gamma(&[(0.10, 0.10), (0.20, 0.20)]).unwrap();
        assert_relative_eq!(r.factor, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn gamma_requires_distinct_trials() {
        assert!(estimate_gamma(&[(0.1, 0.1)]).is_err());
        assert!(estimate_gamma(&[(0.1, 0.1), (0.1, 0.101)]).is_err());
    }

    #[test]
    fn apply_gamma_respects_band() {
        let dt = Drivetrain::shakebot_default();
        let ok = CalibrationResult { factor: 0.98, residual_rms: 0.0, n_samples: 5 };
        assert_relative_eq!(apply_gamma(&dt, &ok).unwrap().gamma, 0.98);
        let unchanged = CalibrationResult { factor: 1.0, residual_rms: 0.0, n_samples: 5 };
        assert_eq!(apply_gamma(&dt, &unchanged).unwrap(), dt);
        let bad = CalibrationResult { factor: 3.0, residual_rms: 0.0, n_samples: 5 };
        assert!(matches!(
            apply_gamma(&dt, &bad),
            Err(Error::FactorOutOfBand { .. })
        ));
    }

    fn marker_sensor(
        tap: crate::actuation::PositionTap,
        sigma_true: f64,
        noise: f64,
        rng: ChaCha8Rng,
    ) -> impl FnMut() -> f64 {
        let mut rng = rng;
        let dist = Normal::new(0.0, noise.max(f64::MIN_POSITIVE)).unwrap();
        move || tap.position() / sigma_true + if noise > 0.0 { dist.sample(&mut rng) } else { 0.0 }
    }

    #[test]
    fn perception_calibration_step_resolution() {
        let motor = MotorSpec::nema34_closed_loop();
        let dt = Drivetrain::shakebot_default();
        let mps = dt.meters_per_step(&motor);
        let mut driver = MockDriver::new(MockDriverConfig::new(0.2, mps, dt.travel_limit));
        let tap = driver.position_tap();
        let mut markers = marker_sensor(tap, 1.0, 0.0, ChaCha8Rng::seed_from_u64(1));
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cal = run_perception_calibration(&mut driver, &mut markers, 0.45, 12, &mut rng, 40_000)
            .unwrap();
        // 0.45 / 8.1399e-5 = 5528 ± 1 steps, resolution within 0.02%
        assert!((cal.steps_across_stroke as f64 - 0.45 / mps).abs() <= 1.5);
        assert_relative_eq!(cal.meters_per_step, mps, max_relative = 2e-4);
        // unbiased sensor: σ differs from 1 only by the ±1-step resolution
        // quantization of the traverse
        assert_relative_eq!(cal.sigma.factor, 1.0, max_relative = 2e-4);
    }

    #[test]
    fn perception_calibration_on_ideal_rig_is_exact() {
        // a stroke that is an exact whole number of steps removes the
        // traverse quantization: unbiased sensor → σ = 1 within 1e-9
        let motor = MotorSpec::nema34_closed_loop();
        let dt = Drivetrain::shakebot_default();
        let mps = dt.meters_per_step(&motor);
        let stroke = 5000.0 * mps;
        let mut driver = MockDriver::new(MockDriverConfig::new(0.2, mps, stroke));
        let tap = driver.position_tap();
        let mut markers = marker_sensor(tap, 1.0, 0.0, ChaCha8Rng::seed_from_u64(1));
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cal =
            run_perception_calibration(&mut driver, &mut markers, stroke, 12, &mut rng, 40_000)
                .unwrap();
        assert_eq!(cal.steps_across_stroke, 5000);
        assert_relative_eq!(cal.meters_per_step, mps, max_relative = 1e-12);
        assert_relative_eq!(cal.sigma.factor, 1.0, epsilon = 1e-9);
        assert!(cal.sigma.residual_rms < 1e-9);
    }

    #[test]
    fn perception_calibration_recovers_hidden_sigma() {
        let motor = MotorSpec::nema34_closed_loop();
        let dt = Drivetrain::shakebot_default();
        let mps = dt.meters_per_step(&motor);
        let sigma_true = 1.27;
        let mut driver = MockDriver::new(MockDriverConfig::new(0.1, mps, dt.travel_limit));
        let tap = driver.position_tap();
        // 1% of full stroke as absolute marker noise in the marker frame
        let noise = 0.01 * 0.45 / sigma_true;
        let mut markers = marker_sensor(tap, sigma_true, noise, ChaCha8Rng::seed_from_u64(11));
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let cal = run_perception_calibration(&mut driver, &mut markers, 0.45, 50, &mut rng, 40_000)
            .unwrap();
        assert_relative_eq!(cal.sigma.factor, sigma_true, max_relative = 0.02);
    }

    #[test]
    fn switch_budget_enforced() {
        let motor = MotorSpec::nema34_closed_loop();
        let dt = Drivetrain::shakebot_default();
        let mps = dt.meters_per_step(&motor);
        let mut driver = MockDriver::new(MockDriverConfig::new(0.2, mps, dt.travel_limit));
        let tap = driver.position_tap();
        let mut markers = marker_sensor(tap, 1.0, 0.0, ChaCha8Rng::seed_from_u64(1));
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        assert!(matches!(
            run_perception_calibration(&mut driver, &mut markers, 0.45, 5, &mut rng, 100),
            Err(Error::SwitchNotFound { budget: 100 })
        ));
    }

    #[test]
    fn gamma_calibration_recovers_hidden_transmission() {
        let motor = MotorSpec::nema34_closed_loop();
        let dt = Drivetrain::shakebot_default();
        let gamma_true = 1.03;
        let mut driver = MockDriver::with_hidden_transmission(
            0.225,
            dt.pulley_radius,
            motor.microsteps_per_rev,
            gamma_true,
            dt.travel_limit,
        );
        let tap = driver.position_tap();
        // marker sensor with true scale and 0.5% relative noise on ~0.1 m trials
        let mut markers = marker_sensor(tap, 1.0, 0.005 * 0.1, ChaCha8Rng::seed_from_u64(21));
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let displacements: Vec<f64> = (0..20)
            .map(|_| rng.random_range(0.05..0.18))
            .collect();
        let result = run_gamma_calibration(
            &mut driver,
            &mut markers,
            1.0,
            &motor,
            &dt,
            200.0,
            &displacements,
            16,
        )
        .unwrap();
        assert_relative_eq!(result.factor, gamma_true, max_relative = 0.01);
    }

    #[test]
    fn applied_gamma_closes_the_loop() {
        // γ = 0.98 installed on a rig whose physical transmission matches:
        // a desired 0.10 m half-cosine lands within one step of 0.10 m
        let motor = MotorSpec::nema34_closed_loop();
        let dt = Drivetrain::shakebot_default();
        let gamma = 0.98;
        let calibrated = apply_gamma(
            &dt,
            &CalibrationResult { factor: gamma, residual_rms: 0.0, n_samples: 2 },
        )
        .unwrap();
        let mut driver = MockDriver::with_hidden_transmission(
            0.15,
            dt.pulley_radius,
            motor.microsteps_per_rev,
            gamma,
            dt.travel_limit,
        );
        let pulse = {
            let amplitude: f64 = 0.05;
            let kappa = (amplitude / 0.2_f64).sqrt();
            PulseParams::from_pga_kappa(amplitude / (kappa * kappa), kappa).unwrap()
        };
        let series = sample_half_cosine_commands(&pulse, 200.0).unwrap();
        let train = commands_to_step_train(&series, &motor, &calibrated).unwrap();
        let mut safety = SafetyState::new();
        let log = execute(&train, &mut driver, &mut safety).unwrap();
        let measured = log.end_position().unwrap() - 0.15;
        assert!(
            (measured - 0.10).abs() <= 1.5 * driver.physical_meters_per_step(),
            "measured {measured}"
        );
    }

    #[test]
    fn half_cosine_identity_displacement_and_velocity_share_gamma() {
        // scaling the pulse family by γ scales d(t) and v(t) identically
        let pulse = PulseParams::from_pga_kappa(0.98, 0.1).unwrap();
        let gamma = 1.17;
        for k in 1..40 {
            let t = k as f64 * pulse.duration() / 80.0; // within the half period
            let d_ratio = gamma * pulse.displacement_at(t) / pulse.displacement_at(t);
            let v_ratio = gamma * pulse.velocity_at(t) / pulse.velocity_at(t);
            if pulse.displacement_at(t).abs() > 1e-12 && pulse.velocity_at(t).abs() > 1e-12 {
                assert_relative_eq!(d_ratio, gamma, max_relative = 1e-12);
                assert_relative_eq!(v_ratio, gamma, max_relative = 1e-12);
            }
        }
    }
}
