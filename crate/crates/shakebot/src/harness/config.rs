//! Flat key-value experiment configuration.
//!
//! Every key has a default; unknown keys are errors; `#` starts a comment.
//! Grids accept either a comma list (`0.5,1.0,2.0`) or an inclusive range
//! `lo:hi:n`.

use crate::actuation::{Drivetrain, MotorSpec};
use crate::error::{Error, Result};
use crate::ground_motion::FilterSpec;
use crate::rocking::{block_from_box, housner_restitution, RockSpec};
use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutcomeSource {
    /// Rocking-dynamics oracle decides Toppled/Balanced.
    Oracle,
    /// The operator enters the response (hardware workflow).
    Manual,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorConfig {
    pub marker_rate_hz: f64,
    pub accel_rate_hz: f64,
    /// Per-marker translation noise, fraction of the motion's peak
    /// displacement.
    pub marker_noise_rel: f64,
    /// White accelerometer noise, fraction of the motion's peak
    /// acceleration.
    pub accel_noise_rel: f64,
    /// Turn-on accelerometer bias (one draw per run), fraction of the
    /// motion's peak acceleration.
    pub accel_bias_rel: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub motor: MotorSpec,
    pub drivetrain: Drivetrain,
    pub payload_kg: f64,
    pub required_accel: f64,
    pub required_velocity: f64,
    pub command_rate_hz: f64,
    /// Perception scale factor applied to marker displacements.
    pub sigma: f64,
    /// Step-resolution override; None derives 2πr/(γ·microsteps).
    pub meters_per_step: Option<f64>,
    /// Optional calibration report to load σ/γ/step resolution from.
    pub calibration_file: Option<PathBuf>,
    /// Hidden truth of the simulated rig.
    pub mock_sigma_true: f64,
    pub mock_gamma_true: f64,
    pub sensors: SensorConfig,
    pub lowpass: FilterSpec,
    pub highpass: FilterSpec,
    pub fusion_degree: usize,
    pub perception_enabled: bool,
    pub rock_file: Option<PathBuf>,
    /// Pulse direction seen by the specimen, ±1.
    pub rock_polarity: f64,
    pub sweep_pga: Vec<f64>,
    pub sweep_kappa: Vec<f64>,
    pub sim_dt: f64,
    pub settle_time: f64,
    pub outcome_source: OutcomeSource,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Base timestamp of the run clock (RFC 3339); records advance one
    /// second per run so identical configs give identical files.
    pub time0: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            motor: MotorSpec::nema34_closed_loop(),
            drivetrain: Drivetrain::shakebot_default(),
            payload_kg: 4.0,
            required_accel: 11.8,
            required_velocity: 0.5,
            command_rate_hz: 200.0,
            sigma: 1.0,
            meters_per_step: None,
            calibration_file: None,
            mock_sigma_true: 1.0,
            mock_gamma_true: 1.0,
            sensors: SensorConfig {
                marker_rate_hz: 30.0,
                accel_rate_hz: 200.0,
                marker_noise_rel: 0.02,
                accel_noise_rel: 0.02,
                accel_bias_rel: 0.06,
            },
            lowpass: FilterSpec::low_pass(2, 20.0),
            highpass: FilterSpec::high_pass(2, 0.1),
            fusion_degree: 6,
            perception_enabled: true,
            rock_file: None,
            rock_polarity: 1.0,
            sweep_pga: linspace(1.0, 4.0, 8),
            sweep_kappa: linspace(0.05, 0.15, 5),
            sim_dt: 1e-4,
            settle_time: 2.0,
            outcome_source: OutcomeSource::Oracle,
            seed: 0,
            out_dir: PathBuf::from("out"),
            time0: "2000-01-01T00:00:00Z".to_string(),
        }
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![lo];
    }
    (0..n)
        .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
        .collect()
}

fn parse_grid(value: &str) -> Result<Vec<f64>> {
    let bad = |_| Error::Config(format!("bad grid value {value:?}"));
    if value.contains(':') {
        let parts: Vec<&str> = value.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::Config(format!(
                "range grid must be lo:hi:n, got {value:?}"
            )));
        }
        let lo: f64 = parts[0].trim().parse().map_err(bad)?;
        let hi: f64 = parts[1].trim().parse().map_err(bad)?;
        let n: usize = parts[2]
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad grid count in {value:?}")))?;
        if n == 0 {
            return Err(Error::Config("grid count must be >= 1".into()));
        }
        Ok(linspace(lo, hi, n))
    } else {
        value
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(bad))
            .collect()
    }
}

fn grid_to_string(grid: &[f64]) -> String {
    grid.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

impl ExperimentConfig {
    pub fn from_str(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut seen = HashMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let trimmed = line.split('#').next().unwrap_or("").trim();
            if trimmed.is_empty() {
                continue;
            }
            let (key, value) = trimmed.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {line_no}: expected key = value"))
            })?;
            let key = key.trim();
            let value = value.trim();
            if seen.insert(key.to_string(), line_no).is_some() {
                return Err(Error::Config(format!(
                    "line {line_no}: duplicate key {key}"
                )));
            }
            cfg.apply(key, value).map_err(|e| match e {
                Error::Config(msg) => Error::Config(format!("line {line_no}: {msg}")),
                other => other,
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut cfg = Self::from_str(&text)?;
        if let Some(cal_path) = cfg.calibration_file.clone() {
            cfg.apply_calibration_report(&cal_path)?;
        }
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let f = |v: &str| -> Result<f64> {
            v.parse()
                .map_err(|_| Error::Config(format!("bad number {v:?}")))
        };
        let u = |v: &str| -> Result<u64> {
            v.parse()
                .map_err(|_| Error::Config(format!("bad integer {v:?}")))
        };
        let b = |v: &str| -> Result<bool> {
            match v {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                _ => Err(Error::Config(format!("bad boolean {v:?}"))),
            }
        };
        let opt_path = |v: &str| -> Option<PathBuf> {
            if v.is_empty() {
                None
            } else {
                Some(PathBuf::from(v))
            }
        };
        match key {
            "motor.torque_nm" => self.motor.torque_at_max_speed = f(value)?,
            "motor.max_speed_rpm" => self.motor.max_speed_rpm = f(value)?,
            "motor.full_steps_per_rev" => self.motor.full_steps_per_rev = u(value)? as u32,
            "motor.microsteps_per_rev" => self.motor.microsteps_per_rev = u(value)? as u32,
            "drivetrain.pulley_radius_m" => self.drivetrain.pulley_radius = f(value)?,
            "drivetrain.gamma" => self.drivetrain.gamma = f(value)?,
            "drivetrain.travel_limit_m" => self.drivetrain.travel_limit = f(value)?,
            "drivetrain.max_pulse_rate_hz" => self.drivetrain.max_pulse_rate_hz = f(value)?,
            "requirements.payload_kg" => self.payload_kg = f(value)?,
            "requirements.accel_ms2" => self.required_accel = f(value)?,
            "requirements.velocity_ms" => self.required_velocity = f(value)?,
            "command_rate_hz" => self.command_rate_hz = f(value)?,
            "calibration.sigma" => self.sigma = f(value)?,
            "calibration.meters_per_step" => {
                let v = f(value)?;
                self.meters_per_step = (v > 0.0).then_some(v);
            }
            "calibration.file" => self.calibration_file = opt_path(value),
            "mock.sigma_true" => self.mock_sigma_true = f(value)?,
            "mock.gamma_true" => self.mock_gamma_true = f(value)?,
            "sensors.marker_rate_hz" => self.sensors.marker_rate_hz = f(value)?,
            "sensors.accel_rate_hz" => self.sensors.accel_rate_hz = f(value)?,
            "sensors.marker_noise_rel" => self.sensors.marker_noise_rel = f(value)?,
            "sensors.accel_noise_rel" => self.sensors.accel_noise_rel = f(value)?,
            "sensors.accel_bias_rel" => self.sensors.accel_bias_rel = f(value)?,
            "filters.lowpass_order" => self.lowpass.order = u(value)? as usize,
            "filters.lowpass_cutoff_hz" => self.lowpass.cutoff_hz = f(value)?,
            "filters.highpass_order" => self.highpass.order = u(value)? as usize,
            "filters.highpass_cutoff_hz" => self.highpass.cutoff_hz = f(value)?,
            "fusion.degree" => self.fusion_degree = u(value)? as usize,
            "perception.enabled" => self.perception_enabled = b(value)?,
            "rock.file" => self.rock_file = opt_path(value),
            "rock.polarity" => self.rock_polarity = f(value)?,
            "sweep.pga_ms2" => self.sweep_pga = parse_grid(value)?,
            "sweep.kappa_s" => self.sweep_kappa = parse_grid(value)?,
            "sim.dt" => self.sim_dt = f(value)?,
            "sim.settle_time_s" => self.settle_time = f(value)?,
            "outcome_source" => {
                self.outcome_source = match value {
                    "oracle" => OutcomeSource::Oracle,
                    "manual" => OutcomeSource::Manual,
                    _ => {
                        return Err(Error::Config(format!(
                            "outcome_source must be oracle or manual, got {value:?}"
                        )))
                    }
                }
            }
            "seed" => self.seed = u(value)?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            "time0" => self.time0 = value.to_string(),
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        MotorSpec::new(
            self.motor.torque_at_max_speed,
            self.motor.max_speed_rpm,
            self.motor.full_steps_per_rev,
            self.motor.microsteps_per_rev,
        )?;
        Drivetrain::new(
            self.drivetrain.pulley_radius,
            self.drivetrain.gamma,
            self.drivetrain.travel_limit,
            self.drivetrain.max_pulse_rate_hz,
        )?;
        for (name, v) in [
            ("requirements.payload_kg", self.payload_kg),
            ("command_rate_hz", self.command_rate_hz),
            ("calibration.sigma", self.sigma),
            ("mock.sigma_true", self.mock_sigma_true),
            ("mock.gamma_true", self.mock_gamma_true),
            ("sensors.marker_rate_hz", self.sensors.marker_rate_hz),
            ("sensors.accel_rate_hz", self.sensors.accel_rate_hz),
            ("sim.dt", self.sim_dt),
        ] {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.sweep_pga.is_empty() || self.sweep_kappa.is_empty() {
            return Err(Error::Config("sweep grids must be non-empty".into()));
        }
        if self.rock_polarity != 1.0 && self.rock_polarity != -1.0 {
            return Err(Error::Config(format!(
                "rock.polarity must be 1 or -1, got {}",
                self.rock_polarity
            )));
        }
        chrono::DateTime::parse_from_rfc3339(&self.time0)
            .map_err(|e| Error::Config(format!("time0 is not RFC 3339: {e}")))?;
        if let Some(path) = &self.rock_file {
            if !path.exists() {
                return Err(Error::Config(format!(
                    "rock.file {} does not exist",
                    path.display()
                )));
            }
        }
        Ok(())
    }

    /// Load σ / γ / step resolution from a calibration report
    /// (`sigma=`, `gamma=`, `meters_per_step=` lines).
    pub fn apply_calibration_report(&mut self, path: &Path) -> Result<()> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        for line in text.lines() {
            let trimmed = line.split('#').next().unwrap_or("").trim();
            if trimmed.is_empty() {
                continue;
            }
            let Some((key, value)) = trimmed.split_once('=') else {
                continue;
            };
            let value: f64 = value.trim().parse().map_err(|_| {
                Error::Config(format!(
                    "calibration report {}: bad value for {key}",
                    path.display()
                ))
            })?;
            match key.trim() {
                "sigma" => self.sigma = value,
                "gamma" => self.drivetrain.gamma = value,
                "meters_per_step" => self.meters_per_step = Some(value),
                _ => {}
            }
        }
        Ok(())
    }

    /// The configured rock, or the built-in asymmetric desk specimen.
    pub fn rock_spec(&self) -> Result<RockSpec> {
        match &self.rock_file {
            Some(path) => RockSpec::read_path(path),
            None => {
                let alpha = (0.1_f64).atan();
                block_from_box(0.04, 0.20, 0.105, housner_restitution(alpha.max(0.19)))
            }
        }
    }

    /// Serialize the full effective configuration.
    pub fn write(&self, mut w: impl Write) -> std::io::Result<()> {
        let path_str = |p: &Option<PathBuf>| {
            p.as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default()
        };
        writeln!(w, "# shakebot effective configuration")?;
        writeln!(w, "motor.torque_nm = {}", self.motor.torque_at_max_speed)?;
        writeln!(w, "motor.max_speed_rpm = {}", self.motor.max_speed_rpm)?;
        writeln!(w, "motor.full_steps_per_rev = {}", self.motor.full_steps_per_rev)?;
        writeln!(w, "motor.microsteps_per_rev = {}", self.motor.microsteps_per_rev)?;
        writeln!(w, "drivetrain.pulley_radius_m = {}", self.drivetrain.pulley_radius)?;
        writeln!(w, "drivetrain.gamma = {}", self.drivetrain.gamma)?;
        writeln!(w, "drivetrain.travel_limit_m = {}", self.drivetrain.travel_limit)?;
        writeln!(w, "drivetrain.max_pulse_rate_hz = {}", self.drivetrain.max_pulse_rate_hz)?;
        writeln!(w, "requirements.payload_kg = {}", self.payload_kg)?;
        writeln!(w, "requirements.accel_ms2 = {}", self.required_accel)?;
        writeln!(w, "requirements.velocity_ms = {}", self.required_velocity)?;
        writeln!(w, "command_rate_hz = {}", self.command_rate_hz)?;
        writeln!(w, "calibration.sigma = {}", self.sigma)?;
        writeln!(
            w,
            "calibration.meters_per_step = {}",
            self.meters_per_step.unwrap_or(0.0)
        )?;
        writeln!(w, "calibration.file = {}", path_str(&self.calibration_file))?;
        writeln!(w, "mock.sigma_true = {}", self.mock_sigma_true)?;
        writeln!(w, "mock.gamma_true = {}", self.mock_gamma_true)?;
        writeln!(w, "sensors.marker_rate_hz = {}", self.sensors.marker_rate_hz)?;
        writeln!(w, "sensors.accel_rate_hz = {}", self.sensors.accel_rate_hz)?;
        writeln!(w, "sensors.marker_noise_rel = {}", self.sensors.marker_noise_rel)?;
        writeln!(w, "sensors.accel_noise_rel = {}", self.sensors.accel_noise_rel)?;
        writeln!(w, "sensors.accel_bias_rel = {}", self.sensors.accel_bias_rel)?;
        writeln!(w, "filters.lowpass_order = {}", self.lowpass.order)?;
        writeln!(w, "filters.lowpass_cutoff_hz = {}", self.lowpass.cutoff_hz)?;
        writeln!(w, "filters.highpass_order = {}", self.highpass.order)?;
        writeln!(w, "filters.highpass_cutoff_hz = {}", self.highpass.cutoff_hz)?;
        writeln!(w, "fusion.degree = {}", self.fusion_degree)?;
        writeln!(w, "perception.enabled = {}", self.perception_enabled)?;
        writeln!(w, "rock.file = {}", path_str(&self.rock_file))?;
        writeln!(w, "rock.polarity = {}", self.rock_polarity)?;
        writeln!(w, "sweep.pga_ms2 = {}", grid_to_string(&self.sweep_pga))?;
        writeln!(w, "sweep.kappa_s = {}", grid_to_string(&self.sweep_kappa))?;
        writeln!(w, "sim.dt = {}", self.sim_dt)?;
        writeln!(w, "sim.settle_time_s = {}", self.settle_time)?;
        writeln!(
            w,
            "outcome_source = {}",
            match self.outcome_source {
                OutcomeSource::Oracle => "oracle",
                OutcomeSource::Manual => "manual",
            }
        )?;
        writeln!(w, "seed = {}", self.seed)?;
        writeln!(w, "out_dir = {}", self.out_dir.display())?;
        writeln!(w, "time0 = {}", self.time0)?;
        Ok(())
    }

    /// Effective planner step resolution.
    pub fn effective_meters_per_step(&self) -> f64 {
        self.meters_per_step
            .unwrap_or_else(|| self.drivetrain.meters_per_step(&self.motor))
    }

    /// RFC 3339 timestamp of the n-th run on the deterministic run clock.
    pub fn run_timestamp(&self, run_index: u64) -> String {
        let base = chrono::DateTime::parse_from_rfc3339(&self.time0)
            .expect("validated at load")
            .with_timezone(&chrono::Utc);
        (base + chrono::Duration::seconds(run_index as i64))
            .to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_text() {
        let cfg = ExperimentConfig::default();
        let mut buf = Vec::new();
        cfg.write(&mut buf).unwrap();
        let parsed = ExperimentConfig::from_str(&String::from_utf8(buf).unwrap()).unwrap();
        assert_eq!(parsed, cfg);
    }

    #[test]
    fn unknown_key_rejected() {
        let err = ExperimentConfig::from_str("motor.torque_nm = 1.5\nturbo = on\n").unwrap_err();
        assert!(err.to_string().contains("unknown key"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn duplicate_key_rejected() {
        assert!(ExperimentConfig::from_str("seed = 1\nseed = 2\n").is_err());
    }

    #[test]
    fn grids_parse_both_forms() {
        let cfg = ExperimentConfig::from_str(
            "sweep.pga_ms2 = 1.0,2.5,3.0\nsweep.kappa_s = 0.1:0.3:3\n",
        )
        .unwrap();
        assert_eq!(cfg.sweep_pga, vec![1.0, 2.5, 3.0]);
        assert_eq!(cfg.sweep_kappa, vec![0.1, 0.2, 0.3]);
    }

    #[test]
    fn comments_and_blanks_ignored() {
        let cfg =
            ExperimentConfig::from_str("# hello\n\nseed = 9  # trailing comment\n").unwrap();
        assert_eq!(cfg.seed, 9);
    }

    #[test]
    fn run_clock_is_deterministic() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.run_timestamp(0), "2000-01-01T00:00:00Z");
        assert_eq!(cfg.run_timestamp(61), "2000-01-01T00:01:01Z");
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(ExperimentConfig::from_str("sim.dt = -1\n").is_err());
        assert!(ExperimentConfig::from_str("rock.polarity = 0.5\n").is_err());
        assert!(ExperimentConfig::from_str("time0 = lunchtime\n").is_err());
        assert!(ExperimentConfig::from_str("outcome_source = magic\n").is_err());
    }
}
