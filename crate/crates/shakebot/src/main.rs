//! Shakebot command-line front end.

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use shakebot::actuation::{feasibility_check, MockDriver};
use shakebot::calibration::{run_gamma_calibration, run_perception_calibration};
use shakebot::error::{Error, Result};
use shakebot::ground_motion::{pulse_from_pga_kappa, pulse_profile, SeismogramRecord};
use shakebot::harness::{
    interactive_session, run_seismogram, run_sweep, write_seismogram_outputs, write_sweep_outputs,
    ExperimentConfig,
};
use shakebot::rocking::{
    response_diagram, write_boundary_csv, write_diagram_csv, DiagramOptions,
};
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "shakebot",
    about = "Desk-scale shake table simulator: pulse and seismogram ground motions, \
             calibration, and rocking-block overturning experiments",
    version
)]
struct Cli {
    /// Experiment configuration file (key = value text).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override the configured random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the configured output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Rock specification file (key = value text).
    #[arg(long, global = true, value_name = "PATH")]
    rock: Option<PathBuf>,
    /// Peak ground acceleration, m/s².
    #[arg(long, global = true)]
    pga: Option<f64>,
    /// PGV/PGA ratio, s.
    #[arg(long, global = true)]
    kappa: Option<f64>,
    /// Skip synthetic perception and fusion (faster sweeps).
    #[arg(long = "no-perception", global = true)]
    no_perception: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Static motor sizing check against the ground-motion requirements.
    Feasibility {
        /// Payload mass (carriage + specimen), kg.
        #[arg(long)]
        payload: Option<f64>,
        /// Required bed acceleration, m/s².
        #[arg(long)]
        required_accel: Option<f64>,
        /// Required bed velocity, m/s.
        #[arg(long)]
        required_vel: Option<f64>,
    },
    /// Print single-pulse parameters and optionally write the sampled
    /// profile CSV (needs --pga and --kappa).
    Pulse {
        /// Profile sample rate, Hz.
        #[arg(long, default_value_t = 200.0)]
        rate: f64,
    },
    /// Run the configured (PGA, kappa) sweep: records.csv, diagram.csv,
    /// boundary.csv.
    Sweep,
    /// Prompt-driven overturning experiments appending to records.csv.
    Interactive,
    /// Scripted perception calibration on the mock rig (sigma and step
    /// resolution).
    CalibratePerception {
        /// Number of random calibration positions.
        #[arg(long, default_value_t = 50)]
        points: usize,
    },
    /// Scripted transmission calibration on the mock rig (gamma).
    CalibrateGamma {
        /// Number of half-cosine trials.
        #[arg(long, default_value_t = 20)]
        trials: usize,
    },
    /// Replay a recorded accelerogram (CSV: time_s,accel_ms2) on the rig.
    Seismogram {
        /// Input record path.
        path: PathBuf,
    },
    /// Overturning response diagram of the configured rock over the
    /// configured grids, without the motion pipeline.
    Diagram,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Some(rock) = &cli.rock {
        if !rock.exists() {
            return Err(Error::Config(format!(
                "rock file {} does not exist",
                rock.display()
            )));
        }
        cfg.rock_file = Some(rock.clone());
    }
    if cli.no_perception {
        cfg.perception_enabled = false;
    }
    Ok(cfg)
}

fn ensure_out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))
}

fn require(value: Option<f64>, flag: &str) -> Result<f64> {
    value.ok_or_else(|| Error::Config(format!("missing required flag --{flag}")))
}

fn write_calibration_report(path: &Path, entries: &[(&str, String)]) -> Result<()> {
    // merge with an existing report so perception and gamma calibrations
    // can share one file
    let mut kept: Vec<String> = Vec::new();
    if let Ok(existing) = std::fs::read_to_string(path) {
        for line in existing.lines() {
            if let Some((key, _)) = line.split_once('=') {
                if !entries.iter().any(|(k, _)| *k == key.trim()) {
                    kept.push(line.to_string());
                }
            }
        }
    }
    let mut body = String::new();
    for line in kept {
        body.push_str(&line);
        body.push('\n');
    }
    for (key, value) in entries {
        body.push_str(&format!("{key}={value}\n"));
    }
    std::fs::write(path, body).map_err(|e| Error::io(path.display().to_string(), e))
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let print_err = |e: std::io::Error| Error::io("stdout", e);

    match &cli.command {
        Command::Feasibility {
            payload,
            required_accel,
            required_vel,
        } => {
            let payload = payload.unwrap_or(cfg.payload_kg);
            let req_a = required_accel.unwrap_or(cfg.required_accel);
            let req_v = required_vel.unwrap_or(cfg.required_velocity);
            let report = feasibility_check(&cfg.motor, &cfg.drivetrain, payload, req_a, req_v);
            writeln!(out, "force = {:.2} N", report.force).map_err(print_err)?;
            writeln!(out, "achievable_accel = {:.2} m/s2", report.achievable_accel)
                .map_err(print_err)?;
            writeln!(out, "accel_margin_ratio = {:.2}", report.accel_margin_ratio)
                .map_err(print_err)?;
            writeln!(out, "max_belt_speed = {:.4} m/s", report.max_belt_speed)
                .map_err(print_err)?;
            writeln!(
                out,
                "  rpm_limited = {:.4} m/s, pulse_rate_limited = {:.4} m/s",
                report.rpm_limited_speed, report.pulse_rate_limited_speed
            )
            .map_err(print_err)?;
            writeln!(
                out,
                "acceleration requirement ({req_a} m/s2): {}",
                if report.accel_ok { "PASS" } else { "FAIL" }
            )
            .map_err(print_err)?;
            writeln!(
                out,
                "velocity requirement ({req_v} m/s): {}",
                if report.velocity_ok { "PASS" } else { "FAIL" }
            )
            .map_err(print_err)?;
            if !report.pass() {
                return Err(Error::FeasibilityRejected(
                    "motor does not satisfy the stated requirements".into(),
                ));
            }
        }
        Command::Pulse { rate } => {
            let pga = require(cli.pga, "pga")?;
            let kappa = require(cli.kappa, "kappa")?;
            let pulse = pulse_from_pga_kappa(pga, kappa)?;
            writeln!(out, "frequency = {} Hz", pulse.frequency).map_err(print_err)?;
            writeln!(out, "amplitude = {} m", pulse.amplitude).map_err(print_err)?;
            writeln!(out, "pgv = {} m/s", pulse.pgv()).map_err(print_err)?;
            writeln!(out, "peak_displacement = {} m", pulse.peak_displacement())
                .map_err(print_err)?;
            writeln!(out, "duration = {} s", pulse.duration()).map_err(print_err)?;
            if cli.out.is_some() {
                ensure_out_dir(&cfg.out_dir)?;
                let profile = pulse_profile(&pulse, *rate)?;
                let path = cfg.out_dir.join("profile.csv");
                let mut body = String::from("time_s,displacement_m,velocity_ms,accel_ms2\n");
                for s in &profile.samples {
                    body.push_str(&format!("{},{},{},{}\n", s.t, s.d, s.v, s.a));
                }
                std::fs::write(&path, body)
                    .map_err(|e| Error::io(path.display().to_string(), e))?;
                writeln!(out, "profile written to {}", path.display()).map_err(print_err)?;
            }
        }
        Command::Sweep => {
            let sweep = run_sweep(&cfg)?;
            ensure_out_dir(&cfg.out_dir)?;
            write_sweep_outputs(&cfg, &sweep, &cfg.out_dir)?;
            let toppled = sweep
                .records
                .iter()
                .filter(|r| r.outcome == shakebot::harness::OutcomeLabel::Toppled)
                .count();
            writeln!(
                out,
                "swept {} cells ({} toppled); outputs in {}",
                sweep.records.len(),
                toppled,
                cfg.out_dir.display()
            )
            .map_err(print_err)?;
        }
        Command::Interactive => {
            ensure_out_dir(&cfg.out_dir)?;
            let records = cfg.out_dir.join("records.csv");
            let stdin = std::io::stdin();
            let mut input = stdin.lock();
            interactive_session(&cfg, &records, &mut input, &mut out)?;
        }
        Command::CalibratePerception { points } => {
            ensure_out_dir(&cfg.out_dir)?;
            // the simulated rig steps at its physically true resolution
            let mps_true = 2.0 * std::f64::consts::PI * cfg.drivetrain.pulley_radius
                / (cfg.mock_gamma_true * cfg.motor.microsteps_per_rev as f64);
            let mut driver = MockDriver::new(shakebot::actuation::MockDriverConfig::new(
                0.5 * cfg.drivetrain.travel_limit,
                mps_true,
                cfg.drivetrain.travel_limit,
            ));
            let tap = driver.position_tap();
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let mut sensor_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
            // marker noise scaled to a 1 cm reference motion
            let noise = cfg.sensors.marker_noise_rel * 0.01;
            let sigma_true = cfg.mock_sigma_true;
            let mut markers = move || {
                use rand_distr::Distribution;
                let n = rand_distr::Normal::new(0.0, noise.max(f64::MIN_POSITIVE)).unwrap();
                tap.position() / sigma_true + n.sample(&mut sensor_rng)
            };
            let budget = (cfg.drivetrain.travel_limit / mps_true * 4.0) as u64;
            let cal = run_perception_calibration(
                &mut driver,
                &mut markers,
                cfg.drivetrain.travel_limit,
                *points,
                &mut rng,
                budget,
            )?;
            writeln!(out, "sigma = {}", cal.sigma.factor).map_err(print_err)?;
            writeln!(out, "meters_per_step = {}", cal.meters_per_step).map_err(print_err)?;
            writeln!(out, "steps_across_stroke = {}", cal.steps_across_stroke)
                .map_err(print_err)?;
            writeln!(out, "residual_rms = {}", cal.sigma.residual_rms).map_err(print_err)?;
            let path = cfg.out_dir.join("calibration.txt");
            write_calibration_report(
                &path,
                &[
                    ("sigma", cal.sigma.factor.to_string()),
                    ("meters_per_step", cal.meters_per_step.to_string()),
                    ("residual_rms", cal.sigma.residual_rms.to_string()),
                    ("n_samples", cal.sigma.n_samples.to_string()),
                ],
            )?;
            writeln!(out, "report written to {}", path.display()).map_err(print_err)?;
        }
        Command::CalibrateGamma { trials } => {
            ensure_out_dir(&cfg.out_dir)?;
            let mut driver = MockDriver::with_hidden_transmission(
                0.5 * cfg.drivetrain.travel_limit,
                cfg.drivetrain.pulley_radius,
                cfg.motor.microsteps_per_rev,
                cfg.mock_gamma_true,
                cfg.drivetrain.travel_limit,
            );
            let tap = driver.position_tap();
            let mut sensor_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9a77a);
            let noise = cfg.sensors.marker_noise_rel * 0.01;
            let sigma_true = cfg.mock_sigma_true;
            let mut markers = move || {
                use rand_distr::Distribution;
                let n = rand_distr::Normal::new(0.0, noise.max(f64::MIN_POSITIVE)).unwrap();
                tap.position() / sigma_true + n.sample(&mut sensor_rng)
            };
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let max_d = 0.35 * cfg.drivetrain.travel_limit;
            let displacements: Vec<f64> = (0..*trials)
                .map(|_| {
                    use rand::Rng;
                    rng.random_range(0.3 * max_d..max_d)
                })
                .collect();
            let result = run_gamma_calibration(
                &mut driver,
                &mut markers,
                cfg.sigma,
                &cfg.motor,
                &cfg.drivetrain,
                cfg.command_rate_hz,
                &displacements,
                16,
            )?;
            writeln!(out, "gamma = {}", result.factor).map_err(print_err)?;
            writeln!(out, "residual_rms = {}", result.residual_rms).map_err(print_err)?;
            writeln!(out, "n_samples = {}", result.n_samples).map_err(print_err)?;
            let path = cfg.out_dir.join("calibration.txt");
            write_calibration_report(
                &path,
                &[
                    ("gamma", result.factor.to_string()),
                    ("gamma_residual_rms", result.residual_rms.to_string()),
                    ("gamma_n_samples", result.n_samples.to_string()),
                ],
            )?;
            writeln!(out, "report written to {}", path.display()).map_err(print_err)?;
        }
        Command::Seismogram { path } => {
            let record = SeismogramRecord::from_csv_path(path)?;
            let run = run_seismogram(&cfg, &record)?;
            ensure_out_dir(&cfg.out_dir)?;
            write_seismogram_outputs(&cfg, &run, &cfg.out_dir)?;
            writeln!(
                out,
                "replayed {} samples over {:.3} s; peak bed displacement {:.5} m",
                record.accel.len(),
                record.duration(),
                run.peak_displacement
            )
            .map_err(print_err)?;
            if let Some(fusion) = &run.fusion {
                writeln!(out, "estimated PGV = {:.5} m/s", fusion.estimated_pgv)
                    .map_err(print_err)?;
            }
            writeln!(out, "outputs in {}", cfg.out_dir.display()).map_err(print_err)?;
        }
        Command::Diagram => {
            let rock = cfg.rock_spec()?;
            let diagram = response_diagram(
                &rock,
                &cfg.sweep_pga,
                &cfg.sweep_kappa,
                &DiagramOptions {
                    dt: cfg.sim_dt,
                    polarity: cfg.rock_polarity,
                    settle_time: cfg.settle_time,
                    ..DiagramOptions::default()
                },
            )?;
            ensure_out_dir(&cfg.out_dir)?;
            let diagram_path = cfg.out_dir.join("diagram.csv");
            let mut buf = Vec::new();
            write_diagram_csv(&diagram, &mut buf)
                .map_err(|e| Error::io(diagram_path.display().to_string(), e))?;
            std::fs::write(&diagram_path, buf)
                .map_err(|e| Error::io(diagram_path.display().to_string(), e))?;
            let boundary_path = cfg.out_dir.join("boundary.csv");
            let mut buf = Vec::new();
            write_boundary_csv(&diagram, &mut buf)
                .map_err(|e| Error::io(boundary_path.display().to_string(), e))?;
            std::fs::write(&boundary_path, buf)
                .map_err(|e| Error::io(boundary_path.display().to_string(), e))?;
            let toppled: usize = diagram
                .outcomes
                .iter()
                .flatten()
                .filter(|r| **r == shakebot::rocking::RockingResult::Toppled)
                .count();
            writeln!(
                out,
                "diagram over {}x{} cells ({} toppled) written to {}",
                diagram.kappa_axis.len(),
                diagram.pga_axis.len(),
                toppled,
                cfg.out_dir.display()
            )
            .map_err(print_err)?;
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
