//! End-to-end experiment runs: single pulses, batch sweeps, seismogram
//! replays, and the records CSV.

use super::config::ExperimentConfig;
use super::synth::{synthesize_streams, MotionScale, SyntheticStreams};
use crate::actuation::{commands_to_step_train, execute, MockDriver, SafetyState, TelemetryLog};
use crate::error::{Error, Result};
use crate::ground_motion::{
    apply_filter, pulse_from_pga_kappa, sample_velocity_commands, seismogram_to_commands,
    PulseParams, SeismogramRecord, VelocityCommandSeries,
};
use crate::perception::{
    accel_along_axis, bed_displacement, derive_velocity_from_accel,
    derive_velocity_from_displacement, fit_velocity, write_accel_csv, write_marker_csv,
    FusionModel,
};
use crate::rocking::{
    response_diagram, simulate_pulse, DiagramOptions, ResponseDiagram, RockSpec, RockingOutcome,
    RockingResult, SimOptions,
};
use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::fmt;
use std::io::Write;
use std::path::Path;

pub const RECORDS_CSV_HEADER: &str =
    "pga_ms2,kappa_s,pgv_ms,outcome,estimated_pgv_ms,timestamp_iso8601";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutcomeLabel {
    Toppled,
    Balanced,
    Error,
}

impl fmt::Display for OutcomeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OutcomeLabel::Toppled => write!(f, "toppled"),
            OutcomeLabel::Balanced => write!(f, "balanced"),
            OutcomeLabel::Error => write!(f, "error"),
        }
    }
}

impl From<RockingResult> for OutcomeLabel {
    fn from(r: RockingResult) -> Self {
        match r {
            RockingResult::Toppled => OutcomeLabel::Toppled,
            RockingResult::Balanced => OutcomeLabel::Balanced,
        }
    }
}

/// One row of the records CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord {
    pub pga: f64,
    pub kappa: f64,
    pub pgv: f64,
    pub outcome: OutcomeLabel,
    pub estimated_pgv: Option<f64>,
    pub timestamp: String,
}

impl ExperimentRecord {
    pub fn csv_row(&self) -> String {
        let estimated = self
            .estimated_pgv
            .map(|v| v.to_string())
            .unwrap_or_default();
        format!(
            "{},{},{},{},{},{}",
            self.pga, self.kappa, self.pgv, self.outcome, estimated, self.timestamp
        )
    }
}

/// Velocity-fusion output of one run.
#[derive(Debug, Clone)]
pub struct FusionSummary {
    pub model: FusionModel,
    pub estimated_pgv: f64,
    pub residual_rms: f64,
    pub n_displacement_samples: usize,
    pub n_accel_samples: usize,
}

impl FusionSummary {
    /// Key-value fusion report: θ, PGV estimate, residual RMS, counts.
    pub fn write_report(&self, mut w: impl Write) -> std::io::Result<()> {
        for (i, theta) in self.model.coefficients().iter().enumerate() {
            writeln!(w, "theta_{i}={theta}")?;
        }
        writeln!(w, "time_origin_s={}", self.model.time_origin())?;
        let (lo, hi) = self.model.valid_span();
        writeln!(w, "valid_span_s={lo}..{hi}")?;
        writeln!(w, "pgv_estimate_ms={}", self.estimated_pgv)?;
        writeln!(w, "residual_rms_ms={}", self.residual_rms)?;
        writeln!(w, "n_displacement_samples={}", self.n_displacement_samples)?;
        writeln!(w, "n_accel_samples={}", self.n_accel_samples)?;
        Ok(())
    }
}

/// Everything a single pulse run produced.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub record: ExperimentRecord,
    pub pulse: PulseParams,
    pub telemetry: TelemetryLog,
    pub rocking: RockingOutcome,
    pub streams: Option<SyntheticStreams>,
    pub fusion: Option<FusionSummary>,
}

/// Centered start so the motion span sits mid-stroke.
fn centered_start(travel: f64, span_lo: f64, span_hi: f64) -> Result<f64> {
    let span = span_hi - span_lo;
    if span > travel {
        return Err(Error::StrokeOverflow {
            required_m: span,
            travel_limit_m: travel,
        });
    }
    Ok(-span_lo + 0.5 * (travel - span))
}

pub(crate) fn bed_axis() -> Vector3<f64> {
    Vector3::x()
}

/// Run perception on synthetic streams: markers → displacement →
/// differenced velocity; accel → low-pass → projection → integrated
/// velocity; pool and fit.
fn fuse_streams(cfg: &ExperimentConfig, streams: &SyntheticStreams) -> Result<FusionSummary> {
    let axis = bed_axis();
    let mut displacement = Vec::with_capacity(streams.marker_frames.len());
    for frame in &streams.marker_frames {
        displacement.push(bed_displacement(
            frame,
            &streams.reference_frame,
            cfg.sigma,
            &axis,
        )?);
    }
    let v_d = derive_velocity_from_displacement(&displacement)?;

    let raw: Vec<f64> = streams
        .accel_samples
        .iter()
        .map(|s| accel_along_axis(s, &axis).map(|a| a.signed))
        .collect::<Result<_>>()?;
    let accel_dt = 1.0 / cfg.sensors.accel_rate_hz;
    let filtered = apply_filter(&raw, accel_dt, &cfg.lowpass)?;
    let projected: Vec<(f64, f64)> = streams
        .accel_samples
        .iter()
        .zip(&filtered)
        .map(|(s, a)| (s.time, *a))
        .collect();
    let v_a = derive_velocity_from_accel(&projected, 0.0)?;

    let (model, residuals) = fit_velocity(&v_d, &v_a, cfg.fusion_degree)?;
    let estimated_pgv = model.peak_velocity().1;
    let residual_rms = crate::perception::fusion_residual_rms(&residuals);
    Ok(FusionSummary {
        model,
        estimated_pgv,
        residual_rms,
        n_displacement_samples: v_d.len(),
        n_accel_samples: v_a.len(),
    })
}

/// Full single-pulse pipeline: plan → pulses → mock rig → synthetic
/// sensors → fusion → rocking oracle → record.
pub fn run_single(
    cfg: &ExperimentConfig,
    rock: &RockSpec,
    pga: f64,
    kappa: f64,
    run_index: u64,
) -> Result<RunArtifacts> {
    let pulse = pulse_from_pga_kappa(pga, kappa)?;
    if pulse.peak_displacement() > cfg.drivetrain.travel_limit {
        return Err(Error::StrokeOverflow {
            required_m: pulse.peak_displacement(),
            travel_limit_m: cfg.drivetrain.travel_limit,
        });
    }
    let series = sample_velocity_commands(&pulse, cfg.command_rate_hz)?;
    let train = commands_to_step_train(&series, &cfg.motor, &cfg.drivetrain)?;

    let start = centered_start(
        cfg.drivetrain.travel_limit,
        0.0,
        pulse.peak_displacement(),
    )?;
    let mut driver = MockDriver::with_hidden_transmission(
        start,
        cfg.drivetrain.pulley_radius,
        cfg.motor.microsteps_per_rev,
        cfg.mock_gamma_true,
        cfg.drivetrain.travel_limit,
    );
    let mut safety = SafetyState::new();
    let telemetry = execute(&train, &mut driver, &mut safety)?;
    if telemetry.soft_estop.is_some() {
        return Err(Error::StrokeOverflow {
            required_m: pulse.peak_displacement(),
            travel_limit_m: cfg.drivetrain.travel_limit,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(run_index.wrapping_add(1));

    let (streams, fusion) = if cfg.perception_enabled {
        let scale = MotionScale {
            peak_displacement: pulse.peak_displacement(),
            peak_acceleration: pulse.pga.max(f64::MIN_POSITIVE),
        };
        let accel_fn = |t: f64| pulse.acceleration_at(t);
        let streams = synthesize_streams(
            &telemetry,
            start,
            &accel_fn,
            pulse.duration(),
            &cfg.sensors,
            cfg.mock_sigma_true,
            &scale,
            &mut rng,
        );
        let fusion = fuse_streams(cfg, &streams)?;
        (Some(streams), Some(fusion))
    } else {
        (None, None)
    };

    let mut sim = SimOptions::new(pulse.duration() + cfg.settle_time);
    sim.dt = cfg.sim_dt;
    let rocking = simulate_pulse(rock, &pulse, cfg.rock_polarity, &sim)?;

    let record = ExperimentRecord {
        pga,
        kappa,
        pgv: pulse.pgv(),
        outcome: rocking.result.into(),
        estimated_pgv: fusion.as_ref().map(|f| f.estimated_pgv),
        timestamp: cfg.run_timestamp(run_index),
    };
    Ok(RunArtifacts {
        record,
        pulse,
        telemetry,
        rocking,
        streams,
        fusion,
    })
}

/// Batch sweep output.
#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub records: Vec<ExperimentRecord>,
    pub diagram: ResponseDiagram,
}

/// Run the configured (PGA, κ) grid. Cell errors become `error` rows and
/// the sweep continues; the response diagram and its boundary come from
/// the rocking oracle over the same grid.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepOutput> {
    let rock = cfg.rock_spec()?;
    let n_pga = cfg.sweep_pga.len();
    let cells: Vec<(usize, usize)> = (0..cfg.sweep_kappa.len())
        .flat_map(|i| (0..n_pga).map(move |j| (i, j)))
        .collect();

    let records: Vec<ExperimentRecord> = cells
        .par_iter()
        .map(|&(i, j)| {
            let (pga, kappa) = (cfg.sweep_pga[j], cfg.sweep_kappa[i]);
            let run_index = (i * n_pga + j) as u64;
            match run_single(cfg, &rock, pga, kappa, run_index) {
                Ok(artifacts) => artifacts.record,
                Err(_) => ExperimentRecord {
                    pga,
                    kappa,
                    pgv: pga * kappa,
                    outcome: OutcomeLabel::Error,
                    estimated_pgv: None,
                    timestamp: cfg.run_timestamp(run_index),
                },
            }
        })
        .collect();

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

    Ok(SweepOutput { records, diagram })
}

/// Write one record list as a complete CSV file.
pub fn write_records_csv(records: &[ExperimentRecord], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "{RECORDS_CSV_HEADER}")?;
    for r in records {
        writeln!(w, "{}", r.csv_row())?;
    }
    Ok(())
}

/// Append one record to a CSV file, creating it (with header) if needed.
/// The row is formatted first and written in a single call so an
/// interrupted run never leaves a half row.
pub fn append_record(path: &Path, record: &ExperimentRecord) -> Result<()> {
    use std::io::Write as _;
    let exists = path.exists() && std::fs::metadata(path).map(|m| m.len() > 0).unwrap_or(false);
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut payload = String::new();
    if !exists {
        payload.push_str(RECORDS_CSV_HEADER);
        payload.push('\n');
    }
    payload.push_str(&record.csv_row());
    payload.push('\n');
    file.write_all(payload.as_bytes())
        .and_then(|_| file.flush())
        .map_err(|e| Error::io(path.display().to_string(), e))
}

/// Summary of a seismogram replay.
#[derive(Debug, Clone)]
pub struct SeismogramRun {
    pub commands: VelocityCommandSeries,
    pub telemetry: TelemetryLog,
    pub streams: Option<SyntheticStreams>,
    pub fusion: Option<FusionSummary>,
    pub peak_displacement: f64,
    pub start_position: f64,
}

/// Replay a recorded accelerogram on the mock rig: filter → integrate →
/// high-pass → commands → pulses → telemetry (+ perception when enabled).
pub fn run_seismogram(cfg: &ExperimentConfig, record: &SeismogramRecord) -> Result<SeismogramRun> {
    let commands = seismogram_to_commands(record, &cfg.lowpass, &cfg.highpass, cfg.command_rate_hz)?;
    let train = commands_to_step_train(&commands, &cfg.motor, &cfg.drivetrain)?;
    let (lo, hi) = commands.displacement_range();
    let start = centered_start(cfg.drivetrain.travel_limit, lo, hi)?;
    let mut driver = MockDriver::with_hidden_transmission(
        start,
        cfg.drivetrain.pulley_radius,
        cfg.motor.microsteps_per_rev,
        cfg.mock_gamma_true,
        cfg.drivetrain.travel_limit,
    );
    let mut safety = SafetyState::new();
    let telemetry = execute(&train, &mut driver, &mut safety)?;

    let peak_displacement = telemetry
        .samples
        .iter()
        .map(|s| (s.position - start).abs())
        .fold(0.0, f64::max);

    let (streams, fusion) = if cfg.perception_enabled {
        // bed acceleration implied by the smooth command series, by central
        // differences of the held values
        let dt_cmd = commands.dt();
        let v = commands.commands.clone();
        let accel_fn = move |t: f64| {
            if v.len() < 2 {
                return 0.0;
            }
            let k = ((t / dt_cmd).round() as usize).min(v.len() - 1);
            let (a, b) = if k == 0 {
                (v[1] - v[0], dt_cmd)
            } else if k + 1 >= v.len() {
                (v[v.len() - 1] - v[v.len() - 2], dt_cmd)
            } else {
                (v[k + 1] - v[k - 1], 2.0 * dt_cmd)
            };
            a / b
        };
        let peak_accel = {
            let mut peak = 0.0f64;
            let n = commands.commands.len().max(2);
            for k in 0..n {
                peak = peak.max(accel_fn(k as f64 * dt_cmd).abs());
            }
            peak
        };
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(u64::from_le_bytes(*b"seismogr"));
        let scale = MotionScale {
            peak_displacement: peak_displacement.max(f64::MIN_POSITIVE),
            peak_acceleration: peak_accel.max(f64::MIN_POSITIVE),
        };
        let streams = synthesize_streams(
            &telemetry,
            start,
            &accel_fn,
            commands.duration(),
            &cfg.sensors,
            cfg.mock_sigma_true,
            &scale,
            &mut rng,
        );
        let fusion = fuse_streams(cfg, &streams)?;
        (Some(streams), Some(fusion))
    } else {
        (None, None)
    };

    Ok(SeismogramRun {
        commands,
        telemetry,
        streams,
        fusion,
        peak_displacement,
        start_position: start,
    })
}

/// Write all sweep artifacts plus the frozen effective config into `dir`.
pub fn write_sweep_outputs(cfg: &ExperimentConfig, out: &SweepOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let write_file = |name: &str, body: &dyn Fn(&mut Vec<u8>) -> std::io::Result<()>| -> Result<()> {
        let mut buf = Vec::new();
        body(&mut buf).map_err(|e| Error::io(name.to_string(), e))?;
        std::fs::write(dir.join(name), buf)
            .map_err(|e| Error::io(dir.join(name).display().to_string(), e))
    };
    write_file("records.csv", &|w| write_records_csv(&out.records, w))?;
    write_file("diagram.csv", &|w| {
        crate::rocking::write_diagram_csv(&out.diagram, w)
    })?;
    write_file("boundary.csv", &|w| {
        crate::rocking::write_boundary_csv(&out.diagram, w)
    })?;
    write_file("effective_config.txt", &|w| cfg.write(w))?;
    Ok(())
}

/// Write seismogram-run artifacts into `dir`.
pub fn write_seismogram_outputs(
    cfg: &ExperimentConfig,
    run: &SeismogramRun,
    dir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    fn save(path: &Path, body: &dyn Fn(&mut Vec<u8>) -> std::io::Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        body(&mut buf).map_err(|e| Error::io(path.display().to_string(), e))?;
        std::fs::write(path, buf).map_err(|e| Error::io(path.display().to_string(), e))
    }
    save(&dir.join("telemetry.csv"), &|w| run.telemetry.write_csv(w))?;
    if let Some(streams) = &run.streams {
        save(&dir.join("markers.csv"), &|w| {
            write_marker_csv(&streams.all_markers(), w)
        })?;
        save(&dir.join("accel.csv"), &|w| {
            write_accel_csv(&streams.accel_samples, w)
        })?;
    }
    if let Some(fusion) = &run.fusion {
        save(&dir.join("fusion_report.txt"), &|w| fusion.write_report(w))?;
    }
    save(&dir.join("effective_config.txt"), &|w| cfg.write(w))?;
    Ok(())
}
