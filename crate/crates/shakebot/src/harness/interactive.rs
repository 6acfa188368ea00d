//! Interactive experiment loop.
//!
//! The terminal replaces the rig's touchscreen: enter (PGV/PGA, PGA), the
//! motion runs, the estimated motion summary is shown, the overturning
//! response is logged (oracle-filled in simulation, operator-entered in
//! manual mode), and each record is appended to the CSV before the next
//! prompt.

use super::config::{ExperimentConfig, OutcomeSource};
use super::experiment::{append_record, run_single, OutcomeLabel};
use crate::actuation::feasibility_check;
use crate::error::{Error, Result};
use std::io::{BufRead, Write};
use std::path::Path;

fn read_line(input: &mut dyn BufRead) -> Result<Option<String>> {
    let mut line = String::new();
    let n = input
        .read_line(&mut line)
        .map_err(|e| Error::io("stdin", e))?;
    if n == 0 {
        return Ok(None); // EOF
    }
    Ok(Some(line.trim().to_string()))
}

/// Run the prompt loop, appending records to `records_path`. Returns the
/// number of records written. EOF or an explicit exit closes the file
/// cleanly; malformed numeric input re-prompts.
pub fn interactive_session(
    cfg: &ExperimentConfig,
    records_path: &Path,
    input: &mut dyn BufRead,
    output: &mut dyn Write,
) -> Result<usize> {
    let out_err = |e: std::io::Error| Error::io("stdout", e);
    let rock = cfg.rock_spec()?;
    let feasibility = feasibility_check(
        &cfg.motor,
        &cfg.drivetrain,
        cfg.payload_kg,
        cfg.required_accel,
        cfg.required_velocity,
    );
    let existing_rows = if records_path.exists() {
        std::fs::read_to_string(records_path)
            .map(|s| s.lines().skip(1).count())
            .unwrap_or(0)
    } else {
        0
    };
    writeln!(output, "Shakebot overturning experiments").map_err(out_err)?;
    writeln!(output, "Records: {}", records_path.display()).map_err(out_err)?;
    let mut appended = 0usize;

    loop {
        writeln!(output).map_err(out_err)?;
        writeln!(
            output,
            "Place the specimen on the bed, then enter PGV/PGA [s] and PGA [m/s2] (or 'exit'):"
        )
        .map_err(out_err)?;
        let Some(line) = read_line(input)? else { break };
        if line.is_empty() {
            continue;
        }
        if line.eq_ignore_ascii_case("exit") || line.eq_ignore_ascii_case("quit") {
            break;
        }
        let mut parts = line.split_whitespace();
        let parsed = match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), None) => match (a.parse::<f64>(), b.parse::<f64>()) {
                (Ok(kappa), Ok(pga)) => Some((kappa, pga)),
                _ => None,
            },
            _ => None,
        };
        let Some((kappa, pga)) = parsed else {
            writeln!(output, "Could not parse {line:?}; expected: <kappa_s> <pga_ms2>")
                .map_err(out_err)?;
            continue;
        };

        if pga > feasibility.achievable_accel {
            writeln!(
                output,
                "PGA {pga} m/s2 exceeds the rig's achievable acceleration of {:.2} m/s2 \
                 (force {:.2} N on {} kg); pick a smaller PGA.",
                feasibility.achievable_accel, feasibility.force, cfg.payload_kg
            )
            .map_err(out_err)?;
            continue;
        }

        let run_index = (existing_rows + appended) as u64;
        let artifacts = match run_single(cfg, &rock, pga, kappa, run_index) {
            Ok(a) => a,
            Err(e) => {
                writeln!(output, "Motion rejected: {e}").map_err(out_err)?;
                continue;
            }
        };

        writeln!(
            output,
            "Ran pulse: f = {:.4} Hz, A = {:.4} m, desired PGV = {:.4} m/s, peak travel = {:.4} m",
            artifacts.pulse.frequency,
            artifacts.pulse.amplitude,
            artifacts.pulse.pgv(),
            artifacts.pulse.peak_displacement()
        )
        .map_err(out_err)?;
        if let Some(fusion) = &artifacts.fusion {
            writeln!(
                output,
                "Estimated PGV = {:.4} m/s (residual rms {:.5} m/s, {} marker + {} accel samples)",
                fusion.estimated_pgv,
                fusion.residual_rms,
                fusion.n_displacement_samples,
                fusion.n_accel_samples
            )
            .map_err(out_err)?;
        }

        let mut record = artifacts.record.clone();
        match cfg.outcome_source {
            OutcomeSource::Oracle => {
                writeln!(output, "Oracle outcome: {}", record.outcome).map_err(out_err)?;
            }
            OutcomeSource::Manual => loop {
                writeln!(output, "Overturning response — [t]oppled or [b]alanced?")
                    .map_err(out_err)?;
                match read_line(input)? {
                    None => {
                        record.outcome = OutcomeLabel::Error;
                        break;
                    }
                    Some(answer) => match answer.to_ascii_lowercase().as_str() {
                        "t" | "toppled" => {
                            record.outcome = OutcomeLabel::Toppled;
                            break;
                        }
                        "b" | "balanced" => {
                            record.outcome = OutcomeLabel::Balanced;
                            break;
                        }
                        _ => continue,
                    },
                }
            },
        }

        append_record(records_path, &record)?;
        appended += 1;
        writeln!(output, "Recorded: {}", record.csv_row()).map_err(out_err)?;

        writeln!(output, "Run another experiment? [y/n]").map_err(out_err)?;
        match read_line(input)? {
            Some(answer) if answer.eq_ignore_ascii_case("y") || answer.eq_ignore_ascii_case("yes") => {}
            _ => break,
        }
    }

    writeln!(output, "Session closed, {appended} record(s) appended.").map_err(out_err)?;
    Ok(appended)
}
