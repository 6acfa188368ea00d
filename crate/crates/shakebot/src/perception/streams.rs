//! CSV wire formats for the two sensor streams.
//!
//! Marker stream: `time_s,marker_id,qw,qx,qy,qz,tx,ty,tz` (unit quaternion
//! and translation in the camera frame). Accel stream: `time_s,ax,ay,az`.

use super::{AccelSample, MarkerDetection, Pose};
use crate::error::{Error, Result};
use nalgebra::Vector3;
use std::io::{BufRead, Write};

pub fn write_marker_csv(detections: &[MarkerDetection], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "time_s,marker_id,qw,qx,qy,qz,tx,ty,tz")?;
    for d in detections {
        let r = d.pose_in_camera.rotation();
        // rotation matrix to quaternion (Shepperd's method, w-major branch)
        let trace = r[(0, 0)] + r[(1, 1)] + r[(2, 2)];
        let (qw, qx, qy, qz) = if trace > 0.0 {
            let s = (trace + 1.0).sqrt() * 2.0;
            (
                0.25 * s,
                (r[(2, 1)] - r[(1, 2)]) / s,
                (r[(0, 2)] - r[(2, 0)]) / s,
                (r[(1, 0)] - r[(0, 1)]) / s,
            )
        } else if r[(0, 0)] > r[(1, 1)] && r[(0, 0)] > r[(2, 2)] {
            let s = (1.0 + r[(0, 0)] - r[(1, 1)] - r[(2, 2)]).sqrt() * 2.0;
            (
                (r[(2, 1)] - r[(1, 2)]) / s,
                0.25 * s,
                (r[(0, 1)] + r[(1, 0)]) / s,
                (r[(0, 2)] + r[(2, 0)]) / s,
            )
        } else if r[(1, 1)] > r[(2, 2)] {
            let s = (1.0 + r[(1, 1)] - r[(0, 0)] - r[(2, 2)]).sqrt() * 2.0;
            (
                (r[(0, 2)] - r[(2, 0)]) / s,
                (r[(0, 1)] + r[(1, 0)]) / s,
                0.25 * s,
                (r[(1, 2)] + r[(2, 1)]) / s,
            )
        } else {
            let s = (1.0 + r[(2, 2)] - r[(0, 0)] - r[(1, 1)]).sqrt() * 2.0;
            (
                (r[(1, 0)] - r[(0, 1)]) / s,
                (r[(0, 2)] + r[(2, 0)]) / s,
                (r[(1, 2)] + r[(2, 1)]) / s,
                0.25 * s,
            )
        };
        let t = d.pose_in_camera.translation();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            d.time, d.marker_id, qw, qx, qy, qz, t.x, t.y, t.z
        )?;
    }
    Ok(())
}

pub fn read_marker_csv(reader: impl BufRead) -> Result<Vec<MarkerDetection>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Config(format!("marker csv line {line_no}: {e}")))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with("time_s") {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if fields.len() != 9 {
            return Err(Error::Config(format!(
                "marker csv line {line_no}: expected 9 columns, got {}",
                fields.len()
            )));
        }
        let num = |i: usize| -> Result<f64> {
            fields[i]
                .parse()
                .map_err(|_| Error::Config(format!("marker csv line {line_no}: bad number {:?}", fields[i])))
        };
        let time = num(0)?;
        let marker_id: u32 = fields[1].parse().map_err(|_| {
            Error::Config(format!("marker csv line {line_no}: bad marker id {:?}", fields[1]))
        })?;
        let q = [num(2)?, num(3)?, num(4)?, num(5)?];
        let t = Vector3::new(num(6)?, num(7)?, num(8)?);
        out.push(MarkerDetection {
            marker_id,
            time,
            pose_in_camera: Pose::from_quaternion(q, t)?,
        });
    }
    Ok(out)
}

pub fn write_accel_csv(samples: &[AccelSample], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "time_s,ax,ay,az")?;
    for s in samples {
        writeln!(
            w,
            "{},{},{},{}",
            s.time, s.accel_xyz.x, s.accel_xyz.y, s.accel_xyz.z
        )?;
    }
    Ok(())
}

pub fn read_accel_csv(reader: impl BufRead) -> Result<Vec<AccelSample>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Config(format!("accel csv line {line_no}: {e}")))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with("time_s") {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(Error::Config(format!(
                "accel csv line {line_no}: expected 4 columns, got {}",
                fields.len()
            )));
        }
        let num = |i: usize| -> Result<f64> {
            fields[i]
                .parse()
                .map_err(|_| Error::Config(format!("accel csv line {line_no}: bad number {:?}", fields[i])))
        };
        out.push(AccelSample {
            time: num(0)?,
            accel_xyz: Vector3::new(num(1)?, num(2)?, num(3)?),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn marker_csv_round_trip() {
        let dets = vec![
            MarkerDetection {
                marker_id: 3,
                time: 0.125,
                pose_in_camera: Pose::from_quaternion(
                    [0.9238795325112867, 0.0, 0.0, 0.3826834323650898],
                    Vector3::new(0.1, -0.2, 0.8),
                )
                .unwrap(),
            },
            MarkerDetection {
                marker_id: 0,
                time: 0.15,
                pose_in_camera: Pose::from_translation(Vector3::new(-0.05, 0.075, 0.8)),
            },
        ];
        let mut buf = Vec::new();
        write_marker_csv(&dets, &mut buf).unwrap();
        let parsed = read_marker_csv(Cursor::new(buf)).unwrap();
        assert_eq!(parsed.len(), 2);
        for (a, b) in dets.iter().zip(&parsed) {
            assert_eq!(a.marker_id, b.marker_id);
            assert!((a.time - b.time).abs() < 1e-12);
            assert!(
                (a.pose_in_camera.translation() - b.pose_in_camera.translation()).norm() < 1e-12
            );
            assert!((a.pose_in_camera.rotation() - b.pose_in_camera.rotation()).norm() < 1e-9);
        }
    }

    #[test]
    fn accel_csv_round_trip() {
        let samples = vec![
            AccelSample { time: 0.0, accel_xyz: Vector3::new(0.1, 0.0, -0.02) },
            AccelSample { time: 0.005, accel_xyz: Vector3::new(0.2, 0.01, 0.0) },
        ];
        let mut buf = Vec::new();
        write_accel_csv(&samples, &mut buf).unwrap();
        let parsed = read_accel_csv(Cursor::new(buf)).unwrap();
        assert_eq!(parsed, samples);
    }

    #[test]
    fn malformed_rows_reported_with_line() {
        let body = "time_s,ax,ay,az\n0.0,1,2,3\n0.1,x,2,3\n";
        let err = read_accel_csv(Cursor::new(body)).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }
}
