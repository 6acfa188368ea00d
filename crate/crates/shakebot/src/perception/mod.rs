//! Bed-motion estimation from fiducial markers and an accelerometer.
//!
//! Markers give displacement (relative rigid transforms projected on the
//! bed axis, averaged over whatever subset is visible); the accelerometer
//! gives filtered axis acceleration; velocity comes from fusing both
//! asynchronous streams post-hoc.

mod fusion;
mod streams;

pub use fusion::{fit_velocity, residual_rms as fusion_residual_rms, FusionModel};
pub use streams::{
    read_accel_csv, read_marker_csv, write_accel_csv, write_marker_csv,
};

use crate::error::{Error, Result};
use nalgebra::{Matrix3, Vector3};

const ORTHONORMALITY_TOL: f64 = 1e-9;
const UNIT_AXIS_TOL: f64 = 1e-9;

/// Rigid transform (rotation + translation), e.g. a marker pose in the
/// camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Pose {
    /// Construct, rejecting rotations that are not orthonormal (RᵀR = I
    /// within 1e-9) with positive determinant.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let gram = rotation.transpose() * rotation;
        let deviation = (gram - Matrix3::identity()).norm();
        if deviation > ORTHONORMALITY_TOL || rotation.determinant() <= 0.0 {
            return Err(Error::NonOrthonormalRotation);
        }
        Ok(Pose {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Build from a unit quaternion (w, x, y, z) and translation; the
    /// quaternion is normalized if within 1e-6 of unit length, rejected
    /// otherwise.
    pub fn from_quaternion(q: [f64; 4], translation: Vector3<f64>) -> Result<Self> {
        let norm = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(Error::NonOrthonormalRotation);
        }
        let (w, x, y, z) = (q[0] / norm, q[1] / norm, q[2] / norm, q[3] / norm);
        let rotation = Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        );
        Pose::new(rotation, translation)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// Rigid inverse (Rᵀ, −Rᵀt).
    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Composition self ∘ other (apply `other` first).
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }
}

/// Relative pose of position `i` with respect to position `j`, both given
/// in the same camera frame: H_i^j = (H_j^c)⁻¹ · H_i^c.
pub fn relative_pose(pose_i: &Pose, pose_j: &Pose) -> Pose {
    pose_j.inverse().compose(pose_i)
}

/// One fiducial-marker observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkerDetection {
    pub marker_id: u32,
    pub time: f64,
    pub pose_in_camera: Pose,
}

/// One 3-axis accelerometer observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccelSample {
    pub time: f64,
    pub accel_xyz: Vector3<f64>,
}

/// Marker-derived bed displacement at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisplacementSample {
    pub time: f64,
    /// Signed displacement along the bed axis, scale-corrected, m.
    pub displacement: f64,
    pub n_markers_used: usize,
}

fn check_unit_axis(axis: &Vector3<f64>) -> Result<()> {
    let norm = axis.norm();
    if (norm - 1.0).abs() > UNIT_AXIS_TOL {
        return Err(Error::NonUnitAxis(norm));
    }
    Ok(())
}

/// Bed displacement between two marker frames: for every marker visible in
/// both, project the relative-pose translation onto the bed axis, average,
/// and apply the perception scale factor σ.
///
/// Markers occluded in either frame are simply left out; with none in
/// common the estimate fails.
pub fn bed_displacement(
    current: &[MarkerDetection],
    reference: &[MarkerDetection],
    sigma: f64,
    bed_axis: &Vector3<f64>,
) -> Result<DisplacementSample> {
    check_unit_axis(bed_axis)?;
    let mut sum = 0.0;
    let mut time_sum = 0.0;
    let mut n = 0usize;
    for cur in current {
        let Some(reference_det) = reference.iter().find(|r| r.marker_id == cur.marker_id)
        else {
            continue;
        };
        let rel = relative_pose(&cur.pose_in_camera, &reference_det.pose_in_camera);
        sum += rel.translation().dot(bed_axis);
        time_sum += cur.time;
        n += 1;
    }
    if n == 0 {
        return Err(Error::NoVisibleMarkers);
    }
    Ok(DisplacementSample {
        time: time_sum / n as f64,
        displacement: sigma * sum / n as f64,
        n_markers_used: n,
    })
}

/// Axis projection and Euclidean magnitude of one accelerometer sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisAcceleration {
    /// Signed component along the bed axis, m/s².
    pub signed: f64,
    /// ‖a‖₂, m/s². Always ≥ |signed|; the excess measures axis
    /// misalignment or off-axis vibration.
    pub magnitude: f64,
}

impl AxisAcceleration {
    /// True when the magnitude exceeds the axis projection by more than
    /// `tolerance` (relative), indicating the sensor axis is off the bed
    /// axis.
    pub fn misaligned(&self, tolerance: f64) -> bool {
        self.magnitude > self.signed.abs() * (1.0 + tolerance)
    }
}

/// Project one accelerometer sample on the bed axis.
pub fn accel_along_axis(sample: &AccelSample, bed_axis: &Vector3<f64>) -> Result<AxisAcceleration> {
    check_unit_axis(bed_axis)?;
    Ok(AxisAcceleration {
        signed: sample.accel_xyz.dot(bed_axis),
        magnitude: sample.accel_xyz.norm(),
    })
}

fn check_strictly_increasing(times: impl Iterator<Item = f64>) -> Result<()> {
    let mut prev = f64::NEG_INFINITY;
    for t in times {
        if t <= prev {
            return Err(Error::NonMonotonicTimestamps(t));
        }
        prev = t;
    }
    Ok(())
}

/// First differences of displacement, stamped at interval midpoints.
pub fn derive_velocity_from_displacement(
    samples: &[DisplacementSample],
) -> Result<Vec<(f64, f64)>> {
    if samples.len() < 2 {
        return Err(Error::InsufficientSamples {
            required: 2,
            got: samples.len(),
        });
    }
    check_strictly_increasing(samples.iter().map(|s| s.time))?;
    Ok(samples
        .windows(2)
        .map(|w| {
            let dt = w[1].time - w[0].time;
            (
                0.5 * (w[0].time + w[1].time),
                (w[1].displacement - w[0].displacement) / dt,
            )
        })
        .collect())
}

/// Cumulative trapezoidal integration of (filtered, projected) axis
/// accelerations from a known initial velocity, stamped at sample times.
pub fn derive_velocity_from_accel(samples: &[(f64, f64)], v0: f64) -> Result<Vec<(f64, f64)>> {
    if samples.len() < 2 {
        return Err(Error::InsufficientSamples {
            required: 2,
            got: samples.len(),
        });
    }
    check_strictly_increasing(samples.iter().map(|s| s.0))?;
    let mut out = Vec::with_capacity(samples.len());
    let mut v = v0;
    out.push((samples[0].0, v));
    for w in samples.windows(2) {
        v += 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0);
        out.push((w[1].0, v));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn det(id: u32, time: f64, translation: [f64; 3]) -> MarkerDetection {
        MarkerDetection {
            marker_id: id,
            time,
            pose_in_camera: Pose::from_translation(Vector3::new(
                translation[0],
                translation[1],
                translation[2],
            )),
        }
    }

    #[test]
    fn relative_pose_of_identical_poses_is_identity() {
        let p = Pose::from_quaternion(
            [0.9238795325112867, 0.0, 0.3826834323650898, 0.0],
            Vector3::new(0.3, -0.2, 1.1),
        )
        .unwrap();
        let rel = relative_pose(&p, &p);
        assert!(rel.translation().norm() < 1e-12);
        assert!((rel.rotation() - Matrix3::identity()).norm() < 1e-12);
    }

    #[test]
    fn relative_pose_pure_translation() {
        // t_i = (0.10, 0, 0), t_j = (0.30, 0, 0) → H_i^j translation (−0.20, 0, 0)
        let pi = Pose::from_translation(Vector3::new(0.10, 0.0, 0.0));
        let pj = Pose::from_translation(Vector3::new(0.30, 0.0, 0.0));
        let rel = relative_pose(&pi, &pj);
        assert_relative_eq!(rel.translation().x, -0.20, max_relative = 1e-12);
        assert!(rel.translation().y.abs() < 1e-15);
    }

    #[test]
    fn relative_pose_composes_along_chains() {
        let a = Pose::from_quaternion(
            [0.995004165278026, 0.0998334166468282, 0.0, 0.0],
            Vector3::new(0.1, 0.2, 0.3),
        )
        .unwrap();
        let b = Pose::from_quaternion(
            [0.9800665778412416, 0.0, 0.19866933079506122, 0.0],
            Vector3::new(-0.4, 0.0, 0.9),
        )
        .unwrap();
        let c = Pose::from_translation(Vector3::new(0.0, -0.7, 0.2));
        let ab = relative_pose(&a, &b);
        let bc = relative_pose(&b, &c);
        let ac = relative_pose(&a, &c);
        let chained = bc.compose(&ab);
        assert!((chained.translation() - ac.translation()).norm() < 1e-12);
        assert!((chained.rotation() - ac.rotation()).norm() < 1e-12);
    }

    #[test]
    fn non_orthonormal_rotation_rejected() {
        let skewed = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(matches!(
            Pose::new(skewed, Vector3::zeros()),
            Err(Error::NonOrthonormalRotation)
        ));
    }

    #[test]
    fn displacement_averages_visible_markers() {
        let axis = Vector3::x();
        let reference: Vec<_> = (0..4).map(|i| det(i, 0.0, [0.0, i as f64, 0.0])).collect();

        // all four markers report 0.05 m along the axis
        let current: Vec<_> = (0..4)
            .map(|i| det(i, 1.0, [0.05, i as f64, 0.0]))
            .collect();
        let d = bed_displacement(&current, &reference, 1.0, &axis).unwrap();
        assert_relative_eq!(d.displacement, 0.05, max_relative = 1e-12);
        assert_eq!(d.n_markers_used, 4);

        // spread readings, σ = 1.1 → mean 0.050 × 1.1 = 0.055
        let offsets = [0.050, 0.052, 0.048, 0.050];
        let current: Vec<_> = (0..4)
            .map(|i| det(i, 1.0, [offsets[i as usize], i as f64, 0.0]))
            .collect();
        let d = bed_displacement(&current, &reference, 1.1, &axis).unwrap();
        assert_relative_eq!(d.displacement, 0.055, max_relative = 1e-12);
    }

    #[test]
    fn occlusion_drops_to_remaining_markers() {
        let axis = Vector3::x();
        let reference: Vec<_> = (0..4).map(|i| det(i, 0.0, [0.0, i as f64, 0.0])).collect();
        let current: Vec<_> = (1..4).map(|i| det(i, 1.0, [0.03, i as f64, 0.0])).collect();
        let d = bed_displacement(&current, &reference, 1.0, &axis).unwrap();
        assert_eq!(d.n_markers_used, 3);
        assert_relative_eq!(d.displacement, 0.03, max_relative = 1e-12);

        // with zero common markers the estimate fails
        let unrelated = vec![det(9, 1.0, [0.0, 0.0, 0.0])];
        assert!(matches!(
            bed_displacement(&unrelated, &reference, 1.0, &axis),
            Err(Error::NoVisibleMarkers)
        ));
    }

    #[test]
    fn axis_projection_and_magnitude() {
        let axis = Vector3::x();
        let sample = |a: [f64; 3]| AccelSample {
            time: 0.0,
            accel_xyz: Vector3::new(a[0], a[1], a[2]),
        };
        let r = accel_along_axis(&sample([1.0, 0.0, 0.0]), &axis).unwrap();
        assert_eq!((r.signed, r.magnitude), (1.0, 1.0));

        // 3-4-5 triangle
        let r = accel_along_axis(&sample([3.0, 4.0, 0.0]), &axis).unwrap();
        assert_eq!((r.signed, r.magnitude), (3.0, 5.0));
        assert!(r.misaligned(0.05));

        let r = accel_along_axis(&sample([-2.0, 0.0, 0.0]), &axis).unwrap();
        assert_eq!((r.signed, r.magnitude), (-2.0, 2.0));
        assert!(!r.misaligned(0.05));

        assert!(matches!(
            accel_along_axis(&sample([1.0, 0.0, 0.0]), &Vector3::new(1.0, 1.0, 0.0)),
            Err(Error::NonUnitAxis(_))
        ));
    }

    #[test]
    fn displacement_differencing_linear_motion() {
        // d = 0.01·t sampled at 30 Hz → every v_d = 0.01 m/s
        let samples: Vec<_> = (0..30)
            .map(|k| DisplacementSample {
                time: k as f64 / 30.0,
                displacement: 0.01 * k as f64 / 30.0,
                n_markers_used: 4,
            })
            .collect();
        for (_, v) in derive_velocity_from_displacement(&samples).unwrap() {
            assert_relative_eq!(v, 0.01, max_relative = 1e-10);
        }

        // hand difference: (0, 0) and (0.5, 0.049) → 0.098 m/s at t = 0.25
        let two = [
            DisplacementSample { time: 0.0, displacement: 0.0, n_markers_used: 4 },
            DisplacementSample { time: 0.5, displacement: 0.049, n_markers_used: 4 },
        ];
        let v = derive_velocity_from_displacement(&two).unwrap();
        assert_eq!(v.len(), 1);
        assert_relative_eq!(v[0].0, 0.25, max_relative = 1e-12);
        assert_relative_eq!(v[0].1, 0.098, max_relative = 1e-12);

        // single sample is not differentiable
        assert!(derive_velocity_from_displacement(&two[..1]).is_err());
    }

    #[test]
    fn duplicate_timestamps_rejected() {
        let samples = [
            DisplacementSample { time: 0.1, displacement: 0.0, n_markers_used: 1 },
            DisplacementSample { time: 0.1, displacement: 0.01, n_markers_used: 1 },
        ];
        assert!(matches!(
            derive_velocity_from_displacement(&samples),
            Err(Error::NonMonotonicTimestamps(_))
        ));
    }

    #[test]
    fn accel_integration_constant_and_zero() {
        // constant 0.98 m/s² over [0, 0.1] → v(0.1) = 0.098 exactly
        let samples: Vec<_> = (0..=20).map(|k| (k as f64 * 0.005, 0.98)).collect();
        let v = derive_velocity_from_accel(&samples, 0.0).unwrap();
        assert_relative_eq!(v.last().unwrap().1, 0.098, max_relative = 1e-12);

        let zeros: Vec<_> = (0..=20).map(|k| (k as f64 * 0.005, 0.0)).collect();
        let v = derive_velocity_from_accel(&zeros, 0.25).unwrap();
        assert!(v.iter().all(|(_, v)| *v == 0.25));
    }

    #[test]
    fn accel_integration_recovers_pulse_velocity() {
        use crate::ground_motion::pulse_from_pga_kappa;
        let p = pulse_from_pga_kappa(0.98, 0.1).unwrap();
        // sample strictly inside the pulse; past 1/f the analytic
        // acceleration cuts to zero and the trapezoid would straddle the jump
        let samples: Vec<_> = (0..=125)
            .map(|k| {
                let t = k as f64 / 200.0;
                (t, p.acceleration_at(t))
            })
            .collect();
        let v = derive_velocity_from_accel(&samples, 0.0).unwrap();
        for (t, v_num) in v {
            assert!(
                (v_num - p.velocity_at(t)).abs() < 1e-4,
                "at t={t}: {v_num} vs {}",
                p.velocity_at(t)
            );
        }
    }
}
