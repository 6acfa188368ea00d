//! Velocity fusion: least-squares polynomial regression over the pooled,
//! unsynchronized velocity samples derived from markers and accelerometer.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Fitted polynomial velocity model v̂(t; θ).
///
/// The polynomial is evaluated in centered-and-scaled time u = (t − origin)
/// / scale mapping the fitted span onto [−1, 1]; a degree-6 Vandermonde
/// system on raw seconds would be badly conditioned.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionModel {
    coefficients: Vec<f64>,
    time_origin: f64,
    time_scale: f64,
    valid_span: (f64, f64),
}

impl FusionModel {
    /// θ₀…θ_d in the scaled-time basis.
    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn degree(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn time_origin(&self) -> f64 {
        self.time_origin
    }

    pub fn valid_span(&self) -> (f64, f64) {
        self.valid_span
    }

    /// Evaluation outside the fitted span is extrapolation.
    pub fn is_extrapolation(&self, t: f64) -> bool {
        t < self.valid_span.0 || t > self.valid_span.1
    }

    pub fn predict(&self, t: f64) -> f64 {
        let u = (t - self.time_origin) / self.time_scale;
        self.coefficients.iter().rev().fold(0.0, |acc, c| acc * u + c)
    }

    /// (time, |v| max) over the span by dense scan.
    pub fn peak_velocity(&self) -> (f64, f64) {
        self.peak_velocity_in(self.valid_span.0, self.valid_span.1)
    }

    pub fn peak_velocity_in(&self, t_lo: f64, t_hi: f64) -> (f64, f64) {
        let n = 4000;
        let mut best = (t_lo, self.predict(t_lo).abs());
        for k in 0..=n {
            let t = t_lo + (t_hi - t_lo) * k as f64 / n as f64;
            let v = self.predict(t).abs();
            if v > best.1 {
                best = (t, v);
            }
        }
        best
    }
}

/// Fit v̂(t; θ) of the given degree to the pooled velocity samples from the
/// displacement stream (`v_d`) and the acceleration stream (`v_a`). The two
/// streams need not share timestamps or rates. Returns the model together
/// with the residual vector (fit minus sample, `v_d` entries first).
pub fn fit_velocity(
    v_d: &[(f64, f64)],
    v_a: &[(f64, f64)],
    degree: usize,
) -> Result<(FusionModel, Vec<f64>)> {
    let n = v_d.len() + v_a.len();
    if n < degree + 1 {
        return Err(Error::InsufficientSamples {
            required: degree + 1,
            got: n,
        });
    }
    let pooled: Vec<(f64, f64)> = v_d.iter().chain(v_a.iter()).copied().collect();
    let t_min = pooled.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let t_max = pooled.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
    if !(t_max > t_min) {
        return Err(Error::RankDeficient);
    }
    let origin = 0.5 * (t_min + t_max);
    let scale = 0.5 * (t_max - t_min);

    let mut design = DMatrix::zeros(n, degree + 1);
    let mut rhs = DVector::zeros(n);
    for (row, (t, v)) in pooled.iter().enumerate() {
        let u = (t - origin) / scale;
        let mut p = 1.0;
        for col in 0..=degree {
            design[(row, col)] = p;
            p *= u;
        }
        rhs[row] = *v;
    }

    let svd = design.clone().svd(true, true);
    let s_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = s_max * 1e-12;
    if svd.singular_values.iter().any(|s| *s <= cutoff) {
        return Err(Error::RankDeficient);
    }
    let theta = svd
        .solve(&rhs, cutoff)
        .map_err(|_| Error::RankDeficient)?;

    let residuals: Vec<f64> = (&design * &theta - &rhs).iter().copied().collect();
    let model = FusionModel {
        coefficients: theta.iter().copied().collect(),
        time_origin: origin,
        time_scale: scale,
        valid_span: (t_min, t_max),
    };
    Ok((model, residuals))
}

/// Root-mean-square of a residual vector.
pub fn residual_rms(residuals: &[f64]) -> f64 {
    if residuals.is_empty() {
        return 0.0;
    }
    (residuals.iter().map(|r| r * r).sum::<f64>() / residuals.len() as f64).sqrt()
}
