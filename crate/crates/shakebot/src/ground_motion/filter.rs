//! Zero-phase Butterworth filtering.
//!
//! Filters are designed as cascaded second-order sections via the bilinear
//! transform with frequency prewarping, and applied forward-backward so the
//! pass leaves no phase shift. Each pass is initialized at the steady state
//! of its first sample, so a constant input passes a low-pass (or is nulled
//! by a high-pass) without edge transients.

use crate::error::{Error, Result};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterKind {
    LowPass,
    HighPass,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterSpec {
    pub kind: FilterKind,
    pub order: usize,
    pub cutoff_hz: f64,
}

impl FilterSpec {
    pub fn low_pass(order: usize, cutoff_hz: f64) -> Self {
        FilterSpec {
            kind: FilterKind::LowPass,
            order,
            cutoff_hz,
        }
    }

    pub fn high_pass(order: usize, cutoff_hz: f64) -> Self {
        FilterSpec {
            kind: FilterKind::HighPass,
            order,
            cutoff_hz,
        }
    }

    /// Minimum series length accepted by [`apply_filter`].
    pub fn warm_up_len(&self) -> usize {
        3 * (2 * self.order + 1)
    }
}

/// One second-order section, denominator normalized to a0 = 1.
#[derive(Debug, Clone, Copy)]
struct Biquad {
    b0: f64,
    b1: f64,
    b2: f64,
    a1: f64,
    a2: f64,
}

/// Butterworth cascade for a sampled series at `sample_rate_hz`.
fn design_sections(spec: &FilterSpec, sample_rate_hz: f64) -> Vec<Biquad> {
    let n = spec.order;
    // prewarped bilinear constant; the normalized analog prototype has
    // cutoff 1 rad/s, so c = cot(π fc / fs)
    let c = 1.0 / (PI * spec.cutoff_hz / sample_rate_hz).tan();
    let c2 = c * c;
    let mut sections = Vec::with_capacity(n / 2 + 1);

    // conjugate pole pairs of the normalized prototype: s² + a1·s + 1
    for k in 0..n / 2 {
        let theta = PI * (2 * k + n + 1) as f64 / (2 * n) as f64;
        let a1_analog = -2.0 * theta.cos();
        let a0 = c2 + a1_analog * c + 1.0;
        let (b0, b1, b2) = match spec.kind {
            FilterKind::LowPass => (1.0, 2.0, 1.0),
            FilterKind::HighPass => (c2, -2.0 * c2, c2),
        };
        sections.push(Biquad {
            b0: b0 / a0,
            b1: b1 / a0,
            b2: b2 / a0,
            a1: (2.0 - 2.0 * c2) / a0,
            a2: (c2 - a1_analog * c + 1.0) / a0,
        });
    }

    // odd order adds one real pole at s = -1
    if n % 2 == 1 {
        let a0 = c + 1.0;
        let (b0, b1) = match spec.kind {
            FilterKind::LowPass => (1.0, 1.0),
            FilterKind::HighPass => (c, -c),
        };
        sections.push(Biquad {
            b0: b0 / a0,
            b1: b1 / a0,
            b2: 0.0,
            a1: (1.0 - c) / a0,
            a2: 0.0,
        });
    }
    sections
}

/// Run one section over the series in place (direct form II transposed),
/// starting from the steady state implied by the first sample.
fn run_section(s: &Biquad, series: &mut [f64]) {
    let x0 = series[0];
    let dc = (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
    let y0 = dc * x0;
    let mut z1 = (s.b1 + s.b2) * x0 - (s.a1 + s.a2) * y0;
    let mut z2 = s.b2 * x0 - s.a2 * y0;
    for x in series.iter_mut() {
        let y = s.b0 * *x + z1;
        z1 = s.b1 * *x - s.a1 * y + z2;
        z2 = s.b2 * *x - s.a2 * y;
        *x = y;
    }
}

/// Zero-phase (forward-backward) Butterworth filter of a uniformly sampled
/// series; the output has the same length as the input.
pub fn apply_filter(series: &[f64], dt: f64, spec: &FilterSpec) -> Result<Vec<f64>> {
    if spec.order < 1 {
        return Err(Error::InvalidFilterOrder(spec.order));
    }
    let nyquist = 0.5 / dt;
    if !(spec.cutoff_hz > 0.0 && spec.cutoff_hz < nyquist) {
        return Err(Error::CutoffOutOfRange {
            cutoff_hz: spec.cutoff_hz,
            nyquist_hz: nyquist,
        });
    }
    let min_len = spec.warm_up_len();
    if series.len() < min_len {
        return Err(Error::SeriesTooShort {
            len: series.len(),
            min_len,
        });
    }

    let sections = design_sections(spec, 1.0 / dt);
    let mut out = series.to_vec();
    for s in &sections {
        run_section(s, &mut out);
    }
    out.reverse();
    for s in &sections {
        run_section(s, &mut out);
    }
    out.reverse();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dft_amplitude(series: &[f64], dt: f64, freq_hz: f64) -> f64 {
        let n = series.len() as f64;
        let (mut re, mut im) = (0.0, 0.0);
        for (k, x) in series.iter().enumerate() {
            let phase = 2.0 * PI * freq_hz * k as f64 * dt;
            re += x * phase.cos();
            im -= x * phase.sin();
        }
        2.0 * (re * re + im * im).sqrt() / n
    }

    #[test]
    fn low_pass_preserves_constants() {
        let series = vec![3.7; 200];
        let out = apply_filter(&series, 0.005, &FilterSpec::low_pass(2, 20.0)).unwrap();
        assert_eq!(out.len(), series.len());
        for y in out {
            assert!((y - 3.7).abs() < 1e-9, "dc gain of low-pass is 1, got {y}");
        }
    }

    #[test]
    fn high_pass_rejects_constants() {
        let series = vec![-1.25; 200];
        let out = apply_filter(&series, 0.005, &FilterSpec::high_pass(2, 0.5)).unwrap();
        for y in out {
            assert!(y.abs() < 1e-6, "dc rejection of high-pass, got {y}");
        }
    }

    #[test]
    fn low_pass_separates_tones() {
        // 1 Hz kept within 2%, 50 Hz attenuated by at least 20 dB;
        // amplitudes measured with a single-bin DFT oracle on input and output
        let dt = 1.0 / 500.0;
        let n = 4000;
        let series: Vec<f64> = (0..n)
            .map(|k| {
                let t = k as f64 * dt;
                (2.0 * PI * 1.0 * t).sin() + (2.0 * PI * 50.0 * t).sin()
            })
            .collect();
        let out = apply_filter(&series, dt, &FilterSpec::low_pass(2, 10.0)).unwrap();

        let in_lo = dft_amplitude(&series, dt, 1.0);
        let out_lo = dft_amplitude(&out, dt, 1.0);
        let in_hi = dft_amplitude(&series, dt, 50.0);
        let out_hi = dft_amplitude(&out, dt, 50.0);

        assert!((out_lo / in_lo - 1.0).abs() < 0.02, "1 Hz gain {}", out_lo / in_lo);
        assert!(out_hi / in_hi < 0.1, "50 Hz gain {} (need <= -20 dB)", out_hi / in_hi);
    }

    #[test]
    fn cutoff_at_or_above_nyquist_rejected() {
        let series = vec![0.0; 100];
        let err = apply_filter(&series, 0.01, &FilterSpec::low_pass(2, 50.0));
        assert!(matches!(err, Err(Error::CutoffOutOfRange { .. })));
        assert!(apply_filter(&series, 0.01, &FilterSpec::low_pass(2, 49.9)).is_ok());
    }

    #[test]
    fn short_series_rejected() {
        let series = vec![0.0; 5];
        assert!(matches!(
            apply_filter(&series, 0.01, &FilterSpec::low_pass(2, 10.0)),
            Err(Error::SeriesTooShort { .. })
        ));
    }

    #[test]
    fn odd_order_designs_work() {
        let series = vec![1.0; 120];
        let out = apply_filter(&series, 0.005, &FilterSpec::low_pass(3, 15.0)).unwrap();
        for y in out {
            assert!((y - 1.0).abs() < 1e-9);
        }
        let out = apply_filter(&series, 0.005, &FilterSpec::high_pass(1, 1.0)).unwrap();
        for y in out {
            assert!(y.abs() < 1e-6);
        }
    }

    #[test]
    fn filtering_is_linear() {
        let dt = 0.002;
        let n = 600;
        let x: Vec<f64> = (0..n).map(|k| (0.13 * k as f64).sin()).collect();
        let y: Vec<f64> = (0..n).map(|k| (0.041 * k as f64).cos() * 2.0).collect();
        let spec = FilterSpec::high_pass(2, 0.2);
        let (alpha, beta) = (1.7, -0.6);
        let mixed: Vec<f64> = x
            .iter()
            .zip(&y)
            .map(|(a, b)| alpha * a + beta * b)
            .collect();
        let fx = apply_filter(&x, dt, &spec).unwrap();
        let fy = apply_filter(&y, dt, &spec).unwrap();
        let fm = apply_filter(&mixed, dt, &spec).unwrap();
        let scale = fm.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for i in 0..n {
            assert!(((alpha * fx[i] + beta * fy[i]) - fm[i]).abs() <= 1e-9 * scale.max(1.0));
        }
    }
}
