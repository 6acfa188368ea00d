//! Overturning response diagrams over the (PGA, PGV/PGA) plane.

use super::sim::{simulate_pulse, RockingResult, SimOptions};
use super::RockSpec;
use crate::error::{Error, Result};
use crate::ground_motion::{pulse_from_pga_kappa, STANDARD_GRAVITY};
use rayon::prelude::*;
use std::io::Write;

#[derive(Debug, Clone, Copy)]
pub struct DiagramOptions {
    /// Integration step, s.
    pub dt: f64,
    pub gravity: f64,
    /// Pulse displacement direction along the bed axis, ±1.
    pub polarity: f64,
    /// Free-rocking time simulated past the end of the pulse, s.
    pub settle_time: f64,
    /// Relative tolerance of the bisected boundary PGA.
    pub boundary_tolerance: f64,
    pub parallel: bool,
}

impl Default for DiagramOptions {
    fn default() -> Self {
        DiagramOptions {
            dt: 1e-4,
            gravity: STANDARD_GRAVITY,
            polarity: 1.0,
            settle_time: 2.0,
            boundary_tolerance: 0.01,
            parallel: true,
        }
    }
}

impl DiagramOptions {
    fn sim_options(&self, kappa: f64) -> SimOptions {
        let duration = 2.0 * std::f64::consts::PI * kappa;
        SimOptions {
            dt: self.dt,
            max_time: duration + self.settle_time,
            gravity: self.gravity,
            record_trajectory: false,
            trajectory_stride: 1,
            early_balanced_exit: true,
        }
    }
}

/// Toppled/Balanced grid plus the per-κ boundary curve.
#[derive(Debug, Clone)]
pub struct ResponseDiagram {
    pub pga_axis: Vec<f64>,
    pub kappa_axis: Vec<f64>,
    /// outcomes[kappa_index][pga_index]
    pub outcomes: Vec<Vec<RockingResult>>,
    /// Minimal toppling PGA per κ, bisection-refined; None when nothing on
    /// the grid topples.
    pub boundary: Vec<Option<f64>>,
}

fn run_cell(spec: &RockSpec, pga: f64, kappa: f64, opts: &DiagramOptions) -> Result<RockingResult> {
    let pulse = pulse_from_pga_kappa(pga, kappa).map_err(|e| match e {
        Error::NonPositiveKappa(_) | Error::NegativePga(_) => Error::Config(format!(
            "diagram cell (pga={pga}, kappa={kappa}): {e}"
        )),
        other => other,
    })?;
    let out = simulate_pulse(spec, &pulse, opts.polarity, &opts.sim_options(kappa))
        .map_err(|e| match e {
            Error::NumericalFailure { time } => Error::Config(format!(
                "diagram cell (pga={pga}, kappa={kappa}): numerical failure at t={time}"
            )),
            other => other,
        })?;
    Ok(out.result)
}

/// Bisect the smallest toppling PGA between a balanced and a toppled
/// amplitude at fixed κ.
pub fn refine_boundary(
    spec: &RockSpec,
    kappa: f64,
    mut pga_balanced: f64,
    mut pga_toppled: f64,
    opts: &DiagramOptions,
) -> Result<f64> {
    while pga_toppled - pga_balanced > opts.boundary_tolerance * pga_toppled {
        let mid = 0.5 * (pga_balanced + pga_toppled);
        match run_cell(spec, mid, kappa, opts)? {
            RockingResult::Toppled => pga_toppled = mid,
            RockingResult::Balanced => pga_balanced = mid,
        }
    }
    Ok(pga_toppled)
}

/// Sweep the grid and extract the boundary curve.
pub fn response_diagram(
    spec: &RockSpec,
    pga_grid: &[f64],
    kappa_grid: &[f64],
    opts: &DiagramOptions,
) -> Result<ResponseDiagram> {
    if pga_grid.is_empty() || kappa_grid.is_empty() {
        return Err(Error::Config("diagram grids must be non-empty".into()));
    }
    if pga_grid.iter().chain(kappa_grid).any(|v| !(*v > 0.0)) {
        return Err(Error::Config("diagram grid entries must be positive".into()));
    }

    let cells: Vec<(usize, usize)> = (0..kappa_grid.len())
        .flat_map(|i| (0..pga_grid.len()).map(move |j| (i, j)))
        .collect();
    let run = |&(i, j): &(usize, usize)| -> Result<((usize, usize), RockingResult)> {
        Ok(((i, j), run_cell(spec, pga_grid[j], kappa_grid[i], opts)?))
    };
    let results: Vec<((usize, usize), RockingResult)> = if opts.parallel {
        cells.par_iter().map(run).collect::<Result<_>>()?
    } else {
        cells.iter().map(run).collect::<Result<_>>()?
    };

    let mut outcomes =
        vec![vec![RockingResult::Balanced; pga_grid.len()]; kappa_grid.len()];
    for ((i, j), r) in results {
        outcomes[i][j] = r;
    }

    let boundary: Vec<Option<f64>> = kappa_grid
        .par_iter()
        .enumerate()
        .map(|(i, &kappa)| -> Result<Option<f64>> {
            let Some(first_toppled) = outcomes[i]
                .iter()
                .position(|r| *r == RockingResult::Toppled)
            else {
                return Ok(None);
            };
            // bracket below by the previous balanced grid cell, or by an
            // amplitude beneath both uplift thresholds (which cannot topple)
            let lo = if first_toppled > 0 {
                pga_grid[first_toppled - 1]
            } else {
                let floor = opts.gravity
                    * spec
                        .alpha_pos
                        .tan()
                        .min(spec.alpha_neg.tan());
                (0.5 * floor).min(pga_grid[0])
            };
            refine_boundary(spec, kappa, lo, pga_grid[first_toppled], opts).map(Some)
        })
        .collect::<Result<_>>()?;

    Ok(ResponseDiagram {
        pga_axis: pga_grid.to_vec(),
        kappa_axis: kappa_grid.to_vec(),
        outcomes,
        boundary,
    })
}

/// `kappa_s,pga_ms2,outcome{0|1}` rows, κ-major.
pub fn write_diagram_csv(diagram: &ResponseDiagram, mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "kappa_s,pga_ms2,outcome")?;
    for (i, kappa) in diagram.kappa_axis.iter().enumerate() {
        for (j, pga) in diagram.pga_axis.iter().enumerate() {
            let flag = match diagram.outcomes[i][j] {
                RockingResult::Toppled => 1,
                RockingResult::Balanced => 0,
            };
            writeln!(w, "{kappa},{pga},{flag}")?;
        }
    }
    Ok(())
}

/// `kappa_s,pga_boundary_ms2` rows; κ values where nothing topples are
/// omitted.
pub fn write_boundary_csv(diagram: &ResponseDiagram, mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "kappa_s,pga_boundary_ms2")?;
    for (kappa, boundary) in diagram.kappa_axis.iter().zip(&diagram.boundary) {
        if let Some(pga) = boundary {
            writeln!(w, "{kappa},{pga}")?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rocking::{block_from_box, Side};

    fn fast_opts() -> DiagramOptions {
        DiagramOptions {
            dt: 2e-4,
            settle_time: 1.0,
            ..DiagramOptions::default()
        }
    }

    #[test]
    fn all_balanced_below_uplift() {
        let spec = block_from_box(0.04, 0.20, 0.105, 0.9).unwrap();
        let thr = spec.uplift_threshold(Side::Pos, STANDARD_GRAVITY);
        let pga: Vec<f64> = (1..=4).map(|k| 0.2 * k as f64 * thr).collect();
        let kappa = vec![0.05, 0.1];
        let d = response_diagram(&spec, &pga, &kappa, &fast_opts()).unwrap();
        assert!(d
            .outcomes
            .iter()
            .flatten()
            .all(|r| *r == RockingResult::Balanced));
        assert!(d.boundary.iter().all(|b| b.is_none()));
    }

    #[test]
    fn symmetric_block_polarity_invariant() {
        let spec = block_from_box(0.05, 0.18, 0.2, 0.92).unwrap();
        let thr = spec.uplift_threshold(Side::Pos, STANDARD_GRAVITY);
        let pga: Vec<f64> = (1..=6).map(|k| 0.5 * k as f64 * thr).collect();
        let kappa = vec![0.06, 0.1, 0.16];
        let plus = response_diagram(&spec, &pga, &kappa, &fast_opts()).unwrap();
        let minus = response_diagram(
            &spec,
            &pga,
            &kappa,
            &DiagramOptions {
                polarity: -1.0,
                ..fast_opts()
            },
        )
        .unwrap();
        assert_eq!(plus.outcomes, minus.outcomes);
    }

    #[test]
    fn boundary_is_above_uplift_threshold() {
        let spec = block_from_box(0.04, 0.20, 0.105, 0.9).unwrap();
        let thr = spec.uplift_threshold(Side::Pos, STANDARD_GRAVITY);
        let pga: Vec<f64> = (1..=8).map(|k| 0.6 * k as f64 * thr).collect();
        let kappa = vec![0.08, 0.12, 0.2];
        let d = response_diagram(&spec, &pga, &kappa, &fast_opts()).unwrap();
        for b in d.boundary.iter().flatten() {
            assert!(*b >= thr, "boundary {b} below uplift threshold {thr}");
        }
        // something on this grid must topple for the test to mean anything
        assert!(d.boundary.iter().any(|b| b.is_some()));
    }

    #[test]
    fn csv_export_shapes() {
        let spec = block_from_box(0.04, 0.2, 0.105, 0.9).unwrap();
        let d = response_diagram(&spec, &[1.0, 4.0], &[0.08, 0.12], &fast_opts()).unwrap();
        let mut grid = Vec::new();
        write_diagram_csv(&d, &mut grid).unwrap();
        let text = String::from_utf8(grid).unwrap();
        assert_eq!(text.lines().count(), 1 + 4);
        assert!(text.starts_with("kappa_s,pga_ms2,outcome"));
        let mut boundary = Vec::new();
        write_boundary_csv(&d, &mut boundary).unwrap();
        assert!(String::from_utf8(boundary)
            .unwrap()
            .starts_with("kappa_s,pga_boundary_ms2"));
    }

    #[test]
    fn empty_grids_rejected() {
        let spec = block_from_box(0.04, 0.2, 0.105, 0.9).unwrap();
        assert!(response_diagram(&spec, &[], &[0.1], &fast_opts()).is_err());
        assert!(response_diagram(&spec, &[1.0], &[-0.1], &fast_opts()).is_err());
    }
}
