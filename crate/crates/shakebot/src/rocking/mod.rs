//! Deterministic 2D rocking-block oracle.
//!
//! Replaces the physical specimen (and the physics-engine virtual rig) with
//! the classical piecewise rocking ODE about alternating base edges, an
//! angular-velocity restitution at each impact, and a grid sweep that maps
//! (PGA, PGV/PGA) space into overturning response diagrams.

mod diagram;
mod sim;

pub use diagram::{response_diagram, write_boundary_csv, write_diagram_csv, DiagramOptions, ResponseDiagram};
pub use sim::{
    simulate_pulse, simulate_rocking, ImpactEvent, RockingMode, RockingOutcome, RockingResult,
    SampledExcitation, SimOptions, TrajectorySample,
};

use crate::error::{Error, Result};
use std::io::{BufRead, Write};
use std::path::Path;

/// Which rocking edge, in bed coordinates. A pulse whose displacement runs
/// toward +x predominantly loads the positive edge (its mid-pulse
/// deceleration throws the specimen forward).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Pos,
    Neg,
}

/// 2D rocking-block geometry, one cross-section per excitation direction.
///
/// `alpha_*` are the slenderness angles between the vertical and the line
/// from each rocking edge to the center of mass; `radius_*` are those line
/// lengths; `inertia_*` the second moments about each edge. Asymmetric
/// values model direction-dependent fragility.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RockSpec {
    pub alpha_pos: f64,
    pub alpha_neg: f64,
    pub radius_pos: f64,
    pub radius_neg: f64,
    pub mass: f64,
    pub inertia_pos: f64,
    pub inertia_neg: f64,
    /// Angular-velocity retention factor at each impact, in (0, 1].
    pub restitution: f64,
}

impl RockSpec {
    pub fn new(
        alpha_pos: f64,
        alpha_neg: f64,
        radius_pos: f64,
        radius_neg: f64,
        mass: f64,
        inertia_pos: f64,
        inertia_neg: f64,
        restitution: f64,
    ) -> Result<Self> {
        let half_pi = std::f64::consts::FRAC_PI_2;
        for (name, alpha) in [("alpha_pos", alpha_pos), ("alpha_neg", alpha_neg)] {
            if !(alpha > 0.0 && alpha < half_pi) {
                return Err(Error::InvalidRockSpec(format!(
                    "{name} must lie in (0, π/2), got {alpha}"
                )));
            }
        }
        for (name, v) in [
            ("radius_pos", radius_pos),
            ("radius_neg", radius_neg),
            ("mass", mass),
            ("inertia_pos", inertia_pos),
            ("inertia_neg", inertia_neg),
        ] {
            if !(v > 0.0) {
                return Err(Error::InvalidRockSpec(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !(restitution > 0.0 && restitution <= 1.0) {
            return Err(Error::InvalidRockSpec(format!(
                "restitution must lie in (0, 1], got {restitution}"
            )));
        }
        Ok(RockSpec {
            alpha_pos,
            alpha_neg,
            radius_pos,
            radius_neg,
            mass,
            inertia_pos,
            inertia_neg,
            restitution,
        })
    }

    pub fn symmetric(
        alpha: f64,
        radius: f64,
        mass: f64,
        inertia: f64,
        restitution: f64,
    ) -> Result<Self> {
        Self::new(alpha, alpha, radius, radius, mass, inertia, inertia, restitution)
    }

    /// Mirror the cross-section (swap the two edges); equivalent to turning
    /// the specimen by 180° of yaw on the bed.
    pub fn mirrored(&self) -> RockSpec {
        RockSpec {
            alpha_pos: self.alpha_neg,
            alpha_neg: self.alpha_pos,
            radius_pos: self.radius_neg,
            radius_neg: self.radius_pos,
            inertia_pos: self.inertia_neg,
            inertia_neg: self.inertia_pos,
            ..*self
        }
    }

    pub fn alpha(&self, side: Side) -> f64 {
        match side {
            Side::Pos => self.alpha_pos,
            Side::Neg => self.alpha_neg,
        }
    }

    pub fn radius(&self, side: Side) -> f64 {
        match side {
            Side::Pos => self.radius_pos,
            Side::Neg => self.radius_neg,
        }
    }

    pub fn inertia(&self, side: Side) -> f64 {
        match side {
            Side::Pos => self.inertia_pos,
            Side::Neg => self.inertia_neg,
        }
    }

    /// Minimum horizontal ground acceleration that initiates rocking about
    /// the given edge from rest: g·tan α (static moment balance).
    pub fn uplift_threshold(&self, side: Side, gravity: f64) -> f64 {
        gravity * self.alpha(side).tan()
    }

    /// Frequency parameter p² = m·g·R/I about the given edge.
    pub fn p_squared(&self, side: Side, gravity: f64) -> f64 {
        self.mass * gravity * self.radius(side) / self.inertia(side)
    }

    /// Plain-text key-value export.
    pub fn write_file(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "alpha_pos_rad={}", self.alpha_pos)?;
        writeln!(w, "alpha_neg_rad={}", self.alpha_neg)?;
        writeln!(w, "R_pos_m={}", self.radius_pos)?;
        writeln!(w, "R_neg_m={}", self.radius_neg)?;
        writeln!(w, "mass_kg={}", self.mass)?;
        writeln!(w, "I_pos={}", self.inertia_pos)?;
        writeln!(w, "I_neg={}", self.inertia_neg)?;
        writeln!(w, "e={}", self.restitution)?;
        Ok(())
    }

    pub fn read_file(reader: impl BufRead) -> Result<Self> {
        let mut fields = std::collections::HashMap::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line
                .map_err(|e| Error::Config(format!("rock spec line {}: {e}", idx + 1)))?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed.split_once('=').ok_or_else(|| {
                Error::Config(format!("rock spec line {}: expected key=value", idx + 1))
            })?;
            let value: f64 = value.trim().parse().map_err(|_| {
                Error::Config(format!(
                    "rock spec line {}: bad number {:?}",
                    idx + 1,
                    value.trim()
                ))
            })?;
            fields.insert(key.trim().to_string(), value);
        }
        let get = |key: &str| {
            fields
                .get(key)
                .copied()
                .ok_or_else(|| Error::Config(format!("rock spec: missing key {key}")))
        };
        RockSpec::new(
            get("alpha_pos_rad")?,
            get("alpha_neg_rad")?,
            get("R_pos_m")?,
            get("R_neg_m")?,
            get("mass_kg")?,
            get("I_pos")?,
            get("I_neg")?,
            get("e")?,
        )
    }

    pub fn read_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::read_file(std::io::BufReader::new(file))
    }
}

/// Housner-style default restitution for a symmetric block of slenderness
/// α: e = (1 − 1.5·sin²α)², clamped into the valid (0, 1] range for very
/// squat geometries.
pub fn housner_restitution(alpha: f64) -> f64 {
    let r = 1.0 - 1.5 * alpha.sin().powi(2);
    (r * r).clamp(1e-6, 1.0)
}

/// Symmetric spec for a uniform rectangular block rocking about its base
/// corners: α = atan(w/h), R = √((w/2)² + (h/2)²), and the exact corner
/// second moment I = m(w² + h²)/3.
pub fn block_from_box(width: f64, height: f64, mass: f64, restitution: f64) -> Result<RockSpec> {
    if !(width > 0.0 && height > 0.0 && mass > 0.0) {
        return Err(Error::InvalidRockSpec(
            "box dimensions and mass must be positive".into(),
        ));
    }
    let half_w = 0.5 * width;
    let half_h = 0.5 * height;
    let alpha = (half_w / half_h).atan();
    let radius = (half_w * half_w + half_h * half_h).sqrt();
    let inertia = mass * (width * width + height * height) / 3.0;
    RockSpec::symmetric(alpha, radius, mass, inertia, restitution)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;

    #[test]
    fn uplift_threshold_moment_balance() {
        // α = atan(0.2) → threshold 0.2·g = 1.9613 m/s²
        let spec = block_from_box(0.04, 0.20, 0.105, 0.9).unwrap();
        assert_relative_eq!(spec.alpha_pos, 0.2_f64.atan(), max_relative = 1e-12);
        assert_relative_eq!(
            spec.uplift_threshold(Side::Pos, 9.80665),
            1.9613,
            max_relative = 1e-4
        );
    }

    #[test]
    fn flat_block_limit_never_uplifts() {
        // α → π/2 sends the threshold to infinity
        let near_flat = RockSpec::symmetric(1.57, 0.1, 1.0, 0.01, 0.9).unwrap();
        assert!(near_flat.uplift_threshold(Side::Pos, 9.80665) > 1e3);
    }

    #[test]
    fn asymmetric_thresholds_ordered_by_alpha() {
        let spec = RockSpec::new(0.15, 0.30, 0.1, 0.1, 0.4, 0.004, 0.004, 0.9).unwrap();
        assert!(
            spec.uplift_threshold(Side::Pos, 9.80665)
                < spec.uplift_threshold(Side::Neg, 9.80665)
        );
    }

    #[test]
    fn box_geometry_square_block() {
        let spec = block_from_box(0.1, 0.1, 1.0, 0.5).unwrap();
        assert_relative_eq!(spec.alpha_pos, std::f64::consts::FRAC_PI_4, max_relative = 1e-12);
    }

    #[test]
    fn box_inertia_matches_monte_carlo_second_moment() {
        // stochastic integration oracle: second moment of uniform points
        // over the rectangle about the bottom corner (w, 0... corner at
        // (w/2, -h/2) relative to the center)
        let (w, h, m) = (0.04, 0.20, 0.105);
        let spec = block_from_box(w, h, m, 0.9).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let n = 1_000_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let x: f64 = rng.random_range(-0.5 * w..0.5 * w);
            let y: f64 = rng.random_range(-0.5 * h..0.5 * h);
            // distance² to the corner at (w/2, −h/2)
            let dx = x - 0.5 * w;
            let dy = y + 0.5 * h;
            acc += dx * dx + dy * dy;
        }
        let mc_inertia = m * acc / n as f64;
        assert_relative_eq!(spec.inertia_pos, mc_inertia, max_relative = 5e-3);
    }

    #[test]
    fn housner_restitution_slender_value() {
        // α = atan(0.2): e = (1 − 1.5·sin²α)²
        let alpha = 0.2_f64.atan();
        let s2 = alpha.sin().powi(2);
        assert_relative_eq!(
            housner_restitution(alpha),
            (1.0 - 1.5 * s2).powi(2),
            max_relative = 1e-12
        );
        // squat geometry clamps instead of going non-physical
        assert!(housner_restitution(1.3) > 0.0);
    }

    #[test]
    fn spec_file_round_trip() {
        let spec = RockSpec::new(0.15, 0.30, 0.09, 0.11, 0.404, 0.0031, 0.0042, 0.87).unwrap();
        let mut buf = Vec::new();
        spec.write_file(&mut buf).unwrap();
        let parsed = RockSpec::read_file(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(spec, parsed);
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(RockSpec::symmetric(0.0, 0.1, 1.0, 0.01, 0.9).is_err());
        assert!(RockSpec::symmetric(2.0, 0.1, 1.0, 0.01, 0.9).is_err());
        assert!(RockSpec::symmetric(0.2, 0.1, 1.0, 0.01, 0.0).is_err());
        assert!(RockSpec::symmetric(0.2, 0.1, 1.0, 0.01, 1.2).is_err());
        assert!(block_from_box(-0.1, 0.2, 1.0, 0.9).is_err());
    }
}
