//! Event-driven integration of the piecewise rocking ODE.
//!
//! While rocking about the edge selected by sgn θ the tilt obeys
//!
//!   θ̈ = −p² [ sin(α·sgn θ − θ) + (a_g/g)·cos(α·sgn θ − θ) ],  p² = m·g·R/I
//!
//! with per-side α, R, I. Uplift from rest happens when |a_g| exceeds
//! g·tan α for the loaded edge; impacts at θ = 0 retain the fraction e of
//! the angular velocity and hand contact to the other edge; passing θ = α
//! with outward velocity is irreversible and counts as toppled.

use super::{RockSpec, Side};
use crate::error::{Error, Result};
use crate::ground_motion::{PulseParams, STANDARD_GRAVITY};

/// Uniformly sampled ground acceleration; linear interpolation between
/// samples, zero outside the record.
#[derive(Debug, Clone)]
pub struct SampledExcitation {
    pub dt: f64,
    pub accel: Vec<f64>,
}

impl SampledExcitation {
    pub fn new(dt: f64, accel: Vec<f64>) -> Self {
        SampledExcitation { dt, accel }
    }

    /// Sample the analytic single-pulse acceleration, with polarity ±1
    /// selecting the displacement direction along the bed axis.
    pub fn from_pulse(pulse: &PulseParams, polarity: f64, dt: f64) -> Self {
        let n = (pulse.duration() / dt).ceil() as usize;
        let accel = (0..=n)
            .map(|k| polarity * pulse.acceleration_at((k as f64 * dt).min(pulse.duration())))
            .collect();
        SampledExcitation { dt, accel }
    }

    pub fn duration(&self) -> f64 {
        (self.accel.len().saturating_sub(1)) as f64 * self.dt
    }

    pub fn accel_at(&self, t: f64) -> f64 {
        if t < 0.0 || t > self.duration() || self.accel.is_empty() {
            return 0.0;
        }
        let x = t / self.dt;
        let i = (x.floor() as usize).min(self.accel.len().saturating_sub(2));
        if self.accel.len() == 1 {
            return self.accel[0];
        }
        let frac = x - i as f64;
        self.accel[i] * (1.0 - frac) + self.accel[i + 1] * frac
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RockingResult {
    Toppled,
    Balanced,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RockingMode {
    Rest,
    RockingPos,
    RockingNeg,
    Toppled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    pub theta: f64,
    pub theta_dot: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpactEvent {
    pub time: f64,
    pub omega_pre: f64,
    pub omega_post: f64,
}

#[derive(Debug, Clone)]
pub struct RockingOutcome {
    pub result: RockingResult,
    /// max |θ|/α over the run (α of whichever edge was active).
    pub peak_tilt_ratio: f64,
    pub trajectory: Option<Vec<TrajectorySample>>,
    pub impacts: Vec<ImpactEvent>,
    /// Edge the block went over, when toppled.
    pub toppled_side: Option<Side>,
    pub end_time: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct SimOptions {
    /// Integration step, s.
    pub dt: f64,
    /// Wall end of the simulation, s.
    pub max_time: f64,
    pub gravity: f64,
    pub record_trajectory: bool,
    /// Keep every n-th accepted step when recording.
    pub trajectory_stride: usize,
    /// Once the input is over and the rocking energy is below every topple
    /// barrier the outcome is decided; stop there instead of integrating
    /// the whole decay. Disable to observe the full impact cascade.
    pub early_balanced_exit: bool,
}

impl SimOptions {
    pub fn new(max_time: f64) -> Self {
        SimOptions {
            dt: 1e-4,
            max_time,
            gravity: STANDARD_GRAVITY,
            record_trajectory: false,
            trajectory_stride: 10,
            early_balanced_exit: true,
        }
    }
}

fn side_of_mode(mode: RockingMode) -> Option<Side> {
    match mode {
        RockingMode::RockingPos => Some(Side::Pos),
        RockingMode::RockingNeg => Some(Side::Neg),
        _ => None,
    }
}

/// Right-hand side of the rocking ODE on the given side.
fn theta_ddot(spec: &RockSpec, side: Side, theta: f64, a_g: f64, gravity: f64) -> f64 {
    let alpha = spec.alpha(side);
    let p2 = spec.p_squared(side, gravity);
    let sign = match side {
        Side::Pos => 1.0,
        Side::Neg => -1.0,
    };
    let arg = alpha * sign - theta;
    -p2 * (arg.sin() + (a_g / gravity) * arg.cos())
}

/// One classical RK4 step of (θ, θ̇) from `t` over `h`.
fn rk4_step(
    spec: &RockSpec,
    side: Side,
    excitation: &SampledExcitation,
    gravity: f64,
    t: f64,
    theta: f64,
    theta_dot: f64,
    h: f64,
) -> (f64, f64) {
    let f = |tt: f64, th: f64, om: f64| (om, theta_ddot(spec, side, th, excitation.accel_at(tt), gravity));
    let (k1t, k1o) = f(t, theta, theta_dot);
    let (k2t, k2o) = f(t + 0.5 * h, theta + 0.5 * h * k1t, theta_dot + 0.5 * h * k1o);
    let (k3t, k3o) = f(t + 0.5 * h, theta + 0.5 * h * k2t, theta_dot + 0.5 * h * k2o);
    let (k4t, k4o) = f(t + h, theta + h * k3t, theta_dot + h * k3o);
    (
        theta + h / 6.0 * (k1t + 2.0 * k2t + 2.0 * k3t + k4t),
        theta_dot + h / 6.0 * (k1o + 2.0 * k2o + 2.0 * k3o + k4o),
    )
}

/// Earliest time in [t0, t1] where |a_g| exceeds an uplift threshold while
/// the block rests; the interpolant is piecewise linear, so crossings are
/// exact. Returns (time, side to uplift).
fn next_uplift(
    spec: &RockSpec,
    excitation: &SampledExcitation,
    gravity: f64,
    t0: f64,
    t1: f64,
) -> Option<(f64, Side)> {
    let thr_pos = spec.uplift_threshold(Side::Pos, gravity);
    let thr_neg = spec.uplift_threshold(Side::Neg, gravity);
    let dt = excitation.dt;
    let mut seg = (t0 / dt).floor().max(0.0) as usize;
    let last_seg = ((t1 / dt).ceil() as usize).min(excitation.accel.len().saturating_sub(1));
    while seg < last_seg {
        let (ta, tb) = (seg as f64 * dt, (seg + 1) as f64 * dt);
        let (aa, ab) = (excitation.accel[seg], excitation.accel[seg + 1]);
        let lo = ta.max(t0);
        let hi = tb.min(t1);
        if lo < hi {
            let a_at = |t: f64| aa + (ab - aa) * (t - ta) / dt;
            // candidate crossing times within [lo, hi] for each threshold
            let mut best: Option<(f64, Side)> = None;
            let mut consider = |t: f64, side: Side| {
                if t >= lo && t <= hi {
                    if best.map(|(bt, _)| t < bt).unwrap_or(true) {
                        best = Some((t, side));
                    }
                }
            };
            // negative ground accel beyond −g·tanα_pos lifts the positive edge
            if a_at(lo) < -thr_pos {
                consider(lo, Side::Pos);
            } else if (ab - aa).abs() > 0.0 {
                let t = ta + (-thr_pos - aa) / (ab - aa) * dt;
                if a_at(hi) < -thr_pos {
                    consider(t.max(lo), Side::Pos);
                }
            }
            // positive ground accel beyond +g·tanα_neg lifts the negative edge
            if a_at(lo) > thr_neg {
                consider(lo, Side::Neg);
            } else if (ab - aa).abs() > 0.0 {
                let t = ta + (thr_neg - aa) / (ab - aa) * dt;
                if a_at(hi) > thr_neg {
                    consider(t.max(lo), Side::Neg);
                }
            }
            if best.is_some() {
                return best;
            }
        }
        seg += 1;
    }
    None
}

/// Potential energy above the rest pose on the given side, per unit mass·g.
fn potential(spec: &RockSpec, side: Side, theta: f64) -> f64 {
    let alpha = spec.alpha(side);
    let r = spec.radius(side);
    r * ((alpha - theta.abs()).cos() - alpha.cos())
}

/// Decide Toppled vs Balanced for a block on the bed under the sampled
/// ground acceleration.
pub fn simulate_rocking(
    spec: &RockSpec,
    excitation: &SampledExcitation,
    opts: &SimOptions,
) -> Result<RockingOutcome> {
    let g = opts.gravity;
    let input_end = excitation.duration();
    let mut t = 0.0;
    let mut theta = 0.0;
    let mut theta_dot = 0.0;
    let mut mode = RockingMode::Rest;
    let mut peak_ratio = 0.0f64;
    let mut impacts = Vec::new();
    let mut trajectory = opts.record_trajectory.then(Vec::new);
    let mut toppled_side = None;
    let mut step_count = 0usize;

    // capture threshold: post-impact angular velocity whose free swing would
    // peak below ~1e-6 rad of tilt
    let capture_omega = |side: Side| {
        let v = potential(spec, side, 1e-6_f64.min(spec.alpha(side)));
        (2.0 * spec.mass * g * v / spec.inertia(side)).sqrt()
    };

    let record = |traj: &mut Option<Vec<TrajectorySample>>, t: f64, th: f64, om: f64, n: usize| {
        if let Some(traj) = traj {
            if n % opts.trajectory_stride == 0 {
                traj.push(TrajectorySample { t, theta: th, theta_dot: om });
            }
        }
    };

    'outer: while t < opts.max_time {
        match mode {
            RockingMode::Rest => {
                record(&mut trajectory, t, 0.0, 0.0, 0);
                if t >= input_end {
                    break 'outer; // at rest with no input left
                }
                match next_uplift(spec, excitation, g, t, opts.max_time.min(input_end)) {
                    Some((t_up, side)) => {
                        t = t_up;
                        theta = 0.0;
                        theta_dot = 0.0;
                        mode = match side {
                            Side::Pos => RockingMode::RockingPos,
                            Side::Neg => RockingMode::RockingNeg,
                        };
                    }
                    None => {
                        t = opts.max_time.min(input_end);
                        if t >= input_end {
                            break 'outer;
                        }
                    }
                }
            }
            RockingMode::RockingPos | RockingMode::RockingNeg => {
                let side = side_of_mode(mode).unwrap();
                let alpha = spec.alpha(side);
                let h = opts.dt.min(opts.max_time - t).max(1e-12);
                let (th1, om1) = rk4_step(spec, side, excitation, g, t, theta, theta_dot, h);
                if !th1.is_finite() || !om1.is_finite() {
                    return Err(Error::NumericalFailure { time: t });
                }
                step_count += 1;

                let sign = match side {
                    Side::Pos => 1.0,
                    Side::Neg => -1.0,
                };

                // impact: θ crossed zero moving inward
                if th1 * sign < 0.0 {
                    // bisect the sub-step for the crossing time
                    let (mut lo, mut hi) = (0.0, h);
                    for _ in 0..60 {
                        let mid = 0.5 * (lo + hi);
                        let (thm, _) =
                            rk4_step(spec, side, excitation, g, t, theta, theta_dot, mid);
                        if thm * sign < 0.0 {
                            hi = mid;
                        } else {
                            lo = mid;
                        }
                        if hi - lo < 1e-15 * h.max(1e-9) {
                            break;
                        }
                    }
                    let (_, om_impact) =
                        rk4_step(spec, side, excitation, g, t, theta, theta_dot, 0.5 * (lo + hi));
                    t += 0.5 * (lo + hi);
                    let om_post = spec.restitution * om_impact;
                    impacts.push(ImpactEvent {
                        time: t,
                        omega_pre: om_impact,
                        omega_post: om_post,
                    });
                    theta = 0.0;
                    theta_dot = om_post;
                    // contact hands over to the other edge; the velocity sign
                    // carries the block across (leaving RockingPos with
                    // θ̇ < 0 enters RockingNeg)
                    let new_side = match side {
                        Side::Pos => Side::Neg,
                        Side::Neg => Side::Pos,
                    };
                    if theta_dot.abs() < capture_omega(new_side) {
                        mode = RockingMode::Rest;
                        theta_dot = 0.0;
                    } else {
                        mode = if theta_dot < 0.0 {
                            RockingMode::RockingNeg
                        } else {
                            RockingMode::RockingPos
                        };
                    }
                    record(&mut trajectory, t, theta, theta_dot, 0);
                    continue;
                }

                // toppling: |θ| ≥ α with outward velocity (or past π/2)
                let outward = om1 * sign > 0.0;
                if (th1.abs() >= alpha && outward) || th1.abs() >= std::f64::consts::FRAC_PI_2 {
                    // localize the α crossing for the peak ratio bookkeeping
                    let (mut lo, mut hi) = (0.0, h);
                    for _ in 0..40 {
                        let mid = 0.5 * (lo + hi);
                        let (thm, _) =
                            rk4_step(spec, side, excitation, g, t, theta, theta_dot, mid);
                        if thm.abs() >= alpha {
                            hi = mid;
                        } else {
                            lo = mid;
                        }
                    }
                    t += hi;
                    peak_ratio = peak_ratio.max(1.0);
                    record(&mut trajectory, t, sign * alpha, om1, 0);
                    mode = RockingMode::Toppled;
                    toppled_side = Some(side);
                    break 'outer;
                }

                t += h;
                theta = th1;
                theta_dot = om1;
                peak_ratio = peak_ratio.max(theta.abs() / alpha);
                record(&mut trajectory, t, theta, theta_dot, step_count);

                // once the input is exhausted the total energy only decays;
                // below both barriers the block can never topple
                if opts.early_balanced_exit && t >= input_end {
                    let energy = 0.5 * spec.inertia(side) * theta_dot * theta_dot
                        + spec.mass * g * potential(spec, side, theta);
                    let barrier_here = spec.mass * g * potential(spec, side, spec.alpha(side));
                    let other = match side {
                        Side::Pos => Side::Neg,
                        Side::Neg => Side::Pos,
                    };
                    let barrier_other = spec.mass * g * potential(spec, other, spec.alpha(other));
                    let e2 = spec.restitution * spec.restitution;
                    if energy < barrier_here && e2 * energy < barrier_other {
                        break 'outer;
                    }
                }
            }
            RockingMode::Toppled => break 'outer,
        }
    }

    let result = if mode == RockingMode::Toppled {
        RockingResult::Toppled
    } else {
        RockingResult::Balanced
    };
    Ok(RockingOutcome {
        result,
        peak_tilt_ratio: peak_ratio,
        trajectory,
        impacts,
        toppled_side,
        end_time: t,
    })
}

/// Convenience wrapper: run the oracle on an analytic single pulse.
pub fn simulate_pulse(
    spec: &RockSpec,
    pulse: &PulseParams,
    polarity: f64,
    opts: &SimOptions,
) -> Result<RockingOutcome> {
    let excitation = SampledExcitation::from_pulse(pulse, polarity, opts.dt);
    simulate_rocking(spec, &excitation, opts)
}
