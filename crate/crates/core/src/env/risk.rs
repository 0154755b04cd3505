//! Risk kernels: Δv harm, disc-contact TTC and the TTC-based collision
//! probability.

use serde::{Deserialize, Serialize};

use super::agents::AgentState;
use crate::error::{Error, Result};

/// Per-agent risk terms for one tick.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RiskTerms {
    /// Collision probability in `[0, 1]`.
    pub probability: f64,
    /// Δv harm, m/s.
    pub harm: f64,
    /// Time to collision in seconds; `None` when the discs never touch.
    pub ttc: Option<f64>,
}

impl RiskTerms {
    pub fn risk(&self) -> f64 {
        self.probability * self.harm
    }
}

/// Velocity change experienced by `ego` in a collision with `other`:
/// `m_i / (m_ego + m_i) · |v_ego − v_i|`.
///
/// The relative speed is taken from the velocity-vector difference, which
/// equals `sqrt(v_e² + v_i² − 2 v_e v_i cos α)` without the cancellation the
/// law-of-cosines form suffers near `α = 0`.
pub fn compute_harm(ego: &AgentState, other: &AgentState) -> f64 {
    let (evx, evy) = ego.velocity();
    let (ovx, ovy) = other.velocity();
    let rel = (evx - ovx).hypot(evy - ovy);
    other.mass / (ego.mass + other.mass) * rel
}

/// Law-of-cosines form of the harm, for callers that hold speeds and the
/// angle between velocity vectors rather than full agent states.
pub fn harm_from_speeds(m_ego: f64, m_other: f64, v_ego: f64, v_other: f64, angle: f64) -> f64 {
    let radicand = v_ego * v_ego + v_other * v_other - 2.0 * v_ego * v_other * angle.cos();
    m_other / (m_ego + m_other) * radicand.max(0.0).sqrt()
}

/// Smallest `t ≥ 0` at which the two footprint discs touch under
/// constant-velocity extrapolation, or `None` if they never do.
pub fn compute_ttc(ego: &AgentState, other: &AgentState) -> Option<f64> {
    let px = other.x - ego.x;
    let py = other.y - ego.y;
    let (evx, evy) = ego.velocity();
    let (ovx, ovy) = other.velocity();
    let vx = ovx - evx;
    let vy = ovy - evy;
    let reach = ego.radius + other.radius;

    let c = px * px + py * py - reach * reach;
    if c <= 0.0 {
        return Some(0.0);
    }
    let a = vx * vx + vy * vy;
    let half_b = px * vx + py * vy;
    if a == 0.0 || half_b >= 0.0 {
        return None;
    }
    let disc = half_b * half_b - a * c;
    if disc < 0.0 {
        return None;
    }
    // Smaller root of a t² + 2 half_b t + c, in the cancellation-free form.
    Some(c / (-half_b + disc.sqrt()))
}

/// `(1 − ttc/τ)²` inside the horizon, zero beyond it.
pub fn collision_probability(ttc: Option<f64>, tau_ttc: f64) -> Result<f64> {
    match ttc {
        None => Ok(0.0),
        Some(t) if t < 0.0 || t.is_nan() => Err(Error::usage(format!("negative time to collision {t}"))),
        Some(t) if t > tau_ttc => Ok(0.0),
        Some(t) => {
            let x = 1.0 - t / tau_ttc;
            Ok(x * x)
        }
    }
}
