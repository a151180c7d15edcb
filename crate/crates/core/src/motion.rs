//! Point-to-point timing for a single axis under symmetric accelerate /
//! cruise / decelerate motion, and per-fruit picking durations.

use crate::model::{Fruit, HarvesterConfig, PickingDurationMode};

/// One rest-to-rest timing query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrapezoidQuery {
    /// Nonnegative travel distance in meters.
    pub distance: f64,
    /// Peak speed in m/s (> 0).
    pub v_peak: f64,
    /// Acceleration magnitude in m/s^2 (> 0).
    pub a_max: f64,
}

impl TrapezoidQuery {
    pub fn time(&self) -> f64 {
        trapezoid_time(self.distance, self.v_peak, self.a_max)
    }
}

/// Minimum rest-to-rest time over `distance` with speed capped at `v_peak`
/// and acceleration at `a_max`. Long moves cruise at the cap
/// (`d/v + v/a`); short ones form a triangular profile (`2*sqrt(d/a)`).
/// The two branches agree at the boundary distance `v_peak^2 / a_max`.
pub fn trapezoid_time(distance: f64, v_peak: f64, a_max: f64) -> f64 {
    assert!(
        distance >= 0.0 && v_peak > 0.0 && a_max > 0.0,
        "trapezoid_time requires d >= 0, v_peak > 0, a_max > 0 (got d={distance}, v={v_peak}, a={a_max})"
    );
    if distance >= v_peak * v_peak / a_max {
        distance / v_peak + v_peak / a_max
    } else {
        2.0 * (distance / a_max).sqrt()
    }
}

/// Time an arm is pinned at a fruit while picking it. In depth-aware mode
/// the arm reaches in to the fruit's depth and retracts, each leg a
/// rest-to-rest move at the joint limits, around the fixed grasp time.
pub fn picking_duration(fruit: &Fruit, cfg: &HarvesterConfig) -> f64 {
    match cfg.picking_duration_mode {
        PickingDurationMode::DepthAware => {
            2.0 * trapezoid_time(fruit.y, cfg.limits.v_max, cfg.limits.a_max) + cfg.td_grasp
        }
        PickingDurationMode::Constant => cfg.td_grasp,
    }
}
