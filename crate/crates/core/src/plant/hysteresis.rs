//! Branch-dependent strain map.
//!
//! The effective temperature driving contraction is the output of a play
//! (backlash) operator of width `hysteresis_width` applied to the element
//! temperature. While heating it trails the temperature by half the width and
//! while cooling it leads by half the width; on a reversal it stays put until
//! the temperature has crossed the whole dead band. Displacement is a
//! smoothstep of the effective temperature between the onset and saturation
//! temperatures.

use super::params::ActuatorParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Heating,
    Cooling,
}

/// Result of advancing the strain map to a new temperature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrainUpdate {
    pub displacement: f64,
    pub branch_anchor: f64,
    pub direction: Direction,
}

/// `3x² − 2x³` on `[0, 1]`, clamped outside.
pub fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

/// Range the anchor is kept in. Outside it the smoothstep is flat, so the
/// clamp never changes a displacement.
pub fn anchor_bounds(params: &ActuatorParams) -> (f64, f64) {
    let w = params.hysteresis_width;
    (params.strain_onset_temp - w, params.strain_sat_temp + w)
}

/// Displacement for a given effective (anchor) temperature.
pub fn displacement_at_anchor(params: &ActuatorParams, anchor: f64) -> f64 {
    let span = params.strain_sat_temp - params.strain_onset_temp;
    params.full_stroke * smoothstep((anchor - params.strain_onset_temp) / span)
}

/// Play operator step: moves the anchor only when `temp` leaves the dead band.
pub fn advance_anchor(
    params: &ActuatorParams,
    temp: f64,
    anchor: f64,
    direction: Direction,
) -> (f64, Direction) {
    let half = 0.5 * params.hysteresis_width;
    let (anchor, direction) = if temp > anchor + half {
        (temp - half, Direction::Heating)
    } else if temp < anchor - half {
        (temp + half, Direction::Cooling)
    } else {
        (anchor, direction)
    };
    let (lo, hi) = anchor_bounds(params);
    (anchor.clamp(lo, hi), direction)
}

/// Inverse of the smoothstep map: the anchor temperature giving `displacement`.
/// Inputs at or beyond the stroke limits map to the onset/saturation temperature.
pub fn anchor_for_displacement(params: &ActuatorParams, displacement: f64) -> f64 {
    let frac = (displacement / params.full_stroke).clamp(0.0, 1.0);
    // smoothstep is monotone on [0, 1]; bisection is plenty.
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if smoothstep(mid) < frac {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let x = 0.5 * (lo + hi);
    params.strain_onset_temp + x * (params.strain_sat_temp - params.strain_onset_temp)
}
