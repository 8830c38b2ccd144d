//! Lumped-parameter digital twin of a twisted-coiled nylon actuator.
//!
//! The element temperature obeys the power balance
//! `m·C_p·dT/dt = Q − h·A·(T − T∞) − ε·σ·A·(T⁴ − T∞⁴)` and is integrated with
//! fixed-step classical Runge–Kutta. Resistance follows the linear temperature
//! coefficient of the silver coating, reduced as the coils touch. Displacement
//! is a hysteretic function of temperature (see [`hysteresis`]).

pub mod hysteresis;
mod params;
mod trace;

pub use hysteresis::{Direction, StrainUpdate};
pub use params::{ActuatorParams, STEFAN_BOLTZMANN};
pub use trace::{simulate, SimTrace, TraceRecord, TRACE_CSV_HEADER};

use crate::error::{ensure, Error, Result};

/// Evolving state of the twin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActuatorState {
    pub time_s: f64,
    /// Element temperature, K.
    pub temp: f64,
    /// Load displacement, mm (positive is contraction).
    pub displacement: f64,
    /// Hysteresis memory: the effective temperature seen by the strain map, K.
    pub branch_anchor: f64,
    pub last_direction: Direction,
}

impl ActuatorState {
    /// A fresh, cold sample resting at ambient temperature.
    pub fn at_ambient(params: &ActuatorParams) -> Self {
        let temp = params.ambient_temp;
        let (lo, hi) = hysteresis::anchor_bounds(params);
        let anchor = (temp - 0.5 * params.hysteresis_width).clamp(lo, hi);
        Self {
            time_s: 0.0,
            temp,
            displacement: hysteresis::displacement_at_anchor(params, anchor),
            branch_anchor: anchor,
            last_direction: Direction::Heating,
        }
    }

    fn check_finite(&self) -> Result<()> {
        ensure(
            self.time_s.is_finite()
                && self.temp.is_finite()
                && self.displacement.is_finite()
                && self.branch_anchor.is_finite(),
            || Error::InvalidInput(format!("non-finite state {self:?}")),
        )
    }
}

/// Terminal readings of the supply for one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElectricalReadout {
    pub power: f64,
    pub resistance: f64,
    pub voltage: f64,
    pub current: f64,
}

/// Advances the twin by one RK4 step of length `dt` under constant `power`.
pub fn thermal_step(
    params: &ActuatorParams,
    state: &ActuatorState,
    power: f64,
    dt: f64,
) -> Result<ActuatorState> {
    params.validate()?;
    state.check_finite()?;
    ensure(dt.is_finite() && dt > 0.0, || {
        Error::InvalidInput(format!("dt must be finite and > 0, got {dt}"))
    })?;
    ensure(power.is_finite() && power >= 0.0, || {
        Error::InvalidInput(format!("power must be finite and >= 0, got {power}"))
    })?;
    rk4_advance(params, state, power, dt)
}

/// Step without re-validating the parameters; used in the inner simulation loop.
pub(crate) fn rk4_advance(
    params: &ActuatorParams,
    state: &ActuatorState,
    power: f64,
    dt: f64,
) -> Result<ActuatorState> {
    let f = |t: f64| params.temp_rate(t, power);
    let t0 = state.temp;
    let k1 = f(t0);
    let k2 = f(t0 + 0.5 * dt * k1);
    let k3 = f(t0 + 0.5 * dt * k2);
    let k4 = f(t0 + dt * k3);
    let temp = t0 + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if !temp.is_finite() || temp < 0.0 {
        return Err(Error::StepSize(format!(
            "dt = {dt} s took the temperature from {t0} K to {temp} K"
        )));
    }
    let strain = strain_response(params, temp, state);
    Ok(ActuatorState {
        time_s: state.time_s + dt,
        temp,
        displacement: strain.displacement,
        branch_anchor: strain.branch_anchor,
        last_direction: strain.direction,
    })
}

/// Resistance of the coated fibre: `R₀·(1 + α·(T − T∞))·(1 − c·d/d_max)`.
pub fn resistance(params: &ActuatorParams, temp: f64, displacement: f64) -> Result<f64> {
    ensure(temp.is_finite(), || Error::InvalidInput(format!("temperature {temp}")))?;
    ensure(
        displacement >= 0.0 && displacement <= params.full_stroke,
        || {
            Error::InvalidInput(format!(
                "displacement {displacement} mm outside [0, {}]",
                params.full_stroke
            ))
        },
    )?;
    let contact = 1.0 - params.contact_drop * displacement / params.full_stroke;
    ensure(contact > 0.0, || {
        Error::InvalidParameter(format!("coil contact factor {contact} is not positive"))
    })?;
    let r = params.ref_resistance
        * (1.0 + params.temp_coeff * (temp - params.ambient_temp))
        * contact;
    ensure(r > 0.0, || {
        Error::InvalidParameter(format!("resistance {r} Ω at {temp} K is not positive"))
    })?;
    Ok(r)
}

/// Advances the hysteretic strain map from `prev` to `temp`.
pub fn strain_response(params: &ActuatorParams, temp: f64, prev: &ActuatorState) -> StrainUpdate {
    let (anchor, direction) =
        hysteresis::advance_anchor(params, temp, prev.branch_anchor, prev.last_direction);
    StrainUpdate {
        displacement: hysteresis::displacement_at_anchor(params, anchor),
        branch_anchor: anchor,
        direction,
    }
}

/// Constant power whose equilibrium, approached while heating, holds
/// `displacement`. For zero displacement this is the power at which strain
/// is about to set in.
pub fn heating_hold_power(params: &ActuatorParams, displacement: f64) -> f64 {
    let anchor = hysteresis::anchor_for_displacement(params, displacement);
    params.equilibrium_power(anchor + 0.5 * params.hysteresis_width)
}

/// Cooling-branch counterpart of [`heating_hold_power`].
pub fn cooling_hold_power(params: &ActuatorParams, displacement: f64) -> f64 {
    let anchor = hysteresis::anchor_for_displacement(params, displacement);
    params.equilibrium_power(anchor - 0.5 * params.hysteresis_width)
}

/// Supply voltage and current that deliver `power` into the present resistance.
pub fn electrical_readout(
    params: &ActuatorParams,
    state: &ActuatorState,
    power: f64,
) -> Result<ElectricalReadout> {
    ensure(power.is_finite() && power >= 0.0, || {
        Error::InvalidInput(format!("power must be >= 0, got {power}"))
    })?;
    let r = resistance(params, state.temp, state.displacement)?;
    Ok(readout_from(power, r))
}

pub(crate) fn readout_from(power: f64, resistance: f64) -> ElectricalReadout {
    ElectricalReadout {
        power,
        resistance,
        voltage: (power * resistance).sqrt(),
        current: (power / resistance).sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state_at(temp: f64) -> ActuatorState {
        ActuatorState {
            temp,
            ..ActuatorState::at_ambient(&ActuatorParams::default())
        }
    }

    #[test]
    fn adiabatic_ramp_is_exact() {
        let p = ActuatorParams {
            conv_coeff: 0.0,
            emissivity: 0.0,
            ..ActuatorParams::default()
        };
        let s = thermal_step(&p, &state_at(293.0), 1.0, 0.3).unwrap();
        assert!((s.temp - 294.0).abs() <= 294.0 * 1e-15);
        assert!((s.time_s - 0.3).abs() < 1e-15);
    }

    #[test]
    fn convective_decay_matches_closed_form() {
        let p = ActuatorParams {
            emissivity: 0.0,
            conv_coeff: 100.0,
            surface_area: 3e-4,
            ..ActuatorParams::default()
        };
        let mut s = state_at(393.0);
        for _ in 0..1000 {
            s = thermal_step(&p, &s, 0.0, 0.01).unwrap();
        }
        let exact = 293.0 + 100.0 * (-1.0_f64).exp();
        assert!((s.temp - exact).abs() / exact < 1e-6, "{} vs {exact}", s.temp);
        assert!((exact - 329.788).abs() < 1e-3);
    }

    #[test]
    fn step_errors() {
        let p = ActuatorParams::default();
        let s = state_at(300.0);
        assert!(matches!(thermal_step(&p, &s, 1.0, 0.0), Err(Error::InvalidInput(_))));
        assert!(matches!(thermal_step(&p, &s, -1.0, 0.1), Err(Error::InvalidInput(_))));
        assert!(matches!(
            thermal_step(&p, &state_at(f64::NAN), 1.0, 0.1),
            Err(Error::InvalidInput(_))
        ));
        // a huge step overshoots below absolute zero
        assert!(matches!(
            thermal_step(&p, &state_at(2000.0), 0.0, 50.0),
            Err(Error::StepSize(_))
        ));
    }

    #[test]
    fn resistance_examples() {
        let p = ActuatorParams {
            ref_resistance: 20.0,
            temp_coeff: 0.0038,
            contact_drop: 0.3,
            ..ActuatorParams::default()
        };
        let t_inf = p.ambient_temp;
        assert_eq!(resistance(&p, t_inf, 0.0).unwrap(), 20.0);
        assert!((resistance(&p, t_inf + 100.0, 0.0).unwrap() - 27.6).abs() < 1e-12);
        assert!((resistance(&p, t_inf + 100.0, p.full_stroke).unwrap() - 19.32).abs() < 1e-12);
        assert!(resistance(&p, t_inf, -1.0).is_err());
        assert!(resistance(&p, t_inf, p.full_stroke + 1.0).is_err());
        // far below ambient the linear law would go negative
        assert!(matches!(resistance(&p, 0.0, 0.0), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn resistance_contact_factor_misconfigured() {
        let p = ActuatorParams {
            contact_drop: 1.0,
            ..ActuatorParams::default()
        };
        assert!(matches!(
            resistance(&p, 300.0, p.full_stroke),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn strain_limits() {
        let p = ActuatorParams::default();
        let half = 0.5 * p.hysteresis_width;
        let cold = ActuatorState::at_ambient(&p);
        let below = strain_response(&p, p.strain_onset_temp - half, &cold);
        assert_eq!(below.displacement, 0.0);
        let hot = strain_response(&p, p.strain_sat_temp + half, &cold);
        assert_eq!(hot.displacement, p.full_stroke);
        // from a saturated state, cooling to the lower limit returns to zero
        let hot_state = ActuatorState {
            temp: p.strain_sat_temp + half,
            displacement: hot.displacement,
            branch_anchor: hot.branch_anchor,
            last_direction: hot.direction,
            time_s: 0.0,
        };
        assert_eq!(strain_response(&p, p.strain_onset_temp - half, &hot_state).displacement, 0.0);
        assert_eq!(strain_response(&p, p.strain_sat_temp + half, &hot_state).displacement, p.full_stroke);
    }

    #[test]
    fn readout_examples() {
        let p = ActuatorParams::default();
        let s = ActuatorState::at_ambient(&p);
        let zero = electrical_readout(&p, &s, 0.0).unwrap();
        assert_eq!((zero.voltage, zero.current), (0.0, 0.0));
        assert_eq!(zero.resistance, resistance(&p, s.temp, s.displacement).unwrap());

        let r = readout_from(4.0, 25.0);
        assert!((r.voltage - 10.0).abs() < 1e-12);
        assert!((r.current - 0.4).abs() < 1e-12);
        assert!(electrical_readout(&p, &s, -1.0).is_err());
    }
}
