use proptest::prelude::*;
use thermal_muscle::excitation::PowerSchedule;
use thermal_muscle::plant::{
    cooling_hold_power, electrical_readout, heating_hold_power, simulate, thermal_step,
    ActuatorParams, ActuatorState, SimTrace, STEFAN_BOLTZMANN,
};
use thermal_muscle::Error;

fn params() -> ActuatorParams {
    ActuatorParams::default()
}

/// Net heat flow written directly from the power balance.
fn net_flow(p: &ActuatorParams, temp: f64, power: f64) -> f64 {
    let amb = p.ambient_temp;
    power
        - p.conv_coeff * p.surface_area * (temp - amb)
        - p.emissivity * STEFAN_BOLTZMANN * p.surface_area * (temp.powi(4) - amb.powi(4))
}

/// Root of the power balance by bisection.
fn equilibrium(p: &ActuatorParams, power: f64) -> f64 {
    let (mut lo, mut hi) = (p.ambient_temp, p.ambient_temp + 2000.0);
    while hi - lo > 1e-9 {
        let mid = 0.5 * (lo + hi);
        if net_flow(p, mid, power) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn run(p: &ActuatorParams, segs: Vec<(f64, f64)>, dt: f64) -> SimTrace {
    let s = PowerSchedule::new(segs, "test").unwrap();
    simulate(p, &s, dt, &ActuatorState::at_ambient(p)).unwrap()
}

#[test]
fn time_constant_matches_linearised_losses() {
    let p = params();
    let t = p.ambient_temp;
    let g = p.conv_coeff * p.surface_area + 4.0 * p.emissivity * STEFAN_BOLTZMANN * p.surface_area * t.powi(3);
    let tau = p.mass_kg * p.heat_capacity / g;
    assert!((p.thermal_time_constant() - tau).abs() < 1e-9 * tau);
    assert!((9.0..10.5).contains(&tau));
}

#[test]
fn long_hold_settles_at_the_power_balance_root() {
    let p = params();
    for power in [0.5, 1.0, 2.0, 3.0, 4.0] {
        let tr = run(&p, vec![(power, 150.0)], 0.01);
        let last = tr.records.last().unwrap();
        let target = equilibrium(&p, power);
        assert!((last.temp_k - target).abs() < 1e-4, "{power} W: {} vs {target}", last.temp_k);
        assert!((p.equilibrium_power(target) - power).abs() < 1e-9);
    }
}

#[test]
fn rk4_error_shrinks_with_fourth_power_of_step() {
    let p = ActuatorParams { conv_coeff: 4000.0, emissivity: 0.0, ..params() };
    let g = p.conv_coeff * p.surface_area;
    let tau = p.mass_kg * p.heat_capacity / g;
    let power = 2.0;
    let horizon = 2.0;
    let exact = p.ambient_temp + power / g * (1.0 - (-horizon / tau).exp());
    let err = |dt: f64| {
        let tr = run(&p, vec![(power, horizon)], dt);
        (tr.records.last().unwrap().temp_k - exact).abs()
    };
    let ratio = err(0.02) / err(0.01);
    assert!(ratio > 12.0 && ratio < 20.0, "ratio {ratio}");
}

#[test]
fn trace_length_and_clock() {
    let tr = run(&params(), vec![(1.0, 20.0), (0.0, 10.0)], 0.01);
    assert_eq!(tr.len(), 3001);
    assert!((tr.duration() - 30.0).abs() < 1e-9);
    assert_eq!(tr.records[1999].power_w, 1.0);
    assert_eq!(tr.records[2000].power_w, 0.0);
}

#[test]
fn trace_csv_round_trip() {
    let tr = run(&params(), vec![(2.0, 5.0)], 0.01);
    let back = SimTrace::records_from_csv(&tr.to_csv()).unwrap();
    assert_eq!(back.len(), tr.len());
    for (a, b) in back.iter().zip(&tr.records) {
        assert!((a.temp_k - b.temp_k).abs() <= 1e-6 * b.temp_k);
        assert!((a.displacement_mm - b.displacement_mm).abs() <= 1e-6 * b.displacement_mm.abs().max(1.0));
    }
}

#[test]
fn bad_steps_are_rejected() {
    let p = params();
    let s = ActuatorState::at_ambient(&p);
    assert!(matches!(thermal_step(&p, &s, -1.0, 0.01), Err(Error::InvalidInput(_))));
    assert!(matches!(thermal_step(&p, &s, 1.0, 0.0), Err(Error::InvalidInput(_))));
    assert!(matches!(thermal_step(&p, &s, f64::NAN, 0.01), Err(Error::InvalidInput(_))));
    assert!(matches!(thermal_step(&p, &s, 1e6, 10.0), Err(Error::StepSize(_))));
    let bad = ActuatorParams { mass_kg: -1.0, ..p };
    assert!(thermal_step(&bad, &s, 1.0, 0.01).is_err());
}

#[test]
fn heating_hold_power_reaches_the_requested_displacement() {
    let p = params();
    for d in [2.0, 8.0, 14.0] {
        let power = heating_hold_power(&p, d);
        let tr = run(&p, vec![(power, 150.0)], 0.01);
        let got = tr.records.last().unwrap().displacement_mm;
        assert!((got - d).abs() < 0.01, "{d} mm: reached {got}");
    }
}

#[test]
fn readout_is_consistent_with_ohms_law() {
    let p = params();
    let s = ActuatorState::at_ambient(&p);
    let r = electrical_readout(&p, &s, 2.5).unwrap();
    assert!((r.voltage * r.current - 2.5).abs() < 1e-12);
    assert!((r.voltage / r.current - r.resistance).abs() < 1e-9);
    assert!((r.resistance - p.ref_resistance).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn displacement_stays_within_the_stroke(powers in prop::collection::vec(0.0..6.0f64, 1..6)) {
        let p = params();
        let tr = run(&p, powers.iter().map(|&w| (w, 10.0)).collect(), 0.01);
        for r in &tr.records {
            prop_assert!(r.displacement_mm >= 0.0 && r.displacement_mm <= p.full_stroke);
            prop_assert!(r.temp_k >= p.ambient_temp - 1e-9);
        }
    }

    #[test]
    fn constant_power_from_rest_is_monotone(power in 0.0..5.0f64) {
        let tr = run(&params(), vec![(power, 60.0)], 0.01);
        for w in tr.records.windows(2) {
            prop_assert!(w[1].temp_k >= w[0].temp_k - 1e-12);
            prop_assert!(w[1].displacement_mm >= w[0].displacement_mm - 1e-12);
        }
    }

    #[test]
    fn cooling_branch_needs_less_power(d in 1.0..19.0f64) {
        let p = params();
        let heat = heating_hold_power(&p, d);
        let cool = cooling_hold_power(&p, d);
        prop_assert!(heat > cool);
    }

    #[test]
    fn dead_band_holds_displacement(up in 2.0..3.5f64, frac in 0.05..0.9f64) {
        let p = params();
        let mut s = ActuatorState::at_ambient(&p);
        for _ in 0..8000 {
            s = thermal_step(&p, &s, up, 0.01).unwrap();
        }
        // Cooling by less than the dead band leaves the displacement untouched.
        let down = p.equilibrium_power(s.temp - frac * p.hysteresis_width);
        let held = s.displacement;
        for _ in 0..8000 {
            s = thermal_step(&p, &s, down, 0.01).unwrap();
        }
        prop_assert!((s.displacement - held).abs() < 1e-9);
    }
}
