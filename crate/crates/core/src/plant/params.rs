use crate::error::{ensure, Error, Result};
use crate::kv::KeyValues;

/// Stefan–Boltzmann constant, W·m⁻²·K⁻⁴.
pub const STEFAN_BOLTZMANN: f64 = 5.670_374_419e-8;

/// Physical constants of the twin. All quantities are SI except
/// `full_stroke`, which is in millimetres of load displacement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActuatorParams {
    /// Heating-element mass, kg.
    pub mass_kg: f64,
    /// Specific heat capacity, J·kg⁻¹·K⁻¹.
    pub heat_capacity: f64,
    /// Convective heat-transfer coefficient, W·m⁻²·K⁻¹.
    pub conv_coeff: f64,
    /// Exposed surface area, m².
    pub surface_area: f64,
    pub emissivity: f64,
    /// Ambient temperature, K.
    pub ambient_temp: f64,
    /// Resistance at ambient temperature, Ω.
    pub ref_resistance: f64,
    /// Temperature coefficient of resistance of the coating, K⁻¹.
    pub temp_coeff: f64,
    /// Fractional resistance drop once the coils are fully in contact.
    pub contact_drop: f64,
    /// Effective temperature where contraction starts, K.
    pub strain_onset_temp: f64,
    /// Effective temperature where contraction saturates, K.
    pub strain_sat_temp: f64,
    /// Width of the temperature dead band between heating and cooling branches, K.
    pub hysteresis_width: f64,
    /// Displacement at saturation, mm.
    pub full_stroke: f64,
}

impl Default for ActuatorParams {
    fn default() -> Self {
        Self {
            mass_kg: 2e-4,
            heat_capacity: 1500.0,
            conv_coeff: 100.0,
            surface_area: 3e-4,
            emissivity: 0.1,
            ambient_temp: 293.0,
            ref_resistance: 20.0,
            temp_coeff: 0.0038,
            contact_drop: 0.15,
            strain_onset_temp: 313.0,
            strain_sat_temp: 403.0,
            // 33 K of dead band is roughly 1 W of steady-state power at mid-stroke.
            hysteresis_width: 33.0,
            full_stroke: 20.0,
        }
    }
}

macro_rules! param_fields {
    ($m:ident) => {
        $m!(
            mass_kg,
            heat_capacity,
            conv_coeff,
            surface_area,
            emissivity,
            ambient_temp,
            ref_resistance,
            temp_coeff,
            contact_drop,
            strain_onset_temp,
            strain_sat_temp,
            hysteresis_width,
            full_stroke
        )
    };
}

impl ActuatorParams {
    pub fn validate(&self) -> Result<()> {
        macro_rules! finite {
            ($($f:ident),*) => {
                $(ensure(self.$f.is_finite(), || {
                    Error::InvalidInput(format!("{} is not finite", stringify!($f)))
                })?;)*
            };
        }
        param_fields!(finite);

        let bad = |msg: &str| Error::InvalidParameter(msg.to_string());
        ensure(self.mass_kg > 0.0, || bad("mass_kg must be > 0"))?;
        ensure(self.heat_capacity > 0.0, || bad("heat_capacity must be > 0"))?;
        ensure(self.conv_coeff >= 0.0, || bad("conv_coeff must be >= 0"))?;
        ensure(self.surface_area > 0.0, || bad("surface_area must be > 0"))?;
        ensure((0.0..=1.0).contains(&self.emissivity), || {
            bad("emissivity must lie in [0, 1]")
        })?;
        ensure(self.ambient_temp > 0.0, || bad("ambient_temp must be > 0 K"))?;
        ensure(self.ref_resistance > 0.0, || bad("ref_resistance must be > 0"))?;
        ensure((0.0..1.0).contains(&self.contact_drop), || {
            bad("contact_drop must lie in [0, 1)")
        })?;
        ensure(self.strain_onset_temp < self.strain_sat_temp, || {
            bad("strain_onset_temp must be below strain_sat_temp")
        })?;
        ensure(self.hysteresis_width >= 0.0, || bad("hysteresis_width must be >= 0"))?;
        ensure(self.full_stroke > 0.0, || bad("full_stroke must be > 0"))?;
        Ok(())
    }

    /// Lumped heat capacity m·C_p, J/K.
    pub fn thermal_mass(&self) -> f64 {
        self.mass_kg * self.heat_capacity
    }

    /// Net heat flow from the element to the surroundings at `temp`, W.
    pub fn heat_loss(&self, temp: f64) -> f64 {
        let t_inf = self.ambient_temp;
        self.conv_coeff * self.surface_area * (temp - t_inf)
            + self.emissivity
                * STEFAN_BOLTZMANN
                * self.surface_area
                * (temp.powi(4) - t_inf.powi(4))
    }

    /// Temperature rate under constant electrical power, K/s.
    pub fn temp_rate(&self, temp: f64, power: f64) -> f64 {
        (power - self.heat_loss(temp)) / self.thermal_mass()
    }

    /// Power that holds the element at `temp` in equilibrium.
    pub fn equilibrium_power(&self, temp: f64) -> f64 {
        self.heat_loss(temp)
    }

    /// Small-signal time constant around ambient, s.
    pub fn thermal_time_constant(&self) -> f64 {
        let t = self.ambient_temp;
        let conductance = self.conv_coeff * self.surface_area
            + 4.0 * self.emissivity * STEFAN_BOLTZMANN * self.surface_area * t.powi(3);
        self.thermal_mass() / conductance
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        macro_rules! put {
            ($($f:ident),*) => { $(kv.set(stringify!($f), self.$f);)* };
        }
        param_fields!(put);
        kv
    }

    /// Reads a parameter file; absent keys keep their default value.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let mut p = Self::default();
        let known: &[&str] = &{
            macro_rules! names {
                ($($f:ident),*) => { [$(stringify!($f)),*] };
            }
            param_fields!(names)
        };
        if let Some(k) = kv.keys().find(|k| !known.contains(k)) {
            return Err(Error::Parse(format!("unknown actuator parameter `{k}`")));
        }
        macro_rules! take {
            ($($f:ident),*) => {
                $(if let Some(v) = kv.parse_opt(stringify!($f))? { p.$f = v; })*
            };
        }
        param_fields!(take);
        p.validate()?;
        Ok(p)
    }

    pub fn to_text(&self) -> String {
        self.to_key_values().to_text()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_key_values(&KeyValues::parse(text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let p = ActuatorParams::default();
        p.validate().unwrap();
        assert!((p.thermal_mass() - 0.3).abs() < 1e-15);
        // Radiation makes the small-signal constant a little under 10 s.
        let tau = p.thermal_time_constant();
        assert!(tau > 9.5 && tau < 10.0, "{tau}");
    }

    #[test]
    fn rejects_bad_values() {
        let cases: [fn(&mut ActuatorParams); 11] = [
            |p| p.mass_kg = 0.0,
            |p| p.heat_capacity = -1.0,
            |p| p.conv_coeff = -1.0,
            |p| p.surface_area = 0.0,
            |p| p.emissivity = 1.5,
            |p| p.contact_drop = 1.0,
            |p| p.strain_sat_temp = p.strain_onset_temp,
            |p| p.hysteresis_width = -0.1,
            |p| p.full_stroke = 0.0,
            |p| p.ref_resistance = 0.0,
            |p| p.ambient_temp = f64::NAN,
        ];
        for mutate in cases {
            let mut p = ActuatorParams::default();
            mutate(&mut p);
            assert!(p.validate().is_err(), "{p:?}");
        }
    }

    #[test]
    fn text_round_trip_is_exact() {
        let p = ActuatorParams {
            emissivity: 0.1 + 0.2,
            ..ActuatorParams::default()
        };
        let text = p.to_text();
        let back = ActuatorParams::from_text(&text).unwrap();
        assert_eq!(back, p);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn partial_files_fall_back_to_defaults() {
        let p = ActuatorParams::from_text("hysteresis_width = 0\n").unwrap();
        assert_eq!(p.hysteresis_width, 0.0);
        assert_eq!(p.mass_kg, ActuatorParams::default().mass_kg);
        assert!(ActuatorParams::from_text("bogus = 1").is_err());
        assert!(ActuatorParams::from_text("mass_kg = -1").is_err());
    }
}
