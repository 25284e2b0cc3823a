//! Physical constants and the internal unit system.
//!
//! Everything inside the simulator runs in micrometres, milliseconds and
//! units of 1e-27 kg. In that system the reduced Planck constant is about
//! 105.46, gravity is 9.81 and atomic masses are O(1)-O(100), so none of
//! the Gaussian exponents underflow.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};

/// CODATA 2018 reduced Planck constant, J·s.
pub const HBAR_SI: f64 = 1.054_571_817e-34;
/// Standard gravity used throughout, m/s².
pub const G_SI: f64 = 9.81;
/// Unified atomic mass unit (CODATA 2018), kg.
pub const ATOMIC_MASS_UNIT_SI: f64 = 1.660_539_066_60e-27;

/// Atomic masses in u (AME 2016 / CODATA atomic weights of the neutral atom).
const SPECIES_U: &[(&str, f64)] = &[
    ("he4", 4.002_603_254),
    ("li7", 7.016_003_437),
    ("na23", 22.989_769_282),
    ("k39", 38.963_706_486),
    ("rb87", 86.909_180_531),
    ("cs133", 132.905_451_961),
];

/// Metres per internal length unit.
pub const LENGTH_SI: f64 = 1e-6;
/// Seconds per internal time unit.
pub const TIME_SI: f64 = 1e-3;
/// Kilograms per internal mass unit.
pub const MASS_SI: f64 = 1e-27;

#[derive(Clone, Debug, Serialize)]
pub struct PhysicalConstants {
    /// J·s
    pub hbar: f64,
    /// m/s²
    pub g: f64,
    /// kg, keyed by species name
    pub masses: BTreeMap<String, f64>,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        let masses = SPECIES_U
            .iter()
            .map(|(name, u)| (name.to_string(), u * ATOMIC_MASS_UNIT_SI))
            .collect();
        PhysicalConstants {
            hbar: HBAR_SI,
            g: G_SI,
            masses,
        }
    }
}

impl PhysicalConstants {
    pub fn mass_of(&self, species: &str) -> Result<f64> {
        let key = normalize_species(species);
        self.masses.get(&key).copied().ok_or_else(|| Error::Config {
            field: "species".into(),
            message: format!(
                "unknown species `{species}` (known: {})",
                self.masses.keys().cloned().collect::<Vec<_>>().join(", ")
            ),
        })
    }
}

/// Accepts `he4`, `He-4`, `helium-4`, `cesium`, ... and maps them onto the table keys.
pub fn normalize_species(name: &str) -> String {
    let s: String = name
        .to_ascii_lowercase()
        .chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .collect();
    let aliases = [
        ("helium4", "he4"),
        ("helium", "he4"),
        ("lithium7", "li7"),
        ("lithium", "li7"),
        ("sodium23", "na23"),
        ("sodium", "na23"),
        ("potassium39", "k39"),
        ("potassium", "k39"),
        ("rubidium87", "rb87"),
        ("rubidium", "rb87"),
        ("cesium133", "cs133"),
        ("caesium133", "cs133"),
        ("cesium", "cs133"),
        ("caesium", "cs133"),
    ];
    for (alias, key) in aliases {
        if s == alias {
            return key.to_string();
        }
    }
    s
}

/// Conversion factors between SI and the internal (μm, ms, 1e-27 kg) system.
#[derive(Clone, Copy, Debug)]
pub struct Units;

impl Units {
    pub fn length_to_internal(m: f64) -> f64 {
        m / LENGTH_SI
    }
    pub fn length_to_si(um: f64) -> f64 {
        um * LENGTH_SI
    }
    pub fn time_to_internal(s: f64) -> f64 {
        s / TIME_SI
    }
    pub fn time_to_si(ms: f64) -> f64 {
        ms * TIME_SI
    }
    pub fn mass_to_internal(kg: f64) -> f64 {
        kg / MASS_SI
    }
    pub fn mass_to_si(m: f64) -> f64 {
        m * MASS_SI
    }
    pub fn velocity_to_internal(v: f64) -> f64 {
        v * TIME_SI / LENGTH_SI
    }
    pub fn velocity_to_si(v: f64) -> f64 {
        v * LENGTH_SI / TIME_SI
    }
    pub fn acceleration_to_internal(a: f64) -> f64 {
        a * TIME_SI * TIME_SI / LENGTH_SI
    }
    pub fn acceleration_to_si(a: f64) -> f64 {
        a * LENGTH_SI / (TIME_SI * TIME_SI)
    }
    /// J·s = kg·m²/s
    pub fn action_to_internal(h: f64) -> f64 {
        h * TIME_SI / (MASS_SI * LENGTH_SI * LENGTH_SI)
    }
    pub fn action_to_si(h: f64) -> f64 {
        h * MASS_SI * LENGTH_SI * LENGTH_SI / TIME_SI
    }
    pub fn wavenumber_to_internal(k: f64) -> f64 {
        k * LENGTH_SI
    }
    pub fn wavenumber_to_si(k: f64) -> f64 {
        k / LENGTH_SI
    }
    pub fn momentum_to_internal(p: f64) -> f64 {
        p * TIME_SI / (MASS_SI * LENGTH_SI)
    }
    pub fn momentum_to_si(p: f64) -> f64 {
        p * MASS_SI * LENGTH_SI / TIME_SI
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn gravity_and_hbar_in_internal_units() {
        assert!(rel(Units::acceleration_to_internal(9.81), 9.81) < 1e-15);
        // 1.0546e-34 J s -> 1.0546e-34 * 1e-3 / (1e-27 * 1e-12) = 105.46
        let h = Units::action_to_internal(1.0546e-34);
        assert!(rel(h, 105.46) < 1e-12, "{h}");
        assert_eq!(Units::velocity_to_internal(0.0), 0.0);
        // 20 m/s is 2e4 um/ms
        assert!(rel(Units::velocity_to_internal(20.0), 2.0e4) < 1e-15);
    }

    #[test]
    fn helium_mass_matches_tables() {
        let c = PhysicalConstants::default();
        let m = c.mass_of("helium-4").unwrap();
        assert!(rel(m, 6.6465e-27) < 1e-4, "{m}");
        assert!(c.mass_of("Na-23").is_ok());
        assert!(c.mass_of("cesium").is_ok());
        assert!(c.mass_of("unobtainium").is_err());
    }

    #[test]
    fn round_trips_are_tight() {
        for &v in &[1e-6, 3.7e-3, 0.08, 20.0, 9.81, 1.2e-25] {
            assert!(rel(Units::length_to_si(Units::length_to_internal(v)), v) < 1e-12);
            assert!(rel(Units::time_to_si(Units::time_to_internal(v)), v) < 1e-12);
            assert!(rel(Units::velocity_to_si(Units::velocity_to_internal(v)), v) < 1e-12);
            assert!(
                rel(Units::acceleration_to_si(Units::acceleration_to_internal(v)), v) < 1e-12
            );
            assert!(rel(Units::mass_to_si(Units::mass_to_internal(v)), v) < 1e-12);
            assert!(rel(Units::action_to_si(Units::action_to_internal(v)), v) < 1e-12);
            assert!(rel(Units::momentum_to_si(Units::momentum_to_internal(v)), v) < 1e-12);
            assert!(rel(Units::wavenumber_to_si(Units::wavenumber_to_internal(v)), v) < 1e-12);
        }
    }
}
