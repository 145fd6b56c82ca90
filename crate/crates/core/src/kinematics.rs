//! Physical constants, unit conversions and electron/light kinematics.
//!
//! Field amplitudes are carried in Gaussian units (statvolt/cm) while every
//! length that crosses an API boundary is in nanometres. The two conversion
//! points between the systems are [`ElectronParams::phase_coupling`] (phase per
//! unit of z-integrated intensity) and [`power_watts_per_nm_unit`].

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Electron rest energy, keV.
pub const ME_C2_KEV: f64 = 510.998_95;
/// Reduced Planck constant times c, eV nm.
pub const HBAR_C_EV_NM: f64 = 197.326_98;
/// Inverse fine-structure constant.
pub const ALPHA_INV: f64 = 137.035_999;
/// Fine-structure constant.
pub const ALPHA: f64 = 1.0 / ALPHA_INV;
/// Speed of light, cm/s.
pub const C_CM_PER_S: f64 = 2.997_924_58e10;
/// Speed of light, nm/s.
pub const C_NM_PER_S: f64 = 2.997_924_58e17;
/// Speed of light, m/s.
pub const C_M_PER_S: f64 = 2.997_924_58e8;
/// Joules per keV.
pub const JOULE_PER_KEV: f64 = 1.602_176_634e-16;
/// Ergs per keV.
pub const ERG_PER_KEV: f64 = 1.602_176_634e-9;
/// Centimetres per nanometre.
pub const CM_PER_NM: f64 = 1e-7;

pub const NM_PER_MM: f64 = 1e6;
pub const NM_PER_UM: f64 = 1e3;

/// Relativistic electron parameters at a given kinetic energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElectronParams {
    /// Kinetic energy, keV.
    pub energy_kev: f64,
    /// Lorentz factor.
    pub gamma: f64,
    /// v/c.
    pub beta: f64,
    /// Central wave vector, nm⁻¹.
    pub q0: f64,
    /// de Broglie wavelength, nm.
    pub wavelength: f64,
    /// Scaled mass `M = m_e γ v / (c α)` expressed as a rest energy `Mc²`, keV.
    pub scaled_mass_kev: f64,
}

impl ElectronParams {
    pub fn new(energy_kev: f64) -> Result<Self> {
        if !(energy_kev > 0.0) || !energy_kev.is_finite() {
            return Err(Error::domain(format!(
                "electron kinetic energy must be positive, got {energy_kev} keV"
            )));
        }
        let gamma = 1.0 + energy_kev / ME_C2_KEV;
        Ok(Self::from_gamma(gamma, energy_kev))
    }

    fn from_gamma(gamma: f64, energy_kev: f64) -> Self {
        // γβ = sqrt(γ² − 1) avoids cancellation in β = sqrt(1 − γ⁻²) at low energy.
        let gamma_beta = ((gamma - 1.0) * (gamma + 1.0)).sqrt();
        let beta = gamma_beta / gamma;
        let q0 = gamma_beta * ME_C2_KEV / (HBAR_C_EV_NM * 1e-3);
        Self {
            energy_kev,
            gamma,
            beta,
            q0,
            wavelength: 2.0 * PI / q0,
            scaled_mass_kev: ME_C2_KEV * gamma_beta * ALPHA_INV,
        }
    }

    /// Kinetic energy reconstructed from the Lorentz factor.
    pub fn energy_from_gamma(&self) -> f64 {
        (self.gamma - 1.0) * ME_C2_KEV
    }

    /// Scaled mass in grams.
    pub fn scaled_mass_grams(&self) -> f64 {
        self.scaled_mass_kev * ERG_PER_KEV / (C_CM_PER_S * C_CM_PER_S)
    }

    /// `Mc²ω` in watts for the given light frequency.
    pub fn mass_energy_rate_watts(&self, light: &LightParams) -> f64 {
        self.scaled_mass_kev * JOULE_PER_KEV * light.omega
    }

    /// `1/(Mω²)` in rad per (statvolt² cm⁻² · nm): multiply by the z-integral of
    /// `|E|²` taken with `dz` in nanometres to obtain (minus) the imprinted phase.
    pub fn phase_coupling(&self, light: &LightParams) -> f64 {
        CM_PER_NM / (self.scaled_mass_grams() * light.omega * light.omega)
    }
}

/// Monochromatic light parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LightParams {
    /// Vacuum wavelength, nm.
    pub wavelength: f64,
    /// Angular frequency, rad/s.
    pub omega: f64,
    /// Wave number, nm⁻¹.
    pub k0: f64,
}

impl LightParams {
    pub fn new(wavelength_nm: f64) -> Result<Self> {
        if !(wavelength_nm > 0.0) || !wavelength_nm.is_finite() {
            return Err(Error::domain(format!(
                "light wavelength must be positive, got {wavelength_nm} nm"
            )));
        }
        let k0 = 2.0 * PI / wavelength_nm;
        Ok(Self {
            wavelength: wavelength_nm,
            omega: C_NM_PER_S * k0,
            k0,
        })
    }
}

/// Conversion from `∫d²k k_z |β|²` (k in nm⁻¹, β in statvolt cm⁻¹ nm²) times
/// `c²/(8π³ω)` to watts.
pub fn power_watts_per_nm_unit(light: &LightParams) -> f64 {
    // k: 1e7 cm⁻¹/nm⁻¹ cubed, β²: 1e-28, erg/s → W: 1e-7.
    1e-14 * C_CM_PER_S * C_CM_PER_S / (8.0 * PI.powi(3) * light.omega)
}

pub fn degrees_to_radians(deg: f64) -> f64 {
    deg * PI / 180.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sixty_kev_wave_vector() {
        let e = ElectronParams::new(60.0).unwrap();
        assert!((e.q0 / 1291.0 - 1.0).abs() < 1e-3, "q0 = {}", e.q0);
    }

    #[test]
    fn sixty_kev_gamma_beta_by_hand() {
        let e = ElectronParams::new(60.0).unwrap();
        let gamma: f64 = 1.0 + 60.0 / 511.0;
        let beta = (1.0 - 1.0 / (gamma * gamma)).sqrt();
        assert!((e.gamma - 1.11742).abs() < 1e-4);
        assert!((e.beta - 0.4462).abs() < 1e-4);
        assert!((e.beta - beta).abs() < 1e-4);
    }

    #[test]
    fn internal_consistency() {
        for &e0 in &[1.0, 30.0, 60.0, 200.0, 300.0] {
            let e = ElectronParams::new(e0).unwrap();
            let q0 = e.gamma * e.beta * ME_C2_KEV / (HBAR_C_EV_NM * 1e-3);
            assert!((e.q0 - q0).abs() / q0 < 1e-14);
            let m = ME_C2_KEV * e.gamma * e.beta / ALPHA;
            assert!((e.scaled_mass_kev - m).abs() / m < 1e-14);
            assert!(e.gamma >= 1.0 && e.beta > 0.0 && e.beta < 1.0);
        }
    }

    #[test]
    fn non_positive_energy_rejected() {
        assert!(ElectronParams::new(0.0).is_err());
        assert!(ElectronParams::new(-5.0).is_err());
        assert!(ElectronParams::new(f64::NAN).is_err());
    }

    #[test]
    fn light_500nm() {
        let l = LightParams::new(500.0).unwrap();
        assert!((l.k0 - 2.0 * PI / 500.0).abs() < 1e-15);
        assert!((l.k0 - 0.012566).abs() < 1e-6);
        let omega = 2.0 * PI * 2.997_924_58e8 / 500e-9;
        assert!((l.omega / omega - 1.0).abs() < 1e-12);
        assert!((l.omega / 3.77e15 - 1.0).abs() < 1e-3);
        assert!((l.k0 * l.wavelength - 2.0 * PI).abs() < 1e-12);
        assert!(LightParams::new(0.0).is_err());
    }

    #[test]
    fn half_of_forty_kilowatts() {
        let e = ElectronParams::new(60.0).unwrap();
        let l = LightParams::new(500.0).unwrap();
        let p = e.mass_energy_rate_watts(&l);
        // 2Mc²ω ≈ 42 kW
        assert!((2.0 * p / 42.15e3 - 1.0).abs() < 5e-3, "Mc²ω = {p}");
    }

    #[test]
    fn coupling_matches_gaussian_units() {
        let e = ElectronParams::new(60.0).unwrap();
        let l = LightParams::new(500.0).unwrap();
        let m_e = 9.109_383_701_5e-28;
        let m = m_e * e.gamma * e.beta * ALPHA_INV;
        let expected = 1e-7 / (m * l.omega * l.omega);
        assert!((e.phase_coupling(&l) / expected - 1.0).abs() < 1e-6);
    }

    use proptest::prelude::*;

    proptest! {
        #[test]
        fn monotone_in_energy(a in 0.1f64..500.0, b in 0.1f64..500.0) {
            prop_assume!((a - b).abs() > 1e-6);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let el = ElectronParams::new(lo).unwrap();
            let eh = ElectronParams::new(hi).unwrap();
            prop_assert!(eh.q0 > el.q0);
            prop_assert!(eh.beta > el.beta);
        }

        #[test]
        fn energy_round_trip(e0 in 1.0f64..1000.0) {
            let e = ElectronParams::new(e0).unwrap();
            prop_assert!((e.energy_from_gamma() - e0).abs() / e0 < 1e-12);
        }
    }
}
