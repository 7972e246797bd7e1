//! Fixed physical parameters of the atom-cavity system and the trap.
//!
//! Rates are held internally in rad/s; the `*_hz` accessors and
//! constructors use ordinary frequency (rate / 2 pi), which is also the
//! convention of every config file. Detunings and Stark shifts are always
//! ordinary frequencies in Hz.

use crate::constants::{hz_to_rad, rad_to_hz, CESIUM_MASS, STANDARD_GRAVITY};
use crate::error::{Error, Result};
use crate::psd::NoisePsd;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CavityQedParams {
    /// Peak single-photon coupling, rad/s.
    pub g0: f64,
    /// Cavity field decay rate, rad/s.
    pub kappa: f64,
    /// Atomic dipole decay rate, rad/s.
    pub gamma_perp: f64,
    /// Mirror separation, m.
    pub cavity_length: f64,
    /// Mode waist, m.
    pub waist: f64,
    /// Longitudinal index of the probe (cavity QED) mode.
    pub n_cavity: u32,
    /// Longitudinal index of the trap mode.
    pub n_fort: u32,
    /// Atomic transition wavelength, m.
    pub lambda_atom: f64,
    pub finesse_qed: f64,
    pub finesse_fort: f64,
    /// nu_atom - nu_cavity, Hz (includes the static lock-beam light shift).
    pub delta_ac: f64,
    /// Half-width of the per-trial uniform jitter on `delta_ac`, Hz.
    pub delta_ac_jitter: f64,
}

impl Default for CavityQedParams {
    fn default() -> Self {
        let lambda_atom = 852.4e-9;
        let n_cavity = 105;
        CavityQedParams {
            g0: hz_to_rad(32e6),
            kappa: hz_to_rad(4e6),
            gamma_perp: hz_to_rad(2.6e6),
            cavity_length: n_cavity as f64 * lambda_atom / 2.0,
            waist: 20e-6,
            n_cavity,
            n_fort: n_cavity - 2,
            lambda_atom,
            finesse_qed: 4.2e5,
            finesse_fort: 3.5e5,
            delta_ac: 0.0,
            delta_ac_jitter: 10e3,
        }
    }
}

impl CavityQedParams {
    pub fn g0_hz(&self) -> f64 {
        rad_to_hz(self.g0)
    }

    pub fn kappa_hz(&self) -> f64 {
        rad_to_hz(self.kappa)
    }

    pub fn gamma_perp_hz(&self) -> f64 {
        rad_to_hz(self.gamma_perp)
    }

    /// Resonant wavelength of longitudinal mode `n`: 2 l / n.
    pub fn mode_wavelength(&self, n: u32) -> f64 {
        2.0 * self.cavity_length / n as f64
    }

    pub fn lambda_cavity(&self) -> f64 {
        self.mode_wavelength(self.n_cavity)
    }

    pub fn lambda_fort(&self) -> f64 {
        self.mode_wavelength(self.n_fort)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("g0", self.g0),
            ("kappa", self.kappa),
            ("gamma_perp", self.gamma_perp),
            ("cavity_length", self.cavity_length),
            ("waist", self.waist),
            ("lambda_atom", self.lambda_atom),
            ("finesse_qed", self.finesse_qed),
            ("finesse_fort", self.finesse_fort),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(name, format!("must be > 0, got {v}")));
            }
        }
        if !self.delta_ac.is_finite() {
            return Err(Error::param("delta_ac", "must be finite"));
        }
        if !(self.delta_ac_jitter.is_finite() && self.delta_ac_jitter >= 0.0) {
            return Err(Error::param("delta_ac_jitter", "must be >= 0"));
        }
        for (name, n) in [("n_cavity", self.n_cavity), ("n_fort", self.n_fort)] {
            if n % 2 == 0 {
                return Err(Error::param(
                    name,
                    format!("mode index {n} must be odd for a central antinode"),
                ));
            }
        }
        let rel = (self.lambda_cavity() - self.lambda_atom).abs() / self.lambda_atom;
        if rel > 5e-3 {
            return Err(Error::param(
                "n_cavity",
                format!(
                    "mode wavelength {:.4e} m differs from lambda_atom by {:.2}% (> 0.5%)",
                    self.lambda_cavity(),
                    rel * 100.0
                ),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomSpecies {
    /// kg
    pub mass: f64,
    pub transition: String,
    /// Gravitational acceleration along -z, m/s^2.
    pub gravity: f64,
}

impl Default for AtomSpecies {
    fn default() -> Self {
        AtomSpecies::cesium()
    }
}

impl AtomSpecies {
    pub fn cesium() -> Self {
        AtomSpecies {
            mass: CESIUM_MASS,
            transition: "Cs D2 6S1/2 F=4,m=4 -> 6P3/2 F'=5,m'=5".to_string(),
            gravity: STANDARD_GRAVITY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass.is_finite() && self.mass > 0.0) {
            return Err(Error::param("mass", "must be > 0"));
        }
        if !self.gravity.is_finite() {
            return Err(Error::param("gravity", "must be finite"));
        }
        Ok(())
    }
}

/// Averaging factor applied to the peak two-level scattering rate. Chosen so
/// that the 50 MHz trap gives 37 photons/s.
pub const DEFAULT_SCATTERING_AVERAGING: f64 = 0.151_728;

/// Build-up correction that maps 30 uW at finesse 3.5e5 to 1 W circulating.
pub const DEFAULT_COUPLING_EFFICIENCY: f64 = 0.299_199;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FortConfig {
    /// Peak ground-state AC-Stark shift, Hz (negative traps).
    pub stark_ground: f64,
    /// Peak excited-state AC-Stark shift, Hz.
    pub stark_excited: f64,
    /// W
    pub input_power: f64,
    /// W
    pub circulating_power: f64,
    pub coupling_efficiency: f64,
    pub noise_psd: NoisePsd,
    pub fort_on: bool,
    /// Spatial/temporal averaging factor for the scattering-rate estimate.
    pub scattering_averaging: f64,
}

impl Default for FortConfig {
    fn default() -> Self {
        FortConfig::lifetime_profile()
    }
}

impl FortConfig {
    /// Trap used while a triggered atom is shown being held and redetected:
    /// shifts of +/-45 MHz.
    pub fn trigger_demo_profile() -> Self {
        FortConfig {
            stark_ground: -45e6,
            stark_excited: 45e6,
            ..FortConfig::lifetime_profile()
        }
    }

    /// Deeper trap used for lifetime measurements: ground shift -50 MHz
    /// (excited shift taken symmetric).
    pub fn lifetime_profile() -> Self {
        FortConfig {
            stark_ground: -50e6,
            stark_excited: 50e6,
            input_power: 30e-6,
            circulating_power: 1.0,
            coupling_efficiency: DEFAULT_COUPLING_EFFICIENCY,
            noise_psd: NoisePsd::reconstruction(),
            fort_on: true,
            scattering_averaging: DEFAULT_SCATTERING_AVERAGING,
        }
    }

    /// Shallow always-on trap used while watching long transits (-15 MHz).
    pub fn shallow_profile() -> Self {
        FortConfig {
            stark_ground: -15e6,
            stark_excited: 15e6,
            ..FortConfig::lifetime_profile()
        }
    }

    pub fn off() -> Self {
        FortConfig {
            fort_on: false,
            ..FortConfig::lifetime_profile()
        }
    }

    /// Ground-state trap depth U0 = h |stark_ground|, J. Zero when off.
    pub fn depth_joules(&self) -> f64 {
        if self.fort_on {
            crate::constants::PLANCK * self.stark_ground.abs()
        } else {
            0.0
        }
    }

    /// Peak shift of the atomic transition, Delta^e - Delta^g, Hz.
    pub fn transition_shift(&self) -> f64 {
        self.stark_excited - self.stark_ground
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("stark_ground", self.stark_ground),
            ("stark_excited", self.stark_excited),
        ] {
            if !v.is_finite() {
                return Err(Error::param(name, "must be finite"));
            }
        }
        for (name, v) in [
            ("input_power", self.input_power),
            ("circulating_power", self.circulating_power),
            ("coupling_efficiency", self.coupling_efficiency),
            ("scattering_averaging", self.scattering_averaging),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::param(name, "must be >= 0"));
            }
        }
        if self.fort_on && self.stark_ground >= 0.0 {
            return Err(Error::NotATrap {
                stark_ground_hz: self.stark_ground,
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_geometry() {
        let p = CavityQedParams::default();
        p.validate().unwrap();
        assert!((p.cavity_length - 44.751e-6).abs() < 1e-12);
        // within 0.4% of the quoted 44.6 um
        assert!((p.cavity_length / 44.6e-6 - 1.0).abs() < 4e-3);
        assert!((p.lambda_fort() - 869e-9).abs() < 0.1e-9);
        assert_eq!(p.n_cavity - p.n_fort, 2);
    }

    #[test]
    fn io_convention_is_ordinary_frequency() {
        let p = CavityQedParams::default();
        assert!((p.g0_hz() - 32e6).abs() < 1e-6);
        assert!((p.kappa_hz() - 4e6).abs() < 1e-6);
        assert!((p.g0 - 2.0 * std::f64::consts::PI * 32e6).abs() < 1e-3);
    }

    #[test]
    fn rejects_even_modes_and_mismatched_length() {
        let p = CavityQedParams {
            n_fort: 104,
            ..Default::default()
        };
        assert!(p.validate().is_err());
        let p = CavityQedParams {
            cavity_length: 46e-6,
            ..Default::default()
        };
        assert!(p.validate().is_err());
        let p = CavityQedParams {
            kappa: 0.0,
            ..Default::default()
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn positive_ground_shift_is_not_a_trap() {
        let f = FortConfig {
            stark_ground: 10e6,
            ..Default::default()
        };
        assert!(matches!(f.validate(), Err(Error::NotATrap { .. })));
        FortConfig::off().validate().unwrap();
    }
}
