//! Mode geometry, coupling, trap potential and derived single-atom numbers.

use crate::constants::{hz_to_rad, PLANCK, SPEED_OF_LIGHT};
use crate::error::{Error, Result};
use crate::params::{AtomSpecies, CavityQedParams, FortConfig};
use crate::vec3::Vec3;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Standing-wave amplitude of longitudinal mode `n`:
/// `sin(n pi x / l) exp(-(y^2 + z^2) / w0^2)`.
///
/// Integer mode indices put exact nodes on both mirrors.
pub fn mode_function(r: Vec3, n: u32, params: &CavityQedParams) -> Result<f64> {
    let l = params.cavity_length;
    if !(r.x >= 0.0 && r.x <= l) {
        return Err(Error::OutsideCavity { x: r.x, length: l });
    }
    Ok(mode_value(r, n, params))
}

#[inline]
pub(crate) fn mode_value(r: Vec3, n: u32, params: &CavityQedParams) -> f64 {
    let k = n as f64 * PI / params.cavity_length;
    (k * r.x).sin() * (-r.rho_sq() / (params.waist * params.waist)).exp()
}

/// Local coupling g(r) = g0 psi(r, n_cavity), rad/s.
pub fn coupling_g(r: Vec3, params: &CavityQedParams) -> Result<f64> {
    Ok(params.g0 * mode_function(r, params.n_cavity, params)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalNumbers {
    /// gamma_perp^2 / (2 g0^2)
    pub photon: f64,
    /// 2 kappa gamma_perp / g0^2
    pub atom: f64,
}

pub fn critical_numbers(params: &CavityQedParams) -> CriticalNumbers {
    let g2 = params.g0 * params.g0;
    CriticalNumbers {
        photon: params.gamma_perp * params.gamma_perp / (2.0 * g2),
        atom: 2.0 * params.kappa * params.gamma_perp / g2,
    }
}

/// Trap potential and light shifts at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FortPoint {
    /// Ground-state potential energy, J.
    pub energy: f64,
    /// Local ground-state shift, Hz.
    pub stark_ground: f64,
    /// Local excited-state shift, Hz.
    pub stark_excited: f64,
    /// Local blue shift of the atomic transition, Hz.
    pub transition_shift: f64,
}

impl FortPoint {
    const ZERO: FortPoint = FortPoint {
        energy: 0.0,
        stark_ground: 0.0,
        stark_excited: 0.0,
        transition_shift: 0.0,
    };
}

/// Light shifts follow the local intensity, psi^2 of the trap mode.
pub fn fort_potential(r: Vec3, fort: &FortConfig, params: &CavityQedParams) -> Result<FortPoint> {
    let psi = mode_function(r, params.n_fort, params)?;
    if !fort.fort_on {
        return Ok(FortPoint::ZERO);
    }
    let i = psi * psi;
    Ok(FortPoint {
        energy: PLANCK * fort.stark_ground * i,
        stark_ground: fort.stark_ground * i,
        stark_excited: fort.stark_excited * i,
        transition_shift: fort.transition_shift() * i,
    })
}

/// Local transition shift Delta_FORT(r), Hz, without the domain check.
#[inline]
pub(crate) fn transition_shift_at(r: Vec3, fort: &FortConfig, params: &CavityQedParams) -> f64 {
    if !fort.fort_on {
        return 0.0;
    }
    let psi = mode_value(r, params.n_fort, params);
    fort.transition_shift() * psi * psi
}

/// Precomputed trap field for the integrator hot loop.
///
/// U(r) = amplitude sin^2(k x) exp(-2 rho^2 / w0^2), amplitude = h Delta^g.
#[derive(Debug, Clone, Copy)]
pub struct FortField {
    pub amplitude: f64,
    pub k: f64,
    pub inv_w0_sq: f64,
}

impl FortField {
    pub fn new(fort: &FortConfig, params: &CavityQedParams) -> Self {
        FortField {
            amplitude: if fort.fort_on {
                PLANCK * fort.stark_ground
            } else {
                0.0
            },
            k: params.n_fort as f64 * PI / params.cavity_length,
            inv_w0_sq: 1.0 / (params.waist * params.waist),
        }
    }

    #[inline]
    pub fn potential(&self, r: Vec3) -> f64 {
        let s = (self.k * r.x).sin();
        self.amplitude * s * s * (-2.0 * r.rho_sq() * self.inv_w0_sq).exp()
    }

    /// -grad U at r.
    #[inline]
    pub fn force(&self, r: Vec3) -> Vec3 {
        if self.amplitude == 0.0 {
            return Vec3::ZERO;
        }
        let (s, c) = (self.k * r.x).sin_cos();
        let g = (-2.0 * r.rho_sq() * self.inv_w0_sq).exp();
        let a = self.amplitude * g;
        let radial = 4.0 * self.inv_w0_sq * a * s * s;
        Vec3::new(-2.0 * a * s * c * self.k, radial * r.y, radial * r.z)
    }

    /// Depth of the local well at the atom's radius, J (positive).
    #[inline]
    pub fn local_depth(&self, r: Vec3) -> f64 {
        -self.amplitude * (-2.0 * r.rho_sq() * self.inv_w0_sq).exp()
    }

    /// Axial energy relative to the bottom of the local well, J.
    #[inline]
    pub fn axial_energy(&self, r: Vec3, vx: f64, mass: f64) -> f64 {
        let c = (self.k * r.x).cos();
        0.5 * mass * vx * vx + self.local_depth(r) * c * c
    }

    /// Antinode position nearest to x.
    pub fn nearest_antinode(&self, x: f64) -> f64 {
        let j = (self.k * x / PI - 0.5).round();
        (j + 0.5) * PI / self.k
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapFrequencies {
    /// Hz
    pub radial: f64,
    /// Hz
    pub axial: f64,
}

/// Harmonic small-oscillation frequencies about a central antinode.
pub fn trap_frequencies(
    fort: &FortConfig,
    params: &CavityQedParams,
    species: &AtomSpecies,
) -> Result<TrapFrequencies> {
    if fort.stark_ground >= 0.0 {
        return Err(Error::NotATrap {
            stark_ground_hz: fort.stark_ground,
        });
    }
    let u0 = PLANCK * fort.stark_ground.abs();
    let m = species.mass;
    let k_fort = 2.0 * PI / params.lambda_fort();
    Ok(TrapFrequencies {
        radial: (2.0 / params.waist) * (u0 / m).sqrt() / (2.0 * PI),
        axial: k_fort * (2.0 * u0 / m).sqrt() / (2.0 * PI),
    })
}

/// Photon scattering rate in the trap, 1/s:
/// eta 2 gamma_perp (U0 / hbar) / |Delta_F|.
pub fn scattering_rate(fort: &FortConfig, params: &CavityQedParams) -> Result<f64> {
    if !fort.fort_on {
        return Ok(0.0);
    }
    let inv_diff = 1.0 / params.lambda_fort() - 1.0 / params.lambda_atom;
    if inv_diff == 0.0 {
        return Err(Error::ZeroDetuning);
    }
    let detuning = hz_to_rad(SPEED_OF_LIGHT * inv_diff).abs();
    let u0_over_hbar = hz_to_rad(fort.stark_ground.abs());
    Ok(fort.scattering_averaging * 2.0 * params.gamma_perp * u0_over_hbar / detuning)
}

/// Speed after falling `drop_height` metres from rest.
pub fn free_fall_velocity(drop_height: f64, gravity: f64) -> f64 {
    debug_assert!(drop_height >= 0.0);
    (2.0 * gravity * drop_height.max(0.0)).sqrt()
}

/// Circulating power, W: efficiency (F / pi) P_in.
pub fn cavity_buildup(input_power: f64, finesse: f64, coupling_efficiency: f64) -> f64 {
    coupling_efficiency * finesse / PI * input_power
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::rad_to_hz;
    use proptest::prelude::*;

    fn p() -> CavityQedParams {
        CavityQedParams::default()
    }

    #[test]
    fn mode_function_examples() {
        let p = p();
        let l = p.cavity_length;
        let c = mode_function(Vec3::new(l / 2.0, 0.0, 0.0), p.n_cavity, &p).unwrap();
        assert!((c.abs() - 1.0).abs() < 1e-12);
        assert_eq!(mode_function(Vec3::ZERO, 7, &p).unwrap(), 0.0);
        let w = mode_function(Vec3::new(l / 2.0, p.waist, 0.0), 105, &p).unwrap();
        assert!((w.abs() - (-1.0f64).exp()).abs() < 1e-12);
        assert!(matches!(
            mode_function(Vec3::new(-1e-9, 0.0, 0.0), 105, &p),
            Err(Error::OutsideCavity { .. })
        ));
        assert!(mode_function(Vec3::new(l * 1.001, 0.0, 0.0), 105, &p).is_err());
    }

    #[test]
    fn coupling_examples() {
        let p = p();
        let l = p.cavity_length;
        let g = coupling_g(Vec3::new(l / 2.0, 0.0, 0.0), &p).unwrap();
        assert!((rad_to_hz(g.abs()) - 32e6).abs() < 1e-3);
        let g = coupling_g(Vec3::new(l, 0.0, 0.0), &p).unwrap();
        assert!(g.abs() < 1e-6 * p.g0);
        let g = coupling_g(Vec3::new(l / 2.0, 0.0, p.waist), &p).unwrap();
        assert!((rad_to_hz(g.abs()) - 11.772e6).abs() < 1e3);
    }

    #[test]
    fn critical_number_examples() {
        let c = critical_numbers(&p());
        assert!((c.photon - 0.0033).abs() < 0.00005, "{}", c.photon);
        assert!((c.atom - 0.0203).abs() < 0.00005, "{}", c.atom);

        let gamma = hz_to_rad(3e6);
        let q = CavityQedParams {
            g0: gamma,
            kappa: gamma / 2.0,
            gamma_perp: gamma,
            ..p()
        };
        let c = critical_numbers(&q);
        assert!((c.photon - 0.5).abs() < 1e-12);
        assert!((c.atom - 1.0).abs() < 1e-12);

        let base = critical_numbers(&p());
        let d = critical_numbers(&CavityQedParams {
            g0: 2.0 * p().g0,
            ..p()
        });
        assert!((d.photon * 4.0 / base.photon - 1.0).abs() < 1e-12);
        assert!((d.atom * 4.0 / base.atom - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fort_potential_examples() {
        let p = p();
        let f = FortConfig::trigger_demo_profile();
        let l = p.cavity_length;
        let c = fort_potential(Vec3::new(l / 2.0, 0.0, 0.0), &f, &p).unwrap();
        assert!((c.transition_shift - 90e6).abs() < 1e-3);
        assert!((c.energy + PLANCK * 45e6).abs() < 1e-36);

        let node = p.lambda_fort() / 2.0 * 51.0; // x = 51 half-waves: node of n_fort
        let n = fort_potential(Vec3::new(node, 0.0, 0.0), &f, &p).unwrap();
        assert!(n.energy.abs() < 1e-20 * PLANCK * 45e6 + 1e-40);
        assert!(n.transition_shift.abs() < 1e-12);

        let w = fort_potential(Vec3::new(l / 2.0, p.waist, 0.0), &f, &p).unwrap();
        let expect = -PLANCK * 45e6 * (-2.0f64).exp();
        assert!((w.energy / expect - 1.0).abs() < 1e-12);

        let off = fort_potential(Vec3::new(l / 2.0, 0.0, 0.0), &FortConfig::off(), &p).unwrap();
        assert_eq!(off.energy, 0.0);
        assert_eq!(off.transition_shift, 0.0);
    }

    #[test]
    fn antinodes_registered_at_center() {
        let p = p();
        let l = p.cavity_length;
        let c = mode_value(Vec3::new(l / 2.0, 0.0, 0.0), p.n_cavity, &p);
        let f = mode_value(Vec3::new(l / 2.0, 0.0, 0.0), p.n_fort, &p);
        assert!((c * c - 1.0).abs() < 1e-12 && (f * f - 1.0).abs() < 1e-12);
    }

    #[test]
    fn trap_frequency_examples() {
        let p = p();
        let s = AtomSpecies::cesium();
        let f = FortConfig::lifetime_profile();
        let t = trap_frequencies(&f, &p, &s).unwrap();
        assert!((t.radial - 6.17e3).abs() < 0.05e3, "{}", t.radial);
        assert!((t.axial - 630e3).abs() < 5e3, "{}", t.axial);
        // within a factor 1.5 of the estimated (5, 450) kHz
        assert!(t.radial / 5e3 < 1.5 && t.axial / 450e3 < 1.5);

        let deep = FortConfig {
            stark_ground: 4.0 * f.stark_ground,
            ..f.clone()
        };
        let t4 = trap_frequencies(&deep, &p, &s).unwrap();
        assert!((t4.radial / t.radial - 2.0).abs() < 1e-12);
        assert!((t4.axial / t.axial - 2.0).abs() < 1e-12);

        let wide = CavityQedParams {
            waist: 2.0 * p.waist,
            ..p.clone()
        };
        let tw = trap_frequencies(&f, &wide, &s).unwrap();
        assert!((tw.radial / t.radial - 0.5).abs() < 1e-12);
        assert!((tw.axial / t.axial - 1.0).abs() < 1e-12);

        let bad = FortConfig {
            stark_ground: 0.0,
            ..f
        };
        assert!(trap_frequencies(&bad, &p, &s).is_err());
    }

    #[test]
    fn scattering_rate_examples() {
        let p = p();
        let unit = FortConfig {
            scattering_averaging: 1.0,
            ..FortConfig::trigger_demo_profile()
        };
        let r = scattering_rate(&unit, &p).unwrap();
        assert!((r - 219.5).abs() < 1.0, "{r}");
        let r = scattering_rate(&FortConfig::lifetime_profile(), &p).unwrap();
        assert!((r - 37.0).abs() < 0.01, "{r}");
        let zero = FortConfig {
            stark_ground: 0.0,
            ..FortConfig::lifetime_profile()
        };
        assert_eq!(scattering_rate(&zero, &p).unwrap(), 0.0);
        let degenerate = CavityQedParams {
            n_fort: p.n_cavity,
            ..p
        };
        assert_eq!(
            scattering_rate(&FortConfig::default(), &degenerate),
            Err(Error::ZeroDetuning)
        );
    }

    #[test]
    fn free_fall_examples() {
        let g = crate::constants::STANDARD_GRAVITY;
        assert!((free_fall_velocity(5e-3, g) - 0.313).abs() < 1e-3);
        assert_eq!(free_fall_velocity(0.0, g), 0.0);
        assert!((free_fall_velocity(20e-3, g) / free_fall_velocity(5e-3, g) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn buildup_examples() {
        let eff = crate::params::DEFAULT_COUPLING_EFFICIENCY;
        assert!((cavity_buildup(30e-6, 3.5e5, eff) - 1.0).abs() < 1e-5);
        assert_eq!(cavity_buildup(0.0, 3.5e5, eff), 0.0);
        assert!((cavity_buildup(2.5, PI, 1.0) - 2.5).abs() < 1e-15);
    }

    #[test]
    fn force_is_minus_gradient() {
        let p = p();
        let field = FortField::new(&FortConfig::default(), &p);
        let r = Vec3::new(p.cavity_length / 2.0 + 0.07e-6, 3e-6, -5e-6);
        let f = field.force(r);
        let h = 1e-11;
        let d = |dr: Vec3| (field.potential(r + dr) - field.potential(r - dr)) / (2.0 * h);
        let grad = Vec3::new(
            d(Vec3::new(h, 0.0, 0.0)),
            d(Vec3::new(0.0, h, 0.0)),
            d(Vec3::new(0.0, 0.0, h)),
        );
        for (a, b) in [(f.x, -grad.x), (f.y, -grad.y), (f.z, -grad.z)] {
            assert!((a - b).abs() <= 1e-5 * f.norm(), "{a} vs {b}");
        }
    }

    proptest! {
        #[test]
        fn mode_vanishes_at_mirrors(n in 1u32..400, y in -1e-4f64..1e-4, z in -1e-4f64..1e-4) {
            let p = p();
            let a = mode_function(Vec3::new(0.0, y, z), n, &p).unwrap();
            let b = mode_function(Vec3::new(p.cavity_length, y, z), n, &p).unwrap();
            prop_assert!(a.abs() < 1e-12 && b.abs() < 1e-10);
        }

        #[test]
        fn coupling_and_potential_bounded(u in 0.0f64..=1.0, y in -6e-5f64..6e-5, z in -6e-5f64..6e-5) {
            let p = p();
            let f = FortConfig::default();
            let r = Vec3::new(u * p.cavity_length, y, z);
            let g = coupling_g(r, &p).unwrap();
            prop_assert!(g.abs() <= p.g0 * (1.0 + 1e-12));
            let u0 = f.depth_joules();
            let e = fort_potential(r, &f, &p).unwrap().energy;
            prop_assert!(e <= 0.0 && e >= -u0 * (1.0 + 1e-12));
        }

        #[test]
        fn critical_numbers_scale_inverse_square(s in 0.1f64..10.0) {
            let p = p();
            let a = critical_numbers(&p);
            let b = critical_numbers(&CavityQedParams { g0: p.g0 * s, ..p.clone() });
            prop_assert!((b.photon * s * s / a.photon - 1.0).abs() < 1e-10);
            prop_assert!((b.atom * s * s / a.atom - 1.0).abs() < 1e-10);
        }
    }
}
