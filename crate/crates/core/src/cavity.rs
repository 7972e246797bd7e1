//! Weak-drive probe transmission and dressed-state eigenvalues.
//!
//! Sign conventions: `delta_probe = nu_probe - nu_atom`,
//! `delta_ac = nu_atom - nu_cavity`. The trap shifts the atomic line to the
//! blue by `Delta_FORT(r)`, so the effective atom-cavity detuning is
//! `delta_ac + Delta_FORT(r)`.

use crate::constants::{hz_to_rad, rad_to_hz};
use crate::error::{Error, Result};
use crate::params::{CavityQedParams, FortConfig};
use crate::physics::{coupling_g, critical_numbers, transition_shift_at};
use crate::vec3::Vec3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    /// nu_probe - nu_atom, Hz.
    pub delta_probe: f64,
    /// Mean intracavity photon number for the empty, resonant cavity.
    pub nbar_empty: f64,
    pub probe_on: bool,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            delta_probe: 0.0,
            nbar_empty: 0.1,
            probe_on: true,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.nbar_empty.is_finite() && self.nbar_empty >= 0.0) {
            return Err(Error::param("nbar_empty", "must be >= 0"));
        }
        if !self.delta_probe.is_finite() {
            return Err(Error::param("delta_probe", "must be finite"));
        }
        Ok(())
    }

    /// False when the drive is strong enough that linear response is
    /// questionable (nbar above ten critical photon numbers).
    pub fn weak_drive_ok(&self, params: &CavityQedParams) -> bool {
        self.nbar_empty <= 10.0 * critical_numbers(params).photon
    }
}

/// Where the atom couples to the mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AtomCoupling {
    /// Evaluate g(r) and the local trap shift at a position.
    Position(Vec3),
    /// Given coupling (rad/s) and peak-relative transition shift (Hz).
    Fixed { g: f64, transition_shift: f64 },
    /// No atom.
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponsePoint {
    pub delta_probe: f64,
    /// Transmission amplitude normalised to the empty resonant cavity.
    pub t: Complex64,
    pub t_abs2: f64,
    /// Local coupling, rad/s.
    pub g: f64,
    /// delta_ac + Delta_FORT(r), Hz.
    pub effective_detuning: f64,
}

/// Per-atom contribution to the cavity susceptibility.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct AtomTerm {
    pub g: f64,
    pub transition_shift: f64,
}

/// t = kappa / (kappa + i delta_c + sum_j g_j^2 / (gamma + i delta_a,j)).
///
/// For one atom this is kappa (gamma + i delta_a) / ((kappa + i delta_c)(gamma + i delta_a) + g^2).
#[inline]
pub(crate) fn amplitude(
    params: &CavityQedParams,
    delta_probe: f64,
    delta_ac: f64,
    atoms: impl IntoIterator<Item = AtomTerm>,
) -> Complex64 {
    let delta_c = -hz_to_rad(delta_probe + delta_ac);
    let mut denom = Complex64::new(params.kappa, delta_c);
    for a in atoms {
        if a.g == 0.0 {
            continue;
        }
        let delta_a = -hz_to_rad(delta_probe - a.transition_shift);
        denom += a.g * a.g / Complex64::new(params.gamma_perp, delta_a);
    }
    params.kappa / denom
}

pub fn transmission(
    coupling: AtomCoupling,
    probe: &ProbeConfig,
    fort: &FortConfig,
    params: &CavityQedParams,
) -> Result<ResponsePoint> {
    let term = match coupling {
        AtomCoupling::Position(r) => AtomTerm {
            g: coupling_g(r, params)?,
            transition_shift: transition_shift_at(r, fort, params),
        },
        AtomCoupling::Fixed {
            g,
            transition_shift,
        } => AtomTerm {
            g,
            transition_shift: if fort.fort_on { transition_shift } else { 0.0 },
        },
        AtomCoupling::Empty => AtomTerm {
            g: 0.0,
            transition_shift: 0.0,
        },
    };
    let t = amplitude(params, probe.delta_probe, params.delta_ac, [term]);
    Ok(ResponsePoint {
        delta_probe: probe.delta_probe,
        t,
        t_abs2: t.norm_sqr(),
        g: term.g,
        effective_detuning: params.delta_ac + term.transition_shift,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DressedEigenvalues {
    /// Upper branch, Hz relative to the empty-cavity resonance.
    pub plus: f64,
    /// Lower branch, Hz.
    pub minus: f64,
    /// Half-widths of the damped eigenmodes, Hz.
    pub width_plus: f64,
    pub width_minus: f64,
}

/// First-excited-manifold eigenvalues for coupling `g` (rad/s) and
/// effective atom-cavity detuning `detuning` (Hz).
pub fn dressed_eigenvalues_for(g: f64, detuning: f64, params: &CavityQedParams) -> DressedEigenvalues {
    let g_hz = rad_to_hz(g);
    let root = (g_hz * g_hz + detuning * detuning / 4.0).sqrt();
    // complex eigenvalues of [[-i kappa, g], [g, detuning - i gamma]]
    let k = params.kappa_hz();
    let gm = params.gamma_perp_hz();
    let half_sum = Complex64::new(detuning, -(k + gm)) / 2.0;
    let half_diff = Complex64::new(detuning, k - gm) / 2.0;
    let s = (half_diff * half_diff + g_hz * g_hz).sqrt();
    let (mut lp, mut lm) = (half_sum + s, half_sum - s);
    if lp.re < lm.re {
        std::mem::swap(&mut lp, &mut lm);
    }
    DressedEigenvalues {
        plus: detuning / 2.0 + root,
        minus: detuning / 2.0 - root,
        width_plus: -lp.im,
        width_minus: -lm.im,
    }
}

pub fn dressed_eigenvalues(
    r: Vec3,
    fort: &FortConfig,
    params: &CavityQedParams,
) -> Result<DressedEigenvalues> {
    let g = coupling_g(r, params)?;
    let shift = transition_shift_at(r, fort, params);
    Ok(dressed_eigenvalues_for(g, params.delta_ac + shift, params))
}

/// Probe-detuning grid, Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetuningRange {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl DetuningRange {
    pub fn step(&self) -> f64 {
        (self.stop - self.start) / (self.points - 1) as f64
    }

    fn validate(&self) -> Result<()> {
        if self.points < 2 {
            return Err(Error::EmptyRange(format!("{} points", self.points)));
        }
        if !(self.start.is_finite() && self.stop.is_finite()) || self.start == self.stop {
            return Err(Error::EmptyRange(format!(
                "[{}, {}] Hz",
                self.start, self.stop
            )));
        }
        Ok(())
    }
}

pub fn spectrum_scan(
    range: DetuningRange,
    coupling: AtomCoupling,
    fort: &FortConfig,
    params: &CavityQedParams,
) -> Result<Vec<ResponsePoint>> {
    range.validate()?;
    let step = range.step();
    (0..range.points)
        .map(|i| {
            let probe = ProbeConfig {
                delta_probe: range.start + step * i as f64,
                ..ProbeConfig::default()
            };
            transmission(coupling, &probe, fort, params)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p() -> CavityQedParams {
        CavityQedParams::default()
    }

    fn fixed(g: f64, shift: f64) -> AtomCoupling {
        AtomCoupling::Fixed {
            g,
            transition_shift: shift,
        }
    }

    #[test]
    fn empty_resonant_cavity_transmits_fully() {
        let r = transmission(AtomCoupling::Empty, &ProbeConfig::default(), &FortConfig::off(), &p()).unwrap();
        assert!((r.t_abs2 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn resonant_dip_at_full_coupling() {
        let p = p();
        let r = transmission(fixed(p.g0, 0.0), &ProbeConfig::default(), &FortConfig::off(), &p).unwrap();
        // closed form (1 + g0^2 / (kappa gamma))^-2
        let c = p.g0 * p.g0 / (p.kappa * p.gamma_perp);
        let expect = 1.0 / ((1.0 + c) * (1.0 + c));
        assert!((r.t_abs2 / expect - 1.0).abs() < 1e-12);
        assert!((r.t_abs2 - 1.011e-4).abs() < 0.002e-4, "{}", r.t_abs2);
    }

    #[test]
    fn lorentzian_half_width() {
        let p = p();
        let probe = ProbeConfig {
            delta_probe: p.kappa_hz(),
            ..Default::default()
        };
        let r = transmission(AtomCoupling::Empty, &probe, &FortConfig::off(), &p).unwrap();
        assert!((r.t_abs2 - 0.5).abs() < 1e-12);
        // the split between probe and delta_ac does not matter for g = 0
        let q = CavityQedParams {
            delta_ac: 1e6,
            ..p.clone()
        };
        let probe = ProbeConfig {
            delta_probe: p.kappa_hz() - 1e6,
            ..Default::default()
        };
        let r = transmission(fixed(0.0, 90e6), &probe, &FortConfig::default(), &q).unwrap();
        assert!((r.t_abs2 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn position_coupling_includes_trap_shift() {
        let p = p();
        let r = Vec3::new(p.cavity_length / 2.0, 0.0, 0.0);
        let f = FortConfig::trigger_demo_profile();
        let a = transmission(AtomCoupling::Position(r), &ProbeConfig::default(), &f, &p).unwrap();
        assert!((a.effective_detuning - 90e6).abs() < 1e-3);
        let b = transmission(fixed(p.g0, 90e6), &ProbeConfig::default(), &f, &p).unwrap();
        assert!((a.t_abs2 - b.t_abs2).abs() < 1e-12);
    }

    #[test]
    fn eigenvalue_examples() {
        let p = p();
        let e = dressed_eigenvalues_for(p.g0, 0.0, &p);
        assert!((e.plus - 32e6).abs() < 1.0 && (e.minus + 32e6).abs() < 1.0);
        let e = dressed_eigenvalues_for(0.0, 25e6, &p);
        assert!((e.plus - 25e6).abs() < 1e-6 && e.minus.abs() < 1e-6);
        // bare widths: cavity kappa, atom gamma
        assert!((e.width_minus - p.kappa_hz()).abs() < 1e-3);
        assert!((e.width_plus - p.gamma_perp_hz()).abs() < 1e-3);
        let e = dressed_eigenvalues_for(p.g0, 90e6, &p);
        assert!((e.minus + 10.218e6).abs() < 5e3, "{}", e.minus);

        let center = Vec3::new(p.cavity_length / 2.0, 0.0, 0.0);
        let e = dressed_eigenvalues(center, &FortConfig::trigger_demo_profile(), &p).unwrap();
        assert!((e.minus + 10.218e6).abs() < 5e3);
        // resonant widths are the mean of the two decay rates
        let e = dressed_eigenvalues_for(p.g0, 0.0, &p);
        let mean = (p.kappa_hz() + p.gamma_perp_hz()) / 2.0;
        assert!((e.width_plus - mean).abs() < 1.0 && (e.width_minus - mean).abs() < 1.0);
    }

    #[test]
    fn scan_examples() {
        let p = p();
        let off = FortConfig::off();
        // 0.25 MHz grid; damping pushes the split peaks ~0.16 MHz beyond +/-g0
        let range = DetuningRange {
            start: -50e6,
            stop: 50e6,
            points: 401,
        };
        let empty = spectrum_scan(range, AtomCoupling::Empty, &off, &p).unwrap();
        // FWHM in probe detuning is kappa/pi in Hz
        let above: Vec<_> = empty.iter().filter(|r| r.t_abs2 >= 0.5).collect();
        let fwhm = above.last().unwrap().delta_probe - above[0].delta_probe;
        assert!((fwhm - p.kappa_hz() * 2.0).abs() <= 2.0 * range.step(), "{fwhm}");

        let split = spectrum_scan(range, fixed(p.g0, 0.0), &off, &p).unwrap();
        let peaks: Vec<f64> = (1..split.len() - 1)
            .filter(|&i| split[i].t_abs2 > split[i - 1].t_abs2 && split[i].t_abs2 >= split[i + 1].t_abs2)
            .map(|i| split[i].delta_probe)
            .collect();
        assert_eq!(peaks.len(), 2, "{peaks:?}");
        assert!((peaks[0] + 32e6).abs() <= range.step());
        assert!((peaks[1] - 32e6).abs() <= range.step());

        assert!(spectrum_scan(
            DetuningRange { start: 0.0, stop: 1.0, points: 1 },
            AtomCoupling::Empty,
            &off,
            &p
        )
        .is_err());
        assert!(spectrum_scan(
            DetuningRange { start: 1.0, stop: 1.0, points: 10 },
            AtomCoupling::Empty,
            &off,
            &p
        )
        .is_err());
    }

    #[test]
    fn dip_depth_decreases_with_coupling() {
        let p = p();
        let mut last = 2.0;
        for i in 0..50 {
            let g = p.g0 * i as f64 / 49.0;
            let r = transmission(fixed(g, 0.0), &ProbeConfig::default(), &FortConfig::off(), &p).unwrap();
            assert!(r.t_abs2 < last || i == 0);
            last = r.t_abs2;
        }
    }

    #[test]
    fn weak_drive_flag() {
        let p = p();
        assert!(ProbeConfig::default().weak_drive_ok(&p) == (0.1 <= 10.0 * critical_numbers(&p).photon));
        let strong = ProbeConfig { nbar_empty: 5.0, ..Default::default() };
        assert!(!strong.weak_drive_ok(&p));
    }

    proptest! {
        #[test]
        fn passive(g_frac in 0.0f64..1.0, dp in -2e8f64..2e8, dac in -5e7f64..5e7, shift in -2e8f64..2e8) {
            let p = CavityQedParams { delta_ac: dac, ..p() };
            let probe = ProbeConfig { delta_probe: dp, ..Default::default() };
            let r = transmission(fixed(p.g0 * g_frac, shift), &probe, &FortConfig::default(), &p).unwrap();
            prop_assert!(r.t_abs2 >= 0.0 && r.t_abs2 <= 1.0 + 1e-9);
        }

        #[test]
        fn mirror_symmetry(g_frac in 0.0f64..1.0, dp in -1e8f64..1e8, det in -1e8f64..1e8) {
            // (delta_probe, effective detuning) -> (-delta_probe, -detuning) with delta_ac = 0
            let p = p();
            let fort = FortConfig::default();
            let a = transmission(fixed(p.g0 * g_frac, det), &ProbeConfig { delta_probe: dp, ..Default::default() }, &fort, &p).unwrap();
            let b = transmission(fixed(p.g0 * g_frac, -det), &ProbeConfig { delta_probe: -dp, ..Default::default() }, &fort, &p).unwrap();
            prop_assert!((a.t_abs2 - b.t_abs2).abs() < 1e-12);
        }
    }
}
