//! Tabulated one-sided power spectral densities of fractional intensity noise.
//!
//! Convention: one-sided, so the variance of the process is the integral of
//! `S(f)` over `0 < f < infinity`. Values between table points are
//! interpolated linearly in log-log space. Outside the table the PSD is
//! undefined unless extrapolation is enabled, in which case the end values
//! are held.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisePsd {
    points: Vec<(f64, f64)>,
    extrapolate: bool,
}

impl NoisePsd {
    /// Build from `(frequency_hz, psd_per_hz)` pairs. Frequencies must be
    /// strictly increasing and positive, values non-negative.
    pub fn tabulated(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::param("noise_psd", "table is empty"));
        }
        for (i, &(f, s)) in points.iter().enumerate() {
            if !(f.is_finite() && f > 0.0) {
                return Err(Error::param(
                    "noise_psd",
                    format!("frequency {f} at row {i} must be positive"),
                ));
            }
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::param(
                    "noise_psd",
                    format!("PSD value {s} at row {i} must be >= 0"),
                ));
            }
            if i > 0 && f <= points[i - 1].0 {
                return Err(Error::param(
                    "noise_psd",
                    format!("frequencies not strictly increasing at row {i}"),
                ));
            }
        }
        Ok(NoisePsd {
            points,
            extrapolate: false,
        })
    }

    /// Flat PSD `value` over `[f_lo, f_hi]`.
    pub fn flat(value: f64, f_lo: f64, f_hi: f64) -> Result<Self> {
        if f_hi <= f_lo {
            return Err(Error::param("noise_psd", "flat band needs f_lo < f_hi"));
        }
        Self::tabulated(vec![(f_lo, value), (f_hi, value)])
    }

    /// The shipped default: flat 5e-9/Hz below 50 kHz, a log-log ramp
    /// through 2.3e-11/Hz at 900 kHz, continued at the same slope to 4 MHz so
    /// that twice the axial frequency of the deeper trap profiles is covered.
    /// A reconstruction pinned to two measured points, not measured data.
    pub fn reconstruction() -> Self {
        let slope = (2.3e-11f64 / 5e-9).ln() / (900e3f64 / 50e3).ln();
        let s_4mhz = 2.3e-11 * (4e6f64 / 900e3).powf(slope);
        Self::tabulated(vec![
            (10.0, 5e-9),
            (50e3, 5e-9),
            (900e3, 2.3e-11),
            (4e6, s_4mhz),
        ])
        .expect("static table is valid")
    }

    pub fn with_extrapolation(mut self, enabled: bool) -> Self {
        self.extrapolate = enabled;
        self
    }

    pub fn extrapolation_enabled(&self) -> bool {
        self.extrapolate
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn min_frequency(&self) -> f64 {
        self.points[0].0
    }

    pub fn max_frequency(&self) -> f64 {
        self.points[self.points.len() - 1].0
    }

    pub fn covers(&self, f: f64) -> bool {
        f >= self.min_frequency() && f <= self.max_frequency()
    }

    /// `S(f)` in 1/Hz. Errors outside the table unless extrapolation is on.
    pub fn value_at(&self, f: f64) -> Result<f64> {
        if !self.covers(f) && !self.extrapolate {
            return Err(Error::PsdOutOfRange {
                frequency_hz: f,
                min_hz: self.min_frequency(),
                max_hz: self.max_frequency(),
            });
        }
        Ok(self.value_clamped(f))
    }

    /// `S(f)` with end values held outside the table.
    pub fn value_clamped(&self, f: f64) -> f64 {
        let pts = &self.points;
        if f <= pts[0].0 {
            return pts[0].1;
        }
        let last = pts[pts.len() - 1];
        if f >= last.0 {
            return last.1;
        }
        // first index with frequency > f
        let hi = pts.partition_point(|&(fi, _)| fi <= f);
        let (f0, s0) = pts[hi - 1];
        let (f1, s1) = pts[hi];
        if s0 > 0.0 && s1 > 0.0 {
            let u = (f / f0).ln() / (f1 / f0).ln();
            (s0.ln() + u * (s1 / s0).ln()).exp()
        } else {
            let u = (f - f0) / (f1 - f0);
            s0 + u * (s1 - s0)
        }
    }

    /// Mean of `S` over `[f_lo, f_hi]`, sampled on a log grid.
    pub fn band_average(&self, f_lo: f64, f_hi: f64) -> Result<f64> {
        if !(f_hi > f_lo && f_lo > 0.0) {
            return Err(Error::EmptyRange(format!("band [{f_lo}, {f_hi}]")));
        }
        // only tabulated points inside the band when the table is dense
        let inside: Vec<f64> = self
            .points
            .iter()
            .filter(|(f, _)| *f >= f_lo && *f <= f_hi)
            .map(|p| p.1)
            .collect();
        if inside.len() >= 4 {
            return Ok(inside.iter().sum::<f64>() / inside.len() as f64);
        }
        let n = 64;
        let mut acc = 0.0;
        for i in 0..n {
            let f = f_lo * (f_hi / f_lo).powf((i as f64 + 0.5) / n as f64);
            acc += self.value_at(f)?;
        }
        Ok(acc / n as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reconstruction_hits_quoted_points() {
        let p = NoisePsd::reconstruction();
        assert!((p.value_at(10e3).unwrap() - 5e-9).abs() < 1e-18);
        assert!((p.value_at(900e3).unwrap() / 2.3e-11 - 1.0).abs() < 1e-12);
        // log-log straight line: midpoint in log f gives geometric mean
        let fm = (50e3f64 * 900e3).sqrt();
        let sm = (5e-9f64 * 2.3e-11).sqrt();
        assert!((p.value_at(fm).unwrap() / sm - 1.0).abs() < 1e-9);
    }

    #[test]
    fn out_of_table_is_an_error_by_default() {
        let p = NoisePsd::flat(1e-10, 1e3, 1e6).unwrap();
        assert!(matches!(
            p.value_at(2e6),
            Err(Error::PsdOutOfRange { .. })
        ));
        let p = p.with_extrapolation(true);
        assert_eq!(p.value_at(2e6).unwrap(), 1e-10);
    }

    #[test]
    fn rejects_bad_tables() {
        assert!(NoisePsd::tabulated(vec![]).is_err());
        assert!(NoisePsd::tabulated(vec![(1.0, 1.0), (1.0, 2.0)]).is_err());
        assert!(NoisePsd::tabulated(vec![(1.0, -1.0)]).is_err());
        assert!(NoisePsd::tabulated(vec![(0.0, 1.0)]).is_err());
    }

    #[test]
    fn zero_segments_interpolate_linearly() {
        let p = NoisePsd::tabulated(vec![(1.0, 0.0), (3.0, 2.0)]).unwrap();
        assert!((p.value_at(2.0).unwrap() - 1.0).abs() < 1e-12);
    }
}
