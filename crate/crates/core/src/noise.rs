//! Intensity-noise parametric heating: the analytic heating time, synthesis
//! of fractional-intensity series with a prescribed one-sided PSD, and an
//! averaged-periodogram PSD estimator.

use crate::error::{Error, Result};
use crate::physics::TrapFrequencies;
use crate::psd::NoisePsd;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftPlanner;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Energy e-folding time for parametric heating, seconds:
/// `1 / (pi^2 nu^2 S(2 nu))`. `None` when the PSD vanishes at `2 nu`.
pub fn heating_time(nu_tr: f64, psd: &NoisePsd) -> Result<Option<f64>> {
    if !(nu_tr.is_finite() && nu_tr > 0.0) {
        return Err(Error::param("nu_tr", format!("must be > 0, got {nu_tr}")));
    }
    let s = psd.value_at(2.0 * nu_tr)?;
    if s == 0.0 {
        return Ok(None);
    }
    Ok(Some(1.0 / (PI * PI * nu_tr * nu_tr * s)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatingEstimate {
    /// s; `None` means no heating (infinite lifetime).
    pub tau_e_radial: Option<f64>,
    pub tau_e_axial: Option<f64>,
    /// (frequency Hz, S_e 1/Hz) pairs used, radial first.
    pub evaluated_psd_values: Vec<(f64, f64)>,
}

pub fn heating_estimate(freqs: TrapFrequencies, psd: &NoisePsd) -> Result<HeatingEstimate> {
    let radial = heating_time(freqs.radial, psd)?;
    let axial = heating_time(freqs.axial, psd)?;
    Ok(HeatingEstimate {
        tau_e_radial: radial,
        tau_e_axial: axial,
        evaluated_psd_values: vec![
            (2.0 * freqs.radial, psd.value_at(2.0 * freqs.radial)?),
            (2.0 * freqs.axial, psd.value_at(2.0 * freqs.axial)?),
        ],
    })
}

/// Sampled fractional intensity fluctuation epsilon(t_i), t_i = i / sample_rate.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSeries {
    pub sample_rate: f64,
    pub samples: Vec<f64>,
    pub target_psd: NoisePsd,
    pub seed: u64,
}

impl NoiseSeries {
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    /// Zero-order hold: the sample in force at time `t`.
    #[inline]
    pub fn at(&self, t: f64) -> f64 {
        let i = (t * self.sample_rate) as usize;
        self.samples[i.min(self.samples.len() - 1)]
    }

    /// A noiseless series, for deterministic runs.
    pub fn silent(duration: f64, sample_rate: f64) -> Self {
        let n = (duration * sample_rate).ceil() as usize + 1;
        NoiseSeries {
            sample_rate,
            samples: vec![0.0; n],
            target_psd: NoisePsd::flat(0.0, 1.0, sample_rate / 2.0).expect("valid band"),
            seed: 0,
        }
    }
}

/// Zero-mean stationary Gaussian series with one-sided PSD `psd`, made by
/// shaping white noise in the frequency domain.
///
/// `band_max` is the highest frequency that matters to the caller (twice the
/// highest trap frequency); the sample rate must be at least ten times it
/// and the PSD table must cover it. Outside the table the end values are
/// held.
pub fn synthesize_noise(
    psd: &NoisePsd,
    duration: f64,
    sample_rate: f64,
    band_max: f64,
    seed: u64,
) -> Result<NoiseSeries> {
    if !(duration.is_finite() && duration > 0.0) {
        return Err(Error::param("duration", "must be > 0"));
    }
    if !(sample_rate >= 10.0 * band_max) {
        return Err(Error::SampleRateTooLow {
            sample_rate_hz: sample_rate,
            band_hz: band_max,
            required_hz: 10.0 * band_max,
        });
    }
    psd.value_at(band_max)?;

    let n = (duration * sample_rate).ceil() as usize + 1;
    let len = n.next_power_of_two();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buf: Vec<Complex64> = (0..len)
        .map(|_| Complex64::new(StandardNormal.sample(&mut rng), 0.0))
        .collect();

    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(len).process(&mut buf);

    // unit white noise has one-sided PSD 2/fs; scale each bin to S(f)
    let df = sample_rate / len as f64;
    buf[0] = Complex64::new(0.0, 0.0);
    for k in 1..=len / 2 {
        let h = (psd.value_clamped(k as f64 * df) * sample_rate / 2.0).sqrt();
        buf[k] *= h;
        if k != len - k {
            buf[len - k] *= h;
        }
    }
    planner.plan_fft_inverse(len).process(&mut buf);

    let norm = 1.0 / len as f64;
    let samples = buf[..n].iter().map(|c| c.re * norm).collect();
    Ok(NoiseSeries {
        sample_rate,
        samples,
        target_psd: psd.clone(),
        seed,
    })
}

/// Averaged periodogram (Hann window, non-overlapping segments), one-sided.
///
/// Normalised so that a tone `d cos(2 pi f t)` integrates to `d^2 / 2`
/// around `f`.
pub fn estimate_psd(samples: &[f64], sample_rate: f64, segment_count: usize) -> Result<NoisePsd> {
    if segment_count < 2 {
        return Err(Error::SeriesTooShort {
            reason: format!("need >= 2 segments, asked for {segment_count}"),
        });
    }
    let seg = samples.len() / segment_count;
    if seg < 64 {
        return Err(Error::SeriesTooShort {
            reason: format!(
                "{} samples in {segment_count} segments gives {seg} per segment (< 64)",
                samples.len()
            ),
        });
    }
    let window: Vec<f64> = (0..seg)
        .map(|i| 0.5 * (1.0 - (2.0 * PI * i as f64 / seg as f64).cos()))
        .collect();
    let w2: f64 = window.iter().map(|w| w * w).sum();

    let fft = FftPlanner::<f64>::new().plan_fft_forward(seg);
    let half = seg / 2;
    let mut acc = vec![0.0; half + 1];
    let mut buf = vec![Complex64::new(0.0, 0.0); seg];
    for s in 0..segment_count {
        let chunk = &samples[s * seg..(s + 1) * seg];
        let mean = chunk.iter().sum::<f64>() / seg as f64;
        for (b, (&x, &w)) in buf.iter_mut().zip(chunk.iter().zip(&window)) {
            *b = Complex64::new((x - mean) * w, 0.0);
        }
        fft.process(&mut buf);
        for (k, a) in acc.iter_mut().enumerate() {
            *a += buf[k].norm_sqr();
        }
    }
    let df = sample_rate / seg as f64;
    let points = (1..=half)
        .map(|k| {
            let one_sided = if k == half && seg % 2 == 0 { 1.0 } else { 2.0 };
            let p = one_sided * acc[k] / (segment_count as f64 * sample_rate * w2);
            (k as f64 * df, p)
        })
        .collect();
    NoisePsd::tabulated(points)
}

/// Welch estimate of a synthesized series.
pub fn estimate_series_psd(series: &NoiseSeries, segment_count: usize) -> Result<NoisePsd> {
    estimate_psd(&series.samples, series.sample_rate, segment_count)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heating_time_examples() {
        let radial = heating_time(5e3, &NoisePsd::flat(5e-9, 1e3, 1e5).unwrap()).unwrap().unwrap();
        assert!((radial - 0.8106).abs() < 1e-3, "{radial}");
        assert!((radial / 0.830 - 1.0).abs() < 0.1);
        let axial = heating_time(450e3, &NoisePsd::flat(2.3e-11, 1e5, 2e6).unwrap()).unwrap().unwrap();
        assert!((axial - 21.8e-3).abs() < 0.1e-3, "{axial}");
        assert!((axial / 23e-3 - 1.0).abs() < 0.1);
        assert_eq!(heating_time(1e3, &NoisePsd::flat(0.0, 1.0, 1e4).unwrap()).unwrap(), None);
    }

    #[test]
    fn heating_time_needs_psd_coverage() {
        let p = NoisePsd::flat(1e-10, 1e3, 1e5).unwrap();
        assert!(matches!(heating_time(80e3, &p), Err(Error::PsdOutOfRange { .. })));
        assert!(heating_time(80e3, &p.with_extrapolation(true)).unwrap().is_some());
        assert!(heating_time(0.0, &NoisePsd::reconstruction()).is_err());
    }

    #[test]
    fn heating_time_inverse_square_for_flat_psd() {
        let p = NoisePsd::flat(3e-10, 1.0, 1e7).unwrap();
        let a = heating_time(10e3, &p).unwrap().unwrap();
        for s in [2.0, 3.7, 11.0] {
            let b = heating_time(10e3 * s, &p).unwrap().unwrap();
            assert!((a / b / (s * s) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let p = NoisePsd::flat(1e-9, 1.0, 1e6).unwrap();
        let a = synthesize_noise(&p, 1e-3, 2e6, 1e5, 7).unwrap();
        let b = synthesize_noise(&p, 1e-3, 2e6, 1e5, 7).unwrap();
        let c = synthesize_noise(&p, 1e-3, 2e6, 1e5, 8).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn sample_rate_bound_names_band() {
        let p = NoisePsd::reconstruction();
        let e = synthesize_noise(&p, 1e-3, 1e6, 1.26e6, 1).unwrap_err();
        assert!(e.to_string().contains("1.260000e6"), "{e}");
    }

    #[test]
    fn flat_variance_matches_parseval() {
        // flat S0 up to Nyquist: variance = S0 fs / 2
        let fs = 1e6;
        let s0 = 2e-9;
        let p = NoisePsd::flat(s0, 1.0, fs).unwrap();
        let n = synthesize_noise(&p, 0.5, fs, fs / 10.0, 3).unwrap();
        let var = n.samples.iter().map(|x| x * x).sum::<f64>() / n.samples.len() as f64;
        assert!((var / (s0 * fs / 2.0) - 1.0).abs() < 0.02, "{var}");
        let mean = n.samples.iter().sum::<f64>() / n.samples.len() as f64;
        assert!(mean.abs() < 3.0 * var.sqrt() / (n.samples.len() as f64).sqrt());
    }

    #[test]
    fn white_noise_estimate_is_flat() {
        let fs = 1e5;
        let sigma = 0.3;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..(1 << 16)).map(|_| { let z: f64 = StandardNormal.sample(&mut rng); sigma * z }).collect();
        let est = estimate_psd(&x, fs, 64).unwrap();
        let expect = sigma * sigma / (fs / 2.0);
        let band = est.band_average(1e3, 4.9e4).unwrap();
        assert!((band / expect - 1.0).abs() < 0.03, "{band} vs {expect}");
    }

    #[test]
    fn am_tone_calibration() {
        let fs = 1e6;
        let f = 10e3;
        let d = 0.01;
        let x: Vec<f64> = (0..(1 << 16))
            .map(|i| d * (2.0 * PI * f * i as f64 / fs).cos())
            .collect();
        let est = estimate_psd(&x, fs, 8).unwrap();
        let df = est.points()[1].0 - est.points()[0].0;
        let line: f64 = est
            .points()
            .iter()
            .filter(|(fk, _)| (fk - f).abs() < 6.0 * df)
            .map(|(_, p)| p * df)
            .sum();
        assert!((line - 5e-5).abs() < 5e-5 * 0.01, "{line}");
    }

    #[test]
    fn short_series_rejected() {
        assert!(estimate_psd(&[0.0; 100], 1.0, 2).is_err());
        assert!(estimate_psd(&[0.0; 1000], 1.0, 1).is_err());
    }

    #[test]
    fn round_trip_recovers_shaped_psd() {
        let psd = NoisePsd::reconstruction();
        let fs = 8e6;
        let series = synthesize_noise(&psd, 0.03, fs, 0.8e6, 5).unwrap();
        let est = estimate_series_psd(&series, 64).unwrap();
        for &(f, s) in psd.points().iter().filter(|(f, _)| *f >= 50e3 && *f <= 0.9e6) {
            let got = est.band_average(f * 0.9, f * 1.1).unwrap();
            assert!((got / s - 1.0).abs() < 0.2, "f={f}: {got} vs {s}");
        }
        // band [nu, 4 nu] for a 200 kHz trap
        for f in [200e3, 300e3, 500e3, 800e3] {
            let got = est.band_average(f * 0.95, f * 1.05).unwrap();
            let s = psd.value_at(f).unwrap();
            assert!((got / s - 1.0).abs() < 0.2, "f={f}: {got} vs {s}");
        }
    }
}
