//! Detection chain: efficiency-scaled photon counting of the transmitted
//! probe, a single-pole low-pass at the detection bandwidth, and the
//! falling-edge trigger discriminator.

use crate::cavity::ProbeConfig;
use crate::error::{Error, Result};
use crate::params::CavityQedParams;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionChain {
    /// Overall detection efficiency.
    pub efficiency: f64,
    /// -3 dB bandwidth of the signal filter, Hz.
    pub bandwidth: f64,
    /// Counting bin, s.
    pub bin_dt: f64,
    /// Trigger level relative to the empty-cavity mean.
    pub threshold_fraction: f64,
    /// Recovery margin above threshold needed to re-arm.
    pub hysteresis_fraction: f64,
    /// Required time below threshold, in filter time constants. At
    /// nbar = 0.1 the filtered shot noise is ~0.2 rms, so two time constants
    /// false-trigger in about half of all 3 ms windows; five bring that
    /// below 0.1%.
    pub sustain_time_constants: f64,
}

impl Default for DetectionChain {
    fn default() -> Self {
        DetectionChain {
            efficiency: 0.47,
            bandwidth: 30e3,
            bin_dt: 1e-6,
            threshold_fraction: 0.7,
            hysteresis_fraction: 0.1,
            sustain_time_constants: 5.0,
        }
    }
}

impl DetectionChain {
    pub fn validate(&self) -> Result<()> {
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(Error::param("efficiency", "must be in (0, 1]"));
        }
        if !(self.bandwidth > 0.0) {
            return Err(Error::param("bandwidth", "must be > 0"));
        }
        if !(self.threshold_fraction > 0.0 && self.threshold_fraction < 1.0) {
            return Err(Error::param("threshold_fraction", "must be in (0, 1)"));
        }
        if !(self.hysteresis_fraction >= 0.0) {
            return Err(Error::param("hysteresis_fraction", "must be >= 0"));
        }
        if !(self.sustain_time_constants >= 0.0) {
            return Err(Error::param("sustain_time_constants", "must be >= 0"));
        }
        self.check_bin(self.bin_dt)
    }

    fn check_bin(&self, dt: f64) -> Result<()> {
        let max = 1.0 / (10.0 * self.bandwidth);
        if !(dt > 0.0 && dt <= max * (1.0 + 1e-12)) {
            return Err(Error::param(
                "bin_dt",
                format!("{dt:.3e} s must be in (0, {max:.3e}] s (ten bins per filter bandwidth)"),
            ));
        }
        Ok(())
    }

    /// Filter time constant 1 / (2 pi bandwidth), s.
    pub fn time_constant(&self) -> f64 {
        1.0 / (2.0 * PI * self.bandwidth)
    }

    /// Detected photon rate for |t|^2 = 1, 1/s: efficiency 2 kappa nbar.
    pub fn empty_rate(&self, probe: &ProbeConfig, params: &CavityQedParams) -> f64 {
        self.efficiency * 2.0 * params.kappa * probe.nbar_empty
    }

    /// Per-bin smoothing factor of the discretised single-pole filter.
    pub fn smoothing(&self, dt: f64) -> f64 {
        1.0 - (-dt / self.time_constant()).exp()
    }

    /// RMS of the filtered, normalised level for a steady Poisson signal
    /// with `mean_counts` per bin: sqrt(alpha / (2 - alpha) / mean).
    pub fn filtered_shot_noise_rms(&self, mean_counts: f64, dt: f64) -> f64 {
        let a = self.smoothing(dt);
        (a / (2.0 - a) / mean_counts).sqrt()
    }
}

/// Poisson counts per bin with mean efficiency 2 kappa nbar |t|^2 dt.
pub fn photocurrent<R: Rng + ?Sized>(
    transmission: &[f64],
    probe: &ProbeConfig,
    chain: &DetectionChain,
    params: &CavityQedParams,
    dt: f64,
    rng: &mut R,
) -> Result<Vec<u32>> {
    chain.check_bin(dt)?;
    let rate = chain.empty_rate(probe, params) * dt;
    Ok(transmission.iter().map(|&t2| poisson(rate * t2, rng)).collect())
}

#[inline]
pub(crate) fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u32 {
    if mean <= 0.0 {
        return 0;
    }
    let d = Poisson::new(mean).expect("positive finite mean");
    let k: f64 = d.sample(rng);
    k as u32
}

/// Single-pole low-pass of the counts, normalised so the empty-cavity mean
/// (`empty_mean` counts per bin) reads 1. The filter starts settled at 1.
pub fn filter_signal(counts: &[u32], empty_mean: f64, chain: &DetectionChain, dt: f64) -> Vec<f64> {
    let mut f = LowPass::new(chain, dt, 1.0);
    counts.iter().map(|&c| f.push(c as f64 / empty_mean)).collect()
}

/// Streaming form of the single-pole filter.
#[derive(Debug, Clone, Copy)]
pub struct LowPass {
    alpha: f64,
    level: f64,
}

impl LowPass {
    pub fn new(chain: &DetectionChain, dt: f64, initial: f64) -> Self {
        LowPass {
            alpha: chain.smoothing(dt),
            level: initial,
        }
    }

    #[inline]
    pub fn push(&mut self, x: f64) -> f64 {
        self.level += self.alpha * (x - self.level);
        self.level
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    pub fn reset(&mut self, level: f64) {
        self.level = level;
    }
}

/// The discriminator firing point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    /// Time the sustain requirement was met, s.
    pub time: f64,
    /// Bin index of that time.
    pub index: usize,
    pub filtered_level: f64,
}

/// Falling-edge discriminator with sustain and hysteresis.
#[derive(Debug, Clone, Copy)]
pub struct Discriminator {
    threshold: f64,
    rearm: f64,
    sustain_bins: usize,
    armed: bool,
    below: usize,
}

impl Discriminator {
    pub fn new(chain: &DetectionChain, dt: f64) -> Self {
        let sustain = chain.sustain_time_constants * chain.time_constant();
        Discriminator {
            threshold: chain.threshold_fraction,
            rearm: chain.threshold_fraction + chain.hysteresis_fraction,
            sustain_bins: (sustain / dt).ceil().max(1.0) as usize,
            armed: true,
            below: 0,
        }
    }

    pub fn sustain_bins(&self) -> usize {
        self.sustain_bins
    }

    /// Feed one filtered sample; true when the trigger fires.
    #[inline]
    pub fn push(&mut self, level: f64) -> bool {
        if !self.armed {
            if level >= self.rearm {
                self.armed = true;
            }
            return false;
        }
        if level < self.threshold {
            self.below += 1;
            if self.below >= self.sustain_bins {
                self.armed = false;
                self.below = 0;
                return true;
            }
        } else if self.below > 0 {
            // dip too short: wait for recovery above threshold + hysteresis
            self.below = 0;
            self.armed = level >= self.rearm;
        }
        false
    }
}

/// First sustained crossing below threshold inside `[window_start, window_end)`
/// (bin indices; bin i is at `t0 + i dt`).
pub fn detect_trigger(
    filtered: &[f64],
    chain: &DetectionChain,
    dt: f64,
    t0: f64,
    window: (usize, usize),
) -> Option<Crossing> {
    let mut d = Discriminator::new(chain, dt);
    let end = window.1.min(filtered.len());
    (window.0..end).find_map(|i| {
        d.push(filtered[i]).then(|| Crossing {
            time: t0 + i as f64 * dt,
            index: i,
            filtered_level: filtered[i],
        })
    })
}
