//! Monte Carlo ensembles over the protocol and the analyses built on them:
//! survival versus hold delay with background control runs, background
//! subtraction, weighted exponential fits, the transit-duration survey and
//! the parametric-heating ensembles.
//!
//! Every trial owns a seed derived from the master seed, its stream and its
//! index, and results are collected in index order, so output does not
//! depend on the number of worker threads.

use crate::cavity::{amplitude, AtomTerm, ProbeConfig};
use crate::constants::BOLTZMANN;
use crate::detection::{poisson, DetectionChain, LowPass};
use crate::dynamics::{
    simulate_transit, simulate_trapped, AtomState, InitialDistribution, Status, Trajectory, TrapOptions, TransitOptions,
};
use crate::error::{Error, Result};
use crate::noise::{heating_time, synthesize_noise};
use crate::params::{AtomSpecies, CavityQedParams, FortConfig};
use crate::physics::{mode_value, trap_frequencies, transition_shift_at, FortField};
use crate::protocol::{run_protocol, LoadOutcome, ProtocolConfig, TriggerCause};
use crate::psd::NoisePsd;
use crate::seed;
use crate::vec3::Vec3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Delays shorter than this are generated but flagged and left out of fits.
pub const MIN_TRUSTED_DELAY: f64 = 10e-3;

/// A subtracted point is low-confidence when the background exceeds the
/// remaining signal by this factor.
pub const LOW_CONFIDENCE_RATIO: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalPoint {
    pub hold_delay: f64,
    pub p_trap: f64,
    /// sqrt(p (1 - p) / N), or the propagated error after subtraction.
    pub stderr: f64,
    /// Trials that count toward the denominator (triggered trials).
    pub trials: usize,
    pub successes: usize,
    /// Below [`MIN_TRUSTED_DELAY`].
    pub excluded: bool,
    pub low_confidence: bool,
    /// Subtraction went negative and was clipped to zero.
    pub clipped: bool,
}

impl SurvivalPoint {
    pub fn from_counts(hold_delay: f64, successes: usize, trials: usize) -> Self {
        let p = if trials > 0 {
            successes as f64 / trials as f64
        } else {
            0.0
        };
        SurvivalPoint {
            hold_delay,
            p_trap: p,
            stderr: binomial_stderr(p, trials),
            trials,
            successes,
            excluded: hold_delay < MIN_TRUSTED_DELAY,
            low_confidence: false,
            clipped: false,
        }
    }
}

pub fn binomial_stderr(p: f64, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    (p * (1.0 - p) / n as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SurvivalCurve {
    pub points: Vec<SurvivalPoint>,
    pub background_points: Vec<SurvivalPoint>,
}

impl SurvivalCurve {
    pub fn delays(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.hold_delay).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifetimeExperiment {
    pub delays: Vec<f64>,
    pub trials_per_delay: usize,
    pub protocol: ProtocolConfig,
    pub master_seed: u64,
    /// Also run the matched trap-off control.
    pub with_background: bool,
}

impl LifetimeExperiment {
    pub fn default_delays() -> Vec<f64> {
        vec![20e-3, 30e-3, 40e-3, 50e-3, 60e-3, 70e-3, 80e-3, 90e-3]
    }

    pub fn validate(&self, params: &CavityQedParams) -> Result<()> {
        if self.delays.is_empty() || self.delays.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
            return Err(Error::param("delays", "need at least one positive delay"));
        }
        if self.trials_per_delay < 50 {
            return Err(Error::param("trials_per_delay", "must be >= 50"));
        }
        self.protocol.validate(params)
    }
}

/// Per-delay tallies beyond the survival fraction.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DelayStats {
    pub hold_delay: f64,
    pub trials: usize,
    pub triggered: usize,
    pub loaded: usize,
    pub loaded_other: usize,
    pub survived_truth: usize,
    pub redetected: usize,
    pub phantom_triggers: usize,
}

impl DelayStats {
    /// Share of trap loadings in which the held atom is not the one that
    /// produced the trigger.
    pub fn phantom_fraction(&self) -> f64 {
        if self.loaded == 0 {
            return 0.0;
        }
        self.loaded_other as f64 / self.loaded as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifetimeRun {
    pub curve: SurvivalCurve,
    pub stats: Vec<DelayStats>,
    pub background_stats: Vec<DelayStats>,
}

fn tally(records: &[crate::protocol::TrialRecord], hold_delay: f64) -> DelayStats {
    let mut s = DelayStats {
        hold_delay,
        trials: records.len(),
        ..Default::default()
    };
    for r in records {
        s.triggered += r.triggered as usize;
        s.redetected += r.redetected as usize;
        s.survived_truth += r.survived_truth as usize;
        match r.loaded {
            LoadOutcome::Empty => {}
            LoadOutcome::TriggerAtom => s.loaded += 1,
            LoadOutcome::OtherAtom => {
                s.loaded += 1;
                s.loaded_other += 1;
            }
        }
        s.phantom_triggers += (r.trigger_cause() == Some(TriggerCause::Phantom)) as usize;
    }
    s
}

fn run_delay(
    cfg: &ProtocolConfig,
    params: &CavityQedParams,
    species: &AtomSpecies,
    master: u64,
    stream: u64,
    delay_index: usize,
    trials: usize,
) -> Result<Vec<crate::protocol::TrialRecord>> {
    (0..trials)
        .into_par_iter()
        .map(|i| {
            let s = seed::derive(master, stream, ((delay_index as u64) << 32) | i as u64);
            run_protocol(cfg, params, species, s)
        })
        .collect()
}

/// Signal and (optionally) trap-off background survival versus delay.
pub fn run_lifetime_experiment(
    exp: &LifetimeExperiment,
    params: &CavityQedParams,
    species: &AtomSpecies,
) -> Result<LifetimeRun> {
    exp.validate(params)?;
    let mut curve = SurvivalCurve::default();
    let mut stats = Vec::new();
    let mut background_stats = Vec::new();
    let mut bg_cfg = exp.protocol.clone();
    bg_cfg.fort.fort_on = false;
    for (k, &d) in exp.delays.iter().enumerate() {
        let mut cfg = exp.protocol.clone();
        cfg.timing.hold_delay = d;
        let recs = run_delay(&cfg, params, species, exp.master_seed, seed::stream::TRIAL, k, exp.trials_per_delay)?;
        let st = tally(&recs, d);
        curve.points.push(SurvivalPoint::from_counts(d, st.redetected, st.triggered));
        stats.push(st);
        if exp.with_background {
            bg_cfg.timing.hold_delay = d;
            let recs = run_delay(
                &bg_cfg,
                params,
                species,
                exp.master_seed,
                seed::stream::BACKGROUND,
                k,
                exp.trials_per_delay,
            )?;
            let st = tally(&recs, d);
            curve.background_points.push(SurvivalPoint::from_counts(d, st.redetected, st.triggered));
            background_stats.push(st);
        }
    }
    Ok(LifetimeRun {
        curve,
        stats,
        background_stats,
    })
}

/// Pointwise signal - background with errors in quadrature. Negative
/// results are clipped to zero and flagged; points where the background
/// dwarfs what is left are flagged low-confidence.
pub fn subtract_background(curve: &SurvivalCurve) -> Result<SurvivalCurve> {
    if curve.background_points.is_empty() {
        return Ok(SurvivalCurve {
            points: curve.points.clone(),
            background_points: Vec::new(),
        });
    }
    if curve.background_points.len() != curve.points.len()
        || curve
            .points
            .iter()
            .zip(&curve.background_points)
            .any(|(s, b)| (s.hold_delay - b.hold_delay).abs() > 1e-12 * s.hold_delay.abs().max(1e-9))
    {
        return Err(Error::MismatchedGrids);
    }
    let points = curve
        .points
        .iter()
        .zip(&curve.background_points)
        .map(|(s, b)| {
            let raw = s.p_trap - b.p_trap;
            let clipped = raw < 0.0;
            let p = raw.max(0.0);
            SurvivalPoint {
                p_trap: p,
                stderr: s.stderr.hypot(b.stderr),
                clipped,
                low_confidence: clipped || b.p_trap > LOW_CONFIDENCE_RATIO * p,
                ..*s
            }
        })
        .collect();
    Ok(SurvivalCurve {
        points,
        background_points: curve.background_points.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifetimeFit {
    pub amplitude: f64,
    pub amplitude_stderr: f64,
    pub tau: f64,
    pub tau_stderr: f64,
    /// Additive floor, when fitted.
    pub offset: Option<f64>,
    /// Decay constant of the background curve, when one was fitted.
    pub background_tau: Option<f64>,
    pub chi2: f64,
    pub chi2_dof: f64,
    /// sqrt(sum of squared weighted residuals).
    pub residual_norm: f64,
    pub residuals: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub points_used: usize,
    /// Delays left out because nothing was counted there.
    pub zero_count_delays: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FitOptions {
    /// Fit A exp(-t / tau) + C instead of A exp(-t / tau).
    pub with_offset: bool,
    /// Use points below [`MIN_TRUSTED_DELAY`] as well.
    pub include_excluded: bool,
}

const MAX_ITERATIONS: usize = 100;

/// Weighted least squares of A exp(-t / tau) by Gauss-Newton, started from a
/// log-linear fit. Weights are inverse binomial variances; a point with
/// zero error gets the error of one count.
pub fn fit_exponential(points: &[SurvivalPoint], opts: FitOptions) -> Result<LifetimeFit> {
    let mut zero_count_delays = Vec::new();
    let mut data = Vec::new();
    for p in points {
        if p.excluded && !opts.include_excluded {
            continue;
        }
        if p.p_trap <= 0.0 {
            zero_count_delays.push(p.hold_delay);
            continue;
        }
        let floor = if p.trials > 0 {
            1.0 / p.trials as f64
        } else {
            1e-6
        };
        data.push((p.hold_delay, p.p_trap, p.stderr.max(floor)));
    }
    let n_par = if opts.with_offset { 3 } else { 2 };
    let required = n_par.max(3);
    if data.len() < required {
        return Err(Error::Underdetermined {
            required,
            got: data.len(),
        });
    }

    // log-linear start: ln p = ln A - t / tau, weights (p / sigma)^2
    let (mut sw, mut st, mut sy, mut stt, mut sty) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(t, p, s) in &data {
        let w = (p / s).powi(2);
        let y = p.ln();
        sw += w;
        st += w * t;
        sy += w * y;
        stt += w * t * t;
        sty += w * t * y;
    }
    let det = sw * stt - st * st;
    let slope = if det.abs() > 0.0 {
        (sw * sty - st * sy) / det
    } else {
        0.0
    };
    let intercept = (sy - slope * st) / sw;
    let span = data.iter().map(|d| d.0).fold(f64::MIN, f64::max) - data.iter().map(|d| d.0).fold(f64::MAX, f64::min);
    let mut theta = [
        intercept.exp(),
        if slope < 0.0 { -1.0 / slope } else { 10.0 * span.max(1e-3) },
        0.0,
    ];

    let chi2_of = |th: &[f64; 3]| -> f64 {
        data.iter()
            .map(|&(t, p, s)| ((p - model(th, t)) / s).powi(2))
            .sum()
    };

    let mut chi2 = chi2_of(&theta);
    let mut converged = false;
    let mut iterations = 0;
    let mut last_step = f64::INFINITY;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let (jtj, jtr) = normal_equations(&data, &theta, n_par);
        let Some(delta) = solve(&jtj, &jtr, n_par) else {
            break;
        };
        // step halving keeps chi2 from increasing and tau positive
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let mut trial = theta;
            for k in 0..n_par {
                trial[k] += lambda * delta[k];
            }
            if trial[1] > 0.0 {
                let c = chi2_of(&trial);
                if c <= chi2 * (1.0 + 1e-12) {
                    last_step = (0..n_par)
                        .map(|k| (lambda * delta[k] / theta[k].abs().max(1e-12)).abs())
                        .fold(0.0, f64::max);
                    theta = trial;
                    chi2 = c;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted || last_step < 1e-10 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            iterations,
            last_step,
            residual: chi2.sqrt(),
        });
    }

    let (jtj, _) = normal_equations(&data, &theta, n_par);
    let cov = invert(&jtj, n_par).ok_or_else(|| Error::NoConvergence {
        iterations,
        last_step,
        residual: chi2.sqrt(),
    })?;
    let residuals: Vec<f64> = data.iter().map(|&(t, p, s)| (p - model(&theta, t)) / s).collect();
    let dof = data.len().saturating_sub(n_par).max(1) as f64;
    Ok(LifetimeFit {
        amplitude: theta[0],
        amplitude_stderr: cov[0][0].sqrt(),
        tau: theta[1],
        tau_stderr: cov[1][1].sqrt(),
        offset: opts.with_offset.then_some(theta[2]),
        background_tau: None,
        chi2,
        chi2_dof: chi2 / dof,
        residual_norm: chi2.sqrt(),
        residuals,
        converged,
        iterations,
        points_used: data.len(),
        zero_count_delays,
    })
}

#[inline]
fn model(th: &[f64; 3], t: f64) -> f64 {
    th[0] * (-t / th[1]).exp() + th[2]
}

fn normal_equations(data: &[(f64, f64, f64)], th: &[f64; 3], n: usize) -> ([[f64; 3]; 3], [f64; 3]) {
    let mut jtj = [[0.0; 3]; 3];
    let mut jtr = [0.0; 3];
    for &(t, p, s) in data {
        let e = (-t / th[1]).exp();
        let j = [e, th[0] * e * t / (th[1] * th[1]), 1.0];
        let r = p - model(th, t);
        let w = 1.0 / (s * s);
        for a in 0..n {
            jtr[a] += w * j[a] * r;
            for b in 0..n {
                jtj[a][b] += w * j[a] * j[b];
            }
        }
    }
    (jtj, jtr)
}

fn invert(m: &[[f64; 3]; 3], n: usize) -> Option<[[f64; 3]; 3]> {
    let mut inv = [[0.0; 3]; 3];
    for c in 0..n {
        let mut e = [0.0; 3];
        e[c] = 1.0;
        let col = solve(m, &e, n)?;
        for r in 0..n {
            inv[r][c] = col[r];
        }
    }
    Some(inv)
}

/// Gaussian elimination with partial pivoting on the leading n x n block.
fn solve(m: &[[f64; 3]; 3], b: &[f64; 3], n: usize) -> Option<[f64; 3]> {
    let mut a = *m;
    let mut x = *b;
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[piv][c].abs() < 1e-300 {
            return None;
        }
        a.swap(c, piv);
        x.swap(c, piv);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            x[r] -= f * x[c];
        }
    }
    for c in (0..n).rev() {
        for k in c + 1..n {
            x[c] -= a[c][k] * x[k];
        }
        x[c] /= a[c][c];
    }
    x.iter().take(n).all(|v| v.is_finite()).then_some(x)
}

/// One row of the transit survey.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitCondition {
    pub name: String,
    pub cooled: bool,
    /// Trap left on during the transit.
    pub fort: Option<FortConfig>,
    /// Hz.
    pub delta_probe: f64,
    /// Hz.
    pub delta_ac: f64,
}

impl TransitCondition {
    /// The four transit conditions: free fall; cooled; cooled with the probe
    /// 30 MHz below; cooled inside a shallow trap probed at -10 MHz.
    pub fn standard_set() -> Vec<TransitCondition> {
        vec![
            TransitCondition {
                name: "a_free_fall".into(),
                cooled: false,
                fort: None,
                delta_probe: 0.0,
                delta_ac: 0.0,
            },
            TransitCondition {
                name: "b_cooled".into(),
                cooled: true,
                fort: None,
                delta_probe: 0.0,
                delta_ac: 0.0,
            },
            TransitCondition {
                name: "c_cooled_detuned_probe".into(),
                cooled: true,
                fort: None,
                delta_probe: -30e6,
                delta_ac: 0.0,
            },
            TransitCondition {
                name: "d_cooled_shallow_trap".into(),
                cooled: true,
                fort: Some(FortConfig::shallow_profile()),
                delta_probe: -10e6,
                delta_ac: -10e6,
            },
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitSurveyConfig {
    pub trials: usize,
    pub chain: DetectionChain,
    pub nbar_empty: f64,
    /// Impact parameters are drawn inside this radius about the mode centre, m.
    pub disc_radius: f64,
    /// A run shorter than this many filter time constants is not a transit.
    pub min_run_time_constants: f64,
    /// Deviation threshold in units of the filtered shot-noise rms.
    pub sigma_threshold: f64,
    pub master_seed: u64,
}

impl TransitSurveyConfig {
    pub fn new(params: &CavityQedParams) -> Self {
        TransitSurveyConfig {
            trials: 200,
            chain: DetectionChain::default(),
            nbar_empty: ProbeConfig::default().nbar_empty,
            disc_radius: params.waist,
            min_run_time_constants: DetectionChain::default().sustain_time_constants,
            sigma_threshold: 3.0,
            master_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitStats {
    pub condition: TransitCondition,
    pub trials: usize,
    /// Detected durations, s, in trial order.
    pub durations: Vec<f64>,
    pub median: Option<f64>,
    pub detected_fraction: f64,
    /// Median time inside the e^-2 intensity envelope of the detected atoms, s.
    pub median_crossing_time: Option<f64>,
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Durations of detected transits per condition. A transit's duration is
/// the longest contiguous stretch in which the filtered level differs from
/// 1 by more than `sigma_threshold` shot-noise rms.
pub fn run_transit_survey(
    conditions: &[TransitCondition],
    cfg: &TransitSurveyConfig,
    params: &CavityQedParams,
    species: &AtomSpecies,
) -> Result<Vec<TransitStats>> {
    cfg.chain.validate()?;
    if cfg.trials == 0 {
        return Err(Error::param("trials", "must be > 0"));
    }
    conditions
        .iter()
        .enumerate()
        .map(|(ci, cond)| {
            let results: Vec<Option<(f64, f64)>> = (0..cfg.trials)
                .into_par_iter()
                .map(|i| {
                    let s = seed::derive(cfg.master_seed, seed::stream::TRANSIT, ((ci as u64) << 32) | i as u64);
                    one_transit(cond, cfg, params, species, s)
                })
                .collect::<Result<_>>()?;
            let detected: Vec<(f64, f64)> = results.into_iter().flatten().collect();
            let durations: Vec<f64> = detected.iter().map(|d| d.0).collect();
            let crossings: Vec<f64> = detected.iter().map(|d| d.1).filter(|c| *c > 0.0).collect();
            Ok(TransitStats {
                condition: cond.clone(),
                trials: cfg.trials,
                median: median(&durations),
                detected_fraction: durations.len() as f64 / cfg.trials as f64,
                median_crossing_time: median(&crossings),
                durations,
            })
        })
        .collect()
}

/// The trajectory one transit trial follows, sampled at the detector bin
/// width from three waists before closest approach to three waists after.
pub fn transit_trajectory(
    cond: &TransitCondition,
    cfg: &TransitSurveyConfig,
    params: &CavityQedParams,
    species: &AtomSpecies,
    trial_seed: u64,
) -> Result<Trajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
    Ok(transit_path(cond, cfg, params, species, &mut rng)?.0)
}

fn transit_path(
    cond: &TransitCondition,
    cfg: &TransitSurveyConfig,
    params: &CavityQedParams,
    species: &AtomSpecies,
    rng: &mut ChaCha8Rng,
) -> Result<(Trajectory, FortConfig)> {
    let dist = InitialDistribution {
        disc_radius: cfg.disc_radius,
        ..if cond.cooled {
            InitialDistribution::cooled(params, species)
        } else {
            InitialDistribution::free_fall(params)
        }
    };
    let pass = dist.sample(params, species, rng);
    // start and finish three waists from the closest approach
    let half = 3.0 * params.waist / pass.speed();
    let (pos, vel) = pass.at(-half, species.gravity);
    let start = AtomState::new(pos, vel, -half, Status::Falling);
    let fort = cond.fort.clone().unwrap_or_else(FortConfig::off);
    let traj = simulate_transit(
        &start,
        2.0 * half,
        &fort,
        params,
        species,
        &TransitOptions {
            sample_interval: cfg.chain.bin_dt,
            dt: None,
        },
    )?;
    Ok((traj, fort))
}

/// (detected duration, envelope crossing time) or `None` if not seen.
fn one_transit(
    cond: &TransitCondition,
    cfg: &TransitSurveyConfig,
    params: &CavityQedParams,
    species: &AtomSpecies,
    trial_seed: u64,
) -> Result<Option<(f64, f64)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
    let (traj, fort) = transit_path(cond, cfg, params, species, &mut rng)?;
    let dt = cfg.chain.bin_dt;

    let empty = amplitude(params, cond.delta_probe, cond.delta_ac, std::iter::empty()).norm_sqr();
    let per_bin = cfg.chain.efficiency * 2.0 * params.kappa * cfg.nbar_empty * dt;
    let empty_mean = per_bin * empty;
    let rms = cfg.chain.filtered_shot_noise_rms(empty_mean, dt);
    let band = cfg.sigma_threshold * rms;
    let l = params.cavity_length;
    let mut filter = LowPass::new(&cfg.chain, dt, 1.0);
    let (mut run, mut best) = (0usize, 0usize);
    for s in &traj.samples[1..] {
        let p = s.position;
        let t2 = if p.x > 0.0 && p.x < l {
            let term = AtomTerm {
                g: params.g0 * mode_value(p, params.n_cavity, params),
                transition_shift: transition_shift_at(p, &fort, params),
            };
            amplitude(params, cond.delta_probe, cond.delta_ac, [term]).norm_sqr()
        } else {
            empty
        };
        let y = filter.push(poisson(per_bin * t2, &mut rng) as f64 / empty_mean);
        if (y - 1.0).abs() > band {
            run += 1;
            best = best.max(run);
        } else {
            run = 0;
        }
    }
    let min_bins = (cfg.min_run_time_constants * cfg.chain.time_constant() / dt).ceil() as usize;
    let crossing = traj.transit.map_or(0.0, |t| t.crossing_time);
    Ok((best >= min_bins.max(1)).then(|| (best as f64 * dt, crossing)))
}

/// Mean energy versus time for an ensemble driven by intensity noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyGrowth {
    pub times: Vec<f64>,
    pub mean_energy: Vec<f64>,
    /// e-fold time of the mean energy from an inverse-variance weighted
    /// straight-line fit of its log, s.
    pub tau_fit: f64,
    /// 1 / (pi^2 nu^2 S(2 nu)), s.
    pub tau_analytic: f64,
    pub trials: usize,
}

/// Slope fit of ln(mean energy) against time; returns the e-fold time.
pub fn efold_time(times: &[f64], mean_energy: &[f64]) -> Result<f64> {
    efold_time_weighted(times, mean_energy, &vec![1.0; times.len()])
}

/// As [`efold_time`], with `log_variance[k]` the variance of
/// ln(mean energy) at sample k; points are weighted by its inverse.
pub fn efold_time_weighted(times: &[f64], mean_energy: &[f64], log_variance: &[f64]) -> Result<f64> {
    let n = times.len();
    if n < 3 || mean_energy.len() != n || log_variance.len() != n {
        return Err(Error::Underdetermined {
            required: 3,
            got: n.min(mean_energy.len()).min(log_variance.len()),
        });
    }
    let w: Vec<f64> = log_variance.iter().map(|v| 1.0 / v.max(1e-9)).collect();
    let sw: f64 = w.iter().sum();
    let ys: Vec<f64> = mean_energy.iter().map(|e| e.ln()).collect();
    let mt = times.iter().zip(&w).map(|(t, w)| t * w).sum::<f64>() / sw;
    let my = ys.iter().zip(&w).map(|(y, w)| y * w).sum::<f64>() / sw;
    let sxy: f64 = (0..n).map(|k| w[k] * (times[k] - mt) * (ys[k] - my)).sum();
    let sxx: f64 = (0..n).map(|k| w[k] * (times[k] - mt).powi(2)).sum();
    let slope = sxy / sxx;
    if !(slope > 0.0) {
        return Err(Error::param("mean_energy", "does not grow"));
    }
    Ok(1.0 / slope)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillatorEnsemble {
    /// Oscillation frequency, Hz.
    pub nu: f64,
    pub psd: NoisePsd,
    pub trials: usize,
    pub duration: f64,
    /// Spacing of the energy samples, s.
    pub sample_interval: f64,
    pub master_seed: u64,
}

impl OscillatorEnsemble {
    /// 200 oscillators at 450 kHz with the flat axial noise level, followed
    /// for two analytic e-fold times.
    pub fn axial_reference() -> Self {
        let psd = NoisePsd::flat(2.3e-11, 10.0, 5e6).expect("valid flat PSD");
        let nu = 450e3;
        let tau = 1.0 / (PI * PI * nu * nu * 2.3e-11);
        OscillatorEnsemble {
            nu,
            psd,
            trials: 200,
            duration: 2.0 * tau,
            sample_interval: tau / 20.0,
            master_seed: 0,
        }
    }
}

/// Harmonic oscillators x'' = -w^2 (1 + eps(t)) x, each with its own noise
/// record, integrated by velocity Verlet at 100 steps per period.
pub fn run_oscillator_ensemble(ens: &OscillatorEnsemble) -> Result<EnergyGrowth> {
    if ens.trials == 0 || !(ens.duration > 0.0) || !(ens.sample_interval > 0.0) {
        return Err(Error::param("trials", "need trials > 0 and positive durations"));
    }
    let tau_analytic = heating_time(ens.nu, &ens.psd)?.ok_or_else(|| Error::param("psd", "zero at 2 nu"))?;
    let w = 2.0 * PI * ens.nu;
    let band = 2.5 * ens.nu;
    let fs = 10.0 * band;
    let steps_per_sample = ((ens.sample_interval * ens.nu * 100.0).round() as usize).max(1);
    let dt = ens.sample_interval / steps_per_sample as f64;
    let n_samples = (ens.duration / ens.sample_interval).round() as usize;

    let energies: Vec<Vec<f64>> = (0..ens.trials)
        .into_par_iter()
        .map(|i| {
            let s = seed::derive(ens.master_seed, seed::stream::HEATING, i as u64);
            let noise = synthesize_noise(&ens.psd, ens.duration + ens.sample_interval, fs, band, s)?;
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            // unit energy at a random phase
            let phase = rng.random_range(0.0..2.0 * PI);
            let (mut x, mut v) = (phase.cos() * 2f64.sqrt() / w, phase.sin() * 2f64.sqrt());
            let energy = |x: f64, v: f64| 0.5 * v * v + 0.5 * w * w * x * x;
            let mut out = Vec::with_capacity(n_samples + 1);
            out.push(energy(x, v));
            let mut t = 0.0;
            for _ in 0..n_samples {
                for _ in 0..steps_per_sample {
                    let k = w * w * (1.0 + noise.at(t));
                    let vh = v - 0.5 * dt * k * x;
                    x += dt * vh;
                    v = vh - 0.5 * dt * k * x;
                    t += dt;
                }
                out.push(energy(x, v));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    finish_growth(energies, ens.sample_interval, tau_analytic)
}

fn finish_growth(energies: Vec<Vec<f64>>, interval: f64, tau_analytic: f64) -> Result<EnergyGrowth> {
    let trials = energies.len();
    let n = energies[0].len();
    let nf = trials as f64;
    let mean: Vec<f64> = (0..n).map(|k| energies.iter().map(|e| e[k]).sum::<f64>() / nf).collect();
    // delta method: var(ln m) = var(E) / (N m^2)
    let log_var: Vec<f64> = (0..n)
        .map(|k| {
            let var = energies.iter().map(|e| (e[k] - mean[k]).powi(2)).sum::<f64>() / (nf - 1.0).max(1.0);
            var / (nf * mean[k] * mean[k])
        })
        .collect();
    let times: Vec<f64> = (0..n).map(|k| k as f64 * interval).collect();
    let tau_fit = efold_time_weighted(&times, &mean, &log_var)?;
    Ok(EnergyGrowth {
        times,
        mean_energy: mean,
        tau_fit,
        tau_analytic,
        trials,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrappedEnsemble {
    pub fort: FortConfig,
    pub trials: usize,
    pub duration: f64,
    pub sample_interval: f64,
    /// Temperature of the initial thermal distribution at the trap bottom, K.
    pub temperature: f64,
    pub master_seed: u64,
}

impl TrappedEnsemble {
    /// Ground shift chosen so the axial frequency is 450 kHz; reconstruction PSD.
    pub fn axial_reference() -> Self {
        TrappedEnsemble {
            fort: FortConfig {
                stark_ground: -25.46e6,
                stark_excited: 25.46e6,
                ..FortConfig::lifetime_profile()
            },
            trials: 200,
            duration: 21.8e-3,
            sample_interval: 21.8e-3 / 20.0,
            temperature: 30e-6,
            master_seed: 0,
        }
    }
}

/// Atoms started thermally at the central trap bottom and integrated in
/// three dimensions under the trap's intensity noise. The energy tracked is
/// the axial energy relative to the local well bottom; an escaped atom keeps
/// the energy it escaped with.
pub fn run_trapped_ensemble(
    ens: &TrappedEnsemble,
    params: &CavityQedParams,
    species: &AtomSpecies,
) -> Result<EnergyGrowth> {
    if ens.trials == 0 || !(ens.duration > 0.0) || !(ens.sample_interval > 0.0) {
        return Err(Error::param("trials", "need trials > 0 and positive durations"));
    }
    let freqs = trap_frequencies(&ens.fort, params, species)?;
    let tau_analytic = heating_time(freqs.axial, &ens.fort.noise_psd)?
        .ok_or_else(|| Error::param("noise_psd", "zero at twice the axial frequency"))?;
    let field = FortField::new(&ens.fort, params);
    let x0 = field.nearest_antinode(params.cavity_length / 2.0);
    let m = species.mass;
    let kt = BOLTZMANN * ens.temperature;
    let wa = 2.0 * PI * freqs.axial;
    let wr = 2.0 * PI * freqs.radial;
    let band = 2.5 * freqs.axial;
    let n_samples = (ens.duration / ens.sample_interval).round() as usize;

    let energies: Vec<Vec<f64>> = (0..ens.trials)
        .into_par_iter()
        .map(|i| {
            let s = seed::derive(ens.master_seed, seed::stream::HEATING, i as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let mut g = || -> f64 { rng.sample(StandardNormal) };
            let sv = (kt / m).sqrt();
            let pos = Vec3::new(x0 + g() * sv / wa, g() * sv / wr, g() * sv / wr);
            let vel = Vec3::new(g() * sv, g() * sv, g() * sv);
            let noise = synthesize_noise(&ens.fort.noise_psd, ens.duration + ens.sample_interval, 10.0 * band, band, s)?;
            let start = AtomState::new(pos, vel, 0.0, Status::Trapped);
            let traj = simulate_trapped(
                &start,
                n_samples as f64 * ens.sample_interval,
                &ens.fort,
                &noise,
                params,
                species,
                &TrapOptions {
                    sample_interval: ens.sample_interval,
                    ..TrapOptions::default()
                },
            )?;
            let mut out = Vec::with_capacity(n_samples + 1);
            let mut k = 0;
            for j in 0..=n_samples {
                let t = j as f64 * ens.sample_interval;
                while k + 1 < traj.samples.len() && traj.samples[k + 1].time <= t + 1e-12 {
                    k += 1;
                }
                out.push(traj.samples[k].energy_axial);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    finish_growth(energies, ens.sample_interval, tau_analytic)
}
