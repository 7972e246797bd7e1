//! The release / cool / trigger / hold / redetect sequence for one trial.
//!
//! A trial draws a Poisson stream of cooled atoms passing through the mode,
//! watches the filtered probe transmission for a falling edge, gates the
//! trap on at the trigger, holds for the configured delay under intensity
//! noise, then switches the probe back on and looks for the atom again.

use crate::cavity::{amplitude, AtomTerm, ProbeConfig};
use crate::detection::{poisson, DetectionChain, Discriminator, LowPass};
use crate::dynamics::{
    is_bound, load_into_trap, simulate_trapped, AtomState, InitialDistribution, Passage, Status, TrapOptions,
};
use crate::error::{Error, Result};
use crate::noise::{synthesize_noise, NoiseSeries};
use crate::params::{AtomSpecies, CavityQedParams, FortConfig};
use crate::physics::{mode_value, trap_frequencies, transition_shift_at};
use crate::seed;
use crate::vec3::Vec3;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

/// Event times of one trial, s. `t4` is set by the trigger, so only the
/// offsets after it are fixed here.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingSequence {
    pub t0_release: f64,
    pub t1_cool_on_fort_off: f64,
    pub t2_cool_rampdown_start: f64,
    pub t3_cool_end_probe_on: f64,
    /// Length of the armed window that starts at t3.
    pub trigger_window: f64,
    /// t5 - t4.
    pub hold_delay: f64,
    /// t6 - t5: how long the probe looks for the held atom.
    pub detect_window: f64,
}

impl Default for TimingSequence {
    fn default() -> Self {
        TimingSequence {
            t0_release: 0.0,
            t1_cool_on_fort_off: 34e-3,
            t2_cool_rampdown_start: 35e-3,
            t3_cool_end_probe_on: 35.5e-3,
            trigger_window: 3e-3,
            hold_delay: 20e-3,
            detect_window: 0.25e-3,
        }
    }
}

impl TimingSequence {
    pub fn validate(&self) -> Result<()> {
        let t = [
            self.t0_release,
            self.t1_cool_on_fort_off,
            self.t2_cool_rampdown_start,
            self.t3_cool_end_probe_on,
        ];
        if t.iter().any(|v| !v.is_finite()) || t.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidTiming(format!(
                "t0..t3 must be strictly increasing, got {t:?}"
            )));
        }
        if !(self.trigger_window > 0.0) {
            return Err(Error::InvalidTiming("trigger_window must be > 0".into()));
        }
        if !(self.hold_delay >= 0.0) {
            return Err(Error::InvalidTiming("hold_delay must be >= 0".into()));
        }
        if !(self.detect_window > 0.0) {
            return Err(Error::InvalidTiming("detect_window must be > 0".into()));
        }
        Ok(())
    }

    pub fn window_end(&self) -> f64 {
        self.t3_cool_end_probe_on + self.trigger_window
    }

    /// Latest time any trial can reach.
    pub fn horizon(&self) -> f64 {
        self.window_end() + self.hold_delay + self.detect_window
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    PreRelease,
    Falling,
    Cooling,
    Armed,
    FortHold,
    Detect,
    Done,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::PreRelease => "pre_release",
            Phase::Falling => "falling",
            Phase::Cooling => "cooling",
            Phase::Armed => "armed",
            Phase::FortHold => "fort_hold",
            Phase::Detect => "detect",
            Phase::Done => "done",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolState {
    pub phase: Phase,
    pub probe_on: bool,
    pub fort_on: bool,
    pub cooling_on: bool,
}

impl ProtocolState {
    fn enter(phase: Phase, variant: &Variant, fort_available: bool) -> Self {
        let (probe_on, fort_on, cooling_on) = match phase {
            Phase::PreRelease | Phase::Falling | Phase::Done => (false, false, false),
            Phase::Cooling => (false, false, true),
            Phase::Armed | Phase::Detect => (true, false, false),
            Phase::FortHold => (variant.probe_during_hold, fort_available, false),
        };
        ProtocolState {
            phase,
            probe_on,
            fort_on,
            cooling_on,
        }
    }
}

/// One line of the event log: the state entered at `time`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolEvent {
    pub time: f64,
    pub label: String,
    #[serde(flatten)]
    pub state: ProtocolState,
    /// Filtered transmission at the event, when the probe was running.
    pub filtered_level: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerCause {
    RealAtom,
    Phantom,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriggerEvent {
    pub time: f64,
    pub filtered_level: f64,
    pub cause: TriggerCause,
}

/// Which atom, if any, the trap caught when it switched on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadOutcome {
    Empty,
    TriggerAtom,
    OtherAtom,
}

/// One atom of the arrival stream: it passes closest to the mode axis at
/// `time` along `passage`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arrival {
    pub time: f64,
    pub passage: Passage,
}

/// Atoms reaching the mode. The mean number inside the waist at t3 is
/// `mean_atoms`; before t3 they arrive at a constant rate, after t3 the
/// rate decays with `background_decay` (stragglers held back by the cooling
/// light).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalModel {
    pub distribution: InitialDistribution,
    pub mean_atoms: f64,
    pub background_decay: f64,
    /// How far before t3 the stream starts, s.
    pub lead_time: f64,
    /// Extra atoms always present, in addition to the Poisson stream.
    pub injected: Vec<Arrival>,
}

impl ArrivalModel {
    pub fn cooled(params: &CavityQedParams, species: &AtomSpecies) -> Self {
        ArrivalModel {
            distribution: InitialDistribution {
                disc_radius: 2.0 * params.waist,
                ..InitialDistribution::cooled(params, species)
            },
            mean_atoms: 0.5,
            background_decay: 3e-3,
            lead_time: 5e-3,
            injected: Vec::new(),
        }
    }

    pub fn validate(&self, params: &CavityQedParams) -> Result<()> {
        self.distribution.validate(params)?;
        if !(self.mean_atoms >= 0.0 && self.mean_atoms.is_finite()) {
            return Err(Error::param("mean_atoms", "must be >= 0"));
        }
        if !(self.background_decay > 0.0) {
            return Err(Error::param("background_decay", "must be > 0"));
        }
        if !(self.lead_time >= 0.0) {
            return Err(Error::param("lead_time", "must be >= 0"));
        }
        Ok(())
    }

    /// Arrival rate before t3, 1/s.
    pub fn base_rate(&self, params: &CavityQedParams, species: &AtomSpecies) -> f64 {
        if self.mean_atoms == 0.0 {
            return 0.0;
        }
        self.mean_atoms / self.distribution.mean_dwell(params, species)
    }

    /// Draw the stream over [t3 - lead_time, t_end].
    pub fn sample<R: Rng + ?Sized>(
        &self,
        t3: f64,
        t_end: f64,
        params: &CavityQedParams,
        species: &AtomSpecies,
        rng: &mut R,
    ) -> Vec<Arrival> {
        let mut out = self.injected.clone();
        let r0 = self.base_rate(params, species);
        if r0 == 0.0 {
            return out;
        }
        let mut times = Vec::new();
        let n_lead = poisson(r0 * self.lead_time, rng);
        for _ in 0..n_lead {
            times.push(t3 - self.lead_time * rng.random::<f64>());
        }
        // after t3 the rate is r0 exp(-(t - t3) / tau): invert the cumulative
        let tau = self.background_decay;
        let span = (t_end - t3).max(0.0);
        let mass = 1.0 - (-span / tau).exp();
        let n_late = poisson(r0 * tau * mass, rng);
        for _ in 0..n_late {
            let u: f64 = rng.random();
            times.push(t3 - tau * (1.0 - u * mass).ln());
        }
        times.sort_by(f64::total_cmp);
        out.extend(times.into_iter().map(|time| Arrival {
            time,
            passage: self.distribution.sample(params, species, rng),
        }));
        out
    }
}

/// Knobs on the loading and redetection steps. Both efficiencies scale
/// the emergent probabilities by an independent Bernoulli draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadingKnobs {
    /// Atoms farther than this from the mode axis at t4 cannot be caught, m.
    pub trap_radius: f64,
    pub trap_efficiency: f64,
    pub redetect_efficiency: f64,
}

impl LoadingKnobs {
    pub fn new(params: &CavityQedParams) -> Self {
        LoadingKnobs {
            trap_radius: 1.5 * params.waist,
            trap_efficiency: 1.0,
            redetect_efficiency: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.trap_radius > 0.0) {
            return Err(Error::param("trap_radius", "must be > 0"));
        }
        for (name, v) in [
            ("trap_efficiency", self.trap_efficiency),
            ("redetect_efficiency", self.redetect_efficiency),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::param(name, "must be in [0, 1]"));
            }
        }
        Ok(())
    }
}

/// Departures from the triggered sequence.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Variant {
    /// Keep the probe running while the trap is on.
    pub probe_during_hold: bool,
    /// Gate the trap on at t3 + offset without waiting for a trigger.
    pub asynchronous_offset: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub timing: TimingSequence,
    pub arrivals: ArrivalModel,
    pub chain: DetectionChain,
    pub fort: FortConfig,
    pub probe: ProbeConfig,
    pub knobs: LoadingKnobs,
    pub variant: Variant,
    /// Apply the trap's intensity noise during the hold.
    pub intensity_noise: bool,
    /// Lifetime against background-gas collisions, s.
    pub background_gas_lifetime: f64,
    /// Keep the filtered level of every probe bin in the record.
    pub record_trace: bool,
    pub trap_options: TrapOptions,
}

impl ProtocolConfig {
    pub fn new(params: &CavityQedParams, species: &AtomSpecies) -> Self {
        ProtocolConfig {
            timing: TimingSequence::default(),
            arrivals: ArrivalModel::cooled(params, species),
            chain: DetectionChain::default(),
            fort: FortConfig::lifetime_profile(),
            probe: ProbeConfig::default(),
            knobs: LoadingKnobs::new(params),
            variant: Variant::default(),
            intensity_noise: true,
            background_gas_lifetime: 100.0,
            record_trace: false,
            trap_options: TrapOptions::default(),
        }
    }

    pub fn validate(&self, params: &CavityQedParams) -> Result<()> {
        self.timing.validate()?;
        self.arrivals.validate(params)?;
        self.chain.validate()?;
        self.probe.validate()?;
        self.knobs.validate()?;
        if self.fort.fort_on {
            self.fort.validate()?;
        }
        if let Some(off) = self.variant.asynchronous_offset {
            if !(off >= 0.0 && off < self.timing.trigger_window) {
                return Err(Error::InvalidTiming(
                    "asynchronous_offset must lie inside the trigger window".into(),
                ));
            }
        }
        if !(self.background_gas_lifetime > 0.0) {
            return Err(Error::param("background_gas_lifetime", "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub time: f64,
    pub filtered_level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub seed: u64,
    pub hold_delay: f64,
    /// The trap was gated on (by a trigger, or on schedule when asynchronous).
    pub triggered: bool,
    pub trigger: Option<TriggerEvent>,
    pub loaded: LoadOutcome,
    pub survived_truth: bool,
    pub redetected: bool,
    /// Time after the trap switched on at which the held atom was lost, s.
    pub escape_time: Option<f64>,
    pub atoms_injected: usize,
    /// Atoms bound by the trap at the moment it switched on.
    pub trappable_atoms: usize,
    pub events: Vec<ProtocolEvent>,
    pub trace: Vec<TraceSample>,
}

impl TrialRecord {
    pub fn trigger_cause(&self) -> Option<TriggerCause> {
        self.trigger.map(|t| t.cause)
    }
}

/// An atom's whereabouts for the transmission sum.
#[derive(Debug, Clone, Copy)]
enum Track {
    Ballistic { t_ref: f64, passage: Passage },
    Gone,
}

impl Track {
    #[inline]
    fn position(&self, t: f64, gravity: f64) -> Option<Vec3> {
        match self {
            Track::Ballistic { t_ref, passage } => Some(passage.at(t - t_ref, gravity).0),
            Track::Gone => None,
        }
    }

    fn state(&self, t: f64, gravity: f64) -> Option<(Vec3, Vec3)> {
        match self {
            Track::Ballistic { t_ref, passage } => Some(passage.at(t - t_ref, gravity)),
            Track::Gone => None,
        }
    }
}

/// Probe, counting and discriminator state shared across the probe-on
/// intervals of a trial.
struct Probe<'a> {
    params: &'a CavityQedParams,
    cfg: &'a ProtocolConfig,
    delta_ac: f64,
    dt: f64,
    counts_per_bin: f64,
    empty_mean: f64,
    rho_cut_sq: f64,
    filter: LowPass,
    trace: Vec<TraceSample>,
}

impl<'a> Probe<'a> {
    fn new(params: &'a CavityQedParams, cfg: &'a ProtocolConfig, delta_ac: f64) -> Self {
        let dt = cfg.chain.bin_dt;
        let counts_per_bin = cfg.chain.empty_rate(&cfg.probe, params) * dt;
        let empty = amplitude(params, cfg.probe.delta_probe, delta_ac, std::iter::empty()).norm_sqr();
        Probe {
            params,
            cfg,
            delta_ac,
            dt,
            counts_per_bin,
            empty_mean: counts_per_bin * empty,
            rho_cut_sq: 16.0 * params.waist * params.waist,
            filter: LowPass::new(&cfg.chain, dt, 1.0),
            trace: Vec::new(),
        }
    }

    /// |t|^2 with every atom in `positions`; `fort` sets the light shifts.
    #[inline]
    fn transmission(&self, positions: impl Iterator<Item = Vec3>, fort: &FortConfig) -> f64 {
        let l = self.params.cavity_length;
        let terms = positions
            .filter(|p| p.x > 0.0 && p.x < l && p.rho_sq() < self.rho_cut_sq)
            .map(|p| AtomTerm {
                g: self.params.g0 * mode_value(p, self.params.n_cavity, self.params),
                transition_shift: transition_shift_at(p, fort, self.params),
            });
        amplitude(self.params, self.cfg.probe.delta_probe, self.delta_ac, terms).norm_sqr()
    }

    /// Count one bin and return the filtered level.
    #[inline]
    fn bin<R: Rng + ?Sized>(&mut self, t: f64, t_abs2: f64, rng: &mut R) -> f64 {
        let c = poisson(self.counts_per_bin * t_abs2, rng);
        let y = self.filter.push(c as f64 / self.empty_mean);
        if self.cfg.record_trace {
            self.trace.push(TraceSample {
                time: t,
                filtered_level: y,
            });
        }
        y
    }
}

/// Run one trial with its own RNG seeded from `seed`.
pub fn run_protocol(
    cfg: &ProtocolConfig,
    params: &CavityQedParams,
    species: &AtomSpecies,
    seed: u64,
) -> Result<TrialRecord> {
    cfg.validate(params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let timing = &cfg.timing;
    let gravity = species.gravity;
    let variant = cfg.variant;

    let delta_ac = if params.delta_ac_jitter > 0.0 {
        params.delta_ac + params.delta_ac_jitter * rng.random_range(-1.0..1.0)
    } else {
        params.delta_ac
    };

    let t3 = timing.t3_cool_end_probe_on;
    let arrivals = cfg
        .arrivals
        .sample(t3, timing.horizon(), params, species, &mut rng);
    let mut tracks: Vec<Track> = arrivals
        .iter()
        .map(|a| Track::Ballistic {
            t_ref: a.time,
            passage: a.passage,
        })
        .collect();

    let mut events = Vec::new();
    let log = |events: &mut Vec<ProtocolEvent>, time: f64, label: &str, phase: Phase, level: Option<f64>| {
        events.push(ProtocolEvent {
            time,
            label: label.to_string(),
            state: ProtocolState::enter(phase, &variant, cfg.fort.fort_on),
            filtered_level: level,
        });
    };
    log(&mut events, timing.t0_release, "release", Phase::Falling, None);
    log(&mut events, timing.t1_cool_on_fort_off, "cooling_on", Phase::Cooling, None);
    log(&mut events, timing.t2_cool_rampdown_start, "cooling_rampdown", Phase::Cooling, None);
    log(&mut events, t3, "probe_on", Phase::Armed, Some(1.0));

    // armed window: probe on, trap off
    let off = FortConfig {
        fort_on: false,
        ..cfg.fort.clone()
    };
    let mut probe = Probe::new(params, cfg, delta_ac);
    let dt = probe.dt;
    let window_bins = (timing.trigger_window / dt).round() as usize;
    let stop_bin = match variant.asynchronous_offset {
        Some(o) => (o / dt).round() as usize,
        None => window_bins,
    };
    let mut disc = Discriminator::new(&cfg.chain, dt);
    let mut fired: Option<(f64, f64)> = None;
    for i in 1..=stop_bin {
        let t = t3 + i as f64 * dt;
        let t2 = probe.transmission(tracks.iter().filter_map(|tr| tr.position(t, gravity)), &off);
        let y = probe.bin(t, t2, &mut rng);
        if variant.asynchronous_offset.is_none() && disc.push(y) {
            fired = Some((t, y));
            break;
        }
    }
    let gate = match variant.asynchronous_offset {
        Some(_) => Some((t3 + stop_bin as f64 * dt, probe.filter.level())),
        None => fired,
    };
    let Some((t4, level4)) = gate else {
        log(&mut events, timing.window_end(), "window_closed", Phase::Done, None);
        return Ok(TrialRecord {
            seed,
            hold_delay: timing.hold_delay,
            triggered: false,
            trigger: None,
            loaded: LoadOutcome::Empty,
            survived_truth: false,
            redetected: false,
            escape_time: None,
            atoms_injected: arrivals.len(),
            trappable_atoms: 0,
            events,
            trace: probe.trace,
        });
    };
    log(&mut events, t4, "fort_on", Phase::FortHold, Some(level4));

    // who caused the dip, and who can be caught
    let states: Vec<Option<(Vec3, Vec3)>> = tracks.iter().map(|tr| tr.state(t4, gravity)).collect();
    let l = params.cavity_length;
    let coupling_sq = |p: Vec3| {
        if p.x > 0.0 && p.x < l {
            mode_value(p, params.n_cavity, params).powi(2)
        } else {
            0.0
        }
    };
    let trigger_atom = states
        .iter()
        .enumerate()
        .filter_map(|(i, s)| s.map(|(p, _)| (i, coupling_sq(p))))
        .filter(|&(_, c)| c > 0.0)
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .filter(|&(_, c)| single_atom_dip(params, cfg, delta_ac, c) < cfg.chain.threshold_fraction)
        .map(|(i, _)| i);

    let trap_r_sq = cfg.knobs.trap_radius * cfg.knobs.trap_radius;
    let trappable = |i: usize| -> Option<AtomState> {
        let (p, v) = states[i]?;
        let st = AtomState::new(p, v, t4, Status::InMode);
        (p.rho_sq() <= trap_r_sq && is_bound(&st, &cfg.fort, params, species)).then_some(st)
    };
    let mut candidates: Vec<(usize, AtomState)> = (0..states.len())
        .filter_map(|i| trappable(i).map(|s| (i, s)))
        .collect();
    let trappable_atoms = candidates.len();
    // the trap efficiency knob removes candidates independently
    candidates.retain(|_| rng.random::<f64>() < cfg.knobs.trap_efficiency);

    // every bound atom is caught; the one held at the end is equally likely
    // to be any of them
    let chosen = (!candidates.is_empty()).then(|| {
        let c = candidates[rng.random_range(0..candidates.len())];
        let outcome = if Some(c.0) == trigger_atom {
            LoadOutcome::TriggerAtom
        } else {
            LoadOutcome::OtherAtom
        };
        (c.0, c.1, outcome)
    });
    let loaded = chosen.map_or(LoadOutcome::Empty, |c| c.2);
    let cause = match (loaded, trigger_atom) {
        (LoadOutcome::TriggerAtom, _) => TriggerCause::RealAtom,
        (LoadOutcome::OtherAtom, _) => TriggerCause::Phantom,
        (LoadOutcome::Empty, Some(_)) => TriggerCause::RealAtom,
        (LoadOutcome::Empty, None) => TriggerCause::Phantom,
    };
    let trigger = variant.asynchronous_offset.is_none().then_some(TriggerEvent {
        time: t4,
        filtered_level: level4,
        cause,
    });

    // hold
    let hold = timing.hold_delay;
    let t5 = t4 + hold;
    let mut survived = false;
    let mut escape_time = None;
    let mut held_path: Vec<AtomState> = Vec::new();
    if let Some((idx, state, _)) = chosen {
        let trapped = load_into_trap(&state, &cfg.fort, params, species);
        let noise = hold_noise(cfg, params, species, hold, seed)?;
        let opts = TrapOptions {
            sample_interval: if variant.probe_during_hold { dt } else { 0.0 },
            ..cfg.trap_options
        };
        let traj = simulate_trapped(&trapped, hold, &cfg.fort, &noise, params, species, &opts)?;
        let collision = Exp::new(1.0 / cfg.background_gas_lifetime)
            .expect("positive rate")
            .sample(&mut rng);
        escape_time = match traj.escape_time {
            Some(t) => Some((t - t4).min(collision)),
            None if collision < hold => Some(collision),
            None => None,
        };
        survived = escape_time.is_none();
        let end = *traj.final_state();
        tracks[idx] = if survived {
            Track::Ballistic {
                t_ref: t5,
                passage: Passage {
                    closest: end.position,
                    velocity: end.velocity,
                },
            }
        } else {
            Track::Gone
        };
        held_path = traj.samples;
    }

    if variant.probe_during_hold {
        let held = chosen.map(|c| c.0);
        let mut k = 0;
        let n = (hold / dt).round() as usize;
        for i in 1..=n {
            let t = t4 + i as f64 * dt;
            while k + 1 < held_path.len() && held_path[k + 1].time <= t {
                k += 1;
            }
            let held_pos = (!held_path.is_empty() && escape_time.map_or(true, |e| t - t4 < e))
                .then(|| held_path[k].position);
            let others = tracks
                .iter()
                .enumerate()
                .filter(|&(j, _)| Some(j) != held)
                .filter_map(|(_, tr)| tr.position(t, gravity));
            let t2 = probe.transmission(others.chain(held_pos), &cfg.fort);
            probe.bin(t, t2, &mut rng);
        }
    }

    let t6 = t5 + timing.detect_window;
    log(&mut events, t5, "probe_on", Phase::Detect, None);

    // detection: the probe restarts and the filter starts from the empty level
    if !variant.probe_during_hold {
        probe.filter.reset(1.0);
    }
    let mut disc = Discriminator::new(&cfg.chain, dt);
    let mut seen = false;
    let n = (timing.detect_window / dt).round() as usize;
    for i in 1..=n {
        let t = t5 + i as f64 * dt;
        let t2 = probe.transmission(tracks.iter().filter_map(|tr| tr.position(t, gravity)), &off);
        let y = probe.bin(t, t2, &mut rng);
        if disc.push(y) {
            seen = true;
            break;
        }
    }
    let redetected = seen && rng.random::<f64>() < cfg.knobs.redetect_efficiency;
    log(&mut events, t6, "done", Phase::Done, None);

    Ok(TrialRecord {
        seed,
        hold_delay: hold,
        triggered: true,
        trigger,
        loaded,
        survived_truth: survived,
        redetected,
        escape_time,
        atoms_injected: arrivals.len(),
        trappable_atoms,
        events,
        trace: probe.trace,
    })
}

/// Steady single-atom |t|^2 for a relative coupling `g2_rel = (g / g0)^2`
/// with the trap off.
fn single_atom_dip(params: &CavityQedParams, cfg: &ProtocolConfig, delta_ac: f64, g2_rel: f64) -> f64 {
    let term = AtomTerm {
        g: params.g0 * g2_rel.sqrt(),
        transition_shift: 0.0,
    };
    let t2 = amplitude(params, cfg.probe.delta_probe, delta_ac, [term]).norm_sqr();
    let empty = amplitude(params, cfg.probe.delta_probe, delta_ac, std::iter::empty()).norm_sqr();
    t2 / empty
}

/// Intensity noise for a hold of `duration`, covering twice the axial
/// frequency with margin.
pub(crate) fn hold_noise(
    cfg: &ProtocolConfig,
    params: &CavityQedParams,
    species: &AtomSpecies,
    duration: f64,
    trial_seed: u64,
) -> Result<NoiseSeries> {
    let nu = trap_frequencies(&cfg.fort, params, species)?.axial;
    let band = 2.5 * nu;
    let fs = 10.0 * band;
    if !cfg.intensity_noise || duration == 0.0 {
        return Ok(NoiseSeries::silent(duration, fs));
    }
    synthesize_noise(
        &cfg.fort.noise_psd,
        duration,
        fs,
        band,
        seed::derive(trial_seed, seed::stream::NOISE, 0),
    )
}
