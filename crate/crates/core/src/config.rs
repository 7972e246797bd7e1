//! Flat `key = value` configuration files and two-column PSD tables.
//!
//! Each loader starts from the defaults, overrides whatever keys the file
//! sets, and rejects any key it does not know. `#` starts a comment; lists
//! are comma-separated.

use crate::constants::hz_to_rad;
use crate::dynamics::InitialDistribution;
use crate::error::{Error, Result};
use crate::params::{AtomSpecies, CavityQedParams, FortConfig};
use crate::protocol::ProtocolConfig;
use crate::psd::NoisePsd;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
    used: bool,
}

/// Parsed `key = value` pairs of one file.
#[derive(Debug, Clone)]
pub struct KeyValues {
    source: String,
    entries: BTreeMap<String, Entry>,
}

impl KeyValues {
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Config(format!("{source}:{}: expected key = value", i + 1)));
            };
            let key = k.trim().to_string();
            if key.is_empty() {
                return Err(Error::Config(format!("{source}:{}: empty key", i + 1)));
            }
            let entry = Entry {
                value: v.trim().to_string(),
                line: i + 1,
                used: false,
            };
            if entries.insert(key.clone(), entry).is_some() {
                return Err(Error::Config(format!("{source}:{}: duplicate key `{key}`", i + 1)));
            }
        }
        Ok(KeyValues {
            source: source.to_string(),
            entries,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = read_file(path)?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    fn take(&mut self, key: &str) -> Option<(String, usize)> {
        self.entries.get_mut(key).map(|e| {
            e.used = true;
            (e.value.clone(), e.line)
        })
    }

    fn bad(&self, key: &str, line: usize, what: &str, value: &str) -> Error {
        Error::Config(format!("{}:{line}: `{key}` expects {what}, got `{value}`", self.source))
    }

    pub fn f64(&mut self, key: &str) -> Result<Option<f64>> {
        match self.take(key) {
            None => Ok(None),
            Some((v, line)) => v
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .map(Some)
                .ok_or_else(|| self.bad(key, line, "a finite number", &v)),
        }
    }

    pub fn u64(&mut self, key: &str) -> Result<Option<u64>> {
        match self.take(key) {
            None => Ok(None),
            Some((v, line)) => v.parse::<u64>().map(Some).map_err(|_| self.bad(key, line, "an unsigned integer", &v)),
        }
    }

    pub fn bool(&mut self, key: &str) -> Result<Option<bool>> {
        match self.take(key) {
            None => Ok(None),
            Some((v, line)) => match v.as_str() {
                "true" | "1" | "yes" | "on" => Ok(Some(true)),
                "false" | "0" | "no" | "off" => Ok(Some(false)),
                _ => Err(self.bad(key, line, "true or false", &v)),
            },
        }
    }

    pub fn string(&mut self, key: &str) -> Option<String> {
        self.take(key).map(|(v, _)| v)
    }

    pub fn f64_list(&mut self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.take(key) {
            None => Ok(None),
            Some((v, line)) => v
                .split(',')
                .map(|s| s.trim().parse::<f64>().ok().filter(|x| x.is_finite()))
                .collect::<Option<Vec<f64>>>()
                .filter(|l| !l.is_empty())
                .map(Some)
                .ok_or_else(|| self.bad(key, line, "a comma-separated list of numbers", &v)),
        }
    }

    /// Error on any key nobody asked for.
    pub fn finish(self) -> Result<()> {
        let unknown: Vec<String> = self
            .entries
            .iter()
            .filter(|(_, e)| !e.used)
            .map(|(k, e)| format!("`{k}` (line {})", e.line))
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!("{}: unknown keys {}", self.source, unknown.join(", "))))
        }
    }
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Path `p` from a file, taken relative to the directory of `base`.
pub fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.parent().unwrap_or(Path::new(".")).join(p)
    }
}

macro_rules! set {
    ($kv:ident . $ty:ident ( $key:literal ) => $target:expr) => {
        if let Some(v) = $kv.$ty($key)? {
            $target = v;
        }
    };
    ($kv:ident . $ty:ident ( $key:literal ) => $target:expr, $map:expr) => {
        if let Some(v) = $kv.$ty($key)? {
            $target = $map(v);
        }
    };
}

/// Cavity and atom parameters. Rates are given as ordinary frequencies.
pub fn params_from(kv: &mut KeyValues) -> Result<(CavityQedParams, AtomSpecies)> {
    let mut p = CavityQedParams::default();
    let mut s = AtomSpecies::cesium();
    set!(kv.f64("g0_over_2pi_hz") => p.g0, hz_to_rad);
    set!(kv.f64("kappa_over_2pi_hz") => p.kappa, hz_to_rad);
    set!(kv.f64("gamma_perp_over_2pi_hz") => p.gamma_perp, hz_to_rad);
    set!(kv.f64("cavity_length_m") => p.cavity_length);
    set!(kv.f64("waist_m") => p.waist);
    set!(kv.u64("n_cavity") => p.n_cavity, |v: u64| v as u32);
    set!(kv.u64("n_fort") => p.n_fort, |v: u64| v as u32);
    set!(kv.f64("lambda_atom_m") => p.lambda_atom);
    set!(kv.f64("finesse_qed") => p.finesse_qed);
    set!(kv.f64("finesse_fort") => p.finesse_fort);
    set!(kv.f64("delta_ac_hz") => p.delta_ac);
    set!(kv.f64("delta_ac_jitter_hz") => p.delta_ac_jitter);
    set!(kv.f64("atom_mass_kg") => s.mass);
    set!(kv.f64("gravity_m_s2") => s.gravity);
    if let Some(t) = kv.string("transition") {
        s.transition = t;
    }
    p.validate()?;
    s.validate()?;
    Ok((p, s))
}

pub fn load_params(path: &Path) -> Result<(CavityQedParams, AtomSpecies)> {
    let mut kv = KeyValues::read(path)?;
    let out = params_from(&mut kv)?;
    kv.finish()?;
    Ok(out)
}

/// Trap settings. `psd_file` (relative to the FORT file) replaces the
/// built-in reconstruction table.
pub fn fort_from(kv: &mut KeyValues, base: &Path) -> Result<FortConfig> {
    let mut f = FortConfig::lifetime_profile();
    set!(kv.f64("stark_ground_hz") => f.stark_ground);
    set!(kv.f64("stark_excited_hz") => f.stark_excited);
    set!(kv.f64("input_power_w") => f.input_power);
    set!(kv.f64("circulating_power_w") => f.circulating_power);
    set!(kv.f64("coupling_efficiency") => f.coupling_efficiency);
    set!(kv.f64("scattering_averaging") => f.scattering_averaging);
    set!(kv.bool("fort_on") => f.fort_on);
    if let Some(file) = kv.string("psd_file") {
        f.noise_psd = load_psd_csv(&resolve(base, &file))?;
    }
    let mut extrapolate = f.noise_psd.extrapolation_enabled();
    set!(kv.bool("psd_extrapolate") => extrapolate);
    f.noise_psd = f.noise_psd.with_extrapolation(extrapolate);
    if f.fort_on {
        f.validate()?;
    }
    Ok(f)
}

pub fn load_fort(path: &Path) -> Result<FortConfig> {
    let mut kv = KeyValues::read(path)?;
    let f = fort_from(&mut kv, path)?;
    kv.finish()?;
    Ok(f)
}

/// Two columns, frequency_hz and psd_per_hz, comma or whitespace separated.
/// A non-numeric first line is taken as a header.
pub fn parse_psd_csv(text: &str, source: &str) -> Result<NoisePsd> {
    let mut pts = Vec::new();
    let mut first = true;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        let parsed: Option<Vec<f64>> = cols.iter().map(|c| c.parse::<f64>().ok()).collect();
        match parsed {
            Some(v) if v.len() == 2 => pts.push((v[0], v[1])),
            None if first => {}
            _ => {
                return Err(Error::Config(format!(
                    "{source}:{}: expected two numeric columns (frequency_hz, psd_per_hz)",
                    i + 1
                )))
            }
        }
        first = false;
    }
    NoisePsd::tabulated(pts).map_err(|e| Error::Config(format!("{source}: {e}")))
}

pub fn load_psd_csv(path: &Path) -> Result<NoisePsd> {
    parse_psd_csv(&read_file(path)?, &path.display().to_string())
}

/// Timing, detection, probe, arrival and loading settings of the protocol.
pub fn protocol_from(
    kv: &mut KeyValues,
    params: &CavityQedParams,
    species: &AtomSpecies,
    fort: FortConfig,
) -> Result<ProtocolConfig> {
    let mut c = ProtocolConfig::new(params, species);
    c.fort = fort;
    let t = &mut c.timing;
    set!(kv.f64("t0_release_s") => t.t0_release);
    set!(kv.f64("t1_cool_on_fort_off_s") => t.t1_cool_on_fort_off);
    set!(kv.f64("t2_cool_rampdown_start_s") => t.t2_cool_rampdown_start);
    set!(kv.f64("t3_cool_end_probe_on_s") => t.t3_cool_end_probe_on);
    set!(kv.f64("trigger_window_s") => t.trigger_window);
    set!(kv.f64("hold_delay_s") => t.hold_delay);
    set!(kv.f64("detect_window_s") => t.detect_window);

    let d = &mut c.chain;
    set!(kv.f64("detection_efficiency") => d.efficiency);
    set!(kv.f64("detection_bandwidth_hz") => d.bandwidth);
    set!(kv.f64("bin_dt_s") => d.bin_dt);
    set!(kv.f64("threshold_fraction") => d.threshold_fraction);
    set!(kv.f64("hysteresis_fraction") => d.hysteresis_fraction);
    set!(kv.f64("sustain_time_constants") => d.sustain_time_constants);

    set!(kv.f64("delta_probe_hz") => c.probe.delta_probe);
    set!(kv.f64("nbar_empty") => c.probe.nbar_empty);

    let a = &mut c.arrivals;
    set!(kv.f64("mean_atoms") => a.mean_atoms);
    set!(kv.f64("background_decay_s") => a.background_decay);
    set!(kv.f64("arrival_lead_time_s") => a.lead_time);
    distribution_keys(kv, &mut a.distribution)?;

    set!(kv.f64("trap_radius_m") => c.knobs.trap_radius);
    set!(kv.f64("trap_efficiency") => c.knobs.trap_efficiency);
    set!(kv.f64("redetect_efficiency") => c.knobs.redetect_efficiency);
    set!(kv.bool("intensity_noise") => c.intensity_noise);
    set!(kv.f64("background_gas_lifetime_s") => c.background_gas_lifetime);
    set!(kv.bool("probe_during_hold") => c.variant.probe_during_hold);
    if let Some(o) = kv.f64("asynchronous_offset_s")? {
        c.variant.asynchronous_offset = Some(o);
    }
    if let Some(dt) = kv.f64("trap_dt_s")? {
        c.trap_options.dt = Some(dt);
    }
    set!(kv.bool("gravity") => c.trap_options.gravity);
    c.validate(params)?;
    Ok(c)
}

fn distribution_keys(kv: &mut KeyValues, d: &mut InitialDistribution) -> Result<()> {
    set!(kv.f64("drop_height_m") => d.drop_height);
    set!(kv.f64("post_cooling_speed_m_s") => d.post_cooling_speed_mean);
    set!(kv.f64("speed_spread_m_s") => d.speed_spread);
    set!(kv.f64("disc_radius_m") => d.disc_radius);
    set!(kv.bool("cooled") => d.cooled);
    Ok(())
}

pub fn load_protocol(
    path: &Path,
    params: &CavityQedParams,
    species: &AtomSpecies,
    fort: FortConfig,
) -> Result<ProtocolConfig> {
    let mut kv = KeyValues::read(path)?;
    let c = protocol_from(&mut kv, params, species, fort)?;
    kv.finish()?;
    Ok(c)
}

/// Lifetime-experiment settings: the delay grid and ensemble sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentFile {
    pub delays: Vec<f64>,
    pub trials_per_delay: usize,
    pub with_background: bool,
    /// Short delays for the trap-off decay measurement.
    pub background_decay_delays: Vec<f64>,
    pub fit_offset: bool,
    pub transit_trials: usize,
    pub heating_trials: usize,
}

impl Default for ExperimentFile {
    fn default() -> Self {
        ExperimentFile {
            delays: crate::harness::LifetimeExperiment::default_delays(),
            trials_per_delay: 200,
            with_background: true,
            background_decay_delays: vec![0.5e-3, 1e-3, 2e-3, 3e-3, 4e-3, 6e-3, 8e-3],
            fit_offset: false,
            transit_trials: 200,
            heating_trials: 200,
        }
    }
}

pub fn experiment_from(kv: &mut KeyValues) -> Result<ExperimentFile> {
    let mut e = ExperimentFile::default();
    set!(kv.f64_list("delays_s") => e.delays);
    set!(kv.u64("trials_per_delay") => e.trials_per_delay, |v: u64| v as usize);
    set!(kv.bool("with_background") => e.with_background);
    set!(kv.f64_list("background_decay_delays_s") => e.background_decay_delays);
    set!(kv.bool("fit_offset") => e.fit_offset);
    set!(kv.u64("transit_trials") => e.transit_trials, |v: u64| v as usize);
    set!(kv.u64("heating_trials") => e.heating_trials, |v: u64| v as usize);
    if e.delays.iter().any(|d| !(*d > 0.0)) {
        return Err(Error::Config(format!("{}: delays_s must be positive", kv.source())));
    }
    Ok(e)
}

pub fn load_experiment(path: &Path) -> Result<ExperimentFile> {
    let mut kv = KeyValues::read(path)?;
    let e = experiment_from(&mut kv)?;
    kv.finish()?;
    Ok(e)
}
