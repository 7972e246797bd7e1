use crate::output::{document, extension, Provenance, Sink, Table};
use crate::run::{Format, RunConfig, Setup};
use crate::{Command, GlobalOpts};
use clap::Args;
use cqed_fort::cavity::{spectrum_scan, AtomCoupling, DetuningRange};
use cqed_fort::constants::rad_to_hz;
use cqed_fort::harness::{
    fit_exponential, run_lifetime_experiment, run_transit_survey, subtract_background, transit_trajectory,
    FitOptions, LifetimeExperiment, TransitCondition, TransitSurveyConfig,
};
use cqed_fort::noise::heating_estimate;
use cqed_fort::physics::{
    cavity_buildup, critical_numbers, free_fall_velocity, scattering_rate, trap_frequencies, TrapFrequencies,
};
use cqed_fort::protocol::{run_protocol, LoadOutcome, TriggerCause};
use cqed_fort::seed::{self, stream};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use std::fmt;

#[derive(Debug)]
pub enum CliError {
    Sim(cqed_fort::Error),
    Io(std::io::Error),
    Usage(String),
}

impl CliError {
    /// 2 for bad input (files, keys, flags), 1 for failures of the physics.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Sim(e) if e.is_config() => 2,
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Sim(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "writing output: {e}"),
            CliError::Usage(m) => write!(f, "{m}"),
        }
    }
}

impl From<cqed_fort::Error> for CliError {
    fn from(e: cqed_fort::Error) -> Self {
        CliError::Sim(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Args, Debug, Clone, Serialize)]
pub struct SpectrumOpts {
    /// First probe detuning, Hz.
    #[arg(long, default_value_t = -80e6, allow_negative_numbers = true)]
    start_hz: f64,
    /// Last probe detuning, Hz.
    #[arg(long, default_value_t = 80e6, allow_negative_numbers = true)]
    stop_hz: f64,
    #[arg(long, default_value_t = 641)]
    points: usize,
    /// Scan the empty cavity instead of one atom at g = g0.
    #[arg(long)]
    empty: bool,
    /// Apply the trap's light shift to the atom.
    #[arg(long)]
    fort_on: bool,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct TransitOpts {
    /// Condition whose trajectory is written: a_free_fall, b_cooled,
    /// c_cooled_detuned_probe or d_cooled_shallow_trap.
    #[arg(long, default_value = "b_cooled")]
    condition: String,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct HeatingOpts {
    /// Radial frequency for the nominal estimate, Hz.
    #[arg(long, default_value_t = 5e3)]
    nu_radial_hz: f64,
    /// Axial frequency for the nominal estimate, Hz.
    #[arg(long, default_value_t = 450e3)]
    nu_axial_hz: f64,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ProtocolOpts {
    /// Include the filtered probe level of every bin in the trial record.
    #[arg(long)]
    trace: bool,
}

pub fn dispatch(cmd: &Command, g: &GlobalOpts) -> Result<()> {
    let mut rc = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = g.seed {
        rc.master_seed = s;
    }
    if let Some(o) = &g.out {
        rc.out_dir = Some(o.clone());
    }
    if let Some(f) = g.format {
        rc.format = f;
    }
    if g.trials == Some(0) {
        return Err(CliError::Usage("--trials must be at least 1".into()));
    }
    let setup = Setup::load(&rc)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(g.threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    let ctx = Ctx {
        rc: &rc,
        setup: &setup,
        trials: g.trials,
        sink: Sink {
            dir: rc.out_dir.as_deref(),
        },
    };
    pool.install(|| match cmd {
        Command::Spectrum(o) => spectrum(&ctx, o),
        Command::Transit(o) => transit(&ctx, o),
        Command::Heating(o) => heating(&ctx, o),
        Command::Protocol(o) => protocol(&ctx, o),
        Command::Lifetime => lifetime(&ctx),
        Command::Params => params(&ctx),
    })
}

struct Ctx<'a> {
    rc: &'a RunConfig,
    setup: &'a Setup,
    trials: Option<usize>,
    sink: Sink<'a>,
}

impl Ctx<'_> {
    fn provenance(&self, command: &str, options: &impl Serialize) -> Provenance {
        let effective = json!({
            "setup": self.setup,
            "options": options,
            "trials": self.trials,
        });
        Provenance::new(command, self.rc.master_seed, &effective)
    }

    fn format(&self) -> Format {
        self.rc.format
    }

    fn table_name(&self, stem: &str) -> String {
        format!("{stem}.{}", extension(self.format()))
    }
}

fn num(x: f64) -> Value {
    json!(x)
}

fn spectrum(ctx: &Ctx, o: &SpectrumOpts) -> Result<()> {
    let s = ctx.setup;
    let mut fort = s.fort.clone();
    fort.fort_on = o.fort_on;
    let coupling = if o.empty {
        AtomCoupling::Empty
    } else {
        AtomCoupling::Fixed {
            g: s.params.g0,
            transition_shift: fort.transition_shift(),
        }
    };
    let range = DetuningRange {
        start: o.start_hz,
        stop: o.stop_hz,
        points: o.points,
    };
    let scan = spectrum_scan(range, coupling, &fort, &s.params)?;
    let mut t = Table::new(&["delta_probe_hz", "t_re", "t_im", "t_abs2"]);
    for p in &scan {
        t.push(vec![num(p.delta_probe), num(p.t.re), num(p.t.im), num(p.t_abs2)]);
    }
    let prov = ctx.provenance("spectrum", o);
    ctx.sink.write(&ctx.table_name("spectrum"), &t.render(&prov, ctx.format()))?;
    Ok(())
}

fn transit(ctx: &Ctx, o: &TransitOpts) -> Result<()> {
    let s = ctx.setup;
    let conditions = TransitCondition::standard_set();
    let Some(ci) = conditions.iter().position(|c| c.name == o.condition) else {
        let names: Vec<&str> = conditions.iter().map(|c| c.name.as_str()).collect();
        return Err(CliError::Usage(format!(
            "unknown condition `{}` (expected one of {})",
            o.condition,
            names.join(", ")
        )));
    };
    let mut cfg = TransitSurveyConfig::new(&s.params);
    cfg.chain = s.protocol.chain;
    cfg.nbar_empty = s.protocol.probe.nbar_empty;
    cfg.master_seed = ctx.rc.master_seed;
    cfg.trials = ctx.trials.unwrap_or(s.experiment.transit_trials);

    // the trajectory is trial 0 of the chosen condition in the survey
    let trial_seed = seed::derive(cfg.master_seed, stream::TRANSIT, (ci as u64) << 32);
    let traj = transit_trajectory(&conditions[ci], &cfg, &s.params, &s.species, trial_seed)?;
    let mut t = Table::new(&["t_s", "x_m", "y_m", "z_m", "vx", "vy", "vz", "status"]);
    for st in &traj.samples {
        let (p, v) = (st.position, st.velocity);
        t.push(vec![
            num(st.time),
            num(p.x),
            num(p.y),
            num(p.z),
            num(v.x),
            num(v.y),
            num(v.z),
            json!(st.status.as_str()),
        ]);
    }
    let prov = ctx.provenance("transit", o);
    ctx.sink.write(&ctx.table_name("transit_trajectory"), &t.render(&prov, ctx.format()))?;

    let stats = run_transit_survey(&conditions, &cfg, &s.params, &s.species)?;
    let summary: Vec<Value> = stats
        .iter()
        .map(|st| {
            json!({
                "condition": st.condition.name,
                "trials": st.trials,
                "detected_fraction": st.detected_fraction,
                "median_duration_s": st.median,
                "median_crossing_time_s": st.median_crossing_time,
                "mean_velocity_m_s": st.median_crossing_time.map(|c| 2.0 * s.params.waist / c),
                "durations_s": st.durations,
            })
        })
        .collect();
    ctx.sink.write("transit_survey.json", &document(&prov, &summary))?;
    Ok(())
}

fn heating_block(freqs: TrapFrequencies, s: &Setup) -> Result<Value> {
    let est = heating_estimate(freqs, &s.fort.noise_psd)?;
    Ok(json!({
        "nu_radial_hz": freqs.radial,
        "nu_axial_hz": freqs.axial,
        "tau_radial_s": est.tau_e_radial,
        "tau_axial_s": est.tau_e_axial,
        "evaluated_psd_values": est.evaluated_psd_values,
    }))
}

fn heating(ctx: &Ctx, o: &HeatingOpts) -> Result<()> {
    let s = ctx.setup;
    let nominal = TrapFrequencies {
        radial: o.nu_radial_hz,
        axial: o.nu_axial_hz,
    };
    let harmonic = trap_frequencies(&s.fort, &s.params, &s.species)?;
    let data = json!({
        "nominal": heating_block(nominal, s)?,
        "harmonic": heating_block(harmonic, s)?,
    });
    let prov = ctx.provenance("heating", o);
    ctx.sink.write("heating.json", &document(&prov, &data))?;
    Ok(())
}

fn protocol(ctx: &Ctx, o: &ProtocolOpts) -> Result<()> {
    let s = ctx.setup;
    let mut cfg = s.protocol.clone();
    cfg.record_trace = o.trace;
    let master = ctx.rc.master_seed;
    let rec = run_protocol(&cfg, &s.params, &s.species, seed::derive(master, stream::TRIAL, 0))?;
    let mut t = Table::new(&["t_s", "phase", "probe_on", "fort_on", "cooling_on", "filtered_level"]);
    for e in &rec.events {
        t.push(vec![
            num(e.time),
            json!(e.state.phase.as_str()),
            json!(e.state.probe_on),
            json!(e.state.fort_on),
            json!(e.state.cooling_on),
            e.filtered_level.map_or(Value::Null, num),
        ]);
    }
    let prov = ctx.provenance("protocol", o);
    ctx.sink.write(&ctx.table_name("protocol_events"), &t.render(&prov, ctx.format()))?;
    ctx.sink.write("protocol_record.json", &document(&prov, &rec))?;

    if let Some(n) = ctx.trials.filter(|&n| n > 1) {
        cfg.record_trace = false;
        let recs = (0..n)
            .into_par_iter()
            .map(|i| run_protocol(&cfg, &s.params, &s.species, seed::derive(master, stream::TRIAL, i as u64)))
            .collect::<cqed_fort::Result<Vec<_>>>()?;
        let count = |f: &dyn Fn(&cqed_fort::protocol::TrialRecord) -> bool| recs.iter().filter(|r| f(r)).count();
        let triggered = count(&|r| r.triggered);
        let loaded = count(&|r| r.loaded != LoadOutcome::Empty);
        let other = count(&|r| r.loaded == LoadOutcome::OtherAtom);
        let summary = json!({
            "trials": n,
            "triggered": triggered,
            "loaded": loaded,
            "loaded_other": other,
            "phantom_triggers": count(&|r| r.trigger_cause() == Some(TriggerCause::Phantom)),
            "survived_truth": count(&|r| r.survived_truth),
            "redetected": count(&|r| r.redetected),
            "phantom_fraction": if loaded > 0 { other as f64 / loaded as f64 } else { 0.0 },
            "p_trap": if triggered > 0 { count(&|r| r.redetected) as f64 / triggered as f64 } else { 0.0 },
        });
        ctx.sink.write("protocol_summary.json", &document(&prov, &summary))?;
    }
    Ok(())
}

fn lifetime(ctx: &Ctx) -> Result<()> {
    let s = ctx.setup;
    let e = &s.experiment;
    let exp = LifetimeExperiment {
        delays: e.delays.clone(),
        trials_per_delay: ctx.trials.unwrap_or(e.trials_per_delay),
        protocol: s.protocol.clone(),
        master_seed: ctx.rc.master_seed,
        with_background: e.with_background,
    };
    let run = run_lifetime_experiment(&exp, &s.params, &s.species)?;
    let sub = subtract_background(&run.curve)?;
    let mut t = Table::new(&[
        "delay_s",
        "p_trap",
        "p_err",
        "n_trials",
        "p_background",
        "p_raw",
        "clipped",
        "low_confidence",
    ]);
    for (i, p) in sub.points.iter().enumerate() {
        let bg = run.curve.background_points.get(i).map_or(Value::Null, |b| num(b.p_trap));
        t.push(vec![
            num(p.hold_delay),
            num(p.p_trap),
            num(p.stderr),
            json!(p.trials),
            bg,
            num(run.curve.points[i].p_trap),
            json!(p.clipped),
            json!(p.low_confidence),
        ]);
    }
    let prov = ctx.provenance("lifetime", &());
    ctx.sink.write(&ctx.table_name("lifetime_curve"), &t.render(&prov, ctx.format()))?;

    let fit = fit_exponential(
        &sub.points,
        FitOptions {
            with_offset: e.fit_offset,
            include_excluded: false,
        },
    )?;
    let data = json!({
        "amplitude": fit.amplitude,
        "amplitude_stderr": fit.amplitude_stderr,
        "tau_s": fit.tau,
        "tau_stderr_s": fit.tau_stderr,
        "offset": fit.offset,
        "chi2": fit.chi2,
        "chi2_dof": fit.chi2_dof,
        "points_used": fit.points_used,
        "zero_count_delays_s": fit.zero_count_delays,
        "stats": run.stats,
        "background_stats": run.background_stats,
    });
    ctx.sink.write("lifetime_fit.json", &document(&prov, &data))?;
    Ok(())
}

fn params(ctx: &Ctx) -> Result<()> {
    let s = ctx.setup;
    let p = &s.params;
    let crit = critical_numbers(p);
    let freqs = trap_frequencies(&s.fort, p, &s.species)?;
    let heat = heating_estimate(freqs, &s.fort.noise_psd)?;
    let data = json!({
        "g0_over_2pi_hz": rad_to_hz(p.g0),
        "kappa_over_2pi_hz": rad_to_hz(p.kappa),
        "gamma_perp_over_2pi_hz": rad_to_hz(p.gamma_perp),
        "critical_photon_number": crit.photon,
        "critical_atom_number": crit.atom,
        "lambda_cavity_m": p.lambda_cavity(),
        "lambda_fort_m": p.lambda_fort(),
        "trap_depth_j": s.fort.depth_joules(),
        "transition_shift_hz": s.fort.transition_shift(),
        "nu_radial_hz": freqs.radial,
        "nu_axial_hz": freqs.axial,
        "tau_heating_radial_s": heat.tau_e_radial,
        "tau_heating_axial_s": heat.tau_e_axial,
        "scattering_rate_per_s": scattering_rate(&s.fort, p)?,
        "circulating_power_w": cavity_buildup(s.fort.input_power, p.finesse_fort, s.fort.coupling_efficiency),
        "free_fall_velocity_m_s": free_fall_velocity(s.protocol.arrivals.distribution.drop_height, s.species.gravity),
    });
    let prov = ctx.provenance("params", &());
    ctx.sink.write("params.json", &document(&prov, &data))?;
    Ok(())
}
