use cqed_fort::config::KeyValues;
use cqed_fort::detection::{DetectionChain, Discriminator, LowPass};
use cqed_fort::dynamics::{default_time_step, step, AtomState, Status};
use cqed_fort::harness::{
    fit_exponential, run_lifetime_experiment, subtract_background, FitOptions, LifetimeExperiment, SurvivalCurve,
    SurvivalPoint,
};
use cqed_fort::physics::FortField;
use cqed_fort::protocol::{run_protocol, LoadOutcome, ProtocolConfig};
use cqed_fort::seed;
use cqed_fort::{AtomSpecies, CavityQedParams, FortConfig, Vec3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

fn setup() -> (CavityQedParams, AtomSpecies) {
    (CavityQedParams::default(), AtomSpecies::cesium())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn protocol_record_invariants(
        s in any::<u64>(),
        hold in 0.1e-3f64..3e-3,
        nbar in 0.0f64..1.5,
        probe_during_hold in any::<bool>(),
    ) {
        let (params, species) = setup();
        let mut cfg = ProtocolConfig::new(&params, &species);
        cfg.timing.hold_delay = hold;
        cfg.arrivals.mean_atoms = nbar;
        cfg.variant.probe_during_hold = probe_during_hold;
        let r = run_protocol(&cfg, &params, &species, s).unwrap();
        let t = &cfg.timing;

        prop_assert!(!r.redetected || r.triggered);
        if let Some(trig) = r.trigger {
            prop_assert!(trig.time > t.t3_cool_end_probe_on && trig.time <= t.window_end() + 1e-12);
            prop_assert!(trig.filtered_level < cfg.chain.threshold_fraction);
        }
        if r.escape_time.is_some() {
            prop_assert!(!r.survived_truth);
        }
        if r.loaded == LoadOutcome::Empty {
            prop_assert!(!r.survived_truth && r.escape_time.is_none());
        }
        prop_assert!(r.events.windows(2).all(|w| w[0].time < w[1].time));
        prop_assert!(r.events.iter().all(|e| !(e.state.fort_on && e.state.cooling_on)));
        prop_assert!(r.trappable_atoms <= r.atoms_injected);
    }

    #[test]
    fn survival_point_is_a_probability(n in 1usize..5000, frac in 0.0f64..=1.0) {
        let k = ((n as f64) * frac).floor() as usize;
        let p = SurvivalPoint::from_counts(20e-3, k, n);
        prop_assert!((0.0..=1.0).contains(&p.p_trap));
        let expect = (p.p_trap * (1.0 - p.p_trap) / n as f64).sqrt();
        prop_assert!((p.stderr - expect).abs() <= 1e-15);
    }

    #[test]
    fn subtraction_clips_and_adds_in_quadrature(
        pts in prop::collection::vec((1usize..400, 0.0f64..=1.0, 0.0f64..=1.0), 1..10),
    ) {
        let mut curve = SurvivalCurve::default();
        for (i, &(n, a, b)) in pts.iter().enumerate() {
            let d = 20e-3 + i as f64 * 10e-3;
            curve.points.push(SurvivalPoint::from_counts(d, (a * n as f64) as usize, n));
            curve.background_points.push(SurvivalPoint::from_counts(d, (b * n as f64) as usize, n));
        }
        let sub = subtract_background(&curve).unwrap();
        for ((s, p), b) in sub.points.iter().zip(&curve.points).zip(&curve.background_points) {
            prop_assert!((0.0..=1.0).contains(&s.p_trap));
            let raw = p.p_trap - b.p_trap;
            prop_assert_eq!(s.clipped, raw < 0.0);
            prop_assert!((s.p_trap - raw.max(0.0)).abs() < 1e-15);
            prop_assert!((s.stderr - p.stderr.hypot(b.stderr)).abs() < 1e-15);
        }
    }

    #[test]
    fn fit_recovers_noiseless_exponential(a in 0.05f64..0.9, tau in 10e-3f64..120e-3) {
        let pts: Vec<SurvivalPoint> = LifetimeExperiment::default_delays()
            .into_iter()
            .map(|t| SurvivalPoint {
                p_trap: a * (-t / tau).exp(),
                stderr: 0.01,
                ..SurvivalPoint::from_counts(t, 1, 2)
            })
            .collect();
        let fit = fit_exponential(&pts, FitOptions::default()).unwrap();
        prop_assert!(fit.converged);
        prop_assert!((fit.tau / tau - 1.0).abs() < 1e-6, "tau {} vs {}", fit.tau, tau);
        prop_assert!((fit.amplitude / a - 1.0).abs() < 1e-6);
        prop_assert!(fit.tau > 0.0);
        prop_assert_eq!(fit.residuals.len(), pts.len());
    }

    #[test]
    fn low_pass_stays_within_input_hull(xs in prop::collection::vec(0.0f64..3.0, 1..300)) {
        let chain = DetectionChain::default();
        let mut f = LowPass::new(&chain, chain.bin_dt, 1.0);
        let (mut lo, mut hi) = (1.0f64, 1.0f64);
        for x in xs {
            lo = lo.min(x);
            hi = hi.max(x);
            let y = f.push(x);
            prop_assert!(y >= lo - 1e-12 && y <= hi + 1e-12);
        }
    }

    #[test]
    fn discriminator_needs_a_sustained_dip(levels in prop::collection::vec(0.0f64..1.5, 1..400)) {
        let chain = DetectionChain::default();
        let mut d = Discriminator::new(&chain, chain.bin_dt);
        let need = d.sustain_bins();
        let threshold = chain.threshold_fraction;
        let mut run = 0usize;
        for y in levels {
            run = if y < threshold { run + 1 } else { 0 };
            if d.push(y) {
                prop_assert!(run >= need, "fired after {} bins below, need {}", run, need);
            }
        }
    }

    #[test]
    fn seeds_are_pure_functions(m in any::<u64>(), s in 0u64..8, i in any::<u64>()) {
        prop_assert_eq!(seed::derive(m, s, i), seed::derive(m, s, i));
        prop_assert_ne!(seed::derive(m, s, i), seed::derive(m, s, i ^ 1));
    }

    #[test]
    fn key_values_round_trip(vals in prop::collection::vec(-1e9f64..1e9, 1..12)) {
        let text: String = vals.iter().enumerate().map(|(i, v)| format!("k{i} = {v:?}\n")).collect();
        let mut kv = KeyValues::parse(&text, "prop").unwrap();
        for (i, v) in vals.iter().enumerate() {
            prop_assert_eq!(kv.f64(&format!("k{i}")).unwrap(), Some(*v));
        }
        prop_assert!(kv.finish().is_ok());
    }
}

#[test]
fn fit_interval_coverage_is_near_one_sigma() {
    let (tau, a, n) = (40e-3, 0.3, 400usize);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let reps = 100;
    let mut covered = 0;
    for _ in 0..reps {
        let pts: Vec<SurvivalPoint> = LifetimeExperiment::default_delays()
            .into_iter()
            .map(|t| {
                let p = a * (-t / tau).exp();
                let k = Binomial::new(n as u64, p).unwrap().sample(&mut rng) as usize;
                SurvivalPoint::from_counts(t, k, n)
            })
            .collect();
        let fit = fit_exponential(&pts, FitOptions::default()).unwrap();
        covered += ((fit.tau - tau).abs() <= fit.tau_stderr) as usize;
    }
    let frac = covered as f64 / reps as f64;
    assert!((frac - 0.68).abs() <= 0.10, "coverage {frac}");
}

#[test]
fn survival_errors_shrink_as_inverse_root_n() {
    let (params, species) = setup();
    let mut cfg = ProtocolConfig::new(&params, &species);
    cfg.intensity_noise = false;
    let stderr_at = |trials: usize| {
        let exp = LifetimeExperiment {
            delays: vec![10e-3],
            trials_per_delay: trials,
            protocol: cfg.clone(),
            master_seed: 3,
            with_background: false,
        };
        let run = run_lifetime_experiment(&exp, &params, &species).unwrap();
        run.curve.points[0].stderr
    };
    let ratio = stderr_at(100) / stderr_at(400);
    assert!((ratio - 2.0).abs() < 0.4, "stderr ratio {ratio}");
}

#[test]
fn verlet_energy_does_not_drift() {
    let (params, species) = setup();
    let weightless = AtomSpecies {
        gravity: 0.0,
        ..species
    };
    let fort = FortConfig::lifetime_profile();
    let field = FortField::new(&fort, &params);
    let x0 = field.nearest_antinode(params.cavity_length / 2.0);
    let floor = field.potential(Vec3::new(x0, 0.0, 0.0));
    let mut st = AtomState::new(
        Vec3::new(x0 + 40e-9, 1e-6, -0.5e-6),
        Vec3::new(0.03, 0.004, 0.002),
        0.0,
        Status::Trapped,
    );
    let dt = default_time_step(&fort, &params, &weightless).unwrap();
    let energy = |s: &AtomState| 0.5 * weightless.mass * s.velocity.norm_sq() + field.potential(s.position) - floor;
    // window averages remove the bounded O(dt^2) oscillation of the Verlet energy
    let window = 20_000;
    let steps = 1_000_000;
    let (mut first, mut last) = (0.0, 0.0);
    for k in 0..steps {
        st = step(&st, dt, &fort, 0.0, &params, &weightless).unwrap();
        if k < window {
            first += energy(&st);
        } else if k >= steps - window {
            last += energy(&st);
        }
    }
    let drift = (last - first).abs() / first;
    assert!(drift < 1e-6, "relative drift {drift:e}");
}

#[test]
fn random_phase_draws_are_uniform_enough() {
    // sanity of the RNG wiring the ensembles rely on
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(1, seed::stream::HEATING, 0));
    let n = 20_000;
    let mean: f64 = (0..n).map(|_| rng.random::<f64>()).sum::<f64>() / n as f64;
    assert!((mean - 0.5).abs() < 0.01);
}
