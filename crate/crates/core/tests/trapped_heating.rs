use cqed_fort::harness::{run_trapped_ensemble, TrappedEnsemble};
use cqed_fort::{AtomSpecies, CavityQedParams};

#[test]
fn three_dimensional_heating_tracks_the_harmonic_rate() {
    let params = CavityQedParams::default();
    let species = AtomSpecies::cesium();
    let ens = TrappedEnsemble {
        master_seed: 5,
        ..TrappedEnsemble::axial_reference()
    };
    let g = run_trapped_ensemble(&ens, &params, &species).unwrap();
    let r = (g.tau_fit - g.tau_analytic).abs() / g.tau_analytic;
    eprintln!("tau_fit {:.2} ms, analytic {:.2} ms, {:.1}%", g.tau_fit * 1e3, g.tau_analytic * 1e3, 100.0 * r);
    assert_eq!(g.trials, 200);
    assert!(r < 0.25);
}
