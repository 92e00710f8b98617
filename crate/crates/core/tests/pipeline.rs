use qhier_core::eclectic::{build_eclectic, eclectic_state, ground_state, verify_energy_identity, Layout};
use qhier_core::hilbert::{Operator, StateVector};
use qhier_core::hspec::{heisenberg_chain, parse_spec};
use qhier_core::open::{amplitude_damping, lindblad_evolve};
use qhier_core::random::{random_state, seeded};
use qhier_core::C64;

#[test]
fn two_site_heisenberg_ground_energy_is_singlet() {
    // XX + YY + ZZ has the singlet at -3; the field cancels on it.
    let h = heisenberg_chain(2, 1.0, 0.5).unwrap();
    let (e, psi) = ground_state(&h).unwrap();
    assert!((e + 3.0).abs() < 1e-10, "{e}");
    for layout in [Layout::PaddedTensor, Layout::PerTermDirectSum] {
        let r = verify_energy_identity(&psi, &build_eclectic(&h, layout).unwrap(), &h).unwrap();
        assert!(r.total.delta < 1e-9);
        assert!((r.total.e_full + 3.0).abs() < 1e-10);
    }
}

#[test]
fn hspec_model_through_both_layouts() {
    let text = "sites 4 2\nterm [0,1,2] ZZZ 0.3\nterm [1,2] XX 1\nterm [2,3] YY -0.7\nterm [3] Z 0.2\n";
    let h = parse_spec(text).unwrap();
    let mut rng = seeded(11);
    for _ in 0..10 {
        let psi = random_state(16, &mut rng);
        for layout in [Layout::PaddedTensor, Layout::PerTermDirectSum] {
            let sys = build_eclectic(&h, layout).unwrap();
            let state = eclectic_state(&psi, &sys, &h).unwrap();
            assert_eq!(state.block_count(), h.m());
            let r = verify_energy_identity(&psi, &sys, &h).unwrap();
            assert!(r.total.pass, "{layout:?}: {}", r.total.delta);
        }
    }
}

#[test]
fn damping_coherence_decays_at_half_rate() {
    let gamma = 0.8;
    let m = amplitude_damping(gamma).unwrap();
    let s = 0.5f64.sqrt();
    let plus = StateVector::new(vec![C64::new(s, 0.0), C64::new(s, 0.0)]).unwrap();
    let t = 1.5;
    let rho = lindblad_evolve(&m, &plus.projector(), t, 1e-3).unwrap();
    let excited = 0.5 * (-gamma * t).exp();
    let coherence = 0.5 * (-gamma * t / 2.0).exp();
    let oracle = Operator::from_real_rows(2, &[1.0 - excited, coherence, coherence, excited]).unwrap();
    assert!(rho.max_abs_diff(&oracle) < 1e-9);
}
