//! Acceptance battery. Run with `cargo test --test acceptance -- --nocapture`
//! to see one PASS/FAIL line per criterion.

use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use qhier_core::eclectic::{build_eclectic, chain_dimension_sweep, random_instance, verify_energy_identity, Layout};
use qhier_core::fock::{
    bracket_identity_residual, build_fock_space, check_statistics, heisenberg_field_residuals, one_excitation_block,
    quantum_jacobi_residual, second_quantize_observable, FockOperator, FockSpace, SecondQuantizedState, Statistics,
};
use qhier_core::hamiltonization::{
    hamiltonize, integrate_sampled, jacobi_residual_classical, poisson_bracket_classical, ObservableField,
    PhaseSpacePoint, SymplecticMethod,
};
use qhier_core::hierarchy::{oscillator_demo, potential_demo, qubit_demo, HierarchyChain, HierarchyLevel, Ordering, Payload};
use qhier_core::hilbert::{evolve_exact, pauli, Operator};
use qhier_core::open::{
    amplitude_damping, compare_ensemble, default_dt, lindblad_series, random_lindblad,
    second_quantized_lindblad_observable, second_quantized_lindblad_state,
};
use qhier_core::random::{random_density, random_hermitian, random_state, seeded, Rng64};
use qhier_core::Result;
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn space(modes: usize, stats: Statistics, cutoff: usize) -> Result<Arc<FockSpace>> {
    Ok(Arc::new(build_fock_space(modes, stats, cutoff)?))
}

fn within(elapsed: Duration, limit_s: u64) -> bool {
    elapsed <= Duration::from_secs(limit_s)
}

fn statistics() -> Result<Outcome> {
    let start = Instant::now();
    let mut car = 0.0f64;
    for d in 1..=6 {
        car = car.max(check_statistics(&space(d, Statistics::Fermion, 0)?).max_full);
    }
    let mut ccr = 0.0f64;
    for d in 1..=4 {
        for n in 1..=5 {
            ccr = ccr.max(check_statistics(&space(d, Statistics::Boson, n)?).max_restricted);
        }
    }
    let t = start.elapsed();
    Ok(Outcome {
        pass: car <= 1e-13 && ccr < 1e-13 && within(t, 10),
        detail: format!("CAR {car:.2e} (d<=6), CCR {ccr:.2e} (d<=4, N<=5), {:.2}s", t.as_secs_f64()),
    })
}

fn field_dynamics(rng: &mut Rng64) -> Result<Outcome> {
    let start = Instant::now();
    let (mut bose, mut fermi) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let d = rng.random_range(1..=4usize);
        let h = random_hermitian(d, rng);
        bose = bose.max(heisenberg_field_residuals(&space(d, Statistics::Boson, 4)?, &h)?.0);
        fermi = fermi.max(heisenberg_field_residuals(&space(d, Statistics::Fermion, 0)?, &h)?.0);
    }
    let t = start.elapsed();
    Ok(Outcome {
        pass: bose < 1e-12 && fermi < 1e-12 && within(t, 30),
        detail: format!("boson {bose:.2e}, fermion {fermi:.2e}, {:.2}s", t.as_secs_f64()),
    })
}

fn brackets(rng: &mut Rng64) -> Result<Outcome> {
    let (mut classical, mut cjacobi) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let d = rng.random_range(1..=6usize);
        let f = ObservableField::new(random_hermitian(d, rng))?;
        let g = ObservableField::new(random_hermitian(d, rng))?;
        let e = ObservableField::new(random_hermitian(d, rng))?;
        let p = PhaseSpacePoint::from_state(&random_state(d, rng));
        let b = poisson_bracket_classical(&f, &g, &p)?;
        // Independent oracle for the commutator side.
        let psi = p.to_state()?;
        let comm = f.matrix().commutator(g.matrix());
        let oracle = (qhier_core::C64::new(0.0, -1.0) * psi.inner(&comm.apply(&psi)?)).re;
        classical = classical.max(b.residual()).max((b.bracket - oracle).abs());
        cjacobi = cjacobi.max(jacobi_residual_classical(&f, &g, &e, &p)?);
    }
    let (mut quantum, mut qjacobi) = (0.0f64, 0.0f64);
    for r in 0..100 {
        let d = rng.random_range(1..=3usize);
        let s = if r % 2 == 0 { space(d, Statistics::Boson, 3)? } else { space(d, Statistics::Fermion, 0)? };
        let f = second_quantize_observable(&random_hermitian(d, rng), &s)?;
        let g = second_quantize_observable(&random_hermitian(d, rng), &s)?;
        let e = second_quantize_observable(&random_hermitian(d, rng), &s)?;
        quantum = quantum.max(bracket_identity_residual(&f, &g)?);
        qjacobi = qjacobi.max(quantum_jacobi_residual(&f, &g, &e)?);
    }
    Ok(Outcome {
        pass: classical < 1e-10 && quantum < 1e-10 && cjacobi < 1e-9 && qjacobi < 1e-9,
        detail: format!(
            "classical {classical:.2e}, quantum {quantum:.2e}, Jacobi classical {cjacobi:.2e} quantum {qjacobi:.2e}"
        ),
    })
}

/// Max deviation of the one-excitation block of each lifted level from its classical source.
fn lift_faithfulness(chain: &HierarchyChain) -> Result<f64> {
    let mut worst = 0.0f64;
    for w in chain.levels.windows(2) {
        if let (Payload::Classical(sys), Payload::Quantum { h, space: Some(s) }) = (&w[0].payload, &w[1].payload) {
            let block = one_excitation_block(&FockOperator::new(s.clone(), h.clone())?)?;
            worst = worst.max(block.max_abs_diff(sys.h_matrix()));
        }
    }
    Ok(worst)
}

fn hierarchy_spectra(rng: &mut Rng64) -> Result<Outcome> {
    let mut spectrum = 0.0f64;
    let mut count_ok = true;
    let mut faithful = 0.0f64;
    for (omega, n) in [(1.0, 5usize), (0.7, 8), (2.5, 4)] {
        let r = oscillator_demo(omega, n)?;
        count_ok &= r.h1_spectrum.len() == n + 1;
        for (j, e) in r.h1_spectrum.iter().enumerate() {
            spectrum = spectrum.max((e - j as f64 * omega).abs());
        }
        faithful = faithful.max(max_one_excitation(&r.checks));
    }
    faithful = faithful.max(max_one_excitation(&qubit_demo(&pauli::z(), 2, rng)?.checks));
    for ordering in [Ordering::Weyl, Ordering::Normal] {
        faithful = faithful.max(max_one_excitation(&potential_demo(&[0.0, 0.0, 1.0, 0.0, 0.5], ordering, 6)?.checks));
    }
    for _ in 0..20 {
        let d = rng.random_range(1..=3usize);
        let mut chain = HierarchyChain::new(HierarchyLevel::hilbert(0, random_hermitian(d, rng), "random")?);
        chain.push_lift(None, Statistics::Boson)?;
        chain.push_lift(Some(2), Statistics::Boson)?;
        chain.push_lift(None, Statistics::Boson)?;
        chain.push_lift(Some(2), Statistics::Boson)?;
        faithful = faithful.max(lift_faithfulness(&chain)?);
    }
    Ok(Outcome {
        pass: count_ok && spectrum < 1e-12 && faithful < 1e-13,
        detail: format!("spectrum vs j*omega {spectrum:.2e}, one-excitation blocks {faithful:.2e}"),
    })
}

fn max_one_excitation(checks: &[qhier_core::report::Check]) -> f64 {
    checks.iter().filter(|c| c.name.starts_with("one_excitation_")).map(|c| c.residual).fold(0.0, f64::max)
}

fn energy_identity(rng: &mut Rng64) -> Result<Outcome> {
    let start = Instant::now();
    let (mut padded, mut direct) = (0.0f64, 0.0f64);
    let mut d3 = 0;
    for _ in 0..100 {
        let (h, psi) = random_instance(rng)?;
        assert!(h.n <= 8 && h.k() <= 3 && (h.d == 2 || h.d == 3));
        d3 += usize::from(h.d == 3);
        for layout in [Layout::PaddedTensor, Layout::PerTermDirectSum] {
            let r = verify_energy_identity(&psi, &build_eclectic(&h, layout)?, &h)?;
            let slot = if layout == Layout::PaddedTensor { &mut padded } else { &mut direct };
            *slot = slot.max(r.total.delta);
        }
    }
    let t = start.elapsed();
    Ok(Outcome {
        pass: padded < 1e-9 && direct < 1e-9 && d3 > 0 && within(t, 120),
        detail: format!("padded {padded:.2e}, direct sum {direct:.2e}, {d3} instances with d=3, {:.2}s", t.as_secs_f64()),
    })
}

fn dimension_accounting() -> Outcome {
    let table = chain_dimension_sweep(2..=14);
    let mut exact = table.rows.len() == 13;
    for r in &table.rows {
        let n = r.n as u128;
        let m = 2 * n - 1; // n field terms and n - 1 bonds
        exact &= r.full == 1u128 << n && r.padded == (2 * n) * (2 * n) && r.direct_sum == 4 * m;
    }
    // Oracle crossover: first n with (2n)^2 < 2^n for every later n.
    let crossover = (2..=14u32).find(|&n| (n..=14).all(|k| (2 * k as u128).pow(2) < 1u128 << k)).map(|n| n as usize);
    let flagged = table.padded_crossover == crossover && table.warnings.iter().any(|w| w.starts_with("n=2:"));
    Outcome {
        pass: exact && flagged,
        detail: format!("rows exact: {exact}, padded crossover {:?} (oracle {crossover:?}), small-n flagged: {flagged}", table.padded_crossover),
    }
}

fn symplectic(rng: &mut Rng64) -> Result<Outcome> {
    let (mut energy, mut norm) = (0.0f64, 0.0f64);
    for d in [1usize, 2, 3, 5, 8] {
        let sys = hamiltonize(&random_hermitian(d, rng))?;
        let p0 = PhaseSpacePoint::from_state(&random_state(d, rng));
        let traj = integrate_sampled(&sys, &p0, 1e-3, 10_000, SymplecticMethod::ImplicitMidpoint, 100)?;
        energy = energy.max(traj.max_energy_drift());
        norm = norm.max(traj.max_norm_drift());
    }
    let mut ratios = Vec::new();
    for d in [2usize, 4, 8] {
        let h = random_hermitian(d, rng);
        let psi = random_state(d, rng);
        let sys = hamiltonize(&h)?;
        let exact = evolve_exact(&h, &psi, 1.0)?;
        let error = |dt: f64| -> Result<f64> {
            let steps = (1.0 / dt).round() as usize;
            let traj =
                integrate_sampled(&sys, &PhaseSpacePoint::from_state(&psi), dt, steps, SymplecticMethod::ImplicitMidpoint, steps)?;
            Ok(traj.points.last().expect("endpoint").to_state()?.max_abs_diff(&exact))
        };
        ratios.push(error(0.02)? / error(0.01)?);
    }
    let ratio_ok = ratios.iter().all(|r| (3.5..=4.5).contains(r));
    Ok(Outcome {
        pass: energy < 1e-8 && norm < 1e-8 && ratio_ok,
        detail: format!("energy drift {energy:.2e}, norm drift {norm:.2e}, dt-halving ratios {ratios:.3?}"),
    })
}

fn open_dynamics(rng: &mut Rng64) -> Result<Outcome> {
    let start = Instant::now();
    let damping = amplitude_damping(1.0)?;
    let rho0 = Operator::diag_real(&[0.0, 1.0]);
    let times = [0.25, 0.5, 1.0, 2.0, 4.0];
    let series = lindblad_series(&damping, &rho0, &times, default_dt(4.0))?;
    let closed = times.iter().zip(&series).map(|(t, r)| (r.get(1, 1).re - (-t).exp()).abs()).fold(0.0, f64::max);

    let mut lift = 0.0f64;
    for r in 0..50 {
        let d = 1 + r % 3;
        let m = random_lindblad(d, rng)?;
        let s = if r % 2 == 0 { space(d, Statistics::Boson, 3)? } else { space(d, Statistics::Fermion, 0)? };
        lift = lift.max(second_quantized_lindblad_observable(&m, &random_hermitian(d, rng), &s)?.residual);
        let state = SecondQuantizedState::from_density(&random_density(d, rng), &space(d, Statistics::Boson, 2)?)?;
        let res = second_quantized_lindblad_state(&m, &state)?;
        lift = lift.max(res.lift).max(res.vacuum);
    }

    let report = compare_ensemble(&damping, &qhier_core::StateVector::basis(2, 1)?, &times, 1e-3, 10_000, 20_240_601)?;
    let ratio = report.comparison.iter().map(|c| c.population_ratio).fold(0.0, f64::max);
    let t = start.elapsed();
    Ok(Outcome {
        pass: closed < 1e-6 && lift < 1e-10 && ratio < 1.0 && report.comparison.len() == 5 && within(t, 180),
        detail: format!(
            "closed form {closed:.2e}, lift {lift:.2e}, SSE worst deviation {ratio:.3} of 3 sigma, {:.2}s",
            t.as_secs_f64()
        ),
    })
}

fn determinism() -> Outcome {
    let start = Instant::now();
    let run = || {
        Command::new(env!("CARGO_BIN_EXE_qhier"))
            .args(["verify", "--suite", "all", "--seed", "7"])
            .output()
            .expect("qhier runs")
    };
    let (a, b) = (run(), run());
    let t = start.elapsed();
    let same = a.stdout == b.stdout && !a.stdout.is_empty();
    let exit0 = a.status.code() == Some(0) && b.status.code() == Some(0);
    Outcome {
        pass: same && exit0 && within(t, 600),
        detail: format!("byte-identical: {same}, exit 0: {exit0}, {:.2}s for both runs", t.as_secs_f64()),
    }
}

#[test]
fn acceptance() {
    let mut rng = seeded(2024);
    let results: Vec<(&str, Outcome)> = vec![
        ("1 statistics", statistics().expect("statistics")),
        ("2 field dynamics", field_dynamics(&mut rng).expect("field dynamics")),
        ("3 bracket identities", brackets(&mut rng).expect("brackets")),
        ("4 hierarchy spectra", hierarchy_spectra(&mut rng).expect("hierarchy")),
        ("5 eclectic energy identity", energy_identity(&mut rng).expect("energy identity")),
        ("6 dimension accounting", dimension_accounting()),
        ("7 symplectic integration", symplectic(&mut rng).expect("symplectic")),
        ("8 open dynamics", open_dynamics(&mut rng).expect("open dynamics")),
        ("9 determinism", determinism()),
    ];
    for (name, o) in &results {
        println!("{} criterion {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    let failed: Vec<&str> = results.iter().filter(|(_, o)| !o.pass).map(|(n, _)| *n).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
