//! Invariant batteries behind `qhier verify`. Every suite draws from its own
//! named sub-stream of one seed, so a report is a function of the seed alone.

use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use crate::eclectic::{
    build_eclectic, chain_dimension_sweep, field_energy, random_instance, second_quantized_many_body,
    verify_energy_identity, FieldConfig, Layout, ENERGY_TOL,
};
use crate::error::{Error, Result};
use crate::fock::{
    bracket_identity_residual, build_fock_space, check_statistics, equal_time_residual, heisenberg_field_residuals,
    one_excitation_block, quantum_jacobi_residual, second_quantize_hamiltonian, second_quantize_observable,
    von_neumann_residual, FockSpace, SecondQuantizedState, Statistics,
};
use crate::hamiltonization::{
    hamiltonize, integrate_sampled, jacobi_residual_classical, poisson_bracket_classical, ObservableField,
    PhaseSpacePoint, SymplecticMethod,
};
use crate::hierarchy::{oscillator_demo, potential_demo, qubit_demo, Ordering};
use crate::hilbert::{evolve_exact, pauli, Operator, StateVector};
use crate::hspec::{heisenberg_chain, KLocalHamiltonian};
use crate::open::{
    amplitude_damping, compare_ensemble, default_dt, density_health, kraus_duality_residual, lindblad_series,
    random_lindblad, second_quantized_lindblad_observable, second_quantized_lindblad_state, KrausMap,
};
use crate::random::{random_density, random_hermitian, random_operator, random_state, seeded, Rng64};
use crate::report::{Check, Tolerances};

pub const SCHEMA: &str = "qhier/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Phase,
    Fock,
    Hierarchy,
    Eclectic,
    Open,
}

impl Suite {
    pub const ALL: [Suite; 5] = [Suite::Phase, Suite::Fock, Suite::Hierarchy, Suite::Eclectic, Suite::Open];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Phase => "phase",
            Suite::Fock => "fock",
            Suite::Hierarchy => "hierarchy",
            Suite::Eclectic => "eclectic",
            Suite::Open => "open",
        }
    }

    /// `all` expands to every suite.
    pub fn parse_list(s: &str) -> Result<Vec<Suite>> {
        if s == "all" {
            return Ok(Self::ALL.to_vec());
        }
        Self::ALL
            .iter()
            .copied()
            .find(|x| x.name() == s)
            .map(|x| vec![x])
            .ok_or_else(|| Error::arg(format!("unknown suite {s:?}; expected phase, fock, hierarchy, eclectic, open or all")))
    }

    pub fn run(self, seed: u64) -> Result<Vec<Check>> {
        let mut rng = seeded(named_seed(seed, self.name()));
        match self {
            Suite::Phase => phase_suite(&mut rng),
            Suite::Fock => fock_suite(&mut rng),
            Suite::Hierarchy => hierarchy_suite(&mut rng),
            Suite::Eclectic => eclectic_suite(&mut rng),
            Suite::Open => open_suite(&mut rng, named_seed(seed, "open/sse")),
        }
    }
}

/// FNV-1a of `name` folded with `seed`.
pub fn named_seed(seed: u64, name: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes().chain(seed.to_le_bytes()) {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub checks: Vec<Check>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub schema: &'static str,
    pub command: &'static str,
    pub seed: u64,
    pub suites: Vec<SuiteReport>,
    pub failing: Vec<String>,
    pub pass: bool,
}

/// Runs the suites in order and applies tolerance overrides by check name.
/// Override names that match no check are an argument error.
pub fn run_suites(suites: &[Suite], seed: u64, tolerances: &Tolerances) -> Result<VerifyReport> {
    run_suites_with_model(suites, seed, tolerances, None)
}

/// As `run_suites`, with an extra `model` section for a user-supplied Hamiltonian.
pub fn run_suites_with_model(
    suites: &[Suite],
    seed: u64,
    tolerances: &Tolerances,
    model: Option<&KLocalHamiltonian>,
) -> Result<VerifyReport> {
    let mut sections = Vec::with_capacity(suites.len() + 1);
    for &suite in suites {
        sections.push((suite.name().to_string(), suite.run(seed)?));
    }
    if let Some(h) = model {
        sections.push(("model".to_string(), model_checks(h, seed)?));
    }
    let mut reports = Vec::with_capacity(sections.len());
    for (suite, mut checks) in sections {
        for c in &mut checks {
            tolerances.apply(c);
        }
        let pass = checks.iter().all(|c| c.pass);
        reports.push(SuiteReport { suite, checks, pass });
    }
    let known: Vec<&str> = reports.iter().flat_map(|r| r.checks.iter().map(|c| c.name.as_str())).collect();
    if let Some(bad) = tolerances.names().find(|n| !known.contains(n)) {
        return Err(Error::arg(format!("--tol names unknown check {bad:?}")));
    }
    let failing: Vec<String> = reports
        .iter()
        .flat_map(|r| r.checks.iter().filter(|c| !c.pass).map(move |c| format!("{}/{}", r.suite, c.name)))
        .collect();
    Ok(VerifyReport { schema: SCHEMA, command: "verify", seed, pass: failing.is_empty(), suites: reports, failing })
}

/// Energy identity on 20 random states in both layouts, plus padding neutrality.
pub fn model_checks(h: &KLocalHamiltonian, seed: u64) -> Result<Vec<Check>> {
    let mut rng = seeded(named_seed(seed, "model"));
    let dim = h.shape()?.total_dim()?;
    let systems =
        [build_eclectic(h, Layout::PaddedTensor)?, build_eclectic(h, Layout::PerTermDirectSum)?];
    let (mut padded, mut direct, mut normalized) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..20 {
        let psi = random_state(dim, &mut rng);
        for sys in &systems {
            let r = verify_energy_identity(&psi, sys, h)?;
            let slot = if sys.layout == Layout::PaddedTensor { &mut padded } else { &mut direct };
            *slot = slot.max(r.total.delta);
            normalized = normalized.max((r.normalized_e_eclectic - r.total.e_full).abs());
        }
    }
    let (phys, pad) = systems[0].padding_defect(h)?;
    Ok(vec![
        Check::new("model_energy_identity_padded", padded, ENERGY_TOL),
        Check::new("model_energy_identity_direct_sum", direct, ENERGY_TOL),
        Check::new("model_energy_identity_normalized_convention", normalized, ENERGY_TOL),
        Check::new("model_padding_neutrality", phys.max(pad), 1e-300),
    ])
}

fn max_of(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, f64::max)
}

/// Hamiltonization: bracket identities and symplectic integration.
fn phase_suite(rng: &mut Rng64) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let (mut bracket, mut jacobi) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let d = rng.random_range(1..=6usize);
        let f = ObservableField::new(random_hermitian(d, rng))?;
        let g = ObservableField::new(random_hermitian(d, rng))?;
        let e = ObservableField::new(random_hermitian(d, rng))?;
        let p = PhaseSpacePoint::from_state(&random_state(d, rng));
        bracket = bracket.max(poisson_bracket_classical(&f, &g, &p)?.residual());
        jacobi = jacobi.max(jacobi_residual_classical(&f, &g, &e, &p)?);
    }
    checks.push(Check::new("classical_bracket_vs_commutator", bracket, 1e-10));
    checks.push(Check::new("classical_jacobi", jacobi, 1e-9));

    let (mut energy, mut norm) = (0.0f64, 0.0f64);
    for _ in 0..4 {
        let d = rng.random_range(1..=8usize);
        let sys = hamiltonize(&random_hermitian(d, rng))?;
        let p0 = PhaseSpacePoint::from_state(&random_state(d, rng));
        let traj = integrate_sampled(&sys, &p0, 1e-3, 10_000, SymplecticMethod::ImplicitMidpoint, 500)?;
        energy = energy.max(traj.max_energy_drift());
        norm = norm.max(traj.max_norm_drift());
    }
    checks.push(Check::new("midpoint_energy_drift_t10", energy, 1e-8));
    checks.push(Check::new("midpoint_norm_drift_t10", norm, 1e-8));

    let d = rng.random_range(2..=8usize);
    let h = random_hermitian(d, rng);
    let psi = random_state(d, rng);
    let sys = hamiltonize(&h)?;
    let exact = evolve_exact(&h, &psi, 1.0)?;
    let error = |dt: f64| -> Result<f64> {
        let steps = (1.0 / dt).round() as usize;
        let traj = integrate_sampled(&sys, &PhaseSpacePoint::from_state(&psi), dt, steps, SymplecticMethod::ImplicitMidpoint, steps)?;
        let last = traj.points.last().expect("nonempty trajectory").to_state()?;
        Ok(last.max_abs_diff(&exact))
    };
    let ratio = error(0.02)? / error(0.01)?;
    checks.push(Check::new("midpoint_order2_ratio_deviation", (ratio - 4.0).abs(), 0.5));
    Ok(checks)
}

fn fock_space(modes: usize, stats: Statistics, cutoff: usize) -> Result<Arc<FockSpace>> {
    Ok(Arc::new(build_fock_space(modes, stats, cutoff)?))
}

/// Ladder statistics, the field equation, and the quantum bracket.
fn fock_suite(rng: &mut Rng64) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let fermi = max_of((1..=6).map(|d| fock_space(d, Statistics::Fermion, 0).map(|s| check_statistics(&s).max_full)).collect::<Result<Vec<_>>>()?);
    checks.push(Check::new("fermion_car_full_space", fermi, 1e-13));
    let mut bose = 0.0f64;
    for d in 1..=4 {
        for n in 1..=5 {
            bose = bose.max(check_statistics(&fock_space(d, Statistics::Boson, n)?).max_restricted);
        }
    }
    checks.push(Check::new("boson_ccr_safe_sector", bose, 1e-13));

    let (mut field_b, mut field_f) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let d = rng.random_range(1..=4usize);
        let h = random_hermitian(d, rng);
        field_b = field_b.max(heisenberg_field_residuals(&fock_space(d, Statistics::Boson, 3)?, &h)?.0);
        field_f = field_f.max(heisenberg_field_residuals(&fock_space(d, Statistics::Fermion, 0)?, &h)?.0);
    }
    checks.push(Check::new("field_equation_boson", field_b, 1e-12));
    checks.push(Check::new("field_equation_fermion", field_f, 1e-12));

    let (mut ident, mut jacobi, mut equal) = (0.0f64, 0.0f64, 0.0f64);
    for r in 0..100 {
        let d = rng.random_range(1..=3usize);
        let space = if r % 2 == 0 { fock_space(d, Statistics::Boson, 3)? } else { fock_space(d, Statistics::Fermion, 0)? };
        let f = second_quantize_observable(&random_hermitian(d, rng), &space)?;
        let g = second_quantize_observable(&random_hermitian(d, rng), &space)?;
        let e = second_quantize_observable(&random_hermitian(d, rng), &space)?;
        ident = ident.max(bracket_identity_residual(&f, &g)?);
        jacobi = jacobi.max(quantum_jacobi_residual(&f, &g, &e)?);
        equal = equal.max(equal_time_residual(f.form().expect("form"), g.form().expect("form"), &space)?);
    }
    checks.push(Check::new("quantum_bracket_vs_commutator", ident, 1e-10));
    checks.push(Check::new("quantum_jacobi", jacobi, 1e-9));
    checks.push(Check::new("equal_time_commutator_lift", equal, 1e-10));

    let (mut liouville, mut bracket) = (0.0f64, 0.0f64);
    for _ in 0..10 {
        let d = rng.random_range(2..=3usize);
        let space = fock_space(d, Statistics::Boson, 2)?;
        let state = SecondQuantizedState::from_density(&random_density(d, rng), &space)?;
        let v = von_neumann_residual(&state, &random_hermitian(d, rng))?;
        liouville = liouville.max(v.liouville);
        bracket = bracket.max(v.bracket);
    }
    checks.push(Check::new("von_neumann_liouville", liouville, 1e-10));
    checks.push(Check::new("von_neumann_bracket", bracket, 1e-10));
    Ok(checks)
}

/// Worked examples of the hierarchy and faithfulness of random lifts.
fn hierarchy_suite(rng: &mut Rng64) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let prefixed = |prefix: &str, list: Vec<Check>| -> Vec<Check> {
        list.into_iter().map(|c| Check { name: format!("{prefix}_{}", c.name), ..c }).collect()
    };
    checks.extend(prefixed("oscillator", oscillator_demo(1.0, 5)?.checks));
    checks.extend(prefixed("qubit", qubit_demo(&pauli::z(), 2, rng)?.checks));
    checks.extend(prefixed("quartic_weyl", potential_demo(&[0.0, 0.0, 1.0, 0.0, 0.5], Ordering::Weyl, 6)?.checks));
    checks.extend(prefixed("quartic_normal", potential_demo(&[0.0, 0.0, 1.0, 0.0, 0.5], Ordering::Normal, 6)?.checks));

    let mut block = 0.0f64;
    for _ in 0..20 {
        let d = rng.random_range(1..=4usize);
        let h = random_hermitian(d, rng);
        for space in [fock_space(d, Statistics::Boson, 2)?, fock_space(d, Statistics::Fermion, 0)?] {
            block = block.max(one_excitation_block(&second_quantize_hamiltonian(&h, &space)?)?.max_abs_diff(&h));
        }
    }
    checks.push(Check::new("random_lift_one_excitation_block", block, 1e-13));
    Ok(checks)
}

/// Energy identity on random models, dimension accounting, field blocks.
fn eclectic_suite(rng: &mut Rng64) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let (mut padded, mut direct, mut normalized, mut neutral) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..100 {
        let (h, psi) = random_instance(rng)?;
        for layout in [Layout::PaddedTensor, Layout::PerTermDirectSum] {
            let sys = build_eclectic(&h, layout)?;
            let r = verify_energy_identity(&psi, &sys, &h)?;
            let slot = if layout == Layout::PaddedTensor { &mut padded } else { &mut direct };
            *slot = slot.max(r.total.delta);
            normalized = normalized.max((r.normalized_e_eclectic - r.total.e_full).abs());
            let (phys, pad) = sys.padding_defect(&h)?;
            neutral = neutral.max(phys).max(pad);
        }
    }
    checks.push(Check::new("energy_identity_padded", padded, 1e-9));
    checks.push(Check::new("energy_identity_direct_sum", direct, 1e-9));
    checks.push(Check::new("energy_identity_normalized_convention", normalized, 1e-9));
    checks.push(Check::new("padding_neutrality", neutral, 1e-300));

    let table = chain_dimension_sweep(2..=14);
    let mismatch = table.rows.iter().any(|r| {
        let n = r.n as u32;
        r.full != 2u128.pow(n) || r.padded != (2 * r.n as u128).pow(2) || r.direct_sum != 4 * (2 * r.n as u128 - 1)
    });
    checks.push(Check::flag("dimension_sweep_formulas", !mismatch));
    let row10 = table.rows.iter().find(|r| r.n == 10).expect("n = 10 in sweep");
    checks.push(Check::flag("dimension_n10_1024_vs_400", row10.full == 1024 && row10.padded == 400));
    checks.push(Check::flag(
        "dimension_small_n_crossover_flagged",
        table.padded_crossover == Some(9) && table.warnings.iter().any(|w| w.starts_with("n=2:")),
    ));

    let h = heisenberg_chain(3, 1.0, 0.4)?;
    let field = second_quantized_many_body(&h, FieldConfig::default())?;
    let mut blocks = 0.0f64;
    for (b, t) in field.blocks.iter().zip(&h.terms) {
        blocks = blocks.max(one_excitation_block(b)?.max_abs_diff(&t.matrix));
    }
    checks.push(Check::new("field_blocks_one_excitation", blocks, 1e-13));
    let mut equiv = 0.0f64;
    for _ in 0..20 {
        let psi = random_state(8, rng);
        equiv = equiv.max((field_energy(&h, &field, &psi)? - h.energy(&psi)?).abs());
    }
    checks.push(Check::new("field_energy_equivalence", equiv, 1e-10));
    Ok(checks)
}

/// Master equation, lift consistency, Kraus duality, and the jump ensemble.
fn open_suite(rng: &mut Rng64, sse_seed: u64) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let damping = amplitude_damping(1.0)?;
    let rho0 = Operator::diag_real(&[0.0, 1.0]);
    let times = [0.5, 1.0, 2.0, 4.0];
    let series = lindblad_series(&damping, &rho0, &times, default_dt(4.0))?;
    let closed = max_of(times.iter().zip(&series).map(|(t, rho)| (rho.get(1, 1).re - (-t).exp()).abs()));
    checks.push(Check::new("amplitude_damping_closed_form", closed, 1e-6));
    let fixed = lindblad_series(&damping, &rho0, &[20.0], default_dt(20.0))?;
    checks.push(Check::new("amplitude_damping_fixed_point", fixed[0].max_abs_diff(&Operator::diag_real(&[1.0, 0.0])), 1e-6));

    let (mut trace, mut positivity) = (0.0f64, 0.0f64);
    for d in [2usize, 3, 4] {
        let m = random_lindblad(d, rng)?;
        let rho = random_density(d, rng);
        for r in lindblad_series(&m, &rho, &[1.0, 5.0, 20.0], default_dt(20.0))? {
            let health = density_health(&r)?;
            trace = trace.max(health.trace_error);
            positivity = positivity.max(-health.min_eigenvalue);
        }
    }
    checks.push(Check::new("lindblad_trace_preservation", trace, 1e-8));
    checks.push(Check::new("lindblad_positivity", positivity, 1e-8));

    let (mut obs, mut state, mut vacuum) = (0.0f64, 0.0f64, 0.0f64);
    for r in 0..50 {
        let d = 1 + r % 3;
        let m = random_lindblad(d, rng)?;
        let space = if r % 2 == 0 { fock_space(d, Statistics::Boson, 3)? } else { fock_space(d, Statistics::Fermion, 0)? };
        obs = obs.max(second_quantized_lindblad_observable(&m, &random_hermitian(d, rng), &space)?.residual);
        let sq = SecondQuantizedState::from_density(&random_density(d, rng), &fock_space(d, Statistics::Boson, 2)?)?;
        let s = second_quantized_lindblad_state(&m, &sq)?;
        state = state.max(s.lift);
        vacuum = vacuum.max(s.vacuum);
    }
    checks.push(Check::new("lindblad_observable_lift", obs, 1e-10));
    checks.push(Check::new("lindblad_state_lift", state, 1e-10));
    checks.push(Check::new("lindblad_state_vacuum_reduction", vacuum, 1e-10));

    let mut duality = 0.0f64;
    for _ in 0..20 {
        let d = rng.random_range(2..=3usize);
        let count = rng.random_range(1..=3usize);
        let map = KrausMap::new((0..count).map(|_| random_operator(d, rng).scale_real(0.5)).collect())?;
        duality = duality.max(kraus_duality_residual(&map, &random_density(d, rng), &random_hermitian(d, rng))?);
    }
    checks.push(Check::new("kraus_duality", duality, 1e-12));

    let n_traj = 10_000;
    let report = compare_ensemble(&damping, &StateVector::basis(2, 1)?, &[0.2, 0.4, 0.6, 0.8, 1.0], 1e-3, n_traj, sse_seed)?;
    let ratio = max_of(report.comparison.iter().map(|c| c.population_ratio));
    checks.push(Check::new("sse_damping_3sigma_ratio", ratio, 1.0));
    let l1 = max_of(report.comparison.iter().map(|c| c.l1_error * (n_traj as f64).sqrt() / 5.0));
    checks.push(Check::new("sse_damping_l1_over_bound", l1, 1.0));
    checks.push(Check::new("sse_norm_error", report.norm_error_max, 1e-8));
    Ok(checks)
}
