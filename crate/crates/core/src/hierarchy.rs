//! The quantization hierarchy: alternating hamiltonization (`H_i -> Sigma_i`)
//! and second quantization (`Sigma_i -> H_{i+1}`), with the worked examples.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fock::{
    annihilators, build_fock_space, one_excitation_block, one_excitation_state, second_quantize_hamiltonian,
    FockOperator, FockSpace, Statistics,
};
use crate::hamiltonization::{
    ehrenfest_reduce, hamiltonize, integrate_sampled, ClassicalSystem, ObservableField, PhaseSpacePoint,
    SymplecticMethod,
};
use crate::hilbert::{c, cr, expectation, Operator, StateVector, C64};
use crate::random::{random_state, Rng64};
use crate::report::{truncate_spectrum, Check};

/// Cutoff used for lifts into level 2 and above when none is given.
pub const HIGH_LEVEL_CUTOFF: usize = 2;
/// Largest mode count accepted for lifts into level 2 and above.
pub const HIGH_LEVEL_MAX_MODES: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelKind {
    PhaseSpace,
    Hilbert,
}

#[derive(Debug, Clone)]
pub enum Payload {
    Classical(ClassicalSystem),
    /// A Hamiltonian matrix; second-quantized levels also carry their Fock space.
    Quantum { h: Operator, space: Option<Arc<FockSpace>> },
}

#[derive(Debug, Clone)]
pub struct HierarchyLevel {
    pub index: usize,
    pub payload: Payload,
    pub provenance: String,
}

impl HierarchyLevel {
    pub fn hilbert(index: usize, h: Operator, provenance: impl Into<String>) -> Result<Self> {
        h.require_hermitian("hamiltonian")?;
        Ok(Self { index, payload: Payload::Quantum { h, space: None }, provenance: provenance.into() })
    }

    pub fn phase_space(index: usize, sys: ClassicalSystem, provenance: impl Into<String>) -> Self {
        Self { index, payload: Payload::Classical(sys), provenance: provenance.into() }
    }

    pub fn kind(&self) -> LevelKind {
        match self.payload {
            Payload::Classical(_) => LevelKind::PhaseSpace,
            Payload::Quantum { .. } => LevelKind::Hilbert,
        }
    }

    /// Complex dimension of the level.
    pub fn dim(&self) -> usize {
        match &self.payload {
            Payload::Classical(s) => s.dim(),
            Payload::Quantum { h, .. } => h.dim(),
        }
    }

    /// The Hamiltonian matrix (of the energy function for phase-space levels).
    pub fn matrix(&self) -> &Operator {
        match &self.payload {
            Payload::Classical(s) => s.h_matrix(),
            Payload::Quantum { h, .. } => h,
        }
    }

    pub fn label(&self) -> String {
        match self.kind() {
            LevelKind::PhaseSpace => format!("Sigma_{}", self.index),
            LevelKind::Hilbert => format!("H_{}", self.index),
        }
    }
}

/// Applies one map of the hierarchy. `cutoff` is `N_tot` for bosonic targets.
pub fn lift(level: &HierarchyLevel, cutoff: Option<usize>, statistics: Statistics) -> Result<HierarchyLevel> {
    match &level.payload {
        Payload::Quantum { h, .. } => {
            let sys = hamiltonize(h)?;
            Ok(HierarchyLevel::phase_space(level.index, sys, format!("hamiltonization of {}", level.label())))
        }
        Payload::Classical(sys) => {
            let index = level.index + 1;
            let modes = sys.dim();
            let cutoff = match (cutoff, statistics) {
                (Some(n), _) => n,
                (None, Statistics::Fermion) => 0,
                (None, Statistics::Boson) if index >= 2 => HIGH_LEVEL_CUTOFF,
                (None, Statistics::Boson) => {
                    return Err(Error::arg(format!("lifting {} to a bosonic space needs a cutoff", level.label())))
                }
            };
            if index >= 2 && modes > HIGH_LEVEL_MAX_MODES {
                return Err(Error::arg(format!(
                    "refusing to lift {} with {modes} modes into level {index} (limit {HIGH_LEVEL_MAX_MODES})",
                    level.label()
                )));
            }
            let space = Arc::new(build_fock_space(modes, statistics, cutoff)?);
            let hh = second_quantize_hamiltonian(sys.h_matrix(), &space)?;
            Ok(HierarchyLevel {
                index,
                payload: Payload::Quantum { h: hh.matrix().clone(), space: Some(space) },
                provenance: format!("second quantization of {} on {modes} {statistics} modes", level.label()),
            })
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LiftLog {
    pub from: String,
    pub to: String,
    pub previous_dim: usize,
    pub new_dim: usize,
}

#[derive(Debug, Clone)]
pub struct HierarchyChain {
    pub levels: Vec<HierarchyLevel>,
    /// Cutoff used by each quantization step, in order.
    pub cutoffs: Vec<Option<usize>>,
    pub log: Vec<LiftLog>,
}

impl HierarchyChain {
    pub fn new(start: HierarchyLevel) -> Self {
        Self { levels: vec![start], cutoffs: Vec::new(), log: Vec::new() }
    }

    pub fn last(&self) -> &HierarchyLevel {
        self.levels.last().expect("chains are nonempty")
    }

    pub fn push_lift(&mut self, cutoff: Option<usize>, statistics: Statistics) -> Result<&HierarchyLevel> {
        let prev = self.last();
        let next = lift(prev, cutoff, statistics)?;
        let entry = LiftLog { from: prev.label(), to: next.label(), previous_dim: prev.dim(), new_dim: next.dim() };
        if prev.kind() == LevelKind::PhaseSpace {
            let used = match &next.payload {
                Payload::Quantum { space: Some(s), .. } => s.cutoff(),
                _ => None,
            };
            self.cutoffs.push(used);
        }
        self.log.push(entry);
        self.levels.push(next);
        Ok(self.last())
    }

    pub fn alternates(&self) -> bool {
        self.levels.windows(2).all(|w| w[0].kind() != w[1].kind())
    }

    /// Maps a state at position `i` to one of equal energy at position `i + 1`.
    pub fn energy_match_state(&self, i: usize, psi: &StateVector) -> Result<StateVector> {
        let (Some(src), Some(dst)) = (self.levels.get(i), self.levels.get(i + 1)) else {
            return Err(Error::arg(format!("no adjacent levels at position {i}")));
        };
        energy_match_state(src, dst, psi)
    }
}

/// A state at `dst` with the energy of `psi` at `src`: the phase-space point
/// itself after hamiltonization, its one-excitation image after quantization.
/// The zero vector maps to the vacuum.
pub fn energy_match_state(src: &HierarchyLevel, dst: &HierarchyLevel, psi: &StateVector) -> Result<StateVector> {
    if psi.dim() != src.dim() {
        return Err(Error::arg("state dimension does not match the source level"));
    }
    match (&src.payload, &dst.payload) {
        (Payload::Quantum { .. }, Payload::Classical(_)) => Ok(psi.clone()),
        (Payload::Classical(_), Payload::Quantum { space: Some(space), .. }) => {
            if psi.norm() == 0.0 {
                return Ok(space.vacuum());
            }
            one_excitation_state(psi, space)
        }
        _ => Err(Error::arg("levels are not connected by a single map")),
    }
}

/// Energy of `psi` at a level.
pub fn level_energy(level: &HierarchyLevel, psi: &StateVector) -> Result<f64> {
    Ok(expectation(psi, level.matrix())?.re)
}

/// Energies in one total-number sector.
#[derive(Debug, Clone, Serialize)]
pub struct SectorSpectrum {
    pub n: usize,
    pub energies: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumReport {
    pub h1_spectrum: Vec<f64>,
    pub sectors: Vec<SectorSpectrum>,
    /// Max deviation of the sorted one-excitation spectrum from `h1_spectrum`.
    pub containment_residual: f64,
    pub h2_ground_energy: f64,
    pub h2_ground_sector: usize,
    /// True when the ground state of `h2` is not the image of the ground state of `h1`.
    pub ground_state_mismatch: bool,
}

pub fn spectrum_compare(h1: &Operator, h2: &FockOperator) -> Result<SpectrumReport> {
    let block = one_excitation_block(h2)?;
    let h1_spectrum = h1.eigenvalues()?;
    let one = block.eigenvalues()?;
    if one.len() != h1_spectrum.len() {
        return Err(Error::arg("h2 is not built on h1's mode count"));
    }
    let containment_residual = one.iter().zip(&h1_spectrum).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let space = h2.space();
    let mut sectors = Vec::new();
    let (mut ground, mut ground_sector) = (f64::INFINITY, 0);
    for n in 0..=space.max_total() {
        let energies = h2.sector_block(n).eigenvalues()?;
        if energies[0] < ground - 1e-12 {
            ground = energies[0];
            ground_sector = n;
        }
        sectors.push(SectorSpectrum { n, energies });
    }
    let ground_state_mismatch = ground_sector != 1 || (ground - h1_spectrum[0]).abs() > 1e-12;
    Ok(SpectrumReport {
        h1_spectrum,
        sectors,
        containment_residual,
        h2_ground_energy: ground,
        h2_ground_sector: ground_sector,
        ground_state_mismatch,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelSummary {
    pub label: String,
    pub kind: LevelKind,
    pub dim: usize,
    pub provenance: String,
    pub spectrum: Vec<f64>,
}

fn summarize(chain: &HierarchyChain) -> Result<Vec<LevelSummary>> {
    chain
        .levels
        .iter()
        .map(|l| {
            Ok(LevelSummary {
                label: l.label(),
                kind: l.kind(),
                dim: l.dim(),
                provenance: l.provenance.clone(),
                spectrum: truncate_spectrum(&l.matrix().eigenvalues()?),
            })
        })
        .collect()
}

/// One-excitation faithfulness of every quantization step in a chain.
fn faithfulness_checks(chain: &HierarchyChain) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for w in chain.levels.windows(2) {
        if let (Payload::Classical(sys), Payload::Quantum { h, space: Some(space) }) = (&w[0].payload, &w[1].payload) {
            let hh = FockOperator::new(space.clone(), h.clone())?;
            let block = one_excitation_block(&hh)?;
            checks.push(Check::new(
                format!("one_excitation_{}_vs_{}", w[1].label(), w[0].label()),
                block.max_abs_diff(sys.h_matrix()),
                1e-13,
            ));
        }
    }
    Ok(checks)
}

/// Energy matching on random states for every adjacent pair.
fn energy_match_checks(chain: &HierarchyChain, rng: &mut Rng64, trials: usize) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for i in 0..chain.levels.len() - 1 {
        let (src, dst) = (&chain.levels[i], &chain.levels[i + 1]);
        let mut worst = 0.0f64;
        for _ in 0..trials {
            let psi = random_state(src.dim(), rng);
            let chi = energy_match_state(src, dst, &psi)?;
            worst = worst.max((level_energy(src, &psi)? - level_energy(dst, &chi)?).abs());
        }
        checks.push(Check::new(format!("energy_match_{}_to_{}", src.label(), dst.label()), worst, 1e-12));
    }
    Ok(checks)
}

#[derive(Debug, Clone, Serialize)]
pub struct OscillatorReport {
    pub omega: f64,
    pub cutoff: usize,
    pub levels: Vec<LevelSummary>,
    pub lifts: Vec<LiftLog>,
    pub h1_spectrum: Vec<f64>,
    pub checks: Vec<Check>,
}

/// `x = (a + a^dagger)/2`, `p = (a - a^dagger)/(2i)` for the chart `a = x + ip`.
pub fn quadratures(space: &Arc<FockSpace>) -> (Operator, Operator) {
    let a = &annihilators(space)[0];
    let ad = a.adjoint();
    let x = (a + &ad).scale_real(0.5);
    let p = (a - &ad).scale(c(0.0, -0.5));
    (x, p)
}

/// Truncated coherent state with amplitude `alpha`, renormalized.
pub fn coherent_state(alpha: C64, space: &FockSpace) -> Result<StateVector> {
    let mut amps = vec![C64::new(0.0, 0.0); space.dim()];
    let mut term = cr(1.0);
    for (n, slot) in amps.iter_mut().enumerate() {
        if n > 0 {
            term *= alpha / (n as f64).sqrt();
        }
        *slot = term;
    }
    StateVector::new(amps)?.normalize()
}

/// The harmonic-oscillator chain `[omega] -> Sigma_0 -> H_1 -> Sigma_1 -> H_2`.
pub fn oscillator_demo(omega: f64, cutoff: usize) -> Result<OscillatorReport> {
    let h0 = Operator::diag_real(&[omega]);
    let mut chain = HierarchyChain::new(HierarchyLevel::hilbert(0, h0, "single phonon [omega]")?);
    chain.push_lift(None, Statistics::Boson)?;
    let mut checks = Vec::new();

    // Sigma_0: H_0(a) = omega |a|^2, i.e. omega (x^2 + p^2) on a = x + ip.
    let sys0 = match &chain.last().payload {
        Payload::Classical(s) => s.clone(),
        Payload::Quantum { .. } => unreachable!("hamiltonization yields a phase-space level"),
    };
    let mut chart = 0.0f64;
    for k in 0..20 {
        let (x, p) = (-2.0 + 0.2 * k as f64, 1.5 - 0.15 * k as f64);
        let e = sys0.energy(&PhaseSpacePoint::from_real(&[x], &[p]))?;
        chart = chart.max((e - omega * (x * x + p * p)).abs());
    }
    checks.push(Check::new("sigma0_chart_energy", chart, 1e-12));

    // Classical orbit of Sigma_0 is a circle.
    let a0 = PhaseSpacePoint::new(vec![c(0.6, -0.3)]);
    let traj = integrate_sampled(&sys0, &a0, 1e-3, 10_000, SymplecticMethod::ImplicitMidpoint, 100)?;
    let r0 = a0.norm_sqr().sqrt();
    let circle = traj.points.iter().map(|p| (p.norm_sqr().sqrt() - r0).abs()).fold(0.0, f64::max);
    checks.push(Check::new("sigma0_orbit_radius", circle, 1e-9));

    chain.push_lift(Some(cutoff), Statistics::Boson)?;
    let h1 = chain.last().matrix().clone();
    let h1_spectrum = h1.eigenvalues()?;
    let integer = h1_spectrum
        .iter()
        .enumerate()
        .map(|(k, e)| (e - k as f64 * omega).abs())
        .fold(0.0, f64::max);
    checks.push(Check::new("h1_spectrum_integer_multiples", integer, 1e-12));

    checks.push(ehrenfest_check(omega)?);

    chain.push_lift(None, Statistics::Boson)?;
    chain.push_lift(None, Statistics::Boson)?;
    checks.extend(faithfulness_checks(&chain)?);
    checks.push(Check::flag("alternation", chain.alternates()));
    Ok(OscillatorReport {
        omega,
        cutoff,
        levels: summarize(&chain)?,
        lifts: chain.log.clone(),
        h1_spectrum: truncate_spectrum(&h1_spectrum),
        checks,
    })
}

/// `d<x>/dt` against the phase-space field at `(<x>, <p>)` for a coherent state
/// of the 40-excitation oscillator. With `omega = 2 dx ^ dy` the field is
/// `xdot = 1/2 dH_0/dp = omega p` and `pdot = -1/2 dH_0/dx = -omega x`.
fn ehrenfest_check(omega: f64) -> Result<Check> {
    let space = Arc::new(build_fock_space(1, Statistics::Boson, 40)?);
    let hh = second_quantize_hamiltonian(&Operator::diag_real(&[omega]), &space)?;
    let (x, p) = quadratures(&space);
    let obs = [ObservableField::new(x)?, ObservableField::new(p)?];
    let psi0 = coherent_state(c(0.8, 0.5), &space)?;
    let step = 1e-3;
    let mut worst = 0.0f64;
    for t in [0.0, 0.5, 1.3, 2.9] {
        let s = ehrenfest_reduce(hh.matrix(), &psi0, &obs, &[t - step, t, t + step])?;
        let (xs, ps) = (&s[0], &s[1]);
        let xdot = (xs[2] - xs[0]) / (2.0 * step);
        let pdot = (ps[2] - ps[0]) / (2.0 * step);
        let (dh_dp, dh_dx) = (2.0 * omega * ps[1], 2.0 * omega * xs[1]);
        worst = worst.max((xdot - 0.5 * dh_dp).abs()).max((pdot + 0.5 * dh_dx).abs());
    }
    Ok(Check::new("ehrenfest_oscillator_n40", worst, 1e-6))
}

/// Operator ordering used to substitute ladder operators into `a*^r a^s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Ordering {
    /// Symmetric average over all orderings of the factors.
    #[default]
    Weyl,
    /// `a^dagger^r a^s`.
    Normal,
}

/// Coefficients `c[r][s]` of `a*^r a^s` in a polynomial of total degree <= 4.
pub type ChartPolynomial = [[C64; 5]; 5];

fn poly_mul(p: &ChartPolynomial, q: &ChartPolynomial) -> Result<ChartPolynomial> {
    let mut out = [[C64::new(0.0, 0.0); 5]; 5];
    for r1 in 0..5 {
        for s1 in 0..5 {
            if p[r1][s1] == C64::new(0.0, 0.0) {
                continue;
            }
            for r2 in 0..5 {
                for s2 in 0..5 {
                    if q[r2][s2] == C64::new(0.0, 0.0) {
                        continue;
                    }
                    if r1 + r2 + s1 + s2 > 4 {
                        return Err(Error::Unsupported("chart polynomial degree exceeds 4".into()));
                    }
                    out[r1 + r2][s1 + s2] += p[r1][s1] * q[r2][s2];
                }
            }
        }
    }
    Ok(out)
}

/// Expands `p^2 + sum_k v_k x^k` into `sum c_rs a*^r a^s` on `a = x + ip`.
pub fn chart_expand(v: &[f64]) -> Result<ChartPolynomial> {
    let degree = v.iter().rposition(|&x| x != 0.0).unwrap_or(0);
    if degree > 4 {
        return Err(Error::Unsupported(format!("potential degree {degree} exceeds 4")));
    }
    let zero = C64::new(0.0, 0.0);
    let mut x = [[zero; 5]; 5];
    x[0][1] = cr(0.5);
    x[1][0] = cr(0.5);
    let mut p = [[zero; 5]; 5];
    p[0][1] = c(0.0, -0.5);
    p[1][0] = c(0.0, 0.5);
    let mut total = poly_mul(&p, &p)?;
    let mut power = [[zero; 5]; 5];
    power[0][0] = cr(1.0);
    for (k, &vk) in v.iter().enumerate().take(degree + 1) {
        if k > 0 {
            power = poly_mul(&power, &x)?;
        }
        for r in 0..5 {
            for s in 0..5 {
                total[r][s] += power[r][s] * vk;
            }
        }
    }
    Ok(total)
}

/// Evaluates `sum c_rs conj(a)^r a^s`.
pub fn chart_eval(poly: &ChartPolynomial, a: C64) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for (r, row) in poly.iter().enumerate() {
        for (s, &coef) in row.iter().enumerate() {
            acc += coef * a.conj().powu(r as u32) * a.powu(s as u32);
        }
    }
    acc
}

/// Substitutes ladder operators into the chart polynomial on a single-mode
/// space truncated at `cutoff`. Products are formed in a space padded by four
/// excitations and then truncated, so the retained block is exact.
pub fn substitute(poly: &ChartPolynomial, ordering: Ordering, cutoff: usize) -> Result<Operator> {
    let padded = Arc::new(build_fock_space(1, Statistics::Boson, cutoff + 4)?);
    let a = annihilators(&padded).remove(0);
    let ad = a.adjoint();
    let dim = padded.dim();
    let mut acc = Operator::zeros(dim);
    for (r, row) in poly.iter().enumerate() {
        for (s, &coef) in row.iter().enumerate() {
            if coef == C64::new(0.0, 0.0) {
                continue;
            }
            let term = match ordering {
                Ordering::Normal => {
                    let mut t = Operator::identity(dim);
                    for _ in 0..r {
                        t = &t * &ad;
                    }
                    for _ in 0..s {
                        t = &t * &a;
                    }
                    t
                }
                Ordering::Weyl => {
                    let len = r + s;
                    let mut sum = Operator::zeros(dim);
                    let mut count = 0usize;
                    for mask in 0u32..(1 << len) {
                        if mask.count_ones() as usize != r {
                            continue;
                        }
                        let mut t = Operator::identity(dim);
                        for bit in 0..len {
                            t = if mask >> bit & 1 == 1 { &t * &ad } else { &t * &a };
                        }
                        sum = &sum + &t;
                        count += 1;
                    }
                    sum.scale_real(1.0 / count as f64)
                }
            };
            acc = &acc + &term.scale(coef);
        }
    }
    let keep: Vec<usize> = (0..=cutoff).collect();
    Ok(acc.submatrix(&keep))
}

#[derive(Debug, Clone, Serialize)]
pub struct PotentialReport {
    pub potential: Vec<f64>,
    pub ordering: Ordering,
    pub cutoff: usize,
    /// Nonzero chart coefficients as `(r, s, re, im)` for `a*^r a^s`.
    pub chart_coefficients: Vec<(usize, usize, f64, f64)>,
    pub levels: Vec<LevelSummary>,
    pub lifts: Vec<LiftLog>,
    pub checks: Vec<Check>,
}

/// `p^2 + V(x)` with `V = sum_k v[k] x^k`, degree <= 4: chart expansion,
/// operator substitution into `H_1`, and one lift to `H_2`.
pub fn potential_demo(v: &[f64], ordering: Ordering, cutoff: usize) -> Result<PotentialReport> {
    let poly = chart_expand(v)?;
    let mut checks = Vec::new();
    let mut chart = 0.0f64;
    for k in 0..20 {
        let x = -1.5 + 3.0 * k as f64 / 19.0;
        let p = 1.2 * ((k * 7) % 20) as f64 / 19.0 - 0.6;
        let direct = p * p + v.iter().enumerate().map(|(j, &vj)| vj * x.powi(j as i32)).sum::<f64>();
        let z = chart_eval(&poly, c(x, p));
        chart = chart.max((z.re - direct).abs()).max(z.im.abs());
    }
    checks.push(Check::new("chart_consistency_grid20", chart, 1e-8));

    let h1 = substitute(&poly, ordering, cutoff)?;
    checks.push(Check::new("h1_hermitian", h1.hermiticity_defect(), 1e-12));
    if ordering == Ordering::Weyl {
        // Weyl ordering of p^2 + V(x) is the operator p^2 + V(x) itself.
        let padded = Arc::new(build_fock_space(1, Statistics::Boson, cutoff + 4)?);
        let (xo, po) = quadratures(&padded);
        let mut direct = &po * &po;
        let mut xk = Operator::identity(padded.dim());
        for (k, &vk) in v.iter().enumerate() {
            if k > 0 {
                xk = &xk * &xo;
            }
            direct = &direct + &xk.scale_real(vk);
        }
        let keep: Vec<usize> = (0..=cutoff).collect();
        checks.push(Check::new("weyl_matches_quadrature_substitution", h1.max_abs_diff(&direct.submatrix(&keep)), 1e-12));
    }

    let mut chain = HierarchyChain::new(HierarchyLevel::hilbert(1, h1, format!("{ordering:?}-ordered p^2 + V(x)"))?);
    chain.push_lift(None, Statistics::Boson)?;
    chain.push_lift(None, Statistics::Boson)?;
    checks.extend(faithfulness_checks(&chain)?);
    let mut chart_coefficients = Vec::new();
    for (r, row) in poly.iter().enumerate() {
        for (s, z) in row.iter().enumerate() {
            if z.norm() > 0.0 {
                chart_coefficients.push((r, s, z.re, z.im));
            }
        }
    }
    Ok(PotentialReport {
        potential: v.to_vec(),
        ordering,
        cutoff,
        chart_coefficients,
        levels: summarize(&chain)?,
        lifts: chain.log.clone(),
        checks,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct QubitReport {
    pub levels: Vec<LevelSummary>,
    pub lifts: Vec<LiftLog>,
    pub spectrum: SpectrumReport,
    pub checks: Vec<Check>,
}

/// `H_0 -> Sigma_0 -> H_1 -> Sigma_1 -> H_2` from a qubit Hamiltonian.
pub fn qubit_demo(h0: &Operator, cutoff: usize, rng: &mut Rng64) -> Result<QubitReport> {
    if h0.dim() != 2 {
        return Err(Error::arg("the qubit demo needs a 2x2 Hamiltonian"));
    }
    let mut chain = HierarchyChain::new(HierarchyLevel::hilbert(0, h0.clone(), "qubit Hamiltonian")?);
    chain.push_lift(None, Statistics::Boson)?;
    chain.push_lift(Some(cutoff), Statistics::Boson)?;
    chain.push_lift(None, Statistics::Boson)?;
    chain.push_lift(None, Statistics::Boson)?;
    let Payload::Quantum { h, space: Some(space) } = &chain.levels[2].payload else {
        unreachable!("position 2 is the first quantized level")
    };
    let spectrum = spectrum_compare(h0, &FockOperator::new(space.clone(), h.clone())?)?;
    let mut checks = faithfulness_checks(&chain)?;
    checks.extend(energy_match_checks(&chain, rng, 20)?);
    checks.push(Check::new("h1_one_excitation_spectrum", spectrum.containment_residual, 1e-12));
    checks.push(Check::flag("alternation", chain.alternates()));
    Ok(QubitReport { levels: summarize(&chain)?, lifts: chain.log.clone(), spectrum, checks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::pauli;
    use crate::random::{random_hermitian, seeded};

    #[test]
    fn qubit_chain_shapes() {
        let mut chain = HierarchyChain::new(HierarchyLevel::hilbert(0, pauli::z(), "qubit").unwrap());
        chain.push_lift(None, Statistics::Boson).unwrap();
        assert_eq!(chain.last().kind(), LevelKind::PhaseSpace);
        assert_eq!(chain.last().dim(), 2);
        let l = chain.push_lift(Some(1), Statistics::Boson).unwrap();
        assert_eq!((l.kind(), l.index, l.dim()), (LevelKind::Hilbert, 1, 3));
        assert!(chain.alternates());
        assert_eq!(chain.log[1].previous_dim, 2);
        assert_eq!(chain.cutoffs, vec![Some(1)]);
    }

    #[test]
    fn bosonic_first_lift_needs_cutoff() {
        let level = HierarchyLevel::phase_space(0, hamiltonize(&pauli::z()).unwrap(), "s");
        assert!(matches!(lift(&level, None, Statistics::Boson), Err(Error::Argument(_))));
        assert!(lift(&level, None, Statistics::Fermion).is_ok());
    }

    #[test]
    fn oscillator_lift_twice() {
        let mut chain = HierarchyChain::new(HierarchyLevel::hilbert(0, Operator::diag_real(&[1.5]), "w").unwrap());
        chain.push_lift(None, Statistics::Boson).unwrap();
        chain.push_lift(Some(4), Statistics::Boson).unwrap();
        let space = Arc::new(build_fock_space(1, Statistics::Boson, 4).unwrap());
        let a = &annihilators(&space)[0];
        let expected = (&a.adjoint() * a).scale_real(1.5);
        assert!(chain.last().matrix().max_abs_diff(&expected) < 1e-14);
    }

    #[test]
    fn high_levels_default_cutoff_and_mode_limit() {
        let big = HierarchyLevel::phase_space(1, hamiltonize(&Operator::identity(13)).unwrap(), "big");
        assert!(matches!(lift(&big, None, Statistics::Boson), Err(Error::Argument(_))));
        let ok = HierarchyLevel::phase_space(1, hamiltonize(&Operator::identity(3)).unwrap(), "ok");
        let l = lift(&ok, None, Statistics::Boson).unwrap();
        assert_eq!(l.dim(), 10);
    }

    #[test]
    fn lift_reports_resource_errors() {
        let level = HierarchyLevel::phase_space(0, hamiltonize(&Operator::identity(10)).unwrap(), "s");
        match lift(&level, Some(12), Statistics::Boson) {
            Err(Error::Resource { dim, .. }) => assert_eq!(dim, 646_646),
            other => panic!("expected a resource error, got {other:?}"),
        }
    }

    #[test]
    fn energy_matching() {
        let mut rng = seeded(50);
        let h1 = random_hermitian(3, &mut rng);
        let mut chain = HierarchyChain::new(HierarchyLevel::hilbert(1, h1.clone(), "h1").unwrap());
        chain.push_lift(None, Statistics::Boson).unwrap();
        chain.push_lift(None, Statistics::Boson).unwrap();
        let (vals, vecs) = h1.eigh().unwrap();
        let v = StateVector::new(vecs.column(1).iter().copied().collect()).unwrap();
        let point = chain.energy_match_state(0, &v).unwrap();
        let chi = chain.energy_match_state(1, &point).unwrap();
        assert!((level_energy(&chain.levels[2], &chi).unwrap() - vals[1]).abs() < 1e-12);

        let zero = StateVector::new(vec![cr(0.0); 3]).unwrap();
        let vac = chain.energy_match_state(1, &zero).unwrap();
        assert_eq!(vac.amplitudes()[0], cr(1.0));
        assert_eq!(level_energy(&chain.levels[2], &vac).unwrap(), 0.0);

        for _ in 0..50 {
            let psi = random_state(3, &mut rng);
            let chi = chain.energy_match_state(1, &psi).unwrap();
            let lhs = level_energy(&chain.levels[0], &psi).unwrap();
            assert!((lhs - level_energy(&chain.levels[2], &chi).unwrap()).abs() < 1e-12);
        }
    }

    fn sector(r: &SpectrumReport, n: usize) -> Vec<f64> {
        r.sectors[n].energies.clone()
    }

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn spectrum_compare_examples() {
        let h1 = Operator::diag_real(&[1.0, 2.0]);
        let bos = Arc::new(build_fock_space(2, Statistics::Boson, 2).unwrap());
        let r = spectrum_compare(&h1, &second_quantize_hamiltonian(&h1, &bos).unwrap()).unwrap();
        assert!(close(&sector(&r, 0), &[0.0]));
        assert!(close(&sector(&r, 1), &[1.0, 2.0]));
        // Multiset sums 1+1, 1+2, 2+2.
        assert!(close(&sector(&r, 2), &[2.0, 3.0, 4.0]));
        assert!(r.ground_state_mismatch);
        assert_eq!(r.h2_ground_sector, 0);

        let fer = Arc::new(build_fock_space(2, Statistics::Fermion, 0).unwrap());
        let r = spectrum_compare(&h1, &second_quantize_hamiltonian(&h1, &fer).unwrap()).unwrap();
        assert!(close(&sector(&r, 2), &[3.0]));

        let neg = Operator::diag_real(&[-1.0, 2.0]);
        let r = spectrum_compare(&neg, &second_quantize_hamiltonian(&neg, &fer).unwrap()).unwrap();
        assert_eq!(r.h2_ground_sector, 1);
        let r = spectrum_compare(&neg, &second_quantize_hamiltonian(&neg, &bos).unwrap()).unwrap();
        assert_eq!(r.h2_ground_sector, 2);
        assert!(r.ground_state_mismatch);
        assert!(r.h2_ground_energy < -1.5);

        let r = spectrum_compare(&Operator::zeros(2), &second_quantize_hamiltonian(&Operator::zeros(2), &bos).unwrap()).unwrap();
        assert!(r.sectors.iter().all(|s| s.energies.iter().all(|e| e.abs() < 1e-15)));
    }

    #[test]
    fn oscillator_report() {
        let r = oscillator_demo(1.0, 5).unwrap();
        assert!(close(&r.h1_spectrum, &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]));
        for c in &r.checks {
            assert!(c.pass, "{c:?}");
        }
        assert_eq!(r.levels.len(), 5);
        assert_eq!(r.levels[4].dim, 28);
    }

    #[test]
    fn chart_expansion_examples() {
        // V = 0: p^2 = -(a^2 - 2 a* a + a*^2)/4.
        let p = chart_expand(&[]).unwrap();
        assert_eq!(p[1][1], cr(0.5));
        assert_eq!(p[0][2], cr(-0.25));
        // V = x^2: x^2 + p^2 = a* a.
        let o = chart_expand(&[0.0, 0.0, 1.0]).unwrap();
        for r in 0..5 {
            for s in 0..5 {
                let expected = if (r, s) == (1, 1) { 1.0 } else { 0.0 };
                assert!((o[r][s] - cr(expected)).norm() < 1e-15);
            }
        }
        assert!(matches!(chart_expand(&[0.0, 0.0, 0.0, 0.0, 0.0, 1.0]), Err(Error::Unsupported(_))));
    }

    #[test]
    fn quartic_potential_chart_oracle() {
        // Independent expansion of x^4 = (a + a*)^4 / 16 by the binomial theorem.
        let q = chart_expand(&[0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let binom = [1.0, 4.0, 6.0, 4.0, 1.0];
        for r in 0..5 {
            let s = 4 - r;
            assert!((q[r][s] - cr(binom[r] / 16.0)).norm() < 1e-15);
        }
        let r = potential_demo(&[0.0, 0.0, 0.0, 0.0, 1.0], Ordering::Weyl, 4).unwrap();
        for c in &r.checks {
            assert!(c.pass, "{c:?}");
        }
    }

    #[test]
    fn harmonic_potential_reduces_to_oscillator() {
        let normal = potential_demo(&[0.0, 0.0, 1.0], Ordering::Normal, 5).unwrap();
        let osc = oscillator_demo(1.0, 5).unwrap();
        assert!(close(&normal.levels[0].spectrum, &osc.h1_spectrum));
        // Weyl ordering keeps the zero-point shift of 1/2.
        let weyl = potential_demo(&[0.0, 0.0, 1.0], Ordering::Weyl, 5).unwrap();
        let shifted: Vec<f64> = osc.h1_spectrum.iter().map(|e| e + 0.5).collect();
        assert!(close(&weyl.levels[0].spectrum, &shifted));
    }

    #[test]
    fn free_particle_energy_is_p_squared() {
        let poly = chart_expand(&[]).unwrap();
        let z = chart_eval(&poly, c(0.7, -1.1));
        assert!((z - cr(1.21)).norm() < 1e-14);
        let r = potential_demo(&[], Ordering::Weyl, 3).unwrap();
        assert!(r.checks.iter().all(|c| c.pass));
    }

    #[test]
    fn qubit_report_passes() {
        let mut rng = seeded(1);
        let r = qubit_demo(&pauli::z(), 2, &mut rng).unwrap();
        for c in &r.checks {
            assert!(c.pass, "{c:?}");
        }
        assert_eq!(r.levels.iter().map(|l| l.dim).collect::<Vec<_>>(), vec![2, 2, 6, 6, 28]);
    }
}
