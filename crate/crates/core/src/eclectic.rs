//! Eclectic reduction of a k-local Hamiltonian: per-term partial amplitudes,
//! local state assignment, the padded and direct-sum eclectic systems, their
//! energy identity, and dimension accounting.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fock::{
    build_fock_space, ladder_matrix, one_excitation_state, second_quantize_hamiltonian, FockOperator, FockSpace,
    Ladder, Statistics,
};
use crate::hilbert::{
    check_dim, direct_sum, kron, reduced_density, Operator, SiteSplit, SpaceShape, StateVector, C64,
};
use crate::hspec::{embed_in_higher_locality, KLocalHamiltonian, LocalTerm};
use crate::random::{gaussian_c64, random_hermitian};

/// Purity above which a reduced state is treated as rank one.
pub const PURITY_TOL: f64 = 1e-10;
/// Tolerance of the global energy identity.
pub const ENERGY_TOL: f64 = 1e-9;

/// Residual vectors `|psi_{l;i}>` obtained by fixing the term's site indices.
#[derive(Debug, Clone)]
pub struct PartialAmplitudeFamily {
    pub term: usize,
    /// `residuals[i]` has dimension `d^{n-k'}`; `i` runs row-major over the term's sites.
    pub residuals: Vec<DVector<C64>>,
}

impl PartialAmplitudeFamily {
    /// `G_ij = <psi_{l;i}|psi_{l;j}>`, the transpose of the reduced density matrix.
    pub fn gram(&self) -> Operator {
        let k = self.residuals.len();
        let mut g = nalgebra::DMatrix::<C64>::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                g[(i, j)] = self.residuals[i].dotc(&self.residuals[j]);
            }
        }
        Operator::from_matrix_unchecked(g)
    }

    pub fn total_norm_sqr(&self) -> f64 {
        self.residuals.iter().map(|r| r.norm_squared()).sum()
    }

    /// `sum_ij <psi_{l;i}|psi_{l;j}> H_ij`.
    pub fn energy(&self, matrix: &Operator) -> f64 {
        let g = self.gram();
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..g.dim() {
            for j in 0..g.dim() {
                acc += g.get(i, j) * matrix.get(i, j);
            }
        }
        acc.re
    }
}

fn check_state(psi: &StateVector, h: &KLocalHamiltonian) -> Result<SpaceShape> {
    let shape = h.shape()?;
    if psi.dim() as u128 != shape.total_dim_u128() {
        return Err(Error::arg(format!("state dimension {} does not equal d^n = {}", psi.dim(), shape.total_dim_u128())));
    }
    Ok(shape)
}

pub fn partial_amplitudes(psi: &StateVector, term: usize, h: &KLocalHamiltonian) -> Result<PartialAmplitudeFamily> {
    let shape = check_state(psi, h)?;
    let t = h.terms.get(term).ok_or_else(|| Error::arg(format!("no term {term}")))?;
    let split = SiteSplit::new(&shape, &t.sites)?;
    let amps = psi.amplitudes();
    let residuals = split
        .local
        .iter()
        .map(|&o| DVector::from_iterator(split.env.len(), split.env.iter().map(|&e| amps[e + o])))
        .collect();
    Ok(PartialAmplitudeFamily { term, residuals })
}

/// `<psi| H_l |psi>` through the partial amplitudes.
pub fn local_energy(psi: &StateVector, term: usize, h: &KLocalHamiltonian) -> Result<f64> {
    Ok(partial_amplitudes(psi, term, h)?.energy(&h.terms[term].matrix))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractionMethod {
    /// Top eigenvector of a rank-one reduced state.
    RankOne,
    /// Superposition of the two term eigenvectors bracketing the energy.
    Interpolated,
    /// Supplied by the caller.
    External,
}

#[derive(Debug, Clone)]
pub struct LocalStateAssignment {
    pub state: StateVector,
    pub method: ExtractionMethod,
    /// `tr(rho_l H_l)`.
    pub target_energy: f64,
    /// `<phi|H_l|phi>`.
    pub energy: f64,
    pub purity: f64,
}

/// A pure local state with the term energy of `rho` on `matrix`.
pub fn extract_from_density(rho: &Operator, matrix: &Operator) -> Result<LocalStateAssignment> {
    let target = (rho * matrix).trace().re;
    let purity = (rho * rho).trace().re;
    let expect = |v: &StateVector| -> Result<f64> { Ok(v.inner(&matrix.apply(v)?).re) };
    if purity > 1.0 - PURITY_TOL {
        let (_, vecs) = rho.eigh()?;
        let top = StateVector::new(vecs.column(vecs.ncols() - 1).iter().copied().collect())?;
        let e = expect(&top)?;
        if (e - target).abs() < 1e-12 {
            return Ok(LocalStateAssignment { state: top, method: ExtractionMethod::RankOne, target_energy: target, energy: e, purity });
        }
    }
    let (vals, vecs) = matrix.eigh()?;
    let (lo, hi) = (vals[0], vals[vals.len() - 1]);
    let slack = 1e-10 * (1.0 + lo.abs().max(hi.abs()));
    assert!(target >= lo - slack && target <= hi + slack, "term energy {target} outside [{lo}, {hi}]");
    let e = target.clamp(lo, hi);
    let col = |j: usize| -> Vec<C64> { vecs.column(j).iter().copied().collect() };
    let a = vals.iter().rposition(|&l| l <= e).unwrap_or(0);
    let amps = if a + 1 >= vals.len() || vals[a] == e {
        col(a)
    } else {
        let b = a + 1;
        let theta = (vals[b] - e) / (vals[b] - vals[a]);
        let (va, vb) = (col(a), col(b));
        va.iter().zip(&vb).map(|(x, y)| x * theta.sqrt() + y * (1.0 - theta).sqrt()).collect()
    };
    let state = StateVector::new(amps)?.normalize()?;
    let energy = expect(&state)?;
    Ok(LocalStateAssignment { state, method: ExtractionMethod::Interpolated, target_energy: target, energy, purity })
}

pub fn extract_local_state(psi: &StateVector, term: usize, h: &KLocalHamiltonian) -> Result<LocalStateAssignment> {
    let shape = check_state(psi, h)?;
    let t = h.terms.get(term).ok_or_else(|| Error::arg(format!("no term {term}")))?;
    extract_from_density(&reduced_density(psi, &shape, &t.sites)?, &t.matrix)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    #[default]
    PaddedTensor,
    PerTermDirectSum,
}

impl std::str::FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "padded" | "padded_tensor" => Ok(Self::PaddedTensor),
            "directsum" | "direct_sum" | "per_term_direct_sum" => Ok(Self::PerTermDirectSum),
            _ => Err(Error::arg(format!("unknown layout {s:?}; expected padded or directsum"))),
        }
    }
}

/// Where one term sits inside an eclectic operator.
#[derive(Debug, Clone, Serialize)]
pub struct BlockIndex {
    pub term: usize,
    /// Sites of the (possibly k-lifted) term matrix placed in the block.
    pub sites: Vec<usize>,
    /// Which of `EclecticSystem::operators` holds the block.
    pub operator: usize,
    /// Slot in the index register (padded layout: position within the class).
    pub slot: usize,
    /// Operator index of every local basis index, row-major over `sites`.
    #[serde(skip)]
    pub indices: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct EclecticSystem {
    pub layout: Layout,
    pub n_bar: usize,
    pub d: usize,
    pub k: usize,
    /// `(d n_bar)^k` or `d^k m`.
    pub dim: u128,
    /// Padded: one `(d n_bar)^{k'}` operator per class, ascending `k'`.
    /// Direct sum: the single `d^k m` operator.
    pub operators: Vec<Operator>,
    /// Locality of each operator.
    pub localities: Vec<usize>,
    pub blocks: Vec<BlockIndex>,
}

/// Smallest `r >= 1` with `r^k >= m`.
fn ceil_root(m: usize, k: usize) -> usize {
    let mut r = 1usize;
    while (r as u128).pow(k as u32) < m as u128 {
        r += 1;
    }
    r
}

/// `max_{k'} ceil(m_{k'}^{1/k'})`.
pub fn padding_size(counts: &BTreeMap<usize, usize>) -> usize {
    counts.iter().map(|(&kp, &m)| ceil_root(m, kp)).max().unwrap_or(1)
}

fn upow(base: usize, exp: usize) -> u128 {
    (base as u128).saturating_pow(exp as u32)
}

/// Term `t` lifted to locality `k` with the smallest sites it does not touch.
fn lift_to(t: &LocalTerm, k: usize, n: usize) -> Result<LocalTerm> {
    if t.locality() == k {
        return Ok(t.clone());
    }
    let partners: Vec<usize> = (0..n).filter(|s| !t.sites.contains(s)).take(k - t.locality()).collect();
    embed_in_higher_locality(t, k, &partners)
}

pub fn build_eclectic(h: &KLocalHamiltonian, layout: Layout) -> Result<EclecticSystem> {
    if h.terms.is_empty() {
        return Err(Error::arg("the model has no terms"));
    }
    let (d, k) = (h.d, h.k());
    let counts = h.class_counts();
    let n_bar = padding_size(&counts);
    match layout {
        Layout::PaddedTensor => {
            let dim = upow(d * n_bar, k);
            check_dim(dim)?;
            let dn = d * n_bar;
            let mut operators = Vec::new();
            let mut localities = Vec::new();
            let mut blocks = Vec::new();
            for (c, (&kp, terms)) in h.class_indices().iter().enumerate() {
                let size = check_dim(upow(dn, kp))?;
                let mut m = nalgebra::DMatrix::<C64>::zeros(size, size);
                for (slot, &l) in terms.iter().enumerate() {
                    let indices = padded_indices(slot, kp, d, n_bar);
                    let t = &h.terms[l];
                    for (a, &ia) in indices.iter().enumerate() {
                        for (b, &ib) in indices.iter().enumerate() {
                            m[(ia, ib)] = t.matrix.get(a, b);
                        }
                    }
                    blocks.push(BlockIndex { term: l, sites: t.sites.clone(), operator: c, slot, indices });
                }
                operators.push(Operator::from_matrix_unchecked(m));
                localities.push(kp);
            }
            blocks.sort_by_key(|b| b.term);
            Ok(EclecticSystem { layout, n_bar, d, k, dim, operators, localities, blocks })
        }
        Layout::PerTermDirectSum => {
            let dim = upow(d, k) * h.m() as u128;
            check_dim(dim)?;
            let lifted: Vec<LocalTerm> = h.terms.iter().map(|t| lift_to(t, k, h.n)).collect::<Result<_>>()?;
            let block = d.pow(k as u32);
            let blocks = lifted
                .iter()
                .enumerate()
                .map(|(l, t)| BlockIndex {
                    term: l,
                    sites: t.sites.clone(),
                    operator: 0,
                    slot: l,
                    indices: (l * block..(l + 1) * block).collect(),
                })
                .collect();
            let mats: Vec<Operator> = lifted.into_iter().map(|t| t.matrix).collect();
            Ok(EclecticSystem {
                layout,
                n_bar,
                d,
                k,
                dim,
                operators: vec![direct_sum(&mats)?],
                localities: vec![k],
                blocks,
            })
        }
    }
}

/// Combined indices `I_j = l^{(j)} d + i_j` of term slot `slot` in a
/// `(d n_bar)^{k'}` class operator; `l^{(j)}` are the base-`n_bar` digits of the slot.
fn padded_indices(slot: usize, kp: usize, d: usize, n_bar: usize) -> Vec<usize> {
    let mut digits = vec![0usize; kp];
    let mut s = slot;
    for j in (0..kp).rev() {
        digits[j] = s % n_bar;
        s /= n_bar;
    }
    let dn = d * n_bar;
    (0..d.pow(kp as u32))
        .map(|i| {
            let mut rem = i;
            let mut local = vec![0usize; kp];
            for j in (0..kp).rev() {
                local[j] = rem % d;
                rem /= d;
            }
            (0..kp).fold(0usize, |acc, j| acc * dn + digits[j] * d + local[j])
        })
        .collect()
}

impl EclecticSystem {
    pub fn block_matrix(&self, block: &BlockIndex) -> Operator {
        self.operators[block.operator].submatrix(&block.indices)
    }

    /// Direct-sum spectrum, or the spectrum of every padded class operator, merged and sorted.
    pub fn spectrum(&self) -> Result<Vec<f64>> {
        let mut all = Vec::new();
        for op in &self.operators {
            all.extend(op.eigenvalues()?);
        }
        all.sort_by(f64::total_cmp);
        Ok(all)
    }

    /// Largest deviation of a physical block from its term matrix, and the
    /// largest entry outside every block.
    pub fn padding_defect(&self, h: &KLocalHamiltonian) -> Result<(f64, f64)> {
        let mut physical = 0.0f64;
        let mut inside: Vec<BTreeSet<(usize, usize)>> = vec![BTreeSet::new(); self.operators.len()];
        for b in &self.blocks {
            let expected = match self.layout {
                Layout::PaddedTensor => h.terms[b.term].matrix.clone(),
                Layout::PerTermDirectSum => lift_to(&h.terms[b.term], self.k, h.n)?.matrix,
            };
            physical = physical.max(self.block_matrix(b).max_abs_diff(&expected));
            for &r in &b.indices {
                for &c in &b.indices {
                    inside[b.operator].insert((r, c));
                }
            }
        }
        let mut padded = 0.0f64;
        for (o, op) in self.operators.iter().enumerate() {
            for r in 0..op.dim() {
                for c in 0..op.dim() {
                    if !inside[o].contains(&(r, c)) {
                        padded = padded.max(op.get(r, c).norm());
                    }
                }
            }
        }
        Ok((physical, padded))
    }

    /// The literal `(d n_bar)^k` operator `sum_{k'} Hbar^{[k']} (x) I`.
    pub fn assembled(&self) -> Result<Operator> {
        let dim = check_dim(self.dim)?;
        match self.layout {
            Layout::PerTermDirectSum => Ok(self.operators[0].clone()),
            Layout::PaddedTensor => {
                let dn = self.d * self.n_bar;
                let mut acc = Operator::zeros(dim);
                for (op, &kp) in self.operators.iter().zip(&self.localities) {
                    let pad = Operator::identity(dn.pow((self.k - kp) as u32));
                    acc = &acc + &kron(op, &pad)?;
                }
                Ok(acc)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Consistency {
    /// Local states were extracted from one global state.
    FromGlobal,
    Unverified,
}

#[derive(Debug, Clone)]
pub struct EclecticState {
    pub layout: Layout,
    pub local: Vec<LocalStateAssignment>,
    /// One vector per eclectic operator, blocks weighted by 1.
    pub vectors: Vec<DVector<C64>>,
    pub consistency: Consistency,
}

/// The local state of each term in the operator's block basis.
fn block_target(sys: &EclecticSystem, h: &KLocalHamiltonian, l: usize) -> Result<(Vec<usize>, Operator)> {
    let b = &sys.blocks[l];
    let matrix = match sys.layout {
        Layout::PaddedTensor => h.terms[l].matrix.clone(),
        Layout::PerTermDirectSum => lift_to(&h.terms[l], sys.k, h.n)?.matrix,
    };
    Ok((b.sites.clone(), matrix))
}

pub fn eclectic_state(psi: &StateVector, sys: &EclecticSystem, h: &KLocalHamiltonian) -> Result<EclecticState> {
    let shape = check_state(psi, h)?;
    if sys.blocks.len() != h.m() {
        return Err(Error::arg("eclectic system was built for another model"));
    }
    let local: Vec<LocalStateAssignment> = (0..h.m())
        .into_par_iter()
        .map(|l| {
            let (sites, matrix) = block_target(sys, h, l)?;
            extract_from_density(&reduced_density(psi, &shape, &sites)?, &matrix)
        })
        .collect::<Result<_>>()?;
    Ok(place(sys, local, Consistency::FromGlobal))
}

/// Builds an eclectic state from caller-supplied local states; its
/// consistency with a global state is not checked.
pub fn eclectic_state_from_local(
    sys: &EclecticSystem,
    h: &KLocalHamiltonian,
    states: Vec<StateVector>,
) -> Result<EclecticState> {
    if states.len() != sys.blocks.len() {
        return Err(Error::arg(format!("expected {} local states, got {}", sys.blocks.len(), states.len())));
    }
    let mut local = Vec::with_capacity(states.len());
    for (l, s) in states.into_iter().enumerate() {
        let (_, matrix) = block_target(sys, h, l)?;
        if s.dim() != matrix.dim() {
            return Err(Error::arg(format!("local state {l} has dimension {}, expected {}", s.dim(), matrix.dim())));
        }
        let energy = s.inner(&matrix.apply(&s)?).re;
        local.push(LocalStateAssignment {
            state: s,
            method: ExtractionMethod::External,
            target_energy: energy,
            energy,
            purity: 1.0,
        });
    }
    Ok(place(sys, local, Consistency::Unverified))
}

fn place(sys: &EclecticSystem, local: Vec<LocalStateAssignment>, consistency: Consistency) -> EclecticState {
    let mut vectors: Vec<DVector<C64>> = sys.operators.iter().map(|o| DVector::zeros(o.dim())).collect();
    for (b, a) in sys.blocks.iter().zip(&local) {
        for (&i, &z) in b.indices.iter().zip(a.state.amplitudes()) {
            vectors[b.operator][i] = z;
        }
    }
    EclecticState { layout: sys.layout, local, vectors, consistency }
}

impl EclecticState {
    /// `sum_o <Psi_o|Hbar_o|Psi_o>` with block weights 1.
    pub fn energy(&self, sys: &EclecticSystem) -> f64 {
        self.vectors.iter().zip(&sys.operators).map(|(v, op)| v.dotc(&(op.matrix() * v)).re).sum()
    }

    /// The normalized direct-sum convention: blocks weighted `1/sqrt(m)`,
    /// energy rescaled by `m`.
    pub fn normalized_energy(&self, sys: &EclecticSystem) -> f64 {
        let m = self.local.len() as f64;
        let w = 1.0 / m.sqrt();
        let e: f64 = self
            .vectors
            .iter()
            .zip(&sys.operators)
            .map(|(v, op)| {
                let u = v * C64::new(w, 0.0);
                u.dotc(&(op.matrix() * &u)).re
            })
            .sum();
        m * e
    }

    pub fn block_count(&self) -> usize {
        self.local.len()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Dims {
    pub full: u128,
    pub padded: u128,
    pub direct_sum: u128,
}

#[derive(Debug, Clone, Serialize)]
pub struct TermEnergy {
    pub l: usize,
    pub sites: Vec<usize>,
    pub energy_full: f64,
    pub energy_block: f64,
    pub delta: f64,
    pub method: ExtractionMethod,
    pub purity: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyTotal {
    #[serde(rename = "E_full")]
    pub e_full: f64,
    #[serde(rename = "E_eclectic")]
    pub e_eclectic: f64,
    pub delta: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelSummary {
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub m: usize,
    pub classes: BTreeMap<usize, usize>,
}

impl ModelSummary {
    pub fn of(h: &KLocalHamiltonian) -> Self {
        Self { n: h.n, d: h.d, k: h.k(), m: h.m(), classes: h.class_counts() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyReport {
    pub model: ModelSummary,
    pub layout: Layout,
    pub n_bar: usize,
    pub dims: Dims,
    pub per_term: Vec<TermEnergy>,
    pub total: EnergyTotal,
    /// `E_eclectic` under the normalized direct-sum convention.
    pub normalized_e_eclectic: f64,
    pub consistency: Consistency,
    /// Terms whose reduced state is mixed, so only their energy is matched.
    pub mixed_terms: usize,
}

pub fn model_dims(h: &KLocalHamiltonian) -> Dims {
    let counts = h.class_counts();
    let n_bar = padding_size(&counts);
    Dims { full: upow(h.d, h.n), padded: upow(h.d * n_bar, h.k()), direct_sum: upow(h.d, h.k()) * h.m() as u128 }
}

/// Compares `<psi|H|psi>` on the full space with the eclectic block sum.
pub fn verify_energy_identity(psi: &StateVector, sys: &EclecticSystem, h: &KLocalHamiltonian) -> Result<EnergyReport> {
    let state = eclectic_state(psi, sys, h)?;
    energy_report(psi, sys, h, &state)
}

pub fn energy_report(
    psi: &StateVector,
    sys: &EclecticSystem,
    h: &KLocalHamiltonian,
    state: &EclecticState,
) -> Result<EnergyReport> {
    let e_full = h.energy(psi)?;
    let per_term = (0..h.m())
        .into_par_iter()
        .map(|l| {
            let energy_full = local_energy(psi, l, h)?;
            let b = &sys.blocks[l];
            let phi = &state.local[l].state;
            let energy_block = phi.inner(&sys.block_matrix(b).apply(phi)?).re;
            Ok(TermEnergy {
                l,
                sites: h.terms[l].sites.clone(),
                energy_full,
                energy_block,
                delta: (energy_full - energy_block).abs(),
                method: state.local[l].method,
                purity: state.local[l].purity,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let e_eclectic = state.energy(sys);
    let delta = (e_full - e_eclectic).abs();
    Ok(EnergyReport {
        model: ModelSummary::of(h),
        layout: sys.layout,
        n_bar: sys.n_bar,
        dims: model_dims(h),
        mixed_terms: per_term.iter().filter(|t| t.method == ExtractionMethod::Interpolated).count(),
        per_term,
        total: EnergyTotal { e_full, e_eclectic, delta, pass: delta < ENERGY_TOL },
        normalized_e_eclectic: state.normalized_energy(sys),
        consistency: state.consistency,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DimensionRow {
    pub n: usize,
    pub n_bar: usize,
    pub full: u128,
    pub padded: u128,
    pub direct_sum: u128,
    pub classes: BTreeMap<usize, usize>,
}

impl DimensionRow {
    pub fn new(n: usize, d: usize, classes: BTreeMap<usize, usize>) -> Self {
        let n_bar = padding_size(&classes);
        let k = classes.keys().copied().max().unwrap_or(0);
        let m: usize = classes.values().sum();
        Self {
            n,
            n_bar,
            full: upow(d, n),
            padded: upow(d * n_bar, k),
            direct_sum: upow(d, k) * m as u128,
            classes,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DimensionTable {
    pub d: usize,
    pub rows: Vec<DimensionRow>,
    /// Smallest `n` from which the padded layout stays strictly below `d^n`.
    pub padded_crossover: Option<usize>,
    pub direct_sum_crossover: Option<usize>,
    pub warnings: Vec<String>,
}

fn crossover(rows: &[DimensionRow], dim: impl Fn(&DimensionRow) -> u128) -> Option<usize> {
    let last_bad = rows.iter().rposition(|r| dim(r) >= r.full);
    match last_bad {
        None => rows.first().map(|r| r.n),
        Some(i) => rows.get(i + 1).map(|r| r.n),
    }
}

pub fn dimension_table(d: usize, rows: Vec<DimensionRow>) -> DimensionTable {
    let warnings = rows
        .iter()
        .filter(|r| r.padded >= r.full || r.direct_sum >= r.full)
        .map(|r| {
            format!(
                "n={}: eclectic dimension (padded {}, direct sum {}) is not below d^n = {}",
                r.n, r.padded, r.direct_sum, r.full
            )
        })
        .collect();
    DimensionTable {
        d,
        padded_crossover: crossover(&rows, |r| r.padded),
        direct_sum_crossover: crossover(&rows, |r| r.direct_sum),
        rows,
        warnings,
    }
}

/// Dimension accounting for one model.
pub fn dimension_report(h: &KLocalHamiltonian) -> DimensionTable {
    dimension_table(h.d, vec![DimensionRow::new(h.n, h.d, h.class_counts())])
}

/// Open Heisenberg chains with a field on every site, `d = 2`, for each `n`.
pub fn chain_dimension_sweep(ns: impl IntoIterator<Item = usize>) -> DimensionTable {
    let rows = ns
        .into_iter()
        .map(|n| {
            let mut classes = BTreeMap::new();
            classes.insert(1, n);
            if n > 1 {
                classes.insert(2, n - 1);
            }
            DimensionRow::new(n, 2, classes)
        })
        .collect();
    dimension_table(2, rows)
}

/// Per-term field blocks `psi_l^dagger H_l psi_l`, each on its own `d^{k'}` modes.
#[derive(Debug, Clone)]
pub struct ManyBodyField {
    pub blocks: Vec<FockOperator>,
}

#[derive(Debug, Clone, Copy)]
pub struct FieldConfig {
    pub statistics: Statistics,
    pub cutoff: usize,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self { statistics: Statistics::Boson, cutoff: 1 }
    }
}

pub fn second_quantized_many_body(h: &KLocalHamiltonian, config: FieldConfig) -> Result<ManyBodyField> {
    let mut spaces: BTreeMap<usize, Arc<FockSpace>> = BTreeMap::new();
    let mut blocks = Vec::with_capacity(h.m());
    for t in &h.terms {
        let modes = t.matrix.dim();
        let space = match spaces.get(&modes) {
            Some(s) => s.clone(),
            None => {
                let s = Arc::new(build_fock_space(modes, config.statistics, config.cutoff)?);
                spaces.insert(modes, s.clone());
                s
            }
        };
        blocks.push(second_quantize_hamiltonian(&t.matrix, &space)?);
    }
    Ok(ManyBodyField { blocks })
}

impl ManyBodyField {
    /// Composite one-excitation state: `chi_l` is the image of the local state of term `l`.
    pub fn composite_state(&self, local: &[StateVector]) -> Result<Vec<StateVector>> {
        if local.len() != self.blocks.len() {
            return Err(Error::arg("one local state per block is required"));
        }
        self.blocks.iter().zip(local).map(|(b, s)| one_excitation_state(s, b.space())).collect()
    }

    /// `<chi|H|chi>` for the product `chi = (x)_l chi_l` of normalized block states.
    pub fn product_expectation(&self, chi: &[StateVector]) -> Result<f64> {
        let mut e = 0.0;
        for (b, s) in self.blocks.iter().zip(chi) {
            e += s.inner(&b.matrix().apply(s)?).re;
        }
        Ok(e)
    }
}

/// `<chi|H_field|chi>` for the composite state built from `psi`; equals `<psi|H|psi>`.
pub fn field_energy(h: &KLocalHamiltonian, field: &ManyBodyField, psi: &StateVector) -> Result<f64> {
    let shape = check_state(psi, h)?;
    let local: Vec<StateVector> = h
        .terms
        .iter()
        .map(|t| Ok(extract_from_density(&reduced_density(psi, &shape, &t.sites)?, &t.matrix)?.state))
        .collect::<Result<_>>()?;
    field.product_expectation(&field.composite_state(&local)?)
}

/// Shared `d n`-mode space (mode `s d + i` is level `i` of site `s`) holding
/// one boson per site.
pub fn separable_space(h: &KLocalHamiltonian) -> Result<Arc<FockSpace>> {
    Ok(Arc::new(build_fock_space(h.d * h.n, Statistics::Boson, h.n)?))
}

/// `sum_l sum_{ij} (H_l)_{ij} a^dagger_{s1 i1} .. a^dagger_{sk ik} a_{sk jk} .. a_{s1 j1}`.
pub fn separable_form(h: &KLocalHamiltonian, space: &Arc<FockSpace>) -> Result<FockOperator> {
    if space.modes() != h.d * h.n {
        return Err(Error::arg(format!("separable form needs {} modes, space has {}", h.d * h.n, space.modes())));
    }
    let create: Vec<Operator> = (0..space.modes())
        .map(|q| Ok(ladder_matrix(space, q, Ladder::Create)?.matrix().clone()))
        .collect::<Result<_>>()?;
    let annihilate: Vec<Operator> = create.iter().map(Operator::adjoint).collect();
    let d = h.d;
    let mut acc = Operator::zeros(space.dim());
    for t in &h.terms {
        let kp = t.locality();
        let dim = t.matrix.dim();
        let digits = |mut i: usize| {
            let mut out = vec![0usize; kp];
            for j in (0..kp).rev() {
                out[j] = i % d;
                i /= d;
            }
            out
        };
        // Annihilation strings a_{sk jk} .. a_{s1 j1}, shared by every row.
        let lowers: Vec<Operator> = (0..dim)
            .map(|j| {
                let js = digits(j);
                let mut op = Operator::identity(space.dim());
                for (p, &s) in t.sites.iter().enumerate() {
                    op = &annihilate[s * d + js[p]] * &op;
                }
                op
            })
            .collect();
        for i in 0..dim {
            let is = digits(i);
            let mut raise = Operator::identity(space.dim());
            for (p, &s) in t.sites.iter().enumerate() {
                raise = &raise * &create[s * d + is[p]];
            }
            for (j, lower) in lowers.iter().enumerate() {
                let z = t.matrix.get(i, j);
                if z != C64::new(0.0, 0.0) {
                    acc = &acc + &(&raise * lower).scale(z);
                }
            }
        }
    }
    FockOperator::new(space.clone(), acc)
}

/// `sum c_{i1..in} prod_s a^dagger_{s i_s} |0>`, one boson per site.
pub fn product_embedding(psi: &StateVector, h: &KLocalHamiltonian, space: &FockSpace) -> Result<StateVector> {
    check_state(psi, h)?;
    let mut amps = vec![C64::new(0.0, 0.0); space.dim()];
    let d = h.d;
    for (idx, &z) in psi.amplitudes().iter().enumerate() {
        if z == C64::new(0.0, 0.0) {
            continue;
        }
        let mut occ = vec![0u32; d * h.n];
        let mut rem = idx;
        for s in (0..h.n).rev() {
            occ[s * d + rem % d] = 1;
            rem /= d;
        }
        let pos = space.index_of(&occ).ok_or_else(|| Error::arg("embedding outside the Fock space"))?;
        amps[pos] = z;
    }
    StateVector::new(amps)
}

/// A random model on `n` sites with `counts[k']` random hermitian terms per locality.
pub fn random_model<R: Rng + ?Sized>(
    n: usize,
    d: usize,
    counts: &BTreeMap<usize, usize>,
    rng: &mut R,
) -> Result<KLocalHamiltonian> {
    let mut terms = Vec::new();
    for (&kp, &m) in counts {
        if kp > n {
            return Err(Error::arg(format!("locality {kp} exceeds {n} sites")));
        }
        for _ in 0..m {
            let mut sites: Vec<usize> = (0..n).collect();
            for i in 0..kp {
                let j = rng.random_range(i..n);
                sites.swap(i, j);
            }
            sites.truncate(kp);
            let matrix = random_hermitian(d.pow(kp as u32), rng);
            terms.push(LocalTerm::new(sites, matrix, format!("random {kp}-local")));
        }
    }
    KLocalHamiltonian::new(n, d, terms)
}

/// A random model of the acceptance family: `n <= 8`, `d` in {2, 3},
/// `k <= 3`, at most four terms, and a random state on it.
pub fn random_instance<R: Rng + ?Sized>(rng: &mut R) -> Result<(KLocalHamiltonian, StateVector)> {
    let d = if rng.random_bool(0.5) { 2 } else { 3 };
    let n_max = if d == 2 { 8 } else { 6 };
    let k = rng.random_range(1..=3usize);
    let n = rng.random_range(k.max(2)..=n_max);
    let mut counts = BTreeMap::new();
    counts.insert(k, rng.random_range(1..=2usize));
    for kp in 1..k {
        let m = rng.random_range(0..=1usize);
        if m > 0 {
            counts.insert(kp, m);
        }
    }
    let h = random_model(n, d, &counts, rng)?;
    let amps: Vec<C64> = (0..d.pow(n as u32)).map(|_| gaussian_c64(rng)).collect();
    let psi = StateVector::new(amps)?.normalize()?;
    Ok((h, psi))
}

/// Lowest eigenpair of `h` by Lanczos with full reorthogonalization, matrix-free.
pub fn ground_state(h: &KLocalHamiltonian) -> Result<(f64, StateVector)> {
    let dim = check_dim(h.shape()?.total_dim_u128())?;
    let mut start: Vec<C64> = (0..dim).map(|i| C64::new(1.0 + (i % 7) as f64 * 0.1, (i % 3) as f64 * 0.05)).collect();
    for _ in 0..30 {
        let v0 = StateVector::new(start)?.normalize()?;
        let (e, v) = lanczos(h, &v0, dim.min(120))?;
        let hv = h.apply(&v)?;
        let resid: f64 =
            hv.amplitudes().iter().zip(v.amplitudes()).map(|(a, b)| (a - b * e).norm_sqr()).sum::<f64>().sqrt();
        if resid < 1e-10 {
            return Ok((e, v));
        }
        start = v.amplitudes().to_vec();
    }
    Err(Error::Numeric("Lanczos did not converge".into()))
}

fn lanczos(h: &KLocalHamiltonian, v0: &StateVector, steps: usize) -> Result<(f64, StateVector)> {
    let mut basis: Vec<DVector<C64>> = vec![v0.vector().clone()];
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    for j in 0..steps {
        let v = StateVector::new(basis[j].iter().copied().collect())?;
        let mut w = h.apply(&v)?.vector().clone();
        alpha.push(basis[j].dotc(&w).re);
        for _ in 0..2 {
            for b in &basis {
                let proj = b.dotc(&w);
                w -= b * proj;
            }
        }
        let norm = w.norm();
        if norm < 1e-12 || j + 1 == steps {
            break;
        }
        beta.push(norm);
        basis.push(w / C64::new(norm, 0.0));
    }
    let m = alpha.len();
    let mut t = nalgebra::DMatrix::<C64>::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = C64::new(alpha[i], 0.0);
        if i + 1 < m {
            t[(i, i + 1)] = C64::new(beta[i], 0.0);
            t[(i + 1, i)] = C64::new(beta[i], 0.0);
        }
    }
    let (vals, vecs) = Operator::from_matrix_unchecked(t).eigh()?;
    let mut out = DVector::<C64>::zeros(v0.dim());
    for i in 0..m {
        out += &basis[i] * vecs[(i, 0)];
    }
    Ok((vals[0], StateVector::new(out.iter().copied().collect())?.normalize()?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{cr, embed_local, expectation, kron_states, pauli};
    use crate::hspec::{assemble_full, heisenberg_chain};
    use crate::random::{random_state, seeded};
    use proptest::prelude::{any, prop_assert, proptest, ProptestConfig};

    fn basis(d: usize, i: usize) -> StateVector {
        StateVector::basis(d, i).unwrap()
    }

    fn bell() -> StateVector {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        StateVector::new(vec![cr(r), cr(0.0), cr(0.0), cr(r)]).unwrap()
    }

    fn z_on(site: usize, n: usize) -> KLocalHamiltonian {
        KLocalHamiltonian::new(n, 2, vec![LocalTerm::new(vec![site], pauli::z(), "z")]).unwrap()
    }

    fn heis() -> Operator {
        let xx = kron(&pauli::x(), &pauli::x()).unwrap();
        let yy = kron(&pauli::y(), &pauli::y()).unwrap();
        let zz = kron(&pauli::z(), &pauli::z()).unwrap();
        &(&xx + &yy) + &zz
    }

    fn singlet() -> StateVector {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        StateVector::new(vec![cr(0.0), cr(r), cr(-r), cr(0.0)]).unwrap()
    }

    #[test]
    fn partial_amplitudes_of_product_and_bell() {
        let h = z_on(0, 2);
        let psi = kron_states(&basis(2, 0), &basis(2, 1)).unwrap();
        let f = partial_amplitudes(&psi, 0, &h).unwrap();
        assert_eq!(f.residuals[0].as_slice(), &[cr(0.0), cr(1.0)]);
        assert_eq!(f.residuals[1].as_slice(), &[cr(0.0), cr(0.0)]);

        let f = partial_amplitudes(&bell(), 0, &h).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((f.residuals[0].norm() - r).abs() < 1e-15);
        assert!((f.residuals[1].norm() - r).abs() < 1e-15);
        assert!(f.residuals[0].dotc(&f.residuals[1]).norm() < 1e-15);
        assert!((f.total_norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gram_is_transposed_reduced_density() {
        let mut rng = seeded(3);
        let h = KLocalHamiltonian::new(3, 2, vec![LocalTerm::new(vec![2, 0], random_hermitian(4, &mut rng), "t")]).unwrap();
        let psi = random_state(8, &mut rng);
        let g = partial_amplitudes(&psi, 0, &h).unwrap().gram();
        let rho = crate::hilbert::partial_trace(&psi.projector(), &h.shape().unwrap(), &[2, 0]).unwrap();
        let rho_t = Operator::from_matrix_unchecked(rho.matrix().transpose());
        assert!(g.max_abs_diff(&rho_t) < 1e-14);
    }

    #[test]
    fn local_energy_examples() {
        let h = z_on(0, 3);
        let psi = kron_states(&basis(2, 0), &random_state(4, &mut seeded(1))).unwrap();
        assert!((local_energy(&psi, 0, &h).unwrap() - 1.0).abs() < 1e-14);
        let h = KLocalHamiltonian::new(2, 2, vec![LocalTerm::new(vec![0, 1], heis(), "b")]).unwrap();
        assert!((local_energy(&singlet(), 0, &h).unwrap() + 3.0).abs() < 1e-14);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn local_energy_matches_embedded_expectation(seed in any::<u64>()) {
            let mut rng = seeded(seed);
            let mut counts = BTreeMap::new();
            counts.insert(rng.random_range(1..=3usize), 1);
            let n = rng.random_range(3..=5usize);
            let h = random_model(n, 2, &counts, &mut rng).unwrap();
            let psi = random_state(1 << n, &mut rng);
            let t = &h.terms[0];
            let direct = expectation(&psi, &embed_local(&t.matrix, &t.sites, &h.shape().unwrap()).unwrap()).unwrap().re;
            prop_assert!((local_energy(&psi, 0, &h).unwrap() - direct).abs() < 1e-12);
        }

        #[test]
        fn extraction_matches_term_energy(seed in any::<u64>()) {
            let mut rng = seeded(seed);
            let mut counts = BTreeMap::new();
            counts.insert(2, 1);
            let h = random_model(3, 2, &counts, &mut rng).unwrap();
            let psi = random_state(8, &mut rng);
            let a = extract_local_state(&psi, 0, &h).unwrap();
            let vals = h.terms[0].matrix.eigenvalues().unwrap();
            prop_assert!((a.energy - a.target_energy).abs() < 1e-10);
            prop_assert!(a.energy >= vals[0] - 1e-12 && a.energy <= vals[3] + 1e-12);
            prop_assert!((a.state.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn extraction_of_product_returns_the_factor() {
        let mut rng = seeded(9);
        let u = random_state(2, &mut rng);
        let w = random_state(4, &mut rng);
        let psi = kron_states(&u, &w).unwrap();
        let h = KLocalHamiltonian::new(3, 2, vec![LocalTerm::new(vec![0], random_hermitian(2, &mut rng), "t")]).unwrap();
        let a = extract_local_state(&psi, 0, &h).unwrap();
        assert_eq!(a.method, ExtractionMethod::RankOne);
        assert!((a.state.inner(&u).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bell_pair_zz_is_rank_one() {
        let zz = kron(&pauli::z(), &pauli::z()).unwrap();
        let h = KLocalHamiltonian::new(2, 2, vec![LocalTerm::new(vec![0, 1], zz.clone(), "zz")]).unwrap();
        let a = extract_local_state(&bell(), 0, &h).unwrap();
        assert_eq!(a.method, ExtractionMethod::RankOne);
        assert!((a.energy - 1.0).abs() < 1e-12);
        let image = zz.apply(&a.state).unwrap();
        assert!(image.max_abs_diff(&a.state) < 1e-12);
    }

    #[test]
    fn mixed_reduced_state_is_interpolated() {
        let h = z_on(0, 2);
        let a = extract_local_state(&bell(), 0, &h).unwrap();
        assert_eq!(a.method, ExtractionMethod::Interpolated);
        assert!(a.energy.abs() < 1e-12);
        assert!((a.purity - 0.5).abs() < 1e-12);
    }

    #[test]
    fn chain3_dimensions() {
        let h = heisenberg_chain(3, 1.0, 0.5).unwrap();
        let p = build_eclectic(&h, Layout::PaddedTensor).unwrap();
        assert_eq!((p.n_bar, p.dim), (3, 36));
        let s = build_eclectic(&h, Layout::PerTermDirectSum).unwrap();
        assert_eq!(s.dim, 20);
        assert_eq!(s.operators[0].dim(), 20);
        assert_eq!(p.assembled().unwrap().dim(), 36);
    }

    #[test]
    fn single_term_padding() {
        let h = z_on(1, 3);
        let p = build_eclectic(&h, Layout::PaddedTensor).unwrap();
        assert_eq!((p.n_bar, p.dim), (1, 2));
        assert_eq!(p.operators[0], pauli::z());
    }

    #[test]
    fn padding_is_neutral() {
        let mut rng = seeded(4);
        let mut counts = BTreeMap::new();
        counts.insert(1, 3);
        counts.insert(2, 2);
        counts.insert(3, 2);
        let h = random_model(4, 2, &counts, &mut rng).unwrap();
        for layout in [Layout::PaddedTensor, Layout::PerTermDirectSum] {
            let sys = build_eclectic(&h, layout).unwrap();
            let (physical, padded) = sys.padding_defect(&h).unwrap();
            assert_eq!(physical, 0.0);
            assert_eq!(padded, 0.0);
        }
    }

    #[test]
    fn padded_class_blocks_use_combined_indices() {
        // Class of 2-local terms with n_bar = 2, d = 2: slot 1 has digits (0, 1).
        assert_eq!(padded_indices(1, 2, 2, 2), vec![2, 3, 6, 7]);
        assert_eq!(padded_indices(3, 2, 2, 2), vec![10, 11, 14, 15]);
        assert_eq!(ceil_root(5, 2), 3);
        assert_eq!(ceil_root(4, 2), 2);
        assert_eq!(ceil_root(9, 3), 3);
    }

    #[test]
    fn direct_sum_spectrum_is_union() {
        let h = heisenberg_chain(3, 1.0, 0.7).unwrap();
        let sys = build_eclectic(&h, Layout::PerTermDirectSum).unwrap();
        let mut expected = Vec::new();
        for t in &h.terms {
            expected.extend(lift_to(t, 2, 3).unwrap().matrix.eigenvalues().unwrap());
        }
        expected.sort_by(f64::total_cmp);
        let got = sys.spectrum().unwrap();
        assert!(got.iter().zip(&expected).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn lifting_keeps_term_energies() {
        let mut rng = seeded(12);
        let mut counts = BTreeMap::new();
        counts.insert(1, 2);
        counts.insert(3, 1);
        let h = random_model(5, 2, &counts, &mut rng).unwrap();
        let psi = random_state(32, &mut rng);
        let shape = h.shape().unwrap();
        for t in &h.terms {
            let lifted = lift_to(t, 3, 5).unwrap();
            let a = (&reduced_density(&psi, &shape, &t.sites).unwrap() * &t.matrix).trace().re;
            let b = (&reduced_density(&psi, &shape, &lifted.sites).unwrap() * &lifted.matrix).trace().re;
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn eclectic_state_blocks() {
        let h = heisenberg_chain(3, 1.0, 0.0).unwrap();
        let (_, gs) = ground_state(&h).unwrap();
        for layout in [Layout::PaddedTensor, Layout::PerTermDirectSum] {
            let sys = build_eclectic(&h, layout).unwrap();
            let st = eclectic_state(&gs, &sys, &h).unwrap();
            assert_eq!(st.block_count(), 5);
            assert_eq!(st.consistency, Consistency::FromGlobal);
        }
        let u = random_state(2, &mut seeded(2));
        let psi = kron_states(&kron_states(&u, &u).unwrap(), &u).unwrap();
        let sys = build_eclectic(&h, Layout::PaddedTensor).unwrap();
        let st = eclectic_state(&psi, &sys, &h).unwrap();
        assert!(st.local.iter().all(|a| a.method == ExtractionMethod::RankOne));
    }

    #[test]
    fn energy_identity_examples() {
        let h = z_on(0, 3);
        let psi = basis(8, 0);
        for layout in [Layout::PaddedTensor, Layout::PerTermDirectSum] {
            let r = verify_energy_identity(&psi, &build_eclectic(&h, layout).unwrap(), &h).unwrap();
            assert!((r.total.e_full - 1.0).abs() < 1e-14 && (r.total.e_eclectic - 1.0).abs() < 1e-14);
        }
        let h = KLocalHamiltonian::new(2, 2, vec![LocalTerm::new(vec![0, 1], heis(), "b")]).unwrap();
        let r = verify_energy_identity(&singlet(), &build_eclectic(&h, Layout::PaddedTensor).unwrap(), &h).unwrap();
        assert!((r.total.e_full + 3.0).abs() < 1e-12 && (r.total.e_eclectic + 3.0).abs() < 1e-12);
    }

    #[test]
    fn energy_identity_on_chain4() {
        let h = heisenberg_chain(4, 1.0, 0.3).unwrap();
        let mut rng = seeded(77);
        let systems =
            [build_eclectic(&h, Layout::PaddedTensor).unwrap(), build_eclectic(&h, Layout::PerTermDirectSum).unwrap()];
        let mut worst = 0.0f64;
        for _ in 0..100 {
            let psi = random_state(16, &mut rng);
            for sys in &systems {
                let r = verify_energy_identity(&psi, sys, &h).unwrap();
                worst = worst.max(r.total.delta).max((r.normalized_e_eclectic - r.total.e_full).abs());
            }
        }
        assert!(worst < 1e-9, "{worst}");
    }

    #[test]
    fn external_local_states_are_unverified() {
        let h = z_on(0, 2);
        let sys = build_eclectic(&h, Layout::PaddedTensor).unwrap();
        let st = eclectic_state_from_local(&sys, &h, vec![basis(2, 1)]).unwrap();
        assert_eq!(st.consistency, Consistency::Unverified);
        assert!((st.energy(&sys) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn dimension_examples() {
        let t = chain_dimension_sweep(2..=14);
        let row = |n: usize| t.rows.iter().find(|r| r.n == n).unwrap().clone();
        assert_eq!((row(10).full, row(10).padded), (1024, 400));
        assert_eq!((row(12).full, row(12).padded, row(12).direct_sum), (4096, 576, 92));
        assert_eq!((row(2).full, row(2).padded), (4, 16));
        assert_eq!((row(8).full, row(8).padded), (256, 256));
        assert_eq!(t.padded_crossover, Some(9));
        assert_eq!(t.direct_sum_crossover, Some(6));
        assert!(t.warnings.iter().any(|w| w.starts_with("n=2:")));
        let h = heisenberg_chain(10, 1.0, 1.0).unwrap();
        let r = dimension_report(&h);
        assert_eq!((r.rows[0].full, r.rows[0].padded), (1024, 400));
    }

    #[test]
    fn many_body_field_blocks() {
        let h = z_on(0, 1);
        let f = second_quantized_many_body(&h, FieldConfig::default()).unwrap();
        assert_eq!(f.blocks[0].space().modes(), 2);
        let h = heisenberg_chain(2, 1.0, 0.4).unwrap();
        let f = second_quantized_many_body(&h, FieldConfig::default()).unwrap();
        assert_eq!(f.blocks.len(), 3);
        for (b, t) in f.blocks.iter().zip(&h.terms) {
            assert!(crate::fock::one_excitation_block(b).unwrap().max_abs_diff(&t.matrix) < 1e-13);
        }
        let mut rng = seeded(5);
        for _ in 0..20 {
            let psi = random_state(4, &mut rng);
            assert!((field_energy(&h, &f, &psi).unwrap() - h.energy(&psi).unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn separable_form_of_one_local_model() {
        let mut rng = seeded(6);
        let (a, b) = (random_hermitian(2, &mut rng), random_hermitian(2, &mut rng));
        let h = KLocalHamiltonian::new(
            2,
            2,
            vec![LocalTerm::new(vec![0], a.clone(), "a"), LocalTerm::new(vec![1], b.clone(), "b")],
        )
        .unwrap();
        let space = separable_space(&h).unwrap();
        let sep = separable_form(&h, &space).unwrap();
        let direct = second_quantize_hamiltonian(&direct_sum(&[a, b]).unwrap(), &space).unwrap();
        assert!(sep.matrix().max_abs_diff(direct.matrix()) < 1e-13);
    }

    #[test]
    fn separable_form_on_product_states() {
        let h = heisenberg_chain(2, 1.0, 0.4).unwrap();
        let space = separable_space(&h).unwrap();
        let sep = separable_form(&h, &space).unwrap();
        let psi = kron_states(&basis(2, 0), &basis(2, 1)).unwrap();
        let chi = product_embedding(&psi, &h, &space).unwrap();
        let lhs = h.energy(&psi).unwrap();
        assert!((lhs - expectation(&chi, sep.matrix()).unwrap().re).abs() < 1e-10);
        let mut rng = seeded(8);
        let u = random_state(2, &mut rng);
        let w = random_state(2, &mut rng);
        let psi = kron_states(&u, &w).unwrap();
        let chi = product_embedding(&psi, &h, &space).unwrap();
        assert!((h.energy(&psi).unwrap() - expectation(&chi, sep.matrix()).unwrap().re).abs() < 1e-10);
    }

    #[test]
    fn separable_gap_on_entangled_state() {
        // On the one-boson-per-site image the form reproduces every state's energy.
        let h = heisenberg_chain(3, 1.0, 0.2).unwrap();
        let space = separable_space(&h).unwrap();
        let sep = separable_form(&h, &space).unwrap();
        let (e0, gs) = ground_state(&h).unwrap();
        let chi = product_embedding(&gs, &h, &space).unwrap();
        assert!((expectation(&chi, sep.matrix()).unwrap().re - e0).abs() < 1e-10);
    }

    #[test]
    fn lanczos_ground_state() {
        let h = heisenberg_chain(6, 1.0, 0.3).unwrap();
        let (e, v) = ground_state(&h).unwrap();
        let exact = assemble_full(&h).unwrap().eigenvalues().unwrap()[0];
        assert!((e - exact).abs() < 1e-10);
        assert!((h.energy(&v).unwrap() - exact).abs() < 1e-10);
    }

    #[test]
    fn random_instances_satisfy_identity() {
        let mut rng = seeded(2024);
        for _ in 0..20 {
            let (h, psi) = random_instance(&mut rng).unwrap();
            for layout in [Layout::PaddedTensor, Layout::PerTermDirectSum] {
                let r = verify_energy_identity(&psi, &build_eclectic(&h, layout).unwrap(), &h).unwrap();
                assert!(r.total.pass, "{:?}", r.total);
            }
        }
    }
}
