//! Second quantization on occupation-number Fock spaces.
//!
//! Bosonic spaces are truncated by total excitation `N_tot`; fermionic spaces
//! are exact (`2^d`) and use the Jordan-Wigner sign `(-1)^{sum_{j<i} n_j}`
//! purely as a matrix representation of the anticommutation relations.
//! Basis states are graded by total number; within a grade they are in
//! descending lexicographic order, so the one-excitation states `|1_i>`
//! appear in mode order.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hilbert::{check_dim, cr, kron, Operator, StateVector, C64, HERMITIAN_TOL};

/// Tolerance for claims that an operator commutes with the number operator.
pub const NUMBER_TOL: f64 = 1e-12;

/// Smallest admissible mixed-state weight.
pub const MIN_WEIGHT: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistics {
    Boson,
    Fermion,
}

impl std::fmt::Display for Statistics {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Statistics::Boson => "boson",
            Statistics::Fermion => "fermion",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FockSpace {
    modes: usize,
    statistics: Statistics,
    cutoff: Option<usize>,
    basis: Vec<Vec<u32>>,
    index: HashMap<Vec<u32>, usize>,
}

/// `C(n, k)` in u128, saturating.
fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k.min(n));
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

/// All occupation vectors of `modes` entries in `0..=max_each` summing to
/// `total`, in descending lexicographic order.
fn grade(modes: usize, total: u32, max_each: u32) -> Vec<Vec<u32>> {
    fn rec(prefix: &mut Vec<u32>, left: usize, total: u32, max_each: u32, out: &mut Vec<Vec<u32>>) {
        if left == 0 {
            if total == 0 {
                out.push(prefix.clone());
            }
            return;
        }
        for first in (0..=total.min(max_each)).rev() {
            if u64::from(total - first) > u64::from(max_each) * (left as u64 - 1) {
                continue;
            }
            prefix.push(first);
            rec(prefix, left - 1, total - first, max_each, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(modes), modes, total, max_each, &mut out);
    out
}

/// Builds a Fock space. `cutoff` is `N_tot` for bosons and ignored for fermions.
pub fn build_fock_space(modes: usize, statistics: Statistics, cutoff: usize) -> Result<FockSpace> {
    if modes == 0 {
        return Err(Error::arg("a Fock space needs at least one mode"));
    }
    let (dim, max_total, max_each, cutoff) = match statistics {
        Statistics::Boson => {
            if cutoff == 0 {
                return Err(Error::arg("bosonic cutoff must be at least 1"));
            }
            let dim = binomial(cutoff as u128 + modes as u128, modes as u128);
            (dim, cutoff as u32, cutoff as u32, Some(cutoff))
        }
        Statistics::Fermion => {
            let dim = if modes >= 127 { u128::MAX } else { 1u128 << modes };
            (dim, modes as u32, 1, None)
        }
    };
    check_dim(dim)?;
    let mut basis = Vec::with_capacity(dim as usize);
    for total in 0..=max_total {
        basis.extend(grade(modes, total, max_each));
    }
    debug_assert_eq!(basis.len() as u128, dim);
    let index = basis.iter().enumerate().map(|(i, b)| (b.clone(), i)).collect();
    Ok(FockSpace { modes, statistics, cutoff, basis, index })
}

impl FockSpace {
    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn statistics(&self) -> Statistics {
        self.statistics
    }

    /// `N_tot` for bosons, `None` for fermions.
    pub fn cutoff(&self) -> Option<usize> {
        self.cutoff
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[Vec<u32>] {
        &self.basis
    }

    pub fn index_of(&self, occupation: &[u32]) -> Option<usize> {
        self.index.get(occupation).copied()
    }

    pub fn total(&self, idx: usize) -> usize {
        self.basis[idx].iter().map(|&n| n as usize).sum()
    }

    /// Largest total number present.
    pub fn max_total(&self) -> usize {
        self.cutoff.unwrap_or(self.modes)
    }

    /// Basis indices with total number exactly `n`.
    pub fn sector_indices(&self, n: usize) -> Vec<usize> {
        (0..self.dim()).filter(|&i| self.total(i) == n).collect()
    }

    /// Basis indices on which identities of number-transfer degree `deg`
    /// hold exactly: `sum n <= N_tot - deg` for bosons, everything for fermions.
    pub fn safe_indices(&self, deg: usize) -> Vec<usize> {
        match self.cutoff {
            Some(n) => (0..self.dim()).filter(|&i| self.total(i) + deg <= n).collect(),
            None => (0..self.dim()).collect(),
        }
    }

    /// Human-readable sector label for reports.
    pub fn sector_label(&self, deg: usize) -> String {
        match self.cutoff {
            Some(n) => format!("sum n <= {}", n.saturating_sub(deg)),
            None => "full".to_string(),
        }
    }

    /// Diagonal projector onto `safe_indices(deg)`.
    pub fn safe_projector(&self, deg: usize) -> Operator {
        let mut diag = vec![0.0; self.dim()];
        for i in self.safe_indices(deg) {
            diag[i] = 1.0;
        }
        Operator::diag_real(&diag)
    }

    pub fn number_operator(&self) -> Operator {
        let diag: Vec<f64> = (0..self.dim()).map(|i| self.total(i) as f64).collect();
        Operator::diag_real(&diag)
    }

    pub fn vacuum(&self) -> StateVector {
        StateVector::basis(self.dim(), 0).expect("vacuum is basis state 0")
    }

    /// `|1_i>`.
    pub fn one_excitation_index(&self, mode: usize) -> usize {
        let mut occ = vec![0u32; self.modes];
        occ[mode] = 1;
        self.index[&occ]
    }

    /// `a_i |occ>` as (target occupation, amplitude), or `None` if it vanishes.
    fn lower(&self, occ: &[u32], i: usize) -> Option<(Vec<u32>, f64)> {
        if occ[i] == 0 {
            return None;
        }
        let amp = match self.statistics {
            Statistics::Boson => (occ[i] as f64).sqrt(),
            Statistics::Fermion => jw_sign(occ, i),
        };
        let mut out = occ.to_vec();
        out[i] -= 1;
        Some((out, amp))
    }

    /// `a_i^dagger |occ>`, dropping states above the cutoff.
    fn raise(&self, occ: &[u32], i: usize) -> Option<(Vec<u32>, f64)> {
        let amp = match self.statistics {
            Statistics::Boson => {
                let total: usize = occ.iter().map(|&n| n as usize).sum();
                if Some(total) >= self.cutoff {
                    return None;
                }
                (occ[i] as f64 + 1.0).sqrt()
            }
            Statistics::Fermion => {
                if occ[i] == 1 {
                    return None;
                }
                jw_sign(occ, i)
            }
        };
        let mut out = occ.to_vec();
        out[i] += 1;
        Some((out, amp))
    }
}

fn jw_sign(occ: &[u32], i: usize) -> f64 {
    if occ[..i].iter().sum::<u32>() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// An operator on a Fock space, optionally tagged as the quadratic form
/// `psi^dagger F psi` with coefficient matrix `F`.
#[derive(Debug, Clone)]
pub struct FockOperator {
    space: Arc<FockSpace>,
    matrix: Operator,
    form: Option<Operator>,
}

impl FockOperator {
    pub fn new(space: Arc<FockSpace>, matrix: Operator) -> Result<Self> {
        if matrix.dim() != space.dim() {
            return Err(Error::arg(format!("operator dim {} does not match Fock dim {}", matrix.dim(), space.dim())));
        }
        Ok(Self { space, matrix, form: None })
    }

    pub fn space(&self) -> &Arc<FockSpace> {
        &self.space
    }

    pub fn matrix(&self) -> &Operator {
        &self.matrix
    }

    /// The coefficient matrix if this is a quadratic form.
    pub fn form(&self) -> Option<&Operator> {
        self.form.as_ref()
    }

    pub fn number_defect(&self) -> f64 {
        self.matrix.commutator(&self.space.number_operator()).max_abs()
    }

    pub fn is_number_conserving(&self) -> bool {
        self.number_defect() <= NUMBER_TOL
    }

    /// Restriction to the total-number sector `n`.
    pub fn sector_block(&self, n: usize) -> Operator {
        self.matrix.submatrix(&self.space.sector_indices(n))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ladder {
    Annihilate,
    Create,
}

pub fn ladder_matrix(space: &Arc<FockSpace>, mode: usize, kind: Ladder) -> Result<FockOperator> {
    if mode >= space.modes {
        return Err(Error::arg(format!("mode {mode} out of range for {} modes", space.modes)));
    }
    let n = space.dim();
    let mut m = DMatrix::<C64>::zeros(n, n);
    for (col, occ) in space.basis.iter().enumerate() {
        if let Some((target, amp)) = space.lower(occ, mode) {
            m[(space.index[&target], col)] = cr(amp);
        }
    }
    let a = Operator::from_matrix_unchecked(m);
    let matrix = match kind {
        Ladder::Annihilate => a,
        Ladder::Create => a.adjoint(),
    };
    FockOperator::new(space.clone(), matrix)
}

/// All annihilators `a_0 .. a_{d-1}`.
pub fn annihilators(space: &Arc<FockSpace>) -> Vec<Operator> {
    (0..space.modes)
        .map(|i| ladder_matrix(space, i, Ladder::Annihilate).expect("mode in range").matrix)
        .collect()
}

/// Max-abs entry of `x` over the columns in `cols`, i.e. of `x P`.
pub fn restricted_residual(x: &Operator, cols: &[usize]) -> f64 {
    let m = x.matrix();
    let mut worst = 0.0f64;
    for &c in cols {
        for r in 0..m.nrows() {
            worst = worst.max(m[(r, c)].norm());
        }
    }
    worst
}

#[derive(Debug, Clone, Serialize)]
pub struct RelationResidual {
    pub relation: String,
    pub i: usize,
    pub j: usize,
    /// On the safe sector.
    pub restricted: f64,
    /// On the whole truncated space.
    pub full: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StatisticsReport {
    pub statistics: Statistics,
    pub d: usize,
    pub cutoff: Option<usize>,
    pub sector: String,
    pub relations: Vec<RelationResidual>,
    pub max_restricted: f64,
    pub max_full: f64,
    /// A nonzero full-space residual that is the expected truncation artifact.
    pub boundary_artifact: bool,
}

/// Residuals of every (anti)commutation relation among the ladder matrices.
pub fn check_statistics(space: &Arc<FockSpace>) -> StatisticsReport {
    let a = annihilators(space);
    let ad: Vec<Operator> = a.iter().map(Operator::adjoint).collect();
    let id = Operator::identity(space.dim());
    let safe = space.safe_indices(1);
    let all: Vec<usize> = (0..space.dim()).collect();
    let bracket = |x: &Operator, y: &Operator| match space.statistics {
        Statistics::Boson => x.commutator(y),
        Statistics::Fermion => x.anticommutator(y),
    };
    let (open, close) = match space.statistics {
        Statistics::Boson => ("[", "]"),
        Statistics::Fermion => ("{", "}"),
    };
    let mut relations = Vec::new();
    for i in 0..space.modes {
        for j in 0..space.modes {
            let mut mixed = bracket(&a[i], &ad[j]);
            if i == j {
                mixed = &mixed - &id;
            }
            let cases = [
                (format!("{open}a_i, a_j^dagger{close} - delta_ij"), mixed),
                (format!("{open}a_i, a_j{close}"), bracket(&a[i], &a[j])),
                (format!("{open}a_i^dagger, a_j^dagger{close}"), bracket(&ad[i], &ad[j])),
            ];
            for (relation, x) in cases {
                relations.push(RelationResidual {
                    relation,
                    i,
                    j,
                    restricted: restricted_residual(&x, &safe),
                    full: restricted_residual(&x, &all),
                });
            }
        }
    }
    let max_restricted = relations.iter().map(|r| r.restricted).fold(0.0, f64::max);
    let max_full = relations.iter().map(|r| r.full).fold(0.0, f64::max);
    StatisticsReport {
        statistics: space.statistics,
        d: space.modes,
        cutoff: space.cutoff,
        sector: space.sector_label(1),
        relations,
        max_restricted,
        max_full,
        boundary_artifact: space.statistics == Statistics::Boson && max_full > max_restricted,
    }
}

/// `sum_ij F_ij a_i^dagger a_j` for an arbitrary square `F`, built by direct
/// action on occupation vectors.
fn quadratic_form(coeff: &Operator, space: &Arc<FockSpace>) -> Result<FockOperator> {
    if coeff.dim() != space.modes {
        return Err(Error::arg(format!(
            "coefficient matrix dim {} does not match {} modes",
            coeff.dim(),
            space.modes
        )));
    }
    let n = space.dim();
    let mut m = DMatrix::<C64>::zeros(n, n);
    for (col, occ) in space.basis.iter().enumerate() {
        for j in 0..space.modes {
            let Some((mid, aj)) = space.lower(occ, j) else { continue };
            for i in 0..space.modes {
                let f = coeff.get(i, j);
                if f == C64::new(0.0, 0.0) {
                    continue;
                }
                if let Some((target, ai)) = space.raise(&mid, i) {
                    m[(space.index[&target], col)] += f * (ai * aj);
                }
            }
        }
    }
    Ok(FockOperator { space: space.clone(), matrix: Operator::from_matrix_unchecked(m), form: Some(coeff.clone()) })
}

/// `H = psi^dagger H psi`.
pub fn second_quantize_hamiltonian(h: &Operator, space: &Arc<FockSpace>) -> Result<FockOperator> {
    h.require_hermitian("hamiltonian")?;
    quadratic_form(h, space)
}

/// `O = psi^dagger O psi`.
pub fn second_quantize_observable(o: &Operator, space: &Arc<FockSpace>) -> Result<FockOperator> {
    o.require_hermitian("observable")?;
    quadratic_form(o, space)
}

/// The `sum n = 1` block, in mode order.
pub fn one_excitation_block(hh: &FockOperator) -> Result<Operator> {
    let defect = hh.number_defect();
    if defect > NUMBER_TOL {
        return Err(Error::validation(format!("operator does not conserve number (defect {defect:.3e})")));
    }
    let idx: Vec<usize> = (0..hh.space.modes).map(|i| hh.space.one_excitation_index(i)).collect();
    Ok(hh.matrix.submatrix(&idx))
}

/// `chi = sum_j psi_j |1_j>`, with `<chi|H|chi> = <psi|H|psi>`.
pub fn one_excitation_state(psi: &StateVector, space: &FockSpace) -> Result<StateVector> {
    if psi.dim() != space.modes {
        return Err(Error::arg("state dimension does not match the mode count"));
    }
    let mut amps = vec![C64::new(0.0, 0.0); space.dim()];
    for (j, &z) in psi.amplitudes().iter().enumerate() {
        amps[space.one_excitation_index(j)] = z;
    }
    StateVector::new(amps)
}

/// `max_i || ([a_i, H] - sum_j H_ij a_j) P ||` on the degree-1 safe sector.
pub fn heisenberg_field_residual(space: &Arc<FockSpace>, h: &Operator) -> Result<f64> {
    Ok(heisenberg_field_residuals(space, h)?.0)
}

/// (safe-sector residual, full-space residual) of the field equation.
pub fn heisenberg_field_residuals(space: &Arc<FockSpace>, h: &Operator) -> Result<(f64, f64)> {
    let hh = second_quantize_hamiltonian(h, space)?;
    let a = annihilators(space);
    let safe = space.safe_indices(1);
    let all: Vec<usize> = (0..space.dim()).collect();
    let (mut restricted, mut full) = (0.0f64, 0.0f64);
    for i in 0..space.modes {
        let mut diff = a[i].commutator(&hh.matrix);
        for (j, aj) in a.iter().enumerate() {
            diff = &diff - &aj.scale(h.get(i, j));
        }
        restricted = restricted.max(restricted_residual(&diff, &safe));
        full = full.max(restricted_residual(&diff, &all));
    }
    Ok((restricted, full))
}

fn require_form(x: &FockOperator) -> Result<&Operator> {
    x.form
        .as_ref()
        .ok_or_else(|| Error::Unsupported("the quantum Poisson bracket is defined here only for quadratic forms".into()))
}

/// `{F, G}_Q` by the formal-derivative rule on quadratic forms.
///
/// With `F = -i sum_ij F_ij zeta_i psi_j`, the derivatives are the linear
/// forms `dF/dpsi_k = sum_i F_ik psi_i^dagger` and `dF/dzeta_k = -i sum_j F_kj psi_j`.
/// Products of a creation-linear and an annihilation-linear form are normal
/// ordered, giving coefficient `sum_k (F e_k)(-i e_k^T G) - (G e_k)(-i e_k^T F)`.
pub fn quantum_poisson_bracket(f: &FockOperator, g: &FockOperator) -> Result<FockOperator> {
    let fc = require_form(f)?;
    let gc = require_form(g)?;
    if !Arc::ptr_eq(&f.space, &g.space) && f.space != g.space {
        return Err(Error::arg("operands live on different Fock spaces"));
    }
    let d = fc.dim();
    let (fm, gm) = (fc.matrix(), gc.matrix());
    let mut coeff = DMatrix::<C64>::zeros(d, d);
    let mi = -C64::i();
    for k in 0..d {
        for i in 0..d {
            for j in 0..d {
                coeff[(i, j)] += fm[(i, k)] * mi * gm[(k, j)] - gm[(i, k)] * mi * fm[(k, j)];
            }
        }
    }
    quadratic_form(&Operator::from_matrix_unchecked(coeff), &f.space)
}

/// `[F, G] - i {F, G}_Q` on the safe sector.
pub fn bracket_identity_residual(f: &FockOperator, g: &FockOperator) -> Result<f64> {
    let q = quantum_poisson_bracket(f, g)?;
    let diff = &f.matrix.commutator(&g.matrix) - &q.matrix.scale(C64::i());
    Ok(restricted_residual(&diff, &f.space.safe_indices(0)))
}

/// Quantum Jacobi residual `{F,{G,E}} + {E,{F,G}} + {G,{E,F}}`, max-abs.
pub fn quantum_jacobi_residual(f: &FockOperator, g: &FockOperator, e: &FockOperator) -> Result<f64> {
    let a = quantum_poisson_bracket(f, &quantum_poisson_bracket(g, e)?)?;
    let b = quantum_poisson_bracket(e, &quantum_poisson_bracket(f, g)?)?;
    let c = quantum_poisson_bracket(g, &quantum_poisson_bracket(e, f)?)?;
    Ok((&(&a.matrix + &b.matrix) + &c.matrix).max_abs())
}

/// `[O, H] - psi^dagger [O, H] psi` on the safe sector.
pub fn equal_time_residual(o: &Operator, h: &Operator, space: &Arc<FockSpace>) -> Result<f64> {
    let oo = second_quantize_observable(o, space)?;
    let hh = second_quantize_hamiltonian(h, space)?;
    let lifted = quadratic_form(&o.commutator(h), space)?;
    let diff = &oo.matrix.commutator(&hh.matrix) - &lifted.matrix;
    Ok(restricted_residual(&diff, &space.safe_indices(0)))
}

/// Residual of `i dO/dt = psi^dagger [O_t, H] psi` with `O_t = e^{iHt} O e^{-iHt}`
/// and `O(t) = psi^dagger O_t psi`, the derivative taken by Richardson-extrapolated
/// central differences.
pub fn observable_heisenberg_residual(o: &Operator, h: &Operator, space: &Arc<FockSpace>, t: f64) -> Result<f64> {
    o.require_hermitian("observable")?;
    h.require_hermitian("hamiltonian")?;
    let heis = |s: f64| -> Result<Operator> {
        let u = h.propagator(s)?;
        Ok(&(&u.adjoint() * o) * &u)
    };
    let lifted = |s: f64| -> Result<Operator> { Ok(quadratic_form(&heis(s)?, space)?.matrix) };
    let central = |step: f64| -> Result<Operator> {
        Ok((&lifted(t + step)? - &lifted(t - step)?).scale_real(0.5 / step))
    };
    let step = 1e-3;
    let coarse = central(step)?;
    let fine = central(0.5 * step)?;
    let derivative = (&fine.scale_real(4.0) - &coarse).scale_real(1.0 / 3.0);
    let rhs = quadratic_form(&heis(t)?.commutator(h), space)?.matrix;
    let diff = &derivative.scale(C64::i()) - &rhs;
    Ok(restricted_residual(&diff, &space.safe_indices(0)))
}

/// `varrho = sum_mu p_mu psi_mu psi_mu^dagger` with the field
/// `psi_mu = |psi_mu> (x) a_mu`, realized on `C^d (x) F`.
#[derive(Debug, Clone)]
pub struct SecondQuantizedState {
    space: Arc<FockSpace>,
    components: Vec<(f64, StateVector)>,
}

impl SecondQuantizedState {
    /// Explicit weights and normalized vectors; component `mu` uses mode `mu`.
    pub fn from_components(components: Vec<(f64, StateVector)>, space: &Arc<FockSpace>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::validation("a state needs at least one component"));
        }
        if components.len() > space.modes {
            return Err(Error::arg(format!(
                "{} components need at least as many modes, space has {}",
                components.len(),
                space.modes
            )));
        }
        let d = components[0].1.dim();
        for (p, v) in &components {
            if !(MIN_WEIGHT..=1.0 + 1e-12).contains(p) {
                return Err(Error::validation(format!("weight {p:e} outside [{MIN_WEIGHT:e}, 1]")));
            }
            if v.dim() != d {
                return Err(Error::arg("component vectors have different dimensions"));
            }
            if !v.is_normalized() {
                return Err(Error::validation("component vectors must be normalized"));
            }
        }
        let sum: f64 = components.iter().map(|(p, _)| p).sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::validation(format!("weights sum to {sum}, not 1")));
        }
        Ok(Self { space: space.clone(), components })
    }

    pub fn pure(psi: &StateVector, space: &Arc<FockSpace>) -> Result<Self> {
        Self::from_components(vec![(1.0, psi.clone())], space)
    }

    /// From the eigendecomposition of `rho`. Eigenvalues below the minimum
    /// weight are treated as absent; the kept weights must still sum to 1.
    pub fn from_density(rho: &Operator, space: &Arc<FockSpace>) -> Result<Self> {
        let (vals, vecs) = rho.eigh()?;
        if vals[0] < -1e-10 {
            return Err(Error::validation(format!("density matrix has eigenvalue {:e}", vals[0])));
        }
        let mut components = Vec::new();
        for (k, &p) in vals.iter().enumerate().rev() {
            if p >= MIN_WEIGHT {
                let v = StateVector::new(vecs.column(k).iter().copied().collect())?.normalize()?;
                components.push((p, v));
            }
        }
        Self::from_components(components, space)
    }

    pub fn space(&self) -> &Arc<FockSpace> {
        &self.space
    }

    pub fn components(&self) -> &[(f64, StateVector)] {
        &self.components
    }

    /// Dimension of the single-particle space `C^d`.
    pub fn d(&self) -> usize {
        self.components[0].1.dim()
    }

    /// `a_mu a_mu^dagger` for each component.
    fn antinormal_blocks(&self) -> Vec<Operator> {
        let a = annihilators(&self.space);
        (0..self.components.len()).map(|mu| &a[mu] * &a[mu].adjoint()).collect()
    }

    /// `varrho` on `C^d (x) F`.
    pub fn varrho(&self) -> Result<Operator> {
        self.lift_components(|_, v| v.projector())
    }

    /// `sum_mu p_mu X_mu (x) a_mu a_mu^dagger` for per-component `X_mu`.
    pub fn lift_components(&self, mut x: impl FnMut(usize, &StateVector) -> Operator) -> Result<Operator> {
        let blocks = self.antinormal_blocks();
        check_dim(self.d() as u128 * self.space.dim() as u128)?;
        let mut acc = Operator::zeros(self.d() * self.space.dim());
        for (mu, (p, v)) in self.components.iter().enumerate() {
            acc = &acc + &kron(&x(mu, v).scale_real(*p), &blocks[mu])?;
        }
        Ok(acc)
    }

    /// `(1 (x) <vac|) X (1 (x) |vac>)`; maps `varrho` back to `rho`.
    pub fn vacuum_reduce(&self, x: &Operator) -> Operator {
        let f = self.space.dim();
        let idx: Vec<usize> = (0..self.d()).map(|i| i * f).collect();
        x.submatrix(&idx)
    }
}

/// A column `u (x) X` or row `v^dagger (x) Y` of operator-valued entries.
struct FieldVector {
    vector: Vec<C64>,
    op: Operator,
}

impl FieldVector {
    /// Column times row: `(u v^dagger) (x) (X Y)`.
    fn outer(col: &FieldVector, row: &FieldVector) -> Result<Operator> {
        kron(&Operator::outer(&col.vector, &row.vector)?, &(&col.op * &row.op))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VonNeumannResidual {
    /// `i dvarrho/dt - [H, varrho]` with the derivative from evolving each field.
    pub liouville: f64,
    /// `i {varrho, H}_Qbar - [H, varrho]`.
    pub bracket: f64,
}

/// Both forms of the operator-valued von Neumann equation.
///
/// The mixed-state bracket is `sum_mu (1/p_mu) [(dH/dzeta_mu)(dvarrho/dpsi_mu)
/// - (dvarrho/dzeta_mu)(dH/dpsi_mu)]`, each product realized as column times
/// row, with `H = sum_mu p_mu psi_mu^dagger H psi_mu`.
pub fn von_neumann_residual(state: &SecondQuantizedState, h: &Operator) -> Result<VonNeumannResidual> {
    h.require_hermitian("hamiltonian")?;
    let d = state.d();
    if h.dim() != d {
        return Err(Error::arg("hamiltonian and state dimensions differ"));
    }
    let f = state.space.dim();
    let varrho = state.varrho()?;
    let h_big = kron(h, &Operator::identity(f))?;
    let target = h_big.commutator(&varrho);

    // d/dt (psi psi^dagger) with psi' = -i H psi.
    let derivative = state.lift_components(|_, v| {
        let hp = h.apply(v).expect("dims checked");
        let dv: Vec<C64> = hp.amplitudes().iter().map(|z| -C64::i() * z).collect();
        &Operator::outer(&dv, v.amplitudes()).unwrap() + &Operator::outer(v.amplitudes(), &dv).unwrap()
    })?;
    let liouville = (&derivative.scale(C64::i()) - &target).max_abs();

    let a = annihilators(&state.space);
    let mut bracket = Operator::zeros(d * f);
    let mi = -C64::i();
    for (mu, (p, v)) in state.components.iter().enumerate() {
        let hv: Vec<C64> = h.apply(v)?.amplitudes().to_vec();
        let scaled = |w: &[C64], s: C64| -> Vec<C64> { w.iter().map(|z| z * s).collect() };
        let ad = a[mu].adjoint();
        // dH/dzeta_mu = -i p H psi_mu, dH/dpsi_mu = p psi_mu^dagger H.
        let dh_dzeta = FieldVector { vector: scaled(&hv, mi * *p), op: a[mu].clone() };
        let dh_dpsi = FieldVector { vector: scaled(&hv, cr(*p)), op: ad.clone() };
        // dvarrho/dzeta_mu = -i p psi_mu, dvarrho/dpsi_mu = p psi_mu^dagger.
        let dr_dzeta = FieldVector { vector: scaled(v.amplitudes(), mi * *p), op: a[mu].clone() };
        let dr_dpsi = FieldVector { vector: scaled(v.amplitudes(), cr(*p)), op: ad };
        let term = &FieldVector::outer(&dh_dzeta, &dr_dpsi)? - &FieldVector::outer(&dr_dzeta, &dh_dpsi)?;
        bracket = &bracket + &term.scale_real(1.0 / p);
    }
    let bracket = (&bracket.scale(C64::i()) - &target).max_abs();
    Ok(VonNeumannResidual { liouville, bracket })
}

/// JSON residual row for reports.
#[derive(Debug, Clone, Serialize)]
pub struct ResidualReport {
    pub check: String,
    pub statistics: Statistics,
    pub d: usize,
    pub cutoff: Option<usize>,
    pub sector: String,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl ResidualReport {
    pub fn new(check: impl Into<String>, space: &FockSpace, deg: usize, residual: f64, tolerance: f64) -> Self {
        Self {
            check: check.into(),
            statistics: space.statistics,
            d: space.modes,
            cutoff: space.cutoff,
            sector: space.sector_label(deg),
            residual,
            tolerance,
            pass: residual < tolerance,
        }
    }
}

/// True if `x` is hermitian within the global tolerance.
pub fn is_hermitian(x: &FockOperator) -> bool {
    x.matrix.is_hermitian(HERMITIAN_TOL)
}
