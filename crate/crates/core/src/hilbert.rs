//! Dense complex linear algebra over finite Hilbert spaces.
//!
//! Tensor products follow the row-major Kronecker convention with site 0 as
//! the leftmost (slowest-varying) factor: for sites with dimensions
//! `[d0, d1, ..., d_{n-1}]` the basis index of `|i0 i1 ... i_{n-1}>` is
//! `i0 * d1 * ... * d_{n-1} + ... + i_{n-1}`.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::ser::SerializeStruct;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Max-abs tolerance on `H - H^dagger` used wherever hermiticity is required.
pub const HERMITIAN_TOL: f64 = 1e-10;

/// Tolerance on `| ||psi|| - 1 |` behind the `normalized` flag.
pub const NORM_TOL: f64 = 1e-12;

pub const DEFAULT_DIM_CAP: usize = 1 << 14;

static DIM_CAP: AtomicUsize = AtomicUsize::new(DEFAULT_DIM_CAP);

pub fn dim_cap() -> usize {
    DIM_CAP.load(Ordering::Relaxed)
}

/// Sets the process-wide cap on the dimension of dense operators and states.
pub fn set_dim_cap(cap: usize) {
    DIM_CAP.store(cap.max(1), Ordering::Relaxed);
}

/// Returns `dim` as `usize` if it is within the cap, a resource error otherwise.
pub fn check_dim(dim: u128) -> Result<usize> {
    let cap = dim_cap();
    if dim > cap as u128 {
        Err(Error::Resource { dim, cap })
    } else {
        Ok(dim as usize)
    }
}

pub(crate) fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub(crate) fn cr(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// A square complex matrix.
#[derive(Clone, PartialEq)]
pub struct Operator {
    mat: DMatrix<C64>,
}

impl fmt::Debug for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Operator(dim={}){}", self.dim(), self.mat)
    }
}

impl Operator {
    pub fn from_matrix(mat: DMatrix<C64>) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::arg(format!(
                "operator must be square, got {}x{}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        if mat.nrows() == 0 {
            return Err(Error::arg("operator dimension must be positive"));
        }
        if mat.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::validation("operator has non-finite entries"));
        }
        Ok(Self { mat })
    }

    /// Wraps a matrix that is square and finite by construction.
    pub(crate) fn from_matrix_unchecked(mat: DMatrix<C64>) -> Self {
        debug_assert_eq!(mat.nrows(), mat.ncols());
        Self { mat }
    }

    /// Builds an operator from row-major entries.
    pub fn from_rows(dim: usize, entries: &[C64]) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::arg(format!(
                "expected {} entries for dim {dim}, got {}",
                dim * dim,
                entries.len()
            )));
        }
        Self::from_matrix(DMatrix::from_row_slice(dim, dim, entries))
    }

    pub fn from_real_rows(dim: usize, entries: &[f64]) -> Result<Self> {
        let z: Vec<C64> = entries.iter().map(|&x| cr(x)).collect();
        Self::from_rows(dim, &z)
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_matrix_unchecked(DMatrix::identity(dim, dim))
    }

    pub fn zeros(dim: usize) -> Self {
        Self::from_matrix_unchecked(DMatrix::zeros(dim, dim))
    }

    pub fn diag(values: &[C64]) -> Self {
        Self::from_matrix_unchecked(DMatrix::from_diagonal(&DVector::from_column_slice(values)))
    }

    pub fn diag_real(values: &[f64]) -> Self {
        let v: Vec<C64> = values.iter().map(|&x| cr(x)).collect();
        Self::diag(&v)
    }

    /// `|u><v|`.
    pub fn outer(u: &[C64], v: &[C64]) -> Result<Self> {
        if u.len() != v.len() || u.is_empty() {
            return Err(Error::arg("outer product needs equal, nonzero lengths"));
        }
        let n = u.len();
        Ok(Self::from_matrix_unchecked(DMatrix::from_fn(n, n, |i, j| {
            u[i] * v[j].conj()
        })))
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.mat
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.mat[(row, col)]
    }

    pub fn adjoint(&self) -> Self {
        Self::from_matrix_unchecked(self.mat.adjoint())
    }

    pub fn scale(&self, s: C64) -> Self {
        Self::from_matrix_unchecked(&self.mat * s)
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(cr(s))
    }

    pub fn trace(&self) -> C64 {
        self.mat.trace()
    }

    /// Max-abs entry.
    pub fn max_abs(&self) -> f64 {
        self.mat.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Max-abs entry of `self - other`; infinite if the dimensions differ.
    pub fn max_abs_diff(&self, other: &Operator) -> f64 {
        if self.dim() != other.dim() {
            return f64::INFINITY;
        }
        self.mat
            .iter()
            .zip(other.mat.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Max-abs entry of `H - H^dagger`.
    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.mat[(i, j)] - self.mat[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        let prod = self.adjoint().mul_op(self);
        prod.max_abs_diff(&Operator::identity(self.dim())) <= tol
    }

    pub fn require_hermitian(&self, what: &str) -> Result<()> {
        let defect = self.hermiticity_defect();
        if defect > HERMITIAN_TOL {
            return Err(Error::validation(format!(
                "{what} is not hermitian (max |H - H^dagger| = {defect:.3e})"
            )));
        }
        Ok(())
    }

    pub fn mul_op(&self, other: &Operator) -> Operator {
        assert_eq!(self.dim(), other.dim(), "operator dimension mismatch");
        Self::from_matrix_unchecked(&self.mat * &other.mat)
    }

    pub fn apply(&self, psi: &StateVector) -> Result<StateVector> {
        if psi.dim() != self.dim() {
            return Err(Error::arg(format!(
                "operator dim {} does not match state dim {}",
                self.dim(),
                psi.dim()
            )));
        }
        Ok(StateVector::from_vector_unchecked(&self.mat * psi.vector()))
    }

    pub fn commutator(&self, other: &Operator) -> Operator {
        &self.mul_op(other) - &other.mul_op(self)
    }

    pub fn anticommutator(&self, other: &Operator) -> Operator {
        &self.mul_op(other) + &other.mul_op(self)
    }

    /// Eigenvalues (ascending) and matching eigenvectors (columns) of a
    /// hermitian operator.
    pub fn eigh(&self) -> Result<(Vec<f64>, DMatrix<C64>)> {
        self.require_hermitian("operator")?;
        // Symmetrize so the solver sees an exactly hermitian input.
        let sym = (&self.mat + self.mat.adjoint()) * cr(0.5);
        let eig = SymmetricEigen::new(sym);
        let mut order: Vec<usize> = (0..self.dim()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = DMatrix::from_fn(self.dim(), self.dim(), |r, k| {
            eig.eigenvectors[(r, order[k])]
        });
        Ok((values, vectors))
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        Ok(self.eigh()?.0)
    }

    /// `exp(-i H t)` for hermitian `H`, by eigendecomposition.
    pub fn propagator(&self, t: f64) -> Result<Operator> {
        let (vals, vecs) = self.eigh()?;
        let phases = DVector::from_iterator(
            vals.len(),
            vals.iter().map(|&l| C64::from_polar(1.0, -l * t)),
        );
        let scaled = DMatrix::from_fn(vecs.nrows(), vecs.ncols(), |r, k| vecs[(r, k)] * phases[k]);
        Ok(Self::from_matrix_unchecked(scaled * vecs.adjoint()))
    }

    /// Matrix exponential of an arbitrary (not necessarily normal) operator,
    /// by scaling and squaring of a Taylor series.
    pub fn expm(&self) -> Operator {
        let n = self.dim();
        let norm1 = (0..n)
            .map(|j| (0..n).map(|i| self.mat[(i, j)].norm()).sum::<f64>())
            .fold(0.0, f64::max);
        let mut squarings = 0u32;
        let mut scale = 1.0;
        while norm1 * scale > 0.5 {
            scale *= 0.5;
            squarings += 1;
        }
        let a = &self.mat * cr(scale);
        let mut result = DMatrix::<C64>::identity(n, n);
        let mut term = DMatrix::<C64>::identity(n, n);
        for k in 1..=30 {
            term = &term * &a * cr(1.0 / k as f64);
            result += &term;
            if term.iter().map(|z| z.norm()).fold(0.0, f64::max) < 1e-18 {
                break;
            }
        }
        for _ in 0..squarings {
            result = &result * &result;
        }
        Self::from_matrix_unchecked(result)
    }

    /// Restriction to the given basis indices (rows and columns).
    pub fn submatrix(&self, indices: &[usize]) -> Operator {
        let k = indices.len();
        Self::from_matrix_unchecked(DMatrix::from_fn(k, k, |i, j| {
            self.mat[(indices[i], indices[j])]
        }))
    }

    /// Row-major `(re, im)` pairs.
    pub fn entries_row_major(&self) -> Vec<[f64; 2]> {
        let n = self.dim();
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let z = self.mat[(i, j)];
                out.push([z.re, z.im]);
            }
        }
        out
    }
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        assert_eq!(self.dim(), rhs.dim(), "operator dimension mismatch");
        Operator::from_matrix_unchecked(&self.mat + &rhs.mat)
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        assert_eq!(self.dim(), rhs.dim(), "operator dimension mismatch");
        Operator::from_matrix_unchecked(&self.mat - &rhs.mat)
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        self.mul_op(rhs)
    }
}

impl Neg for &Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        Operator::from_matrix_unchecked(-&self.mat)
    }
}

impl Serialize for Operator {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = serializer.serialize_struct("Operator", 2)?;
        st.serialize_field("dim", &self.dim())?;
        st.serialize_field("entries", &self.entries_row_major())?;
        st.end()
    }
}

impl<'de> Deserialize<'de> for Operator {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            dim: usize,
            entries: Vec<[f64; 2]>,
        }
        let raw = Raw::deserialize(deserializer)?;
        let z: Vec<C64> = raw.entries.iter().map(|e| c(e[0], e[1])).collect();
        Operator::from_rows(raw.dim, &z).map_err(serde::de::Error::custom)
    }
}

/// A complex amplitude vector.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amps: DVector<C64>,
    normalized: bool,
}

impl StateVector {
    pub fn new(amps: Vec<C64>) -> Result<Self> {
        if amps.is_empty() {
            return Err(Error::arg("state dimension must be positive"));
        }
        if amps.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::validation("state has non-finite amplitudes"));
        }
        Ok(Self::from_vector_unchecked(DVector::from_vec(amps)))
    }

    pub(crate) fn from_vector_unchecked(amps: DVector<C64>) -> Self {
        let normalized = (amps.norm() - 1.0).abs() <= NORM_TOL;
        Self { amps, normalized }
    }

    /// Computational basis state `|index>`.
    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(Error::arg(format!("basis index {index} out of range for dim {dim}")));
        }
        let mut v = DVector::zeros(dim);
        v[index] = cr(1.0);
        Ok(Self::from_vector_unchecked(v))
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn vector(&self) -> &DVector<C64> {
        &self.amps
    }

    pub fn amplitudes(&self) -> &[C64] {
        self.amps.as_slice()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn norm(&self) -> f64 {
        self.amps.norm()
    }

    pub fn normalize(&self) -> Result<Self> {
        let n = self.norm();
        if n == 0.0 {
            return Err(Error::validation("cannot normalize the zero vector"));
        }
        Ok(Self::from_vector_unchecked(&self.amps * cr(1.0 / n)))
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amps.dotc(&other.amps)
    }

    pub fn max_abs_diff(&self, other: &StateVector) -> f64 {
        if self.dim() != other.dim() {
            return f64::INFINITY;
        }
        self.amps
            .iter()
            .zip(other.amps.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// `|psi><psi|`.
    pub fn projector(&self) -> Operator {
        Operator::from_matrix_unchecked(&self.amps * self.amps.adjoint())
    }
}

/// Local dimensions of an ordered list of sites.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpaceShape {
    site_dims: Vec<usize>,
}

impl SpaceShape {
    pub fn new(site_dims: Vec<usize>) -> Result<Self> {
        if site_dims.is_empty() || site_dims.iter().any(|&d| d == 0) {
            return Err(Error::arg("site dimensions must be a nonempty list of positive integers"));
        }
        Ok(Self { site_dims })
    }

    /// `n` sites of dimension `d`.
    pub fn uniform(n: usize, d: usize) -> Result<Self> {
        Self::new(vec![d; n])
    }

    pub fn site_dims(&self) -> &[usize] {
        &self.site_dims
    }

    pub fn n_sites(&self) -> usize {
        self.site_dims.len()
    }

    /// Product of the site dimensions, unchecked against the cap.
    pub fn total_dim_u128(&self) -> u128 {
        self.site_dims.iter().map(|&d| d as u128).product()
    }

    pub fn total_dim(&self) -> Result<usize> {
        check_dim(self.total_dim_u128())
    }

    fn strides(&self) -> Vec<usize> {
        let n = self.site_dims.len();
        let mut strides = vec![1usize; n];
        for s in (0..n.saturating_sub(1)).rev() {
            strides[s] = strides[s + 1] * self.site_dims[s + 1];
        }
        strides
    }

    fn check_sites(&self, sites: &[usize]) -> Result<()> {
        let mut seen = vec![false; self.n_sites()];
        for &s in sites {
            if s >= self.n_sites() {
                return Err(Error::arg(format!(
                    "site {s} out of range for {} sites",
                    self.n_sites()
                )));
            }
            if seen[s] {
                return Err(Error::arg(format!("duplicate site {s}")));
            }
            seen[s] = true;
        }
        Ok(())
    }
}

/// Splits full-space basis indices into (environment offset, local offset)
/// for a chosen ordered list of sites. Full index = env + local.
pub(crate) struct SiteSplit {
    pub local: Vec<usize>,
    pub env: Vec<usize>,
}

impl SiteSplit {
    pub fn new(shape: &SpaceShape, sites: &[usize]) -> Result<Self> {
        shape.check_sites(sites)?;
        check_dim(shape.total_dim_u128())?;
        let strides = shape.strides();
        let dims = shape.site_dims();
        let local = mixed_radix_offsets(sites.iter().map(|&s| (dims[s], strides[s])));
        let rest: Vec<usize> = (0..shape.n_sites()).filter(|s| !sites.contains(s)).collect();
        let env = mixed_radix_offsets(rest.iter().map(|&s| (dims[s], strides[s])));
        Ok(Self { local, env })
    }
}

/// All offsets `sum_j digit_j * stride_j`, enumerated with the first factor
/// slowest-varying.
fn mixed_radix_offsets(factors: impl Iterator<Item = (usize, usize)>) -> Vec<usize> {
    let mut offsets = vec![0usize];
    for (dim, stride) in factors {
        let mut next = Vec::with_capacity(offsets.len() * dim);
        for &o in &offsets {
            for digit in 0..dim {
                next.push(o + digit * stride);
            }
        }
        offsets = next;
    }
    offsets
}

/// Kronecker product `a (x) b`, `a` being the slow factor.
pub fn kron(a: &Operator, b: &Operator) -> Result<Operator> {
    let da = a.dim();
    let db = b.dim();
    let n = check_dim(da as u128 * db as u128)?;
    let mut out = DMatrix::<C64>::zeros(n, n);
    for i in 0..da {
        for j in 0..da {
            let aij = a.mat[(i, j)];
            if aij == C64::new(0.0, 0.0) {
                continue;
            }
            for k in 0..db {
                for l in 0..db {
                    out[(i * db + k, j * db + l)] = aij * b.mat[(k, l)];
                }
            }
        }
    }
    Ok(Operator::from_matrix_unchecked(out))
}

/// Left fold of `kron` over a nonempty list.
pub fn kron_all(ops: &[Operator]) -> Result<Operator> {
    let (first, rest) = ops
        .split_first()
        .ok_or_else(|| Error::arg("kron_all needs at least one operator"))?;
    rest.iter().try_fold(first.clone(), |acc, op| kron(&acc, op))
}

pub fn kron_states(a: &StateVector, b: &StateVector) -> Result<StateVector> {
    let n = check_dim(a.dim() as u128 * b.dim() as u128)?;
    let mut v = DVector::<C64>::zeros(n);
    for (i, x) in a.amps.iter().enumerate() {
        for (j, y) in b.amps.iter().enumerate() {
            v[i * b.dim() + j] = x * y;
        }
    }
    Ok(StateVector::from_vector_unchecked(v))
}

/// Block-diagonal operator with the blocks in the given order.
pub fn direct_sum(blocks: &[Operator]) -> Result<Operator> {
    if blocks.is_empty() {
        return Err(Error::arg("direct_sum needs at least one block"));
    }
    let total: u128 = blocks.iter().map(|b| b.dim() as u128).sum();
    let n = check_dim(total)?;
    let mut out = DMatrix::<C64>::zeros(n, n);
    let mut offset = 0;
    for b in blocks {
        out.view_mut((offset, offset), (b.dim(), b.dim())).copy_from(&b.mat);
        offset += b.dim();
    }
    Ok(Operator::from_matrix_unchecked(out))
}

/// Direct sum of state vectors (concatenation).
pub fn direct_sum_states(parts: &[StateVector]) -> Result<StateVector> {
    if parts.is_empty() {
        return Err(Error::arg("direct sum of states needs at least one part"));
    }
    let total: u128 = parts.iter().map(|p| p.dim() as u128).sum();
    check_dim(total)?;
    let amps: Vec<C64> = parts.iter().flat_map(|p| p.amps.iter().copied()).collect();
    Ok(StateVector::from_vector_unchecked(DVector::from_vec(amps)))
}

fn local_dim(shape: &SpaceShape, sites: &[usize]) -> u128 {
    sites.iter().map(|&s| shape.site_dims()[s] as u128).product()
}

fn check_local(op: &Operator, sites: &[usize], shape: &SpaceShape) -> Result<()> {
    shape.check_sites(sites)?;
    if sites.is_empty() {
        return Err(Error::arg("a local operator needs at least one site"));
    }
    let expected = local_dim(shape, sites);
    if op.dim() as u128 != expected {
        return Err(Error::arg(format!(
            "operator dim {} does not match the product {} of the dims of sites {:?}",
            op.dim(),
            expected,
            sites
        )));
    }
    Ok(())
}

/// Embeds `op`, acting on `sites` (in the given order, first site slowest),
/// into the full space described by `shape`.
pub fn embed_local(op: &Operator, sites: &[usize], shape: &SpaceShape) -> Result<Operator> {
    check_local(op, sites, shape)?;
    let split = SiteSplit::new(shape, sites)?;
    let n = shape.total_dim()?;
    let mut out = DMatrix::<C64>::zeros(n, n);
    for &e in &split.env {
        for (lc, &oc) in split.local.iter().enumerate() {
            for (lr, &or) in split.local.iter().enumerate() {
                out[(e + or, e + oc)] = op.mat[(lr, lc)];
            }
        }
    }
    Ok(Operator::from_matrix_unchecked(out))
}

/// Applies the embedding of `op` on `sites` to `psi` without forming the
/// full matrix.
pub fn apply_local(
    op: &Operator,
    sites: &[usize],
    shape: &SpaceShape,
    psi: &StateVector,
) -> Result<StateVector> {
    check_local(op, sites, shape)?;
    if psi.dim() as u128 != shape.total_dim_u128() {
        return Err(Error::arg("state dimension does not match the space shape"));
    }
    let split = SiteSplit::new(shape, sites)?;
    let k = split.local.len();
    let mut out = DVector::<C64>::zeros(psi.dim());
    let mut slice = DVector::<C64>::zeros(k);
    for &e in &split.env {
        for (l, &o) in split.local.iter().enumerate() {
            slice[l] = psi.amps[e + o];
        }
        let image = &op.mat * &slice;
        for (l, &o) in split.local.iter().enumerate() {
            out[e + o] = image[l];
        }
    }
    Ok(StateVector::from_vector_unchecked(out))
}

/// Traces out every site not in `keep`; the result is ordered as `keep`.
pub fn partial_trace(rho: &Operator, shape: &SpaceShape, keep: &[usize]) -> Result<Operator> {
    if rho.dim() as u128 != shape.total_dim_u128() {
        return Err(Error::arg(format!(
            "operator dim {} does not match shape total {}",
            rho.dim(),
            shape.total_dim_u128()
        )));
    }
    let split = SiteSplit::new(shape, keep)?;
    let k = split.local.len();
    let mut out = DMatrix::<C64>::zeros(k, k);
    for (a, &oa) in split.local.iter().enumerate() {
        for (b, &ob) in split.local.iter().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for &e in &split.env {
                acc += rho.mat[(e + oa, e + ob)];
            }
            out[(a, b)] = acc;
        }
    }
    Ok(Operator::from_matrix_unchecked(out))
}

/// Reduced density matrix of the pure state `psi` on `keep`, computed from
/// the amplitudes without forming `|psi><psi|`.
pub fn reduced_density(psi: &StateVector, shape: &SpaceShape, keep: &[usize]) -> Result<Operator> {
    if psi.dim() as u128 != shape.total_dim_u128() {
        return Err(Error::arg("state dimension does not match the space shape"));
    }
    let split = SiteSplit::new(shape, keep)?;
    let k = split.local.len();
    let mut out = DMatrix::<C64>::zeros(k, k);
    for &e in &split.env {
        for (a, &oa) in split.local.iter().enumerate() {
            let x = psi.amps[e + oa];
            if x == C64::new(0.0, 0.0) {
                continue;
            }
            for (b, &ob) in split.local.iter().enumerate() {
                out[(a, b)] += x * psi.amps[e + ob].conj();
            }
        }
    }
    Ok(Operator::from_matrix_unchecked(out))
}

/// `exp(-i H t) psi`.
pub fn evolve_exact(h: &Operator, psi: &StateVector, t: f64) -> Result<StateVector> {
    if h.dim() != psi.dim() {
        return Err(Error::arg("hamiltonian and state dimensions differ"));
    }
    h.require_hermitian("hamiltonian")?;
    if t == 0.0 {
        return Ok(psi.clone());
    }
    h.propagator(t)?.apply(psi)
}

/// `<psi|O|psi>`.
pub fn expectation(psi: &StateVector, o: &Operator) -> Result<C64> {
    if psi.dim() != o.dim() {
        return Err(Error::arg(format!(
            "state dim {} does not match operator dim {}",
            psi.dim(),
            o.dim()
        )));
    }
    Ok(psi.amps.dotc(&(&o.mat * &psi.amps)))
}

/// Trace norm of a hermitian operator (sum of absolute eigenvalues).
pub fn trace_norm(op: &Operator) -> Result<f64> {
    Ok(op.eigenvalues()?.iter().map(|x| x.abs()).sum())
}

/// Pauli matrices and other fixed qubit operators.
pub mod pauli {
    use super::{c, cr, Operator};

    pub fn i2() -> Operator {
        Operator::identity(2)
    }

    pub fn x() -> Operator {
        Operator::from_rows(2, &[cr(0.0), cr(1.0), cr(1.0), cr(0.0)]).unwrap()
    }

    pub fn y() -> Operator {
        Operator::from_rows(2, &[cr(0.0), c(0.0, -1.0), c(0.0, 1.0), cr(0.0)]).unwrap()
    }

    pub fn z() -> Operator {
        Operator::diag_real(&[1.0, -1.0])
    }

    /// `|0><1|`, the lowering operator when `|1>` is the excited level.
    pub fn sigma_minus() -> Operator {
        Operator::from_rows(2, &[cr(0.0), cr(1.0), cr(0.0), cr(0.0)]).unwrap()
    }

    pub fn from_char(ch: char) -> Option<Operator> {
        match ch {
            'I' => Some(i2()),
            'X' => Some(x()),
            'Y' => Some(y()),
            'Z' => Some(z()),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_hermitian, random_operator, random_state, seeded};

    fn ket(bits: &[f64]) -> StateVector {
        StateVector::new(bits.iter().map(|&x| cr(x)).collect()).unwrap()
    }

    #[test]
    fn kron_identities_and_convention() {
        let i4 = kron(&pauli::i2(), &pauli::i2()).unwrap();
        assert_eq!(i4, Operator::identity(4));
        let zi = kron(&pauli::z(), &pauli::i2()).unwrap();
        assert_eq!(zi, Operator::diag_real(&[1.0, 1.0, -1.0, -1.0]));
    }

    #[test]
    fn kron_xx_flips_both_bits() {
        let xx = kron(&pauli::x(), &pauli::x()).unwrap();
        let out = xx.apply(&StateVector::basis(4, 0).unwrap()).unwrap();
        // |00> is index 0, |11> is index 3.
        assert_eq!(out, StateVector::basis(4, 3).unwrap());
    }

    #[test]
    fn kron_is_associative() {
        let mut rng = seeded(11);
        let a = random_operator(2, &mut rng);
        let b = random_operator(3, &mut rng);
        let cmat = random_operator(2, &mut rng);
        let left = kron(&kron(&a, &b).unwrap(), &cmat).unwrap();
        let right = kron(&a, &kron(&b, &cmat).unwrap()).unwrap();
        assert!(left.max_abs_diff(&right) < 1e-14);
    }

    #[test]
    fn kron_over_cap_is_a_resource_error() {
        let big = Operator::identity(1 << 8);
        let bigger = Operator::identity(1 << 7);
        assert!(matches!(kron(&big, &bigger), Err(Error::Resource { .. })));
    }

    #[test]
    fn direct_sum_blocks() {
        let one = Operator::diag_real(&[1.0]);
        let two = Operator::diag_real(&[2.0]);
        assert_eq!(direct_sum(&[one, two]).unwrap(), Operator::diag_real(&[1.0, 2.0]));

        let zx = direct_sum(&[pauli::z(), pauli::x()]).unwrap();
        let expected = Operator::from_real_rows(
            4,
            &[
                1.0, 0.0, 0.0, 0.0, //
                0.0, -1.0, 0.0, 0.0, //
                0.0, 0.0, 0.0, 1.0, //
                0.0, 0.0, 1.0, 0.0,
            ],
        )
        .unwrap();
        assert_eq!(zx, expected);
        assert!(matches!(direct_sum(&[]), Err(Error::Argument(_))));
    }

    #[test]
    fn direct_sum_spectrum_is_union() {
        let mut rng = seeded(3);
        let a = random_hermitian(2, &mut rng);
        let b = random_hermitian(2, &mut rng);
        let mut union: Vec<f64> = a.eigenvalues().unwrap();
        union.extend(b.eigenvalues().unwrap());
        union.sort_by(f64::total_cmp);
        let both = direct_sum(&[a, b]).unwrap().eigenvalues().unwrap();
        for (x, y) in union.iter().zip(&both) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn embed_single_site() {
        let shape = SpaceShape::uniform(2, 2).unwrap();
        assert_eq!(
            embed_local(&pauli::z(), &[0], &shape).unwrap(),
            Operator::diag_real(&[1.0, 1.0, -1.0, -1.0])
        );
        assert_eq!(
            embed_local(&pauli::z(), &[1], &shape).unwrap(),
            Operator::diag_real(&[1.0, -1.0, 1.0, -1.0])
        );
    }

    /// Permutation matrix sending `|i0 i1 i2>` to the basis with sites
    /// reordered as `order`, built by brute force over basis states.
    fn permutation(order: &[usize], d: usize) -> Operator {
        let n = order.len();
        let dim = d.pow(n as u32);
        let mut m = DMatrix::<C64>::zeros(dim, dim);
        for idx in 0..dim {
            let digits: Vec<usize> = (0..n).map(|s| (idx / d.pow((n - 1 - s) as u32)) % d).collect();
            let permuted = order.iter().fold(0, |acc, &s| acc * d + digits[s]);
            m[(permuted, idx)] = cr(1.0);
        }
        Operator::from_matrix(m).unwrap()
    }

    #[test]
    fn embed_unordered_sites_matches_permutation_conjugation() {
        let mut rng = seeded(5);
        let op = random_operator(4, &mut rng);
        let shape = SpaceShape::uniform(3, 2).unwrap();
        let embedded = embed_local(&op, &[2, 0], &shape).unwrap();
        // Reorder sites to (2, 0, 1), act with op (x) I on the first two, reorder back.
        let p = permutation(&[2, 0, 1], 2);
        let brute = &(&p.adjoint() * &kron(&op, &pauli::i2()).unwrap()) * &p;
        assert!(embedded.max_abs_diff(&brute) < 1e-14);
    }

    #[test]
    fn embed_rejects_bad_arguments() {
        let shape = SpaceShape::uniform(3, 2).unwrap();
        assert!(embed_local(&pauli::z(), &[0, 1], &shape).is_err());
        assert!(embed_local(&Operator::identity(4), &[1, 1], &shape).is_err());
        assert!(embed_local(&pauli::z(), &[3], &shape).is_err());
    }

    #[test]
    fn apply_local_matches_embedding() {
        let mut rng = seeded(8);
        let shape = SpaceShape::new(vec![2, 3, 2]).unwrap();
        let op = random_operator(4, &mut rng);
        let psi = random_state(12, &mut rng);
        let dense = embed_local(&op, &[2, 0], &shape).unwrap().apply(&psi).unwrap();
        let free = apply_local(&op, &[2, 0], &shape, &psi).unwrap();
        assert!(dense.max_abs_diff(&free) < 1e-14);
    }

    #[test]
    fn partial_trace_examples() {
        let shape = SpaceShape::uniform(2, 2).unwrap();
        let rho = StateVector::basis(4, 0).unwrap().projector();
        assert_eq!(
            partial_trace(&rho, &shape, &[0]).unwrap(),
            Operator::diag_real(&[1.0, 0.0])
        );
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let bell = ket(&[s, 0.0, 0.0, s]).projector();
        let reduced = partial_trace(&bell, &shape, &[0]).unwrap();
        assert!(reduced.max_abs_diff(&Operator::identity(2).scale_real(0.5)) < 1e-15);
        assert!(partial_trace(&bell, &shape, &[2]).is_err());
    }

    #[test]
    fn reduced_energy_matches_embedded_expectation() {
        let mut rng = seeded(21);
        let shape = SpaceShape::uniform(3, 2).unwrap();
        for _ in 0..20 {
            let psi = random_state(8, &mut rng);
            let h = random_hermitian(4, &mut rng);
            let rho_s = partial_trace(&psi.projector(), &shape, &[2, 1]).unwrap();
            let lhs = (&rho_s * &h).trace();
            let rhs = expectation(&psi, &embed_local(&h, &[2, 1], &shape).unwrap()).unwrap();
            assert!((lhs - rhs).norm() < 1e-12);
            let direct = reduced_density(&psi, &shape, &[2, 1]).unwrap();
            assert!(direct.max_abs_diff(&rho_s) < 1e-14);
            assert!((rho_s.trace().re - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn evolve_exact_examples() {
        let mut rng = seeded(1);
        let h = random_hermitian(4, &mut rng);
        let psi = random_state(4, &mut rng);
        assert_eq!(evolve_exact(&h, &psi, 0.0).unwrap(), psi);

        let t = 0.7;
        let out = evolve_exact(&pauli::z(), &StateVector::basis(2, 0).unwrap(), t).unwrap();
        assert!((out.amplitudes()[0] - C64::from_polar(1.0, -t)).norm() < 1e-14);
        assert!(out.amplitudes()[1].norm() < 1e-15);

        for t in [0.1, 1.0, 10.0] {
            let out = evolve_exact(&h, &psi, t).unwrap();
            assert!((out.norm() - 1.0).abs() < 1e-12);
        }

        let bad = Operator::from_rows(2, &[cr(0.0), cr(1.0), cr(0.0), cr(0.0)]).unwrap();
        assert!(matches!(
            evolve_exact(&bad, &StateVector::basis(2, 0).unwrap(), 1.0),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn propagator_is_unitary() {
        let mut rng = seeded(77);
        for dim in [2, 8, 64] {
            let h = random_hermitian(dim, &mut rng);
            assert!(h.propagator(3.3).unwrap().is_unitary(1e-10));
        }
    }

    #[test]
    fn expm_matches_propagator() {
        let mut rng = seeded(9);
        let h = random_hermitian(5, &mut rng);
        let via_taylor = h.scale(c(0.0, -2.5)).expm();
        assert!(via_taylor.max_abs_diff(&h.propagator(2.5).unwrap()) < 1e-12);
    }

    #[test]
    fn expectation_examples() {
        let zero = StateVector::basis(2, 0).unwrap();
        assert!((expectation(&zero, &pauli::z()).unwrap() - cr(1.0)).norm() < 1e-15);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let plus = ket(&[s, s]);
        assert!((expectation(&plus, &pauli::x()).unwrap() - cr(1.0)).norm() < 1e-15);

        let mut rng = seeded(4);
        let psi = random_state(5, &mut rng);
        let o = random_operator(5, &mut rng);
        let mut brute = C64::new(0.0, 0.0);
        for i in 0..5 {
            for j in 0..5 {
                brute += psi.amplitudes()[i].conj() * o.get(i, j) * psi.amplitudes()[j];
            }
        }
        assert!((expectation(&psi, &o).unwrap() - brute).norm() < 1e-13);
        assert!(expectation(&psi, &pauli::z()).is_err());
    }

    #[test]
    fn json_shape() {
        let v = serde_json::to_value(pauli::y()).unwrap();
        assert_eq!(v["dim"], 2);
        assert_eq!(v["entries"][1], serde_json::json!([0.0, -1.0]));
        let back: Operator = serde_json::from_value(v).unwrap();
        assert_eq!(back, pauli::y());
    }
}
