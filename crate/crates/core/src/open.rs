//! Open-system dynamics: Lindblad generators, Kraus maps, their
//! second-quantized lifts, and quantum-jump unravelling.

use std::sync::Arc;

use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fock::{
    annihilators, restricted_residual, second_quantize_observable, FockSpace, SecondQuantizedState,
};
use crate::hilbert::{kron, pauli, trace_norm, Operator, StateVector, C64};
use crate::random::substream;

/// `dH/dt = -i[H, rho] + sum_a gamma_a (L rho L^dagger - {L^dagger L, rho}/2)`.
#[derive(Debug, Clone)]
pub struct LindbladModel {
    h: Operator,
    ops: Vec<(Operator, f64)>,
}

impl LindbladModel {
    pub fn new(h: Operator, ops: Vec<(Operator, f64)>) -> Result<Self> {
        h.require_hermitian("hamiltonian")?;
        for (l, g) in &ops {
            if l.dim() != h.dim() {
                return Err(Error::arg(format!("jump operator dim {} differs from hamiltonian dim {}", l.dim(), h.dim())));
            }
            if !(*g >= 0.0 && g.is_finite()) {
                return Err(Error::validation(format!("rate {g} must be nonnegative")));
            }
        }
        Ok(Self { h, ops })
    }

    pub fn h(&self) -> &Operator {
        &self.h
    }

    pub fn ops(&self) -> &[(Operator, f64)] {
        &self.ops
    }

    pub fn dim(&self) -> usize {
        self.h.dim()
    }

    /// Schrodinger-picture generator applied to `rho`.
    pub fn generator(&self, rho: &Operator) -> Operator {
        let mut out = self.h.commutator(rho).scale(-C64::i());
        for (l, g) in &self.ops {
            let ld = l.adjoint();
            let ll = &ld * l;
            let d = &(&(l * rho) * &ld) - &ll.anticommutator(rho).scale_real(0.5);
            out = &out + &d.scale_real(*g);
        }
        out
    }

    /// Dissipative part of the adjoint generator, `sum gamma (L^dagger O L - {L^dagger L, O}/2)`.
    pub fn adjoint_dissipator(&self, o: &Operator) -> Operator {
        let mut out = Operator::zeros(o.dim());
        for (l, g) in &self.ops {
            let ld = l.adjoint();
            let ll = &ld * l;
            let d = &(&(&ld * o) * l) - &ll.anticommutator(o).scale_real(0.5);
            out = &out + &d.scale_real(*g);
        }
        out
    }

    /// Heisenberg-picture generator, `i[H, O] + adjoint_dissipator(O)`.
    pub fn adjoint_generator(&self, o: &Operator) -> Operator {
        &self.h.commutator(o).scale(C64::i()) + &self.adjoint_dissipator(o)
    }

    /// `H - (i/2) sum gamma L^dagger L`.
    pub fn effective_hamiltonian(&self) -> Operator {
        let mut out = self.h.clone();
        for (l, g) in &self.ops {
            out = &out - &(&l.adjoint() * l).scale(C64::new(0.0, 0.5 * g));
        }
        out
    }

    /// `sum gamma ||L^dagger L||`, an upper bound on the jump rate.
    pub fn max_jump_rate(&self) -> Result<f64> {
        let mut rate = 0.0;
        for (l, g) in &self.ops {
            let vals = (&l.adjoint() * l).eigenvalues()?;
            rate += g * vals.last().copied().unwrap_or(0.0).max(0.0);
        }
        Ok(rate)
    }

    /// Order-independent fingerprint of the model entries (FNV-1a over the bits).
    pub fn fingerprint(&self) -> String {
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |x: f64| {
            for b in x.to_bits().to_le_bytes() {
                hash ^= b as u64;
                hash = hash.wrapping_mul(0x0100_0000_01b3);
            }
        };
        for [re, im] in self.h.entries_row_major() {
            feed(re);
            feed(im);
        }
        for (l, g) in &self.ops {
            feed(*g);
            for [re, im] in l.entries_row_major() {
                feed(re);
                feed(im);
            }
        }
        format!("{hash:016x}")
    }
}

/// Qubit amplitude damping: `H = 0`, `L = |0><1|` at rate `gamma`.
pub fn amplitude_damping(gamma: f64) -> Result<LindbladModel> {
    LindbladModel::new(Operator::zeros(2), vec![(pauli::sigma_minus(), gamma)])
}

/// Rejects anything that is not a density matrix within 1e-10.
pub fn require_density(rho: &Operator) -> Result<()> {
    let defect = rho.hermiticity_defect();
    if defect > 1e-10 {
        return Err(Error::validation(format!("density matrix is not hermitian (defect {defect:.3e})")));
    }
    let tr = rho.trace();
    if (tr.re - 1.0).abs() > 1e-10 || tr.im.abs() > 1e-10 {
        return Err(Error::validation(format!("density matrix has trace {tr}")));
    }
    let min = rho.eigenvalues()?[0];
    if min < -1e-10 {
        return Err(Error::validation(format!("density matrix has eigenvalue {min:e}")));
    }
    Ok(())
}

fn rk4_step(m: &LindbladModel, rho: &Operator, dt: f64) -> Operator {
    let k1 = m.generator(rho);
    let k2 = m.generator(&(rho + &k1.scale_real(dt / 2.0)));
    let k3 = m.generator(&(rho + &k2.scale_real(dt / 2.0)));
    let k4 = m.generator(&(rho + &k3.scale_real(dt)));
    let sum = &(&(&k1 + &k2.scale_real(2.0)) + &k3.scale_real(2.0)) + &k4;
    rho + &sum.scale_real(dt / 6.0)
}

/// Default RK4 step, `t / 2000`.
pub fn default_dt(t: f64) -> f64 {
    if t > 0.0 {
        t / 2000.0
    } else {
        1e-3
    }
}

/// `rho(t)` by fixed-step RK4; the step is shrunk so it divides `t`.
pub fn lindblad_evolve(m: &LindbladModel, rho0: &Operator, t: f64, dt: f64) -> Result<Operator> {
    Ok(lindblad_series(m, rho0, &[t], dt)?.pop().expect("one time requested"))
}

/// `rho` at each of the nondecreasing `times`, integrated in one pass.
pub fn lindblad_series(m: &LindbladModel, rho0: &Operator, times: &[f64], dt: f64) -> Result<Vec<Operator>> {
    require_density(rho0)?;
    if rho0.dim() != m.dim() {
        return Err(Error::arg("state and model dimensions differ"));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::arg("dt must be positive"));
    }
    if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::arg("times must be nonnegative and nondecreasing"));
    }
    let mut out = Vec::with_capacity(times.len());
    let mut rho = rho0.clone();
    let mut now = 0.0;
    for &t in times {
        let span = t - now;
        if span > 0.0 {
            let steps = (span / dt).ceil().max(1.0) as usize;
            let h = span / steps as f64;
            for _ in 0..steps {
                rho = rk4_step(m, &rho, h);
            }
        }
        now = t;
        out.push(rho.clone());
    }
    Ok(out)
}

/// Quality of an integrated density matrix.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DensityHealth {
    pub trace_error: f64,
    pub min_eigenvalue: f64,
    pub hermiticity: f64,
}

pub fn density_health(rho: &Operator) -> Result<DensityHealth> {
    Ok(DensityHealth {
        trace_error: (rho.trace() - C64::new(1.0, 0.0)).norm(),
        min_eigenvalue: rho.eigenvalues()?[0],
        hermiticity: rho.hermiticity_defect(),
    })
}

/// `sum_ij a_i^dagger X_ij a_j` assembled from ladder matrices.
fn field_contraction(x: &Operator, a: &[Operator]) -> Operator {
    let dim = a[0].dim();
    let mut out = Operator::zeros(dim);
    for i in 0..x.dim() {
        let ad = a[i].adjoint();
        for j in 0..x.dim() {
            let z = x.get(i, j);
            if z != C64::new(0.0, 0.0) {
                out = &out + &(&ad * &a[j]).scale(z);
            }
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct LiftResidual {
    pub check: String,
    pub sector: String,
    pub residual: f64,
}

/// `-i[O, H] + sum gamma psi^dagger (L^dagger O L - {L^dagger L, O}/2) psi`, with
/// every field operator built from ladder matrices, against the direct
/// second quantization of the first-quantized Heisenberg-Lindblad derivative.
pub fn second_quantized_lindblad_observable(
    m: &LindbladModel,
    o: &Operator,
    space: &Arc<FockSpace>,
) -> Result<LiftResidual> {
    if o.dim() != m.dim() || space.modes() != m.dim() {
        return Err(Error::arg("observable, model and mode count must agree"));
    }
    let a = annihilators(space);
    let big_o = field_contraction(o, &a);
    let big_h = field_contraction(m.h(), &a);
    let lhs = &big_o.commutator(&big_h).scale(-C64::i()) + &field_contraction(&m.adjoint_dissipator(o), &a);
    let rhs = second_quantize_observable(&m.adjoint_generator(o), space)?;
    let diff = &lhs - rhs.matrix();
    Ok(LiftResidual {
        check: "lindblad_observable_lift".into(),
        sector: space.sector_label(1),
        residual: restricted_residual(&diff, &space.safe_indices(1)),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct StateLiftResidual {
    /// Operator-valued generator against the lifted first-quantized derivative.
    pub lift: f64,
    /// Vacuum reduction of the operator-valued derivative against `L(rho)`.
    pub vacuum: f64,
}

/// `dvarrho/dt = i[varrho, H] + sum gamma (L varrho L^dagger - {L^dagger L, varrho}/2)`
/// with every operator acting as `X (x) 1` on `C^d (x) F`.
pub fn second_quantized_lindblad_state(m: &LindbladModel, state: &SecondQuantizedState) -> Result<StateLiftResidual> {
    if state.d() != m.dim() {
        return Err(Error::arg("state and model dimensions differ"));
    }
    let f = state.space().dim();
    let id = Operator::identity(f);
    let varrho = state.varrho()?;
    let h_big = kron(m.h(), &id)?;
    let mut lhs = varrho.commutator(&h_big).scale(C64::i());
    for (l, g) in m.ops() {
        let lb = kron(l, &id)?;
        let lbd = lb.adjoint();
        let d = &(&(&lb * &varrho) * &lbd) - &(&lbd * &lb).anticommutator(&varrho).scale_real(0.5);
        lhs = &lhs + &d.scale_real(*g);
    }
    let rhs = state.lift_components(|_, v| m.generator(&v.projector()))?;
    let rho = state.lift_components(|_, v| v.projector()).map(|x| state.vacuum_reduce(&x))?;
    let vacuum = state.vacuum_reduce(&lhs).max_abs_diff(&m.generator(&rho));
    Ok(StateLiftResidual { lift: lhs.max_abs_diff(&rhs), vacuum })
}

#[derive(Debug, Clone)]
pub struct KrausMap {
    kraus: Vec<Operator>,
}

impl KrausMap {
    pub fn new(kraus: Vec<Operator>) -> Result<Self> {
        let Some(first) = kraus.first() else {
            return Err(Error::validation("a Kraus map needs at least one operator"));
        };
        if kraus.iter().any(|k| k.dim() != first.dim()) {
            return Err(Error::arg("Kraus operators have different dimensions"));
        }
        Ok(Self { kraus })
    }

    pub fn dim(&self) -> usize {
        self.kraus[0].dim()
    }

    pub fn operators(&self) -> &[Operator] {
        &self.kraus
    }

    /// `|| sum K^dagger K - I ||_max`.
    pub fn trace_defect(&self) -> f64 {
        let mut acc = Operator::zeros(self.dim());
        for k in &self.kraus {
            acc = &acc + &(&k.adjoint() * k);
        }
        acc.max_abs_diff(&Operator::identity(self.dim()))
    }

    pub fn is_trace_preserving(&self) -> bool {
        self.trace_defect() < 1e-10
    }

    fn check(&self, x: &Operator) -> Result<()> {
        if x.dim() != self.dim() {
            return Err(Error::arg(format!("operand dim {} differs from Kraus dim {}", x.dim(), self.dim())));
        }
        Ok(())
    }

    /// `sum K rho K^dagger`.
    pub fn apply(&self, rho: &Operator) -> Result<Operator> {
        self.check(rho)?;
        let mut acc = Operator::zeros(self.dim());
        for k in &self.kraus {
            acc = &acc + &(&(k * rho) * &k.adjoint());
        }
        Ok(acc)
    }

    /// `sum K^dagger O K`.
    pub fn apply_heisenberg(&self, o: &Operator) -> Result<Operator> {
        self.check(o)?;
        let mut acc = Operator::zeros(self.dim());
        for k in &self.kraus {
            acc = &acc + &(&(&k.adjoint() * o) * k);
        }
        Ok(acc)
    }

    /// `sum (K (x) 1) varrho (K^dagger (x) 1)` on `C^d (x) F`.
    pub fn apply_varrho(&self, varrho: &Operator) -> Result<Operator> {
        if varrho.dim() % self.dim() != 0 {
            return Err(Error::arg("varrho dimension is not a multiple of the Kraus dimension"));
        }
        let id = Operator::identity(varrho.dim() / self.dim());
        let mut acc = Operator::zeros(varrho.dim());
        for k in &self.kraus {
            let kb = kron(k, &id)?;
            acc = &acc + &(&(&kb * varrho) * &kb.adjoint());
        }
        Ok(acc)
    }

    /// `psi^dagger O psi` with `psi -> K psi` in each branch, i.e. the
    /// second quantization of the Heisenberg-picture image.
    pub fn apply_second_quantized(&self, o: &Operator, space: &Arc<FockSpace>) -> Result<Operator> {
        if space.modes() != self.dim() {
            return Err(Error::arg("mode count differs from the Kraus dimension"));
        }
        let a = annihilators(space);
        let mut acc = Operator::zeros(space.dim());
        for k in &self.kraus {
            // Branch fields (K psi)_i = sum_j K_ij a_j.
            let fields: Vec<Operator> = (0..self.dim())
                .map(|i| {
                    let mut f = Operator::zeros(space.dim());
                    for (j, aj) in a.iter().enumerate() {
                        f = &f + &aj.scale(k.get(i, j));
                    }
                    f
                })
                .collect();
            for i in 0..self.dim() {
                let fd = fields[i].adjoint();
                for j in 0..self.dim() {
                    let z = o.get(i, j);
                    if z != C64::new(0.0, 0.0) {
                        acc = &acc + &(&fd * &fields[j]).scale(z);
                    }
                }
            }
        }
        Ok(acc)
    }
}

/// `|tr(E(rho) O) - tr(rho E^dagger(O))|`.
pub fn kraus_duality_residual(map: &KrausMap, rho: &Operator, o: &Operator) -> Result<f64> {
    let lhs = (&map.apply(rho)? * o).trace();
    let rhs = (rho * &map.apply_heisenberg(o)?).trace();
    Ok((lhs - rhs).norm())
}

/// Amplitude damping with decay probability `p`.
pub fn amplitude_damping_kraus(p: f64) -> Result<KrausMap> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::arg("decay probability must lie in [0, 1]"));
    }
    KrausMap::new(vec![
        Operator::from_real_rows(2, &[1.0, 0.0, 0.0, (1.0 - p).sqrt()])?,
        Operator::from_real_rows(2, &[0.0, p.sqrt(), 0.0, 0.0])?,
    ])
}

#[derive(Debug, Clone)]
pub struct TrajectoryEnsemble {
    pub seed: u64,
    pub dt: f64,
    pub times: Vec<f64>,
    /// `paths[r][j]`: normalized state of trajectory `r` at `times[j]`.
    pub paths: Vec<Vec<StateVector>>,
    pub jumps: Vec<usize>,
    /// Largest deviation from unit norm of any stored state.
    pub norm_error: f64,
}

impl TrajectoryEnsemble {
    pub fn n_traj(&self) -> usize {
        self.paths.len()
    }

    /// Ensemble average at checkpoint `j`, summed in trajectory order.
    pub fn average(&self, j: usize) -> Result<Operator> {
        let dim = self.paths[0][j].dim();
        let mut acc = nalgebra::DMatrix::<C64>::zeros(dim, dim);
        for path in &self.paths {
            let v = path[j].vector();
            acc += v * v.adjoint();
        }
        Operator::from_matrix(acc / C64::new(self.paths.len() as f64, 0.0))
    }
}

/// Quantum-jump unravelling with waiting-time sampling at resolution `dt`.
/// Trajectory `r` draws from the sub-stream `(seed, r)`.
pub fn sse_ensemble(
    m: &LindbladModel,
    psi0: &StateVector,
    times: &[f64],
    dt: f64,
    n_traj: usize,
    seed: u64,
) -> Result<TrajectoryEnsemble> {
    if n_traj == 0 {
        return Err(Error::arg("n_traj must be at least 1"));
    }
    if psi0.dim() != m.dim() || !psi0.is_normalized() {
        return Err(Error::arg("initial state must be normalized with the model's dimension"));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::arg("dt must be positive"));
    }
    if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::arg("times must be nonnegative and nondecreasing"));
    }
    let p_step = m.max_jump_rate()? * dt;
    if p_step > 0.1 {
        return Err(Error::arg(format!("dt too large: jump probability per step {p_step:.3} exceeds 0.1")));
    }
    let checkpoints: Vec<usize> = times.iter().map(|t| (t / dt).round() as usize).collect();
    let propagator = m.effective_hamiltonian().scale(C64::new(0.0, -dt)).expm();
    let jump_ops: Vec<(Operator, f64)> = m.ops().iter().filter(|(_, g)| *g > 0.0).cloned().collect();
    let runs: Vec<(Vec<StateVector>, usize, f64)> = (0..n_traj)
        .into_par_iter()
        .map(|r| run_trajectory(&propagator, &jump_ops, psi0, &checkpoints, substream(seed, r as u64)))
        .collect::<Result<_>>()?;
    let mut paths = Vec::with_capacity(n_traj);
    let mut jumps = Vec::with_capacity(n_traj);
    let mut norm_error = 0.0f64;
    for (p, j, e) in runs {
        paths.push(p);
        jumps.push(j);
        norm_error = norm_error.max(e);
    }
    Ok(TrajectoryEnsemble { seed, dt, times: times.to_vec(), paths, jumps, norm_error })
}

fn run_trajectory(
    propagator: &Operator,
    jump_ops: &[(Operator, f64)],
    psi0: &StateVector,
    checkpoints: &[usize],
    mut rng: crate::random::Rng64,
) -> Result<(Vec<StateVector>, usize, f64)> {
    let mut psi: DVector<C64> = psi0.vector().clone();
    let mut threshold: f64 = rng.random();
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut jumps = 0usize;
    let mut norm_error = 0.0f64;
    let mut step = 0usize;
    let record = |psi: &DVector<C64>, out: &mut Vec<StateVector>, err: &mut f64| -> Result<()> {
        let s = StateVector::new(psi.iter().copied().collect())?.normalize()?;
        *err = err.max((s.norm() - 1.0).abs());
        out.push(s);
        Ok(())
    };
    for &target in checkpoints {
        while step < target {
            psi = propagator.matrix() * &psi;
            step += 1;
            if psi.norm_squared() < threshold {
                let normed = &psi / C64::new(psi.norm(), 0.0);
                let branches: Vec<DVector<C64>> = jump_ops.iter().map(|(l, _)| l.matrix() * &normed).collect();
                let weights: Vec<f64> =
                    branches.iter().zip(jump_ops).map(|(b, (_, g))| g * b.norm_squared()).collect();
                let total: f64 = weights.iter().sum();
                if total > 0.0 {
                    let mut pick = rng.random::<f64>() * total;
                    let mut chosen = weights.len() - 1;
                    for (a, w) in weights.iter().enumerate() {
                        if pick < *w {
                            chosen = a;
                            break;
                        }
                        pick -= w;
                    }
                    let b = &branches[chosen];
                    psi = b / C64::new(b.norm(), 0.0);
                    jumps += 1;
                }
                threshold = rng.random();
            }
        }
        record(&psi, &mut out, &mut norm_error)?;
    }
    Ok((out, jumps, norm_error))
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub t: f64,
    pub l1_error: f64,
    pub bound: f64,
    /// Max over diagonal entries of `|rhobar_ii - rho_ii| / (3 sigma_ii)`, `sigma^2 = p(1-p)/n`.
    pub population_ratio: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnsembleReport {
    pub model_hash: String,
    pub seed: u64,
    pub n_traj: usize,
    pub dt: f64,
    pub times: Vec<f64>,
    pub trace_error_max: f64,
    pub norm_error_max: f64,
    pub mean_jumps: f64,
    pub comparison: Vec<Comparison>,
}

/// Runs the ensemble and the master equation on the same checkpoints.
pub fn compare_ensemble(
    m: &LindbladModel,
    psi0: &StateVector,
    times: &[f64],
    dt: f64,
    n_traj: usize,
    seed: u64,
) -> Result<EnsembleReport> {
    let ens = sse_ensemble(m, psi0, times, dt, n_traj, seed)?;
    let rk_dt = default_dt(times.last().copied().unwrap_or(0.0)).min(dt);
    let exact = lindblad_series(m, &psi0.projector(), times, rk_dt)?;
    let n = n_traj as f64;
    let bound = 5.0 / n.sqrt();
    let mut comparison = Vec::with_capacity(times.len());
    let mut trace_error_max = 0.0f64;
    for (j, (&t, rho)) in times.iter().zip(&exact).enumerate() {
        trace_error_max = trace_error_max.max((rho.trace().re - 1.0).abs());
        let avg = ens.average(j)?;
        let l1_error = trace_norm(&(&avg - rho))?;
        let mut ratio = 0.0f64;
        for i in 0..rho.dim() {
            let p = rho.get(i, i).re.clamp(0.0, 1.0);
            let sigma = (p * (1.0 - p) / n).sqrt();
            let dev = (avg.get(i, i).re - p).abs();
            ratio = ratio.max(dev / (3.0 * sigma).max(1e-12));
        }
        comparison.push(Comparison { t, l1_error, bound, population_ratio: ratio, pass: l1_error < bound && ratio < 1.0 });
    }
    Ok(EnsembleReport {
        model_hash: m.fingerprint(),
        seed,
        n_traj,
        dt,
        times: times.to_vec(),
        trace_error_max,
        norm_error_max: ens.norm_error,
        mean_jumps: ens.jumps.iter().sum::<usize>() as f64 / n,
        comparison,
    })
}

/// A random model with one or two jump operators.
pub fn random_lindblad<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<LindbladModel> {
    let h = crate::random::random_hermitian(d, rng);
    let count = rng.random_range(1..=2usize);
    let ops = (0..count)
        .map(|_| (crate::random::random_operator(d, rng).scale_real(0.5), rng.random_range(0.1..1.0)))
        .collect();
    LindbladModel::new(h, ops)
}
