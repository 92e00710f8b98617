//! Hamiltonization: a quantum system `(H, |psi>)` viewed as a classical
//! Hamiltonian system with energy `H(psi) = <psi|H|psi>` on coordinates
//! `(psi_i, zeta_i = i conj(psi_i))`.
//!
//! The symplectic form `sum_i dpsi_i ^ dzeta_i` equals `2 sum_i dx_i ^ dy_i`
//! in the real chart `psi = x + iy`, so Hamilton's equations there read
//! `xdot = 1/2 dH/dy`, `ydot = -1/2 dH/dx`.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hilbert::{c, cr, Operator, StateVector, C64};

const MIDPOINT_TOL: f64 = 1e-13;
const MIDPOINT_MAX_ITER: usize = 50;

/// A point of phase space, stored through `psi`; `zeta` is derived.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSpacePoint {
    pub psi: Vec<C64>,
}

impl PhaseSpacePoint {
    pub fn new(psi: Vec<C64>) -> Self {
        Self { psi }
    }

    pub fn from_state(state: &StateVector) -> Self {
        Self::new(state.amplitudes().to_vec())
    }

    /// From real-chart coordinates `(x, y)` with `psi = x + iy`.
    pub fn from_real(x: &[f64], y: &[f64]) -> Self {
        Self::new(x.iter().zip(y).map(|(&a, &b)| c(a, b)).collect())
    }

    pub fn zeta(&self) -> Vec<C64> {
        self.psi.iter().map(|z| C64::i() * z.conj()).collect()
    }

    pub fn dim(&self) -> usize {
        self.psi.len()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.psi.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn to_state(&self) -> Result<StateVector> {
        StateVector::new(self.psi.clone())
    }

    fn vector(&self) -> DVector<C64> {
        DVector::from_column_slice(&self.psi)
    }
}

/// The classical system attached to a hermitian matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalSystem {
    h: Operator,
}

pub fn hamiltonize(h: &Operator) -> Result<ClassicalSystem> {
    h.require_hermitian("hamiltonian")?;
    Ok(ClassicalSystem { h: h.clone() })
}

impl ClassicalSystem {
    pub fn h_matrix(&self) -> &Operator {
        &self.h
    }

    /// Complex dimension of phase space.
    pub fn dim(&self) -> usize {
        self.h.dim()
    }

    fn check(&self, p: &PhaseSpacePoint) -> Result<()> {
        if p.dim() != self.dim() {
            return Err(Error::arg(format!("point has dim {}, system has dim {}", p.dim(), self.dim())));
        }
        Ok(())
    }

    /// `H(psi) = sum_ij conj(psi_i) H_ij psi_j`.
    pub fn energy(&self, p: &PhaseSpacePoint) -> Result<f64> {
        self.check(p)?;
        let v = p.vector();
        Ok(v.dotc(&(self.h.matrix() * &v)).re)
    }

    /// Wirtinger derivative `dH/dpsi_j = (psi^dagger H)_j`.
    pub fn d_dpsi(&self, p: &PhaseSpacePoint) -> Result<Vec<C64>> {
        self.check(p)?;
        let row = p.vector().adjoint() * self.h.matrix();
        Ok(row.iter().copied().collect())
    }

    /// Wirtinger derivative `dH/dzeta_i = -i (H psi)_i`, using `conj(psi) = -i zeta`.
    pub fn d_dzeta(&self, p: &PhaseSpacePoint) -> Result<Vec<C64>> {
        self.check(p)?;
        let hp = self.h.matrix() * p.vector();
        Ok(hp.iter().map(|z| -C64::i() * z).collect())
    }
}

/// A hermitian observable, valued at a point as `<psi|F|psi>`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservableField {
    matrix: Operator,
}

impl ObservableField {
    pub fn new(matrix: Operator) -> Result<Self> {
        matrix.require_hermitian("observable")?;
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &Operator {
        &self.matrix
    }

    pub fn value(&self, p: &PhaseSpacePoint) -> Result<f64> {
        hamiltonize(&self.matrix)?.energy(p)
    }

    /// Real-chart gradient `(dF/dx, dF/dy) = (2 Re F psi, 2 Im F psi)`.
    fn real_gradient(&self, p: &PhaseSpacePoint) -> (Vec<f64>, Vec<f64>) {
        let fp = self.matrix.matrix() * p.vector();
        (fp.iter().map(|z| 2.0 * z.re).collect(), fp.iter().map(|z| 2.0 * z.im).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tangent {
    pub psi_dot: Vec<C64>,
    pub zeta_dot: Vec<C64>,
}

/// `psi_dot = dH/dzeta`, `zeta_dot = -dH/dpsi`.
pub fn hamilton_vector_field(sys: &ClassicalSystem, p: &PhaseSpacePoint) -> Result<Tangent> {
    let psi_dot = sys.d_dzeta(p)?;
    let zeta_dot = sys.d_dpsi(p)?.into_iter().map(|z| -z).collect();
    Ok(Tangent { psi_dot, zeta_dot })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SymplecticMethod {
    #[default]
    ImplicitMidpoint,
    LeapfrogReim,
}

/// The linear real-chart flow `xdot = Bx + Ay`, `ydot = -Ax + By` for `H = A + iB`.
struct RealFlow {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
}

impl RealFlow {
    fn new(h: &Operator) -> Self {
        let m = h.matrix();
        Self { a: m.map(|z| z.re), b: m.map(|z| z.im) }
    }

    fn field(&self, x: &DVector<f64>, y: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        (&self.b * x + &self.a * y, -(&self.a * x) + &self.b * y)
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub points: Vec<PhaseSpacePoint>,
    pub energies: Vec<f64>,
    pub norms: Vec<f64>,
}

impl Trajectory {
    pub fn max_energy_drift(&self) -> f64 {
        let e0 = self.energies[0];
        self.energies.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max)
    }

    pub fn max_norm_drift(&self) -> f64 {
        let n0 = self.norms[0];
        self.norms.iter().map(|n| (n - n0).abs()).fold(0.0, f64::max)
    }

    /// `t,re_psi_0,im_psi_0,...,energy,norm` with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let d = self.points.first().map_or(0, PhaseSpacePoint::dim);
        let mut out = String::from("t");
        for i in 0..d {
            let _ = write!(out, ",re_psi_{i},im_psi_{i}");
        }
        out.push_str(",energy,norm\n");
        for (k, p) in self.points.iter().enumerate() {
            let _ = write!(out, "{}", fmt17(self.times[k]));
            for z in &p.psi {
                let _ = write!(out, ",{},{}", fmt17(z.re), fmt17(z.im));
            }
            let _ = writeln!(out, ",{},{}", fmt17(self.energies[k]), fmt17(self.norms[k]));
        }
        out
    }
}

/// 17 significant digits in scientific notation.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Integrates `steps` steps of size `dt`, recording every point.
pub fn integrate_symplectic(
    sys: &ClassicalSystem,
    p0: &PhaseSpacePoint,
    dt: f64,
    steps: usize,
    method: SymplecticMethod,
) -> Result<Trajectory> {
    integrate_sampled(sys, p0, dt, steps, method, 1)
}

/// As `integrate_symplectic`, keeping every `stride`-th point and the last.
pub fn integrate_sampled(
    sys: &ClassicalSystem,
    p0: &PhaseSpacePoint,
    dt: f64,
    steps: usize,
    method: SymplecticMethod,
    stride: usize,
) -> Result<Trajectory> {
    sys.check(p0)?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::arg("dt must be positive"));
    }
    let stride = stride.max(1);
    let flow = RealFlow::new(&sys.h);
    let mut x = DVector::from_iterator(p0.dim(), p0.psi.iter().map(|z| z.re));
    let mut y = DVector::from_iterator(p0.dim(), p0.psi.iter().map(|z| z.im));
    let rotate = match method {
        SymplecticMethod::LeapfrogReim => {
            // exp(B dt/2) is real; compute it through the complex exponential.
            let b = Operator::from_matrix_unchecked(flow.b.map(cr)).scale_real(0.5 * dt);
            Some(b.expm().matrix().map(|z| z.re))
        }
        SymplecticMethod::ImplicitMidpoint => None,
    };

    let mut traj = Trajectory { times: Vec::new(), points: Vec::new(), energies: Vec::new(), norms: Vec::new() };
    let record = |x: &DVector<f64>, y: &DVector<f64>, t: f64, traj: &mut Trajectory| -> Result<()> {
        let p = PhaseSpacePoint::from_real(x.as_slice(), y.as_slice());
        traj.energies.push(sys.energy(&p)?);
        traj.norms.push(p.norm_sqr());
        traj.times.push(t);
        traj.points.push(p);
        Ok(())
    };
    record(&x, &y, 0.0, &mut traj)?;
    for step in 1..=steps {
        match &rotate {
            None => midpoint_step(&flow, &mut x, &mut y, dt)?,
            Some(r) => {
                x = r * &x;
                y = r * &y;
                y -= &flow.a * &x * (0.5 * dt);
                x += &flow.a * &y * dt;
                y -= &flow.a * &x * (0.5 * dt);
                x = r * &x;
                y = r * &y;
            }
        }
        if step % stride == 0 || step == steps {
            record(&x, &y, step as f64 * dt, &mut traj)?;
        }
    }
    Ok(traj)
}

fn midpoint_step(flow: &RealFlow, x: &mut DVector<f64>, y: &mut DVector<f64>, dt: f64) -> Result<()> {
    let (fx, fy) = flow.field(x, y);
    // Explicit Euler predictor, then fixed-point iteration on the midpoint rule.
    let mut nx = &*x + &fx * dt;
    let mut ny = &*y + &fy * dt;
    for _ in 0..MIDPOINT_MAX_ITER {
        let mx = (&*x + &nx) * 0.5;
        let my = (&*y + &ny) * 0.5;
        let (gx, gy) = flow.field(&mx, &my);
        let cx = &*x + gx * dt;
        let cy = &*y + gy * dt;
        let change = (&cx - &nx).amax().max((&cy - &ny).amax());
        nx = cx;
        ny = cy;
        if change <= MIDPOINT_TOL {
            *x = nx;
            *y = ny;
            return Ok(());
        }
    }
    Err(Error::Numeric(format!(
        "implicit midpoint did not converge in {MIDPOINT_MAX_ITER} iterations (dt = {dt})"
    )))
}

/// Both sides of the bracket identity at a point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BracketValue {
    /// `{F,G}` from the real-chart Poisson bivector.
    pub bracket: f64,
    /// `-i <psi|[F,G]|psi>`.
    pub commutator_form: f64,
}

impl BracketValue {
    pub fn residual(&self) -> f64 {
        (self.bracket - self.commutator_form).abs()
    }
}

pub fn poisson_bracket_classical(f: &ObservableField, g: &ObservableField, p: &PhaseSpacePoint) -> Result<BracketValue> {
    if f.matrix.dim() != p.dim() || g.matrix.dim() != p.dim() {
        return Err(Error::arg("observable and point dimensions differ"));
    }
    let (fx, fy) = f.real_gradient(p);
    let (gx, gy) = g.real_gradient(p);
    let bracket = 0.5 * (0..p.dim()).map(|j| fx[j] * gy[j] - fy[j] * gx[j]).sum::<f64>();
    let comm = f.matrix.commutator(&g.matrix);
    let v = p.vector();
    let commutator_form = (-C64::i() * v.dotc(&(comm.matrix() * &v))).re;
    Ok(BracketValue { bracket, commutator_form })
}

/// The observable whose value is `{F,G}`, namely `-i[F,G]`.
pub fn bracket_observable(f: &ObservableField, g: &ObservableField) -> ObservableField {
    ObservableField { matrix: f.matrix.commutator(&g.matrix).scale(-C64::i()) }
}

/// `|{F,{G,E}} + {E,{F,G}} + {G,{E,F}}|` at `p`.
pub fn jacobi_residual_classical(
    f: &ObservableField,
    g: &ObservableField,
    e: &ObservableField,
    p: &PhaseSpacePoint,
) -> Result<f64> {
    let a = poisson_bracket_classical(f, &bracket_observable(g, e), p)?.bracket;
    let b = poisson_bracket_classical(e, &bracket_observable(f, g), p)?.bracket;
    let cc = poisson_bracket_classical(g, &bracket_observable(e, f), p)?.bracket;
    Ok((a + b + cc).abs())
}

/// `<O_k>(t)` for every observable along the exact flow; `series[k][j]` is at `t_grid[j]`.
pub fn ehrenfest_reduce(
    h: &Operator,
    psi0: &StateVector,
    obs: &[ObservableField],
    t_grid: &[f64],
) -> Result<Vec<Vec<f64>>> {
    if h.dim() != psi0.dim() {
        return Err(Error::arg("hamiltonian and state dimensions differ"));
    }
    if obs.iter().any(|o| o.matrix.dim() != h.dim()) {
        return Err(Error::arg("observable and hamiltonian dimensions differ"));
    }
    let (vals, vecs) = h.eigh()?;
    let coeffs = vecs.adjoint() * psi0.vector();
    let mut series = vec![Vec::with_capacity(t_grid.len()); obs.len()];
    for &t in t_grid {
        let phased = DVector::from_iterator(
            vals.len(),
            vals.iter().zip(coeffs.iter()).map(|(&l, &a)| a * C64::from_polar(1.0, -l * t)),
        );
        let psi_t = &vecs * phased;
        for (k, o) in obs.iter().enumerate() {
            series[k].push(psi_t.dotc(&(o.matrix.matrix() * &psi_t)).re);
        }
    }
    Ok(series)
}
