//! Seeded generators for random operators, states and models.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::hilbert::{c, Operator, StateVector, C64};

pub type Rng64 = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng64 {
    ChaCha8Rng::seed_from_u64(seed)
}

/// An independent stream derived from `seed`, keyed by `stream`.
pub fn substream(seed: u64, stream: u64) -> Rng64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn gaussian_c64<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    c(re, im)
}

/// Complex matrix with i.i.d. standard Gaussian entries.
pub fn random_operator<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Operator {
    let m = DMatrix::from_fn(dim, dim, |_, _| gaussian_c64(rng));
    Operator::from_matrix_unchecked(m)
}

/// `(G + G^dagger) / 2` for a Gaussian `G`, so exactly hermitian.
pub fn random_hermitian<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Operator {
    let g = random_operator(dim, rng);
    let m = g.matrix();
    let h = DMatrix::from_fn(dim, dim, |i, j| {
        if i == j {
            c(m[(i, i)].re, 0.0)
        } else {
            (m[(i, j)] + m[(j, i)].conj()) * 0.5
        }
    });
    Operator::from_matrix_unchecked(h)
}

/// Haar-distributed normalized state.
pub fn random_state<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> StateVector {
    let v: Vec<C64> = (0..dim).map(|_| gaussian_c64(rng)).collect();
    StateVector::new(v).unwrap().normalize().unwrap()
}

/// Full-rank density matrix `G G^dagger / tr`.
pub fn random_density<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Operator {
    let g = random_operator(dim, rng);
    let rho = &g * &g.adjoint();
    let tr = rho.trace().re;
    rho.scale_real(1.0 / tr)
}
