//! Model and state sources named on the command line.

use std::path::Path;

use qhier_core::hilbert::{pauli, Operator, StateVector};
use qhier_core::hspec::{heisenberg_chain, heisenberg_ring, parse_complex, parse_spec, KLocalHamiltonian};
use qhier_core::random::{random_state, seeded};
use qhier_core::{Error, Result};

/// Field strength and coupling of the builtin Heisenberg models.
pub const BUILTIN_J: f64 = 1.0;
pub const BUILTIN_H: f64 = 0.5;

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Argument(format!("cannot read {}: {e}", path.display())))
}

fn builtin_size(rest: &str, what: &str) -> Result<usize> {
    rest.parse().map_err(|_| Error::Argument(format!("{what} needs a site count, got {rest:?}")))
}

/// An HSPEC path, or `heisenberg:N` / `ring:N`.
pub fn load_model(spec: &str) -> Result<KLocalHamiltonian> {
    if let Some(rest) = spec.strip_prefix("heisenberg:") {
        return heisenberg_chain(builtin_size(rest, "heisenberg")?, BUILTIN_J, BUILTIN_H);
    }
    if let Some(rest) = spec.strip_prefix("ring:") {
        return heisenberg_ring(builtin_size(rest, "ring")?, BUILTIN_J, BUILTIN_H);
    }
    parse_spec(&read_text(Path::new(spec))?)
}

/// Evolution targets: a k-local model, or a single-particle Hamiltonian
/// with optional jump operators.
pub enum Dynamics {
    Model(KLocalHamiltonian),
    Direct { h: Operator, jumps: Vec<(Operator, f64)> },
}

pub fn load_dynamics(spec: &str) -> Result<Dynamics> {
    if let Some(rest) = spec.strip_prefix("oscillator:") {
        let w: f64 = rest.parse().map_err(|_| Error::Argument(format!("bad frequency {rest:?}")))?;
        return Ok(Dynamics::Direct { h: Operator::diag_real(&[w]), jumps: vec![] });
    }
    if spec == "qubit" {
        return Ok(Dynamics::Direct { h: pauli::z(), jumps: vec![] });
    }
    if let Some(rest) = spec.strip_prefix("damping:") {
        let g: f64 = rest.parse().map_err(|_| Error::Argument(format!("bad rate {rest:?}")))?;
        return Ok(Dynamics::Direct { h: Operator::zeros(2), jumps: vec![(pauli::sigma_minus(), g)] });
    }
    load_model(spec).map(Dynamics::Model)
}

/// Whitespace- or newline-separated complex amplitudes; normalized on load.
pub fn read_state_file(path: &Path, dim: usize) -> Result<StateVector> {
    let text = read_text(path)?;
    let mut amps = Vec::new();
    for (i, tok) in text.split_whitespace().enumerate() {
        amps.push(parse_complex(tok).ok_or_else(|| Error::Argument(format!("amplitude {i}: cannot parse {tok:?}")))?);
    }
    if amps.len() != dim {
        return Err(Error::Argument(format!("state file has {} amplitudes, expected {dim}", amps.len())));
    }
    StateVector::new(amps)?.normalize()
}

/// `random`, `random:SEED`, `basis:I` or `file:PATH`.
pub fn load_state(spec: &str, dim: usize, seed: u64) -> Result<StateVector> {
    if spec == "random" {
        return Ok(random_state(dim, &mut seeded(seed)));
    }
    if let Some(rest) = spec.strip_prefix("random:") {
        let s: u64 = rest.parse().map_err(|_| Error::Argument(format!("bad seed {rest:?}")))?;
        return Ok(random_state(dim, &mut seeded(s)));
    }
    if let Some(rest) = spec.strip_prefix("basis:") {
        let i: usize = rest.parse().map_err(|_| Error::Argument(format!("bad basis index {rest:?}")))?;
        return StateVector::basis(dim, i);
    }
    if let Some(rest) = spec.strip_prefix("file:") {
        return read_state_file(Path::new(rest), dim);
    }
    Err(Error::Argument(format!("unknown state {spec:?}; expected random, random:SEED, basis:I or file:PATH")))
}

/// `A..B` or `A..=B`, inclusive either way.
pub fn parse_range(s: &str) -> Result<std::ops::RangeInclusive<usize>> {
    let (a, b) = s.split_once("..").ok_or_else(|| Error::Argument(format!("expected A..B, got {s:?}")))?;
    let b = b.strip_prefix('=').unwrap_or(b);
    let lo: usize = a.trim().parse().map_err(|_| Error::Argument(format!("bad range start {a:?}")))?;
    let hi: usize = b.trim().parse().map_err(|_| Error::Argument(format!("bad range end {b:?}")))?;
    if lo == 0 || lo > hi {
        return Err(Error::Argument(format!("empty or invalid range {s:?}")));
    }
    Ok(lo..=hi)
}

pub fn parse_coefficients(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| Error::Argument(format!("bad coefficient {t:?}"))))
        .collect()
}
