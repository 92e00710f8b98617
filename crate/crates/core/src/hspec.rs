//! k-local qudit Hamiltonians and the line-oriented HSPEC text format.
//!
//! ```text
//! sites 3 2            # n sites of local dimension d
//! term [0] Z 0.5       # Pauli shorthand, d = 2 only
//! term [0,2] XX
//! term [1] mat 2.0     # explicit d^k' x d^k' matrix on the following rows
//! 1 0.5-0.5i
//! 0.5+0.5i -1
//! ```

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::hilbert::{
    apply_local, embed_local, kron, kron_all, pauli, Operator, SpaceShape, StateVector, C64,
    HERMITIAN_TOL,
};

/// Where a diagnostic points.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Location {
    /// 1-based line and column in HSPEC text.
    Source { line: usize, column: usize },
    /// Index of a term in model order.
    Term(usize),
    /// A header field (`n` or `d`).
    Header(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub location: Location,
    pub message: String,
}

impl Diagnostic {
    fn at(line: usize, column: usize, message: impl Into<String>) -> Self {
        Self { location: Location::Source { line, column }, message: message.into() }
    }

    fn term(l: usize, message: impl Into<String>) -> Self {
        Self { location: Location::Term(l), message: message.into() }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.location {
            Location::Source { line, column } => write!(f, "line {line}, column {column}: {}", self.message),
            Location::Term(l) => write!(f, "term {l}: {}", self.message),
            Location::Header(field) => write!(f, "header field `{field}`: {}", self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalTerm {
    pub sites: Vec<usize>,
    pub matrix: Operator,
    pub label: String,
}

impl LocalTerm {
    pub fn new(sites: Vec<usize>, matrix: Operator, label: impl Into<String>) -> Self {
        Self { sites, matrix, label: label.into() }
    }

    pub fn locality(&self) -> usize {
        self.sites.len()
    }
}

/// `H = sum_l H_l` over `n` qudits of dimension `d`. Term order is preserved.
#[derive(Debug, Clone, PartialEq)]
pub struct KLocalHamiltonian {
    pub n: usize,
    pub d: usize,
    pub terms: Vec<LocalTerm>,
}

impl KLocalHamiltonian {
    /// Builds a model and rejects it if `validate` reports anything.
    pub fn new(n: usize, d: usize, terms: Vec<LocalTerm>) -> Result<Self> {
        let h = Self { n, d, terms };
        let diags = validate(&h);
        if diags.is_empty() {
            Ok(h)
        } else {
            Err(Error::Parse(diags))
        }
    }

    /// Maximum locality over terms (0 for an empty model).
    pub fn k(&self) -> usize {
        self.terms.iter().map(LocalTerm::locality).max().unwrap_or(0)
    }

    pub fn m(&self) -> usize {
        self.terms.len()
    }

    /// `m_{k'}` for every class that occurs.
    pub fn class_counts(&self) -> BTreeMap<usize, usize> {
        let mut counts = BTreeMap::new();
        for t in &self.terms {
            *counts.entry(t.locality()).or_insert(0) += 1;
        }
        counts
    }

    /// Term indices per locality class, in model order.
    pub fn class_indices(&self) -> BTreeMap<usize, Vec<usize>> {
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (l, t) in self.terms.iter().enumerate() {
            groups.entry(t.locality()).or_default().push(l);
        }
        groups
    }

    pub fn shape(&self) -> Result<SpaceShape> {
        SpaceShape::uniform(self.n, self.d)
    }

    /// `H psi` without forming `H`.
    pub fn apply(&self, psi: &StateVector) -> Result<StateVector> {
        let shape = self.shape()?;
        let mut acc = vec![C64::new(0.0, 0.0); psi.dim()];
        for t in &self.terms {
            let part = apply_local(&t.matrix, &t.sites, &shape, psi)?;
            for (a, b) in acc.iter_mut().zip(part.amplitudes()) {
                *a += b;
            }
        }
        StateVector::new(acc)
    }

    /// `<psi|H|psi>` without forming `H`.
    pub fn energy(&self, psi: &StateVector) -> Result<f64> {
        Ok(psi.inner(&self.apply(psi)?).re)
    }
}

/// Every violated invariant, one diagnostic per offending term or header field.
pub fn validate(h: &KLocalHamiltonian) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    if h.n == 0 {
        out.push(Diagnostic { location: Location::Header("n"), message: "site count must be positive".into() });
    }
    if h.d == 0 {
        out.push(Diagnostic { location: Location::Header("d"), message: "local dimension must be positive".into() });
    }
    for (l, t) in h.terms.iter().enumerate() {
        if t.sites.is_empty() {
            out.push(Diagnostic::term(l, "term acts on no sites"));
            continue;
        }
        if let Some(&s) = t.sites.iter().find(|&&s| s >= h.n) {
            out.push(Diagnostic::term(l, format!("site {s} out of range for {} sites", h.n)));
            continue;
        }
        let mut sorted = t.sites.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            out.push(Diagnostic::term(l, format!("duplicate site in {:?}", t.sites)));
            continue;
        }
        let expected = (h.d as u128).checked_pow(t.sites.len() as u32);
        if expected != Some(t.matrix.dim() as u128) {
            out.push(Diagnostic::term(
                l,
                format!("matrix dim {} does not equal d^{}", t.matrix.dim(), t.sites.len()),
            ));
            continue;
        }
        let defect = t.matrix.hermiticity_defect();
        if defect > HERMITIAN_TOL {
            out.push(Diagnostic::term(l, format!("matrix is not hermitian (defect {defect:.3e})")));
        }
    }
    out
}

/// Partition of the terms by locality `k'`.
pub fn group_by_locality(h: &KLocalHamiltonian) -> BTreeMap<usize, Vec<LocalTerm>> {
    h.class_indices()
        .into_iter()
        .map(|(k, idx)| (k, idx.into_iter().map(|l| h.terms[l].clone()).collect()))
        .collect()
}

/// Dense `sum_l embed(H_l)`.
pub fn assemble_full(h: &KLocalHamiltonian) -> Result<Operator> {
    let shape = h.shape()?;
    let dim = shape.total_dim()?;
    let mut acc = Operator::zeros(dim);
    for t in &h.terms {
        acc = &acc + &embed_local(&t.matrix, &t.sites, &shape)?;
    }
    Ok(acc)
}

/// `t.matrix (x) I` on `t.sites ++ partners`.
pub fn embed_in_higher_locality(t: &LocalTerm, target_k: usize, partners: &[usize]) -> Result<LocalTerm> {
    let kp = t.locality();
    if kp == 0 || kp >= target_k {
        return Err(Error::arg(format!("cannot embed a {kp}-local term into locality {target_k}")));
    }
    if kp + partners.len() != target_k {
        return Err(Error::arg(format!(
            "need {} partner sites to reach locality {target_k}, got {}",
            target_k - kp,
            partners.len()
        )));
    }
    if let Some(s) = partners.iter().find(|s| t.sites.contains(s)) {
        return Err(Error::arg(format!("partner site {s} overlaps the term's sites")));
    }
    let mut uniq = partners.to_vec();
    uniq.sort_unstable();
    uniq.dedup();
    if uniq.len() != partners.len() {
        return Err(Error::arg("duplicate partner sites"));
    }
    let d = local_dim_of(t)?;
    let pad = Operator::identity(d.pow(partners.len() as u32));
    let mut sites = t.sites.clone();
    sites.extend_from_slice(partners);
    Ok(LocalTerm::new(sites, kron(&t.matrix, &pad)?, t.label.clone()))
}

/// The `d` with `d^{k'} = dim`.
fn local_dim_of(t: &LocalTerm) -> Result<usize> {
    let kp = t.locality() as u32;
    let dim = t.matrix.dim();
    let guess = (dim as f64).powf(1.0 / kp as f64).round() as usize;
    (guess.saturating_sub(1)..=guess + 1)
        .find(|&d| d > 0 && d.checked_pow(kp) == Some(dim))
        .ok_or_else(|| Error::arg(format!("matrix dim {dim} is not a {kp}-th power")))
}

/// Per-site field or per-edge coupling generators.
#[derive(Debug, Clone)]
pub enum Generators {
    /// `h * Z` for fields, `J * (XX + YY + ZZ)` for couplings; qubits only.
    Default(f64),
    Explicit(Vec<Operator>),
}

pub fn heisenberg_model(
    n: usize,
    d: usize,
    edges: &[(usize, usize)],
    fields: Generators,
    couplings: Generators,
) -> Result<KLocalHamiltonian> {
    let mut terms = Vec::with_capacity(n + edges.len());
    match fields {
        Generators::Default(h) => {
            if d != 2 {
                return Err(Error::arg("default field generators need d = 2; pass explicit matrices"));
            }
            for i in 0..n {
                terms.push(LocalTerm::new(vec![i], pauli::z().scale_real(h), format!("field {i}")));
            }
        }
        Generators::Explicit(ops) => {
            if ops.len() != n {
                return Err(Error::arg(format!("expected {n} field matrices, got {}", ops.len())));
            }
            for (i, op) in ops.into_iter().enumerate() {
                terms.push(LocalTerm::new(vec![i], op, format!("field {i}")));
            }
        }
    }
    let coupling_ops: Vec<Operator> = match couplings {
        Generators::Default(j) => {
            if d != 2 {
                return Err(Error::arg("default coupling generators need d = 2; pass explicit matrices"));
            }
            let xx = kron(&pauli::x(), &pauli::x())?;
            let yy = kron(&pauli::y(), &pauli::y())?;
            let zz = kron(&pauli::z(), &pauli::z())?;
            let v = (&(&xx + &yy) + &zz).scale_real(j);
            vec![v; edges.len()]
        }
        Generators::Explicit(ops) => {
            if ops.len() != edges.len() {
                return Err(Error::arg(format!("expected {} coupling matrices, got {}", edges.len(), ops.len())));
            }
            ops
        }
    };
    for (&(i, j), op) in edges.iter().zip(coupling_ops) {
        terms.push(LocalTerm::new(vec![i, j], op, format!("bond {i}-{j}")));
    }
    KLocalHamiltonian::new(n, d, terms)
}

/// Open chain `J (XX+YY+ZZ)` on neighbours plus `h Z` on every site.
pub fn heisenberg_chain(n: usize, j: f64, h: f64) -> Result<KLocalHamiltonian> {
    let edges: Vec<(usize, usize)> = (0..n.saturating_sub(1)).map(|i| (i, i + 1)).collect();
    heisenberg_model(n, 2, &edges, Generators::Default(h), Generators::Default(j))
}

pub fn heisenberg_ring(n: usize, j: f64, h: f64) -> Result<KLocalHamiltonian> {
    let edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    heisenberg_model(n, 2, &edges, Generators::Default(h), Generators::Default(j))
}

/// Parses HSPEC text. All diagnostics found are returned together.
pub fn parse_spec(text: &str) -> Result<KLocalHamiltonian> {
    Parser::new(text).run()
}

struct Line<'a> {
    number: usize,
    /// Content with the comment stripped.
    body: &'a str,
    comment: Option<&'a str>,
}

struct Parser<'a> {
    lines: Vec<Line<'a>>,
    pos: usize,
    diags: Vec<Diagnostic>,
}

fn column_of(body: &str, token: &str) -> usize {
    // Tokens are subslices of the line, so pointer offsets give the column.
    let offset = token.as_ptr() as usize - body.as_ptr() as usize;
    body[..offset].chars().count() + 1
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        let text = text.strip_prefix('\u{feff}').unwrap_or(text);
        let lines = text
            .split('\n')
            .enumerate()
            .map(|(i, raw)| {
                let raw = raw.strip_suffix('\r').unwrap_or(raw);
                let (body, comment) = match raw.find('#') {
                    Some(p) => (&raw[..p], Some(raw[p + 1..].trim())),
                    None => (raw, None),
                };
                Line { number: i + 1, body, comment }
            })
            .collect();
        Self { lines, pos: 0, diags: Vec::new() }
    }

    fn next_nonblank(&mut self) -> Option<usize> {
        while self.pos < self.lines.len() {
            let i = self.pos;
            self.pos += 1;
            if !self.lines[i].body.trim().is_empty() {
                return Some(i);
            }
        }
        None
    }

    fn run(mut self) -> Result<KLocalHamiltonian> {
        let Some(hi) = self.next_nonblank() else {
            return Err(Error::Parse(vec![Diagnostic::at(1, 1, "missing sites header")]));
        };
        let header = self.parse_header(hi);
        let Some((n, d)) = header else {
            return Err(Error::Parse(self.diags));
        };
        let mut terms = Vec::new();
        while let Some(li) = self.next_nonblank() {
            if let Some(t) = self.parse_term(li, n, d) {
                terms.push(t);
            }
        }
        if !self.diags.is_empty() {
            return Err(Error::Parse(self.diags));
        }
        KLocalHamiltonian::new(n, d, terms)
    }

    fn parse_header(&mut self, li: usize) -> Option<(usize, usize)> {
        let line = &self.lines[li];
        let toks: Vec<&str> = line.body.split_whitespace().collect();
        if toks.first() != Some(&"sites") {
            let col = column_of(line.body, toks[0]);
            self.diags.push(Diagnostic::at(line.number, col, "missing sites header: expected `sites <n> <d>`"));
            return None;
        }
        if toks.len() != 3 {
            let col = column_of(line.body, toks[0]);
            self.diags.push(Diagnostic::at(line.number, col, "expected `sites <n> <d>`"));
            return None;
        }
        let mut vals = [0usize; 2];
        for (slot, tok) in vals.iter_mut().zip(&toks[1..]) {
            match tok.parse::<usize>() {
                Ok(v) if v > 0 => *slot = v,
                _ => {
                    let col = column_of(line.body, tok);
                    self.diags.push(Diagnostic::at(line.number, col, format!("expected a positive integer, found `{tok}`")));
                    return None;
                }
            }
        }
        Some((vals[0], vals[1]))
    }

    fn parse_term(&mut self, li: usize, n: usize, d: usize) -> Option<LocalTerm> {
        let number = self.lines[li].number;
        let body = self.lines[li].body;
        let comment = self.lines[li].comment;
        let trimmed = body.trim_start();
        let Some(rest) = trimmed.strip_prefix("term") else {
            let tok = trimmed.split_whitespace().next().unwrap_or(trimmed);
            self.diags.push(Diagnostic::at(number, column_of(body, tok), format!("expected `term`, found `{tok}`")));
            return None;
        };
        let Some(open) = rest.find('[') else {
            self.diags.push(Diagnostic::at(number, column_of(body, rest), "expected `[` starting the site list"));
            return None;
        };
        if !rest[..open].trim().is_empty() {
            self.diags.push(Diagnostic::at(number, column_of(body, rest), "expected ` [` after `term`"));
            return None;
        }
        let after_open = &rest[open + 1..];
        let Some(close) = after_open.find(']') else {
            self.diags.push(Diagnostic::at(number, column_of(body, &rest[open..]), "unterminated site list"));
            return None;
        };
        let list = &after_open[..close];
        let mut sites = Vec::new();
        for raw in list.split(',') {
            let tok = raw.trim();
            let col = if tok.is_empty() { column_of(body, raw) } else { column_of(body, tok) };
            match tok.parse::<usize>() {
                Ok(s) if s >= n => {
                    self.diags.push(Diagnostic::at(number, col, format!("site {s} out of range for {n} sites")));
                    return None;
                }
                Ok(s) if sites.contains(&s) => {
                    self.diags.push(Diagnostic::at(number, col, format!("duplicate site {s}")));
                    return None;
                }
                Ok(s) => sites.push(s),
                Err(_) => {
                    self.diags.push(Diagnostic::at(number, col, format!("expected a site index, found `{tok}`")));
                    return None;
                }
            }
        }
        let tail = &after_open[close + 1..];
        let toks: Vec<&str> = tail.split_whitespace().collect();
        let Some(&op) = toks.first() else {
            self.diags.push(Diagnostic::at(number, column_of(body, tail), "expected an operator after the site list"));
            return None;
        };
        let coeff = match toks.get(1) {
            None => 1.0,
            Some(tok) => match tok.parse::<f64>() {
                Ok(c) if c.is_finite() => c,
                _ => {
                    self.diags.push(Diagnostic::at(number, column_of(body, tok), format!("expected a real coefficient, found `{tok}`")));
                    return None;
                }
            },
        };
        if let Some(extra) = toks.get(2) {
            self.diags.push(Diagnostic::at(number, column_of(body, extra), format!("unexpected token `{extra}`")));
            return None;
        }
        let op_col = column_of(body, op);
        let kp = sites.len();
        let matrix = if op == "mat" {
            self.parse_matrix(number, d, kp)?
        } else {
            if d != 2 {
                self.diags.push(Diagnostic::at(number, op_col, format!("Pauli strings need d = 2 (d = {d}); use `mat`")));
                return None;
            }
            if op.chars().count() != kp {
                self.diags.push(Diagnostic::at(
                    number,
                    op_col,
                    format!("Pauli string `{op}` has length {} but the term has {kp} sites", op.chars().count()),
                ));
                return None;
            }
            let mut factors = Vec::with_capacity(kp);
            for (offset, ch) in op.char_indices() {
                match pauli::from_char(ch) {
                    Some(p) => factors.push(p),
                    None => {
                        self.diags.push(Diagnostic::at(number, op_col + op[..offset].chars().count(), format!("unknown operator `{ch}` in `{op}`")));
                        return None;
                    }
                }
            }
            match kron_all(&factors) {
                Ok(m) => m,
                Err(e) => {
                    self.diags.push(Diagnostic::at(number, op_col, e.to_string()));
                    return None;
                }
            }
        };
        let matrix = if coeff == 1.0 { matrix } else { matrix.scale_real(coeff) };
        let defect = matrix.hermiticity_defect();
        if defect > HERMITIAN_TOL {
            self.diags.push(Diagnostic::at(number, op_col, format!("matrix is not hermitian (defect {defect:.3e})")));
            return None;
        }
        let label = match comment {
            Some(c) if !c.is_empty() => c.to_string(),
            _ => op.to_string(),
        };
        Some(LocalTerm::new(sites, matrix, label))
    }

    fn parse_matrix(&mut self, term_line: usize, d: usize, kp: usize) -> Option<Operator> {
        let dim = match (d as u128).checked_pow(kp as u32) {
            Some(v) if v <= crate::hilbert::dim_cap() as u128 => v as usize,
            _ => {
                self.diags.push(Diagnostic::at(term_line, 1, "matrix dimension exceeds the cap"));
                return None;
            }
        };
        let mut entries = Vec::with_capacity(dim * dim);
        for row in 0..dim {
            let Some(li) = self.next_nonblank() else {
                self.diags.push(Diagnostic::at(term_line, 1, format!("matrix ends after {row} of {dim} rows")));
                return None;
            };
            let number = self.lines[li].number;
            let body = self.lines[li].body;
            let toks: Vec<&str> = body.split_whitespace().collect();
            if toks.len() != dim {
                let col = toks.first().map(|t| column_of(body, t)).unwrap_or(1);
                self.diags.push(Diagnostic::at(number, col, format!("expected {dim} entries, found {}", toks.len())));
                return None;
            }
            for tok in toks {
                match parse_complex(tok) {
                    Some(z) => entries.push(z),
                    None => {
                        self.diags.push(Diagnostic::at(number, column_of(body, tok), format!("malformed complex entry `{tok}`")));
                        return None;
                    }
                }
            }
        }
        match Operator::from_rows(dim, &entries) {
            Ok(m) => Some(m),
            Err(e) => {
                self.diags.push(Diagnostic::at(term_line, 1, e.to_string()));
                None
            }
        }
    }
}

/// `a`, `bi`, `a+bi` or `a-bi` with ordinary float syntax for `a` and `b`.
pub fn parse_complex(tok: &str) -> Option<C64> {
    let finite = |z: C64| (z.re.is_finite() && z.im.is_finite()).then_some(z);
    let Some(body) = tok.strip_suffix('i') else {
        return tok.parse::<f64>().ok().map(|re| C64::new(re, 0.0)).and_then(finite);
    };
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&p| (bytes[p] == b'+' || bytes[p] == b'-') && !matches!(bytes[p - 1], b'e' | b'E'));
    let (re, im) = match split {
        Some(p) => (body[..p].parse::<f64>().ok()?, parse_imag(&body[p..])?),
        None => (0.0, parse_imag(body)?),
    };
    finite(C64::new(re, im))
}

fn parse_imag(s: &str) -> Option<f64> {
    match s {
        "" | "+" => Some(1.0),
        "-" => Some(-1.0),
        _ => s.parse::<f64>().ok(),
    }
}

fn render_complex(z: C64) -> String {
    let sign = if z.im.is_sign_negative() { '-' } else { '+' };
    format!("{:?}{sign}{:?}i", z.re, z.im.abs())
}

/// Renders a model as HSPEC with every term in explicit `mat` form, using
/// shortest round-trip float formatting so `parse_spec(render(h))` is exact.
pub fn render(h: &KLocalHamiltonian) -> String {
    let mut out = format!("sites {} {}\n", h.n, h.d);
    for t in &h.terms {
        let sites: Vec<String> = t.sites.iter().map(|s| s.to_string()).collect();
        let label = t.label.replace(['\n', '\r'], " ");
        out.push_str(&format!("term [{}] mat", sites.join(",")));
        if !label.is_empty() {
            out.push_str(&format!(" # {label}"));
        }
        out.push('\n');
        let dim = t.matrix.dim();
        for i in 0..dim {
            let row: Vec<String> = (0..dim).map(|j| render_complex(t.matrix.get(i, j))).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
    }
    out
}
