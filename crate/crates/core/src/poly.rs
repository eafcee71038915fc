//! Sparse multivariate polynomials over `(t, x1..xn)` or `(x1..xn)`.
//!
//! Whether a polynomial lives in state space or in time-state space is decided
//! only by `nvars`; when time is present it is always variable 0. Monomials are
//! kept in graded-lexicographic order, which is also the order used to index
//! moment vectors and Gram matrices.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;

use crate::error::{ParseError, RoaError};

/// Coefficients whose magnitude falls below this fraction of the magnitude of
/// the terms that produced them are treated as cancellation noise.
pub const DROP_TOL: f64 = 1e-14;

/// Exponent vector of a monomial with its cached total degree.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MultiIndex {
    exps: Vec<u32>,
    degree: u32,
}

impl MultiIndex {
    pub fn new(exps: Vec<u32>) -> Self {
        let degree = exps.iter().sum();
        Self { exps, degree }
    }

    pub fn zero(nvars: usize) -> Self {
        Self::new(vec![0; nvars])
    }

    /// The monomial consisting of the single variable `var`.
    pub fn unit(nvars: usize, var: usize) -> Self {
        let mut exps = vec![0; nvars];
        exps[var] = 1;
        Self::new(exps)
    }

    pub fn exps(&self) -> &[u32] {
        &self.exps
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn nvars(&self) -> usize {
        self.exps.len()
    }

    pub fn is_constant(&self) -> bool {
        self.degree == 0
    }

    /// Exponent-wise sum, i.e. the index of the product of two monomials.
    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        assert_eq!(self.nvars(), other.nvars(), "monomial arity mismatch");
        MultiIndex {
            exps: self.exps.iter().zip(&other.exps).map(|(a, b)| a + b).collect(),
            degree: self.degree + other.degree,
        }
    }

    /// Prepends a zero exponent for the time variable.
    pub fn with_time(&self, time_exp: u32) -> MultiIndex {
        let mut exps = Vec::with_capacity(self.exps.len() + 1);
        exps.push(time_exp);
        exps.extend_from_slice(&self.exps);
        MultiIndex::new(exps)
    }

    /// Drops the leading (time) exponent.
    pub fn without_time(&self) -> MultiIndex {
        MultiIndex::new(self.exps[1..].to_vec())
    }

    pub fn eval(&self, point: &[f64]) -> f64 {
        self.exps.iter().zip(point).map(|(&e, &z)| z.powi(e as i32)).product()
    }
}

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        // graded, then lexicographic with larger leading exponents first
        self.degree.cmp(&other.degree).then_with(|| other.exps.cmp(&self.exps))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Monomials in `nvars` variables up to a total degree, graded-lex ordered.
/// [`Basis::new`] takes all of them; [`Basis::restricted`] keeps a subset.
#[derive(Clone, Debug)]
pub struct Basis {
    nvars: usize,
    maxdeg: u32,
    elems: Vec<MultiIndex>,
    index: HashMap<MultiIndex, usize>,
}

impl PartialEq for Basis {
    fn eq(&self, other: &Self) -> bool {
        self.nvars == other.nvars && self.maxdeg == other.maxdeg && self.elems == other.elems
    }
}

impl Basis {
    pub fn new(nvars: usize, maxdeg: u32) -> Self {
        assert!(nvars >= 1, "a basis needs at least one variable");
        let mut elems = Vec::with_capacity(binomial(nvars as u64 + maxdeg as u64, maxdeg as u64) as usize);
        let mut scratch = vec![0u32; nvars];
        for d in 0..=maxdeg {
            push_degree(&mut elems, &mut scratch, 0, d);
        }
        let index = elems.iter().cloned().enumerate().map(|(i, m)| (m, i)).collect();
        Self {
            nvars,
            maxdeg,
            elems,
            index,
        }
    }

    /// The monomials of `Basis::new(nvars, maxdeg)` accepted by `keep`, in the
    /// same order.
    pub fn restricted(nvars: usize, maxdeg: u32, keep: impl Fn(&MultiIndex) -> bool) -> Self {
        let elems: Vec<MultiIndex> = Self::new(nvars, maxdeg).elems.into_iter().filter(|m| keep(m)).collect();
        let index = elems.iter().cloned().enumerate().map(|(i, m)| (m, i)).collect();
        Self {
            nvars,
            maxdeg,
            elems,
            index,
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn maxdeg(&self) -> u32 {
        self.maxdeg
    }

    pub fn len(&self) -> usize {
        self.elems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elems.is_empty()
    }

    pub fn get(&self, i: usize) -> &MultiIndex {
        &self.elems[i]
    }

    pub fn position(&self, m: &MultiIndex) -> Option<usize> {
        self.index.get(m).copied()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, MultiIndex> {
        self.elems.iter()
    }

    pub fn elems(&self) -> &[MultiIndex] {
        &self.elems
    }
}

fn push_degree(out: &mut Vec<MultiIndex>, scratch: &mut [u32], var: usize, remaining: u32) {
    if var + 1 == scratch.len() {
        scratch[var] = remaining;
        out.push(MultiIndex::new(scratch.to_vec()));
        return;
    }
    for e in (0..=remaining).rev() {
        scratch[var] = e;
        push_degree(out, scratch, var + 1, remaining - e);
    }
    scratch[var] = 0;
}

/// Shorthand for [`Basis::new`].
pub fn basis(nvars: usize, maxdeg: u32) -> Basis {
    Basis::new(nvars, maxdeg)
}

pub fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}

/// Sparse polynomial with real coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct Poly {
    nvars: usize,
    terms: BTreeMap<MultiIndex, f64>,
}

/// Running sum per monomial that remembers the magnitude of what was summed,
/// so that cancellation residue can be recognised and dropped.
struct Accumulator {
    nvars: usize,
    sums: BTreeMap<MultiIndex, (f64, f64)>,
}

impl Accumulator {
    fn new(nvars: usize) -> Self {
        Self {
            nvars,
            sums: BTreeMap::new(),
        }
    }

    fn push(&mut self, m: MultiIndex, c: f64) {
        let e = self.sums.entry(m).or_insert((0.0, 0.0));
        e.0 += c;
        e.1 += c.abs();
    }

    fn finish(self) -> Poly {
        let terms = self
            .sums
            .into_iter()
            .filter(|(_, (s, a))| *s != 0.0 && s.abs() > DROP_TOL * a)
            .map(|(m, (s, _))| (m, s))
            .collect();
        Poly {
            nvars: self.nvars,
            terms,
        }
    }
}

impl Poly {
    pub fn zero(nvars: usize) -> Self {
        Self {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        Self::monomial(MultiIndex::zero(nvars), c)
    }

    /// The polynomial consisting of variable `var`.
    pub fn var(nvars: usize, var: usize) -> Self {
        Self::monomial(MultiIndex::unit(nvars, var), 1.0)
    }

    pub fn monomial(m: MultiIndex, c: f64) -> Self {
        let nvars = m.nvars();
        let mut terms = BTreeMap::new();
        if c != 0.0 {
            terms.insert(m, c);
        }
        Self { nvars, terms }
    }

    /// Builds a polynomial from (monomial, coefficient) pairs, summing repeats.
    /// Only exact zeros are discarded, so tiny legitimate coefficients survive.
    pub fn from_terms(nvars: usize, terms: impl IntoIterator<Item = (MultiIndex, f64)>) -> Self {
        let mut map: BTreeMap<MultiIndex, f64> = BTreeMap::new();
        for (m, c) in terms {
            assert_eq!(m.nvars(), nvars, "monomial arity mismatch");
            *map.entry(m).or_insert(0.0) += c;
        }
        map.retain(|_, c| *c != 0.0);
        Self { nvars, terms: map }
    }

    /// Polynomial with the given coefficients on a basis.
    pub fn from_basis_coeffs(basis: &Basis, coeffs: &[f64]) -> Self {
        assert_eq!(basis.len(), coeffs.len());
        Self::from_terms(basis.nvars(), basis.iter().cloned().zip(coeffs.iter().copied()))
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    /// Total degree; the zero polynomial has degree 0.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(MultiIndex::degree).max().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, m: &MultiIndex) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, f64)> + '_ {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().fold(0.0, |a, c| a.max(c.abs()))
    }

    /// Coefficients on `basis`; `None` if a term falls outside it.
    pub fn coeffs_in(&self, basis: &Basis) -> Option<Vec<f64>> {
        let mut out = vec![0.0; basis.len()];
        for (m, c) in self.terms() {
            out[basis.position(m)?] = c;
        }
        Some(out)
    }

    fn check_arity(&self, other: &Poly) {
        assert_eq!(
            self.nvars, other.nvars,
            "polynomial arity mismatch: {} vs {} variables",
            self.nvars, other.nvars
        );
    }

    pub fn add(&self, other: &Poly) -> Poly {
        self.check_arity(other);
        let mut acc = Accumulator::new(self.nvars);
        for (m, c) in self.terms().chain(other.terms()) {
            acc.push(m.clone(), c);
        }
        acc.finish()
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        self.add(&other.scale(-1.0))
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        self.check_arity(other);
        let mut acc = Accumulator::new(self.nvars);
        for (a, ca) in self.terms() {
            for (b, cb) in other.terms() {
                acc.push(a.add(b), ca * cb);
            }
        }
        acc.finish()
    }

    pub fn scale(&self, s: f64) -> Poly {
        if s == 0.0 {
            return Poly::zero(self.nvars);
        }
        Poly {
            nvars: self.nvars,
            terms: self.terms.iter().map(|(m, &c)| (m.clone(), c * s)).collect(),
        }
    }

    pub fn pow(&self, e: u32) -> Poly {
        (0..e).fold(Poly::constant(self.nvars, 1.0), |acc, _| acc.mul(self))
    }

    /// Direct monomial evaluation with Neumaier-compensated summation.
    pub fn eval(&self, point: &[f64]) -> f64 {
        assert_eq!(point.len(), self.nvars, "evaluation point has wrong dimension");
        let maxdeg = self.degree() as usize;
        let powers = power_table(point, maxdeg);
        let mut sum = 0.0f64;
        let mut comp = 0.0f64;
        for (m, c) in self.terms() {
            let mut term = c;
            for (v, &e) in m.exps().iter().enumerate() {
                if e > 0 {
                    term *= powers[v * (maxdeg + 1) + e as usize];
                }
            }
            let t = sum + term;
            if sum.abs() >= term.abs() {
                comp += (sum - t) + term;
            } else {
                comp += (term - t) + sum;
            }
            sum = t;
        }
        sum + comp
    }

    /// Formal partial derivative with respect to variable `var`.
    pub fn diff(&self, var: usize) -> Poly {
        assert!(var < self.nvars, "derivative variable out of range");
        let terms = self.terms().filter(|(m, _)| m.exps()[var] > 0).map(|(m, c)| {
            let mut exps = m.exps().to_vec();
            let e = exps[var];
            exps[var] -= 1;
            (MultiIndex::new(exps), c * e as f64)
        });
        Poly::from_terms(self.nvars, terms)
    }

    /// Injects a state polynomial into time-state space (time becomes variable 0).
    pub fn promote_time(&self) -> Poly {
        Poly {
            nvars: self.nvars + 1,
            terms: self.terms.iter().map(|(m, &c)| (m.with_time(0), c)).collect(),
        }
    }

    /// Substitutes `t = time` into a time-state polynomial.
    pub fn at_time(&self, time: f64) -> Poly {
        assert!(self.nvars >= 2, "at_time needs a time-state polynomial");
        let terms = self
            .terms()
            .map(|(m, c)| (m.without_time(), c * time.powi(m.exps()[0] as i32)));
        let mut acc = Accumulator::new(self.nvars - 1);
        for (m, c) in terms {
            acc.push(m, c);
        }
        acc.finish()
    }

    /// Returns `p(.., factor * z_var, ..)`, i.e. the coefficient of every
    /// monomial is multiplied by `factor^exponent_of_var`.
    pub fn rescale_var(&self, var: usize, factor: f64) -> Poly {
        Poly::from_terms(
            self.nvars,
            self.terms()
                .map(|(m, c)| (m.clone(), c * factor.powi(m.exps()[var] as i32))),
        )
    }

    /// Renders the polynomial in the problem-file syntax.
    pub fn to_text(&self, names: &VarNames) -> String {
        if self.is_zero() {
            return "0".to_string();
        }
        let mut out = String::new();
        for (i, (m, c)) in self.terms().enumerate() {
            let (sign, mag) = if c < 0.0 { ("-", -c) } else { ("+", c) };
            if i == 0 {
                if sign == "-" {
                    out.push('-');
                }
            } else {
                out.push_str(&format!(" {sign} "));
            }
            let mut factors = Vec::new();
            if mag != 1.0 || m.is_constant() {
                factors.push(format!("{mag:?}"));
            }
            for (v, &e) in m.exps().iter().enumerate() {
                match e {
                    0 => {}
                    1 => factors.push(names.name(v)),
                    _ => factors.push(format!("{}^{e}", names.name(v))),
                }
            }
            out.push_str(&factors.join("*"));
        }
        out
    }
}

fn power_table(point: &[f64], maxdeg: usize) -> Vec<f64> {
    let stride = maxdeg + 1;
    let mut powers = vec![1.0; point.len() * stride];
    for (v, &z) in point.iter().enumerate() {
        for e in 1..stride {
            powers[v * stride + e] = powers[v * stride + e - 1] * z;
        }
    }
    powers
}

/// Flattened copy of a polynomial for hot evaluation loops.
#[derive(Clone, Debug)]
pub struct CompiledPoly {
    nvars: usize,
    maxdeg: usize,
    coeffs: Vec<f64>,
    exps: Vec<u32>,
}

impl CompiledPoly {
    pub fn new(p: &Poly) -> Self {
        let mut coeffs = Vec::with_capacity(p.len());
        let mut exps = Vec::with_capacity(p.len() * p.nvars());
        for (m, c) in p.terms() {
            coeffs.push(c);
            exps.extend_from_slice(m.exps());
        }
        Self {
            nvars: p.nvars(),
            maxdeg: p.degree() as usize,
            coeffs,
            exps,
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn eval(&self, point: &[f64]) -> f64 {
        debug_assert_eq!(point.len(), self.nvars);
        let stride = self.maxdeg + 1;
        // small fixed-size table covers the dynamics of interest without allocating
        let mut stack = [1.0f64; 64];
        let mut heap;
        let powers: &mut [f64] = if self.nvars * stride <= stack.len() {
            &mut stack[..self.nvars * stride]
        } else {
            heap = vec![1.0; self.nvars * stride];
            &mut heap
        };
        for (v, &z) in point.iter().enumerate() {
            for e in 1..stride {
                powers[v * stride + e] = powers[v * stride + e - 1] * z;
            }
        }
        let mut sum = 0.0;
        for (i, &c) in self.coeffs.iter().enumerate() {
            let mut term = c;
            for (v, &e) in self.exps[i * self.nvars..(i + 1) * self.nvars].iter().enumerate() {
                term *= powers[v * stride + e as usize];
            }
            sum += term;
        }
        sum
    }
}

/// The Liouville operator `v -> dv/dt + grad_x v . f` on time-state polynomials.
pub fn lie(v: &Poly, f: &[Poly]) -> Result<Poly, RoaError> {
    let n = f.len();
    if v.nvars() != n + 1 {
        return Err(RoaError::DimensionMismatch(format!(
            "test function has {} variables, expected {} (time + {} states)",
            v.nvars(),
            n + 1,
            n
        )));
    }
    if let Some(bad) = f.iter().find(|fi| fi.nvars() != n + 1) {
        return Err(RoaError::DimensionMismatch(format!(
            "dynamics entry has {} variables, expected {}",
            bad.nvars(),
            n + 1
        )));
    }
    let mut out = v.diff(0);
    for (i, fi) in f.iter().enumerate() {
        let dv = v.diff(i + 1);
        if !dv.is_zero() {
            out = out.add(&dv.mul(fi));
        }
    }
    Ok(out)
}

/// Variable naming for parsing and printing: optional `t`, then `x1..xn`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VarNames {
    pub states: usize,
    pub time: bool,
}

impl VarNames {
    pub fn state(states: usize) -> Self {
        Self { states, time: false }
    }

    pub fn time_state(states: usize) -> Self {
        Self { states, time: true }
    }

    pub fn nvars(&self) -> usize {
        self.states + usize::from(self.time)
    }

    pub fn name(&self, var: usize) -> String {
        match (self.time, var) {
            (true, 0) => "t".to_string(),
            (true, v) => format!("x{v}"),
            (false, v) => format!("x{}", v + 1),
        }
    }

    fn lookup(&self, ident: &str) -> Option<usize> {
        if ident == "t" {
            return self.time.then_some(0);
        }
        let idx: usize = ident.strip_prefix('x')?.parse().ok()?;
        if idx == 0 || idx > self.states || ident.starts_with("x0") {
            return None;
        }
        Some(idx - 1 + usize::from(self.time))
    }
}

impl Poly {
    /// Parses the problem-file syntax, e.g. `2.5*x1^2*x2 - 0.8*t + 1`.
    ///
    /// Products need an explicit `*`; parentheses and non-negative integer
    /// powers are accepted. Identifiers other than `t` and `x1..xn` are rejected.
    pub fn parse(src: &str, names: VarNames) -> Result<Poly, ParseError> {
        let mut p = Parser { src, pos: 0, names };
        let out = p.expr()?;
        p.skip_ws();
        if p.pos != src.len() {
            return Err(p.err("unexpected trailing input"));
        }
        Ok(out)
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    names: VarNames,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> ParseError {
        ParseError::Syntax {
            input: self.src.to_string(),
            pos: self.pos,
            msg: msg.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Poly, ParseError> {
        let mut acc = self.term()?;
        loop {
            if self.eat('+') {
                acc = acc.add(&self.term()?);
            } else if self.eat('-') {
                acc = acc.sub(&self.term()?);
            } else {
                return Ok(acc);
            }
        }
    }

    fn term(&mut self) -> Result<Poly, ParseError> {
        let mut acc = self.factor()?;
        while self.eat('*') {
            acc = acc.mul(&self.factor()?);
        }
        self.skip_ws();
        if self
            .peek()
            .is_some_and(|c| c.is_ascii_alphanumeric() || c == '(' || c == '.')
        {
            return Err(self.err("implicit multiplication is not allowed; use '*'"));
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<Poly, ParseError> {
        if self.eat('-') {
            return Ok(self.factor()?.scale(-1.0));
        }
        if self.eat('+') {
            return self.factor();
        }
        let base = self.primary()?;
        if self.eat('^') {
            self.skip_ws();
            let start = self.pos;
            while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                self.pos += 1;
            }
            let e: u32 = self.src[start..self.pos]
                .parse()
                .map_err(|_| self.err("expected a non-negative integer exponent"))?;
            return Ok(base.pow(e));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Poly, ParseError> {
        self.skip_ws();
        let nvars = self.names.nvars();
        match self.peek() {
            Some('(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if !self.eat(')') {
                    return Err(self.err("expected ')'"));
                }
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => {
                let start = self.pos;
                while self.peek().is_some_and(|c| c.is_ascii_digit() || c == '.') {
                    self.pos += 1;
                }
                if matches!(self.peek(), Some('e' | 'E')) {
                    let save = self.pos;
                    self.pos += 1;
                    if matches!(self.peek(), Some('+' | '-')) {
                        self.pos += 1;
                    }
                    if self.peek().is_some_and(|c| c.is_ascii_digit()) {
                        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                            self.pos += 1;
                        }
                    } else {
                        self.pos = save;
                    }
                }
                let v: f64 = self.src[start..self.pos]
                    .parse()
                    .map_err(|_| self.err("malformed number"))?;
                Ok(Poly::constant(nvars, v))
            }
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.peek().is_some_and(|c| c.is_ascii_alphanumeric() || c == '_') {
                    self.pos += 1;
                }
                let ident = &self.src[start..self.pos];
                match self.names.lookup(ident) {
                    Some(v) => Ok(Poly::var(nvars, v)),
                    None => {
                        self.pos = start;
                        Err(ParseError::UnknownIdentifier(ident.to_string()))
                    }
                }
            }
            _ => Err(self.err("expected a number, variable or '('")),
        }
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names = VarNames {
            states: self.nvars,
            time: false,
        };
        f.write_str(&self.to_text(&names))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn x1(s: &str) -> Poly {
        Poly::parse(s, VarNames::state(1)).unwrap()
    }

    fn tx1(s: &str) -> Poly {
        Poly::parse(s, VarNames::time_state(1)).unwrap()
    }

    #[test]
    fn basis_sizes_and_order() {
        let b = basis(1, 0);
        assert_eq!(b.len(), 1);
        assert!(b.get(0).is_constant());

        let b = basis(2, 2);
        let exps: Vec<_> = b.iter().map(|m| m.exps().to_vec()).collect();
        assert_eq!(
            exps,
            vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![2, 0], vec![1, 1], vec![0, 2]]
        );
        // binomial(12, 3) = 12*11*10/6
        assert_eq!(basis(3, 9).len(), 220);
        assert_eq!(binomial(12, 3), 220);
    }

    #[test]
    fn basis_lookup_round_trip() {
        let b = basis(3, 6);
        for (i, m) in b.iter().enumerate() {
            assert_eq!(b.position(m), Some(i));
        }
        let sorted = b.elems().windows(2).all(|w| w[0] < w[1]);
        assert!(sorted);
    }

    #[test]
    fn arithmetic_examples() {
        let x = Poly::var(1, 0);
        assert_eq!(x.mul(&x), x1("x1^2"));
        assert!((x1("1 - x1^2").eval(&[0.5]) - 0.75).abs() < 1e-15);

        let cubic = x1("x1*(x1 - 0.5)*(x1 + 0.5)");
        let expanded = cubic.mul(&Poly::constant(1, 1.0));
        assert_eq!(expanded, x1("x1^3 - 0.25*x1"));
    }

    #[test]
    fn derivatives() {
        let p = Poly::parse("x1^2*x2", VarNames::state(2)).unwrap();
        assert_eq!(p.diff(0), Poly::parse("2*x1*x2", VarNames::state(2)).unwrap());
        assert!(Poly::constant(2, 3.0).diff(1).is_zero());
        assert_eq!(tx1("t*x1^3").diff(0), tx1("x1^3"));
    }

    #[test]
    fn lie_examples() {
        let f = vec![tx1("x1^3 - 0.25*x1")];
        assert_eq!(lie(&tx1("t"), &f).unwrap(), tx1("1"));
        assert_eq!(lie(&tx1("x1"), &[tx1("x1")]).unwrap(), tx1("x1"));
        // chain rule by hand: d(x^2)/dx * (x^3 - x/4) = 2x^4 - x^2/2
        assert_eq!(lie(&tx1("x1^2"), &f).unwrap(), tx1("2*x1^4 - 0.5*x1^2"));
        assert!(lie(&tx1("3.5"), &f).unwrap().is_zero());
        assert!(lie(&x1("x1"), &f).is_err());
    }

    #[test]
    fn parser_rejects_bad_input() {
        assert!(matches!(
            Poly::parse("2*y", VarNames::state(1)),
            Err(ParseError::UnknownIdentifier(_))
        ));
        assert!(Poly::parse("2x1", VarNames::state(1)).is_err());
        assert!(Poly::parse("x1(x1-1)", VarNames::state(1)).is_err());
        assert!(Poly::parse("t*x1", VarNames::state(1)).is_err());
        assert!(Poly::parse("x3", VarNames::state(2)).is_err());
        assert!(Poly::parse("x1 +", VarNames::state(1)).is_err());
        let p = Poly::parse("2.5*x1^2*x2 - 0.8*t + 1", VarNames::time_state(2)).unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!(p.coeff(&MultiIndex::new(vec![1, 0, 0])), -0.8);
        assert_eq!(
            Poly::parse("1e-3*x1", VarNames::state(1))
                .unwrap()
                .coeff(&MultiIndex::new(vec![1])),
            1e-3
        );
    }

    #[test]
    fn text_round_trip() {
        let names = VarNames::time_state(2);
        let p = Poly::parse("2.5*x1^2*x2 - 0.8*t + 1 - x2^3*t", names).unwrap();
        assert_eq!(Poly::parse(&p.to_text(&names), names).unwrap(), p);
    }

    #[test]
    fn time_helpers() {
        let v = tx1("t^2*x1 + 3*t + x1^2");
        assert_eq!(v.at_time(2.0), x1("4*x1 + 6 + x1^2"));
        assert_eq!(x1("x1^2 + 1").promote_time(), tx1("x1^2 + 1"));
        assert_eq!(v.rescale_var(0, 10.0), tx1("100*t^2*x1 + 30*t + x1^2"));
    }

    #[test]
    fn cancellation_residue_is_dropped() {
        let a = x1("0.1*x1 + 0.2*x1");
        let b = x1("0.3*x1");
        assert!(a.sub(&b).is_zero());
        // tiny but genuine coefficients survive
        let tiny = x1("1e-17*x1^16");
        assert_eq!(tiny.add(&x1("1")).len(), 2);
    }

    fn arb_poly(nvars: usize, maxdeg: u32) -> impl Strategy<Value = Poly> {
        let b = basis(nvars, maxdeg);
        let n = b.len();
        prop::collection::vec(prop_oneof![Just(0.0), -2.0f64..2.0], n)
            .prop_map(move |c| Poly::from_basis_coeffs(&b, &c))
    }

    proptest! {
        #[test]
        fn product_evaluates_to_product_of_values(
            p in arb_poly(2, 6), q in arb_poly(2, 6),
            z in prop::collection::vec(-1.2f64..1.2, 2),
        ) {
            let lhs = p.mul(&q).eval(&z);
            let rhs = p.eval(&z) * q.eval(&z);
            let scale = 1.0 + p.terms().map(|(_, c)| c.abs()).sum::<f64>()
                * q.terms().map(|(_, c)| c.abs()).sum::<f64>() * 1.2f64.powi(12);
            prop_assert!((lhs - rhs).abs() <= 1e-10 * scale.max(rhs.abs()));
        }

        #[test]
        fn lie_is_linear(
            v1 in arb_poly(2, 4), v2 in arb_poly(2, 4), f in arb_poly(2, 3),
            a in -3.0f64..3.0, b in -3.0f64..3.0,
        ) {
            let f = vec![f];
            let combined = lie(&v1.scale(a).add(&v2.scale(b)), &f).unwrap();
            let split = lie(&v1, &f).unwrap().scale(a).add(&lie(&v2, &f).unwrap().scale(b));
            let all: std::collections::BTreeSet<_> =
                combined.terms().chain(split.terms()).map(|(m, _)| m.clone()).collect();
            for m in all {
                let (x, y) = (combined.coeff(&m), split.coeff(&m));
                prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs().max(y.abs())));
            }
        }

        #[test]
        fn compiled_matches_direct(p in arb_poly(3, 5), z in prop::collection::vec(-1.0f64..1.0, 3)) {
            let c = CompiledPoly::new(&p);
            prop_assert!((c.eval(&z) - p.eval(&z)).abs() < 1e-12);
        }
    }
}
