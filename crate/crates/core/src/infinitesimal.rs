//! Mixed moments `(φ, φ′)` of two infinitesimally free algebras.
//!
//! A word `x₁⋯x_r` alternates between algebra `A` (polynomials in one
//! self-adjoint generator `a`) and algebra `E` (scalars plus `N₀ × N₀`
//! matrices, the finite-rank part). Evaluation writes every letter as
//! `x̊ + φ(x)` with `φ(x̊) = 0` and expands. The fully centered alternating
//! term has `φ = 0` and
//!
//! ```text
//! φ′(x̊₁⋯x̊_r) = Σ_j φ′(x̊_j) · φ(x̊₁⋯x̊_{j−1} x̊_{j+1}⋯x̊_r)
//! ```
//!
//! while every other term is a strictly shorter word after merging
//! same-algebra neighbours, so the recursion terminates.
//!
//! The engine is generic over the scalar type so that tests can run it in
//! exact rational arithmetic.

use std::fmt::Debug;

use num_traits::Num;

use crate::error::{Error, Result};
use crate::measures::{Measure, SpectralMass, MAX_MOMENT_DEGREE};
use crate::rmt::stats::mean_stderr;
use crate::rmt::{map_trials, CMatrix, EnsembleKind, EnsembleSpec};
use crate::typeb::sigma_moment;
use crate::Complex64;

/// Numeric field the engine runs over (`f64`, exact rationals, …).
pub trait Scalar: Num + Clone + Debug {}

impl<T: Num + Clone + Debug> Scalar for T {}

/// An element of one of the two algebras.
pub trait Element<S>: Clone {
    fn mul(&self, other: &Self) -> Self;
    fn sub_scalar(&self, c: &S) -> Self;
}

/// A pair `(φ, φ′)` on one algebra, with `φ(1) = 1` and `φ′(1) = 0`.
pub trait State<X, S> {
    fn phi(&self, x: &X) -> Result<S>;
    fn phi_prime(&self, x: &X) -> Result<S>;
}

/// Polynomial in the generator `a`, lowest degree first.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly<S> {
    pub coeffs: Vec<S>,
}

impl<S: Scalar> Poly<S> {
    pub fn new(coeffs: Vec<S>) -> Self {
        Poly { coeffs }
    }

    /// `a^k`.
    pub fn monomial(k: usize) -> Self {
        let mut coeffs = vec![S::zero(); k + 1];
        coeffs[k] = S::one();
        Poly { coeffs }
    }

    pub fn constant(c: S) -> Self {
        Poly { coeffs: vec![c] }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.iter().rposition(|c| !c.is_zero()).unwrap_or(0)
    }
}

impl<S: Scalar> Element<S> for Poly<S> {
    fn mul(&self, other: &Self) -> Self {
        let mut out = vec![S::zero(); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] = out[i + j].clone() + a.clone() * b.clone();
            }
        }
        Poly { coeffs: out }
    }

    fn sub_scalar(&self, c: &S) -> Self {
        let mut coeffs = self.coeffs.clone();
        coeffs[0] = coeffs[0].clone() - c.clone();
        Poly { coeffs }
    }
}

/// State on polynomials given by moment sequences `m_k = φ(a^k)`, `m′_k = φ′(a^k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyState<S> {
    moments: Vec<S>,
    prime_moments: Vec<S>,
}

impl<S: Scalar> PolyState<S> {
    /// Forces `m₀ = 1` and `m′₀ = 0`; both sequences must have equal length.
    pub fn new(mut moments: Vec<S>, mut prime_moments: Vec<S>) -> Result<Self> {
        if moments.is_empty() || moments.len() != prime_moments.len() {
            return Err(Error::InvalidMeasure("moment sequences must be nonempty and of equal length".into()));
        }
        moments[0] = S::one();
        prime_moments[0] = S::zero();
        Ok(PolyState { moments, prime_moments })
    }

    pub fn max_degree(&self) -> usize {
        self.moments.len() - 1
    }

    fn apply(&self, m: &[S], p: &Poly<S>) -> Result<S> {
        let d = p.degree();
        if d >= m.len() {
            return Err(Error::DegreeOverflow { degree: d, max: m.len() - 1 });
        }
        Ok(p.coeffs.iter().zip(m).fold(S::zero(), |acc, (c, m)| acc + c.clone() * m.clone()))
    }
}

impl PolyState<f64> {
    /// `φ` from the moments of `law`, `φ′` from `prime` (zero if absent).
    pub fn from_measure(law: &Measure, prime: Option<&dyn SpectralMass>) -> Result<Self> {
        let moments = (0..=MAX_MOMENT_DEGREE).map(|k| law.moment(k)).collect::<Result<Vec<_>>>()?;
        let prime_moments = match prime {
            Some(p) => (0..=MAX_MOMENT_DEGREE).map(|k| p.moment(k)).collect::<Result<Vec<_>>>()?,
            None => vec![0.0; MAX_MOMENT_DEGREE + 1],
        };
        PolyState::new(moments, prime_moments)
    }

    /// `φ(P) = P(0)`, `φ′(P) = Σ_j (P(λ_j) − P(0))`: a finite-rank matrix
    /// with eigenvalues `λ_j` padded by zeros.
    pub fn finite_rank(eigenvalues: &[f64]) -> Self {
        let moments = (0..=MAX_MOMENT_DEGREE).map(|k| if k == 0 { 1.0 } else { 0.0 }).collect();
        let prime_moments =
            (0..=MAX_MOMENT_DEGREE).map(|k| if k == 0 { 0.0 } else { eigenvalues.iter().map(|l| l.powi(k as i32)).sum() }).collect();
        PolyState { moments, prime_moments }
    }
}

impl<S: Scalar> State<Poly<S>, S> for PolyState<S> {
    fn phi(&self, x: &Poly<S>) -> Result<S> {
        self.apply(&self.moments, x)
    }

    fn phi_prime(&self, x: &Poly<S>) -> Result<S> {
        self.apply(&self.prime_moments, x)
    }
}

/// `c·1 + M` with `M` an `N₀ × N₀` matrix (row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct UnitizedMatrix<S> {
    pub scalar: S,
    pub n0: usize,
    pub m: Vec<S>,
}

impl<S: Scalar> UnitizedMatrix<S> {
    pub fn zero(n0: usize) -> Self {
        UnitizedMatrix { scalar: S::zero(), n0, m: vec![S::zero(); n0 * n0] }
    }

    /// Matrix unit `e_{st}`, 1-based.
    pub fn unit(n0: usize, s: usize, t: usize) -> Result<Self> {
        for i in [s, t] {
            if i == 0 || i > n0 {
                return Err(Error::IndexOutOfRange { index: i, dim: n0 });
            }
        }
        let mut e = Self::zero(n0);
        e.m[(s - 1) * n0 + t - 1] = S::one();
        Ok(e)
    }

    /// `Σ_j λ_j e_jj`.
    pub fn diagonal(n0: usize, values: &[S]) -> Result<Self> {
        if values.len() > n0 {
            return Err(Error::IndexOutOfRange { index: values.len(), dim: n0 });
        }
        let mut e = Self::zero(n0);
        for (j, v) in values.iter().enumerate() {
            e.m[j * n0 + j] = v.clone();
        }
        Ok(e)
    }

    pub fn trace(&self) -> S {
        (0..self.n0).fold(S::zero(), |acc, i| acc + self.m[i * self.n0 + i].clone())
    }
}

impl<S: Scalar> Element<S> for UnitizedMatrix<S> {
    fn mul(&self, o: &Self) -> Self {
        assert_eq!(self.n0, o.n0, "matrix units of different sizes");
        let n = self.n0;
        let mut m = vec![S::zero(); n * n];
        for i in 0..n {
            for j in 0..n {
                let mut acc = self.scalar.clone() * o.m[i * n + j].clone() + o.scalar.clone() * self.m[i * n + j].clone();
                for k in 0..n {
                    acc = acc + self.m[i * n + k].clone() * o.m[k * n + j].clone();
                }
                m[i * n + j] = acc;
            }
        }
        UnitizedMatrix { scalar: self.scalar.clone() * o.scalar.clone(), n0: n, m }
    }

    fn sub_scalar(&self, c: &S) -> Self {
        UnitizedMatrix { scalar: self.scalar.clone() - c.clone(), ..self.clone() }
    }
}

/// `φ(c + M) = c`, `φ′(c + M) = Tr M`: matrix units inside `N × N` matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FiniteRankState {
    pub n0: usize,
}

/// State of the finite-rank algebra of size `n0`.
pub fn finite_rank_state(n0: usize) -> FiniteRankState {
    FiniteRankState { n0: n0.max(1) }
}

impl<S: Scalar> State<UnitizedMatrix<S>, S> for FiniteRankState {
    fn phi(&self, x: &UnitizedMatrix<S>) -> Result<S> {
        Ok(x.scalar.clone())
    }

    fn phi_prime(&self, x: &UnitizedMatrix<S>) -> Result<S> {
        Ok(x.trace())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Letter<X, Y> {
    A(X),
    E(Y),
}

/// Merges neighbours from the same algebra.
pub fn normalize<S, X: Element<S>, Y: Element<S>>(word: &[Letter<X, Y>]) -> Vec<Letter<X, Y>> {
    let mut out: Vec<Letter<X, Y>> = Vec::with_capacity(word.len());
    for l in word {
        let merged = match (out.last(), l) {
            (Some(Letter::A(p)), Letter::A(q)) => Some(Letter::A(p.mul(q))),
            (Some(Letter::E(p)), Letter::E(q)) => Some(Letter::E(p.mul(q))),
            _ => None,
        };
        match merged {
            Some(m) => *out.last_mut().expect("nonempty") = m,
            None => out.push(l.clone()),
        }
    }
    out
}

struct Engine<'a, SA, SE> {
    sa: &'a SA,
    se: &'a SE,
}

impl<SA, SE> Engine<'_, SA, SE> {
    fn phi<S, X, Y>(&self, l: &Letter<X, Y>) -> Result<S>
    where
        SA: State<X, S>,
        SE: State<Y, S>,
    {
        match l {
            Letter::A(x) => self.sa.phi(x),
            Letter::E(y) => self.se.phi(y),
        }
    }

    fn phi_prime<S, X, Y>(&self, l: &Letter<X, Y>) -> Result<S>
    where
        SA: State<X, S>,
        SE: State<Y, S>,
    {
        match l {
            Letter::A(x) => self.sa.phi_prime(x),
            Letter::E(y) => self.se.phi_prime(y),
        }
    }

    /// `(φ(w), φ′(w))`; the second entry is zero unless `prime` is set.
    fn eval<S: Scalar, X: Element<S>, Y: Element<S>>(&self, word: &[Letter<X, Y>], prime: bool) -> Result<(S, S)>
    where
        SA: State<X, S>,
        SE: State<Y, S>,
    {
        let w = normalize(word);
        match w.len() {
            0 => return Ok((S::one(), S::zero())),
            1 => {
                let p = if prime { self.phi_prime(&w[0])? } else { S::zero() };
                return Ok((self.phi(&w[0])?, p));
            }
            _ => {}
        }
        let r = w.len();
        let c = w.iter().map(|l| self.phi(l)).collect::<Result<Vec<S>>>()?;
        let centered: Vec<Letter<X, Y>> = w
            .iter()
            .zip(&c)
            .map(|(l, c)| match l {
                Letter::A(x) => Letter::A(x.sub_scalar(c)),
                Letter::E(y) => Letter::E(y.sub_scalar(c)),
            })
            .collect();
        let (mut phi, mut dphi) = (S::zero(), S::zero());
        let full = (1usize << r) - 1;
        for mask in 0..full {
            let coef = (0..r).filter(|i| mask & (1 << i) == 0).fold(S::one(), |acc, i| acc * c[i].clone());
            if coef.is_zero() {
                continue;
            }
            let sub: Vec<Letter<X, Y>> = (0..r).filter(|i| mask & (1 << i) != 0).map(|i| centered[i].clone()).collect();
            let (p, dp) = self.eval(&sub, prime)?;
            phi = phi + coef.clone() * p;
            dphi = dphi + coef * dp;
        }
        if prime {
            for j in 0..r {
                let d = self.phi_prime(&centered[j])?;
                if d.is_zero() {
                    continue;
                }
                let rest: Vec<Letter<X, Y>> =
                    centered.iter().enumerate().filter(|(i, _)| *i != j).map(|(_, l)| l.clone()).collect();
                dphi = dphi + d * self.eval(&rest, false)?.0;
            }
        }
        Ok((phi, dphi))
    }
}

/// `φ(word)` for `A` and `E` free with respect to `φ`.
pub fn free_moment<S, X, Y, SA, SE>(word: &[Letter<X, Y>], state_a: &SA, state_e: &SE) -> Result<S>
where
    S: Scalar,
    X: Element<S>,
    Y: Element<S>,
    SA: State<X, S>,
    SE: State<Y, S>,
{
    Ok(Engine { sa: state_a, se: state_e }.eval(word, false)?.0)
}

/// `(φ(word), φ′(word))` for `A` and `E` infinitesimally free.
pub fn infinitesimal_moment<S, X, Y, SA, SE>(word: &[Letter<X, Y>], state_a: &SA, state_e: &SE) -> Result<(S, S)>
where
    S: Scalar,
    X: Element<S>,
    Y: Element<S>,
    SA: State<X, S>,
    SE: State<Y, S>,
{
    Engine { sa: state_a, se: state_e }.eval(word, true)
}

pub type NCWord = Vec<Letter<Poly<f64>, UnitizedMatrix<f64>>>;

/// Noncommutative polynomial in `a`, the spike element `b = Σ θ_j e_jj`
/// and matrix units `e_{st}`.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    A,
    B,
    /// `e_{st}`, 1-based.
    E(usize, usize),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Pow(Box<Expr>, u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Symbol {
    A,
    B,
    E(usize, usize),
}

/// Linear combination of monomials.
pub type Monomials = Vec<(f64, Vec<Symbol>)>;

const MAX_POWER: u32 = 64;

impl Expr {
    /// Parses e.g. `a^2 e11 (a - 0.5) e12 e21`, `(a + 4 e11)^2` or `(a+b)^3`.
    /// Juxtaposition multiplies; `e(s,t)` spells units with large indices.
    pub fn parse(src: &str) -> Result<Expr> {
        let mut p = Parser { s: src.as_bytes(), pos: 0 };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos < p.s.len() {
            return Err(p.err("unexpected trailing input"));
        }
        Ok(e)
    }

    /// Largest matrix-unit index.
    pub fn max_unit_index(&self) -> usize {
        match self {
            Expr::E(s, t) => *s.max(t),
            Expr::Add(x, y) | Expr::Sub(x, y) | Expr::Mul(x, y) => x.max_unit_index().max(y.max_unit_index()),
            Expr::Neg(x) | Expr::Pow(x, _) => x.max_unit_index(),
            _ => 0,
        }
    }

    pub fn uses_spike(&self) -> bool {
        match self {
            Expr::B => true,
            Expr::Add(x, y) | Expr::Sub(x, y) | Expr::Mul(x, y) => x.uses_spike() || y.uses_spike(),
            Expr::Neg(x) | Expr::Pow(x, _) => x.uses_spike(),
            _ => false,
        }
    }

    pub fn expand(&self) -> Monomials {
        let mut out = match self {
            Expr::Num(c) => vec![(*c, vec![])],
            Expr::A => vec![(1.0, vec![Symbol::A])],
            Expr::B => vec![(1.0, vec![Symbol::B])],
            Expr::E(s, t) => vec![(1.0, vec![Symbol::E(*s, *t)])],
            Expr::Add(x, y) => [x.expand(), y.expand()].concat(),
            Expr::Sub(x, y) => {
                let mut v = x.expand();
                v.extend(y.expand().into_iter().map(|(c, w)| (-c, w)));
                v
            }
            Expr::Neg(x) => x.expand().into_iter().map(|(c, w)| (-c, w)).collect(),
            Expr::Mul(x, y) => product(&x.expand(), &y.expand()),
            Expr::Pow(x, k) => {
                let base = x.expand();
                (0..*k).fold(vec![(1.0, vec![])], |acc, _| product(&acc, &base))
            }
        };
        out.sort_by(|a, b| format!("{:?}", a.1).cmp(&format!("{:?}", b.1)));
        let mut merged: Monomials = Vec::with_capacity(out.len());
        for (c, w) in out {
            match merged.last_mut() {
                Some((c0, w0)) if *w0 == w => *c0 += c,
                _ => merged.push((c, w)),
            }
        }
        merged.retain(|(c, _)| *c != 0.0);
        merged
    }

    /// The matrix `p(A, B, E)` with `B = Σ θ_j E_jj`.
    pub fn eval_matrix(&self, a: &CMatrix, spikes: &[f64]) -> Result<CMatrix> {
        let n = a.dim();
        Ok(match self {
            Expr::Num(c) => scaled_identity(n, *c),
            Expr::A => a.clone(),
            Expr::B => {
                if spikes.len() > n {
                    return Err(Error::IndexOutOfRange { index: spikes.len(), dim: n });
                }
                let mut d = vec![0.0; n];
                d[..spikes.len()].copy_from_slice(spikes);
                CMatrix::diagonal(&d)
            }
            Expr::E(s, t) => {
                for i in [*s, *t] {
                    if i == 0 || i > n {
                        return Err(Error::IndexOutOfRange { index: i, dim: n });
                    }
                }
                let mut m = CMatrix::zeros(n);
                m[(s - 1, t - 1)] = Complex64::new(1.0, 0.0);
                m
            }
            Expr::Add(x, y) => combine(&x.eval_matrix(a, spikes)?, &y.eval_matrix(a, spikes)?, 1.0),
            Expr::Sub(x, y) => combine(&x.eval_matrix(a, spikes)?, &y.eval_matrix(a, spikes)?, -1.0),
            Expr::Neg(x) => combine(&CMatrix::zeros(n), &x.eval_matrix(a, spikes)?, -1.0),
            Expr::Mul(x, y) => x.eval_matrix(a, spikes)?.matmul(&y.eval_matrix(a, spikes)?),
            Expr::Pow(x, k) => matrix_power(&x.eval_matrix(a, spikes)?, *k),
        })
    }

    /// `Tr p(A, B, E)`, skipping the last product where possible.
    pub fn trace_on(&self, a: &CMatrix, spikes: &[f64]) -> Result<Complex64> {
        match self {
            Expr::Mul(x, y) => Ok(trace_of_product(&x.eval_matrix(a, spikes)?, &y.eval_matrix(a, spikes)?)),
            Expr::Pow(x, k) if *k >= 2 => {
                let m = x.eval_matrix(a, spikes)?;
                let half = matrix_power(&m, k / 2);
                let other = if k % 2 == 0 { half.clone() } else { half.matmul(&m) };
                Ok(trace_of_product(&half, &other))
            }
            _ => Ok(self.eval_matrix(a, spikes)?.trace()),
        }
    }
}

fn product(x: &Monomials, y: &Monomials) -> Monomials {
    let mut out = Vec::with_capacity(x.len() * y.len());
    for (c1, w1) in x {
        for (c2, w2) in y {
            out.push((c1 * c2, [w1.as_slice(), w2.as_slice()].concat()));
        }
    }
    out
}

fn scaled_identity(n: usize, c: f64) -> CMatrix {
    CMatrix::diagonal(&vec![c; n])
}

fn combine(x: &CMatrix, y: &CMatrix, sign: f64) -> CMatrix {
    let n = x.dim();
    let mut out = x.clone();
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] += y[(i, j)] * sign;
        }
    }
    out
}

fn matrix_power(m: &CMatrix, k: u32) -> CMatrix {
    let mut result: Option<CMatrix> = None;
    let mut base = m.clone();
    let mut e = k;
    while e > 0 {
        if e & 1 == 1 {
            result = Some(match result {
                None => base.clone(),
                Some(r) => r.matmul(&base),
            });
        }
        e >>= 1;
        if e > 0 {
            base = base.matmul(&base);
        }
    }
    result.unwrap_or_else(|| CMatrix::identity(m.dim()))
}

fn trace_of_product(x: &CMatrix, y: &CMatrix) -> Complex64 {
    let n = x.dim();
    (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| x[(i, j)] * y[(j, i)]).sum()
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> Error {
        Error::Parse { pos: self.pos, msg: msg.into() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.s.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(c @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if c == b'+' { Expr::Add(Box::new(lhs), Box::new(rhs)) } else { Expr::Sub(Box::new(lhs), Box::new(rhs)) };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Some(b'*') => self.pos += 1,
                Some(c) if c == b'(' || c == b'.' || c.is_ascii_alphanumeric() => {}
                _ => return Ok(lhs),
            }
            let rhs = self.factor()?;
            lhs = Expr::Mul(Box::new(lhs), Box::new(rhs));
        }
    }

    fn factor(&mut self) -> Result<Expr> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.factor()?)));
        }
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            self.skip_ws();
            let k = self.integer()?;
            if k > MAX_POWER as usize {
                return Err(self.err("exponent too large"));
            }
            return Ok(Expr::Pow(Box::new(base), k as u32));
        }
        Ok(base)
    }

    fn integer(&mut self) -> Result<usize> {
        let start = self.pos;
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("expected an integer"));
        }
        std::str::from_utf8(&self.s[start..self.pos])
            .expect("ascii digits")
            .parse()
            .map_err(|_| self.err("integer out of range"))
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.err("expected ')'"));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(b'a') => {
                self.pos += 1;
                Ok(Expr::A)
            }
            Some(b'b') => {
                self.pos += 1;
                Ok(Expr::B)
            }
            Some(b'e') => {
                self.pos += 1;
                self.unit()
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(_) => Err(self.err("unexpected character")),
            None => Err(self.err("unexpected end of input")),
        }
    }

    fn unit(&mut self) -> Result<Expr> {
        if self.s.get(self.pos) == Some(&b'(') {
            self.pos += 1;
            self.skip_ws();
            let s = self.integer()?;
            if self.peek() != Some(b',') {
                return Err(self.err("expected ','"));
            }
            self.pos += 1;
            self.skip_ws();
            let t = self.integer()?;
            if self.peek() != Some(b')') {
                return Err(self.err("expected ')'"));
            }
            self.pos += 1;
            return self.check_unit(s, t);
        }
        let digits: Vec<u8> = self.s[self.pos..].iter().take_while(|c| c.is_ascii_digit()).copied().collect();
        if digits.len() != 2 {
            return Err(self.err("matrix unit needs two digits, e.g. e12, or e(s,t)"));
        }
        self.pos += 2;
        self.check_unit((digits[0] - b'0') as usize, (digits[1] - b'0') as usize)
    }

    fn check_unit(&self, s: usize, t: usize) -> Result<Expr> {
        if s == 0 || t == 0 {
            return Err(self.err("matrix unit indices start at 1"));
        }
        Ok(Expr::E(s, t))
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        let s = self.s;
        let mut i = self.pos;
        while i < s.len() && (s[i].is_ascii_digit() || s[i] == b'.') {
            i += 1;
        }
        if i < s.len() && (s[i] == b'e' || s[i] == b'E') {
            // Exponent only if digits follow; otherwise `e` starts a matrix unit.
            let mut j = i + 1;
            if j < s.len() && (s[j] == b'+' || s[j] == b'-') {
                j += 1;
            }
            let k = s[j..].iter().take_while(|c| c.is_ascii_digit()).count();
            let is_unit = s[i] == b'e' && k == 2 && !(s[i + 1] == b'+' || s[i + 1] == b'-');
            if k > 0 && !is_unit {
                i = j + k;
            }
        }
        self.pos = i;
        std::str::from_utf8(&s[start..i])
            .expect("ascii")
            .parse::<f64>()
            .map(Expr::Num)
            .map_err(|_| Error::Parse { pos: start, msg: "malformed number".into() })
    }
}

/// The `(φ, φ′)` oracle for a polynomial expression.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentPrediction {
    pub phi: f64,
    pub phi_prime: f64,
}

impl MomentPrediction {
    /// First-order value `φ + φ′/N` of `(1/N) E Tr`.
    pub fn at(&self, n: usize) -> f64 {
        self.phi + self.phi_prime / n as f64
    }
}

/// Converts a monomial to a word; `b` becomes `diag(spikes)`.
pub fn monomial_word(symbols: &[Symbol], n0: usize, spikes: &[f64]) -> Result<NCWord> {
    let mut w: NCWord = Vec::with_capacity(symbols.len());
    for s in symbols {
        w.push(match s {
            Symbol::A => Letter::A(Poly::monomial(1)),
            Symbol::B => Letter::E(UnitizedMatrix::diagonal(n0, spikes)?),
            Symbol::E(i, j) => Letter::E(UnitizedMatrix::unit(n0, *i, *j)?),
        });
    }
    Ok(w)
}

/// `(φ, φ′)` of `expr` with `a` distributed by `base` and the finite-rank
/// algebra spanned by the matrix units and `b`.
pub fn expr_moment(expr: &Expr, base: &PolyState<f64>, spikes: &[f64]) -> Result<MomentPrediction> {
    let n0 = expr.max_unit_index().max(spikes.len()).max(1);
    let e_state = finite_rank_state(n0);
    let (mut phi, mut phi_prime) = (0.0, 0.0);
    for (c, symbols) in expr.expand() {
        let w = monomial_word(&symbols, n0, spikes)?;
        let (p, dp) = infinitesimal_moment(&w, base, &e_state)?;
        phi += c * p;
        phi_prime += c * dp;
    }
    Ok(MomentPrediction { phi, phi_prime })
}

/// First-order prediction `φ(word) + φ′(word)/N` of `(1/N) E Tr(word)`
/// when `a` has limit law `base_tau` with no `1/N` correction.
pub fn predict_mixed_moment(expr: &Expr, base_tau: &Measure, spikes: &[f64], n: usize) -> Result<f64> {
    let n0 = expr.max_unit_index().max(spikes.len());
    if n < n0 {
        return Err(Error::IndexOutOfRange { index: n0, dim: n });
    }
    Ok(expr_moment(expr, &PolyState::from_measure(base_tau, None)?, spikes)?.at(n))
}

/// `φ` for the generator `a` of an unspiked ensemble: the bulk law, with
/// `φ′` the GOE correction `σ` where it applies and zero otherwise.
pub fn ensemble_state(spec: &EnsembleSpec) -> Result<PolyState<f64>> {
    let law = spec.bulk_law()?;
    match &spec.kind {
        EnsembleKind::Goe => {
            let moments = (0..=MAX_MOMENT_DEGREE).map(|k| law.moment(k)).collect::<Result<Vec<_>>>()?;
            PolyState::new(moments, (0..=MAX_MOMENT_DEGREE).map(sigma_moment).collect())
        }
        EnsembleKind::Wishart { sigma_spikes, .. } if !sigma_spikes.is_empty() => {
            Err(Error::Unsupported("the generator a must be an unspiked Wishart matrix".into()))
        }
        _ => PolyState::from_measure(&law, None),
    }
}

/// Monte Carlo mean and standard error of `(1/N) Re Tr p(A, B, E)` with `A`
/// drawn from `spec` (its own additive spikes included) and `B = Σ θ_j E_jj`.
pub fn simulate_word_moment(spec: &EnsembleSpec, expr: &Expr, spikes: &[f64]) -> Result<(f64, f64)> {
    let n = spec.n as f64;
    let xs = map_trials(spec, |a| Ok(expr.trace_on(a, spikes)?.re / n))?;
    Ok(mean_stderr(&xs))
}

#[cfg(test)]
mod tests {
    use super::*;

    type W = NCWord;

    fn semicircle_state() -> PolyState<f64> {
        PolyState::from_measure(&Measure::semicircle(), None).unwrap()
    }

    fn a_poly(c: &[f64]) -> Letter<Poly<f64>, UnitizedMatrix<f64>> {
        Letter::A(Poly::new(c.to_vec()))
    }

    fn unit(s: usize, t: usize) -> Letter<Poly<f64>, UnitizedMatrix<f64>> {
        Letter::E(UnitizedMatrix::unit(2, s, t).unwrap())
    }

    #[test]
    fn finite_rank_examples() {
        let st = PolyState::finite_rank(&[3.0]);
        let p = Poly::new(vec![0.0, 0.0, 1.0]);
        assert_eq!(st.phi(&p).unwrap(), 0.0);
        assert_eq!(st.phi_prime(&p).unwrap(), 9.0);
        let fr = finite_rank_state(2);
        let e11 = UnitizedMatrix::<f64>::unit(2, 1, 1).unwrap();
        let e12 = UnitizedMatrix::<f64>::unit(2, 1, 2).unwrap();
        let e21 = UnitizedMatrix::<f64>::unit(2, 2, 1).unwrap();
        assert_eq!((fr.phi(&e11).unwrap(), fr.phi_prime(&e11).unwrap()), (0.0, 1.0));
        assert_eq!(fr.phi_prime(&e12.mul(&e21)).unwrap(), 1.0);
        assert_eq!(fr.phi_prime(&e12.mul(&e12)).unwrap(), 0.0);
    }

    #[test]
    fn length_two_factorization() {
        let sa = PolyState::new(vec![1.0, 2.0, 7.0], vec![0.0, 3.0, 5.0]).unwrap();
        let sb = PolyState::new(vec![1.0, -1.0, 4.0], vec![0.0, 2.0, 1.0]).unwrap();
        let a = Poly::monomial(1);
        let w: Vec<Letter<Poly<f64>, Poly<f64>>> = vec![Letter::A(a.clone()), Letter::E(a.clone())];
        let (p, dp) = infinitesimal_moment(&w, &sa, &sb).unwrap();
        assert_eq!(p, 2.0 * -1.0);
        assert_eq!(dp, 2.0 * 2.0 + 3.0 * -1.0);
        // φ(abab) = φ(a²)φ(b)² + φ(a)²φ(b²) − φ(a)²φ(b)²
        let w4 = [w.clone(), w].concat();
        let p4: f64 = free_moment(&w4, &sa, &sb).unwrap();
        assert_eq!(p4, 7.0 * 1.0 + 4.0 * 4.0 - 4.0 * 1.0);
    }

    #[test]
    fn centered_alternating_conditions() {
        let sa = semicircle_state();
        let fr = finite_rank_state(2);
        // e11 · q(a) has φ = 0 and φ′ = φ(q).
        let w: W = vec![unit(1, 1), a_poly(&[1.0, 2.0, 3.0])];
        let (p, dp) = infinitesimal_moment(&w, &sa, &fr).unwrap();
        assert_eq!(p, 0.0);
        assert!((dp - (1.0 + 1.5)).abs() < 1e-14);
        // Alternating e's and centered polynomials vanish to both orders.
        let centered = a_poly(&[-0.5, 0.0, 1.0]);
        let w: W = vec![unit(1, 2), centered.clone(), unit(2, 1), centered.clone(), unit(1, 1), centered];
        let (p, dp) = infinitesimal_moment(&w, &sa, &fr).unwrap();
        assert!(p.abs() < 1e-14 && dp.abs() < 1e-14);
    }

    #[test]
    fn parse_and_predict() {
        let e = Expr::parse("(a+4 e11)^2").unwrap();
        let v = predict_mixed_moment(&e, &Measure::semicircle(), &[], 100).unwrap();
        assert!((v - 0.66).abs() < 1e-12);
        let e = Expr::parse("a^2").unwrap();
        for n in [10, 1000] {
            assert!((predict_mixed_moment(&e, &Measure::semicircle(), &[], n).unwrap() - 0.5).abs() < 1e-14);
        }
        let e = Expr::parse("e11").unwrap();
        assert!((predict_mixed_moment(&e, &Measure::semicircle(), &[], 50).unwrap() - 0.02).abs() < 1e-15);
        let m = expr_moment(&Expr::parse("e11 (a^2 - 0.5)").unwrap(), &semicircle_state(), &[]).unwrap();
        assert!(m.phi.abs() < 1e-15 && m.phi_prime.abs() < 1e-15);
        let b = expr_moment(&Expr::parse("(a+b)^2").unwrap(), &semicircle_state(), &[4.0]).unwrap();
        assert!((b.phi - 0.5).abs() < 1e-14 && (b.phi_prime - 16.0).abs() < 1e-12);
    }

    #[test]
    fn parser_forms() {
        let e = Expr::parse("a^2 e11 (a - 0.5) e12 e21").unwrap();
        assert_eq!(e.max_unit_index(), 2);
        assert_eq!(Expr::parse("2e11").unwrap(), Expr::Mul(Box::new(Expr::Num(2.0)), Box::new(Expr::E(1, 1))));
        assert_eq!(Expr::parse("1e-3").unwrap(), Expr::Num(1e-3));
        assert_eq!(Expr::parse("e(10,3)").unwrap(), Expr::E(10, 3));
        assert_eq!(Expr::parse("-a").unwrap().expand(), vec![(-1.0, vec![Symbol::A])]);
        for bad in ["", "a +", "e1", "(a", "a^", "x", "e01"] {
            assert!(matches!(Expr::parse(bad), Err(Error::Parse { .. })), "{bad}");
        }
    }

    #[test]
    fn trace_shortcut_matches_full_product() {
        let a = CMatrix::from_real_rows(&[vec![1.0, 2.0, 0.0], vec![2.0, -1.0, 1.0], vec![0.0, 1.0, 3.0]]).unwrap();
        for src in ["(a + 2 e12)^3", "a e21 a^2", "(a - b)^4", "a"] {
            let e = Expr::parse(src).unwrap();
            let full = e.eval_matrix(&a, &[0.5]).unwrap().trace();
            let fast = e.trace_on(&a, &[0.5]).unwrap();
            assert!((full - fast).norm() < 1e-10, "{src}");
        }
    }
}
