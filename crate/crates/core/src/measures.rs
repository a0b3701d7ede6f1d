//! Probability and signed spectral measures.
//!
//! A [`Measure`] is a probability measure made of atoms plus at most one
//! continuous component, either a named analytic family or a gridded density.
//! A [`SignedMeasure`] has real-weighted atoms plus an optional gridded signed
//! density and is used for first-order corrections.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;

/// Largest moment degree accepted by [`SpectralMass::moment`].
pub const MAX_MOMENT_DEGREE: usize = 16;

/// Atoms closer than this are merged.
pub const ATOM_MERGE_TOL: f64 = 1e-9;

/// Default number of nodes for gridded continuous components.
pub const DEFAULT_GRID_POINTS: usize = 2048;

const MASS_TOL: f64 = 1e-9;
const ARC_NODES: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub loc: f64,
    pub weight: f64,
}

impl Atom {
    pub fn new(loc: f64, weight: f64) -> Self {
        Atom { loc, weight }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo > hi {
            return Err(Error::InvalidInterval { lo, hi });
        }
        Ok(Interval { lo, hi })
    }

    pub fn contains(&self, t: f64) -> bool {
        self.lo <= t && t <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Sample values of a density on a set of nodes, together with the
/// quadrature weight of each node and the cell each node stands for.
///
/// Two layouts are produced: trapezoid grids (weights equal to cell widths,
/// cells bounded by midpoints) and Chebyshev arc grids, which put midpoint
/// rule nodes in the angle variable of `t = c − r cos φ`. The arc layout
/// integrates densities with square-root or inverse-square-root edges to
/// spectral accuracy and never samples the edge itself.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    t: Vec<f64>,
    weights: Vec<f64>,
    edges: Vec<f64>,
    density: Vec<f64>,
}

fn strictly_ascending(t: &[f64]) -> bool {
    t.windows(2).all(|w| w[0] < w[1]) && t.iter().all(|x| x.is_finite())
}

impl GridDensity {
    /// Trapezoid-rule grid on arbitrary strictly ascending nodes.
    pub fn trapezoid(t: Vec<f64>, density: Vec<f64>) -> Result<Self> {
        if t.len() < 2 || t.len() != density.len() {
            return Err(Error::InvalidMeasure(
                "grid needs at least two points and one density value per point".into(),
            ));
        }
        if !strictly_ascending(&t) {
            return Err(Error::InvalidMeasure("grid points must be strictly ascending".into()));
        }
        let n = t.len();
        let mut edges = Vec::with_capacity(n + 1);
        edges.push(t[0]);
        for w in t.windows(2) {
            edges.push(0.5 * (w[0] + w[1]));
        }
        edges.push(t[n - 1]);
        let weights = edges.windows(2).map(|e| e[1] - e[0]).collect();
        Self::from_parts(t, weights, edges, density)
    }

    /// Arc grid on `[c − r, c + r]` with `n` nodes, sampling `f` at each node.
    pub fn chebyshev(c: f64, r: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        if !(r > 0.0) || n < 2 {
            return Err(Error::InvalidMeasure("arc grid needs r > 0 and n ≥ 2".into()));
        }
        let h = PI / n as f64;
        let t: Vec<f64> = (0..n).map(|i| c - r * (h * (i as f64 + 0.5)).cos()).collect();
        let weights = (0..n).map(|i| h * r * (h * (i as f64 + 0.5)).sin()).collect();
        let edges = (0..=n).map(|k| c - r * (h * k as f64).cos()).collect();
        let density = t.iter().map(|&x| f(x)).collect();
        Self::from_parts(t, weights, edges, density)
    }

    /// Arc grid over `[lo, hi]`.
    pub fn chebyshev_on(lo: f64, hi: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::chebyshev(0.5 * (lo + hi), 0.5 * (hi - lo), n, f)
    }

    pub fn from_parts(
        t: Vec<f64>,
        weights: Vec<f64>,
        edges: Vec<f64>,
        density: Vec<f64>,
    ) -> Result<Self> {
        let n = t.len();
        if n == 0 || weights.len() != n || density.len() != n || edges.len() != n + 1 {
            return Err(Error::InvalidMeasure("inconsistent grid lengths".into()));
        }
        if !strictly_ascending(&t) {
            return Err(Error::InvalidMeasure("grid points must be strictly ascending".into()));
        }
        if edges.windows(2).any(|e| !(e[0] <= e[1])) || weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidMeasure("grid cells must be ordered with nonnegative weights".into()));
        }
        if let Some(bad) = density.iter().find(|d| !d.is_finite()) {
            return Err(Error::NonFinite(format!("grid density value {bad}")));
        }
        Ok(GridDensity { t, weights, edges, density })
    }

    pub fn points(&self) -> &[f64] {
        &self.t
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn lo(&self) -> f64 {
        self.edges[0]
    }

    pub fn hi(&self) -> f64 {
        self.edges[self.edges.len() - 1]
    }

    /// Same nodes, new density values.
    pub fn with_density(&self, density: Vec<f64>) -> Result<Self> {
        Self::from_parts(self.t.clone(), self.weights.clone(), self.edges.clone(), density)
    }

    pub fn map(&self, f: impl Fn(f64, f64) -> f64) -> Self {
        let density = self.t.iter().zip(&self.density).map(|(&t, &d)| f(t, d)).collect();
        GridDensity { density, ..self.clone() }
    }

    pub fn same_nodes(&self, other: &GridDensity) -> bool {
        self.t == other.t && self.weights == other.weights
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.t
            .iter()
            .zip(&self.weights)
            .zip(&self.density)
            .map(|((&t, &w), &d)| w * d * f(t))
            .sum()
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().zip(&self.density).map(|(w, d)| w * d).sum()
    }

    pub fn abs_mass(&self) -> f64 {
        self.weights.iter().zip(&self.density).map(|(w, d)| w * d.abs()).sum()
    }

    /// Mass of `[lo, hi]`, each cell contributing in proportion to its overlap.
    pub fn mass_in(&self, lo: f64, hi: f64) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.t.len() {
            let (a, b) = (self.edges[i], self.edges[i + 1]);
            let q = self.weights[i] * self.density[i];
            if b <= a {
                if lo <= a && a <= hi {
                    acc += q;
                }
                continue;
            }
            let overlap = (b.min(hi) - a.max(lo)).max(0.0);
            acc += q * overlap / (b - a);
        }
        acc
    }

    /// Linear interpolation of the density, zero outside `[lo, hi]`.
    pub fn interpolate(&self, x: f64) -> f64 {
        let t = &self.t;
        let n = t.len();
        if x < self.lo() || x > self.hi() {
            return 0.0;
        }
        if x <= t[0] {
            return self.density[0];
        }
        if x >= t[n - 1] {
            return self.density[n - 1];
        }
        let j = t.partition_point(|&p| p <= x);
        let (a, b) = (t[j - 1], t[j]);
        let s = (x - a) / (b - a);
        self.density[j - 1] * (1.0 - s) + self.density[j] * s
    }
}

/// Semicircle density on `[−√2, √2]`.
pub fn semicircle_density(t: f64) -> f64 {
    let q = 2.0 - t * t;
    if q <= 0.0 {
        0.0
    } else {
        q.sqrt() / PI
    }
}

pub fn semicircle_cdf(t: f64) -> f64 {
    if t <= -SQRT_2 {
        return 0.0;
    }
    if t >= SQRT_2 {
        return 1.0;
    }
    0.5 + (0.5 * t * (2.0 - t * t).sqrt() + (t / SQRT_2).asin()) / PI
}

/// Support edges `((1−√λ)², (1+√λ)²)` of the Marchenko–Pastur law.
pub fn mp_edges(lambda: f64) -> (f64, f64) {
    let s = lambda.sqrt();
    ((1.0 - s).powi(2), (1.0 + s).powi(2))
}

/// Absolutely continuous part of the Marchenko–Pastur density.
pub fn mp_density(lambda: f64, t: f64) -> f64 {
    let (a, b) = mp_edges(lambda);
    if t <= a || t >= b || t <= 0.0 {
        return 0.0;
    }
    ((t - a) * (b - t)).sqrt() / (2.0 * PI * t)
}

fn binomial(n: u64, k: u64) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn catalan(n: u64) -> f64 {
    binomial(2 * n, n) / (n + 1) as f64
}

fn semicircle_moment(k: usize) -> f64 {
    if k % 2 == 1 {
        0.0
    } else {
        catalan(k as u64 / 2) * 0.5f64.powi(k as i32 / 2)
    }
}

/// `k`-th moment of the free Poisson law (Narayana polynomial in `λ`).
pub fn mp_moment(lambda: f64, k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let k = k as u64;
    (1..=k)
        .map(|j| binomial(k, j) * binomial(k, j - 1) / k as f64 * lambda.powi(j as i32))
        .sum()
}

fn check_degree(k: usize) -> Result<()> {
    if k > MAX_MOMENT_DEGREE {
        Err(Error::DegreeOverflow { degree: k, max: MAX_MOMENT_DEGREE })
    } else {
        Ok(())
    }
}

/// Sort atoms and merge those closer than [`ATOM_MERGE_TOL`].
pub fn merge_atoms(mut atoms: Vec<Atom>) -> Vec<Atom> {
    atoms.sort_by(|a, b| a.loc.total_cmp(&b.loc));
    let mut out: Vec<Atom> = Vec::with_capacity(atoms.len());
    for a in atoms {
        match out.last_mut() {
            Some(last) if (a.loc - last.loc).abs() < ATOM_MERGE_TOL => last.weight += a.weight,
            _ => out.push(a),
        }
    }
    out.retain(|a| a.weight != 0.0);
    out
}

/// Shared integration interface of [`Measure`] and [`SignedMeasure`].
pub trait SpectralMass {
    fn atoms(&self) -> &[Atom];

    /// `∫ f` over the continuous part.
    fn integrate_continuous(&self, f: &dyn Fn(f64) -> f64) -> f64;

    /// Mass of the continuous part inside `iv`.
    fn continuous_mass_in(&self, iv: &Interval) -> f64;

    fn total_mass(&self) -> f64 {
        self.atoms().iter().map(|a| a.weight).sum::<f64>() + self.integrate_continuous(&|_| 1.0)
    }

    fn moment(&self, k: usize) -> Result<f64> {
        check_degree(k)?;
        let atoms: f64 = self.atoms().iter().map(|a| a.weight * a.loc.powi(k as i32)).sum();
        Ok(atoms + self.integrate_continuous(&|t| t.powi(k as i32)))
    }

    /// Signed mass of `[lo, hi]`; atoms on the endpoints count fully.
    fn mass_in(&self, iv: &Interval) -> f64 {
        let atoms: f64 = self.atoms().iter().filter(|a| iv.contains(a.loc)).map(|a| a.weight).sum();
        atoms + self.continuous_mass_in(iv)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Continuous {
    None,
    Semicircle,
    MarchenkoPastur { lambda: f64 },
    Grid(GridDensity),
}

impl Continuous {
    pub fn density(&self, t: f64) -> f64 {
        match self {
            Continuous::None => 0.0,
            Continuous::Semicircle => semicircle_density(t),
            Continuous::MarchenkoPastur { lambda } => mp_density(*lambda, t),
            Continuous::Grid(g) => g.interpolate(t),
        }
    }

    /// Closed support `[lo, hi]` of the continuous part, if any.
    pub fn support(&self) -> Option<(f64, f64)> {
        match self {
            Continuous::None => None,
            Continuous::Semicircle => Some((-SQRT_2, SQRT_2)),
            Continuous::MarchenkoPastur { lambda } => Some(mp_edges(*lambda)),
            Continuous::Grid(g) => Some((g.lo(), g.hi())),
        }
    }

    fn integrate(&self, f: &dyn Fn(f64) -> f64) -> f64 {
        match self {
            Continuous::None => 0.0,
            Continuous::Semicircle => {
                // t = −√2 cos φ turns √(2 − t²) dt into 2 sin²φ dφ.
                quad::arc_integral(|t| semicircle_density(t) * f(t), 0.0, SQRT_2, -SQRT_2, SQRT_2, ARC_NODES)
            }
            Continuous::MarchenkoPastur { lambda } => {
                let (a, b) = mp_edges(*lambda);
                quad::arc_integral(
                    |t| mp_density(*lambda, t) * f(t),
                    0.5 * (a + b),
                    0.5 * (b - a),
                    a,
                    b,
                    ARC_NODES,
                )
            }
            Continuous::Grid(g) => g.integrate(f),
        }
    }

    fn mass_in(&self, iv: &Interval) -> f64 {
        match self {
            Continuous::None => 0.0,
            Continuous::Semicircle => semicircle_cdf(iv.hi) - semicircle_cdf(iv.lo),
            Continuous::MarchenkoPastur { lambda } => {
                let (a, b) = mp_edges(*lambda);
                quad::arc_integral(
                    |t| mp_density(*lambda, t),
                    0.5 * (a + b),
                    0.5 * (b - a),
                    iv.lo,
                    iv.hi,
                    ARC_NODES,
                )
            }
            Continuous::Grid(g) => g.mass_in(iv.lo, iv.hi),
        }
    }

    fn moment(&self, k: usize) -> f64 {
        match self {
            Continuous::Semicircle => semicircle_moment(k),
            Continuous::MarchenkoPastur { lambda } if k > 0 => mp_moment(*lambda, k),
            Continuous::MarchenkoPastur { lambda } => lambda.min(1.0),
            _ => self.integrate(&|t| t.powi(k as i32)),
        }
    }
}

/// Probability measure: atoms plus one continuous component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureRepr", into = "MeasureRepr")]
pub struct Measure {
    atoms: Vec<Atom>,
    continuous: Continuous,
}

impl Measure {
    pub fn new(atoms: Vec<Atom>, continuous: Continuous) -> Result<Self> {
        if atoms.iter().any(|a| !(a.weight > 0.0) || !a.loc.is_finite()) {
            return Err(Error::InvalidMeasure("atom weights must be positive and finite".into()));
        }
        match &continuous {
            Continuous::MarchenkoPastur { lambda } => {
                if !(*lambda > 0.0 && lambda.is_finite()) {
                    return Err(Error::InvalidMeasure(format!("MP ratio must be positive, got {lambda}")));
                }
                if *lambda < 1.0 {
                    let w0: f64 = atoms.iter().filter(|a| a.loc.abs() < ATOM_MERGE_TOL).map(|a| a.weight).sum();
                    if (w0 - (1.0 - lambda)).abs() > MASS_TOL {
                        return Err(Error::InvalidMeasure(format!(
                            "MP(λ={lambda}) requires an atom of weight {} at 0",
                            1.0 - lambda
                        )));
                    }
                }
            }
            Continuous::Grid(g) => {
                if g.density().iter().any(|d| *d < 0.0) {
                    return Err(Error::InvalidMeasure("grid density must be nonnegative".into()));
                }
            }
            _ => {}
        }
        let m = Measure { atoms: merge_atoms(atoms), continuous };
        let mass = m.total_mass();
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidMeasure(format!("total mass {mass} differs from 1")));
        }
        Ok(m)
    }

    pub fn semicircle() -> Self {
        Measure { atoms: vec![], continuous: Continuous::Semicircle }
    }

    pub fn marchenko_pastur(lambda: f64) -> Result<Self> {
        let atoms = if lambda < 1.0 { vec![Atom::new(0.0, 1.0 - lambda)] } else { vec![] };
        Self::new(atoms, Continuous::MarchenkoPastur { lambda })
    }

    pub fn dirac(c: f64) -> Self {
        Measure { atoms: vec![Atom::new(c, 1.0)], continuous: Continuous::None }
    }

    pub fn atomic(atoms: Vec<Atom>) -> Result<Self> {
        Self::new(atoms, Continuous::None)
    }

    /// Uniform atoms on the given locations (with multiplicity).
    pub fn uniform_atoms(locs: &[f64]) -> Result<Self> {
        if locs.is_empty() {
            return Err(Error::InvalidMeasure("no atom locations".into()));
        }
        let w = 1.0 / locs.len() as f64;
        Self::atomic(locs.iter().map(|&l| Atom::new(l, w)).collect())
    }

    pub fn continuous(&self) -> &Continuous {
        &self.continuous
    }

    pub fn is_atomic(&self) -> bool {
        matches!(self.continuous, Continuous::None)
    }

    pub fn is_semicircle(&self) -> bool {
        self.atoms.is_empty() && matches!(self.continuous, Continuous::Semicircle)
    }

    /// Density of the continuous part at `t`.
    pub fn density(&self, t: f64) -> f64 {
        self.continuous.density(t)
    }

    /// Smallest closed interval containing the support.
    pub fn support(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for a in &self.atoms {
            lo = lo.min(a.loc);
            hi = hi.max(a.loc);
        }
        if let Some((a, b)) = self.continuous.support() {
            lo = lo.min(a);
            hi = hi.max(b);
        }
        (lo, hi)
    }

    pub fn support_radius(&self) -> f64 {
        let (lo, hi) = self.support();
        lo.abs().max(hi.abs())
    }

    /// Same measure as a signed measure (named families are gridded on `n` arc nodes).
    pub fn to_signed(&self, n: usize) -> Result<SignedMeasure> {
        let grid = match &self.continuous {
            Continuous::None => None,
            Continuous::Grid(g) => Some(g.clone()),
            c => {
                let (lo, hi) = c.support().expect("named family has a support");
                Some(GridDensity::chebyshev_on(lo, hi, n, |t| c.density(t))?)
            }
        };
        SignedMeasure::new(self.atoms.clone(), grid)
    }
}

impl SpectralMass for Measure {
    fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    fn integrate_continuous(&self, f: &dyn Fn(f64) -> f64) -> f64 {
        self.continuous.integrate(f)
    }

    fn continuous_mass_in(&self, iv: &Interval) -> f64 {
        self.continuous.mass_in(iv)
    }

    fn moment(&self, k: usize) -> Result<f64> {
        check_degree(k)?;
        let atoms: f64 = self.atoms.iter().map(|a| a.weight * a.loc.powi(k as i32)).sum();
        Ok(atoms + self.continuous.moment(k))
    }
}

/// Real-weighted atoms plus an optional gridded signed density.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "MeasureRepr", into = "MeasureRepr")]
pub struct SignedMeasure {
    atoms: Vec<Atom>,
    grid: Option<GridDensity>,
}

impl SignedMeasure {
    pub fn new(atoms: Vec<Atom>, grid: Option<GridDensity>) -> Result<Self> {
        if atoms.iter().any(|a| !a.loc.is_finite() || !a.weight.is_finite()) {
            return Err(Error::InvalidMeasure("atoms must be finite".into()));
        }
        Ok(SignedMeasure { atoms: merge_atoms(atoms), grid })
    }

    pub fn zero() -> Self {
        SignedMeasure::default()
    }

    pub fn grid(&self) -> Option<&GridDensity> {
        self.grid.as_ref()
    }

    pub fn is_zero(&self) -> bool {
        self.atoms.is_empty() && self.grid.as_ref().map_or(true, |g| g.density().iter().all(|d| *d == 0.0))
    }

    /// Density of the grid part at `t` (linear interpolation).
    pub fn density(&self, t: f64) -> f64 {
        self.grid.as_ref().map_or(0.0, |g| g.interpolate(t))
    }

    pub fn scale(&self, a: f64) -> Self {
        SignedMeasure {
            atoms: merge_atoms(self.atoms.iter().map(|x| Atom::new(x.loc, a * x.weight)).collect()),
            grid: self.grid.as_ref().map(|g| g.map(|_, d| a * d)),
        }
    }

    /// Sum of two signed measures. Grid parts must share their nodes.
    pub fn add(&self, other: &SignedMeasure) -> Result<Self> {
        let grid = match (&self.grid, &other.grid) {
            (None, g) | (g, None) => g.clone(),
            (Some(a), Some(b)) => {
                if !a.same_nodes(b) {
                    return Err(Error::Unsupported("adding signed measures on different grids".into()));
                }
                let d = a.density().iter().zip(b.density()).map(|(x, y)| x + y).collect();
                Some(a.with_density(d)?)
            }
        };
        let mut atoms = self.atoms.clone();
        atoms.extend_from_slice(&other.atoms);
        SignedMeasure::new(atoms, grid)
    }

    pub fn abs_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight.abs()).sum::<f64>()
            + self.grid.as_ref().map_or(0.0, |g| g.abs_mass())
    }
}

impl SpectralMass for SignedMeasure {
    fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    fn integrate_continuous(&self, f: &dyn Fn(f64) -> f64) -> f64 {
        self.grid.as_ref().map_or(0.0, |g| g.integrate(f))
    }

    fn continuous_mass_in(&self, iv: &Interval) -> f64 {
        self.grid.as_ref().map_or(0.0, |g| g.mass_in(iv.lo, iv.hi))
    }
}

/// Tabulated function `h(t)` on ascending points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub t: Vec<f64>,
    pub h: Vec<f64>,
}

impl GridFunction {
    pub fn new(t: Vec<f64>, h: Vec<f64>) -> Result<Self> {
        if t.len() != h.len() || !strictly_ascending(&t) {
            return Err(Error::InvalidMeasure("h grid must be ascending with one value per point".into()));
        }
        Ok(GridFunction { t, h })
    }

    /// Central-difference derivative at interior points (one-sided at the ends).
    pub fn derivative(&self) -> Vec<f64> {
        let (t, h) = (&self.t, &self.h);
        let n = t.len();
        (0..n)
            .map(|i| {
                let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
                if a == b {
                    0.0
                } else {
                    (h[b] - h[a]) / (t[b] - t[a])
                }
            })
            .collect()
    }
}

/// Bulk law together with its first-order correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeBLaw {
    pub law: Measure,
    pub correction: SignedMeasure,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<GridFunction>,
}

impl TypeBLaw {
    pub fn new(law: Measure, correction: SignedMeasure) -> Self {
        TypeBLaw { law, correction, h: None }
    }

    /// `(μ, 0)`.
    pub fn trivial(law: Measure) -> Self {
        TypeBLaw::new(law, SignedMeasure::zero())
    }

    /// Predicted mean eigenvalue count of `iv` for matrices of size `n`.
    pub fn expected_count(&self, n: usize, iv: &Interval) -> f64 {
        n as f64 * self.law.mass_in(iv) + self.correction.mass_in(iv)
    }
}

// JSON form shared by Measure and SignedMeasure.

#[derive(Serialize, Deserialize)]
struct GridRepr {
    t: Vec<f64>,
    density: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    edges: Option<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct MeasureRepr {
    atoms: Vec<(f64, f64)>,
    family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    grid: Option<GridRepr>,
}

impl From<&GridDensity> for GridRepr {
    fn from(g: &GridDensity) -> Self {
        GridRepr {
            t: g.t.clone(),
            density: g.density.clone(),
            weights: Some(g.weights.clone()),
            edges: Some(g.edges.clone()),
        }
    }
}

impl TryFrom<GridRepr> for GridDensity {
    type Error = Error;

    fn try_from(r: GridRepr) -> Result<Self> {
        match (r.weights, r.edges) {
            (Some(w), Some(e)) => GridDensity::from_parts(r.t, w, e, r.density),
            (None, None) => GridDensity::trapezoid(r.t, r.density),
            _ => Err(Error::InvalidMeasure("grid weights and edges must be given together".into())),
        }
    }
}

impl From<Measure> for MeasureRepr {
    fn from(m: Measure) -> Self {
        let atoms = m.atoms.iter().map(|a| (a.loc, a.weight)).collect();
        let (family, lambda, grid) = match &m.continuous {
            Continuous::None => ("none", None, None),
            Continuous::Semicircle => ("semicircle", None, None),
            Continuous::MarchenkoPastur { lambda } => ("mp", Some(*lambda), None),
            Continuous::Grid(g) => ("grid", None, Some(GridRepr::from(g))),
        };
        MeasureRepr { atoms, family: family.into(), lambda, grid }
    }
}

impl TryFrom<MeasureRepr> for Measure {
    type Error = Error;

    fn try_from(r: MeasureRepr) -> Result<Self> {
        let atoms = r.atoms.into_iter().map(|(l, w)| Atom::new(l, w)).collect();
        let continuous = match (r.family.as_str(), r.lambda, r.grid) {
            ("none", _, _) => Continuous::None,
            ("semicircle", _, _) => Continuous::Semicircle,
            ("mp", Some(lambda), _) => Continuous::MarchenkoPastur { lambda },
            ("grid", _, Some(g)) => Continuous::Grid(g.try_into()?),
            (f, _, _) => return Err(Error::InvalidMeasure(format!("bad or incomplete family '{f}'"))),
        };
        Measure::new(atoms, continuous)
    }
}

impl From<SignedMeasure> for MeasureRepr {
    fn from(m: SignedMeasure) -> Self {
        MeasureRepr {
            atoms: m.atoms.iter().map(|a| (a.loc, a.weight)).collect(),
            family: if m.grid.is_some() { "grid" } else { "none" }.into(),
            lambda: None,
            grid: m.grid.as_ref().map(GridRepr::from),
        }
    }
}

impl TryFrom<MeasureRepr> for SignedMeasure {
    type Error = Error;

    fn try_from(r: MeasureRepr) -> Result<Self> {
        let atoms = r.atoms.into_iter().map(|(l, w)| Atom::new(l, w)).collect();
        let grid = match (r.family.as_str(), r.grid) {
            ("none", _) => None,
            ("grid", Some(g)) => Some(g.try_into()?),
            (f, _) => {
                return Err(Error::InvalidMeasure(format!("signed measures carry grids only, got '{f}'")))
            }
        };
        SignedMeasure::new(atoms, grid)
    }
}
