//! Subordination functions for free additive convolution, the free additive
//! convolution itself, and the subordinator of the spiked Wishart model.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::{merge_atoms, Atom, Continuous, GridDensity, Measure};
use crate::quad;
use crate::transforms::{g_and_derivative_unchecked, psi, InversionSchedule};

pub const MAX_ITER: usize = 500;
pub const RESIDUAL_TOL: f64 = 1e-10;

/// Smallest atom weight the convolution reports.
pub const ATOM_MIN_WEIGHT: f64 = 1e-3;

const CONTOUR_NODES: usize = 200;
const CELL_NODES: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SubordinationResult {
    pub omega1: Complex64,
    pub omega2: Complex64,
    pub g_eta: Complex64,
    /// Largest of `|G₁(ω₁) − G₂(ω₂)|/|G|` and `|ω₁ + ω₂ − z − 1/G|` relative to the
    /// size of its terms.
    pub residual: f64,
    pub iterations: usize,
}

struct Eval {
    w1: Complex64,
    w2: Complex64,
    g: Complex64,
    residual: f64,
    /// `T(ω₁) = z + h₂(ω₂)` and its derivative in ω₁.
    next: Complex64,
    dnext: Complex64,
}

fn project(w: Complex64, floor: f64) -> Complex64 {
    if w.im < floor {
        Complex64::new(w.re, floor)
    } else {
        w
    }
}

fn evaluate(mu1: &Measure, mu2: &Measure, z: Complex64, w1: Complex64) -> Eval {
    let (g1, dg1) = g_and_derivative_unchecked(mu1, w1);
    let f1 = 1.0 / g1;
    let dh1 = -dg1 * f1 * f1 - 1.0;
    let w2 = project(z + f1 - w1, z.im);
    let (g2, dg2) = g_and_derivative_unchecked(mu2, w2);
    let f2 = 1.0 / g2;
    let dh2 = -dg2 * f2 * f2 - 1.0;
    let g = (g1 + g2) * 0.5;
    // Relative, so that the tolerance means the same near atoms where |G| ~ 1/s.
    let scale = 1.0f64.max(w1.norm()).max(w2.norm()).max(z.norm()).max(1.0 / g.norm());
    let residual = ((g1 - g2).norm() / g.norm()).max((w1 + w2 - z - 1.0 / g).norm() / scale);
    Eval { w1, w2, g, residual, next: z + f2 - w2, dnext: dh2 * dh1 }
}

fn finite(e: &Eval) -> bool {
    e.residual.is_finite() && e.next.re.is_finite() && e.next.im.is_finite()
}

/// Solve `G₁(ω₁) = G₂(ω₂) = G(z)`, `ω₁ + ω₂ = z + 1/G(z)` at `im z > 0`.
pub fn additive_subordinators(mu1: &Measure, mu2: &Measure, z: Complex64) -> Result<SubordinationResult> {
    additive_subordinators_from(mu1, mu2, z, z)
}

/// Same as [`additive_subordinators`], starting the iteration at `omega1`.
pub fn additive_subordinators_from(
    mu1: &Measure,
    mu2: &Measure,
    z: Complex64,
    omega1: Complex64,
) -> Result<SubordinationResult> {
    if !(z.im > 0.0) || !z.re.is_finite() || !z.im.is_finite() {
        return Err(Error::NotUpperHalfPlane(z));
    }
    let mut cur = evaluate(mu1, mu2, z, project(omega1, z.im));
    if !finite(&cur) {
        cur = evaluate(mu1, mu2, z, z);
    }
    let mut damp = false;
    let mut prev = f64::INFINITY;
    for it in 1..=MAX_ITER {
        if cur.residual <= RESIDUAL_TOL {
            return Ok(polish(mu1, mu2, z, cur, it - 1));
        }
        // Newton on T(ω) − ω = 0, kept only if it stays in the half-plane and helps.
        let mut moved = false;
        let denom = cur.dnext - 1.0;
        if denom.norm() > 0.0 {
            let cand = cur.w1 - (cur.next - cur.w1) / denom;
            if cand.im >= z.im && cand.re.is_finite() {
                let e = evaluate(mu1, mu2, z, cand);
                if finite(&e) && e.w2.im >= z.im && e.residual < cur.residual {
                    cur = e;
                    moved = true;
                }
            }
        }
        if !moved {
            let mut w = project(cur.next, z.im);
            if damp {
                w = (w + cur.w1) * 0.5;
            }
            let e = evaluate(mu1, mu2, z, w);
            if !finite(&e) {
                return Err(Error::NonConvergence { iterations: it, residual: cur.residual });
            }
            cur = e;
        }
        if cur.residual > 0.999 * prev {
            damp = true;
        }
        prev = cur.residual;
    }
    if cur.residual <= RESIDUAL_TOL {
        return Ok(polish(mu1, mu2, z, cur, MAX_ITER));
    }
    Err(Error::NonConvergence { iterations: MAX_ITER, residual: cur.residual })
}

/// A few extra Newton steps so the result does not depend on the path taken.
fn polish(mu1: &Measure, mu2: &Measure, z: Complex64, mut cur: Eval, iterations: usize) -> SubordinationResult {
    for _ in 0..4 {
        let denom = cur.dnext - 1.0;
        if denom.norm() == 0.0 || cur.residual == 0.0 {
            break;
        }
        let cand = cur.w1 - (cur.next - cur.w1) / denom;
        if !(cand.im >= z.im) {
            break;
        }
        let e = evaluate(mu1, mu2, z, cand);
        if !(finite(&e) && e.w2.im >= z.im && e.residual <= cur.residual) {
            break;
        }
        cur = e;
    }
    SubordinationResult { omega1: cur.w1, omega2: cur.w2, g_eta: cur.g, residual: cur.residual, iterations }
}

/// `G_{μ₁⊞μ₂}(z)`.
pub fn convolution_cauchy(mu1: &Measure, mu2: &Measure, z: Complex64) -> Result<Complex64> {
    Ok(additive_subordinators(mu1, mu2, z)?.g_eta)
}

/// Output of [`free_additive_convolve`].
#[derive(Debug, Clone)]
pub struct Convolution {
    pub measure: Measure,
    /// Mass of the computed law from a contour integral of `G` (solver check).
    pub contour_mass: f64,
    /// Atom weights plus the summed cell masses, before rescaling.
    pub grid_mass: f64,
}

/// Total mass `−(1/π) Im ∫ G dz` along the half circle from `lo` to `hi`.
pub fn contour_mass(g: impl Fn(Complex64) -> Result<Complex64> + Sync, lo: f64, hi: f64) -> Result<f64> {
    let (c, r) = (0.5 * (lo + hi), 0.5 * (hi - lo));
    let (x, w) = quad::gauss_legendre(CONTOUR_NODES);
    let terms: Result<Vec<Complex64>> = x.par_iter().zip(&w).map(|(&x, &w)| {
            let (z, f) = arc_node(c, r, x, w);
            Ok(g(z)? * f)
        })
        .collect();
    Ok(arc_total(terms?))
}

/// Continuous mass of `[lo, hi]` for `μ₁ ⊞ μ₂` with `atoms` removed, by the
/// half-circle contour. Nodes are solved from the top of the arc outwards,
/// each warm-started from its neighbour, since cold starts next to the real
/// axis converge slowly.
fn cell_mass(mu1: &Measure, mu2: &Measure, atoms: &[Atom], lo: f64, hi: f64) -> Result<f64> {
    let (c, r) = (0.5 * (lo + hi), 0.5 * (hi - lo));
    let (x, w) = quad::gauss_legendre(CELL_NODES);
    let mid = CELL_NODES / 2;
    let order: Vec<usize> = (0..mid).rev().chain(mid..CELL_NODES).collect();
    let mut terms = vec![Complex64::new(0.0, 0.0); CELL_NODES];
    let mut start: Option<Complex64> = None;
    for (k, &i) in order.iter().enumerate() {
        if k == mid {
            start = None;
        }
        let (z, f) = arc_node(c, r, x[i], w[i]);
        let res = match start {
            Some(w0) => additive_subordinators_from(mu1, mu2, z, w0).or_else(|_| additive_subordinators(mu1, mu2, z)),
            None => additive_subordinators(mu1, mu2, z),
        }?;
        start = Some(res.omega1);
        terms[i] = atoms.iter().fold(res.g_eta, |acc, a| acc - a.weight / (z - a.loc)) * f;
    }
    Ok(arc_total(terms))
}

/// Node `z` on the arc and its weight in `∫ G dz`.
fn arc_node(c: f64, r: f64, x: f64, w: f64) -> (Complex64, Complex64) {
    let phi = 0.5 * std::f64::consts::PI * (x + 1.0);
    let e = Complex64::from_polar(1.0, -phi);
    (c - e * r, Complex64::new(0.0, r) * e * w)
}

fn arc_total(terms: Vec<Complex64>) -> f64 {
    let integral: Complex64 = terms.into_iter().sum::<Complex64>() * (0.5 * std::f64::consts::PI);
    -integral.im / std::f64::consts::PI
}

/// Free additive convolution on an ascending grid that covers the support.
pub fn free_additive_convolve(mu1: &Measure, mu2: &Measure, grid: &[f64]) -> Result<Convolution> {
    if grid.len() < 3 || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidMeasure("convolution grid must be ascending with ≥ 3 points".into()));
    }
    let sched = InversionSchedule::default();
    let s = sched.s_values().to_vec();
    let (s0, s1, s2) = (s[0], s[s.len() - 2], s[s.len() - 1]);
    let wide: Vec<Complex64> =
        grid.par_iter().map(|&t| convolution_cauchy(mu1, mu2, Complex64::new(t, s0))).collect::<Result<_>>()?;

    // Atom candidates are peaks of s·|Im G| at the widest s; after locating
    // the peak precisely, an atom must keep s·|Im G| roughly constant over
    // the two smallest s, which a density (∝ s) or an inverse square root
    // edge (∝ √s) does not.
    let thr = ATOM_MIN_WEIGHT / std::f64::consts::PI;
    let score = |i: usize| s0 * wide[i].im.abs();
    let mut atoms = Vec::new();
    for i in 0..grid.len() {
        let v = score(i);
        if v < thr {
            continue;
        }
        let left = i == 0 || score(i - 1) <= v;
        let right = i + 1 == grid.len() || score(i + 1) < v;
        if !(left && right) {
            continue;
        }
        let lo = grid[i.saturating_sub(1)];
        let hi = grid[(i + 1).min(grid.len() - 1)];
        if let Some(a) = refine_atom(mu1, mu2, lo, hi, s1, s2)? {
            atoms.push(a);
        }
    }
    let atoms = merge_atoms(atoms);

    // Cell masses from half-circle contours of G with the atoms removed.
    // Unlike point values of the inverted density, these stay finite at
    // inverse-square-root edges that fall on the grid.
    let n = grid.len();
    let mut edges = Vec::with_capacity(n + 1);
    edges.push(grid[0]);
    edges.extend(grid.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    edges.push(grid[n - 1]);
    let cell_mass: Vec<f64> = edges
        .par_windows(2)
        .map(|e| if e[1] > e[0] { cell_mass(mu1, mu2, &atoms, e[0], e[1]) } else { Ok(0.0) })
        .collect::<Result<_>>()?;
    let widths: Vec<f64> = edges.windows(2).map(|e| e[1] - e[0]).collect();
    let density = cell_mass.iter().zip(&widths).map(|(m, w)| if *w > 0.0 { (m / w).max(0.0) } else { 0.0 }).collect();

    let g = GridDensity::from_parts(grid.to_vec(), widths, edges, density)?;
    let atom_mass: f64 = atoms.iter().map(|a| a.weight).sum();
    let grid_mass = atom_mass + g.mass();
    let contour_mass = contour_mass(|z| convolution_cauchy(mu1, mu2, z), grid[0], grid[n - 1])?;
    let cont_target = 1.0 - atom_mass;
    let continuous = if g.mass() > 0.0 && cont_target > 1e-12 {
        let k = cont_target / g.mass();
        Continuous::Grid(g.map(|_, d| d * k))
    } else {
        Continuous::None
    };
    let atoms = if continuous == Continuous::None && atom_mass > 0.0 {
        atoms.iter().map(|a| Atom::new(a.loc, a.weight / atom_mass)).collect()
    } else {
        atoms
    };
    Ok(Convolution { measure: Measure::new(atoms, continuous)?, contour_mass, grid_mass })
}

/// Locate the peak of `|Im G(t + i s₂)|` inside `[lo, hi]` and decide whether it is an atom.
fn refine_atom(mu1: &Measure, mu2: &Measure, lo: f64, hi: f64, s1: f64, s2: f64) -> Result<Option<Atom>> {
    let peak = |t: f64| -> Result<f64> { Ok(convolution_cauchy(mu1, mu2, Complex64::new(t, s2))?.im.abs()) };
    let (mut a, mut b) = (lo, hi);
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (peak(c)?, peak(d)?);
    while b - a > 1e-3 * s2 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = peak(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = peak(d)?;
        }
    }
    let loc = 0.5 * (a + b);
    let v1 = s1 * convolution_cauchy(mu1, mu2, Complex64::new(loc, s1))?.im;
    let v2 = s2 * convolution_cauchy(mu1, mu2, Complex64::new(loc, s2))?.im;
    let thr = ATOM_MIN_WEIGHT / std::f64::consts::PI;
    if v1.abs() < thr || v2.abs() < thr || !(0.5..=2.0).contains(&(v2 / v1)) {
        return Ok(None);
    }
    // s·Im G(a + is) = −w − π s ρ(a) + O(s²): extrapolate linearly to s = 0.
    let w = -(v2 - s2 * (v1 - v2) / (s1 - s2));
    Ok(Some(Atom::new(loc, w)))
}

/// `ω₂(z) = ψ(z)/(1 + ψ(z))` for the Marchenko–Pastur law of ratio `λ`.
pub fn multiplicative_omega2_mp(lambda: f64, z: Complex64) -> Result<Complex64> {
    let mp = Measure::marchenko_pastur(lambda)?;
    let p = psi(&mp, z)?;
    let den = 1.0 + p;
    if den.norm() < 1e-300 {
        return Err(Error::Pole { what: "ω₂ = ψ/(1+ψ)", at: z });
    }
    Ok(p / den)
}
