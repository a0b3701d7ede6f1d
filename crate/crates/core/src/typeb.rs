//! Outliers and first-order corrections `(η, η′)` of spiked models.
//!
//! Additive model: `A_N + Σ θ_j E_jj` with `A_N` a GUE/GOE matrix (bulk law
//! the semicircle) or a Haar-rotated diagonal matrix (atomic bulk law).
//! Multiplicative model: `Σ^{1/2} W Σ^{1/2}` with `W` Wishart of ratio `λ`
//! and `Σ` carrying the spikes.
//!
//! In both cases the correction is the distributional derivative of
//! `h(t) = −(1/π) Σ_j Arg(1 − θ_j G(t + i0))` (additive) or
//! `h(t) = −(1/π) Σ_j Arg(1 + ψ(1/(t + i0))(1 − θ_j))` (multiplicative);
//! jumps of `h` are the outliers, each carrying mass one.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{
    mp_edges, Atom, GridDensity, GridFunction, Measure, SignedMeasure,
    SpectralMass, TypeBLaw, DEFAULT_GRID_POINTS,
};
use crate::subordination::multiplicative_omega2_mp;
use crate::transforms::{
    cauchy_extended, f_and_derivative, g_and_derivative_unchecked, psi_mp_unchecked, sqrt_pair,
};

/// Outlier search for the semicircle reaches this far past the edge.
const SEMICIRCLE_SEARCH: f64 = 50.0;
const ATOM_PAD: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SpikeSet {
    thetas: Vec<f64>,
}

impl SpikeSet {
    pub fn new(thetas: Vec<f64>) -> Result<Self> {
        if let Some(t) = thetas.iter().find(|t| !t.is_finite() || **t == 0.0) {
            return Err(Error::InvalidSpikes(format!("spike {t} must be finite and nonzero")));
        }
        Ok(SpikeSet { thetas })
    }

    pub fn empty() -> Self {
        SpikeSet::default()
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn count(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }

    /// `|θ| = 1/√2` is the critical value of the semicircle model and is excluded.
    pub fn check_semicircle(&self) -> Result<()> {
        match self.thetas.iter().find(|t| (t.abs() - FRAC_1_SQRT_2).abs() < 1e-12) {
            Some(t) => Err(Error::InvalidSpikes(format!("|θ| = 1/√2 is excluded (got {t})"))),
            None => Ok(()),
        }
    }

    /// The type B law `(δ₀, Σ_j δ_{θ_j} − N₀ δ₀)` of the perturbation.
    pub fn type_b_law(&self) -> TypeBLaw {
        let mut atoms: Vec<Atom> = self.thetas.iter().map(|&t| Atom::new(t, 1.0)).collect();
        if !self.is_empty() {
            atoms.push(Atom::new(0.0, -(self.count() as f64)));
        }
        TypeBLaw::new(Measure::dirac(0.0), SignedMeasure::new(atoms, None).expect("finite atoms"))
    }

    /// Inverse of [`SpikeSet::type_b_law`].
    pub fn from_type_b_law(law: &TypeBLaw) -> Result<Self> {
        if law.law != Measure::dirac(0.0) || law.correction.grid().is_some() {
            return Err(Error::Unsupported("spike law must be (δ₀, atoms)".into()));
        }
        let mut thetas = Vec::new();
        let mut at_zero = 0.0;
        for a in law.correction.atoms() {
            if a.loc == 0.0 {
                at_zero = a.weight;
                continue;
            }
            let m = a.weight.round();
            if m < 1.0 || (a.weight - m).abs() > 1e-9 {
                return Err(Error::InvalidSpikes(format!("spike weight {} is not a positive integer", a.weight)));
            }
            thetas.extend(std::iter::repeat(a.loc).take(m as usize));
        }
        if (at_zero + thetas.len() as f64).abs() > 1e-9 {
            return Err(Error::InvalidSpikes("spike law must carry −N₀ at 0".into()));
        }
        SpikeSet::new(thetas)
    }
}

impl TryFrom<Vec<f64>> for SpikeSet {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        SpikeSet::new(v)
    }
}

impl From<SpikeSet> for Vec<f64> {
    fn from(s: SpikeSet) -> Self {
        s.thetas
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutlierKind {
    Additive,
    Multiplicative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutlierRoot {
    pub theta: f64,
    pub location: f64,
    pub kind: OutlierKind,
}

fn semicircle_sqrt(z: Complex64) -> Complex64 {
    sqrt_pair(z, -SQRT_2, SQRT_2)
}

/// `g_σ(z) = 1/(4(z−√2)) + 1/(4(z+√2)) − 1/(2√(z²−2))`.
pub fn g_sigma(z: Complex64) -> Complex64 {
    0.25 / (z - SQRT_2) + 0.25 / (z + SQRT_2) - 0.5 / semicircle_sqrt(z)
}

/// Cauchy transform of the first-order correction of the additive model.
pub fn g_eta_prime_additive(base: &Measure, spikes: &SpikeSet, z: Complex64, goe: bool) -> Result<Complex64> {
    let (f, df) = f_and_derivative(base, z)?;
    let g = 1.0 / f;
    let mut sum = -g * spikes.count() as f64;
    for &theta in spikes.thetas() {
        let d = f - theta;
        if d.norm() < 1e-14 * (1.0 + theta.abs()) {
            return Err(Error::Pole { what: "1/(F − θ)", at: z });
        }
        sum += 1.0 / d;
    }
    let mut out = df * sum;
    if goe {
        if !base.is_semicircle() {
            return Err(Error::Unsupported("the GOE correction is defined for the semicircle base".into()));
        }
        if z.im == 0.0 && z.re.abs() == SQRT_2 {
            return Err(Error::Singular(z.re));
        }
        out += g_sigma(z);
    }
    Ok(out)
}

/// Root of a decreasing function on `(lo, hi)` by bisection.
fn bisect_decreasing(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn real_g(base: &Measure, t: f64) -> f64 {
    g_and_derivative_unchecked(base, Complex64::new(t, 0.0)).0.re
}

/// Real solutions of `G(θ′) = 1/θ_j` outside the support of the base law.
pub fn solve_outliers_additive(base: &Measure, spikes: &SpikeSet) -> Result<Vec<OutlierRoot>> {
    let mut out = Vec::new();
    if base.is_semicircle() {
        spikes.check_semicircle()?;
        for &theta in spikes.thetas() {
            if theta.abs() <= FRAC_1_SQRT_2 {
                continue;
            }
            // G is odd; solve on the right and mirror.
            let target = 1.0 / theta.abs();
            let r = bisect_decreasing(|t| real_g(base, t) - target, SQRT_2, SQRT_2 + SEMICIRCLE_SEARCH);
            out.push(OutlierRoot { theta, location: r.copysign(theta), kind: OutlierKind::Additive });
        }
        return Ok(out);
    }
    if !base.is_atomic() {
        return Err(Error::Unsupported("additive outliers need a semicircle or atomic base".into()));
    }
    let locs: Vec<f64> = base.atoms().iter().map(|a| a.loc).collect();
    let spread = locs[locs.len() - 1] - locs[0];
    for &theta in spikes.thetas() {
        let target = 1.0 / theta;
        let f = |t: f64| real_g(base, t) - target;
        let far = spread + theta.abs() + 1.0;
        let mut roots = Vec::new();
        // G runs from 0⁻ to −∞ left of the atoms, from +∞ to −∞ between
        // neighbours and from +∞ to 0⁺ on the right.
        if theta < 0.0 {
            roots.push(bisect_decreasing(f, locs[0] - far, locs[0] - ATOM_PAD));
        }
        for w in locs.windows(2) {
            roots.push(bisect_decreasing(f, w[0] + ATOM_PAD, w[1] - ATOM_PAD));
        }
        if theta > 0.0 {
            let last = locs[locs.len() - 1];
            roots.push(bisect_decreasing(f, last + ATOM_PAD, last + far));
        }
        out.extend(roots.into_iter().map(|location| OutlierRoot { theta, location, kind: OutlierKind::Additive }));
    }
    Ok(out)
}

/// `ν̂_θ(t)`, normalised so that its mass is 1 for `|θ| > 1/√2` and 0 otherwise.
pub fn nu_hat_density(theta: f64, t: f64) -> Result<f64> {
    if !(t.abs() < SQRT_2) {
        return Err(Error::Singular(t));
    }
    if theta == 0.0 || (theta.abs() - FRAC_1_SQRT_2).abs() < 1e-12 {
        return Err(Error::InvalidSpikes(format!("θ = {theta}")));
    }
    let num = theta * (t - 2.0 * theta);
    let den = (2.0 * theta * (t - theta) - 1.0) * (2.0 - t * t).sqrt();
    Ok(num / den / PI)
}

/// `ν̂_θ` on an arc grid of `n` nodes over `[−√2, √2]`.
pub fn nu_hat_measure(theta: f64, n: usize) -> Result<SignedMeasure> {
    nu_hat_density(theta, 0.0)?;
    let g = GridDensity::chebyshev(0.0, SQRT_2, n, |t| nu_hat_density(theta, t).unwrap_or(0.0))?;
    SignedMeasure::new(vec![], Some(g))
}

fn sigma_density(t: f64) -> f64 {
    -0.5 / (PI * (2.0 - t * t).sqrt())
}

/// `σ = ¼(δ_{−√2} + δ_{√2}) − (2π√(2−t²))⁻¹ dt`, the GOE correction.
pub fn sigma_measure(n: usize) -> Result<SignedMeasure> {
    let g = GridDensity::chebyshev(0.0, SQRT_2, n, sigma_density)?;
    SignedMeasure::new(vec![Atom::new(-SQRT_2, 0.25), Atom::new(SQRT_2, 0.25)], Some(g))
}

fn sigma_cdf(t: f64) -> f64 {
    if t < -SQRT_2 || t >= SQRT_2 {
        0.0
    } else if t == -SQRT_2 {
        0.25
    } else {
        -(t / SQRT_2).asin() / (2.0 * PI)
    }
}

/// `∫ t^k dσ`: zero for odd `k`, `2^{k/2−1} − C(k, k/2) 2^{−k/2−1}` for even `k`.
pub fn sigma_moment(k: usize) -> f64 {
    if k % 2 == 1 {
        return 0.0;
    }
    let half = (k / 2) as i32;
    let binom = (0..k / 2).fold(1.0, |acc, i| acc * (k - i) as f64 / (i + 1) as f64);
    2f64.powi(half - 1) - binom * 2f64.powi(-half - 1)
}

/// Closed-form correction `η′` of the additive model on `n` grid nodes.
pub fn additive_correction_with(base: &Measure, spikes: &SpikeSet, goe: bool, n: usize) -> Result<SignedMeasure> {
    let roots = solve_outliers_additive(base, spikes)?;
    let mut atoms: Vec<Atom> = roots.iter().map(|r| Atom::new(r.location, 1.0)).collect();
    if base.is_semicircle() {
        let thetas = spikes.thetas().to_vec();
        let g = GridDensity::chebyshev(0.0, SQRT_2, n, |t| {
            let s: f64 = thetas.iter().map(|&th| nu_hat_density(th, t).unwrap_or(0.0)).sum();
            -s + if goe { sigma_density(t) } else { 0.0 }
        })?;
        if goe {
            atoms.push(Atom::new(-SQRT_2, 0.25));
            atoms.push(Atom::new(SQRT_2, 0.25));
        }
        let grid = if spikes.is_empty() && !goe { None } else { Some(g) };
        return SignedMeasure::new(atoms, grid);
    }
    if goe {
        return Err(Error::Unsupported("the GOE correction is defined for the semicircle base".into()));
    }
    // Each spike removes one eigenvalue from every atom of the base law.
    let n0 = spikes.count() as f64;
    atoms.extend(base.atoms().iter().map(|a| Atom::new(a.loc, -n0)));
    SignedMeasure::new(atoms, None)
}

pub fn additive_correction(base: &Measure, spikes: &SpikeSet, goe: bool) -> Result<SignedMeasure> {
    additive_correction_with(base, spikes, goe, DEFAULT_GRID_POINTS)
}

/// `h(t) = −(1/π) Σ_j Arg(1 − θ_j G(t + i0))`, plus the distribution function of `σ`.
pub fn h_additive(base: &Measure, spikes: &SpikeSet, goe: bool, t: f64) -> f64 {
    let g = g_and_derivative_unchecked(base, Complex64::new(t, 1e-12)).0;
    let mut h: f64 = spikes.thetas().iter().map(|&th| -(1.0 - th * g).arg() / PI).sum();
    if goe {
        h += sigma_cdf(t);
    }
    h
}

/// Evenly spaced points covering `[lo, hi]`.
pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn covering_grid(lo: f64, hi: f64, extra: &[f64]) -> Vec<f64> {
    let lo = extra.iter().fold(lo, |a, &b| a.min(b)) - 0.5;
    let hi = extra.iter().fold(hi, |a, &b| a.max(b)) + 0.5;
    uniform_grid(lo, hi, DEFAULT_GRID_POINTS)
}

fn is_sigma(c: &SignedMeasure) -> bool {
    let atoms_ok = c.atoms().len() == 2
        && c.atoms().iter().all(|a| (a.loc.abs() - SQRT_2).abs() < 1e-12 && (a.weight - 0.25).abs() < 1e-12);
    atoms_ok
        && c.grid().is_some_and(|g| {
            g.points().iter().zip(g.density()).all(|(&t, &d)| (d - sigma_density(t)).abs() <= 1e-9 * d.abs().max(1.0))
        })
}

/// `(μ, μ′) ⊞_B (δ₀, Σ δ_{θ_j} − N₀ δ₀)` for `μ′ ∈ {0, σ}`.
pub fn typeb_additive(law1: &TypeBLaw, law2: &TypeBLaw, h_grid: Option<&[f64]>) -> Result<TypeBLaw> {
    let spikes = SpikeSet::from_type_b_law(law2)?;
    let goe = if law1.correction.is_zero() {
        false
    } else if is_sigma(&law1.correction) {
        true
    } else {
        return Err(Error::Unsupported("base correction must be 0 or σ".into()));
    };
    let base = &law1.law;
    let correction = additive_correction(base, &spikes, goe)?;
    let (lo, hi) = base.support();
    let locs: Vec<f64> = correction.atoms().iter().map(|a| a.loc).collect();
    let grid = match h_grid {
        Some(g) => g.to_vec(),
        None => covering_grid(lo, hi, &locs),
    };
    let h: Vec<f64> = grid.iter().map(|&t| h_additive(base, &spikes, goe, t)).collect();
    Ok(TypeBLaw { law: base.clone(), correction, h: Some(GridFunction::new(grid, h)?) })
}

/// Real roots of `1 + ψ(1/t)(1 − θ_j) = 0` off the Marchenko–Pastur support.
pub fn solve_outliers_multiplicative(lambda: f64, spikes: &SpikeSet) -> Result<Vec<OutlierRoot>> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidMeasure(format!("MP ratio {lambda}")));
    }
    if let Some(t) = spikes.thetas().iter().find(|t| **t <= 0.0) {
        return Err(Error::InvalidSpikes(format!("multiplicative spikes must be positive, got {t}")));
    }
    let (a, b) = mp_edges(lambda);
    let mut out = Vec::new();
    for &theta in spikes.thetas() {
        let f = |t: f64| 1.0 + psi_mp_unchecked(lambda, Complex64::new(t, 0.0)).re * (1.0 - theta);
        // Right of the bulk f runs from 1 + √λ(1−θ) up to 1.
        if f(b) < 0.0 {
            let mut hi = b + 1.0;
            while f(hi) < 0.0 {
                hi = b + 2.0 * (hi - b);
            }
            let r = bisect_decreasing(|t| -f(t), b, hi);
            out.push(OutlierRoot { theta, location: r, kind: OutlierKind::Multiplicative });
        }
        // Left of the bulk f runs from f(0⁺) > 0 down to 1 − √λ(1−θ).
        if a > 0.0 && f(a) < 0.0 {
            let r = bisect_decreasing(f, 0.0, a);
            out.push(OutlierRoot { theta, location: r, kind: OutlierKind::Multiplicative });
        }
    }
    Ok(out)
}

/// `h(t) = −(1/π) Σ_j Arg(1 + ψ(1/(t + i0))(1 − θ_j))` for the Wishart model.
pub fn h_multiplicative(lambda: f64, spikes: &SpikeSet, t: f64) -> f64 {
    let p = psi_mp_unchecked(lambda, Complex64::new(t, 0.0));
    spikes
        .thetas()
        .iter()
        .map(|&th| {
            let f = 1.0 + p * (1.0 - th);
            // Off the support f is real; the limit from above has Im f of sign (θ − 1).
            let arg = if f.im == 0.0 {
                if f.re >= 0.0 {
                    0.0
                } else {
                    PI.copysign(th - 1.0)
                }
            } else {
                f.arg()
            };
            -arg / PI
        })
        .sum()
}

/// Correction `η′` of the spiked Wishart model with `n` arc nodes on the bulk.
pub fn multiplicative_correction_with(lambda: f64, spikes: &SpikeSet, n: usize) -> Result<SignedMeasure> {
    let roots = solve_outliers_multiplicative(lambda, spikes)?;
    if spikes.is_empty() {
        return Ok(SignedMeasure::zero());
    }
    let atoms = roots.iter().map(|r| Atom::new(r.location, 1.0)).collect();
    let (a, b) = mp_edges(lambda);
    let skeleton = GridDensity::chebyshev_on(a, b, n, |_| 0.0)?;
    // The density times each node's weight is the increment of h across its
    // cell, so the bulk mass is exactly h(b) − h(a).
    let edges = skeleton.edges();
    let hv: Vec<f64> = edges.iter().map(|&t| h_multiplicative(lambda, spikes, t)).collect();
    let density = hv
        .windows(2)
        .zip(skeleton.weights())
        .map(|(d, w)| (d[1] - d[0]) / w)
        .collect();
    SignedMeasure::new(atoms, Some(skeleton.with_density(density)?))
}

pub fn multiplicative_correction(lambda: f64, spikes: &SpikeSet, grid: &[f64]) -> Result<SignedMeasure> {
    let (a, b) = mp_edges(lambda);
    if let (Some(&lo), Some(&hi)) = (grid.first(), grid.last()) {
        if lo > a || hi < b {
            return Err(Error::InvalidMeasure(format!("grid [{lo}, {hi}] does not cover the bulk [{a}, {b}]")));
        }
    }
    multiplicative_correction_with(lambda, spikes, DEFAULT_GRID_POINTS)
}

/// `(η, η′, h)` of the spiked Wishart model; `h` is tabulated on `grid`.
pub fn typeb_multiplicative(lambda: f64, spikes: &SpikeSet, grid: Option<&[f64]>) -> Result<TypeBLaw> {
    let law = Measure::marchenko_pastur(lambda)?;
    let correction = multiplicative_correction_with(lambda, spikes, DEFAULT_GRID_POINTS)?;
    let (a, b) = mp_edges(lambda);
    let locs: Vec<f64> = correction.atoms().iter().map(|x| x.loc).collect();
    let grid = match grid {
        Some(g) => g.to_vec(),
        None => covering_grid(a.min(0.0), b, &locs),
    };
    let h = grid.iter().map(|&t| h_multiplicative(lambda, spikes, t)).collect();
    Ok(TypeBLaw { law, correction, h: Some(GridFunction::new(grid, h)?) })
}

/// Residual of the defining equation of an outlier.
pub fn outlier_residual(base: Option<&Measure>, lambda: Option<f64>, root: &OutlierRoot) -> Result<f64> {
    match root.kind {
        OutlierKind::Additive => {
            let base = base.ok_or_else(|| Error::Unsupported("additive residual needs the base law".into()))?;
            let (g, _) = cauchy_extended(base, Complex64::new(root.location, 0.0))?;
            Ok((g - 1.0 / root.theta).norm())
        }
        OutlierKind::Multiplicative => {
            let lambda = lambda.ok_or_else(|| Error::Unsupported("multiplicative residual needs λ".into()))?;
            let w = multiplicative_omega2_mp(lambda, Complex64::new(1.0 / root.location, 0.0))?;
            Ok((w - 1.0 / root.theta).norm())
        }
    }
}

/// Whether `t` lies in the closed support of the continuous part or on an atom.
pub fn in_support(base: &Measure, t: f64) -> bool {
    base.continuous().support().is_some_and(|(lo, hi)| lo <= t && t <= hi)
        || base.atoms().iter().any(|a| a.loc == t)
}
