//! Cauchy, reciprocal Cauchy and ψ transforms, their real-axis boundary
//! values for the named families, and Stieltjes inversion.
//!
//! Square roots of the form `√((z−a)(z−b))` are always evaluated as the
//! product `√(z−a)·√(z−b)` of principal roots. For `z` in the upper
//! half-plane that product lies in the upper half-plane and behaves like
//! `z` at infinity, which is the branch giving `G(z) ~ 1/z`. On the real
//! axis the limit from above is written out explicitly.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::measures::{mp_edges, Continuous, GridDensity, Measure, SpectralMass};

pub type ComplexPoint = Complex64;

const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Decreasing imaginary offsets used to approach the real axis.
#[derive(Debug, Clone, PartialEq)]
pub struct InversionSchedule {
    s_values: Vec<f64>,
    order: u8,
}

impl Default for InversionSchedule {
    fn default() -> Self {
        InversionSchedule { s_values: vec![1e-2, 1e-3, 1e-4], order: 1 }
    }
}

impl InversionSchedule {
    pub fn new(s_values: Vec<f64>, order: u8) -> Result<Self> {
        if s_values.is_empty() || s_values.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidSchedule("s values must be positive and finite".into()));
        }
        if s_values.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::InvalidSchedule("s values must be strictly descending".into()));
        }
        if order > 1 {
            return Err(Error::InvalidSchedule(format!("extrapolation order {order} not in {{0, 1}}")));
        }
        if order == 1 && s_values.len() < 2 {
            return Err(Error::InvalidSchedule("linear extrapolation needs two s values".into()));
        }
        Ok(InversionSchedule { s_values, order })
    }

    pub fn s_values(&self) -> &[f64] {
        &self.s_values
    }

    pub fn order(&self) -> u8 {
        self.order
    }

    /// Extrapolate values sampled at `s_values` to `s = 0`.
    pub fn extrapolate(&self, v: &[Complex64]) -> Complex64 {
        let n = self.s_values.len();
        let last = v[n - 1];
        if self.order == 0 {
            return last;
        }
        let (s1, s2) = (self.s_values[n - 2], self.s_values[n - 1]);
        last - (v[n - 2] - last) * (s2 / (s1 - s2))
    }
}

/// `√(z−a)·√(z−b)` for `im z > 0`, and its limit from above for real `z`.
pub fn sqrt_pair(z: Complex64, a: f64, b: f64) -> Complex64 {
    if z.im == 0.0 {
        let t = z.re;
        let p = ((t - a) * (t - b)).abs().sqrt();
        return if t >= b {
            Complex64::new(p, 0.0)
        } else if t <= a {
            Complex64::new(-p, 0.0)
        } else {
            Complex64::new(0.0, p)
        };
    }
    (z - a).sqrt() * (z - b).sqrt()
}

fn check_upper(z: Complex64) -> Result<()> {
    if z.im > 0.0 && z.re.is_finite() && z.im.is_finite() {
        Ok(())
    } else {
        Err(Error::NotUpperHalfPlane(z))
    }
}

/// Cauchy transform and its derivative of the continuous part, for `z`
/// in the closed upper half-plane. Real `z` means the limit from above.
fn continuous_g(c: &Continuous, z: Complex64) -> (Complex64, Complex64) {
    match c {
        Continuous::None => (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)),
        Continuous::Semicircle => {
            let s = sqrt_pair(z, -SQRT_2, SQRT_2);
            let g = 2.0 / (z + s);
            (g, -g * g * (1.0 + z / s) * 0.5)
        }
        Continuous::MarchenkoPastur { lambda } => {
            // Full free Poisson law, including its atom at 0 when λ < 1.
            let (a, b) = mp_edges(*lambda);
            let s = sqrt_pair(z, a, b);
            let g = 2.0 / (z + 1.0 - lambda + s);
            let ds = (z - 1.0 - lambda) / s;
            (g, -g * g * (1.0 + ds) * 0.5)
        }
        Continuous::Grid(grid) => grid_g(grid, z),
    }
}

/// `∫ f(t)/(z−t) dt` for the linear interpolant `f` of a gridded density,
/// held constant from the outermost nodes to the grid edges. Integrating
/// exactly keeps boundary values meaningful below the node spacing.
fn grid_g(grid: &GridDensity, z: Complex64) -> (Complex64, Complex64) {
    let (t, d) = (grid.points(), grid.density());
    let mut g = Complex64::new(0.0, 0.0);
    let mut dg = Complex64::new(0.0, 0.0);
    // f = α + βt on [a, b]: ∫ = (α + βz)L − β(b − a), L = log(z−a) − log(z−b).
    let mut piece = |a: f64, b: f64, fa: f64, fb: f64| {
        if b <= a {
            return;
        }
        let beta = (fb - fa) / (b - a);
        let alpha = fa - beta * a;
        let (za, zb) = (z - a, z - b);
        let l = za.ln() - zb.ln();
        let lin = alpha + beta * z;
        g += lin * l - beta * (b - a);
        dg += beta * l + lin * (1.0 / za - 1.0 / zb);
    };
    let n = t.len();
    piece(grid.lo(), t[0], d[0], d[0]);
    for i in 0..n - 1 {
        piece(t[i], t[i + 1], d[i], d[i + 1]);
    }
    piece(t[n - 1], grid.hi(), d[n - 1], d[n - 1]);
    (g, dg)
}

/// `(G, G′)` on the closed upper half-plane (no argument checks).
///
/// For a Marchenko–Pastur measure the closed form already contains the
/// atom at 0, so explicit atoms are skipped there.
pub(crate) fn g_and_derivative_unchecked(m: &Measure, z: Complex64) -> (Complex64, Complex64) {
    let (mut g, mut dg) = continuous_g(m.continuous(), z);
    if !matches!(m.continuous(), Continuous::MarchenkoPastur { .. }) {
        for a in m.atoms() {
            let r = 1.0 / (z - a.loc);
            g += r * a.weight;
            dg -= r * r * a.weight;
        }
    }
    (g, dg)
}

/// `G(z) = ∫ 1/(z−t) dm(t)` for `im z > 0`.
pub fn cauchy(m: &Measure, z: Complex64) -> Result<Complex64> {
    check_upper(z)?;
    Ok(g_and_derivative_unchecked(m, z).0)
}

/// `G′(z)` for `im z > 0`.
pub fn cauchy_derivative(m: &Measure, z: Complex64) -> Result<Complex64> {
    check_upper(z)?;
    Ok(g_and_derivative_unchecked(m, z).1)
}

fn check_real_point(m: &Measure, t: f64) -> Result<()> {
    if !t.is_finite() {
        return Err(Error::NonFinite(format!("t = {t}")));
    }
    if m.atoms().iter().any(|a| (a.loc - t).abs() < 1e-14 * (1.0 + t.abs())) {
        return Err(Error::Singular(t));
    }
    match m.continuous() {
        Continuous::Semicircle if t.abs() == SQRT_2 => Err(Error::Singular(t)),
        Continuous::MarchenkoPastur { lambda } => {
            let (a, b) = mp_edges(*lambda);
            if t == a || t == b || (*lambda < 1.0 && t == 0.0) {
                Err(Error::Singular(t))
            } else {
                Ok(())
            }
        }
        Continuous::Grid(g) if t >= g.lo() && t <= g.hi() => Err(Error::Unsupported(format!(
            "boundary value of a gridded density inside its support (t = {t})"
        ))),
        _ => Ok(()),
    }
}

/// Boundary value `lim_{s↓0} G(t + is)`.
pub fn cauchy_real(m: &Measure, t: f64) -> Result<Complex64> {
    check_real_point(m, t)?;
    Ok(g_and_derivative_unchecked(m, Complex64::new(t, 0.0)).0)
}

/// `(G, G′)` at `im z > 0`, or the boundary value at real `z` off the singular set.
pub fn cauchy_extended(m: &Measure, z: Complex64) -> Result<(Complex64, Complex64)> {
    if z.im == 0.0 {
        check_real_point(m, z.re)?;
    } else {
        check_upper(z)?;
    }
    Ok(g_and_derivative_unchecked(m, z))
}

/// Central difference derivative with the step `1e−6·max(1, |z|)`.
pub fn complex_step_derivative(f: impl Fn(Complex64) -> Complex64, z: Complex64) -> Complex64 {
    let h = 1e-6 * z.norm().max(1.0);
    (f(z + h) - f(z - h)) / (2.0 * h)
}

/// `(F, F′)` with `F = 1/G` and `F′ = −G′/G²`.
pub fn f_and_derivative(m: &Measure, z: Complex64) -> Result<(Complex64, Complex64)> {
    let (g, dg) = cauchy_extended(m, z)?;
    if g.norm() == 0.0 {
        return Err(Error::Pole { what: "F = 1/G", at: z });
    }
    Ok((1.0 / g, -dg / (g * g)))
}

/// `G` anywhere off the real support: lower half-plane values come from
/// `G(z̄) = conj G(z)`, real points are limits from above.
fn cauchy_anywhere(m: &Measure, w: Complex64) -> Result<Complex64> {
    if w.im < 0.0 {
        Ok(cauchy(m, w.conj())?.conj())
    } else if w.im > 0.0 {
        cauchy(m, w)
    } else {
        if !w.re.is_finite() {
            return Err(Error::NonFinite(format!("{w}")));
        }
        if m.atoms().iter().any(|a| a.loc == w.re) && !matches!(m.continuous(), Continuous::MarchenkoPastur { .. }) {
            return Err(Error::Singular(w.re));
        }
        Ok(g_and_derivative_unchecked(m, w).0)
    }
}

/// `ψ(z) = ∫ tz/(1−tz) dm(t) = G(1/z)/z − 1`.
pub fn psi(m: &Measure, z: Complex64) -> Result<Complex64> {
    if z.norm() == 0.0 {
        return Err(Error::Singular(0.0));
    }
    let w = 1.0 / z;
    Ok(cauchy_anywhere(m, w)? * w - 1.0)
}

/// `ψ(1/t)` of the Marchenko–Pastur law as the limit from `t + i0`.
///
/// Outside the support this is `½(t − 1 − λ ∓ √((1+λ−t)² − 4λ))` with the
/// minus sign to the right of the support and the plus sign to the left, so
/// that `ψ(1/t) → −λ` (mass at 0 minus one) as `t ↓ 0` when `λ < 1`.
/// Inside it is `½(t − 1 − λ − i√(4λ − (1+λ−t)²))`.
pub fn psi_real_mp(lambda: f64, t: f64) -> Result<Complex64> {
    if !(lambda > 0.0) || !t.is_finite() {
        return Err(Error::InvalidMeasure(format!("MP with λ = {lambda} at t = {t}")));
    }
    let (a, b) = mp_edges(lambda);
    if t == a || t == b {
        return Err(Error::Singular(t));
    }
    Ok(psi_mp_unchecked(lambda, Complex64::new(t, 0.0)))
}

/// `ψ(1/z)` for the MP law, `z` in the closed upper half-plane.
pub(crate) fn psi_mp_unchecked(lambda: f64, z: Complex64) -> Complex64 {
    let (a, b) = mp_edges(lambda);
    (z - 1.0 - lambda - sqrt_pair(z, a, b)) * 0.5
}

/// Boundary value `lim_{s↓0} g(t + is)` by sampling the schedule and extrapolating.
pub fn boundary_limit(
    g: impl Fn(Complex64) -> Result<Complex64>,
    t: f64,
    sched: &InversionSchedule,
) -> Result<Complex64> {
    let mut vals = Vec::with_capacity(sched.s_values().len());
    for &s in sched.s_values() {
        let v = g(Complex64::new(t, s))?;
        if !(v.re.is_finite() && v.im.is_finite()) {
            return Err(Error::NonFinite(format!("g({t} + {s}i) = {v}")));
        }
        vals.push(v);
    }
    Ok(sched.extrapolate(&vals))
}

/// Density `−(1/π) lim Im g(t + is)` on each grid point.
pub fn stieltjes_invert(
    g: impl Fn(Complex64) -> Result<Complex64> + Sync,
    grid: &[f64],
    sched: &InversionSchedule,
) -> Result<Vec<f64>> {
    grid.par_iter()
        .map(|&t| boundary_limit(&g, t, sched).map(|v| -v.im / std::f64::consts::PI))
        .collect()
}
