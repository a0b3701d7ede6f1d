//! Small quadrature helpers shared by the measure and transform code.

/// Composite Simpson rule on `[a, b]` with `n` subintervals (rounded up to even).
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    let n = (n.max(2) + 1) & !1;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let x = a + h * i as f64;
        acc += if i % 2 == 1 { 4.0 * f(x) } else { 2.0 * f(x) };
    }
    acc * h / 3.0
}

/// Integral of `f` over `[lo, hi] ∩ [c − r, c + r]` after the substitution
/// `t = c − r cos φ`.
///
/// Densities with square-root or inverse-square-root behaviour at `c ± r`
/// become smooth in `φ`, so the integrand passed here should already include
/// the Jacobian-free density; the Jacobian `r sin φ` is applied internally.
pub fn arc_integral(f: impl Fn(f64) -> f64, c: f64, r: f64, lo: f64, hi: f64, n: usize) -> f64 {
    let lo = lo.max(c - r);
    let hi = hi.min(c + r);
    if hi <= lo {
        return 0.0;
    }
    let angle = |t: f64| ((c - t) / r).clamp(-1.0, 1.0).acos();
    let (p0, p1) = (angle(lo), angle(hi));
    // Midpoint rule: never touches the endpoints, where f may blow up.
    let n = n.max(1);
    let h = (p1 - p0) / n as f64;
    (0..n)
        .map(|i| {
            let p = p0 + h * (i as f64 + 0.5);
            f(c - r * p.cos()) * r * p.sin()
        })
        .sum::<f64>()
        * h
}

/// Gauss–Legendre nodes and weights on `[−1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}
