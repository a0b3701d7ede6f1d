//! Eigenvalues of dense Hermitian matrices.
//!
//! The production path reduces the matrix to real symmetric tridiagonal form
//! with complex Householder reflections and then runs implicit QL with
//! Wilkinson-style shifts. A cyclic Jacobi solver on the real `2N × 2N`
//! embedding serves as an independent reference.

use num_complex::Complex64;
use rayon::prelude::*;

use super::matrix::CMatrix;
use crate::error::{Error, Result};

const HERMITIAN_TOL: f64 = 1e-12;
const PAR_MIN: usize = 96;

/// All eigenvalues, ascending.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Result<Vec<f64>> {
    m.check_hermitian(HERMITIAN_TOL)?;
    let (mut d, mut e) = tridiagonalize(m);
    tql(&mut d, &mut e)?;
    d.sort_by(f64::total_cmp);
    Ok(d)
}

/// Householder reduction to a real tridiagonal matrix `(diagonal, off-diagonal)`.
///
/// Each step maps the column below the diagonal to `α e₁` with
/// `H = I − 2uu*` and updates the trailing block as `B − 2uq* − 2qu*`,
/// where `p = Bu`, `K = u*p` and `q = p − Ku`. The complex off-diagonal
/// entries are replaced by their moduli, which is a diagonal unitary
/// similarity.
pub fn tridiagonalize(m: &CMatrix) -> (Vec<f64>, Vec<f64>) {
    let n = m.dim();
    let mut a = m.as_slice().to_vec();
    let mut e = vec![0.0; n];
    for k in 0..n.saturating_sub(2) {
        let len = n - k - 1;
        let x: Vec<Complex64> = (k + 1..n).map(|i| a[i * n + k]).collect();
        let xnorm = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        e[k] = xnorm;
        if xnorm == 0.0 {
            continue;
        }
        let phase = if x[0].norm() == 0.0 { Complex64::new(1.0, 0.0) } else { x[0] / x[0].norm() };
        let alpha = -phase * xnorm;
        let mut u = x;
        u[0] -= alpha;
        let unorm = u.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        u.iter_mut().for_each(|z| *z /= unorm);

        let block = &mut a[(k + 1) * n..];
        let row_dot = |row: &[Complex64]| -> Complex64 { row[k + 1..].iter().zip(&u).map(|(b, u)| b * u).sum() };
        let p: Vec<Complex64> = if len >= PAR_MIN {
            block.par_chunks(n).map(row_dot).collect()
        } else {
            block.chunks(n).map(row_dot).collect()
        };
        let kk: f64 = u.iter().zip(&p).map(|(u, p)| (u.conj() * p).re).sum();
        let q: Vec<Complex64> = p.iter().zip(&u).map(|(p, u)| p - u * kk).collect();
        let update = |(i, row): (usize, &mut [Complex64])| {
            let (ui, qi) = (u[i] * 2.0, q[i] * 2.0);
            for ((b, uj), qj) in row[k + 1..].iter_mut().zip(&u).zip(&q) {
                *b -= ui * qj.conj() + qi * uj.conj();
            }
        };
        if len >= PAR_MIN {
            block.par_chunks_mut(n).enumerate().for_each(update);
        } else {
            block.chunks_mut(n).enumerate().for_each(update);
        }
    }
    if n >= 2 {
        e[n - 2] = a[(n - 1) * n + n - 2].norm();
    }
    let d = (0..n).map(|i| a[i * n + i].re).collect();
    (d, e)
}

/// Implicit QL on a symmetric tridiagonal matrix; `e[i]` couples `i` and `i + 1`.
pub fn tql(d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let n = d.len();
    if n == 0 {
        return Ok(());
    }
    e[n - 1] = 0.0;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::NonConvergence { iterations: iter, residual: e[l].abs() });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut deflated = false;
            for i in (l..m).rev() {
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

/// Reference eigenvalues by cyclic Jacobi on `[[Re A, −Im A], [Im A, Re A]]`.
///
/// Every eigenvalue of `A` appears twice in the embedding.
pub fn jacobi_eigenvalues(m: &CMatrix) -> Result<Vec<f64>> {
    m.check_hermitian(HERMITIAN_TOL)?;
    let n = m.dim();
    let s = 2 * n;
    let mut a = vec![0.0; s * s];
    for i in 0..n {
        for j in 0..n {
            let z = m[(i, j)];
            a[i * s + j] = z.re;
            a[(i + n) * s + j + n] = z.re;
            a[i * s + j + n] = -z.im;
            a[(i + n) * s + j] = z.im;
        }
    }
    let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut converged = false;
    for _ in 0..100 {
        let off: f64 = (0..s)
            .flat_map(|i| (0..s).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * s + j].powi(2))
            .sum::<f64>()
            .sqrt();
        if off <= 1e-12 * norm.max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
        for p in 0..s {
            for q in p + 1..s {
                let apq = a[p * s + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * s + q] - a[p * s + p]) / (2.0 * apq);
                let t = 1.0f64.copysign(theta) / (theta.abs() + theta.hypot(1.0));
                let c = 1.0 / t.hypot(1.0);
                let sn = t * c;
                for k in 0..s {
                    let (akp, akq) = (a[k * s + p], a[k * s + q]);
                    a[k * s + p] = c * akp - sn * akq;
                    a[k * s + q] = sn * akp + c * akq;
                }
                for k in 0..s {
                    let (apk, aqk) = (a[p * s + k], a[q * s + k]);
                    a[p * s + k] = c * apk - sn * aqk;
                    a[q * s + k] = sn * apk + c * aqk;
                }
            }
        }
    }
    if !converged {
        return Err(Error::NonConvergence { iterations: 100, residual: f64::NAN });
    }
    let mut d: Vec<f64> = (0..s).map(|i| a[i * s + i]).collect();
    d.sort_by(f64::total_cmp);
    Ok(d.into_iter().step_by(2).collect())
}

/// `Tr(A^k)` for Hermitian `A`; small powers avoid the eigensolver.
pub fn trace_power(m: &CMatrix, k: usize) -> Result<f64> {
    Ok(match k {
        0 => m.dim() as f64,
        1 => m.trace().re,
        2 => m.frobenius_sq(),
        3 | 4 => {
            let sq = m.matmul(m);
            if k == 4 {
                sq.frobenius_sq()
            } else {
                let n = m.dim();
                (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| (sq[(i, j)] * m[(j, i)]).re).sum()
            }
        }
        _ => hermitian_eigenvalues(m)?.iter().map(|x| x.powi(k as i32)).sum(),
    })
}
