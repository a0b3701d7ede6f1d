//! Seeded random matrix samplers.
//!
//! Every trial draws from its own ChaCha8 stream: the generator is seeded
//! with `seed` and switched to stream `trial_index`, so a matrix depends only
//! on `(spec, trial_index)` and never on scheduling. Gaussians come from
//! `rand_distr::StandardNormal` (ziggurat).

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::matrix::CMatrix;
use crate::error::{Error, Result};
use crate::measures::Measure;
use crate::typeb::SpikeSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EnsembleKind {
    Gue,
    Goe,
    /// `UΛU*` with `Λ` the pattern repeated cyclically to length `N`.
    HaarConjugated { pattern: Vec<f64> },
    /// `Σ^{1/2} B B* Σ^{1/2}` with `B` of size `N × round(λN)`.
    Wishart { lambda: f64, sigma_spikes: SpikeSet },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub kind: EnsembleKind,
    pub n: usize,
    #[serde(default)]
    pub spikes: SpikeSet,
    pub seed: u64,
    pub trials: usize,
}

impl EnsembleSpec {
    pub fn new(kind: EnsembleKind, n: usize, spikes: SpikeSet, seed: u64, trials: usize) -> Result<Self> {
        let s = EnsembleSpec { kind, n, spikes, seed, trials };
        s.validate()?;
        Ok(s)
    }

    pub fn gue(n: usize, spikes: SpikeSet, seed: u64, trials: usize) -> Result<Self> {
        Self::new(EnsembleKind::Gue, n, spikes, seed, trials)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidEnsemble(m));
        if self.n == 0 {
            return bad("N must be positive".into());
        }
        if self.trials == 0 {
            return bad("trials must be positive".into());
        }
        if self.spikes.count() > self.n {
            return bad(format!("{} spikes exceed N = {}", self.spikes.count(), self.n));
        }
        match &self.kind {
            EnsembleKind::HaarConjugated { pattern } => {
                if pattern.is_empty() || pattern.iter().any(|x| !x.is_finite()) {
                    return bad("Haar base pattern must be nonempty and finite".into());
                }
            }
            EnsembleKind::Wishart { lambda, sigma_spikes } => {
                if !(*lambda > 0.0 && lambda.is_finite()) {
                    return bad(format!("Wishart ratio λ = {lambda} must be positive"));
                }
                if self.p() == 0 {
                    return bad(format!("p = round(λN) = 0 for λ = {lambda}, N = {}", self.n));
                }
                if sigma_spikes.count() > self.n || sigma_spikes.thetas().iter().any(|t| *t <= 0.0) {
                    return bad("Σ spikes must be positive and at most N".into());
                }
                if !self.spikes.is_empty() {
                    return bad("additive spikes are not defined for the Wishart ensemble".into());
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Columns of `B` for the Wishart ensemble.
    pub fn p(&self) -> usize {
        match self.kind {
            EnsembleKind::Wishart { lambda, .. } => (lambda * self.n as f64).round() as usize,
            _ => 0,
        }
    }

    pub fn with_n(&self, n: usize) -> Self {
        EnsembleSpec { n, ..self.clone() }
    }

    /// Limiting bulk law of the ensemble.
    pub fn bulk_law(&self) -> Result<Measure> {
        match &self.kind {
            EnsembleKind::Gue | EnsembleKind::Goe => Ok(Measure::semicircle()),
            EnsembleKind::HaarConjugated { pattern } => Measure::uniform_atoms(pattern),
            EnsembleKind::Wishart { lambda, .. } => Measure::marchenko_pastur(*lambda),
        }
    }

    /// Base eigenvalues of the Haar ensemble.
    pub fn haar_diagonal(&self) -> Vec<f64> {
        match &self.kind {
            EnsembleKind::HaarConjugated { pattern } => (0..self.n).map(|i| pattern[i % pattern.len()]).collect(),
            _ => vec![],
        }
    }
}

pub fn trial_rng(seed: u64, trial_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial_index);
    rng
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn cnormal(rng: &mut ChaCha8Rng, sd: f64) -> Complex64 {
    let re = normal(rng);
    let im = normal(rng);
    Complex64::new(re * sd, im * sd)
}

/// GUE with `E|a_ij|² = 1/(2N)` and real diagonal.
fn gue(n: usize, rng: &mut ChaCha8Rng) -> CMatrix {
    let mut m = CMatrix::zeros(n);
    let off = 0.5 / (n as f64).sqrt();
    let diag = (0.5 / n as f64).sqrt();
    for i in 0..n {
        m[(i, i)] = Complex64::new(normal(rng) * diag, 0.0);
        for j in i + 1..n {
            let z = cnormal(rng, off);
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
        }
    }
    m
}

/// GOE with off-diagonal variance `1/(2N)` and diagonal variance `1/N`.
fn goe(n: usize, rng: &mut ChaCha8Rng) -> CMatrix {
    let mut m = CMatrix::zeros(n);
    let off = (0.5 / n as f64).sqrt();
    let diag = (1.0 / n as f64).sqrt();
    for i in 0..n {
        m[(i, i)] = Complex64::new(normal(rng) * diag, 0.0);
        for j in i + 1..n {
            let x = Complex64::new(normal(rng) * off, 0.0);
            m[(i, j)] = x;
            m[(j, i)] = x;
        }
    }
    m
}

/// Haar unitary from Householder QR of a complex Ginibre matrix, with the
/// columns rescaled so that `R` has a positive diagonal.
pub fn haar_unitary(n: usize, rng: &mut ChaCha8Rng) -> CMatrix {
    // Column-major Ginibre matrix.
    let mut a: Vec<Vec<Complex64>> = (0..n).map(|_| (0..n).map(|_| cnormal(rng, 1.0)).collect()).collect();
    let mut reflectors: Vec<Vec<Complex64>> = Vec::with_capacity(n);
    let mut rdiag = vec![Complex64::new(0.0, 0.0); n];
    for k in 0..n {
        let x = &a[k][k..];
        let xnorm = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let phase = if x[0].norm() == 0.0 { Complex64::new(1.0, 0.0) } else { x[0] / x[0].norm() };
        let alpha = -phase * xnorm;
        let mut v = x.to_vec();
        v[0] -= alpha;
        let vn = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if vn > 0.0 {
            v.iter_mut().for_each(|z| *z /= vn);
        }
        rdiag[k] = alpha;
        let tail: Vec<&mut Vec<Complex64>> = a[k + 1..].iter_mut().collect();
        tail.into_par_iter().for_each(|col| {
            let c = &mut col[k..];
            let dot: Complex64 = v.iter().zip(c.iter()).map(|(v, c)| v.conj() * c).sum::<Complex64>() * 2.0;
            for (ci, vi) in c.iter_mut().zip(&v) {
                *ci -= vi * dot;
            }
        });
        reflectors.push(v);
    }
    // Q = H_0 H_1 ⋯ H_{n−1}, built column by column from e_j.
    let cols: Vec<Vec<Complex64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut x = vec![Complex64::new(0.0, 0.0); n];
            x[j] = Complex64::new(1.0, 0.0);
            for k in (0..n).rev() {
                let v = &reflectors[k];
                let seg = &mut x[k..];
                let dot: Complex64 = v.iter().zip(seg.iter()).map(|(v, c)| v.conj() * c).sum::<Complex64>() * 2.0;
                for (ci, vi) in seg.iter_mut().zip(v) {
                    *ci -= vi * dot;
                }
            }
            // Column j of QD with D = diag(r_jj/|r_jj|).
            let r = rdiag[j];
            let d = if r.norm() == 0.0 { Complex64::new(1.0, 0.0) } else { r / r.norm() };
            x.iter_mut().for_each(|z| *z *= d);
            x
        })
        .collect();
    let mut u = CMatrix::zeros(n);
    for (j, col) in cols.iter().enumerate() {
        for (i, &z) in col.iter().enumerate() {
            u[(i, j)] = z;
        }
    }
    u
}

fn haar_conjugated(diag: &[f64], rng: &mut ChaCha8Rng) -> CMatrix {
    let n = diag.len();
    let u = haar_unitary(n, rng);
    let mut ul = u.clone();
    for i in 0..n {
        for j in 0..n {
            ul[(i, j)] *= diag[j];
        }
    }
    ul.matmul(&u.conj_transpose())
}

fn wishart(n: usize, p: usize, sigma: &SpikeSet, rng: &mut ChaCha8Rng) -> CMatrix {
    let sd = (0.5 / n as f64).sqrt();
    let b: Vec<Vec<Complex64>> = (0..n).map(|_| (0..p).map(|_| cnormal(rng, sd)).collect()).collect();
    let scale: Vec<f64> = (0..n).map(|i| sigma.thetas().get(i).map_or(1.0, |t| t.sqrt())).collect();
    let rows: Vec<Vec<Complex64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    let s: Complex64 = b[i].iter().zip(&b[j]).map(|(x, y)| x * y.conj()).sum();
                    s * (scale[i] * scale[j])
                })
                .collect()
        })
        .collect();
    CMatrix::from_rows(&rows).expect("square by construction")
}

/// One sample of the ensemble, exactly Hermitian.
pub fn sample_matrix(spec: &EnsembleSpec, trial_index: u64) -> Result<CMatrix> {
    spec.validate()?;
    let mut rng = trial_rng(spec.seed, trial_index);
    let n = spec.n;
    let mut m = match &spec.kind {
        EnsembleKind::Gue => gue(n, &mut rng),
        EnsembleKind::Goe => goe(n, &mut rng),
        EnsembleKind::HaarConjugated { .. } => haar_conjugated(&spec.haar_diagonal(), &mut rng),
        EnsembleKind::Wishart { sigma_spikes, .. } => wishart(n, spec.p(), sigma_spikes, &mut rng),
    };
    for (j, &theta) in spec.spikes.thetas().iter().enumerate() {
        m[(j, j)] += theta;
    }
    m.symmetrize();
    Ok(m)
}
