//! Monte Carlo statistics over independent trials.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::eigen::{hermitian_eigenvalues, trace_power};
use super::sample::{sample_matrix, EnsembleSpec};
use crate::error::{Error, Result};
use crate::measures::{Interval, SpectralMass, MAX_MOMENT_DEGREE};

/// Runs `f` on every trial matrix in parallel; results are in trial order.
pub fn map_trials<T: Send>(
    spec: &EnsembleSpec,
    f: impl Fn(&super::CMatrix) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    spec.validate()?;
    (0..spec.trials as u64)
        .into_par_iter()
        .map(|t| f(&sample_matrix(spec, t)?))
        .collect()
}

pub fn simulate_eigenvalues(spec: &EnsembleSpec) -> Result<Vec<Vec<f64>>> {
    map_trials(spec, hermitian_eigenvalues)
}

/// Sample mean and standard error of the mean.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Eigenvalue counts per bin, averaged over trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub mean_counts: Vec<f64>,
    pub stderr: Vec<f64>,
    pub trials: usize,
    pub n: usize,
    /// Mean number of eigenvalues below the first edge.
    pub underflow: f64,
    /// Mean number of eigenvalues at or above the last edge.
    pub overflow: f64,
}

impl Histogram {
    /// `bins` equal bins on `range`; the last bin is closed on the right.
    pub fn from_samples(samples: &[Vec<f64>], bins: usize, range: &Interval, n: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::InvalidEnsemble("need at least one bin".into()));
        }
        if samples.is_empty() {
            return Err(Error::InvalidEnsemble("need at least one trial".into()));
        }
        let w = range.width() / bins as f64;
        let edges: Vec<f64> = (0..=bins).map(|i| if i == bins { range.hi } else { range.lo + w * i as f64 }).collect();
        let trials = samples.len();
        // Per-trial counts, last two slots hold under/overflow.
        let counts: Vec<Vec<f64>> = samples
            .iter()
            .map(|ev| {
                let mut c = vec![0.0; bins + 2];
                for &x in ev {
                    let slot = if x < range.lo {
                        bins
                    } else if x > range.hi {
                        bins + 1
                    } else {
                        (((x - range.lo) / w) as usize).min(bins - 1)
                    };
                    c[slot] += 1.0;
                }
                c
            })
            .collect();
        let column = |j: usize| counts.iter().map(|c| c[j]).collect::<Vec<_>>();
        let (mut mean_counts, mut stderr) = (Vec::with_capacity(bins), Vec::with_capacity(bins));
        for j in 0..bins {
            let (m, s) = mean_stderr(&column(j));
            mean_counts.push(m);
            stderr.push(s);
        }
        Ok(Histogram {
            edges,
            mean_counts,
            stderr,
            trials,
            n,
            underflow: mean_stderr(&column(bins)).0,
            overflow: mean_stderr(&column(bins + 1)).0,
        })
    }

    pub fn bins(&self) -> usize {
        self.mean_counts.len()
    }

    pub fn range(&self) -> Interval {
        Interval { lo: self.edges[0], hi: self.edges[self.edges.len() - 1] }
    }

    /// Mean count including under/overflow; equals `n`.
    pub fn total(&self) -> f64 {
        self.mean_counts.iter().sum::<f64>() + self.underflow + self.overflow
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin_left,bin_right,mean_count,stderr\n");
        for j in 0..self.bins() {
            s.push_str(&format!(
                "{},{},{},{}\n",
                sig9(self.edges[j]),
                sig9(self.edges[j + 1]),
                sig9(self.mean_counts[j]),
                sig9(self.stderr[j])
            ));
        }
        s
    }

    /// Parses the CSV written by [`Histogram::to_csv`]; `trials` and `n`
    /// are not part of the CSV and must be supplied.
    pub fn from_csv(text: &str, trials: usize, n: usize) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next() {
            Some(h) if h.trim() == "bin_left,bin_right,mean_count,stderr" => {}
            _ => return Err(Error::Parse { pos: 0, msg: "missing histogram CSV header".into() }),
        }
        let (mut edges, mut mean_counts, mut stderr) = (vec![], vec![], vec![]);
        for (i, line) in lines.enumerate() {
            let f: Vec<f64> = line
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse { pos: i + 1, msg: e.to_string() })?;
            if f.len() != 4 {
                return Err(Error::Parse { pos: i + 1, msg: "expected 4 columns".into() });
            }
            if edges.is_empty() {
                edges.push(f[0]);
            }
            edges.push(f[1]);
            mean_counts.push(f[2]);
            stderr.push(f[3]);
        }
        if mean_counts.is_empty() {
            return Err(Error::Parse { pos: 1, msg: "no bins".into() });
        }
        let inside: f64 = mean_counts.iter().sum();
        Ok(Histogram { edges, mean_counts, stderr, trials, n, underflow: 0.0, overflow: n as f64 - inside })
    }
}

/// Formats with 9 significant digits, dropping trailing zeros.
pub fn sig9(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{}", if x == 0.0 { 0.0 } else { x });
    }
    let s = format!("{:.8e}", x);
    let v: f64 = s.parse().expect("formatted float");
    format!("{v}")
}

pub fn averaged_spectrum(spec: &EnsembleSpec, bins: usize, range: &Interval) -> Result<Histogram> {
    let samples = simulate_eigenvalues(spec)?;
    Histogram::from_samples(&samples, bins, range, spec.n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauEstimate {
    pub n: usize,
    pub tau_hat: f64,
    pub tau_prime_hat: f64,
    /// Standard error of `tau_hat`.
    pub stderr: f64,
    /// Standard error of `tau_prime_hat`, i.e. `n · stderr`.
    pub tau_prime_stderr: f64,
}

/// `(1/N) E Tr(A^k)` and `N((1/N) E Tr(A^k) − τ(t^k))` for each `N`.
pub fn estimate_tau_pair(spec: &EnsembleSpec, k: usize, n_values: &[usize]) -> Result<Vec<TauEstimate>> {
    if k > MAX_MOMENT_DEGREE {
        return Err(Error::DegreeOverflow { degree: k, max: MAX_MOMENT_DEGREE });
    }
    let tau = spec.bulk_law()?.moment(k)?;
    n_values
        .iter()
        .map(|&n| {
            let s = spec.with_n(n);
            let xs = map_trials(&s, |m| Ok(trace_power(m, k)? / n as f64))?;
            let (mean, se) = mean_stderr(&xs);
            Ok(TauEstimate {
                n,
                tau_hat: mean,
                tau_prime_hat: n as f64 * (mean - tau),
                stderr: se,
                tau_prime_stderr: n as f64 * se,
            })
        })
        .collect()
}

/// Mean of `(A^k)_{ab}` (0-based indices) and its standard error.
pub fn entry_moment(spec: &EnsembleSpec, k: usize, a: usize, b: usize) -> Result<(Complex64, f64)> {
    for idx in [a, b] {
        if idx >= spec.n {
            return Err(Error::IndexOutOfRange { index: idx, dim: spec.n });
        }
    }
    let xs = map_trials(spec, |m| {
        let mut v = vec![Complex64::new(0.0, 0.0); spec.n];
        v[b] = Complex64::new(1.0, 0.0);
        for _ in 0..k {
            v = m.matvec(&v);
        }
        Ok(v[a])
    })?;
    let re: Vec<f64> = xs.iter().map(|z| z.re).collect();
    let im: Vec<f64> = xs.iter().map(|z| z.im).collect();
    let (mr, sr) = mean_stderr(&re);
    let (mi, si) = mean_stderr(&im);
    Ok((Complex64::new(mr, mi), sr.hypot(si)))
}
