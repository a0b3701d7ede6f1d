//! Simulated histograms against `(η, η′)` predictions.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::measures::{Interval, SpectralMass, TypeBLaw};
use crate::rmt::Histogram;

/// Half-width of the window around each predicted outlier.
pub const OUTLIER_WINDOW: f64 = 0.5;
const SUPPORT_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinRow {
    pub left: f64,
    pub right: f64,
    pub observed: f64,
    pub stderr: f64,
    /// `N η(bin) + η′(bin)`.
    pub predicted: f64,
    /// `N η(bin)`.
    pub uncorrected: f64,
    /// Counted in the bulk chi-square.
    pub in_chi2: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierCheck {
    pub location: f64,
    pub window: (f64, f64),
    pub observed: f64,
    pub stderr: f64,
    pub predicted: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub n: usize,
    pub trials: usize,
    pub rows: Vec<BinRow>,
    pub chi2_corrected: f64,
    pub chi2_uncorrected: f64,
    pub dof: usize,
    pub p_corrected: f64,
    pub p_uncorrected: f64,
    pub corrected_not_worse: bool,
    pub outliers: Vec<OutlierCheck>,
}

/// Mass of `[lo, hi)` (closed on the right when `last`), matching the
/// histogram's binning convention for atoms.
fn bin_mass(m: &dyn SpectralMass, lo: f64, hi: f64, last: bool) -> f64 {
    let atoms: f64 = m
        .atoms()
        .iter()
        .filter(|a| a.loc >= lo && (a.loc < hi || (last && a.loc == hi)))
        .map(|a| a.weight)
        .sum();
    atoms + m.continuous_mass_in(&Interval { lo, hi })
}

/// Positive correction atoms detached from the bulk law.
pub fn predicted_outliers(pred: &TypeBLaw) -> Vec<f64> {
    let support = pred.law.continuous().support();
    pred.correction
        .atoms()
        .iter()
        .filter(|a| a.weight >= 0.5)
        .map(|a| a.loc)
        .filter(|&t| {
            let in_continuous = support.is_some_and(|(lo, hi)| t >= lo - SUPPORT_SLACK && t <= hi + SUPPORT_SLACK);
            let on_atom = pred.law.atoms().iter().any(|b| (b.loc - t).abs() <= SUPPORT_SLACK);
            !in_continuous && !on_atom
        })
        .collect()
}

/// Per-bin comparison plus bulk chi-square for the corrected and the
/// uncorrected prediction.
///
/// The chi-square skips bins inside an outlier window and bins whose
/// across-trial standard error is zero (every trial gave the same count).
pub fn compare(hist: &Histogram, pred: &TypeBLaw) -> Result<CompareReport> {
    let range = hist.range();
    let (lo, hi) = pred.law.support();
    if lo < range.lo - SUPPORT_SLACK || hi > range.hi + SUPPORT_SLACK {
        return Err(Error::RangeMismatch(format!(
            "histogram range [{}, {}] does not cover the bulk [{lo}, {hi}]",
            range.lo, range.hi
        )));
    }
    let outliers = predicted_outliers(pred);
    if let Some(t) = outliers.iter().find(|t| !range.contains(**t)) {
        return Err(Error::RangeMismatch(format!("predicted outlier {t} lies outside the histogram range")));
    }
    let n = hist.n as f64;
    let bins = hist.bins();
    let near_outlier = |l: f64, r: f64| outliers.iter().any(|t| r > t - OUTLIER_WINDOW && l < t + OUTLIER_WINDOW);
    let mut rows = Vec::with_capacity(bins);
    let (mut chi_c, mut chi_u, mut dof) = (0.0, 0.0, 0usize);
    for j in 0..bins {
        let (l, r) = (hist.edges[j], hist.edges[j + 1]);
        let last = j + 1 == bins;
        let uncorrected = n * bin_mass(&pred.law, l, r, last);
        let predicted = uncorrected + bin_mass(&pred.correction, l, r, last);
        let (obs, se) = (hist.mean_counts[j], hist.stderr[j]);
        let in_chi2 = se > 0.0 && !near_outlier(l, r);
        if in_chi2 {
            chi_c += ((obs - predicted) / se).powi(2);
            chi_u += ((obs - uncorrected) / se).powi(2);
            dof += 1;
        }
        rows.push(BinRow { left: l, right: r, observed: obs, stderr: se, predicted, uncorrected, in_chi2 });
    }
    let (p_corrected, p_uncorrected) = if dof > 0 {
        let dist = ChiSquared::new(dof as f64).map_err(|e| Error::NonFinite(e.to_string()))?;
        (dist.sf(chi_c), dist.sf(chi_u))
    } else {
        (f64::NAN, f64::NAN)
    };
    let checks = outliers
        .iter()
        .map(|&t| {
            let (wl, wr) = (t - OUTLIER_WINDOW, t + OUTLIER_WINDOW);
            let inside: Vec<&BinRow> = rows.iter().filter(|b| b.right > wl && b.left < wr).collect();
            let observed: f64 = inside.iter().map(|b| b.observed).sum();
            let predicted: f64 = inside.iter().map(|b| b.predicted).sum();
            // Bins are correlated; summing standard errors is conservative.
            let stderr: f64 = inside.iter().map(|b| b.stderr).sum();
            let window = (inside.first().map_or(wl, |b| b.left), inside.last().map_or(wr, |b| b.right));
            let pass = (observed - predicted).abs() <= 3.0 * stderr + 1e-9;
            OutlierCheck { location: t, window, observed, stderr, predicted, pass }
        })
        .collect();
    Ok(CompareReport {
        n: hist.n,
        trials: hist.trials,
        rows,
        chi2_corrected: chi_c,
        chi2_uncorrected: chi_u,
        dof,
        p_corrected,
        p_uncorrected,
        corrected_not_worse: chi_c <= chi_u,
        outliers: checks,
    })
}
