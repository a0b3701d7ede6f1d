use std::collections::hash_map::RandomState;
use std::fs;
use std::hash::BuildHasher;

use anyhow::{bail, ensure, Context, Result};
use serde::Serialize;
use typeb_core::compare::compare;
use typeb_core::infinitesimal::{ensemble_state, expr_moment, simulate_word_moment, Expr};
use typeb_core::measures::DEFAULT_GRID_POINTS;
use typeb_core::rmt::stats::sig9;
use typeb_core::rmt::{averaged_spectrum, EnsembleKind, EnsembleSpec, Histogram};
use typeb_core::typeb::{
    sigma_measure, solve_outliers_additive, solve_outliers_multiplicative, typeb_additive, typeb_multiplicative,
    uniform_grid,
};
use typeb_core::{Interval, Measure, SpectralMass, SpikeSet, TypeBLaw};

use crate::config::{Base, Command, CompareArgs, Ensemble, EnsembleArgs, MomentsArgs, PredictArgs, RunConfig, SimulateArgs};
use crate::output::{read_json, resolve, OutDir};

pub fn run(mut cfg: RunConfig) -> Result<()> {
    let out = OutDir::create(&cfg.out_dir)?;
    match &mut cfg.command {
        Command::Predict(a) => predict(a, &out)?,
        Command::Simulate(a) => simulate(a, &out)?,
        Command::Compare(a) => compare_cmd(a, &out)?,
        Command::Moments(a) => moments(a, &out)?,
    }
    // Written last so that it carries every resolved default.
    out.json_exact("config.json", &cfg)?;
    Ok(())
}

fn random_seed() -> u64 {
    RandomState::new().hash_one(std::time::SystemTime::now())
}

#[derive(Serialize)]
struct OutlierRow {
    theta: f64,
    location: f64,
    mass: f64,
}

#[derive(Serialize)]
struct Outliers {
    outliers: Vec<OutlierRow>,
}

fn predict(a: &mut PredictArgs, out: &OutDir) -> Result<()> {
    let spikes = SpikeSet::new(a.spikes.clone())?;
    if let Some(n) = a.n {
        ensure!(n >= spikes.count(), "N = {n} is smaller than the number of spikes {}", spikes.count());
    }
    ensure!(a.atoms.is_empty() || a.base == Base::Atomic, "--atoms only applies to --base atomic");
    ensure!(a.lambda.is_none() || a.base == Base::Mp, "--lambda only applies to --base mp");
    ensure!(a.grid_points >= 2, "need at least two grid points");
    let (law, roots) = match a.base {
        Base::Mp => {
            let Some(lambda) = a.lambda else { bail!("--base mp needs --lambda") };
            (Measure::marchenko_pastur(lambda)?, solve_outliers_multiplicative(lambda, &spikes)?)
        }
        base => {
            let m = match base {
                Base::Atomic => {
                    ensure!(!a.atoms.is_empty(), "--base atomic needs --atoms");
                    Measure::uniform_atoms(&a.atoms)?
                }
                _ => Measure::semicircle(),
            };
            let roots = solve_outliers_additive(&m, &spikes)?;
            (m, roots)
        }
    };
    let (mut lo, mut hi) = law.support();
    for r in &roots {
        lo = lo.min(r.location);
        hi = hi.max(r.location);
    }
    let lo = *a.grid_lo.get_or_insert(lo - 0.5);
    let hi = *a.grid_hi.get_or_insert(hi + 0.5);
    Interval::new(lo, hi)?;
    let grid = uniform_grid(lo, hi, a.grid_points);
    let pred = match a.base {
        Base::Mp => typeb_multiplicative(a.lambda.expect("checked above"), &spikes, Some(&grid))?,
        Base::GoeSemicircle => {
            let base = TypeBLaw::new(law, sigma_measure(DEFAULT_GRID_POINTS)?);
            typeb_additive(&base, &spikes.type_b_law(), Some(&grid))?
        }
        _ => typeb_additive(&TypeBLaw::trivial(law), &spikes.type_b_law(), Some(&grid))?,
    };

    let mut csv = String::from("t,eta,eta_prime\n");
    for &t in &grid {
        csv.push_str(&format!("{},{},{}\n", sig9(t), sig9(pred.law.density(t)), sig9(pred.correction.density(t))));
    }
    out.text("spectrum.csv", &csv)?;
    let rows = roots.iter().map(|r| OutlierRow { theta: r.theta, location: r.location, mass: 1.0 }).collect();
    out.json("outliers.json", &Outliers { outliers: rows })?;
    out.json("typeb_law.json", &pred)?;
    for r in &roots {
        println!("outlier θ = {} at {}", sig9(r.theta), sig9(r.location));
    }
    println!("correction mass {}", sig9(pred.correction.total_mass()));
    Ok(())
}

fn ensemble_spec(a: &mut EnsembleArgs, spikes: SpikeSet) -> Result<EnsembleSpec> {
    ensure!(a.pattern.is_empty() || a.ensemble == Ensemble::Haar, "--pattern only applies to --ensemble haar");
    ensure!(
        (a.lambda.is_none() && a.sigma_spikes.is_empty()) || a.ensemble == Ensemble::Wishart,
        "--lambda and --sigma-spikes only apply to --ensemble wishart"
    );
    let kind = match a.ensemble {
        Ensemble::Gue => EnsembleKind::Gue,
        Ensemble::Goe => EnsembleKind::Goe,
        Ensemble::Haar => {
            ensure!(!a.pattern.is_empty(), "--ensemble haar needs --pattern");
            EnsembleKind::HaarConjugated { pattern: a.pattern.clone() }
        }
        Ensemble::Wishart => {
            let Some(lambda) = a.lambda else { bail!("--ensemble wishart needs --lambda") };
            EnsembleKind::Wishart { lambda, sigma_spikes: SpikeSet::new(a.sigma_spikes.clone())? }
        }
    };
    let seed = *a.seed.get_or_insert_with(random_seed);
    Ok(EnsembleSpec::new(kind, a.n, spikes, seed, a.trials)?)
}

/// Bulk support widened by 0.5 and predicted outliers widened by 1.
fn default_range(spec: &EnsembleSpec) -> Result<(f64, f64)> {
    let bulk = spec.bulk_law()?;
    let (lo, hi) = bulk.support();
    let outliers = match &spec.kind {
        EnsembleKind::Wishart { lambda, sigma_spikes } => solve_outliers_multiplicative(*lambda, sigma_spikes)?,
        _ => solve_outliers_additive(&bulk, &spec.spikes)?,
    };
    let locs = outliers.iter().map(|r| r.location);
    Ok((
        locs.clone().fold(lo - 0.5, |m, x| m.min(x - 1.0)),
        locs.fold(hi + 0.5, |m, x| m.max(x + 1.0)),
    ))
}

fn simulate(a: &mut SimulateArgs, out: &OutDir) -> Result<()> {
    let spec = ensemble_spec(&mut a.ensemble, SpikeSet::new(a.spikes.clone())?)?;
    ensure!(a.bins >= 1, "need at least one bin");
    let (lo, hi) = default_range(&spec)?;
    let lo = *a.range_lo.get_or_insert(lo);
    let hi = *a.range_hi.get_or_insert(hi);
    let hist = averaged_spectrum(&spec, a.bins, &Interval::new(lo, hi)?)?;
    out.text("histogram.csv", &hist.to_csv())?;
    out.json("ensemble.json", &spec)?;
    if hist.underflow + hist.overflow > 0.0 {
        eprintln!(
            "warning: on average {} eigenvalues fell outside [{}, {}]",
            sig9(hist.underflow + hist.overflow),
            sig9(lo),
            sig9(hi)
        );
    }
    println!("{} trials of N = {} with seed {}", spec.trials, spec.n, spec.seed);
    Ok(())
}

fn compare_cmd(a: &CompareArgs, out: &OutDir) -> Result<()> {
    let law: TypeBLaw = read_json(&resolve(&a.prediction, "typeb_law.json"))?;
    let csv_path = resolve(&a.simulation, "histogram.csv");
    let spec_path = csv_path.with_file_name("ensemble.json");
    let spec: EnsembleSpec = read_json(&spec_path)?;
    let text = fs::read_to_string(&csv_path).with_context(|| format!("reading {}", csv_path.display()))?;
    let hist = Histogram::from_csv(&text, spec.trials, spec.n)?;
    let report = compare(&hist, &law)?;
    out.json("compare.json", &report)?;
    println!(
        "chi2 corrected {} uncorrected {} over {} bins (p = {}, {})",
        sig9(report.chi2_corrected),
        sig9(report.chi2_uncorrected),
        report.dof,
        sig9(report.p_corrected),
        sig9(report.p_uncorrected)
    );
    for o in &report.outliers {
        println!(
            "outlier {}: observed {} ± {} predicted {} [{}]",
            sig9(o.location),
            sig9(o.observed),
            sig9(o.stderr),
            sig9(o.predicted),
            if o.pass { "pass" } else { "fail" }
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct MomentsReport {
    word: String,
    n: usize,
    trials: usize,
    mc: f64,
    stderr: f64,
    prediction: f64,
    phi: f64,
    phi_prime: f64,
    /// `N (mc − φ)`.
    phi_prime_estimate: f64,
    phi_prime_stderr: f64,
    tolerance: f64,
    pass: bool,
}

fn moments(a: &mut MomentsArgs, out: &OutDir) -> Result<()> {
    let expr = Expr::parse(&a.word)?;
    let spec = ensemble_spec(&mut a.ensemble, SpikeSet::empty())?;
    let n = spec.n;
    ensure!(
        n >= expr.max_unit_index().max(a.spikes.len()),
        "N = {n} is smaller than the matrix units or spikes used by the word"
    );
    ensure!(a.spikes.is_empty() || expr.uses_spike(), "--spikes given but the word has no b");
    ensure!(!expr.uses_spike() || !a.spikes.is_empty(), "the word uses b but no --spikes were given");
    let pred = expr_moment(&expr, &ensemble_state(&spec)?, &a.spikes)?;
    let (mc, se) = simulate_word_moment(&spec, &expr, &a.spikes)?;
    let prediction = pred.at(n);
    let tolerance = (3.0 * se).max(5.0 / (n * n) as f64);
    let r = MomentsReport {
        word: a.word.clone(),
        n,
        trials: spec.trials,
        mc,
        stderr: se,
        prediction,
        phi: pred.phi,
        phi_prime: pred.phi_prime,
        phi_prime_estimate: n as f64 * (mc - pred.phi),
        phi_prime_stderr: n as f64 * se,
        tolerance,
        pass: (mc - prediction).abs() <= tolerance,
    };
    out.json("moments.json", &r)?;
    println!("word                {}", r.word);
    for (k, v) in [
        ("mc", r.mc),
        ("stderr", r.stderr),
        ("prediction", r.prediction),
        ("phi", r.phi),
        ("phi_prime", r.phi_prime),
        ("phi_prime_estimate", r.phi_prime_estimate),
        ("phi_prime_stderr", r.phi_prime_stderr),
    ] {
        println!("{k:<20}{}", sig9(v));
    }
    println!("{}", if r.pass { "pass" } else { "fail" });
    Ok(())
}
