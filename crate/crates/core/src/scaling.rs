//! Scaling exponents of ball-mass curves and two-sided envelope checks.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::functionals::{match_radius, occupation_time, tail_integral, ExitOccupationCurve};
use crate::heatmass::BallMassCurve;
use crate::paths::RebasedIncrement;

/// Minimum number of radii for a fit.
pub const MIN_FIT_POINTS: usize = 8;
/// Margin above the threshold exponent required to call a singularity removable.
pub const REMOVABILITY_MARGIN: f64 = 0.1;
/// Default ratio caps for deterministic and single stochastic paths.
pub const RATIO_CAP_DETERMINISTIC: f64 = 50.0;
pub const RATIO_CAP_STOCHASTIC: f64 = 200.0;
/// Minimum ensemble size for moment estimates.
pub const MIN_ENSEMBLE: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitModel {
    /// `log M = κ log r + a`.
    PurePower,
    /// `M = e^a r^κ (log log(1/r))^β`, i.e. `log M = κ log r + a + β log(log log(1/r))`.
    PowerLogLog,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum FittedModel {
    PurePower,
    PowerLogLog { beta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub kappa: f64,
    pub log_amplitude: f64,
    pub model: FittedModel,
    pub rms_residual: f64,
    pub window: (f64, f64),
    pub points: usize,
}

fn in_window(r: f64, (lo, hi): (f64, f64)) -> bool {
    r >= lo * (1.0 - 1e-9) && r <= hi * (1.0 + 1e-9)
}

fn check_window((lo, hi): (f64, f64)) -> Result<()> {
    if lo > 0.0 && lo < hi {
        Ok(())
    } else {
        Err(invalid(format!("fit window must satisfy 0 < r_min < r_max, got [{lo}, {hi}]")))
    }
}

/// Least-squares fit of the power law over the radii inside `window`.
pub fn fit_exponent(radii: &[f64], mass: &[f64], window: (f64, f64), model: FitModel) -> Result<ExponentFit> {
    check_window(window)?;
    if radii.len() != mass.len() {
        return Err(invalid("radii and masses differ in length"));
    }
    let pts: Vec<(f64, f64)> = radii
        .iter()
        .zip(mass)
        .filter(|(&r, _)| in_window(r, window))
        .map(|(&r, &m)| (r, m))
        .collect();
    if pts.len() < MIN_FIT_POINTS {
        return Err(Error::DegenerateWindow {
            found: pts.len(),
            needed: MIN_FIT_POINTS,
        });
    }
    if let Some(&(radius, mass)) = pts.iter().find(|(_, m)| !(*m > 0.0)) {
        return Err(Error::NonpositiveMass { radius, mass });
    }
    let cols = match model {
        FitModel::PurePower => 2,
        FitModel::PowerLogLog => {
            if pts.iter().any(|&(r, _)| r >= (-1.0f64).exp()) {
                return Err(invalid("the log log(1/r) correction needs r < 1/e"));
            }
            3
        }
    };
    let n = pts.len();
    let mut a = DMatrix::<f64>::zeros(n, cols);
    let mut y = DVector::<f64>::zeros(n);
    for (i, &(r, m)) in pts.iter().enumerate() {
        a[(i, 0)] = r.ln();
        a[(i, 1)] = 1.0;
        if cols == 3 {
            a[(i, 2)] = (-r.ln()).ln().ln();
        }
        y[i] = m.ln();
    }
    let qr = a.clone().qr();
    let qty = qr.q().transpose() * &y;
    let coef = qr
        .r()
        .solve_upper_triangular(&qty)
        .ok_or_else(|| invalid("fit design matrix is rank deficient"))?;
    let resid = &a * &coef - &y;
    let rms_residual = (resid.norm_squared() / n as f64).sqrt();
    let model = match model {
        FitModel::PurePower => FittedModel::PurePower,
        FitModel::PowerLogLog => FittedModel::PowerLogLog { beta: coef[2] },
    };
    Ok(ExponentFit {
        kappa: coef[0],
        log_amplitude: coef[1],
        model,
        rms_residual,
        window,
        points: n,
    })
}

/// Ratios of the mass to an envelope across a window of radii.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub radii: Vec<f64>,
    pub ratios: Vec<f64>,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub ratio_cap: f64,
    pub pass: bool,
}

impl BoundReport {
    fn from_ratios(radii: Vec<f64>, ratios: Vec<f64>, ratio_cap: f64) -> Self {
        let min_ratio = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        let max_ratio = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let pass = !ratios.is_empty()
            && min_ratio > 0.0
            && max_ratio.is_finite()
            && max_ratio / min_ratio <= ratio_cap;
        Self {
            radii,
            ratios,
            min_ratio,
            max_ratio,
            ratio_cap,
            pass,
        }
    }
}

fn window_indices(mass: &BallMassCurve, window: (f64, f64)) -> Result<Vec<usize>> {
    check_window(window)?;
    let idx: Vec<usize> = (0..mass.radii.len())
        .filter(|&i| in_window(mass.radii[i], window))
        .collect();
    if idx.is_empty() {
        return Err(Error::DegenerateWindow { found: 0, needed: 1 });
    }
    Ok(idx)
}

/// `M_total(r) / (σ(θr) + r^N)` over the window; `θr` must be a grid radius.
pub fn verify_lower_bound(
    mass: &BallMassCurve,
    exits: &ExitOccupationCurve,
    theta: f64,
    window: (f64, f64),
    ratio_cap: f64,
) -> Result<BoundReport> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(invalid(format!("theta must lie in (0, 1), got {theta}")));
    }
    let n = mass.dim as i32;
    let mut radii = Vec::new();
    let mut ratios = Vec::new();
    for i in window_indices(mass, window)? {
        let r = mass.radii[i];
        let sigma = exits.sigma_at(theta * r).ok_or_else(|| {
            Error::GridMismatch(format!("theta * r = {} is not on the exit-time grid", theta * r))
        })?;
        radii.push(r);
        ratios.push(mass.m_total[i] / (sigma + r.powi(n)));
    }
    Ok(BoundReport::from_ratios(radii, ratios, ratio_cap))
}

/// `M_total(r) / (min{tail(r), r²} + r^N)` over the window.
pub fn verify_upper_bound(
    mass: &BallMassCurve,
    exits: &ExitOccupationCurve,
    c0: f64,
    window: (f64, f64),
    ratio_cap: f64,
) -> Result<BoundReport> {
    let n = mass.dim as i32;
    let mut radii = Vec::new();
    let mut ratios = Vec::new();
    for i in window_indices(mass, window)? {
        let r = mass.radii[i];
        if match_radius(&exits.radii, r).is_none() {
            return Err(Error::GridMismatch(format!("radius {r} is not on the occupation grid")));
        }
        let tail = tail_integral(exits, r, mass.dim, c0)?;
        radii.push(r);
        ratios.push(mass.m_total[i] / (tail.min(r * r) + r.powi(n)));
    }
    Ok(BoundReport::from_ratios(radii, ratios, ratio_cap))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Removability {
    CriterionSatisfied,
    CriterionViolated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RemovabilityReport {
    pub verdict: Removability,
    pub kappa: f64,
    pub threshold: f64,
}

/// Compares the fitted exponent of `M_total` with `max{2, 1/α} + margin`.
pub fn classify_removability(
    mass: &BallMassCurve,
    alpha: f64,
    window: (f64, f64),
) -> Result<RemovabilityReport> {
    let lo = 1.0 / mass.dim as f64;
    if !(alpha > lo && alpha < 1.0) {
        return Err(Error::AlphaOutOfRange { alpha, lo });
    }
    let fit = fit_exponent(&mass.radii, &mass.m_total, window, FitModel::PurePower)?;
    let threshold = f64::max(2.0, 1.0 / alpha);
    let verdict = if fit.kappa >= threshold + REMOVABILITY_MARGIN {
        Removability::CriterionSatisfied
    } else {
        Removability::CriterionViolated
    };
    Ok(RemovabilityReport {
        verdict,
        kappa: fit.kappa,
        threshold,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// Sample mean of `x^n` with its jackknife standard error.
pub fn moment_from_samples(samples: &[f64], n: u32) -> Result<MomentEstimate> {
    if !(1..=3).contains(&n) {
        return Err(invalid(format!("moment order must be 1, 2 or 3, got {n}")));
    }
    if samples.len() < MIN_ENSEMBLE {
        return Err(Error::EnsembleTooSmall {
            found: samples.len(),
            needed: MIN_ENSEMBLE,
        });
    }
    let vals: Vec<f64> = samples.iter().map(|x| x.powi(n as i32)).collect();
    let m = vals.len() as f64;
    // Shifted sums keep the mean exact for degenerate ensembles.
    let shift = vals[0];
    let dev_sum: f64 = vals.iter().map(|v| v - shift).sum();
    let mean = shift + dev_sum / m;
    let loo: Vec<f64> = vals.iter().map(|v| (dev_sum - (v - shift)) / (m - 1.0)).collect();
    let loo_mean = loo.iter().sum::<f64>() / m;
    let var = (m - 1.0) / m * loo.iter().map(|t| (t - loo_mean).powi(2)).sum::<f64>();
    Ok(MomentEstimate {
        mean,
        std_error: var.sqrt(),
        samples: vals.len(),
    })
}

/// `E[τ(r)^n]` over an ensemble of increments sharing `s0`.
pub fn moment_estimate(paths: &[RebasedIncrement], r: f64, n: u32, s0: f64) -> Result<MomentEstimate> {
    if !(r > 0.0) {
        return Err(invalid(format!("radius must be positive, got {r}")));
    }
    if let Some(p) = paths.iter().find(|p| (p.s0() - s0).abs() > 1e-12 * s0) {
        return Err(invalid(format!("increment has s0 = {}, expected {s0}", p.s0())));
    }
    let taus: Vec<f64> = paths.par_iter().map(|p| occupation_time(p, r)).collect();
    moment_from_samples(&taus, n)
}
