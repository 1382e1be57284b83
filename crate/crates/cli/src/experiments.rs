//! Experiment pipelines. Every run writes its CSV/JSON artifacts, a
//! reproducible `manifest.json` and a separate `timing.json`.

use std::fs;
use std::path::Path;
use std::time::Instant;

use heatsing::fbm::{fgn_autocovariance, FgnSampler, HurstExponent};
use heatsing::functionals::{occupation_time, tail_integral, ExitOccupationCurve, RadiusGrid};
use heatsing::heatmass::{total_mass_curve, BallMassCurve, HeatKernelParams};
use heatsing::paths::SingularTrajectory;
use heatsing::scaling::{
    fit_exponent, moment_from_samples, verify_lower_bound, verify_upper_bound, BoundReport, ExponentFit, FittedModel,
};
use heatsing::seeding::derive_seed;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Experiment, ExperimentConfig, MassTarget, PathSpec};
use crate::error::{CliError, CliResult};

/// Result of a run: overall pass flag and the files written.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub pass: bool,
    pub files: Vec<String>,
}

/// Runs the configured experiment on `threads` workers (all cores when `None`).
pub fn run(cfg: &ExperimentConfig, threads: Option<usize>) -> CliResult<RunOutcome> {
    let start = Instant::now();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))?;
    let workers = pool.current_num_threads();
    fs::create_dir_all(&cfg.out_dir)?;
    let mut art = pool.install(|| match cfg.experiment {
        Experiment::MassCurve => mass_curve(cfg),
        Experiment::Fit => fit(cfg),
        Experiment::VerifyBounds => verify_bounds(cfg),
        Experiment::Moments => moments(cfg),
        Experiment::FbmCheck => fbm_check(cfg),
    })?;

    let manifest = json!({
        "experiment": cfg.experiment.name(),
        "config": cfg,
        "derived_seeds": art.seeds,
        "versions": {
            "heatsing-cli": env!("CARGO_PKG_VERSION"),
            "heatsing-core": heatsing::VERSION,
        },
        "error_estimates": art.error_estimates,
        "errors": art.errors,
        "outputs": art.files,
        "pass": art.pass,
    });
    write_json(&cfg.out_dir.join("manifest.json"), &manifest)?;
    art.files.push("manifest.json".into());
    let timing = json!({
        "wall_clock_seconds": start.elapsed().as_secs_f64(),
        "threads": workers,
    });
    write_json(&cfg.out_dir.join("timing.json"), &timing)?;
    art.files.push("timing.json".into());
    Ok(RunOutcome {
        pass: art.pass,
        files: art.files,
    })
}

#[derive(Default)]
struct Artifacts {
    pass: bool,
    files: Vec<String>,
    seeds: Vec<Value>,
    error_estimates: Value,
    errors: Vec<String>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn num(x: f64) -> String {
    format!("{x:e}")
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn replica_seed(cfg: &ExperimentConfig, replica: usize) -> u64 {
    derive_seed(cfg.seed, &[replica as u64])
}

/// Deterministic paths need a single replica.
fn replicas(cfg: &ExperimentConfig) -> usize {
    if cfg.path.is_stochastic() {
        cfg.ensemble
    } else {
        1
    }
}

fn trajectory(cfg: &ExperimentConfig, replica: usize) -> CliResult<SingularTrajectory> {
    let traj = match &cfg.path {
        PathSpec::Constant { point } => SingularTrajectory::constant(point.clone(), cfg.horizon)?,
        PathSpec::Holder {
            anchor,
            c,
            alpha,
            direction,
        } => SingularTrajectory::holder(anchor.clone(), *c, *alpha, direction.clone(), cfg.horizon)?,
        PathSpec::Fbm { hurst, grid_len } => {
            let sampler = FgnSampler::new(HurstExponent::new(*hurst)?, *grid_len, cfg.horizon / *grid_len as f64)?;
            SingularTrajectory::sampled(sampler.fbm_path(cfg.dim, replica_seed(cfg, replica))?)
        }
    };
    Ok(traj)
}

fn seed_list(cfg: &ExperimentConfig, n: usize) -> Vec<Value> {
    if !cfg.path.is_stochastic() {
        return Vec::new();
    }
    (0..n)
        .map(|i| json!({ "replica": i, "seed": replica_seed(cfg, i) }))
        .collect()
}

/// Mass and exit/occupation data of one path.
struct PathData {
    mass: BallMassCurve,
    exits: ExitOccupationCurve,
    tails: Vec<f64>,
    tail_errors: Vec<f64>,
    c0: f64,
    errors: Vec<String>,
}

/// `total_mass_curve`, falling back to one radius at a time so a failing
/// radius is reported without discarding the others.
fn resilient_mass(
    traj: &SingularTrajectory,
    cfg: &ExperimentConfig,
    radii: &[f64],
    params: &HeatKernelParams,
) -> (BallMassCurve, Vec<String>) {
    if let Ok(curve) = total_mass_curve(traj, &cfg.u0, radii, params, &cfg.quad) {
        return (curve, Vec::new());
    }
    let mut errors = Vec::new();
    let mut curve = BallMassCurve {
        radii: radii.to_vec(),
        m_sing: Vec::new(),
        m_bg: Vec::new(),
        m_total: Vec::new(),
        err_est: Vec::new(),
        horizon: params.horizon(),
        dim: params.dim(),
        u0: cfg.u0.clone(),
        path_id: None,
    };
    for &r in radii {
        match total_mass_curve(traj, &cfg.u0, &[r], params, &cfg.quad) {
            Ok(one) => {
                curve.m_sing.push(one.m_sing[0]);
                curve.m_bg.push(one.m_bg[0]);
                curve.m_total.push(one.m_total[0]);
                curve.err_est.push(one.err_est[0]);
            }
            Err(e) => {
                errors.push(format!("radius {r:e}: {e}"));
                for v in [&mut curve.m_sing, &mut curve.m_bg, &mut curve.m_total, &mut curve.err_est] {
                    v.push(f64::NAN);
                }
            }
        }
    }
    (curve, errors)
}

/// Tail integral at every grid radius with a halved-table error estimate.
fn tails_with_errors(exits: &ExitOccupationCurve, dim: usize, c0: f64) -> (Vec<f64>, Vec<f64>) {
    exits
        .radii
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            let Ok(fine) = tail_integral(exits, r, dim, c0) else {
                return (f64::NAN, f64::NAN);
            };
            let keep: Vec<usize> = (0..exits.radii.len()).filter(|j| (j + i) % 2 == 0).collect();
            let coarse = ExitOccupationCurve {
                radii: keep.iter().map(|&j| exits.radii[j]).collect(),
                sigma: keep.iter().map(|&j| exits.sigma[j]).collect(),
                tau: keep.iter().map(|&j| exits.tau[j]).collect(),
                ..exits.clone()
            };
            let err = tail_integral(&coarse, r, dim, c0)
                .map(|c| (c - fine).abs() / 3.0)
                .unwrap_or(f64::NAN);
            (fine, err)
        })
        .unzip()
}

fn analyze_path(cfg: &ExperimentConfig, grid: &RadiusGrid, replica: usize) -> CliResult<PathData> {
    let traj = trajectory(cfg, replica)?;
    let params = HeatKernelParams::new(cfg.dim, cfg.horizon)?;
    let (mut mass, errors) = resilient_mass(&traj, cfg, grid.radii(), &params);
    mass.path_id = Some(format!("path-{replica}"));
    let eta = traj.rebase(cfg.s0)?;
    let exits = ExitOccupationCurve::compute(&eta, grid.radii())?;
    let c0 = cfg.bounds.c0.unwrap_or_else(|| exits.max_excursion.max(grid.r_max()));
    if c0 < exits.max_excursion {
        return Err(CliError::Config(format!(
            "bounds.c0 = {c0} is below the maximal excursion {}",
            exits.max_excursion
        )));
    }
    let (tails, tail_errors) = tails_with_errors(&exits, cfg.dim, c0);
    Ok(PathData {
        mass,
        exits,
        tails,
        tail_errors,
        c0,
        errors,
    })
}

fn analyze_all(cfg: &ExperimentConfig, grid: &RadiusGrid, n: usize) -> CliResult<Vec<PathData>> {
    (0..n)
        .into_par_iter()
        .map(|i| analyze_path(cfg, grid, i))
        .collect()
}

fn write_path_curves(dir: &Path, data: &PathData, files: &mut Vec<String>) -> CliResult<()> {
    let m = &data.mass;
    write_csv(
        &dir.join("mass_curve.csv"),
        &["r", "M_sing", "M_bg", "M_total", "err_est"],
        (0..m.radii.len()).map(|i| {
            vec![
                num(m.radii[i]),
                num(m.m_sing[i]),
                num(m.m_bg[i]),
                num(m.m_total[i]),
                num(m.err_est[i]),
            ]
        }),
    )?;
    let e = &data.exits;
    write_csv(
        &dir.join("exit_occupation.csv"),
        &["r", "sigma", "tau", "tail_integral", "err_est"],
        (0..e.radii.len()).map(|i| {
            vec![
                num(e.radii[i]),
                num(e.sigma[i]),
                num(e.tau[i]),
                num(data.tails[i]),
                num(data.tail_errors[i]),
            ]
        }),
    )?;
    files.push("mass_curve.csv".into());
    files.push("exit_occupation.csv".into());
    Ok(())
}

fn mass_error_summary(data: &[PathData]) -> Value {
    let rel = data
        .iter()
        .flat_map(|d| d.mass.err_est.iter().zip(&d.mass.m_total).map(|(e, m)| e / m))
        .fold(0.0, f64::max);
    let tail = data
        .iter()
        .flat_map(|d| d.tail_errors.iter().zip(&d.tails).filter(|(e, _)| e.is_finite()).map(|(e, t)| e / t))
        .fold(0.0, f64::max);
    json!({ "max_rel_mass_error": rel, "max_rel_tail_error": tail })
}

fn mass_curve(cfg: &ExperimentConfig) -> CliResult<Artifacts> {
    let grid = cfg.radius_grid()?;
    let data = analyze_path(cfg, &grid, 0)?;
    let mut art = Artifacts {
        seeds: seed_list(cfg, 1),
        ..Artifacts::default()
    };
    write_path_curves(&cfg.out_dir, &data, &mut art.files)?;
    art.error_estimates = mass_error_summary(std::slice::from_ref(&data));
    art.errors = data.errors;
    art.pass = art.errors.is_empty();
    Ok(art)
}

fn target_mass(cfg: &ExperimentConfig, m: &BallMassCurve) -> Vec<f64> {
    match cfg.fit.target {
        MassTarget::Total => m.m_total.clone(),
        MassTarget::Singular => m.m_sing.clone(),
    }
}

fn fit_path(cfg: &ExperimentConfig, d: &PathData) -> CliResult<ExponentFit> {
    Ok(fit_exponent(&d.mass.radii, &target_mass(cfg, &d.mass), cfg.fit.window, cfg.fit.model)?)
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn beta_of(f: &ExponentFit) -> f64 {
    match f.model {
        FittedModel::PowerLogLog { beta } => beta,
        FittedModel::PurePower => 0.0,
    }
}

/// Mass over the fitted law across the window.
fn fit_ratios(cfg: &ExperimentConfig, d: &PathData, f: &ExponentFit) -> (f64, f64) {
    let mass = target_mass(cfg, &d.mass);
    let (lo, hi) = f.window;
    let ratios: Vec<f64> = d
        .mass
        .radii
        .iter()
        .zip(&mass)
        .filter(|(&r, _)| r >= lo * (1.0 - 1e-9) && r <= hi * (1.0 + 1e-9))
        .map(|(&r, &m)| {
            let law = f.log_amplitude + f.kappa * r.ln() + beta_of(f) * (1.0 / r).ln().ln().ln();
            m / law.exp()
        })
        .collect();
    (
        ratios.iter().copied().fold(f64::INFINITY, f64::min),
        ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    )
}

fn write_fits(dir: &Path, cfg: &ExperimentConfig, fits: &[ExponentFit], files: &mut Vec<String>) -> CliResult<()> {
    write_csv(
        &dir.join("fits.csv"),
        &["path", "seed", "kappa", "log_amplitude", "beta", "rms_residual"],
        fits.iter().enumerate().map(|(i, f)| {
            vec![
                i.to_string(),
                if cfg.path.is_stochastic() {
                    replica_seed(cfg, i).to_string()
                } else {
                    String::new()
                },
                num(f.kappa),
                num(f.log_amplitude),
                num(beta_of(f)),
                num(f.rms_residual),
            ]
        }),
    )?;
    files.push("fits.csv".into());
    Ok(())
}

fn collect_errors(data: &[PathData]) -> Vec<String> {
    data.iter()
        .enumerate()
        .flat_map(|(i, d)| d.errors.iter().map(move |e| format!("path {i}: {e}")))
        .collect()
}

fn fit(cfg: &ExperimentConfig) -> CliResult<Artifacts> {
    let grid = cfg.radius_grid()?;
    let n = replicas(cfg);
    let data = analyze_all(cfg, &grid, n)?;
    let mut art = Artifacts {
        seeds: seed_list(cfg, n),
        errors: collect_errors(&data),
        error_estimates: mass_error_summary(&data),
        ..Artifacts::default()
    };
    write_path_curves(&cfg.out_dir, &data[0], &mut art.files)?;
    let fits = data.iter().map(|d| fit_path(cfg, d)).collect::<CliResult<Vec<_>>>()?;
    write_fits(&cfg.out_dir, cfg, &fits, &mut art.files)?;
    let kappas: Vec<f64> = fits.iter().map(|f| f.kappa).collect();
    let kappa = median(&kappas);
    let (min_ratio, max_ratio) = fit_ratios(cfg, &data[0], &fits[0]);
    let within = cfg.fit.expect_kappa.is_none_or(|(k, tol)| (kappa - k).abs() <= tol);
    art.pass = art.errors.is_empty() && within;
    let report = json!({
        "kappa": kappa,
        "model": cfg.fit.model,
        "window": [cfg.fit.window.0, cfg.fit.window.1],
        "min_ratio": min_ratio,
        "max_ratio": max_ratio,
        "pass": art.pass,
        "paths": n,
        "kappa_min": kappas.iter().copied().fold(f64::INFINITY, f64::min),
        "kappa_max": kappas.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        "expected": cfg.fit.expect_kappa.map(|(k, tol)| json!({ "kappa": k, "tolerance": tol })),
    });
    write_json(&cfg.out_dir.join("report.json"), &report)?;
    art.files.push("report.json".into());
    Ok(art)
}

fn bound_summary(b: &BoundReport) -> Value {
    json!({ "min_ratio": b.min_ratio, "max_ratio": b.max_ratio, "ratio_cap": b.ratio_cap, "pass": b.pass })
}

fn verify_bounds(cfg: &ExperimentConfig) -> CliResult<Artifacts> {
    let grid = cfg.radius_grid()?;
    let n = replicas(cfg);
    let data = analyze_all(cfg, &grid, n)?;
    let mut art = Artifacts {
        seeds: seed_list(cfg, n),
        errors: collect_errors(&data),
        error_estimates: mass_error_summary(&data),
        ..Artifacts::default()
    };
    write_path_curves(&cfg.out_dir, &data[0], &mut art.files)?;
    let window = cfg.fit.window;
    let cap = cfg.bounds.ratio_cap;
    let mut reports = Vec::with_capacity(n);
    for d in &data {
        let lower = verify_lower_bound(&d.mass, &d.exits, cfg.bounds.theta, window, cap)?;
        let upper = verify_upper_bound(&d.mass, &d.exits, d.c0, window, cap)?;
        reports.push((lower, upper));
    }
    let mut rows = Vec::new();
    for (i, (lower, upper)) in reports.iter().enumerate() {
        for (k, &r) in lower.radii.iter().enumerate() {
            let j = data[i].mass.radii.iter().position(|&x| x == r).unwrap_or(0);
            let rel_err = data[i].mass.err_est[j] / data[i].mass.m_total[j];
            rows.push(vec![
                i.to_string(),
                num(r),
                num(lower.ratios[k]),
                num(upper.ratios[k]),
                num(rel_err),
            ]);
        }
    }
    write_csv(
        &cfg.out_dir.join("bounds.csv"),
        &["path", "r", "lower_ratio", "upper_ratio", "err_est"],
        rows,
    )?;
    art.files.push("bounds.csv".into());

    let fits = data.iter().map(|d| fit_path(cfg, d)).collect::<CliResult<Vec<_>>>()?;
    let kappa = median(&fits.iter().map(|f| f.kappa).collect::<Vec<_>>());
    let widest = reports
        .iter()
        .flat_map(|(l, u)| [l, u])
        .max_by(|a, b| (a.max_ratio / a.min_ratio).total_cmp(&(b.max_ratio / b.min_ratio)))
        .expect("at least one path");
    let passed = reports.iter().filter(|(l, u)| l.pass && u.pass).count();
    art.pass = art.errors.is_empty() && passed == n;
    let report = json!({
        "kappa": kappa,
        "model": cfg.fit.model,
        "window": [window.0, window.1],
        "min_ratio": widest.min_ratio,
        "max_ratio": widest.max_ratio,
        "pass": art.pass,
        "theta": cfg.bounds.theta,
        "paths": n,
        "paths_passed": passed,
        "lower": bound_summary(&reports[0].0),
        "upper": bound_summary(&reports[0].1),
    });
    write_json(&cfg.out_dir.join("report.json"), &report)?;
    art.files.push("report.json".into());
    Ok(art)
}

/// Exponent `k` for which `E[τ(r)] r^{−k}` should stay bounded.
fn moment_exponent(cfg: &ExperimentConfig) -> f64 {
    let n = cfg.dim as f64;
    let critical = |a: f64| if a * n > 1.0 { 1.0 / a } else { n };
    match &cfg.path {
        PathSpec::Constant { .. } => 0.0,
        PathSpec::Holder { alpha, .. } => critical(*alpha),
        PathSpec::Fbm { hurst, .. } => critical(*hurst),
    }
}

fn moments(cfg: &ExperimentConfig) -> CliResult<Artifacts> {
    let n = cfg.ensemble;
    let radii = &cfg.moments.radii;
    let taus: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| -> CliResult<Vec<f64>> {
            let replica = if cfg.path.is_stochastic() { i } else { 0 };
            let eta = trajectory(cfg, replica)?.rebase(cfg.s0)?;
            Ok(radii.iter().map(|&r| occupation_time(&eta, r)).collect())
        })
        .collect::<CliResult<_>>()?;
    let order = cfg.moments.order;
    let k = moment_exponent(cfg);
    let mut rows = Vec::new();
    let mut normalized = Vec::new();
    let mut rel_se: f64 = 0.0;
    for (j, &r) in radii.iter().enumerate() {
        let samples: Vec<f64> = taus.iter().map(|t| t[j]).collect();
        let m = moment_from_samples(&samples, order)?;
        let scale = r.powf(k * order as f64);
        normalized.push(m.mean / scale);
        rel_se = rel_se.max(m.std_error / m.mean);
        rows.push(vec![num(r), num(m.mean), num(m.std_error), num(m.mean / scale)]);
    }
    let mut art = Artifacts {
        seeds: seed_list(cfg, n),
        error_estimates: json!({ "max_rel_std_error": rel_se }),
        ..Artifacts::default()
    };
    write_csv(
        &cfg.out_dir.join("moments.csv"),
        &["r", "mean", "std_error", "normalized"],
        rows,
    )?;
    art.files.push("moments.csv".into());
    let lo = normalized.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = normalized.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    art.pass = lo > 0.0 && hi / lo <= cfg.moments.max_spread;
    let r_lo = radii.iter().copied().fold(f64::INFINITY, f64::min);
    let r_hi = radii.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let report = json!({
        "kappa": k * order as f64,
        "model": "pure_power",
        "window": [r_lo, r_hi],
        "min_ratio": lo,
        "max_ratio": hi,
        "pass": art.pass,
        "order": order,
        "max_spread": cfg.moments.max_spread,
        "paths": n,
    });
    write_json(&cfg.out_dir.join("report.json"), &report)?;
    art.files.push("report.json".into());
    Ok(art)
}

fn fbm_check(cfg: &ExperimentConfig) -> CliResult<Artifacts> {
    let spec = &cfg.fbm;
    let dt = cfg.horizon / spec.grid_len as f64;
    let mut rows = Vec::new();
    let mut max_z: f64 = 0.0;
    let mut seeds = Vec::new();
    for (hi, &h) in spec.hurst.iter().enumerate() {
        let hurst = HurstExponent::new(h)?;
        let sampler = FgnSampler::new(hurst, spec.grid_len, dt)?;
        let base = derive_seed(cfg.seed, &[hi as u64]);
        seeds.push(json!({ "hurst": h, "seed": base }));
        let per_replica: Vec<Vec<f64>> = (0..spec.replicas)
            .into_par_iter()
            .map(|i| {
                let x = sampler.sample(derive_seed(base, &[i as u64]));
                let n = x.len();
                (0..=spec.max_lag)
                    .map(|k| (0..n - k).map(|j| x[j] * x[j + k]).sum::<f64>() / (n - k) as f64)
                    .collect()
            })
            .collect();
        let m = spec.replicas as f64;
        for k in 0..=spec.max_lag {
            let vals: Vec<f64> = per_replica.iter().map(|v| v[k]).collect();
            let mean = vals.iter().sum::<f64>() / m;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
            let se = (var / m).sqrt();
            let expected = fgn_autocovariance(k, hurst) * dt.powf(2.0 * h);
            let z = (mean - expected) / se;
            max_z = max_z.max(z.abs());
            rows.push(vec![num(h), k.to_string(), num(mean), num(se), num(expected), num(z)]);
        }
    }
    let mut art = Artifacts {
        seeds,
        error_estimates: json!({ "max_abs_z": max_z }),
        ..Artifacts::default()
    };
    write_csv(
        &cfg.out_dir.join("fbm_check.csv"),
        &["hurst", "lag", "empirical", "std_error", "expected", "z"],
        rows,
    )?;
    art.files.push("fbm_check.csv".into());
    art.pass = max_z <= spec.z_limit;
    let report = json!({
        "kappa": Value::Null,
        "model": Value::Null,
        "window": Value::Null,
        "min_ratio": Value::Null,
        "max_ratio": Value::Null,
        "pass": art.pass,
        "max_abs_z": max_z,
        "z_limit": spec.z_limit,
        "replicas": spec.replicas,
        "max_lag": spec.max_lag,
    });
    write_json(&cfg.out_dir.join("report.json"), &report)?;
    art.files.push("report.json".into());
    Ok(art)
}
