//! The five subcommands: density curves, MSE tables, population-moment
//! recovery, SIR estimates and Kolmogorov-distance rate checks.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde_json::json;

use spectra_kde::limitlaw::uniform_grid;
use spectra_kde::stieltjes::ContourParams;
use spectra_kde::{
    bandwidth, build_population, gaussian_kernel, limit_density, mmse_sir_limit, rate_check,
    recover_population, run_density_curve, run_mse_experiment, simulate_spectrum,
    ExperimentConfig, SpectralLaw, TransformSource, DEFAULT_ETA,
};

use crate::config::Resolved;

/// Files and notes produced by one command, assembled into the manifest.
pub struct RunOutput {
    pub outputs: Vec<String>,
    pub notes: Vec<String>,
}

fn write_text(dir: &Path, name: &str, content: &str) -> Result<()> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    let path = dir.join(name);
    std::fs::write(&path, content).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn write_manifest(resolved: &Resolved, command: &str, run: &RunOutput) -> Result<PathBuf> {
    let manifest = json!({
        "command": command,
        "config_digest": resolved.digest(command),
        "seed": resolved.seed,
        "tool_version": env!("CARGO_PKG_VERSION"),
        "outputs": run.outputs,
        "notes": run.notes,
    });
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    write_text(&resolved.out, "manifest.json", &text)?;
    Ok(resolved.out.join("manifest.json"))
}

/// The limit law `(p/n, H)` when the population's spectral measure is known.
fn limit_law(resolved: &Resolved) -> Result<Option<SpectralLaw>> {
    match resolved.population.limit_measure() {
        Some(h) => Ok(Some(SpectralLaw::new(resolved.p as f64 / resolved.n as f64, h)?)),
        None => Ok(None),
    }
}

fn experiment_config(resolved: &Resolved, eval_points: Vec<f64>) -> Result<ExperimentConfig> {
    Ok(ExperimentConfig {
        ensemble: resolved.ensemble.clone(),
        population: resolved.population.clone(),
        p: resolved.p,
        n: resolved.n,
        replicates: resolved.replicates,
        bandwidth: resolved.bandwidth.clone(),
        kernel: gaussian_kernel(),
        eval_points,
        seed: resolved.seed,
        limit: limit_law(resolved)?,
        allow_c_ge_one: false,
    })
}

const CURVE_POINTS: usize = 500;

/// Evaluation grid for density curves: explicit `--grid` when given, the
/// limit law's support window when the law is known, otherwise a window
/// around the sampled eigenvalues.
fn density_grid(resolved: &Resolved) -> Result<Vec<f64>> {
    if let Some((min, max, points)) = resolved.grid {
        return Ok(uniform_grid(min, max, points)?);
    }
    if let Some(law) = limit_law(resolved)? {
        let (lo, hi) = law.support_hint();
        return Ok(uniform_grid(lo.max(0.0), hi, CURVE_POINTS)?);
    }
    let spectrum = simulate_spectrum(
        &resolved.ensemble,
        &resolved.population,
        resolved.p,
        resolved.n,
        resolved.seed,
    )?;
    let h = bandwidth(&resolved.bandwidth, resolved.n)?;
    let lo = (spectrum.min() - 3.0 * h).max(0.0);
    let hi = spectrum.max() + 3.0 * h;
    Ok(uniform_grid(lo, hi, CURVE_POINTS)?)
}

pub fn cmd_density(resolved: &Resolved) -> Result<RunOutput> {
    let grid = density_grid(resolved)?;
    let config = experiment_config(resolved, grid.clone())?;
    let curve = run_density_curve(&config)?;

    let mut estimate = String::from("x,f_estimate\n");
    for (x, v) in curve.grid().iter().zip(curve.values()) {
        let _ = writeln!(estimate, "{x},{v}");
    }
    write_text(&resolved.out, "density_estimate.csv", &estimate)?;
    let mut run =
        RunOutput { outputs: vec!["density_estimate.csv".into()], notes: Vec::new() };

    match &config.limit {
        Some(law) => {
            let mut limit = String::from("x,f_limit\n");
            for &x in &grid {
                let _ = writeln!(limit, "{x},{}", limit_density(law, x, DEFAULT_ETA)?);
            }
            write_text(&resolved.out, "density_limit.csv", &limit)?;
            run.outputs.push("density_limit.csv".into());
        }
        None => {
            let note = "limit law has no closed form";
            println!("{note}");
            run.notes.push(note.into());
        }
    }
    Ok(run)
}

pub fn cmd_mse(resolved: &Resolved) -> Result<RunOutput> {
    let eval_points = match resolved.grid {
        Some((min, max, points)) => uniform_grid(min, max, points)?,
        None => spectra_kde::paper_eval_points(),
    };
    let config = experiment_config(resolved, eval_points)?;
    let table = run_mse_experiment(&config)?;

    let mut csv = String::from("x,mse,mode,replicates\n");
    for (x, mse) in table.eval_points.iter().zip(&table.mse) {
        let _ = writeln!(csv, "{x},{mse},{},{}", table.mode, table.replicates);
    }
    write_text(&resolved.out, "mse.csv", &csv)?;
    Ok(RunOutput { outputs: vec!["mse.csv".into()], notes: Vec::new() })
}

pub fn cmd_recover(resolved: &Resolved) -> Result<RunOutput> {
    let c = resolved.p as f64 / resolved.n as f64;
    if !(c > 0.0 && c < 1.0) {
        bail!("recovery requires c in (0,1), got c = {c}");
    }
    let spectrum = simulate_spectrum(
        &resolved.ensemble,
        &resolved.population,
        resolved.p,
        resolved.n,
        resolved.seed,
    )?;
    let h = bandwidth(&resolved.bandwidth, resolved.n)?;
    let contour = ContourParams { im: resolved.contour_im, ..ContourParams::default() };
    let result = recover_population(&spectrum, &gaussian_kernel(), h, c, &contour)?;

    // Exact data-side reference: tr(T^2)/p of the realized population.
    let population = build_population(&resolved.population, resolved.seed)?;
    let oracle = population.h_n.moment(2);

    let report = json!({
        "c": c,
        "h": h,
        "m1": result.h_moments.0,
        "m2": result.h_moments.1,
        "tr_t2_over_n": result.tr_t2_over_n,
        "oracle_tr_t2_over_n": oracle,
        "fit_residual": result.diagnostics.fit_residual,
        "usable_points": result.diagnostics.usable_points,
        "variance_clamped": result.diagnostics.variance_clamped,
        "contour_im": resolved.contour_im,
    });
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    write_text(&resolved.out, "recover.json", &text)?;
    println!(
        "recovered m1 = {:.6}, m2 = {:.6}; tr_t2_over_n = {:.6} (direct value {:.6})",
        result.h_moments.0, result.h_moments.1, result.tr_t2_over_n, oracle
    );
    Ok(RunOutput { outputs: vec!["recover.json".into()], notes: Vec::new() })
}

pub fn cmd_sir(resolved: &Resolved) -> Result<RunOutput> {
    let sigma2 = resolved.sigma2.ok_or_else(|| anyhow!("sigma2 required"))?;
    if !(sigma2 > 0.0) {
        bail!("sigma2 must be positive, got {sigma2}");
    }
    let spectrum = simulate_spectrum(
        &resolved.ensemble,
        &resolved.population,
        resolved.p,
        resolved.n,
        resolved.seed,
    )?;
    let h = bandwidth(&resolved.bandwidth, resolved.n)?;
    let kernel_estimate = mmse_sir_limit(
        &TransformSource::Kde { spectrum, kernel: gaussian_kernel(), h },
        sigma2,
        resolved.p1,
    )?;
    let limit_value = match limit_law(resolved)? {
        Some(law) => Some(mmse_sir_limit(&TransformSource::Law(law), sigma2, resolved.p1)?),
        None => None,
    };

    let report = json!({
        "sigma2": sigma2,
        "p1": resolved.p1,
        "kernel_estimate": kernel_estimate,
        "limit_value": limit_value,
    });
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    write_text(&resolved.out, "sir.json", &text)?;
    match limit_value {
        Some(v) => println!("SIR kernel estimate = {kernel_estimate:.6}, limit value = {v:.6}"),
        None => println!("SIR kernel estimate = {kernel_estimate:.6} (no closed-form limit)"),
    }
    Ok(RunOutput { outputs: vec!["sir.json".into()], notes: Vec::new() })
}

pub fn cmd_rate(resolved: &Resolved) -> Result<RunOutput> {
    if resolved.n_values.len() < 3 {
        bail!("rate needs --n-values with at least 3 increasing sizes");
    }
    if limit_law(resolved)?.is_none() {
        bail!("rate requires a population with a known limit law (identity or diagonal)");
    }
    let config = experiment_config(resolved, vec![1.0])?;
    let report = rate_check(&config, &resolved.n_values)?;

    let mut csv = String::from("n,mean_distance\n");
    for (n, d) in report.n_values.iter().zip(&report.distances) {
        let _ = writeln!(csv, "{n},{d}");
    }
    write_text(&resolved.out, "rate.csv", &csv)?;
    println!("fitted log-log exponent = {:.4}", report.fitted_exponent);
    Ok(RunOutput {
        outputs: vec!["rate.csv".into()],
        notes: vec![format!("fitted_exponent={}", report.fitted_exponent)],
    })
}

pub fn run_command(command: &str, resolved: &Resolved) -> Result<()> {
    let run = match command {
        "density" => cmd_density(resolved)?,
        "mse" => cmd_mse(resolved)?,
        "recover" => cmd_recover(resolved)?,
        "sir" => cmd_sir(resolved)?,
        "rate" => cmd_rate(resolved)?,
        other => bail!("unknown command {other}"),
    };
    write_manifest(resolved, command, &run)?;
    Ok(())
}
