//! Monte-Carlo experiment engine.
//!
//! Density-curve generation, mean-square-error tables (against a known limit
//! or against the replicate average when the limit is unknown), Kolmogorov
//! distances of empirical spectral distributions to a reference law, and
//! empirical convergence-rate checks.
//!
//! Replicates run concurrently, each on its own derived RNG seed; reductions
//! are indexed, so results are bit-identical regardless of scheduling.

use rayon::prelude::*;

use crate::ensembles::{
    build_population, derive_replicate_seed, sample_entries, EntryDistribution, PopulationSpec,
};
use crate::error::{Error, Result};
use crate::kde::{bandwidth, kde_density, BandwidthRule, EmpiricalSpectrum, KernelSpec};
use crate::limitlaw::{
    limit_density, mp_density, uniform_grid, DensityCurve, SpectralLaw, DEFAULT_ETA,
};
use crate::specmat::{eigenvalues, sample_covariance};

/// The ten evaluation points of the simulation study's MSE tables.
pub fn paper_eval_points() -> Vec<f64> {
    vec![0.30, 0.511, 0.722, 0.933, 1.144, 1.356, 1.567, 1.778, 1.989, 2.20]
}

/// Declarative description of one Monte-Carlo experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub ensemble: EntryDistribution,
    pub population: PopulationSpec,
    pub p: usize,
    pub n: usize,
    pub replicates: usize,
    pub bandwidth: BandwidthRule,
    pub kernel: KernelSpec,
    pub eval_points: Vec<f64>,
    pub seed: u64,
    /// The limiting law, when known; selects the MSE mode.
    pub limit: Option<SpectralLaw>,
    /// The consistency theorems assume `c = p/n` in `(0, 1)`; set this to
    /// run wide configurations anyway.
    pub allow_c_ge_one: bool,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidInput("replicates must be >= 1".into()));
        }
        if self.p == 0 || self.n == 0 {
            return Err(Error::InvalidInput("p and n must be >= 1".into()));
        }
        if self.p >= self.n && !self.allow_c_ge_one {
            return Err(Error::InvalidInput(format!(
                "p = {} >= n = {} gives c >= 1; set allow_c_ge_one to override",
                self.p, self.n
            )));
        }
        if self.population.p() != self.p {
            return Err(Error::DimensionMismatch(format!(
                "population dimension {} != p = {}",
                self.population.p(),
                self.p
            )));
        }
        if self.eval_points.is_empty() {
            return Err(Error::InvalidInput("eval_points must be nonempty".into()));
        }
        self.population.validate()
    }

    fn resolved_bandwidth(&self) -> Result<f64> {
        bandwidth(&self.bandwidth, self.n)
    }
}

/// How an MSE table was referenced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MseMode {
    VsLimit,
    VsAverage,
}

impl std::fmt::Display for MseMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MseMode::VsLimit => "vs_limit",
            MseMode::VsAverage => "vs_average",
        })
    }
}

/// Per-point mean square errors across replicates.
#[derive(Debug, Clone, PartialEq)]
pub struct MseTable {
    pub eval_points: Vec<f64>,
    pub mse: Vec<f64>,
    pub mode: MseMode,
    pub replicates: usize,
}

/// Kolmogorov distances against increasing sample sizes plus the fitted
/// log-log decay exponent.
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub n_values: Vec<usize>,
    pub distances: Vec<f64>,
    pub fitted_exponent: f64,
}

/// Sample one covariance matrix and return its eigenvalue spectrum. Entry
/// draws use stream 0 of `seed`, population draws stream 1.
pub fn simulate_spectrum(
    ensemble: &EntryDistribution,
    population: &PopulationSpec,
    p: usize,
    n: usize,
    seed: u64,
) -> Result<EmpiricalSpectrum> {
    let x = sample_entries(ensemble, p, n, seed)?;
    let pop = build_population(population, seed)?;
    let a = sample_covariance(&pop.t_sqrt, &x)?;
    EmpiricalSpectrum::new(eigenvalues(&a)?, n)
}

/// Kolmogorov sup-distance between the empirical spectral distribution of
/// `spec` and a reference CDF.
///
/// The sup is attained at eigenvalue jump points; both one-sided limits of
/// the step function are compared, the left limit of the ESD against the
/// reference's left limit (evaluated just below the jump), so references
/// sharing a jump with the ESD are handled correctly.
pub fn kolmogorov_distance(spec: &EmpiricalSpectrum, reference_cdf: impl Fn(f64) -> f64) -> f64 {
    let p = spec.p() as f64;
    let mut sup: f64 = 0.0;
    for (i, &mu) in spec.eigenvalues().iter().enumerate() {
        let upper = (i + 1) as f64 / p - reference_cdf(mu);
        let lower = i as f64 / p - reference_cdf(mu.next_down());
        sup = sup.max(upper.abs()).max(lower.abs());
    }
    sup.min(1.0)
}

/// An evaluable reference CDF built from a limit law by dense trapezoid
/// integration of its density and linear interpolation.
pub struct ReferenceCdf {
    grid: Vec<f64>,
    values: Vec<f64>,
}

impl ReferenceCdf {
    /// Tabulate the law's CDF on `points` nodes across its support hint.
    /// Single-atom populations use the closed-form MP density (scaled to the
    /// atom location); general laws go through the fixed-point solver.
    pub fn from_law(law: &SpectralLaw, points: usize) -> Result<Self> {
        let (lo, hi) = law.support_hint();
        let lo = lo.max(0.0);
        let grid = uniform_grid(lo, hi, points.max(2))?;
        let single_atom = law.h().atoms().len() == 1;
        let scale = law.h().atoms()[0].0;
        let density = |x: f64| -> Result<f64> {
            if single_atom {
                Ok(mp_density(law.c(), x / scale)? / scale)
            } else {
                limit_density(law, x, DEFAULT_ETA)
            }
        };
        let mut values = Vec::with_capacity(grid.len());
        let mut acc = law.point_mass_at_zero();
        let mut prev = density(grid[0])?;
        values.push(acc);
        for k in 1..grid.len() {
            let cur = density(grid[k])?;
            acc += 0.5 * (grid[k] - grid[k - 1]) * (prev + cur);
            values.push(acc);
            prev = cur;
        }
        Ok(Self { grid, values })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.grid.len();
        if x <= self.grid[0] {
            return if x >= 0.0 { self.values[0] } else { 0.0 };
        }
        if x >= self.grid[n - 1] {
            return 1.0;
        }
        let k = self.grid.partition_point(|&g| g <= x);
        let (x0, x1) = (self.grid[k - 1], self.grid[k]);
        let (y0, y1) = (self.values[k - 1], self.values[k]);
        let v = y0 + (y1 - y0) * (x - x0) / (x1 - x0);
        v.clamp(0.0, 1.0)
    }
}

/// Kernel density estimate of one sampled matrix on the configured
/// evaluation points. Deterministic for a fixed seed.
pub fn run_density_curve(config: &ExperimentConfig) -> Result<DensityCurve> {
    config.validate()?;
    let h = config.resolved_bandwidth()?;
    let spectrum =
        simulate_spectrum(&config.ensemble, &config.population, config.p, config.n, config.seed)?;
    let values = config
        .eval_points
        .iter()
        .map(|&x| kde_density(&spectrum, &config.kernel, h, x))
        .collect::<Result<Vec<f64>>>()?;
    DensityCurve::new(config.eval_points.clone(), values)
}

/// Density estimates for every replicate, row `i` from the seed derived for
/// replicate `i`.
fn replicate_estimates(config: &ExperimentConfig, h: f64) -> Result<Vec<Vec<f64>>> {
    (0..config.replicates)
        .into_par_iter()
        .map(|i| {
            let seed = derive_replicate_seed(config.seed, i as u64);
            let spectrum =
                simulate_spectrum(&config.ensemble, &config.population, config.p, config.n, seed)?;
            config
                .eval_points
                .iter()
                .map(|&x| kde_density(&spectrum, &config.kernel, h, x))
                .collect::<Result<Vec<f64>>>()
        })
        .collect()
}

/// Mean square error of the kernel estimator across replicates, either
/// against the known limit density or against the replicate average when no
/// limit is configured.
pub fn run_mse_experiment(config: &ExperimentConfig) -> Result<MseTable> {
    config.validate()?;
    let h = config.resolved_bandwidth()?;
    let estimates = replicate_estimates(config, h)?;
    let r = config.replicates as f64;
    let points = config.eval_points.len();

    let (mode, reference): (MseMode, Vec<f64>) = match &config.limit {
        Some(law) => {
            let reference = config
                .eval_points
                .iter()
                .map(|&x| limit_density(law, x, DEFAULT_ETA))
                .collect::<Result<Vec<f64>>>()?;
            (MseMode::VsLimit, reference)
        }
        None => {
            let mut mean = vec![0.0; points];
            for row in &estimates {
                for (m, v) in mean.iter_mut().zip(row) {
                    *m += v;
                }
            }
            for m in &mut mean {
                *m /= r;
            }
            (MseMode::VsAverage, mean)
        }
    };

    let mut mse = vec![0.0; points];
    for row in &estimates {
        for ((m, v), f_ref) in mse.iter_mut().zip(row).zip(&reference) {
            let d = v - f_ref;
            *m += d * d;
        }
    }
    for m in &mut mse {
        *m /= r;
    }

    Ok(MseTable {
        eval_points: config.eval_points.clone(),
        mse,
        mode,
        replicates: config.replicates,
    })
}

/// Mean Kolmogorov distance of the ESD to the configured limit law at each
/// sample size (holding `c = p/n` fixed), plus the fitted log-log exponent.
pub fn rate_check(base: &ExperimentConfig, n_values: &[usize]) -> Result<RateReport> {
    base.validate()?;
    if n_values.len() < 3 {
        return Err(Error::InvalidInput("need >= 3 n-values".into()));
    }
    if n_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("n-values must be strictly increasing".into()));
    }
    let law = base
        .limit
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("rate check requires a limit law".into()))?;
    let reference = ReferenceCdf::from_law(law, 4001)?;
    let c = base.p as f64 / base.n as f64;

    let mut distances = Vec::with_capacity(n_values.len());
    for (k, &n) in n_values.iter().enumerate() {
        let p = (c * n as f64).round() as usize;
        let population = scale_population(&base.population, p)?;
        let per_rep: Vec<f64> = (0..base.replicates)
            .into_par_iter()
            .map(|i| {
                // Offset by the size index so sizes draw distinct streams.
                let seed = derive_replicate_seed(
                    base.seed,
                    (k * base.replicates + i) as u64,
                );
                let spectrum = simulate_spectrum(&base.ensemble, &population, p, n, seed)?;
                Ok(kolmogorov_distance(&spectrum, |x| reference.eval(x)))
            })
            .collect::<Result<Vec<f64>>>()?;
        distances.push(per_rep.iter().sum::<f64>() / per_rep.len() as f64);
    }

    // Least-squares slope of log distance against log n.
    let xs: Vec<f64> = n_values.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = distances.iter().map(|&d| d.max(1e-300).ln()).collect();
    let x_mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let y_mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        num += (x - x_mean) * (y - y_mean);
        den += (x - x_mean) * (x - x_mean);
    }
    Ok(RateReport { n_values: n_values.to_vec(), distances, fitted_exponent: num / den })
}

/// The base population re-dimensioned to `p` for rate sweeps.
fn scale_population(population: &PopulationSpec, p: usize) -> Result<PopulationSpec> {
    Ok(match population {
        PopulationSpec::Identity { .. } => PopulationSpec::Identity { p },
        PopulationSpec::Diagonal { measure, .. } => {
            PopulationSpec::Diagonal { measure: measure.clone(), p }
        }
        PopulationSpec::Wishart { entry, n2, p: old_p } => {
            if *old_p == 0 {
                return Err(Error::InvalidInput("population dimension must be >= 1".into()));
            }
            let ratio = *n2 as f64 / *old_p as f64;
            PopulationSpec::Wishart { entry: entry.clone(), p, n2: (ratio * p as f64).round() as usize }
        }
    })
}

/// Sup of `|f_n - reference|` over a uniform grid on `[window.0, window.1]`
/// for one sampled spectrum.
pub fn sup_density_distance(
    spectrum: &EmpiricalSpectrum,
    kernel: &KernelSpec,
    h: f64,
    reference: impl Fn(f64) -> f64,
    window: (f64, f64),
    points: usize,
) -> Result<f64> {
    let grid = uniform_grid(window.0, window.1, points)?;
    let mut sup: f64 = 0.0;
    for &x in &grid {
        let est = kde_density(spectrum, kernel, h, x)?;
        sup = sup.max((est - reference(x)).abs());
    }
    Ok(sup)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian_kernel;
    use crate::measure::DiscreteMeasure;

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            ensemble: EntryDistribution::ShiftedExponential,
            population: PopulationSpec::Identity { p: 10 },
            p: 10,
            n: 40,
            replicates: 8,
            bandwidth: BandwidthRule::PaperDefault,
            kernel: gaussian_kernel(),
            eval_points: vec![0.5, 1.0, 1.5],
            seed: 7,
            limit: Some(SpectralLaw::marcenko_pastur(0.25).unwrap()),
            allow_c_ge_one: false,
        }
    }

    #[test]
    fn config_validation() {
        let mut config = small_config();
        assert!(config.validate().is_ok());
        config.replicates = 0;
        assert!(config.validate().is_err());
        let mut config = small_config();
        config.p = 50;
        assert!(config.validate().is_err());
        let mut config = small_config();
        config.n = 10;
        assert!(config.validate().is_err());
        config.allow_c_ge_one = true;
        config.population = PopulationSpec::Identity { p: 10 };
        assert!(config.validate().is_ok());
    }

    #[test]
    fn kolmogorov_identical_step_is_zero() {
        let spec = EmpiricalSpectrum::new(vec![1.0], 4).unwrap();
        let step = |x: f64| if x >= 1.0 { 1.0 } else { 0.0 };
        assert_eq!(kolmogorov_distance(&spec, step), 0.0);
    }

    #[test]
    fn kolmogorov_self_quantiles_bound() {
        // ESD sampled at the reference's own mid-quantiles.
        let p = 40;
        let quantiles: Vec<f64> = (0..p).map(|i| (i as f64 + 0.5) / p as f64).collect();
        let spec = EmpiricalSpectrum::new(quantiles, 100).unwrap();
        let uniform = |x: f64| x.clamp(0.0, 1.0);
        let d = kolmogorov_distance(&spec, uniform);
        assert!(d <= 0.5 / p as f64 + 1e-12, "distance {d}");
    }

    #[test]
    fn kolmogorov_matches_counting_reimplementation() {
        // Independent O(p^2) counting implementation, duplicates included.
        let values = vec![0.1, 0.4, 0.4, 0.9, 1.3, 1.3, 1.3, 2.0];
        let spec = EmpiricalSpectrum::new(values.clone(), 16).unwrap();
        let reference = |x: f64| (x / 2.0).clamp(0.0, 1.0);
        let p = values.len() as f64;
        let mut brute: f64 = 0.0;
        for &x in &values {
            let le = values.iter().filter(|&&v| v <= x).count() as f64 / p;
            let lt = values.iter().filter(|&&v| v < x).count() as f64 / p;
            brute = brute.max((le - reference(x)).abs());
            brute = brute.max((lt - reference(x.next_down())).abs());
        }
        assert_eq!(kolmogorov_distance(&spec, reference), brute);
    }

    #[test]
    fn mp_reference_cdf_sane() {
        let law = SpectralLaw::marcenko_pastur(0.25).unwrap();
        let cdf = ReferenceCdf::from_law(&law, 2001).unwrap();
        assert_eq!(cdf.eval(0.0), 0.0);
        assert_eq!(cdf.eval(3.0), 1.0);
        let mid = cdf.eval(1.0);
        assert!(mid > 0.3 && mid < 0.7, "mid {mid}");
        assert!(cdf.eval(1.5) >= cdf.eval(1.0));
    }

    #[test]
    fn density_curve_deterministic_and_concentrated() {
        let mut config = small_config();
        config.p = 50;
        config.n = 200;
        config.population = PopulationSpec::Identity { p: 50 };
        config.eval_points = uniform_grid(0.05, 3.5, 120).unwrap();
        let curve = run_density_curve(&config).unwrap();
        let again = run_density_curve(&config).unwrap();
        assert_eq!(curve, again);
        // Qualitative MP shape: mass concentrated on the support, bigger in
        // the bulk than far outside.
        let at = |x: f64| {
            let k = curve.grid().iter().position(|&g| g >= x).unwrap();
            curve.values()[k]
        };
        assert!(at(1.0) > 0.3);
        assert!(at(3.4) < 0.05);
        assert!(curve.values().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn mse_bit_deterministic() {
        let config = small_config();
        let a = run_mse_experiment(&config).unwrap();
        let b = run_mse_experiment(&config).unwrap();
        assert_eq!(a, b);
        assert!(a.mse.iter().all(|&v| v >= 0.0));
        assert_eq!(a.mode, MseMode::VsLimit);
    }

    #[test]
    fn mse_replicate_order_invariance() {
        // The reduction must match an explicitly permuted evaluation order.
        let config = small_config();
        let h = config.resolved_bandwidth().unwrap();
        let table = run_mse_experiment(&config).unwrap();

        let order: Vec<usize> = (0..config.replicates).rev().collect();
        let mut estimates = vec![Vec::new(); config.replicates];
        for &i in &order {
            let seed = derive_replicate_seed(config.seed, i as u64);
            let spectrum = simulate_spectrum(
                &config.ensemble,
                &config.population,
                config.p,
                config.n,
                seed,
            )
            .unwrap();
            estimates[i] = config
                .eval_points
                .iter()
                .map(|&x| kde_density(&spectrum, &config.kernel, h, x).unwrap())
                .collect();
        }
        let law = config.limit.as_ref().unwrap();
        for (j, &x) in config.eval_points.iter().enumerate() {
            let f_ref = limit_density(law, x, DEFAULT_ETA).unwrap();
            let mse: f64 = estimates
                .iter()
                .map(|row| (row[j] - f_ref) * (row[j] - f_ref))
                .sum::<f64>()
                / config.replicates as f64;
            assert_eq!(mse, table.mse[j]);
        }
    }

    #[test]
    fn vs_average_mean_centering() {
        let mut config = small_config();
        config.limit = None;
        let h = config.resolved_bandwidth().unwrap();
        let table = run_mse_experiment(&config).unwrap();
        assert_eq!(table.mode, MseMode::VsAverage);

        // sum_i (f_i(x) - mean(x)) vanishes up to rounding.
        for (j, &x) in config.eval_points.iter().enumerate() {
            let mut values = Vec::new();
            for i in 0..config.replicates {
                let seed = derive_replicate_seed(config.seed, i as u64);
                let spectrum = simulate_spectrum(
                    &config.ensemble,
                    &config.population,
                    config.p,
                    config.n,
                    seed,
                )
                .unwrap();
                values.push(kde_density(&spectrum, &config.kernel, h, x).unwrap());
            }
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            let centered: f64 = values.iter().map(|v| v - mean).sum();
            assert!(centered.abs() <= 1e-12, "x = {x}: {centered}");
            assert!(table.mse[j] >= 0.0);
        }
    }

    #[test]
    fn rate_check_guards() {
        let config = small_config();
        assert!(matches!(
            rate_check(&config, &[100]),
            Err(Error::InvalidInput(msg)) if msg.contains(">= 3 n-values")
        ));
        assert!(rate_check(&config, &[100, 100, 200]).is_err());
        let mut no_limit = small_config();
        no_limit.limit = None;
        assert!(rate_check(&no_limit, &[100, 200, 400]).is_err());
    }

    #[test]
    fn rate_check_smoke() {
        let mut config = small_config();
        config.p = 25;
        config.n = 100;
        config.population = PopulationSpec::Identity { p: 25 };
        config.replicates = 5;
        let report = rate_check(&config, &[100, 200, 400]).unwrap();
        assert_eq!(report.distances.len(), 3);
        assert!(report.distances.iter().all(|&d| (0.0..=1.0).contains(&d)));
        assert!(report.distances[2] < report.distances[0]);
        assert!(report.fitted_exponent < 0.0);
    }

    #[test]
    fn paper_eval_points_spacing() {
        let pts = paper_eval_points();
        assert_eq!(pts.len(), 10);
        assert_eq!(pts[0], 0.30);
        assert_eq!(pts[9], 2.20);
    }

    #[test]
    fn wishart_population_scaling_keeps_ratio() {
        let base = PopulationSpec::Wishart {
            entry: EntryDistribution::Rademacher,
            p: 50,
            n2: 200,
        };
        match scale_population(&base, 200).unwrap() {
            PopulationSpec::Wishart { n2, p, .. } => {
                assert_eq!(p, 200);
                assert_eq!(n2, 800);
            }
            _ => panic!("kind changed"),
        }
    }

    #[test]
    fn diagonal_population_mse_runs() {
        let measure = DiscreteMeasure::new(vec![(1.0, 0.5), (2.0, 0.5)]).unwrap();
        let config = ExperimentConfig {
            ensemble: EntryDistribution::Rademacher,
            population: PopulationSpec::Diagonal { measure: measure.clone(), p: 12 },
            p: 12,
            n: 48,
            replicates: 4,
            bandwidth: BandwidthRule::PaperDefault,
            kernel: gaussian_kernel(),
            eval_points: vec![0.8, 1.5, 2.5],
            seed: 3,
            limit: Some(SpectralLaw::new(0.25, measure).unwrap()),
            allow_c_ge_one: false,
        };
        let table = run_mse_experiment(&config).unwrap();
        assert_eq!(table.mse.len(), 3);
        assert!(table.mse.iter().all(|&v| v.is_finite() && v >= 0.0));
    }
}
