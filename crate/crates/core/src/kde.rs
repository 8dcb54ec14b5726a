//! Kernel spectral density estimation.
//!
//! The estimator is `f_n(x) = (1/(p h)) sum_i K((x - mu_i) / h)` over the
//! eigenvalue sample of one covariance matrix, with `F_n` its integral.
//! Kernels are checked against the admissibility conditions (normalization,
//! boundedness, tail decay of `x K(x)`, integrable derivative); the default
//! bandwidth is `h = 0.5 n^{-1/3}` with the sample size `n`, not the
//! dimension.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quad;

type KernelFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Window on which kernel admissibility integrals are evaluated.
const KERNEL_CHECK_WINDOW: f64 = 50.0;

/// Half-width, in bandwidths, of the effective support used when integrating
/// kernel estimates numerically.
pub const KDE_TAIL_WIDTHS: f64 = 10.0;

/// A kernel function together with its derivative (used by the admissibility
/// check) and, when available, its closed-form antiderivative (used by the
/// exact CDF path).
#[derive(Clone)]
pub struct KernelSpec {
    name: String,
    eval: KernelFn,
    derivative: KernelFn,
    cdf: Option<KernelFn>,
}

impl fmt::Debug for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "KernelSpec({})", self.name)
    }
}

impl KernelSpec {
    pub fn new(
        name: impl Into<String>,
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
        derivative: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            eval: Arc::new(eval),
            derivative: Arc::new(derivative),
            cdf: None,
        }
    }

    pub fn with_cdf(mut self, cdf: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.cdf = Some(Arc::new(cdf));
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.eval)(x)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        (self.derivative)(x)
    }

    pub fn cdf(&self, x: f64) -> Option<f64> {
        self.cdf.as_ref().map(|f| f(x))
    }
}

/// Standard normal CDF.
fn gaussian_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// The standard normal density kernel `K(x) = (2 pi)^{-1/2} e^{-x^2/2}`.
pub fn gaussian_kernel() -> KernelSpec {
    let norm = (2.0 * std::f64::consts::PI).sqrt().recip();
    KernelSpec::new(
        "gaussian",
        move |x| norm * (-0.5 * x * x).exp(),
        move |x| -x * norm * (-0.5 * x * x).exp(),
    )
    .with_cdf(gaussian_cdf)
}

/// One admissibility condition with its measured value.
#[derive(Debug, Clone)]
pub struct KernelCheck {
    pub name: &'static str,
    pub measured: f64,
    pub pass: bool,
}

/// Pass/fail report over the four kernel admissibility conditions.
#[derive(Debug, Clone)]
pub struct KernelReport {
    pub checks: Vec<KernelCheck>,
}

impl KernelReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

impl fmt::Display for KernelReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "{:<24} measured {:>12.6e}  {}",
                c.name,
                c.measured,
                if c.pass { "pass" } else { "FAIL" }
            )?;
        }
        Ok(())
    }
}

/// Check the kernel admissibility conditions: unit mass, bounded sup,
/// `|x K(x)| -> 0`, and integrable derivative. A report, not an error.
pub fn check_kernel(k: &KernelSpec) -> KernelReport {
    let w = KERNEL_CHECK_WINDOW;
    let mut checks = Vec::with_capacity(4);

    let mass = quad::integrate(|x| k.eval(x), -w, w, 1e-9).map(|r| r.value);
    checks.push(match mass {
        Ok(v) => KernelCheck { name: "integral K = 1", measured: v, pass: (v - 1.0).abs() <= 1e-6 },
        Err(_) => KernelCheck { name: "integral K = 1", measured: f64::NAN, pass: false },
    });

    let mut sup: f64 = 0.0;
    let samples = 4001;
    for i in 0..samples {
        let x = -w + 2.0 * w * i as f64 / (samples - 1) as f64;
        sup = sup.max(k.eval(x).abs());
    }
    checks.push(KernelCheck { name: "sup |K| finite", measured: sup, pass: sup.is_finite() });

    let tail = |x: f64| (x * k.eval(x)).abs().max((x * k.eval(-x)).abs());
    let (t10, t20, t50) = (tail(10.0), tail(20.0), tail(50.0));
    checks.push(KernelCheck {
        name: "|x K(x)| -> 0",
        measured: t50,
        pass: t10 >= t20 && t20 >= t50 && t50 <= 1e-8,
    });

    // Probe the derivative for undefined values before integrating: on the
    // dense grid and on the exact half-integer lattice, where hand-written
    // kernels put their breakpoints.
    let mut derivative_defined = true;
    for i in 0..samples {
        let x = -w + 2.0 * w * i as f64 / (samples - 1) as f64;
        if !k.derivative(x).is_finite() {
            derivative_defined = false;
        }
    }
    for i in -(2 * w as i64)..=(2 * w as i64) {
        if !k.derivative(i as f64 * 0.5).is_finite() {
            derivative_defined = false;
        }
    }
    let deriv_mass = if derivative_defined {
        quad::integrate(|x| k.derivative(x).abs(), -w, w, 1e-6).map(|r| r.value).ok()
    } else {
        None
    };
    checks.push(match deriv_mass {
        Some(v) if v.is_finite() => {
            KernelCheck { name: "integral |K'| finite", measured: v, pass: true }
        }
        Some(v) => KernelCheck { name: "integral |K'| finite", measured: v, pass: false },
        None => KernelCheck { name: "integral |K'| finite", measured: f64::NAN, pass: false },
    });

    KernelReport { checks }
}

/// Bandwidth selection rule.
#[derive(Debug, Clone, PartialEq)]
pub enum BandwidthRule {
    /// The simulation-study default `h = 0.5 n^{-1/3}`.
    PaperDefault,
    /// `h = coef * n^{-exponent}`.
    Power { coef: f64, exponent: f64 },
    Fixed(f64),
}

/// Resolve a bandwidth rule at sample size `n`.
pub fn bandwidth(rule: &BandwidthRule, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidInput("sample size must be >= 1".into()));
    }
    let h = match rule {
        BandwidthRule::PaperDefault => 0.5 * (n as f64).powf(-1.0 / 3.0),
        BandwidthRule::Power { coef, exponent } => coef * (n as f64).powf(-exponent),
        BandwidthRule::Fixed(h) => *h,
    };
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidInput(format!("bandwidth must be positive, got {h}")));
    }
    Ok(h)
}

/// The eigenvalue sample of one `p x p` covariance matrix formed from `n`
/// observations; eigenvalues kept sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalSpectrum {
    eigenvalues: Vec<f64>,
    n: usize,
    p: usize,
}

impl EmpiricalSpectrum {
    pub fn new(mut eigenvalues: Vec<f64>, n: usize) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::InvalidInput("empty spectrum".into()));
        }
        if n == 0 {
            return Err(Error::InvalidInput("sample size must be >= 1".into()));
        }
        if eigenvalues.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("eigenvalues must be finite".into()));
        }
        eigenvalues.sort_by(f64::total_cmp);
        let p = eigenvalues.len();
        Ok(Self { eigenvalues, n, p })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn max(&self) -> f64 {
        self.eigenvalues[self.p - 1]
    }

    /// Aspect ratio `c_n = p / n`.
    pub fn aspect_ratio(&self) -> f64 {
        self.p as f64 / self.n as f64
    }

    /// Value of the empirical spectral distribution at `x` (right-continuous
    /// step function).
    pub fn esd(&self, x: f64) -> f64 {
        let count = self.eigenvalues.partition_point(|&mu| mu <= x);
        count as f64 / self.p as f64
    }
}

fn validate_kde_args(spec: &EmpiricalSpectrum, h: f64) -> Result<()> {
    if spec.eigenvalues.is_empty() {
        return Err(Error::InvalidInput("empty spectrum".into()));
    }
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidInput(format!("bandwidth must be positive, got {h}")));
    }
    Ok(())
}

/// The kernel density estimate `f_n(x) = (1/(p h)) sum_i K((x - mu_i)/h)`.
pub fn kde_density(spec: &EmpiricalSpectrum, k: &KernelSpec, h: f64, x: f64) -> Result<f64> {
    validate_kde_args(spec, h)?;
    let sum: f64 = spec.eigenvalues.iter().map(|&mu| k.eval((x - mu) / h)).sum();
    Ok(sum / (spec.p as f64 * h))
}

/// The smoothed CDF `F_n(x)`. Kernels with a closed-form antiderivative use
/// the exact average `(1/p) sum_i Kcdf((x - mu_i)/h)`; generic kernels fall
/// back to adaptive quadrature of the density from the left tail.
pub fn kde_cdf(spec: &EmpiricalSpectrum, k: &KernelSpec, h: f64, x: f64) -> Result<f64> {
    validate_kde_args(spec, h)?;
    if k.cdf(0.0).is_some() {
        let sum: f64 =
            spec.eigenvalues.iter().map(|&mu| k.cdf((x - mu) / h).expect("checked")).sum();
        return Ok(sum / spec.p as f64);
    }
    let lo = spec.min() - KDE_TAIL_WIDTHS * h;
    if x <= lo {
        return Ok(0.0);
    }
    Ok(quad::integrate(|t| kde_density(spec, k, h, t).expect("validated"), lo, x, 1e-9)?.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn box_kernel() -> KernelSpec {
        // Flat on [-1, 1]; the derivative does not exist at the edges.
        KernelSpec::new(
            "box",
            |x| if x.abs() <= 1.0 { 0.5 } else { 0.0 },
            |x| if (x.abs() - 1.0).abs() < 1e-12 { f64::NAN } else { 0.0 },
        )
    }

    #[test]
    fn gaussian_values() {
        let k = gaussian_kernel();
        let expected = (2.0 * std::f64::consts::PI).sqrt().recip();
        assert_abs_diff_eq!(k.eval(0.0), expected, epsilon = 1e-16);
        assert_abs_diff_eq!(k.eval(0.0), 0.3989423, epsilon = 1e-7);
        for x in [0.5, 1.0, 2.0] {
            assert_eq!(k.eval(x), k.eval(-x));
        }
        let mass = quad::integrate(|x| k.eval(x), -50.0, 50.0, 1e-9).unwrap().value;
        assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn gaussian_passes_all_checks() {
        let report = check_kernel(&gaussian_kernel());
        assert_eq!(report.checks.len(), 4);
        assert!(report.all_pass(), "{report}");
    }

    #[test]
    fn box_kernel_flagged_on_derivative() {
        let report = check_kernel(&box_kernel());
        let by_name = |n: &str| report.checks.iter().find(|c| c.name.contains(n)).unwrap();
        assert!(by_name("integral K").pass);
        assert!(by_name("x K(x)").pass);
        assert!(!by_name("K'").pass);
    }

    #[test]
    fn scaled_kernel_fails_normalization() {
        let k = KernelSpec::new(
            "double-gaussian",
            |x| 2.0 * (2.0 * std::f64::consts::PI).sqrt().recip() * (-0.5 * x * x).exp(),
            |x| -2.0 * x * (2.0 * std::f64::consts::PI).sqrt().recip() * (-0.5 * x * x).exp(),
        );
        let report = check_kernel(&k);
        let norm = report.checks.iter().find(|c| c.name.contains("integral K")).unwrap();
        assert!(!norm.pass);
        assert_abs_diff_eq!(norm.measured, 2.0, epsilon = 1e-5);
    }

    #[test]
    fn bandwidth_rules() {
        let h200 = bandwidth(&BandwidthRule::PaperDefault, 200).unwrap();
        assert_abs_diff_eq!(h200, 0.5 * 200f64.powf(-1.0 / 3.0), epsilon = 1e-16);
        assert_abs_diff_eq!(h200, 0.0854988, epsilon = 1e-7);
        let h3200 = bandwidth(&BandwidthRule::PaperDefault, 3200).unwrap();
        assert_abs_diff_eq!(h3200, 0.5 * 3200f64.powf(-1.0 / 3.0), epsilon = 1e-16);
        assert_abs_diff_eq!(h3200, 0.0339302, epsilon = 1e-7);
        assert_eq!(bandwidth(&BandwidthRule::Fixed(0.1), 10).unwrap(), 0.1);
        let power = bandwidth(&BandwidthRule::Power { coef: 1.0, exponent: 0.4 }, 200).unwrap();
        assert_abs_diff_eq!(power, 200f64.powf(-0.4), epsilon = 1e-16);
        assert!(bandwidth(&BandwidthRule::Fixed(-0.1), 10).is_err());
        assert!(bandwidth(&BandwidthRule::Fixed(0.0), 10).is_err());
    }

    #[test]
    fn density_point_values() {
        let k = gaussian_kernel();
        let single = EmpiricalSpectrum::new(vec![1.0], 10).unwrap();
        assert_abs_diff_eq!(
            kde_density(&single, &k, 1.0, 1.0).unwrap(),
            0.3989422804014327,
            epsilon = 1e-15
        );
        let pair = EmpiricalSpectrum::new(vec![0.0, 2.0], 10).unwrap();
        let expected = k.eval(1.0);
        assert_abs_diff_eq!(kde_density(&pair, &k, 1.0, 1.0).unwrap(), expected, epsilon = 1e-16);
        assert_abs_diff_eq!(expected, 0.2419707, epsilon = 1e-7);
    }

    #[test]
    fn density_errors() {
        let k = gaussian_kernel();
        let spec = EmpiricalSpectrum::new(vec![1.0], 10).unwrap();
        assert!(kde_density(&spec, &k, 0.0, 1.0).is_err());
        assert!(kde_density(&spec, &k, -0.5, 1.0).is_err());
        assert!(EmpiricalSpectrum::new(vec![], 10).is_err());
    }

    #[test]
    fn cdf_gaussian_path() {
        let k = gaussian_kernel();
        let single = EmpiricalSpectrum::new(vec![1.0], 10).unwrap();
        assert_abs_diff_eq!(kde_cdf(&single, &k, 1.0, 1.0).unwrap(), 0.5, epsilon = 1e-12);
        assert!(kde_cdf(&single, &k, 1.0, 1.0 - 20.0).unwrap() <= 1e-6);
        let pair = EmpiricalSpectrum::new(vec![0.0, 2.0], 10).unwrap();
        assert_abs_diff_eq!(
            kde_cdf(&pair, &k, 0.5, 0.0).unwrap(),
            0.2500158356209166,
            epsilon = 1e-9
        );
    }

    #[test]
    fn cdf_quadrature_path_matches_box_kernel_closed_form() {
        let k = box_kernel();
        let spec = EmpiricalSpectrum::new(vec![0.0], 10).unwrap();
        // For one atom at 0 and h = 1 the CDF is (x + 1)/2 clipped to [0, 1].
        for (x, want) in [(-2.0, 0.0), (0.0, 0.5), (0.3, 0.65), (2.0, 1.0)] {
            let got = kde_cdf(&spec, &k, 1.0, x).unwrap();
            assert_abs_diff_eq!(got, want, epsilon = 1e-6);
        }
    }

    #[test]
    fn density_normalizes() {
        let k = gaussian_kernel();
        let spec = EmpiricalSpectrum::new(vec![0.3, 0.9, 1.4, 2.2, 5.0], 20).unwrap();
        let h = 0.25;
        let mass = quad::integrate(
            |x| kde_density(&spec, &k, h, x).unwrap(),
            spec.min() - 10.0 * h,
            spec.max() + 10.0 * h,
            1e-9,
        )
        .unwrap()
        .value;
        assert!((mass - 1.0).abs() <= 1e-3, "mass {mass}");
    }

    #[test]
    fn cdf_monotone_and_consistent_with_density() {
        let k = gaussian_kernel();
        let spec = EmpiricalSpectrum::new(vec![0.5, 1.0, 1.8], 12).unwrap();
        let h = 0.2;
        let mut prev = -1.0;
        for i in 0..200 {
            let x = -0.5 + 3.0 * i as f64 / 199.0;
            let v = kde_cdf(&spec, &k, h, x).unwrap();
            assert!(v >= prev);
            prev = v;
        }
        // Central difference of the CDF against the density.
        let step = h / 100.0;
        for x in [0.6, 1.1, 1.5] {
            let deriv = (kde_cdf(&spec, &k, h, x + step).unwrap()
                - kde_cdf(&spec, &k, h, x - step).unwrap())
                / (2.0 * step);
            let dens = kde_density(&spec, &k, h, x).unwrap();
            assert!((deriv - dens).abs() <= 1e-4, "x = {x}: {deriv} vs {dens}");
        }
    }

    #[test]
    fn smoothing_limit_recovers_esd() {
        let k = gaussian_kernel();
        let spec = EmpiricalSpectrum::new(vec![0.0, 1.0, 3.0], 12).unwrap();
        let spread = spec.max() - spec.min();
        let h = 1e-4 * spread;
        // x between well-separated eigenvalues.
        let x = 2.0;
        let kde = kde_cdf(&spec, &k, h, x).unwrap();
        assert!((kde - spec.esd(x)).abs() <= 1e-6);
    }

    proptest! {
        #[test]
        fn prop_translation_equivariance(
            shift in -10.0f64..10.0,
            x in -3.0f64..3.0,
            mu in proptest::collection::vec(-2.0f64..2.0, 1..6),
        ) {
            let k = gaussian_kernel();
            let spec = EmpiricalSpectrum::new(mu.clone(), 10).unwrap();
            let shifted = EmpiricalSpectrum::new(mu.iter().map(|v| v + shift).collect(), 10).unwrap();
            let a = kde_density(&spec, &k, 0.5, x).unwrap();
            let b = kde_density(&shifted, &k, 0.5, x + shift).unwrap();
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }
}
