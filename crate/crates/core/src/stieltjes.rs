//! Stieltjes-transform utilities and the two downstream applications: the
//! MMSE-SIR functional and recovery of the population spectral distribution.
//!
//! The recovery pipeline follows the chain
//! `m_{f_n}(z) -> m__{f_n}(z) -> z_1 = -1/m_ -> s(z_1) = m_(c - 1 - z m_)/c`,
//! where `s(z_1)` is the Stieltjes transform of the population spectral
//! distribution `H` evaluated on the curved image of the companion map.
//! Because that image is not a horizontal line, `H`'s moments are extracted
//! by least-squares fitting of the large-argument expansion
//! `-s(z_1) ~ 1/z_1 + m1/z_1^2 + m2/z_1^3 + ...` over a contour placed to the
//! right of the support, rather than by pointwise inversion.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::kde::{kde_density, EmpiricalSpectrum, KernelSpec, KDE_TAIL_WIDTHS};
use crate::limitlaw::{
    companion_from_primary, limit_density, primary_from_companion, solve_silverstein, SpectralLaw,
    DEFAULT_ETA,
};
use crate::quad;

/// Absolute tolerance for the adaptive quadrature behind kernel-estimate
/// transforms.
const STIELTJES_QUAD_TOL: f64 = 1e-9;

/// Looser tolerance for the inversion-formula mass integrals, whose own
/// accuracy is dominated by the `v -> 0` limit, not the quadrature.
const INVERSION_QUAD_TOL: f64 = 1e-6;

/// A distribution whose Stieltjes transform can be evaluated: a raw
/// eigenvalue sample, its kernel smoothing, or an exact limit law.
#[derive(Debug, Clone)]
pub enum TransformSource {
    Empirical(EmpiricalSpectrum),
    Kde { spectrum: EmpiricalSpectrum, kernel: KernelSpec, h: f64 },
    Law(SpectralLaw),
}

impl TransformSource {
    /// Interval carrying (essentially) all of the source's mass.
    fn support_hint(&self) -> (f64, f64) {
        match self {
            Self::Empirical(s) => (s.min(), s.max()),
            Self::Kde { spectrum, h, .. } => {
                (spectrum.min() - KDE_TAIL_WIDTHS * h, spectrum.max() + KDE_TAIL_WIDTHS * h)
            }
            Self::Law(law) => law.support_hint(),
        }
    }
}

/// Stieltjes transform `m_F(z) = int (x - z)^{-1} dF(x)` of the source,
/// `z` in the upper half-plane.
pub fn stieltjes(source: &TransformSource, z: Complex64) -> Result<Complex64> {
    if !(z.im > 0.0) {
        return Err(Error::InvalidInput(format!("z must lie in the upper half-plane, got {z}")));
    }
    match source {
        TransformSource::Empirical(spec) => {
            let sum: Complex64 = spec.eigenvalues().iter().map(|&mu| (mu - z).inv()).sum();
            Ok(sum / spec.p() as f64)
        }
        TransformSource::Kde { spectrum, kernel, h } => {
            let (lo, hi) = source.support_hint();
            let f = |x: f64| -> Complex64 {
                let density = kde_density(spectrum, kernel, *h, x).expect("validated");
                density * (x - z).inv()
            };
            Ok(quad::integrate_complex(f, lo, hi, STIELTJES_QUAD_TOL)?.value)
        }
        TransformSource::Law(law) => {
            let m_comp = solve_silverstein(law, z)?;
            primary_from_companion(law.c(), m_comp, z)
        }
    }
}

/// Limiting MMSE-SIR functional `p1 * int (x + sigma2)^{-1} dF(x)` against
/// the source distribution.
pub fn mmse_sir_limit(source: &TransformSource, sigma2: f64, p1: f64) -> Result<f64> {
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidInput(format!("sigma2 must be positive, got {sigma2}")));
    }
    if !(p1 > 0.0) {
        return Err(Error::InvalidInput(format!("p1 must be positive, got {p1}")));
    }
    let value = match source {
        TransformSource::Empirical(spec) => {
            if spec.min() + sigma2 <= 0.0 {
                return Err(Error::InvalidInput("source support touches -sigma2".into()));
            }
            spec.eigenvalues().iter().map(|&mu| (mu + sigma2).recip()).sum::<f64>()
                / spec.p() as f64
        }
        TransformSource::Kde { spectrum, kernel, h } => {
            let (lo, hi) = source.support_hint();
            if lo + sigma2 <= 0.0 {
                return Err(Error::InvalidInput(
                    "kernel-estimate support truncation reaches -sigma2".into(),
                ));
            }
            let f =
                |x: f64| kde_density(spectrum, kernel, *h, x).expect("validated") / (x + sigma2);
            quad::integrate(f, lo, hi, STIELTJES_QUAD_TOL)?.value
        }
        TransformSource::Law(law) => {
            let (lo, hi) = source.support_hint();
            let lo = lo.max(0.0);
            if lo + sigma2 <= 0.0 {
                return Err(Error::InvalidInput("law support touches -sigma2".into()));
            }
            let f = |x: f64| limit_density(law, x, DEFAULT_ETA).expect("in-support eval") / (x + sigma2);
            let continuous = quad::integrate(f, lo, hi, 1e-8)?.value;
            continuous + law.point_mass_at_zero() / sigma2
        }
    };
    Ok(p1 * value)
}

/// One step of the recovery chain at a single `z`: returns `(z_1, s(z_1))`.
///
/// `z_1 = -1/m_(z)` must land in the upper half-plane; it fails otherwise,
/// which signals a too-large bandwidth or a `z` too close to the support.
pub fn recover_s_from(
    source: &TransformSource,
    c: f64,
    z: Complex64,
) -> Result<(Complex64, Complex64)> {
    if !(c > 0.0 && c <= 1.0) {
        return Err(Error::InvalidInput(format!("recovery requires c in (0, 1], got {c}")));
    }
    if !(z.im > 0.0) {
        return Err(Error::InvalidInput(format!("z must lie in the upper half-plane, got {z}")));
    }
    let m = stieltjes(source, z)?;
    let m_comp = companion_from_primary(c, m, z)?;
    if !(m_comp.im > 0.0) {
        return Err(Error::CompanionLeftHalfPlane { im: m_comp.im });
    }
    let z1 = -m_comp.inv();
    if !(z1.im > 0.0) {
        return Err(Error::CompanionLeftHalfPlane { im: z1.im });
    }
    let s = m_comp * (c - 1.0 - z * m_comp) / c;
    Ok((z1, s))
}

/// [`recover_s_from`] for a kernel-smoothed eigenvalue sample.
pub fn recover_s(
    spec: &EmpiricalSpectrum,
    kernel: &KernelSpec,
    h: f64,
    c: f64,
    z: Complex64,
) -> Result<(Complex64, Complex64)> {
    let source =
        TransformSource::Kde { spectrum: spec.clone(), kernel: kernel.clone(), h };
    recover_s_from(&source, c, z)
}

/// Contour and fit parameters for [`recover_population`].
///
/// The contour is `z_j = x_j + i * im` with `x_j` on a uniform grid starting
/// `offset` to the right of the source support and spanning `span`. The large
/// imaginary part keeps the companion transform stable against kernel noise.
#[derive(Debug, Clone, PartialEq)]
pub struct ContourParams {
    pub im: f64,
    pub offset: f64,
    pub span: f64,
    pub points: usize,
    /// Number of moments fitted; the first two are reported and the rest
    /// absorb truncation bias.
    pub fit_moments: usize,
    /// Cap on the root-mean-square fit residual.
    pub residual_cap: f64,
}

impl Default for ContourParams {
    fn default() -> Self {
        Self { im: 0.5, offset: 5.0, span: 45.0, points: 32, fit_moments: 5, residual_cap: 0.05 }
    }
}

/// Diagnostics attached to a recovery run.
#[derive(Debug, Clone)]
pub struct RecoveryDiagnostics {
    pub fit_residual: f64,
    pub contour: ContourParams,
    /// All fitted moments, including the nuisance ones.
    pub fitted_moments: Vec<f64>,
    pub usable_points: usize,
    /// Set when a slightly negative fitted variance was projected onto the
    /// valid boundary `m2 = m1^2` (degenerate, point-mass-like `H`).
    pub variance_clamped: bool,
}

/// Result of a population-spectrum recovery.
#[derive(Debug, Clone)]
pub struct RecoveryResult {
    /// `(z, z_1, s(z_1))` samples along the contour.
    pub s_values: Vec<(Complex64, Complex64, Complex64)>,
    /// First two recovered moments of `H`.
    pub h_moments: (f64, f64),
    /// Estimate of the dimension-normalized trace `tr(T^2)/p = int t^2 dH`;
    /// equal to the second recovered moment.
    pub tr_t2_over_n: f64,
    pub diagnostics: RecoveryDiagnostics,
}

/// Solve the small least-squares system `A x = b` via normal equations.
fn solve_normal_equations(rows: &[Vec<f64>], rhs: &[f64], unknowns: usize) -> Result<Vec<f64>> {
    let mut ata = vec![vec![0.0; unknowns]; unknowns];
    let mut atb = vec![0.0; unknowns];
    for (row, &b) in rows.iter().zip(rhs) {
        for i in 0..unknowns {
            atb[i] += row[i] * b;
            for j in 0..unknowns {
                ata[i][j] += row[i] * row[j];
            }
        }
    }
    // Gaussian elimination with partial pivoting.
    for col in 0..unknowns {
        let pivot = (col..unknowns)
            .max_by(|&a, &b| ata[a][col].abs().total_cmp(&ata[b][col].abs()))
            .expect("nonempty");
        if ata[pivot][col].abs() < 1e-300 {
            return Err(Error::InvalidInput("singular moment-fit system".into()));
        }
        ata.swap(col, pivot);
        atb.swap(col, pivot);
        for row in (col + 1)..unknowns {
            let factor = ata[row][col] / ata[col][col];
            for k in col..unknowns {
                ata[row][k] -= factor * ata[col][k];
            }
            atb[row] -= factor * atb[col];
        }
    }
    let mut x = vec![0.0; unknowns];
    for col in (0..unknowns).rev() {
        let mut v = atb[col];
        for k in (col + 1)..unknowns {
            v -= ata[col][k] * x[k];
        }
        x[col] = v / ata[col][col];
    }
    Ok(x)
}

/// Recover the leading moments of the population spectral distribution from
/// Stieltjes samples taken along a contour right of the support.
pub fn recover_population_from(
    source: &TransformSource,
    c: f64,
    contour: &ContourParams,
) -> Result<RecoveryResult> {
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::InvalidInput(format!("recovery requires c in (0, 1), got {c}")));
    }
    if contour.points < 4 || contour.fit_moments < 2 || !(contour.im > 0.0) {
        return Err(Error::InvalidInput(
            "contour needs >= 4 points, >= 2 fitted moments and positive im".into(),
        ));
    }
    let (_, hi) = source.support_hint();
    let start = hi + contour.offset;
    let step = contour.span / (contour.points - 1) as f64;

    let mut samples = Vec::with_capacity(contour.points);
    for j in 0..contour.points {
        let z = Complex64::new(start + step * j as f64, contour.im);
        match recover_s_from(source, c, z) {
            Ok((z1, s)) => samples.push((z, z1, s)),
            Err(Error::CompanionLeftHalfPlane { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    if samples.len() < 4 {
        return Err(Error::InvalidInput(format!(
            "fewer than 4 usable contour points ({} of {})",
            samples.len(),
            contour.points
        )));
    }

    // -s(z1) = 1/z1 + sum_k m_k / z1^{k+1}. Fitting is done on the rescaled
    // form z1^2 (-s - 1/z1) = m1 + m2 u + m3 u^2 + ... with u = 1/z1, which
    // keeps the basis functions O(1) and the normal equations
    // well-conditioned; real and imaginary parts stack as separate rows.
    let k_moments = contour.fit_moments;
    let mut rows = Vec::with_capacity(2 * samples.len());
    let mut rhs = Vec::with_capacity(2 * samples.len());
    for &(_, z1, s) in &samples {
        let u = z1.inv();
        let target = z1 * z1 * (-s - u);
        let mut pow = Complex64::new(1.0, 0.0);
        let mut row_re = Vec::with_capacity(k_moments);
        let mut row_im = Vec::with_capacity(k_moments);
        for _ in 0..k_moments {
            row_re.push(pow.re);
            row_im.push(pow.im);
            pow *= u;
        }
        rows.push(row_re);
        rhs.push(target.re);
        rows.push(row_im);
        rhs.push(target.im);
    }
    let moments = solve_normal_equations(&rows, &rhs, k_moments)?;

    let mut residual_sq = 0.0;
    for (row, &b) in rows.iter().zip(&rhs) {
        let fit: f64 = row.iter().zip(&moments).map(|(a, m)| a * m).sum();
        residual_sq += (fit - b) * (fit - b);
    }
    let fit_residual = (residual_sq / rows.len() as f64).sqrt();
    if fit_residual > contour.residual_cap {
        return Err(Error::RecoveryResidual { residual: fit_residual, cap: contour.residual_cap });
    }

    let (m1, mut m2) = (moments[0], moments[1]);
    if !m1.is_finite() || !m2.is_finite() {
        return Err(Error::InvalidInput("recovered moments are not finite".into()));
    }
    // Moment pairs of a measure satisfy m2 >= m1^2. Fit noise can push a
    // degenerate (point-mass) spectrum slightly below the boundary; project
    // those back. A gross violation means the fit itself is broken.
    let mut variance_clamped = false;
    if m2 < m1 * m1 {
        let violation = m1 * m1 - m2;
        if violation > 0.05 * (m1 * m1).max(1.0) {
            return Err(Error::InvalidInput(format!(
                "recovered moments violate variance nonnegativity: m1 = {m1}, m2 = {m2}"
            )));
        }
        m2 = m1 * m1;
        variance_clamped = true;
    }

    Ok(RecoveryResult {
        s_values: samples.clone(),
        h_moments: (m1, m2),
        tr_t2_over_n: m2,
        diagnostics: RecoveryDiagnostics {
            fit_residual,
            contour: contour.clone(),
            fitted_moments: moments,
            usable_points: samples.len(),
            variance_clamped,
        },
    })
}

/// [`recover_population_from`] for a kernel-smoothed eigenvalue sample.
pub fn recover_population(
    spec: &EmpiricalSpectrum,
    kernel: &KernelSpec,
    h: f64,
    c: f64,
    contour: &ContourParams,
) -> Result<RecoveryResult> {
    let source =
        TransformSource::Kde { spectrum: spec.clone(), kernel: kernel.clone(), h };
    recover_population_from(&source, c, contour)
}

/// Mass estimates produced by the Stieltjes inversion formula.
#[derive(Debug, Clone)]
pub struct MassEstimate {
    /// `(v, mass_v)` pairs in the order of the supplied `v` sequence.
    pub per_v: Vec<(f64, f64)>,
    /// Linear (Richardson-style) extrapolation of the last two values to
    /// `v -> 0`, assuming `O(v)` error.
    pub extrapolated: f64,
}

/// Stieltjes inversion `F{[a, b]} = (1/pi) lim_{v->0} int_a^b Im m(u + iv) du`
/// evaluated at each `v` in a decreasing sequence.
pub fn invert_stieltjes(
    mut transform: impl FnMut(Complex64) -> Result<Complex64>,
    interval: (f64, f64),
    v_sequence: &[f64],
) -> Result<MassEstimate> {
    let (a, b) = interval;
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(Error::InvalidInput(format!("bad interval [{a}, {b}]")));
    }
    if v_sequence.is_empty()
        || v_sequence.iter().any(|&v| !(v > 0.0))
        || v_sequence.windows(2).any(|w| !(w[0] > w[1]))
    {
        return Err(Error::InvalidInput(
            "v sequence must be strictly decreasing and positive".into(),
        ));
    }
    let mut per_v = Vec::with_capacity(v_sequence.len());
    for &v in v_sequence {
        let mut failure = None;
        let mass = quad::integrate(
            |u| match transform(Complex64::new(u, v)) {
                Ok(m) => m.im,
                Err(e) => {
                    failure = Some(e);
                    f64::NAN
                }
            },
            a,
            b,
            INVERSION_QUAD_TOL,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        per_v.push((v, mass?.value / PI));
    }
    let extrapolated = if per_v.len() >= 2 {
        let (v1, m1) = per_v[per_v.len() - 2];
        let (v2, m2) = per_v[per_v.len() - 1];
        (m2 * v1 - m1 * v2) / (v1 - v2)
    } else {
        per_v[0].1
    };
    if !(-0.01..=1.01).contains(&extrapolated) {
        return Err(Error::InvalidInput(format!(
            "extrapolated mass {extrapolated} outside [-0.01, 1.01]"
        )));
    }
    Ok(MassEstimate { per_v, extrapolated })
}
