//! Limiting spectral laws.
//!
//! The Marcenko-Pastur density in closed form, and for a general pair
//! `(c, H)` the density and CDF of `F_{c,H}` obtained by solving the
//! Silverstein fixed-point equation
//!
//! ```text
//! m_ = -( z - c * int t dH(t) / (1 + t m_) )^-1
//! ```
//!
//! for the companion transform `m_` in the upper half-plane, then mapping to
//! the primary transform through `m_ = -(1 - c)/z + c m`.
//!
//! The solver is a damped fixed-point iteration (weight 0.5, halved whenever
//! the residual grows or the iterate leaves the upper half-plane) with
//! continuation in `Im z`: it starts at `Im z = 1` and geometrically reduces
//! the imaginary part toward the target, reusing each solution as the next
//! warm start. Densities on the real line are taken as
//! `Im m(x + i eta) / pi` at a small fixed `eta`; the MP closed form serves
//! as the oracle for that regularization.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;

/// Default imaginary offset for density evaluation on the real line.
pub const DEFAULT_ETA: f64 = 1e-6;

/// Densities this far below zero are clamped to zero; anything lower is an
/// error.
pub const DENSITY_CLAMP: f64 = -1e-9;

/// Residual the solver drives toward.
const SOLVER_TARGET: f64 = 1e-13;
/// Largest residual an accepted solver return may carry.
pub const SOLVER_ACCEPT: f64 = 1e-10;
/// Iteration budget per continuation level.
const MAX_ITER: usize = 50_000;

/// A limiting spectral law identified by the aspect ratio `c > 0` and the
/// population spectral distribution `H`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralLaw {
    c: f64,
    h: DiscreteMeasure,
}

impl SpectralLaw {
    pub fn new(c: f64, h: DiscreteMeasure) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::InvalidInput(format!("aspect ratio c must be positive, got {c}")));
        }
        Ok(Self { c, h })
    }

    /// The Marcenko-Pastur law `(c, delta_1)`.
    pub fn marcenko_pastur(c: f64) -> Result<Self> {
        Self::new(c, DiscreteMeasure::point_mass(1.0))
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn h(&self) -> &DiscreteMeasure {
        &self.h
    }

    /// Point mass of `F_{c,H}` at the origin (`1 - 1/c` for `c > 1`).
    pub fn point_mass_at_zero(&self) -> f64 {
        if self.c > 1.0 {
            1.0 - 1.0 / self.c
        } else {
            0.0
        }
    }

    /// An interval guaranteed to contain the support of the continuous part,
    /// with a small margin: `[t_min (1 - sqrt c)^2, t_max (1 + sqrt c)^2]`
    /// widened by a tenth of its length.
    pub fn support_hint(&self) -> (f64, f64) {
        let rc = self.c.sqrt();
        let lo = self.h.min_location() * (1.0 - rc).powi(2);
        let hi = self.h.max_location() * (1.0 + rc).powi(2);
        let margin = 0.1 * (hi - lo).max(1.0);
        ((lo - margin).max(0.0) - 0.1, hi + margin)
    }
}

/// Support `[a, b]` of the MP law: `a = (1 - sqrt c)^2`, `b = (1 + sqrt c)^2`.
pub fn mp_support(c: f64) -> Result<(f64, f64)> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::InvalidInput(format!("aspect ratio c must be positive, got {c}")));
    }
    let rc = c.sqrt();
    Ok(((1.0 - rc).powi(2), (1.0 + rc).powi(2)))
}

/// Continuous part of the Marcenko-Pastur density,
/// `sqrt((b - x)(x - a)) / (2 pi c x)` on `[a, b]` and zero outside. The
/// point mass at the origin for `c > 1` is not included.
pub fn mp_density(c: f64, x: f64) -> Result<f64> {
    let (a, b) = mp_support(c)?;
    if !x.is_finite() {
        return Err(Error::InvalidInput("x must be finite".into()));
    }
    if x <= a || x >= b || x == 0.0 {
        return Ok(0.0);
    }
    Ok(((b - x) * (x - a)).sqrt() / (2.0 * PI * c * x))
}

/// Companion transform from the primary one: `m_ = -(1 - c)/z + c m`.
pub fn companion_from_primary(c: f64, m: Complex64, z: Complex64) -> Result<Complex64> {
    if z.norm() == 0.0 {
        return Err(Error::InvalidInput("companion relation undefined at z = 0".into()));
    }
    Ok(-(1.0 - c) / z + c * m)
}

/// Primary transform from the companion one: `m = (m_ + (1 - c)/z) / c`.
pub fn primary_from_companion(c: f64, m_comp: Complex64, z: Complex64) -> Result<Complex64> {
    if z.norm() == 0.0 {
        return Err(Error::InvalidInput("companion relation undefined at z = 0".into()));
    }
    if c == 0.0 {
        return Err(Error::InvalidInput("companion relation undefined at c = 0".into()));
    }
    Ok((m_comp + (1.0 - c) / z) / c)
}

/// The fixed-point map `G(m_) = -1 / (z - c int t dH / (1 + t m_))`.
fn g_map(law: &SpectralLaw, z: Complex64, m: Complex64) -> Complex64 {
    let mut integral = Complex64::new(0.0, 0.0);
    for &(t, mass) in law.h.atoms() {
        integral += mass * t / (1.0 + t * m);
    }
    -(z - law.c * integral).inv()
}

/// Fixed-point residual `|m_ + (z - c int t dH / (1 + t m_))^-1|` of a
/// candidate companion-transform value.
pub fn silverstein_residual(law: &SpectralLaw, z: Complex64, m: Complex64) -> f64 {
    (m - g_map(law, z, m)).norm()
}

/// The inverse map `z(m_) = -1/m_ + c int t dH(t) / (1 + t m_)`.
pub fn silverstein_inverse(law: &SpectralLaw, m: Complex64) -> Result<Complex64> {
    if m.norm() == 0.0 {
        return Err(Error::InvalidInput("inverse map undefined at m = 0".into()));
    }
    let mut integral = Complex64::new(0.0, 0.0);
    for &(t, mass) in law.h.atoms() {
        integral += mass * t / (1.0 + t * m);
    }
    Ok(-m.inv() + law.c * integral)
}

/// Damped fixed-point iteration at a single `z`, warm-started from `m0`.
///
/// Plain damping converges at rate `|G'|`, which approaches one near the
/// support edges at small `Im z`, so each step first tries a safeguarded
/// secant update `m + (G(m) - m) / (1 - G'_est)` with the derivative
/// estimated from the previous iterate; the update only stands when it
/// stays in the upper half-plane and at least halves the residual.
fn solve_at(law: &SpectralLaw, z: Complex64, m0: Complex64) -> Result<Complex64> {
    let mut m = if m0.im > 0.0 { m0 } else { -z.inv() };
    let mut g = g_map(law, z, m);
    let mut res = (g - m).norm();
    let mut best = m;
    let mut best_res = res;
    let mut omega = 0.5f64;
    let mut prev: Option<(Complex64, Complex64)> = None;

    for _ in 0..MAX_ITER {
        if res <= SOLVER_TARGET {
            return Ok(m);
        }

        if let Some((pm, pg)) = prev {
            let dm = m - pm;
            if dm.norm() > 0.0 {
                let slope = (g - pg) / dm;
                let denom = Complex64::new(1.0, 0.0) - slope;
                if denom.norm() > 1e-8 {
                    let cand = m + (g - m) / denom;
                    if cand.im > 0.0 {
                        let cand_g = g_map(law, z, cand);
                        let cand_res = (cand_g - cand).norm();
                        if cand_res < 0.5 * res {
                            prev = Some((m, g));
                            m = cand;
                            g = cand_g;
                            res = cand_res;
                            if res < best_res {
                                best_res = res;
                                best = m;
                            }
                            continue;
                        }
                    }
                }
            }
        }

        // Damped Picard step. G maps the upper half-plane into itself, so
        // the guard only bites on rounding at the extremes.
        let step = if g.im <= 0.0 {
            let guard = 0.5 * m.im / (m.im - g.im);
            if !(guard > 1e-12) {
                return Err(Error::SolverLeftHalfPlane);
            }
            omega.min(guard)
        } else {
            omega
        };
        let next = m + step * (g - m);
        let next_g = g_map(law, z, next);
        let next_res = (next_g - next).norm();
        if next_res > res {
            omega = (0.5 * omega).max(1e-4);
        } else {
            omega = (1.25 * omega).min(0.5);
        }
        prev = Some((m, g));
        m = next;
        g = next_g;
        res = next_res;
        if res < best_res {
            best_res = res;
            best = m;
        }
    }

    if best_res <= SOLVER_ACCEPT {
        Ok(best)
    } else {
        Err(Error::SolverNonConvergence { residual: best_res, iterations: MAX_ITER })
    }
}

/// Solve the Silverstein equation for the companion transform `m_(z)`,
/// `z` in the upper half-plane.
///
/// Every accepted return satisfies the fixed-point residual bound
/// [`SOLVER_ACCEPT`] and has positive imaginary part.
pub fn solve_silverstein(law: &SpectralLaw, z: Complex64) -> Result<Complex64> {
    if !(z.im > 0.0) {
        return Err(Error::InvalidInput(format!("z must lie in the upper half-plane, got {z}")));
    }
    let mut m = -Complex64::new(z.re, z.im.max(1.0)).inv();
    if z.im < 1.0 {
        // Continuation: halve the imaginary part toward the target.
        let mut v = 1.0;
        while v > z.im {
            m = solve_at(law, Complex64::new(z.re, v), m)?;
            v *= 0.5;
        }
    }
    let m = solve_at(law, z, m)?;
    let res = silverstein_residual(law, z, m);
    if res > SOLVER_ACCEPT {
        return Err(Error::SolverNonConvergence { residual: res, iterations: MAX_ITER });
    }
    if !(m.im > 0.0) {
        return Err(Error::SolverLeftHalfPlane);
    }
    Ok(m)
}

/// Density of `F_{c,H}` at `x`, evaluated as `Im m(x + i eta) / pi`.
///
/// Only the continuous part: the origin point mass for `c > 1` is carried
/// separately (see [`SpectralLaw::point_mass_at_zero`]), and the continuous
/// part vanishes at `x = 0` by convention.
pub fn limit_density(law: &SpectralLaw, x: f64, eta: f64) -> Result<f64> {
    if !(eta > 0.0) {
        return Err(Error::InvalidInput(format!("eta must be positive, got {eta}")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    let z = Complex64::new(x, eta);
    let m_comp = solve_silverstein(law, z)?;
    let m = primary_from_companion(law.c, m_comp, z)?;
    let f = m.im / PI;
    if f < DENSITY_CLAMP {
        return Err(Error::NegativeDensity { value: f, x });
    }
    Ok(f.max(0.0))
}

/// A sampled density curve on a strictly increasing grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityCurve {
    grid: Vec<f64>,
    values: Vec<f64>,
}

impl DensityCurve {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.len() != values.len() {
            return Err(Error::DimensionMismatch(format!(
                "grid has {} points but values has {}",
                grid.len(),
                values.len()
            )));
        }
        if grid.len() < 2 {
            return Err(Error::InvalidInput("curve needs at least two grid points".into()));
        }
        if grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidInput("grid must be strictly increasing".into()));
        }
        let mut clamped = values;
        for (v, &x) in clamped.iter_mut().zip(&grid) {
            if *v < DENSITY_CLAMP {
                return Err(Error::NegativeDensity { value: *v, x });
            }
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        Ok(Self { grid, values: clamped })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Trapezoid mass of the sampled curve.
    pub fn trapezoid_mass(&self) -> f64 {
        self.grid
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(x, v)| 0.5 * (x[1] - x[0]) * (v[0] + v[1]))
            .sum()
    }
}

/// A cumulative curve; the `c > 1` origin atom rides along as metadata and is
/// never folded into the sampled values.
#[derive(Debug, Clone, PartialEq)]
pub struct CdfCurve {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub point_mass_at_zero: f64,
}

/// Uniform grid with `points` nodes on `[min, max]`.
pub fn uniform_grid(min: f64, max: f64, points: usize) -> Result<Vec<f64>> {
    if points < 2 || !(min < max) {
        return Err(Error::InvalidInput(format!(
            "grid needs at least 2 points and min < max, got [{min}, {max}] x {points}"
        )));
    }
    let step = (max - min) / (points - 1) as f64;
    Ok((0..points).map(|k| min + step * k as f64).collect())
}

/// Evaluate the limit density on a uniform grid. The default window is the
/// support hint of the law, which reduces to `[a - 0.1, b + 0.1]` for the MP
/// case.
pub fn limit_density_curve(
    law: &SpectralLaw,
    min: f64,
    max: f64,
    points: usize,
    eta: f64,
) -> Result<DensityCurve> {
    let grid = uniform_grid(min, max, points)?;
    let values =
        grid.iter().map(|&x| limit_density(law, x, eta)).collect::<Result<Vec<f64>>>()?;
    DensityCurve::new(grid, values)
}

/// CDF of `F_{c,H}` by trapezoid integration of the density over `grid`.
pub fn limit_cdf(law: &SpectralLaw, grid: &[f64], eta: f64) -> Result<CdfCurve> {
    if grid.len() < 2 || grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidInput("grid must be strictly increasing with >= 2 points".into()));
    }
    let density =
        grid.iter().map(|&x| limit_density(law, x, eta)).collect::<Result<Vec<f64>>>()?;
    let mut values = Vec::with_capacity(grid.len());
    let mut acc = 0.0;
    values.push(0.0);
    for k in 1..grid.len() {
        acc += 0.5 * (grid[k] - grid[k - 1]) * (density[k] + density[k - 1]);
        values.push(acc);
    }
    Ok(CdfCurve { grid: grid.to_vec(), values, point_mass_at_zero: law.point_mass_at_zero() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn mp_law(c: f64) -> SpectralLaw {
        SpectralLaw::marcenko_pastur(c).unwrap()
    }

    fn two_atom() -> DiscreteMeasure {
        DiscreteMeasure::new(vec![(1.0, 0.5), (2.0, 0.5)]).unwrap()
    }

    /// Positive-imaginary root of `z m^2 + (z + 1 - c) m + 1 = 0`, the
    /// Silverstein equation specialized to `H = delta_1`.
    fn mp_companion_root(c: f64, z: Complex64) -> Complex64 {
        let b = z + 1.0 - c;
        let disc = (b * b - 4.0 * z).sqrt();
        let r1 = (-b + disc) / (2.0 * z);
        let r2 = (-b - disc) / (2.0 * z);
        if r1.im > 0.0 {
            r1
        } else {
            r2
        }
    }

    #[test]
    fn support_values() {
        let (a, b) = mp_support(0.25).unwrap();
        assert_abs_diff_eq!(a, 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(b, 2.25, epsilon = 1e-15);
        let (a, b) = mp_support(1.0).unwrap();
        assert_abs_diff_eq!(a, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b, 4.0, epsilon = 1e-15);
        let (a, b) = mp_support(0.5).unwrap();
        assert_abs_diff_eq!(a, 0.0857864376269049, epsilon = 1e-12);
        assert_abs_diff_eq!(b, 2.914213562373095, epsilon = 1e-12);
        assert!(mp_support(0.0).is_err());
        assert!(mp_support(-1.0).is_err());
    }

    #[test]
    fn density_values() {
        // sqrt(1.25 * 0.75) / (2 pi * 0.25 * 1).
        let expected = (1.25f64 * 0.75).sqrt() / (0.5 * PI);
        let v = mp_density(0.25, 1.0).unwrap();
        assert_abs_diff_eq!(v, expected, epsilon = 1e-15);
        assert_abs_diff_eq!(v, 0.61640, epsilon = 5e-6);
        assert_eq!(mp_density(0.25, 2.25).unwrap(), 0.0);
        assert_eq!(mp_density(0.25, 3.0).unwrap(), 0.0);
    }

    #[test]
    fn solver_matches_quadratic_root() {
        let law = mp_law(0.25);
        let z = Complex64::new(1.0, 1e-3);
        let m = solve_silverstein(&law, z).unwrap();
        let oracle = mp_companion_root(0.25, z);
        assert!((m - oracle).norm() < 1e-8, "{m} vs {oracle}");
    }

    #[test]
    fn solver_far_field_asymptotics() {
        let law = mp_law(0.25);
        let z = Complex64::new(0.0, 1e6);
        let m = solve_silverstein(&law, z).unwrap();
        assert!((m + z.inv()).norm() <= 1e-9);

        let law2 = SpectralLaw::new(0.5, two_atom()).unwrap();
        for y in [100.0, 1000.0] {
            let z = Complex64::new(0.0, y);
            let m = solve_silverstein(&law2, z).unwrap();
            assert!((m + z.inv()).norm() <= 2.0 / (y * y));
        }
    }

    #[test]
    fn solver_residual_self_certifies() {
        let law = SpectralLaw::new(0.5, two_atom()).unwrap();
        let z = Complex64::new(1.5, 1e-4);
        let m = solve_silverstein(&law, z).unwrap();
        assert!(silverstein_residual(&law, z, m) <= 1e-10);
        assert!(m.im > 0.0);
    }

    /// Durand-Kerner on the cubic the two-atom Silverstein equation expands
    /// to; an independent root-finding cross-check.
    #[test]
    fn solver_matches_cubic_roots_for_two_atoms() {
        let c = 0.5;
        let law = SpectralLaw::new(c, two_atom()).unwrap();
        let z = Complex64::new(1.5, 1e-4);
        // 2z m^3 + (3z - 2c + 2) m^2 + (z - 1.5c + 3) m + 1 = 0.
        let coeffs = [
            2.0 * z,
            3.0 * z - 2.0 * c + 2.0,
            z - 1.5 * c + 3.0,
            Complex64::new(1.0, 0.0),
        ];
        let eval = |m: Complex64| ((coeffs[0] * m + coeffs[1]) * m + coeffs[2]) * m + coeffs[3];
        let mut roots = [
            Complex64::new(0.4, 0.9),
            Complex64::new(-0.6, 0.4),
            Complex64::new(-0.2, -0.7),
        ];
        for _ in 0..500 {
            for k in 0..3 {
                let mut denom = coeffs[0];
                for j in 0..3 {
                    if j != k {
                        denom *= roots[k] - roots[j];
                    }
                }
                roots[k] -= eval(roots[k]) / denom;
            }
        }
        let upper: Vec<Complex64> = roots.iter().copied().filter(|r| r.im > 0.0).collect();
        assert_eq!(upper.len(), 1, "exactly one root in the upper half-plane");
        let m = solve_silverstein(&law, z).unwrap();
        assert!((m - upper[0]).norm() < 1e-8, "{m} vs {}", upper[0]);
    }

    #[test]
    fn limit_density_matches_mp_closed_form() {
        let law = mp_law(0.25);
        let v = limit_density(&law, 1.0, 1e-6).unwrap();
        assert_abs_diff_eq!(v, mp_density(0.25, 1.0).unwrap(), epsilon = 1e-4);
        // Outside the support the regularized density is tiny.
        assert!(limit_density(&law, 5.0, 1e-6).unwrap() <= 1e-4);
    }

    #[test]
    fn oracle_equivalence_on_trimmed_support() {
        // Module-size version of the acceptance sweep.
        for c in [0.1, 0.25, 0.5, 0.9] {
            let law = mp_law(c);
            let (a, b) = mp_support(c).unwrap();
            let grid = uniform_grid(a + 0.05, b - 0.05, 60).unwrap();
            for &x in &grid {
                let solver = limit_density(&law, x, 1e-6).unwrap();
                let closed = mp_density(c, x).unwrap();
                assert!(
                    (solver - closed).abs() <= 1e-3,
                    "c = {c}, x = {x}: {solver} vs {closed}"
                );
            }
        }
    }

    #[test]
    fn two_atom_density_positive_and_normalized() {
        let law = SpectralLaw::new(0.25, two_atom()).unwrap();
        assert!(limit_density(&law, 0.9, 1e-6).unwrap() > 0.0);
        let (lo, hi) = law.support_hint();
        let curve = limit_density_curve(&law, lo.max(1e-3), hi, 1200, 1e-6).unwrap();
        let mass = curve.trapezoid_mass();
        assert!((0.98..=1.02).contains(&mass), "mass {mass}");
    }

    #[test]
    fn cdf_monotone_and_normalized() {
        let law = mp_law(0.25);
        let grid = uniform_grid(0.2, 2.3, 2001).unwrap();
        let cdf = limit_cdf(&law, &grid, 1e-6).unwrap();
        assert!(cdf.values.windows(2).all(|w| w[0] <= w[1]));
        let last = *cdf.values.last().unwrap();
        assert!((last - 1.0).abs() <= 0.02, "total mass {last}");
        assert!(cdf.values[0].abs() <= 0.02);
        let at = |x: f64| {
            let k = grid.iter().position(|&g| g >= x).unwrap();
            cdf.values[k]
        };
        assert!(at(1.5) >= at(1.0));
        assert_eq!(cdf.point_mass_at_zero, 0.0);
    }

    #[test]
    fn point_mass_metadata_for_c_above_one() {
        let law = mp_law(2.0);
        assert_abs_diff_eq!(law.point_mass_at_zero(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn companion_relation_cases() {
        // c = 1 collapses the relation.
        let m = Complex64::new(0.3, 0.8);
        let z = Complex64::new(0.5, 0.25);
        assert_eq!(companion_from_primary(1.0, m, z).unwrap(), m);
        // c = 0.5, m = i, z = i -> 1.0i.
        let v = companion_from_primary(0.5, Complex64::new(0.0, 1.0), Complex64::new(0.0, 1.0))
            .unwrap();
        assert_abs_diff_eq!(v.re, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v.im, 1.0, epsilon = 1e-15);
        assert!(companion_from_primary(0.5, m, Complex64::new(0.0, 0.0)).is_err());
    }

    #[test]
    fn inverse_map_consistency() {
        let law = SpectralLaw::new(0.5, two_atom()).unwrap();
        for &(re, im) in &[(1.5, 0.5), (0.5, 0.01), (3.0, 1e-3), (-1.0, 0.1)] {
            let z = Complex64::new(re, im);
            let m = solve_silverstein(&law, z).unwrap();
            let z_back = silverstein_inverse(&law, m).unwrap();
            assert!((z_back - z).norm() <= 1e-8, "z = {z}: round trip {z_back}");
        }
    }

    #[test]
    fn rejects_lower_half_plane() {
        let law = mp_law(0.25);
        assert!(solve_silverstein(&law, Complex64::new(1.0, -0.1)).is_err());
        assert!(solve_silverstein(&law, Complex64::new(1.0, 0.0)).is_err());
    }

    proptest! {
        #[test]
        fn prop_companion_round_trip(
            c in 0.05f64..2.0,
            m_re in -3.0f64..3.0,
            m_im in 1e-6f64..5.0,
            z_re in -3.0f64..3.0,
            z_im in 1e-6f64..5.0,
        ) {
            let m = Complex64::new(m_re, m_im);
            let z = Complex64::new(z_re, z_im);
            let round = primary_from_companion(c, companion_from_primary(c, m, z).unwrap(), z).unwrap();
            prop_assert!((round - m).norm() <= 1e-14 * (1.0 + m.norm()));
        }
    }
}
