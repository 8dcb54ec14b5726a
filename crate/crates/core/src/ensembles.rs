//! Reproducible sampling of the random matrix ensembles and population
//! matrices.
//!
//! All randomness comes from ChaCha8, a counter-based generator with explicit
//! 64-bit seeding and independent streams. Stream 0 carries data-matrix (`X`)
//! draws and stream 1 population (`T`) draws, so the two never overlap for a
//! given seed. Uniforms are built from the top 53 bits of `next_u64`, which
//! pins the sampled values down to the bit across platforms and library
//! versions.

use std::fmt;
use std::sync::Arc;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;
use crate::specmat::{self, DenseMatrix, SymMatrix};

/// Stream id for entry (`X`) draws.
pub const STREAM_ENTRIES: u64 = 0;
/// Stream id for population (`T`) draws.
pub const STREAM_POPULATION: u64 = 1;

/// Minimum eigenvalue a sampled Wishart-type population must exceed.
const POPULATION_MIN_EIG: f64 = 1e-10;

/// ChaCha8 stream for `(seed, stream)`.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform draw in `[0, 1)` from the top 53 bits of one `u64`.
pub fn uniform_draw(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// splitmix64 finalizer; a bijection on u64.
fn splitmix64_mix(mut x: u64) -> u64 {
    x ^= x >> 30;
    x = x.wrapping_mul(0xbf58476d1ce4e5b9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Per-replicate seed. For a fixed base seed this is injective in the
/// replicate index (odd increment, bijective mix).
pub fn derive_replicate_seed(seed: u64, replicate: u64) -> u64 {
    splitmix64_mix(seed.wrapping_add(replicate.wrapping_add(1).wrapping_mul(0x9e3779b97f4a7c15)))
}

/// An i.i.d. entry distribution standardized to mean 0, variance 1.
#[derive(Clone)]
pub enum EntryDistribution {
    /// `X = Exp(1) - 1`, i.e. the tail function `e^{-(x+1)}` on `x >= -1`.
    ShiftedExponential,
    /// `P(X = -1) = P(X = +1) = 1/2`.
    Rademacher,
    /// A caller-supplied inverse CDF applied to uniform draws. The sampler
    /// must already be standardized.
    Custom { name: String, inverse_cdf: Arc<dyn Fn(f64) -> f64 + Send + Sync> },
}

impl fmt::Debug for EntryDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl EntryDistribution {
    pub fn name(&self) -> &str {
        match self {
            Self::ShiftedExponential => "exp",
            Self::Rademacher => "bion",
            Self::Custom { name, .. } => name,
        }
    }

    /// Map one uniform draw `u` in `[0, 1)` to a sample. Every variant
    /// consumes exactly one draw, which keeps streams aligned across
    /// distributions.
    fn from_uniform(&self, u: f64) -> f64 {
        match self {
            // Inverse CDF; 1 - u lies in (0, 1] so the log is finite.
            Self::ShiftedExponential => -(1.0 - u).ln() - 1.0,
            Self::Rademacher => {
                if u < 0.5 {
                    -1.0
                } else {
                    1.0
                }
            }
            Self::Custom { inverse_cdf, .. } => inverse_cdf(u),
        }
    }
}

/// A `p x n` matrix of i.i.d. draws. Identical output for identical
/// `(dist, p, n, seed)`.
pub fn sample_entries(
    dist: &EntryDistribution,
    p: usize,
    n: usize,
    seed: u64,
) -> Result<DenseMatrix> {
    sample_entries_stream(dist, p, n, seed, STREAM_ENTRIES)
}

fn sample_entries_stream(
    dist: &EntryDistribution,
    p: usize,
    n: usize,
    seed: u64,
    stream: u64,
) -> Result<DenseMatrix> {
    if p == 0 || n == 0 {
        return Err(Error::InvalidInput("matrix dimensions must be >= 1".into()));
    }
    let mut rng = rng_for(seed, stream);
    let data: Vec<f64> = (0..p * n).map(|_| dist.from_uniform(uniform_draw(&mut rng))).collect();
    DenseMatrix::new(p, n, data)
}

/// Population matrix specification.
#[derive(Debug, Clone)]
pub enum PopulationSpec {
    /// `T = I_p`; the Marcenko-Pastur case.
    Identity { p: usize },
    /// `T` diagonal realizing `measure` with multiplicities `round(p * mass)`.
    Diagonal { measure: DiscreteMeasure, p: usize },
    /// Wishart-type `T = (1/n2) Y Y^T` with `Y` a `p x n2` matrix of i.i.d.
    /// `entry` draws.
    Wishart { entry: EntryDistribution, p: usize, n2: usize },
}

impl PopulationSpec {
    pub fn p(&self) -> usize {
        match self {
            Self::Identity { p } | Self::Diagonal { p, .. } | Self::Wishart { p, .. } => *p,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p() == 0 {
            return Err(Error::InvalidInput("population dimension must be >= 1".into()));
        }
        match self {
            Self::Identity { .. } => Ok(()),
            Self::Diagonal { measure, .. } => {
                if measure.min_location() <= 0.0 {
                    return Err(Error::InvalidInput(
                        "diagonal population atoms must be positive".into(),
                    ));
                }
                Ok(())
            }
            Self::Wishart { p, n2, .. } => {
                if n2 < p {
                    return Err(Error::InvalidInput(format!(
                        "wishart population needs n2 >= p, got n2 = {n2}, p = {p}"
                    )));
                }
                Ok(())
            }
        }
    }

    /// The limit spectral measure when it is known in closed form: `delta_1`
    /// for the identity, the defining measure for diagonal populations, and
    /// none for Wishart-type populations.
    pub fn limit_measure(&self) -> Option<DiscreteMeasure> {
        match self {
            Self::Identity { .. } => Some(DiscreteMeasure::point_mass(1.0)),
            Self::Diagonal { measure, .. } => Some(measure.clone()),
            Self::Wishart { .. } => None,
        }
    }
}

/// A realized population: the matrix, its symmetric square root and its
/// empirical spectral distribution `H_n`.
#[derive(Debug, Clone)]
pub struct Population {
    pub t: SymMatrix,
    pub t_sqrt: SymMatrix,
    pub h_n: DiscreteMeasure,
}

/// Round `p * mass` to integer multiplicities, handing leftover counts to the
/// largest fractional parts (ties by atom order).
fn multiplicities(measure: &DiscreteMeasure, p: usize) -> Vec<usize> {
    let mut counts: Vec<usize> = Vec::with_capacity(measure.len());
    let mut fracs: Vec<(f64, usize)> = Vec::with_capacity(measure.len());
    let mut assigned = 0usize;
    for (k, &(_, mass)) in measure.atoms().iter().enumerate() {
        let exact = mass * p as f64;
        let base = exact.floor() as usize;
        counts.push(base);
        assigned += base;
        fracs.push((exact - base as f64, k));
    }
    fracs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut leftover = p.saturating_sub(assigned);
    for &(_, k) in fracs.iter().cycle().take(fracs.len().max(1) * 2) {
        if leftover == 0 {
            break;
        }
        counts[k] += 1;
        leftover -= 1;
    }
    counts
}

/// Realize a population spec. `seed` drives the population stream only; the
/// identity and diagonal kinds are deterministic.
pub fn build_population(spec: &PopulationSpec, seed: u64) -> Result<Population> {
    spec.validate()?;
    match spec {
        PopulationSpec::Identity { p } => Ok(Population {
            t: SymMatrix::identity(*p),
            t_sqrt: SymMatrix::identity(*p),
            h_n: DiscreteMeasure::point_mass(1.0),
        }),
        PopulationSpec::Diagonal { measure, p } => {
            let counts = multiplicities(measure, *p);
            let mut diag = Vec::with_capacity(*p);
            let mut atoms = Vec::new();
            for (&(loc, _), &count) in measure.atoms().iter().zip(&counts) {
                if count > 0 {
                    diag.extend(std::iter::repeat(loc).take(count));
                    atoms.push((loc, count as f64 / *p as f64));
                }
            }
            let sqrt_diag: Vec<f64> = diag.iter().map(|&d| d.sqrt()).collect();
            Ok(Population {
                t: SymMatrix::from_diagonal(&diag)?,
                t_sqrt: SymMatrix::from_diagonal(&sqrt_diag)?,
                h_n: DiscreteMeasure::new(atoms)?,
            })
        }
        PopulationSpec::Wishart { entry, p, n2 } => {
            let y = sample_entries_stream(entry, *p, *n2, seed, STREAM_POPULATION)?;
            let t = specmat::sample_covariance(&SymMatrix::identity(*p), &y)?;
            let decomp = specmat::eigh(&t)?;
            let min = decomp.eigenvalues[0];
            if min <= POPULATION_MIN_EIG {
                return Err(Error::PopulationNotPositiveDefinite { min_eigenvalue: min });
            }
            let t_sqrt = specmat::sym_sqrt_from_eigh(&decomp)?;
            let h_n = DiscreteMeasure::equal_weights(&decomp.eigenvalues)?;
            Ok(Population { t, t_sqrt, h_n })
        }
    }
}
