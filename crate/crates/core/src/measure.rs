//! Finitely supported probability measures.
//!
//! Houses the population spectral distribution `H`, its finite-`p`
//! counterpart `H_n`, and empirical spectral distributions in atom form.

use crate::error::{Error, Result};

const MASS_SUM_TOL: f64 = 1e-12;

/// A probability measure with finitely many atoms `(location, mass)`.
/// Atoms are kept sorted by location; masses are positive and sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    atoms: Vec<(f64, f64)>,
}

impl DiscreteMeasure {
    pub fn new(mut atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidInput("measure needs at least one atom".into()));
        }
        let mut sum = 0.0;
        for &(loc, mass) in &atoms {
            if !loc.is_finite() {
                return Err(Error::InvalidInput("atom locations must be finite".into()));
            }
            if !(mass > 0.0) || !mass.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "atom masses must be positive, got {mass}"
                )));
            }
            sum += mass;
        }
        if (sum - 1.0).abs() > MASS_SUM_TOL {
            return Err(Error::InvalidInput(format!(
                "atom masses must sum to 1 within {MASS_SUM_TOL}, got {sum}"
            )));
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Self { atoms })
    }

    /// The point mass at `location`.
    pub fn point_mass(location: f64) -> Self {
        Self { atoms: vec![(location, 1.0)] }
    }

    /// Equal mass `1/len` at each location (an empirical spectral
    /// distribution).
    pub fn equal_weights(locations: &[f64]) -> Result<Self> {
        if locations.is_empty() {
            return Err(Error::InvalidInput("measure needs at least one atom".into()));
        }
        let mass = 1.0 / locations.len() as f64;
        Self::new(locations.iter().map(|&l| (l, mass)).collect())
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn min_location(&self) -> f64 {
        self.atoms[0].0
    }

    pub fn max_location(&self) -> f64 {
        self.atoms[self.atoms.len() - 1].0
    }

    /// `sum_k mass_k f(location_k)`.
    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.atoms.iter().map(|&(loc, mass)| mass * f(loc)).sum()
    }

    /// k-th raw moment.
    pub fn moment(&self, k: u32) -> f64 {
        self.integrate(|t| t.powi(k as i32))
    }

    pub fn mean(&self) -> f64 {
        self.moment(1)
    }

    /// True when the measure is a single unit atom at `location`.
    pub fn is_point_mass_at(&self, location: f64, tol: f64) -> bool {
        self.atoms.len() == 1 && (self.atoms[0].0 - location).abs() <= tol
    }
}
