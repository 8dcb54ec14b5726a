//! Spectral density estimation for large sample covariance matrices.
//!
//! The crate builds sample covariance matrices `A = (1/n) T^{1/2} X X^T
//! T^{1/2}` from reproducible random ensembles, smooths their eigenvalue
//! spectra with kernel density estimates, evaluates the limiting laws (the
//! Marcenko-Pastur density and general Silverstein-equation limits), and
//! recovers population-spectrum functionals through Stieltjes-transform
//! inversion. A Monte-Carlo harness replicates the associated simulation
//! experiments at desk scale.

pub mod ensembles;
pub mod error;
pub mod kde;
pub mod limitlaw;
pub mod measure;
pub mod quad;
pub mod simkit;
pub mod specmat;
pub mod stieltjes;
pub mod tol;

pub use ensembles::{
    build_population, derive_replicate_seed, sample_entries, EntryDistribution, Population,
    PopulationSpec,
};
pub use error::{Error, Result};
pub use kde::{
    bandwidth, check_kernel, gaussian_kernel, kde_cdf, kde_density, BandwidthRule,
    EmpiricalSpectrum, KernelReport, KernelSpec,
};
pub use limitlaw::{
    companion_from_primary, limit_cdf, limit_density, limit_density_curve, mp_density, mp_support,
    primary_from_companion, silverstein_inverse, silverstein_residual, solve_silverstein,
    CdfCurve, DensityCurve, SpectralLaw, DEFAULT_ETA,
};
pub use measure::DiscreteMeasure;
pub use simkit::{
    kolmogorov_distance, paper_eval_points, rate_check, run_density_curve, run_mse_experiment,
    simulate_spectrum, sup_density_distance, ExperimentConfig, MseMode, MseTable, RateReport,
    ReferenceCdf,
};
pub use specmat::{
    eigenvalues, eigh, sample_covariance, sym_sqrt, DenseMatrix, EigenDecomposition, SymMatrix,
};
pub use stieltjes::{
    invert_stieltjes, mmse_sir_limit, recover_population, recover_population_from, recover_s,
    recover_s_from, stieltjes, ContourParams, MassEstimate, RecoveryResult, TransformSource,
};
