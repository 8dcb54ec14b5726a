//! Shared comparison tolerances.
//!
//! All approximate comparisons in the crate use the absolute-plus-relative
//! form `|a - b| <= atol + rtol * |b|`.

/// Default absolute tolerance.
pub const DEFAULT_ATOL: f64 = 1e-12;

/// Default relative tolerance.
pub const DEFAULT_RTOL: f64 = 1e-9;

/// `|a - b| <= atol + rtol * |b|`, with `b` playing the role of reference value.
pub fn approx_eq_tol(a: f64, b: f64, atol: f64, rtol: f64) -> bool {
    (a - b).abs() <= atol + rtol * b.abs()
}

/// [`approx_eq_tol`] with the crate defaults.
pub fn approx_eq(a: f64, b: f64) -> bool {
    approx_eq_tol(a, b, DEFAULT_ATOL, DEFAULT_RTOL)
}
