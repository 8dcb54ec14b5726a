//! Dense real symmetric linear algebra.
//!
//! Provides the eigendecomposition, symmetric square root and sample
//! covariance construction `A = (1/n) T^{1/2} X X^T T^{1/2}` that the rest of
//! the crate is built on. The eigensolver is Householder tridiagonalization
//! followed by implicit-shift QL with Wilkinson shifts; no external linear
//! algebra dependency.

use crate::error::{Error, Result};

/// Threshold below which a negative eigenvalue is treated as roundoff from a
/// PSD input and clamped to zero in [`sym_sqrt`].
pub const PSD_CLAMP: f64 = -1e-12;

/// Total implicit-shift sweeps allowed per decomposition, as a multiple of
/// the matrix dimension.
const SWEEP_CAP_PER_DIM: usize = 50;

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidInput("matrix dimensions must be >= 1".into()));
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("matrix entries must be finite".into()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    /// Row `i` as a contiguous slice.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Plain triple-loop product `self * other`.
    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} * {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let (m, k, n) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            let out_row = &mut out[i * n..(i + 1) * n];
            for (l, &a) in a_row.iter().enumerate() {
                let b_row = &other.data[l * n..(l + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(DenseMatrix { rows: m, cols: n, data: out })
    }
}

/// Dense real symmetric matrix with a single stored (lower) triangle, so
/// `get(i, j) == get(j, i)` holds exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    /// Packed lower triangle, row by row: entry `(i, j)` with `j <= i` lives
    /// at `i * (i + 1) / 2 + j`.
    data: Vec<f64>,
}

impl SymMatrix {
    fn packed_len(dim: usize) -> usize {
        dim * (dim + 1) / 2
    }

    fn idx(i: usize, j: usize) -> usize {
        debug_assert!(j <= i);
        i * (i + 1) / 2 + j
    }

    /// Build from a function evaluated on the lower triangle (`j <= i`).
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("matrix dimensions must be >= 1".into()));
        }
        let mut data = Vec::with_capacity(Self::packed_len(dim));
        for i in 0..dim {
            for j in 0..=i {
                let v = f(i, j);
                if !v.is_finite() {
                    return Err(Error::InvalidInput("matrix entries must be finite".into()));
                }
                data.push(v);
            }
        }
        Ok(Self { dim, data })
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_fn(dim, |i, j| if i == j { 1.0 } else { 0.0 }).expect("dim >= 1")
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        if diag.is_empty() {
            return Err(Error::InvalidInput("empty diagonal".into()));
        }
        Self::from_fn(diag.len(), |i, j| if i == j { diag[i] } else { 0.0 })
    }

    /// Symmetrize a square dense matrix as `(M + M^T) / 2`. This is the
    /// deterministic symmetrization applied after products that are
    /// analytically symmetric.
    pub fn from_dense_average(m: &DenseMatrix) -> Result<Self> {
        if m.rows != m.cols {
            return Err(Error::DimensionMismatch(format!("{}x{} is not square", m.rows, m.cols)));
        }
        Self::from_fn(m.rows, |i, j| 0.5 * (m.get(i, j) + m.get(j, i)))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j <= i {
            self.data[Self::idx(i, j)]
        } else {
            self.data[Self::idx(j, i)]
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.data[Self::idx(i, i)]).sum()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.dim, self.dim, |i, j| self.get(i, j))
    }

    pub fn frobenius_norm(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.dim {
            for j in 0..=i {
                let v = self.data[Self::idx(i, j)];
                s += if i == j { v * v } else { 2.0 * v * v };
            }
        }
        s.sqrt()
    }

    /// True when every entry equals the identity exactly.
    pub fn is_identity(&self) -> bool {
        (0..self.dim).all(|i| {
            (0..=i).all(|j| self.data[Self::idx(i, j)] == if i == j { 1.0 } else { 0.0 })
        })
    }

    /// The diagonal, if every off-diagonal entry is exactly zero.
    pub fn as_diagonal(&self) -> Option<Vec<f64>> {
        for i in 0..self.dim {
            for j in 0..i {
                if self.data[Self::idx(i, j)] != 0.0 {
                    return None;
                }
            }
        }
        Some((0..self.dim).map(|i| self.data[Self::idx(i, i)]).collect())
    }
}

/// Spectral factorization `A = Q diag(eigenvalues) Q^T` with eigenvalues
/// sorted ascending and column `k` of `eigenvectors` paired with eigenvalue
/// `k`.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DenseMatrix,
}

/// Householder reduction of `a` to tridiagonal form. Returns the diagonal,
/// the subdiagonal (`e[i]` couples indices `i` and `i + 1`; `e[n-1] = 0`) and,
/// when `accumulate` is set, the accumulated orthogonal transformation as an
/// `n x n` row-major buffer.
///
/// Follows the classic EISPACK `tred2` organization: step `i` (descending)
/// reduces row/column `i` against the leading `i x i` block, storing the
/// Householder vector in column `i` of the working buffer.
fn householder_tridiag(a: &SymMatrix, accumulate: bool) -> (Vec<f64>, Vec<f64>, Option<Vec<f64>>) {
    let n = a.dim;
    let mut v = a.to_dense().data;
    let mut d: Vec<f64> = (0..n).map(|j| v[(n - 1) * n + j]).collect();
    let mut e = vec![0.0; n];
    // h values per step, needed again when accumulating the transformation.
    let mut hs = vec![0.0; n];

    for i in (1..n).rev() {
        let mut h = 0.0;
        let mut scale = 0.0;
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[(i - 1) * n + j];
                v[i * n + j] = 0.0;
                v[j * n + i] = 0.0;
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for item in e.iter_mut().take(i) {
                *item = 0.0;
            }
            // Apply the similarity transformation to the leading block.
            for j in 0..i {
                let f = d[j];
                v[j * n + i] = f;
                let mut g = e[j] + v[j * n + j] * f;
                for k in (j + 1)..i {
                    g += v[k * n + j] * d[k];
                    e[k] += v[k * n + j] * f;
                }
                e[j] = g;
            }
            let mut f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                let f = d[j];
                let g = e[j];
                for k in j..i {
                    v[k * n + j] -= f * e[k] + g * d[k];
                }
                d[j] = v[(i - 1) * n + j];
                v[i * n + j] = 0.0;
            }
        }
        hs[i] = h;
    }

    // The reduced tridiagonal diagonal: entry (j, j) is final once step j+1
    // has run, and steps only touch strictly leading blocks afterwards.
    let diag: Vec<f64> = (0..n).map(|j| v[j * n + j]).collect();

    let q = if accumulate {
        let mut scratch = vec![0.0; n];
        for i in 0..n.saturating_sub(1) {
            v[i * n + i] = 1.0;
            let h = hs[i + 1];
            if h != 0.0 {
                for k in 0..=i {
                    scratch[k] = v[k * n + i + 1] / h;
                }
                for j in 0..=i {
                    let mut g = 0.0;
                    for k in 0..=i {
                        g += v[k * n + i + 1] * v[k * n + j];
                    }
                    for k in 0..=i {
                        v[k * n + j] -= g * scratch[k];
                    }
                }
            }
            for k in 0..=i {
                v[k * n + i + 1] = 0.0;
            }
        }
        // Householder vectors never touch the last row.
        for j in 0..n {
            v[(n - 1) * n + j] = 0.0;
        }
        v[(n - 1) * n + n - 1] = 1.0;
        Some(v)
    } else {
        None
    };

    // Shift the subdiagonal to the convention e[i] = coupling(i, i+1).
    let mut e_out = vec![0.0; n];
    for i in 0..n.saturating_sub(1) {
        e_out[i] = e[i + 1];
    }
    (diag, e_out, q)
}

/// Implicit-shift QL with Wilkinson shifts on a symmetric tridiagonal matrix.
/// `e[i]` couples `d[i]` and `d[i+1]`. Rotations are accumulated into the
/// columns of `q` when provided. Fails after `50 * n` total sweeps, naming
/// the off-diagonal index that would not deflate.
fn ql_implicit(d: &mut [f64], e: &mut [f64], mut q: Option<&mut [f64]>) -> Result<()> {
    let n = d.len();
    if n == 0 {
        return Ok(());
    }
    let cap = SWEEP_CAP_PER_DIM * n;
    let mut sweeps = 0usize;

    for l in 0..n {
        loop {
            // Smallest m >= l with a negligible coupling e[m].
            let mut m = l;
            while m < n - 1 {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            sweeps += 1;
            if sweeps > cap {
                return Err(Error::EighNonConvergence { index: l, sweeps: cap });
            }

            // Wilkinson shift from the leading 2x2 of the unreduced block.
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            if g < 0.0 {
                r = -r;
            }
            g = d[m] - d[l] + e[l] / (g + r);

            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            let mut underflow = false;
            for i in (l..m).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    // Recoverable underflow: drop the shift and retry.
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                if let Some(z) = q.as_deref_mut() {
                    for k in 0..n {
                        f = z[k * n + i + 1];
                        z[k * n + i + 1] = s * z[k * n + i] + c * f;
                        z[k * n + i] = c * z[k * n + i] - s * f;
                    }
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

fn sort_ascending(d: &mut [f64], q: Option<&mut Vec<f64>>) {
    let n = d.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let sorted: Vec<f64> = order.iter().map(|&k| d[k]).collect();
    d.copy_from_slice(&sorted);
    if let Some(q) = q {
        let old = q.clone();
        for i in 0..n {
            for (new_col, &old_col) in order.iter().enumerate() {
                q[i * n + new_col] = old[i * n + old_col];
            }
        }
    }
}

/// Full spectral factorization of a symmetric matrix.
///
/// Deterministic for a fixed input. Eigenvalues come back ascending, with
/// eigenvector column `k` paired with eigenvalue `k`.
pub fn eigh(m: &SymMatrix) -> Result<EigenDecomposition> {
    let n = m.dim;
    let (mut d, mut e, q) = householder_tridiag(m, true);
    let mut q = q.expect("accumulated");
    ql_implicit(&mut d, &mut e, Some(&mut q))?;
    sort_ascending(&mut d, Some(&mut q));
    Ok(EigenDecomposition {
        eigenvalues: d,
        eigenvectors: DenseMatrix { rows: n, cols: n, data: q },
    })
}

/// Eigenvalues only (ascending). Skips the eigenvector accumulation, which
/// dominates the cost of [`eigh`] for the large replicated experiments.
pub fn eigenvalues(m: &SymMatrix) -> Result<Vec<f64>> {
    let (mut d, mut e, _) = householder_tridiag(m, false);
    ql_implicit(&mut d, &mut e, None)?;
    sort_ascending(&mut d, None);
    Ok(d)
}

/// Symmetric PSD square root: `R` with `R R = m`.
///
/// Eigenvalues in `[-1e-12, 0)` are clamped to zero as roundoff from PSD
/// inputs; anything below that fails.
pub fn sym_sqrt(m: &SymMatrix) -> Result<SymMatrix> {
    let decomp = eigh(m)?;
    sym_sqrt_from_eigh(&decomp)
}

/// Square root assembled from an existing factorization of the matrix.
pub fn sym_sqrt_from_eigh(decomp: &EigenDecomposition) -> Result<SymMatrix> {
    let min = decomp.eigenvalues.first().copied().unwrap_or(0.0);
    if min < PSD_CLAMP {
        return Err(Error::NotPositiveSemidefinite { min_eigenvalue: min });
    }
    let roots: Vec<f64> = decomp.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()).collect();
    let q = &decomp.eigenvectors;
    let n = q.rows();
    // Build one triangle of Q sqrt(L) Q^T; mirroring keeps R exactly symmetric.
    SymMatrix::from_fn(n, |i, j| {
        let mut s = 0.0;
        for (k, &r) in roots.iter().enumerate() {
            s += q.get(i, k) * r * q.get(j, k);
        }
        s
    })
}

/// `(1/n) X X^T` as a symmetric matrix, computed on one triangle only.
fn gram_scaled(x: &DenseMatrix) -> SymMatrix {
    let p = x.rows();
    let inv_n = 1.0 / x.cols() as f64;
    SymMatrix::from_fn(p, |i, j| {
        let (ri, rj) = (x.row(i), x.row(j));
        let dot: f64 = ri.iter().zip(rj).map(|(a, b)| a * b).sum();
        dot * inv_n
    })
    .expect("p >= 1")
}

/// Sample covariance matrix `(1/n) T^{1/2} X X^T T^{1/2}` for a `p x n` data
/// matrix `x` and the population square root `t_sqrt`.
///
/// The result is exactly symmetric: the Gram matrix is built on one triangle
/// and the sandwich product is symmetrized by averaging with its transpose.
pub fn sample_covariance(t_sqrt: &SymMatrix, x: &DenseMatrix) -> Result<SymMatrix> {
    if t_sqrt.dim != x.rows() {
        return Err(Error::DimensionMismatch(format!(
            "population square root is {0}x{0} but data has {1} rows",
            t_sqrt.dim,
            x.rows()
        )));
    }
    let gram = gram_scaled(x);
    if t_sqrt.is_identity() {
        return Ok(gram);
    }
    if let Some(diag) = t_sqrt.as_diagonal() {
        return SymMatrix::from_fn(gram.dim, |i, j| diag[i] * gram.get(i, j) * diag[j]);
    }
    let s = t_sqrt.to_dense();
    let m = s.matmul(&gram.to_dense())?;
    let r = m.matmul(&s)?;
    SymMatrix::from_dense_average(&r)
}
