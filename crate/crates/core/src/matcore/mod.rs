//! Dense linear-algebra kernel: Kronecker products, the block-vectorizing
//! rearrangement operator and its inverse, SVD-backed decompositions, norms,
//! symmetrization, pseudo-inverse, and a discrete Lyapunov solver.
//!
//! All operations are pure functions of their inputs; values are immutable
//! after construction and safe to share across threads.

mod decomp;
mod dense;

pub use decomp::{
    eigh, pseudo_inverse, singular_values, soft_threshold_svd, spectral_norm, svd, SvdResult,
    DEFAULT_PINV_TOL,
};
pub use dense::{DenseMatrix, MAX_SIDE};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MatError {
    #[error("dimension mismatch in {op}: {detail}")]
    DimensionMismatch { op: &'static str, detail: String },
    #[error("matrix entries must be finite")]
    NonFinite,
    #[error("{0} requires a square matrix")]
    NotSquare(&'static str),
    #[error("requested {rows}x{cols} result exceeds the {cap}-per-side size cap")]
    SizeCap { rows: usize, cols: usize, cap: usize },
    #[error("singular value decomposition did not converge within {iterations} iterations")]
    SvdNoConvergence { iterations: usize },
    #[error("symmetric eigendecomposition did not converge within {iterations} iterations")]
    EigNoConvergence { iterations: usize },
    #[error("transition matrix has spectral norm {norm} >= 1; fixed-point iteration would diverge")]
    UnstableTransition { norm: f64 },
    #[error("fixed-point iteration did not converge within {iterations} iterations")]
    FixedPointNoConvergence { iterations: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Kronecker product `A ⊗ B`: block `(i, j)` of the result is `A[i,j] · B`.
pub fn kron(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix, MatError> {
    let rows = a
        .rows()
        .checked_mul(b.rows())
        .filter(|&r| r <= MAX_SIDE)
        .ok_or(MatError::SizeCap {
            rows: a.rows().saturating_mul(b.rows()),
            cols: a.cols().saturating_mul(b.cols()),
            cap: MAX_SIDE,
        })?;
    let cols = a
        .cols()
        .checked_mul(b.cols())
        .filter(|&c| c <= MAX_SIDE)
        .ok_or(MatError::SizeCap {
            rows,
            cols: a.cols().saturating_mul(b.cols()),
            cap: MAX_SIDE,
        })?;
    let mut out = DenseMatrix::zeros(rows, cols);
    for ia in 0..a.rows() {
        for ja in 0..a.cols() {
            let aij = a.get(ia, ja);
            if aij == 0.0 {
                continue;
            }
            for ib in 0..b.rows() {
                for jb in 0..b.cols() {
                    out.set(ia * b.rows() + ib, ja * b.cols() + jb, aij * b.get(ib, jb));
                }
            }
        }
    }
    Ok(out)
}

/// Rearranges a `pq×pq` matrix into the `p²×q²` matrix whose rows are the
/// column-stacked `q×q` block submatrices, ordered so that for any
/// `A ⊗ B` the result is exactly `vec(A)·vec(B)ᵀ`.
///
/// With zero-based block indices `(i, j)` the block lands in row `j·p + i`,
/// matching the column-major convention of the `vec(·)` operator.
pub fn rearrange(m: &DenseMatrix, p: usize, q: usize) -> Result<DenseMatrix, MatError> {
    let d = p * q;
    if m.rows() != d || m.cols() != d {
        return Err(MatError::DimensionMismatch {
            op: "rearrange",
            detail: format!("expected {d}x{d} for factors {p}x{q}, got {}x{}", m.rows(), m.cols()),
        });
    }
    let mut out = DenseMatrix::zeros(p * p, q * q);
    for i in 0..p {
        for j in 0..p {
            let row = j * p + i;
            for k in 0..q {
                for l in 0..q {
                    out.set(row, l * q + k, m.get(i * q + k, j * q + l));
                }
            }
        }
    }
    Ok(out)
}

/// Exact inverse of [`rearrange`]; a pure index relocation, so round trips
/// are bit-exact.
pub fn rearrange_inv(r: &DenseMatrix, p: usize, q: usize) -> Result<DenseMatrix, MatError> {
    if r.rows() != p * p || r.cols() != q * q {
        return Err(MatError::DimensionMismatch {
            op: "rearrange_inv",
            detail: format!(
                "expected {}x{} for factors {p}x{q}, got {}x{}",
                p * p,
                q * q,
                r.rows(),
                r.cols()
            ),
        });
    }
    let d = p * q;
    let mut out = DenseMatrix::zeros(d, d);
    for i in 0..p {
        for j in 0..p {
            let row = j * p + i;
            for k in 0..q {
                for l in 0..q {
                    out.set(i * q + k, j * q + l, r.get(row, l * q + k));
                }
            }
        }
    }
    Ok(out)
}

/// Norm bundle for a matrix; `trace` is `None` for non-square inputs.
#[derive(Debug, Clone, Copy)]
pub struct MatrixNorms {
    pub frobenius: f64,
    pub spectral: f64,
    pub nuclear: f64,
    pub trace: Option<f64>,
}

pub fn matrix_norms(m: &DenseMatrix) -> Result<MatrixNorms, MatError> {
    let sigma = singular_values(m)?;
    Ok(MatrixNorms {
        frobenius: m.frobenius_norm(),
        spectral: sigma.first().copied().unwrap_or(0.0),
        nuclear: sigma.iter().sum(),
        trace: if m.is_square() { Some(m.trace()?) } else { None },
    })
}

/// `(M + Mᵀ)/2`; the output minus its transpose is exactly zero.
pub fn symmetrize(m: &DenseMatrix) -> Result<DenseMatrix, MatError> {
    if !m.is_square() {
        return Err(MatError::NotSquare("symmetrize"));
    }
    let n = m.rows();
    let mut out = DenseMatrix::zeros(n, n);
    for i in 0..n {
        out.set(i, i, m.get(i, i));
        for j in (i + 1)..n {
            let v = 0.5 * (m.get(i, j) + m.get(j, i));
            out.set(i, j, v);
            out.set(j, i, v);
        }
    }
    Ok(out)
}

const LYAPUNOV_REL_TOL: f64 = 1e-12;
const LYAPUNOV_MAX_ITERS: usize = 1_000_000;

/// Solves `X = Φ X Φᵀ + Q` by fixed-point iteration.
///
/// Requires `‖Φ‖₂ < 1` (checked up front) and symmetric `Q`; convergence is
/// geometric at rate `‖Φ‖₂²`. The result is symmetrized to cancel
/// floating-point drift.
pub fn solve_discrete_lyapunov(phi: &DenseMatrix, q: &DenseMatrix) -> Result<DenseMatrix, MatError> {
    if !phi.is_square() {
        return Err(MatError::NotSquare("solve_discrete_lyapunov"));
    }
    if q.rows() != phi.rows() || q.cols() != phi.cols() {
        return Err(MatError::DimensionMismatch {
            op: "solve_discrete_lyapunov",
            detail: format!(
                "transition is {}x{} but noise covariance is {}x{}",
                phi.rows(),
                phi.cols(),
                q.rows(),
                q.cols()
            ),
        });
    }
    if q.symmetry_defect() > 1e-8 * q.max_abs().max(1.0) {
        return Err(MatError::InvalidArgument(
            "noise covariance must be symmetric".into(),
        ));
    }
    let norm = spectral_norm(phi)?;
    if norm >= 1.0 {
        return Err(MatError::UnstableTransition { norm });
    }
    let phi_t = phi.transpose();
    let mut x = q.clone();
    for _ in 0..LYAPUNOV_MAX_ITERS {
        let next = &(&(phi * &x) * &phi_t) + q;
        let delta = (&next - &x).frobenius_norm();
        let scale = x.frobenius_norm();
        x = next;
        if delta <= LYAPUNOV_REL_TOL * scale {
            return symmetrize(&x);
        }
    }
    Err(MatError::FixedPointNoConvergence {
        iterations: LYAPUNOV_MAX_ITERS,
    })
}
