//! Decomposition-backed kernels: SVD, symmetric eigendecomposition,
//! singular-value soft thresholding, and the Moore-Penrose pseudo-inverse.

use super::dense::DenseMatrix;
use super::MatError;

/// Default relative singular-value cutoff for [`pseudo_inverse`].
pub const DEFAULT_PINV_TOL: f64 = 1e-10;

/// Thin singular value decomposition `M = U diag(σ) Vᵀ`.
///
/// Singular values are non-increasing, `U` and `V` are column-orthonormal,
/// and the sign of each pair `(u_j, v_j)` is fixed so that the first nonzero
/// entry of `u_j` is non-negative, making the output deterministic.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub u: DenseMatrix,
    pub singular_values: Vec<f64>,
    pub v: DenseMatrix,
}

impl SvdResult {
    /// Reassembles `U diag(σ) Vᵀ`.
    pub fn reconstruct(&self) -> DenseMatrix {
        self.reconstruct_weighted(&self.singular_values)
    }

    /// Reassembles `Σ_j w_j u_j v_jᵀ`, skipping zero weights.
    pub fn reconstruct_weighted(&self, weights: &[f64]) -> DenseMatrix {
        assert_eq!(weights.len(), self.singular_values.len());
        let mut out = DenseMatrix::zeros(self.u.rows(), self.v.rows());
        for (j, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let u_j = self.u.column(j);
            let v_j = self.v.column(j);
            for (i, &ui) in u_j.iter().enumerate() {
                if ui == 0.0 {
                    continue;
                }
                for (k, &vk) in v_j.iter().enumerate() {
                    out.set(i, k, out.get(i, k) + w * ui * vk);
                }
            }
        }
        out
    }
}

fn svd_max_iters(rows: usize, cols: usize) -> usize {
    300 * rows.max(cols).max(16)
}

/// Full thin SVD with deterministic ordering and sign convention.
pub fn svd(m: &DenseMatrix) -> Result<SvdResult, MatError> {
    let iters = svd_max_iters(m.rows(), m.cols());
    let decomp = nalgebra::linalg::SVD::try_new(m.to_na(), true, true, f64::EPSILON, iters)
        .ok_or(MatError::SvdNoConvergence { iterations: iters })?;
    let mut u = DenseMatrix::from_na(decomp.u.as_ref().expect("U requested"));
    let mut v = DenseMatrix::from_na(&decomp.v_t.as_ref().expect("V requested").transpose());
    let sigma: Vec<f64> = decomp.singular_values.iter().copied().collect();

    // Fix signs: first nonzero entry of each left singular vector >= 0.
    for j in 0..sigma.len() {
        let mut flip = false;
        for i in 0..u.rows() {
            let e = u.get(i, j);
            if e != 0.0 {
                flip = e < 0.0;
                break;
            }
        }
        if flip {
            for i in 0..u.rows() {
                u.set(i, j, -u.get(i, j));
            }
            for i in 0..v.rows() {
                v.set(i, j, -v.get(i, j));
            }
        }
    }
    Ok(SvdResult {
        u,
        singular_values: sigma,
        v,
    })
}

/// Singular values only, non-increasing. Cheaper than [`svd`] when the
/// vectors are not needed.
pub fn singular_values(m: &DenseMatrix) -> Result<Vec<f64>, MatError> {
    let iters = svd_max_iters(m.rows(), m.cols());
    let decomp = nalgebra::linalg::SVD::try_new(m.to_na(), false, false, f64::EPSILON, iters)
        .ok_or(MatError::SvdNoConvergence { iterations: iters })?;
    Ok(decomp.singular_values.iter().copied().collect())
}

/// Spectral norm `σ₁(M)`.
pub fn spectral_norm(m: &DenseMatrix) -> Result<f64, MatError> {
    Ok(singular_values(m)?.first().copied().unwrap_or(0.0))
}

/// Eigendecomposition of a symmetric matrix, eigenvalues sorted descending
/// with matching eigenvector columns and the same sign convention as [`svd`].
pub fn eigh(m: &DenseMatrix) -> Result<(Vec<f64>, DenseMatrix), MatError> {
    if !m.is_square() {
        return Err(MatError::NotSquare("eigh"));
    }
    let iters = svd_max_iters(m.rows(), m.cols());
    let decomp = nalgebra::linalg::SymmetricEigen::try_new(m.to_na(), f64::EPSILON, iters)
        .ok_or(MatError::EigNoConvergence { iterations: iters })?;
    let n = m.rows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        decomp.eigenvalues[b]
            .partial_cmp(&decomp.eigenvalues[a])
            .expect("finite eigenvalues")
    });
    let values: Vec<f64> = order.iter().map(|&i| decomp.eigenvalues[i]).collect();
    let mut vectors = DenseMatrix::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        let mut flip = false;
        for i in 0..n {
            let e = decomp.eigenvectors[(i, src)];
            if e != 0.0 {
                flip = e < 0.0;
                break;
            }
        }
        let s = if flip { -1.0 } else { 1.0 };
        for i in 0..n {
            vectors.set(i, col, s * decomp.eigenvectors[(i, src)]);
        }
    }
    Ok((values, vectors))
}

/// Minimizer of `‖M − X‖_F² + λ‖X‖_*`: shrinks every singular value by
/// `λ/2` and clips at zero.
pub fn soft_threshold_svd(m: &DenseMatrix, lambda: f64) -> Result<DenseMatrix, MatError> {
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(MatError::InvalidArgument(format!(
            "threshold must be a finite non-negative value, got {lambda}"
        )));
    }
    let decomp = svd(m)?;
    let weights: Vec<f64> = decomp
        .singular_values
        .iter()
        .map(|s| (s - lambda / 2.0).max(0.0))
        .collect();
    Ok(decomp.reconstruct_weighted(&weights))
}

/// Moore-Penrose pseudo-inverse with a relative cutoff: singular values at or
/// below `rel_tol · σ₁` are treated as zero.
pub fn pseudo_inverse(m: &DenseMatrix, rel_tol: f64) -> Result<DenseMatrix, MatError> {
    if rel_tol <= 0.0 || !rel_tol.is_finite() {
        return Err(MatError::InvalidArgument(format!(
            "pseudo-inverse cutoff must be positive, got {rel_tol}"
        )));
    }
    let decomp = svd(m)?;
    let sigma_1 = decomp.singular_values.first().copied().unwrap_or(0.0);
    let cutoff = rel_tol * sigma_1;
    let inv_weights: Vec<f64> = decomp
        .singular_values
        .iter()
        .map(|&s| if s > cutoff && s > 0.0 { 1.0 / s } else { 0.0 })
        .collect();
    // M⁺ = V diag(1/σ) Uᵀ
    let vt_result = SvdResult {
        u: decomp.v,
        singular_values: decomp.singular_values.clone(),
        v: decomp.u,
    };
    Ok(vt_result.reconstruct_weighted(&inv_weights))
}
