//! Covariance estimators: the sample covariance matrix, PCA truncation,
//! trace-penalized eigenvalue shrinkage (SVT), the rearranged nuclear-norm
//! estimator (PRLS), rank-constrained covariance matching, regularization
//! rules, and effective rank.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matcore::{
    self, eigh, rearrange, rearrange_inv, soft_threshold_svd, spectral_norm, svd, symmetrize,
    DenseMatrix, MatError,
};

/// Symmetry tolerance for estimator inputs that must be covariance-like.
const SYMMETRY_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error(transparent)]
    Mat(#[from] MatError),
    #[error("sample set is empty")]
    EmptySampleSet,
    #[error("rank {r} out of range 1..={max}")]
    RankOutOfRange { r: usize, max: usize },
    #[error("regularization parameter must be non-negative, got {0}")]
    NegativeLambda(f64),
    #[error("input must be symmetric (defect {defect:.3e} exceeds {SYMMETRY_TOL:.0e})")]
    NotSymmetric { defect: f64 },
    #[error("dimension mismatch: expected a {expected}x{expected} matrix, got {rows}x{cols}")]
    WrongDimensions {
        expected: usize,
        rows: usize,
        cols: usize,
    },
    #[error("regularization rule invariant violated: {0}")]
    RuleInvariant(String),
    #[error("matrix is zero; the quantity is undefined")]
    ZeroMatrix,
}

/// Zero-mean observations with known factor dimensions.
///
/// Rows of `data` are the `d = p·q` dimensional samples. Centering is the
/// caller's contract; the wind pipeline removes means upstream.
#[derive(Debug, Clone)]
pub struct SampleSet {
    p: usize,
    q: usize,
    data: DenseMatrix,
}

impl SampleSet {
    pub fn new(p: usize, q: usize, data: DenseMatrix) -> Result<Self, EstimatorError> {
        if data.cols() != p * q {
            return Err(EstimatorError::WrongDimensions {
                expected: p * q,
                rows: data.rows(),
                cols: data.cols(),
            });
        }
        Ok(SampleSet { p, q, data })
    }

    pub fn len(&self) -> usize {
        self.data.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.p * self.q
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn data(&self) -> &DenseMatrix {
        &self.data
    }
}

/// One term of a Kronecker-product expansion. Factors have unit Frobenius
/// norm; the weight carries the magnitude.
#[derive(Debug, Clone)]
pub struct KronTerm {
    pub weight: f64,
    pub left: DenseMatrix,
    pub right: DenseMatrix,
}

/// Ordered Kronecker-product expansion `Σ_γ w_γ · L_γ ⊗ R_γ` with
/// non-increasing weights and pairwise-orthogonal factors.
#[derive(Debug, Clone)]
pub struct KroneckerExpansion {
    pub p: usize,
    pub q: usize,
    pub terms: Vec<KronTerm>,
}

impl KroneckerExpansion {
    /// Number of terms with positive weight.
    pub fn separation_rank(&self) -> usize {
        self.terms.len()
    }

    /// Assembles the represented `pq×pq` matrix.
    pub fn assemble(&self) -> Result<DenseMatrix, EstimatorError> {
        let d = self.p * self.q;
        let mut out = DenseMatrix::zeros(d, d);
        for term in &self.terms {
            let block = matcore::kron(&term.left, &term.right)?;
            out = &out + &block.scale(term.weight);
        }
        Ok(out)
    }
}

/// Estimator output carrying both the expansion and the assembled covariance.
#[derive(Debug, Clone)]
pub struct KroneckerFit {
    pub expansion: KroneckerExpansion,
    pub covariance: DenseMatrix,
}

impl KroneckerFit {
    /// Effective separation rank: the number of surviving expansion terms.
    pub fn effective_separation_rank(&self) -> usize {
        self.expansion.separation_rank()
    }
}

/// Absolute constant `4e/√(6π) ≈ 2.5044` from the Gaussian-chaos moment bound.
pub fn chaos_constant_c1() -> f64 {
    4.0 * std::f64::consts::E / (6.0 * std::f64::consts::PI).sqrt()
}

/// Absolute constant `e·√2 ≈ 3.8442` from the Gaussian-chaos moment bound.
pub fn chaos_constant_c2() -> f64 {
    std::f64::consts::E * std::f64::consts::SQRT_2
}

/// Smallest tail parameter `t` admitted for the theory-driven rate at a given
/// `ε′ ∈ (0, 1/2)`.
pub fn min_theory_t(eps_prime: f64) -> f64 {
    let log_net = (1.0 + 2.0 / eps_prime).ln();
    (4.0 * chaos_constant_c1() * log_net)
        .sqrt()
        .max(4.0 * chaos_constant_c2() * log_net)
}

/// Regularization-parameter selection rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LambdaRule {
    /// `λ = C` verbatim.
    Fixed { c: f64 },
    /// `λ = C‖Ŝ‖₂ √((p² + q² + log M)/n)` with `M = max(p, q, n)`.
    PrlsPractical { c: f64 },
    /// `λ = (2 C₀ t / (1 − 2ε′)) · max{x, √x}` with
    /// `x = (p² + q² + log M)/n`; `C₀` is the spectral norm of the target
    /// covariance.
    PrlsTheory { c0: f64, t: f64, eps_prime: f64 },
    /// `λ = C √(tr(Ŝ)‖Ŝ‖₂) √(log(2pq)/n)`.
    SvtLounici { c: f64 },
}

impl LambdaRule {
    pub fn validate(&self) -> Result<(), EstimatorError> {
        match *self {
            LambdaRule::Fixed { c } | LambdaRule::PrlsPractical { c } | LambdaRule::SvtLounici { c } => {
                if !(c > 0.0 && c.is_finite()) {
                    return Err(EstimatorError::RuleInvariant(format!(
                        "multiplier C must be positive and finite, got {c}"
                    )));
                }
            }
            LambdaRule::PrlsTheory { c0, t, eps_prime } => {
                if !(c0 > 0.0 && c0.is_finite()) {
                    return Err(EstimatorError::RuleInvariant(format!(
                        "C0 must be positive and finite, got {c0}"
                    )));
                }
                if !(eps_prime > 0.0 && eps_prime < 0.5) {
                    return Err(EstimatorError::RuleInvariant(format!(
                        "eps_prime must lie in (0, 1/2), got {eps_prime}"
                    )));
                }
                let t_min = min_theory_t(eps_prime);
                if !(t.is_finite() && t >= t_min) {
                    return Err(EstimatorError::RuleInvariant(format!(
                        "t = {t} is below the minimum {t_min:.4} admitted for eps_prime = {eps_prime}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// `(p² + q² + log max(p,q,n)) / n`, the dimension-to-sample ratio the rate
/// bounds are expressed in.
pub fn rate_ratio(p: usize, q: usize, n: usize) -> f64 {
    let m = p.max(q).max(n) as f64;
    ((p * p + q * q) as f64 + m.ln()) / n as f64
}

/// Evaluates a [`LambdaRule`] on a sample covariance.
pub fn lambda_select(
    rule: &LambdaRule,
    s_hat: &DenseMatrix,
    p: usize,
    q: usize,
    n: usize,
) -> Result<f64, EstimatorError> {
    rule.validate()?;
    if n == 0 {
        return Err(EstimatorError::EmptySampleSet);
    }
    let x = rate_ratio(p, q, n);
    Ok(match *rule {
        LambdaRule::Fixed { c } => c,
        LambdaRule::PrlsPractical { c } => c * spectral_norm(s_hat)? * x.sqrt(),
        LambdaRule::PrlsTheory { c0, t, eps_prime } => {
            2.0 * c0 * t / (1.0 - 2.0 * eps_prime) * x.max(x.sqrt())
        }
        LambdaRule::SvtLounici { c } => {
            let trace = s_hat.trace()?;
            let spec = spectral_norm(s_hat)?;
            c * (trace * spec).max(0.0).sqrt() * ((2.0 * p as f64 * q as f64).ln() / n as f64).sqrt()
        }
    })
}

/// Sample covariance matrix `(1/n) Σ_t z_t z_tᵀ`.
pub fn scm(samples: &SampleSet) -> Result<DenseMatrix, EstimatorError> {
    let n = samples.len();
    if n == 0 {
        return Err(EstimatorError::EmptySampleSet);
    }
    let data = samples.data();
    let s = &data.transpose() * data;
    Ok(s.scale(1.0 / n as f64))
}

fn check_symmetric_square(
    s_hat: &DenseMatrix,
    expected_dim: usize,
) -> Result<(), EstimatorError> {
    if !s_hat.is_square() || s_hat.rows() != expected_dim {
        return Err(EstimatorError::WrongDimensions {
            expected: expected_dim,
            rows: s_hat.rows(),
            cols: s_hat.cols(),
        });
    }
    let defect = s_hat.symmetry_defect();
    let scale = s_hat.max_abs().max(1.0);
    if defect > SYMMETRY_TOL * scale {
        return Err(EstimatorError::NotSymmetric { defect });
    }
    Ok(())
}

/// PCA covariance: keeps the top `r` eigen-components.
pub fn pca_covariance(s_hat: &DenseMatrix, r: usize) -> Result<DenseMatrix, EstimatorError> {
    check_symmetric_square(s_hat, s_hat.rows())?;
    let d = s_hat.rows();
    if r == 0 || r > d {
        return Err(EstimatorError::RankOutOfRange { r, max: d });
    }
    let (vals, vecs) = eigh(s_hat)?;
    let mut out = DenseMatrix::zeros(d, d);
    for i in 0..r {
        let v = vecs.column(i);
        let w = vals[i];
        if w == 0.0 {
            continue;
        }
        for a in 0..d {
            for b in a..d {
                let upd = w * v[a] * v[b];
                out.set(a, b, out.get(a, b) + upd);
                if a != b {
                    out.set(b, a, out.get(b, a) + upd);
                }
            }
        }
    }
    Ok(out)
}

/// Trace-penalized least-squares covariance: soft-thresholds the eigenvalues
/// by `λ/2` and clips at zero, which also projects onto the psd cone.
pub fn svt_covariance(s_hat: &DenseMatrix, lambda: f64) -> Result<DenseMatrix, EstimatorError> {
    check_symmetric_square(s_hat, s_hat.rows())?;
    if lambda < 0.0 {
        return Err(EstimatorError::NegativeLambda(lambda));
    }
    let d = s_hat.rows();
    let (vals, vecs) = eigh(s_hat)?;
    let mut out = DenseMatrix::zeros(d, d);
    for i in 0..d {
        let w = (vals[i] - lambda / 2.0).max(0.0);
        if w == 0.0 {
            continue;
        }
        let v = vecs.column(i);
        for a in 0..d {
            for b in a..d {
                let upd = w * v[a] * v[b];
                out.set(a, b, out.get(a, b) + upd);
                if a != b {
                    out.set(b, a, out.get(b, a) + upd);
                }
            }
        }
    }
    Ok(out)
}

/// Shared tail of the rearranged-domain estimators: given per-singular-value
/// weights, assemble the de-permuted covariance and the factor expansion.
fn expansion_from_weighted_svd(
    decomp: &matcore::SvdResult,
    weights: &[f64],
    p: usize,
    q: usize,
) -> Result<KroneckerFit, EstimatorError> {
    let thresholded = decomp.reconstruct_weighted(weights);
    let covariance = symmetrize(&rearrange_inv(&thresholded, p, q)?)?;

    let mut terms = Vec::new();
    for (j, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        let left_raw = DenseMatrix::from_vec_col_major(&decomp.u.column(j), p, p)?;
        let right_raw = DenseMatrix::from_vec_col_major(&decomp.v.column(j), q, q)?;
        // The reshaped singular vectors of a symmetric input are symmetric in
        // exact arithmetic; the guard only cancels floating-point drift. The
        // small norm change is folded back into the weight.
        let mut left = symmetrize(&left_raw)?;
        let mut right = symmetrize(&right_raw)?;
        let ln = left.frobenius_norm();
        let rn = right.frobenius_norm();
        if ln == 0.0 || rn == 0.0 {
            continue;
        }
        left = left.scale(1.0 / ln);
        right = right.scale(1.0 / rn);
        // L ⊗ R = (−L) ⊗ (−R): fix signs so the left factor has
        // non-negative trace.
        if left.trace()? < 0.0 {
            left = left.scale(-1.0);
            right = right.scale(-1.0);
        }
        terms.push(KronTerm {
            weight: w * ln * rn,
            left,
            right,
        });
    }
    Ok(KroneckerFit {
        expansion: KroneckerExpansion { p, q, terms },
        covariance,
    })
}

/// Rearranged nuclear-norm covariance estimator.
///
/// Rearranges `Ŝ` into the `p²×q²` domain, soft-thresholds its singular
/// values by `λ/2`, and de-permutes; the unique minimizer of
/// `‖R(Ŝ) − X‖_F² + λ‖X‖_*` mapped back to covariance form. The output is
/// passed through [`symmetrize`] to cancel floating-point asymmetry.
pub fn prls(
    s_hat: &DenseMatrix,
    lambda: f64,
    p: usize,
    q: usize,
) -> Result<KroneckerFit, EstimatorError> {
    check_symmetric_square(s_hat, p * q)?;
    if lambda < 0.0 {
        return Err(EstimatorError::NegativeLambda(lambda));
    }
    let r_hat = rearrange(s_hat, p, q)?;
    let decomp = svd(&r_hat)?;
    let weights: Vec<f64> = decomp
        .singular_values
        .iter()
        .map(|s| (s - lambda / 2.0).max(0.0))
        .collect();
    expansion_from_weighted_svd(&decomp, &weights, p, q)
}

/// Covariance matching: the best separation-rank-`r` approximation, computed
/// as the rank-`r` truncated SVD in the rearranged domain.
pub fn cm_covariance(
    s_hat: &DenseMatrix,
    r: usize,
    p: usize,
    q: usize,
) -> Result<KroneckerFit, EstimatorError> {
    check_symmetric_square(s_hat, p * q)?;
    let max_rank = (p * p).min(q * q);
    if r == 0 || r > max_rank {
        return Err(EstimatorError::RankOutOfRange { r, max: max_rank });
    }
    let r_hat = rearrange(s_hat, p, q)?;
    let decomp = svd(&r_hat)?;
    let weights: Vec<f64> = decomp
        .singular_values
        .iter()
        .enumerate()
        .map(|(j, &s)| if j < r { s } else { 0.0 })
        .collect();
    expansion_from_weighted_svd(&decomp, &weights, p, q)
}

/// Effective rank `tr(Σ)/‖Σ‖₂`; lies in `[1, rank(Σ)]` for nonzero psd `Σ`.
pub fn effective_rank(sigma: &DenseMatrix) -> Result<f64, EstimatorError> {
    check_symmetric_square(sigma, sigma.rows())?;
    let spec = spectral_norm(sigma)?;
    if spec == 0.0 {
        return Err(EstimatorError::ZeroMatrix);
    }
    Ok(sigma.trace()? / spec)
}

/// Soft-thresholded singular values of the rearranged matrix, with the same
/// `λ/2` shrinkage used by [`prls`]. Exposed for reporting.
pub fn prls_weights(sigma: &[f64], lambda: f64) -> Vec<f64> {
    sigma.iter().map(|s| (s - lambda / 2.0).max(0.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::kron;

    fn pseudo_random(rows: usize, cols: usize, mut state: u64) -> DenseMatrix {
        state = state.wrapping_add(0x9E3779B97F4A7C15);
        DenseMatrix::from_fn(rows, cols, |_, _| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
        .unwrap()
    }

    fn random_symmetric(n: usize, seed: u64) -> DenseMatrix {
        let g = pseudo_random(n, n, seed);
        symmetrize(&g).unwrap()
    }

    fn random_psd(n: usize, seed: u64) -> DenseMatrix {
        let g = pseudo_random(n, n, seed);
        &g * &g.transpose()
    }

    #[test]
    fn scm_single_and_opposite_samples() {
        let z = DenseMatrix::from_row_major(1, 2, vec![1.0, 2.0]).unwrap();
        let samples = SampleSet::new(1, 2, z).unwrap();
        let s = scm(&samples).unwrap();
        assert_eq!(s.data(), &[1.0, 2.0, 2.0, 4.0]);

        let z = DenseMatrix::from_row_major(2, 2, vec![1.0, 0.0, -1.0, 0.0]).unwrap();
        let samples = SampleSet::new(1, 2, z).unwrap();
        let s = scm(&samples).unwrap();
        assert_eq!(s.data(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn scm_rejects_empty_and_wrong_width() {
        assert!(SampleSet::new(2, 2, DenseMatrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn scm_concentrates_for_large_samples() {
        // Law-of-large-numbers oracle with a deterministic draw.
        use crate::synthgen::{sample_gaussian, RngSeed};
        let id = DenseMatrix::identity(4);
        let samples = sample_gaussian(&id, 2, 2, 10_000, RngSeed::new(424242)).unwrap();
        let s = scm(&samples).unwrap();
        assert!((&s - &id).frobenius_norm() <= 0.1);
    }

    #[test]
    fn pca_trivial_cases_and_eckart_young() {
        let s = random_psd(4, 5);
        let full = pca_covariance(&s, 4).unwrap();
        assert!((&full - &s).frobenius_norm() / s.frobenius_norm() < 1e-10);

        let d = DenseMatrix::diagonal(&[3.0, 2.0, 1.0]);
        let top = pca_covariance(&d, 1).unwrap();
        assert!((&top - &DenseMatrix::diagonal(&[3.0, 0.0, 0.0])).max_abs() < 1e-12);

        // Best rank-2 approximation oracle via svd truncation.
        let s = random_psd(5, 7);
        let ours = pca_covariance(&s, 2).unwrap();
        let decomp = svd(&s).unwrap();
        let weights: Vec<f64> = decomp
            .singular_values
            .iter()
            .enumerate()
            .map(|(i, &v)| if i < 2 { v } else { 0.0 })
            .collect();
        let oracle = decomp.reconstruct_weighted(&weights);
        assert!((&ours - &oracle).frobenius_norm() < 1e-8);

        assert!(matches!(
            pca_covariance(&s, 6),
            Err(EstimatorError::RankOutOfRange { .. })
        ));
    }

    #[test]
    fn svt_zero_lambda_is_psd_projection() {
        let s = DenseMatrix::diagonal(&[2.0, -1.0]);
        let out = svt_covariance(&s, 0.0).unwrap();
        assert!((&out - &DenseMatrix::diagonal(&[2.0, 0.0])).max_abs() < 1e-12);
    }

    #[test]
    fn svt_scalar_shrinkage() {
        let s = DenseMatrix::diagonal(&[3.0, 1.0]);
        let out = svt_covariance(&s, 2.0).unwrap();
        assert!((&out - &DenseMatrix::diagonal(&[2.0, 0.0])).max_abs() < 1e-12);
    }

    #[test]
    fn svt_rejects_asymmetric_input() {
        let mut s = DenseMatrix::identity(3);
        s.set(0, 1, 0.5);
        assert!(matches!(
            svt_covariance(&s, 0.1),
            Err(EstimatorError::NotSymmetric { .. })
        ));
    }

    #[test]
    fn svt_matches_projected_gradient_oracle() {
        // Iterative convex-solver oracle for the trace-penalized problem:
        // gradient step on ‖Ŝ − S‖_F² + λ tr(S), then project onto the psd
        // cone by eigenvalue clipping.
        let lambda = 0.5;
        for seed in 0..3u64 {
            let s_hat = random_psd(4, 100 + seed);
            let ours = svt_covariance(&s_hat, lambda).unwrap();

            let mut s = DenseMatrix::zeros(4, 4);
            for _ in 0..600 {
                let grad = &(&s - &s_hat).scale(2.0) + &DenseMatrix::identity(4).scale(lambda);
                let step = &s - &grad.scale(0.3);
                let (vals, vecs) = eigh(&symmetrize(&step).unwrap()).unwrap();
                let clipped: Vec<f64> = vals.iter().map(|&v| v.max(0.0)).collect();
                s = &(&vecs * &DenseMatrix::diagonal(&clipped)) * &vecs.transpose();
            }
            assert!(
                (&s - &ours).frobenius_norm() <= 1e-6,
                "oracle disagreement {}",
                (&s - &ours).frobenius_norm()
            );
        }
    }

    #[test]
    fn prls_on_exact_kron_shrinks_single_term() {
        let a = symmetrize(&pseudo_random(3, 3, 21)).unwrap();
        let b = symmetrize(&pseudo_random(2, 2, 22)).unwrap();
        let s = kron(&a, &b).unwrap();
        let sigma_1 = a.frobenius_norm() * b.frobenius_norm();
        let lambda = 0.5 * sigma_1;
        let fit = prls(&s, lambda, 3, 2).unwrap();
        let expected = s.scale(1.0 - lambda / (2.0 * sigma_1));
        assert!((&fit.covariance - &expected).frobenius_norm() / expected.frobenius_norm() < 1e-10);
        assert_eq!(fit.effective_separation_rank(), 1);
    }

    #[test]
    fn prls_full_shrinkage_gives_zero() {
        let s = random_psd(6, 31);
        let sigma_1 = spectral_norm(&rearrange(&s, 2, 3).unwrap()).unwrap();
        let fit = prls(&s, 2.0 * sigma_1 + 1.0, 2, 3).unwrap();
        assert!(fit.covariance.max_abs() < 1e-12);
        assert_eq!(fit.effective_separation_rank(), 0);
    }

    #[test]
    fn prls_zero_lambda_reconstructs() {
        let s = random_psd(6, 33);
        let fit = prls(&s, 0.0, 2, 3).unwrap();
        let rel = (&fit.covariance - &s).frobenius_norm() / s.frobenius_norm();
        assert!(rel < 1e-8, "relative reconstruction error {rel}");
    }

    #[test]
    fn prls_is_symmetric_and_pd_for_gaussian_samples() {
        use crate::synthgen::{random_kp_sum_covariance, sample_gaussian, RngSeed};
        let (p, q) = (3usize, 3usize);
        let truth = random_kp_sum_covariance(p, q, 2, RngSeed::new(7)).unwrap();
        let samples = sample_gaussian(&truth.sigma0, p, q, 2 * p * q, RngSeed::new(8)).unwrap();
        let s_hat = scm(&samples).unwrap();
        let r_hat = rearrange(&s_hat, p, q).unwrap();
        let sigma_1 = spectral_norm(&r_hat).unwrap();

        let decomp = svd(&r_hat).unwrap();
        for factor in [0.0, 0.1, 0.5, 1.0] {
            let lambda = factor * sigma_1;
            let fit = prls(&s_hat, lambda, p, q).unwrap();
            assert!(fit.covariance.symmetry_defect() <= 1e-10);
            let (vals, _) = eigh(&fit.covariance).unwrap();
            assert!(
                vals[vals.len() - 1] > 0.0,
                "min eigenvalue {} not positive at lambda factor {factor}",
                vals[vals.len() - 1]
            );
        }

        // Reshaped singular vectors are symmetric before the guard.
        for j in 0..decomp.singular_values.len() {
            if decomp.singular_values[j] < 1e-10 * sigma_1 {
                continue;
            }
            let left = DenseMatrix::from_vec_col_major(&decomp.u.column(j), p, p).unwrap();
            let right = DenseMatrix::from_vec_col_major(&decomp.v.column(j), q, q).unwrap();
            assert!(left.symmetry_defect() <= 1e-6, "left defect {}", left.symmetry_defect());
            assert!(right.symmetry_defect() <= 1e-6);
        }
    }

    #[test]
    fn prls_expansion_satisfies_type_invariants() {
        use crate::synthgen::{random_kp_sum_covariance, sample_gaussian, RngSeed};
        let (p, q) = (3usize, 2usize);
        let truth = random_kp_sum_covariance(p, q, 2, RngSeed::new(17)).unwrap();
        let samples = sample_gaussian(&truth.sigma0, p, q, 40, RngSeed::new(18)).unwrap();
        let s_hat = scm(&samples).unwrap();
        let fit = prls(&s_hat, 0.05, p, q).unwrap();
        let terms = &fit.expansion.terms;
        assert!(!terms.is_empty());
        for w in terms.windows(2) {
            assert!(w[0].weight >= w[1].weight);
        }
        for term in terms {
            assert!((term.left.frobenius_norm() - 1.0).abs() < 1e-10);
            assert!((term.right.frobenius_norm() - 1.0).abs() < 1e-10);
            assert!(term.left.symmetry_defect() < 1e-8);
            assert!(term.right.symmetry_defect() < 1e-8);
            assert!(term.left.trace().unwrap() >= 0.0);
        }
        for k in 0..terms.len() {
            for l in (k + 1)..terms.len() {
                let dot_left: f64 = terms[k]
                    .left
                    .vec_col_major()
                    .iter()
                    .zip(terms[l].left.vec_col_major())
                    .map(|(a, b)| a * b)
                    .sum();
                let dot_right: f64 = terms[k]
                    .right
                    .vec_col_major()
                    .iter()
                    .zip(terms[l].right.vec_col_major())
                    .map(|(a, b)| a * b)
                    .sum();
                assert!(dot_left.abs() < 1e-8);
                assert!(dot_right.abs() < 1e-8);
            }
        }
        // The expansion assembles back to the covariance.
        let assembled = fit.expansion.assemble().unwrap();
        let rel = (&assembled - &fit.covariance).frobenius_norm() / fit.covariance.frobenius_norm();
        assert!(rel < 1e-8);
    }

    #[test]
    fn prls_nuclear_norm_monotone_in_lambda() {
        let s = random_psd(6, 35);
        let r_hat = rearrange(&s, 2, 3).unwrap();
        let sigma_1 = spectral_norm(&r_hat).unwrap();
        let mut previous = f64::INFINITY;
        for factor in [0.0, 0.2, 0.5, 1.0, 1.5, 2.1] {
            let fit = prls(&s, factor * sigma_1, 2, 3).unwrap();
            let nuclear = matcore::matrix_norms(&rearrange(&fit.covariance, 2, 3).unwrap())
                .unwrap()
                .nuclear;
            assert!(nuclear <= previous + 1e-9);
            previous = nuclear;
        }
    }

    #[test]
    fn cm_reconstructs_at_full_rank_and_exact_kron() {
        let s = random_psd(6, 41);
        let fit = cm_covariance(&s, 4, 2, 3).unwrap();
        assert!((&fit.covariance - &s).frobenius_norm() / s.frobenius_norm() < 1e-8);

        let a = symmetrize(&pseudo_random(2, 2, 42)).unwrap();
        let b = symmetrize(&pseudo_random(3, 3, 43)).unwrap();
        let s = kron(&a, &b).unwrap();
        let fit = cm_covariance(&s, 1, 2, 3).unwrap();
        assert!((&fit.covariance - &s).frobenius_norm() / s.frobenius_norm() < 1e-10);
    }

    #[test]
    fn cm_zero_error_at_true_separation_rank() {
        use crate::synthgen::{random_kp_sum_covariance, RngSeed};
        let truth = random_kp_sum_covariance(5, 5, 3, RngSeed::new(50)).unwrap();
        let fit = cm_covariance(&truth.sigma0, 3, 5, 5).unwrap();
        let rel = (&fit.covariance - &truth.sigma0).frobenius_norm() / truth.sigma0.frobenius_norm();
        assert!(rel < 1e-8, "approximation error {rel}");
    }

    #[test]
    fn cm_residual_matches_singular_tail() {
        let s = random_psd(6, 47);
        let sigma = matcore::singular_values(&rearrange(&s, 2, 3).unwrap()).unwrap();
        for r in 1..4 {
            let fit = cm_covariance(&s, r, 2, 3).unwrap();
            let err = (&s - &fit.covariance).frobenius_norm();
            let tail: f64 = sigma[r..].iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((err - tail).abs() < 1e-8, "r={r}: {err} vs {tail}");
        }
    }

    #[test]
    fn lambda_rules_evaluate_and_validate() {
        let s = DenseMatrix::identity(4);
        // Practical rule by hand: C=2, p=q=2, n=16, M=16.
        let lambda = lambda_select(&LambdaRule::PrlsPractical { c: 2.0 }, &s, 2, 2, 16).unwrap();
        let expected = 2.0 * 1.0 * ((8.0 + 16.0f64.ln()) / 16.0).sqrt();
        assert!((lambda - expected).abs() < 1e-12);

        // SVT rule by hand: tr = 4, spectral = 1.
        let lambda = lambda_select(&LambdaRule::SvtLounici { c: 1.5 }, &s, 2, 2, 16).unwrap();
        let expected = 1.5 * 2.0 * (8.0f64.ln() / 16.0).sqrt();
        assert!((lambda - expected).abs() < 1e-12);

        let fixed = lambda_select(&LambdaRule::Fixed { c: 0.13 }, &s, 2, 2, 16).unwrap();
        assert_eq!(fixed, 0.13);

        // Theory rule at the minimum admissible t.
        let t = min_theory_t(0.25);
        let rule = LambdaRule::PrlsTheory { c0: 1.0, t, eps_prime: 0.25 };
        let x = rate_ratio(2, 2, 16);
        let lambda = lambda_select(&rule, &s, 2, 2, 16).unwrap();
        assert!((lambda - 2.0 * t / 0.5 * x.max(x.sqrt())).abs() < 1e-12);

        // Invariant violations.
        assert!(LambdaRule::PrlsTheory { c0: 1.0, t: t - 0.1, eps_prime: 0.25 }
            .validate()
            .is_err());
        assert!(LambdaRule::PrlsTheory { c0: 1.0, t, eps_prime: 0.6 }.validate().is_err());
        assert!(LambdaRule::PrlsPractical { c: -1.0 }.validate().is_err());
    }

    #[test]
    fn practical_rate_vanishes_with_n() {
        let s = DenseMatrix::identity(1);
        let rule = LambdaRule::PrlsPractical { c: 1.0 };
        let lambda_small = lambda_select(&rule, &s, 1, 1, 10).unwrap();
        let lambda_large = lambda_select(&rule, &s, 1, 1, 10_000_000).unwrap();
        assert!(lambda_large < lambda_small);
        assert!(lambda_large < 1e-2);
    }

    #[test]
    fn chaos_constants_match_reported_values() {
        assert!((chaos_constant_c1() - 2.5044).abs() < 5e-5);
        assert!((chaos_constant_c2() - 3.8442).abs() < 5e-5);
    }

    #[test]
    fn effective_rank_cases() {
        assert!((effective_rank(&DenseMatrix::identity(5)).unwrap() - 5.0).abs() < 1e-10);

        let x = [0.6, 0.8, 0.0];
        let rank1 = DenseMatrix::outer(&x, &x);
        assert!((effective_rank(&rank1).unwrap() - 1.0).abs() < 1e-10);

        let d = DenseMatrix::diagonal(&[2.0, 1.0, 1.0]);
        assert!((effective_rank(&d).unwrap() - 2.0).abs() < 1e-10);

        assert!(matches!(
            effective_rank(&DenseMatrix::zeros(3, 3)),
            Err(EstimatorError::ZeroMatrix)
        ));
    }

    #[test]
    fn random_symmetric_inputs_are_accepted() {
        let s = random_symmetric(6, 61);
        assert!(prls(&s, 0.1, 2, 3).is_ok());
        assert!(prls(&s, -0.1, 2, 3).is_err());
        assert!(prls(&s, 0.1, 3, 3).is_err());
    }
}
